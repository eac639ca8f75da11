//! Multi-layer network assembly.
//!
//! Turns a study log plus an entity partition into analyzable graph layers:
//! the link-tracing layer (referral arcs only), the full network of networks
//! (referral and nomination arcs plus alter-alter edges), per-respondent
//! personal stars, seed chains, weak components, and distance statistics.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::Error;
use crate::fieldwork::StudyLog;
use crate::identity::{EntityId, EntityPartition, ObsId};
use crate::synthpop::{Sex, Site};
use crate::Result;

// ---------------------------------------------------------------------------
// Network structure

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeRole {
    /// Interviewed at least once.
    Participant,
    /// Nominated as a referral but never interviewed.
    Referral,
    /// Appears only as an elicited alter.
    AlterOnly,
}

impl std::fmt::Display for NodeRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NodeRole::Participant => "participant",
            NodeRole::Referral => "referral",
            NodeRole::AlterOnly => "alter_only",
        })
    }
}

impl std::str::FromStr for NodeRole {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "participant" => Ok(NodeRole::Participant),
            "referral" => Ok(NodeRole::Referral),
            "alter_only" => Ok(NodeRole::AlterOnly),
            _ => Err(Error::config(format!("unknown node role `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetNode {
    pub entity: EntityId,
    pub role: NodeRole,
    pub site: Option<Site>,
    pub sex: Option<Sex>,
    pub is_seed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ArcKind {
    Referral,
    Nomination,
}

impl std::fmt::Display for ArcKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArcKind::Referral => "referral",
            ArcKind::Nomination => "nomination",
        })
    }
}

impl std::str::FromStr for ArcKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "referral" => Ok(ArcKind::Referral),
            "nomination" => Ok(ArcKind::Nomination),
            _ => Err(Error::config(format!("unknown arc kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NetArc {
    pub src: EntityId,
    pub dst: EntityId,
    pub kind: ArcKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NetEdge {
    pub a: EntityId,
    pub b: EntityId,
}

/// One analyzable layer: nodes sorted by entity id, deduplicated arcs and
/// undirected edges. The same ordered pair may carry both a referral and a
/// nomination arc; statistics select by kind.
#[derive(Debug, Clone, Default)]
pub struct Network {
    pub nodes: Vec<NetNode>,
    pub arcs: Vec<NetArc>,
    pub edges: Vec<NetEdge>,
    /// Arcs or edges that collapsed onto a single entity during linkage and
    /// were dropped to keep the layer free of self-loops.
    pub dropped_self_loops: usize,
    index: BTreeMap<EntityId, usize>,
}

impl Network {
    pub fn new(mut nodes: Vec<NetNode>, mut arcs: Vec<NetArc>, mut edges: Vec<NetEdge>) -> Network {
        nodes.sort_by_key(|n| n.entity);
        nodes.dedup_by_key(|n| n.entity);
        let index: BTreeMap<EntityId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.entity, i)).collect();
        let mut dropped = 0;
        arcs.retain(|a| {
            if a.src == a.dst {
                dropped += 1;
                false
            } else {
                true
            }
        });
        arcs.sort();
        arcs.dedup();
        edges.retain(|e| {
            if e.a == e.b {
                dropped += 1;
                false
            } else {
                true
            }
        });
        for e in &mut edges {
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
        }
        edges.sort();
        edges.dedup();
        Network {
            nodes,
            arcs,
            edges,
            dropped_self_loops: dropped,
            index,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, entity: EntityId) -> Option<usize> {
        self.index.get(&entity).copied()
    }

    pub fn node(&self, entity: EntityId) -> Option<&NetNode> {
        self.index_of(entity).map(|i| &self.nodes[i])
    }

    /// Out-adjacency lists over node indices, optionally restricted to one
    /// arc kind.
    pub fn out_adjacency(&self, kind: Option<ArcKind>) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for arc in &self.arcs {
            if kind.is_some_and(|k| k != arc.kind) {
                continue;
            }
            let (s, d) = (self.index[&arc.src] as u32, self.index[&arc.dst] as u32);
            adj[s as usize].push(d);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Undirected adjacency over node indices: arcs with direction dropped,
    /// plus edges.
    pub fn undirected_adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for arc in &self.arcs {
            let (s, d) = (self.index[&arc.src] as u32, self.index[&arc.dst] as u32);
            adj[s as usize].push(d);
            adj[d as usize].push(s);
        }
        for edge in &self.edges {
            let (a, b) = (self.index[&edge.a] as u32, self.index[&edge.b] as u32);
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// The sub-network induced by a member set: member nodes plus every arc
    /// and edge whose endpoints are both members.
    pub fn induced(&self, members: &BTreeSet<EntityId>) -> Network {
        let nodes = self
            .nodes
            .iter()
            .filter(|n| members.contains(&n.entity))
            .cloned()
            .collect();
        let arcs = self
            .arcs
            .iter()
            .filter(|a| members.contains(&a.src) && members.contains(&a.dst))
            .copied()
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| members.contains(&e.a) && members.contains(&e.b))
            .copied()
            .collect();
        Network::new(nodes, arcs, edges)
    }

    /// The referral-arc-only view of this network (same nodes).
    pub fn referral_layer(&self) -> Network {
        let arcs = self
            .arcs
            .iter()
            .filter(|a| a.kind == ArcKind::Referral)
            .copied()
            .collect();
        Network::new(self.nodes.clone(), arcs, Vec::new())
    }
}

// ---------------------------------------------------------------------------
// Builders

fn node_from_profile(
    partition: &EntityPartition,
    entity: EntityId,
    role: NodeRole,
    is_seed: bool,
) -> NetNode {
    let profile = partition.profiles.get(&entity);
    NetNode {
        entity,
        role,
        site: profile.and_then(|p| p.residence),
        sex: profile.and_then(|p| p.sex),
        is_seed,
    }
}

/// Entities of the seeds that were actually interviewed (wave-0 interviews).
pub fn seed_entities(log: &StudyLog, partition: &EntityPartition) -> Result<Vec<EntityId>> {
    let mut seeds = Vec::new();
    for iv in &log.interviews {
        if iv.wave == 0 && log.seeds.contains(&iv.person) {
            seeds.push(partition.entity_of(iv.respondent_obs)?);
        }
    }
    seeds.sort_unstable();
    seeds.dedup();
    Ok(seeds)
}

/// Build the link-tracing layer: one node per entity ever interviewed or
/// nominated, one referral arc per distinct (referee, referral) pair.
pub fn build_link_tracing_network(log: &StudyLog, partition: &EntityPartition) -> Result<Network> {
    let mut participant_entities: BTreeSet<EntityId> = BTreeSet::new();
    for iv in &log.interviews {
        participant_entities.insert(partition.entity_of(iv.respondent_obs)?);
    }
    let mut referral_entities: BTreeSet<EntityId> = BTreeSet::new();
    let mut arcs = Vec::with_capacity(log.referrals.len());
    for r in &log.referrals {
        let src = partition.entity_of(r.referee_obs)?;
        let dst = partition.entity_of(r.referral_obs)?;
        referral_entities.insert(dst);
        arcs.push(NetArc {
            src,
            dst,
            kind: ArcKind::Referral,
        });
    }
    let seeds: BTreeSet<EntityId> = seed_entities(log, partition)?.into_iter().collect();
    let mut nodes = Vec::new();
    for &entity in participant_entities.union(&referral_entities) {
        let role = if participant_entities.contains(&entity) {
            NodeRole::Participant
        } else {
            NodeRole::Referral
        };
        nodes.push(node_from_profile(partition, entity, role, seeds.contains(&entity)));
    }
    Ok(Network::new(nodes, arcs, Vec::new()))
}

/// Build the full network of networks: the link-tracing layer plus one
/// nomination arc per elicited alter and one undirected edge per positive
/// alter-alter report. Shared alters merge through the partition.
pub fn build_network_of_networks(log: &StudyLog, partition: &EntityPartition) -> Result<Network> {
    let link = build_link_tracing_network(log, partition)?;
    let mut roles: BTreeMap<EntityId, NodeRole> =
        link.nodes.iter().map(|n| (n.entity, n.role)).collect();
    let seeds: BTreeSet<EntityId> =
        link.nodes.iter().filter(|n| n.is_seed).map(|n| n.entity).collect();

    let mut arcs = link.arcs.clone();
    let mut edges = Vec::new();
    for pnet in &log.pnets {
        let respondent = partition.entity_of(pnet.respondent_obs)?;
        for alter in &pnet.alters {
            let alter_entity = partition.entity_of(alter.obs)?;
            roles.entry(alter_entity).or_insert(NodeRole::AlterOnly);
            arcs.push(NetArc {
                src: respondent,
                dst: alter_entity,
                kind: ArcKind::Nomination,
            });
        }
        for report in &pnet.alter_alter {
            if report.knows {
                edges.push(NetEdge {
                    a: partition.entity_of(report.a)?,
                    b: partition.entity_of(report.b)?,
                });
            }
        }
    }

    let nodes = roles
        .iter()
        .map(|(&entity, &role)| node_from_profile(partition, entity, role, seeds.contains(&entity)))
        .collect();
    Ok(Network::new(nodes, arcs, edges))
}

/// The personal layer of one respondent: the ego, their alters, nomination
/// arcs, and the reported alter-alter edges.
pub fn build_personal_network(
    log: &StudyLog,
    partition: &EntityPartition,
    respondent_obs: ObsId,
) -> Result<Network> {
    let pnet = log
        .pnets
        .iter()
        .find(|p| p.respondent_obs == respondent_obs)
        .ok_or_else(|| Error::Unresolved(respondent_obs.to_string()))?;
    let ego = partition.entity_of(respondent_obs)?;
    let mut nodes = vec![node_from_profile(partition, ego, NodeRole::Participant, false)];
    let mut arcs = Vec::new();
    let mut edges = Vec::new();
    for alter in &pnet.alters {
        let e = partition.entity_of(alter.obs)?;
        nodes.push(node_from_profile(partition, e, NodeRole::AlterOnly, false));
        arcs.push(NetArc {
            src: ego,
            dst: e,
            kind: ArcKind::Nomination,
        });
    }
    for report in &pnet.alter_alter {
        if report.knows {
            edges.push(NetEdge {
                a: partition.entity_of(report.a)?,
                b: partition.entity_of(report.b)?,
            });
        }
    }
    Ok(Network::new(nodes, arcs, edges))
}

// ---------------------------------------------------------------------------
// Components

/// Weak component labelling: direction ignored, edges included. Each node is
/// labelled with the smallest entity id in its component.
#[derive(Debug, Clone)]
pub struct Components {
    pub label: BTreeMap<EntityId, EntityId>,
    pub sizes: BTreeMap<EntityId, usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn largest_size(&self) -> usize {
        self.sizes.values().copied().max().unwrap_or(0)
    }

    pub fn main_component_share(&self, n_nodes: usize) -> f64 {
        if n_nodes == 0 {
            0.0
        } else {
            self.largest_size() as f64 / n_nodes as f64
        }
    }
}

pub fn components(network: &Network) -> Components {
    let n = network.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            // Attach the larger index under the smaller: node order is
            // entity order, so every root is the smallest entity.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi] = lo;
        }
    };
    for arc in &network.arcs {
        union(
            &mut parent,
            network.index_of(arc.src).unwrap(),
            network.index_of(arc.dst).unwrap(),
        );
    }
    for edge in &network.edges {
        union(
            &mut parent,
            network.index_of(edge.a).unwrap(),
            network.index_of(edge.b).unwrap(),
        );
    }
    let mut label = BTreeMap::new();
    let mut sizes: BTreeMap<EntityId, usize> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let root_entity = network.nodes[root].entity;
        label.insert(network.nodes[i].entity, root_entity);
        *sizes.entry(root_entity).or_default() += 1;
    }
    Components { label, sizes }
}

// ---------------------------------------------------------------------------
// Chains

/// Forward reachability of one seed through referral arcs, with BFS depths.
#[derive(Debug, Clone)]
pub struct Chain {
    pub seed: EntityId,
    pub depths: BTreeMap<EntityId, u32>,
}

impl Chain {
    pub fn size(&self) -> usize {
        self.depths.len()
    }

    pub fn members(&self) -> BTreeSet<EntityId> {
        self.depths.keys().copied().collect()
    }
}

/// Decompose the link-tracing layer into per-seed chains. Chains may
/// overlap, so the sum of chain sizes can exceed the node count.
pub fn decompose_chains(link_layer: &Network, seeds: &[EntityId]) -> Result<Vec<Chain>> {
    let adj = link_layer.out_adjacency(Some(ArcKind::Referral));
    let mut chains = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let start = link_layer
            .index_of(seed)
            .ok_or_else(|| Error::Unresolved(format!("seed {seed} not in layer")))?;
        let mut depths: BTreeMap<EntityId, u32> = BTreeMap::new();
        let mut dist = vec![u32::MAX; link_layer.n_nodes()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            depths.insert(link_layer.nodes[v].entity, dist[v]);
            for &w in &adj[v] {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[v] + 1;
                    queue.push_back(w as usize);
                }
            }
        }
        chains.push(Chain { seed, depths });
    }
    Ok(chains)
}

/// Distance statistics of a chain or layer: longest and mean BFS depth from
/// the seed over non-seed members, and the mean/SD of directed distances
/// over ordered reachable pairs — unreachable pairs are excluded.
#[derive(Debug, Clone, Copy, Default)]
pub struct DistanceStats {
    pub longest_from_seed: u32,
    pub avg_from_seed: f64,
    pub avg_pairwise: f64,
    pub sd_pairwise: f64,
    pub reachable_pairs: usize,
}

pub fn chain_distances(layer: &Network, chain: &Chain) -> DistanceStats {
    let sub = layer.induced(&chain.members());
    let mut stats = directed_distance_stats(&sub);
    stats.longest_from_seed = chain.depths.values().copied().max().unwrap_or(0);
    let non_seed: Vec<u32> = chain
        .depths
        .iter()
        .filter(|(&e, _)| e != chain.seed)
        .map(|(_, &d)| d)
        .collect();
    stats.avg_from_seed = if non_seed.is_empty() {
        0.0
    } else {
        non_seed.iter().map(|&d| d as f64).sum::<f64>() / non_seed.len() as f64
    };
    stats
}

/// Mean and population SD of directed BFS distances over ordered reachable
/// pairs of the layer (referral arcs only).
pub fn directed_distance_stats(layer: &Network) -> DistanceStats {
    let adj = layer.out_adjacency(Some(ArcKind::Referral));
    let n = layer.n_nodes();
    let mut total = 0u64;
    let mut total_sq = 0u64;
    let mut count = 0usize;
    let mut dist = vec![u32::MAX; n];
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[v] + 1;
                    queue.push_back(w as usize);
                }
            }
        }
        for (t, &d) in dist.iter().enumerate() {
            if t != s && d != u32::MAX {
                total += d as u64;
                total_sq += (d as u64) * (d as u64);
                count += 1;
            }
        }
    }
    if count == 0 {
        return DistanceStats::default();
    }
    let mean = total as f64 / count as f64;
    let variance = total_sq as f64 / count as f64 - mean * mean;
    DistanceStats {
        longest_from_seed: 0,
        avg_from_seed: 0.0,
        avg_pairwise: mean,
        sd_pairwise: variance.max(0.0).sqrt(),
        reachable_pairs: count,
    }
}
