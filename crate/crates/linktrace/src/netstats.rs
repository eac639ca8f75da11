//! Descriptive network statistics.
//!
//! Density, dyad census, mixing matrices, global and per-node E-I indices
//! with a node-label permutation test, Freeman centralization for four
//! centrality kinds, and the composition tables of the study report. All
//! statistics are pure functions of the layer they are given.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Error;
use crate::fieldwork::{GeneratorCategory, StudyLog};
use crate::identity::EntityId;
use crate::netbuild::{Network, NodeRole};
use crate::synthpop::{MigrantType, Sex, Site, TieKind};
use crate::Result;

// ---------------------------------------------------------------------------
// Node attributes

/// Categorical node attribute selectors for mixing and E-I statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeAttr {
    Sex,
    Site,
    /// The site × sex cross-classification (the four-by-four mixing view,
    /// restricted to the two corridor sites plus elsewhere).
    SiteSex,
}

impl NodeAttr {
    pub fn labels(&self) -> Vec<String> {
        match self {
            NodeAttr::Sex => vec!["F".into(), "M".into()],
            NodeAttr::Site => vec!["origin".into(), "destination".into(), "other".into()],
            NodeAttr::SiteSex => {
                let mut out = Vec::new();
                for site in ["origin", "destination", "other"] {
                    for sex in ["F", "M"] {
                        out.push(format!("{site}|{sex}"));
                    }
                }
                out
            }
        }
    }

    fn n_categories(&self) -> usize {
        match self {
            NodeAttr::Sex => 2,
            NodeAttr::Site => 3,
            NodeAttr::SiteSex => 6,
        }
    }

    fn category_of(&self, site: Option<Site>, sex: Option<Sex>) -> Option<u8> {
        let site_idx = |s: Site| match s {
            Site::Origin => 0u8,
            Site::Destination => 1,
            Site::Other => 2,
        };
        let sex_idx = |x: Sex| match x {
            Sex::Female => 0u8,
            Sex::Male => 1,
        };
        match self {
            NodeAttr::Sex => sex.map(sex_idx),
            NodeAttr::Site => site.map(site_idx),
            NodeAttr::SiteSex => match (site, sex) {
                (Some(s), Some(x)) => Some(site_idx(s) * 2 + sex_idx(x)),
                _ => None,
            },
        }
    }
}

impl std::fmt::Display for NodeAttr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NodeAttr::Sex => "sex",
            NodeAttr::Site => "site",
            NodeAttr::SiteSex => "site_sex",
        })
    }
}

impl std::str::FromStr for NodeAttr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sex" => Ok(NodeAttr::Sex),
            "site" => Ok(NodeAttr::Site),
            "site_sex" => Ok(NodeAttr::SiteSex),
            _ => Err(Error::config(format!("unknown node attribute `{s}`"))),
        }
    }
}

/// Per-node category codes; errors list the nodes missing the attribute.
fn categories(layer: &Network, attr: NodeAttr) -> Result<Vec<u8>> {
    let mut missing = Vec::new();
    let mut cats = Vec::with_capacity(layer.n_nodes());
    for node in &layer.nodes {
        match attr.category_of(node.site, node.sex) {
            Some(c) => cats.push(c),
            None => missing.push(node.entity.to_string()),
        }
    }
    if missing.is_empty() {
        Ok(cats)
    } else {
        Err(Error::Undefined(format!(
            "attribute {attr} missing on nodes: {}",
            missing.join(", ")
        )))
    }
}

/// Arcs as (src index, dst index) pairs.
fn arc_indices(layer: &Network) -> Vec<(u32, u32)> {
    layer
        .arcs
        .iter()
        .map(|a| {
            (
                layer.index_of(a.src).expect("arc endpoint in layer") as u32,
                layer.index_of(a.dst).expect("arc endpoint in layer") as u32,
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Density and dyad census

/// Directed density: arcs / (n (n-1)).
pub fn density(layer: &Network) -> Result<f64> {
    let n = layer.n_nodes();
    if n < 2 {
        return Err(Error::Undefined(format!("density needs n >= 2, got {n}")));
    }
    Ok(layer.n_arcs() as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Counts of mutual, asymmetric and null dyads. Satisfies
/// `arcs = 2M + A` (over distinct ordered pairs) and `M + A + N = n(n-1)/2`.
pub fn dyad_census(layer: &Network) -> (u64, u64, u64) {
    let arcs = arc_indices(layer);
    let present: BTreeSet<(u32, u32)> = arcs.iter().copied().collect();
    let mut mutual = 0u64;
    let mut asymmetric = 0u64;
    for &(s, d) in &present {
        if s < d {
            if present.contains(&(d, s)) {
                mutual += 1;
            } else {
                asymmetric += 1;
            }
        } else if !present.contains(&(d, s)) {
            asymmetric += 1;
        }
    }
    let n = layer.n_nodes() as u64;
    let total_pairs = n * n.saturating_sub(1) / 2;
    let null = total_pairs - mutual - asymmetric;
    (mutual, asymmetric, null)
}

// ---------------------------------------------------------------------------
// Mixing matrix

/// Arc counts cross-tabulated by the categories of referee (row) and
/// referral (column).
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    pub attr: NodeAttr,
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl MixingMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }
}

pub fn mixing_matrix(layer: &Network, attr: NodeAttr) -> Result<MixingMatrix> {
    let cats = categories(layer, attr)?;
    let k = attr.n_categories();
    let mut counts = vec![vec![0u64; k]; k];
    for (s, d) in arc_indices(layer) {
        counts[cats[s as usize] as usize][cats[d as usize] as usize] += 1;
    }
    Ok(MixingMatrix {
        attr,
        labels: attr.labels(),
        counts,
    })
}

// ---------------------------------------------------------------------------
// E-I indices

fn ei_from_counts(external: u64, internal: u64) -> f64 {
    (external as f64 - internal as f64) / (external as f64 + internal as f64)
}

/// Global E-I index: (E - I) / (E + I) over directed arcs, where E counts
/// arcs crossing attribute categories and I counts arcs within one.
pub fn ei_global(layer: &Network, attr: NodeAttr) -> Result<f64> {
    if layer.n_arcs() == 0 {
        return Err(Error::Undefined("E-I undefined on zero arcs".into()));
    }
    let cats = categories(layer, attr)?;
    let (mut external, mut internal) = (0u64, 0u64);
    for (s, d) in arc_indices(layer) {
        if cats[s as usize] == cats[d as usize] {
            internal += 1;
        } else {
            external += 1;
        }
    }
    Ok(ei_from_counts(external, internal))
}

/// Per-node E-I over out-arcs only; `None` for nodes without out-arcs.
pub fn ei_node(layer: &Network, entity: EntityId, attr: NodeAttr) -> Result<Option<f64>> {
    let idx = layer
        .index_of(entity)
        .ok_or_else(|| Error::Undefined(format!("node {entity} not in layer")))?;
    let cats = categories(layer, attr)?;
    let (mut external, mut internal) = (0u64, 0u64);
    for (s, d) in arc_indices(layer) {
        if s as usize == idx {
            if cats[s as usize] == cats[d as usize] {
                internal += 1;
            } else {
                external += 1;
            }
        }
    }
    if external + internal == 0 {
        Ok(None)
    } else {
        Ok(Some(ei_from_counts(external, internal)))
    }
}

/// All defined per-node E-I scores of the layer.
pub fn ei_node_scores(layer: &Network, attr: NodeAttr) -> Result<BTreeMap<EntityId, f64>> {
    let cats = categories(layer, attr)?;
    let mut ext = vec![0u64; layer.n_nodes()];
    let mut int = vec![0u64; layer.n_nodes()];
    for (s, d) in arc_indices(layer) {
        if cats[s as usize] == cats[d as usize] {
            int[s as usize] += 1;
        } else {
            ext[s as usize] += 1;
        }
    }
    let mut scores = BTreeMap::new();
    for (i, node) in layer.nodes.iter().enumerate() {
        if ext[i] + int[i] > 0 {
            scores.insert(node.entity, ei_from_counts(ext[i], int[i]));
        }
    }
    Ok(scores)
}

/// Result of the E-I permutation test.
#[derive(Debug, Clone, Copy)]
pub struct EIResult {
    pub observed: f64,
    pub perm_mean: f64,
    pub perm_sd: f64,
    /// Two-sided empirical p-value with the add-one correction.
    pub p_value: f64,
    pub n_permutations: usize,
}

/// Node-label permutation test for the global E-I index: the graph stays
/// fixed, the attribute vector is permuted uniformly.
pub fn ei_permutation_test(
    layer: &Network,
    attr: NodeAttr,
    n_perm: usize,
    rng: &mut impl Rng,
) -> Result<EIResult> {
    let observed = ei_global(layer, attr)?;
    let mut cats = categories(layer, attr)?;
    let distinct: BTreeSet<u8> = cats.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Undefined(
            "permutation test degenerate: single attribute category".into(),
        ));
    }
    let arcs = arc_indices(layer);
    let mut perms = Vec::with_capacity(n_perm);
    for _ in 0..n_perm {
        cats.shuffle(rng);
        let (mut external, mut internal) = (0u64, 0u64);
        for &(s, d) in &arcs {
            if cats[s as usize] == cats[d as usize] {
                internal += 1;
            } else {
                external += 1;
            }
        }
        perms.push(ei_from_counts(external, internal));
    }
    let mean = perms.iter().sum::<f64>() / n_perm as f64;
    let var = perms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n_perm as f64;
    let dev_obs = (observed - mean).abs();
    let extreme = perms.iter().filter(|x| (**x - mean).abs() >= dev_obs).count();
    Ok(EIResult {
        observed,
        perm_mean: mean,
        perm_sd: var.max(0.0).sqrt(),
        p_value: (1 + extreme) as f64 / (n_perm + 1) as f64,
        n_permutations: n_perm,
    })
}

// ---------------------------------------------------------------------------
// Centralization

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CentralizationKind {
    InDegree,
    OutDegree,
    Degree,
    Betweenness,
}

impl std::fmt::Display for CentralizationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CentralizationKind::InDegree => "indegree",
            CentralizationKind::OutDegree => "outdegree",
            CentralizationKind::Degree => "degree",
            CentralizationKind::Betweenness => "betweenness",
        })
    }
}

/// A Freeman centralization value; `caution` marks layers too small for the
/// number to carry substantial meaning (n < 3).
#[derive(Debug, Clone, Copy)]
pub struct Centralization {
    pub value: f64,
    pub caution: bool,
}

/// Directed betweenness via breadth-first shortest-path counting,
/// unnormalized scores.
pub fn betweenness_scores(layer: &Network) -> Vec<f64> {
    let adj = layer.out_adjacency(None);
    let n = layer.n_nodes();
    let mut scores = vec![0.0; n];
    let mut stack: Vec<usize> = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    for s in 0..n {
        stack.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = -1;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                let w = w as usize;
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += (sigma[v] / sigma[w]) * (1.0 + delta[w]);
            }
            if w != s {
                scores[w] += delta[w];
            }
        }
    }
    scores
}

/// Freeman centralization: sum of (c_max - c_i) over the theoretical
/// maximum. Denominators: (n-1)^2 for in/outdegree, 2(n-1)(n-2) for total
/// degree, (n-1)^2(n-2) for directed betweenness.
pub fn centralization(layer: &Network, kind: CentralizationKind) -> Result<Centralization> {
    let n = layer.n_nodes();
    if n < 2 {
        return Err(Error::Undefined(format!(
            "centralization needs n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let scores: Vec<f64> = match kind {
        CentralizationKind::InDegree | CentralizationKind::OutDegree | CentralizationKind::Degree => {
            let mut indeg = vec![0u64; n];
            let mut outdeg = vec![0u64; n];
            for (s, d) in arc_indices(layer) {
                outdeg[s as usize] += 1;
                indeg[d as usize] += 1;
            }
            match kind {
                CentralizationKind::InDegree => indeg.iter().map(|&x| x as f64).collect(),
                CentralizationKind::OutDegree => outdeg.iter().map(|&x| x as f64).collect(),
                _ => indeg
                    .iter()
                    .zip(&outdeg)
                    .map(|(&i, &o)| (i + o) as f64)
                    .collect(),
            }
        }
        CentralizationKind::Betweenness => betweenness_scores(layer),
    };
    let c_max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let numerator: f64 = scores.iter().map(|&c| c_max - c).sum();
    let denominator = match kind {
        CentralizationKind::InDegree | CentralizationKind::OutDegree => (nf - 1.0) * (nf - 1.0),
        CentralizationKind::Degree => 2.0 * (nf - 1.0) * (nf - 2.0),
        CentralizationKind::Betweenness => (nf - 1.0) * (nf - 1.0) * (nf - 2.0),
    };
    let value = if denominator == 0.0 {
        if numerator == 0.0 {
            0.0
        } else {
            return Err(Error::Undefined(format!(
                "{kind} centralization denominator vanishes at n = {n}"
            )));
        }
    } else {
        numerator / denominator
    };
    Ok(Centralization {
        value,
        caution: n < 3,
    })
}

// ---------------------------------------------------------------------------
// Composition tables

/// Node counts by role, site and sex for a network or chain.
#[derive(Debug, Clone, Default)]
pub struct Composition {
    pub cells: BTreeMap<(NodeRole, Option<Site>, Option<Sex>), usize>,
}

impl Composition {
    pub fn total(&self) -> usize {
        self.cells.values().sum()
    }

    pub fn count<F: Fn(NodeRole, Option<Site>, Option<Sex>) -> bool>(&self, f: F) -> usize {
        self.cells
            .iter()
            .filter(|((r, s, x), _)| f(*r, *s, *x))
            .map(|(_, c)| c)
            .sum()
    }

    pub fn participants(&self) -> usize {
        self.count(|r, _, _| r == NodeRole::Participant)
    }

    pub fn non_participants(&self) -> usize {
        self.count(|r, _, _| r != NodeRole::Participant)
    }
}

/// Tabulate the nodes of a layer (or chain-induced sub-layer).
pub fn composition_summary(layer: &Network) -> Composition {
    let mut comp = Composition::default();
    for node in &layer.nodes {
        *comp.cells.entry((node.role, node.site, node.sex)).or_default() += 1;
    }
    comp
}

/// Alter kind groups for the alter-count table: kin versus friends and
/// acquaintances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TieGroup {
    Kin,
    FriendsAcquaintances,
}

impl TieGroup {
    pub fn of(kind: TieKind) -> TieGroup {
        match kind {
            TieKind::Kin => TieGroup::Kin,
            _ => TieGroup::FriendsAcquaintances,
        }
    }
}

impl std::fmt::Display for TieGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TieGroup::Kin => "kin",
            TieGroup::FriendsAcquaintances => "friends_acquaintances",
        })
    }
}

/// Total, per-respondent mean and population SD for one alter cell.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlterCell {
    pub total: u64,
    pub mean: f64,
    pub sd: f64,
}

/// Elicited-alter counts split by respondent class, alter kind group and
/// alter residence, plus per-class grand totals.
#[derive(Debug, Clone, Default)]
pub struct AlterSummary {
    pub n_respondents: BTreeMap<MigrantType, usize>,
    pub cells: BTreeMap<(MigrantType, TieGroup, Site), AlterCell>,
    pub class_totals: BTreeMap<MigrantType, AlterCell>,
}

impl AlterSummary {
    pub fn total_respondents(&self) -> usize {
        self.n_respondents.values().sum()
    }
}

/// Per-class alter counts in the layout of the alter-count table: per
/// respondent class, counts and per-respondent means of elicited alters by
/// kind group and residence.
pub fn alter_composition(log: &StudyLog) -> AlterSummary {
    // Residence per alter observation.
    let residence: BTreeMap<_, _> = log
        .observations
        .iter()
        .map(|o| (o.obs_id, o.residence))
        .collect();
    let class_of: BTreeMap<_, _> = log
        .interviews
        .iter()
        .map(|iv| (iv.respondent_obs, iv.migrant_type))
        .collect();

    let mut summary = AlterSummary::default();
    let mut sums: BTreeMap<(MigrantType, TieGroup, Site), (u64, f64, f64)> = BTreeMap::new();
    let mut class_sums: BTreeMap<MigrantType, (u64, f64, f64)> = BTreeMap::new();

    for pnet in &log.pnets {
        let Some(&class) = class_of.get(&pnet.respondent_obs) else {
            continue;
        };
        *summary.n_respondents.entry(class).or_default() += 1;
        let mut per_cell: BTreeMap<(TieGroup, Site), u64> = BTreeMap::new();
        for alter in &pnet.alters {
            let Some(Some(site)) = residence.get(&alter.obs) else {
                continue;
            };
            *per_cell.entry((TieGroup::of(alter.kind), *site)).or_default() += 1;
        }
        let mut respondent_total = 0u64;
        for group in [TieGroup::Kin, TieGroup::FriendsAcquaintances] {
            for site in Site::ALL {
                let count = per_cell.get(&(group, site)).copied().unwrap_or(0);
                respondent_total += count;
                let entry = sums.entry((class, group, site)).or_default();
                entry.0 += count;
                entry.1 += count as f64;
                entry.2 += (count * count) as f64;
            }
        }
        let entry = class_sums.entry(class).or_default();
        entry.0 += respondent_total;
        entry.1 += respondent_total as f64;
        entry.2 += (respondent_total * respondent_total) as f64;
    }

    let finish = |(total, sum, sumsq): (u64, f64, f64), n: usize| -> AlterCell {
        if n == 0 {
            return AlterCell::default();
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        AlterCell {
            total,
            mean,
            sd: var.max(0.0).sqrt(),
        }
    };
    for ((class, group, site), acc) in sums {
        let n = summary.n_respondents.get(&class).copied().unwrap_or(0);
        summary.cells.insert((class, group, site), finish(acc, n));
    }
    for (class, acc) in class_sums {
        let n = summary.n_respondents.get(&class).copied().unwrap_or(0);
        summary.class_totals.insert(class, finish(acc, n));
    }
    summary
}

/// Category-labelled per-respondent alter counts, for re-tabulating the
/// generator caps.
pub fn generator_counts(log: &StudyLog) -> BTreeMap<GeneratorCategory, u64> {
    let mut counts = BTreeMap::new();
    for pnet in &log.pnets {
        for alter in &pnet.alters {
            *counts.entry(alter.category).or_default() += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{NetArc, NetNode};
    use crate::rng::stream_rng;
    use crate::testutil::arc_net;
    use rand::Rng;

    /// Out-star with `n` nodes: node 0 points at 1..n.
    fn out_star(n: u32) -> Network {
        let arcs: Vec<(u32, u32)> = (1..n).map(|i| (0, i)).collect();
        arc_net(n, &arcs)
    }

    fn attributed_net(n: u32, arcs: &[(u32, u32)], cats: &[(Site, Sex)]) -> Network {
        assert_eq!(cats.len(), n as usize);
        let nodes = (0..n)
            .map(|i| NetNode {
                entity: EntityId(i),
                role: NodeRole::Participant,
                site: Some(cats[i as usize].0),
                sex: Some(cats[i as usize].1),
                is_seed: false,
            })
            .collect();
        let arcs = arcs
            .iter()
            .map(|&(s, d)| NetArc {
                src: EntityId(s),
                dst: EntityId(d),
                kind: crate::netbuild::ArcKind::Referral,
            })
            .collect();
        Network::new(nodes, arcs, Vec::new())
    }

    fn round1(x: f64) -> f64 {
        (x * 1000.0).round() / 10.0
    }

    #[test]
    fn seven_node_out_star_matches_reference_row() {
        let net = out_star(7);
        assert_eq!(net.n_arcs(), 6);
        let d = density(&net).unwrap();
        assert!((d - 6.0 / 42.0).abs() < 1e-15);
        assert_eq!(format!("{:.3}", d), "0.143");

        let indeg = centralization(&net, CentralizationKind::InDegree).unwrap();
        assert!((indeg.value - 1.0 / 36.0).abs() < 1e-15);
        assert_eq!(round1(indeg.value), 2.8);

        let outdeg = centralization(&net, CentralizationKind::OutDegree).unwrap();
        assert_eq!(outdeg.value, 1.0);
        assert_eq!(round1(outdeg.value), 100.0);

        let deg = centralization(&net, CentralizationKind::Degree).unwrap();
        assert_eq!(deg.value, 0.5);
        assert_eq!(round1(deg.value), 50.0);

        let btw = centralization(&net, CentralizationKind::Betweenness).unwrap();
        assert_eq!(btw.value, 0.0);
        assert!(!btw.caution);
    }

    #[test]
    fn four_node_out_star_matches_reference_row() {
        let net = out_star(4);
        assert_eq!(net.n_arcs(), 3);
        let d = density(&net).unwrap();
        assert_eq!(d, 0.25);
        let indeg = centralization(&net, CentralizationKind::InDegree).unwrap();
        assert!((indeg.value - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(round1(indeg.value), 11.1);
        assert_eq!(
            centralization(&net, CentralizationKind::OutDegree).unwrap().value,
            1.0
        );
        assert_eq!(
            centralization(&net, CentralizationKind::Degree).unwrap().value,
            0.5
        );
        assert_eq!(
            centralization(&net, CentralizationKind::Betweenness).unwrap().value,
            0.0
        );
    }

    #[test]
    fn complete_digraph_density_one_and_degenerate_permutation() {
        let n = 5u32;
        let mut arcs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    arcs.push((i, j));
                }
            }
        }
        let net = arc_net(n, &arcs);
        assert_eq!(density(&net).unwrap(), 1.0);

        // Balanced binary attribute on a complete digraph: every permutation
        // yields the identical E-I, so sd = 0 and p = 1.
        let cats: Vec<(Site, Sex)> = (0..n)
            .map(|i| {
                (
                    Site::Origin,
                    if i % 2 == 0 { Sex::Female } else { Sex::Male },
                )
            })
            .collect();
        let net = attributed_net(n, &arcs.to_vec(), &cats);
        let result =
            ei_permutation_test(&net, NodeAttr::Sex, 200, &mut stream_rng(31, 7)).unwrap();
        assert!(result.perm_sd.abs() < 1e-15);
        assert_eq!(result.p_value, 1.0);
    }

    #[test]
    fn density_undefined_below_two_nodes() {
        let net = arc_net(1, &[]);
        assert!(density(&net).is_err());
    }

    #[test]
    fn dyad_census_hand_cases() {
        // arcs {a->b, b->a, a->c} on {a,b,c} -> (1, 1, 1).
        let net = arc_net(3, &[(0, 1), (1, 0), (0, 2)]);
        assert_eq!(dyad_census(&net), (1, 1, 1));
        // Empty 4-node layer -> (0, 0, 6).
        let empty = arc_net(4, &[]);
        assert_eq!(dyad_census(&empty), (0, 0, 6));
    }

    #[test]
    fn dyad_census_matches_pair_scan_oracle() {
        let mut rng = stream_rng(32, 8);
        for _ in 0..25 {
            let n = 40u32;
            let m = rng.gen_range(20..160);
            let arcs: Vec<(u32, u32)> = (0..m)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .filter(|(a, b)| a != b)
                .collect();
            let net = arc_net(n, &arcs);
            let (mutual, asym, null) = dyad_census(&net);

            // Exhaustive scan over every unordered pair.
            let set: BTreeSet<(u32, u32)> = net
                .arcs
                .iter()
                .map(|a| (a.src.0, a.dst.0))
                .collect();
            let (mut om, mut oa, mut on) = (0u64, 0u64, 0u64);
            for i in 0..n {
                for j in (i + 1)..n {
                    match (set.contains(&(i, j)), set.contains(&(j, i))) {
                        (true, true) => om += 1,
                        (false, false) => on += 1,
                        _ => oa += 1,
                    }
                }
            }
            assert_eq!((mutual, asym, null), (om, oa, on));
            // Census identities.
            assert_eq!(net.n_arcs() as u64, 2 * mutual + asym);
            assert_eq!(mutual + asym + null, (n as u64) * (n as u64 - 1) / 2);
        }
    }

    #[test]
    fn mixing_matrix_counts_arcs_and_errors_on_missing_attr() {
        let net = attributed_net(
            2,
            &[(0, 1)],
            &[(Site::Origin, Sex::Female), (Site::Origin, Sex::Male)],
        );
        let m = mixing_matrix(&net, NodeAttr::Sex).unwrap();
        assert_eq!(m.total(), 1);
        assert_eq!(m.counts[0][1], 1);

        let mut broken = net.clone();
        broken.nodes[0].sex = None;
        let err = mixing_matrix(&broken, NodeAttr::Sex).unwrap_err();
        assert!(err.to_string().contains("e000000"), "{err}");
    }

    #[test]
    fn mixing_matrix_matches_tally_oracle() {
        let mut rng = stream_rng(33, 9);
        let n = 30u32;
        let cats: Vec<(Site, Sex)> = (0..n)
            .map(|_| {
                let site = match rng.gen_range(0..3) {
                    0 => Site::Origin,
                    1 => Site::Destination,
                    _ => Site::Other,
                };
                let sex = if rng.gen_bool(0.5) { Sex::Female } else { Sex::Male };
                (site, sex)
            })
            .collect();
        let arcs: Vec<(u32, u32)> = (0..150)
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
            .filter(|(a, b)| a != b)
            .collect();
        let net = attributed_net(n, &arcs, &cats);
        let m = mixing_matrix(&net, NodeAttr::SiteSex).unwrap();
        assert_eq!(m.total(), net.n_arcs() as u64);

        // Arc-by-arc tally oracle.
        let mut oracle = vec![vec![0u64; 6]; 6];
        for arc in &net.arcs {
            let idx = |e: EntityId| {
                let (site, sex) = cats[e.0 as usize];
                let s = match site {
                    Site::Origin => 0,
                    Site::Destination => 1,
                    Site::Other => 2,
                };
                let x = if sex == Sex::Female { 0 } else { 1 };
                s * 2 + x
            };
            oracle[idx(arc.src)][idx(arc.dst)] += 1;
        }
        assert_eq!(m.counts, oracle);
        // Row sums equal out-arc counts per category.
        for row in 0..6 {
            let out: u64 = net
                .arcs
                .iter()
                .filter(|a| {
                    let (site, sex) = cats[a.src.0 as usize];
                    let s = match site {
                        Site::Origin => 0,
                        Site::Destination => 1,
                        Site::Other => 2,
                    };
                    let x = if sex == Sex::Female { 0 } else { 1 };
                    s * 2 + x == row
                })
                .count() as u64;
            assert_eq!(m.row_sum(row), out);
        }
    }

    #[test]
    fn ei_hand_cases() {
        // All arcs within-category -> -1.
        let net = attributed_net(
            3,
            &[(0, 1), (1, 2)],
            &[
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Female),
            ],
        );
        assert_eq!(ei_global(&net, NodeAttr::Sex).unwrap(), -1.0);

        // E = 1, I = 3 -> -0.5.
        let net = attributed_net(
            4,
            &[(0, 1), (1, 0), (0, 1), (2, 3), (0, 2)],
            &[
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Male),
                (Site::Origin, Sex::Male),
            ],
        );
        // Arcs after dedup: 0->1, 1->0, 2->3 (within), 0->2 (cross).
        assert_eq!(ei_global(&net, NodeAttr::Sex).unwrap(), -0.5);

        // Zero arcs is undefined.
        let empty = attributed_net(2, &[], &[(Site::Origin, Sex::Female), (Site::Origin, Sex::Male)]);
        assert!(ei_global(&empty, NodeAttr::Sex).is_err());
    }

    #[test]
    fn ei_matches_counting_oracle_and_category_relabel_invariance() {
        let mut rng = stream_rng(34, 10);
        for _ in 0..25 {
            let n = 25u32;
            let cats: Vec<(Site, Sex)> = (0..n)
                .map(|_| {
                    (
                        if rng.gen_bool(0.5) { Site::Origin } else { Site::Destination },
                        if rng.gen_bool(0.5) { Sex::Female } else { Sex::Male },
                    )
                })
                .collect();
            let arcs: Vec<(u32, u32)> = (0..80)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .filter(|(a, b)| a != b)
                .collect();
            if arcs.is_empty() {
                continue;
            }
            let net = attributed_net(n, &arcs, &cats);
            let ei = ei_global(&net, NodeAttr::Site).unwrap();
            let (mut e, mut i) = (0i64, 0i64);
            for arc in &net.arcs {
                if cats[arc.src.0 as usize].0 == cats[arc.dst.0 as usize].0 {
                    i += 1;
                } else {
                    e += 1;
                }
            }
            let oracle = (e - i) as f64 / (e + i) as f64;
            assert_eq!(ei, oracle);
            assert!((-1.0..=1.0).contains(&ei));

            // Relabeling categories (swapping site names) keeps E-I fixed.
            let swapped: Vec<(Site, Sex)> = cats
                .iter()
                .map(|&(s, x)| {
                    (
                        match s {
                            Site::Origin => Site::Destination,
                            Site::Destination => Site::Origin,
                            Site::Other => Site::Other,
                        },
                        x,
                    )
                })
                .collect();
            let relabeled = attributed_net(n, &arcs, &swapped);
            assert_eq!(ei_global(&relabeled, NodeAttr::Site).unwrap(), ei);
        }
    }

    #[test]
    fn ei_node_cases() {
        let net = attributed_net(
            4,
            &[(0, 1), (0, 2), (0, 3), (1, 0)],
            &[
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Male),
                (Site::Origin, Sex::Male),
            ],
        );
        // Node 0 sends 1 within (0->1) and 2 cross: E-I = (2-1)/3.
        let ei0 = ei_node(&net, EntityId(0), NodeAttr::Sex).unwrap().unwrap();
        assert!((ei0 - 1.0 / 3.0).abs() < 1e-15);
        // Node 2 has no out-arcs: undefined.
        assert_eq!(ei_node(&net, EntityId(2), NodeAttr::Sex).unwrap(), None);
        // Node sending 2 cross 2 within -> 0.
        let net = attributed_net(
            5,
            &[(0, 1), (0, 2), (0, 3), (0, 4)],
            &[
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Male),
                (Site::Origin, Sex::Male),
            ],
        );
        assert_eq!(ei_node(&net, EntityId(0), NodeAttr::Sex).unwrap(), Some(0.0));
    }

    /// On a planted-homophily layer the median per-node E-I score carries
    /// the same (negative) sign as the global index.
    #[test]
    fn node_scores_median_sign_matches_global_on_planted_homophily() {
        let mut rng = stream_rng(37, 13);
        let n = 120u32;
        let cats: Vec<(Site, Sex)> = (0..n)
            .map(|i| {
                (
                    if i % 2 == 0 { Site::Origin } else { Site::Destination },
                    Sex::Female,
                )
            })
            .collect();
        let mut arcs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let same = cats[i as usize].0 == cats[j as usize].0;
                if rng.gen_bool(if same { 0.08 } else { 0.02 }) {
                    arcs.push((i, j));
                }
            }
        }
        let net = attributed_net(n, &arcs, &cats);
        let global = ei_global(&net, NodeAttr::Site).unwrap();
        assert!(global < 0.0);
        let scores = ei_node_scores(&net, NodeAttr::Site).unwrap();
        let mut values: Vec<f64> = scores.values().copied().collect();
        values.sort_by(f64::total_cmp);
        let median = values[values.len() / 2];
        assert!(median < 0.0, "median {median} vs global {global}");
    }

    #[test]
    fn permutation_mean_sd_match_exhaustive_enumeration() {
        // 4 nodes, binary attribute (2 F, 2 M), fixed arcs. The exact
        // permutation distribution enumerates all 4! relabelings.
        let arcs = [(0u32, 1u32), (1, 2), (2, 3), (3, 0), (0, 2)];
        let base = [Sex::Female, Sex::Female, Sex::Male, Sex::Male];
        let net = attributed_net(
            4,
            &arcs,
            &base.map(|x| (Site::Origin, x)),
        );

        // Oracle: enumerate every permutation of the attribute vector.
        let perms = [
            [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
            [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
            [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
            [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
        ];
        let mut values = Vec::new();
        for p in perms {
            let cats: Vec<Sex> = p.iter().map(|&i| base[i]).collect();
            let (mut e, mut i) = (0f64, 0f64);
            for &(s, d) in &arcs {
                if cats[s as usize] == cats[d as usize] {
                    i += 1.0;
                } else {
                    e += 1.0;
                }
            }
            values.push((e - i) / (e + i));
        }
        let exact_mean = values.iter().sum::<f64>() / values.len() as f64;
        let exact_var =
            values.iter().map(|v| (v - exact_mean) * (v - exact_mean)).sum::<f64>()
                / values.len() as f64;

        let result =
            ei_permutation_test(&net, NodeAttr::Sex, 20_000, &mut stream_rng(35, 11)).unwrap();
        // Monte-Carlo error bounds on mean and sd.
        let se_mean = exact_var.sqrt() / (20_000f64).sqrt();
        assert!(
            (result.perm_mean - exact_mean).abs() < 4.0 * se_mean,
            "mean {} vs exact {exact_mean}",
            result.perm_mean
        );
        assert!(
            (result.perm_sd - exact_var.sqrt()).abs() < 0.02,
            "sd {} vs exact {}",
            result.perm_sd,
            exact_var.sqrt()
        );
    }

    #[test]
    fn permutation_is_deterministic_given_seed() {
        let net = attributed_net(
            6,
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
            &[
                (Site::Origin, Sex::Female),
                (Site::Origin, Sex::Male),
                (Site::Destination, Sex::Female),
                (Site::Destination, Sex::Male),
                (Site::Origin, Sex::Female),
                (Site::Destination, Sex::Male),
            ],
        );
        let a = ei_permutation_test(&net, NodeAttr::Site, 500, &mut stream_rng(36, 12)).unwrap();
        let b = ei_permutation_test(&net, NodeAttr::Site, 500, &mut stream_rng(36, 12)).unwrap();
        assert_eq!(a.perm_mean, b.perm_mean);
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn every_out_star_has_outdegree_one_and_betweenness_zero() {
        for n in 3..20u32 {
            let arcs: Vec<(u32, u32)> = (1..n).map(|i| (0, i)).collect();
            let net = arc_net(n, &arcs);
            assert_eq!(
                centralization(&net, CentralizationKind::OutDegree).unwrap().value,
                1.0,
                "n = {n}"
            );
            assert_eq!(
                centralization(&net, CentralizationKind::Betweenness).unwrap().value,
                0.0,
                "n = {n}"
            );
        }
    }

    #[test]
    fn regular_digraph_has_zero_degree_centralizations() {
        // Directed 6-cycle: all in/out degrees equal.
        let arcs: Vec<(u32, u32)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let net = arc_net(6, &arcs);
        for kind in [
            CentralizationKind::InDegree,
            CentralizationKind::OutDegree,
            CentralizationKind::Degree,
        ] {
            assert_eq!(centralization(&net, kind).unwrap().value, 0.0);
        }
    }

    #[test]
    fn small_layers_flag_caution_and_tiny_error() {
        let net = arc_net(2, &[(0, 1)]);
        let c = centralization(&net, CentralizationKind::InDegree).unwrap();
        assert!(c.caution);
        let one = arc_net(1, &[]);
        assert!(centralization(&one, CentralizationKind::InDegree).is_err());
    }

    #[test]
    fn betweenness_middle_of_path_dominates() {
        let net = arc_net(4, &[(0, 1), (1, 2), (2, 3)]);
        let scores = betweenness_scores(&net);
        // Node 1 lies on 0->2, 0->3; node 2 on 0->3, 1->3.
        assert_eq!(scores[0], 0.0);
        assert_eq!(scores[1], 2.0);
        assert_eq!(scores[2], 2.0);
        assert_eq!(scores[3], 0.0);
    }

    #[test]
    fn composition_counts_roles_sites_sexes() {
        let mut net = attributed_net(
            3,
            &[(0, 1), (0, 2)],
            &[
                (Site::Destination, Sex::Female),
                (Site::Origin, Sex::Male),
                (Site::Destination, Sex::Female),
            ],
        );
        net.nodes[1].role = NodeRole::Referral;
        net.nodes[2].role = NodeRole::AlterOnly;
        let comp = composition_summary(&net);
        assert_eq!(comp.total(), 3);
        assert_eq!(comp.participants(), 1);
        assert_eq!(comp.non_participants(), 2);
        assert_eq!(comp.count(|_, s, _| s == Some(Site::Destination)), 2);
        assert_eq!(comp.count(|_, _, x| x == Some(Sex::Male)), 1);

        let empty = arc_net(0, &[]);
        assert_eq!(composition_summary(&empty).total(), 0);
    }

    #[test]
    fn alter_composition_matches_independent_fold() {
        let graph = crate::testutil::test_graph(41, 220, 110, 0.08);
        let config = crate::fieldwork::StudyConfig {
            n_seeds: 5,
            target_interviews: 70,
            ..crate::fieldwork::StudyConfig::default()
        };
        let log = crate::fieldwork::run_study(&graph, &config, &mut stream_rng(41, 6)).unwrap();
        let summary = alter_composition(&log);

        // Independent fold: recount means per class directly.
        let class_of: BTreeMap<_, _> = log
            .interviews
            .iter()
            .map(|iv| (iv.respondent_obs, iv.migrant_type))
            .collect();
        let mut totals: BTreeMap<MigrantType, Vec<u64>> = BTreeMap::new();
        for pnet in &log.pnets {
            let class = class_of[&pnet.respondent_obs];
            totals.entry(class).or_default().push(pnet.alters.len() as u64);
        }
        for (class, counts) in totals {
            let n = counts.len();
            assert_eq!(summary.n_respondents[&class], n);
            let mean = counts.iter().sum::<u64>() as f64 / n as f64;
            let cell = summary.class_totals[&class];
            assert!((cell.mean - mean).abs() < 1e-12, "{class:?}");
            assert_eq!(cell.total, counts.iter().sum::<u64>());
        }
    }
}
