//! Shared fixtures for unit and integration tests.

use crate::identity::EntityId;
use crate::netbuild::{ArcKind, NetArc, NetNode, Network, NodeRole};
use crate::rng::stream_rng;
use crate::synthpop::{
    assign_identifiers, default_name_pool, generate_population, generate_ties, CategoricalDist,
    GroundTruthGraph, KinRule, PopulationConfig, SiteParams, TieConfig,
};

pub fn test_population(origin: usize, destination: usize) -> PopulationConfig {
    PopulationConfig {
        origin: SiteParams {
            size: origin,
            female_share: 0.51,
            age_mean: 48.0,
            age_sd: 17.0,
        },
        destination: SiteParams {
            size: destination,
            female_share: 0.53,
            age_mean: 41.0,
            age_sd: 12.0,
        },
        other: SiteParams {
            size: 0,
            female_share: 0.5,
            age_mean: 40.0,
            age_sd: 12.0,
        },
        religion: CategoricalDist::new(&[("orthodox", 0.9), ("other", 0.1)]),
        education: CategoricalDist::new(&[("secondary", 0.6), ("higher", 0.4)]),
        work: CategoricalDist::new(&[("employed", 0.55), ("other", 0.45)]),
        returnee_share: 0.12,
        kin: KinRule {
            size_mean: 3.0,
            cross_corridor_share: 0.25,
            elsewhere_share: 0.0,
        },
        name_pool_size: 5000,
        phone_missing_rate: 0.0,
    }
}

/// Uniform-probability two-site graph with named, phoned persons.
pub fn test_graph(seed: u64, origin: usize, destination: usize, p: f64) -> GroundTruthGraph {
    let config = test_population(origin, destination);
    let mut rng = stream_rng(seed, 1);
    let mut persons = generate_population(&config, &mut rng).unwrap();
    let pool = default_name_pool(config.name_pool_size, &mut stream_rng(seed, 3)).unwrap();
    assign_identifiers(&mut persons, &pool, 0.0, &mut stream_rng(seed, 3)).unwrap();
    let tie_config = TieConfig {
        p_within: [p, p, 0.0],
        p_between: [p, 0.0, 0.0],
        sex_homophily_multiplier: 1.0,
        friend_share: 0.5,
    };
    generate_ties(persons, &tie_config, &mut stream_rng(seed, 2)).unwrap()
}

/// Hand-built referral network from (src, dst) pairs over synthetic entities.
pub fn arc_net(n: u32, arcs: &[(u32, u32)]) -> Network {
    let nodes = (0..n)
        .map(|i| NetNode {
            entity: EntityId(i),
            role: NodeRole::Participant,
            site: None,
            sex: None,
            is_seed: false,
        })
        .collect();
    let arcs = arcs
        .iter()
        .map(|&(s, d)| NetArc {
            src: EntityId(s),
            dst: EntityId(d),
            kind: ArcKind::Referral,
        })
        .collect();
    Network::new(nodes, arcs, Vec::new())
}
