//! Replicate probe for preset calibration.
//!
//! Runs a preset repeatedly and prints the link-tracing layer's node count,
//! arc/node ratio, wave depth and mean elicited alters, so tie-density
//! targets can be tuned against the reference accounting (1,068 nominated
//! nodes, arc/node ratio near 1.11, wave depths past 10).
//!
//! Usage: `cargo run --release --example calibrate -- [preset] [replicates]`

use linktrace::config::RunConfig;
use linktrace::fieldwork::run_study;
use linktrace::identity::{link_records, LinkPolicy};
use linktrace::netbuild::build_link_tracing_network;
use linktrace::pipeline::stage_generate;
use linktrace::rng::{stream_rng, streams};

fn main() {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "calibration".into());
    let replicates: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let mut nodes_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut deep_waves = 0;
    let mut exhausted = 0;
    let mut elicited_sum = 0.0;
    let started = std::time::Instant::now();

    for rep in 0..replicates {
        let config = RunConfig::preset(&preset, 1000 + rep).expect("known preset");
        let dir = tempfile::tempdir().unwrap();
        let graph = stage_generate(&config, dir.path()).unwrap();
        let log = run_study(
            &graph,
            &config.study,
            &mut stream_rng(config.rng_seed, streams::STUDY),
        )
        .unwrap();
        let (partition, _) = link_records(&log.observations, LinkPolicy::default());
        let link = build_link_tracing_network(&log, &partition).unwrap();

        let nodes = link.n_nodes() as f64;
        let ratio = link.n_arcs() as f64 / nodes;
        let elicited = log
            .interviews
            .iter()
            .map(|iv| iv.elicited_alters as f64)
            .sum::<f64>()
            / log.n_interviews() as f64;
        nodes_sum += nodes;
        ratio_sum += ratio;
        elicited_sum += elicited;
        if log.max_wave() >= 10 {
            deep_waves += 1;
        }
        if log.exhausted {
            exhausted += 1;
        }
        println!(
            "rep {rep}: nodes {nodes:.0} ratio {ratio:.3} interviews {} max_wave {} elicited {elicited:.1}{}",
            log.n_interviews(),
            log.max_wave(),
            if log.exhausted { " EXHAUSTED" } else { "" }
        );
    }

    let r = replicates as f64;
    println!("---");
    println!("preset {preset}, {replicates} replicates:");
    println!("  mean nominated nodes {:.0} (reference 1068 +/- 15%)", nodes_sum / r);
    println!("  mean arc/node ratio {:.3} (reference 1.11 +/- 0.1)", ratio_sum / r);
    println!("  wave depth >= 10 in {deep_waves}/{replicates}; exhausted {exhausted}");
    println!("  mean elicited alters {:.1} (reference 15.9)", elicited_sum / r);
    println!("  elapsed {:.1}s", started.elapsed().as_secs_f64());
}
