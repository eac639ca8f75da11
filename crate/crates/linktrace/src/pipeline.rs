//! End-to-end pipeline orchestration.
//!
//! Sequences the stages generate → sample → link → build → stats → fit →
//! estimate → report, writing every artifact under one output directory and
//! finishing with a manifest of content hashes. A failing stage renames the
//! files it managed to produce to `<name>.partial` and aborts with the stage
//! name; a completed run is fully determined by (config, master seed).

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::{to_canonical_string, RunConfig};
use crate::ergm::{fit_mple, FitResult};
use crate::fieldwork::{participation_summary, run_study, StudyLog};
use crate::identity::{audit_conflicts, link_records, ConflictReport, EntityPartition};
use crate::io;
use crate::netbuild::{
    build_link_tracing_network, build_network_of_networks, chain_distances, components,
    decompose_chains, seed_entities, Chain, Network, NodeRole,
};
use crate::netstats::{
    alter_composition, centralization, composition_summary, density, dyad_census,
    ei_permutation_test, mixing_matrix, CentralizationKind, NodeAttr,
};
use crate::rdsest::{representativeness_report, PopulationParams, SampleFrame};
use crate::report::write_report;
use crate::rng::{stream_rng, streams};
use crate::synthpop::{
    assign_identifiers, default_name_pool, generate_population, generate_ties, GroundTruthGraph,
    Sex, Site,
};
use crate::Result;

/// Files each stage is expected to produce, for partial-output handling.
pub const STAGE_FILES: &[(&str, &[&str])] = &[
    ("generate", &["persons.csv", "truth_ties.csv"]),
    (
        "sample",
        &[
            "observations.csv",
            "observations_truth.csv",
            "interviews.csv",
            "referrals.csv",
            "alters.csv",
            "alter_ties.csv",
            "study_log.csv",
            "study_meta.csv",
            "participation.csv",
        ],
    ),
    ("link", &["entities.csv", "conflicts.csv", "audit.csv"]),
    (
        "build",
        &["nodes.csv", "arcs.csv", "edges.csv", "chains.csv", "hiveplot.csv"],
    ),
    (
        "stats",
        &["stats.csv", "ei_permutation.csv", "mixing.csv", "alter_summary.csv"],
    ),
    ("fit", &["fit.csv", "fit_summary.txt"]),
    ("estimate", &["estimates.csv", "diagnostics.csv"]),
    ("report", &["report.md"]),
];

/// List of emitted files with content hashes plus the resolved config
/// snapshot.
#[derive(Debug, Clone)]
pub struct ArtifactManifest {
    pub files: Vec<(String, String)>,
    pub config_snapshot: String,
}

impl ArtifactManifest {
    pub fn render(&self) -> String {
        let mut out = String::from("[config]\n");
        out.push_str(&self.config_snapshot);
        out.push_str("\n[files]\n");
        for (name, hash) in &self.files {
            out.push_str(hash);
            out.push_str("  ");
            out.push_str(name);
            out.push('\n');
        }
        out
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn stage_file_names(stage: &str) -> &'static [&'static str] {
    STAGE_FILES
        .iter()
        .find(|(name, _)| *name == stage)
        .map(|(_, files)| *files)
        .unwrap_or(&[])
}

/// Run one stage; on failure rename its finished files to `.partial`.
fn guard_stage<T>(
    out_dir: &Path,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    match f() {
        Ok(v) => Ok(v),
        Err(e) => {
            for name in stage_file_names(stage) {
                let path = out_dir.join(name);
                if path.exists() {
                    let _ = std::fs::rename(&path, out_dir.join(format!("{name}.partial")));
                }
            }
            Err(e.in_stage(stage))
        }
    }
}

// ---------------------------------------------------------------------------
// Stages

pub fn stage_generate(config: &RunConfig, out_dir: &Path) -> Result<GroundTruthGraph> {
    let seed = config.rng_seed;
    let mut persons =
        generate_population(&config.population, &mut stream_rng(seed, streams::POPULATION))?;
    let pool = default_name_pool(
        config.population.name_pool_size,
        &mut stream_rng(seed, streams::IDENTIFIERS),
    )?;
    assign_identifiers(
        &mut persons,
        &pool,
        config.population.phone_missing_rate,
        &mut stream_rng(seed, streams::IDENTIFIERS),
    )?;
    let graph = generate_ties(persons, &config.ties, &mut stream_rng(seed, streams::TIES))?;
    io::write_persons(&out_dir.join("persons.csv"), &graph.persons)?;
    io::write_truth_ties(&out_dir.join("truth_ties.csv"), &graph.ties)?;
    Ok(graph)
}

pub fn stage_sample(
    config: &RunConfig,
    graph: &GroundTruthGraph,
    out_dir: &Path,
) -> Result<StudyLog> {
    let log = run_study(graph, &config.study, &mut stream_rng(config.rng_seed, streams::STUDY))?;
    io::write_study(out_dir, &log)?;
    let table = participation_summary(graph, &log);
    io::write_participation(&out_dir.join("participation.csv"), &table)?;
    Ok(log)
}

pub fn stage_link(
    config: &RunConfig,
    log: &StudyLog,
    out_dir: &Path,
) -> Result<(EntityPartition, ConflictReport)> {
    let (partition, mut report) = link_records(&log.observations, config.link);
    let audit = audit_conflicts(&log.observations, &partition, &report, Some(&log.truth));

    io::write_entities(&out_dir.join("entities.csv"), &partition)?;
    // Simulation mode: wrong merges the attribute checks could not see are
    // appended to the conflict artifact so no collision stays silent.
    report.records.extend(audit.undetected_collisions.iter().cloned());
    io::write_conflicts(&out_dir.join("conflicts.csv"), &report)?;

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out_dir.join("audit.csv"))?;
    w.write_record(["metric", "value"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    w.write_record(["pairwise_precision", &fmt(audit.precision)])?;
    w.write_record(["pairwise_recall", &fmt(audit.recall)])?;
    w.write_record([
        "merge_errors",
        &audit.merge_errors.map(|v| v.to_string()).unwrap_or_default(),
    ])?;
    w.write_record([
        "split_errors",
        &audit.split_errors.map(|v| v.to_string()).unwrap_or_default(),
    ])?;
    w.write_record(["same_code_conflicts", &audit.same_code_conflicts.to_string()])?;
    w.write_record(["fuzzy_candidates", &audit.fuzzy_candidates.to_string()])?;
    w.write_record([
        "undetected_collisions",
        &audit.undetected_collisions.len().to_string(),
    ])?;
    w.flush()?;
    Ok((partition, report))
}

pub struct BuildOutput {
    pub network_of_networks: Network,
    pub link_tracing: Network,
    pub chains: Vec<Chain>,
}

pub fn stage_build(
    log: &StudyLog,
    partition: &EntityPartition,
    out_dir: &Path,
) -> Result<BuildOutput> {
    let link = build_link_tracing_network(log, partition)?;
    let non = build_network_of_networks(log, partition)?;
    let seeds = seed_entities(log, partition)?;
    let chains = decompose_chains(&link, &seeds)?;

    io::write_network(out_dir, &non)?;
    let chain_rows: Vec<_> = chains
        .iter()
        .map(|chain| {
            let stats = chain_distances(&link, chain);
            let comp = composition_summary(&link.induced(&chain.members()));
            let composition = io::ChainComposition {
                participants: comp.participants(),
                non_participants: comp.non_participants(),
                destination: comp.count(|_, s, _| s == Some(Site::Destination)),
                origin: comp.count(|_, s, _| s == Some(Site::Origin)),
                females: comp.count(|_, _, x| x == Some(Sex::Female)),
                males: comp.count(|_, _, x| x == Some(Sex::Male)),
            };
            (chain.clone(), stats, composition)
        })
        .collect();
    io::write_chains(&out_dir.join("chains.csv"), &chain_rows)?;
    io::write_hiveplot(&out_dir.join("hiveplot.csv"), &non)?;
    Ok(BuildOutput {
        network_of_networks: non,
        link_tracing: link,
        chains,
    })
}

/// The participants-only view of the link-tracing layer.
pub fn participants_layer(link: &Network) -> Network {
    let members = link
        .nodes
        .iter()
        .filter(|n| n.role == NodeRole::Participant)
        .map(|n| n.entity)
        .collect();
    link.induced(&members)
}

fn stat_rows_for_layer(label: &str, layer: &Network, with_edges: bool) -> Vec<(String, String, String)> {
    let mut rows = Vec::new();
    let mut push = |metric: &str, value: String| {
        rows.push((label.to_string(), metric.to_string(), value));
    };
    push("nodes", layer.n_nodes().to_string());
    push("arcs", layer.n_arcs().to_string());
    if with_edges {
        push("edges", layer.n_edges().to_string());
    }
    let (m, a, n) = dyad_census(layer);
    push("mutual_dyads", m.to_string());
    push("asymmetric_dyads", a.to_string());
    push("null_dyads", n.to_string());
    if let Ok(d) = density(layer) {
        push("density", format!("{d:.6}"));
    }
    for kind in [
        CentralizationKind::InDegree,
        CentralizationKind::OutDegree,
        CentralizationKind::Degree,
        CentralizationKind::Betweenness,
    ] {
        if let Ok(c) = centralization(layer, kind) {
            push(&format!("{kind}_centralization"), format!("{:.6}", c.value));
            if c.caution {
                push(&format!("{kind}_centralization_caution"), "true".to_string());
            }
        }
    }
    let comps = components(layer);
    push("components", comps.count().to_string());
    push(
        "main_component_share",
        format!("{:.6}", comps.main_component_share(layer.n_nodes())),
    );
    rows
}

pub fn stage_stats(
    config: &RunConfig,
    build: &BuildOutput,
    log: &StudyLog,
    out_dir: &Path,
) -> Result<()> {
    let mut rows = Vec::new();
    for chain in &build.chains {
        let sub = build.link_tracing.induced(&chain.members());
        rows.extend(stat_rows_for_layer(&format!("chain_{}", chain.seed), &sub, false));
        let d = chain_distances(&build.link_tracing, chain);
        let label = format!("chain_{}", chain.seed);
        rows.push((label.clone(), "longest_from_seed".into(), d.longest_from_seed.to_string()));
        rows.push((label.clone(), "avg_from_seed".into(), format!("{:.6}", d.avg_from_seed)));
        rows.push((label.clone(), "avg_pairwise".into(), format!("{:.6}", d.avg_pairwise)));
        rows.push((label, "sd_pairwise".into(), format!("{:.6}", d.sd_pairwise)));
    }
    rows.extend(stat_rows_for_layer("link_tracing", &build.link_tracing, false));
    let d = crate::netbuild::directed_distance_stats(&build.link_tracing);
    rows.push(("link_tracing".into(), "avg_pairwise".into(), format!("{:.6}", d.avg_pairwise)));
    rows.push(("link_tracing".into(), "sd_pairwise".into(), format!("{:.6}", d.sd_pairwise)));
    rows.extend(stat_rows_for_layer(
        "participants",
        &participants_layer(&build.link_tracing),
        false,
    ));
    rows.extend(stat_rows_for_layer(
        "network_of_networks",
        &build.network_of_networks,
        true,
    ));
    io::write_stats(&out_dir.join("stats.csv"), &rows)?;

    // Permutation tests on the link-tracing layer. A degenerate layer (no
    // arcs, or a single attribute category) yields no rows instead of
    // aborting the stage; the report notices the empty section.
    let mut rng = stream_rng(config.rng_seed, streams::PERMUTATION);
    let mut ei_rows = Vec::new();
    for &attr in &config.analysis.ei_attrs {
        match ei_permutation_test(
            &build.link_tracing,
            attr,
            config.analysis.n_permutations,
            &mut rng,
        ) {
            Ok(result) => ei_rows.push(("link_tracing".to_string(), attr, result)),
            Err(crate::error::Error::Undefined(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    io::write_ei_permutation(&out_dir.join("ei_permutation.csv"), &ei_rows)?;

    let mut matrices = Vec::new();
    for attr in [NodeAttr::Site, NodeAttr::Sex, NodeAttr::SiteSex] {
        matrices.push(mixing_matrix(&build.link_tracing, attr)?);
    }
    io::write_mixing(&out_dir.join("mixing.csv"), &matrices)?;

    io::write_alter_summary(&out_dir.join("alter_summary.csv"), &alter_composition(log))?;
    Ok(())
}

pub fn stage_fit(config: &RunConfig, build: &BuildOutput, out_dir: &Path) -> Result<()> {
    let mut fits: Vec<(String, FitResult)> = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    let participants = participants_layer(&build.link_tracing);
    for (label, layer) in [
        ("link_tracing", &build.link_tracing),
        ("participants", &participants),
    ] {
        match fit_mple(layer, &config.analysis.ergm_terms, config.analysis.ergm_solver) {
            Ok(fit) => fits.push((label.to_string(), fit)),
            // A degenerate layer (tiny run, rank deficiency) is reported in
            // the summary rather than aborting the pipeline.
            Err(e) => failures.push((label.to_string(), e.to_string())),
        }
    }
    io::write_fit(&out_dir.join("fit.csv"), &fits)?;
    let mut summary = String::new();
    summary.push_str("ERGM fits by maximum pseudo-likelihood (MPLE).\n");
    summary.push_str(
        "NOTE: coefficients and information criteria are pseudo-likelihood based;\n\
         they are not Monte-Carlo MLE values and are not comparable to them.\n\n",
    );
    for (label, fit) in &fits {
        summary.push_str(&format!(
            "model: {label}  (dyads = {}, iterations = {})\n",
            fit.n_dyads, fit.iterations
        ));
        summary.push_str(&format!("{:<44} {:>10} {:>4} {:>9}\n", "term", "estimate", "", "s.e."));
        for t in &fit.terms {
            summary.push_str(&format!(
                "{:<44} {:>10.3} {:>4} {:>9.3}\n",
                t.term.to_string(),
                t.theta,
                t.stars,
                t.se
            ));
        }
        summary.push_str(&format!("AIC {:.1}   BIC {:.1} (pseudo-likelihood)\n\n", fit.aic, fit.bic));
    }
    for (label, error) in &failures {
        summary.push_str(&format!("model: {label}  fit failed: {error}\n"));
    }
    std::fs::write(out_dir.join("fit_summary.txt"), summary)?;
    Ok(())
}

pub fn stage_estimate(config: &RunConfig, log: &StudyLog, out_dir: &Path) -> Result<()> {
    let frame = SampleFrame::from_log(log, config.estimate.degree_source);
    let params: BTreeMap<Site, PopulationParams> = [
        (Site::Destination, config.estimate.destination_params),
        (Site::Origin, config.estimate.origin_params),
    ]
    .into_iter()
    .collect();
    let report =
        representativeness_report(&frame, &params, config.estimate.reference_ci, Some(log))?;
    io::write_estimates(&out_dir.join("estimates.csv"), &report)?;
    io::write_diagnostics(&out_dir.join("diagnostics.csv"), &report.diagnostics)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// The full pipeline

pub fn run_pipeline(config: &RunConfig, out_dir: &Path) -> Result<ArtifactManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let graph = guard_stage(out_dir, "generate", || stage_generate(config, out_dir))?;
    let log = guard_stage(out_dir, "sample", || stage_sample(config, &graph, out_dir))?;
    let (partition, _) = guard_stage(out_dir, "link", || stage_link(config, &log, out_dir))?;
    let build = guard_stage(out_dir, "build", || stage_build(&log, &partition, out_dir))?;
    guard_stage(out_dir, "stats", || stage_stats(config, &build, &log, out_dir))?;
    guard_stage(out_dir, "fit", || stage_fit(config, &build, out_dir))?;
    guard_stage(out_dir, "estimate", || stage_estimate(config, &log, out_dir))?;
    guard_stage(out_dir, "report", || write_report(out_dir))?;

    write_manifest(config, out_dir)
}

/// Hash every stage artifact and write `manifest.txt`.
pub fn write_manifest(config: &RunConfig, out_dir: &Path) -> Result<ArtifactManifest> {
    let mut files = Vec::new();
    for (_, names) in STAGE_FILES {
        for name in *names {
            let path = out_dir.join(name);
            if path.exists() {
                files.push((name.to_string(), sha256_file(&path)?));
            }
        }
    }
    files.sort();
    let manifest = ArtifactManifest {
        files,
        config_snapshot: to_canonical_string(config),
    };
    std::fs::write(out_dir.join("manifest.txt"), manifest.render())?;
    Ok(manifest)
}
