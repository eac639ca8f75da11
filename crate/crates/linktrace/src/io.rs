//! CSV interchange files.
//!
//! Every pipeline stage writes its outputs as UTF-8, comma-separated,
//! header-rowed, LF-terminated CSV so any stage can be rerun in isolation
//! and external tools can consume the artifacts. Writers emit rows in a
//! canonical sorted order; identical inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::Error;
use crate::fieldwork::{
    AlterAlterReport, AlterRecord, GeneratorCategory, InterviewEvent, ParticipationTable,
    PersonalNetworkObservation, ReferralEvent, StudyLog,
};
use crate::identity::{
    AliasCode, ConflictReport, EntityId, EntityPartition, ObsId, ObservationRecord,
};
use crate::netbuild::{ArcKind, Chain, NetArc, NetEdge, NetNode, Network, NodeRole};
use crate::netstats::{AlterSummary, EIResult, MixingMatrix, NodeAttr};
use crate::rdsest::EstimateReport;
use crate::synthpop::{Person, PersonId, Sex, Site, Tie, TieKind};
use crate::Result;

fn open_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(Error::from)
}

fn parse<T: FromStr<Err = Error>>(field: &str) -> Result<T> {
    field.parse()
}

fn opt(field: &str) -> Option<&str> {
    if field.is_empty() {
        None
    } else {
        Some(field)
    }
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

// ---------------------------------------------------------------------------
// Population

pub fn write_persons(path: &Path, persons: &[Person]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "person_id",
        "site",
        "sex",
        "age",
        "religion",
        "education",
        "work",
        "migrant_type",
        "first_name",
        "last_name",
        "phone",
    ])?;
    for p in persons {
        w.write_record([
            p.id.to_string(),
            p.site.to_string(),
            p.sex.to_string(),
            p.age.to_string(),
            p.religion.clone(),
            p.education.clone(),
            p.work.clone(),
            p.migrant_type.to_string(),
            p.first_name.clone(),
            p.last_name.clone(),
            p.phone.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_persons(path: &Path) -> Result<Vec<Person>> {
    let mut persons = Vec::new();
    for record in open_reader(path)?.records() {
        let r = record?;
        persons.push(Person {
            id: parse(&r[0])?,
            site: parse(&r[1])?,
            sex: parse(&r[2])?,
            age: r[3]
                .parse()
                .map_err(|_| Error::config(format!("bad age `{}`", &r[3])))?,
            religion: r[4].to_string(),
            education: r[5].to_string(),
            work: r[6].to_string(),
            migrant_type: parse(&r[7])?,
            first_name: r[8].to_string(),
            last_name: r[9].to_string(),
            phone: opt(&r[10]).map(str::to_string),
            kin_group: 0, // recoverable from kin ties, not serialized
        });
    }
    Ok(persons)
}

pub fn write_truth_ties(path: &Path, ties: &[Tie]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["person_a", "person_b", "tie_kind"])?;
    for t in ties {
        w.write_record([t.a.to_string(), t.b.to_string(), t.kind.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_ties(path: &Path) -> Result<Vec<Tie>> {
    let mut ties = Vec::new();
    for record in open_reader(path)?.records() {
        let r = record?;
        ties.push(Tie {
            a: parse(&r[0])?,
            b: parse(&r[1])?,
            kind: parse::<TieKind>(&r[2])?,
        });
    }
    Ok(ties)
}

// ---------------------------------------------------------------------------
// Study log

pub fn write_observations(path: &Path, observations: &[ObservationRecord]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "obs_id",
        "source",
        "alias",
        "sex",
        "residence",
        "occupation",
        "religion",
        "reporting_respondent",
    ])?;
    for o in observations {
        w.write_record([
            o.obs_id.to_string(),
            o.source.to_string(),
            o.alias.to_string(),
            o.sex.map(|s| s.to_string()).unwrap_or_default(),
            o.residence.map(|s| s.to_string()).unwrap_or_default(),
            o.occupation.clone().unwrap_or_default(),
            o.religion.clone().unwrap_or_default(),
            o.reporting_respondent
                .map(|r| r.to_string())
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<ObservationRecord>> {
    let mut observations = Vec::new();
    for record in open_reader(path)?.records() {
        let r = record?;
        observations.push(ObservationRecord {
            obs_id: parse(&r[0])?,
            source: parse(&r[1])?,
            alias: parse::<AliasCode>(&r[2])?,
            sex: opt(&r[3]).map(parse::<Sex>).transpose()?,
            residence: opt(&r[4]).map(parse::<Site>).transpose()?,
            occupation: opt(&r[5]).map(str::to_string),
            religion: opt(&r[6]).map(str::to_string),
            reporting_respondent: opt(&r[7]).map(parse::<ObsId>).transpose()?,
        });
    }
    Ok(observations)
}

pub fn write_observation_truth(path: &Path, truth: &BTreeMap<ObsId, PersonId>) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["obs_id", "person_id"])?;
    for (obs, person) in truth {
        w.write_record([obs.to_string(), person.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observation_truth(path: &Path) -> Result<BTreeMap<ObsId, PersonId>> {
    let mut truth = BTreeMap::new();
    for record in open_reader(path)?.records() {
        let r = record?;
        truth.insert(parse::<ObsId>(&r[0])?, parse::<PersonId>(&r[1])?);
    }
    Ok(truth)
}

pub fn write_interviews(path: &Path, interviews: &[InterviewEvent]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "order",
        "person_id",
        "obs_id",
        "site",
        "sex",
        "age",
        "migrant_type",
        "wave",
        "interviewer_site",
        "elicited_alters",
        "true_degree",
    ])?;
    for iv in interviews {
        w.write_record([
            iv.order.to_string(),
            iv.person.to_string(),
            iv.respondent_obs.to_string(),
            iv.site.to_string(),
            iv.sex.to_string(),
            iv.age.to_string(),
            iv.migrant_type.to_string(),
            iv.wave.to_string(),
            iv.interviewer_site.to_string(),
            iv.elicited_alters.to_string(),
            iv.true_degree.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_interviews(path: &Path) -> Result<Vec<InterviewEvent>> {
    let mut interviews = Vec::new();
    for record in open_reader(path)?.records() {
        let r = record?;
        let int = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::config(format!("bad integer `{s}`")))
        };
        interviews.push(InterviewEvent {
            order: int(&r[0])?,
            person: parse(&r[1])?,
            respondent_obs: parse(&r[2])?,
            site: parse(&r[3])?,
            sex: parse(&r[4])?,
            age: int(&r[5])? as u32,
            migrant_type: parse(&r[6])?,
            wave: int(&r[7])? as u32,
            interviewer_site: parse(&r[8])?,
            elicited_alters: int(&r[9])?,
            true_degree: int(&r[10])?,
        });
    }
    Ok(interviews)
}

pub fn write_referrals(path: &Path, referrals: &[ReferralEvent]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "referee_obs",
        "referral_obs",
        "referee_person",
        "referral_person",
        "site",
        "wave",
        "accepted",
    ])?;
    for r in referrals {
        w.write_record([
            r.referee_obs.to_string(),
            r.referral_obs.to_string(),
            r.referee_person.to_string(),
            r.referral_person.to_string(),
            r.site.to_string(),
            r.wave.to_string(),
            r.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_referrals(path: &Path) -> Result<Vec<ReferralEvent>> {
    let mut referrals = Vec::new();
    for record in open_reader(path)?.records() {
        let r = record?;
        referrals.push(ReferralEvent {
            referee_obs: parse(&r[0])?,
            referral_obs: parse(&r[1])?,
            referee_person: parse(&r[2])?,
            referral_person: parse(&r[3])?,
            site: parse(&r[4])?,
            wave: r[5]
                .parse()
                .map_err(|_| Error::config(format!("bad wave `{}`", &r[5])))?,
            accepted: r[6]
                .parse()
                .map_err(|_| Error::config(format!("bad bool `{}`", &r[6])))?,
        });
    }
    Ok(referrals)
}

pub fn write_alters(path: &Path, pnets: &[PersonalNetworkObservation]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "respondent_obs",
        "alter_obs",
        "alter_person",
        "category",
        "kind",
        "sampled",
    ])?;
    for pnet in pnets {
        for (i, alter) in pnet.alters.iter().enumerate() {
            w.write_record([
                pnet.respondent_obs.to_string(),
                alter.obs.to_string(),
                alter.person.to_string(),
                alter.category.to_string(),
                alter.kind.to_string(),
                pnet.sampled.contains(&i).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_alter_ties(path: &Path, pnets: &[PersonalNetworkObservation]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["respondent_obs", "obs_a", "obs_b", "knows"])?;
    for pnet in pnets {
        for report in &pnet.alter_alter {
            w.write_record([
                pnet.respondent_obs.to_string(),
                report.a.to_string(),
                report.b.to_string(),
                report.knows.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Unified event stream: one row per interview and referral event, in
/// chronological order (observation ids are assigned chronologically).
pub fn write_study_log(path: &Path, log: &StudyLog) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["event", "wave", "site", "subject_obs", "referee_obs", "accepted"])?;
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    struct Row(ObsId, &'static str, u32, Site, Option<ObsId>, Option<bool>);
    let mut rows: Vec<Row> = Vec::new();
    for iv in &log.interviews {
        rows.push(Row(iv.respondent_obs, "interview", iv.wave, iv.site, None, None));
    }
    for r in &log.referrals {
        rows.push(Row(
            r.referral_obs,
            "referral",
            r.wave,
            r.site,
            Some(r.referee_obs),
            Some(r.accepted),
        ));
    }
    rows.sort();
    for Row(subject, event, wave, site, referee, accepted) in rows {
        w.write_record([
            event.to_string(),
            wave.to_string(),
            site.to_string(),
            subject.to_string(),
            referee.map(|o| o.to_string()).unwrap_or_default(),
            accepted.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_study_meta(path: &Path, log: &StudyLog) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["key", "value"])?;
    let seeds = log
        .seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    w.write_record(["seeds", &seeds])?;
    w.write_record(["exhausted", &log.exhausted.to_string()])?;
    w.flush()?;
    Ok(())
}

/// Write every study artifact into `dir`.
pub fn write_study(dir: &Path, log: &StudyLog) -> Result<Vec<std::path::PathBuf>> {
    let files = vec![
        dir.join("observations.csv"),
        dir.join("observations_truth.csv"),
        dir.join("interviews.csv"),
        dir.join("referrals.csv"),
        dir.join("alters.csv"),
        dir.join("alter_ties.csv"),
        dir.join("study_log.csv"),
        dir.join("study_meta.csv"),
    ];
    write_observations(&files[0], &log.observations)?;
    write_observation_truth(&files[1], &log.truth)?;
    write_interviews(&files[2], &log.interviews)?;
    write_referrals(&files[3], &log.referrals)?;
    write_alters(&files[4], &log.pnets)?;
    write_alter_ties(&files[5], &log.pnets)?;
    write_study_log(&files[6], log)?;
    write_study_meta(&files[7], log)?;
    Ok(files)
}

/// Rebuild a [`StudyLog`] from the artifacts written by [`write_study`].
pub fn read_study(dir: &Path) -> Result<StudyLog> {
    let observations = read_observations(&dir.join("observations.csv"))?;
    let truth = read_observation_truth(&dir.join("observations_truth.csv"))?;
    let interviews = read_interviews(&dir.join("interviews.csv"))?;
    let referrals = read_referrals(&dir.join("referrals.csv"))?;

    // Alters, grouped per respondent in file order.
    let mut alters_by_resp: BTreeMap<ObsId, Vec<(AlterRecord, bool)>> = BTreeMap::new();
    for record in open_reader(&dir.join("alters.csv"))?.records() {
        let r = record?;
        let respondent: ObsId = parse(&r[0])?;
        alters_by_resp.entry(respondent).or_default().push((
            AlterRecord {
                obs: parse(&r[1])?,
                person: parse(&r[2])?,
                category: parse::<GeneratorCategory>(&r[3])?,
                kind: parse::<TieKind>(&r[4])?,
            },
            r[5].parse()
                .map_err(|_| Error::config(format!("bad bool `{}`", &r[5])))?,
        ));
    }
    let mut ties_by_resp: BTreeMap<ObsId, Vec<AlterAlterReport>> = BTreeMap::new();
    for record in open_reader(&dir.join("alter_ties.csv"))?.records() {
        let r = record?;
        let respondent: ObsId = parse(&r[0])?;
        ties_by_resp.entry(respondent).or_default().push(AlterAlterReport {
            a: parse(&r[1])?,
            b: parse(&r[2])?,
            knows: r[3]
                .parse()
                .map_err(|_| Error::config(format!("bad bool `{}`", &r[3])))?,
        });
    }

    let pnets = interviews
        .iter()
        .map(|iv| {
            let entries = alters_by_resp.remove(&iv.respondent_obs).unwrap_or_default();
            let sampled = entries
                .iter()
                .enumerate()
                .filter(|(_, (_, s))| *s)
                .map(|(i, _)| i)
                .collect();
            PersonalNetworkObservation {
                respondent_obs: iv.respondent_obs,
                respondent: iv.person,
                alters: entries.into_iter().map(|(a, _)| a).collect(),
                sampled,
                alter_alter: ties_by_resp.remove(&iv.respondent_obs).unwrap_or_default(),
            }
        })
        .collect();

    // Seeds and the exhaustion flag.
    let mut seeds = Vec::new();
    let mut exhausted = false;
    for record in open_reader(&dir.join("study_meta.csv"))?.records() {
        let r = record?;
        match &r[0] {
            "seeds" => {
                for token in r[1].split_whitespace() {
                    seeds.push(parse::<PersonId>(token)?);
                }
            }
            "exhausted" => {
                exhausted = r[1]
                    .parse()
                    .map_err(|_| Error::config(format!("bad bool `{}`", &r[1])))?;
            }
            other => return Err(Error::config(format!("unknown study_meta key `{other}`"))),
        }
    }

    Ok(StudyLog {
        seeds,
        interviews,
        referrals,
        pnets,
        observations,
        truth,
        exhausted,
    })
}

// ---------------------------------------------------------------------------
// Entities and conflicts

pub fn write_entities(path: &Path, partition: &EntityPartition) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["obs_id", "entity_id"])?;
    for (obs, entity) in &partition.assignment {
        w.write_record([obs.to_string(), entity.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuild the partition from entities.csv plus the observation table; the
/// merged profiles are re-absorbed in observation-id order, reproducing the
/// linker's output exactly.
pub fn read_partition(
    path: &Path,
    observations: &[ObservationRecord],
) -> Result<EntityPartition> {
    let mut assignment: BTreeMap<ObsId, EntityId> = BTreeMap::new();
    for record in open_reader(path)?.records() {
        let r = record?;
        assignment.insert(parse(&r[0])?, parse(&r[1])?);
    }
    let mut partition = EntityPartition {
        assignment,
        profiles: BTreeMap::new(),
    };
    let by_id: BTreeMap<ObsId, &ObservationRecord> =
        observations.iter().map(|o| (o.obs_id, o)).collect();
    for (&obs, &entity) in &partition.assignment.clone() {
        let record = by_id
            .get(&obs)
            .ok_or_else(|| Error::Unresolved(obs.to_string()))?;
        partition.profiles.entry(entity).or_default().absorb(record);
    }
    Ok(partition)
}

pub fn write_conflicts(path: &Path, report: &ConflictReport) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["alias", "reason", "merged", "observations"])?;
    for record in &report.records {
        let obs = record
            .observations
            .iter()
            .map(|o| o.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            record.alias.to_string(),
            record.reason.to_string(),
            record.merged.to_string(),
            obs,
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Networks

pub fn write_network(dir: &Path, network: &Network) -> Result<Vec<std::path::PathBuf>> {
    let files = vec![dir.join("nodes.csv"), dir.join("arcs.csv"), dir.join("edges.csv")];
    let mut w = open_writer(&files[0])?;
    w.write_record(["entity_id", "role", "site", "sex", "is_seed"])?;
    for node in &network.nodes {
        w.write_record([
            node.entity.to_string(),
            node.role.to_string(),
            node.site.map(|s| s.to_string()).unwrap_or_default(),
            node.sex.map(|s| s.to_string()).unwrap_or_default(),
            node.is_seed.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = open_writer(&files[1])?;
    w.write_record(["src", "dst", "kind"])?;
    for arc in &network.arcs {
        w.write_record([arc.src.to_string(), arc.dst.to_string(), arc.kind.to_string()])?;
    }
    w.flush()?;

    let mut w = open_writer(&files[2])?;
    w.write_record(["a", "b"])?;
    for edge in &network.edges {
        w.write_record([edge.a.to_string(), edge.b.to_string()])?;
    }
    w.flush()?;
    Ok(files)
}

pub fn read_network(dir: &Path) -> Result<Network> {
    let mut nodes = Vec::new();
    for record in open_reader(&dir.join("nodes.csv"))?.records() {
        let r = record?;
        nodes.push(NetNode {
            entity: parse(&r[0])?,
            role: parse::<NodeRole>(&r[1])?,
            site: opt(&r[2]).map(parse::<Site>).transpose()?,
            sex: opt(&r[3]).map(parse::<Sex>).transpose()?,
            is_seed: r[4]
                .parse()
                .map_err(|_| Error::config(format!("bad bool `{}`", &r[4])))?,
        });
    }
    let mut arcs = Vec::new();
    for record in open_reader(&dir.join("arcs.csv"))?.records() {
        let r = record?;
        arcs.push(NetArc {
            src: parse(&r[0])?,
            dst: parse(&r[1])?,
            kind: parse::<ArcKind>(&r[2])?,
        });
    }
    let mut edges = Vec::new();
    for record in open_reader(&dir.join("edges.csv"))?.records() {
        let r = record?;
        edges.push(NetEdge {
            a: parse(&r[0])?,
            b: parse(&r[1])?,
        });
    }
    Ok(Network::new(nodes, arcs, edges))
}

pub fn write_chains(
    path: &Path,
    chains: &[(Chain, crate::netbuild::DistanceStats, ChainComposition)],
) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "seed",
        "size",
        "participants",
        "non_participants",
        "destination_members",
        "origin_members",
        "females",
        "males",
        "longest_from_seed",
        "avg_from_seed",
        "avg_pairwise",
        "sd_pairwise",
    ])?;
    for (chain, stats, comp) in chains {
        w.write_record([
            chain.seed.to_string(),
            chain.size().to_string(),
            comp.participants.to_string(),
            comp.non_participants.to_string(),
            comp.destination.to_string(),
            comp.origin.to_string(),
            comp.females.to_string(),
            comp.males.to_string(),
            stats.longest_from_seed.to_string(),
            f(stats.avg_from_seed),
            f(stats.avg_pairwise),
            f(stats.sd_pairwise),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Compact per-chain composition counts for the chains artifact.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChainComposition {
    pub participants: usize,
    pub non_participants: usize,
    pub destination: usize,
    pub origin: usize,
    pub females: usize,
    pub males: usize,
}

// ---------------------------------------------------------------------------
// Statistics artifacts

pub fn write_stats(path: &Path, rows: &[(String, String, String)]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["layer", "metric", "value"])?;
    for (layer, metric, value) in rows {
        w.write_record([layer, metric, value])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ei_permutation(
    path: &Path,
    rows: &[(String, NodeAttr, EIResult)],
) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["layer", "attribute", "observed", "perm_mean", "perm_sd", "p_value", "n_permutations"])?;
    for (layer, attr, r) in rows {
        w.write_record([
            layer.clone(),
            attr.to_string(),
            f(r.observed),
            f(r.perm_mean),
            f(r.perm_sd),
            f(r.p_value),
            r.n_permutations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mixing(path: &Path, matrices: &[MixingMatrix]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["attribute", "from", "to", "count"])?;
    for m in matrices {
        for (i, row) in m.counts.iter().enumerate() {
            for (j, count) in row.iter().enumerate() {
                w.write_record([
                    m.attr.to_string(),
                    m.labels[i].clone(),
                    m.labels[j].clone(),
                    count.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_alter_summary(path: &Path, summary: &AlterSummary) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["class", "group", "site", "total", "mean", "sd"])?;
    for ((class, group, site), cell) in &summary.cells {
        w.write_record([
            class.to_string(),
            group.to_string(),
            site.to_string(),
            cell.total.to_string(),
            f(cell.mean),
            f(cell.sd),
        ])?;
    }
    for (class, cell) in &summary.class_totals {
        w.write_record([
            class.to_string(),
            "all".to_string(),
            "all".to_string(),
            cell.total.to_string(),
            f(cell.mean),
            f(cell.sd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_participation(path: &Path, table: &ParticipationTable) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["site", "sex", "contacted", "participated"])?;
    for (&(site, sex), cell) in &table.cells {
        w.write_record([
            site.to_string(),
            sex.to_string(),
            cell.contacted.to_string(),
            cell.participated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fit(path: &Path, fits: &[(String, crate::ergm::FitResult)]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["model", "term", "theta", "se", "z", "p_value", "stars"])?;
    for (model, fit) in fits {
        for t in &fit.terms {
            w.write_record([
                model.clone(),
                t.term.to_string(),
                f(t.theta),
                f(t.se),
                f(t.z),
                f(t.p_value),
                t.stars.to_string(),
            ])?;
        }
        w.write_record([
            model.clone(),
            "aic".to_string(),
            f(fit.aic),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
        w.write_record([
            model.clone(),
            "bic".to_string(),
            f(fit.bic),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimates(path: &Path, report: &EstimateReport) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "site",
        "attribute",
        "naive",
        "weighted",
        "parameter",
        "deviation",
        "flagged",
    ])?;
    for line in &report.lines {
        w.write_record([
            line.site.to_string(),
            line.attribute.clone(),
            f(line.naive),
            line.weighted.map(f).unwrap_or_default(),
            f(line.parameter),
            f(line.deviation),
            line.flagged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics(
    path: &Path,
    diagnostics: &BTreeMap<Site, crate::rdsest::MaskingDiagnostics>,
) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "site",
        "elicited",
        "referred",
        "elicited_and_referred",
        "masked_share",
        "referral_overlap_share",
    ])?;
    for (site, d) in diagnostics {
        w.write_record([
            site.to_string(),
            d.elicited.to_string(),
            d.referred.to_string(),
            d.elicited_and_referred.to_string(),
            d.masked_share.map(f).unwrap_or_default(),
            d.referral_overlap_share.map(f).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Hive plot data

/// Hive-plot coordinate data with the site as the axis attribute: one
/// `node` row per node with its axis, rank (out-degree order, first served)
/// and color key, and one `arc` row per arc classified within/between axes.
pub fn write_hiveplot(path: &Path, network: &Network) -> Result<()> {
    // Every node needs the axis attribute.
    let missing: Vec<String> = network
        .nodes
        .iter()
        .filter(|n| n.site.is_none())
        .map(|n| n.entity.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Undefined(format!(
            "hive axis attribute missing on nodes: {}",
            missing.join(", ")
        )));
    }

    let mut w = open_writer(path)?;
    w.write_record(["record", "entity_or_src", "dst", "axis", "rank", "sex", "arc_class"])?;

    // Out-degrees over all arcs.
    let mut outdeg: BTreeMap<EntityId, usize> = BTreeMap::new();
    for node in &network.nodes {
        outdeg.insert(node.entity, 0);
    }
    for arc in &network.arcs {
        *outdeg.entry(arc.src).or_default() += 1;
    }

    // Rank per axis: ascending out-degree, ties by dataset index (node
    // order), so the highest out-degree lands at the top of its axis.
    let mut by_axis: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, node) in network.nodes.iter().enumerate() {
        let axis = node.site.expect("checked above").to_string();
        by_axis.entry(axis).or_default().push((outdeg[&node.entity], i));
    }
    let mut rank_of: BTreeMap<EntityId, usize> = BTreeMap::new();
    for members in by_axis.values_mut() {
        members.sort();
        for (rank, &(_, i)) in members.iter().enumerate() {
            rank_of.insert(network.nodes[i].entity, rank);
        }
    }
    for node in &network.nodes {
        w.write_record([
            "node".to_string(),
            node.entity.to_string(),
            String::new(),
            node.site.expect("checked above").to_string(),
            rank_of[&node.entity].to_string(),
            node.sex.map(|s| s.to_string()).unwrap_or_default(),
            String::new(),
        ])?;
    }
    for arc in &network.arcs {
        let site = |e: EntityId| network.node(e).and_then(|n| n.site);
        let class = if site(arc.src) == site(arc.dst) {
            "within"
        } else {
            "between"
        };
        w.write_record([
            "arc".to_string(),
            arc.src.to_string(),
            arc.dst.to_string(),
            String::new(),
            String::new(),
            String::new(),
            class.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
