//! Population estimation from the link-traced sample.
//!
//! Naive (unweighted) estimates, inverse-degree-weighted estimates in the
//! RDS-II form, and a representativeness report comparing sample statistics
//! against known population parameters with masking and alter-overlap
//! diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Error;
use crate::fieldwork::StudyLog;
use crate::synthpop::{MigrantType, PersonId, Sex, Site};
use crate::Result;

// ---------------------------------------------------------------------------
// Sample frame

/// One respondent row of the estimation frame.
#[derive(Debug, Clone)]
pub struct FrameRow {
    pub person: PersonId,
    pub site: Site,
    pub sex: Sex,
    pub age: u32,
    pub migrant_type: MigrantType,
    /// Reported personal network size used for weighting.
    pub degree: f64,
}

/// Which degree feeds the inverse-degree weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeSource {
    /// Elicited-alter count: what a real study observes.
    Elicited,
    /// True degree from the ground-truth graph (simulation only), for
    /// quantifying degree-misreport sensitivity.
    True,
}

impl std::str::FromStr for DegreeSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elicited" => Ok(DegreeSource::Elicited),
            "true" => Ok(DegreeSource::True),
            _ => Err(Error::config(format!("unknown degree source `{s}`"))),
        }
    }
}

/// Respondent frame for estimation.
#[derive(Debug, Clone, Default)]
pub struct SampleFrame {
    pub rows: Vec<FrameRow>,
}

impl SampleFrame {
    /// Build the frame from the interview events of a study log.
    pub fn from_log(log: &StudyLog, degree_source: DegreeSource) -> SampleFrame {
        let rows = log
            .interviews
            .iter()
            .map(|iv| FrameRow {
                person: iv.person,
                site: iv.site,
                sex: iv.sex,
                age: iv.age,
                migrant_type: iv.migrant_type,
                degree: match degree_source {
                    DegreeSource::Elicited => iv.elicited_alters as f64,
                    DegreeSource::True => iv.true_degree as f64,
                },
            })
            .collect();
        SampleFrame { rows }
    }

    pub fn restrict_to_site(&self, site: Site) -> SampleFrame {
        SampleFrame {
            rows: self.rows.iter().filter(|r| r.site == site).cloned().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Estimators

/// Unweighted sample mean of a per-respondent value. For a 0/1 indicator
/// this is the sample proportion.
pub fn naive_estimate<F: Fn(&FrameRow) -> f64>(frame: &SampleFrame, value: F) -> Result<f64> {
    if frame.is_empty() {
        return Err(Error::Assumption("empty sample frame".into()));
    }
    Ok(frame.rows.iter().map(value).sum::<f64>() / frame.len() as f64)
}

/// Inverse-degree-weighted estimate: respondents are weighted by 1/degree,
/// which is the RDS-II correction for degree-proportional inclusion.
/// `p_A = (sum_{i in A} 1/d_i) / (sum_i 1/d_i)` for indicators.
pub fn rds2_estimate<F: Fn(&FrameRow) -> f64>(frame: &SampleFrame, value: F) -> Result<f64> {
    if frame.is_empty() {
        return Err(Error::Assumption("empty sample frame".into()));
    }
    for row in &frame.rows {
        if row.degree < 1.0 {
            return Err(Error::Assumption(format!(
                "respondent {} has degree {} < 1: network embeddedness violated",
                row.person, row.degree
            )));
        }
    }
    // Weights are ratio-defined; normalizing by the minimum degree makes
    // constant-degree weights exactly 1, so weighted == naive bit for bit.
    let d_min = frame.rows.iter().map(|r| r.degree).fold(f64::INFINITY, f64::min);
    let weight_sum: f64 = frame.rows.iter().map(|r| d_min / r.degree).sum();
    let weighted: f64 = frame.rows.iter().map(|r| value(r) * (d_min / r.degree)).sum();
    Ok(weighted / weight_sum)
}

pub fn female_indicator(row: &FrameRow) -> f64 {
    if row.sex == Sex::Female {
        1.0
    } else {
        0.0
    }
}

pub fn age_value(row: &FrameRow) -> f64 {
    row.age as f64
}

// ---------------------------------------------------------------------------
// Representativeness report

/// Known parameters of one site's population of interest.
#[derive(Debug, Clone, Copy)]
pub struct PopulationParams {
    pub size: u64,
    pub age_mean: f64,
    pub female_share: f64,
}

/// One estimate line of the report.
#[derive(Debug, Clone)]
pub struct EstimateLine {
    pub site: Site,
    pub attribute: String,
    pub naive: f64,
    pub weighted: Option<f64>,
    pub parameter: f64,
    /// naive - parameter.
    pub deviation: f64,
    /// |deviation| exceeds the reference confidence half-width.
    pub flagged: bool,
}

/// Masking and alter-overlap diagnostics per respondent site.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskingDiagnostics {
    pub elicited: usize,
    pub referred: usize,
    pub elicited_and_referred: usize,
    /// Share of elicited contacts never nominated as referrals.
    pub masked_share: Option<f64>,
    /// Share of referrals that were also elicited as contacts.
    pub referral_overlap_share: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct EstimateReport {
    pub lines: Vec<EstimateLine>,
    pub reference_ci: f64,
    pub diagnostics: BTreeMap<Site, MaskingDiagnostics>,
}

/// Per-site masking diagnostics: contacts a site's respondents elicited but
/// never nominated, and referrals that also appear among elicited contacts.
pub fn masking_diagnostics(log: &StudyLog) -> BTreeMap<Site, MaskingDiagnostics> {
    let site_of: BTreeMap<_, _> = log
        .interviews
        .iter()
        .map(|iv| (iv.respondent_obs, iv.site))
        .collect();
    let mut elicited: BTreeMap<Site, BTreeSet<PersonId>> = BTreeMap::new();
    for pnet in &log.pnets {
        let Some(&site) = site_of.get(&pnet.respondent_obs) else {
            continue;
        };
        for alter in &pnet.alters {
            elicited.entry(site).or_default().insert(alter.person);
        }
    }
    let mut referred: BTreeMap<Site, BTreeSet<PersonId>> = BTreeMap::new();
    for r in &log.referrals {
        let Some(&site) = site_of.get(&r.referee_obs) else {
            continue;
        };
        referred.entry(site).or_default().insert(r.referral_person);
    }
    let mut out = BTreeMap::new();
    for site in [Site::Destination, Site::Origin] {
        let e = elicited.get(&site).cloned().unwrap_or_default();
        let r = referred.get(&site).cloned().unwrap_or_default();
        let both = e.intersection(&r).count();
        out.insert(
            site,
            MaskingDiagnostics {
                elicited: e.len(),
                referred: r.len(),
                elicited_and_referred: both,
                masked_share: if e.is_empty() {
                    None
                } else {
                    Some(1.0 - both as f64 / e.len() as f64)
                },
                referral_overlap_share: if r.is_empty() {
                    None
                } else {
                    Some(both as f64 / r.len() as f64)
                },
            },
        );
    }
    out
}

/// Compare per-site sample age means and female shares against population
/// parameters. Deviations above `reference_ci` (a classic-survey confidence
/// half-width benchmark, in years or percentage points) are flagged.
pub fn representativeness_report(
    frame: &SampleFrame,
    params: &BTreeMap<Site, PopulationParams>,
    reference_ci: f64,
    log: Option<&StudyLog>,
) -> Result<EstimateReport> {
    let mut report = EstimateReport {
        reference_ci,
        ..EstimateReport::default()
    };
    for (&site, p) in params {
        let site_frame = frame.restrict_to_site(site);
        if site_frame.is_empty() {
            continue;
        }
        let age_naive = naive_estimate(&site_frame, age_value)?;
        let age_weighted = rds2_estimate(&site_frame, age_value).ok();
        report.lines.push(EstimateLine {
            site,
            attribute: "age_mean".into(),
            naive: age_naive,
            weighted: age_weighted,
            parameter: p.age_mean,
            deviation: age_naive - p.age_mean,
            flagged: (age_naive - p.age_mean).abs() > reference_ci,
        });
        let sex_naive = naive_estimate(&site_frame, female_indicator)?;
        let sex_weighted = rds2_estimate(&site_frame, female_indicator).ok();
        // Shares are compared in percentage points.
        let dev_points = (sex_naive - p.female_share) * 100.0;
        report.lines.push(EstimateLine {
            site,
            attribute: "female_share".into(),
            naive: sex_naive,
            weighted: sex_weighted,
            parameter: p.female_share,
            deviation: dev_points,
            flagged: dev_points.abs() > reference_ci,
        });
    }
    if let Some(log) = log {
        report.diagnostics = masking_diagnostics(log);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldwork::{run_study, StudyConfig};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn row(person: u32, site: Site, sex: Sex, age: u32, degree: f64) -> FrameRow {
        FrameRow {
            person: PersonId(person),
            site,
            sex,
            age,
            migrant_type: MigrantType::Migrant,
            degree,
        }
    }

    #[test]
    fn naive_proportion_hand_cases() {
        let frame = SampleFrame {
            rows: vec![
                row(0, Site::Origin, Sex::Female, 30, 2.0),
                row(1, Site::Origin, Sex::Female, 40, 2.0),
                row(2, Site::Origin, Sex::Female, 50, 2.0),
                row(3, Site::Origin, Sex::Male, 60, 2.0),
            ],
        };
        assert_eq!(naive_estimate(&frame, female_indicator).unwrap(), 0.75);
        assert_eq!(naive_estimate(&frame, age_value).unwrap(), 45.0);
        // Constant attribute gives that constant.
        assert_eq!(naive_estimate(&frame, |_| 7.5).unwrap(), 7.5);
        // Empty frame is an error.
        assert!(naive_estimate(&SampleFrame::default(), age_value).is_err());
    }

    #[test]
    fn naive_matches_independent_fold() {
        let mut rng = stream_rng(61, 30);
        let rows: Vec<FrameRow> = (0..200)
            .map(|i| {
                row(
                    i,
                    Site::Origin,
                    if rng.gen_bool(0.5) { Sex::Female } else { Sex::Male },
                    rng.gen_range(18..90),
                    rng.gen_range(1..40) as f64,
                )
            })
            .collect();
        let frame = SampleFrame { rows };
        let naive = naive_estimate(&frame, age_value).unwrap();
        let mut total = 0.0;
        for r in &frame.rows {
            total += r.age as f64;
        }
        assert!((naive - total / 200.0).abs() < 1e-12);
    }

    #[test]
    fn equal_degrees_make_weighted_equal_naive() {
        let frame = SampleFrame {
            rows: (0..10)
                .map(|i| {
                    row(
                        i,
                        Site::Origin,
                        if i < 4 { Sex::Female } else { Sex::Male },
                        20 + i,
                        5.0,
                    )
                })
                .collect(),
        };
        let naive = naive_estimate(&frame, female_indicator).unwrap();
        let weighted = rds2_estimate(&frame, female_indicator).unwrap();
        assert_eq!(naive, weighted);
    }

    #[test]
    fn two_respondent_hand_case_gives_two_thirds() {
        let frame = SampleFrame {
            rows: vec![
                row(0, Site::Origin, Sex::Female, 30, 1.0), // group A
                row(1, Site::Origin, Sex::Male, 40, 2.0),   // group B
            ],
        };
        let p = rds2_estimate(&frame, female_indicator).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degree_below_one_violates_assumption() {
        let frame = SampleFrame {
            rows: vec![row(0, Site::Origin, Sex::Female, 30, 0.0)],
        };
        let err = rds2_estimate(&frame, female_indicator).unwrap_err();
        assert!(err.to_string().contains("embeddedness"), "{err}");
    }

    #[test]
    fn weights_are_scale_invariant() {
        let base = SampleFrame {
            rows: vec![
                row(0, Site::Origin, Sex::Female, 30, 1.0),
                row(1, Site::Origin, Sex::Male, 40, 3.0),
                row(2, Site::Origin, Sex::Female, 50, 7.0),
            ],
        };
        let scaled = SampleFrame {
            rows: base
                .rows
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.degree *= 13.0;
                    r
                })
                .collect(),
        };
        let a = rds2_estimate(&base, female_indicator).unwrap();
        let b = rds2_estimate(&scaled, female_indicator).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&a));
    }

    /// Degree-proportional sampling bias: the weighted estimator must beat
    /// the naive one on absolute bias for the sex share in most replicates.
    #[test]
    fn weighted_beats_naive_under_degree_biased_sampling() {
        let replicates = 60;
        let mut weighted_wins = 0;
        for rep in 0..replicates {
            let mut rng = stream_rng(62 + rep, 31);
            // Population: 10,000 persons; females have mean degree 4,
            // males 12, so naive degree-biased samples overcount males.
            let n = 10_000usize;
            let true_female_share = 0.5;
            let persons: Vec<(Sex, f64)> = (0..n)
                .map(|_| {
                    let sex = if rng.gen_bool(true_female_share) {
                        Sex::Female
                    } else {
                        Sex::Male
                    };
                    let degree = match sex {
                        Sex::Female => rng.gen_range(1..=7) as f64,
                        Sex::Male => rng.gen_range(7..=17) as f64,
                    };
                    (sex, degree)
                })
                .collect();
            let total_degree: f64 = persons.iter().map(|p| p.1).sum();
            // Draw 300 respondents with probability proportional to degree.
            let mut rows = Vec::new();
            for i in 0..300 {
                let mut u = rng.gen::<f64>() * total_degree;
                let mut chosen = persons.len() - 1;
                for (idx, p) in persons.iter().enumerate() {
                    if u < p.1 {
                        chosen = idx;
                        break;
                    }
                    u -= p.1;
                }
                rows.push(row(
                    i,
                    Site::Origin,
                    persons[chosen].0,
                    30,
                    persons[chosen].1,
                ));
            }
            let frame = SampleFrame { rows };
            let naive = naive_estimate(&frame, female_indicator).unwrap();
            let weighted = rds2_estimate(&frame, female_indicator).unwrap();
            if (weighted - true_female_share).abs() < (naive - true_female_share).abs() {
                weighted_wins += 1;
            }
        }
        assert!(
            weighted_wins as f64 >= 0.8 * replicates as f64,
            "{weighted_wins}/{replicates}"
        );
    }

    /// Uniform random sampling (no link-tracing): the naive estimator is
    /// unbiased within Monte-Carlo tolerance.
    #[test]
    fn naive_is_unbiased_under_uniform_sampling() {
        let mut pop_rng = stream_rng(64, 32);
        let n = 5_000usize;
        let population: Vec<Sex> = (0..n)
            .map(|_| if pop_rng.gen_bool(0.5) { Sex::Female } else { Sex::Male })
            .collect();
        let truth =
            population.iter().filter(|s| **s == Sex::Female).count() as f64 / n as f64;

        let replicates = 500;
        let sample_size = 120;
        let mut total = 0.0;
        for rep in 0..replicates {
            let mut rng = stream_rng(65 + rep, 33);
            let rows = (0..sample_size)
                .map(|i| row(i, Site::Origin, population[rng.gen_range(0..n)], 30, 3.0))
                .collect();
            total += naive_estimate(&SampleFrame { rows }, female_indicator).unwrap();
        }
        let mean = total / replicates as f64;
        // SE of the mean of replicate proportions.
        let se = (truth * (1.0 - truth) / (sample_size as f64 * replicates as f64)).sqrt();
        assert!(
            (mean - truth).abs() < 4.0 * se,
            "naive mean {mean} vs population share {truth} (4se {})",
            4.0 * se
        );
    }

    #[test]
    fn report_flags_only_large_deviations() {
        let frame = SampleFrame {
            rows: vec![
                row(0, Site::Destination, Sex::Female, 44, 5.0),
                row(1, Site::Destination, Sex::Female, 44, 5.0),
                row(2, Site::Destination, Sex::Male, 44, 5.0),
                row(3, Site::Destination, Sex::Male, 44, 5.0),
            ],
        };
        let params: BTreeMap<Site, PopulationParams> = [(
            Site::Destination,
            PopulationParams {
                size: 16_840,
                age_mean: 41.0,
                female_share: 0.5,
            },
        )]
        .into_iter()
        .collect();
        let report = representativeness_report(&frame, &params, 8.0, None).unwrap();
        let age = report
            .lines
            .iter()
            .find(|l| l.attribute == "age_mean")
            .unwrap();
        assert_eq!(age.deviation, 3.0);
        assert!(!age.flagged, "+3 years within the reference CI of 8");
        let sex = report
            .lines
            .iter()
            .find(|l| l.attribute == "female_share")
            .unwrap();
        assert_eq!(sex.deviation, 0.0);
        assert!(!sex.flagged);
    }

    #[test]
    fn masking_diagnostic_matches_set_scan() {
        let graph = crate::testutil::test_graph(63, 220, 120, 0.08);
        let config = StudyConfig {
            n_seeds: 5,
            target_interviews: 80,
            ..StudyConfig::default()
        };
        let log = run_study(&graph, &config, &mut stream_rng(63, 6)).unwrap();
        let diags = masking_diagnostics(&log);

        // Set-scan oracle per site.
        for site in [Site::Destination, Site::Origin] {
            let respondents: BTreeSet<_> = log
                .interviews
                .iter()
                .filter(|iv| iv.site == site)
                .map(|iv| iv.respondent_obs)
                .collect();
            let mut elicited: BTreeSet<PersonId> = BTreeSet::new();
            for pnet in &log.pnets {
                if respondents.contains(&pnet.respondent_obs) {
                    elicited.extend(pnet.alters.iter().map(|a| a.person));
                }
            }
            let mut referred: BTreeSet<PersonId> = BTreeSet::new();
            for r in &log.referrals {
                if respondents.contains(&r.referee_obs) {
                    referred.insert(r.referral_person);
                }
            }
            let overlap = elicited.intersection(&referred).count();
            let expected = 1.0 - overlap as f64 / elicited.len() as f64;
            let d = diags[&site];
            assert_eq!(d.elicited, elicited.len());
            assert_eq!(d.referred, referred.len());
            assert!((d.masked_share.unwrap() - expected).abs() < 1e-12);
        }
    }
}
