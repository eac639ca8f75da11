//! Run configuration.
//!
//! A run is described by a line-oriented `key = value` file with dotted
//! section prefixes (diff-friendly). Unknown keys are rejected with the
//! offending key named; duplicate keys are errors; the master RNG seed is
//! mandatory — there is no wall-clock seeding. A named preset can seed the
//! population, tie and protocol parameters, with later keys overriding it.

use std::collections::BTreeMap;

use crate::ergm::{SolverOptions, TermSpec};
use crate::error::Error;
use crate::fieldwork::StudyConfig;
use crate::identity::LinkPolicy;
use crate::netstats::NodeAttr;
use crate::rdsest::{DegreeSource, PopulationParams};
use crate::synthpop::{CategoricalDist, KinRule, PopulationConfig, SiteParams, TieConfig};
use crate::Result;

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub n_permutations: usize,
    pub ei_attrs: Vec<NodeAttr>,
    pub ergm_terms: Vec<TermSpec>,
    pub ergm_solver: SolverOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            n_permutations: 5000,
            ei_attrs: vec![NodeAttr::Sex, NodeAttr::Site],
            ergm_terms: vec![
                TermSpec::Edges,
                TermSpec::UniformHomophily(NodeAttr::Sex),
                TermSpec::UniformHomophily(NodeAttr::Site),
                TermSpec::Gwdsp { decay: 0.5 },
            ],
            ergm_solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateConfig {
    /// Classic-survey confidence half-width benchmark (years or percentage
    /// points) above which deviations are flagged.
    pub reference_ci: f64,
    pub degree_source: DegreeSource,
    pub destination_params: PopulationParams,
    pub origin_params: PopulationParams,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            reference_ci: 8.0,
            degree_source: DegreeSource::Elicited,
            destination_params: PopulationParams {
                size: 16_840,
                age_mean: 41.0,
                female_share: 0.53,
            },
            origin_params: PopulationParams {
                size: 406_598,
                age_mean: 48.0,
                female_share: 0.51,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub rng_seed: u64,
    pub population: PopulationConfig,
    pub ties: TieConfig,
    pub study: StudyConfig,
    pub link: LinkPolicy,
    pub analysis: AnalysisConfig,
    pub estimate: EstimateConfig,
}

fn default_religion() -> CategoricalDist {
    CategoricalDist::new(&[
        ("orthodox", 0.90),
        ("pentecostal", 0.02),
        ("baptist", 0.02),
        ("adventist", 0.02),
        ("none", 0.04),
    ])
}

fn default_education() -> CategoricalDist {
    CategoricalDist::new(&[
        ("primary", 0.12),
        ("lower_secondary", 0.28),
        ("high_school", 0.35),
        ("post_secondary", 0.12),
        ("higher", 0.13),
    ])
}

fn default_work() -> CategoricalDist {
    CategoricalDist::new(&[
        ("employed", 0.48),
        ("self_employed", 0.07),
        ("unemployed", 0.06),
        ("retired", 0.09),
        ("student", 0.20),
        ("inactive", 0.10),
    ])
}

/// Tie probabilities from target mean degrees. The sex-homophily multiplier
/// scales same-sex dyads, so the base probability is deflated by the
/// balanced-sex average factor (1 + m)/2 to keep the intended mean degree.
fn tie_probs(
    mean_deg: [f64; 3],        // within origin / destination / other
    cross: [f64; 3],           // origin-destination, origin-other, destination-other
    sizes: [usize; 3],
    multiplier: f64,
) -> TieConfig {
    let deflate = 2.0 / (1.0 + multiplier);
    let within = |deg: f64, n: usize| {
        if n < 2 {
            0.0
        } else {
            (deg / (n as f64 - 1.0) * deflate).min(1.0)
        }
    };
    // Cross probabilities take the degree target of the SMALLER side's
    // members toward the larger pool.
    let between = |deg_small_side: f64, partner_pool: usize| {
        if partner_pool == 0 {
            0.0
        } else {
            (deg_small_side / partner_pool as f64 * deflate).min(1.0)
        }
    };
    TieConfig {
        p_within: [
            within(mean_deg[0], sizes[0]),
            within(mean_deg[1], sizes[1]),
            within(mean_deg[2], sizes[2]),
        ],
        p_between: [
            between(cross[0], sizes[0]),
            between(cross[1], sizes[2]),
            between(cross[2], sizes[2]),
        ],
        sex_homophily_multiplier: multiplier,
        friend_share: 0.55,
    }
}

impl RunConfig {
    /// Tiny population for smoke runs and CI.
    pub fn demo(rng_seed: u64) -> RunConfig {
        let population = PopulationConfig {
            origin: SiteParams {
                size: 1200,
                female_share: 0.51,
                age_mean: 48.0,
                age_sd: 17.0,
            },
            destination: SiteParams {
                size: 500,
                female_share: 0.53,
                age_mean: 41.0,
                age_sd: 12.2,
            },
            other: SiteParams {
                size: 150,
                female_share: 0.50,
                age_mean: 40.0,
                age_sd: 12.0,
            },
            religion: default_religion(),
            education: default_education(),
            work: default_work(),
            returnee_share: 0.12,
            kin: KinRule {
                size_mean: 4.0,
                cross_corridor_share: 0.28,
                elsewhere_share: 0.10,
            },
            name_pool_size: 8_000,
            phone_missing_rate: 0.05,
        };
        let ties = tie_probs(
            [8.0, 5.6, 0.0],
            [1.8, 0.9, 0.9],
            [1200, 500, 150],
            1.6,
        );
        let study = StudyConfig {
            n_seeds: 4,
            target_interviews: 60,
            ..StudyConfig::default()
        };
        RunConfig {
            rng_seed,
            population,
            ties,
            study,
            link: LinkPolicy::default(),
            analysis: AnalysisConfig {
                n_permutations: 500,
                ..AnalysisConfig::default()
            },
            estimate: EstimateConfig {
                destination_params: PopulationParams {
                    size: 500,
                    age_mean: 41.0,
                    female_share: 0.53,
                },
                origin_params: PopulationParams {
                    size: 1200,
                    age_mean: 48.0,
                    female_share: 0.51,
                },
                ..EstimateConfig::default()
            },
        }
    }

    /// The full-protocol preset on a mid-size sending community: the
    /// destination enclave at its reference size, the origin modeled as the
    /// sending community the fieldwork actually reaches. Suitable for
    /// replicate batches.
    pub fn calibration(rng_seed: u64) -> RunConfig {
        let sizes = [30_000usize, 16_840, 2_000];
        let population = PopulationConfig {
            origin: SiteParams {
                size: sizes[0],
                female_share: 0.51,
                age_mean: 48.0,
                age_sd: 17.0,
            },
            destination: SiteParams {
                size: sizes[1],
                female_share: 0.53,
                age_mean: 41.0,
                age_sd: 12.2,
            },
            other: SiteParams {
                size: sizes[2],
                female_share: 0.50,
                age_mean: 40.0,
                age_sd: 12.0,
            },
            religion: default_religion(),
            education: default_education(),
            work: default_work(),
            returnee_share: 0.12,
            kin: KinRule {
                size_mean: 5.2,
                cross_corridor_share: 0.28,
                elsewhere_share: 0.12,
            },
            name_pool_size: 10_000,
            phone_missing_rate: 0.05,
        };
        let ties = tie_probs([9.5, 7.5, 0.0], [2.4, 0.9, 0.9], sizes, 1.6);
        RunConfig {
            rng_seed,
            population,
            ties,
            study: StudyConfig::default(),
            link: LinkPolicy::default(),
            analysis: AnalysisConfig::default(),
            estimate: EstimateConfig::default(),
        }
    }

    /// Origin county at its full population-of-interest size. Heavier than
    /// `calibration`; meant for one-shot runs.
    pub fn full_scale(rng_seed: u64) -> RunConfig {
        let mut config = RunConfig::calibration(rng_seed);
        let sizes = [406_598usize, 16_840, 8_000];
        config.population.origin.size = sizes[0];
        config.population.destination.size = sizes[1];
        config.population.other.size = sizes[2];
        // At county scale the corridor must carry the chains: with quota 3
        // and participation near 0.28 neither site is self-sustaining, so
        // migrants need a deep contact pool back home to keep the two-site
        // process supercritical.
        config.ties = tie_probs([9.5, 7.5, 0.0], [13.0, 0.9, 0.9], sizes, 1.6);
        config
    }

    /// Variant with the destination 18+ census count instead of the
    /// population-of-interest size.
    pub fn full_scale_census(rng_seed: u64) -> RunConfig {
        let mut config = RunConfig::full_scale(rng_seed);
        let sizes = [406_598usize, 30_880, 8_000];
        config.population.destination.size = sizes[1];
        config.ties = tie_probs([9.5, 7.5, 0.0], [13.0, 0.9, 0.9], sizes, 1.6);
        config.estimate.destination_params.size = 30_880;
        config
    }

    pub fn preset(name: &str, rng_seed: u64) -> Result<RunConfig> {
        match name {
            "demo" => Ok(RunConfig::demo(rng_seed)),
            "calibration" => Ok(RunConfig::calibration(rng_seed)),
            "full-scale" => Ok(RunConfig::full_scale(rng_seed)),
            "full-scale-census" => Ok(RunConfig::full_scale_census(rng_seed)),
            _ => Err(Error::config(format!("unknown preset `{name}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.ties.validate()?;
        self.study.validate()?;
        if self.estimate.reference_ci < 0.0 {
            return Err(Error::config("estimate.reference_ci negative"));
        }
        if self.analysis.n_permutations == 0 {
            return Err(Error::config("analysis.n_permutations is zero"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parsing

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: `{value}` is not an integer")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: `{value}` is not an integer")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: `{value}` is not a number")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: `{value}` is not a boolean")))
}

fn parse_dist(key: &str, value: &str) -> Result<CategoricalDist> {
    let mut labels = Vec::new();
    let mut probs = Vec::new();
    for part in value.split(',') {
        let (label, prob) = part
            .split_once(':')
            .ok_or_else(|| Error::config(format!("{key}: expected label:prob, got `{part}`")))?;
        labels.push(label.trim().to_string());
        probs.push(parse_f64(key, prob.trim())?);
    }
    Ok(CategoricalDist { labels, probs })
}

/// Term syntax: `edges`, `uniform(attr)`, `differential(attr:category)`,
/// `gwdsp` or `gwdsp(decay)`.
fn parse_terms(key: &str, value: &str) -> Result<Vec<TermSpec>> {
    let mut terms = Vec::new();
    for raw in value.split(',') {
        let token = raw.trim();
        let term = if token == "edges" {
            TermSpec::Edges
        } else if let Some(inner) = token.strip_prefix("uniform(").and_then(|s| s.strip_suffix(')'))
        {
            TermSpec::UniformHomophily(inner.parse()?)
        } else if let Some(inner) = token
            .strip_prefix("differential(")
            .and_then(|s| s.strip_suffix(')'))
        {
            let (attr, cat) = inner.split_once(':').ok_or_else(|| {
                Error::config(format!("{key}: differential needs attr:category, got `{inner}`"))
            })?;
            TermSpec::DifferentialHomophily(attr.parse()?, cat.to_string())
        } else if token == "gwdsp" {
            TermSpec::Gwdsp { decay: 0.5 }
        } else if let Some(inner) = token.strip_prefix("gwdsp(").and_then(|s| s.strip_suffix(')')) {
            TermSpec::Gwdsp {
                decay: parse_f64(key, inner)?,
            }
        } else {
            return Err(Error::config(format!("{key}: unknown term `{token}`")));
        };
        terms.push(term);
    }
    Ok(terms)
}

/// Parse a configuration file body. `#` starts a comment; blank lines are
/// skipped; `population.preset` must precede keys it would overwrite.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut seed: Option<u64> = None;
    let mut config = RunConfig::demo(0);
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();

    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}: expected `key = value`", line_no + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if let Some(first) = seen.insert(key.to_string(), line_no + 1) {
            return Err(Error::config(format!(
                "duplicate key `{key}` (lines {first} and {})",
                line_no + 1
            )));
        }
        apply_key(&mut config, &mut seed, key, value)?;
    }
    config.rng_seed = seed.ok_or_else(|| {
        Error::config("rng_seed is mandatory: runs must not seed from the wall clock")
    })?;
    config.validate()?;
    Ok(config)
}

fn apply_key(
    config: &mut RunConfig,
    seed: &mut Option<u64>,
    key: &str,
    value: &str,
) -> Result<()> {
    match key {
        "rng_seed" => *seed = Some(parse_u64(key, value)?),
        "population.preset" => {
            let current_seed = config.rng_seed;
            *config = RunConfig::preset(value, current_seed)?;
        }
        "population.origin.size" => config.population.origin.size = parse_usize(key, value)?,
        "population.origin.female_share" => {
            config.population.origin.female_share = parse_f64(key, value)?
        }
        "population.origin.age_mean" => config.population.origin.age_mean = parse_f64(key, value)?,
        "population.origin.age_sd" => config.population.origin.age_sd = parse_f64(key, value)?,
        "population.destination.size" => {
            config.population.destination.size = parse_usize(key, value)?
        }
        "population.destination.female_share" => {
            config.population.destination.female_share = parse_f64(key, value)?
        }
        "population.destination.age_mean" => {
            config.population.destination.age_mean = parse_f64(key, value)?
        }
        "population.destination.age_sd" => {
            config.population.destination.age_sd = parse_f64(key, value)?
        }
        "population.other.size" => config.population.other.size = parse_usize(key, value)?,
        "population.other.female_share" => {
            config.population.other.female_share = parse_f64(key, value)?
        }
        "population.other.age_mean" => config.population.other.age_mean = parse_f64(key, value)?,
        "population.other.age_sd" => config.population.other.age_sd = parse_f64(key, value)?,
        "population.religion" => config.population.religion = parse_dist(key, value)?,
        "population.education" => config.population.education = parse_dist(key, value)?,
        "population.work" => config.population.work = parse_dist(key, value)?,
        "population.returnee_share" => {
            config.population.returnee_share = parse_f64(key, value)?
        }
        "population.kin.size_mean" => config.population.kin.size_mean = parse_f64(key, value)?,
        "population.kin.cross_corridor_share" => {
            config.population.kin.cross_corridor_share = parse_f64(key, value)?
        }
        "population.kin.elsewhere_share" => {
            config.population.kin.elsewhere_share = parse_f64(key, value)?
        }
        "population.name_pool_size" => {
            config.population.name_pool_size = parse_usize(key, value)?
        }
        "population.phone_missing_rate" => {
            config.population.phone_missing_rate = parse_f64(key, value)?
        }
        "ties.within.origin" => config.ties.p_within[0] = parse_f64(key, value)?,
        "ties.within.destination" => config.ties.p_within[1] = parse_f64(key, value)?,
        "ties.within.other" => config.ties.p_within[2] = parse_f64(key, value)?,
        "ties.between.origin_destination" => config.ties.p_between[0] = parse_f64(key, value)?,
        "ties.between.origin_other" => config.ties.p_between[1] = parse_f64(key, value)?,
        "ties.between.destination_other" => config.ties.p_between[2] = parse_f64(key, value)?,
        "ties.sex_homophily" => config.ties.sex_homophily_multiplier = parse_f64(key, value)?,
        "ties.friend_share" => config.ties.friend_share = parse_f64(key, value)?,
        "study.n_seeds" => config.study.n_seeds = parse_usize(key, value)?,
        "study.referral_quota_per_site" => {
            config.study.referral_quota_per_site = parse_usize(key, value)?
        }
        "study.target_interviews" => config.study.target_interviews = parse_usize(key, value)?,
        "study.participation.origin_male" => {
            config.study.participation.origin_male = parse_f64(key, value)?
        }
        "study.participation.origin_female" => {
            config.study.participation.origin_female = parse_f64(key, value)?
        }
        "study.participation.destination_male" => {
            config.study.participation.destination_male = parse_f64(key, value)?
        }
        "study.participation.destination_female" => {
            config.study.participation.destination_female = parse_f64(key, value)?
        }
        "study.masking.origin" => config.study.masking_origin = parse_f64(key, value)?,
        "study.masking.destination" => config.study.masking_destination = parse_f64(key, value)?,
        "study.alter_quotas.friends_current" => {
            config.study.alter_quotas.friends_current = parse_usize(key, value)?
        }
        "study.alter_quotas.kin_current" => {
            config.study.alter_quotas.kin_current = parse_usize(key, value)?
        }
        "study.alter_quotas.returnees" => {
            config.study.alter_quotas.returnees = parse_usize(key, value)?
        }
        "study.alter_quotas.kin_cross" => {
            config.study.alter_quotas.kin_cross = parse_usize(key, value)?
        }
        "study.alter_quotas.friends_cross" => {
            config.study.alter_quotas.friends_cross = parse_usize(key, value)?
        }
        "study.alter_quotas.kin_elsewhere" => {
            config.study.alter_quotas.kin_elsewhere = parse_usize(key, value)?
        }
        "study.alter_quotas.friends_elsewhere" => {
            config.study.alter_quotas.friends_elsewhere = parse_usize(key, value)?
        }
        "study.alter_sample_size" => {
            config.study.alter_alter_sample_size = parse_usize(key, value)?
        }
        "study.nomination_sex_weight" => {
            config.study.nomination_sex_weight = parse_f64(key, value)?
        }
        "study.reporting_noise" => config.study.reporting_noise = parse_f64(key, value)?,
        "study.perception_noise" => config.study.perception_noise = parse_f64(key, value)?,
        "study.alias_noise" => config.study.alias_noise = parse_f64(key, value)?,
        "link.fuzzy_edit_distance" => {
            let d = parse_usize(key, value)?;
            if d > 1 {
                return Err(Error::config(format!("{key}: only 0 or 1 supported")));
            }
            config.link.fuzzy_edit_distance = d as u8;
        }
        "link.require_attribute_consistency" => {
            config.link.require_attribute_consistency = parse_bool(key, value)?
        }
        "analysis.n_permutations" => {
            config.analysis.n_permutations = parse_usize(key, value)?
        }
        "analysis.ei_attrs" => {
            config.analysis.ei_attrs = value
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<NodeAttr>>>()?;
        }
        "analysis.ergm.terms" => config.analysis.ergm_terms = parse_terms(key, value)?,
        "analysis.ergm.max_iter" => {
            config.analysis.ergm_solver.max_iter = parse_usize(key, value)?
        }
        "analysis.ergm.tol" => config.analysis.ergm_solver.tol = parse_f64(key, value)?,
        "estimate.reference_ci" => config.estimate.reference_ci = parse_f64(key, value)?,
        "estimate.degree_source" => config.estimate.degree_source = value.parse()?,
        "estimate.population.destination.size" => {
            config.estimate.destination_params.size = parse_u64(key, value)?
        }
        "estimate.population.destination.age_mean" => {
            config.estimate.destination_params.age_mean = parse_f64(key, value)?
        }
        "estimate.population.destination.female_share" => {
            config.estimate.destination_params.female_share = parse_f64(key, value)?
        }
        "estimate.population.origin.size" => {
            config.estimate.origin_params.size = parse_u64(key, value)?
        }
        "estimate.population.origin.age_mean" => {
            config.estimate.origin_params.age_mean = parse_f64(key, value)?
        }
        "estimate.population.origin.female_share" => {
            config.estimate.origin_params.female_share = parse_f64(key, value)?
        }
        _ => return Err(Error::config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// Canonical key = value rendering of the resolved configuration, for the
/// manifest snapshot. Keys appear in a fixed order; parsing the output
/// reproduces the configuration.
pub fn to_canonical_string(config: &RunConfig) -> String {
    let mut out = String::new();
    let dist = |d: &CategoricalDist| {
        d.labels
            .iter()
            .zip(&d.probs)
            .map(|(l, p)| format!("{l}:{p}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let terms = |ts: &[TermSpec]| {
        ts.iter()
            .map(|t| match t {
                TermSpec::Edges => "edges".to_string(),
                TermSpec::UniformHomophily(a) => format!("uniform({a})"),
                TermSpec::DifferentialHomophily(a, c) => format!("differential({a}:{c})"),
                TermSpec::Gwdsp { decay } => format!("gwdsp({decay})"),
            })
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("rng_seed", config.rng_seed.to_string());
    for (name, p) in [
        ("origin", &config.population.origin),
        ("destination", &config.population.destination),
        ("other", &config.population.other),
    ] {
        push(&format!("population.{name}.size"), p.size.to_string());
        push(
            &format!("population.{name}.female_share"),
            p.female_share.to_string(),
        );
        push(&format!("population.{name}.age_mean"), p.age_mean.to_string());
        push(&format!("population.{name}.age_sd"), p.age_sd.to_string());
    }
    push("population.religion", dist(&config.population.religion));
    push("population.education", dist(&config.population.education));
    push("population.work", dist(&config.population.work));
    push(
        "population.returnee_share",
        config.population.returnee_share.to_string(),
    );
    push(
        "population.kin.size_mean",
        config.population.kin.size_mean.to_string(),
    );
    push(
        "population.kin.cross_corridor_share",
        config.population.kin.cross_corridor_share.to_string(),
    );
    push(
        "population.kin.elsewhere_share",
        config.population.kin.elsewhere_share.to_string(),
    );
    push(
        "population.name_pool_size",
        config.population.name_pool_size.to_string(),
    );
    push(
        "population.phone_missing_rate",
        config.population.phone_missing_rate.to_string(),
    );
    push("ties.within.origin", config.ties.p_within[0].to_string());
    push("ties.within.destination", config.ties.p_within[1].to_string());
    push("ties.within.other", config.ties.p_within[2].to_string());
    push(
        "ties.between.origin_destination",
        config.ties.p_between[0].to_string(),
    );
    push("ties.between.origin_other", config.ties.p_between[1].to_string());
    push(
        "ties.between.destination_other",
        config.ties.p_between[2].to_string(),
    );
    push(
        "ties.sex_homophily",
        config.ties.sex_homophily_multiplier.to_string(),
    );
    push("ties.friend_share", config.ties.friend_share.to_string());
    push("study.n_seeds", config.study.n_seeds.to_string());
    push(
        "study.referral_quota_per_site",
        config.study.referral_quota_per_site.to_string(),
    );
    push(
        "study.target_interviews",
        config.study.target_interviews.to_string(),
    );
    push(
        "study.participation.origin_male",
        config.study.participation.origin_male.to_string(),
    );
    push(
        "study.participation.origin_female",
        config.study.participation.origin_female.to_string(),
    );
    push(
        "study.participation.destination_male",
        config.study.participation.destination_male.to_string(),
    );
    push(
        "study.participation.destination_female",
        config.study.participation.destination_female.to_string(),
    );
    push("study.masking.origin", config.study.masking_origin.to_string());
    push(
        "study.masking.destination",
        config.study.masking_destination.to_string(),
    );
    let q = &config.study.alter_quotas;
    push("study.alter_quotas.friends_current", q.friends_current.to_string());
    push("study.alter_quotas.kin_current", q.kin_current.to_string());
    push("study.alter_quotas.returnees", q.returnees.to_string());
    push("study.alter_quotas.kin_cross", q.kin_cross.to_string());
    push("study.alter_quotas.friends_cross", q.friends_cross.to_string());
    push("study.alter_quotas.kin_elsewhere", q.kin_elsewhere.to_string());
    push(
        "study.alter_quotas.friends_elsewhere",
        q.friends_elsewhere.to_string(),
    );
    push(
        "study.alter_sample_size",
        config.study.alter_alter_sample_size.to_string(),
    );
    push(
        "study.nomination_sex_weight",
        config.study.nomination_sex_weight.to_string(),
    );
    push("study.reporting_noise", config.study.reporting_noise.to_string());
    push("study.perception_noise", config.study.perception_noise.to_string());
    push("study.alias_noise", config.study.alias_noise.to_string());
    push(
        "link.fuzzy_edit_distance",
        config.link.fuzzy_edit_distance.to_string(),
    );
    push(
        "link.require_attribute_consistency",
        config.link.require_attribute_consistency.to_string(),
    );
    push(
        "analysis.n_permutations",
        config.analysis.n_permutations.to_string(),
    );
    push(
        "analysis.ei_attrs",
        config
            .analysis
            .ei_attrs
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    push("analysis.ergm.terms", terms(&config.analysis.ergm_terms));
    push(
        "analysis.ergm.max_iter",
        config.analysis.ergm_solver.max_iter.to_string(),
    );
    push("analysis.ergm.tol", config.analysis.ergm_solver.tol.to_string());
    push("estimate.reference_ci", config.estimate.reference_ci.to_string());
    push(
        "estimate.degree_source",
        match config.estimate.degree_source {
            DegreeSource::Elicited => "elicited".to_string(),
            DegreeSource::True => "true".to_string(),
        },
    );
    for (name, p) in [
        ("destination", &config.estimate.destination_params),
        ("origin", &config.estimate.origin_params),
    ] {
        push(&format!("estimate.population.{name}.size"), p.size.to_string());
        push(
            &format!("estimate.population.{name}.age_mean"),
            p.age_mean.to_string(),
        );
        push(
            &format!("estimate.population.{name}.female_share"),
            p.female_share.to_string(),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = parse_config("rng_seed = 42\npopulation.preset = demo\n").unwrap();
        assert_eq!(config.rng_seed, 42);
        assert_eq!(config.study.n_seeds, 4);
        assert_eq!(config.population.destination.size, 500);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let err = parse_config("population.preset = demo\n").unwrap_err();
        assert!(err.to_string().contains("rng_seed"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = parse_config("rng_seed = 1\nstudy.bogus_knob = 3\n").unwrap_err();
        assert!(err.to_string().contains("study.bogus_knob"), "{err}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse_config("rng_seed = 1\nstudy.n_seeds = 3\nstudy.n_seeds = 5\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn overrides_apply_after_preset() {
        let text = "rng_seed = 7\npopulation.preset = demo\nstudy.n_seeds = 9\nstudy.target_interviews = 303\n";
        let config = parse_config(text).unwrap();
        assert_eq!(config.study.n_seeds, 9);
        assert_eq!(config.study.target_interviews, 303);
        // Untouched preset values survive.
        assert_eq!(config.population.origin.size, 1200);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = "# a study\nrng_seed = 3 # inline\n\nstudy.n_seeds = 2  \n";
        let config = parse_config(text).unwrap();
        assert_eq!(config.study.n_seeds, 2);
    }

    #[test]
    fn invalid_values_name_the_key() {
        let err = parse_config("rng_seed = 1\nstudy.masking.origin = 1.4\n").unwrap_err();
        assert!(err.to_string().contains("masking"), "{err}");
        let err = parse_config("rng_seed = x\n").unwrap_err();
        assert!(err.to_string().contains("rng_seed"), "{err}");
    }

    #[test]
    fn ergm_term_syntax_round_trips() {
        let text = "rng_seed = 1\nanalysis.ergm.terms = edges, uniform(sex), differential(site:origin), gwdsp(0.25)\n";
        let config = parse_config(text).unwrap();
        assert_eq!(config.analysis.ergm_terms.len(), 4);
        assert_eq!(
            config.analysis.ergm_terms[2],
            TermSpec::DifferentialHomophily(NodeAttr::Site, "origin".into())
        );
        assert_eq!(config.analysis.ergm_terms[3], TermSpec::Gwdsp { decay: 0.25 });
    }

    #[test]
    fn canonical_string_round_trips() {
        let config = RunConfig::calibration(99);
        let text = to_canonical_string(&config);
        let back = parse_config(&text).unwrap();
        assert_eq!(back.rng_seed, 99);
        assert_eq!(back.population.origin.size, config.population.origin.size);
        assert_eq!(back.ties.p_within, config.ties.p_within);
        assert_eq!(back.study.masking_destination, config.study.masking_destination);
        assert_eq!(to_canonical_string(&back), text);
    }

    #[test]
    fn presets_are_valid() {
        for name in ["demo", "calibration", "full-scale", "full-scale-census"] {
            let config = RunConfig::preset(name, 1).unwrap();
            config.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(RunConfig::preset("nope", 1).is_err());
    }

    proptest! {
        /// Fuzzed unknown keys must always be rejected with the key named.
        #[test]
        fn fuzzed_unknown_keys_are_named(key in "[a-z]{1,12}\\.[a-z_]{1,16}") {
            prop_assume!(!known_key(&key));
            let text = format!("rng_seed = 1\n{key} = 1\n");
            let err = parse_config(&text).unwrap_err();
            prop_assert!(err.to_string().contains(&key));
        }
    }

    fn known_key(key: &str) -> bool {
        let mut config = RunConfig::demo(0);
        let mut seed = None;
        apply_key(&mut config, &mut seed, key, "1").is_ok()
    }
}
