//! The binational link-tracing protocol.
//!
//! Runs the referral study on a ground-truth graph: heterogeneous seed
//! selection in the destination site, per-respondent name-generator
//! elicitation with category caps, a random alter subsample for alter-alter
//! tie reports, masking-aware referral nomination with per-site quotas,
//! Bernoulli participation draws, wave bookkeeping in alternating site
//! batches, and the target-size stop rule.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::Error;
use crate::identity::{encode_alias, AliasCode, ObsId, ObsSource, ObservationRecord};
use crate::synthpop::{GroundTruthGraph, MigrantType, Person, PersonId, Sex, Site, TieKind};
use crate::Result;

// ---------------------------------------------------------------------------
// Configuration

/// Participation probability per (site, sex) cell. Defaults reproduce the
/// observed cell rates of the study this design follows: overall close
/// to 0.28.
#[derive(Debug, Clone, Copy)]
pub struct ParticipationMatrix {
    pub origin_male: f64,
    pub origin_female: f64,
    pub destination_male: f64,
    pub destination_female: f64,
}

impl Default for ParticipationMatrix {
    fn default() -> Self {
        // 83/262, 73/275, 40/174, 107/358.
        ParticipationMatrix {
            origin_male: 0.3168,
            origin_female: 0.2655,
            destination_male: 0.2299,
            destination_female: 0.2989,
        }
    }
}

impl ParticipationMatrix {
    pub fn constant(p: f64) -> Self {
        ParticipationMatrix {
            origin_male: p,
            origin_female: p,
            destination_male: p,
            destination_female: p,
        }
    }

    pub fn prob(&self, site: Site, sex: Sex) -> f64 {
        match (site, sex) {
            (Site::Origin, Sex::Male) => self.origin_male,
            (Site::Origin, Sex::Female) => self.origin_female,
            (Site::Destination, Sex::Male) => self.destination_male,
            (Site::Destination, Sex::Female) => self.destination_female,
            (Site::Other, _) => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("participation.origin_male", self.origin_male),
            ("participation.origin_female", self.origin_female),
            ("participation.destination_male", self.destination_male),
            ("participation.destination_female", self.destination_female),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Caps for the five name generators. Generators (d) and (e) each split into
/// a kin cap and a friends cap, so the theoretical maximum is 40 alters.
#[derive(Debug, Clone, Copy)]
pub struct AlterQuotas {
    /// (a) friends and acquaintances living in the current place.
    pub friends_current: usize,
    /// (b) kin living in the current place.
    pub kin_current: usize,
    /// (c) contacts who returned from the destination, regardless of kind.
    pub returnees: usize,
    /// (d) kin living in the other corridor site.
    pub kin_cross: usize,
    /// (d) friends and acquaintances living in the other corridor site.
    pub friends_cross: usize,
    /// (e) kin living elsewhere.
    pub kin_elsewhere: usize,
    /// (e) friends and acquaintances living elsewhere.
    pub friends_elsewhere: usize,
}

impl Default for AlterQuotas {
    fn default() -> Self {
        AlterQuotas {
            friends_current: 10,
            kin_current: 5,
            returnees: 5,
            kin_cross: 5,
            friends_cross: 5,
            kin_elsewhere: 5,
            friends_elsewhere: 5,
        }
    }
}

impl AlterQuotas {
    pub fn grand_cap(&self) -> usize {
        self.friends_current
            + self.kin_current
            + self.returnees
            + self.kin_cross
            + self.friends_cross
            + self.kin_elsewhere
            + self.friends_elsewhere
    }

    fn cap(&self, category: GeneratorCategory) -> usize {
        match category {
            GeneratorCategory::FriendsCurrent => self.friends_current,
            GeneratorCategory::KinCurrent => self.kin_current,
            GeneratorCategory::Returnees => self.returnees,
            GeneratorCategory::KinCross => self.kin_cross,
            GeneratorCategory::FriendsCross => self.friends_cross,
            GeneratorCategory::KinElsewhere => self.kin_elsewhere,
            GeneratorCategory::FriendsElsewhere => self.friends_elsewhere,
        }
    }
}

/// Name-generator category an alter was elicited under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GeneratorCategory {
    FriendsCurrent,
    KinCurrent,
    Returnees,
    KinCross,
    FriendsCross,
    KinElsewhere,
    FriendsElsewhere,
}

impl GeneratorCategory {
    pub const ALL: [GeneratorCategory; 7] = [
        GeneratorCategory::FriendsCurrent,
        GeneratorCategory::KinCurrent,
        GeneratorCategory::Returnees,
        GeneratorCategory::KinCross,
        GeneratorCategory::FriendsCross,
        GeneratorCategory::KinElsewhere,
        GeneratorCategory::FriendsElsewhere,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            GeneratorCategory::FriendsCurrent => "friends_current",
            GeneratorCategory::KinCurrent => "kin_current",
            GeneratorCategory::Returnees => "returnees",
            GeneratorCategory::KinCross => "kin_cross",
            GeneratorCategory::FriendsCross => "friends_cross",
            GeneratorCategory::KinElsewhere => "kin_elsewhere",
            GeneratorCategory::FriendsElsewhere => "friends_elsewhere",
        }
    }
}

impl std::fmt::Display for GeneratorCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for GeneratorCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GeneratorCategory::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::config(format!("unknown generator category `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub n_seeds: usize,
    pub referral_quota_per_site: usize,
    pub participation: ParticipationMatrix,
    /// Probability that a referee withholds an eligible contact, keyed by
    /// the referee's site.
    pub masking_origin: f64,
    pub masking_destination: f64,
    pub target_interviews: usize,
    pub alter_quotas: AlterQuotas,
    pub alter_alter_sample_size: usize,
    /// Nomination choice bias: weight of a same-sex candidate relative to a
    /// cross-sex one; 1 = uniform choice.
    pub nomination_sex_weight: f64,
    /// Probability an alter attribute is reported wrongly.
    pub reporting_noise: f64,
    /// Probability an alter-alter tie report is flipped.
    pub perception_noise: f64,
    /// Probability a reported alias for an alter or referral has one letter
    /// corrupted (data entry error).
    pub alias_noise: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_seeds: 9,
            referral_quota_per_site: 3,
            participation: ParticipationMatrix::default(),
            masking_origin: 0.39,
            masking_destination: 0.62,
            target_interviews: 303,
            alter_quotas: AlterQuotas::default(),
            alter_alter_sample_size: 9,
            nomination_sex_weight: 1.0,
            reporting_noise: 0.0,
            perception_noise: 0.0,
            alias_noise: 0.0,
        }
    }
}

impl StudyConfig {
    pub fn masking(&self, respondent_site: Site) -> f64 {
        match respondent_site {
            Site::Origin => self.masking_origin,
            Site::Destination => self.masking_destination,
            Site::Other => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.participation.validate()?;
        for (name, p) in [
            ("masking_origin", self.masking_origin),
            ("masking_destination", self.masking_destination),
            ("reporting_noise", self.reporting_noise),
            ("perception_noise", self.perception_noise),
            ("alias_noise", self.alias_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} not in [0, 1]")));
            }
        }
        if self.nomination_sex_weight < 0.0 {
            return Err(Error::config("nomination_sex_weight negative"));
        }
        if self.target_interviews < self.n_seeds {
            return Err(Error::config("target_interviews below n_seeds"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Log structures

/// One elicited alter mention.
#[derive(Debug, Clone, Copy)]
pub struct AlterRecord {
    pub obs: ObsId,
    /// Simulation-side identity; analysis code must resolve `obs` through a
    /// partition instead.
    pub person: PersonId,
    pub category: GeneratorCategory,
    pub kind: TieKind,
}

/// A respondent's reported personal network.
#[derive(Debug, Clone)]
pub struct PersonalNetworkObservation {
    pub respondent_obs: ObsId,
    pub respondent: PersonId,
    pub alters: Vec<AlterRecord>,
    /// Alters drawn for the structure module, as indices into `alters`.
    pub sampled: Vec<usize>,
    /// One report per unordered sampled pair: do they know each other?
    pub alter_alter: Vec<AlterAlterReport>,
}

#[derive(Debug, Clone, Copy)]
pub struct AlterAlterReport {
    pub a: ObsId,
    pub b: ObsId,
    pub knows: bool,
}

impl PersonalNetworkObservation {
    pub fn count(&self, category: GeneratorCategory) -> usize {
        self.alters.iter().filter(|a| a.category == category).count()
    }
}

#[derive(Debug, Clone)]
pub struct InterviewEvent {
    /// Position in the interview sequence.
    pub order: usize,
    pub person: PersonId,
    pub respondent_obs: ObsId,
    pub site: Site,
    pub sex: Sex,
    pub age: u32,
    pub migrant_type: MigrantType,
    pub wave: u32,
    /// The site whose team conducted the interview (the respondent's).
    pub interviewer_site: Site,
    pub elicited_alters: usize,
    pub true_degree: usize,
}

#[derive(Debug, Clone)]
pub struct ReferralEvent {
    pub referee_obs: ObsId,
    pub referral_obs: ObsId,
    pub referee_person: PersonId,
    pub referral_person: PersonId,
    /// Site the referral lives in.
    pub site: Site,
    /// Referee's wave + 1.
    pub wave: u32,
    /// True only on the single contact that recruited this person.
    pub accepted: bool,
}

/// Full event record of one simulated fieldwork run.
#[derive(Debug, Clone, Default)]
pub struct StudyLog {
    pub seeds: Vec<PersonId>,
    pub interviews: Vec<InterviewEvent>,
    pub referrals: Vec<ReferralEvent>,
    pub pnets: Vec<PersonalNetworkObservation>,
    pub observations: Vec<ObservationRecord>,
    /// Simulation ground truth: which person each observation describes.
    pub truth: BTreeMap<ObsId, PersonId>,
    /// True when the referral queue drained before the target was reached.
    pub exhausted: bool,
}

impl StudyLog {
    pub fn n_interviews(&self) -> usize {
        self.interviews.len()
    }

    /// Unique persons ever contacted (seeds plus every nominated person).
    pub fn contacted_persons(&self) -> BTreeSet<PersonId> {
        let mut set: BTreeSet<PersonId> = self.seeds.iter().copied().collect();
        set.extend(self.referrals.iter().map(|r| r.referral_person));
        set
    }

    pub fn interviewed_persons(&self) -> BTreeSet<PersonId> {
        self.interviews.iter().map(|i| i.person).collect()
    }

    pub fn max_wave(&self) -> u32 {
        self.interviews.iter().map(|i| i.wave).max().unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Seed selection

/// Attribute distance for seed heterogeneity: the number of differing
/// attributes among sex, age band (decade), education, religion and work
/// status.
fn attribute_distance(a: &Person, b: &Person) -> usize {
    let mut d = 0;
    if a.sex != b.sex {
        d += 1;
    }
    if a.age / 10 != b.age / 10 {
        d += 1;
    }
    if a.education != b.education {
        d += 1;
    }
    if a.religion != b.religion {
        d += 1;
    }
    if a.work != b.work {
        d += 1;
    }
    d
}

/// Pick `k` destination-site seeds, as heterogeneous as possible: a random
/// first pick, then greedy max-min attribute distance with ties broken by
/// the smallest id.
pub fn select_seeds(persons: &[Person], k: usize, rng: &mut impl Rng) -> Result<Vec<PersonId>> {
    let eligible: Vec<&Person> = persons.iter().filter(|p| p.site == Site::Destination).collect();
    if k > eligible.len() {
        return Err(Error::config(format!(
            "requested {k} seeds but only {} destination-site persons exist",
            eligible.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut selected: Vec<usize> = vec![rng.gen_range(0..eligible.len())];
    while selected.len() < k {
        let mut best: Option<(usize, usize)> = None; // (min distance, index)
        for (i, candidate) in eligible.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let min_d = selected
                .iter()
                .map(|&s| attribute_distance(candidate, eligible[s]))
                .min()
                .unwrap();
            let better = match best {
                None => true,
                Some((bd, bi)) => min_d > bd || (min_d == bd && eligible[i].id < eligible[bi].id),
            };
            if better {
                best = Some((min_d, i));
            }
        }
        selected.push(best.unwrap().1);
    }
    Ok(selected.into_iter().map(|i| eligible[i].id).collect())
}

// ---------------------------------------------------------------------------
// Elicitation

fn classify_alter(respondent: &Person, alter: &Person, kind: TieKind) -> Option<GeneratorCategory> {
    if alter.migrant_type == MigrantType::Returnee {
        return Some(GeneratorCategory::Returnees);
    }
    let cross_site = respondent.site.corridor_partner();
    match (alter.site, kind) {
        (site, TieKind::Kin) if site == respondent.site => Some(GeneratorCategory::KinCurrent),
        (site, _) if site == respondent.site => Some(GeneratorCategory::FriendsCurrent),
        (site, TieKind::Kin) if site == cross_site => Some(GeneratorCategory::KinCross),
        (site, _) if site == cross_site => Some(GeneratorCategory::FriendsCross),
        (Site::Other, TieKind::Kin) => Some(GeneratorCategory::KinElsewhere),
        (Site::Other, _) => Some(GeneratorCategory::FriendsElsewhere),
        _ => None,
    }
}

/// Sample min(cap, len) elements uniformly without replacement, preserving a
/// deterministic draw order.
fn sample_without_replacement<T: Copy>(pool: &mut Vec<T>, cap: usize, rng: &mut impl Rng) -> Vec<T> {
    let take = cap.min(pool.len());
    let mut out = Vec::with_capacity(take);
    for _ in 0..take {
        let idx = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(idx));
    }
    out
}

/// Elicitation context shared by the standalone operation and the engine.
pub struct Elicitor<'a> {
    pub graph: &'a GroundTruthGraph,
    pub config: &'a StudyConfig,
}

impl<'a> Elicitor<'a> {
    /// Apply the five name generators to one respondent: per category, a
    /// uniform sample of min(cap, available) true neighbors of the matching
    /// kind and location. Returns the alters as (person, category) pairs.
    pub fn elicit_alter_persons(
        &self,
        respondent: PersonId,
        rng: &mut impl Rng,
    ) -> Vec<(PersonId, GeneratorCategory, TieKind)> {
        let resp = self.graph.person(respondent);
        let mut pools: BTreeMap<GeneratorCategory, Vec<(PersonId, TieKind)>> = BTreeMap::new();
        for &(neighbor, kind) in self.graph.neighbors(respondent) {
            let alter = self.graph.person(PersonId(neighbor));
            if let Some(category) = classify_alter(resp, alter, kind) {
                pools.entry(category).or_default().push((alter.id, kind));
            }
        }
        let mut out = Vec::new();
        for category in GeneratorCategory::ALL {
            if let Some(pool) = pools.get_mut(&category) {
                pool.sort_unstable(); // stable pool order before sampling
                let cap = self.config.alter_quotas.cap(category);
                for (person, kind) in sample_without_replacement(pool, cap, rng) {
                    out.push((person, category, kind));
                }
            }
        }
        out
    }
}

/// Uniformly sample up to `k` alters (as indices into the elicited list)
/// and report, for every unordered pair in the sample, whether the two know
/// each other. Reports follow the truth graph, with an optional perception
/// noise rate flipping individual reports.
pub fn sample_alter_alter_ties(
    graph: &GroundTruthGraph,
    alters: &[PersonId],
    k: usize,
    perception_noise: f64,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<(usize, usize, bool)>) {
    let mut indices: Vec<usize> = (0..alters.len()).collect();
    let mut sampled = sample_without_replacement(&mut indices, k, rng);
    sampled.sort_unstable();
    let mut reports = Vec::new();
    for (i, &a) in sampled.iter().enumerate() {
        for &b in &sampled[i + 1..] {
            let mut knows = graph.has_tie(alters[a], alters[b]);
            if perception_noise > 0.0 && rng.gen_bool(perception_noise) {
                knows = !knows;
            }
            reports.push((a, b, knows));
        }
    }
    (sampled, reports)
}

/// Masking-aware referral nomination. The candidate pool is the
/// respondent's whole corridor-site contact list (elicited alters plus the
/// remaining true neighbors, so a person can be both alter and referral);
/// each candidate is masked independently with the referee's site masking
/// probability, then up to quota unmasked candidates are drawn per site
/// with the configured same-sex choice weight.
pub fn nominate_referrals(
    graph: &GroundTruthGraph,
    config: &StudyConfig,
    respondent: PersonId,
    rng: &mut impl Rng,
) -> Vec<PersonId> {
    let resp = graph.person(respondent);
    let masking = config.masking(resp.site);
    let mut pools: BTreeMap<Site, Vec<PersonId>> = BTreeMap::new();
    for &(neighbor, _) in graph.neighbors(respondent) {
        let candidate = graph.person(PersonId(neighbor));
        if candidate.site == Site::Other {
            continue; // referrals must live in one of the two sites
        }
        if masking > 0.0 && rng.gen_bool(masking) {
            continue;
        }
        pools.entry(candidate.site).or_default().push(candidate.id);
    }
    let mut nominations = Vec::new();
    for site in [Site::Destination, Site::Origin] {
        let Some(pool) = pools.get_mut(&site) else {
            continue;
        };
        pool.sort_unstable();
        let quota = config.referral_quota_per_site.min(pool.len());
        if config.nomination_sex_weight == 1.0 {
            nominations.extend(sample_without_replacement(pool, quota, rng));
        } else {
            // Weighted sampling without replacement.
            let mut weights: Vec<f64> = pool
                .iter()
                .map(|&id| {
                    if graph.person(id).sex == resp.sex {
                        config.nomination_sex_weight
                    } else {
                        1.0
                    }
                })
                .collect();
            for _ in 0..quota {
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    break;
                }
                let mut u = rng.gen::<f64>() * total;
                let mut chosen = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        chosen = i;
                        break;
                    }
                    u -= w;
                }
                nominations.push(pool.swap_remove(chosen));
                weights.swap_remove(chosen);
            }
        }
    }
    nominations
}

/// Corrupt one letter of the six-letter block.
fn corrupt_alias(alias: AliasCode, rng: &mut impl Rng) -> AliasCode {
    let mut block = alias.letter_block();
    let pos = rng.gen_range(0..6);
    let old = block[pos];
    let replacement = loop {
        let c = b'A' + rng.gen_range(0..26u8);
        if c != old {
            break c;
        }
    };
    block[pos] = replacement;
    AliasCode {
        name3: block[..3].try_into().unwrap(),
        surname3: block[3..].try_into().unwrap(),
        phone4: alias.phone4,
    }
}

// ---------------------------------------------------------------------------
// The study engine

struct Engine<'a> {
    graph: &'a GroundTruthGraph,
    config: &'a StudyConfig,
    log: StudyLog,
    next_obs: u32,
    /// Participation decision drawn at first contact; seeds enter as true.
    contact_status: BTreeMap<PersonId, bool>,
    interviewed: BTreeSet<PersonId>,
}

impl<'a> Engine<'a> {
    fn new_obs(
        &mut self,
        person: PersonId,
        source: ObsSource,
        reporting_respondent: Option<ObsId>,
        rng: &mut impl Rng,
    ) -> ObsId {
        let p = self.graph.person(person);
        let mut alias = encode_alias(&p.first_name, &p.last_name, p.phone.as_deref())
            .expect("population names are non-empty");
        // Self-reports are recorded carefully; third-party mentions may
        // suffer data entry errors.
        if source != ObsSource::Respondent
            && self.config.alias_noise > 0.0
            && rng.gen_bool(self.config.alias_noise)
        {
            alias = corrupt_alias(alias, rng);
        }
        let mut sex = p.sex;
        if source == ObsSource::Alter
            && self.config.reporting_noise > 0.0
            && rng.gen_bool(self.config.reporting_noise)
        {
            sex = match sex {
                Sex::Female => Sex::Male,
                Sex::Male => Sex::Female,
            };
        }
        let (occupation, religion) = match source {
            // Referral contact sheets carry sex and residence only.
            ObsSource::Referral => (None, None),
            _ => (Some(p.work.clone()), Some(p.religion.clone())),
        };
        let obs_id = ObsId(self.next_obs);
        self.next_obs += 1;
        self.log.observations.push(ObservationRecord {
            obs_id,
            source,
            alias,
            sex: Some(sex),
            residence: Some(p.site),
            occupation,
            religion,
            reporting_respondent,
        });
        self.log.truth.insert(obs_id, person);
        obs_id
    }

    fn interview(&mut self, person: PersonId, wave: u32, rng: &mut impl Rng) -> Vec<(PersonId, u32)> {
        let respondent_obs = self.new_obs(person, ObsSource::Respondent, None, rng);
        let p = self.graph.person(person);
        self.interviewed.insert(person);

        // Elicitation.
        let elicitor = Elicitor {
            graph: self.graph,
            config: self.config,
        };
        let alter_persons = elicitor.elicit_alter_persons(person, rng);
        let alters: Vec<AlterRecord> = alter_persons
            .iter()
            .map(|&(alter, category, kind)| AlterRecord {
                obs: self.new_obs(alter, ObsSource::Alter, Some(respondent_obs), rng),
                person: alter,
                category,
                kind,
            })
            .collect();

        // Alter-alter subsample.
        let alter_persons_only: Vec<PersonId> = alters.iter().map(|a| a.person).collect();
        let (sorted_sample, reports) = sample_alter_alter_ties(
            self.graph,
            &alter_persons_only,
            self.config.alter_alter_sample_size,
            self.config.perception_noise,
            rng,
        );
        let alter_alter = reports
            .into_iter()
            .map(|(a, b, knows)| AlterAlterReport {
                a: alters[a].obs,
                b: alters[b].obs,
                knows,
            })
            .collect();

        self.log.interviews.push(InterviewEvent {
            order: self.log.interviews.len(),
            person,
            respondent_obs,
            site: p.site,
            sex: p.sex,
            age: p.age,
            migrant_type: p.migrant_type,
            wave,
            interviewer_site: p.site,
            elicited_alters: alters.len(),
            true_degree: self.graph.degree(person),
        });

        let nominations = nominate_referrals(self.graph, self.config, person, rng);
        self.log.pnets.push(PersonalNetworkObservation {
            respondent_obs,
            respondent: person,
            alters,
            sampled: sorted_sample,
            alter_alter,
        });

        let mut newly_accepted = Vec::new();
        for nominee in nominations {
            let referral_obs = self.new_obs(nominee, ObsSource::Referral, Some(respondent_obs), rng);
            let accepted = match self.contact_status.get(&nominee) {
                Some(_) => false, // already recruited or already refused
                None => {
                    let np = self.graph.person(nominee);
                    let p_accept = self.config.participation.prob(np.site, np.sex);
                    let accept = p_accept > 0.0 && rng.gen_bool(p_accept);
                    self.contact_status.insert(nominee, accept);
                    if accept {
                        newly_accepted.push((nominee, wave + 1));
                    }
                    accept
                }
            };
            self.log.referrals.push(ReferralEvent {
                referee_obs: respondent_obs,
                referral_obs,
                referee_person: person,
                referral_person: nominee,
                site: self.graph.person(nominee).site,
                wave: wave + 1,
                accepted,
            });
        }
        newly_accepted
    }
}

/// Execute the full protocol. Breadth-wise waves; within each wave the two
/// site teams run in alternating batches (destination first), mirroring the
/// ping-pong exchange of referral sheets. Halts when the interview target is
/// reached or the queue drains (`exhausted` flag).
pub fn run_study(
    graph: &GroundTruthGraph,
    config: &StudyConfig,
    rng: &mut impl Rng,
) -> Result<StudyLog> {
    config.validate()?;
    let seeds = select_seeds(&graph.persons, config.n_seeds, rng)?;

    let mut engine = Engine {
        graph,
        config,
        log: StudyLog {
            seeds: seeds.clone(),
            ..StudyLog::default()
        },
        next_obs: 0,
        contact_status: seeds.iter().map(|&s| (s, true)).collect(),
        interviewed: BTreeSet::new(),
    };

    let mut current: Vec<(PersonId, u32)> = seeds.iter().map(|&s| (s, 0)).collect();
    let mut reached_target = engine.log.interviews.len() >= config.target_interviews;
    while !current.is_empty() && !reached_target {
        let mut next: Vec<(PersonId, u32)> = Vec::new();
        'wave: for site in [Site::Destination, Site::Origin] {
            let mut batch: Vec<(PersonId, u32)> = current
                .iter()
                .copied()
                .filter(|&(p, _)| graph.person(p).site == site)
                .collect();
            batch.sort_unstable();
            for (person, wave) in batch {
                if engine.log.interviews.len() >= config.target_interviews {
                    reached_target = true;
                    break 'wave;
                }
                if engine.interviewed.contains(&person) {
                    continue;
                }
                next.extend(engine.interview(person, wave, rng));
            }
        }
        current = next;
    }
    engine.log.exhausted = !reached_target;
    Ok(engine.log)
}

// ---------------------------------------------------------------------------
// Participation summary

/// One cell of the participation table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParticipationCell {
    pub contacted: usize,
    pub participated: usize,
}

impl ParticipationCell {
    pub fn success_rate(&self) -> Option<f64> {
        if self.contacted == 0 {
            None
        } else {
            Some(self.participated as f64 / self.contacted as f64)
        }
    }
}

/// Contact and participation counts split by site and sex, with totals.
#[derive(Debug, Clone, Default)]
pub struct ParticipationTable {
    pub cells: BTreeMap<(Site, Sex), ParticipationCell>,
}

impl ParticipationTable {
    pub fn cell(&self, site: Site, sex: Sex) -> ParticipationCell {
        self.cells.get(&(site, sex)).copied().unwrap_or_default()
    }

    pub fn site_total(&self, site: Site) -> ParticipationCell {
        let mut total = ParticipationCell::default();
        for (&(s, _), cell) in &self.cells {
            if s == site {
                total.contacted += cell.contacted;
                total.participated += cell.participated;
            }
        }
        total
    }

    pub fn grand_total(&self) -> ParticipationCell {
        let mut total = ParticipationCell::default();
        for cell in self.cells.values() {
            total.contacted += cell.contacted;
            total.participated += cell.participated;
        }
        total
    }
}

/// Tabulate contacted and participating persons by site and sex. A person
/// counts once no matter how often they were nominated; seeds count as
/// contacted and participating in their site cell.
pub fn participation_summary(graph: &GroundTruthGraph, log: &StudyLog) -> ParticipationTable {
    let mut table = ParticipationTable::default();
    let interviewed = log.interviewed_persons();
    for person in log.contacted_persons() {
        let p = graph.person(person);
        let cell = table.cells.entry((p.site, p.sex)).or_default();
        cell.contacted += 1;
        if interviewed.contains(&person) {
            cell.participated += 1;
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::testutil::test_graph;

    #[test]
    fn seeds_come_from_destination_and_respect_k() {
        let graph = test_graph(1, 50, 30, 0.05);
        let seeds = select_seeds(&graph.persons, 9, &mut stream_rng(1, 4)).unwrap();
        assert_eq!(seeds.len(), 9);
        for s in &seeds {
            assert_eq!(graph.person(*s).site, Site::Destination);
        }
        let all = select_seeds(&graph.persons, 30, &mut stream_rng(1, 4)).unwrap();
        assert_eq!(all.len(), 30);
        assert!(select_seeds(&graph.persons, 31, &mut stream_rng(1, 4)).is_err());
        let one = select_seeds(&graph.persons, 1, &mut stream_rng(1, 4)).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn seed_selection_is_greedy_max_min() {
        let graph = test_graph(2, 0, 40, 0.0);
        let seeds = select_seeds(&graph.persons, 5, &mut stream_rng(2, 4)).unwrap();
        // Recompute the greedy rule independently: each seed after the first
        // must maximize the min distance to the previously selected ones.
        for step in 1..seeds.len() {
            let chosen = &seeds[..step];
            let next = seeds[step];
            let min_d = |candidate: PersonId| {
                chosen
                    .iter()
                    .map(|&s| attribute_distance(graph.person(candidate), graph.person(s)))
                    .min()
                    .unwrap()
            };
            let next_d = min_d(next);
            for p in &graph.persons {
                if p.site != Site::Destination || chosen.contains(&p.id) || p.id == next {
                    continue;
                }
                assert!(min_d(p.id) <= next_d, "greedy rule violated at step {step}");
            }
        }
    }

    #[test]
    fn elicitation_respects_caps_and_undercap_pools() {
        let graph = test_graph(3, 200, 100, 0.08);
        let config = StudyConfig::default();
        let elicitor = Elicitor {
            graph: &graph,
            config: &config,
        };
        let mut rng = stream_rng(3, 5);
        for p in graph.persons.iter().take(80) {
            let alters = elicitor.elicit_alter_persons(p.id, &mut rng);
            assert!(alters.len() <= config.alter_quotas.grand_cap());
            let mut by_cat: BTreeMap<GeneratorCategory, usize> = BTreeMap::new();
            for &(_, c, _) in &alters {
                *by_cat.entry(c).or_default() += 1;
            }
            for c in GeneratorCategory::ALL {
                assert!(by_cat.get(&c).copied().unwrap_or(0) <= config.alter_quotas.cap(c));
            }
            // Under-cap categories must return the full pool.
            let resp = graph.person(p.id);
            let mut pool_sizes: BTreeMap<GeneratorCategory, usize> = BTreeMap::new();
            for &(n, kind) in graph.neighbors(p.id) {
                if let Some(c) = classify_alter(resp, graph.person(PersonId(n)), kind) {
                    *pool_sizes.entry(c).or_default() += 1;
                }
            }
            for (c, &available) in &pool_sizes {
                let cap = config.alter_quotas.cap(*c);
                assert_eq!(
                    by_cat.get(c).copied().unwrap_or(0),
                    available.min(cap),
                    "category {c} for {}",
                    p.id
                );
            }
        }
    }

    #[test]
    fn alter_alter_reports_cover_all_sampled_pairs() {
        let graph = test_graph(4, 150, 80, 0.1);
        let config = StudyConfig {
            n_seeds: 5,
            target_interviews: 60,
            ..StudyConfig::default()
        };
        let log = run_study(&graph, &config, &mut stream_rng(4, 6)).unwrap();
        assert!(!log.pnets.is_empty());
        for pnet in &log.pnets {
            let k = pnet.sampled.len();
            assert!(k <= config.alter_alter_sample_size);
            assert_eq!(pnet.alter_alter.len(), k * k.saturating_sub(1) / 2);
            // Reports agree with the truth graph at zero noise.
            let person_of: BTreeMap<ObsId, PersonId> =
                pnet.alters.iter().map(|a| (a.obs, a.person)).collect();
            for report in &pnet.alter_alter {
                let (a, b) = (person_of[&report.a], person_of[&report.b]);
                assert_eq!(report.knows, graph.has_tie(a, b));
            }
        }
    }

    #[test]
    fn alter_alter_sample_size_zero_gives_empty_report() {
        let graph = test_graph(14, 60, 40, 0.2);
        let respondent = graph.persons[0].id;
        let neighbors: Vec<PersonId> = graph
            .neighbors(respondent)
            .iter()
            .map(|&(n, _)| PersonId(n))
            .collect();
        let (sampled, reports) =
            sample_alter_alter_ties(&graph, &neighbors, 0, 0.0, &mut stream_rng(14, 5));
        assert!(sampled.is_empty());
        assert!(reports.is_empty());
    }

    /// Direct enumeration oracle on one fixed neighborhood: the expected
    /// number of reported edges among k sampled alters equals the truth
    /// density among the alters times C(min(k, n), 2).
    #[test]
    fn alter_alter_edge_count_matches_density_oracle() {
        let graph = test_graph(15, 200, 100, 0.15);
        // A respondent with at least 12 alters.
        let respondent = graph
            .persons
            .iter()
            .find(|p| graph.degree(p.id) >= 12)
            .expect("dense enough graph")
            .id;
        let alters: Vec<PersonId> = graph
            .neighbors(respondent)
            .iter()
            .take(12)
            .map(|&(n, _)| PersonId(n))
            .collect();

        // Truth density among the 12 alters, by direct enumeration.
        let mut truth_edges = 0usize;
        for (i, &a) in alters.iter().enumerate() {
            for &b in &alters[i + 1..] {
                if graph.has_tie(a, b) {
                    truth_edges += 1;
                }
            }
        }
        let density = truth_edges as f64 / 66.0;

        let k = 9;
        let pairs_per_sample = (k * (k - 1) / 2) as f64;
        let expected = density * pairs_per_sample;

        let replicates = 1000;
        let mut rng = stream_rng(15, 6);
        let mut total = 0usize;
        for _ in 0..replicates {
            let (_, reports) = sample_alter_alter_ties(&graph, &alters, k, 0.0, &mut rng);
            total += reports.iter().filter(|(_, _, knows)| *knows).count();
        }
        let mean = total as f64 / replicates as f64;
        // Conservative bound: per-pair indicators have variance <= 1/4.
        let se = (pairs_per_sample * 0.25 / replicates as f64).sqrt();
        assert!(
            (mean - expected).abs() < 4.0 * se + 0.05,
            "mean {mean} vs expected {expected}"
        );
    }

    /// Sex-homophily choice bias: with weight > 1 the nomination mix shows
    /// a within-sex excess relative to the uniform rule.
    #[test]
    fn nomination_sex_weight_creates_within_sex_excess() {
        let graph = test_graph(16, 300, 150, 0.12);
        let respondents: Vec<PersonId> = graph
            .persons
            .iter()
            .filter(|p| graph.degree(p.id) >= 10)
            .take(25)
            .map(|p| p.id)
            .collect();
        assert!(!respondents.is_empty());

        let count_same_sex = |weight: f64, rng_stream: u64| -> (usize, usize) {
            let config = StudyConfig {
                masking_origin: 0.0,
                masking_destination: 0.0,
                nomination_sex_weight: weight,
                ..StudyConfig::default()
            };
            let mut rng = stream_rng(16, rng_stream);
            let mut same = 0;
            let mut total = 0;
            for _ in 0..20 {
                for &r in &respondents {
                    let sex = graph.person(r).sex;
                    for nominee in nominate_referrals(&graph, &config, r, &mut rng) {
                        total += 1;
                        if graph.person(nominee).sex == sex {
                            same += 1;
                        }
                    }
                }
            }
            (same, total)
        };

        let (same_uniform, total_uniform) = count_same_sex(1.0, 7);
        let (same_biased, total_biased) = count_same_sex(4.0, 8);
        let rate_uniform = same_uniform as f64 / total_uniform as f64;
        let rate_biased = same_biased as f64 / total_biased as f64;
        assert!(
            rate_biased > rate_uniform + 0.08,
            "biased {rate_biased:.3} vs uniform {rate_uniform:.3}"
        );
    }

    #[test]
    fn masking_one_yields_zero_nominations() {
        let graph = test_graph(5, 100, 60, 0.1);
        let config = StudyConfig {
            masking_origin: 1.0,
            masking_destination: 1.0,
            n_seeds: 4,
            target_interviews: 50,
            ..StudyConfig::default()
        };
        let log = run_study(&graph, &config, &mut stream_rng(5, 6)).unwrap();
        assert!(log.referrals.is_empty());
        assert_eq!(log.n_interviews(), 4); // only the seeds
        assert!(log.exhausted);
    }

    #[test]
    fn participation_zero_interviews_only_seeds() {
        let graph = test_graph(6, 100, 60, 0.1);
        let config = StudyConfig {
            participation: ParticipationMatrix::constant(0.0),
            n_seeds: 5,
            target_interviews: 40,
            ..StudyConfig::default()
        };
        let log = run_study(&graph, &config, &mut stream_rng(6, 6)).unwrap();
        assert_eq!(log.n_interviews(), 5);
        assert!(log.referrals.iter().all(|r| !r.accepted));
        assert!(log.exhausted);
    }

    #[test]
    fn quota_binds_with_large_unmasked_pools() {
        let graph = test_graph(7, 200, 120, 0.3);
        let config = StudyConfig {
            masking_origin: 0.0,
            masking_destination: 0.0,
            n_seeds: 3,
            target_interviews: 10,
            ..StudyConfig::default()
        };
        let log = run_study(&graph, &config, &mut stream_rng(7, 6)).unwrap();
        let mut per: BTreeMap<(ObsId, Site), usize> = BTreeMap::new();
        for r in &log.referrals {
            *per.entry((r.referee_obs, r.site)).or_default() += 1;
        }
        assert!(per.values().all(|&n| n <= config.referral_quota_per_site));
        let filled = per.values().filter(|&&n| n == 3).count();
        assert!(filled > 0);
    }

    #[test]
    fn full_participation_no_masking_matches_bfs_layering() {
        let graph = test_graph(8, 80, 50, 0.12);
        let config = StudyConfig {
            participation: ParticipationMatrix::constant(1.0),
            masking_origin: 0.0,
            masking_destination: 0.0,
            referral_quota_per_site: 1000, // nominate everyone
            n_seeds: 3,
            target_interviews: 10_000,
            ..StudyConfig::default()
        };
        let log = run_study(&graph, &config, &mut stream_rng(8, 6)).unwrap();

        // Oracle: BFS distance from the seed set over corridor-site nodes.
        let mut dist: BTreeMap<PersonId, u32> = log.seeds.iter().map(|&s| (s, 0)).collect();
        let mut frontier: Vec<PersonId> = log.seeds.clone();
        let mut d = 0;
        while !frontier.is_empty() {
            d += 1;
            let mut next = Vec::new();
            for &p in &frontier {
                for &(n, _) in graph.neighbors(p) {
                    let np = PersonId(n);
                    if graph.person(np).site == Site::Other {
                        continue;
                    }
                    if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(np) {
                        e.insert(d);
                        next.push(np);
                    }
                }
            }
            frontier = next;
        }
        assert_eq!(log.interviews.len(), dist.len());
        for iv in &log.interviews {
            assert_eq!(iv.wave, dist[&iv.person], "wave mismatch for {}", iv.person);
        }
    }

    #[test]
    fn no_person_interviewed_twice_and_waves_monotone() {
        let graph = test_graph(9, 300, 150, 0.06);
        let config = StudyConfig {
            n_seeds: 5,
            target_interviews: 120,
            ..StudyConfig::default()
        };
        let log = run_study(&graph, &config, &mut stream_rng(9, 6)).unwrap();
        let mut seen = BTreeSet::new();
        for iv in &log.interviews {
            assert!(seen.insert(iv.person), "{} interviewed twice", iv.person);
        }
        // Every non-seed interviewee has exactly one accepting referral
        // event with wave = referee wave + 1.
        let wave_of: BTreeMap<PersonId, u32> =
            log.interviews.iter().map(|iv| (iv.person, iv.wave)).collect();
        for iv in &log.interviews {
            if log.seeds.contains(&iv.person) {
                assert_eq!(iv.wave, 0);
                continue;
            }
            let accepting: Vec<&ReferralEvent> = log
                .referrals
                .iter()
                .filter(|r| r.referral_person == iv.person && r.accepted)
                .collect();
            assert_eq!(accepting.len(), 1, "{}", iv.person);
            let referee_wave = wave_of[&accepting[0].referee_person];
            assert_eq!(iv.wave, referee_wave + 1);
        }
    }

    #[test]
    fn run_is_reproducible() {
        let graph = test_graph(10, 200, 100, 0.08);
        let config = StudyConfig {
            n_seeds: 4,
            target_interviews: 60,
            ..StudyConfig::default()
        };
        let a = run_study(&graph, &config, &mut stream_rng(10, 6)).unwrap();
        let b = run_study(&graph, &config, &mut stream_rng(10, 6)).unwrap();
        assert_eq!(a.n_interviews(), b.n_interviews());
        assert_eq!(a.referrals.len(), b.referrals.len());
        assert_eq!(a.observations.len(), b.observations.len());
        for (x, y) in a.observations.iter().zip(&b.observations) {
            assert_eq!(x.obs_id, y.obs_id);
            assert_eq!(x.alias, y.alias);
        }
    }

    #[test]
    fn participation_summary_matches_event_recount() {
        let graph = test_graph(11, 250, 120, 0.07);
        let config = StudyConfig {
            n_seeds: 5,
            target_interviews: 100,
            ..StudyConfig::default()
        };
        let log = run_study(&graph, &config, &mut stream_rng(11, 6)).unwrap();
        let table = participation_summary(&graph, &log);

        // Independent fold over raw events.
        let mut contacted: BTreeSet<PersonId> = log.seeds.iter().copied().collect();
        for r in &log.referrals {
            contacted.insert(r.referral_person);
        }
        let interviewed = log.interviewed_persons();
        let mut oracle: BTreeMap<(Site, Sex), (usize, usize)> = BTreeMap::new();
        for p in contacted {
            let person = graph.person(p);
            let e = oracle.entry((person.site, person.sex)).or_default();
            e.0 += 1;
            if interviewed.contains(&p) {
                e.1 += 1;
            }
        }
        for (key, (c, i)) in oracle {
            let cell = table.cell(key.0, key.1);
            assert_eq!((cell.contacted, cell.participated), (c, i));
        }
        assert_eq!(table.grand_total().participated, log.n_interviews());
    }

    #[test]
    fn empty_log_gives_zero_table() {
        let graph = test_graph(12, 10, 10, 0.0);
        let log = StudyLog::default();
        let table = participation_summary(&graph, &log);
        assert_eq!(table.grand_total(), ParticipationCell::default());
    }

    #[test]
    fn success_rate_is_participants_over_nominated() {
        let cell = ParticipationCell {
            contacted: 10,
            participated: 3,
        };
        assert_eq!(cell.success_rate(), Some(0.3));
    }
}
