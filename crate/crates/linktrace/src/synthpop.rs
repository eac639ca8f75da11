//! Synthetic two-site-plus-elsewhere populations and ground-truth social
//! graphs.
//!
//! The generator plants the structure the downstream pipeline is supposed to
//! recover: attribute homophily in the tie pattern (a dyad-independent
//! Bernoulli graph whose dyad probability depends on the site pair and on a
//! sex-match multiplier) and kin clusters that span the migration corridor.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};

use crate::error::Error;
use crate::Result;

// ---------------------------------------------------------------------------
// Basic domain enums

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    Origin,
    Destination,
    Other,
}

impl Site {
    pub const ALL: [Site; 3] = [Site::Origin, Site::Destination, Site::Other];

    /// The opposite end of the migration corridor. "Other" maps to the
    /// origin, where most of its kin live.
    pub fn corridor_partner(self) -> Site {
        match self {
            Site::Origin => Site::Destination,
            Site::Destination => Site::Origin,
            Site::Other => Site::Origin,
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Site::Origin => "origin",
            Site::Destination => "destination",
            Site::Other => "other",
        })
    }
}

impl FromStr for Site {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "origin" => Ok(Site::Origin),
            "destination" => Ok(Site::Destination),
            "other" => Ok(Site::Other),
            _ => Err(Error::config(format!("unknown site `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sex {
    Female,
    Male,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Female => "F",
            Sex::Male => "M",
        })
    }
}

impl FromStr for Sex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" => Ok(Sex::Female),
            "M" => Ok(Sex::Male),
            _ => Err(Error::config(format!("unknown sex `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MigrantType {
    Migrant,
    Returnee,
    NonMigrant,
}

impl fmt::Display for MigrantType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MigrantType::Migrant => "migrant",
            MigrantType::Returnee => "returnee",
            MigrantType::NonMigrant => "non_migrant",
        })
    }
}

impl FromStr for MigrantType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "migrant" => Ok(MigrantType::Migrant),
            "returnee" => Ok(MigrantType::Returnee),
            "non_migrant" => Ok(MigrantType::NonMigrant),
            _ => Err(Error::config(format!("unknown migrant type `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TieKind {
    Kin,
    Friend,
    Acquaintance,
}

impl fmt::Display for TieKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieKind::Kin => "kin",
            TieKind::Friend => "friend",
            TieKind::Acquaintance => "acquaintance",
        })
    }
}

impl FromStr for TieKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kin" => Ok(TieKind::Kin),
            "friend" => Ok(TieKind::Friend),
            "acquaintance" => Ok(TieKind::Acquaintance),
            _ => Err(Error::config(format!("unknown tie kind `{s}`"))),
        }
    }
}

/// Opaque person identifier; dense indices into the population vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PersonId(pub u32);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{:06}", self.0)
    }
}

impl FromStr for PersonId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let digits = s.strip_prefix('p').unwrap_or(s);
        digits
            .parse::<u32>()
            .map(PersonId)
            .map_err(|_| Error::config(format!("bad person id `{s}`")))
    }
}

// ---------------------------------------------------------------------------
// Configuration

/// A labelled categorical probability vector.
#[derive(Debug, Clone)]
pub struct CategoricalDist {
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn new(pairs: &[(&str, f64)]) -> Self {
        CategoricalDist {
            labels: pairs.iter().map(|(l, _)| l.to_string()).collect(),
            probs: pairs.iter().map(|(_, p)| *p).collect(),
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if self.labels.len() != self.probs.len() || self.labels.is_empty() {
            return Err(Error::config(format!("{field}: empty or ragged distribution")));
        }
        if self.probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::config(format!("{field}: negative or non-finite probability")));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("{field}: probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Marginal parameters for one site.
#[derive(Debug, Clone, Copy)]
pub struct SiteParams {
    pub size: usize,
    pub female_share: f64,
    pub age_mean: f64,
    pub age_sd: f64,
}

/// Kin cluster formation rule. Cluster sizes are 1 + Poisson(size_mean - 1);
/// each non-anchor slot is placed at the anchor's site, across the corridor,
/// or elsewhere according to the two shares.
#[derive(Debug, Clone, Copy)]
pub struct KinRule {
    pub size_mean: f64,
    pub cross_corridor_share: f64,
    pub elsewhere_share: f64,
}

#[derive(Debug, Clone)]
pub struct PopulationConfig {
    pub origin: SiteParams,
    pub destination: SiteParams,
    pub other: SiteParams,
    pub religion: CategoricalDist,
    pub education: CategoricalDist,
    pub work: CategoricalDist,
    /// Fraction of origin-site persons who are returned migrants.
    pub returnee_share: f64,
    pub kin: KinRule,
    pub name_pool_size: usize,
    pub phone_missing_rate: f64,
}

impl PopulationConfig {
    pub fn site(&self, site: Site) -> &SiteParams {
        match site {
            Site::Origin => &self.origin,
            Site::Destination => &self.destination,
            Site::Other => &self.other,
        }
    }

    pub fn total_size(&self) -> usize {
        self.origin.size + self.destination.size + self.other.size
    }

    pub fn validate(&self) -> Result<()> {
        for site in Site::ALL {
            let p = self.site(site);
            check_fraction(p.female_share, &format!("{site}.female_share"))?;
            if p.age_mean < 18.0 || p.age_mean > 95.0 {
                return Err(Error::config(format!("{site}.age_mean out of [18, 95]")));
            }
            if p.age_sd < 0.0 {
                return Err(Error::config(format!("{site}.age_sd negative")));
            }
        }
        self.religion.validate("religion")?;
        self.education.validate("education")?;
        self.work.validate("work")?;
        check_fraction(self.returnee_share, "returnee_share")?;
        check_fraction(self.phone_missing_rate, "phone_missing_rate")?;
        check_fraction(self.kin.cross_corridor_share, "kin.cross_corridor_share")?;
        check_fraction(self.kin.elsewhere_share, "kin.elsewhere_share")?;
        if self.kin.cross_corridor_share + self.kin.elsewhere_share > 1.0 {
            return Err(Error::config("kin shares sum above 1"));
        }
        if self.kin.size_mean < 1.0 {
            return Err(Error::config("kin.size_mean below 1"));
        }
        if self.name_pool_size == 0 {
            return Err(Error::config("name_pool_size is zero"));
        }
        Ok(())
    }
}

fn check_fraction(v: f64, field: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        Err(Error::config(format!("{field} = {v} not in [0, 1]")))
    } else {
        Ok(())
    }
}

/// Tie probabilities by site pair plus the sex-match multiplier.
#[derive(Debug, Clone)]
pub struct TieConfig {
    /// Within-site probability, per site.
    pub p_within: [f64; 3],
    /// Between-site probability for the unordered pairs
    /// (origin, destination), (origin, other), (destination, other).
    pub p_between: [f64; 3],
    /// Dyad probability multiplier when the two endpoints share a sex.
    pub sex_homophily_multiplier: f64,
    /// Fraction of non-kin ties labelled friend; the rest are acquaintances.
    pub friend_share: f64,
}

impl TieConfig {
    pub fn uniform(p: f64) -> Self {
        TieConfig {
            p_within: [p; 3],
            p_between: [p; 3],
            sex_homophily_multiplier: 1.0,
            friend_share: 0.5,
        }
    }

    pub fn base_prob(&self, a: Site, b: Site) -> f64 {
        let idx = |s: Site| match s {
            Site::Origin => 0,
            Site::Destination => 1,
            Site::Other => 2,
        };
        if a == b {
            self.p_within[idx(a)]
        } else {
            match (idx(a).min(idx(b)), idx(a).max(idx(b))) {
                (0, 1) => self.p_between[0],
                (0, 2) => self.p_between[1],
                (1, 2) => self.p_between[2],
                _ => unreachable!(),
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.p_within.iter().enumerate() {
            check_fraction(*p, &format!("p_within[{i}]"))?;
        }
        for (i, p) in self.p_between.iter().enumerate() {
            check_fraction(*p, &format!("p_between[{i}]"))?;
        }
        if self.sex_homophily_multiplier < 0.0 {
            return Err(Error::config("sex_homophily_multiplier negative"));
        }
        check_fraction(self.friend_share, "friend_share")?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Population

#[derive(Debug, Clone)]
pub struct Person {
    pub id: PersonId,
    pub site: Site,
    pub sex: Sex,
    pub age: u32,
    pub religion: String,
    pub education: String,
    pub work: String,
    pub migrant_type: MigrantType,
    pub first_name: String,
    pub last_name: String,
    pub phone: Option<String>,
    /// Kin cluster label; persons sharing it are tied as kin.
    pub kin_group: u32,
}

/// Draw an integer age from a normal truncated to [18, 95].
fn draw_age(rng: &mut impl Rng, mean: f64, sd: f64) -> u32 {
    if sd == 0.0 {
        return mean.round().clamp(18.0, 95.0) as u32;
    }
    let normal = Normal::new(mean, sd).expect("validated sd");
    loop {
        let a: f64 = normal.sample(rng);
        if (18.0..=95.0).contains(&a) {
            return a.round() as u32;
        }
    }
}

/// Generate the attributed population. Names and phones are left blank;
/// [`assign_identifiers`] fills them from a name pool.
pub fn generate_population(config: &PopulationConfig, rng: &mut impl Rng) -> Result<Vec<Person>> {
    config.validate()?;
    let mut persons = Vec::with_capacity(config.total_size());
    for site in Site::ALL {
        let params = config.site(site);
        for _ in 0..params.size {
            let id = PersonId(persons.len() as u32);
            let sex = if rng.gen_bool(params.female_share) {
                Sex::Female
            } else {
                Sex::Male
            };
            let age = draw_age(rng, params.age_mean, params.age_sd);
            let migrant_type = match site {
                Site::Destination => MigrantType::Migrant,
                Site::Origin => {
                    if rng.gen_bool(config.returnee_share) {
                        MigrantType::Returnee
                    } else {
                        MigrantType::NonMigrant
                    }
                }
                Site::Other => MigrantType::Migrant,
            };
            persons.push(Person {
                id,
                site,
                sex,
                age,
                religion: config.religion.labels[config.religion.sample(rng)].clone(),
                education: config.education.labels[config.education.sample(rng)].clone(),
                work: config.work.labels[config.work.sample(rng)].clone(),
                migrant_type,
                first_name: String::new(),
                last_name: String::new(),
                phone: None,
                kin_group: 0,
            });
        }
    }
    assign_kin_groups(&mut persons, &config.kin, rng);
    Ok(persons)
}

/// Partition persons into kin clusters. Anchors are visited in shuffled
/// order; each cluster draws its size and fills slots from per-site pools so
/// that migrant households span the corridor.
fn assign_kin_groups(persons: &mut [Person], rule: &KinRule, rng: &mut impl Rng) {
    let n = persons.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    // Per-site stacks of unclustered person indices, in shuffled order.
    let mut pools: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let site_idx = |s: Site| match s {
        Site::Origin => 0usize,
        Site::Destination => 1,
        Site::Other => 2,
    };
    for &i in &order {
        pools[site_idx(persons[i].site)].push(i);
    }
    let mut clustered = vec![false; n];
    let mut next_group: u32 = 0;

    let lambda = rule.size_mean - 1.0;
    let poisson = if lambda > 0.0 {
        Some(Poisson::new(lambda).expect("validated size_mean"))
    } else {
        None
    };

    for &anchor in &order {
        if clustered[anchor] {
            continue;
        }
        let group = next_group;
        next_group += 1;
        clustered[anchor] = true;
        persons[anchor].kin_group = group;

        let extra = match &poisson {
            Some(p) => p.sample(rng) as usize,
            None => 0,
        };
        let anchor_site = persons[anchor].site;
        for _ in 0..extra {
            let u: f64 = rng.gen();
            let slot_site = if u < rule.cross_corridor_share {
                anchor_site.corridor_partner()
            } else if u < rule.cross_corridor_share + rule.elsewhere_share {
                Site::Other
            } else {
                anchor_site
            };
            let pool = &mut pools[site_idx(slot_site)];
            // Pop until we find someone still unclustered.
            let member = loop {
                match pool.pop() {
                    Some(i) if !clustered[i] => break Some(i),
                    Some(_) => continue,
                    None => break None,
                }
            };
            if let Some(i) = member {
                clustered[i] = true;
                persons[i].kin_group = group;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Name pool and identifiers

const FIRST_NAMES: &[&str] = &[
    "Maria", "Ion", "Elena", "Andrei", "Ioana", "Mihai", "Ana", "Vasile", "Gabriela", "Gheorghe",
    "Cristina", "Constantin", "Daniela", "Nicolae", "Mihaela", "Alexandru", "Florentina", "Florin",
    "Georgiana", "Adrian", "Andreea", "Marian", "Alina", "Daniel", "Ramona", "Ionuț", "Larisa",
    "Cătălin", "Simona", "Ștefan", "Raluca", "Bogdan", "Carmen", "Dumitru", "Loredana", "Vlad",
    "Monica", "Radu", "Bianca", "Sorin", "Oana", "Petre", "Roxana", "Tudor", "Viorica", "Lucian",
    "Camelia", "Eugen", "Doina", "Emil", "Anca", "Paul", "Teodora", "Victor", "Ileana", "Marius",
    "Corina", "Grigore", "Lavinia", "Aurel",
];

const LAST_STEMS: &[&str] = &[
    "Pop", "Ion", "Dumitr", "Stan", "Gheorghi", "Const", "Mar", "Flor", "Niculs", "Băl",
    "Tudor", "Cior", "Drag", "Mih", "Ros", "Șerb", "Ang", "Cost", "Mold", "Radul",
    "Olt", "Crist", "Văc", "Petr", "Luc", "Ene", "Sav", "Barb", "Voic", "Dobr",
    "Moc", "Pâr", "Grig", "Sand", "Nist", "Varg", "Lung", "Crăc", "Băn", "Ursu",
    "Tăn", "Neag", "Vlăd", "Zamf", "Ciob",
];

const LAST_SUFFIXES: &[&str] = &["escu", "eanu", "aru", "oiu"];

/// Deterministic pool of distinct (first, last) name pairs.
pub fn default_name_pool(size: usize, rng: &mut impl Rng) -> Result<Vec<(String, String)>> {
    let capacity = FIRST_NAMES.len() * LAST_STEMS.len() * LAST_SUFFIXES.len();
    if size == 0 {
        return Err(Error::config("name pool size is zero"));
    }
    if size > capacity {
        return Err(Error::config(format!(
            "name pool size {size} exceeds the {capacity} distinct pairs available"
        )));
    }
    let mut combos: Vec<usize> = (0..capacity).collect();
    combos.shuffle(rng);
    let pool = combos[..size]
        .iter()
        .map(|&c| {
            let f = c % FIRST_NAMES.len();
            let rest = c / FIRST_NAMES.len();
            let stem = rest % LAST_STEMS.len();
            let suffix = rest / LAST_STEMS.len();
            (
                FIRST_NAMES[f].to_string(),
                format!("{}{}", LAST_STEMS[stem], LAST_SUFFIXES[suffix]),
            )
        })
        .collect();
    Ok(pool)
}

/// Assign every person a name pair drawn uniformly from the pool and a
/// 10-digit phone with probability `1 - missing_rate`.
pub fn assign_identifiers(
    persons: &mut [Person],
    name_pool: &[(String, String)],
    missing_rate: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    if name_pool.is_empty() {
        return Err(Error::config("empty name pool"));
    }
    check_fraction(missing_rate, "phone_missing_rate")?;
    for person in persons.iter_mut() {
        let (first, last) = &name_pool[rng.gen_range(0..name_pool.len())];
        person.first_name = first.clone();
        person.last_name = last.clone();
        person.phone = if rng.gen_bool(missing_rate) {
            None
        } else {
            let mut digits = String::with_capacity(10);
            digits.push('0');
            digits.push('7');
            for _ in 0..8 {
                digits.push(char::from(b'0' + rng.gen_range(0..10u8)));
            }
            Some(digits)
        };
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Ground-truth graph

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tie {
    pub a: PersonId,
    pub b: PersonId,
    pub kind: TieKind,
}

#[derive(Debug, Clone)]
pub struct GroundTruthGraph {
    pub persons: Vec<Person>,
    /// Canonical tie list: a < b, sorted, each unordered pair at most once.
    pub ties: Vec<Tie>,
    /// Adjacency: neighbors with tie kinds, sorted by neighbor id.
    adjacency: Vec<Vec<(u32, TieKind)>>,
    /// Non-fatal generation warnings (e.g. clamped probabilities).
    pub warnings: Vec<String>,
}

impl GroundTruthGraph {
    pub fn from_parts(persons: Vec<Person>, mut ties: Vec<Tie>, warnings: Vec<String>) -> Self {
        ties.sort_by_key(|t| (t.a, t.b));
        ties.dedup_by_key(|t| (t.a, t.b));
        let mut adjacency = vec![Vec::new(); persons.len()];
        for t in &ties {
            adjacency[t.a.0 as usize].push((t.b.0, t.kind));
            adjacency[t.b.0 as usize].push((t.a.0, t.kind));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        GroundTruthGraph {
            persons,
            ties,
            adjacency,
            warnings,
        }
    }

    pub fn person(&self, id: PersonId) -> &Person {
        &self.persons[id.0 as usize]
    }

    pub fn neighbors(&self, id: PersonId) -> &[(u32, TieKind)] {
        &self.adjacency[id.0 as usize]
    }

    pub fn degree(&self, id: PersonId) -> usize {
        self.adjacency[id.0 as usize].len()
    }

    pub fn has_tie(&self, a: PersonId, b: PersonId) -> bool {
        self.adjacency[a.0 as usize]
            .binary_search_by_key(&b.0, |(n, _)| *n)
            .is_ok()
    }

    /// Site span of a tie, derived from its endpoints.
    pub fn tie_span(&self, tie: &Tie) -> (Site, Site) {
        (self.person(tie.a).site, self.person(tie.b).site)
    }
}

/// Generate the ground-truth graph: kin ties inside kin clusters, then
/// dyad-independent Bernoulli ties with dyad probability
/// `base(site pair) * multiplier(sex match)`.
pub fn generate_ties(
    persons: Vec<Person>,
    config: &TieConfig,
    rng: &mut impl Rng,
) -> Result<GroundTruthGraph> {
    config.validate()?;
    let mut warnings = Vec::new();
    let mut ties: Vec<Tie> = Vec::new();
    let mut existing: HashSet<(u32, u32)> = HashSet::new();

    // Kin ties: every pair inside a cluster.
    let mut by_group: Vec<(u32, u32)> = persons.iter().map(|p| (p.kin_group, p.id.0)).collect();
    by_group.sort_unstable();
    let mut start = 0;
    while start < by_group.len() {
        let group = by_group[start].0;
        let mut end = start;
        while end < by_group.len() && by_group[end].0 == group {
            end += 1;
        }
        for i in start..end {
            for j in (i + 1)..end {
                let (a, b) = (by_group[i].1, by_group[j].1);
                let (a, b) = (a.min(b), a.max(b));
                if existing.insert((a, b)) {
                    ties.push(Tie {
                        a: PersonId(a),
                        b: PersonId(b),
                        kind: TieKind::Kin,
                    });
                }
            }
        }
        start = end;
    }

    // Bernoulli ties per (site, sex) block pair. Sampling an edge count from
    // the binomial and placing it uniformly reproduces the dyad-independent
    // model exactly, block by block, at O(edges) cost.
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); 6];
    let group_of = |p: &Person| -> usize {
        let s = match p.site {
            Site::Origin => 0,
            Site::Destination => 1,
            Site::Other => 2,
        };
        let x = match p.sex {
            Sex::Female => 0,
            Sex::Male => 1,
        };
        s * 2 + x
    };
    for p in &persons {
        groups[group_of(p)].push(p.id.0);
    }
    let group_site = |g: usize| Site::ALL[g / 2];

    for g1 in 0..6 {
        for g2 in g1..6 {
            let same_sex = (g1 % 2) == (g2 % 2);
            let base = config.base_prob(group_site(g1), group_site(g2));
            let mut p = if same_sex {
                base * config.sex_homophily_multiplier
            } else {
                base
            };
            if p > 1.0 {
                warnings.push(format!(
                    "dyad probability {p:.4} for block pair ({g1},{g2}) clamped to 1"
                ));
                p = 1.0;
            }
            if p <= 0.0 {
                continue;
            }
            sample_block(
                &groups[g1],
                if g1 == g2 { None } else { Some(&groups[g2]) },
                p,
                config,
                rng,
                &mut existing,
                &mut ties,
            );
        }
    }

    Ok(GroundTruthGraph::from_parts(persons, ties, warnings))
}

/// Sample Bernoulli ties inside one block (within a group or across two
/// groups). Pairs already tied (kin) are skipped.
fn sample_block(
    g1: &[u32],
    g2: Option<&[u32]>,
    p: f64,
    config: &TieConfig,
    rng: &mut impl Rng,
    existing: &mut HashSet<(u32, u32)>,
    ties: &mut Vec<Tie>,
) {
    let n_pairs: u64 = match g2 {
        Some(g2) => g1.len() as u64 * g2.len() as u64,
        None => {
            let n = g1.len() as u64;
            n * n.saturating_sub(1) / 2
        }
    };
    if n_pairs == 0 {
        return;
    }

    let decode = |k: u64| -> (u32, u32) {
        match g2 {
            Some(g2) => {
                let i = (k / g2.len() as u64) as usize;
                let j = (k % g2.len() as u64) as usize;
                (g1[i], g2[j])
            }
            None => {
                // Row-major upper triangle of the within-group pair matrix:
                // row i holds pairs (i, i+1..n) and starts at offset
                // S(i) = i(2n - i - 1)/2. Invert via sqrt with a fixup.
                let n = g1.len() as u64;
                let row_start = |i: u64| i * (2 * n - i - 1) / 2;
                let nf = n as f64 - 0.5;
                let mut i = (nf - (nf * nf - 2.0 * k as f64).max(0.0).sqrt()) as u64;
                i = i.min(n - 2);
                while row_start(i) > k {
                    i -= 1;
                }
                while i < n - 2 && row_start(i + 1) <= k {
                    i += 1;
                }
                let j = i + 1 + (k - row_start(i));
                (g1[i as usize], g1[j as usize])
            }
        }
    };

    let mut push_tie = |a: u32, b: u32, rng: &mut dyn rand::RngCore| {
        let (a, b) = (a.min(b), a.max(b));
        if a == b {
            return;
        }
        if existing.insert((a, b)) {
            let kind = if rng.gen_bool(config.friend_share) {
                TieKind::Friend
            } else {
                TieKind::Acquaintance
            };
            ties.push(Tie {
                a: PersonId(a),
                b: PersonId(b),
                kind,
            });
        }
    };

    if p >= 0.4 || n_pairs < 64 {
        // Dense or tiny block: scan every pair.
        for k in 0..n_pairs {
            if rng.gen_bool(p) {
                let (a, b) = decode(k);
                push_tie(a, b, rng);
            }
        }
    } else {
        // Sparse block: draw the edge count, then place edges uniformly.
        let m = Binomial::new(n_pairs, p).expect("validated p").sample(rng);
        let mut chosen: HashSet<u64> = HashSet::with_capacity(m as usize * 2);
        let mut picked: Vec<u64> = Vec::with_capacity(m as usize);
        while (picked.len() as u64) < m {
            let k = rng.gen_range(0..n_pairs);
            if chosen.insert(k) {
                picked.push(k);
            }
        }
        for k in picked {
            let (a, b) = decode(k);
            push_tie(a, b, rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    pub(crate) fn small_config(origin: usize, destination: usize) -> PopulationConfig {
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
            name_pool_size: 500,
            phone_missing_rate: 0.05,
        }
    }

    #[test]
    fn counts_per_site_are_exact() {
        let config = small_config(120, 40);
        let mut rng = stream_rng(1, 10);
        let persons = generate_population(&config, &mut rng).unwrap();
        assert_eq!(persons.len(), 160);
        assert_eq!(persons.iter().filter(|p| p.site == Site::Origin).count(), 120);
        assert_eq!(
            persons.iter().filter(|p| p.site == Site::Destination).count(),
            40
        );
        assert!(persons.iter().all(|p| p.age >= 18 && p.age <= 95));
        // Site rule: destination persons are migrants, returnees live in origin.
        assert!(persons
            .iter()
            .filter(|p| p.site == Site::Destination)
            .all(|p| p.migrant_type == MigrantType::Migrant));
        assert!(persons
            .iter()
            .filter(|p| p.migrant_type == MigrantType::Returnee)
            .all(|p| p.site == Site::Origin));
    }

    #[test]
    fn empty_sites_give_empty_population() {
        let mut config = small_config(0, 0);
        config.other.size = 0;
        let mut rng = stream_rng(1, 10);
        let persons = generate_population(&config, &mut rng).unwrap();
        assert!(persons.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let config = small_config(200, 60);
        let run = |seed: u64| {
            let mut rng = stream_rng(seed, 10);
            let mut persons = generate_population(&config, &mut rng).unwrap();
            let pool = default_name_pool(config.name_pool_size, &mut rng).unwrap();
            assign_identifiers(&mut persons, &pool, config.phone_missing_rate, &mut rng).unwrap();
            persons
                .iter()
                .map(|p| {
                    format!(
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        p.id,
                        p.site,
                        p.sex,
                        p.age,
                        p.religion,
                        p.education,
                        p.work,
                        p.migrant_type,
                        p.first_name,
                        p.last_name,
                        p.phone.as_deref().unwrap_or("")
                    )
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn marginals_track_config_within_three_binomial_se() {
        let config = small_config(4000, 4000);
        let mut rng = stream_rng(7, 10);
        let persons = generate_population(&config, &mut rng).unwrap();
        for site in [Site::Origin, Site::Destination] {
            let params = config.site(site);
            let at_site: Vec<&Person> = persons.iter().filter(|p| p.site == site).collect();
            let n = at_site.len() as f64;
            let within_3se = |observed: f64, p: f64| {
                let se = (p * (1.0 - p) / n).sqrt();
                (observed - p).abs() < 3.0 * se
            };
            let females = at_site.iter().filter(|p| p.sex == Sex::Female).count() as f64;
            assert!(
                within_3se(females / n, params.female_share),
                "female share off at {site}"
            );
            let mean_age = at_site.iter().map(|p| p.age as f64).sum::<f64>() / n;
            assert!(
                (mean_age - params.age_mean).abs() < 3.0 * params.age_sd / n.sqrt() + 0.5,
                "age mean off at {site}: {mean_age} vs {}",
                params.age_mean
            );
            // Every categorical marginal, per label.
            type FieldOf = fn(&Person) -> &String;
            let fields: [(&CategoricalDist, FieldOf); 3] = [
                (&config.religion, |p| &p.religion),
                (&config.education, |p| &p.education),
                (&config.work, |p| &p.work),
            ];
            for (dist, field) in fields {
                for (label, &prob) in dist.labels.iter().zip(&dist.probs) {
                    let observed =
                        at_site.iter().filter(|p| field(p) == label).count() as f64 / n;
                    assert!(
                        within_3se(observed, prob),
                        "{label} marginal off at {site}: {observed} vs {prob}"
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_config_names_offending_field() {
        let mut config = small_config(10, 10);
        config.destination.female_share = 1.4;
        let mut rng = stream_rng(1, 10);
        let err = generate_population(&config, &mut rng).unwrap_err();
        assert!(err.to_string().contains("female_share"), "{err}");
    }

    #[test]
    fn two_same_site_persons_probability_one_gives_one_tie() {
        let mut config = small_config(2, 0);
        config.kin.size_mean = 1.0;
        let mut rng = stream_rng(3, 10);
        let persons = generate_population(&config, &mut rng).unwrap();
        let mut tie_config = TieConfig::uniform(0.0);
        tie_config.p_within[0] = 1.0;
        let graph = generate_ties(persons, &tie_config, &mut stream_rng(3, 11)).unwrap();
        assert_eq!(graph.ties.len(), 1);
        assert_eq!(graph.ties[0].a, PersonId(0));
        assert_eq!(graph.ties[0].b, PersonId(1));
    }

    #[test]
    fn zero_between_site_probability_forces_same_site_ties() {
        let mut config = small_config(60, 60);
        config.kin.size_mean = 1.0; // no kin clusters crossing sites
        let mut rng = stream_rng(5, 10);
        let persons = generate_population(&config, &mut rng).unwrap();
        let tie_config = TieConfig {
            p_within: [0.2, 0.2, 0.0],
            p_between: [0.0, 0.0, 0.0],
            sex_homophily_multiplier: 1.0,
            friend_share: 0.5,
        };
        let graph = generate_ties(persons, &tie_config, &mut stream_rng(5, 11)).unwrap();
        assert!(!graph.ties.is_empty());
        for t in &graph.ties {
            let (sa, sb) = graph.tie_span(t);
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn probability_one_block_yields_every_pair_exactly_once() {
        // Exercises the triangular pair decoding across a whole block.
        let mut config = small_config(30, 0);
        config.kin.size_mean = 1.0;
        let mut rng = stream_rng(13, 10);
        let persons = generate_population(&config, &mut rng).unwrap();
        let mut tie_config = TieConfig::uniform(0.0);
        tie_config.p_within[0] = 1.0;
        let graph = generate_ties(persons, &tie_config, &mut stream_rng(13, 11)).unwrap();
        assert_eq!(graph.ties.len(), 30 * 29 / 2);
        let mut seen = HashSet::new();
        for t in &graph.ties {
            assert!(t.a < t.b);
            assert!(seen.insert((t.a, t.b)));
        }
    }

    #[test]
    fn no_self_ties_and_pairs_unique() {
        let config = small_config(80, 40);
        let mut rng = stream_rng(9, 10);
        let persons = generate_population(&config, &mut rng).unwrap();
        let graph = generate_ties(persons, &TieConfig::uniform(0.05), &mut stream_rng(9, 11)).unwrap();
        let mut seen = HashSet::new();
        for t in &graph.ties {
            assert!(t.a < t.b, "canonical order violated");
            assert!(seen.insert((t.a, t.b)), "duplicate pair");
        }
    }

    /// Density oracle: with p_within = p_between = p the generator must be
    /// indistinguishable from direct per-dyad Bernoulli sampling.
    #[test]
    fn density_matches_direct_bernoulli_oracle() {
        let p = 0.12;
        let n = 200usize;
        let replicates = 100;
        let n_pairs = (n * (n - 1) / 2) as f64;

        let mut generator_total = 0.0;
        let mut oracle_total = 0.0;
        for rep in 0..replicates {
            let mut config = small_config(n / 2, n / 2);
            config.kin.size_mean = 1.0;
            let mut rng = stream_rng(100 + rep, 10);
            let persons = generate_population(&config, &mut rng).unwrap();
            let graph =
                generate_ties(persons, &TieConfig::uniform(p), &mut stream_rng(100 + rep, 11))
                    .unwrap();
            generator_total += graph.ties.len() as f64;

            // Independent oracle: straight Bernoulli over every pair.
            let mut oracle_rng = stream_rng(900 + rep, 12);
            let mut count = 0u64;
            for i in 0..n {
                for _ in (i + 1)..n {
                    if oracle_rng.gen_bool(p) {
                        count += 1;
                    }
                }
            }
            oracle_total += count as f64;
        }
        let gen_density = generator_total / (replicates as f64 * n_pairs);
        let oracle_density = oracle_total / (replicates as f64 * n_pairs);
        let se = (p * (1.0 - p) / (replicates as f64 * n_pairs)).sqrt();
        assert!(
            (gen_density - p).abs() < 3.0 * se,
            "generator density {gen_density} vs p {p} (3se {})",
            3.0 * se
        );
        assert!((oracle_density - p).abs() < 3.0 * se);
    }

    /// Birthday-problem oracle for name collisions: expected number of
    /// colliding person pairs is C(n,2)/pool_size.
    #[test]
    fn name_collisions_match_birthday_oracle() {
        let pool_size = 10_000usize;
        let n = 300usize;
        let replicates = 100;
        let expected_pairs = (n * (n - 1) / 2) as f64 / pool_size as f64;

        let mut total = 0.0;
        for rep in 0..replicates {
            let mut rng = stream_rng(2000 + rep, 13);
            let pool = default_name_pool(pool_size, &mut rng).unwrap();
            let mut config = small_config(n, 0);
            config.kin.size_mean = 1.0;
            let mut persons = generate_population(&config, &mut rng).unwrap();
            assign_identifiers(&mut persons, &pool, 0.0, &mut rng).unwrap();
            let mut names: Vec<(&str, &str)> = persons
                .iter()
                .map(|p| (p.first_name.as_str(), p.last_name.as_str()))
                .collect();
            names.sort_unstable();
            // Count colliding pairs: sum C(k,2) over name multiplicities.
            let mut pairs = 0usize;
            let mut i = 0;
            while i < names.len() {
                let mut j = i;
                while j < names.len() && names[j] == names[i] {
                    j += 1;
                }
                let k = j - i;
                pairs += k * (k - 1) / 2;
                i = j;
            }
            total += pairs as f64;
        }
        let mean = total / replicates as f64;
        // Pair count is approximately Poisson(expected_pairs).
        let se = (expected_pairs / replicates as f64).sqrt();
        assert!(
            (mean - expected_pairs).abs() < 3.0 * se,
            "collision mean {mean} vs expected {expected_pairs}"
        );
    }

    #[test]
    fn tiny_pool_forces_collisions() {
        let pool = vec![("Maria".to_string(), "Popescu".to_string())];
        let config = small_config(5, 0);
        let mut rng = stream_rng(4, 10);
        let mut persons = generate_population(&config, &mut rng).unwrap();
        assign_identifiers(&mut persons, &pool, 0.0, &mut rng).unwrap();
        assert!(persons
            .iter()
            .all(|p| p.first_name == "Maria" && p.last_name == "Popescu"));
        assert!(persons.iter().all(|p| p.phone.as_deref().map(str::len) == Some(10)));
        let err = assign_identifiers(&mut persons, &[], 0.0, &mut rng).unwrap_err();
        assert!(err.to_string().contains("name pool"));
    }

    #[test]
    fn planted_sex_homophily_yields_negative_sex_ei() {
        // Sign check over replicates: multiplier > 1 must push the global
        // sex E-I of the truth graph below zero.
        let mut negative = 0;
        let replicates = 50;
        for rep in 0..replicates {
            let mut config = small_config(100, 100);
            config.kin.size_mean = 1.0;
            let mut rng = stream_rng(3000 + rep, 10);
            let persons = generate_population(&config, &mut rng).unwrap();
            let tie_config = TieConfig {
                p_within: [0.05, 0.05, 0.0],
                p_between: [0.05, 0.0, 0.0],
                sex_homophily_multiplier: 2.5,
                friend_share: 0.5,
            };
            let graph = generate_ties(persons, &tie_config, &mut stream_rng(3000 + rep, 11)).unwrap();
            let (mut internal, mut external) = (0f64, 0f64);
            for t in &graph.ties {
                if graph.person(t.a).sex == graph.person(t.b).sex {
                    internal += 1.0;
                } else {
                    external += 1.0;
                }
            }
            if external < internal {
                negative += 1;
            }
        }
        assert_eq!(negative, replicates, "sex homophily not planted");
    }
}
