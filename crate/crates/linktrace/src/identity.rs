//! Alias encoding and entity resolution.
//!
//! Every individual in a study — respondent, referral mention, elicited
//! alter — is observed under an alphanumeric code built from the first three
//! letters of the first name, the first three letters of the surname, and
//! the last four digits of the phone number. This module encodes those
//! codes, links multiply-observed individuals into unique entities, and
//! reports the conflicts that make the procedure hard: distinct people who
//! share a code, and single people observed under divergent codes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::synthpop::{PersonId, Sex, Site};
use crate::Result;

/// Padding character for names shorter than three letters.
pub const PAD: u8 = b'_';
/// Sentinel phone block for missing or too-short phone numbers.
pub const PHONE_SENTINEL: [u8; 4] = *b"XXXX";

// ---------------------------------------------------------------------------
// Alias codes

/// A 3+3+4 identification code. Letters are uppercase ASCII (diacritics
/// folded) padded with `_`; the phone block is four digits or `XXXX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AliasCode {
    pub name3: [u8; 3],
    pub surname3: [u8; 3],
    pub phone4: [u8; 4],
}

impl AliasCode {
    /// The six-letter name block.
    pub fn letter_block(&self) -> [u8; 6] {
        let mut block = [0u8; 6];
        block[..3].copy_from_slice(&self.name3);
        block[3..].copy_from_slice(&self.surname3);
        block
    }

    pub fn has_phone(&self) -> bool {
        self.phone4 != PHONE_SENTINEL
    }

    /// Hamming distance over the six-letter block.
    pub fn letter_distance(&self, other: &AliasCode) -> usize {
        self.letter_block()
            .iter()
            .zip(other.letter_block().iter())
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl fmt::Display for AliasCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.name3.iter().chain(&self.surname3).chain(&self.phone4) {
            write!(f, "{}", *b as char)?;
        }
        Ok(())
    }
}

impl FromStr for AliasCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if bytes.len() != 10 {
            return Err(Error::Encoding(format!("alias `{s}` is not 10 characters")));
        }
        let ok_letter = |b: u8| b.is_ascii_uppercase() || b == PAD;
        if !bytes[..6].iter().all(|&b| ok_letter(b)) {
            return Err(Error::Encoding(format!("alias `{s}` has a bad letter block")));
        }
        let phone: [u8; 4] = bytes[6..].try_into().unwrap();
        if phone != PHONE_SENTINEL && !phone.iter().all(u8::is_ascii_digit) {
            return Err(Error::Encoding(format!("alias `{s}` has a bad phone block")));
        }
        Ok(AliasCode {
            name3: bytes[..3].try_into().unwrap(),
            surname3: bytes[3..6].try_into().unwrap(),
            phone4: phone,
        })
    }
}

/// Fold one character to its ASCII base letter, if it is a letter at all.
fn fold_char(c: char) -> Option<char> {
    if c.is_ascii_alphabetic() {
        return Some(c.to_ascii_uppercase());
    }
    let folded = match c {
        'ă' | 'â' | 'á' | 'à' | 'ä' | 'ã' | 'å' | 'Ă' | 'Â' | 'Á' | 'À' | 'Ä' | 'Ã' | 'Å' => 'A',
        'é' | 'è' | 'ê' | 'ë' | 'É' | 'È' | 'Ê' | 'Ë' => 'E',
        'î' | 'í' | 'ì' | 'ï' | 'Î' | 'Í' | 'Ì' | 'Ï' => 'I',
        'ó' | 'ò' | 'ô' | 'ö' | 'õ' | 'Ó' | 'Ò' | 'Ô' | 'Ö' | 'Õ' => 'O',
        'ú' | 'ù' | 'û' | 'ü' | 'Ú' | 'Ù' | 'Û' | 'Ü' => 'U',
        'ș' | 'ş' | 'Ș' | 'Ş' => 'S',
        'ț' | 'ţ' | 'Ț' | 'Ţ' => 'T',
        'ç' | 'Ç' => 'C',
        'ñ' | 'Ñ' => 'N',
        'ý' | 'Ý' => 'Y',
        _ => return None,
    };
    Some(folded)
}

/// Take the first three folded letters of a name, padding with `_`.
fn letter_prefix(name: &str) -> [u8; 3] {
    let mut out = [PAD; 3];
    let mut i = 0;
    for c in name.chars() {
        if i == 3 {
            break;
        }
        if let Some(f) = fold_char(c) {
            out[i] = f as u8;
            i += 1;
        }
    }
    out
}

/// Encode a 3+3+4 alias from a name pair and an optional phone number.
///
/// Diacritics fold to ASCII, non-letters are skipped, short names pad right
/// with `_`. Non-digits are stripped from the phone before taking the last
/// four digits; a missing or too-short phone yields the `XXXX` sentinel.
pub fn encode_alias(first_name: &str, last_name: &str, phone: Option<&str>) -> Result<AliasCode> {
    if first_name.chars().all(|c| fold_char(c).is_none()) {
        return Err(Error::Encoding("empty first name".into()));
    }
    let phone4 = match phone {
        Some(p) => {
            let digits: Vec<u8> = p.bytes().filter(u8::is_ascii_digit).collect();
            if digits.len() >= 4 {
                digits[digits.len() - 4..].try_into().unwrap()
            } else {
                PHONE_SENTINEL
            }
        }
        None => PHONE_SENTINEL,
    };
    Ok(AliasCode {
        name3: letter_prefix(first_name),
        surname3: letter_prefix(last_name),
        phone4,
    })
}

// ---------------------------------------------------------------------------
// Observations

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObsId(pub u32);

impl fmt::Display for ObsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{:06}", self.0)
    }
}

impl FromStr for ObsId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let digits = s.strip_prefix('o').unwrap_or(s);
        digits
            .parse::<u32>()
            .map(ObsId)
            .map_err(|_| Error::config(format!("bad observation id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObsSource {
    Respondent,
    Referral,
    Alter,
}

impl fmt::Display for ObsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObsSource::Respondent => "respondent",
            ObsSource::Referral => "referral",
            ObsSource::Alter => "alter",
        })
    }
}

impl FromStr for ObsSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "respondent" => Ok(ObsSource::Respondent),
            "referral" => Ok(ObsSource::Referral),
            "alter" => Ok(ObsSource::Alter),
            _ => Err(Error::config(format!("unknown observation source `{s}`"))),
        }
    }
}

/// One sighting of an individual. Validation attributes may be absent;
/// alters in particular often lack them.
#[derive(Debug, Clone)]
pub struct ObservationRecord {
    pub obs_id: ObsId,
    pub source: ObsSource,
    pub alias: AliasCode,
    pub sex: Option<Sex>,
    pub residence: Option<Site>,
    pub occupation: Option<String>,
    pub religion: Option<String>,
    pub reporting_respondent: Option<ObsId>,
}

// ---------------------------------------------------------------------------
// Entities and conflicts

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{:06}", self.0)
    }
}

impl FromStr for EntityId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let digits = s.strip_prefix('e').unwrap_or(s);
        digits
            .parse::<u32>()
            .map(EntityId)
            .map_err(|_| Error::config(format!("bad entity id `{s}`")))
    }
}

/// Merged attribute profile of an entity. Hard attributes (sex, residence)
/// are contradiction-free by construction; soft attributes keep the first
/// reported value.
#[derive(Debug, Clone, Default)]
pub struct EntityProfile {
    pub sex: Option<Sex>,
    pub residence: Option<Site>,
    pub occupation: Option<String>,
    pub religion: Option<String>,
    pub ever_respondent: bool,
    pub ever_referral: bool,
    pub ever_alter: bool,
}

impl EntityProfile {
    pub(crate) fn absorb(&mut self, obs: &ObservationRecord) {
        if self.sex.is_none() {
            self.sex = obs.sex;
        }
        if self.residence.is_none() {
            self.residence = obs.residence;
        }
        if self.occupation.is_none() {
            self.occupation = obs.occupation.clone();
        }
        if self.religion.is_none() {
            self.religion = obs.religion.clone();
        }
        match obs.source {
            ObsSource::Respondent => self.ever_respondent = true,
            ObsSource::Referral => self.ever_referral = true,
            ObsSource::Alter => self.ever_alter = true,
        }
    }

    /// Hard contradiction test against one observation. Missing values are
    /// consistent with anything. Two respondent-source sightings contradict
    /// by protocol: the study never interviews the same person twice.
    fn conflicts_with(&self, obs: &ObservationRecord) -> bool {
        if self.ever_respondent && obs.source == ObsSource::Respondent {
            return true;
        }
        if let (Some(a), Some(b)) = (self.sex, obs.sex) {
            if a != b {
                return true;
            }
        }
        if let (Some(a), Some(b)) = (self.residence, obs.residence) {
            if a != b {
                return true;
            }
        }
        false
    }

    /// Soft agreement score, used only to break ties between equally
    /// admissible merge targets.
    fn soft_agreement(&self, obs: &ObservationRecord) -> usize {
        let mut score = 0;
        if let (Some(a), Some(b)) = (self.occupation.as_deref(), obs.occupation.as_deref()) {
            if a == b {
                score += 1;
            }
        }
        if let (Some(a), Some(b)) = (self.religion.as_deref(), obs.religion.as_deref()) {
            if a == b {
                score += 1;
            }
        }
        score
    }

    fn hard_consistent_with(&self, other: &EntityProfile) -> bool {
        if self.ever_respondent && other.ever_respondent {
            return false;
        }
        if let (Some(a), Some(b)) = (self.sex, other.sex) {
            if a != b {
                return false;
            }
        }
        if let (Some(a), Some(b)) = (self.residence, other.residence) {
            if a != b {
                return false;
            }
        }
        true
    }
}

/// The resolved observation → entity mapping.
#[derive(Debug, Clone, Default)]
pub struct EntityPartition {
    pub assignment: BTreeMap<ObsId, EntityId>,
    pub profiles: BTreeMap<EntityId, EntityProfile>,
}

impl EntityPartition {
    pub fn entity_of(&self, obs: ObsId) -> Result<EntityId> {
        self.assignment
            .get(&obs)
            .copied()
            .ok_or_else(|| Error::Unresolved(obs.to_string()))
    }

    pub fn n_entities(&self) -> usize {
        self.profiles.len()
    }

    /// Members of each entity, sorted.
    pub fn members(&self) -> BTreeMap<EntityId, Vec<ObsId>> {
        let mut members: BTreeMap<EntityId, Vec<ObsId>> = BTreeMap::new();
        for (&obs, &entity) in &self.assignment {
            members.entry(entity).or_default().push(obs);
        }
        members
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictReason {
    /// Observations with one alias resolved into several entities.
    SameCodeDifferentPeople,
    /// Two codes one character apart with matching phone block; likely the
    /// same person recorded under divergent codes.
    DifferentCodesSamePersonSuspected,
}

impl fmt::Display for ConflictReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictReason::SameCodeDifferentPeople => "same_code_different_people",
            ConflictReason::DifferentCodesSamePersonSuspected => {
                "different_codes_same_person_suspected"
            }
        })
    }
}

impl FromStr for ConflictReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same_code_different_people" => Ok(ConflictReason::SameCodeDifferentPeople),
            "different_codes_same_person_suspected" => {
                Ok(ConflictReason::DifferentCodesSamePersonSuspected)
            }
            _ => Err(Error::config(format!("unknown conflict reason `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConflictRecord {
    pub alias: AliasCode,
    pub observations: Vec<ObsId>,
    pub reason: ConflictReason,
    /// true when the flagged observations ended up merged (accepted fuzzy
    /// candidates), false when they were split.
    pub merged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ConflictReport {
    pub records: Vec<ConflictRecord>,
}

impl ConflictReport {
    pub fn same_code(&self) -> impl Iterator<Item = &ConflictRecord> {
        self.records
            .iter()
            .filter(|r| r.reason == ConflictReason::SameCodeDifferentPeople)
    }

    pub fn fuzzy(&self) -> impl Iterator<Item = &ConflictRecord> {
        self.records
            .iter()
            .filter(|r| r.reason == ConflictReason::DifferentCodesSamePersonSuspected)
    }
}

/// Linkage policy knobs.
#[derive(Debug, Clone, Copy)]
pub struct LinkPolicy {
    /// Split same-alias observations on hard attribute contradictions.
    pub require_attribute_consistency: bool,
    /// 0 = exact alias matching only; 1 = also consider aliases one letter
    /// apart that agree on a real phone block.
    pub fuzzy_edit_distance: u8,
}

impl Default for LinkPolicy {
    fn default() -> Self {
        LinkPolicy {
            require_attribute_consistency: true,
            fuzzy_edit_distance: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Linkage

/// Resolve observations into entities.
///
/// Observations sharing an alias merge unless a hard attribute contradiction
/// (sex, residence, or a second respondent-source sighting) splits them;
/// splits are reported. With `fuzzy_edit_distance = 1`, groups whose aliases
/// differ by one letter and agree on a real phone block become merge
/// candidates, accepted only when attribute-consistent, closed transitively,
/// and processed in lexicographic alias order. The result is invariant to
/// the input observation order.
pub fn link_records(
    observations: &[ObservationRecord],
    policy: LinkPolicy,
) -> (EntityPartition, ConflictReport) {
    // Alias groups in lexicographic alias order, observations in id order.
    let mut by_alias: BTreeMap<AliasCode, Vec<&ObservationRecord>> = BTreeMap::new();
    for obs in observations {
        by_alias.entry(obs.alias).or_default().push(obs);
    }
    for group in by_alias.values_mut() {
        group.sort_by_key(|o| o.obs_id);
    }

    // Stage 1: split each alias group into attribute-consistent clusters.
    struct Cluster {
        alias: AliasCode,
        members: Vec<ObsId>,
        profile: EntityProfile,
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut report = ConflictReport::default();

    for (&alias, group) in &by_alias {
        let first_cluster = clusters.len();
        for obs in group {
            let admissible: Vec<usize> = (first_cluster..clusters.len())
                .filter(|&c| {
                    !policy.require_attribute_consistency
                        || !clusters[c].profile.conflicts_with(obs)
                })
                .collect();
            // Best soft-attribute agreement wins; ties fall to the earliest
            // cluster (first fit).
            let target = admissible
                .iter()
                .map(|&c| clusters[c].profile.soft_agreement(obs))
                .max()
                .and_then(|best| {
                    admissible
                        .iter()
                        .copied()
                        .find(|&c| clusters[c].profile.soft_agreement(obs) == best)
                });
            match target {
                Some(c) => {
                    clusters[c].members.push(obs.obs_id);
                    clusters[c].profile.absorb(obs);
                }
                None => {
                    let mut profile = EntityProfile::default();
                    profile.absorb(obs);
                    clusters.push(Cluster {
                        alias,
                        members: vec![obs.obs_id],
                        profile,
                    });
                }
            }
        }
        if clusters.len() - first_cluster > 1 {
            report.records.push(ConflictRecord {
                alias,
                observations: group.iter().map(|o| o.obs_id).collect(),
                reason: ConflictReason::SameCodeDifferentPeople,
                merged: false,
            });
        }
    }

    // Stage 2: fuzzy candidates across alias groups, union-find closure.
    let mut parent: Vec<usize> = (0..clusters.len()).collect();
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

    if policy.fuzzy_edit_distance >= 1 {
        // Candidate pairs share a real phone block and sit one letter apart.
        // Clusters are already in lexicographic (alias, first obs) order, so
        // the pair scan below visits candidates in that order.
        let mut by_phone: BTreeMap<[u8; 4], Vec<usize>> = BTreeMap::new();
        for (i, c) in clusters.iter().enumerate() {
            if c.alias.has_phone() {
                by_phone.entry(c.alias.phone4).or_default().push(i);
            }
        }
        for indices in by_phone.values() {
            for (pos, &i) in indices.iter().enumerate() {
                for &j in &indices[pos + 1..] {
                    if clusters[i].alias == clusters[j].alias {
                        continue; // same-code clusters were split on purpose
                    }
                    if clusters[i].alias.letter_distance(&clusters[j].alias) != 1 {
                        continue;
                    }
                    let consistent = clusters[i]
                        .profile
                        .hard_consistent_with(&clusters[j].profile);
                    let mut obs_union: Vec<ObsId> = clusters[i]
                        .members
                        .iter()
                        .chain(&clusters[j].members)
                        .copied()
                        .collect();
                    obs_union.sort_unstable();
                    report.records.push(ConflictRecord {
                        alias: clusters[i].alias.min(clusters[j].alias),
                        observations: obs_union,
                        reason: ConflictReason::DifferentCodesSamePersonSuspected,
                        merged: consistent,
                    });
                    if consistent {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        if ri != rj {
                            let (lo, hi) = (ri.min(rj), ri.max(rj));
                            parent[hi] = lo;
                        }
                    }
                }
            }
        }
    }

    // Materialize the partition. Entity ids are the minimum observation id
    // of the merged cluster, which is invariant to input order.
    let mut root_members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..clusters.len() {
        let root = find(&mut parent, i);
        root_members.entry(root).or_default().push(i);
    }
    let obs_by_id: BTreeMap<ObsId, &ObservationRecord> =
        observations.iter().map(|o| (o.obs_id, o)).collect();

    let mut partition = EntityPartition::default();
    for cluster_ids in root_members.values() {
        let mut member_ids: Vec<ObsId> = cluster_ids
            .iter()
            .flat_map(|&c| clusters[c].members.iter().copied())
            .collect();
        member_ids.sort_unstable();
        let entity = EntityId(member_ids[0].0);
        let mut profile = EntityProfile::default();
        for &obs_id in &member_ids {
            profile.absorb(obs_by_id[&obs_id]);
            partition.assignment.insert(obs_id, entity);
        }
        partition.profiles.insert(entity, profile);
    }
    report.records.sort_by(|a, b| {
        (a.alias, a.reason as u8, &a.observations).cmp(&(b.alias, b.reason as u8, &b.observations))
    });
    (partition, report)
}

// ---------------------------------------------------------------------------
// Audit against ground truth

/// Pairwise linkage quality metrics. Without ground truth only the conflict
/// counts are available.
#[derive(Debug, Clone)]
pub struct AuditMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Observation pairs merged although they belong to distinct persons.
    pub merge_errors: Option<u64>,
    /// Observation pairs split although they belong to one person.
    pub split_errors: Option<u64>,
    pub same_code_conflicts: usize,
    pub fuzzy_candidates: usize,
    /// Simulation-mode only: wrong merges the attribute checks could not
    /// see, listed per entity so that no collision stays silent.
    pub undetected_collisions: Vec<ConflictRecord>,
}

/// Score a partition against ground truth with pairwise precision/recall.
/// `ground_truth` maps observations to true persons and exists only in
/// simulation mode; without it the audit reports conflict counts alone.
pub fn audit_conflicts(
    observations: &[ObservationRecord],
    partition: &EntityPartition,
    report: &ConflictReport,
    ground_truth: Option<&BTreeMap<ObsId, PersonId>>,
) -> AuditMetrics {
    let same_code_conflicts = report.same_code().count();
    let fuzzy_candidates = report.fuzzy().count();

    let Some(truth) = ground_truth else {
        return AuditMetrics {
            precision: None,
            recall: None,
            merge_errors: None,
            split_errors: None,
            same_code_conflicts,
            fuzzy_candidates,
            undetected_collisions: Vec::new(),
        };
    };

    let alias_of: BTreeMap<ObsId, AliasCode> =
        observations.iter().map(|o| (o.obs_id, o.alias)).collect();

    // (entity, person, obs) triples for observations known to the truth map.
    let mut triples: Vec<(EntityId, PersonId, ObsId)> = partition
        .assignment
        .iter()
        .filter_map(|(&obs, &entity)| truth.get(&obs).map(|&person| (entity, person, obs)))
        .collect();
    triples.sort_unstable();

    // True/false-positive pairs, grouped by predicted entity.
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut wrong_merges: BTreeMap<EntityId, Vec<ObsId>> = BTreeMap::new();
    let mut i = 0;
    while i < triples.len() {
        let entity = triples[i].0;
        let mut j = i;
        while j < triples.len() && triples[j].0 == entity {
            j += 1;
        }
        let group = &triples[i..j];
        for (a_idx, a) in group.iter().enumerate() {
            for b in &group[a_idx + 1..] {
                if a.1 == b.1 {
                    tp += 1;
                } else {
                    fp += 1;
                    wrong_merges.entry(entity).or_default().extend([a.2, b.2]);
                }
            }
        }
        i = j;
    }

    // False negatives: same-person pairs split across entities.
    let mut by_person: Vec<(PersonId, EntityId)> = triples.iter().map(|&(e, p, _)| (p, e)).collect();
    by_person.sort_unstable();
    let mut fn_pairs = 0u64;
    let mut i = 0;
    while i < by_person.len() {
        let person = by_person[i].0;
        let mut j = i;
        while j < by_person.len() && by_person[j].0 == person {
            j += 1;
        }
        let group = &by_person[i..j];
        for (a_idx, a) in group.iter().enumerate() {
            for b in &group[a_idx + 1..] {
                if a.1 != b.1 {
                    fn_pairs += 1;
                }
            }
        }
        i = j;
    }

    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };

    let undetected_collisions = wrong_merges
        .into_values()
        .map(|mut obs| {
            obs.sort_unstable();
            obs.dedup();
            let alias = alias_of.get(&obs[0]).copied().unwrap_or(AliasCode {
                name3: [PAD; 3],
                surname3: [PAD; 3],
                phone4: PHONE_SENTINEL,
            });
            ConflictRecord {
                alias,
                observations: obs,
                reason: ConflictReason::SameCodeDifferentPeople,
                merged: true,
            }
        })
        .collect();

    AuditMetrics {
        precision: Some(ratio(tp, tp + fp)),
        recall: Some(ratio(tp, tp + fn_pairs)),
        merge_errors: Some(fp),
        split_errors: Some(fn_pairs),
        same_code_conflicts,
        fuzzy_candidates,
        undetected_collisions,
    }
}
