//! Synthetic app corpora with a planted, location-dependent maliciousness rule.
//!
//! Every sample gets a uniform zone and uniform feature bits. The planted rule
//! looks at `rule_arity` fixed feature columns: a sample is malicious iff those
//! bits equal its zone's target pattern.
//!
//! * zone-conditioned (default): zones come in pairs whose patterns are bitwise
//!   complements, `p` and `!p`, and successive pairs use distinct patterns while
//!   any remain. Each rule bit is then balanced across zones, so no single bit
//!   and no zone alone carries signal; with four zones and two rule bits the
//!   patterns cover all four cells (an XOR of the bits with a zone bit) and the
//!   best linear classifier on balanced data reaches 0.75.
//! * otherwise: one pattern shared by every zone.
//!
//! Draws are accepted until both class quotas are met exactly (rejection
//! budget: 1000 draws per requested sample), then `label_noise · n` labels are
//! flipped. Feature bits come 64 at a time from `next_u64`, lowest bit first.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{default_feature_names, AppSample, Corpus};
use crate::tensor::{mix_seed, SeededRng};

const RULE_STREAM: u64 = 0x5255_4c45;
const SAMPLE_STREAM: u64 = 0x5341_4d50;
const NOISE_STREAM: u64 = 0x4e4f_4953;
const SUITE_STREAM: u64 = 0x5355_4954;

/// Draws allowed per requested sample before generation gives up.
pub const REJECTION_BUDGET: usize = 1000;

/// Benign counts of the ten-corpus sweep; each corpus adds the malicious count.
pub const SUITE_BENIGN_COUNTS: [usize; 10] = [500, 1000, 1500, 2000, 2500, 3000, 3500, 4000, 4500, 5000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub n_malicious: usize,
    pub n_benign: usize,
    pub n_features: usize,
    pub n_zones: usize,
    pub rule_arity: usize,
    pub zone_conditioned: bool,
    pub label_noise: f64,
    pub seed: u64,
    /// Seed of the planted rule; `None` reuses `seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_seed: Option<u64>,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            n_malicious: 500,
            n_benign: 500,
            n_features: 64,
            n_zones: 4,
            rule_arity: 2,
            zone_conditioned: true,
            label_noise: 0.0,
            seed: 0,
            rule_seed: None,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(m));
        if self.n_malicious + self.n_benign == 0 {
            return fail("spec requests no samples".into());
        }
        if self.n_zones == 0 || self.n_features == 0 {
            return fail("n_zones and n_features must be positive".into());
        }
        if self.rule_arity == 0 || self.rule_arity > self.n_features {
            return fail(format!(
                "rule_arity {} must lie in 1..={}",
                self.rule_arity, self.n_features
            ));
        }
        if self.zone_conditioned && self.rule_arity < 2 {
            return fail("a zone-conditioned rule needs rule_arity of at least 2".into());
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return fail(format!("label_noise {} outside [0, 0.5)", self.label_noise));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_malicious + self.n_benign
    }

    fn rule_seed(&self) -> u64 {
        self.rule_seed.unwrap_or(self.seed)
    }

    /// `corpus_<malicious>_<benign>`.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.n_malicious, self.n_benign)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Permission,
    ApiCall,
    Behavior,
}

/// Section and name of generated feature `index`. The first names come from
/// [`default_feature_names`] as permissions; later ones rotate through
/// permission, API call and behavior.
pub fn feature_name(index: usize) -> (Section, String) {
    let seeded = default_feature_names();
    if let Some(n) = seeded.get(index) {
        return (Section::Permission, (*n).to_owned());
    }
    match (index - seeded.len()) % 3 {
        0 => (Section::Permission, format!("PERM_{index:03}")),
        1 => (Section::ApiCall, format!("API_{index:03}")),
        _ => (Section::Behavior, format!("BEHAVIOR_{index:03}")),
    }
}

pub fn zone_name(zone: usize) -> String {
    format!("zone_{zone:02}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFeature {
    pub index: usize,
    pub section: Section,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneRule {
    pub zone: String,
    pub features: Vec<RuleFeature>,
    /// Malicious iff the feature bits equal this pattern position by position.
    pub pattern: Vec<u8>,
}

impl ZoneRule {
    fn decide(&self, bits: impl Iterator<Item = u8>) -> u8 {
        u8::from(bits.eq(self.pattern.iter().copied()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: GenSpec,
    pub rules: Vec<ZoneRule>,
    /// Ids whose label was flipped away from the rule's output.
    pub noise_flipped: Vec<String>,
}

impl GroundTruth {
    pub fn rule_for(&self, zone: &str) -> Option<&ZoneRule> {
        self.rules.iter().find(|r| r.zone == zone)
    }

    /// Label the planted rule assigns to `sample`, read from its name sets.
    pub fn replay(&self, sample: &AppSample) -> Option<u8> {
        let rule = self.rule_for(&sample.zone)?;
        let bits = rule.features.iter().map(|f| {
            let set = match f.section {
                Section::Permission => &sample.permissions,
                Section::ApiCall => &sample.api_calls,
                Section::Behavior => &sample.behaviors,
            };
            u8::from(set.contains(&f.name))
        });
        Some(rule.decide(bits))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }
}

fn plant_rules(spec: &GenSpec) -> Vec<ZoneRule> {
    let mut rng = SeededRng::new(mix_seed(&[spec.rule_seed(), RULE_STREAM]));
    let mut columns: Vec<usize> = (0..spec.n_features).collect();
    for i in 0..spec.rule_arity {
        let j = i + rng.below(spec.n_features - i);
        columns.swap(i, j);
    }
    columns.truncate(spec.rule_arity);
    columns.sort_unstable();
    let features: Vec<RuleFeature> = columns
        .iter()
        .map(|&index| {
            let (section, name) = feature_name(index);
            RuleFeature { index, section, name }
        })
        .collect();

    let patterns = if spec.zone_conditioned {
        complementary_patterns(&mut rng, spec.rule_arity, spec.n_zones)
    } else {
        vec![random_pattern(&mut rng, spec.rule_arity); spec.n_zones]
    };
    patterns
        .into_iter()
        .enumerate()
        .map(|(z, pattern)| ZoneRule {
            zone: zone_name(z),
            features: features.clone(),
            pattern,
        })
        .collect()
}

fn random_pattern(rng: &mut SeededRng, k: usize) -> Vec<u8> {
    (0..k).map(|_| rng.below(2) as u8).collect()
}

fn complementary_patterns(rng: &mut SeededRng, k: usize, n_zones: usize) -> Vec<Vec<u8>> {
    let distinct = if k >= 63 { u64::MAX } else { 1u64 << k };
    let mut out: Vec<Vec<u8>> = Vec::with_capacity(n_zones);
    while out.len() < n_zones {
        let mut p = random_pattern(rng, k);
        let mut tries = 0;
        while out.contains(&p) && (out.len() as u64) < distinct && tries < 1000 {
            p = random_pattern(rng, k);
            tries += 1;
        }
        let complement: Vec<u8> = p.iter().map(|b| b ^ 1).collect();
        out.push(p);
        if out.len() < n_zones {
            out.push(complement);
        }
    }
    out
}

fn draw_bits(rng: &mut SeededRng, n: usize, out: &mut Vec<u8>) {
    out.clear();
    while out.len() < n {
        let word = rng.next_u64();
        let take = (n - out.len()).min(64);
        out.extend((0..take).map(|b| ((word >> b) & 1) as u8));
    }
}

fn to_sample(id: String, zone: usize, bits: &[u8], label: u8) -> AppSample {
    let mut s = AppSample {
        id,
        permissions: Default::default(),
        api_calls: Default::default(),
        behaviors: Default::default(),
        zone: zone_name(zone),
        label: Some(label),
    };
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b == 1) {
        let (section, name) = feature_name(i);
        match section {
            Section::Permission => s.permissions.insert(name),
            Section::ApiCall => s.api_calls.insert(name),
            Section::Behavior => s.behaviors.insert(name),
        };
    }
    s
}

pub fn generate(spec: &GenSpec) -> Result<(Corpus, GroundTruth)> {
    spec.validate()?;
    let rules = plant_rules(spec);
    let mut rng = SeededRng::new(mix_seed(&[spec.seed, SAMPLE_STREAM]));
    let budget = REJECTION_BUDGET * spec.total();
    let quota = [spec.n_benign, spec.n_malicious];
    let mut filled = [0usize; 2];
    let mut samples = Vec::with_capacity(spec.total());
    let mut bits = Vec::with_capacity(spec.n_features);
    let mut draws = 0usize;
    while filled != quota {
        if draws == budget {
            return Err(Error::Infeasible(format!(
                "{draws} draws produced only {} malicious and {} benign samples",
                filled[1], filled[0]
            )));
        }
        draws += 1;
        let zone = rng.below(spec.n_zones);
        draw_bits(&mut rng, spec.n_features, &mut bits);
        let rule = &rules[zone];
        let label = rule.decide(rule.features.iter().map(|f| bits[f.index]));
        if filled[label as usize] < quota[label as usize] {
            filled[label as usize] += 1;
            let id = format!("app_{:05}", samples.len());
            samples.push(to_sample(id, zone, &bits, label));
        }
    }

    let flips = (spec.label_noise * samples.len() as f64).round() as usize;
    let mut noise_rng = SeededRng::new(mix_seed(&[spec.seed, NOISE_STREAM]));
    let mut order = noise_rng.permutation(samples.len());
    order.truncate(flips);
    order.sort_unstable();
    let mut noise_flipped = Vec::with_capacity(flips);
    for i in order {
        let s = &mut samples[i];
        s.label = s.label.map(|l| l ^ 1);
        noise_flipped.push(s.id.clone());
    }

    let corpus = Corpus {
        zones: (0..spec.n_zones).map(zone_name).collect(),
        samples,
    };
    Ok((
        corpus,
        GroundTruth {
            spec: *spec,
            rules,
            noise_flipped,
        },
    ))
}

/// Specs of the ten-corpus sweep: `base.n_malicious` malicious samples against
/// each of [`SUITE_BENIGN_COUNTS`], one shared rule, per-corpus sample seeds.
pub fn suite_specs(base: &GenSpec) -> Vec<GenSpec> {
    SUITE_BENIGN_COUNTS
        .iter()
        .enumerate()
        .map(|(i, &n_benign)| GenSpec {
            n_benign,
            seed: mix_seed(&[base.seed, SUITE_STREAM, i as u64]),
            rule_seed: Some(base.rule_seed()),
            ..*base
        })
        .collect()
}

pub fn generate_suite(base: &GenSpec) -> Result<Vec<(Corpus, GroundTruth)>> {
    suite_specs(base).iter().map(generate).collect()
}

/// Writes `corpus_<m>_<b>.json` and `truth_<m>_<b>.json` under `dir`.
pub fn write_generated(dir: &Path, corpus: &Corpus, truth: &GroundTruth) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = truth.spec.stem();
    let corpus_path = dir.join(format!("corpus_{stem}.json"));
    let truth_path = dir.join(format!("truth_{stem}.json"));
    corpus.write(&corpus_path)?;
    std::fs::write(&truth_path, truth.to_json()).map_err(|e| Error::io(&truth_path, e))?;
    Ok((corpus_path, truth_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_malicious: usize, n_benign: usize) -> GenSpec {
        GenSpec {
            n_malicious,
            n_benign,
            n_features: 20,
            seed: 3,
            ..GenSpec::default()
        }
    }

    fn count(corpus: &Corpus, label: u8) -> usize {
        corpus.samples.iter().filter(|s| s.label == Some(label)).count()
    }

    #[test]
    fn no_malicious_means_all_benign() {
        let (c, _) = generate(&small(0, 50)).unwrap();
        assert_eq!(c.samples.len(), 50);
        assert_eq!(count(&c, 0), 50);
    }

    #[test]
    fn class_counts_are_exact() {
        let (c, _) = generate(&GenSpec { n_benign: 1000, ..GenSpec::default() }).unwrap();
        assert_eq!((count(&c, 1), count(&c, 0)), (500, 1000));
    }

    #[test]
    fn noiseless_labels_replay_from_rule() {
        for zone_conditioned in [true, false] {
            let spec = GenSpec { zone_conditioned, rule_arity: 3, ..small(60, 90) };
            let (c, truth) = generate(&spec).unwrap();
            assert!(truth.noise_flipped.is_empty());
            for s in &c.samples {
                assert_eq!(truth.replay(s), s.label, "{}", s.id);
            }
        }
    }

    #[test]
    fn noise_flips_the_recorded_ids() {
        let spec = GenSpec { label_noise: 0.1, ..small(50, 50) };
        let (c, truth) = generate(&spec).unwrap();
        assert_eq!(truth.noise_flipped.len(), 10);
        for s in &c.samples {
            let flipped = truth.noise_flipped.contains(&s.id);
            assert_eq!(truth.replay(s) != s.label, flipped);
        }
    }

    #[test]
    fn zone_patterns_pair_up_as_complements() {
        let (_, truth) = generate(&small(10, 10)).unwrap();
        let p: Vec<&Vec<u8>> = truth.rules.iter().map(|r| &r.pattern).collect();
        assert_eq!(p.len(), 4);
        for pair in p.chunks(2) {
            assert!(pair[0].iter().zip(pair[1]).all(|(a, b)| a ^ b == 1));
        }
        let mut cells: Vec<&Vec<u8>> = p.clone();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 4);
    }

    #[test]
    fn unconditioned_rule_shares_one_pattern() {
        let spec = GenSpec { zone_conditioned: false, ..small(10, 10) };
        let (_, truth) = generate(&spec).unwrap();
        assert!(truth.rules.iter().all(|r| r.pattern == truth.rules[0].pattern));
    }

    #[test]
    fn infeasible_pattern_reports_error() {
        let spec = GenSpec {
            zone_conditioned: false,
            rule_arity: 40,
            n_features: 40,
            n_malicious: 5,
            n_benign: 5,
            ..GenSpec::default()
        };
        assert!(matches!(generate(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&GenSpec { rule_arity: 1, ..small(5, 5) }).is_err());
        assert!(generate(&GenSpec { label_noise: 0.5, ..small(5, 5) }).is_err());
        assert!(generate(&GenSpec { n_features: 1, ..small(5, 5) }).is_err());
        assert!(generate(&small(0, 0)).is_err());
    }

    #[test]
    fn feature_names_start_with_seed_list() {
        assert_eq!(feature_name(0).1, "INVOKE_INTERNAL_HANDLER");
        assert_eq!(feature_name(13).1, "UNLOCK");
        assert_eq!(feature_name(14), (Section::Permission, "PERM_014".into()));
        assert_eq!(feature_name(15), (Section::ApiCall, "API_015".into()));
        assert_eq!(feature_name(16), (Section::Behavior, "BEHAVIOR_016".into()));
    }

    #[test]
    fn same_spec_same_bytes() {
        let (a, ta) = generate(&small(20, 30)).unwrap();
        let (b, tb) = generate(&small(20, 30)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(ta.to_json(), tb.to_json());
    }

    #[test]
    fn suite_shape_and_shared_rule() {
        let base = GenSpec { n_features: 16, ..GenSpec::default() };
        let specs = suite_specs(&base);
        let totals: Vec<usize> = specs.iter().map(GenSpec::total).collect();
        assert_eq!(totals, (1..=10).map(|i| 500 + 500 * i).collect::<Vec<_>>());
        assert_eq!((specs[0].n_malicious, specs[0].n_benign), (500, 500));
        let suite = generate_suite(&base).unwrap();
        let first_rules = &suite[0].1.rules;
        for (corpus, truth) in &suite {
            assert_eq!(&truth.rules, first_rules);
            for s in &corpus.samples {
                assert_eq!(suite[0].1.replay(s), s.label);
            }
        }
        assert_ne!(suite[0].0.samples[0], suite[1].0.samples[0]);
    }
}
