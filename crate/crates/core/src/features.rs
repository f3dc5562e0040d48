//! Feature preprocessing: corpus descriptor files, vocabulary construction,
//! binary encoding with a one-hot location block, and train/test splitting.
//!
//! Corpus JSON layout:
//!
//! ```json
//! {
//!   "zones": ["Z0", "Z1"],
//!   "samples": [
//!     {"id": "app-1", "permissions": ["ACCESS_GPS"], "api_calls": [],
//!      "behaviors": [], "zone": "Z0", "label": 1}
//!   ]
//! }
//! ```
//!
//! `label` is optional (0 = benign, 1 = malicious). Encoded columns are the
//! sorted permissions, then sorted API calls, then sorted behaviors, then the
//! sorted zones.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, SeededRng};

/// Feature names seeding the generator vocabulary, in listed order. The list
/// repeats six names; [`default_feature_names`] removes the repeats.
pub const SEED_FEATURE_LIST: [&str; 20] = [
    "INVOKE_INTERNAL_HANDLER",
    "ACCESS_NORTON_SECURITY",
    "READ_FRAME_BUFFER",
    "WRITE_GMAIL",
    "READ_PROFILE",
    "WAVE_LOCK",
    "ACCESS_WIMAX_STATE",
    "VIBRATION",
    "ACCESS_GPS",
    "ACCESS_COARSE_UPDATES",
    "READ_PROFILE",
    "ACCESS_WIMAX_STATE",
    "ACCESS_COARSE_UPDATES",
    "INSTALL_THEME",
    "RECEIVE_BROADCASTS",
    "ACCESS_GPS",
    "READ_INPUT_STATE",
    "WAVE_LOCK",
    "ACCESS_NORTON_SECURITY",
    "UNLOCK",
];

/// [`SEED_FEATURE_LIST`] with repeats dropped, first occurrence order kept.
pub fn default_feature_names() -> Vec<&'static str> {
    let mut seen = HashSet::new();
    SEED_FEATURE_LIST
        .iter()
        .copied()
        .filter(|n| seen.insert(*n))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSample {
    pub id: String,
    pub permissions: BTreeSet<String>,
    pub api_calls: BTreeSet<String>,
    pub behaviors: BTreeSet<String>,
    pub zone: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub zones: Vec<String>,
    pub samples: Vec<AppSample>,
}

impl Corpus {
    pub fn is_labeled(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.label.is_some())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("corpus serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    parse_corpus(&value)
}

pub fn parse_corpus(value: &Value) -> Result<Corpus> {
    let top = value
        .as_object()
        .ok_or_else(|| Error::InvalidInput("corpus must be a JSON object".into()))?;
    if let Some(k) = top.keys().find(|k| *k != "zones" && *k != "samples") {
        return Err(Error::InvalidInput(format!("unexpected top-level key `{k}`")));
    }
    let zones = top
        .get("zones")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("`zones` must be an array of strings".into()))?
        .iter()
        .map(|z| z.as_str().map(str::to_owned))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::InvalidInput("`zones` must be an array of strings".into()))?;
    let declared: HashSet<&str> = zones.iter().map(String::as_str).collect();
    if declared.len() != zones.len() {
        return Err(Error::InvalidInput("`zones` contains duplicates".into()));
    }
    let records = top
        .get("samples")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("`samples` must be an array".into()))?;

    let mut ids = HashSet::new();
    let mut samples = Vec::with_capacity(records.len());
    for (index, record) in records.iter().enumerate() {
        let sample = parse_sample(index, record)?;
        if !declared.contains(sample.zone.as_str()) {
            return Err(bad(index, "zone", format!("`{}` is not a declared zone", sample.zone)));
        }
        if !ids.insert(sample.id.clone()) {
            return Err(Error::DuplicateId(sample.id));
        }
        samples.push(sample);
    }
    Ok(Corpus { zones, samples })
}

fn bad(index: usize, field: &str, message: impl Into<String>) -> Error {
    Error::MalformedRecord {
        index,
        field: field.to_owned(),
        message: message.into(),
    }
}

fn parse_sample(index: usize, record: &Value) -> Result<AppSample> {
    const KEYS: [&str; 6] = ["id", "permissions", "api_calls", "behaviors", "zone", "label"];
    let obj = record
        .as_object()
        .ok_or_else(|| bad(index, "<record>", "expected an object"))?;
    if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(bad(index, k, "unexpected key"));
    }
    let string = |field: &str| -> Result<String> {
        obj.get(field)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| bad(index, field, "expected a string"))
    };
    let names = |field: &str| -> Result<BTreeSet<String>> {
        let arr = obj
            .get(field)
            .and_then(Value::as_array)
            .ok_or_else(|| bad(index, field, "expected an array of strings"))?;
        arr.iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| bad(index, field, "expected an array of strings"))
            })
            .collect()
    };
    let id = string("id")?;
    if id.is_empty() {
        return Err(bad(index, "id", "must be nonempty"));
    }
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(l @ (0 | 1)) => Some(l as u8),
            _ => return Err(bad(index, "label", "must be the integer 0 or 1")),
        },
    };
    Ok(AppSample {
        id,
        permissions: names("permissions")?,
        api_calls: names("api_calls")?,
        behaviors: names("behaviors")?,
        zone: string("zone")?,
        label,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVocabulary {
    pub permissions: Vec<String>,
    pub api_calls: Vec<String>,
    pub behaviors: Vec<String>,
    pub zones: Vec<String>,
}

impl FeatureVocabulary {
    /// Number of non-location columns.
    pub fn feature_count(&self) -> usize {
        self.permissions.len() + self.api_calls.len() + self.behaviors.len()
    }

    pub fn width(&self) -> usize {
        self.feature_count() + self.zones.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        let tagged = |prefix: &str, names: &[String]| {
            names
                .iter()
                .map(|n| format!("{prefix}:{n}"))
                .collect::<Vec<_>>()
        };
        [
            tagged("permission", &self.permissions),
            tagged("api_call", &self.api_calls),
            tagged("behavior", &self.behaviors),
            tagged("zone", &self.zones),
        ]
        .concat()
    }
}

/// Sorted union of every name and zone in the corpus (declared zones included).
pub fn build_vocab(corpus: &Corpus) -> Result<FeatureVocabulary> {
    if corpus.samples.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let mut permissions = BTreeSet::new();
    let mut api_calls = BTreeSet::new();
    let mut behaviors = BTreeSet::new();
    let mut zones: BTreeSet<&str> = corpus.zones.iter().map(String::as_str).collect();
    for s in &corpus.samples {
        permissions.extend(s.permissions.iter().map(String::as_str));
        api_calls.extend(s.api_calls.iter().map(String::as_str));
        behaviors.extend(s.behaviors.iter().map(String::as_str));
        zones.insert(&s.zone);
    }
    let own = |set: BTreeSet<&str>| set.into_iter().map(str::to_owned).collect();
    Ok(FeatureVocabulary {
        permissions: own(permissions),
        api_calls: own(api_calls),
        behaviors: own(behaviors),
        zones: own(zones),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub x: Matrix,
    /// `None` only for a wholly unlabeled corpus.
    pub y: Option<Vec<u8>>,
    pub feature_names: Vec<String>,
    pub sample_ids: Vec<String>,
    pub vocab: FeatureVocabulary,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn labels(&self) -> Result<&[u8]> {
        self.y
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("dataset is unlabeled".into()))
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            x: self.x.select_rows(indices),
            y: self
                .y
                .as_ref()
                .map(|y| indices.iter().map(|&i| y[i]).collect()),
            feature_names: self.feature_names.clone(),
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            vocab: self.vocab.clone(),
        }
    }
}

/// Encodes each sample as one bit per vocabulary feature followed by a one-hot
/// zone block. Names absent from the vocabulary are dropped.
pub fn encode(corpus: &Corpus, vocab: &FeatureVocabulary) -> Result<EncodedDataset> {
    let labeled = corpus.samples.iter().filter(|s| s.label.is_some()).count();
    if labeled != 0 && labeled != corpus.samples.len() {
        return Err(Error::InvalidInput(format!(
            "corpus mixes labeled and unlabeled samples ({labeled} of {} labeled)",
            corpus.samples.len()
        )));
    }
    let width = vocab.width();
    let offsets = [
        0,
        vocab.permissions.len(),
        vocab.permissions.len() + vocab.api_calls.len(),
        vocab.feature_count(),
    ];
    let mut values = vec![0.0; corpus.samples.len() * width];
    for (r, s) in corpus.samples.iter().enumerate() {
        let row = &mut values[r * width..(r + 1) * width];
        let sections = [
            (&s.permissions, &vocab.permissions, offsets[0]),
            (&s.api_calls, &vocab.api_calls, offsets[1]),
            (&s.behaviors, &vocab.behaviors, offsets[2]),
        ];
        for (names, known, offset) in sections {
            for n in names {
                if let Ok(i) = known.binary_search(n) {
                    row[offset + i] = 1.0;
                }
            }
        }
        let z = vocab
            .zones
            .binary_search(&s.zone)
            .map_err(|_| Error::UnknownZone {
                sample: s.id.clone(),
                zone: s.zone.clone(),
            })?;
        row[offsets[3] + z] = 1.0;
    }
    Ok(EncodedDataset {
        x: Matrix::new(corpus.samples.len(), width, values)?,
        y: (labeled > 0).then(|| corpus.samples.iter().map(|s| s.label.unwrap_or(0)).collect()),
        feature_names: vocab.column_names(),
        sample_ids: corpus.samples.iter().map(|s| s.id.clone()).collect(),
        vocab: vocab.clone(),
    })
}

/// Inverse of [`encode`] for rows produced by it.
pub fn decode(ds: &EncodedDataset) -> Result<Vec<AppSample>> {
    let v = &ds.vocab;
    if ds.x.cols() != v.width() {
        return Err(Error::dims(
            "decode",
            format!("{} columns for a vocabulary of width {}", ds.x.cols(), v.width()),
        ));
    }
    let pick = |row: &[f64], names: &[String]| {
        names
            .iter()
            .zip(row)
            .filter(|(_, &b)| b == 1.0)
            .map(|(n, _)| n.clone())
            .collect::<BTreeSet<_>>()
    };
    let p = v.permissions.len();
    let a = p + v.api_calls.len();
    let f = v.feature_count();
    ds.x.iter_rows()
        .enumerate()
        .map(|(r, row)| {
            let zone_col = row[f..]
                .iter()
                .position(|&b| b == 1.0)
                .ok_or_else(|| Error::InvalidInput(format!("row {r} has no zone bit")))?;
            Ok(AppSample {
                id: ds.sample_ids[r].clone(),
                permissions: pick(&row[..p], &v.permissions),
                api_calls: pick(&row[p..a], &v.api_calls),
                behaviors: pick(&row[a..f], &v.behaviors),
                zone: v.zones[zone_col].clone(),
                label: ds.y.as_ref().map(|y| y[r]),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            stratified: true,
        }
    }
}

/// Round half up, with a small allowance so that products like `0.7 * 5`
/// (stored just below 3.5) still round up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor() as usize
}

/// Partitions `ds` into train and test sets. The train set holds
/// `round_half_up(train_fraction * n)` rows. In stratified mode the per-class
/// quotas are allocated by largest remainder (ties to the lower class), so each
/// class lands within one sample of its proportional share. Rows keep their
/// original relative order on both sides.
pub fn split(ds: &EncodedDataset, spec: &SplitSpec) -> Result<(EncodedDataset, EncodedDataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train_fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("cannot split {n} samples")));
    }
    let n_train = round_half_up(spec.train_fraction * n as f64);
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidInput(format!(
            "train_fraction {} leaves an empty side for {n} samples",
            spec.train_fraction
        )));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut train: Vec<usize> = if spec.stratified {
        let y = ds
            .labels()
            .map_err(|_| Error::InvalidInput("stratified split needs labels".into()))?;
        let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, &l) in y.iter().enumerate() {
            classes[l as usize].push(i);
        }
        let exact: Vec<f64> = classes
            .iter()
            .map(|c| c.len() as f64 * n_train as f64 / n as f64)
            .collect();
        let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order = [0usize, 1];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut missing = n_train - quota.iter().sum::<usize>();
        for &c in order.iter().cycle() {
            if missing == 0 {
                break;
            }
            if quota[c] < classes[c].len() {
                quota[c] += 1;
                missing -= 1;
            }
        }
        let mut picked = Vec::with_capacity(n_train);
        for (c, members) in classes.iter_mut().enumerate() {
            rng.shuffle(members);
            picked.extend_from_slice(&members[..quota[c]]);
        }
        picked
    } else {
        let mut perm = rng.permutation(n);
        perm.truncate(n_train);
        perm
    };
    train.sort_unstable();
    let mut in_train = vec![false; n];
    train.iter().for_each(|&i| in_train[i] = true);
    let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    Ok((ds.subset(&train), ds.subset(&test)))
}
