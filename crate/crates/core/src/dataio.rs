//! Per-vehicle datasets: CSV ingestion, synthetic generation with position-forging
//! attacks, and the benign 80/20 train/test split.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;

/// Position-forging attack families, numbered 1–5 in CSV label columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackKind {
    Constant,
    ConstantOffset,
    Random,
    RandomOffset,
    EventualStop,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::Constant,
        AttackKind::ConstantOffset,
        AttackKind::Random,
        AttackKind::RandomOffset,
        AttackKind::EventualStop,
    ];

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Attack(AttackKind),
    Unlabeled,
}

impl Label {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Label::Benign),
            c => AttackKind::from_code(c).map(Label::Attack),
        }
    }

    pub fn code(self) -> Option<u8> {
        match self {
            Label::Benign => Some(0),
            Label::Attack(k) => Some(k.code()),
            Label::Unlabeled => None,
        }
    }

    pub fn is_attack(self) -> bool {
        matches!(self, Label::Attack(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Sample<T> {
    pub features: Vec<T>,
    pub label: Label,
}

impl<T: Scalar> Sample<T> {
    pub fn new(features: Vec<T>, label: Label) -> Self {
        Self { features, label }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Why a split produced fewer attack test samples than benign test samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitWarning {
    NoAttacks,
    AttackShortfall { wanted: usize, available: usize },
}

/// One vehicle's labeled samples plus its train/test index partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClientDataset<T> {
    pub client_id: String,
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample<T>>,
    pub benign_train: Vec<usize>,
    pub benign_test: Vec<usize>,
    pub attack_test: Vec<usize>,
    pub split_warning: Option<SplitWarning>,
}

impl<T: Scalar> ClientDataset<T> {
    pub fn new(client_id: impl Into<String>, feature_names: Vec<String>, samples: Vec<Sample<T>>) -> Self {
        Self {
            client_id: client_id.into(),
            feature_names,
            samples,
            benign_train: Vec::new(),
            benign_test: Vec::new(),
            attack_test: Vec::new(),
            split_warning: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(self.feature_names.len(), Sample::dim)
    }

    pub fn benign_indices(&self) -> Vec<usize> {
        self.indices_where(|l| l == Label::Benign)
    }

    pub fn attack_indices(&self) -> Vec<usize> {
        self.indices_where(Label::is_attack)
    }

    fn indices_where(&self, pred: impl Fn(Label) -> bool) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(s.label))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_benign(&self) -> usize {
        self.samples.iter().filter(|s| s.label == Label::Benign).count()
    }

    pub fn count_attacks(&self) -> usize {
        self.samples.iter().filter(|s| s.label.is_attack()).count()
    }

    /// Feature matrix of the given sample indices.
    pub fn feature_matrix(&self, indices: &[usize]) -> Matrix<T> {
        Matrix::from_rows(indices.iter().map(|&i| self.samples[i].features.as_slice()))
            .expect("samples share one dimension")
    }

    pub fn train_matrix(&self) -> Matrix<T> {
        self.feature_matrix(&self.benign_train)
    }
}

pub(crate) fn default_feature_names(d: usize) -> Vec<String> {
    const NAMED: [&str; 4] = ["pos_x", "pos_y", "spd_x", "spd_y"];
    (0..d)
        .map(|j| NAMED.get(j).map_or_else(|| format!("f{j}"), |s| s.to_string()))
        .collect()
}

/// Loads one vehicle's CSV log. Every column except `label_column` and an optional
/// `client_id` column is a numeric feature, in header order.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, label_column: &str) -> Result<ClientDataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, &stem, label_column)
}

/// Reader-based variant of [`load_csv`]; `default_id` names the client when the data
/// has no `client_id` column.
pub fn read_csv<T: Scalar, R: Read>(reader: R, default_id: &str, label_column: &str) -> Result<ClientDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let id_idx = headers.iter().position(|h| h == "client_id");
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_idx && Some(c) != id_idx)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::invalid("csv", "no feature columns"));
    }
    let feature_names = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut client_id = None;
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::RaggedRow {
                line,
                expected: headers.len(),
                found: record.len(),
            });
        }
        let raw_label = &record[label_idx];
        let label = parse_label(raw_label).ok_or_else(|| Error::UnknownLabel {
            line,
            value: raw_label.to_string(),
        })?;
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = &record[c];
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .and_then(T::from_f64)
                .ok_or_else(|| Error::MalformedRow {
                    line,
                    column: headers[c].to_string(),
                    value: cell.to_string(),
                })?;
            features.push(v);
        }
        if client_id.is_none() {
            if let Some(i) = id_idx {
                client_id = Some(record[i].to_string()).filter(|s| !s.is_empty());
            }
        }
        samples.push(Sample::new(features, label));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(ClientDataset::new(
        client_id.unwrap_or_else(|| default_id.to_string()),
        feature_names,
        samples,
    ))
}

fn parse_label(raw: &str) -> Option<Label> {
    let code = match raw.parse::<u8>() {
        Ok(c) => c,
        Err(_) => {
            let f = raw.parse::<f64>().ok()?;
            if f.fract() != 0.0 || !(0.0..=5.0).contains(&f) {
                return None;
            }
            f as u8
        }
    };
    Label::from_code(code)
}

/// Writes samples in the loader's schema: feature columns then `label`.
/// Unlabeled samples are written with an empty label cell.
pub fn write_csv<T: Scalar, W: Write>(ds: &ClientDataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let names = if ds.feature_names.len() == ds.dim() {
        ds.feature_names.clone()
    } else {
        default_feature_names(ds.dim())
    };
    let mut header = names;
    header.push("label".into());
    w.write_record(&header)?;
    for s in &ds.samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.label.code().map(|c| c.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv<T: Scalar>(ds: &ClientDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, std::io::BufWriter::new(file))
}

/// Parameters of the synthetic vehicular scenario.
///
/// Benign traffic for each client is a sequence of contiguous "driving regimes", each a
/// Gaussian blob in feature space. The first two features are positions; the rest are
/// kinematic quantities. Attacks copy a random benign sample and forge its position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_clients: usize,
    pub benign_per_client: usize,
    /// Fraction of each client's samples that are attacks, in (0, 1).
    pub attack_fraction: f64,
    pub dim: usize,
    pub seed: u64,
    /// Attack kinds assigned round-robin to attack samples.
    pub attack_kinds: Vec<AttackKind>,
    /// Minimum offset of the offset attacks, in units of the client's benign position std.
    pub offset_sigmas: f64,
    pub min_regimes: usize,
    pub max_regimes: usize,
    /// Within-regime std as a fraction of the spread of regime centers.
    pub regime_tightness: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_clients: 6,
            benign_per_client: 400,
            attack_fraction: 0.2,
            dim: 4,
            seed: 0,
            attack_kinds: AttackKind::ALL.to_vec(),
            offset_sigmas: 6.0,
            min_regimes: 2,
            max_regimes: 5,
            regime_tightness: 0.12,
        }
    }
}

impl SyntheticConfig {
    pub fn new(n_clients: usize, benign_per_client: usize, attack_fraction: f64, dim: usize, seed: u64) -> Self {
        Self {
            n_clients,
            benign_per_client,
            attack_fraction,
            dim,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.attack_fraction > 0.0 && self.attack_fraction < 1.0) {
            return Err(Error::invalid("attack_fraction", "must lie in (0, 1)"));
        }
        if self.dim < 2 {
            return Err(Error::invalid("dim", "need at least two position features"));
        }
        if self.benign_per_client < 20 {
            return Err(Error::invalid("benign_per_client", "must be at least 20"));
        }
        if self.n_clients == 0 {
            return Err(Error::invalid("n_clients", "must be positive"));
        }
        if self.attack_kinds.is_empty() {
            return Err(Error::invalid("attack_kinds", "must not be empty"));
        }
        if self.min_regimes == 0 || self.min_regimes > self.max_regimes {
            return Err(Error::invalid("min_regimes", "need 1 <= min_regimes <= max_regimes"));
        }
        Ok(())
    }

    /// Attack count giving `attack_fraction` of the client's total samples.
    pub fn attacks_per_client(&self) -> usize {
        let n = self.benign_per_client as f64;
        (self.attack_fraction * n / (1.0 - self.attack_fraction)).round() as usize
    }
}

const POSITION_CENTER: f64 = 500.0;
const POSITION_SPREAD: f64 = 150.0;
const KINEMATIC_CENTER: f64 = 10.0;
const KINEMATIC_SPREAD: f64 = 4.0;

/// Generates `n_clients` labeled datasets; identical configs give identical output.
pub fn generate_synthetic<T: Scalar>(cfg: &SyntheticConfig) -> Result<Vec<ClientDataset<T>>> {
    cfg.validate()?;
    (0..cfg.n_clients)
        .map(|c| generate_client(cfg, c))
        .collect()
}

fn generate_client<T: Scalar>(cfg: &SyntheticConfig, client: usize) -> Result<ClientDataset<T>> {
    let d = cfg.dim;
    let n = cfg.benign_per_client;
    let mut rng = seeded(derive_seed(cfg.seed, client as u64 + 1));
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let n_regimes = rng.random_range(cfg.min_regimes..=cfg.max_regimes);
    let spread = |j: usize| if j < 2 { POSITION_SPREAD } else { KINEMATIC_SPREAD };
    let centers: Vec<Vec<f64>> = (0..n_regimes)
        .map(|_| {
            (0..d)
                .map(|j| {
                    let base = if j < 2 { POSITION_CENTER } else { KINEMATIC_CENTER };
                    base + spread(j) * unit.sample(&mut rng)
                })
                .collect()
        })
        .collect();

    // Contiguous regime blocks along the benign time sequence.
    let mut benign: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let regime = i * n_regimes / n;
        let row = (0..d)
            .map(|j| centers[regime][j] + cfg.regime_tightness * spread(j) * unit.sample(&mut rng))
            .collect();
        benign.push(row);
    }

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut pos_std = [0.0; 2];
    for j in 0..2 {
        let col: Vec<f64> = benign.iter().map(|r| r[j]).collect();
        for &v in &col {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
        pos_std[j] = crate::scalar::mean_and_population_std(&col).1;
    }
    let fixed_position: [f64; 2] = std::array::from_fn(|j| rng.random_range(lo[j]..=hi[j]));
    let fixed_offset: [f64; 2] =
        std::array::from_fn(|j| cfg.offset_sigmas * pos_std[j] * (1.0 + rng.random::<f64>()));
    // Freeze point of the eventual-stop attack: sample ceil(n/2) of the benign sequence.
    let stop_index = n.div_ceil(2) - 1;
    let stop_position = [benign[stop_index][0], benign[stop_index][1]];

    let n_attacks = cfg.attacks_per_client();
    let mut attacks = Vec::with_capacity(n_attacks);
    for a in 0..n_attacks {
        let kind = cfg.attack_kinds[a % cfg.attack_kinds.len()];
        let mut row = benign[rng.random_range(0..n)].clone();
        match kind {
            AttackKind::Constant => row[..2].copy_from_slice(&fixed_position),
            AttackKind::ConstantOffset => {
                for j in 0..2 {
                    row[j] += fixed_offset[j];
                }
            }
            AttackKind::Random => {
                for j in 0..2 {
                    row[j] = rng.random_range(lo[j]..=hi[j]);
                }
            }
            AttackKind::RandomOffset => {
                for j in 0..2 {
                    row[j] += cfg.offset_sigmas * pos_std[j] * (1.0 + rng.random::<f64>());
                }
            }
            AttackKind::EventualStop => row[..2].copy_from_slice(&stop_position),
        }
        attacks.push((row, kind));
    }

    let to_t = |row: Vec<f64>| -> Vec<T> { row.into_iter().map(T::lit).collect() };
    let samples = benign
        .into_iter()
        .map(|r| Sample::new(to_t(r), Label::Benign))
        .chain(
            attacks
                .into_iter()
                .map(|(r, k)| Sample::new(to_t(r), Label::Attack(k))),
        )
        .collect();
    Ok(ClientDataset::new(
        format!("client_{client:03}"),
        default_feature_names(d),
        samples,
    ))
}

/// Shuffled 80/20 split of benign samples; the attack test set is drawn to match the
/// benign test size (or all attacks, when fewer exist).
pub fn split_client<T: Scalar>(mut ds: ClientDataset<T>, seed: u64) -> Result<ClientDataset<T>> {
    let mut rng = seeded(seed);
    let mut benign = ds.benign_indices();
    if benign.len() < 5 {
        return Err(Error::TooFewSamples {
            needed: 5,
            got: benign.len(),
        });
    }
    benign.shuffle(&mut rng);
    let n_train = benign.len() * 4 / 5;
    let test = benign.split_off(n_train);
    let mut attacks = ds.attack_indices();
    attacks.shuffle(&mut rng);
    let wanted = test.len();
    ds.split_warning = match attacks.len() {
        0 => Some(SplitWarning::NoAttacks),
        a if a < wanted => Some(SplitWarning::AttackShortfall {
            wanted,
            available: a,
        }),
        _ => None,
    };
    attacks.truncate(wanted);
    if let Some(w) = ds.split_warning {
        log::warn!("client {}: {:?}", ds.client_id, w);
    }
    ds.benign_train = benign;
    ds.benign_test = test;
    ds.attack_test = attacks;
    Ok(ds)
}
