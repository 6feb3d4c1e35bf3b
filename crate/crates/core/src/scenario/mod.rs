//! End-to-end scenario: ingest, preprocess, select and fit mixtures, train the group
//! autoencoders federatedly, then detect.
//!
//! Stages always run in the order balance, normalize, split, gmm, histograms, rbm,
//! federation, threshold, detect. Everything up to `rbm` does not depend on the model
//! kind or learning rate, so sweeps prepare once and train many times.

mod commands;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{generate_synthetic, load_csv, split_client, ClientDataset, SyntheticConfig};
use crate::detection::{compute_threshold, evaluate_client, evaluate_group, ClientEvaluation, GateConfig, Threshold};
use crate::error::{Error, Result};
use crate::features::histogram_batch;
use crate::federation::{group_clients, run_federation, ClientGroup, FederationConfig};
use crate::gmm::{em_seed, fit_em, select_components, ComponentSelection, GmmModel, SelectionConfig};
use crate::matrix::Matrix;
use crate::neural::{Architecture, Autoencoder, ModelKind, RbmConfig, RbmStack};
use crate::preprocess::{fit_normalizer, shapiro_wilk_columns, smote_tomek, NormalityReport, NormalizationParams};
use crate::rng::{derive_seed, tag_of};
use crate::scalar::Scalar;

pub use commands::{cmd_compare, cmd_generate, cmd_report, cmd_run, cmd_sweep_lr, write_run_artifacts};
pub use report::{
    render_comparison_table, render_run_report, render_sweep_table, BalanceSummary, ClientSummary, GroupReport,
    KTiming, RunReport, Setting, SplitSummary, StageTiming, SweepReport, SweepRow, TimingTable,
};

pub const STAGES: [&str; 9] = [
    "balance",
    "normalize",
    "split",
    "gmm",
    "histograms",
    "rbm",
    "federation",
    "threshold",
    "detect",
];

pub const DEFAULT_LR_GRID: [f64; 5] = [0.001, 0.005, 0.01, 0.05, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    /// One CSV file per client.
    Csv { dir: PathBuf, label_column: String },
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synthetic(SyntheticConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub data: DataSource,
    pub smote_tomek: bool,
    pub k_neighbors: usize,
    pub normalize: bool,
    pub shapiro_check: bool,
    pub shapiro_max_n: usize,
    /// Candidate component counts; empty means `default_grid` of the training size.
    pub gmm_grid: Vec<usize>,
    pub selection: SelectionConfig,
    /// Groups smaller than this are flagged in the report (they still train).
    pub min_group_size: usize,
    pub model_kind: ModelKind,
    pub use_rbm_init: bool,
    pub rbm: RbmConfig,
    pub federation: FederationConfig,
    pub lr_grid: Vec<f64>,
    pub gate: GateConfig,
    pub threshold_multiplier: f64,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            smote_tomek: true,
            k_neighbors: crate::preprocess::DEFAULT_K_NEIGHBORS,
            normalize: true,
            shapiro_check: true,
            shapiro_max_n: crate::preprocess::DEFAULT_MAX_N,
            gmm_grid: Vec::new(),
            selection: SelectionConfig::default(),
            min_group_size: 5,
            model_kind: ModelKind::Vae,
            use_rbm_init: true,
            rbm: RbmConfig::default(),
            federation: FederationConfig::default(),
            lr_grid: DEFAULT_LR_GRID.to_vec(),
            gate: GateConfig::default(),
            threshold_multiplier: crate::detection::DEFAULT_THRESHOLD_MULTIPLIER,
            output_dir: None,
            seed: 0,
            deterministic: false,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Pushes the top-level seed and determinism flag into the nested configs. The
    /// report echoes the resolved config.
    pub fn resolved(mut self) -> Self {
        self.federation.seed = derive_seed(self.seed, tag_of("federation"));
        self.federation.deterministic = self.deterministic;
        if let DataSource::Synthetic(s) = &mut self.data {
            s.seed = derive_seed(self.seed, tag_of("data"));
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.federation.validate()?;
        if self.k_neighbors == 0 {
            return Err(Error::invalid("k_neighbors", "must be positive"));
        }
        if self.gmm_grid.contains(&0) {
            return Err(Error::invalid("gmm_grid", "component counts must be positive"));
        }
        if !(self.threshold_multiplier.is_finite()) {
            return Err(Error::invalid("threshold_multiplier", "must be finite"));
        }
        if self.lr_grid.iter().any(|lr| !lr.is_finite() || *lr < 0.0) {
            return Err(Error::invalid("lr_grid", "learning rates must be non-negative"));
        }
        Ok(())
    }
}

/// Seed for one client at one stage.
pub fn stage_seed(seed: u64, stage: &str, client_id: &str) -> u64 {
    derive_seed(derive_seed(seed, tag_of(stage)), tag_of(client_id))
}

/// One client after all shared stages.
#[derive(Debug, Clone)]
pub struct PreparedClient<T> {
    /// Normalized (when enabled) and split.
    pub dataset: ClientDataset<T>,
    pub raw_counts: (usize, usize),
    pub balance: Option<BalanceSummary>,
    pub normalizer: Option<NormalizationParams<T>>,
    pub selection: ComponentSelection,
    pub gmm: GmmModel<T>,
    pub normality: Option<NormalityReport>,
    pub histograms: Matrix<T>,
    pub rbm: Option<RbmStack<T>>,
    pub rbm_seconds: f64,
}

impl<T: Scalar> PreparedClient<T> {
    pub fn id(&self) -> &str {
        &self.dataset.client_id
    }

    /// Starting weights for `kind`: the unrolled RBM stack, or Glorot-uniform.
    pub fn initial_model(&self, kind: ModelKind, seed: u64) -> Result<Autoencoder<T>> {
        match &self.rbm {
            Some(stack) => Autoencoder::from_weights(kind, stack.unroll(kind)),
            None => Ok(Autoencoder::random(
                kind,
                Architecture::for_input(self.histograms.cols()),
                stage_seed(seed, "init", self.id()),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub config: ScenarioConfig,
    pub clients: Vec<PreparedClient<T>>,
    pub groups: Vec<ClientGroup>,
    pub stage_seconds: BTreeMap<String, f64>,
}

impl<T> Prepared<T> {
    fn client_index(&self) -> BTreeMap<&str, usize>
    where
        T: Scalar,
    {
        self.clients.iter().enumerate().map(|(i, c)| (c.id(), i)).collect()
    }
}

fn map_clients<I, O, F>(deterministic: bool, items: Vec<I>, f: F) -> Result<Vec<O>>
where
    I: Send,
    O: Send,
    F: Fn(I) -> Result<O> + Sync + Send,
{
    if deterministic {
        items.into_iter().map(f).collect()
    } else {
        items.into_par_iter().map(f).collect()
    }
}

fn timed<R>(stages: &mut BTreeMap<String, f64>, stage: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
    let start = Instant::now();
    let out = f().map_err(|e| e.at_stage(stage))?;
    *stages.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
    Ok(out)
}

/// Reads the configured data source.
pub fn load_clients<T: Scalar>(cfg: &ScenarioConfig) -> Result<Vec<ClientDataset<T>>> {
    match &cfg.data {
        DataSource::Synthetic(s) => generate_synthetic(s),
        DataSource::Csv { dir, label_column } => {
            let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            let mut paths = Vec::new();
            for entry in entries {
                let path = entry.map_err(|e| Error::io(dir, e))?.path();
                if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                    paths.push(path);
                }
            }
            paths.sort();
            if paths.is_empty() {
                return Err(Error::EmptyDataset);
            }
            paths.iter().map(|p| load_csv(p, label_column)).collect()
        }
    }
}

struct Stage1<T> {
    ds: ClientDataset<T>,
    raw_counts: (usize, usize),
    balance: Option<BalanceSummary>,
    normalizer: Option<NormalizationParams<T>>,
}

struct Stage2<T> {
    base: Stage1<T>,
    selection: ComponentSelection,
    gmm: GmmModel<T>,
    normality: Option<NormalityReport>,
}

/// Runs every stage that does not depend on model kind or learning rate.
pub fn prepare<T: Scalar>(cfg: &ScenarioConfig) -> Result<Prepared<T>> {
    let cfg = cfg.clone().resolved();
    cfg.validate()?;
    let det = cfg.deterministic;
    let seed = cfg.seed;
    let mut stages = BTreeMap::new();
    let datasets = load_clients::<T>(&cfg)?;
    if datasets.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let balanced = timed(&mut stages, "balance", || {
        map_clients(det, datasets, |mut ds| {
            let raw_counts = (ds.count_benign(), ds.count_attacks());
            let mut balance = None;
            if cfg.smote_tomek {
                if raw_counts.0 == 0 || raw_counts.1 == 0 {
                    log::warn!("client {}: single class, skipping SMOTE-Tomek", ds.client_id);
                } else {
                    let set = smote_tomek(&ds.samples, cfg.k_neighbors, stage_seed(seed, "balance", &ds.client_id))?;
                    let (benign, attacks) = set.class_counts();
                    balance = Some(BalanceSummary {
                        synthetic_added: set.synthetic_added,
                        tomek_links_removed: set.tomek_links_removed,
                        benign,
                        attacks,
                    });
                    ds = ClientDataset::new(ds.client_id, ds.feature_names, set.samples);
                }
            }
            Ok(Stage1 {
                ds,
                raw_counts,
                balance,
                normalizer: None,
            })
        })
    })?;

    let normalized = timed(&mut stages, "normalize", || {
        map_clients(det, balanced, |mut s| {
            if cfg.normalize {
                let params = fit_normalizer(&s.ds.samples)?;
                s.ds.samples = params.apply_all(&s.ds.samples)?;
                s.normalizer = Some(params);
            }
            Ok(s)
        })
    })?;

    let split = timed(&mut stages, "split", || {
        map_clients(det, normalized, |mut s| {
            let id = s.ds.client_id.clone();
            s.ds = split_client(s.ds, stage_seed(seed, "split", &id))?;
            Ok(s)
        })
    })?;

    let fitted = timed(&mut stages, "gmm", || {
        map_clients(det, split, |s| {
            let id = s.ds.client_id.clone();
            let train = s.ds.train_matrix();
            let grid = if cfg.gmm_grid.is_empty() {
                crate::gmm::default_grid(train.rows())
            } else {
                cfg.gmm_grid.clone()
            };
            let gmm_seed = stage_seed(seed, "gmm", &id);
            let selection = select_components(&train, &grid, &cfg.selection, gmm_seed)?;
            let gmm = fit_em(&train, selection.best_k, &cfg.selection.em, em_seed(gmm_seed, selection.best_k))?;
            let normality = if cfg.shapiro_check {
                match shapiro_wilk_columns(&train, cfg.shapiro_max_n, stage_seed(seed, "shapiro", &id)) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        log::warn!("client {id}: normality check skipped: {e}");
                        None
                    }
                }
            } else {
                None
            };
            log::info!("client {id}: best k = {}", selection.best_k);
            Ok(Stage2 {
                base: s,
                selection,
                gmm,
                normality,
            })
        })
    })?;

    let with_hist = timed(&mut stages, "histograms", || {
        map_clients(det, fitted, |s| {
            let h = histogram_batch(&s.base.ds.train_matrix(), &s.gmm)?;
            Ok((s, h))
        })
    })?;

    let clients = timed(&mut stages, "rbm", || {
        map_clients(det, with_hist, |(s, histograms)| {
            let start = Instant::now();
            let rbm = if cfg.use_rbm_init {
                let arch = Architecture::for_input(histograms.cols());
                Some(RbmStack::train(
                    &histograms,
                    arch,
                    &cfg.rbm,
                    stage_seed(seed, "rbm", &s.base.ds.client_id),
                )?)
            } else {
                None
            };
            Ok(PreparedClient {
                dataset: s.base.ds,
                raw_counts: s.base.raw_counts,
                balance: s.base.balance,
                normalizer: s.base.normalizer,
                selection: s.selection,
                gmm: s.gmm,
                normality: s.normality,
                histograms,
                rbm,
                rbm_seconds: start.elapsed().as_secs_f64(),
            })
        })
    })?;

    let selections: BTreeMap<String, ComponentSelection> = clients
        .iter()
        .map(|c| (c.id().to_string(), c.selection.clone()))
        .collect();
    if selections.len() != clients.len() {
        return Err(Error::invalid("data", "client ids must be unique"));
    }
    let groups = group_clients(&selections, cfg.min_group_size);
    Ok(Prepared {
        config: cfg,
        clients,
        groups,
        stage_seconds: stages,
    })
}

/// Results of one federated training and detection pass over every group.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub groups: Vec<GroupReport>,
    pub models: BTreeMap<String, Autoencoder<T>>,
    pub thresholds: BTreeMap<String, Threshold>,
    pub evaluations: Vec<ClientEvaluation>,
    pub stage_seconds: BTreeMap<String, f64>,
}

/// Federation, threshold and detection for every group with the given settings.
pub fn train_and_detect<T: Scalar>(
    prep: &Prepared<T>,
    kind: ModelKind,
    fed: &FederationConfig,
) -> Result<TrainOutcome<T>> {
    let cfg = &prep.config;
    let index = prep.client_index();
    let mut stages = BTreeMap::new();
    let mut groups = Vec::with_capacity(prep.groups.len());
    let mut models = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    let mut evaluations = Vec::new();
    for group in &prep.groups {
        let members: Vec<&PreparedClient<T>> = group.client_ids.iter().map(|id| &prep.clients[index[id.as_str()]]).collect();
        let result = timed(&mut stages, "federation", || {
            let histograms: BTreeMap<String, Matrix<T>> = members
                .iter()
                .map(|c| (c.id().to_string(), c.histograms.clone()))
                .collect();
            let initial = members
                .iter()
                .map(|c| Ok((c.id().to_string(), c.initial_model(kind, cfg.seed)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            run_federation(group, &histograms, &initial, fed)
        })?;
        let group_thresholds = timed(&mut stages, "threshold", || {
            map_clients(cfg.deterministic, members.clone(), |c| {
                compute_threshold(&result.models[c.id()], &c.histograms, cfg.threshold_multiplier)
            })
        })?;
        let group_evals = timed(&mut stages, "detect", || {
            map_clients(cfg.deterministic, members.iter().zip(&group_thresholds).collect(), |(c, th)| {
                evaluate_client(&c.dataset, &c.gmm, &result.models[c.id()], th, &cfg.gate)
            })
        })?;
        let evaluation = evaluate_group(&group_evals)?;
        groups.push(GroupReport {
            k: group.k,
            client_ids: group.client_ids.clone(),
            below_min_size: group.below_min_size,
            model_kind: kind,
            lr: fed.lr,
            theta: fed.theta,
            aggregation: fed.aggregation,
            evaluation,
            rounds: result.rounds.clone(),
        });
        for (m, th) in members.iter().zip(group_thresholds) {
            thresholds.insert(m.id().to_string(), th);
        }
        evaluations.extend(group_evals);
        models.extend(result.models);
    }
    Ok(TrainOutcome {
        groups,
        models,
        thresholds,
        evaluations,
        stage_seconds: stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig {
            data: DataSource::Synthetic(SyntheticConfig::new(3, 60, 0.2, 4, 0)),
            gmm_grid: vec![2, 3, 4],
            deterministic: true,
            ..Default::default()
        };
        cfg.federation.rounds = 3;
        cfg
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg = ScenarioConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
        let partial = ScenarioConfig::from_json(r#"{"seed": 7, "model_kind": "Ae"}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.model_kind, ModelKind::Ae);
        assert_eq!(partial.federation.rounds, 30);
        assert!(ScenarioConfig::from_json(r#"{"data": {"synthetic": {}, "csv": {}}}"#).is_err());
    }

    #[test]
    fn resolution_propagates_seed() {
        let cfg = ScenarioConfig {
            seed: 42,
            deterministic: true,
            ..Default::default()
        }
        .resolved();
        assert!(cfg.federation.deterministic);
        assert_eq!(cfg.federation.seed, derive_seed(42, tag_of("federation")));
    }

    #[test]
    fn prepare_groups_partition_clients() {
        let prep = prepare::<f64>(&small_config()).unwrap();
        assert_eq!(prep.clients.len(), 3);
        let mut ids: Vec<&String> = prep.groups.iter().flat_map(|g| &g.client_ids).collect();
        ids.sort();
        assert_eq!(ids.len(), 3);
        for c in &prep.clients {
            assert_eq!(c.histograms.cols(), c.selection.best_k);
            assert_eq!(c.histograms.rows(), c.dataset.benign_train.len());
        }
        for stage in &STAGES[..6] {
            assert!(prep.stage_seconds.contains_key(*stage), "{stage}");
        }
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let mut cfg = small_config();
        cfg.gmm_grid = vec![10_000];
        let err = prepare::<f64>(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "gmm", .. }), "{err}");
    }
}
