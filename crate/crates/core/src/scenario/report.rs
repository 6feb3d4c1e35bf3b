use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Prepared, ScenarioConfig, TrainOutcome, STAGES};
use crate::dataio::SplitWarning;
use crate::detection::{render_metrics_table, GroupEvaluation, MeanMetrics, Threshold};
use crate::federation::{Aggregation, RoundLog};
use crate::gmm::ComponentSelection;
use crate::neural::ModelKind;
use crate::preprocess::NormalityReport;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub synthetic_added: usize,
    pub tomek_links_removed: usize,
    pub benign: usize,
    pub attacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub benign_train: usize,
    pub benign_test: usize,
    pub attack_test: usize,
    pub warning: Option<SplitWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub client_id: String,
    pub raw_benign: usize,
    pub raw_attacks: usize,
    pub balance: Option<BalanceSummary>,
    pub split: SplitSummary,
    pub selection: ComponentSelection,
    pub normality: Option<NormalityReport>,
    pub threshold: Option<Threshold>,
    pub rbm_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub k: usize,
    pub client_ids: Vec<String>,
    pub below_min_size: bool,
    pub model_kind: ModelKind,
    pub lr: f64,
    pub theta: f64,
    pub aggregation: Aggregation,
    pub evaluation: GroupEvaluation,
    pub rounds: Vec<RoundLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Mean seconds per candidate component count, over the clients that tried it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTiming {
    pub k: usize,
    pub clients: usize,
    pub gmm_fit_seconds: f64,
    pub silhouette_seconds: f64,
    /// Mean RBM pretraining time of clients whose best K this is.
    pub rbm_seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub stages: Vec<StageTiming>,
    pub per_k: Vec<KTiming>,
}

impl TimingTable {
    pub fn build<T: Scalar>(prep: &Prepared<T>, train_stages: &[&BTreeMap<String, f64>]) -> Self {
        let mut totals = prep.stage_seconds.clone();
        for s in train_stages {
            for (k, v) in s.iter() {
                *totals.entry(k.clone()).or_default() += v;
            }
        }
        let stages = STAGES
            .iter()
            .map(|s| StageTiming {
                stage: s.to_string(),
                seconds: totals.get(*s).copied().unwrap_or(0.0),
            })
            .collect();
        let mut acc: BTreeMap<usize, (usize, f64, f64, usize, f64)> = BTreeMap::new();
        for c in &prep.clients {
            let sel = &c.selection;
            for (i, &k) in sel.tested_ks.iter().enumerate() {
                let e = acc.entry(k).or_default();
                e.0 += 1;
                e.1 += sel.fit_seconds[i];
                e.2 += sel.silhouette_seconds[i];
            }
            let e = acc.entry(sel.best_k).or_default();
            e.3 += 1;
            e.4 += c.rbm_seconds;
        }
        let per_k = acc
            .into_iter()
            .map(|(k, (n, fit, sil, nb, rbm))| KTiming {
                k,
                clients: n,
                gmm_fit_seconds: if n > 0 { fit / n as f64 } else { 0.0 },
                silhouette_seconds: if n > 0 { sil / n as f64 } else { 0.0 },
                rbm_seconds: (nb > 0 && prep.config.use_rbm_init).then(|| rbm / nb as f64),
            })
            .collect();
        Self { stages, per_k }
    }

    fn zeroed(&mut self) {
        for s in &mut self.stages {
            s.seconds = 0.0;
        }
        for k in &mut self.per_k {
            k.gmm_fit_seconds = 0.0;
            k.silhouette_seconds = 0.0;
            k.rbm_seconds = k.rbm_seconds.map(|_| 0.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub clients: Vec<ClientSummary>,
    pub groups: Vec<GroupReport>,
    /// Over every client of every group.
    pub overall: GroupEvaluation,
    pub timings: TimingTable,
    /// Relative to the output directory.
    pub artifacts: Vec<String>,
}

fn zero_selection_timings(sel: &mut ComponentSelection) {
    for v in sel
        .timings
        .iter_mut()
        .chain(sel.fit_seconds.iter_mut())
        .chain(sel.silhouette_seconds.iter_mut())
    {
        *v = 0.0;
    }
}

impl RunReport {
    pub fn build<T: Scalar>(prep: &Prepared<T>, outcome: &TrainOutcome<T>) -> crate::Result<Self> {
        let clients = prep
            .clients
            .iter()
            .map(|c| {
                let ds = &c.dataset;
                ClientSummary {
                    client_id: c.id().to_string(),
                    raw_benign: c.raw_counts.0,
                    raw_attacks: c.raw_counts.1,
                    balance: c.balance,
                    split: SplitSummary {
                        benign_train: ds.benign_train.len(),
                        benign_test: ds.benign_test.len(),
                        attack_test: ds.attack_test.len(),
                        warning: ds.split_warning,
                    },
                    selection: c.selection.clone(),
                    normality: c.normality.clone(),
                    threshold: outcome.thresholds.get(c.id()).copied(),
                    rbm_seconds: c.rbm_seconds,
                }
            })
            .collect();
        Ok(Self {
            config: prep.config.clone(),
            clients,
            groups: outcome.groups.clone(),
            overall: crate::detection::evaluate_group(&outcome.evaluations)?,
            timings: TimingTable::build(prep, &[&outcome.stage_seconds]),
            artifacts: Vec::new(),
        })
    }

    /// The same report with every wall-clock field set to zero.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.timings.zeroed();
        for c in &mut r.clients {
            c.rbm_seconds = 0.0;
            zero_selection_timings(&mut c.selection);
        }
        for g in &mut r.groups {
            for l in &mut g.rounds {
                l.wall_clock = 0.0;
            }
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Fed+ with the configured θ.
    Federated,
    /// θ = 1: clients never use the central weights.
    Distributed,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::Federated => "Federated",
            Setting::Distributed => "Distributed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: Setting,
    pub model_kind: ModelKind,
    pub lr: f64,
    pub total: MeanMetrics,
    /// Mean over clients with at least one autoencoder-routed test sample.
    pub autoencoder_part: MeanMetrics,
    pub autoencoder_part_clients: usize,
    pub autoencoder_part_pooled_accuracy: f64,
    pub vae_branch_samples: usize,
}

impl SweepRow {
    pub fn from_outcome<T>(setting: Setting, kind: ModelKind, lr: f64, outcome: &TrainOutcome<T>) -> crate::Result<Self> {
        let all = crate::detection::evaluate_group(&outcome.evaluations)?;
        Ok(Self {
            setting,
            model_kind: kind,
            lr,
            total: all.mean,
            autoencoder_part: all.autoencoder_part_mean,
            autoencoder_part_clients: all.autoencoder_part_clients,
            autoencoder_part_pooled_accuracy: all.autoencoder_part_pooled.accuracy,
            vae_branch_samples: all.autoencoder_part_pooled.confusion.total(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ScenarioConfig,
    pub rows: Vec<SweepRow>,
    pub timings: TimingTable,
}

impl SweepReport {
    pub fn row(&self, setting: Setting, kind: ModelKind, lr: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.setting == setting && r.model_kind == kind && r.lr == lr)
    }

    /// Highest autoencoder-part accuracy over the lr grid for one column.
    pub fn best(&self, setting: Setting, kind: ModelKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.setting == setting && r.model_kind == kind)
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if b.autoencoder_part.accuracy >= r.autoencoder_part.accuracy => Some(b),
                _ => Some(r),
            })
    }

    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.timings.zeroed();
        r
    }
}

fn lr_rows(rows: &[SweepRow]) -> Vec<f64> {
    let mut lrs: Vec<f64> = Vec::new();
    for r in rows {
        if !lrs.contains(&r.lr) {
            lrs.push(r.lr);
        }
    }
    lrs
}

fn grid_table(report: &SweepReport, columns: &[(Setting, ModelKind)], title: &str, value: fn(&SweepRow) -> f64) -> String {
    let names: Vec<String> = columns
        .iter()
        .map(|(s, k)| if columns.len() > 2 { format!("{s} {k}") } else { k.to_string() })
        .collect();
    let width = names.iter().map(String::len).max().unwrap_or(0).max(8);
    let mut out = format!("{title}\n{:<8}", "lr");
    for n in &names {
        let _ = write!(out, " {n:>width$}");
    }
    out.push('\n');
    for lr in lr_rows(&report.rows) {
        let _ = write!(out, "{lr:<8}");
        for &(s, k) in columns {
            let cell = report
                .row(s, k, lr)
                .map_or_else(|| "-".to_string(), |r| format!("{:.4}", value(r)));
            let _ = write!(out, " {cell:>width$}");
        }
        out.push('\n');
    }
    out
}

/// lr rows by model-kind columns.
pub fn render_sweep_table(report: &SweepReport) -> String {
    let setting = report.rows.first().map_or(Setting::Federated, |r| r.setting);
    let cols = [(setting, ModelKind::Vae), (setting, ModelKind::Ae)];
    let mut out = grid_table(report, &cols, "autoencoder-part accuracy", |r| r.autoencoder_part.accuracy);
    out.push('\n');
    out.push_str(&grid_table(report, &cols, "total accuracy", |r| r.total.accuracy));
    out
}

/// lr rows by {Federated, Distributed} × {VAE, AE} columns.
pub fn render_comparison_table(report: &SweepReport) -> String {
    let cols = [
        (Setting::Federated, ModelKind::Vae),
        (Setting::Distributed, ModelKind::Vae),
        (Setting::Federated, ModelKind::Ae),
        (Setting::Distributed, ModelKind::Ae),
    ];
    let mut out = grid_table(report, &cols, "autoencoder-part accuracy", |r| r.autoencoder_part.accuracy);
    out.push('\n');
    out.push_str(&grid_table(report, &cols, "total accuracy", |r| r.total.accuracy));
    out
}

fn render_timings(t: &TimingTable) -> String {
    let mut out = String::from("stage timings (s)\n");
    for s in &t.stages {
        let _ = writeln!(out, "  {:<12} {:>10.4}", s.stage, s.seconds);
    }
    out.push_str("per component count (mean s)\n");
    let _ = writeln!(out, "  {:>4} {:>8} {:>10} {:>10} {:>10}", "k", "clients", "gmm_fit", "silhouette", "rbm");
    for k in &t.per_k {
        let rbm = k.rbm_seconds.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "  {:>4} {:>8} {:>10.4} {:>10.4} {:>10}",
            k.k, k.clients, k.gmm_fit_seconds, k.silhouette_seconds, rbm
        );
    }
    out
}

/// One metrics table per group, then the overall table and timings.
pub fn render_run_report(report: &RunReport) -> String {
    let mut out = String::new();
    for g in &report.groups {
        let flag = if g.below_min_size { " (below minimum group size)" } else { "" };
        let _ = writeln!(
            out,
            "group k={} [{}] {} lr={} theta={}{flag}",
            g.k,
            g.client_ids.join(", "),
            g.model_kind,
            g.lr,
            g.theta
        );
        let mut cols: Vec<(&str, &crate::detection::MetricsReport)> = g
            .evaluation
            .per_client
            .iter()
            .map(|c| (c.client_id.as_str(), &c.total))
            .collect();
        cols.push(("pooled", &g.evaluation.pooled));
        out.push_str(&render_metrics_table(&cols));
        let m = &g.evaluation.mean;
        let _ = writeln!(
            out,
            "mean: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}; autoencoder-part accuracy {:.4} over {} client(s)\n",
            m.accuracy, m.precision, m.recall, m.f1, g.evaluation.autoencoder_part_mean.accuracy, g.evaluation.autoencoder_part_clients
        );
    }
    let m = &report.overall.mean;
    let _ = writeln!(
        out,
        "overall mean: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}\n",
        m.accuracy, m.precision, m.recall, m.f1
    );
    out.push_str(&render_timings(&report.timings));
    out
}
