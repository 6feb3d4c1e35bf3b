//! Threshold, likelihood-gated classification and detection metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataio::ClientDataset;
use crate::error::{Error, Result};
use crate::features::histogram_one;
use crate::gmm::GmmModel;
use crate::matrix::Matrix;
use crate::neural::Autoencoder;
use crate::scalar::{mean_and_population_std, Scalar};

pub const DEFAULT_THRESHOLD_MULTIPLIER: f64 = 0.01;
pub const DEFAULT_EPS_ZERO: f64 = 1e-12;

/// `th = mean(RE) + multiplier·std(RE)` with the population std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub th: f64,
    pub mean_re: f64,
    pub std_re: f64,
    pub multiplier: f64,
}

impl Threshold {
    pub fn from_errors(errors: &[f64], multiplier: f64) -> Result<Self> {
        if errors.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: errors.len(),
            });
        }
        let (mean_re, std_re) = mean_and_population_std(errors);
        Ok(Self {
            th: mean_re + multiplier * std_re,
            mean_re,
            std_re,
            multiplier,
        })
    }
}

/// Reconstruction errors (noise-free forward pass) of every row.
pub fn reconstruction_errors<T: Scalar>(model: &Autoencoder<T>, histograms: &Matrix<T>) -> Result<Vec<f64>> {
    histograms
        .iter_rows()
        .map(|h| model.reconstruction_error(h).map(|e| e.as_f64()))
        .collect()
}

pub fn compute_threshold<T: Scalar>(model: &Autoencoder<T>, train_histograms: &Matrix<T>, multiplier: f64) -> Result<Threshold> {
    if train_histograms.rows() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: train_histograms.rows(),
        });
    }
    Threshold::from_errors(&reconstruction_errors(model, train_histograms)?, multiplier)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    Benign,
    Anomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    GateHigh,
    GateZero,
    VaeBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub class: Class,
    pub route: Route,
    pub density: f64,
    /// Only set on the autoencoder branch.
    pub re: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// Densities at or above this are benign without consulting the autoencoder.
    pub high: f64,
    /// Densities at or below this count as zero.
    pub eps_zero: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            high: 1.0,
            eps_zero: DEFAULT_EPS_ZERO,
        }
    }
}

impl GateConfig {
    /// The gate decision for density `p`, or `None` when the autoencoder must decide.
    pub fn route(&self, p: f64) -> Option<Verdict> {
        let gated = |class, route| {
            Some(Verdict {
                class,
                route,
                density: p,
                re: None,
            })
        };
        if p >= self.high {
            gated(Class::Benign, Route::GateHigh)
        } else if p <= self.eps_zero {
            gated(Class::Anomalous, Route::GateZero)
        } else {
            None
        }
    }
}

/// Autoencoder-branch verdict: anomalous iff `re > th`.
pub fn branch_verdict(p: f64, re: f64, th: &Threshold) -> Verdict {
    Verdict {
        class: if re > th.th { Class::Anomalous } else { Class::Benign },
        route: Route::VaeBranch,
        density: p,
        re: Some(re),
    }
}

pub fn classify<T: Scalar>(
    x: &[T],
    gmm: &GmmModel<T>,
    model: &Autoencoder<T>,
    th: &Threshold,
    gate: &GateConfig,
) -> Result<Verdict> {
    let p = gmm.density(x)?.as_f64();
    if let Some(v) = gate.route(p) {
        return Ok(v);
    }
    let h = histogram_one(x, gmm)?;
    let re = model.reconstruction_error(h.as_slice())?.as_f64();
    Ok(branch_verdict(p, re, th))
}

/// Positive class is `Anomalous`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn record(&mut self, actual_attack: bool, predicted: Class) {
        match (actual_attack, predicted) {
            (true, Class::Anomalous) => self.tp += 1,
            (true, Class::Benign) => self.fn_ += 1,
            (false, Class::Anomalous) => self.fp += 1,
            (false, Class::Benign) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// The same counts with benign taken as the positive class.
    pub fn swap_classes(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// Ratios with a zero denominator are reported as 0 and listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: Vec<String>,
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let mut undefined = Vec::new();
        let mut ratio = |name: &str, num: f64, den: f64| {
            if den > 0.0 {
                num / den
            } else {
                undefined.push(name.to_string());
                0.0
            }
        };
        let c = confusion;
        let accuracy = ratio("accuracy", (c.tp + c.tn) as f64, c.total() as f64);
        let precision = ratio("precision", c.tp as f64, (c.tp + c.fp) as f64);
        let recall = ratio("recall", c.tp as f64, (c.tp + c.fn_) as f64);
        let f1 = ratio("f1", 2.0 * precision * recall, precision + recall);
        Self {
            confusion,
            accuracy,
            precision,
            recall,
            f1,
            undefined,
        }
    }

    pub fn is_defined(&self, metric: &str) -> bool {
        !self.undefined.iter().any(|m| m == metric)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCounts {
    pub gate_high: usize,
    pub gate_zero: usize,
    pub vae_branch: usize,
}

impl RouteCounts {
    fn record(&mut self, route: Route) {
        match route {
            Route::GateHigh => self.gate_high += 1,
            Route::GateZero => self.gate_zero += 1,
            Route::VaeBranch => self.vae_branch += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEvaluation {
    pub client_id: String,
    pub total: MetricsReport,
    /// Restricted to test samples the gate passed on to the autoencoder.
    pub autoencoder_part: MetricsReport,
    pub routes: RouteCounts,
    pub threshold: Threshold,
}

/// Tallies `(actual_attack, verdict)` pairs.
pub fn evaluate_verdicts(client_id: &str, verdicts: &[(bool, Verdict)], threshold: Threshold) -> ClientEvaluation {
    let mut total = ConfusionMatrix::default();
    let mut branch = ConfusionMatrix::default();
    let mut routes = RouteCounts::default();
    for &(attack, v) in verdicts {
        total.record(attack, v.class);
        routes.record(v.route);
        if v.route == Route::VaeBranch {
            branch.record(attack, v.class);
        }
    }
    ClientEvaluation {
        client_id: client_id.to_string(),
        total: MetricsReport::from_confusion(total),
        autoencoder_part: MetricsReport::from_confusion(branch),
        routes,
        threshold,
    }
}

/// Classifies the client's benign and attack test samples. `ds` must already be
/// normalized the way `gmm` was fitted.
pub fn evaluate_client<T: Scalar>(
    ds: &ClientDataset<T>,
    gmm: &GmmModel<T>,
    model: &Autoencoder<T>,
    th: &Threshold,
    gate: &GateConfig,
) -> Result<ClientEvaluation> {
    if ds.benign_test.is_empty() && ds.attack_test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let verdicts = ds
        .benign_test
        .iter()
        .chain(&ds.attack_test)
        .map(|&i| {
            let s = &ds.samples[i];
            classify(&s.features, gmm, model, th, gate).map(|v| (s.label.is_attack(), v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate_verdicts(&ds.client_id, &verdicts, *th))
}

/// Unweighted means of per-client ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MeanMetrics {
    fn of<'a>(reports: impl Iterator<Item = &'a MetricsReport>) -> Self {
        let mut m = Self::default();
        let mut n = 0usize;
        for r in reports {
            m.accuracy += r.accuracy;
            m.precision += r.precision;
            m.recall += r.recall;
            m.f1 += r.f1;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            m.accuracy /= n;
            m.precision /= n;
            m.recall /= n;
            m.f1 /= n;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEvaluation {
    pub mean: MeanMetrics,
    pub pooled: MetricsReport,
    /// Mean over clients that routed at least one test sample to the autoencoder.
    pub autoencoder_part_mean: MeanMetrics,
    pub autoencoder_part_clients: usize,
    pub autoencoder_part_pooled: MetricsReport,
    pub per_client: Vec<ClientEvaluation>,
}

pub fn evaluate_group(reports: &[ClientEvaluation]) -> Result<GroupEvaluation> {
    if reports.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pooled = reports
        .iter()
        .fold(ConfusionMatrix::default(), |acc, r| acc.add(&r.total.confusion));
    let branch_pooled = reports
        .iter()
        .fold(ConfusionMatrix::default(), |acc, r| acc.add(&r.autoencoder_part.confusion));
    let with_branch: Vec<&MetricsReport> = reports
        .iter()
        .filter(|r| r.autoencoder_part.confusion.total() > 0)
        .map(|r| &r.autoencoder_part)
        .collect();
    Ok(GroupEvaluation {
        mean: MeanMetrics::of(reports.iter().map(|r| &r.total)),
        pooled: MetricsReport::from_confusion(pooled),
        autoencoder_part_mean: MeanMetrics::of(with_branch.iter().copied()),
        autoencoder_part_clients: with_branch.len(),
        autoencoder_part_pooled: MetricsReport::from_confusion(branch_pooled),
        per_client: reports.to_vec(),
    })
}

/// Rows accuracy/precision/recall/f1, one column per named report.
pub fn render_metrics_table(columns: &[(&str, &MetricsReport)]) -> String {
    let names: Vec<String> = columns.iter().map(|(n, _)| n.to_string()).collect();
    let width = names.iter().map(String::len).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<10}", "metric");
    for n in &names {
        let _ = write!(out, " {n:>width$}");
    }
    out.push('\n');
    type Getter = fn(&MetricsReport) -> f64;
    let rows: [(&str, Getter); 4] = [
        ("accuracy", |r| r.accuracy),
        ("precision", |r| r.precision),
        ("recall", |r| r.recall),
        ("f1", |r| r.f1),
    ];
    for (label, get) in rows {
        let _ = write!(out, "{label:<10}");
        for (_, r) in columns {
            let cell = if r.is_defined(label) {
                format!("{:.4}", get(r))
            } else {
                format!("{:.4}*", get(r))
            };
            let _ = write!(out, " {cell:>width$}");
        }
        out.push('\n');
    }
    if columns.iter().any(|(_, r)| !r.undefined.is_empty()) {
        out.push_str("* zero denominator, reported as 0\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(tp: usize, fp: usize, fn_: usize, tn: usize) -> ConfusionMatrix {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    #[test]
    fn metrics_from_counts() {
        let r = MetricsReport::from_confusion(cm(2, 1, 0, 1));
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 0.8).abs() < 1e-15);
        assert_eq!(r.accuracy, 0.75);
        assert!(r.undefined.is_empty());
    }

    #[test]
    fn all_benign_classifier_on_balanced_set() {
        let r = MetricsReport::from_confusion(cm(0, 0, 5, 5));
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.precision, 0.0);
        assert!(!r.is_defined("precision"));
        assert!(r.is_defined("recall"));
    }

    #[test]
    fn perfect_classifier() {
        let r = MetricsReport::from_confusion(cm(3, 0, 0, 4));
        assert_eq!((r.accuracy, r.f1), (1.0, 1.0));
    }

    #[test]
    fn two_point_threshold() {
        let t = Threshold::from_errors(&[0.0, 2.0], 0.01).unwrap();
        assert!((t.th - 1.01).abs() < 1e-15);
        let flat = Threshold::from_errors(&[0.3; 5], 0.01).unwrap();
        assert_eq!(flat.th, 0.3);
        assert!(Threshold::from_errors(&[1.0], 0.01).is_err());
    }

    #[test]
    fn gate_routes() {
        let g = GateConfig::default();
        let th = Threshold::from_errors(&[0.1, 0.1], 0.01).unwrap();
        let v = g.route(1.5).unwrap();
        assert_eq!((v.class, v.route), (Class::Benign, Route::GateHigh));
        let v = g.route(0.0).unwrap();
        assert_eq!((v.class, v.route), (Class::Anomalous, Route::GateZero));
        assert!(g.route(0.5).is_none());
        let v = branch_verdict(0.5, th.th + 0.001, &th);
        assert_eq!((v.class, v.route), (Class::Anomalous, Route::VaeBranch));
        assert_eq!(branch_verdict(0.5, th.th, &th).class, Class::Benign);
    }

    #[test]
    fn group_mean_and_pooled() {
        let th = Threshold::from_errors(&[0.0, 0.0], 0.01).unwrap();
        let mk = |id: &str, c: ConfusionMatrix| ClientEvaluation {
            client_id: id.into(),
            total: MetricsReport::from_confusion(c),
            autoencoder_part: MetricsReport::from_confusion(ConfusionMatrix::default()),
            routes: RouteCounts::default(),
            threshold: th,
        };
        let a = mk("a", cm(4, 1, 1, 4));
        let b = mk("b", cm(5, 0, 1, 4));
        let g = evaluate_group(&[a.clone(), b.clone()]).unwrap();
        assert!((g.mean.accuracy - 0.85).abs() < 1e-15);
        assert_eq!(g.pooled.confusion, a.total.confusion.add(&b.total.confusion));
        assert_eq!(g.autoencoder_part_clients, 0);
        let single = evaluate_group(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.mean.accuracy, a.total.accuracy);
        assert_eq!(single.mean.f1, a.total.f1);
        assert!(evaluate_group(&[]).is_err());
    }

    #[test]
    fn swapping_classes_transposes_cells() {
        let c = cm(7, 2, 3, 11);
        let s = c.swap_classes();
        let r = MetricsReport::from_confusion(s);
        // Benign-as-positive recall is the original specificity.
        assert_eq!(r.recall, 11.0 / 13.0);
        assert_eq!(s.swap_classes(), c);
    }

    #[test]
    fn table_has_four_metric_rows() {
        let r = MetricsReport::from_confusion(cm(2, 1, 0, 1));
        let t = render_metrics_table(&[("client_000", &r)]);
        assert_eq!(t.lines().count(), 5);
        assert!(t.contains("0.7500"));
    }
}
