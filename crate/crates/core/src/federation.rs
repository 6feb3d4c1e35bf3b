//! In-process federated training of per-client autoencoders.
//!
//! Clients that selected the same number of mixture components form a group. Each round
//! every client trains locally, optionally blends with the central mean `Z` (Fed+), and
//! the server recomputes `Z` from what the clients send back.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::ComponentSelection;
use crate::matrix::Matrix;
use crate::neural::{train_epoch, Autoencoder, NetworkWeights, Rmsprop};
use crate::rng::{derive_seed, tag_of};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    FedPlus,
    FedAvg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub rounds: usize,
    pub epochs_per_round: usize,
    pub lr: f64,
    pub theta: f64,
    pub aggregation: Aggregation,
    pub batch_size: usize,
    pub seed: u64,
    /// Train clients one after another instead of on the rayon pool.
    pub deterministic: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            epochs_per_round: 1,
            lr: 0.05,
            theta: 0.5,
            aggregation: Aggregation::FedPlus,
            batch_size: 16,
            seed: 0,
            deterministic: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", "must be at least 1"));
        }
        if self.epochs_per_round == 0 {
            return Err(Error::invalid("epochs_per_round", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid("theta", format!("{} is outside [0, 1]", self.theta)));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::invalid("lr", format!("{} is not a non-negative number", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based.
    pub round: usize,
    /// Mean training loss of the last local epoch, per client.
    pub client_losses: BTreeMap<String, f64>,
    /// Sum of all entries of the central weights after aggregation.
    pub z_checksum: f64,
    pub wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientGroup {
    pub k: usize,
    pub client_ids: Vec<String>,
    pub below_min_size: bool,
}

impl ClientGroup {
    pub fn len(&self) -> usize {
        self.client_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.client_ids.is_empty()
    }
}

/// One group per distinct `best_k`, ordered by k; members keep the map's id order.
pub fn group_clients(selections: &BTreeMap<String, ComponentSelection>, min_size: usize) -> Vec<ClientGroup> {
    let mut by_k: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (id, sel) in selections {
        by_k.entry(sel.best_k).or_default().push(id.clone());
    }
    by_k.into_iter()
        .map(|(k, client_ids)| ClientGroup {
            k,
            below_min_size: client_ids.len() < min_size,
            client_ids,
        })
        .collect()
}

/// `θ·local + (1−θ)·z`, elementwise.
pub fn fedplus_update<T: Scalar>(local: &NetworkWeights<T>, z: &NetworkWeights<T>, theta: f64) -> Result<NetworkWeights<T>> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid("theta", format!("{theta} is outside [0, 1]")));
    }
    let t = T::lit(theta);
    let rest = T::one() - t;
    local.zip_with(z, |l, c| t * l + rest * c)
}

/// Weighted elementwise mean. Each entry is summed in value order around its smallest
/// value, so the result does not depend on client order and equal inputs come back
/// unchanged.
fn weighted_mean<T: Scalar>(weights: &[NetworkWeights<T>], coef: &[T]) -> Result<NetworkWeights<T>> {
    let first = weights.first().ok_or(Error::EmptyDataset)?;
    if weights.iter().any(|w| !w.same_shape(first)) {
        return Err(Error::ShapeMismatch);
    }
    let flats: Vec<Vec<T>> = weights.iter().map(NetworkWeights::flatten).collect();
    let mut entries: Vec<(T, T)> = Vec::with_capacity(weights.len());
    let mut out = Vec::with_capacity(first.num_params());
    for p in 0..first.num_params() {
        entries.clear();
        entries.extend(flats.iter().zip(coef).map(|(f, &c)| (f[p], c)));
        entries.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        });
        let base = entries[0].0;
        let shift: T = entries.iter().map(|&(v, c)| c * (v - base)).sum();
        out.push(base + shift);
    }
    NetworkWeights::from_flat(&first.shapes(), &out)
}

/// Unweighted elementwise mean of client weights.
pub fn central_mean<T: Scalar>(weights: &[NetworkWeights<T>]) -> Result<NetworkWeights<T>> {
    let c = T::one() / T::from_count(weights.len().max(1));
    weighted_mean(weights, &vec![c; weights.len()])
}

/// `Σ (n_k / n)·W_k`.
pub fn fedavg_aggregate<T: Scalar>(weights: &[NetworkWeights<T>], sizes: &[usize]) -> Result<NetworkWeights<T>> {
    if weights.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: sizes.len(),
        });
    }
    let total: usize = sizes.iter().sum();
    if total == 0 && !weights.is_empty() {
        return Err(Error::invalid("sizes", "total client size is zero"));
    }
    let n = T::from_count(total.max(1));
    let coef: Vec<T> = sizes.iter().map(|&s| T::from_count(s) / n).collect();
    weighted_mean(weights, &coef)
}

/// Seed of one local epoch. Public so that isolated training can be replayed exactly.
pub fn training_seed(base: u64, client_id: &str, round: usize, epoch: usize) -> u64 {
    let client = derive_seed(base, tag_of(client_id));
    derive_seed(derive_seed(client, round as u64), epoch as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FederationResult<T> {
    pub models: BTreeMap<String, Autoencoder<T>>,
    pub central: NetworkWeights<T>,
    pub rounds: Vec<RoundLog>,
}

struct ClientState<'a, T> {
    id: &'a str,
    data: &'a Matrix<T>,
    model: Autoencoder<T>,
    opt: Rmsprop<T>,
    loss: f64,
}

impl<T: Scalar> ClientState<'_, T> {
    fn train_round(&mut self, cfg: &FederationConfig, round: usize) -> Result<()> {
        for epoch in 0..cfg.epochs_per_round {
            let seed = training_seed(cfg.seed, self.id, round, epoch);
            let loss = train_epoch(&mut self.model, self.data, &mut self.opt, cfg.batch_size, seed)?;
            self.loss = loss.as_f64();
        }
        Ok(())
    }
}

/// Runs `cfg.rounds` rounds for one group.
///
/// Round 1 starts from each client's initial model. In Fed+ mode a client blends its
/// trained weights with the previous round's `Z` (from round 2 on) and keeps the blend;
/// `Z` is the plain mean of what clients send. In FedAvg mode clients send raw weights,
/// `Z` is size-weighted and installed into every client at the start of each later
/// round and once more at the end.
pub fn run_federation<T: Scalar>(
    group: &ClientGroup,
    histograms: &BTreeMap<String, Matrix<T>>,
    initial: &BTreeMap<String, Autoencoder<T>>,
    cfg: &FederationConfig,
) -> Result<FederationResult<T>> {
    cfg.validate()?;
    if group.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut clients = Vec::with_capacity(group.len());
    for id in &group.client_ids {
        let data = histograms
            .get(id)
            .ok_or_else(|| Error::invalid("histograms", format!("no histograms for client `{id}`")))?;
        let model = initial
            .get(id)
            .ok_or_else(|| Error::invalid("initial", format!("no initial model for client `{id}`")))?
            .clone();
        if data.cols() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                found: data.cols(),
            });
        }
        clients.push(ClientState {
            id,
            data,
            model,
            opt: Rmsprop::new(T::lit(cfg.lr)),
            loss: f64::NAN,
        });
    }
    let kind = clients[0].model.kind;
    if clients
        .iter()
        .any(|c| c.model.kind != kind || !c.model.weights.same_shape(&clients[0].model.weights))
    {
        return Err(Error::ShapeMismatch);
    }
    let sizes: Vec<usize> = clients.iter().map(|c| c.data.rows()).collect();

    let mut z: Option<NetworkWeights<T>> = None;
    let mut logs = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let start = Instant::now();
        if let (Aggregation::FedAvg, Some(central)) = (cfg.aggregation, &z) {
            for c in &mut clients {
                c.model.weights = central.clone();
            }
        }
        if cfg.deterministic {
            for c in &mut clients {
                c.train_round(cfg, round)?;
            }
        } else {
            clients
                .par_iter_mut()
                .map(|c| c.train_round(cfg, round))
                .collect::<Result<Vec<()>>>()?;
        }
        let next = match cfg.aggregation {
            Aggregation::FedPlus => {
                if let Some(central) = &z {
                    for c in &mut clients {
                        c.model.weights = fedplus_update(&c.model.weights, central, cfg.theta)?;
                    }
                }
                central_mean(&clients.iter().map(|c| c.model.weights.clone()).collect::<Vec<_>>())?
            }
            Aggregation::FedAvg => {
                let sent: Vec<_> = clients.iter().map(|c| c.model.weights.clone()).collect();
                fedavg_aggregate(&sent, &sizes)?
            }
        };
        logs.push(RoundLog {
            round,
            client_losses: clients.iter().map(|c| (c.id.to_string(), c.loss)).collect(),
            z_checksum: next.checksum(),
            wall_clock: start.elapsed().as_secs_f64(),
        });
        log::debug!("group k={} round {round}: z checksum {:.6}", group.k, next.checksum());
        z = Some(next);
    }
    let central = z.expect("at least one round");
    if cfg.aggregation == Aggregation::FedAvg {
        for c in &mut clients {
            c.model.weights = central.clone();
        }
    }
    Ok(FederationResult {
        models: clients.into_iter().map(|c| (c.id.to_string(), c.model)).collect(),
        central,
        rounds: logs,
    })
}

/// One JSON object per line.
pub fn write_round_logs<W: Write>(logs: &[RoundLog], mut writer: W) -> Result<()> {
    for l in logs {
        serde_json::to_writer(&mut writer, l)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<round log>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Architecture, Dense, ModelKind};

    fn scalar_net(v: f64) -> NetworkWeights<f64> {
        let mut d = Dense::zeros(1, 1);
        d.weights.set(0, 0, v);
        d.bias[0] = v;
        NetworkWeights::new(vec![d])
    }

    fn value(w: &NetworkWeights<f64>) -> f64 {
        w.layers[0].weights.get(0, 0)
    }

    fn selection(k: usize) -> ComponentSelection {
        ComponentSelection {
            tested_ks: vec![k],
            silhouette_scores: vec![0.5],
            best_k: k,
            timings: vec![0.0],
            fit_seconds: vec![0.0],
            silhouette_seconds: vec![0.0],
        }
    }

    #[test]
    fn groups_partition_by_best_k() {
        let sel: BTreeMap<String, ComponentSelection> = [("a", 3), ("b", 3), ("c", 5)]
            .into_iter()
            .map(|(id, k)| (id.to_string(), selection(k)))
            .collect();
        let groups = group_clients(&sel, 1);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].k, 3);
        assert_eq!(groups[0].client_ids, vec!["a", "b"]);
        assert_eq!(groups[1].client_ids, vec!["c"]);
        let flagged = group_clients(&sel, 5);
        assert!(flagged.iter().all(|g| g.below_min_size));
    }

    #[test]
    fn equal_ks_give_one_group() {
        let sel: BTreeMap<String, ComponentSelection> =
            (0..4).map(|i| (format!("v{i}"), selection(4))).collect();
        let groups = group_clients(&sel, 2);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 4);
        assert!(!groups[0].below_min_size);
    }

    #[test]
    fn fedplus_limits_and_midpoint() {
        let l = scalar_net(2.0);
        let z = scalar_net(4.0);
        assert_eq!(fedplus_update(&l, &z, 1.0).unwrap(), l);
        assert_eq!(fedplus_update(&l, &z, 0.0).unwrap(), z);
        assert_eq!(value(&fedplus_update(&l, &z, 0.5).unwrap()), 3.0);
        assert!(fedplus_update(&l, &z, 1.5).is_err());
        let other = NetworkWeights::new(vec![Dense::<f64>::zeros(2, 1)]);
        assert!(matches!(fedplus_update(&l, &other, 0.5), Err(Error::ShapeMismatch)));
    }

    #[test]
    fn fedavg_arithmetic() {
        let ws = [scalar_net(0.0), scalar_net(2.0)];
        assert_eq!(value(&fedavg_aggregate(&ws, &[5, 5]).unwrap()), 1.0);
        let ws = [scalar_net(0.0), scalar_net(4.0)];
        assert_eq!(value(&fedavg_aggregate(&ws, &[1, 3]).unwrap()), 3.0);
        assert!(fedavg_aggregate::<f64>(&[], &[]).is_err());
        assert!(fedavg_aggregate(&ws, &[1]).is_err());
    }

    #[test]
    fn central_mean_arithmetic() {
        assert_eq!(value(&central_mean(&[scalar_net(1.0), scalar_net(3.0)]).unwrap()), 2.0);
        let one = scalar_net(0.1234);
        assert_eq!(central_mean(std::slice::from_ref(&one)).unwrap(), one);
    }

    #[test]
    fn equal_weights_are_a_fixed_point() {
        let w = Autoencoder::<f64>::random(ModelKind::Vae, Architecture::for_input(7), 3).weights;
        let three = vec![w.clone(), w.clone(), w.clone()];
        assert_eq!(central_mean(&three).unwrap(), w);
        assert_eq!(fedavg_aggregate(&three, &[3, 7, 11]).unwrap(), w);
    }

    #[test]
    fn aggregation_ignores_client_order() {
        let ws: Vec<_> = (0..5)
            .map(|s| Autoencoder::<f64>::random(ModelKind::Ae, Architecture::for_input(5), s).weights)
            .collect();
        let mut rev = ws.clone();
        rev.reverse();
        assert_eq!(central_mean(&ws).unwrap(), central_mean(&rev).unwrap());
        assert_eq!(
            fedavg_aggregate(&ws, &[4; 5]).unwrap(),
            fedavg_aggregate(&rev, &[4; 5]).unwrap()
        );
    }

    #[test]
    fn config_validation() {
        assert!(FederationConfig::default().validate().is_ok());
        let bad = FederationConfig {
            theta: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = FederationConfig {
            rounds: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn round_logs_are_json_lines() {
        let logs = vec![
            RoundLog {
                round: 1,
                client_losses: [("a".to_string(), 0.5)].into_iter().collect(),
                z_checksum: 1.0,
                wall_clock: 0.0,
            };
            2
        ];
        let mut buf = Vec::new();
        write_round_logs(&logs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: RoundLog = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, logs[0]);
    }
}
