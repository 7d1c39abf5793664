//! Local minibatch training and per-cluster federated averaging.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClientDataset, ForecastError, ModelDims, ModelParams, WindowSet, HORIZON, N_INPUTS};
use crate::eval::{regression_metrics, MetricsReport};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    pub hidden_dim: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            local_epochs: 1,
            batch_size: 32,
            learning_rate: 1e-3,
            rounds: 30,
            hidden_dim: 64,
            optimizer: Optimizer::adam(),
            seed: 42,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let ok = self.local_epochs >= 1
            && self.batch_size >= 1
            && self.rounds >= 1
            && self.hidden_dim >= 1
            && (0.0..1.0).contains(&self.learning_rate);
        if ok {
            Ok(())
        } else {
            Err(ForecastError::InvalidHyper(format!("{self:?}")))
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims::new(N_INPUTS, self.hidden_dim, HORIZON)
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn apply_step(
    params: &mut ModelParams,
    grad: &[f64],
    hyper: &TrainHyper,
    adam: &mut Option<AdamState>,
) {
    let lr = hyper.learning_rate;
    match hyper.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.values.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let st = adam.get_or_insert_with(|| AdamState {
                m: vec![0.0; grad.len()],
                v: vec![0.0; grad.len()],
                t: 0,
            });
            st.t += 1;
            let c1 = 1.0 - beta1.powi(st.t);
            let c2 = 1.0 - beta2.powi(st.t);
            for i in 0..grad.len() {
                let g = grad[i];
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
                st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
                let mh = st.m[i] / c1;
                let vh = st.v[i] / c2;
                params.values[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Loss and gradient over the given windows, summed in ascending index order.
pub fn batch_gradient(
    params: &ModelParams,
    set: &WindowSet,
    indices: &[usize],
) -> Result<(f64, Vec<f64>), ForecastError> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let batch: Vec<(&[f64], [f64; HORIZON])> = sorted.iter().map(|&i| (set.inputs(i), set.target(i))).collect();
    params.backward(&batch)
}

/// `local_epochs` passes of shuffled minibatch descent from `params`.
/// Optimiser state starts fresh on every call.
pub fn local_train(
    params: &ModelParams,
    client: &ClientDataset,
    hyper: &TrainHyper,
    rng: &mut Stream,
) -> Result<ModelParams, ForecastError> {
    let mut p = params.clone();
    let n = client.train.len();
    if n == 0 {
        return Ok(p);
    }
    let mut adam = None;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..hyper.local_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(hyper.batch_size) {
            let (_, grad) = batch_gradient(&p, &client.train, chunk)?;
            apply_step(&mut p, &grad, hyper, &mut adam);
        }
    }
    Ok(p)
}

/// Sample-weighted coordinate-wise mean. Updates are summed in the given order.
pub fn fedavg(updates: &[(ModelParams, usize)]) -> Result<ModelParams, ForecastError> {
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    let Some((first, _)) = updates.first() else {
        return Err(ForecastError::EmptyCluster);
    };
    if total == 0 {
        return Err(ForecastError::EmptyCluster);
    }
    let mut out = ModelParams::zeros(first.dims);
    for (p, n) in updates {
        if p.dims != first.dims || p.values.len() != out.values.len() {
            return Err(ForecastError::DimensionMismatch(format!(
                "cannot average {:?} with {:?}",
                p.dims, first.dims
            )));
        }
        if *n == 0 {
            continue;
        }
        let w = *n as f64 / total as f64;
        for (o, v) in out.values.iter_mut().zip(&p.values) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Predictions for every window of `set`, flattened with the targets.
pub fn evaluate_set(params: &ModelParams, set: &WindowSet) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
    let mut y_true = Vec::with_capacity(set.len() * HORIZON);
    let mut y_pred = Vec::with_capacity(set.len() * HORIZON);
    for i in 0..set.len() {
        y_pred.extend(params.forward(set.inputs(i))?);
        y_true.extend(set.target(i));
    }
    Ok((y_true, y_pred))
}

pub fn set_metrics(params: &ModelParams, set: &WindowSet) -> Result<Option<MetricsReport>, ForecastError> {
    if set.is_empty() {
        return Ok(None);
    }
    let (t, p) = evaluate_set(params, set)?;
    Ok(regression_metrics(&t, &p).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub split: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlOutcome {
    pub params: ModelParams,
    pub history: Vec<RoundRecord>,
}

/// Options for [`train_cluster_fl`] beyond the hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlOptions {
    /// Record pooled train metrics after every round (costs one forward pass
    /// over the training windows).
    pub track_train: bool,
    pub track_validation: bool,
}

impl Default for FlOptions {
    fn default() -> Self {
        Self {
            track_train: true,
            track_validation: true,
        }
    }
}

/// Runs `hyper.rounds` rounds of broadcast, local training and FedAvg over
/// the clients of one cluster.
///
/// Every client draws its shuffles from a stream keyed by the seed and the
/// round, so clients holding identical data produce identical updates.
pub fn train_cluster_fl(
    clients: &[ClientDataset],
    hyper: &TrainHyper,
    options: FlOptions,
) -> Result<FlOutcome, ForecastError> {
    hyper.validate()?;
    if clients.iter().all(|c| c.n_samples == 0) {
        return Err(ForecastError::EmptyCluster);
    }
    let mut global = ModelParams::init(hyper.dims(), hyper.seed);
    let pooled_train = options.track_train.then(|| WindowSet::pooled(clients.iter().map(|c| &c.train)));
    let pooled_val = options
        .track_validation
        .then(|| WindowSet::pooled(clients.iter().map(|c| &c.validation)));
    let mut history = Vec::new();
    for round in 1..=hyper.rounds {
        let mut updates = Vec::with_capacity(clients.len());
        for c in clients {
            let mut r = rng::stream(hyper.seed, &[0x7A11, round as u64]);
            updates.push((local_train(&global, c, hyper, &mut r)?, c.n_samples));
        }
        global = fedavg(&updates)?;
        for (split, set) in [("train", &pooled_train), ("validation", &pooled_val)] {
            if let Some(set) = set {
                if let Some(metrics) = set_metrics(&global, set)? {
                    history.push(RoundRecord {
                        round,
                        split: split.into(),
                        metrics,
                    });
                }
            }
        }
    }
    Ok(FlOutcome {
        params: global,
        history,
    })
}
