//! Mini-batch training loop.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::mdarray::MdArray;
use crate::nn::{ArgKind, Model, OutputKind, Params};
use crate::real::{Cplx, Real};

use super::step::{adam_step, extrapolate, ipalm_step, sgd_step, AdamConfig, AdamState, IpalmConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Sgd,
    Adam,
    Ipalm,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            "ipalm" => Ok(Self::Ipalm),
            _ => Err(Error::InvalidParameter(format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fixed-order reductions everywhere (see [`exec::set_deterministic`]).
    pub deterministic: bool,
    pub adam: AdamConfig,
    pub ipalm: IpalmConfig,
    /// Rescale the joint gradient to at most this norm.
    pub clip: Option<f64>,
    /// Model replicas sharing each batch.
    pub replicas: usize,
    /// Skip the trailing partial batch of each epoch.
    pub drop_last: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Adam,
            lr: 1e-3,
            batch_size: 10,
            epochs: 1,
            seed: 0,
            deterministic: true,
            adam: AdamConfig::default(),
            ipalm: IpalmConfig::default(),
            clip: None,
            replicas: 1,
            drop_last: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.replicas == 0 {
            return bad("batch size and replica count must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Training data: named arrays stacked along their last dimension.
#[derive(Clone, Debug)]
pub struct Dataset<R: Real> {
    arrays: BTreeMap<String, MdArray<R>>,
    len: usize,
}

impl<R: Real> Dataset<R> {
    pub fn new(arrays: BTreeMap<String, MdArray<R>>) -> Result<Self> {
        let mut len = None;
        for (name, a) in &arrays {
            let n = *a.dims().last().expect("rank >= 1");
            match len {
                None => len = Some(n),
                Some(l) if l != n => {
                    return Err(Error::InvalidShape(format!(
                        "dataset array `{name}` has {n} items, expected {l}"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            arrays,
            len: len.unwrap_or(0),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, name: &str) -> Option<&MdArray<R>> {
        self.arrays.get(name)
    }

    /// Items `indices`, in order.
    pub fn batch(&self, indices: &[usize]) -> Result<Params<R>> {
        self.arrays
            .iter()
            .map(|(k, a)| Ok((k.clone(), a.gather_last(indices)?)))
            .collect()
    }
}

/// Mutable per-weight optimizer state.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState<R: Real> {
    pub adam: BTreeMap<String, AdamState<R>>,
    /// iPALM: the previous iterate.
    pub prev: BTreeMap<String, MdArray<R>>,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean loss of each epoch.
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

/// Formats the per-epoch log line.
pub fn loss_line(epoch: usize, loss: f64) -> String {
    format!("epoch {epoch} loss {loss}")
}

/// Order of the items in epoch `epoch`, which depends only on `(seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F));
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng);
    idx
}

struct StepResult<R: Real> {
    loss: f64,
    grads: Vec<MdArray<R>>,
    stats: Vec<(String, MdArray<R>)>,
}

/// Evaluates one replica: loss, gradients for the weights, new statistics.
fn evaluate<R: Real>(model: &Model<R>, data: &Params<R>, point: &Params<R>, params: &Params<R>) -> Result<StepResult<R>> {
    let inputs = model.gather(&[data, point, params])?;
    let out = model.nlop().apply(&inputs)?;
    let lo = model.output_index("loss")?;
    let loss = out[lo].as_slice()[0].re.to_f64_lossy();
    let want: Vec<bool> = model.inputs().iter().map(|s| s.kind == ArgKind::Weight).collect();
    let seed = MdArray::filled(out[lo].dims(), Cplx::new(R::one(), R::zero()))?;
    let g = model.nlop().adjoint_all(lo, &seed, &want)?;
    let mut grads = Vec::new();
    for (spec, g) in model.inputs().iter().zip(g) {
        if spec.kind != ArgKind::Weight {
            continue;
        }
        let mut g = match g {
            Some(g) => g,
            None => MdArray::zeros(&spec.dims)?,
        };
        if spec.real {
            g = g.real_part();
        }
        grads.push(g);
    }
    let stats = model
        .outputs()
        .iter()
        .zip(out)
        .filter_map(|(s, a)| match &s.kind {
            OutputKind::MovingStat(name) => Some((name.clone(), a)),
            OutputKind::Output => None,
        })
        .collect();
    Ok(StepResult { loss, grads, stats })
}

fn split_sizes(n: usize, parts: usize) -> Vec<usize> {
    let parts = parts.min(n).max(1);
    (0..parts).map(|r| n / parts + usize::from(r < n % parts)).collect()
}

/// Trains the weights in `params` on `data`.
///
/// `build(n)` must return the training model for a batch of `n` items: its
/// data inputs are looked up in `data`, its weight and moving-statistics
/// inputs in `params`, and it has a real scalar output named `loss`. Only
/// weight inputs are updated by the optimizer; moving statistics are replaced
/// by the values of their designated outputs. `on_epoch(epoch, loss)` is
/// called after every epoch with the mean batch loss (epochs count from 1).
pub fn train<R, B, E>(
    build: B,
    data: &Dataset<R>,
    params: &mut Params<R>,
    state: &mut OptimizerState<R>,
    cfg: &TrainConfig,
    mut on_epoch: E,
) -> Result<TrainReport>
where
    R: Real,
    B: Fn(usize) -> Result<Model<R>>,
    E: FnMut(usize, f64),
{
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(TrainReport {
            loss_history: Vec::new(),
            steps: state.steps,
        });
    }
    let nb = cfg.batch_size;
    let batches = if cfg.drop_last { data.len() / nb } else { data.len().div_ceil(nb) };
    if batches == 0 {
        return Err(Error::InvalidParameter(format!(
            "dataset of {} items is smaller than one batch of {nb}",
            data.len()
        )));
    }
    let was_det = exec::deterministic();
    exec::set_deterministic(cfg.deterministic || was_det);
    let res = run(&build, data, params, state, cfg, batches, &mut on_epoch);
    exec::set_deterministic(was_det);
    res
}

fn run<R, B, E>(
    build: &B,
    data: &Dataset<R>,
    params: &mut Params<R>,
    state: &mut OptimizerState<R>,
    cfg: &TrainConfig,
    batches: usize,
    on_epoch: &mut E,
) -> Result<TrainReport>
where
    R: Real,
    B: Fn(usize) -> Result<Model<R>>,
    E: FnMut(usize, f64),
{
    let mut models: BTreeMap<(usize, usize), Model<R>> = BTreeMap::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let order = epoch_order(data.len(), cfg.seed, epoch);
        let mut total = 0.0;
        for b in 0..batches {
            let idx = &order[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(order.len())];
            let sizes = split_sizes(idx.len(), cfg.replicas);
            for (r, &n) in sizes.iter().enumerate() {
                if let std::collections::btree_map::Entry::Vacant(e) = models.entry((r, n)) {
                    e.insert(build(n)?);
                }
            }
            let reference = &models[&(0, sizes[0])];
            let weights: Vec<String> = reference.weights().map(|s| s.name.clone()).collect();

            // point at which gradients are taken
            let mut point = Params::new();
            for w in &weights {
                let theta = params.get(w).ok_or_else(|| Error::UnknownName(w.clone()))?;
                let p = match (cfg.algorithm, state.prev.get(w)) {
                    (Algorithm::Ipalm, Some(prev)) => extrapolate(theta, prev, cfg.ipalm.beta)?,
                    _ => theta.clone(),
                };
                point.insert(w.clone(), p);
            }

            let mut starts = vec![0];
            for n in &sizes {
                starts.push(starts.last().unwrap() + n);
            }
            let parts: Vec<Result<StepResult<R>>> = exec::map_indices(sizes.len(), |r| {
                let batch = data.batch(&idx[starts[r]..starts[r + 1]])?;
                evaluate(&models[&(r, sizes[r])], &batch, &point, params)
            });

            // fixed-order reduction, weighted by replica size
            let mut loss = 0.0;
            let mut grads: Option<Vec<MdArray<R>>> = None;
            let mut stats: Option<Vec<(String, MdArray<R>)>> = None;
            for (part, &n) in parts.into_iter().zip(&sizes) {
                let part = part?;
                let w = n as f64 / idx.len() as f64;
                let wr = Cplx::new(R::from_f64_lossy(w), R::zero());
                loss += w * part.loss;
                match &mut grads {
                    None => grads = Some(part.grads.iter().map(|g| g.scale(wr)).collect()),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&part.grads) {
                            a.axpy(wr, g)?;
                        }
                    }
                }
                match &mut stats {
                    None => stats = Some(part.stats.into_iter().map(|(k, s)| (k, s.scale(wr))).collect()),
                    Some(acc) => {
                        for ((_, a), (_, s)) in acc.iter_mut().zip(&part.stats) {
                            a.axpy(wr, s)?;
                        }
                    }
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {b}")));
            }
            let mut grads = grads.unwrap_or_default();
            for (w, g) in weights.iter().zip(&grads) {
                if !g.all_finite() {
                    return Err(Error::NonFinite(format!("gradient of `{w}` at epoch {epoch}, batch {b}")));
                }
            }
            if let Some(c) = cfg.clip {
                let norm = grads.iter().map(|g| g.norm_sqr().to_f64_lossy()).sum::<f64>().sqrt();
                if norm > c {
                    let s = R::from_f64_lossy(c / norm);
                    grads = grads.iter().map(|g| g.scale_real(s)).collect();
                }
            }
            state.steps += 1;
            for (w, g) in weights.iter().zip(&grads) {
                let spec = reference.input(w)?;
                let theta = &params[w];
                let next = match cfg.algorithm {
                    Algorithm::Sgd => sgd_step(theta, g, cfg.lr)?,
                    Algorithm::Adam => {
                        let st = match state.adam.get(w) {
                            Some(s) => s.clone(),
                            None => AdamState::new(&spec.dims)?,
                        };
                        let (t, st) = adam_step(theta, g, &st, &cfg.adam, cfg.lr)?;
                        state.adam.insert(w.clone(), st);
                        t
                    }
                    Algorithm::Ipalm => {
                        let prev = state.prev.get(w).cloned().unwrap_or_else(|| theta.clone());
                        ipalm_step(theta, &prev, g, &cfg.ipalm, cfg.lr, spec.prox)?
                    }
                };
                let mut next = next;
                if cfg.algorithm != Algorithm::Ipalm {
                    if let Some(p) = spec.prox {
                        p.apply(&mut next, cfg.lr);
                    }
                }
                if cfg.algorithm == Algorithm::Ipalm {
                    state.prev.insert(w.clone(), theta.clone());
                }
                params.insert(w.clone(), next);
            }
            for (name, s) in stats.unwrap_or_default() {
                params.insert(name, s);
            }
            total += loss;
        }
        let mean = total / batches as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TrainReport {
        loss_history: history,
        steps: state.steps,
    })
}
