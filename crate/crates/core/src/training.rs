//! Likelihood training of two-layer and noise-regularized three-layer RBMs.
//!
//! Gradients are of the cost `L = -<log p(t)>_data` and have the flat layout
//! of [`RbmParams::flat`]. Parameters move by `-lr * grad`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitString, Dataset};
use crate::error::{Error, Result};
use crate::noise::{apply_channel, clamped_visible_from_activations, NoiseModel, MAX_CHANNEL_SITES};
use crate::rbm::{sigmoid, GibbsChain, RbmParams, LogSumExp, MAX_EXACT_VISIBLE};
use crate::rng::{derive_path, rng_for, stream, Rng};

/// Batch entries per parallel work unit. Fixed so that the summation order
/// does not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden units; `None` means twice the number of sites.
    pub n_hidden: Option<usize>,
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub cd_steps: usize,
    pub epochs: usize,
    pub seed: u64,
    pub noise: Option<NoiseModel>,
    pub noise_free_first_epoch: bool,
    pub validation_split: f64,
    /// Exact NLL is evaluated every this many epochs (and at the last one);
    /// 0 disables it.
    pub nll_every: usize,
    /// Keep a parameter snapshot every this many epochs; 0 disables.
    pub snapshot_every: usize,
    /// Snapshots kept from the last epochs, used for error bars.
    pub final_snapshots: usize,
    /// Allowed rise of the validation NLL over the last quarter of training
    /// before a warning is emitted.
    pub validation_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_hidden: None,
            learning_rate: 0.05,
            lr_decay: 0.998,
            batch_size: 20,
            cd_steps: 30,
            epochs: 1000,
            seed: 0,
            noise: None,
            noise_free_first_epoch: true,
            validation_split: 0.1,
            nll_every: 1,
            snapshot_every: 0,
            final_snapshots: 10,
            validation_tolerance: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::argument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay {} must lie in (0, 1]", self.lr_decay));
        }
        if self.batch_size == 0 || self.cd_steps == 0 || self.epochs == 0 {
            return bad("batch_size, cd_steps and epochs must be positive".into());
        }
        if self.n_hidden == Some(0) {
            return bad("n_hidden must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation_split) {
            return bad(format!("validation_split {} must lie in [0, 1)", self.validation_split));
        }
        if let Some(nm) = &self.noise {
            nm.validate()?;
        }
        Ok(())
    }

    pub fn hidden_units(&self, n_sites: usize) -> usize {
        self.n_hidden.unwrap_or(2 * n_sites)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub nll: Option<f64>,
    pub val_nll: Option<f64>,
    /// Mean over minibatches of the gradient's Euclidean norm.
    pub grad_norm: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub params: RbmParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_train: usize,
    pub n_validation: usize,
    pub epochs: Vec<EpochRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_params: RbmParams,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// Everything except the wall time, for determinism checks.
    pub fn same_run(&self, other: &TrainReport) -> bool {
        self.config == other.config
            && self.n_train == other.n_train
            && self.n_validation == other.n_validation
            && self.epochs == other.epochs
            && self.snapshots == other.snapshots
            && self.final_params == other.final_params
            && self.warnings == other.warnings
    }

    /// Training curves as CSV.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("epoch,nll,val_nll,grad_norm,lr\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{:.10e},{:.10e}\n",
                r.epoch,
                opt(r.nll),
                opt(r.val_nll),
                r.grad_norm,
                r.lr
            ));
        }
        s
    }
}

/// The noise model actually used: `None` for absent or zero-rate channels.
fn active(nm: Option<&NoiseModel>) -> Option<&NoiseModel> {
    nm.filter(|m| !m.is_zero())
}

fn check_sizes(params: &RbmParams, data: &[(u64, f64)], nm: Option<&NoiseModel>) -> Result<()> {
    let n = params.n_visible;
    let cap = if nm.is_some() { MAX_CHANNEL_SITES } else { MAX_EXACT_VISIBLE };
    if n > cap {
        return Err(Error::Resource {
            what: "sites for exact likelihood",
            limit: cap,
            requested: n,
        });
    }
    if data.is_empty() {
        return Err(Error::argument("empty dataset"));
    }
    if let Some((x, _)) = data.iter().find(|(x, _)| *x >> n != 0) {
        return Err(Error::argument(format!("configuration index {x} does not fit {n} sites")));
    }
    Ok(())
}

fn normalized(data: &[(u64, f64)]) -> Vec<(u64, f64)> {
    let total: f64 = data.iter().map(|(_, w)| w).sum();
    data.iter().map(|&(x, w)| (x, w / total)).collect()
}

/// Exact NLL for a weighted set of records. Weights are normalized.
pub fn nll_exact_weighted(params: &RbmParams, data: &[(u64, f64)], nm: Option<&NoiseModel>) -> Result<f64> {
    let nm = active(nm);
    check_sizes(params, data, nm)?;
    let data = normalized(data);
    match nm {
        None => {
            let e = params.effective_energies_exact()?;
            let mut lse = LogSumExp::default();
            e.iter().for_each(|&v| lse.push(v));
            let log_z = lse.value();
            Ok(-data.iter().map(|&(x, w)| w * (e[x as usize] - log_z)).sum::<f64>())
        }
        Some(m) => {
            let mut p = params.probabilities_exact()?;
            apply_channel(&mut p, params.n_visible, m);
            Ok(-data.iter().map(|&(x, w)| w * p[x as usize].ln()).sum::<f64>())
        }
    }
}

pub fn nll_exact(params: &RbmParams, d: &Dataset, nm: Option<&NoiseModel>) -> Result<f64> {
    if d.n_sites() != params.n_visible {
        return Err(Error::argument("dataset and RBM sizes differ"));
    }
    nll_exact_weighted(params, &d.weighted(), nm)
}

/// Exact gradient of [`nll_exact_weighted`].
pub fn grad_exact_weighted(params: &RbmParams, data: &[(u64, f64)], nm: Option<&NoiseModel>) -> Result<Vec<f64>> {
    let nm = active(nm);
    check_sizes(params, data, nm)?;
    let data = normalized(data);
    let n = params.n_visible;
    let p = params.probabilities_exact()?;
    // Coefficient of dE(s) in the gradient: p(s) minus the data (or
    // posterior) weight on s.
    let mut coef = p.clone();
    match nm {
        None => {
            for &(x, w) in &data {
                coef[x as usize] -= w;
            }
        }
        Some(m) => {
            let mut pt = p.clone();
            apply_channel(&mut pt, n, m);
            // r(t) = w(t) / p~(t), then back through the channel transpose.
            let mut r = vec![0.0; p.len()];
            for &(x, w) in &data {
                r[x as usize] += w / pt[x as usize];
            }
            let (a, b) = (m.p10, m.p01);
            for i in 0..n {
                let mask = 1usize << (n - 1 - i);
                for x in 0..r.len() {
                    if x & mask == 0 {
                        let (r0, r1) = (r[x], r[x | mask]);
                        r[x] = (1.0 - a) * r0 + a * r1;
                        r[x | mask] = b * r0 + (1.0 - b) * r1;
                    }
                }
            }
            for (c, (&ps, &rs)) in coef.iter_mut().zip(p.iter().zip(&r)) {
                *c -= ps * rs;
            }
        }
    }
    let mut grad = vec![0.0; params.n_params()];
    let mut scratch = vec![0.0; params.n_hidden];
    for (x, &c) in coef.iter().enumerate() {
        if c != 0.0 {
            params.accumulate_energy_gradient(x as u64, c, &mut grad, &mut scratch);
        }
    }
    Ok(grad)
}

pub fn grad_exact(params: &RbmParams, d: &Dataset, nm: Option<&NoiseModel>) -> Result<Vec<f64>> {
    if d.n_sites() != params.n_visible {
        return Err(Error::argument("dataset and RBM sizes differ"));
    }
    grad_exact_weighted(params, &d.weighted(), nm)
}

/// `k` steps of the clamped chain `h ~ p(h|s)`, `s ~ p(s|t,h)` started at `t`.
fn clamped_chain(params: &RbmParams, nm: &NoiseModel, t: BitString, k: usize, rng: &mut Rng) -> BitString {
    let n = params.n_visible;
    let mut act_h = vec![0.0; params.n_hidden];
    let mut hidden = vec![false; params.n_hidden];
    let mut act_v = vec![0.0; n];
    let mut post = vec![0.0; n];
    let mut s = t;
    for _ in 0..k {
        params.hidden_activations_index(s.index(), &mut act_h);
        for (h, &a) in hidden.iter_mut().zip(&act_h) {
            *h = rng.random::<f64>() < sigmoid(a);
        }
        params.visible_activations(&hidden, &mut act_v);
        clamped_visible_from_activations(nm, &t, &act_v, &mut post);
        let mut x = 0u64;
        for &q in &post {
            x = (x << 1) | u64::from(rng.random::<f64>() < q);
        }
        s = BitString::from_index(x, n);
    }
    s
}

/// CD-k estimate of the cost gradient on one minibatch.
///
/// Entry `b` uses the streams `(seed, NEGATIVE, b)` for its model chain and
/// `(seed, POSITIVE, b)` for its clamped chain; absent or zero-rate noise
/// takes the positive phase directly from the data.
pub fn cd_gradient(
    params: &RbmParams,
    batch: &[BitString],
    k: usize,
    nm: Option<&NoiseModel>,
    seed: u64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::argument("empty minibatch"));
    }
    if k == 0 {
        return Err(Error::argument("CD needs k >= 1"));
    }
    if let Some(bad) = batch.iter().find(|s| s.len() != params.n_visible) {
        return Err(Error::argument(format!("record {bad} does not match {} visible units", params.n_visible)));
    }
    let nm = active(nm);
    let np = params.n_params();
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<Vec<f64>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut g = vec![0.0; np];
            let mut scratch = vec![0.0; params.n_hidden];
            for (off, &t) in chunk.iter().enumerate() {
                let b = (c * CHUNK + off) as u64;
                let neg = GibbsChain::new(params, t, rng_for(seed, &[stream::NEGATIVE, b])).run(k);
                params.accumulate_energy_gradient(neg.index(), scale, &mut g, &mut scratch);
                let pos = match nm {
                    None => t,
                    Some(m) => clamped_chain(params, m, t, k, &mut rng_for(seed, &[stream::POSITIVE, b])),
                };
                params.accumulate_energy_gradient(pos.index(), -scale, &mut g, &mut scratch);
            }
            g
        })
        .collect();
    let mut grad = vec![0.0; np];
    for g in partials {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok(grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits an RBM to `d` by minibatch SGD with CD-k gradients.
pub fn train(d: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::argument("cannot train on an empty dataset"));
    }
    let start = Instant::now();
    let n = d.n_sites();
    let nh = cfg.hidden_units(n);

    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, &[stream::SPLIT]));
    let mut n_val = (cfg.validation_split * d.len() as f64).floor() as usize;
    if n_val >= d.len() {
        n_val = 0;
    }
    let val: Vec<BitString> = order[..n_val].iter().map(|&i| d.samples[i]).collect();
    let mut train: Vec<BitString> = order[n_val..].iter().map(|&i| d.samples[i]).collect();

    let weights = |set: &[BitString]| -> Vec<(u64, f64)> {
        let mut c = std::collections::BTreeMap::new();
        for s in set {
            *c.entry(s.index()).or_insert(0.0) += 1.0;
        }
        c.into_iter().collect()
    };
    let train_w = weights(&train);
    let val_w = weights(&val);
    let objective = active(cfg.noise.as_ref()).copied();
    let exact_ok = n <= if objective.is_some() { MAX_CHANNEL_SITES } else { MAX_EXACT_VISIBLE };

    let mut params = RbmParams::init_random(n, nh, cfg.seed);
    let mut lr = cfg.learning_rate;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut snapshots = Vec::new();
    let mut warnings = Vec::new();
    let first_final = cfg.epochs.saturating_sub(cfg.final_snapshots) + 1;

    for epoch in 1..=cfg.epochs {
        train.shuffle(&mut rng_for(cfg.seed, &[stream::SHUFFLE, epoch as u64]));
        let nm = if epoch == 1 && cfg.noise_free_first_epoch {
            None
        } else {
            objective.as_ref()
        };
        let mut norm_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in train.chunks(cfg.batch_size).enumerate() {
            let seed = derive_path(cfg.seed, &[epoch as u64, b as u64]);
            let grad = cd_gradient(&params, batch, cfg.cd_steps, nm, seed)?;
            let gn = norm(&grad);
            let mut next = params.clone();
            let mut flat = next.flat();
            for (p, g) in flat.iter_mut().zip(&grad) {
                *p -= lr * g;
            }
            if !gn.is_finite() || flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: format!("non-finite parameters after minibatch {b} (gradient norm {gn})"),
                    snapshot: Box::new(params),
                });
            }
            next.set_flat(&flat);
            params = next;
            norm_sum += gn;
            batches += 1;
        }

        let want_nll = exact_ok
            && cfg.nll_every > 0
            && (epoch % cfg.nll_every == 0 || epoch == cfg.epochs || epoch == 1);
        let nll = if want_nll {
            Some(nll_exact_weighted(&params, &train_w, objective.as_ref())?)
        } else {
            None
        };
        let val_nll = if want_nll && !val_w.is_empty() {
            Some(nll_exact_weighted(&params, &val_w, objective.as_ref())?)
        } else {
            None
        };
        if let Some(v) = nll {
            if !v.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: format!("training NLL is {v}"),
                    snapshot: Box::new(params),
                });
            }
        }
        records.push(EpochRecord {
            epoch,
            nll,
            val_nll,
            grad_norm: norm_sum / batches as f64,
            lr,
        });
        if (cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0) || epoch >= first_final {
            snapshots.push(Snapshot {
                epoch,
                params: params.clone(),
            });
        }
        lr *= cfg.lr_decay;
    }

    let quartile = &records[records.len() - (records.len() / 4).max(1)..];
    let vals: Vec<f64> = quartile.iter().filter_map(|r| r.val_nll).collect();
    if let (Some(first), Some(last)) = (vals.first(), vals.last()) {
        let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if last - best.min(*first) > cfg.validation_tolerance {
            let w = format!(
                "validation NLL rose from {:.4} to {last:.4} over the final quarter of training",
                best.min(*first)
            );
            log::warn!("{w}");
            warnings.push(w);
        }
    }

    Ok(TrainReport {
        config: cfg.clone(),
        n_train: train.len(),
        n_validation: val.len(),
        epochs: records,
        snapshots,
        final_params: params,
        warnings,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Trains on `n` resplits of `d`. Resplit 0 uses `cfg.seed`; resplit `r > 0`
/// uses the seed derived from `(cfg.seed, r)`, which changes the
/// train/validation split, the initialization and the chains.
pub fn train_resplits(d: &Dataset, cfg: &TrainConfig, n: usize) -> Result<Vec<TrainReport>> {
    (0..n.max(1))
        .map(|r| {
            let mut c = cfg.clone();
            if r > 0 {
                c.seed = derive_path(cfg.seed, &[r as u64]);
            }
            train(d, &c)
        })
        .collect()
}

/// Parameters of the final snapshots of every report, in order.
pub fn final_ensemble(reports: &[TrainReport]) -> Vec<&RbmParams> {
    reports
        .iter()
        .flat_map(|r| {
            let first = r.config.epochs.saturating_sub(r.config.final_snapshots) + 1;
            r.snapshots.iter().filter(move |s| s.epoch >= first).map(|s| &s.params)
        })
        .collect()
}

/// Mean and standard deviation of an ensemble of estimates.
pub fn ensemble_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}
