//! Restricted Boltzmann machine over `{0,1}` visible and hidden units.
//!
//! ```text
//! p(s) = exp(E(s)) / Z,   E(s) = b.s + sum_j softplus(c_j + sum_i W_ji s_i)
//! psi(s) = sqrt(p(s))
//! ```

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bits::{BitString, Dataset, MAX_SITES};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream, Rng};

/// Largest visible layer whose partition function is enumerated.
pub const MAX_EXACT_VISIBLE: usize = 20;

/// Standard deviation of the initial weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Running `log(sum exp(x))`.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    #[inline]
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub n_visible: usize,
    pub n_hidden: usize,
    /// Row-major `n_hidden x n_visible`.
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        RbmParams {
            n_visible,
            n_hidden,
            weights: vec![0.0; n_visible * n_hidden],
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
        }
    }

    /// Gaussian weights with [`INIT_WEIGHT_STD`], zero biases.
    pub fn init_random(n_visible: usize, n_hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(n_visible, n_hidden);
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("finite std");
        let mut rng = rng_for(seed, &[stream::INIT]);
        for w in &mut p.weights {
            *w = normal.sample(&mut rng);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_visible == 0 || self.n_visible > MAX_SITES || self.n_hidden == 0 {
            return Err(Error::argument(format!(
                "RBM dimensions {}x{} out of range",
                self.n_hidden, self.n_visible
            )));
        }
        if self.weights.len() != self.n_visible * self.n_hidden
            || self.visible_bias.len() != self.n_visible
            || self.hidden_bias.len() != self.n_hidden
        {
            return Err(Error::argument("RBM parameter arrays have inconsistent lengths"));
        }
        if !self.flat().iter().all(|x| x.is_finite()) {
            return Err(Error::Numeric("non-finite RBM parameter".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.weights[j * self.n_visible + i]
    }

    pub fn n_params(&self) -> usize {
        self.n_visible * self.n_hidden + self.n_visible + self.n_hidden
    }

    /// Parameters as `[W (row-major), b, c]`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.weights);
        v.extend_from_slice(&self.visible_bias);
        v.extend_from_slice(&self.hidden_bias);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.n_params());
        let nw = self.weights.len();
        let n = self.n_visible;
        self.weights.copy_from_slice(&v[..nw]);
        self.visible_bias.copy_from_slice(&v[nw..nw + n]);
        self.hidden_bias.copy_from_slice(&v[nw + n..]);
    }

    /// `c_j + sum_i W_ji s_i` for the index-encoded configuration `x`.
    pub fn hidden_activations_index(&self, x: u64, out: &mut [f64]) {
        let n = self.n_visible;
        out.copy_from_slice(&self.hidden_bias);
        for i in 0..n {
            if x >> (n - 1 - i) & 1 == 1 {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += self.weights[j * n + i];
                }
            }
        }
    }

    pub fn hidden_activations(&self, s: &BitString) -> Vec<f64> {
        let mut a = vec![0.0; self.n_hidden];
        self.hidden_activations_index(s.index(), &mut a);
        a
    }

    pub fn effective_energy_index(&self, x: u64, scratch: &mut [f64]) -> f64 {
        let n = self.n_visible;
        self.hidden_activations_index(x, scratch);
        let vis: f64 = (0..n)
            .filter(|&i| x >> (n - 1 - i) & 1 == 1)
            .map(|i| self.visible_bias[i])
            .sum();
        vis + scratch.iter().map(|&a| softplus(a)).sum::<f64>()
    }

    pub fn effective_energy(&self, s: &BitString) -> f64 {
        debug_assert_eq!(s.len(), self.n_visible);
        let mut scratch = vec![0.0; self.n_hidden];
        self.effective_energy_index(s.index(), &mut scratch)
    }

    fn check_exact(&self) -> Result<()> {
        if self.n_visible > MAX_EXACT_VISIBLE {
            return Err(Error::Resource {
                what: "visible units for exact enumeration",
                limit: MAX_EXACT_VISIBLE,
                requested: self.n_visible,
            });
        }
        Ok(())
    }

    /// Effective energies of all `2^N` configurations, indexed as in [`BitString::index`].
    pub fn effective_energies_exact(&self) -> Result<Vec<f64>> {
        self.check_exact()?;
        let mut scratch = vec![0.0; self.n_hidden];
        Ok((0..1u64 << self.n_visible)
            .map(|x| self.effective_energy_index(x, &mut scratch))
            .collect())
    }

    pub fn log_partition_exact(&self) -> Result<f64> {
        let mut lse = LogSumExp::default();
        for e in self.effective_energies_exact()? {
            lse.push(e);
        }
        Ok(lse.value())
    }

    /// Full probability table `p(s)`.
    pub fn probabilities_exact(&self) -> Result<Vec<f64>> {
        let e = self.effective_energies_exact()?;
        let mut lse = LogSumExp::default();
        e.iter().for_each(|&x| lse.push(x));
        let log_z = lse.value();
        Ok(e.iter().map(|&x| (x - log_z).exp()).collect())
    }

    pub fn probability_exact(&self, s: &BitString) -> Result<f64> {
        let log_z = self.log_partition_exact()?;
        Ok((self.effective_energy(s) - log_z).exp())
    }

    pub fn amplitude(&self, s: &BitString) -> Result<f64> {
        Ok(self.probability_exact(s)?.sqrt())
    }

    /// `psi(s)` for every configuration.
    pub fn amplitudes_exact(&self) -> Result<Vec<f64>> {
        Ok(self.probabilities_exact()?.into_iter().map(f64::sqrt).collect())
    }

    pub fn conditional_hidden(&self, s: &BitString) -> Vec<f64> {
        self.hidden_activations(s).into_iter().map(sigmoid).collect()
    }

    pub fn visible_activations(&self, h: &[bool], out: &mut [f64]) {
        let n = self.n_visible;
        out.copy_from_slice(&self.visible_bias);
        for (j, _) in h.iter().enumerate().filter(|(_, &hj)| hj) {
            let row = &self.weights[j * n..(j + 1) * n];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
    }

    pub fn conditional_visible(&self, h: &BitString) -> Vec<f64> {
        debug_assert_eq!(h.len(), self.n_hidden);
        let hb: Vec<bool> = h.iter().collect();
        let mut a = vec![0.0; self.n_visible];
        self.visible_activations(&hb, &mut a);
        a.into_iter().map(sigmoid).collect()
    }

    /// Adds `weight * dE/d(lambda)` at `s` to `grad` (flat layout).
    pub fn accumulate_energy_gradient(&self, x: u64, weight: f64, grad: &mut [f64], scratch: &mut [f64]) {
        let n = self.n_visible;
        let nh = self.n_hidden;
        let nw = n * nh;
        self.hidden_activations_index(x, scratch);
        for (j, a) in scratch.iter().enumerate() {
            let q = weight * sigmoid(*a);
            grad[nw + n + j] += q;
            for i in 0..n {
                if x >> (n - 1 - i) & 1 == 1 {
                    grad[j * n + i] += q;
                }
            }
        }
        for i in 0..n {
            if x >> (n - 1 - i) & 1 == 1 {
                grad[nw + i] += weight;
            }
        }
    }
}

/// Starting configurations for Gibbs chains.
#[derive(Clone, Copy, Debug)]
pub enum GibbsInit<'a> {
    Uniform,
    /// Chain `c` starts at sample `c mod len`.
    Dataset(&'a Dataset),
}

/// One block-Gibbs chain: `h ~ p(h|s)` then `s ~ p(s|h)` per step.
#[derive(Clone, Debug)]
pub struct GibbsChain<'a> {
    params: &'a RbmParams,
    current_visible: BitString,
    rng: Rng,
    steps_taken: usize,
    hidden: Vec<bool>,
    act_h: Vec<f64>,
    act_v: Vec<f64>,
}

impl<'a> GibbsChain<'a> {
    pub fn new(params: &'a RbmParams, start: BitString, rng: Rng) -> Self {
        assert_eq!(start.len(), params.n_visible);
        GibbsChain {
            params,
            current_visible: start,
            rng,
            steps_taken: 0,
            hidden: vec![false; params.n_hidden],
            act_h: vec![0.0; params.n_hidden],
            act_v: vec![0.0; params.n_visible],
        }
    }

    pub fn current(&self) -> BitString {
        self.current_visible
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn step(&mut self) {
        let p = self.params;
        p.hidden_activations_index(self.current_visible.index(), &mut self.act_h);
        for (h, &a) in self.hidden.iter_mut().zip(&self.act_h) {
            *h = self.rng.random::<f64>() < sigmoid(a);
        }
        p.visible_activations(&self.hidden, &mut self.act_v);
        let mut x = 0u64;
        for &a in &self.act_v {
            x = (x << 1) | u64::from(self.rng.random::<f64>() < sigmoid(a));
        }
        self.current_visible = BitString::from_index(x, p.n_visible);
        self.steps_taken += 1;
    }

    pub fn run(&mut self, k: usize) -> BitString {
        for _ in 0..k {
            self.step();
        }
        self.current_visible
    }
}

pub fn uniform_bitstring(rng: &mut Rng, n: usize) -> BitString {
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    BitString::from_index(rng.random::<u64>() & mask, n)
}

/// Final visible states of `n_chains` independent chains after `k` sweeps.
/// Chain `c` uses the stream `(seed, GIBBS, c)`.
pub fn gibbs_sample(
    params: &RbmParams,
    n_chains: usize,
    k: usize,
    seed: u64,
    init: GibbsInit<'_>,
) -> Result<Vec<BitString>> {
    if k == 0 {
        return Err(Error::argument("Gibbs sampling needs k >= 1"));
    }
    if let GibbsInit::Dataset(d) = init {
        if d.is_empty() {
            return Err(Error::argument("cannot seed Gibbs chains from an empty dataset"));
        }
        if d.n_sites() != params.n_visible {
            return Err(Error::argument("dataset and RBM sizes differ"));
        }
    }
    Ok((0..n_chains)
        .map(|c| {
            let mut rng = rng_for(seed, &[stream::GIBBS, c as u64]);
            let start = match init {
                GibbsInit::Uniform => uniform_bitstring(&mut rng, params.n_visible),
                GibbsInit::Dataset(d) => d.samples[c % d.len()],
            };
            GibbsChain::new(params, start, rng).run(k)
        })
        .collect())
}
