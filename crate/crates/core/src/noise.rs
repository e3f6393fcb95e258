//! Factorized bit-flip measurement channel.
//!
//! A true configuration `s` is recorded as `t` with probability
//! `prod_j p(t_j | s_j)`, with `p(1|0) = p10` and `p(0|1) = p01` at every site.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bits::{BitString, Dataset};
use crate::error::{Error, Result};
use crate::rbm::{sigmoid, RbmParams};
use crate::rng::{rng_for, stream, Rng};

/// Largest chain for which the corrupted distribution is tabulated.
pub const MAX_CHANNEL_SITES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Probability of recording 1 when the atom was in 0.
    pub p10: f64,
    /// Probability of recording 0 when the atom was in 1.
    pub p01: f64,
}

impl NoiseModel {
    pub fn new(p10: f64, p01: f64) -> Result<Self> {
        let nm = NoiseModel { p10, p01 };
        nm.validate()?;
        Ok(nm)
    }

    /// Detection errors of the experiment being modelled.
    pub fn experimental() -> Self {
        NoiseModel { p10: 0.01, p01: 0.04 }
    }

    pub fn noiseless() -> Self {
        NoiseModel { p10: 0.0, p01: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("p10", self.p10), ("p01", self.p01)] {
            if !(0.0..0.5).contains(&r) {
                return Err(Error::argument(format!("error rate {name} = {r} must lie in [0, 0.5)")));
            }
        }
        if (self.p10 - (1.0 - self.p01)).abs() < 1e-12 {
            return Err(Error::argument("degenerate channel: p10 = 1 - p01"));
        }
        Ok(())
    }

    /// True when the channel is the identity and the noise layer is skipped.
    pub fn is_zero(&self) -> bool {
        self.p10 == 0.0 && self.p01 == 0.0
    }

    /// Single-site `p(t | s)`.
    #[inline]
    pub fn site_prob(&self, t: bool, s: bool) -> f64 {
        match (t, s) {
            (false, false) => 1.0 - self.p10,
            (true, false) => self.p10,
            (false, true) => self.p01,
            (true, true) => 1.0 - self.p01,
        }
    }

    /// Flip probability for a site whose true value is `s`.
    #[inline]
    fn flip_rate(&self, s: bool) -> f64 {
        if s {
            self.p01
        } else {
            self.p10
        }
    }
}

/// Log-linear form of the single-site channel:
/// `p(t|s) = p(0|0) exp(w_tilde t s + b_sigma s + b_tau t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCouplings {
    pub w_tilde: f64,
    pub b_sigma: f64,
    pub b_tau: f64,
}

pub fn channel_prob(t: &BitString, s: &BitString, nm: &NoiseModel) -> Result<f64> {
    if t.len() != s.len() {
        return Err(Error::argument(format!(
            "record length {} differs from configuration length {}",
            t.len(),
            s.len()
        )));
    }
    Ok(t.iter().zip(s.iter()).map(|(a, b)| nm.site_prob(a, b)).product())
}

/// Passes one configuration through the channel.
pub fn corrupt_bitstring(s: &BitString, nm: &NoiseModel, rng: &mut Rng) -> BitString {
    let n = s.len();
    let mut x = s.index();
    for i in 0..n {
        let bit = s.get(i);
        if rng.random::<f64>() < nm.flip_rate(bit) {
            x ^= 1 << (n - 1 - i);
        }
    }
    BitString::from_index(x, n)
}

/// Flips every bit of every record independently. Uses the stream
/// `(seed, CORRUPT)`, consumed one draw per bit in record order.
pub fn corrupt_dataset(d: &Dataset, nm: &NoiseModel, seed: u64) -> Dataset {
    let mut rng = rng_for(seed, &[stream::CORRUPT]);
    let samples = d
        .samples
        .iter()
        .map(|s| corrupt_bitstring(s, nm, &mut rng))
        .collect();
    let mut meta = d.meta.clone();
    meta.noise = Some(*nm);
    meta.noise_seed = Some(seed);
    meta.source = format!("{} [corrupted]", meta.source);
    Dataset { samples, meta }
}

/// Applies the channel to a dense distribution over `2^n` configurations in place.
pub fn apply_channel(p: &mut [f64], n: usize, nm: &NoiseModel) {
    assert_eq!(p.len(), 1usize << n);
    let (a, b) = (nm.p10, nm.p01);
    for i in 0..n {
        let m = 1usize << (n - 1 - i);
        for x in 0..p.len() {
            if x & m == 0 {
                let (p0, p1) = (p[x], p[x | m]);
                p[x] = (1.0 - a) * p0 + b * p1;
                p[x | m] = a * p0 + (1.0 - b) * p1;
            }
        }
    }
}

/// `p~(t) = sum_s p(t|s) p(s)` for every record `t`.
pub fn corrupted_distribution_exact(params: &RbmParams, nm: &NoiseModel) -> Result<Vec<f64>> {
    let n = params.n_visible;
    if n > MAX_CHANNEL_SITES {
        return Err(Error::Resource {
            what: "sites for the corrupted distribution",
            limit: MAX_CHANNEL_SITES,
            requested: n,
        });
    }
    let mut p = params.probabilities_exact()?;
    if !nm.is_zero() {
        apply_channel(&mut p, n, nm);
    }
    Ok(p)
}

/// Per-site `p(s_j = 1 | t, h)` for the three-layer model, written into `out`
/// given the visible activations `a = b + W^T h`.
pub fn clamped_visible_from_activations(nm: &NoiseModel, t: &BitString, act: &[f64], out: &mut [f64]) {
    for (i, (o, &a)) in out.iter_mut().zip(act).enumerate() {
        let ti = t.get(i);
        let up = nm.site_prob(ti, true) * sigmoid(a);
        let down = nm.site_prob(ti, false) * sigmoid(-a);
        *o = up / (up + down);
    }
}

/// Posterior mean of each visible unit given the record `t` and hidden state `h`.
/// A zero-rate channel has no noise layer, so this is then the plain
/// [`RbmParams::conditional_visible`].
pub fn clamped_visible_conditional(
    params: &RbmParams,
    nm: &NoiseModel,
    t: &BitString,
    h: &BitString,
) -> Result<Vec<f64>> {
    if t.len() != params.n_visible || h.len() != params.n_hidden {
        return Err(Error::argument("record or hidden state does not match the RBM size"));
    }
    if nm.is_zero() {
        return Ok(params.conditional_visible(h));
    }
    let hb: Vec<bool> = h.iter().collect();
    let mut act = vec![0.0; params.n_visible];
    params.visible_activations(&hb, &mut act);
    let mut out = vec![0.0; params.n_visible];
    clamped_visible_from_activations(nm, t, &act, &mut out);
    Ok(out)
}

pub fn effective_couplings(nm: &NoiseModel) -> Result<NoiseCouplings> {
    if nm.p10 <= 0.0 || nm.p01 <= 0.0 {
        return Err(Error::Singular(format!(
            "noise-layer couplings diverge for p10 = {}, p01 = {}; use the noise-free path",
            nm.p10, nm.p01
        )));
    }
    let p00 = 1.0 - nm.p10;
    let p11 = 1.0 - nm.p01;
    Ok(NoiseCouplings {
        w_tilde: (p11 * p00 / (nm.p10 * nm.p01)).ln(),
        b_sigma: (nm.p01 / p00).ln(),
        b_tau: (nm.p10 / p00).ln(),
    })
}
