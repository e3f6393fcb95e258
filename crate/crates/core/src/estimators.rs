//! Observables of trained RBM states and of measurement datasets.
//!
//! Pauli operators follow `sigma^z = 2n - 1`, so bit 1 has eigenvalue +1.
//! Monte Carlo errors come from a jackknife over bins of consecutive samples
//! of one chain; dataset statistics use the plain (bin size 1) jackknife.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bits::{BitString, Dataset};
use crate::error::{Error, Result};
use crate::noise::{corrupt_bitstring, NoiseModel};
use crate::quantum::QuantumState;
use crate::rbm::{uniform_bitstring, GibbsChain, RbmParams};
use crate::rng::{derive_path, rng_for, stream};

/// Bin length for Monte Carlo error bars.
pub const MC_BIN: usize = 100;

/// Largest operator support for local estimators.
pub const MAX_OPERATOR_SITES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableResult {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    /// Number of samples (or sample pairs) behind a Monte Carlo value; 0 for exact values.
    pub n_samples: usize,
    pub method: Method,
    /// Sites (0-based) the observable refers to.
    pub sites: Vec<usize>,
    pub metadata: BTreeMap<String, String>,
}

impl ObservableResult {
    fn new(name: impl Into<String>, value: f64, std_error: f64, n_samples: usize, method: Method, sites: Vec<usize>) -> Self {
        ObservableResult {
            name: name.into(),
            value,
            std_error,
            n_samples,
            method,
            sites,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }
}

/// Gibbs sampling schedule for Monte Carlo estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    /// Independent chains; samples are split evenly between them.
    pub n_chains: usize,
    /// Sweeps discarded at the start of each chain.
    pub burn_in: usize,
    /// Sweeps between recorded samples.
    pub thin: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            n_chains: 100,
            burn_in: 200,
            thin: 1,
        }
    }
}

/// `n_mc` model samples in chain-major order. Chain `c` starts uniformly at
/// random and uses the stream `(seed, GIBBS, c)`.
pub fn draw_samples(params: &RbmParams, n_mc: usize, seed: u64, mc: &McSettings) -> Result<Vec<BitString>> {
    if n_mc == 0 {
        return Err(Error::argument("n_mc must be at least 1"));
    }
    if mc.n_chains == 0 || mc.thin == 0 {
        return Err(Error::argument("n_chains and thin must be positive"));
    }
    let chains = mc.n_chains.min(n_mc);
    let mut out = Vec::with_capacity(n_mc);
    for c in 0..chains {
        let len = n_mc / chains + usize::from(c < n_mc % chains);
        let mut rng = rng_for(seed, &[stream::GIBBS, c as u64]);
        let start = uniform_bitstring(&mut rng, params.n_visible);
        let mut chain = GibbsChain::new(params, start, rng);
        chain.run(mc.burn_in);
        for _ in 0..len {
            out.push(chain.run(mc.thin));
        }
    }
    Ok(out)
}

/// Jackknife estimate of `stat(means of features)` over bins of `bin` rows.
/// Returns (value on the full set, standard error).
fn jackknife<F>(rows: &[Vec<f64>], bin: usize, stat: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let nf = rows[0].len();
    let n = rows.len();
    let bin = bin.max(1);
    let n_bins = n / bin;
    let mut total = vec![0.0; nf];
    for r in rows {
        for (t, v) in total.iter_mut().zip(r) {
            *t += v;
        }
    }
    let full: Vec<f64> = total.iter().map(|t| t / n as f64).collect();
    let value = stat(&full);
    if n_bins < 2 {
        return (value, 0.0);
    }
    // Rows beyond the last full bin are used for the value only.
    let used = n_bins * bin;
    let mut used_total = vec![0.0; nf];
    let mut bins = Vec::with_capacity(n_bins);
    for chunk in rows[..used].chunks(bin) {
        let mut s = vec![0.0; nf];
        for r in chunk {
            for (t, v) in s.iter_mut().zip(r) {
                *t += v;
            }
        }
        for (u, v) in used_total.iter_mut().zip(&s) {
            *u += v;
        }
        bins.push(s);
    }
    let loo: Vec<f64> = bins
        .iter()
        .map(|b| {
            let m: Vec<f64> = used_total
                .iter()
                .zip(b)
                .map(|(t, v)| (t - v) / (used - bin) as f64)
                .collect();
            stat(&m)
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / n_bins as f64;
    let var = (n_bins - 1) as f64 / n_bins as f64 * loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (value, var.sqrt())
}

fn z(s: &BitString, i: usize) -> f64 {
    if s.get(i) {
        1.0
    } else {
        -1.0
    }
}

/// Where diagonal statistics come from.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    /// Empirical frequencies of a measurement record.
    Dataset(&'a Dataset),
    /// Model samples drawn elsewhere, in chain-major order.
    Samples(&'a [BitString]),
    /// Exact probability table of an RBM.
    Exact(&'a RbmParams),
    /// Gibbs samples of an RBM.
    Gibbs {
        params: &'a RbmParams,
        n_mc: usize,
        seed: u64,
        mc: McSettings,
    },
}

impl Source<'_> {
    fn n_sites(&self) -> usize {
        match self {
            Source::Dataset(d) => d.n_sites(),
            Source::Samples(s) => s.first().map_or(0, |x| x.len()),
            Source::Exact(p) | Source::Gibbs { params: p, .. } => p.n_visible,
        }
    }
}

fn check_site(n: usize, i: usize) -> Result<()> {
    if i >= n {
        return Err(Error::argument(format!("site {i} out of range for {n} sites")));
    }
    Ok(())
}

/// `<z_i z_j> - <z_i><z_j>` as a function of the feature means `[z_i, z_j, z_i z_j]`.
fn connected(m: &[f64]) -> f64 {
    m[2] - m[0] * m[1]
}

/// Statistic over (site pairs) computed from samples or an exact table.
fn zz_statistic(src: &Source<'_>, pairs: &[(usize, usize)], name: String, sites: Vec<usize>) -> Result<ObservableResult> {
    let features = |s: &BitString| -> Vec<f64> {
        let mut f = Vec::with_capacity(3 * pairs.len());
        for &(i, j) in pairs {
            let (a, b) = (z(s, i), z(s, j));
            f.extend([a, b, a * b]);
        }
        f
    };
    let stat = |m: &[f64]| m.chunks(3).map(connected).sum::<f64>() / pairs.len() as f64;
    let (samples, bin, label): (Vec<BitString>, usize, &str) = match *src {
        Source::Dataset(d) => {
            if d.is_empty() {
                return Err(Error::argument("empty dataset"));
            }
            (d.samples.clone(), 1, "dataset")
        }
        Source::Samples(s) => {
            if s.is_empty() {
                return Err(Error::argument("no samples"));
            }
            (s.to_vec(), MC_BIN, "gibbs")
        }
        Source::Gibbs { params, n_mc, seed, mc } => (draw_samples(params, n_mc, seed, &mc)?, MC_BIN, "gibbs"),
        Source::Exact(p) => {
            let probs = p.probabilities_exact()?;
            let n = p.n_visible;
            let mut m = vec![0.0; 3 * pairs.len()];
            for (x, &q) in probs.iter().enumerate() {
                let f = features(&BitString::from_index(x as u64, n));
                for (a, b) in m.iter_mut().zip(f) {
                    *a += q * b;
                }
            }
            return Ok(ObservableResult::new(name, stat(&m), 0.0, 0, Method::Exact, sites));
        }
    };
    let rows: Vec<Vec<f64>> = samples.iter().map(features).collect();
    let (value, err) = jackknife(&rows, bin, stat);
    Ok(ObservableResult::new(name, value, err, samples.len(), Method::MonteCarlo, sites).with_meta("source", label))
}

/// Connected `<sz_i sz_j>_c`. `i == j` gives the variance of `sz_i`.
pub fn diagonal_correlator(src: Source<'_>, i: usize, j: usize) -> Result<ObservableResult> {
    let n = src.n_sites();
    check_site(n, i)?;
    check_site(n, j)?;
    zz_statistic(&src, &[(i, j)], format!("zz_c({i},{j})"), vec![i, j])
}

/// Average of `<sz_i sz_{i+s}>_c` over the `N - s` pairs at distance `s`.
pub fn avg_correlator(src: Source<'_>, s: usize) -> Result<ObservableResult> {
    let n = src.n_sites();
    if s < 1 || s >= n {
        return Err(Error::argument(format!("distance {s} must lie in 1..{n}")));
    }
    let pairs: Vec<(usize, usize)> = (0..n - s).map(|i| (i, i + s)).collect();
    Ok(zz_statistic(&src, &pairs, format!("zz_avg({s})"), vec![])?.with_meta("distance", s))
}

/// Mean occupation `<n_i>`.
pub fn occupation(src: Source<'_>, i: usize) -> Result<ObservableResult> {
    check_site(src.n_sites(), i)?;
    let name = format!("n({i})");
    let (samples, bin) = match src {
        Source::Dataset(d) => (d.samples.clone(), 1),
        Source::Samples(s) => (s.to_vec(), MC_BIN),
        Source::Gibbs { params, n_mc, seed, mc } => (draw_samples(params, n_mc, seed, &mc)?, MC_BIN),
        Source::Exact(p) => {
            let v = p
                .probabilities_exact()?
                .iter()
                .enumerate()
                .filter(|(x, _)| BitString::from_index(*x as u64, p.n_visible).get(i))
                .map(|(_, q)| q)
                .sum();
            return Ok(ObservableResult::new(name, v, 0.0, 0, Method::Exact, vec![i]));
        }
    };
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| vec![f64::from(u8::from(s.get(i)))]).collect();
    let (v, e) = jackknife(&rows, bin, |m| m[0]);
    Ok(ObservableResult::new(name, v, e, samples.len(), Method::MonteCarlo, vec![i]))
}

/// A real operator on at most three sites, as a `2^k x 2^k` matrix in the
/// local occupation basis (first listed site most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    pub name: String,
    pub sites: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl LocalOperator {
    pub fn new(name: impl Into<String>, sites: Vec<usize>, matrix: DMatrix<f64>) -> Result<Self> {
        let k = sites.len();
        if k == 0 || k > MAX_OPERATOR_SITES {
            return Err(Error::argument(format!("operators act on 1..={MAX_OPERATOR_SITES} sites, got {k}")));
        }
        let mut sorted = sites.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k {
            return Err(Error::argument("operator sites must be distinct"));
        }
        if matrix.nrows() != 1 << k || matrix.ncols() != 1 << k {
            return Err(Error::argument("operator matrix has the wrong dimension"));
        }
        Ok(LocalOperator {
            name: name.into(),
            sites,
            matrix,
        })
    }

    pub fn number(i: usize) -> Self {
        Self::new(format!("n({i})"), vec![i], DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).unwrap()
    }

    pub fn sigma_x(i: usize) -> Self {
        Self::new(format!("x({i})"), vec![i], pauli_x()).unwrap()
    }

    pub fn sigma_z(i: usize) -> Self {
        Self::new(format!("z({i})"), vec![i], DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0])).unwrap()
    }

    pub fn xx(i: usize, j: usize) -> Result<Self> {
        Self::new(format!("xx({i},{j})"), vec![i, j], pauli_x().kronecker(&pauli_x()))
    }

    pub fn is_diagonal(&self) -> bool {
        let m = &self.matrix;
        (0..m.nrows()).all(|r| (0..m.ncols()).all(|c| r == c || m[(r, c)] == 0.0))
    }

    pub(crate) fn local_index(&self, s: &BitString) -> usize {
        self.sites.iter().fold(0, |acc, &i| (acc << 1) | usize::from(s.get(i)))
    }

    pub(crate) fn with_local(&self, s: &BitString, local: usize) -> BitString {
        let k = self.sites.len();
        let mut out = *s;
        for (p, &i) in self.sites.iter().enumerate() {
            out = out.with(i, (local >> (k - 1 - p)) & 1 == 1);
        }
        out
    }

    /// `O_L(s) = sum_s' <s|O|s'> psi(s') / psi(s)`.
    pub fn local_value(&self, params: &RbmParams, s: &BitString, scratch: &mut [f64]) -> f64 {
        let row = self.local_index(s);
        let e_s = params.effective_energy_index(s.index(), scratch);
        let mut total = 0.0;
        for col in 0..self.matrix.ncols() {
            let m = self.matrix[(row, col)];
            if m == 0.0 {
                continue;
            }
            if col == row {
                total += m;
            } else {
                let t = self.with_local(s, col);
                let e_t = params.effective_energy_index(t.index(), scratch);
                total += m * (0.5 * (e_t - e_s)).exp();
            }
        }
        total
    }
}

fn pauli_x() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

fn check_operator(params: &RbmParams, op: &LocalOperator) -> Result<()> {
    match op.sites.iter().find(|&&i| i >= params.n_visible) {
        Some(i) => Err(Error::argument(format!("operator site {i} out of range"))),
        None => Ok(()),
    }
}

/// Monte Carlo mean of the local estimator over Gibbs samples.
pub fn local_estimator_on_samples(params: &RbmParams, op: &LocalOperator, samples: &[BitString]) -> Result<ObservableResult> {
    check_operator(params, op)?;
    if samples.is_empty() {
        return Err(Error::argument("no samples"));
    }
    let mut scratch = vec![0.0; params.n_hidden];
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| vec![op.local_value(params, s, &mut scratch)]).collect();
    let (v, e) = jackknife(&rows, MC_BIN, |m| m[0]);
    Ok(ObservableResult::new(op.name.clone(), v, e, samples.len(), Method::MonteCarlo, op.sites.clone()))
}

pub fn local_estimator_expectation(
    params: &RbmParams,
    op: &LocalOperator,
    n_mc: usize,
    seed: u64,
    mc: &McSettings,
) -> Result<ObservableResult> {
    check_operator(params, op)?;
    let samples = draw_samples(params, n_mc, seed, mc)?;
    local_estimator_on_samples(params, op, &samples)
}

/// `<psi|O|psi>` by enumeration.
pub fn exact_expectation(params: &RbmParams, op: &LocalOperator) -> Result<ObservableResult> {
    check_operator(params, op)?;
    let psi = params.amplitudes_exact()?;
    let n = params.n_visible;
    let mut v = 0.0;
    for (x, &a) in psi.iter().enumerate() {
        let s = BitString::from_index(x as u64, n);
        let row = op.local_index(&s);
        for col in 0..op.matrix.ncols() {
            let m = op.matrix[(row, col)];
            if m != 0.0 {
                v += a * m * psi[op.with_local(&s, col).index() as usize];
            }
        }
    }
    Ok(ObservableResult::new(op.name.clone(), v, 0.0, 0, Method::Exact, op.sites.clone()))
}

/// `<sx_i>` at every site, all from one sample set.
pub fn transverse_profile(params: &RbmParams, n_mc: usize, seed: u64, mc: &McSettings) -> Result<Vec<ObservableResult>> {
    let samples = draw_samples(params, n_mc, seed, mc)?;
    (0..params.n_visible)
        .map(|i| local_estimator_on_samples(params, &LocalOperator::sigma_x(i), &samples))
        .collect()
}

/// Site average of the transverse field.
pub fn transverse_average(params: &RbmParams, n_mc: usize, seed: u64, mc: &McSettings) -> Result<ObservableResult> {
    transverse_average_on_samples(params, &draw_samples(params, n_mc, seed, mc)?)
}

pub fn transverse_average_on_samples(params: &RbmParams, samples: &[BitString]) -> Result<ObservableResult> {
    if samples.is_empty() {
        return Err(Error::argument("no samples"));
    }
    let n = params.n_visible;
    let ops: Vec<LocalOperator> = (0..n).map(LocalOperator::sigma_x).collect();
    let mut scratch = vec![0.0; params.n_hidden];
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| vec![ops.iter().map(|o| o.local_value(params, s, &mut scratch)).sum::<f64>() / n as f64])
        .collect();
    let (v, e) = jackknife(&rows, MC_BIN, |m| m[0]);
    Ok(ObservableResult::new("x_avg", v, e, samples.len(), Method::MonteCarlo, vec![]))
}

fn xx_features(params: &RbmParams, i: usize, s: &BitString, scratch: &mut [f64]) -> Vec<f64> {
    let xi = LocalOperator::sigma_x(i).local_value(params, s, scratch);
    let xj = LocalOperator::sigma_x(i + 1).local_value(params, s, scratch);
    let xx = LocalOperator::xx(i, i + 1).unwrap().local_value(params, s, scratch);
    vec![xi, xj, xx]
}

/// `<sx_i sx_{i+1}> - <sx_i><sx_{i+1}>`; the jackknife keeps the covariance
/// of the three estimators.
pub fn xx_connected_on_samples(params: &RbmParams, i: usize, samples: &[BitString]) -> Result<ObservableResult> {
    if i + 1 >= params.n_visible {
        return Err(Error::argument(format!("bond ({i},{}) out of range", i + 1)));
    }
    if samples.is_empty() {
        return Err(Error::argument("no samples"));
    }
    let mut scratch = vec![0.0; params.n_hidden];
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| xx_features(params, i, s, &mut scratch)).collect();
    let (v, e) = jackknife(&rows, MC_BIN, connected);
    Ok(ObservableResult::new(format!("xx_c({i},{})", i + 1), v, e, samples.len(), Method::MonteCarlo, vec![i, i + 1]))
}

pub fn xx_connected(params: &RbmParams, i: usize, n_mc: usize, seed: u64, mc: &McSettings) -> Result<ObservableResult> {
    let samples = draw_samples(params, n_mc, seed, mc)?;
    xx_connected_on_samples(params, i, &samples)
}

pub fn xx_connected_exact(params: &RbmParams, i: usize) -> Result<ObservableResult> {
    if i + 1 >= params.n_visible {
        return Err(Error::argument(format!("bond ({i},{}) out of range", i + 1)));
    }
    let a = exact_expectation(params, &LocalOperator::sigma_x(i))?.value;
    let b = exact_expectation(params, &LocalOperator::sigma_x(i + 1))?.value;
    let ab = exact_expectation(params, &LocalOperator::xx(i, i + 1)?)?.value;
    Ok(ObservableResult::new(format!("xx_c({i},{})", i + 1), ab - a * b, 0.0, 0, Method::Exact, vec![i, i + 1]))
}

fn check_region(n: usize, a: &Range<usize>) -> Result<()> {
    if a.start >= a.end || a.end > n {
        return Err(Error::argument(format!("region {a:?} must be a nonempty window of 0..{n}")));
    }
    Ok(())
}

/// Configuration with the sites in `a` taken from `x` and the rest from `y`.
fn splice(x: u64, y: u64, n: usize, a: &Range<usize>) -> u64 {
    let mask: u64 = a.clone().map(|i| 1u64 << (n - 1 - i)).sum();
    (x & mask) | (y & !mask)
}

/// Bin size for the swap estimator. Long chains get 20 bins each, since the
/// swap weight inherits the slow switching between distant configurations.
fn swap_bin(n_mc: usize, mc: &McSettings) -> usize {
    MC_BIN.max(n_mc / mc.n_chains.max(1) / 20)
}

/// Two-replica swap estimate of `S_2(A)`. The replicas use the derived seeds
/// `(seed, REPLICA_A)` and `(seed, REPLICA_B)`; sample `k` of one is paired
/// with sample `k` of the other.
pub fn renyi2_swap(params: &RbmParams, a: Range<usize>, n_mc: usize, seed: u64, mc: &McSettings) -> Result<ObservableResult> {
    let n = params.n_visible;
    check_region(n, &a)?;
    let r1 = draw_samples(params, n_mc, derive_path(seed, &[stream::REPLICA_A]), mc)?;
    let r2 = draw_samples(params, n_mc, derive_path(seed, &[stream::REPLICA_B]), mc)?;
    let mut scratch = vec![0.0; params.n_hidden];
    let mut e = |x: u64| params.effective_energy_index(x, &mut scratch);
    let rows: Vec<Vec<f64>> = r1
        .iter()
        .zip(&r2)
        .map(|(s, t)| {
            let (x, y) = (s.index(), t.index());
            let swapped = e(splice(x, y, n, &a)) + e(splice(y, x, n, &a));
            vec![(0.5 * (swapped - e(x) - e(y))).exp()]
        })
        .collect();
    let (mean, err) = jackknife(&rows, swap_bin(n_mc, mc), |m| m[0]);
    if !(mean > 0.0) {
        return Err(Error::Numeric(format!("swap estimator mean {mean} is not positive")));
    }
    Ok(ObservableResult::new(
        format!("renyi2({}..{})", a.start, a.end),
        -mean.ln(),
        err / mean,
        rows.len(),
        Method::MonteCarlo,
        a.collect(),
    )
    .with_meta("purity", mean))
}

/// `psi` reshaped with the sites of `a` as row index.
fn reshape(params: &RbmParams, a: &Range<usize>) -> Result<DMatrix<f64>> {
    let n = params.n_visible;
    let psi = params.amplitudes_exact()?;
    let ka = a.len();
    let mut m = DMatrix::zeros(1 << ka, 1 << (n - ka));
    for (x, &v) in psi.iter().enumerate() {
        let (mut r, mut c) = (0usize, 0usize);
        for i in 0..n {
            let bit = (x >> (n - 1 - i)) & 1;
            if a.contains(&i) {
                r = (r << 1) | bit;
            } else {
                c = (c << 1) | bit;
            }
        }
        m[(r, c)] = v;
    }
    Ok(m)
}

fn purity_of(rho: &DMatrix<f64>) -> f64 {
    rho.iter().map(|v| v * v).sum()
}

/// Exact `S_2` of region `a` and of its complement for the RBM state.
pub fn renyi2_exact_pair(params: &RbmParams, a: Range<usize>) -> Result<(f64, f64)> {
    check_region(params.n_visible, &a)?;
    let m = reshape(params, &a)?;
    let rho_a = &m * m.transpose();
    let rho_b = m.transpose() * &m;
    Ok((-purity_of(&rho_a).ln(), -purity_of(&rho_b).ln()))
}

pub fn renyi2_exact(params: &RbmParams, a: Range<usize>) -> Result<ObservableResult> {
    let (s, _) = renyi2_exact_pair(params, a.clone())?;
    Ok(ObservableResult::new(format!("renyi2({}..{})", a.start, a.end), s, 0.0, 0, Method::Exact, a.collect()))
}

/// How to evaluate an entropy.
#[derive(Clone, Copy, Debug)]
pub enum Evaluation {
    Exact,
    MonteCarlo { n_mc: usize, seed: u64, mc: McSettings },
}

/// `I_2` across the cut after `s` sites. The RBM state is pure, so
/// `I_2 = S_2(A) + S_2(B)`.
pub fn mutual_information_rbm(params: &RbmParams, s: usize, how: Evaluation) -> Result<ObservableResult> {
    let n = params.n_visible;
    if s < 1 || s >= n {
        return Err(Error::argument(format!("bond {s} must lie in 1..{n}")));
    }
    let name = format!("i2({s})");
    match how {
        Evaluation::Exact => {
            let (sa, sb) = renyi2_exact_pair(params, 0..s)?;
            Ok(ObservableResult::new(name, sa + sb, 0.0, 0, Method::Exact, vec![s])
                .with_meta("s2_a", sa)
                .with_meta("s2_b", sb))
        }
        Evaluation::MonteCarlo { n_mc, seed, mc } => {
            // Swapping A and swapping B give the same pair estimator.
            let r = renyi2_swap(params, 0..s, n_mc, seed, &mc)?;
            Ok(ObservableResult::new(name, 2.0 * r.value, 2.0 * r.std_error, r.n_samples, Method::MonteCarlo, vec![s])
                .with_meta("s2_a", r.value))
        }
    }
}

/// Observables selectable by name in evaluation configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Occupation { site: usize },
    Zz { i: usize, j: usize },
    ZzAvg { distance: usize },
    X { site: usize },
    XAvg,
    XxConnected { bond: usize },
    Renyi2 { start: usize, end: usize },
    MutualInformation { bond: usize },
}

impl Observable {
    pub fn is_diagonal(&self) -> bool {
        matches!(self, Observable::Occupation { .. } | Observable::Zz { .. } | Observable::ZzAvg { .. })
    }

    /// Evaluates a diagonal observable on any source.
    pub fn diagonal(&self, src: Source<'_>) -> Result<ObservableResult> {
        match *self {
            Observable::Occupation { site } => occupation(src, site),
            Observable::Zz { i, j } => diagonal_correlator(src, i, j),
            Observable::ZzAvg { distance } => avg_correlator(src, distance),
            _ => Err(Error::argument(format!("{self:?} is not diagonal in the occupation basis"))),
        }
    }
}

/// Diagonal observable under the corrupted model distribution: Gibbs
/// samples are passed through the channel with the stream `(seed, CHANNEL)`.
pub fn forward_noise(
    params: &RbmParams,
    nm: &NoiseModel,
    observable: &Observable,
    n_mc: usize,
    seed: u64,
    mc: &McSettings,
) -> Result<ObservableResult> {
    if !observable.is_diagonal() {
        return Err(Error::argument(format!("forward noising needs a diagonal observable, got {observable:?}")));
    }
    let samples = draw_samples(params, n_mc, seed, mc)?;
    let mut rng = rng_for(seed, &[stream::CHANNEL]);
    let noisy: Vec<BitString> = samples.iter().map(|s| corrupt_bitstring(s, nm, &mut rng)).collect();
    let d = Dataset::new(params.n_visible, noisy, Default::default())?;
    let mut r = observable.diagonal(Source::Dataset(&d))?;
    // The samples come from chains, so use Monte Carlo bins for the error.
    r.std_error = binned_error(observable, &d)?;
    r.metadata.insert("source".into(), "gibbs+channel".into());
    r.metadata.insert("p10".into(), nm.p10.to_string());
    r.metadata.insert("p01".into(), nm.p01.to_string());
    Ok(r)
}

fn binned_error(observable: &Observable, d: &Dataset) -> Result<f64> {
    let n = d.n_sites();
    let pairs: Vec<(usize, usize)> = match *observable {
        Observable::Occupation { site } => {
            let rows: Vec<Vec<f64>> = d.samples.iter().map(|s| vec![f64::from(u8::from(s.get(site)))]).collect();
            return Ok(jackknife(&rows, MC_BIN, |m| m[0]).1);
        }
        Observable::Zz { i, j } => vec![(i, j)],
        Observable::ZzAvg { distance } => (0..n - distance).map(|i| (i, i + distance)).collect(),
        _ => unreachable!("checked diagonal"),
    };
    let rows: Vec<Vec<f64>> = d
        .samples
        .iter()
        .map(|s| pairs.iter().flat_map(|&(i, j)| [z(s, i), z(s, j), z(s, i) * z(s, j)]).collect())
        .collect();
    Ok(jackknife(&rows, MC_BIN, |m| m.chunks(3).map(connected).sum::<f64>() / pairs.len() as f64).1)
}

/// The RBM wavefunction `sqrt(p)` as a state vector.
pub fn rbm_state(params: &RbmParams) -> Result<QuantumState> {
    QuantumState::pure_real(params.n_visible, &params.amplitudes_exact()?)
}
