//! Dense pure and mixed states, reduced density operators, entropies and
//! fidelities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::bits::{BitString, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

use super::hamiltonian::MAX_PURE_SITES;

/// Largest chain accepted for density-operator work.
pub const MAX_MIXED_SITES: usize = 10;

pub const NORM_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const EIGEN_FLOOR: f64 = -1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum StateData {
    Pure(DVector<C64>),
    Mixed(DMatrix<C64>),
}

/// A state over the `2^N` occupation basis.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    n_sites: usize,
    data: StateData,
}

impl QuantumState {
    pub fn pure(n_sites: usize, amplitudes: DVector<C64>) -> Result<Self> {
        check_dim(n_sites, amplitudes.len(), MAX_PURE_SITES)?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::argument(format!("state norm {norm} is not 1")));
        }
        Ok(QuantumState {
            n_sites,
            data: StateData::Pure(amplitudes),
        })
    }

    /// Pure state from real amplitudes.
    pub fn pure_real(n_sites: usize, amplitudes: &[f64]) -> Result<Self> {
        Self::pure(
            n_sites,
            DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|&a| C64::new(a, 0.0))),
        )
    }

    /// Normalizes `amplitudes` before building the state.
    pub fn pure_normalized(n_sites: usize, mut amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric("cannot normalize a zero or non-finite vector".into()));
        }
        amplitudes /= C64::new(norm, 0.0);
        Self::pure(n_sites, amplitudes)
    }

    pub fn mixed(n_sites: usize, rho: DMatrix<C64>) -> Result<Self> {
        check_dim(n_sites, rho.nrows(), MAX_MIXED_SITES)?;
        if rho.nrows() != rho.ncols() {
            return Err(Error::argument("density matrix must be square"));
        }
        let asym = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > HERMITIAN_TOL {
            return Err(Error::argument(format!(
                "density matrix is not Hermitian (max deviation {asym:.3e})"
            )));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::argument(format!("density matrix trace {tr} is not 1")));
        }
        let min_eig = hermitian_eigenvalues(&rho).iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < EIGEN_FLOOR {
            return Err(Error::argument(format!(
                "density matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(QuantumState {
            n_sites,
            data: StateData::Mixed(rho),
        })
    }

    /// Computational basis state `|x>`.
    pub fn basis(n_sites: usize, index: u64) -> Result<Self> {
        let dim = 1usize << n_sites;
        if index as usize >= dim {
            return Err(Error::argument(format!("basis index {index} out of range")));
        }
        let mut v = DVector::zeros(dim);
        v[index as usize] = C64::new(1.0, 0.0);
        Self::pure(n_sites, v)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn amplitudes(&self) -> Option<&DVector<C64>> {
        match &self.data {
            StateData::Pure(v) => Some(v),
            StateData::Mixed(_) => None,
        }
    }

    pub fn density_matrix(&self) -> DMatrix<C64> {
        match &self.data {
            StateData::Pure(v) => v * v.adjoint(),
            StateData::Mixed(m) => m.clone(),
        }
    }

    /// Measurement distribution `p(x) = <x|rho|x>` in the occupation basis.
    pub fn probabilities(&self) -> Vec<f64> {
        match &self.data {
            StateData::Pure(v) => v.iter().map(|a| a.norm_sqr()).collect(),
            StateData::Mixed(m) => (0..m.nrows()).map(|k| m[(k, k)].re.max(0.0)).collect(),
        }
    }

    /// `Tr rho^2`.
    pub fn purity(&self) -> f64 {
        match &self.data {
            StateData::Pure(_) => 1.0,
            StateData::Mixed(m) => m.iter().map(|z| z.norm_sqr()).sum(),
        }
    }
}

fn check_dim(n_sites: usize, dim: usize, cap: usize) -> Result<()> {
    if n_sites == 0 {
        return Err(Error::argument("a state needs at least one site"));
    }
    if n_sites > cap {
        return Err(Error::Resource {
            what: "sites for a dense state",
            limit: cap,
            requested: n_sites,
        });
    }
    if dim != 1 << n_sites {
        return Err(Error::argument(format!(
            "dimension {dim} does not match {n_sites} sites"
        )));
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix (the upper triangle is symmetrized first).
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
}

/// `sqrt(M)` for a Hermitian positive semidefinite `M`.
pub fn hermitian_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let v = &eig.eigenvectors;
    // eigenvalues at rounding level are zeros; their square roots would not be
    let floor = 64.0 * f64::EPSILON * eig.eigenvalues.amax();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| C64::new(if l > floor { l.sqrt() } else { 0.0 }, 0.0)),
    ));
    v * d * v.adjoint()
}

/// Splits a full index into (kept, traced) sub-indices. Kept sites keep
/// their relative order, first kept site most significant.
fn split_index(x: usize, n: usize, keep_mask: &[bool]) -> (usize, usize) {
    let (mut a, mut r) = (0usize, 0usize);
    for (site, &kept) in keep_mask.iter().enumerate() {
        let bit = (x >> (n - 1 - site)) & 1;
        if kept {
            a = (a << 1) | bit;
        } else {
            r = (r << 1) | bit;
        }
    }
    (a, r)
}

fn keep_mask(n: usize, keep: &[usize]) -> Result<Vec<bool>> {
    if keep.is_empty() {
        return Err(Error::argument("subsystem must be nonempty"));
    }
    let mut mask = vec![false; n];
    for &s in keep {
        if s >= n {
            return Err(Error::argument(format!("site {s} out of range for {n} sites")));
        }
        if mask[s] {
            return Err(Error::argument(format!("site {s} listed twice")));
        }
        mask[s] = true;
    }
    Ok(mask)
}

/// Reduced density operator on the sites in `keep` (0-based; order
/// irrelevant, output ordered by site).
pub fn partial_trace(state: &QuantumState, keep: &[usize]) -> Result<QuantumState> {
    let n = state.n_sites;
    let mask = keep_mask(n, keep)?;
    let k = keep.len();
    if k > MAX_MIXED_SITES {
        return Err(Error::Resource {
            what: "sites kept in a reduced density operator",
            limit: MAX_MIXED_SITES,
            requested: k,
        });
    }
    let dim_a = 1usize << k;
    let dim_b = 1usize << (n - k);
    let split: Vec<(usize, usize)> = (0..state.dim()).map(|x| split_index(x, n, &mask)).collect();
    let rho_a = match &state.data {
        StateData::Pure(v) => {
            let mut m = DMatrix::<C64>::zeros(dim_a, dim_b);
            for (x, &(a, r)) in split.iter().enumerate() {
                m[(a, r)] = v[x];
            }
            &m * m.adjoint()
        }
        StateData::Mixed(rho) => {
            // group full indices by traced part
            let mut by_rest: Vec<Vec<(usize, usize)>> = vec![Vec::with_capacity(dim_a); dim_b];
            for (x, &(a, r)) in split.iter().enumerate() {
                by_rest[r].push((a, x));
            }
            let mut out = DMatrix::<C64>::zeros(dim_a, dim_a);
            for group in &by_rest {
                for &(a, x) in group {
                    for &(a2, x2) in group {
                        out[(a, a2)] += rho[(x, x2)];
                    }
                }
            }
            out
        }
    };
    let rho_a = (&rho_a + rho_a.adjoint()) * C64::new(0.5, 0.0);
    QuantumState::mixed(k, rho_a)
}

/// Renyi entropy `S_n = log(Tr rho^n) / (1 - n)` in nats.
pub fn renyi_entropy(state: &QuantumState, order: u32) -> Result<f64> {
    if order < 2 {
        return Err(Error::argument(format!("Renyi order must be >= 2, got {order}")));
    }
    let trace_pow = match &state.data {
        StateData::Pure(_) => return Ok(0.0),
        StateData::Mixed(m) => {
            if order == 2 {
                state.purity()
            } else {
                hermitian_eigenvalues(m)
                    .iter()
                    .map(|&l| l.max(0.0).powi(order as i32))
                    .sum()
            }
        }
    };
    let s = trace_pow.ln() / (1.0 - f64::from(order));
    // clamp roundoff below zero
    Ok(if s.abs() < 1e-13 { 0.0 } else { s })
}

/// `S_n(A) + S_n(B) - S_n(rho)` for the cut after `cut_bond` sites.
pub fn mutual_information_exact(state: &QuantumState, cut_bond: usize, order: u32) -> Result<f64> {
    let n = state.n_sites;
    if cut_bond < 1 || cut_bond >= n {
        return Err(Error::argument(format!(
            "bond {cut_bond} must lie in 1..{}",
            n.saturating_sub(1)
        )));
    }
    let a: Vec<usize> = (0..cut_bond).collect();
    let b: Vec<usize> = (cut_bond..n).collect();
    let sa = renyi_entropy(&partial_trace(state, &a)?, order)?;
    let sb = renyi_entropy(&partial_trace(state, &b)?, order)?;
    let s = renyi_entropy(state, order)?;
    Ok(sa + sb - s)
}

/// Uhlmann fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))` of two density
/// matrices, evaluated as the nuclear norm of `sqrt(rho) sqrt(sigma)`.
/// The singular values carry no square-root amplification of rounding
/// noise on rank-deficient inputs.
pub fn uhlmann_fidelity(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> f64 {
    let m = hermitian_sqrt(rho) * hermitian_sqrt(sigma);
    m.svd(false, false).singular_values.iter().sum::<f64>().clamp(0.0, 1.0)
}

/// Uhlmann fidelity. Reduces to `|<psi|phi>|` for two pure states and to
/// `sqrt(<psi|rho|psi>)` when one of them is pure.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    if a.n_sites != b.n_sites {
        return Err(Error::argument(format!(
            "fidelity between {} and {} sites",
            a.n_sites, b.n_sites
        )));
    }
    let f = match (&a.data, &b.data) {
        (StateData::Pure(u), StateData::Pure(v)) => u.dotc(v).norm(),
        (StateData::Pure(v), StateData::Mixed(rho)) | (StateData::Mixed(rho), StateData::Pure(v)) => {
            let e = v.dotc(&(rho * v));
            e.re.max(0.0).sqrt()
        }
        (StateData::Mixed(r), StateData::Mixed(s)) => uhlmann_fidelity(r, s),
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Mean fidelity of the reduced operators on all windows of `s` adjacent sites.
///
/// Averages over the `N - s + 1` windows.
pub fn subsystem_avg_fidelity(a: &QuantumState, b: &QuantumState, s: usize) -> Result<f64> {
    let n = a.n_sites;
    if b.n_sites != n {
        return Err(Error::argument("states have different sizes"));
    }
    if s < 1 || s > n {
        return Err(Error::argument(format!("window size {s} must lie in 1..={n}")));
    }
    if s == n {
        return fidelity(a, b);
    }
    let windows = n - s + 1;
    let mut total = 0.0;
    for i in 0..windows {
        let sites: Vec<usize> = (i..i + s).collect();
        total += fidelity(&partial_trace(a, &sites)?, &partial_trace(b, &sites)?)?;
    }
    Ok(total / windows as f64)
}

/// Mean `-log Tr (rho_i^(s))^2` over windows of `s` adjacent sites.
pub fn subsystem_avg_renyi2(state: &QuantumState, s: usize) -> Result<f64> {
    let n = state.n_sites;
    if s < 1 || s > n {
        return Err(Error::argument(format!("window size {s} must lie in 1..={n}")));
    }
    let windows = n - s + 1;
    let mut total = 0.0;
    for i in 0..windows {
        let sites: Vec<usize> = (i..i + s).collect();
        total += if s == n {
            renyi_entropy(state, 2)?
        } else {
            renyi_entropy(&partial_trace(state, &sites)?, 2)?
        };
    }
    Ok(total / windows as f64)
}

/// Pure state with amplitudes `sqrt(<x|rho|x>)`.
pub fn positive_pure_partner(state: &QuantumState) -> Result<QuantumState> {
    let p = state.probabilities();
    let total: f64 = p.iter().sum();
    let amps: Vec<f64> = p.iter().map(|&q| (q / total).sqrt()).collect();
    QuantumState::pure_real(state.n_sites, &amps)
}

/// `n_samples` i.i.d. projective measurements in the occupation basis.
pub fn sample_measurements(state: &QuantumState, n_samples: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::argument("n_samples must be at least 1"));
    }
    let p = state.probabilities();
    let samples = sample_distribution(&p, state.n_sites, n_samples, seed)?;
    Dataset::new(
        state.n_sites,
        samples,
        DatasetMeta {
            seed,
            source: format!(
                "projective measurement of a {} state",
                if state.is_pure() { "pure" } else { "mixed" }
            ),
            ..DatasetMeta::default()
        },
    )
}

/// Draws configurations from a dense probability table.
pub fn sample_distribution(p: &[f64], n_sites: usize, n_samples: usize, seed: u64) -> Result<Vec<BitString>> {
    let dist = WeightedIndex::new(p.iter().map(|&q| q.max(0.0)))
        .map_err(|e| Error::Numeric(format!("invalid measurement distribution: {e}")))?;
    let mut rng = rng_for(seed, &[stream::MEASURE]);
    Ok((0..n_samples)
        .map(|_| BitString::from_index(dist.sample(&mut rng) as u64, n_sites))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::z2::approx_z2_state;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_mixed(n: usize, rank: usize, seed: u64) -> QuantumState {
        use rand::Rng;
        let mut rng = rng_for(seed, &[99]);
        let dim = 1 << n;
        let g = DMatrix::<C64>::from_fn(dim, rank, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let mut rho = &g * g.adjoint();
        let tr = rho.trace();
        rho /= tr;
        let rho = (&rho + rho.adjoint()) * c(0.5);
        QuantumState::mixed(n, rho).unwrap()
    }

    #[test]
    fn product_state_reduces_to_pure() {
        // |g> (x) |r>
        let s = QuantumState::basis(2, 0b01).unwrap();
        let r = partial_trace(&s, &[0]).unwrap();
        let m = r.density_matrix();
        assert!((m[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!(m[(1, 1)].norm() < 1e-14);
        assert!(renyi_entropy(&r, 2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bell_state_gives_maximally_mixed() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = QuantumState::pure_real(2, &[h, 0.0, 0.0, h]).unwrap();
        let r = partial_trace(&s, &[0]).unwrap();
        let m = r.density_matrix();
        assert!((m[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((m[(1, 1)].re - 0.5).abs() < 1e-14);
        assert!(m[(0, 1)].norm() < 1e-14);
        assert!((renyi_entropy(&r, 2).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn z2_state_three_site_block() {
        let psi = approx_z2_state();
        let r = partial_trace(&psi, &[0, 1, 2]).unwrap();
        let mut eig = hermitian_eigenvalues(&r.density_matrix());
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((eig[0] - 0.75).abs() < 1e-12);
        assert!((eig[1] - 0.25).abs() < 1e-12);
        assert!(eig[2..].iter().all(|l| l.abs() < 1e-12));
        // -log(9/16 + 1/16)
        let expect = -(10.0f64 / 16.0).ln();
        assert!((renyi_entropy(&r, 2).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.4700).abs() < 1e-4);
    }

    #[test]
    fn renyi_rejects_low_order() {
        let s = QuantumState::basis(1, 0).unwrap();
        assert!(renyi_entropy(&s, 1).is_err());
        assert_eq!(renyi_entropy(&s, 2).unwrap(), 0.0);
    }

    #[test]
    fn mutual_information_of_z2_state() {
        let psi = approx_z2_state();
        let expect = -2.0 * (10.0f64 / 16.0).ln();
        assert!((mutual_information_exact(&psi, 3, 2).unwrap() - expect).abs() < 1e-12);
        assert!(mutual_information_exact(&psi, 1, 2).unwrap().abs() < 1e-12);
        assert!(mutual_information_exact(&psi, 0, 2).is_err());
        assert!(mutual_information_exact(&psi, 8, 2).is_err());
        let product = QuantumState::basis(4, 0b0110).unwrap();
        for s in 1..4 {
            assert!(mutual_information_exact(&product, s, 2).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_argument_errors() {
        let s = QuantumState::basis(3, 0).unwrap();
        assert!(partial_trace(&s, &[]).is_err());
        assert!(partial_trace(&s, &[3]).is_err());
        assert!(partial_trace(&s, &[1, 1]).is_err());
    }

    #[test]
    fn fidelity_basics() {
        let a = QuantumState::basis(2, 1).unwrap();
        let b = QuantumState::basis(2, 2).unwrap();
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-14);
        assert!(fidelity(&a, &b).unwrap().abs() < 1e-14);
        let c3 = QuantumState::basis(3, 0).unwrap();
        assert!(fidelity(&a, &c3).is_err());
    }

    #[test]
    fn pure_mixed_fidelity_matches_uhlmann() {
        let rho = random_mixed(2, 3, 5);
        let psi = positive_pure_partner(&random_mixed(2, 2, 6)).unwrap();
        let shortcut = fidelity(&psi, &rho).unwrap();
        let full = uhlmann_fidelity(&psi.density_matrix(), &rho.density_matrix());
        assert!((shortcut - full).abs() < 1e-9, "{shortcut} vs {full}");
        let sym = fidelity(&rho, &psi).unwrap();
        assert!((shortcut - sym).abs() < 1e-12);
    }

    #[test]
    fn mixed_fidelity_symmetric_and_unit_on_equal() {
        let r = random_mixed(2, 4, 1);
        let s = random_mixed(2, 2, 2);
        let f1 = fidelity(&r, &s).unwrap();
        let f2 = fidelity(&s, &r).unwrap();
        assert!((f1 - f2).abs() < 1e-9);
        assert!((fidelity(&r, &r).unwrap() - 1.0).abs() < 1e-9);
        assert!(f1 < 1.0 - 1e-6);
    }

    #[test]
    fn subsystem_fidelity_edge_cases() {
        let r = random_mixed(3, 3, 11);
        let s = random_mixed(3, 3, 12);
        assert!((subsystem_avg_fidelity(&r, &r, 2).unwrap() - 1.0).abs() < 1e-9);
        assert!(
            (subsystem_avg_fidelity(&r, &s, 3).unwrap() - fidelity(&r, &s).unwrap()).abs() < 1e-12
        );
        assert!(subsystem_avg_fidelity(&r, &s, 0).is_err());
        assert!(subsystem_avg_fidelity(&r, &s, 4).is_err());
    }

    #[test]
    fn partner_of_positive_state_is_itself() {
        let psi = approx_z2_state();
        let p = positive_pure_partner(&psi).unwrap();
        let (u, v) = (psi.amplitudes().unwrap(), p.amplitudes().unwrap());
        assert!((u - v).norm() < 1e-12);
        let mm = QuantumState::mixed(1, DMatrix::from_diagonal_element(2, 2, c(0.5))).unwrap();
        let p = positive_pure_partner(&mm).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.amplitudes().unwrap()[0].re - h).abs() < 1e-15);
        assert!((p.amplitudes().unwrap()[1].re - h).abs() < 1e-15);
    }

    #[test]
    fn partner_lowers_single_site_entropy() {
        for seed in 0..20 {
            let rho = random_mixed(2, 2, 100 + seed);
            let p = positive_pure_partner(&rho).unwrap();
            for site in 0..2 {
                let sp = renyi_entropy(&partial_trace(&p, &[site]).unwrap(), 2).unwrap();
                let sr = renyi_entropy(&partial_trace(&rho, &[site]).unwrap(), 2).unwrap();
                assert!(sp <= sr + 1e-9, "seed {seed}: {sp} > {sr}");
            }
        }
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(QuantumState::pure_real(1, &[1.0, 1.0]).is_err());
        let not_herm = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.1), c(0.0), c(0.5)]);
        assert!(QuantumState::mixed(1, not_herm).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        assert!(QuantumState::mixed(1, neg).is_err());
    }

    #[test]
    fn measuring_a_basis_state_is_deterministic() {
        let s = QuantumState::basis(5, 0).unwrap();
        let d = sample_measurements(&s, 500, 3).unwrap();
        assert!(d.samples.iter().all(|b| b.index() == 0));
        assert_eq!(d.meta.n_sites, 5);
        assert_eq!(d.meta.seed, 3);
        assert!(sample_measurements(&s, 0, 3).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let amp = 1.0 / 4.0;
        let s = QuantumState::pure_real(4, &[amp; 16]).unwrap();
        let a = sample_measurements(&s, 10_000, 42).unwrap();
        let b = sample_measurements(&s, 10_000, 42).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = sample_measurements(&s, 10_000, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }
}
