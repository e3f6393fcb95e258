//! Density-matrix evolution under the Rydberg master equation
//!
//! ```text
//! d rho/dt = -i [H(t) + H_dis, rho]
//!            + sum_i sum_{k in {rg, gg}} gamma_k (L_ik rho L_ik^+ - {L_ik^+ L_ik, rho}/2)
//! ```
//!
//! with `L_i,rg = |g><r|` (decay), `L_i,gg = |g><g|` (dephasing) and the static
//! Doppler term `H_dis = -sum_i delta_i n_i`. All operators are applied in
//! structured form: the diagonal part (energies and anticommutators) is a
//! per-entry coefficient, the transverse field and the decay jumps are bit
//! flips. One right-hand-side evaluation costs `O(N 4^N)`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::site_mask;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

use super::hamiltonian::{interaction_energies, FrequencyUnits, HamiltonianParams, RydbergHamiltonian};
use super::state::{hermitian_eigenvalues, QuantumState, EIGEN_FLOOR, MAX_MIXED_SITES};
use super::sweep::SweepProfile;

/// Largest chain evolved as a density matrix by default.
pub const MAX_LINDBLAD_SITES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladParams {
    /// Decay rate `|r> -> |g>`, 1/us.
    pub gamma_rg: f64,
    /// Dephasing rate, 1/us.
    pub gamma_gg: f64,
    /// RMS width of the Gaussian per-site Doppler shifts, MHz.
    pub doppler_rms: f64,
    /// Disorder realizations to average.
    pub n_disorder: usize,
}

impl LindbladParams {
    /// `1/gamma_rg = 80 us`, `1/gamma_gg = 40 us`, Doppler width 43.5 kHz,
    /// 100 realizations.
    pub fn experimental() -> Self {
        LindbladParams {
            gamma_rg: 1.0 / 80.0,
            gamma_gg: 1.0 / 40.0,
            doppler_rms: 0.0435,
            n_disorder: 100,
        }
    }

    pub fn coherent() -> Self {
        LindbladParams {
            gamma_rg: 0.0,
            gamma_gg: 0.0,
            doppler_rms: 0.0,
            n_disorder: 1,
        }
    }

    /// Both decoherence rates multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        LindbladParams {
            gamma_rg: self.gamma_rg * alpha,
            gamma_gg: self.gamma_gg * alpha,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_rg >= 0.0 && self.gamma_gg >= 0.0 && self.doppler_rms >= 0.0) {
            return Err(Error::argument("decoherence rates and Doppler width must be >= 0"));
        }
        if self.n_disorder == 0 {
            return Err(Error::argument("n_disorder must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    /// RK4 steps over the full sweep; the nominal step is `total_time / steps`.
    pub steps: usize,
    #[serde(default)]
    pub units: FrequencyUnits,
    /// Largest accepted `|Tr rho - 1|`.
    pub trace_tolerance: f64,
    /// Largest chain accepted.
    pub max_sites: usize,
    /// Step subdivision for pure-state evolution. RK4 is not norm preserving
    /// for oscillatory modes, so state vectors take finer steps (they are
    /// cheap).
    pub pure_refine: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            steps: 4096,
            units: FrequencyUnits::Angular,
            trace_tolerance: 1e-6,
            max_sites: MAX_LINDBLAD_SITES,
            pure_refine: 8,
        }
    }
}

/// Gaussian Doppler shifts (MHz) for realization `k` of `master_seed`.
pub fn disorder_realization(lp: &LindbladParams, n_sites: usize, master_seed: u64, k: usize) -> Vec<f64> {
    if lp.doppler_rms == 0.0 {
        return vec![0.0; n_sites];
    }
    let normal = Normal::new(0.0, lp.doppler_rms).expect("finite width");
    let mut rng = rng_for(master_seed, &[stream::DISORDER, k as u64]);
    (0..n_sites).map(|_| normal.sample(&mut rng)).collect()
}

struct Liouvillian {
    dim: usize,
    scale: f64,
    /// Time-independent part of each configuration energy, MHz.
    static_energy: Vec<f64>,
    excitations: Vec<f64>,
    /// `(gamma_rg n_a + gamma_gg (N - n_a)) / 2`
    half_decay: Vec<f64>,
    masks: Vec<usize>,
    gamma_rg: f64,
    gamma_gg: f64,
}

impl Liouvillian {
    fn new(hp: &HamiltonianParams, lp: &LindbladParams, disorder: &[f64], units: FrequencyUnits) -> Self {
        let n = hp.n_sites;
        let dim = 1usize << n;
        let interaction = interaction_energies(n, hp.v_nn, hp.cutoff());
        let excitations: Vec<f64> = (0..dim).map(|x| f64::from((x as u32).count_ones())).collect();
        let static_energy = (0..dim)
            .map(|x| {
                let dis: f64 = (0..n)
                    .filter(|&i| x as u64 & site_mask(n, i) != 0)
                    .map(|i| disorder[i])
                    .sum();
                interaction[x] - dis
            })
            .collect();
        let half_decay = excitations
            .iter()
            .map(|&k| 0.5 * (lp.gamma_rg * k + lp.gamma_gg * (n as f64 - k)))
            .collect();
        Liouvillian {
            dim,
            scale: units.scale(),
            static_energy,
            excitations,
            half_decay,
            masks: (0..n).map(|i| site_mask(n, i) as usize).collect(),
            gamma_rg: lp.gamma_rg,
            gamma_gg: lp.gamma_gg,
        }
    }

    /// Angular energies at detuning `delta`.
    fn energies(&self, delta: f64, out: &mut [f64]) {
        for x in 0..self.dim {
            out[x] = self.scale * (self.static_energy[x] - delta * self.excitations[x]);
        }
    }

    /// Writes `Z` with `L(rho) = Z + Z^+` for Hermitian `rho`.
    ///
    /// The entrywise part and the jump term are Hermitian and enter `Z` with
    /// weight 1/2; the drive commutator is `i w (X rho - rho X) = Y + Y^+`
    /// with `Y = i w X rho`.
    fn half_rhs(&self, omega: f64, energy: &[f64], rho: &[C64], z_out: &mut [C64], tmp: &mut [C64]) {
        let dim = self.dim;
        let w = 0.5 * self.scale * omega;
        let half_jump = 0.5 * self.gamma_rg;
        for a in 0..dim {
            let row = &rho[a * dim..(a + 1) * dim];
            let z = &mut z_out[a * dim..(a + 1) * dim];
            let (ea, ga) = (energy[a], self.half_decay[a]);
            let ground_a = !a & (dim - 1);
            for b in 0..dim {
                let both_ground = f64::from((ground_a & !b).count_ones());
                let re = self.gamma_gg * both_ground - ga - self.half_decay[b];
                z[b] = C64::new(0.5 * re, 0.5 * (energy[b] - ea)) * row[b];
            }
            if w != 0.0 {
                tmp.fill(C64::new(0.0, 0.0));
                for &m in &self.masks {
                    let other = &rho[(a ^ m) * dim..((a ^ m) + 1) * dim];
                    for (t, o) in tmp.iter_mut().zip(other) {
                        *t += *o;
                    }
                }
                for (o, t) in z.iter_mut().zip(tmp.iter()) {
                    // i w t
                    *o += C64::new(-w * t.im, w * t.re);
                }
            }
            if half_jump != 0.0 {
                for &m in &self.masks {
                    if a & m != 0 {
                        continue;
                    }
                    let src = &rho[(a | m) * dim..((a | m) + 1) * dim];
                    for base in (0..dim).step_by(2 * m) {
                        for t in base..base + m {
                            z[t] += src[t + m] * half_jump;
                        }
                    }
                }
            }
        }
    }
}

/// Visits each pair `a <= b` once, tile by tile, with the flat index of
/// `(a, b)`, that of `(b, a)` and the value of `Z + Z^+` at `(a, b)`.
#[inline]
fn for_each_upper(z: &[C64], dim: usize, mut f: impl FnMut(usize, usize, C64)) {
    const TILE: usize = 16;
    for ta in (0..dim).step_by(TILE) {
        for tb in (ta..dim).step_by(TILE) {
            for a in ta..(ta + TILE).min(dim) {
                let start = if ta == tb { a } else { tb };
                for b in start..(tb + TILE).min(dim) {
                    let (ab, ba) = (a * dim + b, b * dim + a);
                    f(ab, ba, z[ab] + z[ba].conj());
                }
            }
        }
    }
}

/// Stores `v` at `ab` and its conjugate at `ba`.
#[inline]
fn set_pair(m: &mut [C64], ab: usize, ba: usize, v: C64) {
    if ab == ba {
        m[ab] = C64::new(v.re, 0.0);
    } else {
        m[ab] = v;
        m[ba] = v.conj();
    }
}

fn check_sizes(hp: &HamiltonianParams, initial: &QuantumState, settings: &IntegratorSettings) -> Result<()> {
    hp.validate()?;
    if initial.n_sites() != hp.n_sites {
        return Err(Error::argument("initial state and Hamiltonian have different sizes"));
    }
    let cap = settings.max_sites.min(MAX_MIXED_SITES);
    if hp.n_sites > cap {
        return Err(Error::Resource {
            what: "sites for density-matrix evolution",
            limit: cap,
            requested: hp.n_sites,
        });
    }
    if settings.steps == 0 {
        return Err(Error::argument("integrator needs at least one step"));
    }
    Ok(())
}

/// Integrates one disorder realization with fixed-step RK4, returning raw
/// row-major density matrices at each checkpoint. Only upper triangles are
/// computed, so every iterate is Hermitian to the last bit.
fn evolve_raw(
    initial: &QuantumState,
    sweep: &SweepProfile,
    hp: &HamiltonianParams,
    lp: &LindbladParams,
    disorder: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<Vec<C64>>> {
    if disorder.len() != hp.n_sites {
        return Err(Error::argument(format!(
            "{} Doppler shifts for {} sites",
            disorder.len(),
            hp.n_sites
        )));
    }
    let liou = Liouvillian::new(hp, lp, disorder, settings.units);
    let dim = liou.dim;
    let rho0 = initial.density_matrix();
    let mut rho: Vec<C64> = (0..dim * dim).map(|k| rho0[(k / dim, k % dim)]).collect();
    let zero = C64::new(0.0, 0.0);
    let mut acc = vec![zero; dim * dim];
    let mut stage = acc.clone();
    let mut k = acc.clone();
    let mut tmp = vec![zero; dim];
    let mut energy = vec![0.0; dim];
    let dt_nominal = sweep.total_time / settings.steps as f64;

    let rhs = |t: f64, rho: &[C64], z: &mut [C64], energy: &mut [f64], tmp: &mut [C64]| {
        liou.energies(sweep.delta.eval(t), energy);
        liou.half_rhs(sweep.omega.eval(t), energy, rho, z, tmp);
    };

    let mut out = Vec::with_capacity(sweep.checkpoints.len());
    let mut t = 0.0;
    for &target in &sweep.checkpoints {
        let span = target - t;
        let n_sub = if span <= 0.0 { 0 } else { (span / dt_nominal - 1e-9).ceil().max(1.0) as usize };
        let h = if n_sub > 0 { span / n_sub as f64 } else { 0.0 };
        for _ in 0..n_sub {
            rhs(t, &rho, &mut k, &mut energy, &mut tmp);
            for_each_upper(&k, dim, |ab, ba, v| {
                let y = rho[ab];
                set_pair(&mut acc, ab, ba, y + v * (h / 6.0));
                set_pair(&mut stage, ab, ba, y + v * (h / 2.0));
            });
            rhs(t + h / 2.0, &stage, &mut k, &mut energy, &mut tmp);
            for_each_upper(&k, dim, |ab, ba, v| {
                let next = acc[ab] + v * (h / 3.0);
                set_pair(&mut acc, ab, ba, next);
                set_pair(&mut stage, ab, ba, rho[ab] + v * (h / 2.0));
            });
            rhs(t + h / 2.0, &stage, &mut k, &mut energy, &mut tmp);
            for_each_upper(&k, dim, |ab, ba, v| {
                let next = acc[ab] + v * (h / 3.0);
                set_pair(&mut acc, ab, ba, next);
                set_pair(&mut stage, ab, ba, rho[ab] + v * h);
            });
            rhs(t + h, &stage, &mut k, &mut energy, &mut tmp);
            for_each_upper(&k, dim, |ab, ba, v| {
                set_pair(&mut rho, ab, ba, acc[ab] + v * (h / 6.0));
            });
            t += h;
        }
        t = target;
        let trace: C64 = (0..dim).map(|x| rho[x * dim + x]).sum();
        let drift = (trace - C64::new(1.0, 0.0)).norm();
        if !(drift < settings.trace_tolerance) || rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Integration {
                time: t,
                quantity: "trace drift",
                value: drift,
                limit: settings.trace_tolerance,
                dt: dt_nominal,
            });
        }
        out.push(rho.clone());
    }
    Ok(out)
}

/// Checkpoint state from a raw matrix. RK4 is not positivity preserving, so
/// a negative eigenvalue below the state floor is an integration failure.
fn to_state(n: usize, raw: &[C64], time: f64, dt: f64) -> Result<QuantumState> {
    let dim = 1usize << n;
    let rho = DMatrix::from_row_slice(dim, dim, raw);
    let min_eig = hermitian_eigenvalues(&rho).into_iter().fold(f64::INFINITY, f64::min);
    if min_eig < EIGEN_FLOOR {
        return Err(Error::Integration {
            time,
            quantity: "negative eigenvalue",
            value: -min_eig,
            limit: -EIGEN_FLOOR,
            dt,
        });
    }
    QuantumState::mixed(n, rho)
}

fn is_coherent(lp: &LindbladParams) -> bool {
    lp.gamma_rg == 0.0 && lp.gamma_gg == 0.0
}

/// Row-major `psi psi^+`.
fn outer(psi: &QuantumState) -> Vec<C64> {
    let v = psi.amplitudes().expect("pure state");
    let dim = v.len();
    let mut m = vec![C64::new(0.0, 0.0); dim * dim];
    for a in 0..dim {
        for b in 0..dim {
            m[a * dim + b] = v[a] * v[b].conj();
        }
    }
    m
}

/// Raw checkpoint matrices for one realization. Without decay or dephasing
/// a pure initial state stays pure, and is evolved as a state vector.
fn evolve_realization(
    initial: &QuantumState,
    sweep: &SweepProfile,
    hp: &HamiltonianParams,
    lp: &LindbladParams,
    disorder: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<Vec<C64>>> {
    if is_coherent(lp) && initial.is_pure() {
        Ok(evolve_pure_disordered(initial, sweep, hp, disorder, settings)?
            .iter()
            .map(outer)
            .collect())
    } else {
        evolve_raw(initial, sweep, hp, lp, disorder, settings)
    }
}

/// States at every checkpoint of `sweep` for one disorder realization.
pub fn evolve_lindblad(
    initial: &QuantumState,
    sweep: &SweepProfile,
    hp: &HamiltonianParams,
    lp: &LindbladParams,
    disorder: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<QuantumState>> {
    check_sizes(hp, initial, settings)?;
    sweep.validate()?;
    lp.validate()?;
    let raw = evolve_realization(initial, sweep, hp, lp, disorder, settings)?;
    raw.iter()
        .zip(&sweep.checkpoints)
        .map(|(r, &t)| to_state(hp.n_sites, r, t, sweep.total_time / settings.steps as f64))
        .collect()
}

/// Disorder-averaged checkpoint states over `lp.n_disorder` realizations
/// drawn from `master_seed`. Realizations run in parallel; they are summed
/// in realization order.
pub fn evolve_disorder_averaged(
    initial: &QuantumState,
    sweep: &SweepProfile,
    hp: &HamiltonianParams,
    lp: &LindbladParams,
    master_seed: u64,
    settings: &IntegratorSettings,
) -> Result<Vec<QuantumState>> {
    check_sizes(hp, initial, settings)?;
    sweep.validate()?;
    lp.validate()?;
    let n = hp.n_sites;
    let dim = 1usize << n;
    let chunk = rayon::current_num_threads().max(1);
    let mut sum: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); dim * dim]; sweep.checkpoints.len()];
    let realizations: Vec<usize> = (0..lp.n_disorder).collect();
    for block in realizations.chunks(chunk) {
        let results: Vec<Result<Vec<Vec<C64>>>> = block
            .par_iter()
            .map(|&k| {
                let disorder = disorder_realization(lp, n, master_seed, k);
                evolve_realization(initial, sweep, hp, lp, &disorder, settings)
            })
            .collect();
        for r in results {
            for (acc, rho) in sum.iter_mut().zip(r?) {
                for (a, b) in acc.iter_mut().zip(rho) {
                    *a += b;
                }
            }
        }
        log::debug!("disorder realizations done: {}", block[block.len() - 1] + 1);
    }
    let inv = 1.0 / lp.n_disorder as f64;
    sum.iter()
        .zip(&sweep.checkpoints)
        .map(|(acc, &t)| {
            let avg: Vec<C64> = acc.iter().map(|z| z * inv).collect();
            to_state(n, &avg, t, sweep.total_time / settings.steps as f64)
        })
        .collect()
}

/// Schrodinger evolution of a pure state with the same RK4 scheme, on a
/// step refined by `settings.pure_refine`.
pub fn evolve_pure(
    initial: &QuantumState,
    sweep: &SweepProfile,
    hp: &HamiltonianParams,
    settings: &IntegratorSettings,
) -> Result<Vec<QuantumState>> {
    evolve_pure_disordered(initial, sweep, hp, &vec![0.0; hp.n_sites], settings)
}

/// [`evolve_pure`] with static Doppler shifts `disorder` (MHz).
pub fn evolve_pure_disordered(
    initial: &QuantumState,
    sweep: &SweepProfile,
    hp: &HamiltonianParams,
    disorder: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<QuantumState>> {
    hp.validate()?;
    sweep.validate()?;
    let v0 = initial
        .amplitudes()
        .ok_or_else(|| Error::argument("pure evolution needs a pure initial state"))?;
    if initial.n_sites() != hp.n_sites || disorder.len() != hp.n_sites {
        return Err(Error::argument("initial state, disorder and Hamiltonian sizes differ"));
    }
    let n = hp.n_sites;
    let dim = 1usize << n;
    let scale = settings.units.scale();
    let interaction = interaction_energies(n, hp.v_nn, hp.cutoff());
    let masks: Vec<usize> = (0..n).map(|i| site_mask(n, i) as usize).collect();
    let static_energy: Vec<f64> = (0..dim)
        .map(|x| {
            let dis: f64 = (0..n).filter(|&i| x & masks[i] != 0).map(|i| disorder[i]).sum();
            interaction[x] - dis
        })
        .collect();
    let rhs = |t: f64, psi: &[C64], out: &mut [C64]| {
        let delta = sweep.delta.eval(t);
        let w = -0.5 * sweep.omega.eval(t);
        for x in 0..dim {
            let e = static_energy[x] - delta * f64::from((x as u32).count_ones());
            let mut acc = psi[x] * e;
            for &m in &masks {
                acc += psi[x ^ m] * w;
            }
            // -i s H psi
            out[x] = C64::new(acc.im, -acc.re) * scale;
        }
    };
    let mut psi: Vec<C64> = v0.iter().copied().collect();
    let mut k = vec![C64::new(0.0, 0.0); dim];
    let mut stage = k.clone();
    let mut acc = k.clone();
    let dt_nominal = sweep.total_time / (settings.steps * settings.pure_refine.max(1)) as f64;
    let mut t = 0.0;
    let mut out = Vec::new();
    for &target in &sweep.checkpoints {
        let span = target - t;
        let n_sub = if span <= 0.0 { 0 } else { (span / dt_nominal - 1e-9).ceil().max(1.0) as usize };
        let dt = if n_sub > 0 { span / n_sub as f64 } else { 0.0 };
        for _ in 0..n_sub {
            rhs(t, &psi, &mut k);
            for i in 0..dim {
                acc[i] = psi[i] + k[i] * (dt / 6.0);
                stage[i] = psi[i] + k[i] * (dt / 2.0);
            }
            rhs(t + dt / 2.0, &stage, &mut k);
            for i in 0..dim {
                acc[i] += k[i] * (dt / 3.0);
                stage[i] = psi[i] + k[i] * (dt / 2.0);
            }
            rhs(t + dt / 2.0, &stage, &mut k);
            for i in 0..dim {
                acc[i] += k[i] * (dt / 3.0);
                stage[i] = psi[i] + k[i] * dt;
            }
            rhs(t + dt, &stage, &mut k);
            for i in 0..dim {
                psi[i] = acc[i] + k[i] * (dt / 6.0);
            }
            t += dt;
        }
        t = target;
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() < settings.trace_tolerance) {
            return Err(Error::Integration {
                time: t,
                quantity: "norm drift",
                value: (norm - 1.0).abs(),
                limit: settings.trace_tolerance,
                dt: dt_nominal,
            });
        }
        let v = nalgebra::DVector::from_vec(psi.clone());
        out.push(QuantumState::pure_normalized(n, v)?);
    }
    Ok(out)
}

/// Ground state at the start of the sweep: all atoms in `|g>`.
pub fn fiducial_state(n_sites: usize) -> Result<QuantumState> {
    QuantumState::basis(n_sites, 0)
}

/// Hamiltonian parameters at time `t` of a sweep.
pub fn params_at(hp: &HamiltonianParams, sweep: &SweepProfile, t: f64) -> HamiltonianParams {
    HamiltonianParams {
        omega: sweep.omega.eval(t),
        delta: sweep.delta.eval(t),
        ..hp.clone()
    }
}

#[doc(hidden)]
pub fn dense_hamiltonian_at(hp: &HamiltonianParams, sweep: &SweepProfile, t: f64) -> Result<DMatrix<f64>> {
    RydbergHamiltonian::new(&params_at(hp, sweep, t))?.to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::state::fidelity;
    use nalgebra::SymmetricEigen;

    fn max_abs(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `exp(-i s H t) rho exp(i s H t)` through the eigendecomposition of H.
    fn unitary_oracle(h: &DMatrix<f64>, rho: &DMatrix<C64>, angular_t: f64) -> DMatrix<C64> {
        let eig = SymmetricEigen::new(h.clone());
        let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * angular_t)));
        let u = &v * phases * v.adjoint();
        &u * rho * u.adjoint()
    }

    #[test]
    fn coherent_constant_drive_matches_matrix_exponential() {
        let hp = HamiltonianParams::new(3, 5.0, 1.3, 0.7);
        let t_end = 1.0;
        let sweep = SweepProfile::constant(t_end, hp.omega, hp.delta, vec![0.25, 1.0]);
        let settings = IntegratorSettings::default();
        let h = crate::quantum::build_hamiltonian(&hp).unwrap();
        // a mixed start goes through the density-matrix integrator, a pure one
        // through the state-vector path
        let mut rho0 = DMatrix::from_element(8, 8, C64::new(0.3 / 8.0, 0.0));
        rho0[(0, 0)] += 0.7;
        let mixed = QuantumState::mixed(3, rho0).unwrap();
        let pure = QuantumState::basis(3, 0).unwrap();
        for init in [mixed, pure.clone()] {
            let out = evolve_lindblad(&init, &sweep, &hp, &LindbladParams::coherent(), &[0.0; 3], &settings).unwrap();
            for (state, &t) in out.iter().zip(&sweep.checkpoints) {
                let oracle = unitary_oracle(&h, &init.density_matrix(), std::f64::consts::TAU * t);
                let err = max_abs(&state.density_matrix(), &oracle);
                assert!(err < 1e-6, "t={t}: {err}");
            }
        }
        let vec_states = evolve_pure(&pure, &sweep, &hp, &settings).unwrap();
        let oracle = unitary_oracle(&h, &pure.density_matrix(), std::f64::consts::TAU);
        let psi = QuantumState::mixed(3, oracle).unwrap();
        assert!((fidelity(&vec_states[1], &psi).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_atom_decay_is_exponential() {
        // N = 2 with the second atom idle; site 0 starts in |r>.
        let hp = HamiltonianParams::new(2, 1.0, 0.0, 0.0);
        let lp = LindbladParams {
            gamma_rg: 0.7,
            gamma_gg: 0.0,
            doppler_rms: 0.0,
            n_disorder: 1,
        };
        let times = vec![0.5, 1.0, 2.0];
        let sweep = SweepProfile::constant(2.0, 0.0, 0.0, times.clone());
        let init = QuantumState::basis(2, 0b10).unwrap();
        let out = evolve_lindblad(&init, &sweep, &hp, &lp, &[0.0; 2], &IntegratorSettings::default()).unwrap();
        for (s, &t) in out.iter().zip(&times) {
            let p = s.probabilities();
            let pop_r = p[0b10] + p[0b11];
            assert!((pop_r - (-lp.gamma_rg * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn dephasing_kills_coherence() {
        // |+> on one atom (N=2, second idle in |g>): coherence decays as exp(-gamma_gg t / 2)
        let hp = HamiltonianParams::new(2, 1.0, 0.0, 0.0);
        let lp = LindbladParams {
            gamma_rg: 0.0,
            gamma_gg: 0.4,
            doppler_rms: 0.0,
            n_disorder: 1,
        };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let init = QuantumState::pure_real(2, &[h, 0.0, h, 0.0]).unwrap();
        let sweep = SweepProfile::constant(1.0, 0.0, 0.0, vec![1.0]);
        let out = evolve_lindblad(&init, &sweep, &hp, &lp, &[0.0; 2], &IntegratorSettings::default()).unwrap();
        let rho = out[0].density_matrix();
        // the second atom sits in |g> and also dephases, but its coherences are zero
        assert!((rho[(0, 2)].norm() - 0.5 * (-0.5 * lp.gamma_gg).exp()).abs() < 1e-6);
    }

    #[test]
    fn trace_and_hermiticity_preserved_under_full_model() {
        let hp = HamiltonianParams::new(4, 30.0, 2.0, 0.0);
        let sweep = SweepProfile::trapezoid(1.0, 2.0, -5.0, 5.0, 4);
        let lp = LindbladParams::experimental().scaled(10.0);
        let disorder = disorder_realization(&lp, 4, 9, 0);
        let out = evolve_lindblad(&QuantumState::basis(4, 0).unwrap(), &sweep, &hp, &lp, &disorder, &IntegratorSettings::default()).unwrap();
        for s in &out {
            let m = s.density_matrix();
            assert!((m.trace().re - 1.0).abs() < 1e-6);
            assert!(max_abs(&m, &m.adjoint()) < 1e-9);
            assert!(s.purity() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn oversized_step_is_reported() {
        // a step far beyond the RK4 stability limit blows the trace up
        let hp = HamiltonianParams::new(3, 30.0, 2.0, 0.0);
        let lp = LindbladParams {
            gamma_rg: 50.0,
            gamma_gg: 50.0,
            doppler_rms: 0.0,
            n_disorder: 1,
        };
        let sweep = SweepProfile::constant(3.0, 2.0, 0.0, vec![3.0]);
        let settings = IntegratorSettings {
            steps: 4,
            ..IntegratorSettings::default()
        };
        let err = evolve_lindblad(&QuantumState::basis(3, 0).unwrap(), &sweep, &hp, &lp, &[0.0; 3], &settings);
        assert!(matches!(err, Err(Error::Integration { .. })), "{err:?}");
    }

    #[test]
    fn disorder_is_reproducible() {
        let lp = LindbladParams::experimental();
        let a = disorder_realization(&lp, 8, 5, 3);
        let b = disorder_realization(&lp, 8, 5, 3);
        let c = disorder_realization(&lp, 8, 5, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn size_cap() {
        let hp = HamiltonianParams::new(9, 30.0, 2.0, 0.0);
        let sweep = SweepProfile::default();
        let err = evolve_lindblad(&QuantumState::basis(9, 0).unwrap(), &sweep, &hp, &LindbladParams::coherent(), &[0.0; 9], &IntegratorSettings::default());
        assert!(matches!(err, Err(Error::Resource { .. })));
    }
}
