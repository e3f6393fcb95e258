//! The Rydberg chain Hamiltonian
//!
//! ```text
//! H = -Delta sum_i n_i - (Omega/2) sum_i X_i + sum_{i<j, |i-j| <= cutoff} V_nn / |i-j|^6 n_i n_j
//! ```
//!
//! in the occupation basis. Matrix elements are expressed in MHz; the time
//! evolution code multiplies by the factor of [`FrequencyUnits`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bits::site_mask;
use crate::error::{Error, Result};

/// Largest chain accepted for pure-state work (ground states, sampling).
pub const MAX_PURE_SITES: usize = 16;

/// Memory budget for a dense real `2^N x 2^N` matrix.
pub const DENSE_MATRIX_BUDGET_BYTES: usize = 1 << 31;

/// How frequencies quoted in MHz enter the equations of motion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyUnits {
    /// `f` MHz means an angular frequency `2 pi f` rad/us.
    #[default]
    Angular,
    /// `f` MHz is used directly as rad/us.
    Cycles,
}

impl FrequencyUnits {
    pub fn scale(self) -> f64 {
        match self {
            FrequencyUnits::Angular => std::f64::consts::TAU,
            FrequencyUnits::Cycles => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianParams {
    pub n_sites: usize,
    /// Nearest-neighbour interaction, MHz.
    pub v_nn: f64,
    /// Rabi frequency, MHz.
    pub omega: f64,
    /// Detuning, MHz.
    pub delta: f64,
    /// Largest `|i-j|` with a nonzero interaction. `None` means `N-1`.
    #[serde(default)]
    pub interaction_cutoff: Option<usize>,
}

impl HamiltonianParams {
    pub fn new(n_sites: usize, v_nn: f64, omega: f64, delta: f64) -> Self {
        HamiltonianParams {
            n_sites,
            v_nn,
            omega,
            delta,
            interaction_cutoff: None,
        }
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.interaction_cutoff = Some(cutoff);
        self
    }

    pub fn cutoff(&self) -> usize {
        self.interaction_cutoff
            .unwrap_or(self.n_sites.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::argument(format!(
                "n_sites must be at least 2, got {}",
                self.n_sites
            )));
        }
        if !(self.v_nn > 0.0) || !self.v_nn.is_finite() {
            return Err(Error::argument(format!("v_nn must be positive, got {}", self.v_nn)));
        }
        if !self.omega.is_finite() || !self.delta.is_finite() {
            return Err(Error::argument("omega and delta must be finite"));
        }
        if self.cutoff() < 1 {
            return Err(Error::argument("interaction_cutoff must be at least 1"));
        }
        if self.n_sites > MAX_PURE_SITES {
            return Err(Error::Resource {
                what: "chain length for exact states",
                limit: MAX_PURE_SITES,
                requested: self.n_sites,
            });
        }
        Ok(())
    }
}

/// Interaction energy `sum_{i<j} V/|i-j|^6 n_i n_j` of every configuration, MHz.
pub fn interaction_energies(n: usize, v_nn: f64, cutoff: usize) -> Vec<f64> {
    let couplings: Vec<f64> = (0..n)
        .map(|d| if d == 0 || d > cutoff { 0.0 } else { v_nn / (d as f64).powi(6) })
        .collect();
    (0..1u64 << n)
        .map(|x| {
            let mut e = 0.0;
            for i in 0..n {
                if x & site_mask(n, i) == 0 {
                    continue;
                }
                for j in i + 1..n {
                    if x & site_mask(n, j) != 0 {
                        e += couplings[j - i];
                    }
                }
            }
            e
        })
        .collect()
}

/// Number of Rydberg excitations of every configuration.
pub fn excitation_counts(n: usize) -> Vec<u32> {
    (0..1u64 << n).map(|x| x.count_ones()).collect()
}

/// Structured form of the Hamiltonian: a diagonal plus a uniform transverse
/// field. Supports matrix-free products for chains too long for a dense
/// matrix.
#[derive(Clone, Debug)]
pub struct RydbergHamiltonian {
    n_sites: usize,
    omega: f64,
    diagonal: Vec<f64>,
}

impl RydbergHamiltonian {
    pub fn new(params: &HamiltonianParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_sites;
        let interaction = interaction_energies(n, params.v_nn, params.cutoff());
        let diagonal = interaction
            .iter()
            .enumerate()
            .map(|(x, e)| e - params.delta * f64::from((x as u64).count_ones()))
            .collect();
        Ok(RydbergHamiltonian {
            n_sites: n,
            omega: params.omega,
            diagonal,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// `out = H v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n_sites;
        let half = -0.5 * self.omega;
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = self.diagonal[x] * v[x];
            for i in 0..n {
                acc += half * v[x ^ site_mask(n, i) as usize];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        let bytes = dim.saturating_mul(dim).saturating_mul(8);
        if bytes > DENSE_MATRIX_BUDGET_BYTES {
            return Err(Error::Resource {
                what: "dense Hamiltonian bytes",
                limit: DENSE_MATRIX_BUDGET_BYTES,
                requested: bytes,
            });
        }
        let n = self.n_sites;
        let mut h = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        let half = -0.5 * self.omega;
        for x in 0..dim {
            for i in 0..n {
                h[(x, x ^ site_mask(n, i) as usize)] = half;
            }
        }
        Ok(h)
    }
}

/// Dense matrix of the Hamiltonian in the occupation basis (bit 1 is `|r>`).
pub fn build_hamiltonian(params: &HamiltonianParams) -> Result<DMatrix<f64>> {
    RydbergHamiltonian::new(params)?.to_dense()
}
