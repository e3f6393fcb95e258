//! Perturbative description of the eight-atom ordered state.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::bits::BitString;
use crate::error::{Error, Result};

use super::state::QuantumState;

/// The three degenerate four-excitation configurations.
pub const Z2_CONFIGS: [&str; 3] = ["10100101", "10010101", "10101001"];

pub fn z2_basis() -> [BitString; 3] {
    Z2_CONFIGS.map(|s| s.parse().expect("static bit-string"))
}

/// `|e1>/sqrt(2) + (|e2> + |e3>)/2` on 8 sites.
pub fn approx_z2_state() -> QuantumState {
    let [e1, e2, e3] = z2_basis();
    let mut amps = vec![0.0; 256];
    amps[e1.index() as usize] = std::f64::consts::FRAC_1_SQRT_2;
    amps[e2.index() as usize] = 0.5;
    amps[e3.index() as usize] = 0.5;
    QuantumState::pure_real(8, &amps).expect("normalized by construction")
}

/// Second-order effective Hamiltonian on span{e1, e2, e3}.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockadeHamiltonian {
    pub matrix: Matrix3<f64>,
    /// All three levels coincide (no transverse field).
    pub degenerate: bool,
}

impl BlockadeHamiltonian {
    /// Lowest eigenvector, sign fixed so its largest component is positive.
    pub fn ground_state(&self) -> Vector3<f64> {
        let eig = SymmetricEigen::new(self.matrix);
        let k = eig.eigenvalues.imin();
        let mut v: Vector3<f64> = eig.eigenvectors.column(k).into();
        if v[v.iamax()] < 0.0 {
            v = -v;
        }
        v
    }
}

pub fn effective_blockade_hamiltonian(omega: f64, delta: f64) -> Result<BlockadeHamiltonian> {
    if delta == 0.0 {
        return Err(Error::Singular(
            "effective coupling -omega^2/(4 delta) diverges at delta = 0".into(),
        ));
    }
    let g = -omega * omega / (4.0 * delta);
    let matrix = Matrix3::new(0.0, g, g, g, 0.0, 0.0, g, 0.0, 0.0);
    let degenerate = g == 0.0;
    if degenerate {
        log::warn!("blockade Hamiltonian is triply degenerate (omega = 0)");
    }
    Ok(BlockadeHamiltonian { matrix, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitudes_of_z2_state() {
        let psi = approx_z2_state();
        let p = psi.probabilities();
        let [e1, e2, e3] = z2_basis();
        assert!((p[e1.index() as usize] - 0.5).abs() < 1e-15);
        assert!((p[e2.index() as usize] - 0.25).abs() < 1e-15);
        assert!((p[e3.index() as usize] - 0.25).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_value() {
        let h = effective_blockade_hamiltonian(2.0, 10.0).unwrap();
        assert!((h.matrix[(0, 1)] + 0.1).abs() < 1e-15);
        assert!((h.matrix[(0, 2)] + 0.1).abs() < 1e-15);
        assert_eq!(h.matrix[(1, 2)], 0.0);
        assert_eq!(h.matrix, h.matrix.transpose());
        assert!(!h.degenerate);
    }

    #[test]
    fn ground_vector_is_z2_superposition() {
        for (omega, delta) in [(2.0, 10.0), (0.3, 1.0), (5.0, 40.0)] {
            let v = effective_blockade_hamiltonian(omega, delta).unwrap().ground_state();
            let expect = Vector3::new(std::f64::consts::FRAC_1_SQRT_2, 0.5, 0.5);
            assert!((v - expect).amax() < 1e-12, "{v}");
        }
    }

    #[test]
    fn degenerate_and_singular_cases() {
        let h = effective_blockade_hamiltonian(0.0, 10.0).unwrap();
        assert!(h.degenerate);
        assert_eq!(h.matrix, Matrix3::zeros());
        assert!(matches!(
            effective_blockade_hamiltonian(2.0, 0.0),
            Err(Error::Singular(_))
        ));
    }
}
