//! Rydberg chain physics: Hamiltonian, states, ground states and
//! open-system sweeps.

pub mod eigen;
pub mod hamiltonian;
pub mod lindblad;
pub mod state;
pub mod sweep;
pub mod z2;

pub use eigen::{ground_state, lanczos_ground_state, rydberg_ground_state, GroundState};
pub use hamiltonian::{build_hamiltonian, FrequencyUnits, HamiltonianParams, RydbergHamiltonian};
pub use lindblad::{evolve_disorder_averaged, evolve_lindblad, evolve_pure, IntegratorSettings, LindbladParams};
pub use state::{
    fidelity, mutual_information_exact, partial_trace, positive_pure_partner, renyi_entropy, sample_distribution,
    sample_measurements, subsystem_avg_fidelity, subsystem_avg_renyi2, QuantumState, StateData,
};
pub use sweep::{PiecewiseLinear, SweepProfile};
