//! Delay-robust distributed control of networks whose coupling pattern
//! switches between two commuting matrices.
//!
//! The pipeline: split the network into modal LPV subsystems
//! ([`decomposition`]), verify or search parameter-dependent Lyapunov
//! certificates ([`certificates`]), turn them into a small-gain delay bound
//! ([`delay_bound`]) and check it numerically ([`simulator`]).

pub mod analysis;
pub mod certificates;
pub mod decomposition;
pub mod delay_bound;
pub mod family;
pub mod matrix;
pub mod reference;
pub mod simulator;

pub use certificates::{
    fading_constants, min_eta, search_certificate, verify_certificate, CertificateError, CertificateReport, DwellSpec,
    FadingMemoryConstants, LmiCertificate, SearchOptions,
};
pub use decomposition::{
    decompose, to_lpv, DecomposableMatrixSpec, DecomposablePlant, DecompositionError, GainSchedule, LpvPlant,
    ModalFamily, PatternConvention, PatternPair,
};
pub use delay_bound::{
    check_fanout, delay_margin, sup_norm, tau_bound, DelayBound, DelayBoundError, DelayMargin, FanOutReport,
    FanOutWitness, SmallGainConstants,
};
pub use family::PolyFamily;
pub use matrix::{Matrix, MatrixError};
pub use simulator::{
    consensus_gap, gen_switching, simulate_lpv_closed_loop, simulate_network, DelayProfile, InitialCondition, RhoPath,
    SimulationError, StepSettings, SwitchingSignal, TrajectoryRecord,
};
