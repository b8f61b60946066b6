//! Biphoton states, two-photon interference, and detection statistics.

mod detection;
mod hom;
mod oracle;
mod state;

pub use detection::{poisson_draw, rng_for, sample_counts, DetectorModel, DEFAULT_SEED};
pub use hom::{
    dip_center, exchange_overlap, fbs_transform, fbs_transform_with, gaussian_dip, hom_coincidence_probability,
    hom_scan, two_photon_coincidence, CircuitStage, IndistinguishabilityParams, SpectralCircuit, SplitterConvention,
    TwoPhotonSetup,
};
pub use oracle::{oracle_two_photon, Mode, OracleOutcome, OracleResult, MAX_BINS, MAX_PORTS};
pub use state::{
    apply_device_to_signal, apply_signal_filter, sampled_fwhm, spdc_state, BiphotonState, SignalPath, SpectralGrid,
    SPEED_OF_LIGHT_NM_THZ,
};
