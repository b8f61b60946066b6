//! Scripted experiments and the timestamp-to-result analysis chain.

mod analysis;
mod runs;
mod timestamps;

pub use analysis::{dip_model, fit_dip, ratio_db, visibility, CurvePoint, DipFit, DipParams, DipShape, Estimate};
pub use runs::{
    default_trajectory, delay_grid, excess_factor, expected_net, isolation_from_counts, mode_overlap_for_visibility,
    model_isolation_db, run_hom, run_magnet_sweep, signal_transmission, transmitted_state, Case, IsolationEstimate,
    MagnetConfig, PhotonPairSource, PointDetail, RunReport, ScenarioConfig, ScenarioSummary, Segment,
};
pub use timestamps::{
    count_coincidences, count_coincidences_from_reader, count_coincidences_with, parse_event_line, parse_stream,
    simulate_stream, Channel, CoincidenceCounter, CoincidenceRecord, Event, StreamParams, TimestampStream,
    DEFAULT_ACCIDENTAL_OFFSET_PS,
};
