//! Wearable posture monitoring from an AHRS quaternion stream and a flex sensor.
//!
//! The pipeline turns each sample's attitude into a sensor normal, measures
//! its angle from a calibrated upright reference, and runs a debounced state
//! machine that separates slouching (spine curved, flex sensor bent) from
//! bending at the hips (spine straight). Around it sit a synthetic trace
//! generator, CSV and framed-binary I/O, PCA attribute ranking, and an
//! event-matching evaluator.

pub mod calibration;
pub mod detection;
pub mod evaluation;
pub mod features;
pub mod orientation;
pub mod repro;
pub mod sensor_models;
pub mod traceio;

pub use calibration::{calibrate, CalibrationProfile};
pub use detection::{run, step, Detector, DetectorConfig, DetectorState, EventKind, PostureEvent};
pub use evaluation::{match_events, sensitivity, ConfusionStats, TruthInterval};
pub use orientation::{quat_to_dcm, quat_to_euler, sensor_normal, thoracic_angle, Dcm, EulerAngles, Quaternion, Vec3};
pub use sensor_models::{generate_trace, ImuSample, MotionScript, Posture, Segment, TraceParams};
