//! Dual-functional transceiver design for a RIS-aided integrated sensing and
//! communication system: radar receive beamforming, detection-constrained
//! precoder optimization, ADMM-based and Riemannian-gradient RIS phase-shift
//! design, and an experiment harness covering single-user/single-target and
//! multi-user/multi-target scenarios.

pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod precoder;
pub mod radar;
pub mod ris;
pub mod scenario;
