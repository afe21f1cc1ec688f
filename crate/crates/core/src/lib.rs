//! Spatial-entanglement quantification with a time-stamping photon camera.
//!
//! The crate covers the whole measurement chain on synthetic or recorded
//! data:
//!
//! * [`sim`]: double-Gaussian photon-pair source and a parametric camera
//!   model producing a time-sorted pixel-hit stream plus ground truth.
//! * [`phl1`]: binary and CSV codecs for hit lists.
//! * [`pipeline`]: clustering, centroiding, timewalk correction and
//!   coincidence pairing.
//! * [`jpd`]: sparse joint histogram of coincidences and its projections.
//! * [`analysis`]: Gaussian fits, minimum inferred uncertainties, EPR-Reid
//!   products, entanglement-of-formation and dimension bounds with
//!   Monte-Carlo errors.

pub mod analysis;
pub mod event;
pub mod jpd;
pub mod phl1;
pub mod pipeline;
pub mod seed;
pub mod sim;

pub use analysis::{certify, AnalysisError, AnalysisParams, CertificationReport, Quantity};
pub use event::{Basis, CoincidencePair, Half, InvalidHit, OpticsConfig, PhotonEvent, PixelHit, SENSOR_PIXELS};
pub use jpd::{Axis, Jpd, JpdError, Projection, ProjectionKind};
pub use phl1::{decode_hits, encode_hits, CodecError};
pub use pipeline::{ClusterParams, PairingParams, PipelineConfig, PipelineError, TimewalkMode};
pub use sim::{DetectorParams, SensorLayout, SimError, SourceParams};
