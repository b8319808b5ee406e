//! Self-guided sound scene segmentation toolkit.
//!
//! The crate covers the full non-neural skeleton of a separate → classify →
//! extract → (iterate) system for target sound events:
//!
//! - [`audio`]: waveform containers, gain/power arithmetic, clamped SDR, WAV I/O
//! - [`mixer`]: seeded scene synthesis at controlled SNRs
//! - [`losses`]: training objectives with analytic gradients
//! - [`gate`]: single-label decisions with energy-based silence override
//! - [`pipeline`]: the multi-stage orchestrator and its pluggable backends
//! - [`metrics`]: class-aware SDRi and label accuracies
//!
//! Neural models plug in through the backend traits in [`pipeline`].

pub mod audio;
pub mod error;
pub mod gate;
pub mod io;
pub mod losses;
pub mod manifest;
pub mod metrics;
pub mod mixer;
pub mod pipeline;
pub mod seed;
pub mod vocab;

pub use audio::{apply_gain, mixdown, power, sdr, AudioBuffer};
pub use error::{Error, Result};
pub use gate::{decide, ClassDecision, ThresholdTable};
pub use losses::LogitVector;
pub use manifest::{LoadedScene, SceneManifest, StemRole};
pub use metrics::{aggregate_report, ca_sdri, EvalReport, SceneRow};
pub use mixer::{synthesize_scene, SceneSpec, SourceBank};
pub use pipeline::{run_pipeline, Backends, PipelineConfig, PipelineMode, PipelineResult};
pub use vocab::{ClassId, ClassVocabulary, Label, LabelSet};
