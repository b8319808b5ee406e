//! Textual backend selection: `oracle`, `oracle-degraded:SNR`, `files:DIR`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use super::{Backends, FileBackend, OracleClassifier, OracleExtractor, OracleSeparator, OracleTruth};
use crate::error::{Error, Result};
use crate::manifest::LoadedScene;

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Oracle,
    /// Oracle separator and extractor outputs with white noise at this SNR (dB).
    OracleDegraded(f64),
    /// Stored outputs under this directory.
    Files(PathBuf),
}

impl BackendSpec {
    /// Backends for one scene. `seed` only affects degraded oracles.
    pub fn build(&self, scene: &LoadedScene, num_classes: usize, seed: u64) -> Result<Backends> {
        match self {
            BackendSpec::Oracle | BackendSpec::OracleDegraded(_) => {
                let truth = Arc::new(OracleTruth::new(scene, num_classes)?);
                let classifier = Arc::new(OracleClassifier::new(truth.clone()));
                Ok(match self {
                    BackendSpec::OracleDegraded(snr) => Backends {
                        separator: Arc::new(OracleSeparator::degraded(truth.clone(), *snr, seed)?),
                        classifier,
                        extractor: Arc::new(OracleExtractor::degraded(truth, *snr, seed)?),
                    },
                    _ => Backends {
                        separator: Arc::new(OracleSeparator::new(truth.clone())),
                        classifier,
                        extractor: Arc::new(OracleExtractor::new(truth)),
                    },
                })
            }
            BackendSpec::Files(dir) => {
                let fb = Arc::new(FileBackend::open(dir, scene.scene_id(), scene.manifest.sample_rate)?);
                Ok(Backends {
                    separator: fb.clone(),
                    classifier: fb.clone(),
                    extractor: fb,
                })
            }
        }
    }
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(BackendSpec::Oracle);
        }
        if let Some(snr) = s.strip_prefix("oracle-degraded:") {
            let v: f64 = snr
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad degradation SNR {snr:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite("degradation SNR".into()));
            }
            return Ok(BackendSpec::OracleDegraded(v));
        }
        if let Some(dir) = s.strip_prefix("files:") {
            if dir.is_empty() {
                return Err(Error::InvalidArgument("files: backend needs a directory".into()));
            }
            return Ok(BackendSpec::Files(PathBuf::from(dir)));
        }
        Err(Error::InvalidArgument(format!(
            "unknown backend {s:?} (expected oracle, oracle-degraded:SNR or files:DIR)"
        )))
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::OracleDegraded(snr) => write!(f, "oracle-degraded:{snr}"),
            BackendSpec::Files(dir) => write!(f, "files:{}", dir.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in ["oracle", "oracle-degraded:10", "oracle-degraded:-2.5", "files:out/dump"] {
            assert_eq!(s.parse::<BackendSpec>().unwrap().to_string(), s);
        }
        assert!("oracle-degraded:x".parse::<BackendSpec>().is_err());
        assert!("oracle-degraded:inf".parse::<BackendSpec>().is_err());
        assert!("files:".parse::<BackendSpec>().is_err());
        assert!("neural".parse::<BackendSpec>().is_err());
    }
}
