//! JSON run configuration.
//!
//! Every section is optional. `hyper` and `track` hold partial overrides whose
//! keys are the field names of the model hyperparameters and the tracking
//! configuration; anything else is rejected.
//!
//! ```json
//! {
//!   "clusters": 2,
//!   "particles": 40,
//!   "hyper": {"translation_var": 0.25, "outlier_prob": 0.1},
//!   "track_preset": "standard",
//!   "track": {"init_sweeps": 30, "enable_outliers": true},
//!   "fit": {"sweeps": 50},
//!   "proposal_factor": 3.0
//! }
//! ```

use std::path::Path;

use rigidmix_core::gibbs::{ScheduleFlags, SweepSchedule};
use rigidmix_core::model::{Dim, HyperParams};
use rigidmix_core::tracker::TrackConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dto::{HyperDto, ScheduleDto, TrackDto};
use crate::error::{io_error, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackPreset {
    /// Anchoring plus one bottom-up refinement pass per frame.
    #[default]
    Standard,
    Gestalt,
    Rgb,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub sweeps: Option<usize>,
    pub schedule: Option<ScheduleDto>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub clusters: Option<usize>,
    pub particles: Option<usize>,
    pub hyper: Option<Map<String, Value>>,
    pub track_preset: Option<TrackPreset>,
    pub track: Option<Map<String, Value>>,
    pub fit: Option<FitSection>,
    /// Seed first-frame clusters from the coarse motion proposal with this factor.
    pub proposal_factor: Option<f64>,
    pub sva_iterations: Option<usize>,
    pub probes: Option<usize>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub clusters: usize,
    pub particles: usize,
    pub hyper: HyperParams,
    pub track: TrackConfig,
    pub fit_sweeps: usize,
    pub fit_schedule: SweepSchedule,
    pub proposal_factor: Option<f64>,
    pub sva_iterations: usize,
    pub probes: usize,
}

pub const DEFAULT_CLUSTERS: usize = 2;
pub const DEFAULT_PARTICLES: usize = 20;
pub const DEFAULT_FIT_SWEEPS: usize = 50;
pub const DEFAULT_SVA_ITERATIONS: usize = 100;

fn overlay<T: Serialize + DeserializeOwned>(base: &T, overrides: Option<&Map<String, Value>>, section: &str) -> Result<T> {
    let Some(overrides) = overrides else {
        return serde_json::from_value(serde_json::to_value(base)?).map_err(Error::from);
    };
    let mut value = serde_json::to_value(base)?;
    let fields = value.as_object_mut().expect("struct serializes to an object");
    for (k, v) in overrides {
        if !fields.contains_key(k) {
            return Err(Error::Config(format!("unknown key `{section}.{k}`")));
        }
        fields.insert(k.clone(), v.clone());
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("{section}: {e}")))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text)
    }

    pub fn resolve(&self, dim: Dim) -> Result<Settings> {
        let clusters = self.clusters.unwrap_or(DEFAULT_CLUSTERS);
        let particles = self.particles.unwrap_or(DEFAULT_PARTICLES);
        let base = HyperParams::defaults(dim, clusters, particles);
        let hyper = overlay(&HyperDto::from(&base), self.hyper.as_ref(), "hyper")?.to_core()?;
        if hyper.dim()? != dim {
            return Err(Error::Config(format!("hyper.cluster_mean_prior must have length {}", dim.value())));
        }
        hyper.validate(clusters, particles)?;
        let preset = match self.track_preset.unwrap_or_default() {
            TrackPreset::Standard => TrackConfig::standard(30, 1),
            TrackPreset::Gestalt => TrackConfig::gestalt(),
            TrackPreset::Rgb => TrackConfig::rgb(),
        };
        let track = overlay(&TrackDto::from(&preset), self.track.as_ref(), "track")?.to_core()?;
        let fit = self.fit.clone().unwrap_or_default();
        let fit_schedule = match &fit.schedule {
            Some(s) => s.to_core()?,
            None => SweepSchedule::full(ScheduleFlags::default()),
        };
        if let Some(f) = self.proposal_factor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config("proposal_factor must be positive".into()));
            }
        }
        Ok(Settings {
            clusters,
            particles,
            hyper,
            track,
            fit_sweeps: fit.sweeps.unwrap_or(DEFAULT_FIT_SWEEPS),
            fit_schedule,
            proposal_factor: self.proposal_factor,
            sva_iterations: self.sva_iterations.unwrap_or(DEFAULT_SVA_ITERATIONS),
            probes: self.probes.unwrap_or(rigidmix_core::eval::DEFAULT_PROBES),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let s = ConfigFile::parse("{}").unwrap().resolve(Dim::Two).unwrap();
        assert_eq!(s.hyper, HyperParams::defaults(Dim::Two, DEFAULT_CLUSTERS, DEFAULT_PARTICLES));
        assert_eq!(s.track, TrackConfig::standard(30, 1));
        assert_eq!(s.fit_sweeps, DEFAULT_FIT_SWEEPS);
    }

    #[test]
    fn overrides_apply() {
        let c = ConfigFile::parse(
            r#"{"clusters": 3, "particles": 9, "hyper": {"translation_var": 0.5, "particle_cov_scale": [[0.1, 0], [0, 0.2]]},
                "track_preset": "rgb", "track": {"subsample_rate": 0.125}, "fit": {"sweeps": 7, "schedule": {"steps": ["point_assignment"]}}}"#,
        )
        .unwrap();
        let s = c.resolve(Dim::Two).unwrap();
        assert_eq!(s.hyper.cluster_concentration.len(), 3);
        assert_eq!(s.hyper.translation_var, 0.5);
        assert_eq!(s.hyper.particle_cov_scale[(1, 1)], 0.2);
        assert_eq!(s.track.subsample_rate, 0.125);
        assert!(s.track.enable_features);
        assert_eq!(s.fit_sweeps, 7);
        assert_eq!(s.fit_schedule.steps.len(), 1);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        assert!(ConfigFile::parse(r#"{"clusterz": 2}"#).is_err());
        let c = ConfigFile::parse(r#"{"hyper": {"translation_variance": 1.0}}"#).unwrap();
        assert!(matches!(c.resolve(Dim::Two), Err(Error::Config(m)) if m.contains("hyper.translation_variance")));
        let c = ConfigFile::parse(r#"{"track": {"per_frame_schedule": {"steps": [], "flagz": {}}}}"#).unwrap();
        assert!(c.resolve(Dim::Two).is_err());
        assert!(ConfigFile::parse(r#"{"track_preset": "fast"}"#).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let c = ConfigFile::parse(r#"{"hyper": {"outlier_prob": 1.5}}"#).unwrap();
        assert!(c.resolve(Dim::Two).is_err());
        let c = ConfigFile::parse(r#"{"track": {"subsample_rate": 0}}"#).unwrap();
        assert!(c.resolve(Dim::Two).is_err());
        let c = ConfigFile::parse(r#"{"hyper": {"cluster_mean_prior": [0, 0, 0]}}"#).unwrap();
        assert!(c.resolve(Dim::Two).is_err());
    }
}
