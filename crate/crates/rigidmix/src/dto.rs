//! Serializable mirrors of the core types. Field names match the core structs;
//! matrices are written as row-major nested arrays.

use rigidmix_core::gibbs::{ScheduleFlags, ScheduledStep, Step, SweepSchedule};
use rigidmix_core::linalg::{Matrix, Vector};
use rigidmix_core::model::{Assignments, ClusterState, Dim, HyperParams, ModelState, ParticleState};
use rigidmix_core::rng::RngCursor;
use rigidmix_core::synth::{BodySpec, SceneSpec, Shape};
use rigidmix_core::tracker::TrackConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn matrix(rows: &Rows, d: usize, what: &str) -> Result<Matrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dump(format!("{what} must be a {d}x{d} matrix")));
    }
    Ok(Matrix::from_fn(d, d, |i, j| rows[i][j]))
}

pub fn vector(v: &[f64], d: usize, what: &str) -> Result<Vector> {
    if v.len() != d {
        return Err(Error::Dump(format!("{what} must have length {d}, found {}", v.len())));
    }
    Ok(Vector::from_column_slice(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperDto {
    pub cluster_concentration: Vec<f64>,
    pub particle_concentration: Vec<f64>,
    pub cluster_mean_prior: Vec<f64>,
    pub cluster_mean_prior_var: f64,
    pub cluster_cov_scale: Rows,
    pub cluster_cov_dof: f64,
    pub particle_cov_scale: Rows,
    pub particle_cov_dof: f64,
    pub velocity_var: f64,
    pub velocity_cov_scale: Rows,
    pub velocity_cov_dof: f64,
    pub translation_var: f64,
    pub rotation_concentration: f64,
    pub max_rotation_angle: f64,
    pub feature_var: Option<f64>,
    pub outlier_prob: f64,
    pub outlier_shape: f64,
    pub outlier_rate: f64,
    pub rotation_candidates: usize,
    pub translations_per_axis: usize,
}

impl From<&HyperParams> for HyperDto {
    fn from(h: &HyperParams) -> Self {
        Self {
            cluster_concentration: h.cluster_concentration.clone(),
            particle_concentration: h.particle_concentration.clone(),
            cluster_mean_prior: h.cluster_mean_prior.iter().copied().collect(),
            cluster_mean_prior_var: h.cluster_mean_prior_var,
            cluster_cov_scale: rows(&h.cluster_cov_scale),
            cluster_cov_dof: h.cluster_cov_dof,
            particle_cov_scale: rows(&h.particle_cov_scale),
            particle_cov_dof: h.particle_cov_dof,
            velocity_var: h.velocity_var,
            velocity_cov_scale: rows(&h.velocity_cov_scale),
            velocity_cov_dof: h.velocity_cov_dof,
            translation_var: h.translation_var,
            rotation_concentration: h.rotation_concentration,
            max_rotation_angle: h.max_rotation_angle,
            feature_var: h.feature_var,
            outlier_prob: h.outlier_prob,
            outlier_shape: h.outlier_shape,
            outlier_rate: h.outlier_rate,
            rotation_candidates: h.rotation_candidates,
            translations_per_axis: h.translations_per_axis,
        }
    }
}

impl HyperDto {
    pub fn to_core(&self) -> Result<HyperParams> {
        let d = self.cluster_mean_prior.len();
        Dim::from_value(d)?;
        Ok(HyperParams {
            cluster_concentration: self.cluster_concentration.clone(),
            particle_concentration: self.particle_concentration.clone(),
            cluster_mean_prior: Vector::from_column_slice(&self.cluster_mean_prior),
            cluster_mean_prior_var: self.cluster_mean_prior_var,
            cluster_cov_scale: matrix(&self.cluster_cov_scale, d, "cluster_cov_scale")?,
            cluster_cov_dof: self.cluster_cov_dof,
            particle_cov_scale: matrix(&self.particle_cov_scale, d, "particle_cov_scale")?,
            particle_cov_dof: self.particle_cov_dof,
            velocity_var: self.velocity_var,
            velocity_cov_scale: matrix(&self.velocity_cov_scale, d, "velocity_cov_scale")?,
            velocity_cov_dof: self.velocity_cov_dof,
            translation_var: self.translation_var,
            rotation_concentration: self.rotation_concentration,
            max_rotation_angle: self.max_rotation_angle,
            feature_var: self.feature_var,
            outlier_prob: self.outlier_prob,
            outlier_shape: self.outlier_shape,
            outlier_rate: self.outlier_rate,
            rotation_candidates: self.rotation_candidates,
            translations_per_axis: self.translations_per_axis,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlagsDto {
    pub freeze_particle_covariances: bool,
    pub freeze_cluster_assignments: bool,
    pub enable_outliers: bool,
    pub enable_features: bool,
    pub position_only_assignment: bool,
}

impl From<ScheduleFlags> for FlagsDto {
    fn from(f: ScheduleFlags) -> Self {
        Self {
            freeze_particle_covariances: f.freeze_particle_covariances,
            freeze_cluster_assignments: f.freeze_cluster_assignments,
            enable_outliers: f.enable_outliers,
            enable_features: f.enable_features,
            position_only_assignment: f.position_only_assignment,
        }
    }
}

impl From<FlagsDto> for ScheduleFlags {
    fn from(f: FlagsDto) -> Self {
        Self {
            freeze_particle_covariances: f.freeze_particle_covariances,
            freeze_cluster_assignments: f.freeze_cluster_assignments,
            enable_outliers: f.enable_outliers,
            enable_features: f.enable_features,
            position_only_assignment: f.position_only_assignment,
        }
    }
}

/// A schedule entry: a bare step name, or a name with a repeat count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepDto {
    Name(String),
    Repeated {
        step: String,
        repeat: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDto {
    pub steps: Vec<StepDto>,
    #[serde(default)]
    pub flags: FlagsDto,
}

impl From<&SweepSchedule> for ScheduleDto {
    fn from(s: &SweepSchedule) -> Self {
        Self {
            steps: s
                .steps
                .iter()
                .map(|s| match s.repeat {
                    1 => StepDto::Name(s.step.name().to_string()),
                    repeat => StepDto::Repeated {
                        step: s.step.name().to_string(),
                        repeat,
                    },
                })
                .collect(),
            flags: s.flags.into(),
        }
    }
}

impl ScheduleDto {
    pub fn to_core(&self) -> Result<SweepSchedule> {
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let (name, repeat) = match s {
                    StepDto::Name(n) => (n.as_str(), 1),
                    StepDto::Repeated { step, repeat } => (step.as_str(), *repeat),
                };
                let step = Step::from_name(name).ok_or_else(|| Error::Config(format!("unknown step `{name}`")))?;
                Ok(ScheduledStep { step, repeat })
            })
            .collect::<Result<Vec<_>>>()?;
        let schedule = SweepSchedule {
            steps,
            flags: self.flags.into(),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackDto {
    pub init_sweeps: usize,
    pub per_frame_schedule: ScheduleDto,
    pub freeze_cluster_assignments: bool,
    pub freeze_particle_covariances: bool,
    pub subsample_rate: f64,
    pub enable_outliers: bool,
    pub enable_features: bool,
    pub data_dependent_hyperparams: bool,
}

impl From<&TrackConfig> for TrackDto {
    fn from(c: &TrackConfig) -> Self {
        Self {
            init_sweeps: c.init_sweeps,
            per_frame_schedule: (&c.per_frame_schedule).into(),
            freeze_cluster_assignments: c.freeze_cluster_assignments,
            freeze_particle_covariances: c.freeze_particle_covariances,
            subsample_rate: c.subsample_rate,
            enable_outliers: c.enable_outliers,
            enable_features: c.enable_features,
            data_dependent_hyperparams: c.data_dependent_hyperparams,
        }
    }
}

impl TrackDto {
    pub fn to_core(&self) -> Result<TrackConfig> {
        let cfg = TrackConfig {
            init_sweeps: self.init_sweeps,
            per_frame_schedule: self.per_frame_schedule.to_core()?,
            freeze_cluster_assignments: self.freeze_cluster_assignments,
            freeze_particle_covariances: self.freeze_particle_covariances,
            subsample_rate: self.subsample_rate,
            enable_outliers: self.enable_outliers,
            enable_features: self.enable_features,
            data_dependent_hyperparams: self.data_dependent_hyperparams,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleDto {
    pub spatial_mean: Vec<f64>,
    pub spatial_cov: Rows,
    pub velocity_mean: Vec<f64>,
    pub velocity_cov: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterDto {
    pub spatial_mean: Vec<f64>,
    pub spatial_cov: Rows,
    pub rotation: Rows,
    pub translation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngDto {
    pub seed: u64,
    pub epoch: u64,
}

/// A model state. Points assigned to the outlier component carry the index
/// `particles.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDto {
    pub dim: usize,
    pub particles: Vec<ParticleDto>,
    pub clusters: Vec<ClusterDto>,
    pub point_to_particle: Vec<usize>,
    pub particle_to_cluster: Vec<usize>,
    pub particle_weights: Vec<f64>,
    pub cluster_weights: Vec<f64>,
    pub rng: RngDto,
}

impl From<&ModelState> for StateDto {
    fn from(s: &ModelState) -> Self {
        let v = |x: &Vector| x.iter().copied().collect::<Vec<f64>>();
        Self {
            dim: s.dim.value(),
            particles: s
                .particles
                .iter()
                .map(|p| ParticleDto {
                    spatial_mean: v(&p.spatial_mean),
                    spatial_cov: rows(&p.spatial_cov),
                    velocity_mean: v(&p.velocity_mean),
                    velocity_cov: rows(&p.velocity_cov),
                    feature_mean: p.feature_mean.as_ref().map(v),
                })
                .collect(),
            clusters: s
                .clusters
                .iter()
                .map(|c| ClusterDto {
                    spatial_mean: v(&c.spatial_mean),
                    spatial_cov: rows(&c.spatial_cov),
                    rotation: rows(&c.rotation),
                    translation: v(&c.translation),
                })
                .collect(),
            point_to_particle: s.assignments.point_to_particle.clone(),
            particle_to_cluster: s.assignments.particle_to_cluster.clone(),
            particle_weights: s.particle_weights.clone(),
            cluster_weights: s.cluster_weights.clone(),
            rng: RngDto {
                seed: s.rng.seed,
                epoch: s.rng.epoch,
            },
        }
    }
}

impl StateDto {
    pub fn to_core(&self) -> Result<ModelState> {
        let dim = Dim::from_value(self.dim)?;
        let d = self.dim;
        let particles = self
            .particles
            .iter()
            .map(|p| {
                Ok(ParticleState {
                    spatial_mean: vector(&p.spatial_mean, d, "particle spatial_mean")?,
                    spatial_cov: matrix(&p.spatial_cov, d, "particle spatial_cov")?,
                    velocity_mean: vector(&p.velocity_mean, d, "particle velocity_mean")?,
                    velocity_cov: matrix(&p.velocity_cov, d, "particle velocity_cov")?,
                    feature_mean: p.feature_mean.as_deref().map(Vector::from_column_slice),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let clusters = self
            .clusters
            .iter()
            .map(|c| {
                Ok(ClusterState {
                    spatial_mean: vector(&c.spatial_mean, d, "cluster spatial_mean")?,
                    spatial_cov: matrix(&c.spatial_cov, d, "cluster spatial_cov")?,
                    rotation: matrix(&c.rotation, d, "cluster rotation")?,
                    translation: vector(&c.translation, d, "cluster translation")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let state = ModelState {
            dim,
            particles,
            clusters,
            assignments: Assignments {
                point_to_particle: self.point_to_particle.clone(),
                particle_to_cluster: self.particle_to_cluster.clone(),
            },
            particle_weights: self.particle_weights.clone(),
            cluster_weights: self.cluster_weights.clone(),
            rng: RngCursor {
                seed: self.rng.seed,
                epoch: self.rng.epoch,
            },
        };
        state.validate(self.point_to_particle.len(), true)?;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeDto {
    Ball { radius: f64 },
    Box { half_extents: Vec<f64> },
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDto {
    pub shape: ShapeDto,
    pub center: Vec<f64>,
    pub translation: Vec<f64>,
    #[serde(default)]
    pub angle: f64,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
}

/// Scene description for the dot-stimulus generator. Omitted noise fields
/// default to zero and an omitted background translation to rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDto {
    pub dim: usize,
    pub bodies: Vec<BodyDto>,
    pub dot_density: f64,
    pub background_dots: usize,
    #[serde(default)]
    pub background_translation: Option<Vec<f64>>,
    pub extent_min: Vec<f64>,
    pub extent_max: Vec<f64>,
    #[serde(default)]
    pub flicker_prob: f64,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub velocity_noise_std: f64,
    #[serde(default)]
    pub velocity_dropout_prob: f64,
}

impl From<&SceneSpec> for SceneDto {
    fn from(s: &SceneSpec) -> Self {
        Self {
            dim: s.dim,
            bodies: s
                .bodies
                .iter()
                .map(|b| BodyDto {
                    shape: match &b.shape {
                        Shape::Ball { radius } => ShapeDto::Ball { radius: *radius },
                        Shape::Box { half_extents } => ShapeDto::Box {
                            half_extents: half_extents.clone(),
                        },
                    },
                    center: b.center.clone(),
                    translation: b.translation.clone(),
                    angle: b.angle,
                    axis: b.axis,
                })
                .collect(),
            dot_density: s.dot_density,
            background_dots: s.background_dots,
            background_translation: Some(s.background_translation.clone()),
            extent_min: s.extent_min.clone(),
            extent_max: s.extent_max.clone(),
            flicker_prob: s.flicker_prob,
            frames: s.frames,
            seed: s.seed,
            velocity_noise_std: s.velocity_noise_std,
            velocity_dropout_prob: s.velocity_dropout_prob,
        }
    }
}

impl SceneDto {
    pub fn to_core(&self) -> Result<SceneSpec> {
        let spec = SceneSpec {
            dim: self.dim,
            bodies: self
                .bodies
                .iter()
                .map(|b| BodySpec {
                    shape: match &b.shape {
                        ShapeDto::Ball { radius } => Shape::Ball { radius: *radius },
                        ShapeDto::Box { half_extents } => Shape::Box {
                            half_extents: half_extents.clone(),
                        },
                    },
                    center: b.center.clone(),
                    translation: b.translation.clone(),
                    angle: b.angle,
                    axis: b.axis,
                })
                .collect(),
            dot_density: self.dot_density,
            background_dots: self.background_dots,
            background_translation: self.background_translation.clone().unwrap_or_else(|| vec![0.0; self.dim]),
            extent_min: self.extent_min.clone(),
            extent_max: self.extent_max.clone(),
            flicker_prob: self.flicker_prob,
            frames: self.frames,
            seed: self.seed,
            velocity_noise_std: self.velocity_noise_std,
            velocity_dropout_prob: self.velocity_dropout_prob,
        };
        spec.validate()?;
        Ok(spec)
    }
}
