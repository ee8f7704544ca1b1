//! Sequential multi-frame inference: propagate particles by their velocities,
//! re-anchor points spatially, then refine particles and clusters.

use alloc::vec;
use alloc::vec::Vec;

use crate::distributions::TransformCandidates;
use crate::error::{invalid, Error, Result};
use crate::gibbs::{self, ScheduleFlags, ScheduledStep, Step, SweepSchedule};
use crate::init::{data_dependent_hyperparams, init_state, init_state_with_proposal};
use crate::linalg::GaussianFactor;
use crate::math;
use crate::model::{HyperParams, ModelState, PointObservation};
use crate::rng::{domain, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackConfig {
    /// Full sweeps on the first frame after initialization.
    pub init_sweeps: usize,
    pub per_frame_schedule: SweepSchedule,
    pub freeze_cluster_assignments: bool,
    pub freeze_particle_covariances: bool,
    /// Fraction of each frame's points used for inference, in `(0, 1]`.
    pub subsample_rate: f64,
    pub enable_outliers: bool,
    pub enable_features: bool,
    /// Replace location, scale and dof priors with first-frame statistics.
    pub data_dependent_hyperparams: bool,
}

fn steps(list: &[(Step, usize)]) -> Vec<ScheduledStep> {
    list.iter().map(|&(step, repeat)| ScheduledStep { step, repeat }).collect()
}

/// Propagation is followed by this anchoring prefix in every preset.
const ANCHOR: [Step; 3] = [Step::PointAssignmentPositionOnly, Step::ParticleWeights, Step::ParticleMeans];

/// Point, particle and cluster refinement, bottom-up.
const REFINE: [Step; 11] = [
    Step::PointAssignment,
    Step::ParticleWeights,
    Step::ParticleVelocityMeans,
    Step::ParticleVelocityCovariances,
    Step::ParticleFeatures,
    Step::ClusterAssignment,
    Step::ClusterWeights,
    Step::ClusterMeans,
    Step::ClusterCovariances,
    Step::ClusterRotation,
    Step::ClusterTranslation,
];

impl TrackConfig {
    /// Anchoring followed by `refinements` bottom-up refinement passes.
    pub fn standard(init_sweeps: usize, refinements: usize) -> Self {
        let mut list: Vec<(Step, usize)> = ANCHOR.iter().map(|&s| (s, 1)).collect();
        for _ in 0..refinements.max(1) {
            list.extend(REFINE.iter().map(|&s| (s, 1)));
        }
        Self {
            init_sweeps,
            per_frame_schedule: SweepSchedule {
                steps: steps(&list),
                flags: ScheduleFlags::default(),
            },
            freeze_cluster_assignments: false,
            freeze_particle_covariances: true,
            subsample_rate: 1.0,
            enable_outliers: false,
            enable_features: false,
            data_dependent_hyperparams: false,
        }
    }

    /// Camouflaged structure-from-motion setting: 50 initial sweeps; per frame
    /// 20 velocity-focused iterations then 500 full refinement sweeps, with
    /// cluster assignments and particle covariances frozen.
    pub fn gestalt() -> Self {
        let mut list: Vec<(Step, usize)> = ANCHOR.iter().map(|&s| (s, 1)).collect();
        for _ in 0..20 {
            list.extend([
                (Step::ParticleVelocityMeans, 1),
                (Step::ParticleVelocityCovariances, 1),
                (Step::ClusterRotation, 1),
                (Step::ClusterTranslation, 1),
            ]);
        }
        for _ in 0..500 {
            list.extend(REFINE.iter().map(|&s| (s, 1)));
        }
        Self {
            init_sweeps: 50,
            per_frame_schedule: SweepSchedule {
                steps: steps(&list),
                flags: ScheduleFlags::default(),
            },
            freeze_cluster_assignments: true,
            freeze_particle_covariances: true,
            subsample_rate: 1.0,
            enable_outliers: false,
            enable_features: false,
            data_dependent_hyperparams: true,
        }
    }

    /// Feature-augmented video setting: 30 initial sweeps, outliers during
    /// tracking, cluster assignments and particle covariances frozen.
    pub fn rgb() -> Self {
        let mut list = vec![
            (Step::ClusterRotation, 1),
            (Step::ClusterTranslation, 1),
            (Step::PointAssignmentPositionOnly, 1),
            (Step::ParticleWeights, 1),
            (Step::PointAssignment, 1),
            (Step::ParticleWeights, 1),
        ];
        for _ in 0..5 {
            list.extend([
                (Step::ParticleMeans, 1),
                (Step::ParticleVelocityMeans, 1),
                (Step::ParticleVelocityCovariances, 1),
            ]);
        }
        list.extend([(Step::ParticleFeatures, 1), (Step::ClusterWeights, 1)]);
        Self {
            init_sweeps: 30,
            per_frame_schedule: SweepSchedule {
                steps: steps(&list),
                flags: ScheduleFlags::default(),
            },
            freeze_cluster_assignments: true,
            freeze_particle_covariances: true,
            subsample_rate: 1.0,
            enable_outliers: true,
            enable_features: true,
            data_dependent_hyperparams: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.subsample_rate > 0.0 && self.subsample_rate <= 1.0) {
            return Err(invalid("subsample_rate", "must lie in (0, 1]"));
        }
        self.per_frame_schedule.validate()
    }

    fn frame_flags(&self, first_frame: bool) -> ScheduleFlags {
        ScheduleFlags {
            freeze_particle_covariances: self.freeze_particle_covariances && !first_frame,
            freeze_cluster_assignments: self.freeze_cluster_assignments && !first_frame,
            enable_outliers: self.enable_outliers && !first_frame,
            enable_features: self.enable_features,
            position_only_assignment: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub states: Vec<ModelState>,
    /// Indices into each frame's observations that were used for inference.
    pub used_indices: Vec<Vec<usize>>,
    /// Hyperparameters actually used (after any data-dependent replacement).
    pub hyper: HyperParams,
}

/// Shift every particle's spatial mean by its velocity mean.
pub fn propagate(state: &ModelState) -> ModelState {
    let mut next = state.clone();
    for p in &mut next.particles {
        p.spatial_mean += &p.velocity_mean;
    }
    next
}

/// Sorted indices of `⌈rate·n⌉` points drawn without replacement.
pub fn subsample_indices(n: usize, rate: f64, seed: u64, frame: usize) -> Vec<usize> {
    let m = (math::ceil(rate * n as f64) as usize).clamp(usize::from(n > 0), n);
    if m >= n {
        return (0..n).collect();
    }
    let mut rng = stream(seed, domain::SUBSAMPLE, frame as u64, 0);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Most likely particle of each point by position alone.
fn spatial_map_assignment(state: &ModelState, obs: &[PointObservation]) -> Result<Vec<usize>> {
    let factors = state
        .particles
        .iter()
        .map(|p| GaussianFactor::new(&p.spatial_mean, &p.spatial_cov, "particle covariance"))
        .collect::<Result<Vec<_>>>()?;
    Ok(obs
        .iter()
        .map(|o| {
            let mut best = (0, f64::NEG_INFINITY);
            for (l, (f, w)) in factors.iter().zip(&state.particle_weights).enumerate() {
                let v = math::ln(*w) + f.log_pdf(o.position.as_slice());
                if v > best.1 {
                    best = (l, v);
                }
            }
            best.0
        })
        .collect())
}

/// Cluster of each point under its most likely particle (position and velocity).
pub fn map_point_labels(state: &ModelState, obs: &[PointObservation]) -> Result<Vec<usize>> {
    let spatial = state
        .particles
        .iter()
        .map(|p| GaussianFactor::new(&p.spatial_mean, &p.spatial_cov, "particle covariance"))
        .collect::<Result<Vec<_>>>()?;
    let velocity = state
        .particles
        .iter()
        .map(|p| GaussianFactor::new(&p.velocity_mean, &p.velocity_cov, "velocity covariance"))
        .collect::<Result<Vec<_>>>()?;
    Ok(obs
        .iter()
        .map(|o| {
            let mut best = (0, f64::NEG_INFINITY);
            for l in 0..state.particles.len() {
                let v = math::ln(state.particle_weights[l])
                    + spatial[l].log_pdf(o.position.as_slice())
                    + velocity[l].log_pdf(o.velocity.as_slice());
                if v > best.1 {
                    best = (l, v);
                }
            }
            state.assignments.particle_to_cluster[best.0]
        })
        .collect())
}

/// Advance a state by one frame. Returns the new state and the indices of the
/// points used.
pub fn track_step(
    prev: &ModelState,
    frame: &[PointObservation],
    frame_index: usize,
    hyper: &HyperParams,
    cfg: &TrackConfig,
    candidates: &TransformCandidates,
) -> Result<(ModelState, Vec<usize>)> {
    if frame.is_empty() {
        return Err(Error::Empty("frame"));
    }
    let used = subsample_indices(frame.len(), cfg.subsample_rate, prev.rng.seed, frame_index);
    let obs: Vec<PointObservation> = used.iter().map(|&i| frame[i].clone()).collect();
    let mut state = propagate(prev);
    state.assignments.point_to_particle = spatial_map_assignment(&state, &obs)?;
    let schedule = SweepSchedule {
        steps: cfg.per_frame_schedule.steps.clone(),
        flags: cfg.frame_flags(false),
    };
    let state = gibbs::sweep(&state, &obs, hyper, &schedule, candidates)?;
    Ok((state, used))
}

/// Run inference over a whole sequence of frames.
pub fn track(
    frames: &[Vec<PointObservation>],
    k: usize,
    l: usize,
    hyper: &HyperParams,
    cfg: &TrackConfig,
    seed: u64,
) -> Result<TrackOutput> {
    track_with_proposal(frames, k, l, hyper, cfg, seed, None)
}

/// As [`track`], with the first-frame clusters seeded from a coarse per-point
/// label proposal for `frames[0]`.
pub fn track_with_proposal(
    frames: &[Vec<PointObservation>],
    k: usize,
    l: usize,
    hyper: &HyperParams,
    cfg: &TrackConfig,
    seed: u64,
    proposal: Option<&[usize]>,
) -> Result<TrackOutput> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::Empty("frames"));
    }
    if frames[0].is_empty() {
        return Err(Error::Empty("frame"));
    }
    let used0 = subsample_indices(frames[0].len(), cfg.subsample_rate, seed, 0);
    let obs0: Vec<PointObservation> = used0.iter().map(|&i| frames[0][i].clone()).collect();
    let mut state = match proposal {
        Some(p) => {
            if p.len() != frames[0].len() {
                return Err(Error::ShapeMismatch {
                    context: "proposal",
                    expected: frames[0].len(),
                    found: p.len(),
                });
            }
            let p0: Vec<usize> = used0.iter().map(|&i| p[i]).collect();
            init_state_with_proposal(&obs0, k, l, hyper, seed, &p0)?
        }
        None => init_state(&obs0, k, l, hyper, seed)?,
    };
    let hyper = if cfg.data_dependent_hyperparams {
        data_dependent_hyperparams(&obs0, &state, hyper)?
    } else {
        hyper.clone()
    };
    hyper.validate(k, l)?;
    let candidates = hyper.candidates()?;
    let first = SweepSchedule::full(cfg.frame_flags(true));
    for _ in 0..cfg.init_sweeps {
        state = gibbs::sweep(&state, &obs0, &hyper, &first, &candidates)?;
    }
    let mut states = Vec::with_capacity(frames.len());
    let mut used_indices = Vec::with_capacity(frames.len());
    states.push(state);
    used_indices.push(used0);
    for (t, frame) in frames.iter().enumerate().skip(1) {
        let (next, used) = track_step(states.last().expect("non-empty"), frame, t, &hyper, cfg, &candidates)?;
        states.push(next);
        used_indices.push(used);
    }
    Ok(TrackOutput {
        states,
        used_indices,
        hyper,
    })
}
