//! Blocked Gibbs conditionals and the sweep scheduler.
//!
//! Every update reads the state as it was before the step and draws each
//! component from its own substream, so component updates inside a step are
//! independent and may run in parallel without changing the result.

use alloc::format;
use alloc::vec::Vec;

use crate::distributions::{self, TransformCandidates};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, GaussianFactor, Matrix, Vector};
use crate::math;
use crate::model::{cluster_induced_velocity, HyperParams, ModelState, PointObservation, FEATURE_PRIOR_VAR};
use crate::rng::StepStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    PointAssignment,
    PointAssignmentPositionOnly,
    ParticleWeights,
    ParticleMeans,
    ParticleCovariances,
    ParticleVelocityMeans,
    ParticleVelocityCovariances,
    ParticleFeatures,
    ClusterAssignment,
    ClusterWeights,
    ClusterMeans,
    ClusterCovariances,
    ClusterRotation,
    ClusterTranslation,
}

impl Step {
    pub const ALL: [Step; 14] = [
        Step::PointAssignment,
        Step::PointAssignmentPositionOnly,
        Step::ParticleWeights,
        Step::ParticleMeans,
        Step::ParticleCovariances,
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

    pub fn name(self) -> &'static str {
        match self {
            Step::PointAssignment => "point_assignment",
            Step::PointAssignmentPositionOnly => "point_assignment_position_only",
            Step::ParticleWeights => "particle_weights",
            Step::ParticleMeans => "particle_means",
            Step::ParticleCovariances => "particle_covariances",
            Step::ParticleVelocityMeans => "particle_velocity_means",
            Step::ParticleVelocityCovariances => "particle_velocity_covariances",
            Step::ParticleFeatures => "particle_features",
            Step::ClusterAssignment => "cluster_assignment",
            Step::ClusterWeights => "cluster_weights",
            Step::ClusterMeans => "cluster_means",
            Step::ClusterCovariances => "cluster_covariances",
            Step::ClusterRotation => "cluster_rotation",
            Step::ClusterTranslation => "cluster_translation",
        }
    }

    pub fn from_name(name: &str) -> Option<Step> {
        Step::ALL.iter().copied().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScheduleFlags {
    pub freeze_particle_covariances: bool,
    pub freeze_cluster_assignments: bool,
    pub enable_outliers: bool,
    pub enable_features: bool,
    pub position_only_assignment: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledStep {
    pub step: Step,
    pub repeat: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSchedule {
    pub steps: Vec<ScheduledStep>,
    pub flags: ScheduleFlags,
}

impl SweepSchedule {
    pub fn from_steps(steps: &[Step], flags: ScheduleFlags) -> Self {
        Self {
            steps: steps.iter().map(|&step| ScheduledStep { step, repeat: 1 }).collect(),
            flags,
        }
    }

    /// Every conditional once, in generative order.
    pub fn full(flags: ScheduleFlags) -> Self {
        Self::from_steps(
            &[
                Step::PointAssignment,
                Step::ParticleWeights,
                Step::ParticleMeans,
                Step::ParticleCovariances,
                Step::ParticleVelocityMeans,
                Step::ParticleVelocityCovariances,
                Step::ParticleFeatures,
                Step::ClusterAssignment,
                Step::ClusterWeights,
                Step::ClusterMeans,
                Step::ClusterCovariances,
                Step::ClusterRotation,
                Step::ClusterTranslation,
            ],
            flags,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.steps.iter().find(|s| s.repeat == 0) {
            return Err(invalid("schedule", format!("step `{}` has repeat count 0", s.step.name())));
        }
        Ok(())
    }
}

/// Everything a conditional needs besides the state itself.
#[derive(Debug, Clone, Copy)]
pub struct GibbsContext<'a> {
    pub obs: &'a [PointObservation],
    pub hyper: &'a HyperParams,
    pub candidates: &'a TransformCandidates,
    pub flags: ScheduleFlags,
}

#[cfg(feature = "parallel")]
fn map_components<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_components<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

fn inverse_diag_scalar(v: f64, d: usize) -> Matrix {
    Matrix::identity(d, d) / v
}

fn features_ready(state: &ModelState, ctx: &GibbsContext<'_>) -> Result<f64> {
    let var = ctx.hyper.feature_var.ok_or(Error::MissingFeatures)?;
    if ctx.obs.iter().any(|o| o.feature.is_none()) {
        return Err(Error::MissingFeatures);
    }
    if state.particles.iter().any(|p| p.feature_mean.is_none()) {
        return Err(Error::MissingFeatures);
    }
    Ok(var)
}

/// Unnormalized log-probabilities of assigning one point to each particle;
/// the extra trailing entry (when outliers are enabled) is the outlier component.
pub fn point_assignment_log_weights(
    state: &ModelState,
    ctx: &GibbsContext<'_>,
    point: usize,
    position_only: bool,
) -> Result<Vec<f64>> {
    let factors = PointFactors::new(state, ctx, position_only)?;
    Ok(factors.log_weights(&ctx.obs[point], state, ctx))
}

struct PointFactors {
    spatial: Vec<GaussianFactor>,
    velocity: Vec<GaussianFactor>,
    log_prior: Vec<f64>,
    outlier_log_prior: Option<f64>,
    feature_var: Option<f64>,
    position_only: bool,
}

impl PointFactors {
    fn new(state: &ModelState, ctx: &GibbsContext<'_>, position_only: bool) -> Result<Self> {
        let position_only = position_only || ctx.flags.position_only_assignment;
        let feature_var = if ctx.flags.enable_features && !position_only {
            Some(features_ready(state, ctx)?)
        } else {
            None
        };
        let outliers = ctx.flags.enable_outliers && !position_only && ctx.hyper.outlier_prob > 0.0;
        let inlier = if outliers { math::ln(1.0 - ctx.hyper.outlier_prob) } else { 0.0 };
        let spatial = state
            .particles
            .iter()
            .map(|p| GaussianFactor::new(&p.spatial_mean, &p.spatial_cov, "point assignment spatial covariance"))
            .collect::<Result<Vec<_>>>()?;
        let velocity = if position_only {
            Vec::new()
        } else {
            state
                .particles
                .iter()
                .map(|p| GaussianFactor::new(&p.velocity_mean, &p.velocity_cov, "point assignment velocity covariance"))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self {
            spatial,
            velocity,
            log_prior: state.particle_weights.iter().map(|w| math::ln(*w) + inlier).collect(),
            outlier_log_prior: outliers.then(|| math::ln(ctx.hyper.outlier_prob)),
            feature_var,
            position_only,
        })
    }

    fn log_weights(&self, o: &PointObservation, state: &ModelState, ctx: &GibbsContext<'_>) -> Vec<f64> {
        let l = self.spatial.len();
        let mut lw = Vec::with_capacity(l + 1);
        for i in 0..l {
            let mut w = self.log_prior[i] + self.spatial[i].log_pdf(o.position.as_slice());
            if !self.position_only {
                w += self.velocity[i].log_pdf(o.velocity.as_slice());
            }
            if let (Some(var), Some(f), Some(fm)) = (self.feature_var, &o.feature, &state.particles[i].feature_mean) {
                w += linalg::isotropic_log_pdf(f.as_slice(), fm.as_slice(), var);
            }
            lw.push(w);
        }
        if let Some(lp) = self.outlier_log_prior {
            lw.push(lp + distributions::gamma_logpdf(o.velocity.norm(), ctx.hyper.outlier_shape, ctx.hyper.outlier_rate));
        }
        lw
    }
}

/// Resample every point's particle (or outlier) assignment.
pub fn assign_points_to_particles(
    state: &ModelState,
    ctx: &GibbsContext<'_>,
    streams: StepStreams,
    position_only: bool,
) -> Result<Vec<usize>> {
    let factors = PointFactors::new(state, ctx, position_only)?;
    map_components(ctx.obs.len(), |n| {
        let lw = factors.log_weights(&ctx.obs[n], state, ctx);
        distributions::categorical_sample(&lw, &mut streams.component(n))
    })
}

fn dirichlet_posterior(prior: &[f64], counts: &[usize], streams: StepStreams) -> Result<Vec<f64>> {
    let conc: Vec<f64> = prior.iter().zip(counts).map(|(a, &c)| a + c as f64).collect();
    distributions::dirichlet_sample(&conc, &mut streams.component(0))
}

pub fn update_particle_weights(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<f64>> {
    let counts: Vec<usize> = state.particle_members().iter().map(|m| m.len()).collect();
    dirichlet_posterior(&ctx.hyper.particle_concentration, &counts, streams)
}

pub fn update_cluster_weights(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<f64>> {
    let counts: Vec<usize> = state.cluster_members().iter().map(|m| m.len()).collect();
    dirichlet_posterior(&ctx.hyper.cluster_concentration, &counts, streams)
}

/// Gaussian conditional in information form.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub precision: Matrix,
    pub linear: Vector,
}

impl GaussianConditional {
    pub fn mean(&self) -> Result<Vector> {
        let chol = linalg::cholesky_jittered(&linalg::symmetrize(&self.precision), "conditional precision")?;
        Ok(chol.solve(&self.linear))
    }

    pub fn covariance(&self) -> Result<Matrix> {
        linalg::spd_inverse(&self.precision, "conditional precision")
    }

    fn sample(&self, streams: StepStreams, index: usize, context: &'static str) -> Result<Vector> {
        let z = distributions::standard_normals(&mut streams.component(index), self.linear.len());
        Ok(linalg::sample_from_precision(&self.precision, &self.linear, &z, context)?.0)
    }
}

/// Conditional of one particle's spatial mean given its points, its cluster and its velocity.
pub fn particle_mean_conditional(
    state: &ModelState,
    ctx: &GibbsContext<'_>,
    particle: usize,
    members: &[usize],
) -> Result<GaussianConditional> {
    let d = state.dim.value();
    let p = &state.particles[particle];
    let c = &state.clusters[state.assignments.particle_to_cluster[particle]];
    let cluster_prec = linalg::spd_inverse(&c.spatial_cov, "cluster covariance")?;
    let a = &c.rotation - Matrix::identity(d, d);
    let b = &c.translation - &a * &c.spatial_mean;
    let inv_var = 1.0 / ctx.hyper.velocity_var;
    let mut precision = &cluster_prec + a.transpose() * &a * inv_var;
    let mut linear = &cluster_prec * &c.spatial_mean + a.transpose() * (&p.velocity_mean - b) * inv_var;
    if !members.is_empty() {
        let particle_prec = linalg::spd_inverse(&p.spatial_cov, "particle covariance")?;
        let mut sum = Vector::zeros(d);
        for &n in members {
            sum += &ctx.obs[n].position;
        }
        precision += &particle_prec * members.len() as f64;
        linear += particle_prec * sum;
    }
    Ok(GaussianConditional { precision, linear })
}

pub fn update_particle_means(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<Vector>> {
    let members = state.particle_members();
    map_components(state.particles.len(), |l| {
        particle_mean_conditional(state, ctx, l, &members[l])?.sample(streams, l, "particle mean precision")
    })
}

fn scatter<'a, I>(d: usize, items: I, center: &Vector) -> (Matrix, usize)
where
    I: IntoIterator<Item = &'a Vector>,
{
    let mut s = Matrix::zeros(d, d);
    let mut count = 0;
    for v in items {
        let r = v - center;
        s += &r * r.transpose();
        count += 1;
    }
    (s, count)
}

/// Inverse-Wishart posterior `(scale, dof)` of one particle's spatial covariance.
pub fn particle_covariance_posterior(state: &ModelState, ctx: &GibbsContext<'_>, particle: usize, members: &[usize]) -> (Matrix, f64) {
    let d = state.dim.value();
    let (s, n) = scatter(d, members.iter().map(|&i| &ctx.obs[i].position), &state.particles[particle].spatial_mean);
    (&ctx.hyper.particle_cov_scale + s, ctx.hyper.particle_cov_dof + n as f64)
}

pub fn update_particle_covariances(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<Matrix>> {
    let members = state.particle_members();
    map_components(state.particles.len(), |l| {
        let (psi, nu) = particle_covariance_posterior(state, ctx, l, &members[l]);
        distributions::inverse_wishart_sample(&psi, nu, &mut streams.component(l))
    })
}

pub fn particle_velocity_conditional(
    state: &ModelState,
    ctx: &GibbsContext<'_>,
    particle: usize,
    members: &[usize],
) -> Result<GaussianConditional> {
    let d = state.dim.value();
    let p = &state.particles[particle];
    let c = &state.clusters[state.assignments.particle_to_cluster[particle]];
    let induced = cluster_induced_velocity(c, &p.spatial_mean);
    let mut precision = inverse_diag_scalar(ctx.hyper.velocity_var, d);
    let mut linear = &induced / ctx.hyper.velocity_var;
    if !members.is_empty() {
        let vel_prec = linalg::spd_inverse(&p.velocity_cov, "velocity covariance")?;
        let mut sum = Vector::zeros(d);
        for &n in members {
            sum += &ctx.obs[n].velocity;
        }
        precision += &vel_prec * members.len() as f64;
        linear += vel_prec * sum;
    }
    Ok(GaussianConditional { precision, linear })
}

pub fn update_particle_velocity_means(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<Vector>> {
    let members = state.particle_members();
    map_components(state.particles.len(), |l| {
        particle_velocity_conditional(state, ctx, l, &members[l])?.sample(streams, l, "velocity mean precision")
    })
}

pub fn particle_velocity_covariance_posterior(
    state: &ModelState,
    ctx: &GibbsContext<'_>,
    particle: usize,
    members: &[usize],
) -> (Matrix, f64) {
    let d = state.dim.value();
    let (s, n) = scatter(d, members.iter().map(|&i| &ctx.obs[i].velocity), &state.particles[particle].velocity_mean);
    (&ctx.hyper.velocity_cov_scale + s, ctx.hyper.velocity_cov_dof + n as f64)
}

pub fn update_particle_velocity_covariances(
    state: &ModelState,
    ctx: &GibbsContext<'_>,
    streams: StepStreams,
) -> Result<Vec<Matrix>> {
    let members = state.particle_members();
    map_components(state.particles.len(), |l| {
        let (psi, nu) = particle_velocity_covariance_posterior(state, ctx, l, &members[l]);
        distributions::inverse_wishart_sample(&psi, nu, &mut streams.component(l))
    })
}

/// Conjugate update of particle feature means under a `N(0, I)` prior.
pub fn update_particle_features(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<Vector>> {
    let var = features_ready(state, ctx)?;
    let members = state.particle_members();
    map_components(state.particles.len(), |l| {
        let f_dim = state.particles[l].feature_mean.as_ref().map_or(0, |f| f.len());
        let mut sum = Vector::zeros(f_dim);
        for &n in &members[l] {
            if let Some(f) = &ctx.obs[n].feature {
                sum += f;
            }
        }
        let precision = 1.0 / FEATURE_PRIOR_VAR + members[l].len() as f64 / var;
        let mean = sum / (var * precision);
        Ok(distributions::isotropic_sample(&mean, 1.0 / precision, &mut streams.component(l)))
    })
}

/// Unnormalized log-probabilities of one particle's cluster.
pub fn cluster_assignment_log_weights(state: &ModelState, ctx: &GibbsContext<'_>, particle: usize) -> Result<Vec<f64>> {
    let factors = state
        .clusters
        .iter()
        .map(|c| GaussianFactor::new(&c.spatial_mean, &c.spatial_cov, "cluster covariance"))
        .collect::<Result<Vec<_>>>()?;
    Ok(cluster_log_weights(state, ctx, &factors, particle))
}

fn cluster_log_weights(state: &ModelState, ctx: &GibbsContext<'_>, factors: &[GaussianFactor], particle: usize) -> Vec<f64> {
    let p = &state.particles[particle];
    state
        .clusters
        .iter()
        .zip(factors)
        .zip(&state.cluster_weights)
        .map(|((c, f), w)| {
            let induced = cluster_induced_velocity(c, &p.spatial_mean);
            math::ln(*w)
                + f.log_pdf(p.spatial_mean.as_slice())
                + linalg::isotropic_log_pdf(p.velocity_mean.as_slice(), induced.as_slice(), ctx.hyper.velocity_var)
        })
        .collect()
}

pub fn assign_particles_to_clusters(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<usize>> {
    let factors = state
        .clusters
        .iter()
        .map(|c| GaussianFactor::new(&c.spatial_mean, &c.spatial_cov, "cluster covariance"))
        .collect::<Result<Vec<_>>>()?;
    map_components(state.particles.len(), |l| {
        let lw = cluster_log_weights(state, ctx, &factors, l);
        distributions::categorical_sample(&lw, &mut streams.component(l))
    })
}

/// Conditional of one cluster's spatial mean given its particles and transform.
pub fn cluster_mean_conditional(
    state: &ModelState,
    ctx: &GibbsContext<'_>,
    cluster: usize,
    members: &[usize],
) -> Result<GaussianConditional> {
    let d = state.dim.value();
    let c = &state.clusters[cluster];
    let prior_prec = 1.0 / ctx.hyper.cluster_mean_prior_var;
    let mut precision = Matrix::identity(d, d) * prior_prec;
    let mut linear = &ctx.hyper.cluster_mean_prior * prior_prec;
    if !members.is_empty() {
        let n = members.len() as f64;
        let cov_prec = linalg::spd_inverse(&c.spatial_cov, "cluster covariance")?;
        // induced velocity = A μ_k + (t - A μ_ℓ) with A = I - R
        let a = Matrix::identity(d, d) - &c.rotation;
        let inv_var = 1.0 / ctx.hyper.velocity_var;
        let mut mean_sum = Vector::zeros(d);
        let mut residual_sum = Vector::zeros(d);
        for &l in members {
            let p = &state.particles[l];
            mean_sum += &p.spatial_mean;
            residual_sum += &p.velocity_mean - (&c.translation - &a * &p.spatial_mean);
        }
        precision += (&cov_prec + a.transpose() * &a * inv_var) * n;
        linear += cov_prec * mean_sum + a.transpose() * residual_sum * inv_var;
    }
    Ok(GaussianConditional { precision, linear })
}

pub fn update_cluster_means(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<Vector>> {
    let members = state.cluster_members();
    map_components(state.clusters.len(), |k| {
        cluster_mean_conditional(state, ctx, k, &members[k])?.sample(streams, k, "cluster mean precision")
    })
}

pub fn cluster_covariance_posterior(state: &ModelState, ctx: &GibbsContext<'_>, cluster: usize, members: &[usize]) -> (Matrix, f64) {
    let d = state.dim.value();
    let (s, n) = scatter(
        d,
        members.iter().map(|&l| &state.particles[l].spatial_mean),
        &state.clusters[cluster].spatial_mean,
    );
    (&ctx.hyper.cluster_cov_scale + s, ctx.hyper.cluster_cov_dof + n as f64)
}

pub fn update_cluster_covariances(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<Matrix>> {
    let members = state.cluster_members();
    map_components(state.clusters.len(), |k| {
        let (psi, nu) = cluster_covariance_posterior(state, ctx, k, &members[k]);
        distributions::inverse_wishart_sample(&psi, nu, &mut streams.component(k))
    })
}

fn velocity_fit(state: &ModelState, ctx: &GibbsContext<'_>, members: &[usize], rotation: &Matrix, translation: &Vector, center: &Vector) -> f64 {
    let d = state.dim.value();
    let a = rotation - Matrix::identity(d, d);
    members
        .iter()
        .map(|&l| {
            let p = &state.particles[l];
            let induced = translation + &a * (&p.spatial_mean - center);
            linalg::isotropic_log_pdf(p.velocity_mean.as_slice(), induced.as_slice(), ctx.hyper.velocity_var)
        })
        .sum()
}

/// Unnormalized log-probabilities over rotation candidates for one cluster.
pub fn rotation_log_weights(state: &ModelState, ctx: &GibbsContext<'_>, cluster: usize, members: &[usize]) -> Vec<f64> {
    let c = &state.clusters[cluster];
    ctx.candidates
        .rotations
        .iter()
        .zip(&ctx.candidates.rotation_log_weights)
        .map(|(r, w)| w + velocity_fit(state, ctx, members, r, &c.translation, &c.spatial_mean))
        .collect()
}

pub fn translation_log_weights(state: &ModelState, ctx: &GibbsContext<'_>, cluster: usize, members: &[usize]) -> Vec<f64> {
    let c = &state.clusters[cluster];
    ctx.candidates
        .translations
        .iter()
        .zip(&ctx.candidates.translation_log_weights)
        .map(|(t, w)| w + velocity_fit(state, ctx, members, &c.rotation, t, &c.spatial_mean))
        .collect()
}

/// Resampled candidate index of each cluster's rotation.
pub fn update_cluster_rotation(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<usize>> {
    let members = state.cluster_members();
    map_components(state.clusters.len(), |k| {
        let lw = rotation_log_weights(state, ctx, k, &members[k]);
        distributions::categorical_sample(&lw, &mut streams.component(k))
    })
}

pub fn update_cluster_translation(state: &ModelState, ctx: &GibbsContext<'_>, streams: StepStreams) -> Result<Vec<usize>> {
    let members = state.cluster_members();
    map_components(state.clusters.len(), |k| {
        let lw = translation_log_weights(state, ctx, k, &members[k]);
        distributions::categorical_sample(&lw, &mut streams.component(k))
    })
}

/// Apply one blocked step in place. Frozen steps are skipped without consuming randomness.
pub fn apply_step(state: &mut ModelState, ctx: &GibbsContext<'_>, step: Step) -> Result<()> {
    let flags = ctx.flags;
    match step {
        Step::ParticleCovariances if flags.freeze_particle_covariances => return Ok(()),
        Step::ClusterAssignment if flags.freeze_cluster_assignments => return Ok(()),
        Step::ParticleFeatures if !flags.enable_features => return Ok(()),
        _ => {}
    }
    let streams = state.rng.advance();
    let s: &ModelState = state;
    match step {
        Step::PointAssignment | Step::PointAssignmentPositionOnly => {
            let z = assign_points_to_particles(s, ctx, streams, step == Step::PointAssignmentPositionOnly)?;
            state.assignments.point_to_particle = z;
        }
        Step::ParticleWeights => state.particle_weights = update_particle_weights(s, ctx, streams)?,
        Step::ParticleMeans => {
            let v = update_particle_means(s, ctx, streams)?;
            for (p, m) in state.particles.iter_mut().zip(v) {
                p.spatial_mean = m;
            }
        }
        Step::ParticleCovariances => {
            let v = update_particle_covariances(s, ctx, streams)?;
            for (p, m) in state.particles.iter_mut().zip(v) {
                p.spatial_cov = m;
            }
        }
        Step::ParticleVelocityMeans => {
            let v = update_particle_velocity_means(s, ctx, streams)?;
            for (p, m) in state.particles.iter_mut().zip(v) {
                p.velocity_mean = m;
            }
        }
        Step::ParticleVelocityCovariances => {
            let v = update_particle_velocity_covariances(s, ctx, streams)?;
            for (p, m) in state.particles.iter_mut().zip(v) {
                p.velocity_cov = m;
            }
        }
        Step::ParticleFeatures => {
            let v = update_particle_features(s, ctx, streams)?;
            for (p, m) in state.particles.iter_mut().zip(v) {
                p.feature_mean = Some(m);
            }
        }
        Step::ClusterAssignment => {
            state.assignments.particle_to_cluster = assign_particles_to_clusters(s, ctx, streams)?;
        }
        Step::ClusterWeights => state.cluster_weights = update_cluster_weights(s, ctx, streams)?,
        Step::ClusterMeans => {
            let v = update_cluster_means(s, ctx, streams)?;
            for (c, m) in state.clusters.iter_mut().zip(v) {
                c.spatial_mean = m;
            }
        }
        Step::ClusterCovariances => {
            let v = update_cluster_covariances(s, ctx, streams)?;
            for (c, m) in state.clusters.iter_mut().zip(v) {
                c.spatial_cov = m;
            }
        }
        Step::ClusterRotation => {
            let idx = update_cluster_rotation(s, ctx, streams)?;
            for (c, j) in state.clusters.iter_mut().zip(idx) {
                c.rotation = ctx.candidates.rotations[j].clone();
            }
        }
        Step::ClusterTranslation => {
            let idx = update_cluster_translation(s, ctx, streams)?;
            for (c, j) in state.clusters.iter_mut().zip(idx) {
                c.translation = ctx.candidates.translations[j].clone();
            }
        }
    }
    Ok(())
}

/// Run every scheduled step (with repeats) once, in order.
pub fn sweep(
    state: &ModelState,
    obs: &[PointObservation],
    hyper: &HyperParams,
    schedule: &SweepSchedule,
    candidates: &TransformCandidates,
) -> Result<ModelState> {
    schedule.validate()?;
    if state.assignments.point_to_particle.len() != obs.len() {
        return Err(Error::ShapeMismatch {
            context: "sweep observations",
            expected: state.assignments.point_to_particle.len(),
            found: obs.len(),
        });
    }
    let ctx = GibbsContext {
        obs,
        hyper,
        candidates,
        flags: schedule.flags,
    };
    let mut next = state.clone();
    for s in &schedule.steps {
        for _ in 0..s.repeat {
            apply_step(&mut next, &ctx, s.step)?;
        }
    }
    Ok(next)
}
