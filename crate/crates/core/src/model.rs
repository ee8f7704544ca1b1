//! Domain types, hyperparameters, the forward sampler and the exact log-joint.

use alloc::format;
use alloc::vec::Vec;

use crate::distributions::{self, TransformCandidates};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, GaussianFactor, Matrix, Vector};
use crate::math;
use crate::rng::{domain, stream, RngCursor};

/// Prior variance of particle feature means (features follow a zero-mean, unit-scale convention).
pub const FEATURE_PRIOR_VAR: f64 = 1.0;

/// Spatial dimension of a model instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn value(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    pub fn from_value(d: usize) -> Result<Self> {
        match d {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            _ => Err(invalid("dim", format!("must be 2 or 3, got {d}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointObservation {
    pub position: Vector,
    pub velocity: Vector,
    pub feature: Option<Vector>,
}

impl PointObservation {
    pub fn new(position: &[f64], velocity: &[f64]) -> Self {
        Self {
            position: Vector::from_column_slice(position),
            velocity: Vector::from_column_slice(velocity),
            feature: None,
        }
    }

    pub fn with_feature(mut self, feature: &[f64]) -> Self {
        self.feature = Some(Vector::from_column_slice(feature));
        self
    }
}

/// Check shapes, finiteness and feature consistency of one frame.
pub fn validate_observations(obs: &[PointObservation], dim: Dim) -> Result<()> {
    let d = dim.value();
    let feature_len = obs.first().and_then(|o| o.feature.as_ref().map(|f| f.len()));
    for (i, o) in obs.iter().enumerate() {
        if o.position.len() != d || o.velocity.len() != d {
            return Err(Error::ShapeMismatch {
                context: "observation",
                expected: d,
                found: if o.position.len() != d { o.position.len() } else { o.velocity.len() },
            });
        }
        if o.position.iter().chain(o.velocity.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("observation", format!("point {i} has a non-finite coordinate")));
        }
        match (&o.feature, feature_len) {
            (None, None) => {}
            (Some(f), Some(len)) if f.len() == len => {
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("observation", format!("point {i} has a non-finite feature")));
                }
            }
            _ => return Err(invalid("observation", format!("point {i} has inconsistent features"))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub spatial_mean: Vector,
    pub spatial_cov: Matrix,
    pub velocity_mean: Vector,
    pub velocity_cov: Matrix,
    pub feature_mean: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub spatial_mean: Vector,
    pub spatial_cov: Matrix,
    pub rotation: Matrix,
    pub translation: Vector,
}

/// `t + (R - I)(particle_mean - cluster_mean)`.
pub fn cluster_induced_velocity(cluster: &ClusterState, particle_mean: &Vector) -> Vector {
    let offset = particle_mean - &cluster.spatial_mean;
    &cluster.translation + &cluster.rotation * &offset - offset
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignments {
    /// Per point; the value `L` marks an outlier.
    pub point_to_particle: Vec<usize>,
    pub particle_to_cluster: Vec<usize>,
}

impl Assignments {
    pub fn outlier(&self) -> usize {
        self.particle_to_cluster.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Dirichlet concentration over clusters (length K).
    pub cluster_concentration: Vec<f64>,
    /// Dirichlet concentration over particles (length L).
    pub particle_concentration: Vec<f64>,
    pub cluster_mean_prior: Vector,
    pub cluster_mean_prior_var: f64,
    pub cluster_cov_scale: Matrix,
    pub cluster_cov_dof: f64,
    pub particle_cov_scale: Matrix,
    pub particle_cov_dof: f64,
    /// Isotropic variance of particle velocities around the cluster-induced velocity.
    pub velocity_var: f64,
    pub velocity_cov_scale: Matrix,
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

impl HyperParams {
    /// Generic priors for scenes measured in unit-ish scene coordinates.
    pub fn defaults(dim: Dim, k: usize, l: usize) -> Self {
        let d = dim.value();
        let eye = Matrix::identity(d, d);
        let dof = d as f64 + 2.0;
        Self {
            cluster_concentration: alloc::vec![1.0; k],
            particle_concentration: alloc::vec![1.0; l],
            cluster_mean_prior: Vector::zeros(d),
            cluster_mean_prior_var: 100.0,
            cluster_cov_scale: &eye * 4.0,
            cluster_cov_dof: dof,
            particle_cov_scale: &eye * 0.25,
            particle_cov_dof: dof,
            velocity_var: 0.01,
            velocity_cov_scale: &eye * 0.01,
            velocity_cov_dof: dof,
            translation_var: 1.0,
            rotation_concentration: 10.0,
            max_rotation_angle: core::f64::consts::PI / 8.0,
            feature_var: None,
            outlier_prob: 0.0,
            outlier_shape: 2.0,
            outlier_rate: 1.0,
            rotation_candidates: match dim {
                Dim::Two => 33,
                Dim::Three => 129,
            },
            translations_per_axis: 5,
        }
    }

    pub fn dim(&self) -> Result<Dim> {
        Dim::from_value(self.cluster_mean_prior.len())
    }

    /// Raise every degrees-of-freedom parameter to at least `D + 2`.
    pub fn floor_dof(&mut self) {
        let min = self.cluster_mean_prior.len() as f64 + 2.0;
        for nu in [&mut self.cluster_cov_dof, &mut self.particle_cov_dof, &mut self.velocity_cov_dof] {
            if *nu < min {
                *nu = min;
            }
        }
    }

    /// Check every field for a model with `k` clusters and `l` particles.
    pub fn validate(&self, k: usize, l: usize) -> Result<()> {
        let dim = self.dim()?;
        let d = dim.value();
        if k == 0 || l == 0 {
            return Err(invalid("K, L", "must be at least 1"));
        }
        if l < k {
            return Err(invalid("L", "must be at least K"));
        }
        if self.cluster_concentration.len() != k {
            return Err(invalid("alpha", format!("expected length {k}, got {}", self.cluster_concentration.len())));
        }
        if self.particle_concentration.len() != l {
            return Err(invalid("beta", format!("expected length {l}, got {}", self.particle_concentration.len())));
        }
        let positive = |name: &'static str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive and finite, got {v}")))
            }
        };
        for &a in &self.cluster_concentration {
            positive("alpha", a)?;
        }
        for &b in &self.particle_concentration {
            positive("beta", b)?;
        }
        if self.cluster_mean_prior.iter().any(|v| !v.is_finite()) {
            return Err(invalid("mu_h_prior", "must be finite"));
        }
        positive("sigma2_mu_h", self.cluster_mean_prior_var)?;
        positive("sigma2_v", self.velocity_var)?;
        positive("s2", self.translation_var)?;
        positive("outlier_gamma_shape", self.outlier_shape)?;
        positive("outlier_gamma_rate", self.outlier_rate)?;
        if let Some(f) = self.feature_var {
            positive("sigma2_f", f)?;
        }
        if !(self.rotation_concentration >= 0.0) || !self.rotation_concentration.is_finite() {
            return Err(invalid("kappa_vmf", "must be non-negative and finite"));
        }
        if !(self.max_rotation_angle > 0.0 && self.max_rotation_angle <= core::f64::consts::PI) {
            return Err(invalid("theta_max", "must lie in (0, pi]"));
        }
        if !(self.outlier_prob >= 0.0 && self.outlier_prob < 1.0) {
            return Err(invalid("p_outlier", "must lie in [0, 1)"));
        }
        if self.rotation_candidates == 0 {
            return Err(invalid("rotation_candidates", "must be at least 1"));
        }
        if self.translations_per_axis == 0 {
            return Err(invalid("translations_per_axis", "must be at least 1"));
        }
        for (name, psi, nu) in [
            ("psi_h", &self.cluster_cov_scale, self.cluster_cov_dof),
            ("psi_b", &self.particle_cov_scale, self.particle_cov_dof),
            ("psi_v", &self.velocity_cov_scale, self.velocity_cov_dof),
        ] {
            if psi.nrows() != d || psi.ncols() != d {
                return Err(invalid(name, format!("must be {d}x{d}")));
            }
            if !linalg::is_spd(psi) {
                return Err(invalid(name, "must be symmetric positive definite"));
            }
            if !(nu >= d as f64 + 2.0) || !nu.is_finite() {
                let field = match name {
                    "psi_h" => "nu_h",
                    "psi_b" => "nu_b",
                    _ => "nu_v",
                };
                return Err(invalid(field, format!("must be at least D + 2 = {}, got {nu}", d + 2)));
            }
        }
        Ok(())
    }

    pub fn candidates(&self) -> Result<TransformCandidates> {
        Ok(distributions::make_transform_candidates(
            self.dim()?,
            self,
            self.rotation_candidates,
            self.translations_per_axis,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dim: Dim,
    pub particles: Vec<ParticleState>,
    pub clusters: Vec<ClusterState>,
    pub assignments: Assignments,
    pub particle_weights: Vec<f64>,
    pub cluster_weights: Vec<f64>,
    pub rng: RngCursor,
}

impl ModelState {
    pub fn num_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Points assigned to each particle (outliers excluded).
    pub fn particle_members(&self) -> Vec<Vec<usize>> {
        let mut members = alloc::vec![Vec::new(); self.particles.len()];
        for (n, &l) in self.assignments.point_to_particle.iter().enumerate() {
            if l < members.len() {
                members[l].push(n);
            }
        }
        members
    }

    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let mut members = alloc::vec![Vec::new(); self.clusters.len()];
        for (l, &k) in self.assignments.particle_to_cluster.iter().enumerate() {
            members[k].push(l);
        }
        members
    }

    /// Cluster label of each point via its particle; outliers map to `None`.
    pub fn point_cluster_labels(&self) -> Vec<Option<usize>> {
        self.assignments
            .point_to_particle
            .iter()
            .map(|&l| self.assignments.particle_to_cluster.get(l).copied())
            .collect()
    }

    /// Check every structural invariant. `allow_outliers` permits the outlier sentinel.
    pub fn validate(&self, n_points: usize, allow_outliers: bool) -> Result<()> {
        let d = self.dim.value();
        let l = self.particles.len();
        let k = self.clusters.len();
        if k == 0 || l < k {
            return Err(invalid("state", format!("need L >= K >= 1, got L={l}, K={k}")));
        }
        if self.particle_weights.len() != l || self.cluster_weights.len() != k {
            return Err(invalid("state", "weight vector length mismatch"));
        }
        for (name, w) in [("pi_b", &self.particle_weights), ("pi_h", &self.cluster_weights)] {
            if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid(name, "entries must lie in [0, 1]"));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(invalid(name, format!("must sum to 1, got {s}")));
            }
        }
        for p in &self.particles {
            if p.spatial_mean.len() != d || p.velocity_mean.len() != d {
                return Err(invalid("particle", "mean dimension mismatch"));
            }
            if p.spatial_mean.iter().chain(p.velocity_mean.iter()).any(|v| !v.is_finite()) {
                return Err(invalid("particle", "non-finite mean"));
            }
            if !linalg::is_spd(&p.spatial_cov) || !linalg::is_spd(&p.velocity_cov) {
                return Err(Error::NotPositiveDefinite { context: "particle covariance" });
            }
        }
        for c in &self.clusters {
            if c.spatial_mean.len() != d || c.translation.len() != d {
                return Err(invalid("cluster", "dimension mismatch"));
            }
            if !linalg::is_spd(&c.spatial_cov) {
                return Err(Error::NotPositiveDefinite { context: "cluster covariance" });
            }
            if !linalg::is_rotation(&c.rotation, 1e-9) {
                return Err(invalid("rotation", "must be orthogonal with determinant +1"));
            }
        }
        let a = &self.assignments;
        if a.point_to_particle.len() != n_points || a.particle_to_cluster.len() != l {
            return Err(invalid("assignments", "length mismatch"));
        }
        for &z in &a.point_to_particle {
            if z > l || (z == l && !allow_outliers) {
                return Err(invalid("assignments", format!("point assignment {z} out of range")));
            }
        }
        if a.particle_to_cluster.iter().any(|&z| z >= k) {
            return Err(invalid("assignments", "cluster assignment out of range"));
        }
        Ok(())
    }
}

/// Draw latents and `n` observations from the generative model.
///
/// Rotations and translations are drawn from the same finite candidate sets
/// used during inference. Features and outliers are not generated.
pub fn sample_forward(
    hyper: &HyperParams,
    k: usize,
    l: usize,
    n: usize,
    seed: u64,
) -> Result<(ModelState, Vec<PointObservation>)> {
    if n == 0 {
        return Err(invalid("N", "must be at least 1"));
    }
    hyper.validate(k, l)?;
    let dim = hyper.dim()?;
    let candidates = hyper.candidates()?;
    let mut rng = stream(seed, domain::FORWARD, 0, 0);
    let d = dim.value();

    let cluster_weights = distributions::dirichlet_sample(&hyper.cluster_concentration, &mut rng)?;
    let particle_weights = distributions::dirichlet_sample(&hyper.particle_concentration, &mut rng)?;
    let prior_cov = Matrix::identity(d, d) * hyper.cluster_mean_prior_var;

    let mut clusters = Vec::with_capacity(k);
    for _ in 0..k {
        let spatial_cov = distributions::inverse_wishart_sample(&hyper.cluster_cov_scale, hyper.cluster_cov_dof, &mut rng)?;
        let spatial_mean = distributions::mvn_sample(&hyper.cluster_mean_prior, &prior_cov, &mut rng)?;
        let t = distributions::categorical_sample(&candidates.translation_log_weights, &mut rng)?;
        let r = distributions::categorical_sample(&candidates.rotation_log_weights, &mut rng)?;
        clusters.push(ClusterState {
            spatial_mean,
            spatial_cov,
            rotation: candidates.rotations[r].clone(),
            translation: candidates.translations[t].clone(),
        });
    }

    let log_pi_h: Vec<f64> = cluster_weights.iter().map(|w| math::ln(*w)).collect();
    let mut particles = Vec::with_capacity(l);
    let mut particle_to_cluster = Vec::with_capacity(l);
    for _ in 0..l {
        let z = distributions::categorical_sample(&log_pi_h, &mut rng)?;
        let c = &clusters[z];
        let spatial_cov = distributions::inverse_wishart_sample(&hyper.particle_cov_scale, hyper.particle_cov_dof, &mut rng)?;
        let spatial_mean = distributions::mvn_sample(&c.spatial_mean, &c.spatial_cov, &mut rng)?;
        let induced = cluster_induced_velocity(c, &spatial_mean);
        let velocity_mean = distributions::isotropic_sample(&induced, hyper.velocity_var, &mut rng);
        let velocity_cov = distributions::inverse_wishart_sample(&hyper.velocity_cov_scale, hyper.velocity_cov_dof, &mut rng)?;
        particle_to_cluster.push(z);
        particles.push(ParticleState {
            spatial_mean,
            spatial_cov,
            velocity_mean,
            velocity_cov,
            feature_mean: None,
        });
    }

    let log_pi_b: Vec<f64> = particle_weights.iter().map(|w| math::ln(*w)).collect();
    let mut obs = Vec::with_capacity(n);
    let mut point_to_particle = Vec::with_capacity(n);
    for _ in 0..n {
        let z = distributions::categorical_sample(&log_pi_b, &mut rng)?;
        let p = &particles[z];
        let position = distributions::mvn_sample(&p.spatial_mean, &p.spatial_cov, &mut rng)?;
        let velocity = distributions::mvn_sample(&p.velocity_mean, &p.velocity_cov, &mut rng)?;
        point_to_particle.push(z);
        obs.push(PointObservation {
            position,
            velocity,
            feature: None,
        });
    }

    let state = ModelState {
        dim,
        particles,
        clusters,
        assignments: Assignments {
            point_to_particle,
            particle_to_cluster,
        },
        particle_weights,
        cluster_weights,
        rng: RngCursor::new(seed),
    };
    Ok((state, obs))
}

/// Exact log-joint density of a state and its observations.
pub fn log_joint(state: &ModelState, obs: &[PointObservation], hyper: &HyperParams) -> Result<f64> {
    let candidates = hyper.candidates()?;
    log_joint_with(state, obs, hyper, &candidates)
}

/// [`log_joint`] with a prebuilt candidate set.
pub fn log_joint_with(
    state: &ModelState,
    obs: &[PointObservation],
    hyper: &HyperParams,
    candidates: &TransformCandidates,
) -> Result<f64> {
    let a = &state.assignments;
    if a.point_to_particle.len() != obs.len() {
        return Err(Error::ShapeMismatch {
            context: "log_joint observations",
            expected: a.point_to_particle.len(),
            found: obs.len(),
        });
    }
    let mut lp = distributions::dirichlet_logpdf(&state.cluster_weights, &hyper.cluster_concentration)
        + distributions::dirichlet_logpdf(&state.particle_weights, &hyper.particle_concentration);

    for c in &state.clusters {
        lp += distributions::inverse_wishart_logpdf(&c.spatial_cov, &hyper.cluster_cov_scale, hyper.cluster_cov_dof)?;
        lp += linalg::isotropic_log_pdf(
            c.spatial_mean.as_slice(),
            hyper.cluster_mean_prior.as_slice(),
            hyper.cluster_mean_prior_var,
        );
        lp += candidates.translation_log_prior(&c.translation);
        lp += candidates.rotation_log_prior(&c.rotation);
    }

    let cluster_factors = state
        .clusters
        .iter()
        .map(|c| GaussianFactor::new(&c.spatial_mean, &c.spatial_cov, "log_joint cluster covariance"))
        .collect::<Result<Vec<_>>>()?;
    let mut spatial_factors = Vec::with_capacity(state.particles.len());
    let mut velocity_factors = Vec::with_capacity(state.particles.len());
    for (p, &z) in state.particles.iter().zip(&a.particle_to_cluster) {
        let c = &state.clusters[z];
        lp += math::ln(state.cluster_weights[z]);
        lp += distributions::inverse_wishart_logpdf(&p.spatial_cov, &hyper.particle_cov_scale, hyper.particle_cov_dof)?;
        lp += cluster_factors[z].log_pdf(p.spatial_mean.as_slice());
        let induced = cluster_induced_velocity(c, &p.spatial_mean);
        lp += linalg::isotropic_log_pdf(p.velocity_mean.as_slice(), induced.as_slice(), hyper.velocity_var);
        lp += distributions::inverse_wishart_logpdf(&p.velocity_cov, &hyper.velocity_cov_scale, hyper.velocity_cov_dof)?;
        if let (Some(_), Some(fm)) = (hyper.feature_var, &p.feature_mean) {
            let zero = Vector::zeros(fm.len());
            lp += linalg::isotropic_log_pdf(fm.as_slice(), zero.as_slice(), FEATURE_PRIOR_VAR);
        }
        spatial_factors.push(GaussianFactor::new(&p.spatial_mean, &p.spatial_cov, "log_joint particle covariance")?);
        velocity_factors.push(GaussianFactor::new(&p.velocity_mean, &p.velocity_cov, "log_joint velocity covariance")?);
    }

    let outliers = hyper.outlier_prob > 0.0;
    let inlier_log = math::ln(1.0 - hyper.outlier_prob);
    let outlier_log = math::ln(hyper.outlier_prob);
    for (o, &z) in obs.iter().zip(&a.point_to_particle) {
        if z == a.outlier() {
            if !outliers {
                return Ok(f64::NEG_INFINITY);
            }
            lp += outlier_log + distributions::gamma_logpdf(o.velocity.norm(), hyper.outlier_shape, hyper.outlier_rate);
            continue;
        }
        if outliers {
            lp += inlier_log;
        }
        lp += math::ln(state.particle_weights[z]);
        lp += spatial_factors[z].log_pdf(o.position.as_slice());
        lp += velocity_factors[z].log_pdf(o.velocity.as_slice());
        if let (Some(var), Some(f), Some(fm)) = (hyper.feature_var, &o.feature, &state.particles[z].feature_mean) {
            lp += linalg::isotropic_log_pdf(f.as_slice(), fm.as_slice(), var);
        }
    }
    Ok(lp)
}
