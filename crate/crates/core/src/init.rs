//! Chain initialization: K-means++ on positions, a second K-means over
//! particle centers, empirical moments, Kabsch alignment per cluster, and
//! hyperparameters derived from the initialized state.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::math;
use crate::model::{validate_observations, Assignments, ClusterState, HyperParams, ModelState, ParticleState, PointObservation};
use crate::rng::{domain, mix, stream, RngCursor};

pub const DEFAULT_KMEANS_ITERS: usize = 100;
/// Independent K-means++ runs for the particle-level grouping into clusters.
pub const DEFAULT_CLUSTER_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Vector>,
    pub labels: Vec<usize>,
    /// Objective after each assignment pass.
    pub objective_history: Vec<f64>,
}

fn lexicographic(a: &Vector, b: &Vector) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

pub fn count_distinct(points: &[Vector]) -> usize {
    let mut sorted: Vec<&Vector> = points.iter().collect();
    sorted.sort_by(|a, b| lexicographic(a, b));
    sorted.dedup_by(|a, b| a == b);
    sorted.len()
}

fn nearest(point: &Vector, centers: &[Vector]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = linalg::squared_distance(point.as_slice(), c.as_slice());
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// K-means with K-means++ seeding and Lloyd iterations. Ties go to the lowest
/// center index; an empty center keeps its previous location.
pub fn kmeans_pp(points: &[Vector], k: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    if k == 0 {
        return Err(invalid("K", "must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            found: points.len(),
        });
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(Error::TooFewPoints { needed: k, found: distinct });
    }
    let mut rng = stream(seed, domain::INIT, 0, k as u64);
    let n = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| linalg::squared_distance(p.as_slice(), centers[0].as_slice()))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                pick = Some(i);
                if u < acc {
                    break;
                }
            }
        }
        let c = points[pick.expect("a point at positive distance exists while distinct >= k")].clone();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(linalg::squared_distance(p.as_slice(), c.as_slice()));
        }
        centers.push(c);
    }

    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    let mut objective_history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centers);
            objective += d;
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        objective_history.push(objective);
        if !changed {
            break;
        }
        let mut sums = vec![Vector::zeros(dim); k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&labels) {
            sums[j] += p;
            counts[j] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = &sums[j] / counts[j] as f64;
            }
        }
    }
    Ok(KMeans {
        centers,
        labels,
        objective_history,
    })
}

/// Best of `restarts` K-means++ runs by final objective; ties keep the
/// earliest run. Run 0 uses `seed` itself, so one restart equals [`kmeans_pp`].
pub fn kmeans_pp_restarts(points: &[Vector], k: usize, seed: u64, max_iter: usize, restarts: usize) -> Result<KMeans> {
    let mut best = kmeans_pp(points, k, seed, max_iter)?;
    for r in 1..restarts as u64 {
        let km = kmeans_pp(points, k, mix(&[seed, r]), max_iter)?;
        if km.objective_history.last() < best.objective_history.last() {
            best = km;
        }
    }
    Ok(best)
}

/// Least-squares rigid alignment `dst ≈ R src + t`.
///
/// When the centered cross-covariance has rank below `D - 1` the rotation is
/// not identifiable; the identity is returned with the translation of means.
pub fn kabsch_align(src: &[Vector], dst: &[Vector]) -> Result<(Matrix, Vector)> {
    if src.is_empty() {
        return Err(Error::Empty("kabsch source points"));
    }
    if src.len() != dst.len() {
        return Err(Error::ShapeMismatch {
            context: "kabsch_align",
            expected: src.len(),
            found: dst.len(),
        });
    }
    let d = src[0].len();
    let src_mean = linalg::mean_of(d, src).expect("non-empty");
    let dst_mean = linalg::mean_of(d, dst).expect("non-empty");
    let mut h = Matrix::zeros(d, d);
    for (s, t) in src.iter().zip(dst) {
        h += (s - &src_mean) * (t - &dst_mean).transpose();
    }
    let svd = h.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = 1e-12 * s_max.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol && s_max > 1e-300).count();
    if rank + 1 < d {
        return Ok((Matrix::identity(d, d), dst_mean - src_mean));
    }
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").transpose();
    let mut correction = Matrix::identity(d, d);
    if (&v * u.transpose()).determinant() < 0.0 {
        correction[(d - 1, d - 1)] = -1.0;
    }
    let r = &v * correction * u.transpose();
    let t = dst_mean - &r * src_mean;
    Ok((r, t))
}

fn prior_mean_cov(scale: &Matrix, dof: f64) -> Matrix {
    let d = scale.nrows() as f64;
    scale / (dof - d - 1.0)
}

/// Sample covariance, or `fallback` when it is singular or nearly so: fewer
/// than D + 1 members, or a smallest eigenvalue below 1e-6 of the fallback's
/// mean variance.
fn empirical_cov(items: &[&Vector], mean: &Vector, fallback: &Matrix) -> Matrix {
    let d = mean.len();
    let floor = 1e-6 * fallback.trace() / d as f64;
    match linalg::sample_covariance(items, mean) {
        Some(c) if items.len() > d && linalg::is_spd(&c) => {
            let c = linalg::symmetrize(&c);
            if c.symmetric_eigenvalues().min() >= floor {
                c
            } else {
                fallback.clone()
            }
        }
        _ => fallback.clone(),
    }
}

/// Initial state for the first frame.
pub fn init_state(obs: &[PointObservation], k: usize, l: usize, hyper: &HyperParams, seed: u64) -> Result<ModelState> {
    let dim = hyper.dim()?;
    hyper.validate(k, l)?;
    validate_observations(obs, dim)?;
    if obs.len() < l {
        return Err(Error::TooFewPoints {
            needed: l,
            found: obs.len(),
        });
    }
    let d = dim.value();
    let n = obs.len();
    let positions: Vec<Vector> = obs.iter().map(|o| o.position.clone()).collect();
    let particle_km = kmeans_pp(&positions, l, seed, DEFAULT_KMEANS_ITERS)?;
    let cluster_km = kmeans_pp_restarts(
        &particle_km.centers,
        k,
        seed ^ 0x5bd1_e995,
        DEFAULT_KMEANS_ITERS,
        DEFAULT_CLUSTER_RESTARTS,
    )?;

    let mut members = vec![Vec::new(); l];
    for (i, &j) in particle_km.labels.iter().enumerate() {
        members[j].push(i);
    }
    let spatial_fallback = prior_mean_cov(&hyper.particle_cov_scale, hyper.particle_cov_dof);
    let velocity_fallback = prior_mean_cov(&hyper.velocity_cov_scale, hyper.velocity_cov_dof);
    let has_features = obs[0].feature.is_some();

    let mut particles = Vec::with_capacity(l);
    for (j, m) in members.iter().enumerate() {
        let pos: Vec<&Vector> = m.iter().map(|&i| &obs[i].position).collect();
        let vel: Vec<&Vector> = m.iter().map(|&i| &obs[i].velocity).collect();
        let spatial_mean = linalg::mean_of(d, pos.iter().copied()).unwrap_or_else(|| particle_km.centers[j].clone());
        let velocity_mean = linalg::mean_of(d, vel.iter().copied()).unwrap_or_else(|| Vector::zeros(d));
        let feature_mean = if has_features {
            let f_dim = obs[0].feature.as_ref().map_or(0, |f| f.len());
            let feats = m.iter().filter_map(|&i| obs[i].feature.as_ref());
            Some(linalg::mean_of(f_dim, feats).unwrap_or_else(|| Vector::zeros(f_dim)))
        } else {
            None
        };
        particles.push(ParticleState {
            spatial_cov: empirical_cov(&pos, &spatial_mean, &spatial_fallback),
            velocity_cov: empirical_cov(&vel, &velocity_mean, &velocity_fallback),
            spatial_mean,
            velocity_mean,
            feature_mean,
        });
    }

    let (clusters, cluster_weights) = build_clusters(obs, &particles, &members, &cluster_km.labels, k, hyper, &cluster_km.centers)?;

    let particle_weights = members.iter().map(|m| m.len() as f64 / n as f64).collect();
    Ok(ModelState {
        dim,
        particles,
        clusters,
        assignments: Assignments {
            point_to_particle: particle_km.labels,
            particle_to_cluster: cluster_km.labels,
        },
        particle_weights,
        cluster_weights,
        rng: RngCursor::new(seed),
    })
}

fn build_clusters(
    obs: &[PointObservation],
    particles: &[ParticleState],
    members: &[Vec<usize>],
    labels: &[usize],
    k: usize,
    hyper: &HyperParams,
    centers: &[Vector],
) -> Result<(Vec<ClusterState>, Vec<f64>)> {
    let d = hyper.cluster_mean_prior.len();
    let l = particles.len();
    let mut cluster_members = vec![Vec::new(); k];
    for (j, &c) in labels.iter().enumerate() {
        cluster_members[c].push(j);
    }
    let cluster_fallback = prior_mean_cov(&hyper.cluster_cov_scale, hyper.cluster_cov_dof);
    let mut clusters = Vec::with_capacity(k);
    for (c, m) in cluster_members.iter().enumerate() {
        let means: Vec<&Vector> = m.iter().map(|&j| &particles[j].spatial_mean).collect();
        let spatial_mean = linalg::mean_of(d, means.iter().copied()).unwrap_or_else(|| centers[c].clone());
        let spatial_cov = empirical_cov(&means, &spatial_mean, &cluster_fallback);
        let (rotation, translation) = if m.iter().all(|&j| members[j].is_empty()) {
            (Matrix::identity(d, d), Vector::zeros(d))
        } else {
            let points: Vec<usize> = m.iter().flat_map(|&j| members[j].iter().copied()).collect();
            let src: Vec<Vector> = points.iter().map(|&i| obs[i].position.clone()).collect();
            let dst: Vec<Vector> = points.iter().map(|&i| &obs[i].position + &obs[i].velocity).collect();
            let (r, t) = kabsch_align(&src, &dst)?;
            // Kabsch gives dst = R src + t; the model measures rotation about the cluster mean.
            let t_centered = t + (&r - Matrix::identity(d, d)) * &spatial_mean;
            (r, t_centered)
        };
        clusters.push(ClusterState {
            spatial_mean,
            spatial_cov,
            rotation,
            translation,
        });
    }
    let weights = cluster_members.iter().map(|m| m.len() as f64 / l as f64).collect();
    Ok((clusters, weights))
}

/// Initial state whose particle-to-cluster labels follow a coarse per-point
/// proposal (each particle takes the majority label of its points) instead of
/// the second K-means pass. Empty proposal clusters start at the prior mean.
pub fn init_state_with_proposal(
    obs: &[PointObservation],
    k: usize,
    l: usize,
    hyper: &HyperParams,
    seed: u64,
    proposal: &[usize],
) -> Result<ModelState> {
    if proposal.len() != obs.len() {
        return Err(Error::ShapeMismatch {
            context: "proposal",
            expected: obs.len(),
            found: proposal.len(),
        });
    }
    if proposal.iter().any(|&c| c >= k) {
        return Err(invalid("proposal", "labels must be below K"));
    }
    let mut state = init_state(obs, k, l, hyper, seed)?;
    let mut members = vec![Vec::new(); l];
    let mut votes = vec![vec![0usize; k]; l];
    for (i, &j) in state.assignments.point_to_particle.iter().enumerate() {
        members[j].push(i);
        votes[j][proposal[i]] += 1;
    }
    let labels: Vec<usize> = votes
        .iter()
        .map(|v| (0..k).fold(0, |best, c| if v[c] > v[best] { c } else { best }))
        .collect();
    let centers = vec![hyper.cluster_mean_prior.clone(); k];
    let (clusters, weights) = build_clusters(obs, &state.particles, &members, &labels, k, hyper, &centers)?;
    state.clusters = clusters;
    state.cluster_weights = weights;
    state.assignments.particle_to_cluster = labels;
    Ok(state)
}

fn median_trace_scale<'a, I: IntoIterator<Item = &'a Matrix>>(covs: I) -> Option<f64> {
    let scales: Vec<f64> = covs.into_iter().map(|c| c.trace() / c.nrows() as f64).collect();
    (!scales.is_empty()).then(|| math::median(&scales))
}

/// Replace location, scale and degrees-of-freedom priors with statistics of
/// the observations and the initialized state.
///
/// Each scale matrix is set to `s (ν - D - 1) I`, where `s` is the median of
/// `trace(Σ)/D` over the matching initialized covariances, so that the prior
/// mean covariance equals `s I`.
pub fn data_dependent_hyperparams(obs: &[PointObservation], state: &ModelState, base: &HyperParams) -> Result<HyperParams> {
    if obs.is_empty() {
        return Err(Error::Empty("observations"));
    }
    let d = state.dim.value();
    let n = obs.len() as f64;
    let mut h = base.clone();
    for axis in 0..d {
        let coords: Vec<f64> = obs.iter().map(|o| o.position[axis]).collect();
        h.cluster_mean_prior[axis] = math::median(&coords);
    }
    let floor_dof = |w: &[f64]| {
        let scaled: Vec<f64> = w.iter().map(|x| x * n).collect();
        math::floor(math::median(&scaled)).max(d as f64 + 2.0)
    };
    h.particle_cov_dof = floor_dof(&state.particle_weights);
    h.cluster_cov_dof = floor_dof(&state.cluster_weights);
    h.velocity_cov_dof = floor_dof(&state.particle_weights);

    let eye = Matrix::identity(d, d);
    let set_scale = |scale: Option<f64>, dof: f64, current: &Matrix| -> Matrix {
        match scale {
            Some(s) if s.is_finite() && s > 0.0 => &eye * (s.max(1e-12) * (dof - d as f64 - 1.0)),
            _ => current.clone(),
        }
    };
    h.particle_cov_scale = set_scale(
        median_trace_scale(state.particles.iter().map(|p| &p.spatial_cov)),
        h.particle_cov_dof,
        &base.particle_cov_scale,
    );
    h.cluster_cov_scale = set_scale(
        median_trace_scale(state.clusters.iter().map(|c| &c.spatial_cov)),
        h.cluster_cov_dof,
        &base.cluster_cov_scale,
    );
    h.velocity_cov_scale = set_scale(
        median_trace_scale(state.particles.iter().map(|p| &p.velocity_cov)),
        h.velocity_cov_dof,
        &base.velocity_cov_scale,
    );
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dim;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn velocity_blobs() -> Vec<PointObservation> {
        (0..40)
            .map(|i| {
                let right = i >= 20;
                let x = if right { 10.0 } else { 0.0 } + (i % 5) as f64 * 0.1;
                PointObservation {
                    position: v(&[x, (i % 4) as f64 * 0.1]),
                    velocity: if right { v(&[0.5, 0.0]) } else { v(&[0.0, 0.0]) },
                    feature: None,
                }
            })
            .collect()
    }

    #[test]
    fn proposal_sets_cluster_labels_by_majority() {
        let obs = velocity_blobs();
        let h = HyperParams::defaults(Dim::Two, 2, 4);
        let proposal: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let s = init_state_with_proposal(&obs, 2, 4, &h, 3, &proposal).unwrap();
        s.validate(obs.len(), false).unwrap();
        for (i, &p) in s.assignments.point_to_particle.iter().enumerate() {
            assert_eq!(s.assignments.particle_to_cluster[p], proposal[i]);
        }
        assert!((s.clusters[1].translation[0] - 0.5).abs() < 1e-9);
        assert!(s.clusters[0].translation.norm() < 1e-9);
    }

    #[test]
    fn proposal_leaves_empty_cluster_at_prior_mean() {
        let obs = velocity_blobs();
        let h = HyperParams::defaults(Dim::Two, 2, 4);
        let s = init_state_with_proposal(&obs, 2, 4, &h, 3, &[0; 40]).unwrap();
        assert_eq!(s.cluster_weights, vec![1.0, 0.0]);
        assert_eq!(s.clusters[1].spatial_mean, h.cluster_mean_prior);
        assert!(init_state_with_proposal(&obs, 2, 4, &h, 3, &[0; 39]).is_err());
        assert!(init_state_with_proposal(&obs, 2, 4, &h, 3, &[2; 40]).is_err());
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 5.0])];
        let km = kmeans_pp(&pts, 3, 0, 50).unwrap();
        assert_eq!(*km.objective_history.last().unwrap(), 0.0);
        let mut l = km.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn kmeans_rejects_too_few_distinct() {
        let pts = vec![v(&[1.0, 1.0]); 5];
        assert_eq!(
            kmeans_pp(&pts, 2, 0, 10).unwrap_err(),
            Error::TooFewPoints { needed: 2, found: 1 }
        );
    }

    #[test]
    fn kmeans_with_duplicates_seeds_distinct_centers() {
        let mut pts = vec![v(&[0.0, 0.0]); 20];
        pts.push(v(&[3.0, 0.0]));
        pts.push(v(&[0.0, 3.0]));
        for seed in 0..20 {
            let km = kmeans_pp(&pts, 3, seed, 10).unwrap();
            assert_eq!(count_distinct(&km.centers), 3);
            assert_eq!(*km.objective_history.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn kabsch_identity_and_translation() {
        let src = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 2.0])];
        let (r, t) = kabsch_align(&src, &src).unwrap();
        assert!((r - Matrix::identity(2, 2)).amax() < 1e-12);
        assert!(t.amax() < 1e-12);
        let c = v(&[3.0, -1.0]);
        let dst: Vec<Vector> = src.iter().map(|p| p + &c).collect();
        let (r, t) = kabsch_align(&src, &dst).unwrap();
        assert!((r - Matrix::identity(2, 2)).amax() < 1e-12);
        assert!((t - c).amax() < 1e-12);
    }

    #[test]
    fn kabsch_degenerate_falls_back() {
        let src = vec![v(&[1.0, 1.0, 1.0]); 3];
        let dst = vec![v(&[2.0, 1.0, 1.0]); 3];
        let (r, t) = kabsch_align(&src, &dst).unwrap();
        assert_eq!(r, Matrix::identity(3, 3));
        assert!((t - v(&[1.0, 0.0, 0.0])).amax() < 1e-12);
        assert!(kabsch_align(&[], &[]).is_err());
    }

    #[test]
    fn kabsch_reflection_is_corrected() {
        // dst is a mirror image; the best proper rotation must still have det +1.
        let src = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, -0.5])];
        let dst: Vec<Vector> = src.iter().map(|p| v(&[p[0], -p[1]])).collect();
        let (r, _) = kabsch_align(&src, &dst).unwrap();
        assert!(linalg::is_rotation(&r, 1e-12));
    }

    #[test]
    fn init_uniform_velocity_and_weights() {
        let mut obs = Vec::new();
        for i in 0..40 {
            let x = (i % 8) as f64;
            let y = (i / 8) as f64 + if i % 2 == 0 { 0.1 } else { 0.0 };
            obs.push(PointObservation::new(&[x, y], &[0.5, -0.25]));
        }
        let h = HyperParams::defaults(Dim::Two, 2, 5);
        let s = init_state(&obs, 2, 5, &h, 11).unwrap();
        s.validate(obs.len(), false).unwrap();
        for p in &s.particles {
            assert!((&p.velocity_mean - v(&[0.5, -0.25])).amax() < 1e-12);
        }
        let members = s.particle_members();
        for (w, m) in s.particle_weights.iter().zip(&members) {
            assert_eq!(*w, m.len() as f64 / 40.0);
        }
        // pure translation: every cluster transform reproduces the common velocity
        for (j, p) in s.particles.iter().enumerate() {
            let c = &s.clusters[s.assignments.particle_to_cluster[j]];
            let induced = crate::model::cluster_induced_velocity(c, &p.spatial_mean);
            assert!((induced - v(&[0.5, -0.25])).amax() < 1e-9);
        }
    }

    #[test]
    fn init_rotation_translation_convention() {
        // Particles rotating rigidly about a point away from the origin.
        let center = v(&[10.0, -4.0]);
        let r = linalg::rotation_2d(0.05);
        let mut obs = Vec::new();
        for i in 0..60 {
            let a = i as f64 * 0.7;
            let rad = 1.0 + (i % 5) as f64;
            let p = &center + v(&[rad * a.cos(), rad * a.sin()]);
            let moved = &r * (&p - &center) + &center + v(&[0.2, 0.1]);
            obs.push(PointObservation::new(p.as_slice(), (moved - &p).as_slice()));
        }
        let h = HyperParams::defaults(Dim::Two, 1, 12);
        let s = init_state(&obs, 1, 12, &h, 5).unwrap();
        for p in &s.particles {
            let induced = crate::model::cluster_induced_velocity(&s.clusters[0], &p.spatial_mean);
            assert!((induced - &p.velocity_mean).amax() < 1e-9);
        }
        assert!((linalg::rotation_angle(&s.clusters[0].rotation) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn data_dependent_examples() {
        let mut obs = Vec::new();
        for i in 0..30 {
            let x = (i as f64) - 14.5;
            obs.push(PointObservation::new(&[x, -x], &[0.0, 0.0]));
        }
        let h = HyperParams::defaults(Dim::Two, 1, 3);
        let mut s = init_state(&obs, 1, 3, &h, 0).unwrap();
        s.particle_weights = vec![1.0 / 3.0; 3];
        let cov = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 4.0]);
        for p in &mut s.particles {
            p.spatial_cov = cov.clone();
        }
        let dd = data_dependent_hyperparams(&obs, &s, &h).unwrap();
        assert!(dd.cluster_mean_prior.amax() < 1e-12);
        assert_eq!(dd.particle_cov_dof, 10.0);
        let implied = &dd.particle_cov_scale / (dd.particle_cov_dof - 3.0);
        assert!((implied[(0, 0)] - 3.0).abs() < 1e-12);
        dd.validate(1, 3).unwrap();
    }
}
