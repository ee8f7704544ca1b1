//! Hard-assignment small-variance baseline: centroids, per-cluster Procrustes
//! fits, and loss-minimizing reassignment of points and particles.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::init::{kabsch_align, kmeans_pp, DEFAULT_KMEANS_ITERS};
use crate::linalg::{self, Matrix, Vector};
use crate::model::PointObservation;

#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix,
    pub translation: Vector,
}

impl RigidTransform {
    pub fn identity(d: usize) -> Self {
        Self {
            rotation: Matrix::identity(d, d),
            translation: Vector::zeros(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvaResult {
    pub point_to_particle: Vec<usize>,
    pub particle_to_cluster: Vec<usize>,
    pub transforms: Vec<RigidTransform>,
    pub particle_means: Vec<Vector>,
    pub cluster_means: Vec<Vector>,
    /// Loss after each iteration.
    pub losses: Vec<f64>,
}

/// Squared residual of one point under a cluster's rigid prediction.
pub fn point_loss(o: &PointObservation, transform: &RigidTransform, cluster_mean: &Vector) -> f64 {
    let d = o.position.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut pred = cluster_mean[i] + transform.translation[i];
        for j in 0..d {
            pred += transform.rotation[(i, j)] * (o.position[j] - cluster_mean[j]);
        }
        let r = o.position[i] + o.velocity[i] - pred;
        acc += r * r;
    }
    acc
}

/// Total rigid-prediction loss; outlier or out-of-range assignments are rejected.
pub fn sva_loss(
    point_to_particle: &[usize],
    particle_to_cluster: &[usize],
    transforms: &[RigidTransform],
    cluster_means: &[Vector],
    obs: &[PointObservation],
) -> Result<f64> {
    if point_to_particle.len() != obs.len() {
        return Err(Error::ShapeMismatch {
            context: "sva_loss",
            expected: obs.len(),
            found: point_to_particle.len(),
        });
    }
    let mut total = 0.0;
    for (o, &l) in obs.iter().zip(point_to_particle) {
        let k = *particle_to_cluster
            .get(l)
            .ok_or_else(|| invalid("point_to_particle", "index out of range"))?;
        let (t, m) = transforms
            .get(k)
            .zip(cluster_means.get(k))
            .ok_or_else(|| invalid("particle_to_cluster", "index out of range"))?;
        total += point_loss(o, t, m);
    }
    Ok(total)
}

fn argmin_keep(values: &[f64], current: usize) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    if current < values.len() && values[current] <= values[best] {
        current
    } else {
        best
    }
}

/// Alternating minimization of the rigid-prediction loss.
///
/// Per iteration: particle centroids, cluster centroids, reseeding of empty
/// clusters, Procrustes fits, particle-to-cluster reassignment (each particle
/// takes the cluster minimizing its members' summed loss), then point
/// reassignment (each point takes its lowest-loss cluster and the nearest
/// particle inside it). Each block minimizes the loss exactly, so the
/// recorded losses never increase. Ties keep the current choice, otherwise
/// the lowest index.
pub fn sva_cluster(obs: &[PointObservation], k: usize, l: usize, seed: u64, max_iter: usize) -> Result<SvaResult> {
    if k == 0 || l < k {
        return Err(invalid("K, L", "need L >= K >= 1"));
    }
    if obs.len() < l {
        return Err(Error::TooFewPoints {
            needed: l,
            found: obs.len(),
        });
    }
    let d = obs[0].position.len();
    let positions: Vec<Vector> = obs.iter().map(|o| o.position.clone()).collect();
    let particle_km = kmeans_pp(&positions, l, seed, DEFAULT_KMEANS_ITERS)?;
    let cluster_km = kmeans_pp(&particle_km.centers, k, seed ^ 0x5bd1_e995, DEFAULT_KMEANS_ITERS)?;
    let mut z_b = particle_km.labels;
    let mut z_h = cluster_km.labels;
    let mut particle_means = particle_km.centers;
    let mut cluster_means = cluster_km.centers;
    let mut transforms = vec![RigidTransform::identity(d); k];
    let mut losses = Vec::new();

    for _ in 0..max_iter.max(1) {
        // particle centroids; an empty particle keeps its previous mean
        let mut sums = vec![Vector::zeros(d); l];
        let mut counts = vec![0usize; l];
        for (o, &j) in obs.iter().zip(&z_b) {
            sums[j] += &o.position;
            counts[j] += 1;
        }
        for j in 0..l {
            if counts[j] > 0 {
                particle_means[j] = &sums[j] / counts[j] as f64;
            }
        }

        reseed_empty_clusters(obs, &z_b, &mut z_h, &counts, &transforms, &cluster_means, k);

        let mut cluster_points = vec![Vec::new(); k];
        for (n, &j) in z_b.iter().enumerate() {
            cluster_points[z_h[j]].push(n);
        }
        for c in 0..k {
            let members: Vec<&Vector> = (0..l).filter(|&j| z_h[j] == c).map(|j| &particle_means[j]).collect();
            if let Some(m) = linalg::mean_of(d, members.iter().copied()) {
                cluster_means[c] = m;
            }
            if cluster_points[c].is_empty() {
                continue;
            }
            let p: Vec<Vector> = cluster_points[c].iter().map(|&n| &obs[n].position - &cluster_means[c]).collect();
            let q: Vec<Vector> = cluster_points[c]
                .iter()
                .map(|&n| &obs[n].position + &obs[n].velocity - &cluster_means[c])
                .collect();
            let (rotation, translation) = kabsch_align(&p, &q)?;
            transforms[c] = RigidTransform { rotation, translation };
        }

        // per-point loss under every cluster
        let point_losses: Vec<Vec<f64>> = obs
            .iter()
            .map(|o| (0..k).map(|c| point_loss(o, &transforms[c], &cluster_means[c])).collect())
            .collect();

        let mut member_loss = vec![vec![0.0; k]; l];
        for (n, &j) in z_b.iter().enumerate() {
            for c in 0..k {
                member_loss[j][c] += point_losses[n][c];
            }
        }
        let new_z_h: Vec<usize> = (0..l).map(|j| argmin_keep(&member_loss[j], z_h[j])).collect();

        let mut particles_of = vec![Vec::new(); k];
        for (j, &c) in new_z_h.iter().enumerate() {
            particles_of[c].push(j);
        }
        let mut new_z_b = z_b.clone();
        for (n, o) in obs.iter().enumerate() {
            let reachable: Vec<f64> = (0..k)
                .map(|c| if particles_of[c].is_empty() { f64::INFINITY } else { point_losses[n][c] })
                .collect();
            let c = argmin_keep(&reachable, new_z_h[z_b[n]]);
            let current = z_b[n];
            let mut best = (usize::MAX, f64::INFINITY);
            for &j in &particles_of[c] {
                let dist = linalg::squared_distance(o.position.as_slice(), particle_means[j].as_slice());
                if dist < best.1 || (dist == best.1 && j == current) {
                    best = (j, dist);
                }
            }
            new_z_b[n] = best.0;
        }

        let converged = new_z_b == z_b && new_z_h == z_h;
        z_b = new_z_b;
        z_h = new_z_h;
        losses.push(sva_loss(&z_b, &z_h, &transforms, &cluster_means, obs)?);
        if converged {
            break;
        }
    }

    Ok(SvaResult {
        point_to_particle: z_b,
        particle_to_cluster: z_h,
        transforms,
        particle_means,
        cluster_means,
        losses,
    })
}

/// Move the worst-fitting non-empty particle into each cluster left without particles.
fn reseed_empty_clusters(
    obs: &[PointObservation],
    z_b: &[usize],
    z_h: &mut [usize],
    counts: &[usize],
    transforms: &[RigidTransform],
    cluster_means: &[Vector],
    k: usize,
) {
    for c in 0..k {
        if z_h.iter().any(|&x| x == c) {
            continue;
        }
        let mut particle_loss = vec![0.0; z_h.len()];
        for (o, &j) in obs.iter().zip(z_b) {
            particle_loss[j] += point_loss(o, &transforms[z_h[j]], &cluster_means[z_h[j]]);
        }
        let mut sizes = vec![0usize; k];
        for &x in z_h.iter() {
            sizes[x] += 1;
        }
        let mut pick: Option<usize> = None;
        for j in 0..z_h.len() {
            if counts[j] == 0 || sizes[z_h[j]] < 2 {
                continue;
            }
            if pick.is_none_or(|p| particle_loss[j] > particle_loss[p]) {
                pick = Some(j);
            }
        }
        if let Some(j) = pick {
            z_h[j] = c;
        }
    }
}
