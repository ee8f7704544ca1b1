//! Synthetic rigid-body dot scenes (random dot kinematograms) and the
//! nearest-particle same-object decision policy.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{ModelState, PointObservation};
use crate::rng::{domain, stream, Rng};

/// Ground-truth label of a dot whose velocity is flicker noise.
pub const NOISE: i64 = -1;
pub const DEFAULT_KNN_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Disk in 2D, solid ball in 3D.
    Ball { radius: f64 },
    /// Axis-aligned box in the body frame.
    Box { half_extents: Vec<f64> },
}

impl Shape {
    fn measure(&self, d: usize) -> f64 {
        match self {
            Shape::Ball { radius } => {
                if d == 2 {
                    core::f64::consts::PI * radius * radius
                } else {
                    4.0 / 3.0 * core::f64::consts::PI * radius * radius * radius
                }
            }
            Shape::Box { half_extents } => half_extents.iter().map(|h| 2.0 * h).product(),
        }
    }

    fn contains(&self, offset: &Vector) -> bool {
        match self {
            Shape::Ball { radius } => offset.norm_squared() <= radius * radius,
            Shape::Box { half_extents } => offset.iter().zip(half_extents).all(|(x, h)| x.abs() <= *h),
        }
    }

    fn sample_offset(&self, d: usize, rng: &mut Rng) -> Vector {
        match self {
            Shape::Ball { radius } => loop {
                let v = Vector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
                if v.norm_squared() <= 1.0 {
                    break v * *radius;
                }
            },
            Shape::Box { half_extents } => Vector::from_fn(d, |i, _| half_extents[i] * rng.random_range(-1.0..=1.0)),
        }
    }
}

/// A rigid body with constant per-frame motion: rotation by `angle` about its
/// own center (about `axis` in 3D) followed by translation.
#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    pub shape: Shape,
    pub center: Vec<f64>,
    pub translation: Vec<f64>,
    pub angle: f64,
    pub axis: [f64; 3],
}

impl BodySpec {
    pub fn translating(shape: Shape, center: &[f64], translation: &[f64]) -> Self {
        Self {
            shape,
            center: center.to_vec(),
            translation: translation.to_vec(),
            angle: 0.0,
            axis: [0.0, 0.0, 1.0],
        }
    }

    fn rotation_at(&self, d: usize, frame: usize) -> Matrix {
        let angle = self.angle * frame as f64;
        if d == 2 {
            linalg::rotation_2d(angle)
        } else {
            linalg::rotation_axis_angle(self.axis, angle)
        }
    }

    fn center_at(&self, frame: usize) -> Vector {
        Vector::from_fn(self.center.len(), |i, _| self.center[i] + self.translation[i] * frame as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub dim: usize,
    pub bodies: Vec<BodySpec>,
    /// Dots per unit area (2D) or volume (3D) of each body.
    pub dot_density: f64,
    /// Background dots drawn uniformly over the extent; hidden while covered by a body.
    pub background_dots: usize,
    /// Per-frame translation of the whole background.
    pub background_translation: Vec<f64>,
    pub extent_min: Vec<f64>,
    pub extent_max: Vec<f64>,
    pub flicker_prob: f64,
    pub frames: usize,
    pub seed: u64,
    /// Gaussian noise added to every emitted velocity.
    pub velocity_noise_std: f64,
    /// Probability that a velocity estimate fails and is emitted as zero.
    pub velocity_dropout_prob: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d != 2 && d != 3 {
            return Err(invalid("dim", "must be 2 or 3"));
        }
        if self.extent_min.len() != d || self.extent_max.len() != d || self.background_translation.len() != d {
            return Err(invalid("extent", "extent or background translation dimension mismatch"));
        }
        if self.extent_min.iter().zip(&self.extent_max).any(|(a, b)| !(a < b)) {
            return Err(invalid("extent", "min must be below max on every axis"));
        }
        for (name, p) in [
            ("flicker_prob", self.flicker_prob),
            ("velocity_dropout_prob", self.velocity_dropout_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, "must lie in [0, 1]"));
            }
        }
        if !(self.dot_density >= 0.0 && self.dot_density.is_finite()) {
            return Err(invalid("dot_density", "must be finite and non-negative"));
        }
        if !(self.velocity_noise_std >= 0.0 && self.velocity_noise_std.is_finite()) {
            return Err(invalid("velocity_noise_std", "must be finite and non-negative"));
        }
        if self.frames == 0 {
            return Err(invalid("frames", "must be at least 1"));
        }
        for b in &self.bodies {
            if b.center.len() != d || b.translation.len() != d {
                return Err(invalid("bodies", "center/translation dimension mismatch"));
            }
            match &b.shape {
                Shape::Ball { radius } if !(*radius > 0.0) => return Err(invalid("bodies", "radius must be positive")),
                Shape::Box { half_extents } if half_extents.len() != d || half_extents.iter().any(|h| !(*h > 0.0)) => {
                    return Err(invalid("bodies", "box half extents must be positive, one per axis"))
                }
                _ => {}
            }
            if !b.angle.is_finite() {
                return Err(invalid("bodies", "angle must be finite"));
            }
        }
        Ok(())
    }
}

/// Per-frame observations with aligned ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frames: Vec<Vec<PointObservation>>,
    /// Body index, `bodies.len()` for background, or [`NOISE`].
    pub labels: Vec<Vec<i64>>,
    /// Identity of each dot; a respawned dot gets a fresh id.
    pub dot_ids: Vec<Vec<u64>>,
}

struct Dot {
    id: u64,
    /// Body index, or `None` for background.
    body: Option<usize>,
    /// Body-frame offset for body dots, frame-0 background position for background dots.
    offset: Vector,
}

/// Generate a dot scene.
///
/// Body dots keep a fixed offset in their body frame. At each frame a dot
/// flickers with `flicker_prob`: it is emitted with label [`NOISE`] and a
/// velocity equal to its jump to a fresh uniform location on the same body
/// (or over the extent for background dots), where it reappears under a new
/// id in the next frame. Background dots covered by a body are not emitted.
/// Velocities of persistent dots are exact forward differences of their
/// positions.
pub fn make_rigid_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = stream(spec.seed, domain::SYNTH, 0, 0);
    let background_label = spec.bodies.len() as i64;
    let mut next_id = 0u64;
    let mut dots = Vec::new();

    let uniform_extent = |rng: &mut Rng| {
        Vector::from_fn(d, |i, _| rng.random_range(spec.extent_min[i]..spec.extent_max[i]))
    };
    for (b, body) in spec.bodies.iter().enumerate() {
        let count = math_round(spec.dot_density * body.shape.measure(d));
        for _ in 0..count {
            dots.push(Dot {
                id: next_id,
                body: Some(b),
                offset: body.shape.sample_offset(d, &mut rng),
            });
            next_id += 1;
        }
    }
    for _ in 0..spec.background_dots {
        dots.push(Dot {
            id: next_id,
            body: None,
            offset: uniform_extent(&mut rng),
        });
        next_id += 1;
    }

    let mut scene = Scene {
        frames: Vec::with_capacity(spec.frames),
        labels: Vec::with_capacity(spec.frames),
        dot_ids: Vec::with_capacity(spec.frames),
    };
    for t in 0..spec.frames {
        let mut rng = stream(spec.seed, domain::SYNTH, t as u64 + 1, 0);
        let poses: Vec<(Vector, Matrix, Matrix)> = spec
            .bodies
            .iter()
            .map(|b| (b.center_at(t), b.rotation_at(d, t), b.rotation_at(d, t + 1)))
            .collect();
        let mut obs = Vec::with_capacity(dots.len());
        let mut labels = Vec::with_capacity(dots.len());
        let mut ids = Vec::with_capacity(dots.len());
        let bg_shift = Vector::from_fn(d, |i, _| spec.background_translation[i] * t as f64);
        let bg_step = Vector::from_column_slice(&spec.background_translation);
        for dot in dots.iter_mut() {
            let (position, rigid_velocity) = match dot.body {
                Some(b) => {
                    let (c, r_now, r_next) = &poses[b];
                    let velocity = Vector::from_column_slice(&spec.bodies[b].translation) + (r_next - r_now) * &dot.offset;
                    (c + r_now * &dot.offset, velocity)
                }
                None => (&dot.offset + &bg_shift, bg_step.clone()),
            };
            let visible = dot.body.is_some()
                || !spec
                    .bodies
                    .iter()
                    .zip(&poses)
                    .any(|(b, (c, r, _))| b.shape.contains(&(r.transpose() * (&position - c))));
            let flicker = rng.random::<f64>() < spec.flicker_prob;
            let (mut velocity, label) = if flicker {
                let (fresh, landing) = match dot.body {
                    Some(b) => {
                        let fresh = spec.bodies[b].shape.sample_offset(d, &mut rng);
                        let landing = spec.bodies[b].center_at(t + 1) + spec.bodies[b].rotation_at(d, t + 1) * &fresh;
                        (fresh, landing)
                    }
                    None => {
                        let landing = uniform_extent(&mut rng);
                        (&landing - &bg_shift - &bg_step, landing)
                    }
                };
                let jump = &landing - &position;
                let old_id = dot.id;
                dot.id = next_id;
                next_id += 1;
                dot.offset = fresh;
                (jump, (old_id, NOISE))
            } else {
                (rigid_velocity, (dot.id, dot.body.map_or(background_label, |b| b as i64)))
            };
            if spec.velocity_noise_std > 0.0 {
                for v in velocity.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += spec.velocity_noise_std * z;
                }
            }
            if spec.velocity_dropout_prob > 0.0 && rng.random::<f64>() < spec.velocity_dropout_prob {
                velocity.fill(0.0);
            }
            if !visible {
                continue;
            }
            obs.push(PointObservation {
                position,
                velocity,
                feature: None,
            });
            ids.push(label.0);
            labels.push(label.1);
        }
        scene.frames.push(obs);
        scene.labels.push(labels);
        scene.dot_ids.push(ids);
    }
    Ok(scene)
}

fn math_round(x: f64) -> usize {
    crate::math::floor(x + 0.5).max(0.0) as usize
}

/// Outcome of the same-object judgment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnDecision {
    pub same: bool,
    pub confidence: f64,
}

pub const DEFAULT_PROPOSAL_FACTOR: f64 = 3.0;

/// Coarse two-way proposal: label 1 for points whose velocity differs from the
/// per-axis median velocity by more than `factor` times the median such
/// difference, label 0 otherwise.
pub fn motion_mask_proposal(obs: &[PointObservation], factor: f64) -> Vec<usize> {
    if obs.is_empty() {
        return Vec::new();
    }
    let d = obs[0].velocity.len();
    let centre: Vec<f64> = (0..d)
        .map(|a| crate::math::median(&obs.iter().map(|o| o.velocity[a]).collect::<Vec<_>>()))
        .collect();
    let dev: Vec<f64> = obs
        .iter()
        .map(|o| crate::math::sqrt(linalg::squared_distance(o.velocity.as_slice(), &centre)))
        .collect();
    let cut = factor * crate::math::median(&dev);
    dev.iter().map(|&x| usize::from(x > cut)).collect()
}

/// The final third of a sequence (at least one state).
pub fn judged_frames(states: &[ModelState]) -> &[ModelState] {
    let n = states.len();
    let keep = n.div_ceil(3).max(1).min(n);
    &states[n - keep..]
}

/// Same-object decision for two probe locations.
///
/// Particle locations are their spatial means averaged over `states`.
/// Particles that hold no point in any state are skipped unless all are
/// empty. Each probe collects its `k` nearest particles (clamped to the count)
/// and pools their cluster labels across all states; the majority cluster
/// wins, ties to the lower index. The probes are judged the same object when
/// their majorities agree, and the confidence is the product of the two
/// majority fractions.
pub fn knn_same_object(states: &[ModelState], probe_a: &[f64], probe_b: &[f64], k: usize) -> Result<KnnDecision> {
    let first = states.first().ok_or(Error::Empty("states"))?;
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let d = first.dim.value();
    let l = first.num_particles();
    if probe_a.len() != d || probe_b.len() != d {
        return Err(Error::ShapeMismatch {
            context: "knn_same_object probe",
            expected: d,
            found: if probe_a.len() != d { probe_a.len() } else { probe_b.len() },
        });
    }
    if states.iter().any(|s| s.num_particles() != l) {
        return Err(invalid("states", "particle count changes across frames"));
    }
    let clusters = states.iter().map(|s| s.num_clusters()).max().unwrap_or(0);
    let mut centers = vec![Vector::zeros(d); l];
    for s in states {
        for (c, p) in centers.iter_mut().zip(&s.particles) {
            *c += &p.spatial_mean;
        }
    }
    for c in centers.iter_mut() {
        *c /= states.len() as f64;
    }
    let mut occupied = vec![false; l];
    for s in states {
        for &j in &s.assignments.point_to_particle {
            if j < l {
                occupied[j] = true;
            }
        }
    }
    if !occupied.iter().any(|&o| o) {
        occupied.iter_mut().for_each(|o| *o = true);
    }
    let k = k.min(occupied.iter().filter(|&&o| o).count());

    let majority = |probe: &[f64]| -> (usize, f64) {
        let mut order: Vec<(f64, usize)> = centers
            .iter()
            .enumerate()
            .filter(|&(j, _)| occupied[j])
            .map(|(j, c)| (linalg::squared_distance(probe, c.as_slice()), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; clusters];
        for &(_, j) in &order[..k] {
            for s in states {
                votes[s.assignments.particle_to_cluster[j]] += 1;
            }
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        (best, votes[best] as f64 / (k * states.len()) as f64)
    };
    let (ca, fa) = majority(probe_a);
    let (cb, fb) = majority(probe_b);
    Ok(KnnDecision {
        same: ca == cb,
        confidence: fa * fb,
    })
}
