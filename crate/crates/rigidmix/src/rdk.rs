//! Random-dot kinematogram trials and same-object judgments.
//!
//! A trial is a disc of dots moving over a field of background dots. In an
//! unambiguous trial the disc either translates or rotates while the
//! background rests; in an ambiguous trial the background translates with the
//! disc, so motion no longer separates them. Judgments come from
//! [`knn_same_object`] over the tracked posterior at three probe pairs.

use rand::Rng as _;
use rayon::prelude::*;
use rigidmix_core::linalg::Matrix;
use rigidmix_core::model::{Dim, HyperParams};
use rigidmix_core::rng::{mix, stream};
use rigidmix_core::synth::{
    judged_frames, knn_same_object, make_rigid_scene, motion_mask_proposal, BodySpec, SceneSpec, Shape, DEFAULT_KNN_K,
    DEFAULT_PROPOSAL_FACTOR,
};
use rigidmix_core::tracker::{track_with_proposal, TrackConfig};

use crate::error::Result;

pub const TRIAL_FRAMES: usize = 9;
pub const DISC_RADIUS: f64 = 3.0;
pub const TRIAL_FLICKER: f64 = 0.1;
pub const TRIAL_VELOCITY_NOISE: f64 = 0.05;
pub const TRIAL_PARTICLES: usize = 80;
pub const TRIAL_CHAINS: usize = 5;
const TRIAL_DOMAIN: u64 = 99;

/// Scene for trial `seed`. Speed is drawn from `[0.3, 0.6)` per frame with a
/// uniform heading; unambiguous trials rotate by 0.15 rad per frame instead of
/// translating half of the time.
pub fn rdk_trial(seed: u64, ambiguous: bool) -> SceneSpec {
    let mut rng = stream(seed, TRIAL_DOMAIN, 0, 0);
    let speed = rng.random_range(0.3..0.6);
    let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let u = [speed * heading.cos(), speed * heading.sin()];
    let centre = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let mut body = BodySpec::translating(Shape::Ball { radius: DISC_RADIUS }, &centre, &u);
    if !ambiguous && rng.random::<bool>() {
        body.translation = vec![0.0, 0.0];
        body.angle = if rng.random::<bool>() { 0.15 } else { -0.15 };
    }
    SceneSpec {
        dim: 2,
        bodies: vec![body],
        dot_density: 3.0,
        background_dots: 768,
        background_translation: if ambiguous { u.to_vec() } else { vec![0.0, 0.0] },
        extent_min: vec![-8.0, -8.0],
        extent_max: vec![8.0, 8.0],
        flicker_prob: TRIAL_FLICKER,
        frames: TRIAL_FRAMES,
        seed,
        velocity_noise_std: TRIAL_VELOCITY_NOISE,
        velocity_dropout_prob: 0.0,
    }
}

/// Probe locations averaged over the judged frames: two inside the disc near
/// its centre, two on the background beside the disc's path, offset toward
/// the middle of the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probes {
    pub object: [[f64; 2]; 2],
    pub background: [[f64; 2]; 2],
}

pub fn trial_probes(spec: &SceneSpec) -> Probes {
    let body = &spec.bodies[0];
    let frames = spec.frames;
    let judged = frames.div_ceil(3).max(1).min(frames);
    let first = frames - judged;
    let average = |p: [f64; 2]| {
        let mut c = [0.0; 2];
        for t in first..frames {
            for i in 0..2 {
                c[i] += p[i] + body.translation[i] * t as f64;
            }
        }
        c.map(|x| x / judged as f64)
    };
    let a = average([body.center[0] - 0.6, body.center[1] - 0.4]);
    let b = average([body.center[0] + 0.6, body.center[1] + 0.4]);
    let u = &body.translation;
    let speed = u[0].hypot(u[1]);
    let mut n = if speed > 0.0 { [-u[1] / speed, u[0] / speed] } else { [1.0, 0.0] };
    if n[0] * a[0] + n[1] * a[1] > 0.0 {
        n = [-n[0], -n[1]];
    }
    let mut m = [-n[1], n[0]];
    if m[0] * a[0] + m[1] * a[1] > 0.0 {
        m = [-m[0], -m[1]];
    }
    let g = [a[0] + n[0] * (DISC_RADIUS + 2.0), a[1] + n[1] * (DISC_RADIUS + 2.0)];
    let h = [g[0] + 2.5 * n[0] + 2.0 * m[0], g[1] + 2.5 * n[1] + 2.0 * m[1]];
    Probes {
        object: [a, b],
        background: [g, h],
    }
}

/// Priors for trial scenes: tight inverse-Wishart priors around the dot
/// spacing and the velocity noise level, a tight fit of particle velocities to
/// their cluster's rigid motion, a finer translation grid, and an outlier
/// component for flicker.
pub fn trial_hyper(particles: usize) -> HyperParams {
    let mut h = HyperParams::defaults(Dim::Two, 2, particles);
    let eye = Matrix::identity(2, 2);
    h.translation_var = 0.25;
    h.translations_per_axis = 13;
    h.velocity_var = 0.0025;
    h.velocity_cov_dof = 500.0;
    h.velocity_cov_scale = &eye * (0.01 * (h.velocity_cov_dof - 3.0));
    h.particle_cov_dof = 100.0;
    h.particle_cov_scale = &eye * (0.3 * (h.particle_cov_dof - 3.0));
    h.outlier_prob = 0.1;
    h.outlier_shape = 2.0;
    h.outlier_rate = 0.3;
    h
}

pub fn trial_track_config() -> TrackConfig {
    let mut cfg = TrackConfig::standard(30, 2);
    cfg.enable_outliers = true;
    cfg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Judgments {
    pub object_object: bool,
    pub object_background: bool,
    pub background_background: bool,
}

fn judge_chain(spec: &SceneSpec, seed: u64) -> Result<Judgments> {
    let scene = make_rigid_scene(spec)?;
    let hyper = trial_hyper(TRIAL_PARTICLES);
    let proposal = motion_mask_proposal(&scene.frames[0], DEFAULT_PROPOSAL_FACTOR);
    let out = track_with_proposal(&scene.frames, 2, TRIAL_PARTICLES, &hyper, &trial_track_config(), seed, Some(&proposal))?;
    let judged = judged_frames(&out.states);
    let p = trial_probes(spec);
    let same = |a: &[f64; 2], b: &[f64; 2]| knn_same_object(judged, a, b, DEFAULT_KNN_K).map(|d| d.same);
    Ok(Judgments {
        object_object: same(&p.object[0], &p.object[1])?,
        object_background: same(&p.object[0], &p.background[0])?,
        background_background: same(&p.background[0], &p.background[1])?,
    })
}

/// Majority judgment over `chains` independent tracking runs.
pub fn judge_trial(spec: &SceneSpec, seed: u64, chains: usize) -> Result<Judgments> {
    let runs = (0..chains as u64)
        .into_par_iter()
        .map(|c| judge_chain(spec, mix(&[seed, c])))
        .collect::<Result<Vec<_>>>()?;
    let majority = |f: fn(&Judgments) -> bool| 2 * runs.iter().filter(|j| f(j)).count() > chains;
    Ok(Judgments {
        object_object: majority(|j| j.object_object),
        object_background: majority(|j| j.object_background),
        background_background: majority(|j| j.background_background),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trials_are_valid_and_reproducible() {
        for seed in 0..20 {
            for ambiguous in [false, true] {
                let s = rdk_trial(seed, ambiguous);
                s.validate().unwrap();
                assert_eq!(s, rdk_trial(seed, ambiguous));
                if ambiguous {
                    assert_eq!(s.background_translation, s.bodies[0].translation);
                } else {
                    assert_eq!(s.background_translation, vec![0.0, 0.0]);
                }
            }
        }
    }

    #[test]
    fn probes_sit_inside_and_outside_the_disc() {
        for seed in 0..50 {
            let s = rdk_trial(seed, false);
            let p = trial_probes(&s);
            let b = &s.bodies[0];
            let last = (s.frames - 1) as f64;
            let centre = |t: f64| [b.center[0] + b.translation[0] * t, b.center[1] + b.translation[1] * t];
            for t in [last - 2.0, last] {
                let c = centre(t);
                let dist = |q: [f64; 2]| (q[0] - c[0]).hypot(q[1] - c[1]);
                for q in p.object {
                    assert!(dist(q) < DISC_RADIUS - 1.0);
                }
                for q in p.background {
                    assert!(dist(q) > DISC_RADIUS + 1.0, "seed {seed}");
                    assert!(q.iter().all(|x| x.abs() < 8.0));
                }
            }
        }
    }
}
