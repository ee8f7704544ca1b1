//! Forward-sampler versus successive-conditional consistency check.
//!
//! Marginal moments of selected latents are estimated twice: from independent
//! forward draws, and from a chain that alternates resampling observations
//! given latents with one full Gibbs sweep. A correct sampler leaves the prior
//! invariant, so the two estimates agree up to Monte Carlo error.

use alloc::string::String;
use alloc::vec::Vec;

use crate::distributions;
use crate::error::{invalid, Result};
use crate::gibbs::{sweep, ScheduleFlags, SweepSchedule};
use crate::math;
use crate::model::{sample_forward, Dim, HyperParams, ModelState, PointObservation};
use crate::rng::{domain, mix, stream, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeConfig {
    pub hyper: HyperParams,
    pub clusters: usize,
    pub particles: usize,
    pub points: usize,
    pub iterations: usize,
    pub batches: usize,
    pub seed: u64,
}

impl GewekeConfig {
    /// K=2, L=4, N=16 in 2D with 10^4 iterations and unit-scale priors, so
    /// the observations are only weakly informative and the chain mixes.
    pub fn small(seed: u64) -> Self {
        let mut hyper = HyperParams::defaults(Dim::Two, 2, 4);
        let eye = crate::linalg::Matrix::identity(2, 2);
        hyper.cluster_mean_prior_var = 1.0;
        hyper.cluster_cov_scale = eye.clone();
        hyper.particle_cov_scale = eye.clone();
        hyper.velocity_cov_scale = eye;
        hyper.velocity_var = 1.0;
        Self {
            hyper,
            clusters: 2,
            particles: 4,
            points: 16,
            iterations: 10_000,
            batches: 50,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeStat {
    pub name: String,
    pub forward_mean: f64,
    pub forward_se: f64,
    pub chain_mean: f64,
    pub chain_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
    pub max_abs_z: f64,
}

const STAT_NAMES: [&str; 8] = [
    "mean particle position x",
    "mean particle position x^2",
    "mean particle velocity x",
    "mean particle velocity x^2",
    "mean particle velocity y",
    "mean particle velocity y^2",
    "particle weight 0",
    "particle weight 0 squared",
];

fn statistics(state: &ModelState) -> [f64; 8] {
    let l = state.particles.len() as f64;
    let mut s = [0.0; 8];
    for p in &state.particles {
        let (x, vx, vy) = (p.spatial_mean[0], p.velocity_mean[0], p.velocity_mean[1]);
        s[0] += x / l;
        s[1] += x * x / l;
        s[2] += vx / l;
        s[3] += vx * vx / l;
        s[4] += vy / l;
        s[5] += vy * vy / l;
    }
    let w = state.particle_weights[0];
    s[6] = w;
    s[7] = w * w;
    s
}

/// Redraw every observation from its assigned particle.
pub fn resample_observations(state: &ModelState, rng: &mut Rng) -> Result<Vec<PointObservation>> {
    state
        .assignments
        .point_to_particle
        .iter()
        .map(|&l| {
            let p = &state.particles[l];
            Ok(PointObservation {
                position: distributions::mvn_sample(&p.spatial_mean, &p.spatial_cov, rng)?,
                velocity: distributions::mvn_sample(&p.velocity_mean, &p.velocity_cov, rng)?,
                feature: None,
            })
        })
        .collect()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Run the comparison and report a z-score per statistic.
pub fn run_geweke(cfg: &GewekeConfig) -> Result<GewekeReport> {
    if cfg.hyper.dim()? != Dim::Two {
        return Err(invalid("dim", "the consistency check runs in 2D"));
    }
    if cfg.batches < 2 || cfg.iterations < 2 * cfg.batches {
        return Err(invalid("iterations", "need at least two batches of two draws"));
    }
    let candidates = cfg.hyper.candidates()?;
    let schedule = SweepSchedule::full(ScheduleFlags::default());

    let mut forward: Vec<[f64; 8]> = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let seed = mix(&[cfg.seed, domain::GEWEKE, i as u64]);
        let (state, _) = sample_forward(&cfg.hyper, cfg.clusters, cfg.particles, cfg.points, seed)?;
        forward.push(statistics(&state));
    }

    let (mut state, _) = sample_forward(&cfg.hyper, cfg.clusters, cfg.particles, cfg.points, cfg.seed)?;
    let mut chain: Vec<[f64; 8]> = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let mut rng = stream(cfg.seed, domain::GEWEKE, i as u64, 1);
        let obs = resample_observations(&state, &mut rng)?;
        state = sweep(&state, &obs, &cfg.hyper, &schedule, &candidates)?;
        chain.push(statistics(&state));
    }

    let batch = cfg.iterations / cfg.batches;
    let mut stats = Vec::with_capacity(STAT_NAMES.len());
    let mut max_abs_z: f64 = 0.0;
    for (j, name) in STAT_NAMES.iter().enumerate() {
        let f: Vec<f64> = forward.iter().map(|s| s[j]).collect();
        let (fm, fv) = mean_var(&f);
        let forward_se = math::sqrt(fv / f.len() as f64);
        let c: Vec<f64> = chain.iter().map(|s| s[j]).collect();
        let chain_mean = c.iter().sum::<f64>() / c.len() as f64;
        let batch_means: Vec<f64> = c
            .chunks_exact(batch)
            .map(|b| b.iter().sum::<f64>() / batch as f64)
            .collect();
        let (_, bv) = mean_var(&batch_means);
        let chain_se = math::sqrt(bv / batch_means.len() as f64);
        let se = math::sqrt(forward_se * forward_se + chain_se * chain_se);
        let z = if se > 0.0 { (fm - chain_mean) / se } else { 0.0 };
        max_abs_z = max_abs_z.max(z.abs());
        stats.push(GewekeStat {
            name: String::from(*name),
            forward_mean: fm,
            forward_se,
            chain_mean,
            chain_se,
            z,
        });
    }
    Ok(GewekeReport { stats, max_abs_z })
}
