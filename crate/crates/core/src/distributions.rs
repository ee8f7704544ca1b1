//! Primitive distributions: Gaussian, Inverse-Wishart, Dirichlet, categorical,
//! Gamma, and the discretized rigid-transform priors.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::math;
use crate::model::{Dim, HyperParams};
use crate::rng::Rng;

/// Exact Gaussian log density via a Cholesky factorization of `cov`.
pub fn mvn_logpdf(x: &Vector, mean: &Vector, cov: &Matrix) -> Result<f64> {
    let d = x.len();
    if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
        return Err(Error::ShapeMismatch {
            context: "mvn_logpdf",
            expected: d,
            found: mean.len(),
        });
    }
    let chol = linalg::cholesky_jittered(cov, "mvn_logpdf")?;
    let diff = x - mean;
    let y = chol
        .l()
        .solve_lower_triangular(&diff)
        .ok_or(Error::NotPositiveDefinite { context: "mvn_logpdf" })?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| math::ln(*v)).sum::<f64>();
    Ok(-0.5 * (d as f64 * math::LN_2PI + log_det + y.norm_squared()))
}

pub fn standard_normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn mvn_sample(mean: &Vector, cov: &Matrix, rng: &mut Rng) -> Result<Vector> {
    let chol = linalg::cholesky_jittered(cov, "mvn_sample")?;
    let z = Vector::from_vec(standard_normals(rng, mean.len()));
    Ok(mean + chol.l() * z)
}

pub fn isotropic_sample(mean: &Vector, var: f64, rng: &mut Rng) -> Vector {
    let sd = math::sqrt(var);
    let z = Vector::from_vec(standard_normals(rng, mean.len()));
    mean + z * sd
}

fn gamma_sample(shape: f64, rng: &mut Rng) -> Result<f64> {
    let g = Gamma::new(shape, 1.0).map_err(|_| invalid("gamma shape", "must be positive and finite"))?;
    Ok(g.sample(rng))
}

/// `ln G` for `G ~ Gamma(shape, 1)`, stable for small shapes.
fn log_gamma_sample(shape: f64, rng: &mut Rng) -> Result<f64> {
    if shape < 1.0 {
        let g = gamma_sample(shape + 1.0, rng)?;
        let u: f64 = 1.0 - rng.random::<f64>();
        Ok(math::ln(g) + math::ln(u) / shape)
    } else {
        Ok(math::ln(gamma_sample(shape, rng)?))
    }
}

/// Inverse-Wishart draw via the Bartlett decomposition of `W(Ψ⁻¹, ν)`.
pub fn inverse_wishart_sample(psi: &Matrix, nu: f64, rng: &mut Rng) -> Result<Matrix> {
    let d = psi.nrows();
    if !(nu > d as f64 - 1.0) || !nu.is_finite() {
        return Err(invalid("nu", "inverse-Wishart degrees of freedom must exceed D - 1"));
    }
    let psi_inv = linalg::spd_inverse(psi, "inverse_wishart_sample scale")?;
    let l = linalg::cholesky_jittered(&psi_inv, "inverse_wishart_sample scale")?.l();
    let mut a = Matrix::zeros(d, d);
    for i in 0..d {
        // chi^2_{nu - i} = 2 * Gamma((nu - i)/2, 1)
        let chi2 = 2.0 * gamma_sample((nu - i as f64) / 2.0, rng)?;
        a[(i, i)] = math::sqrt(chi2);
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let m = l * a;
    let m_inv = m
        .solve_lower_triangular(&Matrix::identity(d, d))
        .ok_or(Error::NotPositiveDefinite { context: "inverse_wishart_sample" })?;
    Ok(linalg::symmetrize(&(m_inv.transpose() * m_inv)))
}

pub fn inverse_wishart_logpdf(sigma: &Matrix, psi: &Matrix, nu: f64) -> Result<f64> {
    let d = sigma.nrows();
    let df = d as f64;
    let log_det_psi = linalg::log_det_spd(psi, "inverse_wishart_logpdf scale")?;
    let log_det_sigma = linalg::log_det_spd(sigma, "inverse_wishart_logpdf sample")?;
    let sigma_inv = linalg::spd_inverse(sigma, "inverse_wishart_logpdf sample")?;
    let tr = (psi * sigma_inv).trace();
    Ok(0.5 * nu * log_det_psi
        - 0.5 * nu * df * core::f64::consts::LN_2
        - math::ln_multigamma(d, nu / 2.0)
        - 0.5 * (nu + df + 1.0) * log_det_sigma
        - 0.5 * tr)
}

pub fn dirichlet_sample(concentration: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(Error::Empty("dirichlet concentration"));
    }
    if concentration.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(invalid("concentration", "entries must be positive and finite"));
    }
    let logs = concentration
        .iter()
        .map(|&a| log_gamma_sample(a, rng))
        .collect::<Result<Vec<_>>>()?;
    let lse = math::log_sum_exp(&logs);
    let mut p: Vec<f64> = logs.iter().map(|l| math::exp(l - lse)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

pub fn dirichlet_logpdf(p: &[f64], concentration: &[f64]) -> f64 {
    let a0: f64 = concentration.iter().sum();
    let mut acc = math::ln_gamma(a0);
    for (&pi, &a) in p.iter().zip(concentration) {
        acc -= math::ln_gamma(a);
        if a != 1.0 {
            acc += (a - 1.0) * math::ln(pi);
        }
    }
    acc
}

/// Probabilities from unnormalized log-weights (max-subtracted).
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::NoAdmissibleComponent);
    }
    let mut p: Vec<f64> = log_weights.iter().map(|&l| math::exp(l - max)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

pub fn categorical_sample(log_weights: &[f64], rng: &mut Rng) -> Result<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::NoAdmissibleComponent);
    }
    let total: f64 = log_weights.iter().map(|&l| math::exp(l - max)).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &l) in log_weights.iter().enumerate() {
        let w = math::exp(l - max);
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

/// Gamma log density with shape/rate parameterization.
pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        return if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            math::ln(rate)
        } else {
            f64::NEG_INFINITY
        };
    }
    shape * math::ln(rate) - math::ln_gamma(shape) + (shape - 1.0) * math::ln(x) - rate * x
}

/// Finite candidate sets for the discretized rotation and translation priors.
#[derive(Debug, Clone)]
pub struct TransformCandidates {
    pub dim: Dim,
    pub rotations: Vec<Matrix>,
    pub rotation_log_weights: Vec<f64>,
    pub translations: Vec<Vector>,
    pub translation_log_weights: Vec<f64>,
    rotation_concentration: f64,
    translation_var: f64,
    rotation_log_normalizer: f64,
    translation_log_normalizer: f64,
}

impl TransformCandidates {
    /// Prior log-probability of an arbitrary rotation: the continuous vMF-in-angle
    /// kernel normalized over the candidate set. Equals the categorical
    /// log-weight exactly for members of the set.
    pub fn rotation_log_prior(&self, r: &Matrix) -> f64 {
        self.rotation_concentration * math::cos(linalg::rotation_angle(r)) - self.rotation_log_normalizer
    }

    pub fn translation_log_prior(&self, t: &Vector) -> f64 {
        -0.5 * t.norm_squared() / self.translation_var - self.translation_log_normalizer
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Build the rotation and translation candidate sets.
///
/// 2D rotations are evenly spaced in angle on `[-θ_max, θ_max]`; 3D rotations
/// are identity plus Halton-sequence rotation vectors inside the ball of
/// radius `θ_max`. Translations form a centered lattice of
/// `translations_per_axis` points covering `±3s` on each axis. The identity
/// rotation and the zero translation are always present.
pub fn make_transform_candidates(
    dim: Dim,
    hyper: &HyperParams,
    rotation_count: usize,
    translations_per_axis: usize,
) -> TransformCandidates {
    let d = dim.value();
    let theta_max = hyper.max_rotation_angle;
    let kappa = hyper.rotation_concentration;
    let m_r = rotation_count.max(1);

    let mut rotations = Vec::with_capacity(m_r + 1);
    match dim {
        Dim::Two => {
            if m_r == 1 {
                rotations.push(Matrix::identity(2, 2));
            } else {
                for i in 0..m_r {
                    let a = -theta_max + 2.0 * theta_max * i as f64 / (m_r - 1) as f64;
                    rotations.push(linalg::rotation_2d(a));
                }
                if m_r % 2 == 0 {
                    rotations.push(Matrix::identity(2, 2));
                }
            }
        }
        Dim::Three => {
            rotations.push(Matrix::identity(3, 3));
            for i in 1..m_r as u64 {
                let radius = theta_max * math::powf(radical_inverse(i, 2), 1.0 / 3.0);
                let z = 1.0 - 2.0 * radical_inverse(i, 3);
                let phi = 2.0 * PI * radical_inverse(i, 5);
                let rho = math::sqrt((1.0 - z * z).max(0.0));
                let axis = [rho * math::cos(phi), rho * math::sin(phi), z];
                rotations.push(linalg::rotation_axis_angle(axis, radius));
            }
        }
    }
    let rot_kernel: Vec<f64> = rotations
        .iter()
        .map(|r| kappa * math::cos(linalg::rotation_angle(r)))
        .collect();
    let rotation_log_normalizer = math::log_sum_exp(&rot_kernel);
    let rotation_log_weights = rot_kernel.iter().map(|k| k - rotation_log_normalizer).collect();

    let s = math::sqrt(hyper.translation_var);
    let m_t = translations_per_axis.max(1);
    let axis_values: Vec<f64> = if m_t == 1 {
        vec![0.0]
    } else {
        (0..m_t)
            .map(|i| -3.0 * s + 6.0 * s * i as f64 / (m_t - 1) as f64)
            .collect()
    };
    let mut translations = Vec::new();
    let total = m_t.pow(d as u32);
    for mut idx in 0..total {
        let mut t = Vector::zeros(d);
        for a in 0..d {
            t[a] = axis_values[idx % m_t];
            idx /= m_t;
        }
        translations.push(t);
    }
    if m_t > 1 && m_t % 2 == 0 {
        translations.push(Vector::zeros(d));
    }
    let tr_kernel: Vec<f64> = translations
        .iter()
        .map(|t| -0.5 * t.norm_squared() / hyper.translation_var)
        .collect();
    let translation_log_normalizer = math::log_sum_exp(&tr_kernel);
    let translation_log_weights = tr_kernel.iter().map(|k| k - translation_log_normalizer).collect();

    TransformCandidates {
        dim,
        rotations,
        rotation_log_weights,
        translations,
        translation_log_weights,
        rotation_concentration: kappa,
        translation_var: hyper.translation_var,
        rotation_log_normalizer,
        translation_log_normalizer,
    }
}
