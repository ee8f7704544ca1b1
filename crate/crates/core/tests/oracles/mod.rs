//! Every Gibbs conditional against independent oracles: scalar conjugate
//! formulas, exact log-joint differences, grid maximization of the log joint,
//! and Monte Carlo moments of the samplers.

use rigidmix_core::distributions::{self, TransformCandidates};
use rigidmix_core::gibbs::{self, GibbsContext, ScheduleFlags};
use rigidmix_core::linalg::{self, Matrix, Vector};
use rigidmix_core::model::{log_joint_with, sample_forward, Dim, HyperParams, ModelState, PointObservation};
use rigidmix_core::rng::StepStreams;

fn unit_hyper(dim: Dim, k: usize, l: usize) -> HyperParams {
    let d = dim.value();
    let eye = Matrix::identity(d, d);
    let mut h = HyperParams::defaults(dim, k, l);
    h.cluster_mean_prior_var = 2.0;
    h.cluster_cov_scale = &eye * 1.5;
    h.particle_cov_scale = &eye * 0.5;
    h.velocity_cov_scale = &eye * 0.3;
    h.velocity_var = 0.4;
    h
}

struct Fixture {
    state: ModelState,
    obs: Vec<PointObservation>,
    hyper: HyperParams,
    cands: TransformCandidates,
}

impl Fixture {
    fn new(dim: Dim, seed: u64) -> Self {
        let hyper = unit_hyper(dim, 2, 5);
        let (state, obs) = sample_forward(&hyper, 2, 5, 40, seed).unwrap();
        let cands = hyper.candidates().unwrap();
        Self { state, obs, hyper, cands }
    }

    fn ctx(&self, flags: ScheduleFlags) -> GibbsContext<'_> {
        GibbsContext {
            obs: &self.obs,
            hyper: &self.hyper,
            candidates: &self.cands,
            flags,
        }
    }

    fn lj(&self, state: &ModelState) -> f64 {
        log_joint_with(state, &self.obs, &self.hyper, &self.cands).unwrap()
    }

    fn members(&self, particle: usize) -> Vec<usize> {
        self.state.particle_members()[particle].clone()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn assert_vec_close(a: &Vector, b: &Vector, tol: f64) {
    for i in 0..a.len() {
        assert!(close(a[i], b[i], tol), "{a} vs {b}");
    }
}

fn iso(d: usize, s: f64) -> Matrix {
    Matrix::identity(d, d) * s
}

// ---------- scalar closed forms ----------

pub fn particle_mean_scalar_closed_form() {
    let mut f = Fixture::new(Dim::Two, 1);
    let (sh, sb, theta) = (1.7, 0.35, 0.3);
    let z = f.state.assignments.particle_to_cluster[0];
    f.state.clusters[z].spatial_cov = iso(2, sh);
    f.state.clusters[z].rotation = linalg::rotation_2d(theta);
    f.state.particles[0].spatial_cov = iso(2, sb);
    let members = f.members(0);
    let cond = gibbs::particle_mean_conditional(&f.state, &f.ctx(ScheduleFlags::default()), 0, &members).unwrap();

    let n = members.len() as f64;
    let sv = f.hyper.velocity_var;
    let (c, s) = (theta.cos(), theta.sin());
    // A = R - I = [[c-1, -s], [s, c-1]], AᵀA = 2(1-c) I
    let prec = 1.0 / sh + n / sb + 2.0 * (1.0 - c) / sv;
    let mu_h = &f.state.clusters[z].spatial_mean;
    let t = &f.state.clusters[z].translation;
    let vl = &f.state.particles[0].velocity_mean;
    let a_mu = [(c - 1.0) * mu_h[0] - s * mu_h[1], s * mu_h[0] + (c - 1.0) * mu_h[1]];
    let r = [vl[0] - t[0] + a_mu[0], vl[1] - t[1] + a_mu[1]];
    let at_r = [(c - 1.0) * r[0] + s * r[1], -s * r[0] + (c - 1.0) * r[1]];
    let mut want = [0.0; 2];
    for i in 0..2 {
        let sum_x: f64 = members.iter().map(|&m| f.obs[m].position[i]).sum();
        want[i] = (mu_h[i] / sh + sum_x / sb + at_r[i] / sv) / prec;
    }
    let mean = cond.mean().unwrap();
    let cov = cond.covariance().unwrap();
    for i in 0..2 {
        assert!((mean[i] - want[i]).abs() < 1e-10, "{} vs {}", mean[i], want[i]);
        assert!((cov[(i, i)] - 1.0 / prec).abs() < 1e-10);
    }
    assert!(cov[(0, 1)].abs() < 1e-10);
}

pub fn velocity_mean_scalar_closed_form() {
    let mut f = Fixture::new(Dim::Two, 2);
    let sv_cov = 0.21;
    f.state.particles[1].velocity_cov = iso(2, sv_cov);
    let members = f.members(1);
    let cond = gibbs::particle_velocity_conditional(&f.state, &f.ctx(ScheduleFlags::default()), 1, &members).unwrap();
    let z = f.state.assignments.particle_to_cluster[1];
    let induced = rigidmix_core::cluster_induced_velocity(&f.state.clusters[z], &f.state.particles[1].spatial_mean);
    let n = members.len() as f64;
    let var = f.hyper.velocity_var;
    let prec = 1.0 / var + n / sv_cov;
    let mean = cond.mean().unwrap();
    for i in 0..2 {
        let sum_v: f64 = members.iter().map(|&m| f.obs[m].velocity[i]).sum();
        let want = (induced[i] / var + sum_v / sv_cov) / prec;
        assert!((mean[i] - want).abs() < 1e-10);
    }
    assert!((cond.covariance().unwrap()[(0, 0)] - 1.0 / prec).abs() < 1e-10);
}

pub fn cluster_mean_scalar_closed_form() {
    let mut f = Fixture::new(Dim::Two, 3);
    let sh = 0.9;
    for c in &mut f.state.clusters {
        c.rotation = Matrix::identity(2, 2);
        c.spatial_cov = iso(2, sh);
    }
    let members = f.state.cluster_members();
    let s0 = f.hyper.cluster_mean_prior_var;
    for (k, m) in members.iter().enumerate() {
        let cond = gibbs::cluster_mean_conditional(&f.state, &f.ctx(ScheduleFlags::default()), k, m).unwrap();
        let prec = 1.0 / s0 + m.len() as f64 / sh;
        let mean = cond.mean().unwrap();
        for i in 0..2 {
            let sum: f64 = m.iter().map(|&l| f.state.particles[l].spatial_mean[i]).sum();
            let want = (f.hyper.cluster_mean_prior[i] / s0 + sum / sh) / prec;
            assert!((mean[i] - want).abs() < 1e-10);
        }
    }
}

pub fn covariance_posteriors_by_hand() {
    let f = Fixture::new(Dim::Two, 4);
    let ctx = f.ctx(ScheduleFlags::default());
    for l in 0..f.state.num_particles() {
        let members = f.members(l);
        let mu = &f.state.particles[l].spatial_mean;
        let vm = &f.state.particles[l].velocity_mean;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        let (mut vxx, mut vxy, mut vyy) = (0.0, 0.0, 0.0);
        for &n in &members {
            let (dx, dy) = (f.obs[n].position[0] - mu[0], f.obs[n].position[1] - mu[1]);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
            let (ex, ey) = (f.obs[n].velocity[0] - vm[0], f.obs[n].velocity[1] - vm[1]);
            vxx += ex * ex;
            vxy += ex * ey;
            vyy += ey * ey;
        }
        let (psi, nu) = gibbs::particle_covariance_posterior(&f.state, &ctx, l, &members);
        assert_eq!(nu, f.hyper.particle_cov_dof + members.len() as f64);
        assert!((psi[(0, 0)] - 0.5 - sxx).abs() < 1e-10);
        assert!((psi[(0, 1)] - sxy).abs() < 1e-10);
        assert!((psi[(1, 1)] - 0.5 - syy).abs() < 1e-10);
        let (psi, nu) = gibbs::particle_velocity_covariance_posterior(&f.state, &ctx, l, &members);
        assert_eq!(nu, f.hyper.velocity_cov_dof + members.len() as f64);
        assert!((psi[(0, 0)] - 0.3 - vxx).abs() < 1e-10);
        assert!((psi[(1, 0)] - vxy).abs() < 1e-10);
        assert!((psi[(1, 1)] - 0.3 - vyy).abs() < 1e-10);
    }
    for (k, m) in f.state.cluster_members().iter().enumerate() {
        let mu = &f.state.clusters[k].spatial_mean;
        let sxx: f64 = m.iter().map(|&l| (f.state.particles[l].spatial_mean[0] - mu[0]).powi(2)).sum();
        let (psi, nu) = gibbs::cluster_covariance_posterior(&f.state, &ctx, k, m);
        assert_eq!(nu, f.hyper.cluster_cov_dof + m.len() as f64);
        assert!((psi[(0, 0)] - 1.5 - sxx).abs() < 1e-10);
    }
}

pub fn point_assignment_weights_by_hand() {
    let f = Fixture::new(Dim::Two, 5);
    let ctx = f.ctx(ScheduleFlags::default());
    for n in [0, 7, 19] {
        let lw = gibbs::point_assignment_log_weights(&f.state, &ctx, n, false).unwrap();
        let pos = gibbs::point_assignment_log_weights(&f.state, &ctx, n, true).unwrap();
        for (l, p) in f.state.particles.iter().enumerate() {
            let want_pos = f.state.particle_weights[l].ln()
                + distributions::mvn_logpdf(&f.obs[n].position, &p.spatial_mean, &p.spatial_cov).unwrap();
            let want = want_pos + distributions::mvn_logpdf(&f.obs[n].velocity, &p.velocity_mean, &p.velocity_cov).unwrap();
            assert!((lw[l] - want).abs() < 1e-10);
            assert!((pos[l] - want_pos).abs() < 1e-10);
        }
    }
}

// ---------- exact log-joint differences ----------

fn check_gaussian_against_log_joint<F>(f: &Fixture, cond: &gibbs::GaussianConditional, set: F)
where
    F: Fn(&mut ModelState, &Vector),
{
    let m = cond.mean().unwrap();
    let mut at_mean = f.state.clone();
    set(&mut at_mean, &m);
    let base = f.lj(&at_mean);
    let d = m.len();
    for j in 0..4 {
        let delta = Vector::from_fn(d, |i, _| 0.05 * ((i + 1) as f64) * if j % 2 == 0 { 1.0 } else { -0.7 } + 0.01 * j as f64);
        let mut moved = f.state.clone();
        set(&mut moved, &(&m + &delta));
        let diff = f.lj(&moved) - base;
        let quad = -0.5 * (delta.transpose() * &cond.precision * &delta)[(0, 0)];
        assert!((diff - quad).abs() < 1e-8 * (1.0 + base.abs()), "{diff} vs {quad}");
    }
}

pub fn gaussian_conditionals_match_log_joint() {
    for dim in [Dim::Two, Dim::Three] {
        let f = Fixture::new(dim, 6);
        let ctx = f.ctx(ScheduleFlags::default());
        for l in 0..f.state.num_particles() {
            let members = f.members(l);
            let c = gibbs::particle_mean_conditional(&f.state, &ctx, l, &members).unwrap();
            check_gaussian_against_log_joint(&f, &c, |s, v| s.particles[l].spatial_mean = v.clone());
            let c = gibbs::particle_velocity_conditional(&f.state, &ctx, l, &members).unwrap();
            check_gaussian_against_log_joint(&f, &c, |s, v| s.particles[l].velocity_mean = v.clone());
        }
        for (k, m) in f.state.cluster_members().iter().enumerate() {
            let c = gibbs::cluster_mean_conditional(&f.state, &ctx, k, m).unwrap();
            check_gaussian_against_log_joint(&f, &c, |s, v| s.clusters[k].spatial_mean = v.clone());
        }
    }
}

pub fn covariance_conditionals_match_log_joint() {
    for dim in [Dim::Two, Dim::Three] {
        let f = Fixture::new(dim, 7);
        let ctx = f.ctx(ScheduleFlags::default());
        let d = dim.value();
        let alt = |m: &Matrix| {
            let mut b = m * 1.3;
            b[(0, 1)] += 0.05;
            b[(1, 0)] += 0.05;
            b + iso(d, 0.1)
        };
        for l in 0..f.state.num_particles() {
            let members = f.members(l);
            let (psi, nu) = gibbs::particle_covariance_posterior(&f.state, &ctx, l, &members);
            let mut s2 = f.state.clone();
            s2.particles[l].spatial_cov = alt(&f.state.particles[l].spatial_cov);
            let want = distributions::inverse_wishart_logpdf(&s2.particles[l].spatial_cov, &psi, nu).unwrap()
                - distributions::inverse_wishart_logpdf(&f.state.particles[l].spatial_cov, &psi, nu).unwrap();
            assert!((f.lj(&s2) - f.lj(&f.state) - want).abs() < 1e-8);

            let (psi, nu) = gibbs::particle_velocity_covariance_posterior(&f.state, &ctx, l, &members);
            let mut s2 = f.state.clone();
            s2.particles[l].velocity_cov = alt(&f.state.particles[l].velocity_cov);
            let want = distributions::inverse_wishart_logpdf(&s2.particles[l].velocity_cov, &psi, nu).unwrap()
                - distributions::inverse_wishart_logpdf(&f.state.particles[l].velocity_cov, &psi, nu).unwrap();
            assert!((f.lj(&s2) - f.lj(&f.state) - want).abs() < 1e-8);
        }
        for (k, m) in f.state.cluster_members().iter().enumerate() {
            let (psi, nu) = gibbs::cluster_covariance_posterior(&f.state, &ctx, k, m);
            let mut s2 = f.state.clone();
            s2.clusters[k].spatial_cov = alt(&f.state.clusters[k].spatial_cov);
            let want = distributions::inverse_wishart_logpdf(&s2.clusters[k].spatial_cov, &psi, nu).unwrap()
                - distributions::inverse_wishart_logpdf(&f.state.clusters[k].spatial_cov, &psi, nu).unwrap();
            assert!((f.lj(&s2) - f.lj(&f.state) - want).abs() < 1e-8);
        }
    }
}

pub fn weight_conditionals_match_log_joint() {
    let f = Fixture::new(Dim::Two, 8);
    let counts: Vec<f64> = f.state.particle_members().iter().map(|m| m.len() as f64).collect();
    let post: Vec<f64> = f.hyper.particle_concentration.iter().zip(&counts).map(|(a, c)| a + c).collect();
    let mut s2 = f.state.clone();
    s2.particle_weights = vec![0.1, 0.3, 0.2, 0.25, 0.15];
    let want = distributions::dirichlet_logpdf(&s2.particle_weights, &post)
        - distributions::dirichlet_logpdf(&f.state.particle_weights, &post);
    assert!((f.lj(&s2) - f.lj(&f.state) - want).abs() < 1e-8);

    let counts: Vec<f64> = f.state.cluster_members().iter().map(|m| m.len() as f64).collect();
    let post: Vec<f64> = f.hyper.cluster_concentration.iter().zip(&counts).map(|(a, c)| a + c).collect();
    let mut s2 = f.state.clone();
    s2.cluster_weights = vec![0.35, 0.65];
    let want = distributions::dirichlet_logpdf(&s2.cluster_weights, &post)
        - distributions::dirichlet_logpdf(&f.state.cluster_weights, &post);
    assert!((f.lj(&s2) - f.lj(&f.state) - want).abs() < 1e-8);
}

fn check_discrete<F>(f: &Fixture, lw: &[f64], set: F)
where
    F: Fn(&mut ModelState, usize),
{
    let mut s0 = f.state.clone();
    set(&mut s0, 0);
    let base = f.lj(&s0);
    for (j, w) in lw.iter().enumerate() {
        let mut s = f.state.clone();
        set(&mut s, j);
        let diff = f.lj(&s) - base;
        assert!((diff - (w - lw[0])).abs() < 1e-8 * (1.0 + base.abs()), "choice {j}: {diff} vs {}", w - lw[0]);
    }
}

pub fn discrete_conditionals_match_log_joint() {
    for dim in [Dim::Two, Dim::Three] {
        let f = Fixture::new(dim, 9);
        let ctx = f.ctx(ScheduleFlags::default());
        for n in [0, 11, 39] {
            let lw = gibbs::point_assignment_log_weights(&f.state, &ctx, n, false).unwrap();
            check_discrete(&f, &lw, |s, j| s.assignments.point_to_particle[n] = j);
        }
        for l in 0..f.state.num_particles() {
            let lw = gibbs::cluster_assignment_log_weights(&f.state, &ctx, l).unwrap();
            check_discrete(&f, &lw, |s, j| s.assignments.particle_to_cluster[l] = j);
        }
        for (k, m) in f.state.cluster_members().iter().enumerate() {
            let lw = gibbs::rotation_log_weights(&f.state, &ctx, k, m);
            check_discrete(&f, &lw, |s, j| s.clusters[k].rotation = f.cands.rotations[j].clone());
            let lw = gibbs::translation_log_weights(&f.state, &ctx, k, m);
            check_discrete(&f, &lw, |s, j| s.clusters[k].translation = f.cands.translations[j].clone());
        }
    }
}

pub fn outlier_and_feature_assignment_match_log_joint() {
    let mut f = Fixture::new(Dim::Two, 10);
    f.hyper.outlier_prob = 0.1;
    f.hyper.feature_var = Some(0.5);
    for (i, o) in f.obs.iter_mut().enumerate() {
        o.feature = Some(Vector::from_vec(vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 0.2]));
    }
    for (l, p) in f.state.particles.iter_mut().enumerate() {
        p.feature_mean = Some(Vector::from_vec(vec![0.1 * l as f64, -0.2, 0.05 * l as f64]));
    }
    let flags = ScheduleFlags {
        enable_outliers: true,
        enable_features: true,
        ..ScheduleFlags::default()
    };
    let ctx = f.ctx(flags);
    for n in [2, 30] {
        let lw = gibbs::point_assignment_log_weights(&f.state, &ctx, n, false).unwrap();
        assert_eq!(lw.len(), f.state.num_particles() + 1);
        check_discrete(&f, &lw, |s, j| s.assignments.point_to_particle[n] = j);
    }
}

// ---------- grid maximization ----------

pub fn grid_argmax_of_log_joint_matches_conditional_mean() {
    let f = Fixture::new(Dim::Two, 11);
    let ctx = f.ctx(ScheduleFlags::default());
    let step = 1e-3;
    let scan = |m: &Vector, set: &dyn Fn(&mut ModelState, &Vector)| {
        for axis in 0..2 {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for i in -300..=300 {
                let mut v = m.clone();
                v[axis] = (m[axis] / step).round() * step + i as f64 * step;
                let mut s = f.state.clone();
                set(&mut s, &v);
                let lj = f.lj(&s);
                if lj > best.0 {
                    best = (lj, v[axis]);
                }
            }
            assert!((best.1 - m[axis]).abs() <= step, "axis {axis}: {} vs {}", best.1, m[axis]);
        }
    };
    let members = f.members(2);
    let m = gibbs::particle_mean_conditional(&f.state, &ctx, 2, &members).unwrap().mean().unwrap();
    scan(&m, &|s, v| s.particles[2].spatial_mean = v.clone());
    let m = gibbs::particle_velocity_conditional(&f.state, &ctx, 2, &members).unwrap().mean().unwrap();
    scan(&m, &|s, v| s.particles[2].velocity_mean = v.clone());
    let cm = f.state.cluster_members();
    let m = gibbs::cluster_mean_conditional(&f.state, &ctx, 0, &cm[0]).unwrap().mean().unwrap();
    scan(&m, &|s, v| s.clusters[0].spatial_mean = v.clone());
}

// ---------- samplers draw from their conditionals ----------

const DRAWS: u64 = 2000;

fn streams(e: u64) -> StepStreams {
    StepStreams::new(77, e)
}

pub fn gaussian_samplers_have_conditional_moments() {
    let f = Fixture::new(Dim::Two, 12);
    let ctx = f.ctx(ScheduleFlags::default());
    let l = 1;
    let members = f.members(l);
    let cond = gibbs::particle_mean_conditional(&f.state, &ctx, l, &members).unwrap();
    let (m, cov) = (cond.mean().unwrap(), cond.covariance().unwrap());
    let mut acc = Vector::zeros(2);
    for e in 0..DRAWS {
        acc += &gibbs::update_particle_means(&f.state, &ctx, streams(e)).unwrap()[l];
    }
    let emp = acc / DRAWS as f64;
    for i in 0..2 {
        let se = (cov[(i, i)] / DRAWS as f64).sqrt();
        assert!((emp[i] - m[i]).abs() < 4.0 * se);
    }

    let cond = gibbs::particle_velocity_conditional(&f.state, &ctx, l, &members).unwrap();
    let (m, cov) = (cond.mean().unwrap(), cond.covariance().unwrap());
    let mut acc = Vector::zeros(2);
    for e in 0..DRAWS {
        acc += &gibbs::update_particle_velocity_means(&f.state, &ctx, streams(e)).unwrap()[l];
    }
    let emp = acc / DRAWS as f64;
    for i in 0..2 {
        assert!((emp[i] - m[i]).abs() < 4.0 * (cov[(i, i)] / DRAWS as f64).sqrt());
    }

    let cm = f.state.cluster_members();
    let cond = gibbs::cluster_mean_conditional(&f.state, &ctx, 0, &cm[0]).unwrap();
    let (m, cov) = (cond.mean().unwrap(), cond.covariance().unwrap());
    let mut acc = Vector::zeros(2);
    for e in 0..DRAWS {
        acc += &gibbs::update_cluster_means(&f.state, &ctx, streams(e)).unwrap()[0];
    }
    let emp = acc / DRAWS as f64;
    for i in 0..2 {
        assert!((emp[i] - m[i]).abs() < 4.0 * (cov[(i, i)] / DRAWS as f64).sqrt());
    }
}

pub fn covariance_samplers_have_inverse_wishart_mean() {
    let f = Fixture::new(Dim::Two, 13);
    let ctx = f.ctx(ScheduleFlags::default());
    let l = 0;
    let (psi, nu) = gibbs::particle_covariance_posterior(&f.state, &ctx, l, &f.members(l));
    let want = &psi / (nu - 3.0);
    let mut acc = Matrix::zeros(2, 2);
    for e in 0..DRAWS {
        acc += &gibbs::update_particle_covariances(&f.state, &ctx, streams(e)).unwrap()[l];
    }
    let emp = acc / DRAWS as f64;
    // inverse-Wishart variance of a diagonal entry: 2 m^2 / (nu - D - 3)
    for i in 0..2 {
        let sd = want[(i, i)] * (2.0 / (nu - 5.0)).sqrt();
        assert!((emp[(i, i)] - want[(i, i)]).abs() < 4.0 * sd / (DRAWS as f64).sqrt());
    }
}

pub fn weight_samplers_have_dirichlet_mean() {
    let f = Fixture::new(Dim::Two, 14);
    let ctx = f.ctx(ScheduleFlags::default());
    let counts: Vec<f64> = f.state.particle_members().iter().map(|m| m.len() as f64 + 1.0).collect();
    let total: f64 = counts.iter().sum();
    let mut acc = vec![0.0; counts.len()];
    for e in 0..DRAWS {
        for (a, w) in acc.iter_mut().zip(gibbs::update_particle_weights(&f.state, &ctx, streams(e)).unwrap()) {
            *a += w;
        }
    }
    for (a, c) in acc.iter().zip(&counts) {
        let p = c / total;
        let sd = (p * (1.0 - p) / (total + 1.0)).sqrt();
        assert!((a / DRAWS as f64 - p).abs() < 4.0 * sd / (DRAWS as f64).sqrt());
    }
}

pub fn categorical_samplers_follow_their_weights() {
    let mut f = Fixture::new(Dim::Two, 15);
    // make the particle's cluster choice genuinely uncertain
    f.state.particles[0].spatial_mean = (&f.state.clusters[0].spatial_mean + &f.state.clusters[1].spatial_mean) / 2.0;
    let ctx = f.ctx(ScheduleFlags::default());
    let lw = gibbs::cluster_assignment_log_weights(&f.state, &ctx, 0).unwrap();
    let p = distributions::normalize_log_weights(&lw).unwrap();
    let mut hits = vec![0.0; p.len()];
    for e in 0..DRAWS {
        hits[gibbs::assign_particles_to_clusters(&f.state, &ctx, streams(e)).unwrap()[0]] += 1.0;
    }
    for (h, q) in hits.iter().zip(&p) {
        let sd = (q * (1.0 - q) / DRAWS as f64).sqrt();
        assert!((h / DRAWS as f64 - q).abs() <= 4.0 * sd + 1e-12);
    }
}

pub fn feature_sampler_matches_conjugate_posterior() {
    let mut f = Fixture::new(Dim::Two, 16);
    let var = 0.5;
    f.hyper.feature_var = Some(var);
    for (i, o) in f.obs.iter_mut().enumerate() {
        o.feature = Some(Vector::from_vec(vec![(i as f64).sin()]));
    }
    for p in &mut f.state.particles {
        p.feature_mean = Some(Vector::zeros(1));
    }
    let ctx = f.ctx(ScheduleFlags {
        enable_features: true,
        ..ScheduleFlags::default()
    });
    let members = f.members(0);
    let prec = 1.0 + members.len() as f64 / var;
    let mean = members.iter().map(|&n| (n as f64).sin()).sum::<f64>() / var / prec;
    let mut acc = 0.0;
    for e in 0..DRAWS {
        acc += gibbs::update_particle_features(&f.state, &ctx, streams(e)).unwrap()[0][0];
    }
    let se = (1.0 / prec / DRAWS as f64).sqrt();
    assert!((acc / DRAWS as f64 - mean).abs() < 4.0 * se);
}

// ---------- prior reductions ----------

pub fn empty_components_reduce_to_priors() {
    let mut f = Fixture::new(Dim::Two, 17);
    // move every point to particle 0 so particle 4 has no data
    for z in &mut f.state.assignments.point_to_particle {
        *z = 0;
    }
    let ctx = f.ctx(ScheduleFlags::default());
    let (psi, nu) = gibbs::particle_covariance_posterior(&f.state, &ctx, 4, &[]);
    assert_eq!(psi, f.hyper.particle_cov_scale);
    assert_eq!(nu, f.hyper.particle_cov_dof);
    let cond = gibbs::particle_velocity_conditional(&f.state, &ctx, 4, &[]).unwrap();
    let z = f.state.assignments.particle_to_cluster[4];
    let induced = rigidmix_core::cluster_induced_velocity(&f.state.clusters[z], &f.state.particles[4].spatial_mean);
    assert_vec_close(&cond.mean().unwrap(), &induced, 1e-12);
    let cond = gibbs::cluster_mean_conditional(&f.state, &ctx, 0, &[]).unwrap();
    assert_vec_close(&cond.mean().unwrap(), &f.hyper.cluster_mean_prior, 1e-12);
    let lw = gibbs::rotation_log_weights(&f.state, &ctx, 0, &[]);
    assert_eq!(lw, f.cands.rotation_log_weights);
}

/// Every oracle by name, for runners outside the test harness.
#[allow(dead_code)]
pub const ORACLES: &[(&str, fn())] = &[
    ("particle_mean_scalar_closed_form", particle_mean_scalar_closed_form),
    ("velocity_mean_scalar_closed_form", velocity_mean_scalar_closed_form),
    ("cluster_mean_scalar_closed_form", cluster_mean_scalar_closed_form),
    ("covariance_posteriors_by_hand", covariance_posteriors_by_hand),
    ("point_assignment_weights_by_hand", point_assignment_weights_by_hand),
    ("gaussian_conditionals_match_log_joint", gaussian_conditionals_match_log_joint),
    ("covariance_conditionals_match_log_joint", covariance_conditionals_match_log_joint),
    ("weight_conditionals_match_log_joint", weight_conditionals_match_log_joint),
    ("discrete_conditionals_match_log_joint", discrete_conditionals_match_log_joint),
    ("outlier_and_feature_assignment_match_log_joint", outlier_and_feature_assignment_match_log_joint),
    ("grid_argmax_of_log_joint_matches_conditional_mean", grid_argmax_of_log_joint_matches_conditional_mean),
    ("gaussian_samplers_have_conditional_moments", gaussian_samplers_have_conditional_moments),
    ("covariance_samplers_have_inverse_wishart_mean", covariance_samplers_have_inverse_wishart_mean),
    ("weight_samplers_have_dirichlet_mean", weight_samplers_have_dirichlet_mean),
    ("categorical_samplers_follow_their_weights", categorical_samplers_follow_their_weights),
    ("feature_sampler_matches_conjugate_posterior", feature_sampler_matches_conjugate_posterior),
    ("empty_components_reduce_to_priors", empty_components_reduce_to_priors),
];
