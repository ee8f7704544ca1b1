//! Static SVG diagnostics: observed points and one-sigma particle ellipses,
//! colored by cluster. 3D states are shown in their first two coordinates.

use std::fmt::Write as _;
use std::path::Path;

use rigidmix_core::model::{ModelState, PointObservation};

use crate::error::{io_error, Result};

const SIZE: f64 = 640.0;
const MARGIN: f64 = 20.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
];
const UNASSIGNED: &str = "#b0b0b0";

fn color(cluster: Option<usize>) -> &'static str {
    cluster.map_or(UNASSIGNED, |c| PALETTE[c % PALETTE.len()])
}

/// Semi-axes and orientation (radians) of the one-sigma ellipse of a 2x2
/// covariance `[[a, b], [b, c]]`.
pub fn ellipse_axes(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let major = (mean + radius).max(0.0).sqrt();
    let minor = (mean - radius).max(0.0).sqrt();
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    (major, minor, angle)
}

struct View {
    min: [f64; 2],
    scale: f64,
}

impl View {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if !lo[0].is_finite() {
            lo = [-1.0, -1.0];
            hi = [1.0, 1.0];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        Self {
            min: lo,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    /// Screen coordinates, y pointing up.
    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }
}

/// Render one frame. `used[i]` is the observation index of the state's point
/// `i`; observations not listed are drawn unassigned.
pub fn render_frame_svg(state: &ModelState, obs: &[PointObservation], used: &[usize]) -> String {
    let xy = |v: &rigidmix_core::linalg::Vector| [v[0], v[1]];
    let mut extent: Vec<[f64; 2]> = obs.iter().map(|o| xy(&o.position)).collect();
    for p in &state.particles {
        let (major, _, _) = ellipse_axes(p.spatial_cov[(0, 0)], p.spatial_cov[(0, 1)], p.spatial_cov[(1, 1)]);
        let m = xy(&p.spatial_mean);
        extent.push([m[0] - major, m[1] - major]);
        extent.push([m[0] + major, m[1] + major]);
    }
    let view = View::fit(extent.into_iter());

    let mut point_cluster = vec![None; obs.len()];
    for (&n, &l) in used.iter().zip(&state.assignments.point_to_particle) {
        if n < obs.len() {
            point_cluster[n] = state.assignments.particle_to_cluster.get(l).copied();
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, "<g>");
    for (o, c) in obs.iter().zip(&point_cluster) {
        let (x, y) = view.map(xy(&o.position));
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="{}"/>"#, color(*c));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "<g fill=\"none\" stroke-width=\"1.5\">");
    for (l, p) in state.particles.iter().enumerate() {
        let cov = &p.spatial_cov;
        let (major, minor, angle) = ellipse_axes(cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
        let (x, y) = view.map(xy(&p.spatial_mean));
        let cluster = state.assignments.particle_to_cluster.get(l).copied();
        let _ = writeln!(
            s,
            r#"<ellipse cx="{x:.2}" cy="{y:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.3} {x:.2} {y:.2})" stroke="{}"/>"#,
            major * view.scale,
            minor * view.scale,
            -angle.to_degrees(),
            color(cluster)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

pub fn write_frame_svg(path: &Path, state: &ModelState, obs: &[PointObservation], used: &[usize]) -> Result<()> {
    std::fs::write(path, render_frame_svg(state, obs, used)).map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rigidmix_core::model::{sample_forward, Dim, HyperParams};

    #[test]
    fn axes_of_diagonal_and_rotated_covariances() {
        let (a, b, t) = ellipse_axes(4.0, 0.0, 1.0);
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && t.abs() < 1e-12);
        // rotate diag(4, 1) by 30 degrees
        let th = 30f64.to_radians();
        let (c, s) = (th.cos(), th.sin());
        let cov = [4.0 * c * c + s * s, 3.0 * c * s, 4.0 * s * s + c * c];
        let (a, b, t) = ellipse_axes(cov[0], cov[1], cov[2]);
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (t - th).abs() < 1e-12);
    }

    #[test]
    fn svg_has_one_ellipse_per_particle_and_balanced_tags() {
        for dim in [Dim::Two, Dim::Three] {
            let h = HyperParams::defaults(dim, 2, 7);
            let (st, obs) = sample_forward(&h, 2, 7, 40, 1).unwrap();
            let used: Vec<usize> = (0..obs.len()).collect();
            let svg = render_frame_svg(&st, &obs, &used);
            assert!(svg.starts_with("<svg ") && svg.trim_end().ends_with("</svg>"));
            assert_eq!(svg.matches("<ellipse ").count(), 7);
            assert_eq!(svg.matches("<circle ").count(), 40);
            assert_eq!(svg.matches("<g").count(), svg.matches("</g>").count());
            assert!(!svg.contains("NaN"));
        }
    }
}
