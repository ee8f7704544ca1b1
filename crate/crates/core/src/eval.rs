//! Segmentation metrics: probe-point accuracy and Jaccard, matter-weighted
//! Jaccard, and the adjusted Rand index.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::model::ModelState;
use crate::rng::{domain, stream};

pub const DEFAULT_PROBES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeEval {
    /// Mean over probes of the pixel-wise accuracy of the probe's segment.
    pub accuracy: f64,
    pub mean_jaccard: f64,
    pub jaccards: Vec<f64>,
    pub probes: Vec<usize>,
    /// Fraction of probes whose segment contains each element.
    pub prob_map: Vec<f64>,
}

/// Segment ids: 4-connected components of equal labels on a `width`-wide
/// grid, or plain label classes when `width` is `None`. Unlabeled elements
/// get `None`.
pub fn segment_ids(pred: &[Option<usize>], width: Option<usize>) -> Result<Vec<Option<usize>>> {
    let Some(w) = width else {
        let mut ids = BTreeMap::new();
        return Ok(pred
            .iter()
            .map(|p| {
                p.map(|label| {
                    let next = ids.len();
                    *ids.entry(label).or_insert(next)
                })
            })
            .collect());
    };
    if w == 0 || pred.len() % w != 0 {
        return Err(invalid("width", "must divide the number of grid cells"));
    }
    let h = pred.len() / w;
    let mut ids = vec![None; pred.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..pred.len() {
        if pred[start].is_none() || ids[start].is_some() {
            continue;
        }
        ids[start] = Some(next);
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut neighbors = [None; 4];
            if x > 0 {
                neighbors[0] = Some(i - 1);
            }
            if x + 1 < w {
                neighbors[1] = Some(i + 1);
            }
            if y > 0 {
                neighbors[2] = Some(i - w);
            }
            if y + 1 < h {
                neighbors[3] = Some(i + w);
            }
            for j in neighbors.into_iter().flatten() {
                if ids[j].is_none() && pred[j] == pred[start] {
                    ids[j] = Some(next);
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    Ok(ids)
}

/// Probe-point evaluation of a predicted labeling against a ground-truth mask.
///
/// Probes are drawn uniformly (with replacement) from the mask. Each probe
/// selects the predicted segment containing it; a probe on an unlabeled
/// element has an empty segment and scores Jaccard 0.
pub fn probe_point_eval(
    pred: &[Option<usize>],
    gt_mask: &[bool],
    width: Option<usize>,
    n_probes: usize,
    seed: u64,
) -> Result<ProbeEval> {
    if pred.len() != gt_mask.len() {
        return Err(Error::ShapeMismatch {
            context: "probe_point_eval",
            expected: gt_mask.len(),
            found: pred.len(),
        });
    }
    let region: Vec<usize> = (0..gt_mask.len()).filter(|&i| gt_mask[i]).collect();
    if region.is_empty() {
        return Err(Error::Empty("gt_mask"));
    }
    if n_probes == 0 {
        return Err(invalid("n_probes", "must be at least 1"));
    }
    let ids = segment_ids(pred, width)?;
    let n_segments = ids.iter().flatten().max().map_or(0, |m| m + 1);
    let mut size = vec![0usize; n_segments];
    let mut overlap = vec![0usize; n_segments];
    for (id, &g) in ids.iter().zip(gt_mask) {
        if let Some(s) = *id {
            size[s] += 1;
            overlap[s] += g as usize;
        }
    }
    let total = gt_mask.len() as f64;
    let gt_size = region.len();

    let mut rng = stream(seed, domain::EVAL, 0, 0);
    let mut hits = vec![0usize; n_segments];
    let mut probes = Vec::with_capacity(n_probes);
    let mut jaccards = Vec::with_capacity(n_probes);
    let mut acc_sum = 0.0;
    for _ in 0..n_probes {
        let p = region[rng.random_range(0..region.len())];
        probes.push(p);
        let (inter, seg) = match ids[p] {
            Some(s) => {
                hits[s] += 1;
                (overlap[s], size[s])
            }
            None => (0, 0),
        };
        let union = seg + gt_size - inter;
        jaccards.push(if seg == 0 { 0.0 } else { inter as f64 / union as f64 });
        // disagreements: segment outside the mask plus mask outside the segment
        let wrong = (seg - inter) + (gt_size - inter);
        acc_sum += 1.0 - wrong as f64 / total;
    }
    let prob_map = ids
        .iter()
        .map(|id| id.map_or(0.0, |s| hits[s] as f64 / n_probes as f64))
        .collect();
    Ok(ProbeEval {
        accuracy: acc_sum / n_probes as f64,
        mean_jaccard: jaccards.iter().sum::<f64>() / n_probes as f64,
        jaccards,
        probes,
        prob_map,
    })
}

/// One particle's contribution to the matter-weighted Jaccard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatterParticle {
    /// Number of elements the particle covers.
    pub count: usize,
    pub weight: f64,
    /// Fraction of the particle's elements inside the ground-truth region.
    pub overlap: f64,
    pub foreground: bool,
}

impl MatterParticle {
    /// Attribute to the foreground when most of the particle overlaps it.
    pub fn attributed(count: usize, weight: f64, overlap: f64) -> Self {
        Self {
            count,
            weight,
            overlap,
            foreground: overlap > 0.5,
        }
    }
}

/// Numerator and denominator of the matter-weighted Jaccard.
pub fn matter_jaccard_terms(particles: &[MatterParticle]) -> (f64, f64) {
    let mut fg = 0.0;
    let mut bg = 0.0;
    for p in particles {
        let w = p.count as f64 * p.weight;
        if p.foreground {
            fg += w * p.overlap;
        } else {
            bg += w * (1.0 - p.overlap);
        }
    }
    (fg, fg + bg)
}

/// Matter-weighted Jaccard; 0 when the denominator vanishes.
pub fn matter_weighted_jaccard(particles: &[MatterParticle]) -> f64 {
    let (num, den) = matter_jaccard_terms(particles);
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Particle summaries for the matter-weighted Jaccard: member counts, mixture
/// weights, and the fraction of each particle's points flagged foreground.
pub fn matter_particles(state: &ModelState, foreground: &[bool]) -> Result<Vec<MatterParticle>> {
    if foreground.len() != state.assignments.point_to_particle.len() {
        return Err(Error::ShapeMismatch {
            context: "matter_particles",
            expected: state.assignments.point_to_particle.len(),
            found: foreground.len(),
        });
    }
    Ok(state
        .particle_members()
        .iter()
        .zip(&state.particle_weights)
        .map(|(members, &w)| {
            let inside = members.iter().filter(|&&n| foreground[n]).count();
            let overlap = if members.is_empty() { 0.0 } else { inside as f64 / members.len() as f64 };
            MatterParticle::attributed(members.len(), w, overlap)
        })
        .collect())
}

fn pairs(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same elements.
///
/// Returns 1 when the expected and maximal indices coincide (for example two
/// single-cluster labelings or fewer than two elements).
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "adjusted_rand_index",
            expected: a.len(),
            found: b.len(),
        });
    }
    let mut table: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<&B, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len() as u64);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
