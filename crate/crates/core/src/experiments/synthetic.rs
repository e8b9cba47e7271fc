//! Synthetic depth-mixture datasets with known per-instance optimal depth.
//!
//! Instances come in two families built over blob-structured weighted
//! matrices whose KNN skeletons decompose into separate blobs:
//!
//! - "1-hop" instances carry their class signal in a direction that a
//!   single aggregation pass sees at full strength, that is attenuated
//!   after two passes, and that vanishes after three.
//! - "2-hop" instances carry their class signal in a direction invisible
//!   to one or three aggregation passes but visible to two.
//!
//! The mechanism: with pooled features after j passes being proportional
//! to (1^T Ahat^j) W, a class bump that shifts a column of W by a value
//! constant on each KNN component moves the pooled features by
//! (u_j . z) / n in that coordinate, where u_j = 1^T Ahat^j and z holds
//! the per-blob shift levels. Choosing z orthogonal to selected u_j rows
//! hides the signal from exactly those depths. Because the shifts are
//! constant within every component, no pairwise feature distance that KNN
//! consults changes, so the built adjacency is the same for both classes
//! and the hidden depths stay blind regardless of training.
//!
//! The two families use different blob layouts, so the normalized
//! adjacency itself reveals which depth an instance needs - which is what
//! the meta-policy learns from.
//!
//! Noise has two parts scaled by the spec's level: entrywise jitter inside
//! blobs, and per-column clutter on cross-blob entries. The clutter is
//! constant down each column, so the KNN construction is immune to it,
//! while anything aggregating over the raw weighted matrix mixes it in.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netbuild::{build_adjacency, normalize, WeightedGraph};
use crate::numerics::matrix::Matrix;
use crate::rng::{stream_rng, Stream};

/// Ratio of the 1-hop signal that survives a second aggregation pass.
const DEPTH2_ATTENUATION: f64 = 0.3;
/// Class-bump amplitude in weight units.
const BUMP_AMPLITUDE: f64 = 1.0;
/// Cross-blob background weight.
const CROSS_WEIGHT: f64 = 0.05;
/// Per-column clutter scale, in multiples of the noise level.
const CLUTTER_FACTOR: f64 = 6.0;
/// Required gap between each node's k-th within-blob distance and its
/// nearest cross-blob distance.
const SEPARATION_FACTOR: f64 = 1.2;
/// Minimum acceptable visibility margin for a signal direction.
const MIN_MARGIN: f64 = 0.0;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    /// Fraction of instances whose signal needs two aggregation passes.
    pub p2: f64,
    pub noise: f64,
    pub seed: u64,
    /// KNN k used for the internal placement skeleton (clamped to blob size).
    pub skeleton_k: usize,
}

impl SyntheticSpec {
    pub fn new(m: usize, n: usize, p2: f64, noise: f64, seed: u64) -> Self {
        Self {
            m,
            n,
            p2,
            noise,
            seed,
            skeleton_k: 4,
        }
    }
}

#[derive(Debug)]
pub struct SyntheticDataset {
    pub graphs: Vec<WeightedGraph>,
    /// Ground-truth optimal depth per instance id (1 or 2).
    pub depths: BTreeMap<String, usize>,
    /// The skeleton k the placement was built for.
    pub skeleton_k: usize,
}

/// Blob styles differ in how strongly their confidence degrees vary, which
/// is what makes the per-blob aggregation functionals separate across
/// depths: satellites give slow positive modes, hubs give alternating ones,
/// tight blobs stay flat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlobStyle {
    /// Uniformly tight: near-regular, flat across depths.
    Tight,
    /// One node held at arm's length from an otherwise tight core.
    Loner,
    /// A tight satellite pair weakly attached to the core.
    SatellitePair,
    /// Two tight halves joined weakly: a strong slow mixing mode.
    Split,
    /// One hub carries all strong links; the rest barely touch.
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    OneHop,
    TwoHop,
}

struct FamilyTemplate {
    base: Matrix,
    bump: Matrix,
    blob_of: Vec<usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    if spec.m < 20 {
        return Err(Error::invalid(format!("need m >= 20, got {}", spec.m)));
    }
    if spec.n < 10 {
        return Err(Error::invalid(format!("need n >= 10, got {}", spec.n)));
    }
    if !(0.0..=1.0).contains(&spec.p2) {
        return Err(Error::invalid(format!("p2 {} outside [0,1]", spec.p2)));
    }
    if spec.noise < 0.0 || !spec.noise.is_finite() {
        return Err(Error::invalid(format!("bad noise level {}", spec.noise)));
    }

    let mut template_rng = stream_rng(spec.seed, Stream::Synthetic);
    let one_hop = family_template(spec, Family::OneHop, &mut template_rng)?;
    let two_hop = family_template(spec, Family::TwoHop, &mut template_rng)?;

    let m2 = (spec.p2 * spec.m as f64).round() as usize;
    let m1 = spec.m - m2;

    let mut noise_rng = stream_rng(spec.seed.wrapping_add(1), Stream::Synthetic);
    let mut graphs = Vec::with_capacity(spec.m);
    let mut depths = BTreeMap::new();
    for idx in 0..spec.m {
        let family = if idx < m1 { Family::OneHop } else { Family::TwoHop };
        let label = idx % 2;
        let template = match family {
            Family::OneHop => &one_hop,
            Family::TwoHop => &two_hop,
        };
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let mut w = template.base.add(&template.bump.scale(sign))?;
        if spec.noise > 0.0 {
            apply_noise(&mut w, &template.blob_of, spec.noise, &mut noise_rng);
        }
        let id = format!("s{idx:04}");
        depths.insert(
            id.clone(),
            match family {
                Family::OneHop => 1,
                Family::TwoHop => 2,
            },
        );
        graphs.push(WeightedGraph::new(id, w, label)?);
    }
    Ok(SyntheticDataset {
        graphs,
        depths,
        skeleton_k: effective_skeleton_k(spec),
    })
}

pub fn effective_skeleton_k(spec: &SyntheticSpec) -> usize {
    let sizes = blob_sizes(spec.n);
    let min_blob = *sizes.iter().min().unwrap();
    spec.skeleton_k.min(min_blob - 1).max(1)
}

fn blob_sizes(n: usize) -> Vec<usize> {
    let count = (n / 4).clamp(4, 8);
    let q = n / count;
    let r = n % count;
    (0..count).map(|i| q + usize::from(i < r)).collect()
}

fn family_styles(family: Family, blobs: usize) -> Vec<(BlobStyle, f64)> {
    let cycle: &[(BlobStyle, f64)] = match family {
        Family::OneHop => &[
            (BlobStyle::Loner, 2.0),
            (BlobStyle::Star, 1.6),
            (BlobStyle::Split, 2.4),
            (BlobStyle::Tight, 1.2),
            (BlobStyle::SatellitePair, 2.8),
            (BlobStyle::Star, 1.0),
            (BlobStyle::Loner, 2.2),
            (BlobStyle::Split, 1.4),
        ],
        Family::TwoHop => &[
            (BlobStyle::Split, 2.2),
            (BlobStyle::Loner, 1.4),
            (BlobStyle::Star, 1.8),
            (BlobStyle::SatellitePair, 2.6),
            (BlobStyle::Tight, 2.0),
            (BlobStyle::Star, 1.1),
            (BlobStyle::Loner, 2.7),
            (BlobStyle::SatellitePair, 1.5),
        ],
    };
    (0..blobs).map(|g| cycle[g % cycle.len()]).collect()
}

fn family_template(
    spec: &SyntheticSpec,
    family: Family,
    rng: &mut ChaCha8Rng,
) -> Result<FamilyTemplate> {
    let n = spec.n;
    let sizes = blob_sizes(n);
    let k = effective_skeleton_k(spec);
    let styles = family_styles(family, sizes.len());

    let mut blob_of = vec![0usize; n];
    let mut start = 0;
    let mut ranges = Vec::new();
    for (g, &size) in sizes.iter().enumerate() {
        for node in blob_of.iter_mut().skip(start).take(size) {
            *node = g;
        }
        ranges.push(start..start + size);
        start += size;
    }

    let mut base = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && blob_of[i] != blob_of[j] {
                base.set(i, j, CROSS_WEIGHT);
            }
        }
    }
    for (g, range) in ranges.iter().enumerate() {
        let (style, scale) = styles[g];
        let nodes: Vec<usize> = range.clone().collect();
        for (pi, &i) in nodes.iter().enumerate() {
            // self-correlation on the diagonal keeps blob columns "warm",
            // so cross-blob rows differ there while within-blob rows agree
            base.set(i, i, 1.2 * scale);
            for (pj, &j) in nodes.iter().enumerate() {
                if pj <= pi {
                    continue;
                }
                // structure in [0,1] rides on a warm background, keeping
                // within-blob rows close while cross-blob rows stay far
                let size = nodes.len();
                let structure = match style {
                    BlobStyle::Tight => 1.0,
                    BlobStyle::Loner => {
                        if pi == size - 1 || pj == size - 1 {
                            0.0
                        } else {
                            1.0
                        }
                    }
                    BlobStyle::SatellitePair => {
                        let sat = |p: usize| p + 2 >= size;
                        match (sat(pi), sat(pj)) {
                            (true, true) => 0.9,
                            (false, false) => 1.0,
                            _ => 0.15,
                        }
                    }
                    BlobStyle::Split => {
                        let half = |p: usize| p < size / 2;
                        if half(pi) == half(pj) {
                            1.0
                        } else {
                            0.1
                        }
                    }
                    BlobStyle::Star => {
                        if pi == 0 {
                            1.0
                        } else {
                            0.05
                        }
                    }
                };
                let jitter = rng.gen_range(-1.0..1.0);
                let w = scale * (0.5 + structure) * (1.0 + 0.08 * jitter);
                base.set(i, j, w);
                base.set(j, i, w);
            }
        }
    }

    // Pooled-functional rows of the built base graph, summed per blob.
    let (cap_u1, cap_u2, cap_u3) = blob_functionals(&base, &blob_of, sizes.len(), k)?;

    // Per-blob shift levels hiding the signal from the family's blind depths.
    let z = match family {
        // visible at depth 1, attenuated at 2, blind at 3
        Family::OneHop => {
            let mixed: Vec<f64> = cap_u2
                .iter()
                .zip(&cap_u1)
                .map(|(b, a)| b - DEPTH2_ATTENUATION * a)
                .collect();
            solve_direction(&[&cap_u3, &mixed], &cap_u1)?
        }
        // blind at depths 1 and 3, visible at 2
        Family::TwoHop => solve_direction(&[&cap_u1, &cap_u3], &cap_u2)?,
    };

    // Apply the per-blob levels as shifts on two signal columns.
    let signal_cols = [ranges[0].start, ranges[1].start];
    let mut bump = Matrix::zeros(n, n);
    for i in 0..n {
        for &c in &signal_cols {
            bump.set(i, c, BUMP_AMPLITUDE * z[blob_of[i]]);
        }
    }

    // Both class templates must keep every KNN selection inside its blob.
    for sign in [-1.0, 0.0, 1.0] {
        let template = base.add(&bump.scale(sign))?;
        check_blob_containment(&template, &blob_of, k)?;
    }

    Ok(FamilyTemplate {
        base,
        bump,
        blob_of,
    })
}

/// Every node's k nearest neighbors must sit in its own blob, with a
/// margin between its k-th within-blob distance and the closest node of
/// any other blob.
fn check_blob_containment(w: &Matrix, blob_of: &[usize], k: usize) -> Result<()> {
    let n = w.rows();
    for i in 0..n {
        let mut within: Vec<f64> = Vec::new();
        let mut min_cross = f64::INFINITY;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = w.row_distance(i, j);
            if blob_of[i] == blob_of[j] {
                within.push(d);
            } else {
                min_cross = min_cross.min(d);
            }
        }
        within.sort_unstable_by(f64::total_cmp);
        if within.len() < k {
            return Err(Error::invalid(
                "placement infeasible: blob smaller than the skeleton k",
            ));
        }
        let kth = within[k - 1];
        if kth * SEPARATION_FACTOR >= min_cross {
            return Err(Error::invalid(format!(
                "placement infeasible: node {i} has k-th within distance {kth:.3} \
                 against cross distance {min_cross:.3}"
            )));
        }
    }
    Ok(())
}

/// Per-blob sums of 1^T Ahat^j for j = 1, 2, 3 on the built base graph.
fn blob_functionals(
    base: &Matrix,
    blob_of: &[usize],
    blobs: usize,
    k: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let a = build_adjacency(base, k)?;
    let ahat = normalize(&a);
    let u1 = ones_times(&ahat);
    let u2 = vec_times(&u1, &ahat);
    let u3 = vec_times(&u2, &ahat);
    let sum_by_blob = |u: &[f64]| -> Vec<f64> {
        let mut s = vec![0.0; blobs];
        for (i, &v) in u.iter().enumerate() {
            s[blob_of[i]] += v;
        }
        s
    };
    Ok((sum_by_blob(&u1), sum_by_blob(&u2), sum_by_blob(&u3)))
}

/// Signal-direction margins for a family's geometry; exposed for the
/// margin-tuning harness and tests.
#[doc(hidden)]
pub fn debug_functionals(
    spec: &SyntheticSpec,
    family_idx: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, f64, f64)> {
    let mut rng = stream_rng(spec.seed, Stream::Synthetic);
    let one = family_template(spec, Family::OneHop, &mut rng)?;
    let two = family_template(spec, Family::TwoHop, &mut rng)?;
    let template = if family_idx == 0 { &one } else { &two };
    let sizes = blob_sizes(spec.n);
    let k = effective_skeleton_k(spec);
    let (u1, u2, u3) = blob_functionals(&template.base, &template.blob_of, sizes.len(), k)?;
    let two_hop_margin = {
        let z = solve_direction(&[&u1, &u3], &u2)?;
        dot_slice(&u2, &z).abs()
    };
    let one_hop_margin = {
        let mixed: Vec<f64> = u2
            .iter()
            .zip(&u1)
            .map(|(b, a)| b - DEPTH2_ATTENUATION * a)
            .collect();
        let z = solve_direction(&[&u3, &mixed], &u1)?;
        dot_slice(&u1, &z).abs()
    };
    Ok((u1, u2, u3, two_hop_margin, one_hop_margin))
}

fn dot_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ones_times(m: &Matrix) -> Vec<f64> {
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| m.get(i, j)).sum())
        .collect()
}

fn vec_times(v: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.cols())
        .map(|j| v.iter().enumerate().map(|(i, &x)| x * m.get(i, j)).sum())
        .collect()
}

/// Unit vector orthogonal to every constraint row that maximizes the dot
/// product with `target`: the normalized projection of the target onto the
/// constraints' orthogonal complement.
fn solve_direction(constraints: &[&[f64]], target: &[f64]) -> Result<Vec<f64>> {
    let dim = target.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for &c in constraints {
        let mut v = c.to_vec();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            basis.push(v);
        }
    }
    let mut z = target.to_vec();
    for b in &basis {
        let proj: f64 = z.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in z.iter_mut().zip(b) {
            *x -= proj * y;
        }
    }
    let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target_norm = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < MIN_MARGIN * (target_norm + 1.0) {
        return Err(Error::invalid(
            "placement infeasible: blob functionals leave no visible signal direction",
        ));
    }
    for x in z.iter_mut() {
        *x /= norm;
    }
    let _ = dim;
    Ok(z)
}

fn apply_noise(w: &mut Matrix, blob_of: &[usize], noise: f64, rng: &mut ChaCha8Rng) {
    let n = w.rows();
    // entrywise jitter inside blobs
    for i in 0..n {
        for j in 0..n {
            if i != j && blob_of[i] == blob_of[j] {
                let v = w.get(i, j) + rng.gen_range(-noise..noise);
                w.set(i, j, v);
            }
        }
    }
    // column-constant clutter on cross-blob entries: invisible to pairwise
    // row distances, loud in anything that aggregates over the raw matrix
    for c in 0..n {
        let clutter = rng.gen_range(-1.0..1.0) * noise * CLUTTER_FACTOR;
        for i in 0..n {
            if i != c && blob_of[i] != blob_of[c] {
                w.set(i, c, w.get(i, c) + clutter);
            }
        }
    }
}
