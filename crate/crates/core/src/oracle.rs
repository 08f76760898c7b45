//! Brute-force ground truth at tiny scale.
//!
//! These routines share nothing with the engine beyond the graph and cell
//! types, so a bug in the engine cannot confirm itself: distributions are
//! enumerated pattern by pattern, likelihood ratios are per-bit products,
//! and the LPs are solved by vertex enumeration in plain linear arithmetic.

use std::collections::BTreeMap;

use itertools::Itertools;

use crate::engine::{RadiusVector, RegionCell};
use crate::graph::GraphBits;
use crate::partition::NodePairPartition;
use crate::smoothing::{Label, LabelOracle, NoiseSpec};
use crate::stats::ConfidenceBounds;
use crate::{Error, Result};

const MAX_NOISY_BITS: usize = 20;
const MAX_BALL: usize = 100_000;
const MAX_LP_CELLS: usize = 12;

/// Pair indices subject to noise (assigned to a region with positive flip
/// probability), with their probabilities.
fn noisy_bits(partition: &NodePairPartition, noise: &NoiseSpec) -> Vec<(usize, f64)> {
    (0..partition.num_pairs())
        .filter_map(|k| {
            partition
                .region_of(k)
                .map(|i| (k, noise.probs()[i]))
                .filter(|&(_, p)| p > 0.0)
        })
        .collect()
}

/// Exact smoothed label distribution by summing over all flip patterns of
/// the noisy bits. Capped at 2^20 patterns.
pub fn exact_smoothed_distribution<O: LabelOracle + ?Sized>(
    x: &GraphBits,
    classify: &O,
    partition: &NodePairPartition,
    noise: &NoiseSpec,
) -> Result<BTreeMap<Label, f64>> {
    if partition.num_nodes() != x.num_nodes() {
        return Err(Error::invalid("partition does not match graph"));
    }
    if partition.region_count() != noise.region_count() {
        return Err(Error::invalid("noise spec does not match partition"));
    }
    let bits = noisy_bits(partition, noise);
    let m = bits.len();
    if m > MAX_NOISY_BITS {
        return Err(Error::ResourceLimit(format!(
            "{m} noisy bits exceed the exact-enumeration cap of {MAX_NOISY_BITS}"
        )));
    }
    let mut dist: BTreeMap<Label, f64> = BTreeMap::new();
    for pattern in 0u32..(1u32 << m) {
        let mut prob = 1.0f64;
        let mut flips = Vec::new();
        for (bit_pos, &(k, p)) in bits.iter().enumerate() {
            if pattern >> bit_pos & 1 == 1 {
                prob *= p;
                flips.push(k);
            } else {
                prob *= 1.0 - p;
            }
        }
        let sample = x.flipped(&flips)?;
        let label = classify.label(&sample)?;
        *dist.entry(label).or_insert(0.0) += prob;
    }
    Ok(dist)
}

/// Both LP optima by enumerating every basic feasible solution: at a vertex
/// of `{h : h . mass = target, 0 <= h <= 1}` at most one coordinate is
/// fractional, so all candidates arise from a saturated subset plus one
/// fractional cell. Capped at 12 cells.
pub fn exhaustive_lp(p_target: f64, cells: &[RegionCell]) -> Result<(f64, f64)> {
    if cells.len() > MAX_LP_CELLS {
        return Err(Error::ResourceLimit(format!(
            "{} cells exceed the vertex-enumeration cap of {MAX_LP_CELLS}",
            cells.len()
        )));
    }
    const TOL: f64 = 1e-9;
    let masses: Vec<f64> = cells.iter().map(|c| c.mass).collect();
    let objectives: Vec<f64> = cells.iter().map(|c| c.log_ratio.exp() * c.mass).collect();
    let t = cells.len();
    let mut best_min = f64::INFINITY;
    let mut best_max = f64::NEG_INFINITY;
    for subset in 0u32..(1u32 << t) {
        let mut mass_sum = 0.0;
        let mut obj_sum = 0.0;
        for (j, (&m, &o)) in masses.iter().zip(&objectives).enumerate() {
            if subset >> j & 1 == 1 {
                mass_sum += m;
                obj_sum += o;
            }
        }
        if (mass_sum - p_target).abs() <= TOL {
            best_min = best_min.min(obj_sum);
            best_max = best_max.max(obj_sum);
        }
        for j in 0..t {
            if subset >> j & 1 == 1 || masses[j] <= TOL {
                continue;
            }
            let fraction = (p_target - mass_sum) / masses[j];
            if (-TOL..=1.0 + TOL).contains(&fraction) {
                let value = obj_sum + fraction.clamp(0.0, 1.0) * objectives[j];
                best_min = best_min.min(value);
                best_max = best_max.max(value);
            }
        }
    }
    if best_min.is_infinite() {
        let total: f64 = masses.iter().sum();
        return Err(Error::InfeasibleTarget {
            target: p_target,
            total,
        });
    }
    Ok((best_min, best_max))
}

/// Exact margin for one perturbed input, computed from first principles:
/// every outcome pattern is its own LP atom with a per-bit-product ratio.
fn atomic_margin(
    x: &GraphBits,
    x_tilde: &GraphBits,
    bits: &[(usize, f64)],
    p_a_lower: f64,
    p_b_upper: f64,
) -> f64 {
    let m = bits.len();
    // one atom per outcome pattern over the noisy bits
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(1 << m);
    for pattern in 0u32..(1u32 << m) {
        let mut p_x = 1.0f64;
        let mut p_xt = 1.0f64;
        for (bit_pos, &(k, p)) in bits.iter().enumerate() {
            let z_bit = if pattern >> bit_pos & 1 == 1 {
                !x.bit(k)
            } else {
                x.bit(k)
            };
            p_x *= if z_bit == x.bit(k) { 1.0 - p } else { p };
            p_xt *= if z_bit == x_tilde.bit(k) { 1.0 - p } else { p };
        }
        atoms.push((p_x, p_xt));
    }
    atoms.sort_by(|a, b| (a.1 / a.0).total_cmp(&(b.1 / b.0)));
    let fill = |budget: f64, from_low: bool| -> f64 {
        let mut remaining = budget;
        let mut value = 0.0;
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if from_low {
            Box::new(atoms.iter())
        } else {
            Box::new(atoms.iter().rev())
        };
        for &(mass, tilde) in iter {
            if remaining <= 0.0 {
                break;
            }
            let take = remaining.min(mass);
            value += take / mass * tilde;
            remaining -= take;
        }
        value
    };
    fill(p_a_lower, true) - fill(p_b_upper, false)
}

/// Margin statistics of one sphere (fixed per-region distance vector).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereStat {
    pub min_margin: f64,
    pub max_margin: f64,
    pub count: usize,
}

/// Outcome of exhaustive worst-case search over a ball.
#[derive(Debug, Clone)]
pub struct WorstCaseReport {
    pub min_margin: f64,
    pub argmin: GraphBits,
    /// Keyed by per-region distance vector.
    pub spheres: BTreeMap<Vec<usize>, SphereStat>,
    /// Exact smoothed top label at the centre.
    pub smoothed_top_label: Label,
    /// Whether the exact smoothed prediction equals the centre's top label
    /// at every point of the ball.
    pub prediction_constant: bool,
}

/// Enumerate every perturbed input in the ball with per-region budgets `r`
/// and compute its exact margin from first principles. Noise-free pairs are
/// never perturbed. Caps: 5-node graphs, 10^5 ball elements.
pub fn exhaustive_worst_case<O: LabelOracle + ?Sized>(
    x: &GraphBits,
    bounds: &ConfidenceBounds,
    r: &RadiusVector,
    partition: &NodePairPartition,
    noise: &NoiseSpec,
    classify: &O,
) -> Result<WorstCaseReport> {
    if x.num_nodes() > 5 {
        return Err(Error::ResourceLimit(format!(
            "{}-node graph exceeds the exhaustive-search cap of 5 nodes",
            x.num_nodes()
        )));
    }
    if partition.region_count() != r.len() || noise.region_count() != r.len() {
        return Err(Error::invalid(
            "radius, partition and noise disagree on region count",
        ));
    }

    // flip combinations per region: all subsets of size <= R_i
    let mut per_region: Vec<Vec<Vec<usize>>> = Vec::new();
    for (i, &radius) in r.as_slice().iter().enumerate() {
        let members = partition.region_members(i);
        if radius > members.len() {
            return Err(Error::invalid(format!(
                "radius {radius} exceeds region size {}",
                members.len()
            )));
        }
        let mut combos: Vec<Vec<usize>> = Vec::new();
        for k in 0..=radius {
            combos.extend(members.iter().copied().combinations(k));
        }
        per_region.push(combos);
    }
    let ball_size = per_region
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
        .filter(|&b| b <= MAX_BALL)
        .ok_or_else(|| {
            Error::ResourceLimit(format!("ball exceeds the cap of {MAX_BALL} elements"))
        })?;

    let bits = noisy_bits(partition, noise);
    let centre_dist = exact_smoothed_distribution(x, classify, partition, noise)?;
    let smoothed_top_label = centre_dist
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&l, _)| l)
        .expect("distribution is non-empty");

    let mut min_margin = f64::INFINITY;
    let mut argmin = x.clone();
    let mut spheres: BTreeMap<Vec<usize>, SphereStat> = BTreeMap::new();
    let mut prediction_constant = true;

    for combo in per_region.iter().multi_cartesian_product() {
        let flips: Vec<usize> = combo.iter().flat_map(|c| c.iter().copied()).collect();
        let x_tilde = x.flipped(&flips)?;
        let margin = atomic_margin(x, &x_tilde, &bits, bounds.p_a_lower, bounds.p_b_upper);
        let distances: Vec<usize> = combo.iter().map(|c| c.len()).collect();
        spheres
            .entry(distances)
            .and_modify(|s| {
                s.min_margin = s.min_margin.min(margin);
                s.max_margin = s.max_margin.max(margin);
                s.count += 1;
            })
            .or_insert(SphereStat {
                min_margin: margin,
                max_margin: margin,
                count: 1,
            });
        if margin < min_margin {
            min_margin = margin;
            argmin = x_tilde.clone();
        }
        let tilde_dist = exact_smoothed_distribution(&x_tilde, classify, partition, noise)?;
        let tilde_top = tilde_dist
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&l, _)| l)
            .expect("distribution is non-empty");
        if tilde_top != smoothed_top_label {
            prediction_constant = false;
        }
    }
    debug_assert_eq!(spheres.values().map(|s| s.count).sum::<usize>(), ball_size);
    Ok(WorstCaseReport {
        min_margin,
        argmin,
        spheres,
        smoothed_top_label,
        prediction_constant,
    })
}
