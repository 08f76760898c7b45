//! Certification engine.
//!
//! For a radius vector `R` the outcome space splits into `T = prod(R_i + 1)`
//! cells of equal likelihood ratio, indexed by how many perturbed positions
//! per region agree with the original input. Ratios are
//! `prod_i ((1-p_i)/p_i)^(R_i - 2 q_i)` and cell masses are products of
//! binomial pmfs; both are computed in log space because the ratios span
//! hundreds of orders of magnitude at small `p`. The margin is the gap
//! between two greedily solved box-constrained LPs, and a radius is
//! certified when the margin stays positive over every distance vector in
//! the box.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{ln_binomial_pmf, ln_factorials, KahanSum};
use crate::partition::NodePairPartition;
use crate::smoothing::NoiseSpec;
use crate::stats::ConfidenceBounds;
use crate::{Error, Result};

/// Margins must clear this slack, not merely zero, so accumulated summation
/// error cannot flip a boundary case into a certificate.
pub const MARGIN_STRICTNESS: f64 = 1e-12;

/// Feasibility slack for the LP mass budget.
const FEASIBILITY_TOL: f64 = 1e-9;

/// Per-region flip budgets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RadiusVector(Vec<usize>);

impl RadiusVector {
    pub fn new(radii: Vec<usize>) -> Self {
        RadiusVector(radii)
    }

    pub fn zero(region_count: usize) -> Self {
        RadiusVector(vec![0; region_count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for RadiusVector {
    fn from(radii: Vec<usize>) -> Self {
        RadiusVector(radii)
    }
}

impl std::ops::Index<usize> for RadiusVector {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// One equal-likelihood-ratio cell.
///
/// `agreements[i]` counts perturbed positions in region `i` where an outcome
/// agrees with the original input; `mass` is the probability of the cell
/// under noise centred on the original input (clamped to zero below the
/// smallest positive normal).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCell {
    pub agreements: Vec<usize>,
    pub log_ratio: f64,
    pub mass: f64,
    log_mass: f64,
}

impl RegionCell {
    pub fn new(agreements: Vec<usize>, log_ratio: f64, mass: f64) -> Self {
        RegionCell {
            agreements,
            log_ratio,
            mass,
            log_mass: mass.ln(),
        }
    }

    /// Cell probability under noise centred on the perturbed input,
    /// `ratio * mass`, evaluated in log space to survive extreme ratios.
    pub fn perturbed_mass(&self) -> f64 {
        let v = (self.log_ratio + self.log_mass).exp();
        if v < f64::MIN_POSITIVE {
            0.0
        } else {
            v
        }
    }
}

/// Resource caps and search strategy for the engine.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Maximum number of cells per radius point.
    pub max_cells: usize,
    /// Maximum number of points in a certification grid.
    pub max_grid_points: usize,
    /// Evaluate the margin only at the box corner instead of at every
    /// distance vector. Relies on the empirically observed (unproven)
    /// monotonicity of certification in the radius; off by default.
    pub corner_pruning: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_cells: 10_000_000,
            max_grid_points: 10_000_000,
            corner_pruning: false,
        }
    }
}

fn check_radius_against_noise(r: &RadiusVector, noise: &NoiseSpec) -> Result<()> {
    if r.len() != noise.region_count() {
        return Err(Error::invalid(format!(
            "radius has {} regions, noise spec has {}",
            r.len(),
            noise.region_count()
        )));
    }
    for (i, (&ri, &p)) in r.as_slice().iter().zip(noise.probs()).enumerate() {
        if p == 0.0 && ri > 0 {
            return Err(Error::invalid(format!(
                "region {i} has zero flip probability but radius {ri}"
            )));
        }
    }
    Ok(())
}

/// Full validation of a radius vector against both the noise spec and the
/// partition sizes.
pub fn check_radius(
    r: &RadiusVector,
    noise: &NoiseSpec,
    partition: &NodePairPartition,
) -> Result<()> {
    check_radius_against_noise(r, noise)?;
    if partition.region_count() != r.len() {
        return Err(Error::invalid(format!(
            "radius has {} regions, partition has {}",
            r.len(),
            partition.region_count()
        )));
    }
    for (i, (&ri, &size)) in r
        .as_slice()
        .iter()
        .zip(partition.region_sizes())
        .enumerate()
    {
        if ri > size {
            return Err(Error::invalid(format!(
                "radius {ri} exceeds |C_{i}| = {size}"
            )));
        }
    }
    Ok(())
}

fn clamp_underflow(v: f64) -> f64 {
    if v < f64::MIN_POSITIVE {
        0.0
    } else {
        v
    }
}

/// Per-region lookup of (log pmf, log ratio) contributions for each
/// agreement count.
fn region_tables(r: &RadiusVector, noise: &NoiseSpec) -> Vec<Vec<(f64, f64)>> {
    let max_r = r.as_slice().iter().copied().max().unwrap_or(0);
    let ln_fact = ln_factorials(max_r);
    r.as_slice()
        .iter()
        .zip(noise.probs())
        .map(|(&ri, &p)| {
            let log_odds = if ri == 0 { 0.0 } else { ((1.0 - p) / p).ln() };
            (0..=ri)
                .map(|q| {
                    let log_mass = ln_binomial_pmf(ri - q, ri, p, &ln_fact);
                    let log_ratio = (ri as f64 - 2.0 * q as f64) * log_odds;
                    (log_mass, log_ratio)
                })
                .collect()
        })
        .collect()
}

/// Enumerate all `prod(R_i + 1)` cells for radius `r`, sorted ascending by
/// log likelihood ratio (stable, so enumeration order breaks ties).
pub fn enumerate_cells(
    r: &RadiusVector,
    noise: &NoiseSpec,
    max_cells: usize,
) -> Result<Vec<RegionCell>> {
    check_radius_against_noise(r, noise)?;
    let total = r
        .as_slice()
        .iter()
        .try_fold(1usize, |acc, &ri| acc.checked_mul(ri + 1))
        .filter(|&t| t <= max_cells)
        .ok_or_else(|| {
            Error::ResourceLimit(format!(
                "cell count for radius {:?} exceeds cap {max_cells}",
                r.as_slice()
            ))
        })?;

    let tables = region_tables(r, noise);
    let c = r.len();
    let mut cells = Vec::with_capacity(total);
    let mut q = vec![0usize; c];
    loop {
        let mut log_mass = 0.0;
        let mut log_ratio = 0.0;
        for (qi, table) in q.iter().zip(&tables) {
            let (lm, lr) = table[*qi];
            log_mass += lm;
            log_ratio += lr;
        }
        cells.push(RegionCell {
            agreements: q.clone(),
            log_ratio,
            mass: clamp_underflow(log_mass.exp()),
            log_mass,
        });
        // odometer, last region fastest
        let mut dim = c;
        loop {
            if dim == 0 {
                break;
            }
            dim -= 1;
            if q[dim] < r[dim] {
                q[dim] += 1;
                break;
            }
            q[dim] = 0;
            if dim == 0 {
                dim = usize::MAX;
                break;
            }
        }
        if dim == usize::MAX || c == 0 {
            break;
        }
    }
    debug_assert_eq!(cells.len(), total);
    cells.sort_by(|a, b| a.log_ratio.total_cmp(&b.log_ratio));
    Ok(cells)
}

/// Probability that noise centred on the original input lands in the cell
/// with the given agreement counts: `prod_i Bin(R_i - q_i | R_i, p_i)`.
pub fn region_mass(agreements: &[usize], r: &RadiusVector, noise: &NoiseSpec) -> Result<f64> {
    check_radius_against_noise(r, noise)?;
    if agreements.len() != r.len() {
        return Err(Error::invalid(format!(
            "agreement vector has {} regions, radius has {}",
            agreements.len(),
            r.len()
        )));
    }
    for (i, (&q, &ri)) in agreements.iter().zip(r.as_slice()).enumerate() {
        if q > ri {
            return Err(Error::invalid(format!(
                "agreement count {q} exceeds radius {ri} in region {i}"
            )));
        }
    }
    let max_r = r.as_slice().iter().copied().max().unwrap_or(0);
    let ln_fact = ln_factorials(max_r);
    let mut log_mass = 0.0;
    for ((&q, &ri), &p) in agreements.iter().zip(r.as_slice()).zip(noise.probs()) {
        log_mass += ln_binomial_pmf(ri - q, ri, p, &ln_fact);
    }
    Ok(clamp_underflow(log_mass.exp()))
}

fn lp_fill(p_target: f64, cells: &[RegionCell], fill_from_low_ratio: bool) -> Result<f64> {
    debug_assert!(
        cells.windows(2).all(|w| w[0].log_ratio <= w[1].log_ratio),
        "cells must be sorted ascending by ratio"
    );
    let mut total = KahanSum::default();
    for cell in cells {
        total.add(cell.mass);
    }
    let total = total.value();
    if p_target < -FEASIBILITY_TOL || p_target > total + FEASIBILITY_TOL {
        return Err(Error::InfeasibleTarget {
            target: p_target,
            total,
        });
    }
    let mut budget = p_target.clamp(0.0, total);
    let mut objective = KahanSum::default();

    let mut visit = |cell: &RegionCell| {
        if cell.mass <= 0.0 {
            // Zero-mass cells are free in the budget constraint: the
            // maximiser takes their perturbed mass, the minimiser drops it.
            if !fill_from_low_ratio {
                objective.add(cell.perturbed_mass());
            }
            return;
        }
        if budget <= 0.0 {
            return;
        }
        let take = budget.min(cell.mass);
        if take >= cell.mass {
            objective.add(cell.perturbed_mass());
        } else {
            objective.add((take / cell.mass) * cell.perturbed_mass());
        }
        budget -= take;
    };

    if fill_from_low_ratio {
        cells.iter().for_each(&mut visit);
    } else {
        cells.iter().rev().for_each(&mut visit);
    }
    Ok(objective.value())
}

/// Lower bound on the perturbed-input class probability: fill the mass
/// budget `p_target` over the lowest-ratio cells first.
pub fn greedy_lp_lower(p_target: f64, cells: &[RegionCell]) -> Result<f64> {
    lp_fill(p_target, cells, true)
}

/// Upper bound: mirror of [`greedy_lp_lower`], filling from the highest
/// ratio downward.
pub fn greedy_lp_upper(p_target: f64, cells: &[RegionCell]) -> Result<f64> {
    lp_fill(p_target, cells, false)
}

/// The certification margin at a fixed distance vector `r`: lower bound on
/// the top-class probability minus upper bound on the runner-up. The margin
/// depends on the perturbed input only through its per-region distances, so
/// one evaluation covers the whole sphere at `r`.
pub fn margin(
    bounds: &ConfidenceBounds,
    r: &RadiusVector,
    noise: &NoiseSpec,
    max_cells: usize,
) -> Result<f64> {
    let cells = enumerate_cells(r, noise, max_cells)?;
    let lower = greedy_lp_lower(bounds.p_a_lower, &cells)?;
    let upper = greedy_lp_upper(bounds.p_b_upper, &cells)?;
    Ok(lower - upper)
}

fn grid_len(r_max: &RadiusVector) -> Option<usize> {
    r_max
        .as_slice()
        .iter()
        .try_fold(1usize, |acc, &ri| acc.checked_mul(ri + 1))
}

fn grid_index(r_max: &RadiusVector, point: &[usize]) -> usize {
    point
        .iter()
        .zip(r_max.as_slice())
        .fold(0usize, |acc, (&p, &m)| acc * (m + 1) + p)
}

fn grid_point(r_max: &RadiusVector, mut index: usize) -> Vec<usize> {
    let mut point = vec![0usize; r_max.len()];
    for i in (0..r_max.len()).rev() {
        let base = r_max[i] + 1;
        point[i] = index % base;
        index /= base;
    }
    point
}

/// True iff the smoothed prediction provably cannot change anywhere in the
/// ball with per-region budgets `r`. Abstaining bounds never certify. By
/// default the margin is checked at every distance vector in the box; with
/// [`EngineConfig::corner_pruning`] only the corner `r` is evaluated.
pub fn certify(
    bounds: &ConfidenceBounds,
    r: &RadiusVector,
    noise: &NoiseSpec,
    partition: &NodePairPartition,
    config: &EngineConfig,
) -> Result<bool> {
    check_radius(r, noise, partition)?;
    if bounds.is_abstain() {
        return Ok(false);
    }
    if config.corner_pruning {
        return Ok(margin(bounds, r, noise, config.max_cells)? > MARGIN_STRICTNESS);
    }
    let points = grid_len(r).ok_or_else(|| {
        Error::ResourceLimit(format!(
            "corner count overflows for radius {:?}",
            r.as_slice()
        ))
    })?;
    for index in 0..points {
        let q = RadiusVector::new(grid_point(r, index));
        if margin(bounds, &q, noise, config.max_cells)? <= MARGIN_STRICTNESS {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Certification outcome over every radius `R <= r_max`, in lexicographic
/// layout, plus the Pareto front of maximal certified radii.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationGrid {
    r_max: RadiusVector,
    margins: Vec<f64>,
    certified: Vec<bool>,
    pareto_front: Vec<RadiusVector>,
}

impl CertificationGrid {
    pub fn r_max(&self) -> &RadiusVector {
        &self.r_max
    }

    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }

    pub fn index_of(&self, point: &[usize]) -> usize {
        debug_assert_eq!(point.len(), self.r_max.len());
        grid_index(&self.r_max, point)
    }

    pub fn point_at(&self, index: usize) -> Vec<usize> {
        grid_point(&self.r_max, index)
    }

    /// Worst-case margin over the box `<= R`, per grid point.
    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    pub fn certified(&self) -> &[bool] {
        &self.certified
    }

    pub fn is_certified(&self, point: &[usize]) -> bool {
        self.certified[self.index_of(point)]
    }

    pub fn certified_count(&self) -> usize {
        self.certified.iter().filter(|&&c| c).count()
    }

    pub fn pareto_front(&self) -> &[RadiusVector] {
        &self.pareto_front
    }
}

fn extract_pareto_front(
    r_max: &RadiusVector,
    certified: &[bool],
    downward_closed: bool,
) -> Vec<RadiusVector> {
    let c = r_max.len();
    let mut front = Vec::new();
    if downward_closed {
        // maximal iff no certified successor one step up in any region
        for (index, &ok) in certified.iter().enumerate() {
            if !ok {
                continue;
            }
            let point = grid_point(r_max, index);
            let maximal = (0..c).all(|i| {
                if point[i] == r_max[i] {
                    return true;
                }
                let mut succ = point.clone();
                succ[i] += 1;
                !certified[grid_index(r_max, &succ)]
            });
            if maximal {
                front.push(RadiusVector::new(point));
            }
        }
    } else {
        let points: Vec<Vec<usize>> = certified
            .iter()
            .enumerate()
            .filter(|(_, &ok)| ok)
            .map(|(index, _)| grid_point(r_max, index))
            .collect();
        for p in &points {
            let dominated = points
                .iter()
                .any(|q| q != p && q.iter().zip(p.iter()).all(|(a, b)| a >= b));
            if !dominated {
                front.push(RadiusVector::new(p.clone()));
            }
        }
    }
    front
}

/// Evaluate certification for every `R <= r_max` and extract the Pareto
/// front. Grid points are independent and computed in parallel; results are
/// merged by grid index so the outcome does not depend on thread count.
pub fn certification_grid(
    bounds: &ConfidenceBounds,
    r_max: &RadiusVector,
    noise: &NoiseSpec,
    partition: &NodePairPartition,
    config: &EngineConfig,
) -> Result<CertificationGrid> {
    check_radius(r_max, noise, partition)?;
    let len = grid_len(r_max)
        .filter(|&l| l <= config.max_grid_points)
        .ok_or_else(|| {
            Error::ResourceLimit(format!(
                "grid for r_max {:?} exceeds cap {}",
                r_max.as_slice(),
                config.max_grid_points
            ))
        })?;

    let corner_margins: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|index| {
            let q = RadiusVector::new(grid_point(r_max, index));
            margin(bounds, &q, noise, config.max_cells)
        })
        .collect::<Result<_>>()?;

    let mut worst = corner_margins;
    if !config.corner_pruning {
        // prefix-min over the box: every predecessor index is smaller, so a
        // single lexicographic sweep suffices
        for index in 0..len {
            let point = grid_point(r_max, index);
            for i in 0..point.len() {
                if point[i] > 0 {
                    let mut pred = point.clone();
                    pred[i] -= 1;
                    let pred_min = worst[grid_index(r_max, &pred)];
                    if pred_min < worst[index] {
                        worst[index] = pred_min;
                    }
                }
            }
        }
    }
    let certified: Vec<bool> = worst.iter().map(|&m| m > MARGIN_STRICTNESS).collect();
    let pareto_front = extract_pareto_front(r_max, &certified, !config.corner_pruning);
    Ok(CertificationGrid {
        r_max: r_max.clone(),
        margins: worst,
        certified,
        pareto_front,
    })
}

/// Write the grid as CSV: `R_1,...,R_C,margin,certified`, one row per grid
/// point in lexicographic order.
pub fn write_grid_csv<W: Write>(mut writer: W, grid: &CertificationGrid) -> Result<()> {
    let c = grid.r_max().len();
    let header: Vec<String> = (1..=c).map(|i| format!("R_{i}")).collect();
    writeln!(writer, "{},margin,certified", header.join(","))?;
    for index in 0..grid.len() {
        let point = grid.point_at(index);
        let coords: Vec<String> = point.iter().map(|r| r.to_string()).collect();
        writeln!(
            writer,
            "{},{},{}",
            coords.join(","),
            grid.margins()[index],
            grid.certified()[index]
        )?;
    }
    Ok(())
}

/// JSON sidecar accompanying a grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub graph_id: String,
    pub config_hash: String,
    pub p_a_lower: f64,
    pub p_b_upper: f64,
    pub alpha: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub noise_probs: Vec<f64>,
    pub abstain: bool,
    pub pareto_front: Vec<Vec<usize>>,
}

impl GridSidecar {
    pub fn new(
        graph_id: impl Into<String>,
        config_hash: impl Into<String>,
        bounds: &ConfidenceBounds,
        seed: u64,
        noise: &NoiseSpec,
        grid: &CertificationGrid,
    ) -> Self {
        GridSidecar {
            graph_id: graph_id.into(),
            config_hash: config_hash.into(),
            p_a_lower: bounds.p_a_lower,
            p_b_upper: bounds.p_b_upper,
            alpha: bounds.alpha,
            n_samples: bounds.n,
            seed,
            noise_probs: noise.probs().to_vec(),
            abstain: bounds.is_abstain(),
            pareto_front: grid
                .pareto_front()
                .iter()
                .map(|r| r.as_slice().to_vec())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    fn bounds(p_a_lower: f64, p_b_upper: f64) -> ConfidenceBounds {
        ConfidenceBounds {
            p_a_lower,
            p_b_upper,
            alpha: 0.99,
            n_a: 0,
            n_b: 0,
            n: 0,
        }
    }

    #[test]
    fn zero_radius_single_cell() {
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let cells = enumerate_cells(&RadiusVector::new(vec![0]), &noise, 100).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].log_ratio, 0.0);
        assert!((cells[0].mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_region_radius_one_cells() {
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let cells = enumerate_cells(&RadiusVector::new(vec![1]), &noise, 100).unwrap();
        assert_eq!(cells.len(), 2);
        // ascending ratio: q=1 has ratio 0.25, q=0 has ratio 4
        assert_eq!(cells[0].agreements, vec![1]);
        assert!((cells[0].log_ratio.exp() - 0.25).abs() < 1e-12);
        assert!((cells[0].mass - 0.8).abs() < 1e-12);
        assert_eq!(cells[1].agreements, vec![0]);
        assert!((cells[1].log_ratio.exp() - 4.0).abs() < 1e-12);
        assert!((cells[1].mass - 0.2).abs() < 1e-12);
    }

    #[test]
    fn two_region_cells_product_form() {
        let noise = NoiseSpec::new(vec![0.2, 0.4]).unwrap();
        let r = RadiusVector::new(vec![1, 1]);
        let cells = enumerate_cells(&r, &noise, 100).unwrap();
        assert_eq!(cells.len(), 4);
        let sum: f64 = cells.iter().map(|c| c.mass).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for cell in &cells {
            let expected = region_mass(&cell.agreements, &r, &noise).unwrap();
            assert!((cell.mass - expected).abs() < 1e-15);
            // per-region pmf product, by hand
            let q0 = cell.agreements[0];
            let q1 = cell.agreements[1];
            let by_hand = [0.2f64, 0.8][q0] * [0.4f64, 0.6][q1];
            assert!((cell.mass - by_hand).abs() < 1e-12);
        }
        assert!(cells.windows(2).all(|w| w[0].log_ratio <= w[1].log_ratio));
    }

    #[test]
    fn cell_cap_enforced() {
        let noise = NoiseSpec::new(vec![0.1, 0.1]).unwrap();
        let r = RadiusVector::new(vec![99, 99]);
        assert!(matches!(
            enumerate_cells(&r, &noise, 100),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn radius_zero_required_for_zero_probability() {
        let noise = NoiseSpec::new(vec![0.0, 0.2]).unwrap();
        assert!(enumerate_cells(&RadiusVector::new(vec![1, 1]), &noise, 100).is_err());
        assert!(enumerate_cells(&RadiusVector::new(vec![0, 1]), &noise, 100).is_ok());
    }

    #[test]
    fn region_mass_examples() {
        let noise = NoiseSpec::new(vec![0.3]).unwrap();
        let r = RadiusVector::new(vec![2]);
        // q = R: no flips
        assert!((region_mass(&[2], &r, &noise).unwrap() - 0.49).abs() < 1e-12);
        // q = 0: all flips
        assert!((region_mass(&[0], &r, &noise).unwrap() - 0.09).abs() < 1e-12);
        // Bin(1 | 2, 0.3) = 0.42
        assert!((region_mass(&[1], &r, &noise).unwrap() - 0.42).abs() < 1e-12);
        assert!(region_mass(&[3], &r, &noise).is_err());
    }

    #[test]
    fn masses_sum_to_one_for_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let c = rng.random_range(1..=4);
            let probs: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..0.49)).collect();
            let radii: Vec<usize> = (0..c).map(|_| rng.random_range(0..=6)).collect();
            let noise = NoiseSpec::new(probs).unwrap();
            let cells = enumerate_cells(&RadiusVector::new(radii), &noise, 100_000).unwrap();
            let mass_sum: f64 = cells.iter().map(|c| c.mass).sum();
            let perturbed_sum: f64 = cells.iter().map(|c| c.perturbed_mass()).sum();
            assert!((mass_sum - 1.0).abs() < 1e-12, "mass sum {mass_sum}");
            assert!(
                (perturbed_sum - 1.0).abs() < 1e-11,
                "perturbed sum {perturbed_sum}"
            );
        }
    }

    #[test]
    fn lp_boundary_targets() {
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let cells = enumerate_cells(&RadiusVector::new(vec![1]), &noise, 100).unwrap();
        assert_eq!(greedy_lp_lower(0.0, &cells).unwrap(), 0.0);
        let full: f64 = cells.iter().map(|c| c.perturbed_mass()).sum();
        assert!((greedy_lp_lower(1.0, &cells).unwrap() - full).abs() < 1e-12);
        assert_eq!(greedy_lp_upper(0.0, &cells).unwrap(), 0.0);
        assert!(matches!(
            greedy_lp_lower(1.1, &cells),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(matches!(
            greedy_lp_lower(-0.1, &cells),
            Err(Error::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn lp_worked_example() {
        // p = 0.2, R = 1: cells (ratio 0.25, mass 0.8), (ratio 4, mass 0.2)
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let cells = enumerate_cells(&RadiusVector::new(vec![1]), &noise, 100).unwrap();
        // lower at 0.9: full low cell (0.2) plus half of the high cell (0.4)
        assert!((greedy_lp_lower(0.9, &cells).unwrap() - 0.6).abs() < 1e-12);
        // upper at 0.1: half of the high cell
        assert!((greedy_lp_upper(0.1, &cells).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn lp_duality_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let c = rng.random_range(1..=3);
            let probs: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..0.45)).collect();
            let radii: Vec<usize> = (0..c).map(|_| rng.random_range(0..=3)).collect();
            let noise = NoiseSpec::new(probs).unwrap();
            let cells = enumerate_cells(&RadiusVector::new(radii), &noise, 1000).unwrap();
            let p: f64 = rng.random_range(0.0..1.0);
            let tilde_total: f64 = cells.iter().map(|c| c.perturbed_mass()).sum();
            let upper = greedy_lp_upper(p, &cells).unwrap();
            let lower_complement = greedy_lp_lower(1.0 - p, &cells).unwrap();
            assert!(
                (upper - (tilde_total - lower_complement)).abs() < 1e-9,
                "duality violated: {upper} vs {}",
                tilde_total - lower_complement
            );
        }
    }

    #[test]
    fn lp_sandwich_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let probs: Vec<f64> = vec![rng.random_range(0.05..0.45), rng.random_range(0.05..0.45)];
            let radii: Vec<usize> = vec![rng.random_range(0..=4), rng.random_range(0..=4)];
            let noise = NoiseSpec::new(probs).unwrap();
            let cells = enumerate_cells(&RadiusVector::new(radii), &noise, 1000).unwrap();
            let p: f64 = rng.random_range(0.0..1.0);
            let lo = greedy_lp_lower(p, &cells).unwrap();
            let hi = greedy_lp_upper(p, &cells).unwrap();
            assert!(lo <= hi + 1e-12, "lower {lo} above upper {hi}");
        }
    }

    #[test]
    fn lp_invariant_under_tie_permutation() {
        // all ratios equal (p = 0.5 override): any tie order must give the
        // same optimum
        let noise = NoiseSpec::unrestricted(vec![0.5]).unwrap();
        let base = enumerate_cells(&RadiusVector::new(vec![4]), &noise, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let reference_lo = greedy_lp_lower(0.37, &base).unwrap();
        let reference_hi = greedy_lp_upper(0.37, &base).unwrap();
        for _ in 0..20 {
            let mut shuffled = base.clone();
            for i in (1..shuffled.len()).rev() {
                let j = rng.random_range(0..=i);
                shuffled.swap(i, j);
            }
            assert!((greedy_lp_lower(0.37, &shuffled).unwrap() - reference_lo).abs() < 1e-12);
            assert!((greedy_lp_upper(0.37, &shuffled).unwrap() - reference_hi).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_at_zero_radius_is_bound_gap() {
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let b = bounds(0.9, 0.05);
        let m = margin(&b, &RadiusVector::new(vec![0]), &noise, 100).unwrap();
        assert!((m - 0.85).abs() < 1e-12);
    }

    #[test]
    fn margin_worked_example() {
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let b = bounds(0.9, 0.1);
        let m = margin(&b, &RadiusVector::new(vec![1]), &noise, 100).unwrap();
        assert!((m - 0.2).abs() < 1e-12, "margin {m}");
    }

    #[test]
    fn margin_uniform_ratio_degenerate() {
        // p = 0.5: every ratio is one, smoothing is uninformative and the
        // margin collapses to the bound gap at any radius
        let noise = NoiseSpec::unrestricted(vec![0.5]).unwrap();
        let b = bounds(0.8, 0.15);
        for radius in [0usize, 1, 3, 7] {
            let m = margin(&b, &RadiusVector::new(vec![radius]), &noise, 100).unwrap();
            assert!((m - 0.65).abs() < 1e-12, "radius {radius}: margin {m}");
        }
    }

    #[test]
    fn certify_examples() {
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let partition = NodePairPartition::isotropic(4).unwrap();
        let config = EngineConfig::default();
        let r = RadiusVector::new(vec![1]);

        let abstaining = bounds(0.4, 0.6);
        assert!(!certify(
            &abstaining,
            &RadiusVector::zero(1),
            &noise,
            &partition,
            &config
        )
        .unwrap());
        assert!(!certify(&abstaining, &r, &noise, &partition, &config).unwrap());

        assert!(certify(&bounds(0.9, 0.1), &r, &noise, &partition, &config).unwrap());
        assert!(!certify(&bounds(0.55, 0.45), &r, &noise, &partition, &config).unwrap());
    }

    #[test]
    fn certify_rejects_radius_beyond_region_size() {
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let partition = NodePairPartition::isotropic(4).unwrap();
        let config = EngineConfig::default();
        let r = RadiusVector::new(vec![7]);
        assert!(certify(&bounds(0.9, 0.1), &r, &noise, &partition, &config).is_err());
    }

    #[test]
    fn certify_monotone_in_top_class_bound() {
        let noise = NoiseSpec::new(vec![0.1, 0.3]).unwrap();
        let partition = NodePairPartition::motif(3, 3).unwrap();
        let config = EngineConfig::default();
        let r = RadiusVector::new(vec![1, 2]);
        let mut previously_certified = false;
        for step in 0..40 {
            let p_a = 0.5 + 0.0125 * step as f64;
            let b = bounds(p_a, (1.0 - p_a).min(0.2));
            let ok = certify(&b, &r, &noise, &partition, &config).unwrap();
            assert!(
                ok || !previously_certified,
                "certificate lost when p_a increased to {p_a}"
            );
            previously_certified = ok;
        }
    }

    #[test]
    fn grid_perfect_bounds_certify_everywhere() {
        let noise = NoiseSpec::new(vec![0.1, 0.3]).unwrap();
        let partition = NodePairPartition::motif(3, 3).unwrap();
        let config = EngineConfig::default();
        let r_max = RadiusVector::new(vec![2, 2]);
        let grid =
            certification_grid(&bounds(1.0, 0.0), &r_max, &noise, &partition, &config).unwrap();
        assert_eq!(grid.len(), 9);
        assert!(grid.certified().iter().all(|&c| c));
        assert_eq!(grid.pareto_front(), std::slice::from_ref(&r_max));
    }

    #[test]
    fn grid_abstain_certifies_nothing() {
        let noise = NoiseSpec::new(vec![0.1, 0.3]).unwrap();
        let partition = NodePairPartition::motif(3, 3).unwrap();
        let config = EngineConfig::default();
        let r_max = RadiusVector::new(vec![2, 2]);
        let grid =
            certification_grid(&bounds(0.5, 0.5), &r_max, &noise, &partition, &config).unwrap();
        assert_eq!(grid.certified_count(), 0);
        assert!(grid.pareto_front().is_empty());
    }

    #[test]
    fn grid_matches_pointwise_certify() {
        let noise = NoiseSpec::new(vec![0.1, 0.3]).unwrap();
        let partition = NodePairPartition::motif(3, 3).unwrap();
        let config = EngineConfig::default();
        let r_max = RadiusVector::new(vec![3, 3]);
        let b = bounds(0.97, 0.03);
        let grid = certification_grid(&b, &r_max, &noise, &partition, &config).unwrap();
        for index in 0..grid.len() {
            let point = grid.point_at(index);
            let expected = certify(
                &b,
                &RadiusVector::new(point.clone()),
                &noise,
                &partition,
                &config,
            )
            .unwrap();
            assert_eq!(grid.certified()[index], expected, "mismatch at {point:?}");
        }
    }

    #[test]
    fn grid_cap_enforced() {
        let noise = NoiseSpec::new(vec![0.1, 0.3]).unwrap();
        let partition = NodePairPartition::motif(10, 10).unwrap();
        let config = EngineConfig {
            max_grid_points: 10,
            ..EngineConfig::default()
        };
        let r_max = RadiusVector::new(vec![10, 10]);
        assert!(matches!(
            certification_grid(&bounds(0.9, 0.1), &r_max, &noise, &partition, &config),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn pareto_front_is_maximal_certified_set() {
        let noise = NoiseSpec::new(vec![0.05, 0.4]).unwrap();
        let partition = NodePairPartition::motif(4, 4).unwrap();
        let config = EngineConfig::default();
        let r_max = RadiusVector::new(vec![4, 6]);
        let grid =
            certification_grid(&bounds(0.995, 0.005), &r_max, &noise, &partition, &config).unwrap();
        for front_point in grid.pareto_front() {
            assert!(grid.is_certified(front_point.as_slice()));
        }
        for index in 0..grid.len() {
            if !grid.certified()[index] {
                continue;
            }
            let point = grid.point_at(index);
            let dominated_by_front = grid
                .pareto_front()
                .iter()
                .any(|f| f.as_slice().iter().zip(&point).all(|(a, b)| a >= b));
            assert!(dominated_by_front, "{point:?} not covered by the front");
        }
    }

    /// Independent single-probability certificate, coded directly in linear
    /// space for small radii.
    fn isotropic_reference_certify(p: f64, radius: usize, p_a: f64, p_b: f64) -> bool {
        fn choose(n: usize, k: usize) -> f64 {
            let mut v = 1.0f64;
            for i in 0..k {
                v = v * (n - i) as f64 / (i + 1) as f64;
            }
            v
        }
        // cells by agreement count q: ratio ((1-p)/p)^(r-2q), mass
        // C(r, q) p^(r-q) (1-p)^q; certificate needs the margin positive at
        // every radius d <= radius
        for d in 0..=radius {
            let mut cells: Vec<(f64, f64)> = (0..=d)
                .map(|q| {
                    let ratio = ((1.0 - p) / p).powi(d as i32 - 2 * q as i32);
                    let mass = choose(d, q) * p.powi((d - q) as i32) * (1.0 - p).powi(q as i32);
                    (ratio, mass)
                })
                .collect();
            cells.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut budget = p_a;
            let mut rho_lower = 0.0;
            for &(ratio, mass) in &cells {
                let take = budget.min(mass);
                rho_lower += (take / mass) * ratio * mass;
                budget -= take;
                if budget <= 0.0 {
                    break;
                }
            }
            let mut budget = p_b;
            let mut rho_upper = 0.0;
            for &(ratio, mass) in cells.iter().rev() {
                let take = budget.min(mass);
                rho_upper += (take / mass) * ratio * mass;
                budget -= take;
                if budget <= 0.0 {
                    break;
                }
            }
            if rho_lower - rho_upper <= MARGIN_STRICTNESS {
                return false;
            }
        }
        true
    }

    #[test]
    fn isotropic_reduction_matches_reference() {
        let partition = NodePairPartition::isotropic(6).unwrap();
        let config = EngineConfig::default();
        for &p in &[0.1, 0.2, 0.3] {
            let noise = NoiseSpec::new(vec![p]).unwrap();
            for &(p_a, p_b) in &[(0.999, 0.001), (0.95, 0.05), (0.8, 0.2), (0.6, 0.4)] {
                for radius in 0..=8usize {
                    let engine = certify(
                        &bounds(p_a, p_b),
                        &RadiusVector::new(vec![radius]),
                        &noise,
                        &partition,
                        &config,
                    )
                    .unwrap();
                    let reference = isotropic_reference_certify(p, radius, p_a, p_b);
                    assert_eq!(
                        engine, reference,
                        "p={p} radius={radius} p_a={p_a}: engine {engine} vs reference"
                    );
                }
            }
        }
    }

    #[test]
    fn extreme_ratio_instance_stays_finite() {
        // p = 0.02 over 45 pairs: the raw ratio reaches 49^45, which only
        // log space survives
        let noise = NoiseSpec::new(vec![0.02, 0.45]).unwrap();
        let r = RadiusVector::new(vec![1, 45]);
        let cells = enumerate_cells(&r, &noise, 10_000).unwrap();
        assert_eq!(cells.len(), 92);
        for cell in &cells {
            assert!(cell.log_ratio.is_finite());
            assert!(cell.mass.is_finite() && cell.mass >= 0.0);
            assert!(cell.perturbed_mass().is_finite());
        }
        let mass_sum: f64 = cells.iter().map(|c| c.mass).sum();
        assert!((mass_sum - 1.0).abs() < 1e-12);
        let b = bounds(0.999954, 0.000046);
        let m = margin(&b, &r, &noise, 10_000).unwrap();
        assert!(m.is_finite());
        assert!(m > 0.0, "paper-scale instance should certify, margin {m}");
    }

    #[test]
    fn grid_csv_layout() {
        let noise = NoiseSpec::new(vec![0.2]).unwrap();
        let partition = NodePairPartition::isotropic(4).unwrap();
        let grid = certification_grid(
            &bounds(0.95, 0.05),
            &RadiusVector::new(vec![2]),
            &noise,
            &partition,
            &EngineConfig::default(),
        )
        .unwrap();
        let mut out = Vec::new();
        write_grid_csv(&mut out, &grid).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "R_1,margin,certified");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[3].starts_with("2,"));
    }
}
