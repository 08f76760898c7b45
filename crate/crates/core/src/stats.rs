//! Clopper-Pearson confidence bounds on the smoothed classifier's vote
//! probabilities.
//!
//! One-sided exact binomial bounds: the lower bound on the top-class
//! probability is the `1 - confidence` quantile of `Beta(k, N-k+1)`, the
//! upper bound on the runner-up is the `confidence` quantile of
//! `Beta(k+1, N-k)`. Quantiles are found by bisection on the regularized
//! incomplete beta to absolute tolerance 1e-12.

use crate::numeric::reg_inc_beta;
use crate::smoothing::LabelDistribution;
use crate::{Error, Result};

/// Absolute tolerance of the quantile bisection.
const BISECT_TOL: f64 = 1e-13;

/// Confidence bounds derived from one shared vote sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceBounds {
    pub p_a_lower: f64,
    pub p_b_upper: f64,
    /// Confidence level in (0, 1), e.g. 0.99.
    pub alpha: f64,
    pub n_a: u64,
    pub n_b: u64,
    pub n: u64,
}

impl ConfidenceBounds {
    /// The bounds cross: no certificate can be issued at any radius.
    pub fn is_abstain(&self) -> bool {
        self.p_a_lower <= self.p_b_upper
    }
}

fn check_args(k: u64, n: u64, confidence: f64) -> Result<()> {
    if k > n {
        return Err(Error::invalid(format!("successes {k} exceed trials {n}")));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Solve `I_p(a, b) = target` for `p` by bisection. The regularized
/// incomplete beta is nondecreasing in `p`.
fn beta_quantile(a: f64, b: f64, target: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if reg_inc_beta(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One-sided lower confidence bound on a binomial success probability after
/// observing `k` successes in `n` trials. Returns 0 when `k = 0`.
pub fn clopper_pearson_lower(k: u64, n: u64, confidence: f64) -> Result<f64> {
    check_args(k, n, confidence)?;
    if k == 0 {
        return Ok(0.0);
    }
    // P(X >= k | p) = I_p(k, n-k+1) grows with p; the bound solves it
    // equal to 1 - confidence.
    Ok(beta_quantile(
        k as f64,
        (n - k) as f64 + 1.0,
        1.0 - confidence,
    ))
}

/// One-sided upper confidence bound; mirror of [`clopper_pearson_lower`].
/// Returns 1 when `k = n`.
pub fn clopper_pearson_upper(k: u64, n: u64, confidence: f64) -> Result<f64> {
    check_args(k, n, confidence)?;
    if k == n {
        return Ok(1.0);
    }
    // P(X <= k | p) = 1 - I_p(k+1, n-k) shrinks with p; the bound solves
    // I_p(k+1, n-k) = confidence.
    Ok(beta_quantile(k as f64 + 1.0, (n - k) as f64, confidence))
}

/// Bound the top-class probability from below and the runner-up from above,
/// both from the same sample. The runner-up bound is clamped to
/// `1 - p_a_lower`, which is exact for binary tasks and conservative
/// otherwise. Crossing bounds mean the caller must abstain.
pub fn bound_top_two(dist: &LabelDistribution, confidence: f64) -> Result<ConfidenceBounds> {
    let n = dist.total();
    let n_a = dist.top_count();
    let n_b = dist.runner_up_count();
    let p_a_lower = clopper_pearson_lower(n_a, n, confidence)?;
    let p_b_upper = clopper_pearson_upper(n_b, n, confidence)?.min(1.0 - p_a_lower);
    Ok(ConfidenceBounds {
        p_a_lower,
        p_b_upper,
        alpha: confidence,
        n_a,
        n_b,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Binomial, Distribution};
    use std::collections::BTreeMap;

    /// Test oracle: binomial upper-tail sum by pmf recurrence, bisected on
    /// p. Independent of the beta-function route used by the implementation.
    fn tail_ge(k: u64, n: u64, p: f64) -> f64 {
        // sum_{j>=k} C(n,j) p^j (1-p)^(n-j), accumulated from the mode via
        // the multiplicative recurrence to stay in range for n <= ~10^4
        if k == 0 {
            return 1.0;
        }
        let ln_p = p.ln();
        let ln_q = (1.0 - p).ln();
        // start at j = k with log pmf, then recurrence upward
        let mut ln_fact = 0.0;
        for j in 1..=n {
            ln_fact += (j as f64).ln();
            let _ = j;
        }
        let mut ln_kfact = 0.0;
        for j in 1..=k {
            ln_kfact += (j as f64).ln();
        }
        let mut ln_nkfact = 0.0;
        for j in 1..=(n - k) {
            ln_nkfact += (j as f64).ln();
        }
        let mut ln_pmf = ln_fact - ln_kfact - ln_nkfact + k as f64 * ln_p + (n - k) as f64 * ln_q;
        let mut total = ln_pmf.exp();
        let mut j = k;
        while j < n {
            // pmf(j+1) = pmf(j) * (n-j)/(j+1) * p/q
            ln_pmf += ((n - j) as f64).ln() - ((j + 1) as f64).ln() + ln_p - ln_q;
            total += ln_pmf.exp();
            j += 1;
        }
        total.min(1.0)
    }

    fn oracle_lower(k: u64, n: u64, confidence: f64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let target = 1.0 - confidence;
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if tail_ge(k, n, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn oracle_upper(k: u64, n: u64, confidence: f64) -> f64 {
        if k == n {
            return 1.0;
        }
        // P(X <= k | p) = 1 - tail_ge(k+1, n, p) = 1 - confidence at the bound
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if tail_ge(k + 1, n, mid) < confidence {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lower_bound_edge_cases() {
        assert_eq!(clopper_pearson_lower(0, 100, 0.99).unwrap(), 0.0);
        let unanimous = clopper_pearson_lower(100, 100, 0.99).unwrap();
        let closed_form = 0.01f64.powf(1.0 / 100.0);
        assert!(
            (unanimous - closed_form).abs() < 1e-9,
            "{unanimous} vs {closed_form}"
        );
        assert!((closed_form - 0.95499).abs() < 1e-5);
    }

    #[test]
    fn upper_bound_edge_cases() {
        assert_eq!(clopper_pearson_upper(100, 100, 0.99).unwrap(), 1.0);
        let zero = clopper_pearson_upper(0, 100, 0.99).unwrap();
        let closed_form = 1.0 - 0.01f64.powf(1.0 / 100.0);
        assert!((zero - closed_form).abs() < 1e-9);
        assert!((closed_form - 0.04501).abs() < 1e-5);
    }

    #[test]
    fn bounds_match_binomial_tail_oracle() {
        let cases: [(u64, u64); 10] = [
            (50, 100),
            (10, 100),
            (95, 100),
            (1, 17),
            (16, 17),
            (250, 1000),
            (999, 1000),
            (3, 9),
            (7, 9),
            (600, 1000),
        ];
        for &(k, n) in &cases {
            for &conf in &[0.95, 0.99] {
                let lower = clopper_pearson_lower(k, n, conf).unwrap();
                let upper = clopper_pearson_upper(k, n, conf).unwrap();
                let olower = oracle_lower(k, n, conf);
                let oupper = oracle_upper(k, n, conf);
                assert!(
                    (lower - olower).abs() < 1e-9,
                    "lower k={k} n={n} c={conf}: {lower} vs {olower}"
                );
                assert!(
                    (upper - oupper).abs() < 1e-9,
                    "upper k={k} n={n} c={conf}: {upper} vs {oupper}"
                );
            }
        }
    }

    #[test]
    fn fifty_of_hundred_in_expected_range() {
        let lower = clopper_pearson_lower(50, 100, 0.99).unwrap();
        assert!(lower > 0.37 && lower < 0.50, "{lower}");
    }

    #[test]
    fn invalid_args_rejected() {
        assert!(clopper_pearson_lower(11, 10, 0.99).is_err());
        assert!(clopper_pearson_lower(1, 10, 1.0).is_err());
        assert!(clopper_pearson_lower(1, 0, 0.99).is_err());
    }

    #[test]
    fn monotone_in_k_and_mirror_symmetric() {
        let mut prev = -1.0;
        for k in 0..=20 {
            let lower = clopper_pearson_lower(k, 20, 0.99).unwrap();
            assert!(lower >= prev, "lower bound decreased at k={k}");
            prev = lower;
            let upper = clopper_pearson_upper(20 - k, 20, 0.99).unwrap();
            assert!(
                (upper - (1.0 - lower)).abs() < 1e-10,
                "mirror failed at k={k}"
            );
        }
        // nonincreasing in confidence
        let a = clopper_pearson_lower(15, 20, 0.90).unwrap();
        let b = clopper_pearson_lower(15, 20, 0.99).unwrap();
        assert!(b <= a);
    }

    #[test]
    fn bound_top_two_unanimous() {
        let mut counts = BTreeMap::new();
        counts.insert(0u32, 100_000u64);
        let dist = LabelDistribution::from_counts(counts).unwrap();
        let bounds = bound_top_two(&dist, 0.99).unwrap();
        let expected = 0.01f64.powf(1e-5);
        assert!((bounds.p_a_lower - expected).abs() < 1e-9);
        assert!((bounds.p_a_lower - 0.999954).abs() < 1e-6);
        assert!((bounds.p_b_upper - (1.0 - expected)).abs() < 1e-9);
        assert!(!bounds.is_abstain());
    }

    #[test]
    fn bound_top_two_tied_votes_abstain() {
        let mut counts = BTreeMap::new();
        counts.insert(0u32, 50u64);
        counts.insert(1u32, 50u64);
        let dist = LabelDistribution::from_counts(counts).unwrap();
        let bounds = bound_top_two(&dist, 0.99).unwrap();
        assert!(bounds.is_abstain());
    }

    #[test]
    fn bound_top_two_clamp_active_in_binary_task() {
        // with n_a + n_b = N the mirror symmetry makes the CP upper bound
        // and the clamp coincide, so the clamp binds (with equality)
        let mut counts = BTreeMap::new();
        counts.insert(0u32, 95u64);
        counts.insert(1u32, 5u64);
        let dist = LabelDistribution::from_counts(counts).unwrap();
        let bounds = bound_top_two(&dist, 0.99).unwrap();
        let cp_upper = clopper_pearson_upper(5, 100, 0.99).unwrap();
        assert!((cp_upper - (1.0 - bounds.p_a_lower)).abs() < 1e-10);
        assert!(bounds.p_b_upper <= 1.0 - bounds.p_a_lower + 1e-15);
        assert!((bounds.p_b_upper - (1.0 - bounds.p_a_lower)).abs() < 1e-10);
    }

    #[test]
    fn coverage_at_confidence_level() {
        // 10^4 binomial draws at p = 0.7, N = 1000: the true p must sit
        // above the lower bound in at least 99% of trials (+-0.5%).
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let binom = Binomial::new(1000, 0.7).unwrap();
        let trials = 10_000;
        let mut covered = 0;
        for _ in 0..trials {
            let k = binom.sample(&mut rng);
            let lower = clopper_pearson_lower(k, 1000, 0.99).unwrap();
            if lower < 0.7 {
                covered += 1;
            }
        }
        let rate = covered as f64 / trials as f64;
        assert!(rate >= 0.985, "coverage {rate}");
    }
}
