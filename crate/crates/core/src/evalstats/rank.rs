//! Rank statistics: median/IQR descriptives and the Mann-Whitney U test with
//! midranks, an exact small-sample method, and a tie-corrected normal
//! approximation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

/// Pooled sample sizes up to this bound use the exact permutation
/// distribution; larger samples use the normal approximation.
pub const EXACT_THRESHOLD: usize = 12;

/// Five-number-lite summary: sample size, median, and quartiles computed by
/// linear interpolation at positions `p * (n - 1)` on the sorted values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Median and interquartile range of `values`.
pub fn median_iqr(values: &[f64]) -> Result<DescriptiveStats, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptySample);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(DescriptiveStats {
        n: sorted.len(),
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
    })
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UMethod {
    Exact,
    NormalApprox,
}

/// Mann-Whitney U test outcome. `u1` is reported for the first sample;
/// `u2 = n1 * n2 - u1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    pub u1: f64,
    pub n1: usize,
    pub n2: usize,
    pub z: f64,
    pub p_two_tailed: f64,
    pub method: UMethod,
    pub tie_corrected: bool,
    /// All pooled values identical: the statistic carries no information and
    /// `p` is fixed at 1.
    pub degenerate: bool,
}

/// Midranks of the pooled sample, in input order.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pooled[a].partial_cmp(&pooled[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// Sizes of the tie groups (runs of equal values) in the pooled sample.
fn tie_group_sizes(pooled: &[f64]) -> Vec<usize> {
    let mut sorted = pooled.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

fn tie_corrected_sigma(n1: usize, n2: usize, tie_groups: &[usize]) -> Result<f64, EvalError> {
    let n = (n1 + n2) as f64;
    let tie_sum: f64 = tie_groups
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = (n1 as f64 * n2 as f64 / 12.0) * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    if var < -1e-9 {
        return Err(EvalError::InvalidTieGroups);
    }
    Ok(var.max(0.0).sqrt())
}

fn normal_two_tailed(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    2.0 * (1.0 - normal.cdf(z.abs()))
}

/// Two-tailed Mann-Whitney U test over two samples.
///
/// Ranks are midranks over the pooled sample and `u1 = R1 - n1(n1+1)/2`.
/// When `n1 + n2 <= EXACT_THRESHOLD` the p-value is exact: the full
/// permutation distribution of U over every assignment of the pooled values
/// to groups, with `p = min(1, 2 * min(P(U <= u1), P(U >= u1)))`. Larger
/// samples use the tie-corrected normal approximation without continuity
/// correction.
pub fn mann_whitney_u(sample1: &[f64], sample2: &[f64]) -> Result<UTestResult, EvalError> {
    if sample1.is_empty() || sample2.is_empty() {
        return Err(EvalError::EmptySample);
    }
    if sample1.iter().chain(sample2).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n1 = sample1.len();
    let n2 = sample2.len();
    let pooled: Vec<f64> = sample1.iter().chain(sample2).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let ties = tie_group_sizes(&pooled);
    let tie_corrected = ties.iter().any(|&t| t > 1);
    let sigma = tie_corrected_sigma(n1, n2, &ties)?;
    let degenerate = sigma == 0.0;
    let z = if degenerate {
        0.0
    } else {
        (u1 - (n1 * n2) as f64 / 2.0) / sigma
    };

    let (method, p) = if n1 + n2 <= EXACT_THRESHOLD {
        (UMethod::Exact, exact_two_tailed(&ranks, n1, u1))
    } else if degenerate {
        (UMethod::NormalApprox, 1.0)
    } else {
        (UMethod::NormalApprox, normal_two_tailed(z))
    };

    Ok(UTestResult {
        u1,
        n1,
        n2,
        z,
        p_two_tailed: p,
        method,
        tie_corrected,
        degenerate,
    })
}

/// Exact two-tailed p: enumerate every choice of `n1` pooled positions,
/// compute U for each, and double the smaller inclusive tail.
fn exact_two_tailed(ranks: &[f64], n1: usize, u_obs: f64) -> f64 {
    let n = ranks.len();
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let mut le = 0u64;
    let mut ge = 0u64;
    let mut total = 0u64;
    let mut combo: Vec<usize> = (0..n1).collect();
    loop {
        let u: f64 = combo.iter().map(|&i| ranks[i]).sum::<f64>() - offset;
        total += 1;
        if u <= u_obs + 1e-9 {
            le += 1;
        }
        if u >= u_obs - 1e-9 {
            ge += 1;
        }
        // Advance to the next combination in lexicographic order.
        let mut i = n1;
        loop {
            if i == 0 {
                let p = 2.0 * le.min(ge) as f64 / total as f64;
                return p.min(1.0);
            }
            i -= 1;
            if combo[i] != i + n - n1 {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..n1 {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Normal-approximation z and two-tailed p for a given `u1`.
///
/// With `tie_groups` absent the plain no-ties variance is used. Tie
/// correction shrinks the variance, so for the same `u1` a heavily tied
/// pooled sample yields a larger |z| and a smaller p than the no-ties value.
/// No continuity correction is applied; see [`p_from_u_with`] for the
/// toggle.
pub fn p_from_u(
    u1: f64,
    n1: usize,
    n2: usize,
    tie_groups: Option<&[usize]>,
) -> Result<(f64, f64), EvalError> {
    p_from_u_with(u1, n1, n2, tie_groups, false)
}

/// [`p_from_u`] with an explicit continuity-correction toggle. The
/// correction moves `u1` half a unit toward the mean before standardizing.
pub fn p_from_u_with(
    u1: f64,
    n1: usize,
    n2: usize,
    tie_groups: Option<&[usize]>,
    continuity_correction: bool,
) -> Result<(f64, f64), EvalError> {
    if n1 == 0 || n2 == 0 {
        return Err(EvalError::EmptySample);
    }
    let max_u = (n1 * n2) as f64;
    if !(0.0..=max_u).contains(&u1) {
        return Err(EvalError::InvalidU { u1, max: max_u });
    }
    let sigma = match tie_groups {
        Some(groups) => tie_corrected_sigma(n1, n2, groups)?,
        None => {
            let n = (n1 + n2) as f64;
            ((n1 as f64) * (n2 as f64) * (n + 1.0) / 12.0).sqrt()
        }
    };
    if sigma == 0.0 {
        return Ok((0.0, 1.0));
    }
    let mut d = u1 - max_u / 2.0;
    if continuity_correction {
        d = d.signum() * (d.abs() - 0.5).max(0.0);
    }
    let z = d / sigma;
    Ok((z, normal_two_tailed(z)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_iqr_singleton() {
        let s = median_iqr(&[5.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (5.0, 5.0, 5.0));
    }

    #[test]
    fn median_iqr_interpolates() {
        let s = median_iqr(&[4.0, 4.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (5.0, 4.0, 5.0));
        let s = median_iqr(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (2.5, 1.75, 3.25));
    }

    #[test]
    fn median_iqr_rejects_empty() {
        assert!(matches!(median_iqr(&[]), Err(EvalError::EmptySample)));
    }

    #[test]
    fn identical_samples_give_central_u_and_p_one() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.u1, 4.5);
        assert_eq!(r.p_two_tailed, 1.0);
        assert_eq!(r.method, UMethod::Exact);
    }

    #[test]
    fn separated_samples_exact_p() {
        // All 6 assignments of 2 pooled ranks: U in {0,1,2,2,3,4}, so the
        // inclusive lower tail at U=0 is 1/6 and p = 2/6.
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u1, 0.0);
        assert!((r.p_two_tailed - 1.0 / 3.0).abs() < 1e-12);
        assert!(!r.tie_corrected);
    }

    #[test]
    fn all_equal_is_degenerate() {
        let r = mann_whitney_u(&[2.0, 2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_two_tailed, 1.0);
        assert_eq!(r.z, 0.0);
    }

    #[test]
    fn large_samples_switch_to_normal() {
        let s1: Vec<f64> = (0..7).map(f64::from).collect();
        let s2: Vec<f64> = (0..6).map(|i| f64::from(i) + 0.5).collect();
        let r = mann_whitney_u(&s1, &s2).unwrap();
        assert_eq!(r.method, UMethod::NormalApprox);
    }

    #[test]
    fn u_complementarity() {
        let s1 = [3.0, 1.0, 4.0, 1.0, 5.0];
        let s2 = [9.0, 2.0, 6.0];
        let a = mann_whitney_u(&s1, &s2).unwrap();
        let b = mann_whitney_u(&s2, &s1).unwrap();
        assert!((a.u1 + b.u1 - (s1.len() * s2.len()) as f64).abs() < 1e-12);
        assert!((a.p_two_tailed - b.p_two_tailed).abs() < 1e-12);
    }

    #[test]
    fn central_u_gives_p_one() {
        let (z, p) = p_from_u(721.5, 37, 39, None).unwrap();
        assert_eq!(z, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn reference_z_and_p_values() {
        let (z, p) = p_from_u(733.0, 37, 39, None).unwrap();
        assert!((z - 0.1195).abs() < 1e-4, "z {z}");
        assert!((p - 0.9049).abs() < 1e-4, "p {p}");

        let (z, p) = p_from_u(859.0, 37, 39, None).unwrap();
        assert!((z - 1.4288).abs() < 1e-3, "z {z}");
        assert!((p - 0.1531).abs() < 1e-4, "p {p}");

        let (_, p) = p_from_u(662.0, 37, 39, None).unwrap();
        assert!((p - 0.536).abs() < 1e-3, "p {p}");
    }

    #[test]
    fn tie_correction_shrinks_p() {
        let (_, p_plain) = p_from_u(859.0, 37, 39, None).unwrap();
        // Heavy ties: binary-like pooled sample.
        let (_, p_tied) = p_from_u(859.0, 37, 39, Some(&[40, 36])).unwrap();
        assert!(p_tied < p_plain);
    }

    #[test]
    fn exact_p_matches_scipy_on_tie_free_samples() {
        // Reference rows from scipy.stats.mannwhitneyu(method="exact").
        let cases: [(&[f64], &[f64], f64, f64); 6] = [
            (&[95.0, 36.0], &[32.0, 29.0], 4.0, 0.3333333333333333),
            (&[87.0, 95.0, 70.0], &[12.0, 76.0], 5.0, 0.4),
            (
                &[4.0, 12.0, 28.0, 30.0, 65.0],
                &[78.0, 72.0],
                0.0,
                0.09523809523809523,
            ),
            (
                &[29.0, 58.0, 76.0],
                &[36.0, 1.0, 98.0, 21.0, 90.0],
                8.0,
                1.0,
            ),
            (
                &[36.0, 20.0, 28.0, 98.0, 44.0],
                &[14.0, 12.0, 49.0, 13.0],
                16.0,
                0.19047619047619047,
            ),
            (
                &[78.0, 34.0, 6.0, 94.0],
                &[59.0, 69.0, 16.0, 49.0],
                9.0,
                0.8857142857142857,
            ),
        ];
        for (s1, s2, u1, p) in cases {
            let r = mann_whitney_u(s1, s2).unwrap();
            assert_eq!(r.method, UMethod::Exact);
            assert_eq!(r.u1, u1, "u1 for {s1:?} vs {s2:?}");
            assert!(
                (r.p_two_tailed - p).abs() < 1e-12,
                "p {} vs {p} for {s1:?} vs {s2:?}",
                r.p_two_tailed
            );
        }
    }

    #[test]
    fn tie_corrected_normal_matches_scipy() {
        // scipy.stats.mannwhitneyu(method="asymptotic", use_continuity=False)
        // on these samples reports U = 672.0, p = 0.2059032107320684.
        let s1: Vec<f64> = [1.0, 2.0, 3.0, 4.0, 5.0].repeat(8);
        let s2: Vec<f64> = [2.0, 3.0, 3.0, 4.0, 5.0].repeat(8);
        let r = mann_whitney_u(&s1, &s2).unwrap();
        assert_eq!(r.method, UMethod::NormalApprox);
        assert!(r.tie_corrected);
        assert_eq!(r.u1.min((r.n1 * r.n2) as f64 - r.u1), 672.0);
        // Residual difference is normal-CDF implementation precision.
        assert!(
            (r.p_two_tailed - 0.2059032107320684).abs() < 1e-9,
            "p {}",
            r.p_two_tailed
        );
    }

    #[test]
    fn u_out_of_range_is_error() {
        assert!(matches!(
            p_from_u(-1.0, 3, 3, None),
            Err(EvalError::InvalidU { .. })
        ));
        assert!(matches!(
            p_from_u(10.0, 3, 3, None),
            Err(EvalError::InvalidU { .. })
        ));
    }

    #[test]
    fn continuity_correction_moves_toward_mean() {
        let (z_off, _) = p_from_u_with(733.0, 37, 39, None, false).unwrap();
        let (z_on, _) = p_from_u_with(733.0, 37, 39, None, true).unwrap();
        assert!(z_on < z_off);
        assert!(z_on > 0.0);
    }

    #[test]
    fn empty_sample_is_error() {
        assert!(matches!(
            mann_whitney_u(&[], &[1.0]),
            Err(EvalError::EmptySample)
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sample() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec((1..=5i64).prop_map(|v| v as f64), 1..12)
        }

        proptest! {
            #[test]
            fn u_complementarity(s1 in sample(), s2 in sample()) {
                let a = mann_whitney_u(&s1, &s2).unwrap();
                let b = mann_whitney_u(&s2, &s1).unwrap();
                prop_assert!((a.u1 + b.u1 - (s1.len() * s2.len()) as f64).abs() < 1e-12);
            }

            #[test]
            fn strictly_increasing_transform_preserves_u_and_p(s1 in sample(), s2 in sample()) {
                let base = mann_whitney_u(&s1, &s2).unwrap();
                // Cubing is strictly increasing on these values.
                let t1: Vec<f64> = s1.iter().map(|v| v.powi(3)).collect();
                let t2: Vec<f64> = s2.iter().map(|v| v.powi(3)).collect();
                let transformed = mann_whitney_u(&t1, &t2).unwrap();
                prop_assert_eq!(base.u1, transformed.u1);
                prop_assert_eq!(base.p_two_tailed, transformed.p_two_tailed);
            }

            #[test]
            fn median_iqr_permutation_invariant(values in proptest::collection::vec(-50..=50i64, 1..40), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let values: Vec<f64> = values.into_iter().map(|v| v as f64).collect();
                let baseline = median_iqr(&values).unwrap();
                let mut shuffled = values.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                prop_assert_eq!(baseline, median_iqr(&shuffled).unwrap());
            }
        }
    }
}
