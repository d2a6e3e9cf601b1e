use proptest::prelude::*;
use srpo_core::bench::{jsd, jsd_of_distributions, mmd, mmd_with_bandwidth, monotonicity, smd, spearman, SMD_SENTINEL};

/// Quadratic average rank: one plus the count below plus half the ties.
fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, a)| {
            let below = x.iter().filter(|b| *b < a).count() as f64;
            let ties = x.iter().enumerate().filter(|(j, b)| *j != i && *b == a).count() as f64;
            1.0 + below + 0.5 * ties
        })
        .collect()
}

fn naive_spearman(x: &[f64]) -> f64 {
    let r = naive_ranks(x);
    let t: Vec<f64> = (1..=x.len()).map(|v| v as f64).collect();
    let n = x.len() as f64;
    let (mr, mt) = (r.iter().sum::<f64>() / n, t.iter().sum::<f64>() / n);
    let cov: f64 = r.iter().zip(&t).map(|(a, b)| (a - mr) * (b - mt)).sum();
    let vr: f64 = r.iter().map(|a| (a - mr) * (a - mr)).sum();
    let vt: f64 = t.iter().map(|b| (b - mt) * (b - mt)).sum();
    if vr == 0.0 {
        0.0
    } else {
        cov / (vr * vt).sqrt()
    }
}

fn naive_mmd(s: &[f64], f: &[f64], sigma: f64) -> f64 {
    let k = |a: f64, b: f64| (-(a - b).powi(2) / (2.0 * sigma * sigma)).exp();
    let mut ss = 0.0;
    for a in s {
        for b in s {
            ss += k(*a, *b);
        }
    }
    let mut ff = 0.0;
    for a in f {
        for b in f {
            ff += k(*a, *b);
        }
    }
    let mut sf = 0.0;
    for a in s {
        for b in f {
            sf += k(*a, *b);
        }
    }
    let (n, m) = (s.len() as f64, f.len() as f64);
    (ss / (n * n) + ff / (m * m) - 2.0 * sf / (n * m)).max(0.0)
}

fn quantized() -> impl Strategy<Value = f64> {
    // Coarse grid so ties show up often.
    (0u8..8).prop_map(|v| v as f64 / 7.0)
}

proptest! {
    #[test]
    fn spearman_matches_quadratic_ranks(x in prop::collection::vec(0.0f64..1.0, 2..40)) {
        prop_assert!((spearman(&x).unwrap().value - naive_spearman(&x)).abs() <= 1e-9);
    }

    #[test]
    fn spearman_with_ties(x in prop::collection::vec(quantized(), 2..30)) {
        let got = spearman(&x).unwrap();
        prop_assert!((got.value - naive_spearman(&x)).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&got.value));
        let constant = x.iter().all(|v| *v == x[0]);
        prop_assert_eq!(got.flagged, constant);
    }

    #[test]
    fn spearman_distinct_values_closed_form(x in prop::collection::hash_set(0u32..10_000, 2..30)) {
        let v: Vec<f64> = x.into_iter().map(|u| u as f64).collect();
        let r = naive_ranks(&v);
        let n = v.len() as f64;
        let d2: f64 = r.iter().enumerate().map(|(i, ri)| (ri - (i + 1) as f64).powi(2)).sum();
        let closed = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        prop_assert!((spearman(&v).unwrap().value - closed).abs() <= 1e-9);
    }

    #[test]
    fn monotonicity_bounds(x in prop::collection::vec(0.0f64..1.0, 2..40)) {
        let m = monotonicity(&x).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() >= 2 {
            prop_assert_eq!(monotonicity(&sorted).unwrap(), 1.0);
        }
    }

    #[test]
    fn mmd_matches_double_sum(
        s in prop::collection::vec(0.0f64..1.0, 1..25),
        f in prop::collection::vec(0.0f64..1.0, 1..25),
        sigma in 0.01f64..2.0,
    ) {
        prop_assert!((mmd_with_bandwidth(&s, &f, sigma).unwrap() - naive_mmd(&s, &f, sigma)).abs() <= 1e-9);
        let m = mmd(&s, &f).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert!((m - mmd(&f, &s).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn mmd_is_permutation_invariant(mut s in prop::collection::vec(0.0f64..1.0, 1..20), f in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let before = mmd(&s, &f).unwrap();
        s.reverse();
        prop_assert!((before - mmd(&s, &f).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn jsd_bounded_and_symmetric(
        s in prop::collection::vec(0.0f64..1.0, 1..30),
        f in prop::collection::vec(0.0f64..1.0, 1..30),
        bins in 1usize..40,
    ) {
        let a = jsd(&s, &f, bins).unwrap();
        let b = jsd(&f, &s, bins).unwrap();
        prop_assert!((0.0..=std::f64::consts::LN_2).contains(&a));
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(jsd(&s, &s, bins).unwrap() <= 1e-12);
    }

    #[test]
    fn smd_antisymmetric(
        s in prop::collection::vec(0.0f64..1.0, 2..30),
        f in prop::collection::vec(0.0f64..1.0, 2..30),
    ) {
        let a = smd(&s, &f).unwrap();
        let b = smd(&f, &s).unwrap();
        prop_assert!((a.value + b.value).abs() <= 1e-12);
        prop_assert_eq!(a.flagged, b.flagged);
    }
}

#[test]
fn jsd_of_disjoint_distributions_is_ln2() {
    let v = jsd_of_distributions(&[1.0, 0.0], &[0.0, 1.0]);
    assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    let w = jsd(&[0.0; 5], &[1.0; 5], 20).unwrap();
    assert!((w - std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn smd_degenerate_cases() {
    let s = smd(&[0.7, 0.7], &[0.2, 0.2]).unwrap();
    assert_eq!(s.value, SMD_SENTINEL);
    assert!(s.flagged);
    assert_eq!(smd(&[0.2, 0.2], &[0.7]).unwrap().value, -SMD_SENTINEL);
    assert_eq!(smd(&[0.5, 0.5], &[0.5]).unwrap().value, 0.0);
    assert!(smd(&[0.5], &[0.5]).is_err());
    let hand = smd(&[1.0, 3.0], &[0.0, 2.0]).unwrap();
    assert!((hand.value - 1.0 / 2f64.sqrt()).abs() < 1e-12);
}
