//! Exact tests and intervals for small-count rate comparisons.

use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF, Hypergeometric};

/// Two-sided Clopper-Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - confidence;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64)
            .expect("positive shape")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64)
            .expect("positive shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_tail_ge(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let b = Binomial::new(p, n).expect("valid binomial");
    b.sf(k - 1).clamp(0.0, 1.0)
}

/// One-sided sign test: p-value for seeing at least `pos` positive signs out
/// of `pos + neg` non-tied pairs when both signs are equally likely.
pub fn sign_test(pos: u64, neg: u64) -> f64 {
    binomial_tail_ge(pos, pos + neg, 0.5)
}

/// One-sided Fisher exact test that group A's rate is lower than group B's:
/// `P(X <= a)` under the hypergeometric null with both margins fixed.
pub fn fisher_less(a: u64, n_a: u64, b: u64, n_b: u64) -> f64 {
    let total = n_a + n_b;
    let successes = a + b;
    if total == 0 || n_a == 0 {
        return 1.0;
    }
    let h = Hypergeometric::new(total, successes, n_a).expect("valid hypergeometric");
    h.cdf(a).clamp(0.0, 1.0)
}
