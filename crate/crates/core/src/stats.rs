//! Small statistics helpers for summarising replications.

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
pub fn sample_stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// One-sided sign test: the probability of at least `n_plus` successes in
/// `n_plus + n_minus` fair coin flips. Ties must be excluded by the caller.
/// Small p-values mean the plus direction dominates beyond chance.
pub fn sign_test_one_sided(n_plus: u64, n_minus: u64) -> f64 {
    let n = n_plus + n_minus;
    if n == 0 {
        return 1.0;
    }
    // Sum C(n, k) / 2^n for k >= n_plus, iterating over the binomial terms
    // with the ratio recurrence to stay in f64 range for moderate n.
    let mut term = 0.5f64.powi(n as i32); // P(X = 0)
    let mut p = 0.0;
    for k in 0..=n {
        if k >= n_plus {
            p += term;
        }
        if k < n {
            term *= (n - k) as f64 / (k + 1) as f64;
        }
    }
    p.min(1.0)
}
