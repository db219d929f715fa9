use crate::error::{invalid, Result};

/// `∫_0^T t^m e^{-kt} dt`, evaluated exactly.
///
/// Equal to `m!/k^{m+1} P(m+1, kT)` with `P` the regularized lower incomplete
/// gamma function. For `m = 0` this is `(1 - e^{-kT})/k`; for larger `m` the
/// polynomial correction in `kT` is kept, and the value behaves like
/// `m!/k^{m+1}` as `k -> ∞`.
pub fn laplace_moment(m: u32, k: f64, horizon: f64) -> Result<f64> {
    if !(k > 0.0) || !k.is_finite() {
        return invalid(format!("decay rate k must be positive, got {k}"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    let x = k * horizon;
    let mut factorial = 1.0;
    for i in 1..=m {
        factorial *= i as f64;
    }
    let prefactor = factorial / k.powi(m as i32 + 1);
    if m == 0 {
        return Ok(-(-x).exp_m1() / k);
    }
    let p = if x < m as f64 + 1.0 {
        // P(m+1, x) = e^{-x} sum_{i > m} x^i / i!
        let mut term = 1.0;
        for i in 1..=m + 1 {
            term *= x / i as f64;
        }
        let mut sum = term;
        let mut i = m + 1;
        while i < m + 500 {
            i += 1;
            term *= x / i as f64;
            sum += term;
            if term <= 1e-18 * sum {
                break;
            }
        }
        (-x).exp() * sum
    } else {
        // P(m+1, x) = 1 - e^{-x} sum_{i <= m} x^i / i!
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..=m {
            term *= x / i as f64;
            sum += term;
        }
        1.0 - (-x).exp() * sum
    };
    Ok(prefactor * p)
}
