//! Central finite-difference verification of analytic gradients.

/// Compares `analytic` against central differences of the scalar fragment
/// `loss` at `params`, perturbing one parameter at a time by `h`. Returns the
/// maximum relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn grad_check(
    loss: impl Fn(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "gradient length must match params");
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let orig = work[k];
        work[k] = orig + h;
        let plus = loss(&work);
        work[k] = orig - h;
        let minus = loss(&work);
        work[k] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = numeric.abs().max(analytic[k].abs()).max(1e-8);
        let err = (numeric - analytic[k]).abs() / denom;
        if err > worst {
            worst = err;
        }
    }
    worst
}
