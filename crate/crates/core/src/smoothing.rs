//! Loss functions and the analytic machinery around the smoothed SVR loss:
//! the squared and delta-insensitive losses, entry clipping, the convex
//! even function rho(x) = x*erf(x) + exp(-x^2)/sqrt(pi) whose derivative is
//! erf, the Taylor coefficients of erf, and the smoothed surrogate
//!
//!   f_eps(x) = (eps/2) rho((x-delta)/eps) + (eps/2) rho((x+delta)/eps) - delta,
//!
//! which approximates max{0, |x| - delta} uniformly within eps. Also hosts
//! the second-order multiplicative-weights regret check used by the
//! verification suites.

use crate::error::{Error, Result};

/// 2 / sqrt(pi)
const TWO_OVER_SQRT_PI: f64 = 1.1283791670955126;
/// 1 / sqrt(pi)
const ONE_OVER_SQRT_PI: f64 = 0.5641895835477563;

/// Loss selector used by evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    Squared,
    DeltaInsensitive { delta: f64 },
    SmoothedSvr { delta: f64, epsilon: f64 },
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Squared => Ok(()),
            LossSpec::DeltaInsensitive { delta } => {
                if delta < 0.0 || !delta.is_finite() {
                    Err(Error::invalid_input("delta must be finite and >= 0"))
                } else {
                    Ok(())
                }
            }
            LossSpec::SmoothedSvr { delta, epsilon } => {
                if delta < 0.0 || !delta.is_finite() {
                    Err(Error::invalid_input("delta must be finite and >= 0"))
                } else if epsilon <= 0.0 || !epsilon.is_finite() {
                    Err(Error::invalid_input("epsilon must be finite and > 0"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn loss(&self, y_hat: f64, y: f64) -> f64 {
        match *self {
            LossSpec::Squared => squared_loss(y_hat, y),
            LossSpec::DeltaInsensitive { delta } => delta_insensitive_loss(y_hat, y, delta),
            LossSpec::SmoothedSvr { delta, epsilon } => f_eps(y_hat - y, delta, epsilon),
        }
    }
}

/// (1/2)(y_hat - y)^2
pub fn squared_loss(y_hat: f64, y: f64) -> f64 {
    let r = y_hat - y;
    0.5 * r * r
}

/// max{0, |y_hat - y| - delta}
pub fn delta_insensitive_loss(y_hat: f64, y: f64, delta: f64) -> f64 {
    ((y_hat - y).abs() - delta).max(0.0)
}

/// Truncation to [-c, c].
pub fn clip(x: f64, c: f64) -> f64 {
    debug_assert!(c > 0.0);
    x.min(c).max(-c)
}

/// Reference error function, accurate to about 1 ulp (musl's erf port).
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// rho(x) = x*erf(x) + exp(-x^2)/sqrt(pi); convex, even, rho' = erf and
/// rho(x) -> |x| as |x| grows.
pub fn rho(x: f64) -> f64 {
    x * erf(x) + ONE_OVER_SQRT_PI * (-x * x).exp()
}

/// n-th Taylor coefficient of erf around 0: zero for even n, and for
/// n = 2m+1 equal to (2/sqrt(pi)) * (-1)^m / (m! (2m+1)).
pub fn erf_taylor_coeff(n: usize) -> f64 {
    if n % 2 == 0 {
        return 0.0;
    }
    let m = (n - 1) / 2;
    let mut factorial = 1.0f64;
    for i in 1..=m {
        factorial *= i as f64;
        if !factorial.is_finite() {
            return 0.0; // coefficient underflows to zero well before this
        }
    }
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    sign * TWO_OVER_SQRT_PI / (factorial * (2 * m + 1) as f64)
}

/// Where |u| exceeds this, rho(u) equals |u| to far below f64 resolution,
/// so the surrogate falls back to its asymptote (also avoids Inf from
/// degenerate x/epsilon ratios).
const F_EPS_ASYMPTOTE_CUT: f64 = 1e8;

/// Smoothed delta-insensitive loss; uniformly within epsilon of
/// max{0, |x| - delta}.
pub fn f_eps(x: f64, delta: f64, epsilon: f64) -> f64 {
    debug_assert!(epsilon > 0.0 && delta >= 0.0);
    let u_minus = (x - delta) / epsilon;
    let u_plus = (x + delta) / epsilon;
    if u_minus.abs() > F_EPS_ASYMPTOTE_CUT || u_plus.abs() > F_EPS_ASYMPTOTE_CUT {
        return delta_insensitive_loss(x, 0.0, delta);
    }
    0.5 * epsilon * rho(u_minus) + 0.5 * epsilon * rho(u_plus) - delta
}

/// Derivative of `f_eps` in x: (erf((x-delta)/eps) + erf((x+delta)/eps))/2.
pub fn f_eps_derivative(x: f64, delta: f64, epsilon: f64) -> f64 {
    0.5 * (erf((x - delta) / epsilon) + erf((x + delta) / epsilon))
}

/// Runs the multiplicative-weights recursion z_{t+1}[i] = z_t[i] *
/// exp(-eta c_t[i]) from the all-ones vector and reports whether the
/// second-order regret inequality
///
///   sum_t p_t . c_t  <=  min_i sum_t c_t[i] + log(n)/eta + eta sum_t p_t . c_t^2
///
/// holds, with p_t the normalized weights. Entries must be >= -1/eta.
pub fn mw_second_order_check(costs: &[Vec<f64>], eta: f64) -> Result<bool> {
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::invalid_input("eta must be finite and > 0"));
    }
    let Some(first) = costs.first() else {
        return Ok(true);
    };
    let n = first.len();
    if n == 0 {
        return Err(Error::invalid_input("cost vectors must be non-empty"));
    }
    let floor = -1.0 / eta;
    for (t, c) in costs.iter().enumerate() {
        if c.len() != n {
            return Err(Error::invalid_input(format!(
                "cost vector {t} has length {} but expected {n}",
                c.len()
            )));
        }
        if let Some(bad) = c.iter().find(|x| !x.is_finite() || **x < floor) {
            return Err(Error::invalid_input(format!(
                "cost entry {bad} below -1/eta = {floor}"
            )));
        }
    }

    let mut z = vec![1.0f64; n];
    let mut col_sums = vec![0.0f64; n];
    let mut played = 0.0f64;
    let mut quad = 0.0f64;
    for c in costs {
        let z_total: f64 = z.iter().sum();
        for i in 0..n {
            let p = z[i] / z_total;
            played += p * c[i];
            quad += p * c[i] * c[i];
            col_sums[i] += c[i];
            z[i] *= (-eta * c[i]).exp();
        }
        // Exact power-of-two renormalization keeps z in range on long
        // sequences without perturbing the p_t trajectory.
        let max = z.iter().fold(0.0f64, |m, v| m.max(*v));
        if max > 1e100 {
            let scale = 2.0f64.powi(-(max.log2().floor() as i32));
            for v in z.iter_mut() {
                *v *= scale;
            }
        }
    }
    let best = col_sums.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(played <= best + (n as f64).ln() / eta + eta * quad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_loss_examples() {
        assert_eq!(squared_loss(1.0, 1.0), 0.0);
        assert_eq!(squared_loss(2.0, 0.0), 2.0);
        assert_eq!(squared_loss(-1.0, 1.0), 2.0);
    }

    #[test]
    fn delta_insensitive_examples() {
        assert_eq!(delta_insensitive_loss(1.0, 1.3, 0.5), 0.0);
        assert_eq!(delta_insensitive_loss(2.0, 0.0, 0.5), 1.5);
        // delta = 0 degenerates to the absolute error
        assert_eq!(delta_insensitive_loss(1.0, -1.5, 0.0), 2.5);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(0.5, 1.0), 0.5);
        assert_eq!(clip(5.0, 1.0), 1.0);
        assert_eq!(clip(-3.0, 2.0), -2.0);
    }

    #[test]
    fn rho_at_zero_is_inv_sqrt_pi() {
        assert!((rho(0.0) - 0.5641895835477563).abs() < 1e-15);
    }

    #[test]
    fn rho_is_even() {
        for &x in &[0.1, 0.7, 1.9, 3.3, 8.0] {
            assert_eq!(rho(x), rho(-x));
        }
    }

    #[test]
    fn rho_approaches_absolute_value() {
        assert!((rho(10.0) - 10.0).abs() <= 1e-8);
        assert!(rho(10.0) >= 10.0);
    }

    #[test]
    fn rho_derivative_matches_erf() {
        let h = 1e-5;
        for i in 0..40 {
            let x = -2.0 + 0.1 * i as f64;
            let fd = (rho(x + h) - rho(x - h)) / (2.0 * h);
            assert!(
                (fd - erf(x)).abs() < 1e-6,
                "finite difference {fd} vs erf {e} at {x}",
                e = erf(x)
            );
        }
    }

    #[test]
    fn erf_coefficients_match_formula() {
        assert_eq!(erf_taylor_coeff(0), 0.0);
        assert_eq!(erf_taylor_coeff(2), 0.0);
        assert!((erf_taylor_coeff(1) - 1.1283791670955126).abs() < 1e-15);
        assert!((erf_taylor_coeff(3) + 1.1283791670955126 / 3.0).abs() < 1e-15);
        assert!((erf_taylor_coeff(5) - 1.1283791670955126 / 10.0).abs() < 1e-15);
    }

    #[test]
    fn erf_reference_spot_values() {
        // Published values, 16 significant digits.
        assert!((erf(0.5) - 0.5204998778130465).abs() < 1e-13);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 1e-13);
        assert!((erf(2.0) - 0.9953222650189527).abs() < 1e-13);
        assert_eq!(erf(0.0), 0.0);
    }

    #[test]
    fn f_eps_at_zero_with_zero_delta() {
        for &eps in &[0.1, 0.01] {
            assert!((f_eps(0.0, 0.0, eps) - eps * ONE_OVER_SQRT_PI).abs() < 1e-15);
        }
    }

    #[test]
    fn f_eps_is_even() {
        for i in 0..50 {
            let x = 0.17 * i as f64;
            assert_eq!(f_eps(x, 0.5, 0.1), f_eps(-x, 0.5, 0.1));
        }
    }

    #[test]
    fn f_eps_asymptote_fallback_is_finite() {
        let v = f_eps(5.0, 0.5, 1e-12);
        assert!((v - 4.5).abs() < 1e-9);
        assert!(f_eps(1e9, 0.0, 1.0).is_finite());
    }

    #[test]
    fn mw_check_zero_sequence_holds() {
        let costs = vec![vec![0.0; 4]; 8];
        assert!(mw_second_order_check(&costs, 0.5).unwrap());
    }

    #[test]
    fn mw_check_single_expert_holds() {
        let costs = vec![vec![1.0], vec![-1.0], vec![0.7]];
        assert!(mw_second_order_check(&costs, 1.0).unwrap());
    }

    #[test]
    fn mw_check_rejects_entries_below_floor() {
        let costs = vec![vec![-3.0, 0.0]];
        assert!(mw_second_order_check(&costs, 1.0).is_err());
    }
}
