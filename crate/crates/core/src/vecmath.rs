//! Small dense-vector helpers shared across the crate.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    let max = linf_norm(v);
    if max == 0.0 {
        return 0.0;
    }
    // Factor out the largest magnitude when it is big enough for the
    // squared sum to overflow.
    if max > 1e150 {
        let sum: f64 = v.iter().map(|x| (x / max) * (x / max)).sum();
        max * sum.sqrt()
    } else {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub(crate) fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Rescales `v` until `norm(v) <= bound` holds in computed arithmetic.
///
/// Mathematically a single multiplication by `bound / norm` suffices, but
/// rounding can leave the recomputed norm a few ulps above the bound; the
/// loop repeats (with a forced strict shrink after a few rounds) so that
/// callers can rely on the computed norm being inside the ball, which also
/// makes the operation exactly idempotent.
pub(crate) fn scale_into_ball(v: &mut [f64], norm: impl Fn(&[f64]) -> f64, bound: f64) {
    debug_assert!(bound > 0.0);
    for round in 0.. {
        let n = norm(v);
        if n <= bound {
            return;
        }
        let mut s = bound / n;
        if round >= 4 {
            s *= 1.0 - 1e-12;
        } else if s >= 1.0 {
            s = 1.0 - f64::EPSILON;
        }
        for x in v.iter_mut() {
            *x *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_on_simple_vectors() {
        let v = [3.0, -4.0];
        assert_eq!(l2_norm(&v), 5.0);
        assert_eq!(l1_norm(&v), 7.0);
        assert_eq!(linf_norm(&v), 4.0);
        assert_eq!(dot(&v, &[1.0, 1.0]), -1.0);
    }

    #[test]
    fn l2_norm_survives_huge_entries() {
        let v = [1e200, 1e200];
        let n = l2_norm(&v);
        assert!((n / (1e200 * 2f64.sqrt()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_into_ball_terminates_and_bounds() {
        let mut v = vec![3.0, 4.0];
        scale_into_ball(&mut v, l2_norm, 1.0);
        assert!(l2_norm(&v) <= 1.0);
        let snapshot = v.clone();
        scale_into_ball(&mut v, l2_norm, 1.0);
        assert_eq!(v, snapshot);
    }
}
