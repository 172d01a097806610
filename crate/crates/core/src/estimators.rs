//! Budgeted randomized estimators of the regression gradient
//! (w.x - y) * x: uniform sparse sampling of the instance, importance-
//! sampled residual estimates for the 2-norm and 1-norm geometries, and the
//! geometric-degree estimator for derivatives of analytic losses.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{BudgetLedger, LabeledInstance};
use crate::vecmath::{dot, l1_norm};

/// Sparse vector with sorted, de-duplicated support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn zero(dim: usize) -> Self {
        SparseVec {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds from (index, value) pairs, merging duplicate indices by
    /// addition and dropping exact zeros.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|(i, _)| *i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            debug_assert!(i < dim);
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|(_, v)| *v != 0.0);
        SparseVec { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn scaled(&self, factor: f64) -> SparseVec {
        if factor == 0.0 {
            return SparseVec::zero(self.dim);
        }
        SparseVec {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, v)| (i, factor * v)).collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.dim);
        self.entries.iter().map(|&(i, v)| v * w[i]).sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }
}

/// The sampled pieces of one gradient estimate.
#[derive(Debug, Clone)]
pub struct SparseGradientEstimate {
    /// Sparse unbiased estimate of the instance vector.
    pub x_tilde: SparseVec,
    /// Scalar residual estimate.
    pub theta_tilde: f64,
    /// Product estimate theta_tilde * x_tilde.
    pub g_tilde: SparseVec,
    /// Entrywise clipped copy, when the caller clips.
    pub g_bar: Option<SparseVec>,
}

/// Draws `k` indices uniformly with replacement and returns
/// (1/k) sum_r d * x[i_r] * e_{i_r}; unbiased for x, charges exactly `k`
/// attribute reads.
pub fn sample_sparse_instance(
    instance: &LabeledInstance,
    k: usize,
    ledger: &mut BudgetLedger,
    rng: &mut impl Rng,
) -> Result<SparseVec> {
    if k < 1 {
        return Err(Error::invalid_input("k must be at least 1"));
    }
    let d = instance.dim();
    let weight = d as f64 / k as f64;
    let mut pairs = Vec::with_capacity(k);
    for _ in 0..k {
        let i = rng.random_range(0..d);
        let value = instance.observe(i, ledger)?;
        pairs.push((i, weight * value));
    }
    Ok(SparseVec::from_pairs(d, pairs))
}

/// Samples an index proportionally to the given non-negative weights.
/// `total` must be their sum (strictly positive).
fn sample_index_weighted(
    rng: &mut impl Rng,
    weights: impl Iterator<Item = f64>,
    total: f64,
) -> usize {
    debug_assert!(total > 0.0);
    let u = rng.random::<f64>() * total;
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    let mut chosen = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = i;
            cumulative += w;
            if chosen.is_none() && u < cumulative {
                chosen = Some(i);
            }
        }
    }
    // Rounding can leave u marginally above the accumulated total; fall
    // back to the last index with positive weight.
    chosen.unwrap_or(last_positive)
}

fn check_finite(w: &[f64]) -> Result<()> {
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid_input("non-finite entry in regressor"));
    }
    Ok(())
}

/// Importance-sampled residual for the 2-norm geometry with rescaled
/// attributes: samples j with probability w[j]^2/||w||_2^2 and returns
/// ||w||_2^2 * (attr_scale * x[j]) / w[j] - target (one read). At w = 0 the
/// estimate is exact: returns -target with no read.
pub fn residual_estimate_l2_scaled(
    w: &[f64],
    instance: &LabeledInstance,
    attr_scale: f64,
    target: f64,
    ledger: &mut BudgetLedger,
    rng: &mut impl Rng,
) -> Result<f64> {
    check_finite(w)?;
    let norm_sq = dot(w, w);
    if norm_sq == 0.0 {
        return Ok(-target);
    }
    let j = sample_index_weighted(rng, w.iter().map(|x| x * x), norm_sq);
    let xj = instance.observe(j, ledger)?;
    Ok(norm_sq * (attr_scale * xj) / w[j] - target)
}

/// Unbiased single-read estimate of w.x - y under the 2-norm geometry.
pub fn residual_estimate_l2(
    w: &[f64],
    instance: &LabeledInstance,
    ledger: &mut BudgetLedger,
    rng: &mut impl Rng,
) -> Result<f64> {
    residual_estimate_l2_scaled(w, instance, 1.0, instance.target(), ledger, rng)
}

/// Unbiased single-read estimate of w.x - y under the 1-norm geometry:
/// samples j with probability |w[j]|/||w||_1 and returns
/// ||w||_1 * sign(w[j]) * x[j] - y. At w = 0 returns -y with no read.
pub fn residual_estimate_l1(
    w: &[f64],
    instance: &LabeledInstance,
    ledger: &mut BudgetLedger,
    rng: &mut impl Rng,
) -> Result<f64> {
    check_finite(w)?;
    let norm = l1_norm(w);
    if norm == 0.0 {
        return Ok(-instance.target());
    }
    let j = sample_index_weighted(rng, w.iter().map(|x| x.abs()), norm);
    let xj = instance.observe(j, ledger)?;
    Ok(norm * w[j].signum() * xj - instance.target())
}

/// g_tilde = theta_tilde * x_tilde.
pub fn gradient_estimate(theta_tilde: f64, x_tilde: &SparseVec) -> SparseVec {
    x_tilde.scaled(theta_tilde)
}

/// One draw of the analytic-derivative estimator.
#[derive(Debug, Clone)]
pub struct GenEstSample {
    /// Sampled Taylor degree n.
    pub degree: usize,
    /// Residual samples; empty when the degree's coefficient vanishes.
    pub s_values: Vec<f64>,
    /// 2^{n+1} * a_n * prod_r s_r.
    pub theta_hat: f64,
    /// Attribute reads this draw charged.
    pub attribute_reads: u64,
    /// Reads the plain procedure (no zero-coefficient short-circuit) would
    /// have charged: n below the degree cutoff, n*N above it.
    pub procedure_reads: u64,
}

/// Degrees above this are combined in log-magnitude space so that the
/// 2^{n+1} factor and long residual products cannot overflow.
const GEN_EST_DIRECT_DEGREE: usize = 50;

/// Unbiased estimator of f'(w . (attr_scale * x) - target) for an analytic
/// f' with Taylor coefficients `coeffs`: draws a degree n with probability
/// 2^-(n+1), multiplies n independent residual estimates (averaging N of
/// them per factor for large n, N = ceil(4 b_eff^2)) and rescales by
/// 2^{n+1} a_n. Expected attribute cost is at most 3 reads.
///
/// When the drawn coefficient is zero the residual sampling is skipped
/// entirely; the returned estimate is zero either way.
pub fn gen_est(
    w: &[f64],
    instance: &LabeledInstance,
    coeffs: impl Fn(usize) -> f64,
    b_eff: f64,
    attr_scale: f64,
    target: f64,
    ledger: &mut BudgetLedger,
    rng: &mut impl Rng,
) -> Result<GenEstSample> {
    check_finite(w)?;
    if !b_eff.is_finite() || b_eff < 1.0 {
        return Err(Error::invalid_input(format!(
            "effective bound must be >= 1, got {b_eff}"
        )));
    }
    let n_avg = (4.0 * b_eff * b_eff).ceil() as u64;
    let degree_cutoff = 2.0 * (n_avg as f64).log2();

    let mut degree = 0usize;
    while !rng.random::<bool>() {
        degree += 1;
    }

    let coeff = coeffs(degree);
    let single = (degree as f64) <= degree_cutoff;
    let procedure_reads = if single {
        degree as u64
    } else {
        degree as u64 * n_avg
    };

    if coeff == 0.0 {
        return Ok(GenEstSample {
            degree,
            s_values: Vec::new(),
            theta_hat: 0.0,
            attribute_reads: 0,
            procedure_reads,
        });
    }

    let reads_before = ledger.total();
    let mut s_values = Vec::with_capacity(degree);
    for _ in 0..degree {
        let s = if single {
            residual_estimate_l2_scaled(w, instance, attr_scale, target, ledger, rng)?
        } else {
            let mut sum = 0.0;
            for _ in 0..n_avg {
                sum += residual_estimate_l2_scaled(w, instance, attr_scale, target, ledger, rng)?;
            }
            sum / n_avg as f64
        };
        s_values.push(s);
    }

    let theta_hat = if degree <= GEN_EST_DIRECT_DEGREE {
        let mut product = 2f64.powi(degree as i32 + 1) * coeff;
        for s in &s_values {
            product *= s;
        }
        product
    } else if s_values.iter().any(|s| *s == 0.0) {
        0.0
    } else {
        let mut sign = coeff.signum();
        let mut log_mag = (degree as f64 + 1.0) * std::f64::consts::LN_2 + coeff.abs().ln();
        for s in &s_values {
            sign *= s.signum();
            log_mag += s.abs().ln();
        }
        sign * log_mag.exp()
    };

    Ok(GenEstSample {
        degree,
        s_values,
        theta_hat,
        attribute_reads: ledger.total() - reads_before,
        procedure_reads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sparse_instance_is_exact_in_one_dimension() {
        let inst = LabeledInstance::new(vec![0.42], 0.0);
        let mut ledger = BudgetLedger::new();
        for k in [1usize, 3, 7] {
            let x = sample_sparse_instance(&inst, k, &mut ledger, &mut rng(k as u64)).unwrap();
            assert!((x.get(0) - 0.42).abs() < 1e-15);
        }
    }

    #[test]
    fn sparse_instance_charges_exactly_k() {
        let inst = LabeledInstance::new(vec![0.1, 0.2, 0.3], 0.0);
        let mut ledger = BudgetLedger::new();
        sample_sparse_instance(&inst, 5, &mut ledger, &mut rng(1)).unwrap();
        assert_eq!(ledger.total(), 5);
    }

    #[test]
    fn sparse_instance_rejects_zero_k() {
        let inst = LabeledInstance::new(vec![1.0], 0.0);
        let mut ledger = BudgetLedger::new();
        assert!(sample_sparse_instance(&inst, 0, &mut ledger, &mut rng(0)).is_err());
    }

    #[test]
    fn sparse_instance_two_outcomes_with_d2_k1() {
        // x = (1, 0): outcomes are (2, 0) and (0, 0), each with probability 1/2.
        let inst = LabeledInstance::new(vec![1.0, 0.0], 0.0);
        let mut ledger = BudgetLedger::new();
        let mut seen_two = 0usize;
        let mut seen_zero = 0usize;
        let mut r = rng(7);
        for _ in 0..2000 {
            let x = sample_sparse_instance(&inst, 1, &mut ledger, &mut r).unwrap();
            match x.nnz() {
                0 => seen_zero += 1,
                1 => {
                    assert_eq!(x.get(0), 2.0);
                    seen_two += 1;
                }
                _ => panic!("support larger than k"),
            }
        }
        assert!(seen_two > 800 && seen_zero > 800);
    }

    #[test]
    fn residual_l2_single_support_is_exact() {
        let inst = LabeledInstance::new(vec![0.5, 0.9], 1.0);
        let mut ledger = BudgetLedger::new();
        let theta =
            residual_estimate_l2(&[2.0, 0.0], &inst, &mut ledger, &mut rng(0)).unwrap();
        assert!((theta - 0.0).abs() < 1e-15); // 4 * 0.5 / 2 - 1
        assert_eq!(ledger.total(), 1);
    }

    #[test]
    fn residual_l2_zero_regressor_fallback() {
        let inst = LabeledInstance::new(vec![0.3, 0.4], 0.7);
        let mut ledger = BudgetLedger::new();
        let theta =
            residual_estimate_l2(&[0.0, 0.0], &inst, &mut ledger, &mut rng(0)).unwrap();
        assert_eq!(theta, -0.7);
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn residual_l1_single_support_is_exact() {
        let inst = LabeledInstance::new(vec![0.2, 0.5], 1.0);
        let mut ledger = BudgetLedger::new();
        let theta =
            residual_estimate_l1(&[0.0, -3.0], &inst, &mut ledger, &mut rng(0)).unwrap();
        assert!((theta + 2.5).abs() < 1e-15); // 3 * (-1) * 0.5 - 1
        assert_eq!(ledger.total(), 1);
    }

    #[test]
    fn residual_l1_zero_regressor_fallback() {
        let inst = LabeledInstance::new(vec![1.0, 1.0], -2.0);
        let mut ledger = BudgetLedger::new();
        let theta =
            residual_estimate_l1(&[0.0, 0.0], &inst, &mut ledger, &mut rng(0)).unwrap();
        assert_eq!(theta, 2.0);
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn residual_rejects_non_finite_regressor() {
        let inst = LabeledInstance::new(vec![1.0], 0.0);
        let mut ledger = BudgetLedger::new();
        assert!(residual_estimate_l2(&[f64::NAN], &inst, &mut ledger, &mut rng(0)).is_err());
        assert!(residual_estimate_l1(&[f64::INFINITY], &inst, &mut ledger, &mut rng(0)).is_err());
    }

    #[test]
    fn gradient_estimate_scales_support() {
        let x = SparseVec::from_pairs(2, vec![(0, 3.0)]);
        assert_eq!(gradient_estimate(0.0, &x).nnz(), 0);
        let g = gradient_estimate(2.0, &x);
        assert_eq!(g.get(0), 6.0);
        assert_eq!(g.get(1), 0.0);
    }

    #[test]
    fn gen_est_even_degrees_yield_zero_for_erf() {
        use crate::smoothing::erf_taylor_coeff;
        let inst = LabeledInstance::new(vec![0.4, 0.2], 0.3);
        let w = [0.5, -0.2];
        let mut ledger = BudgetLedger::new();
        let mut r = rng(11);
        let mut saw_even = false;
        for _ in 0..200 {
            let sample = gen_est(
                &w,
                &inst,
                erf_taylor_coeff,
                1.0,
                1.0,
                inst.target(),
                &mut ledger,
                &mut r,
            )
            .unwrap();
            if sample.degree % 2 == 0 {
                saw_even = true;
                assert_eq!(sample.theta_hat, 0.0);
                assert!(sample.s_values.is_empty());
            }
        }
        assert!(saw_even);
    }

    #[test]
    fn gen_est_rejects_small_bound() {
        let inst = LabeledInstance::new(vec![1.0], 0.0);
        let mut ledger = BudgetLedger::new();
        assert!(gen_est(
            &[1.0],
            &inst,
            |_| 1.0,
            0.5,
            1.0,
            0.0,
            &mut ledger,
            &mut rng(0)
        )
        .is_err());
    }

    #[test]
    fn gen_est_linear_coefficient_is_unbiased() {
        // a_1 = c, everything else zero: E[theta_hat] = c * (w.x - y).
        let c = 0.8;
        let coeffs = move |n: usize| if n == 1 { c } else { 0.0 };
        let inst = LabeledInstance::new(vec![0.6, -0.3], 0.25);
        let w = [0.7, 0.4];
        let truth = c * (dot(&w, inst.attributes()) - inst.target());

        let mut ledger = BudgetLedger::new();
        let mut r = rng(23);
        let draws = 200_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let s = gen_est(
                &w,
                &inst,
                coeffs,
                1.0,
                1.0,
                inst.target(),
                &mut ledger,
                &mut r,
            )
            .unwrap();
            sum += s.theta_hat;
            sum_sq += s.theta_hat * s.theta_hat;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - truth).abs() <= 4.0 * se.max(1e-12),
            "mean {mean} vs truth {truth} (se {se})"
        );
    }
}
