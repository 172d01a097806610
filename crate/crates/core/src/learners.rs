//! The budgeted learning loops and their full-information counterparts.
//!
//! All learners are online: one pass over the training prefix, an additive
//! (2-norm) or multiplicative (1-norm) update per example from a budgeted
//! gradient estimate, and uniform averaging of the iterates into the
//! returned regressor. Attribute reads go through the budget ledger; test
//! evaluation reads raw attributes and is never charged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, NormCertificate};
use crate::error::{Error, Result};
use crate::estimators::{
    gen_est, gradient_estimate, residual_estimate_l1, residual_estimate_l2,
    sample_sparse_instance, SparseVec,
};
use crate::model::{BudgetLedger, EtaSetting, LabeledInstance, LearnerConfig, NormKind, TraceRecord};
use crate::smoothing::{clip, delta_insensitive_loss, erf_taylor_coeff, LossSpec};
use crate::vecmath::{dot, l1_norm, l2_norm, scale_into_ball};

/// One recorded step: the gradient estimate that was applied and the
/// iterate it was computed at. Used by the post-hoc regret checks.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub gradient: SparseVec,
    pub iterate: Vec<f64>,
}

/// Output of a fit: the averaged regressor, its trace, and the exact
/// attribute accounting of the run.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub w_bar: Vec<f64>,
    pub norm_kind: NormKind,
    pub norm_bound: f64,
    pub trace: Vec<TraceRecord>,
    /// Total attribute reads charged during training.
    pub ledger_total: u64,
    /// Completed training examples (may stop short of the plan under an
    /// attribute budget).
    pub examples_seen: u64,
    /// Steps taken at a zero regressor, where the residual estimate is
    /// exact and free.
    pub fallback_steps: u64,
    /// Largest task-norm over all iterates and the averaged output.
    pub max_iterate_norm: f64,
    /// The resolved step size.
    pub eta: f64,
    pub steps: Option<Vec<StepRecord>>,
}

impl FitResult {
    /// Mean attribute reads per completed example.
    pub fn mean_reads_per_example(&self) -> f64 {
        if self.examples_seen == 0 {
            0.0
        } else {
            self.ledger_total as f64 / self.examples_seen as f64
        }
    }
}

/// Step size for the 2-norm learner: sqrt(k / (2 d m)).
pub fn default_eta_aerr(k: usize, d: usize, m: usize) -> f64 {
    (k as f64 / (2.0 * d as f64 * m as f64)).sqrt()
}

/// Step size for the 1-norm learner, from the tuning eta = (1/G)
/// sqrt(log(2d) / 5m) with gradient scale G = 2B sqrt(2d/k):
///
///   eta = (1/(2B)) sqrt(k log(2d) / (10 d m)),
///
/// which keeps eta * G = sqrt(log(2d)/(5m)) <= 1/2 whenever m >= log(2d).
pub fn default_eta_aelr(b: f64, k: usize, d: usize, m: usize) -> Result<f64> {
    let log2d = (2.0 * d as f64).ln();
    if (m as f64) < log2d {
        return Err(Error::config(format!(
            "need m >= log(2d) for the multiplicative learner (m = {m}, log(2d) = {log2d:.3})"
        )));
    }
    Ok((k as f64 * log2d / (10.0 * d as f64 * m as f64)).sqrt() / (2.0 * b))
}

fn resolve_fixed_eta(eta: EtaSetting, auto: impl FnOnce() -> Result<f64>) -> Result<f64> {
    match eta {
        EtaSetting::Fixed(e) if e.is_finite() && e > 0.0 => Ok(e),
        EtaSetting::Fixed(e) => Err(Error::config(format!(
            "step size must be finite and positive, got {e}"
        ))),
        EtaSetting::Auto => auto(),
    }
}

fn validate_task(data: &Dataset, cfg: &LearnerConfig, required: NormCertificate) -> Result<()> {
    if !cfg.norm_bound.is_finite() || cfg.norm_bound <= 0.0 {
        return Err(Error::config("norm bound B must be finite and positive"));
    }
    if data.norm_certificate() != required {
        return Err(Error::config(format!(
            "dataset is not normalized for this learner (have {:?}, need {:?})",
            data.norm_certificate(),
            required
        )));
    }
    data.verify_certificate()?;
    let label_bound = data.label_bound();
    if label_bound > cfg.norm_bound * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "labels exceed the norm bound: max |y| = {label_bound} > B = {}",
            cfg.norm_bound
        )));
    }
    if cfg.planned_examples < 1 {
        return Err(Error::config("planned example count must be at least 1"));
    }
    if cfg.planned_examples > data.len() {
        return Err(Error::config(format!(
            "planned {m} examples but dataset has only {n}",
            m = cfg.planned_examples,
            n = data.len()
        )));
    }
    Ok(())
}

fn ledger_for(cfg: &LearnerConfig) -> BudgetLedger {
    match cfg.attribute_budget {
        Some(cap) => BudgetLedger::with_cap(cap),
        None => BudgetLedger::new(),
    }
}

/// True when the remaining budget cannot cover the example's worst case.
fn budget_blocks(ledger: &BudgetLedger, worst_case: u64) -> bool {
    matches!(ledger.remaining(), Some(rem) if rem < worst_case)
}

/// Shared bookkeeping for all fit loops.
struct RunState {
    w_sum: Vec<f64>,
    examples_seen: u64,
    fallback_steps: u64,
    loss_sum: f64,
    max_norm: f64,
    trace: Vec<TraceRecord>,
    steps: Option<Vec<StepRecord>>,
    cadence: usize,
    last_traced: u64,
}

impl RunState {
    fn new(d: usize, cfg: &LearnerConfig) -> Self {
        RunState {
            w_sum: vec![0.0; d],
            examples_seen: 0,
            fallback_steps: 0,
            loss_sum: 0.0,
            max_norm: 0.0,
            trace: Vec::new(),
            steps: cfg.record_steps.then(Vec::new),
            cadence: cfg.trace_cadence(),
            last_traced: u64::MAX,
        }
    }

    fn observe_iterate(&mut self, norm: f64) {
        self.max_norm = self.max_norm.max(norm);
    }

    fn complete_example(&mut self, w: &[f64], observed_loss: f64, fallback: bool) {
        for (acc, v) in self.w_sum.iter_mut().zip(w) {
            *acc += v;
        }
        self.examples_seen += 1;
        self.loss_sum += observed_loss;
        if fallback {
            self.fallback_steps += 1;
        }
    }

    fn record_step(&mut self, gradient: &SparseVec, iterate: &[f64]) {
        if let Some(steps) = self.steps.as_mut() {
            steps.push(StepRecord {
                gradient: gradient.clone(),
                iterate: iterate.to_vec(),
            });
        }
    }

    fn mean_regressor(&self, fallback_w: &[f64]) -> Vec<f64> {
        if self.examples_seen == 0 {
            return fallback_w.to_vec();
        }
        self.w_sum
            .iter()
            .map(|v| v / self.examples_seen as f64)
            .collect()
    }

    fn trace_point(
        &mut self,
        t: u64,
        ledger: &BudgetLedger,
        current_mean: &[f64],
        testset: Option<&Dataset>,
        force: bool,
    ) -> Result<()> {
        if !force && (t % self.cadence as u64 != 0) {
            return Ok(());
        }
        if self.last_traced == t {
            return Ok(());
        }
        let test_error = match testset {
            Some(ts) => evaluate(current_mean, ts, &LossSpec::Squared)?,
            None => f64::NAN,
        };
        let train_loss_estimate = if self.examples_seen == 0 {
            f64::NAN
        } else {
            self.loss_sum / self.examples_seen as f64
        };
        self.trace.push(TraceRecord {
            example_index: t,
            cumulative_attributes: ledger.total(),
            test_error,
            train_loss_estimate,
        });
        self.last_traced = t;
        Ok(())
    }

    fn finish(
        mut self,
        start_w: &[f64],
        norm_kind: NormKind,
        bound: f64,
        eta: f64,
        ledger: &BudgetLedger,
        testset: Option<&Dataset>,
    ) -> Result<FitResult> {
        let mut w_bar = self.mean_regressor(start_w);
        scale_into_ball(&mut w_bar, |v| norm_kind.norm(v), bound);
        self.observe_iterate(norm_kind.norm(&w_bar));
        self.trace_point(self.examples_seen, ledger, &w_bar, testset, true)?;
        Ok(FitResult {
            w_bar,
            norm_kind,
            norm_bound: bound,
            trace: self.trace,
            ledger_total: ledger.total(),
            examples_seen: self.examples_seen,
            fallback_steps: self.fallback_steps,
            max_iterate_norm: self.max_norm,
            eta,
            steps: self.steps,
        })
    }
}

/// Breaks the example loop on budget exhaustion, propagates other errors.
macro_rules! try_or_stop {
    ($expr:expr) => {
        match $expr {
            Ok(v) => v,
            Err(Error::BudgetExhausted) => break,
            Err(e) => return Err(e),
        }
    };
}

/// Budgeted 2-norm regression: per example, a k-read sparse instance
/// estimate and a one-read importance-sampled residual form the gradient
/// estimate; the iterate takes a projected gradient step. Charges exactly
/// k+1 reads per example (k at a zero iterate).
pub fn aerr_fit(
    data: &Dataset,
    cfg: &LearnerConfig,
    testset: Option<&Dataset>,
) -> Result<FitResult> {
    if cfg.k < 1 {
        return Err(Error::config("k must be at least 1"));
    }
    validate_task(data, cfg, NormCertificate::L2)?;
    let d = data.dim();
    let m = cfg.planned_examples;
    let b = cfg.norm_bound;
    let eta = resolve_fixed_eta(cfg.eta, || Ok(default_eta_aerr(cfg.k, d, m)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ledger = ledger_for(cfg);
    let mut state = RunState::new(d, cfg);

    // Nonzero start, well inside the ball.
    let mut start_w = vec![0.0; d];
    start_w[0] = 0.5 * b;
    let mut w = start_w.clone();
    state.observe_iterate(l2_norm(&w));
    state.trace_point(0, &ledger, &w, testset, true)?;

    for t in 1..=m as u64 {
        if budget_blocks(&ledger, cfg.k as u64 + 1) {
            break;
        }
        ledger.begin_example();
        let inst = data.get(t as usize - 1);

        let x_tilde = try_or_stop!(sample_sparse_instance(inst, cfg.k, &mut ledger, &mut rng));
        let theta = try_or_stop!(residual_estimate_l2(&w, inst, &mut ledger, &mut rng));
        let g = gradient_estimate(theta, &x_tilde);

        state.record_step(&g, &w);
        state.complete_example(&w, 0.5 * theta * theta, ledger.per_example() == cfg.k as u64);

        for (i, gi) in g.iter() {
            w[i] -= eta * gi;
        }
        scale_into_ball(&mut w, l2_norm, b);
        state.observe_iterate(l2_norm(&w));

        let mean = state.mean_regressor(&start_w);
        state.trace_point(t, &ledger, &mean, testset, false)?;
    }

    state.finish(&start_w, NormKind::L2, b, eta, &ledger, testset)
}

/// Derives the 1-norm iterate w = (z+ - z-) * B / (||z+||_1 + ||z-||_1)
/// into `w`, guaranteeing the computed 1-norm stays within the bound.
fn derive_l1_iterate(z_plus: &[f64], z_minus: &[f64], b: f64, w: &mut [f64]) {
    let total: f64 = z_plus.iter().sum::<f64>() + z_minus.iter().sum::<f64>();
    for i in 0..w.len() {
        w[i] = (z_plus[i] - z_minus[i]) * b / total;
    }
    scale_into_ball(w, l1_norm, b);
}

/// Exact power-of-two rescaling of both weight vectors once their largest
/// entry leaves a safe range; the derived iterate is unchanged because it
/// only depends on ratios.
fn renormalize_weights(z_plus: &mut [f64], z_minus: &mut [f64]) {
    let max = z_plus
        .iter()
        .chain(z_minus.iter())
        .fold(0.0f64, |m, v| m.max(*v));
    if max > 1e200 || (max > 0.0 && max < 1e-200) {
        let scale = 2.0f64.powi(-(max.log2().floor() as i32));
        for v in z_plus.iter_mut().chain(z_minus.iter_mut()) {
            *v *= scale;
        }
    }
}

/// Budgeted 1-norm regression: the iterate lives on the scaled difference
/// of two positive weight vectors driven by multiplicative updates from the
/// clipped gradient estimate. Charges exactly k+1 reads per example (k at a
/// zero iterate, including the forced first step).
pub fn aelr_fit(
    data: &Dataset,
    cfg: &LearnerConfig,
    testset: Option<&Dataset>,
) -> Result<FitResult> {
    if cfg.k < 1 {
        return Err(Error::config("k must be at least 1"));
    }
    validate_task(data, cfg, NormCertificate::Linf)?;
    let d = data.dim();
    let m = cfg.planned_examples;
    let b = cfg.norm_bound;
    let eta = resolve_fixed_eta(cfg.eta, || default_eta_aelr(b, cfg.k, d, m))?;
    let inv_eta = 1.0 / eta;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ledger = ledger_for(cfg);
    let mut state = RunState::new(d, cfg);

    let mut z_plus = vec![1.0; d];
    let mut z_minus = vec![1.0; d];
    let mut w = vec![0.0; d];
    let start_w = vec![0.0; d];
    state.trace_point(0, &ledger, &w, testset, true)?;

    for t in 1..=m as u64 {
        if budget_blocks(&ledger, cfg.k as u64 + 1) {
            break;
        }
        ledger.begin_example();
        let inst = data.get(t as usize - 1);

        derive_l1_iterate(&z_plus, &z_minus, b, &mut w);
        state.observe_iterate(l1_norm(&w));

        let x_tilde = try_or_stop!(sample_sparse_instance(inst, cfg.k, &mut ledger, &mut rng));
        let theta = try_or_stop!(residual_estimate_l1(&w, inst, &mut ledger, &mut rng));
        let g = gradient_estimate(theta, &x_tilde);

        state.record_step(&g, &w);
        state.complete_example(&w, 0.5 * theta * theta, ledger.per_example() == cfg.k as u64);

        for (i, gi) in g.iter() {
            let c = clip(gi, inv_eta);
            z_plus[i] *= (-eta * c).exp();
            z_minus[i] *= (eta * c).exp();
        }
        renormalize_weights(&mut z_plus, &mut z_minus);

        let mean = state.mean_regressor(&start_w);
        state.trace_point(t, &ledger, &mean, testset, false)?;
    }

    state.finish(&start_w, NormKind::L1, b, eta, &ledger, testset)
}

/// Budgeted smoothed SVR: the 2-norm loop with the residual estimate
/// replaced by the analytic-derivative estimator applied to the rescaled
/// instance x/eps and shifted targets (y +- delta)/eps, averaging the two
/// one-sided estimates. Expected attribute cost per example is at most
/// k + 6 reads.
pub fn aesvr_fit(
    data: &Dataset,
    cfg: &LearnerConfig,
    testset: Option<&Dataset>,
) -> Result<FitResult> {
    if cfg.k < 1 {
        return Err(Error::config("k must be at least 1"));
    }
    validate_task(data, cfg, NormCertificate::L2)?;
    if !(cfg.delta >= 0.0 && cfg.delta <= cfg.norm_bound) {
        return Err(Error::config(format!(
            "insensitivity width must satisfy 0 <= delta <= B, got delta = {}",
            cfg.delta
        )));
    }
    if !(cfg.epsilon > 0.0) || !cfg.epsilon.is_finite() {
        return Err(Error::config("smoothing accuracy epsilon must be positive"));
    }
    let d = data.dim();
    let m = cfg.planned_examples;
    let b = cfg.norm_bound;
    // No tractable closed form exists for this estimator's gradient scale,
    // so Auto falls back to the squared-loss formula; pass an explicit eta
    // to tune.
    let eta = resolve_fixed_eta(cfg.eta, || Ok(default_eta_aerr(cfg.k, d, m)))?;
    let eps = cfg.epsilon;
    let delta = cfg.delta;
    // Effective scale of the shifted targets |y +- delta| / eps.
    let b_eff = (2.0 * b / eps).max(1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ledger = ledger_for(cfg);
    let mut state = RunState::new(d, cfg);

    let mut start_w = vec![0.0; d];
    start_w[0] = 0.5 * b;
    let mut w = start_w.clone();
    state.observe_iterate(l2_norm(&w));
    state.trace_point(0, &ledger, &w, testset, true)?;

    for t in 1..=m as u64 {
        if budget_blocks(&ledger, cfg.k as u64 + 6) {
            break;
        }
        ledger.begin_example();
        let inst = data.get(t as usize - 1);
        let y = inst.target();

        let x_tilde = try_or_stop!(sample_sparse_instance(inst, cfg.k, &mut ledger, &mut rng));
        let plus = try_or_stop!(gen_est(
            &w,
            inst,
            erf_taylor_coeff,
            b_eff,
            1.0 / eps,
            (y + delta) / eps,
            &mut ledger,
            &mut rng,
        ));
        let minus = try_or_stop!(gen_est(
            &w,
            inst,
            erf_taylor_coeff,
            b_eff,
            1.0 / eps,
            (y - delta) / eps,
            &mut ledger,
            &mut rng,
        ));
        let theta = 0.5 * (plus.theta_hat + minus.theta_hat);
        let g = gradient_estimate(theta, &x_tilde);

        let observed_loss = delta_insensitive_loss(x_tilde.dot_dense(&w), y, delta);
        state.record_step(&g, &w);
        state.complete_example(&w, observed_loss, ledger.per_example() == cfg.k as u64);

        for (i, gi) in g.iter() {
            w[i] -= eta * gi;
        }
        scale_into_ball(&mut w, l2_norm, b);
        state.observe_iterate(l2_norm(&w));

        let mean = state.mean_regressor(&start_w);
        state.trace_point(t, &ledger, &mean, testset, false)?;
    }

    state.finish(&start_w, NormKind::L2, b, eta, &ledger, testset)
}

/// Full-information 2-norm baseline: the same projected-gradient loop with
/// the exact gradient (w.x - y) x, charging d reads per example. Auto step
/// size resolves the budgeted formula at k = d.
pub fn ogd_full_fit(
    data: &Dataset,
    cfg: &LearnerConfig,
    testset: Option<&Dataset>,
) -> Result<FitResult> {
    validate_task(data, cfg, NormCertificate::L2)?;
    let d = data.dim();
    let m = cfg.planned_examples;
    let b = cfg.norm_bound;
    let eta = resolve_fixed_eta(cfg.eta, || Ok(default_eta_aerr(d, d, m)))?;

    let mut ledger = ledger_for(cfg);
    let mut state = RunState::new(d, cfg);

    let mut start_w = vec![0.0; d];
    start_w[0] = 0.5 * b;
    let mut w = start_w.clone();
    state.observe_iterate(l2_norm(&w));
    state.trace_point(0, &ledger, &w, testset, true)?;

    let mut x_buf = vec![0.0; d];
    for t in 1..=m as u64 {
        if budget_blocks(&ledger, d as u64) {
            break;
        }
        ledger.begin_example();
        let inst = data.get(t as usize - 1);
        let mut aborted = false;
        for (i, slot) in x_buf.iter_mut().enumerate() {
            match inst.observe(i, &mut ledger) {
                Ok(v) => *slot = v,
                Err(Error::BudgetExhausted) => {
                    aborted = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if aborted {
            break;
        }
        let residual = dot(&w, &x_buf) - inst.target();

        if state.steps.is_some() {
            let g = SparseVec::from_pairs(
                d,
                x_buf
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (i, residual * x))
                    .collect(),
            );
            state.record_step(&g, &w);
        }
        state.complete_example(&w, 0.5 * residual * residual, false);

        for i in 0..d {
            w[i] -= eta * residual * x_buf[i];
        }
        scale_into_ball(&mut w, l2_norm, b);
        state.observe_iterate(l2_norm(&w));

        let mean = state.mean_regressor(&start_w);
        state.trace_point(t, &ledger, &mean, testset, false)?;
    }

    state.finish(&start_w, NormKind::L2, b, eta, &ledger, testset)
}

/// Full-information 1-norm baseline: the multiplicative loop with exact
/// gradients (clipping retained for uniformity), charging d reads per
/// example. Auto step size resolves the budgeted formula at k = d.
pub fn eg_full_fit(
    data: &Dataset,
    cfg: &LearnerConfig,
    testset: Option<&Dataset>,
) -> Result<FitResult> {
    validate_task(data, cfg, NormCertificate::Linf)?;
    let d = data.dim();
    let m = cfg.planned_examples;
    let b = cfg.norm_bound;
    let eta = resolve_fixed_eta(cfg.eta, || default_eta_aelr(b, d, d, m))?;
    let inv_eta = 1.0 / eta;

    let mut ledger = ledger_for(cfg);
    let mut state = RunState::new(d, cfg);

    let mut z_plus = vec![1.0; d];
    let mut z_minus = vec![1.0; d];
    let mut w = vec![0.0; d];
    let start_w = vec![0.0; d];
    state.trace_point(0, &ledger, &w, testset, true)?;

    let mut x_buf = vec![0.0; d];
    for t in 1..=m as u64 {
        if budget_blocks(&ledger, d as u64) {
            break;
        }
        ledger.begin_example();
        let inst = data.get(t as usize - 1);

        derive_l1_iterate(&z_plus, &z_minus, b, &mut w);
        state.observe_iterate(l1_norm(&w));

        let mut aborted = false;
        for (i, slot) in x_buf.iter_mut().enumerate() {
            match inst.observe(i, &mut ledger) {
                Ok(v) => *slot = v,
                Err(Error::BudgetExhausted) => {
                    aborted = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if aborted {
            break;
        }
        let residual = dot(&w, &x_buf) - inst.target();

        if state.steps.is_some() {
            let g = SparseVec::from_pairs(
                d,
                x_buf
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (i, residual * x))
                    .collect(),
            );
            state.record_step(&g, &w);
        }
        state.complete_example(&w, 0.5 * residual * residual, false);

        for i in 0..d {
            let c = clip(residual * x_buf[i], inv_eta);
            z_plus[i] *= (-eta * c).exp();
            z_minus[i] *= (eta * c).exp();
        }
        renormalize_weights(&mut z_plus, &mut z_minus);

        let mean = state.mean_regressor(&start_w);
        state.trace_point(t, &ledger, &mean, testset, false)?;
    }

    state.finish(&start_w, NormKind::L1, b, eta, &ledger, testset)
}

/// Linear prediction w.x (unmetered; evaluation path).
pub fn predict(w: &[f64], instance: &LabeledInstance) -> Result<f64> {
    if w.len() != instance.dim() {
        return Err(Error::invalid_input(format!(
            "regressor dimension {} does not match instance dimension {}",
            w.len(),
            instance.dim()
        )));
    }
    Ok(dot(w, instance.attributes()))
}

/// Mean loss of the linear rule over the dataset (the empirical risk).
pub fn evaluate(w: &[f64], data: &Dataset, loss: &LossSpec) -> Result<f64> {
    loss.validate()?;
    if w.len() != data.dim() {
        return Err(Error::invalid_input(format!(
            "regressor dimension {} does not match dataset dimension {}",
            w.len(),
            data.dim()
        )));
    }
    let total: f64 = data
        .instances()
        .iter()
        .map(|inst| loss.loss(dot(w, inst.attributes()), inst.target()))
        .sum();
    Ok(total / data.len() as f64)
}
