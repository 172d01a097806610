//! Core domain types: metered training instances, the attribute-budget
//! ledger, regressor state with its norm constraint, learner configuration
//! and per-example trace records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{l1_norm, l2_norm, scale_into_ball};

/// Which norm ball constrains the regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
}

impl NormKind {
    pub fn norm(&self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => l1_norm(v),
            NormKind::L2 => l2_norm(v),
        }
    }
}

/// One training example. Attributes are stored densely but training code
/// reads them only through [`LabeledInstance::observe`], which charges the
/// budget ledger; the raw slice is reserved for evaluation and data IO,
/// which are budget-free by design.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    attributes: Vec<f64>,
    target: f64,
}

impl LabeledInstance {
    pub fn new(attributes: Vec<f64>, target: f64) -> Self {
        LabeledInstance { attributes, target }
    }

    pub fn dim(&self) -> usize {
        self.attributes.len()
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Metered attribute read: returns `x[index]` and charges the ledger
    /// exactly once. Repeated reads of the same index are charged again.
    pub fn observe(&self, index: usize, ledger: &mut BudgetLedger) -> Result<f64> {
        let Some(&value) = self.attributes.get(index) else {
            return Err(Error::invalid_input(format!(
                "attribute index {index} out of range for dimension {}",
                self.attributes.len()
            )));
        };
        ledger.charge()?;
        Ok(value)
    }

    /// Unmetered access, for evaluation and dataset plumbing only.
    pub fn attributes(&self) -> &[f64] {
        &self.attributes
    }
}

/// Monotone counter of attribute observations; the central resource in the
/// limited-observation setting. Optionally enforces a hard cap: a charge
/// that would exceed it fails with [`Error::BudgetExhausted`].
#[derive(Debug, Clone, Default)]
pub struct BudgetLedger {
    total: u64,
    per_example: u64,
    cap: Option<u64>,
}

impl BudgetLedger {
    pub fn new() -> Self {
        BudgetLedger::default()
    }

    pub fn with_cap(cap: u64) -> Self {
        BudgetLedger {
            cap: Some(cap),
            ..BudgetLedger::default()
        }
    }

    pub fn charge(&mut self) -> Result<()> {
        if let Some(cap) = self.cap {
            if self.total >= cap {
                return Err(Error::BudgetExhausted);
            }
        }
        self.total += 1;
        self.per_example += 1;
        Ok(())
    }

    /// Resets the per-example counter at the start of a new example.
    pub fn begin_example(&mut self) {
        self.per_example = 0;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn per_example(&self) -> u64 {
        self.per_example
    }

    pub fn cap(&self) -> Option<u64> {
        self.cap
    }

    /// Remaining charges before the cap, if any.
    pub fn remaining(&self) -> Option<u64> {
        self.cap.map(|c| c.saturating_sub(self.total))
    }
}

/// A weight vector together with its norm constraint.
#[derive(Debug, Clone)]
pub struct RegressorState {
    pub weights: Vec<f64>,
    pub norm_kind: NormKind,
    pub bound: f64,
}

impl RegressorState {
    pub fn zeros(dim: usize, norm_kind: NormKind, bound: f64) -> Self {
        RegressorState {
            weights: vec![0.0; dim],
            norm_kind,
            bound,
        }
    }

    pub fn norm(&self) -> f64 {
        self.norm_kind.norm(&self.weights)
    }

    /// Rescales the weights so the computed norm respects the bound.
    pub fn enforce_bound(&mut self) {
        let kind = self.norm_kind;
        scale_into_ball(&mut self.weights, move |v| kind.norm(v), self.bound);
    }
}

/// Step-size setting: a fixed value or the algorithm's documented formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSetting {
    Auto,
    Fixed(f64),
}

impl Default for EtaSetting {
    fn default() -> Self {
        EtaSetting::Auto
    }
}

/// Configuration shared by all learners.
///
/// `planned_examples` is the number of examples the step-size formulas are
/// tuned for; a run may stop earlier when an attribute budget is set.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    /// Attributes sampled per example for the sparse instance estimate.
    pub k: usize,
    pub eta: EtaSetting,
    /// Norm bound B of the regressor ball.
    pub norm_bound: f64,
    /// Planned number of training examples m.
    pub planned_examples: usize,
    /// Insensitivity width for SVR losses.
    pub delta: f64,
    /// Smoothing accuracy for the SVR surrogate.
    pub epsilon: f64,
    pub seed: u64,
    /// Emit a trace record every this many examples; default ceil(m/200).
    pub trace_every: Option<usize>,
    /// Hard cap on total attribute reads for this run.
    pub attribute_budget: Option<u64>,
    /// Record (gradient estimate, iterate) pairs per step for post-hoc
    /// regret checks. Memory-heavy; off by default.
    pub record_steps: bool,
}

impl LearnerConfig {
    pub fn new(k: usize, planned_examples: usize) -> Self {
        LearnerConfig {
            k,
            eta: EtaSetting::Auto,
            norm_bound: 1.0,
            planned_examples,
            delta: 0.0,
            epsilon: 0.1,
            seed: 0,
            trace_every: None,
            attribute_budget: None,
            record_steps: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_bound(mut self, b: f64) -> Self {
        self.norm_bound = b;
        self
    }

    pub fn with_eta(mut self, eta: EtaSetting) -> Self {
        self.eta = eta;
        self
    }

    /// Trace cadence in examples.
    pub fn trace_cadence(&self) -> usize {
        self.trace_every
            .unwrap_or_else(|| self.planned_examples.div_ceil(200))
            .max(1)
    }
}

/// One row of a training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub example_index: u64,
    pub cumulative_attributes: u64,
    /// Mean squared error on the held-out set; NaN when no test set was
    /// supplied.
    pub test_error: f64,
    /// Running average of the losses observed by the learner itself.
    pub train_loss_estimate: f64,
}

/// Euclidean projection onto the ball of radius `bound`: returns `v`
/// unchanged when already inside, else `v * bound / ||v||_2`.
pub fn project_l2_ball(v: &[f64], bound: f64) -> Result<Vec<f64>> {
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::invalid_input(format!(
            "projection bound must be positive and finite, got {bound}"
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid_input("non-finite entry in projection input"));
    }
    let mut out = v.to_vec();
    scale_into_ball(&mut out, l2_norm, bound);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_inside_ball_is_identity() {
        let v = vec![0.3, 0.4];
        assert_eq!(project_l2_ball(&v, 1.0).unwrap(), v);
    }

    #[test]
    fn project_scales_outside_vector() {
        let out = project_l2_ball(&[3.0, 4.0], 1.0).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15);
        assert!((out[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn project_boundary_is_identity() {
        let v = vec![3.0, 4.0];
        assert_eq!(project_l2_ball(&v, 5.0).unwrap(), v);
    }

    #[test]
    fn project_rejects_non_finite() {
        assert!(project_l2_ball(&[f64::NAN, 0.0], 1.0).is_err());
        assert!(project_l2_ball(&[1.0], 0.0).is_err());
    }

    #[test]
    fn observe_returns_value_and_charges_once() {
        let inst = LabeledInstance::new(vec![7.0, 0.0], 1.0);
        let mut ledger = BudgetLedger::new();
        assert_eq!(inst.observe(0, &mut ledger).unwrap(), 7.0);
        assert_eq!(ledger.total(), 1);
    }

    #[test]
    fn repeated_observe_charges_each_time() {
        let inst = LabeledInstance::new(vec![7.0, 0.0], 1.0);
        let mut ledger = BudgetLedger::new();
        inst.observe(0, &mut ledger).unwrap();
        inst.observe(0, &mut ledger).unwrap();
        assert_eq!(ledger.total(), 2);
    }

    #[test]
    fn observe_out_of_range_is_error_and_free() {
        let inst = LabeledInstance::new(vec![1.0, 2.0], 0.0);
        let mut ledger = BudgetLedger::new();
        assert!(matches!(
            inst.observe(5, &mut ledger),
            Err(Error::InvalidInput(_))
        ));
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn capped_ledger_stops_at_cap() {
        let inst = LabeledInstance::new(vec![1.0], 0.0);
        let mut ledger = BudgetLedger::with_cap(2);
        inst.observe(0, &mut ledger).unwrap();
        inst.observe(0, &mut ledger).unwrap();
        assert!(matches!(
            inst.observe(0, &mut ledger),
            Err(Error::BudgetExhausted)
        ));
        assert_eq!(ledger.total(), 2);
    }
}
