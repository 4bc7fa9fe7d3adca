//! Rules lowered to differentiable per-sample penalties, plus the exact
//! satisfaction check used for reporting.
//!
//! A bound rule `output[j] <= c` has violation `y[j] - c` (and `c - y[j]` for
//! `>=`); strict comparators share the same violation and only differ in the
//! exact check. An implication rule is gated by its antecedent, evaluated
//! exactly on the raw features, and its consequent is relaxed to
//! `margin - p[target]` on the predicted class probabilities. Gradients only
//! flow into the predictions.

use thiserror::Error;

use crate::rulelang::{PenaltyKind, RuleAst, RuleBody, RuleSet};
use crate::tensor::{argmax, Matrix, ShapeError, Task};

/// Above this value of `k * v` the softplus switches to `v + ln(1 + e^(-kv)) / k`.
pub const SOFTPLUS_STABLE_THRESHOLD: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PenaltyError {
    #[error("non-finite value {0} in penalty evaluation")]
    Numeric(f64),
    #[error("{0}")]
    Domain(String),
    #[error("rule `{rule}`: {message}")]
    Index { rule: String, message: String },
    #[error("rule `{rule}` is a class implication and needs a classification task")]
    TaskMismatch { rule: String },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// `max(0, v)` and its derivative; the derivative at exactly 0 is 0.
pub fn relu_penalty(violation: f64) -> Result<(f64, f64), PenaltyError> {
    if !violation.is_finite() {
        return Err(PenaltyError::Numeric(violation));
    }
    if violation > 0.0 {
        Ok((violation, 1.0))
    } else {
        Ok((0.0, 0.0))
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1/k) ln(1 + e^(k v))` and its derivative `σ(k v)`.
pub fn softplus_penalty(violation: f64, k: f64) -> Result<(f64, f64), PenaltyError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(PenaltyError::Domain(format!(
            "softplus sharpness k = {k} must be a positive finite number"
        )));
    }
    if !violation.is_finite() {
        return Err(PenaltyError::Numeric(violation));
    }
    let z = k * violation;
    let value = if z > SOFTPLUS_STABLE_THRESHOLD {
        violation + (-z).exp().ln_1p() / k
    } else {
        z.exp().ln_1p() / k
    };
    Ok((value, logistic(z)))
}

impl PenaltyKind {
    pub fn evaluate(self, violation: f64) -> Result<(f64, f64), PenaltyError> {
        match self {
            PenaltyKind::Relu => relu_penalty(violation),
            PenaltyKind::Softplus { k } => softplus_penalty(violation, k),
        }
    }
}

/// A rule bound to concrete input/output dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRule {
    source: RuleAst,
    feature_dim: usize,
    output_dim: usize,
}

impl CompiledRule {
    pub fn source(&self) -> &RuleAst {
        &self.source
    }

    pub fn name(&self) -> &str {
        &self.source.name
    }

    pub fn weight(&self) -> f64 {
        self.source.weight
    }

    /// Whether the rule constrains this sample at all. Bound rules always do.
    pub fn applicability(&self, features: &[f64]) -> bool {
        match &self.source.body {
            RuleBody::Bound { .. } => true,
            RuleBody::Implication { antecedent, .. } => {
                antecedent.iter().all(|a| a.holds(features))
            }
        }
    }

    /// Signed violation of the consequent; positive means violated.
    pub fn violation(&self, prediction: &[f64]) -> f64 {
        match self.source.body {
            RuleBody::Bound {
                output_index,
                comparator,
                constant,
            } => {
                if comparator.is_upper_bound() {
                    prediction[output_index] - constant
                } else {
                    constant - prediction[output_index]
                }
            }
            RuleBody::Implication {
                target_class,
                margin,
                ..
            } => margin - prediction[target_class],
        }
    }

    /// Index of the one prediction entry the violation depends on, and the
    /// sign of that dependence.
    fn sensitivity(&self) -> (usize, f64) {
        match self.source.body {
            RuleBody::Bound {
                output_index,
                comparator,
                ..
            } => (
                output_index,
                if comparator.is_upper_bound() {
                    1.0
                } else {
                    -1.0
                },
            ),
            RuleBody::Implication { target_class, .. } => (target_class, -1.0),
        }
    }

    /// Ungated penalty of the consequent and its gradient w.r.t. `prediction`.
    pub fn penalty_value_and_grad(
        &self,
        prediction: &[f64],
    ) -> Result<(f64, Vec<f64>), PenaltyError> {
        let mut grad = vec![0.0; prediction.len()];
        let value = self.accumulate(prediction, 1.0, &mut grad)?;
        Ok((value, grad))
    }

    /// Penalty for one sample, gated by the antecedent.
    pub fn sample_penalty(
        &self,
        features: &[f64],
        prediction: &[f64],
    ) -> Result<(f64, Vec<f64>), PenaltyError> {
        if self.applicability(features) {
            self.penalty_value_and_grad(prediction)
        } else {
            Ok((0.0, vec![0.0; prediction.len()]))
        }
    }

    // Adds `scale * dP/dy` into `grad` and returns P.
    fn accumulate(
        &self,
        prediction: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64, PenaltyError> {
        let (value, slope) = self.source.penalty.evaluate(self.violation(prediction))?;
        let (j, sign) = self.sensitivity();
        grad[j] += scale * sign * slope;
        Ok(value)
    }

    /// Exact semantics of the consequent. Implications hold when the argmax
    /// class (ties to the lowest index) is the target.
    pub fn is_satisfied(&self, prediction: &[f64]) -> bool {
        match self.source.body {
            RuleBody::Bound {
                output_index,
                comparator,
                constant,
            } => comparator.holds(prediction[output_index], constant),
            RuleBody::Implication { target_class, .. } => argmax(prediction) == Some(target_class),
        }
    }

    fn check_dims(&self, features: &[f64], prediction: &[f64]) -> Result<(), PenaltyError> {
        if features.len() != self.feature_dim {
            return Err(ShapeError(format!(
                "rule `{}` was compiled for {} features, sample has {}",
                self.source.name,
                self.feature_dim,
                features.len()
            ))
            .into());
        }
        if prediction.len() != self.output_dim {
            return Err(ShapeError(format!(
                "rule `{}` was compiled for {} outputs, prediction has {}",
                self.source.name,
                self.output_dim,
                prediction.len()
            ))
            .into());
        }
        Ok(())
    }
}

/// Binds `rule` to a model with `feature_dim` inputs and `output_dim` outputs.
pub fn compile_rule(
    rule: &RuleAst,
    feature_dim: usize,
    output_dim: usize,
    task: Task,
) -> Result<CompiledRule, PenaltyError> {
    let index_err = |message: String| PenaltyError::Index {
        rule: rule.name.clone(),
        message,
    };
    match &rule.body {
        RuleBody::Bound { output_index, .. } => {
            if *output_index >= output_dim {
                return Err(index_err(format!(
                    "output index {output_index} out of range for {output_dim} outputs"
                )));
            }
        }
        RuleBody::Implication {
            antecedent,
            target_class,
            ..
        } => {
            if task != Task::Classification {
                return Err(PenaltyError::TaskMismatch {
                    rule: rule.name.clone(),
                });
            }
            if let Some(atom) = antecedent.iter().find(|a| a.feature_index >= feature_dim) {
                return Err(index_err(format!(
                    "feature index {} out of range for {feature_dim} features",
                    atom.feature_index
                )));
            }
            if *target_class >= output_dim {
                return Err(index_err(format!(
                    "class {target_class} out of range for {output_dim} classes"
                )));
            }
        }
    }
    Ok(CompiledRule {
        source: rule.clone(),
        feature_dim,
        output_dim,
    })
}

pub fn compile_rules(
    rules: &RuleSet,
    feature_dim: usize,
    output_dim: usize,
    task: Task,
) -> Result<Vec<CompiledRule>, PenaltyError> {
    rules
        .iter()
        .map(|r| compile_rule(r, feature_dim, output_dim, task))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyReport {
    /// `(rule name, mean unweighted penalty over the batch)`.
    pub per_rule: Vec<(String, f64)>,
    /// Mean over samples of the weighted sum of rule penalties.
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SatisfactionReport {
    pub applicable_count: usize,
    pub satisfied_count: usize,
}

impl SatisfactionReport {
    /// Fraction of applicable (sample, rule) pairs that hold; 1 when none apply.
    pub fn ratio(&self) -> f64 {
        if self.applicable_count == 0 {
            1.0
        } else {
            self.satisfied_count as f64 / self.applicable_count as f64
        }
    }
}

fn check_batch(features: &Matrix, predictions: &Matrix) -> Result<(), ShapeError> {
    if features.rows() != predictions.rows() {
        return Err(ShapeError(format!(
            "{} feature rows but {} prediction rows",
            features.rows(),
            predictions.rows()
        )));
    }
    Ok(())
}

/// Batch penalty `(1/B) Σ_b Σ_i γ_i P_i` and its gradient w.r.t. `predictions`.
///
/// For classification `predictions` must be post-softmax probabilities.
pub fn asp_penalty(
    rules: &[CompiledRule],
    features: &Matrix,
    predictions: &Matrix,
) -> Result<(PenaltyReport, Matrix), PenaltyError> {
    check_batch(features, predictions)?;
    let batch = predictions.rows();
    let mut grad = Matrix::zeros(batch, predictions.cols());
    let mut sums = vec![0.0; rules.len()];
    let inv_b = if batch == 0 { 0.0 } else { 1.0 / batch as f64 };
    for b in 0..batch {
        let x = features.row(b);
        let y = predictions.row(b);
        let g = grad.row_mut(b);
        for (rule, sum) in rules.iter().zip(sums.iter_mut()) {
            rule.check_dims(x, y)?;
            if rule.applicability(x) {
                *sum += rule.accumulate(y, rule.weight() * inv_b, g)?;
            }
        }
    }
    let per_rule: Vec<(String, f64)> = rules
        .iter()
        .zip(&sums)
        .map(|(r, s)| (r.name().to_owned(), s * inv_b))
        .collect();
    let total = rules
        .iter()
        .zip(&per_rule)
        .map(|(r, (_, mean))| r.weight() * mean)
        .sum();
    Ok((PenaltyReport { per_rule, total }, grad))
}

/// Exact rule check over a batch; stands in for a logic solver on this
/// restricted rule language.
pub fn exact_satisfaction(
    rules: &RuleSet,
    features: &Matrix,
    predictions: &Matrix,
    task: Task,
) -> Result<SatisfactionReport, PenaltyError> {
    check_batch(features, predictions)?;
    let compiled = compile_rules(rules, features.cols(), predictions.cols(), task)?;
    Ok(satisfaction_of(&compiled, features, predictions))
}

/// Same as [`exact_satisfaction`] for rules that are already compiled.
pub fn satisfaction_of(
    rules: &[CompiledRule],
    features: &Matrix,
    predictions: &Matrix,
) -> SatisfactionReport {
    let mut report = SatisfactionReport {
        applicable_count: 0,
        satisfied_count: 0,
    };
    for (x, y) in features.iter_rows().zip(predictions.iter_rows()) {
        for rule in rules {
            if rule.applicability(x) {
                report.applicable_count += 1;
                if rule.is_satisfied(y) {
                    report.satisfied_count += 1;
                }
            }
        }
    }
    report
}
