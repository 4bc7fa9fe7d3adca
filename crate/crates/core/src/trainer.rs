//! The hybrid training loop: base loss plus `λ` times the rule penalty,
//! minimised with Adam over shuffled minibatches.
//!
//! Per minibatch the order is fixed: forward pass, rule penalty on the
//! predictions, base loss, total loss, backward pass, parameter update. The
//! loop runs for a fixed number of epochs and records metrics on the full
//! training and validation splits after each one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::nn::{self, AdamState, Gradients, LayerSpec, LossKind, Network, NnError};
use crate::penalty::{self, CompiledRule, PenaltyError, SatisfactionReport};
use crate::rng::{Rng, SHUFFLE_STREAM};
use crate::rulelang::RuleSet;
use crate::tensor::{argmax, Matrix, ShapeError, Targets, Task};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("training diverged at epoch {epoch}, batch {batch}: {what} is not finite")]
    Diverged {
        epoch: usize,
        batch: usize,
        what: &'static str,
    },
    #[error("{0} is empty")]
    EmptyData(&'static str),
}

impl From<ShapeError> for TrainError {
    fn from(e: ShapeError) -> Self {
        TrainError::Nn(NnError::Shape(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: LossKind,
    pub validation_fraction: f64,
    pub shuffle: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda: 1.0,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: LossKind::CrossEntropy,
            validation_fraction: 0.2,
            shuffle: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!(
                "lambda must be a finite value >= 0, got {}",
                self.lambda
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_base: f64,
    pub train_penalty: f64,
    pub train_total: f64,
    pub val_base: f64,
    pub val_penalty: f64,
    pub val_total: f64,
    /// `None` for regression.
    pub val_accuracy: Option<f64>,
    pub val_satisfaction: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: TrainingConfig,
    pub curves: Vec<EpochMetrics>,
    pub final_accuracy: Option<f64>,
    pub final_domain_satisfaction: f64,
    pub final_satisfaction: SatisfactionReport,
    pub network: Network,
}

impl RunResult {
    pub fn last_epoch(&self) -> &EpochMetrics {
        self.curves.last().expect("at least one epoch")
    }

    /// Final `val_base - train_base`; smaller means less overfitting.
    pub fn train_val_gap(&self) -> f64 {
        let last = self.last_epoch();
        last.val_base - last.train_base
    }
}

/// `base + λ·penalty` and `base_grad + λ·penalty_grad`.
///
/// Both gradients must already live in the same space (logits for
/// classification, see [`nn::softmax_backward`]). With `λ = 0` the base
/// gradient is returned unchanged.
pub fn total_loss(
    base: f64,
    base_grad: &Matrix,
    penalty: f64,
    penalty_grad: &Matrix,
    lambda: f64,
) -> Result<(f64, Matrix), ShapeError> {
    penalty_grad.ensure_shape(base_grad.rows(), base_grad.cols(), "penalty gradient")?;
    if lambda == 0.0 {
        return Ok((base, base_grad.clone()));
    }
    let mut grad = base_grad.clone();
    for (g, p) in grad.as_mut_slice().iter_mut().zip(penalty_grad.as_slice()) {
        *g += lambda * p;
    }
    Ok((base + lambda * penalty, grad))
}

/// Task-level quality metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Accuracy(f64),
    Mse(f64),
}

impl Metric {
    pub fn accuracy(self) -> Option<f64> {
        match self {
            Metric::Accuracy(a) => Some(a),
            Metric::Mse(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub metric: Metric,
    pub satisfaction: SatisfactionReport,
}

fn quality(predictions: &Matrix, labels: &Targets) -> Metric {
    let n = predictions.rows().max(1) as f64;
    match labels {
        Targets::Classes(c) => {
            let hits = predictions
                .iter_rows()
                .zip(c)
                .filter(|(row, &label)| argmax(row) == Some(label))
                .count();
            Metric::Accuracy(hits as f64 / n)
        }
        Targets::Values(v) => {
            let sse: f64 = predictions
                .iter_rows()
                .zip(v)
                .map(|(row, y)| (row[0] - y).powi(2))
                .sum();
            Metric::Mse(sse / n)
        }
    }
}

/// Accuracy (or MSE) and exact rule satisfaction of `net` on `data`.
pub fn evaluate(net: &Network, rules: &RuleSet, data: &Dataset) -> Result<Evaluation, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyData("evaluation data"));
    }
    check_compatible(net, data, "evaluation data")?;
    let compiled = penalty::compile_rules(rules, data.feature_dim(), net.output_dim(), net.task())?;
    let (pred, _) = nn::forward(net, &data.features)?;
    Ok(Evaluation {
        metric: quality(&pred, &data.labels),
        satisfaction: penalty::satisfaction_of(&compiled, &data.features, &pred),
    })
}

fn check_compatible(net: &Network, data: &Dataset, what: &str) -> Result<(), TrainError> {
    if data.task() != net.task() {
        return Err(TrainError::Config(format!(
            "{what} is a {} set but the network is built for {}",
            data.task(),
            net.task()
        )));
    }
    if data.feature_dim() != net.input_dim() {
        return Err(TrainError::Config(format!(
            "{what} has {} features but the network takes {}",
            data.feature_dim(),
            net.input_dim()
        )));
    }
    match &data.labels {
        Targets::Classes(c) => {
            if let Some(&bad) = c.iter().find(|&&l| l >= net.output_dim()) {
                return Err(TrainError::Config(format!(
                    "{what} contains label {bad} but the network has {} classes",
                    net.output_dim()
                )));
            }
        }
        Targets::Values(_) => {
            if net.output_dim() != 1 {
                return Err(TrainError::Config(format!(
                    "regression needs a single output, the network has {}",
                    net.output_dim()
                )));
            }
        }
    }
    Ok(())
}

struct SplitMetrics {
    base: f64,
    penalty: f64,
    accuracy: Option<f64>,
    satisfaction: SatisfactionReport,
}

fn split_metrics(
    net: &Network,
    rules: &[CompiledRule],
    data: &Dataset,
    loss: LossKind,
) -> Result<SplitMetrics, TrainError> {
    let (pred, _) = nn::forward(net, &data.features)?;
    let (base, _) = nn::base_loss(loss, &data.labels, &pred)?;
    let (report, _) = penalty::asp_penalty(rules, &data.features, &pred)?;
    Ok(SplitMetrics {
        base,
        penalty: report.total,
        accuracy: quality(&pred, &data.labels).accuracy(),
        satisfaction: penalty::satisfaction_of(rules, &data.features, &pred),
    })
}

/// Loss terms and parameter gradient of one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub base: f64,
    pub penalty: f64,
    pub total: f64,
    pub gradients: Gradients,
}

/// Forward pass, rule penalty, base loss, their weighted sum and the
/// backward pass for one minibatch. The penalty gradient is skipped when
/// `lambda` is zero or there are no rules, so that case reduces exactly to
/// the base loss. A non-finite prediction or total is reported as
/// [`TrainError::Diverged`] with epoch and batch 0.
pub fn objective(
    net: &Network,
    rules: &[CompiledRule],
    loss: LossKind,
    lambda: f64,
    x: &Matrix,
    y: &Targets,
) -> Result<Objective, TrainError> {
    let diverged = |what| TrainError::Diverged {
        epoch: 0,
        batch: 0,
        what,
    };
    let (pred, cache) = nn::forward(net, x)?;
    if !pred.is_finite() {
        return Err(diverged("prediction"));
    }
    let (report, penalty_grad) = penalty::asp_penalty(rules, x, &pred)?;
    let (base, base_grad) = nn::base_loss(loss, y, &pred)?;
    let (total, grad) = if lambda != 0.0 && !rules.is_empty() {
        let penalty_grad = match net.task() {
            Task::Classification => nn::softmax_backward(&pred, &penalty_grad)?,
            Task::Regression => penalty_grad,
        };
        total_loss(base, &base_grad, report.total, &penalty_grad, lambda)?
    } else {
        (base + lambda * report.total, base_grad)
    };
    if !total.is_finite() {
        return Err(diverged("total loss"));
    }
    Ok(Objective {
        base,
        penalty: report.total,
        total,
        gradients: nn::backward(net, &cache, &grad)?,
    })
}

/// Trains `net` under `base loss + λ · rule penalty`. See the module docs
/// for the loop order.
pub fn train(
    net: Network,
    rules: &RuleSet,
    train_data: &Dataset,
    val_data: &Dataset,
    config: &TrainingConfig,
) -> Result<RunResult, TrainError> {
    train_observed(net, rules, train_data, val_data, config, |_, _| {})
}

/// [`train`], calling `observe(step, &net)` after every parameter update.
///
/// An empty `val_data` makes the validation columns report the training split.
pub fn train_observed(
    mut net: Network,
    rules: &RuleSet,
    train_data: &Dataset,
    val_data: &Dataset,
    config: &TrainingConfig,
    mut observe: impl FnMut(u64, &Network),
) -> Result<RunResult, TrainError> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptyData("training data"));
    }
    check_compatible(&net, train_data, "training data")?;
    check_compatible(&net, val_data, "validation data")?;
    if config.loss.task() != net.task() {
        return Err(TrainError::Config(format!(
            "{} loss cannot train a {} network",
            config.loss,
            net.task()
        )));
    }
    let val_data = if val_data.is_empty() {
        train_data
    } else {
        val_data
    };
    let compiled = penalty::compile_rules(
        rules,
        train_data.feature_dim(),
        net.output_dim(),
        net.task(),
    )?;

    let mut adam = AdamState::new(
        net.parameter_count(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut shuffler = Rng::new(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut curves = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        if config.shuffle {
            shuffler.shuffle(&mut order);
        }
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let diverged = |what| TrainError::Diverged { epoch, batch, what };
            let x = train_data.features.select_rows(idx);
            let y = train_data.labels.select(idx);

            let obj = objective(&net, &compiled, config.loss, config.lambda, &x, &y).map_err(
                |e| match e {
                    TrainError::Diverged { what, .. } => diverged(what),
                    other => other,
                },
            )?;
            let grads = obj.gradients;
            nn::adam_step(&mut adam, &mut net, &grads)?;
            observe(adam.step, &net);
        }

        let tr = split_metrics(&net, &compiled, train_data, config.loss)?;
        let va = split_metrics(&net, &compiled, val_data, config.loss)?;
        let m = EpochMetrics {
            epoch,
            train_base: tr.base,
            train_penalty: tr.penalty,
            train_total: tr.base + config.lambda * tr.penalty,
            val_base: va.base,
            val_penalty: va.penalty,
            val_total: va.base + config.lambda * va.penalty,
            val_accuracy: va.accuracy,
            val_satisfaction: va.satisfaction.ratio(),
        };
        if !m.train_total.is_finite() || !m.val_total.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
                what: "epoch loss",
            });
        }
        curves.push(m);
        if epoch == config.epochs {
            let last = curves.last().expect("just pushed");
            return Ok(RunResult {
                config: config.clone(),
                final_accuracy: last.val_accuracy,
                final_domain_satisfaction: last.val_satisfaction,
                final_satisfaction: va.satisfaction,
                curves,
                network: net,
            });
        }
    }
    unreachable!("epochs validated to be positive")
}

/// Everything one training run needs apart from `λ`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub architecture: Vec<LayerSpec>,
    pub task: Task,
    pub rules: RuleSet,
    pub train: Dataset,
    pub val: Dataset,
    pub config: TrainingConfig,
}

impl Experiment {
    /// Initialises a network from `config.seed` and trains it.
    pub fn run(&self) -> Result<RunResult, TrainError> {
        let net = nn::init_network(&self.architecture, self.task, self.config.seed)?;
        train(net, &self.rules, &self.train, &self.val, &self.config)
    }

    pub fn with_lambda(&self, lambda: f64) -> Experiment {
        let mut e = self.clone();
        e.config.lambda = lambda;
        e
    }

    pub fn with_seed(&self, seed: u64) -> Experiment {
        let mut e = self.clone();
        e.config.seed = seed;
        e
    }
}

/// One independent run per `λ`, same data and seed, results in input order.
/// Runs execute on up to `available_parallelism` threads.
pub fn sweep_lambda(setup: &Experiment, lambdas: &[f64]) -> Vec<Result<RunResult, TrainError>> {
    let jobs: Vec<Experiment> = lambdas.iter().map(|&l| setup.with_lambda(l)).collect();
    parallel_map(&jobs, default_workers(jobs.len()), Experiment::run)
}

pub fn default_workers(jobs: usize) -> usize {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    jobs.clamp(1, cpus)
}

/// Maps `f` over `items` on a bounded pool of scoped threads, keeping order.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().expect("no panics while holding the lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("lock not poisoned")
                .expect("every slot filled")
        })
        .collect()
}

/// Median of a non-empty sample (mean of the two middle values for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of an empty sample");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_classification;
    use crate::nn::default_architecture;
    use crate::rulelang::parse_rules;

    fn tiny_experiment(lambda: f64) -> Experiment {
        let ds = generate_classification(200, 3).unwrap();
        let (train, val) = ds.split_tail(0.2);
        Experiment {
            architecture: default_architecture(2, 2),
            task: Task::Classification,
            rules: parse_rules("rule hot: if feature[0] > 0.8 then class 1").unwrap(),
            train,
            val,
            config: TrainingConfig {
                lambda,
                epochs: 3,
                seed: 1,
                ..TrainingConfig::default()
            },
        }
    }

    #[test]
    fn total_loss_arithmetic() {
        let g = Matrix::from_rows(&[[0.1, -0.1]]).unwrap();
        let p = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let (v, grad) = total_loss(0.5, &g, 0.2, &p, 1.0).unwrap();
        assert!((v - 0.7).abs() < 1e-15);
        assert_eq!(grad.as_slice(), &[1.1, 1.9]);
        let (v, _) = total_loss(0.5, &g, 0.2, &p, 3.0).unwrap();
        assert!((v - 1.1).abs() < 1e-15);
        let (v, grad) = total_loss(0.5, &g, 0.2, &p, 0.0).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(grad, g);
        assert!(total_loss(0.5, &g, 0.2, &Matrix::zeros(2, 2), 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = TrainingConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainingConfig {
                lambda: -1.0,
                ..ok.clone()
            },
            TrainingConfig {
                lambda: f64::NAN,
                ..ok.clone()
            },
            TrainingConfig {
                epochs: 0,
                ..ok.clone()
            },
            TrainingConfig {
                batch_size: 0,
                ..ok.clone()
            },
            TrainingConfig {
                validation_fraction: 1.0,
                ..ok.clone()
            },
            TrainingConfig {
                beta1: 1.0,
                ..ok.clone()
            },
        ] {
            assert!(
                matches!(bad.validate(), Err(TrainError::Config(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn curves_have_one_row_per_epoch_and_consistent_totals() {
        let r = tiny_experiment(2.0).run().unwrap();
        assert_eq!(r.curves.len(), 3);
        for m in &r.curves {
            assert!((m.train_total - (m.train_base + 2.0 * m.train_penalty)).abs() <= 1e-9);
            assert!((m.val_total - (m.val_base + 2.0 * m.val_penalty)).abs() <= 1e-9);
            assert!(m.val_accuracy.is_some());
        }
        assert_eq!(r.final_domain_satisfaction, r.last_epoch().val_satisfaction);
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let a = tiny_experiment(1.0).run().unwrap();
        let b = tiny_experiment(1.0).run().unwrap();
        assert_eq!(a.curves, b.curves);
        assert_eq!(a.network.parameters(), b.network.parameters());
    }

    #[test]
    fn empty_rules_match_zero_lambda() {
        let mut e = tiny_experiment(1.0);
        e.rules = RuleSet::default();
        let a = e.run().unwrap();
        let b = tiny_experiment(0.0).run().unwrap();
        assert_eq!(a.network.parameters(), b.network.parameters());
    }

    #[test]
    fn sweep_preserves_order_and_duplicates_match() {
        let e = tiny_experiment(0.0);
        let results = sweep_lambda(&e, &[0.0, 1.0, 0.0]);
        assert_eq!(results.len(), 3);
        let r: Vec<RunResult> = results.into_iter().map(Result::unwrap).collect();
        assert_eq!(r[0].config.lambda, 0.0);
        assert_eq!(r[1].config.lambda, 1.0);
        assert_eq!(r[0].network.parameters(), r[2].network.parameters());
        assert_eq!(r[0].curves, r[2].curves);
    }

    #[test]
    fn evaluate_perfect_and_constant_predictors() {
        use crate::nn::{Activation, LayerSpec};
        // One linear layer computing logits (0, x1 + x2 - 1) * 1000.
        let specs = [LayerSpec::new(2, 2, Activation::Identity)];
        let oracle = Network::from_parameters(
            &specs,
            Task::Classification,
            vec![0.0, 0.0, 1000.0, 1000.0, 0.0, -1000.0],
        )
        .unwrap();
        let ds = generate_classification(500, 8).unwrap();
        let rules = parse_rules("rule hot: if feature[0] > 0.8 then class 1").unwrap();
        let ev = evaluate(&oracle, &rules, &ds).unwrap();
        assert_eq!(ev.metric, Metric::Accuracy(1.0));

        let balanced = Dataset::new(
            Matrix::from_rows(&[[0.9, 0.9], [0.1, 0.1], [0.95, 0.6], [0.2, 0.3]]).unwrap(),
            Targets::Classes(vec![1, 0, 1, 0]),
        )
        .unwrap();
        let class0 = Network::from_parameters(
            &specs,
            Task::Classification,
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        assert_eq!(
            evaluate(&class0, &rules, &balanced).unwrap().metric,
            Metric::Accuracy(0.5)
        );
        let class1 = Network::from_parameters(
            &specs,
            Task::Classification,
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let ev = evaluate(&class1, &rules, &balanced).unwrap();
        assert_eq!(ev.satisfaction.ratio(), 1.0);
        assert_eq!(ev.satisfaction.applicable_count, 2);
    }

    #[test]
    fn incompatible_inputs_are_rejected() {
        let e = tiny_experiment(1.0);
        let net = nn::init_network(&default_architecture(3, 2), Task::Classification, 0).unwrap();
        assert!(matches!(
            train(net, &e.rules, &e.train, &e.val, &e.config),
            Err(TrainError::Config(_))
        ));
        let net = nn::init_network(&default_architecture(2, 1), Task::Regression, 0).unwrap();
        assert!(train(net, &RuleSet::default(), &e.train, &e.val, &e.config).is_err());
    }

    #[test]
    fn divergence_is_located() {
        let mut e = tiny_experiment(1.0);
        e.config.learning_rate = 1e300;
        e.config.epochs = 5;
        match e.run() {
            Err(TrainError::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!(
                "expected divergence, got {:?}",
                other.map(|r| r.curves.len())
            ),
        }
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
