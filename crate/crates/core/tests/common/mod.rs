//! Generators and oracles shared by the integration tests.

#![allow(dead_code)]

use saifdl::nn::{self, default_architecture, init_network, LossKind, Network};
use saifdl::penalty::{compile_rules, CompiledRule};
use saifdl::rng::Rng;
use saifdl::rulelang::{Comparator, FeatureAtom, PenaltyKind, RuleAst, RuleBody, RuleSet, Span};
use saifdl::trainer::objective;
use saifdl::{Matrix, Targets, Task};

pub const COMPARATORS: [Comparator; 4] = [
    Comparator::Lt,
    Comparator::Le,
    Comparator::Gt,
    Comparator::Ge,
];

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// A number in one of several textual shapes: integral, plain decimal,
/// tiny, huge, or an arbitrary double.
pub fn any_number(rng: &mut Rng) -> f64 {
    match rng.below(6) {
        0 => rng.below(100) as f64,
        1 => -(rng.below(100) as f64),
        2 => (uniform(rng, -10.0, 10.0) * 1000.0).round() / 1000.0,
        3 => uniform(rng, -1.0, 1.0) * 1e-9,
        4 => uniform(rng, -1.0, 1.0) * 1e15,
        _ => uniform(rng, -5.0, 5.0),
    }
}

pub fn positive_number(rng: &mut Rng) -> f64 {
    match rng.below(4) {
        0 => (1 + rng.below(20)) as f64,
        1 => 1e-6 + rng.uniform() * 1e3,
        2 => ((1 + rng.below(1000)) as f64) / 100.0,
        _ => 1.0 - rng.uniform() + 1e-12,
    }
}

fn ident(rng: &mut Rng, index: usize) -> String {
    const HEAD: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
    const TAIL: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
    let mut s = String::new();
    s.push(HEAD[rng.below(HEAD.len())] as char);
    for _ in 0..rng.below(6) {
        s.push(TAIL[rng.below(TAIL.len())] as char);
    }
    // A numeric suffix keeps names unique and distinct from keywords.
    format!("{s}{index}")
}

fn penalty_kind(rng: &mut Rng) -> PenaltyKind {
    if rng.below(2) == 0 {
        PenaltyKind::Relu
    } else {
        PenaltyKind::Softplus {
            k: positive_number(rng),
        }
    }
}

/// Any syntactically valid rule set, including indices that no model has.
pub fn random_ruleset(rng: &mut Rng) -> RuleSet {
    let n = rng.below(6);
    let rules = (0..n)
        .map(|i| {
            let body = if rng.below(2) == 0 {
                RuleBody::Bound {
                    output_index: rng.below(12),
                    comparator: COMPARATORS[rng.below(4)],
                    constant: any_number(rng),
                }
            } else {
                RuleBody::Implication {
                    antecedent: (0..1 + rng.below(3))
                        .map(|_| FeatureAtom {
                            feature_index: rng.below(12),
                            comparator: COMPARATORS[rng.below(4)],
                            threshold: any_number(rng),
                        })
                        .collect(),
                    target_class: rng.below(12),
                    margin: 1.0 - rng.uniform(),
                }
            };
            RuleAst {
                name: ident(rng, i),
                body,
                weight: positive_number(rng),
                penalty: penalty_kind(rng),
                span: Span::default(),
            }
        })
        .collect();
    RuleSet { rules }
}

/// Rules that compile against a model with the given shape.
pub fn compatible_ruleset(
    rng: &mut Rng,
    features: usize,
    outputs: usize,
    task: Task,
    count: usize,
) -> RuleSet {
    let rules = (0..count)
        .map(|i| {
            let body = if task == Task::Classification && rng.below(3) != 0 {
                RuleBody::Implication {
                    antecedent: (0..1 + rng.below(2))
                        .map(|_| FeatureAtom {
                            feature_index: rng.below(features),
                            comparator: COMPARATORS[rng.below(4)],
                            threshold: uniform(rng, 0.0, 1.0),
                        })
                        .collect(),
                    target_class: rng.below(outputs),
                    margin: uniform(rng, 0.3, 1.0),
                }
            } else {
                let (lo, hi) = match task {
                    Task::Classification => (0.0, 1.0),
                    Task::Regression => (-1.0, 1.0),
                };
                RuleBody::Bound {
                    output_index: rng.below(outputs),
                    comparator: COMPARATORS[rng.below(4)],
                    constant: uniform(rng, lo, hi),
                }
            };
            RuleAst {
                name: format!("r{i}"),
                body,
                weight: uniform(rng, 0.2, 3.0),
                penalty: if rng.below(2) == 0 {
                    PenaltyKind::Relu
                } else {
                    PenaltyKind::Softplus {
                        k: uniform(rng, 0.5, 20.0),
                    }
                },
                span: Span::default(),
            }
        })
        .collect();
    RuleSet { rules }
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| uniform(rng, lo, hi)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// One random (network, batch, rules, loss, λ) problem for gradient checks.
pub struct GradientProblem {
    pub net: Network,
    pub x: Matrix,
    pub y: Targets,
    pub rules: Vec<CompiledRule>,
    pub loss: LossKind,
    pub lambda: f64,
}

pub fn random_problem(rng: &mut Rng) -> GradientProblem {
    let task = if rng.below(3) == 0 {
        Task::Regression
    } else {
        Task::Classification
    };
    let features = 1 + rng.below(3);
    let outputs = match task {
        Task::Classification => 2 + rng.below(2),
        Task::Regression => 1,
    };
    let batch = 1 + rng.below(16);
    let net = init_network(
        &default_architecture(features, outputs),
        task,
        rng.next_u64(),
    )
    .unwrap();
    let x = random_matrix(rng, batch, features, 0.0, 1.0);
    let y = match task {
        Task::Classification => Targets::Classes((0..batch).map(|_| rng.below(outputs)).collect()),
        Task::Regression => Targets::Values((0..batch).map(|_| uniform(rng, -1.0, 1.0)).collect()),
    };
    let count = 1 + rng.below(3);
    let rules = compatible_ruleset(rng, features, outputs, task, count);
    GradientProblem {
        rules: compile_rules(&rules, features, outputs, task).unwrap(),
        net,
        x,
        y,
        loss: LossKind::default_for(task),
        lambda: uniform(rng, 0.1, 3.0),
    }
}

/// Values whose sign change would put a ReLU kink between two parameter
/// settings: hidden pre-activations and the violations of ReLU-kind rules on
/// applicable samples.
pub fn kink_values(p: &GradientProblem, net: &Network) -> Vec<f64> {
    let (pred, cache) = nn::forward(net, &p.x).unwrap();
    let pre = cache.pre_activations();
    let mut out: Vec<f64> = pre[..pre.len() - 1]
        .iter()
        .flat_map(|m| m.as_slice().iter().copied())
        .collect();
    for rule in p
        .rules
        .iter()
        .filter(|r| r.source().penalty == PenaltyKind::Relu)
    {
        for (features, prediction) in p.x.iter_rows().zip(pred.iter_rows()) {
            if rule.applicability(features) {
                out.push(rule.violation(prediction));
            }
        }
    }
    out
}

pub struct FdOutcome {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

/// Central differences of the total objective against its analytic
/// gradient. A parameter is skipped when a kink value lies within
/// `kink_radius` of zero and moves under the perturbation.
pub fn finite_difference_check(
    p: &GradientProblem,
    step: f64,
    kink_radius: f64,
    floor: f64,
) -> FdOutcome {
    let eval = |net: &Network| objective(net, &p.rules, p.loss, p.lambda, &p.x, &p.y).unwrap();
    let analytic = eval(&p.net).gradients;
    let base_kinks = kink_values(p, &p.net);
    let mut net = p.net.clone();
    let mut out = FdOutcome {
        checked: 0,
        skipped: 0,
        worst: 0.0,
    };
    for i in 0..net.parameter_count() {
        let orig = net.parameters()[i];
        net.parameters_mut()[i] = orig + step;
        let up = eval(&net).total;
        let up_kinks = kink_values(p, &net);
        net.parameters_mut()[i] = orig - step;
        let down = eval(&net).total;
        let down_kinks = kink_values(p, &net);
        net.parameters_mut()[i] = orig;

        let near_kink = base_kinks
            .iter()
            .zip(&up_kinks)
            .zip(&down_kinks)
            .any(|((b, u), d)| b.abs() < kink_radius && (u != b || d != b));
        if near_kink {
            out.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.as_slice()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        out.worst = out.worst.max(rel);
        out.checked += 1;
    }
    out
}
