//! Train small neural networks under declarative domain rules.
//!
//! Rules are written in a line-oriented language ([`rulelang`]), compiled
//! into differentiable penalties ([`penalty`]), and added to the base loss of
//! a feedforward network ([`nn`]) with a weighting factor `λ` by the training
//! loop in [`trainer`]. The exact, non-differentiable reading of the same
//! rules measures how well a trained model respects them.
//!
//! ```
//! use saifdl::rulelang::parse_rules;
//! use saifdl::penalty::compile_rule;
//! use saifdl::tensor::Task;
//!
//! let rules = parse_rules("rule cap: output[0] <= 4.2 penalty softplus k=10").unwrap();
//! let cap = compile_rule(&rules.rules[0], 2, 1, Task::Regression).unwrap();
//! let (value, grad) = cap.penalty_value_and_grad(&[4.5]).unwrap();
//! assert!(value > 0.3 && grad[0] > 0.9);
//! ```

pub mod cli;
pub mod data;
pub mod nn;
pub mod penalty;
pub mod rng;
pub mod rulelang;
pub mod tensor;
pub mod trainer;

pub use data::Dataset;
pub use nn::{LayerSpec, LossKind, Network};
pub use penalty::{CompiledRule, PenaltyReport, SatisfactionReport};
pub use rulelang::{RuleAst, RuleSet};
pub use tensor::{Matrix, Targets, Task};
pub use trainer::{RunResult, TrainingConfig};
