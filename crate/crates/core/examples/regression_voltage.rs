//! Fit the noisy voltage curve with MSE while a softplus rule caps the
//! prediction at 4.2, then save and reload the model as a checkpoint.
//!
//! ```text
//! cargo run --release --example regression_voltage
//! ```

use saifdl::data::generate_regression_demo;
use saifdl::nn::{default_architecture, forward, Checkpoint, LossKind};
use saifdl::rulelang::parse_rules;
use saifdl::trainer::{evaluate, Experiment, Metric};
use saifdl::{Task, TrainingConfig};

fn main() {
    let (train, val) = generate_regression_demo(1000, 7).unwrap().split_tail(0.2);
    let exp = Experiment {
        architecture: default_architecture(2, 1),
        task: Task::Regression,
        rules: parse_rules("rule cap: output[0] <= 4.2 penalty softplus k=10").unwrap(),
        train,
        val: val.clone(),
        config: TrainingConfig {
            loss: LossKind::Mse,
            ..TrainingConfig::default()
        },
    };

    for lambda in [0.0, 1.0, 5.0] {
        let run = exp.with_lambda(lambda).run().expect("training succeeds");
        let ev = evaluate(&run.network, &exp.rules, &val).unwrap();
        let Metric::Mse(mse) = ev.metric else {
            unreachable!()
        };
        let (pred, _) = forward(&run.network, &val.features).unwrap();
        let max = pred
            .as_slice()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        println!(
            "lambda {lambda}: val mse {mse:.5}, cap satisfied {:.3}, max prediction {max:.3}",
            ev.satisfaction.ratio()
        );
    }

    let run = exp.run().unwrap();
    let json = Checkpoint::from_network(&run.network).to_json();
    let restored = Checkpoint::from_json(&json)
        .unwrap()
        .into_network()
        .unwrap();
    assert_eq!(restored.parameters(), run.network.parameters());
    println!("checkpoint round trip ok ({} bytes)", json.len());
}
