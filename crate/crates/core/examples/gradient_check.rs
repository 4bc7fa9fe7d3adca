//! Compare the analytic gradient of base loss + lambda * penalty with
//! central finite differences for every parameter of a small network.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use saifdl::data::generate_classification;
use saifdl::nn::{default_architecture, init_network, LossKind};
use saifdl::penalty::compile_rules;
use saifdl::rulelang::parse_rules;
use saifdl::trainer::objective;
use saifdl::Task;

const LAMBDA: f64 = 1.0;
const STEP: f64 = 1e-6;

fn main() {
    let data = generate_classification(16, 3).unwrap();
    let rules =
        parse_rules("rule hot: if feature[0] > 0.5 then class 1 margin 0.9 penalty softplus k=5")
            .unwrap();
    let compiled = compile_rules(&rules, 2, 2, Task::Classification).unwrap();
    let mut net = init_network(&default_architecture(2, 2), Task::Classification, 11).unwrap();
    let total = |net: &_| {
        objective(
            net,
            &compiled,
            LossKind::CrossEntropy,
            LAMBDA,
            &data.features,
            &data.labels,
        )
        .unwrap()
        .total
    };

    let analytic = objective(
        &net,
        &compiled,
        LossKind::CrossEntropy,
        LAMBDA,
        &data.features,
        &data.labels,
    )
    .unwrap()
    .gradients;
    let mut worst: f64 = 0.0;
    for i in 0..net.parameter_count() {
        let orig = net.parameters()[i];
        net.parameters_mut()[i] = orig + STEP;
        let up = total(&net);
        net.parameters_mut()[i] = orig - STEP;
        let down = total(&net);
        net.parameters_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic.as_slice()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        println!("param {i:>2}: analytic {a:>+.8e}  numeric {numeric:>+.8e}  rel {rel:.1e}");
    }
    println!("worst relative error {worst:.2e}");
}
