//! Evaluate the voltage cap rule on a handful of predictions and compare
//! the ReLU and softplus penalties.
//!
//! ```text
//! cargo run --example voltage_penalty
//! ```

use saifdl::penalty::{asp_penalty, compile_rules, relu_penalty, softplus_penalty};
use saifdl::rulelang::parse_rules;
use saifdl::{Matrix, Task};

fn main() {
    println!(
        "{:>8} {:>12} {:>12} {:>12}",
        "v", "relu", "softplus10", "d/dv sp"
    );
    for v in [-0.5, -0.1, 0.0, 0.1, 0.3, 0.5] {
        let (r, _) = relu_penalty(v).unwrap();
        let (s, ds) = softplus_penalty(v, 10.0).unwrap();
        println!("{v:>8.2} {r:>12.6} {s:>12.6} {ds:>12.6}");
    }

    let rules = parse_rules("rule cap: output[0] <= 4.2 penalty softplus k=10").unwrap();
    let compiled = compile_rules(&rules, 2, 1, Task::Regression).unwrap();
    let x = Matrix::zeros(4, 2);
    let y = Matrix::from_rows(&[vec![3.9], vec![4.2], vec![4.4], vec![4.7]]).unwrap();
    let (report, grad) = asp_penalty(&compiled, &x, &y).unwrap();
    println!("\nbatch penalty {:.6}", report.total);
    for (name, value) in &report.per_rule {
        println!("  {name}: {value:.6}");
    }
    println!("d penalty / d prediction: {:?}", grad.as_slice());
}
