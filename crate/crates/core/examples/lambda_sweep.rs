//! Sweep the penalty weight over several seeds and report median accuracy
//! and satisfaction per lambda, running the jobs on worker threads.
//!
//! ```text
//! cargo run --release --example lambda_sweep
//! ```

use saifdl::data::generate_classification;
use saifdl::nn::default_architecture;
use saifdl::rulelang::parse_rules;
use saifdl::trainer::{default_workers, median, parallel_map, Experiment};
use saifdl::{Task, TrainingConfig};

fn main() {
    let (train, val) = generate_classification(1000, 42).unwrap().split_tail(0.2);
    let exp = Experiment {
        architecture: default_architecture(2, 2),
        task: Task::Classification,
        rules: parse_rules("rule hot: if feature[0] > 0.8 then class 1 margin 0.8 weight 3")
            .unwrap(),
        train,
        val,
        config: TrainingConfig::default(),
    };
    let lambdas = [0.0, 0.5, 1.0, 2.0, 4.0];
    let seeds = 0..5u64;
    let jobs: Vec<(f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.clone().map(move |s| (l, s)))
        .collect();
    let runs = parallel_map(&jobs, default_workers(jobs.len()), |&(l, s)| {
        exp.with_lambda(l)
            .with_seed(s)
            .run()
            .expect("training succeeds")
    });

    println!("{:>7} {:>10} {:>13}", "lambda", "accuracy", "satisfaction");
    for (i, lambda) in lambdas.iter().enumerate() {
        let group = &runs[i * 5..(i + 1) * 5];
        let acc: Vec<f64> = group.iter().map(|r| r.final_accuracy.unwrap()).collect();
        let sat: Vec<f64> = group.iter().map(|r| r.final_domain_satisfaction).collect();
        println!("{lambda:>7} {:>10.3} {:>13.3}", median(&acc), median(&sat));
    }
}
