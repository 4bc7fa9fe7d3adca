//! Train the two-feature classifier with and without the `hot` rule and
//! compare accuracy and rule satisfaction on the validation split.
//!
//! ```text
//! cargo run --release --example poc_experiment
//! ```

use saifdl::data::generate_classification;
use saifdl::nn::default_architecture;
use saifdl::rulelang::parse_rules;
use saifdl::trainer::Experiment;
use saifdl::{Task, TrainingConfig};

fn main() {
    let rules =
        parse_rules("rule hot: if feature[0] > 0.8 then class 1 margin 0.8 weight 3").unwrap();
    let data = generate_classification(1000, 42).unwrap();
    let (train, val) = data.split_tail(0.2);
    let exp = Experiment {
        architecture: default_architecture(2, 2),
        task: Task::Classification,
        rules,
        train,
        val,
        config: TrainingConfig::default(),
    };

    for lambda in [0.0, 1.0] {
        let run = exp.with_lambda(lambda).run().expect("training succeeds");
        println!(
            "lambda {lambda}: accuracy {:.3}, satisfaction {:.3}",
            run.final_accuracy.unwrap(),
            run.final_domain_satisfaction
        );
        for m in run.curves.iter().step_by(5) {
            println!(
                "  epoch {:>2}  base {:.4}  penalty {:.4}  total {:.4}",
                m.epoch, m.train_base, m.train_penalty, m.train_total
            );
        }
    }
}
