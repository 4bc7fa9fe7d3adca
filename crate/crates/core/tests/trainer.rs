use saifdl::data::generate_classification;
use saifdl::nn::default_architecture;
use saifdl::rulelang::parse_rules;
use saifdl::trainer::{parallel_map, sweep_lambda, Experiment};
use saifdl::{Task, TrainingConfig};

fn experiment() -> Experiment {
    let (train, val) = generate_classification(300, 8).unwrap().split_tail(0.2);
    Experiment {
        architecture: default_architecture(2, 2),
        task: Task::Classification,
        rules: parse_rules("rule hot: if feature[0] > 0.8 then class 1 margin 0.8 weight 3").unwrap(),
        train,
        val,
        config: TrainingConfig {
            epochs: 4,
            ..TrainingConfig::default()
        },
    }
}

#[test]
fn parallel_sweep_matches_sequential_runs() {
    let exp = experiment();
    let lambdas = [0.0, 0.5, 2.0];
    let swept = sweep_lambda(&exp, &lambdas);
    for (lambda, result) in lambdas.iter().zip(swept) {
        let parallel = result.unwrap();
        let sequential = exp.with_lambda(*lambda).run().unwrap();
        assert_eq!(parallel.network.parameters(), sequential.network.parameters());
        assert_eq!(parallel.curves, sequential.curves);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let exp = experiment();
    let seeds: Vec<u64> = (0..4).collect();
    let one = parallel_map(&seeds, 1, |&s| exp.with_seed(s).run().unwrap().network);
    let four = parallel_map(&seeds, 4, |&s| exp.with_seed(s).run().unwrap().network);
    assert_eq!(one, four);
}

#[test]
fn curves_track_every_epoch_and_the_loss_identity() {
    let run = experiment().with_lambda(1.5).run().unwrap();
    assert_eq!(run.curves.len(), 4);
    for (i, m) in run.curves.iter().enumerate() {
        assert_eq!(m.epoch, i + 1);
        assert_eq!(m.train_total, m.train_base + 1.5 * m.train_penalty);
        assert_eq!(m.val_total, m.val_base + 1.5 * m.val_penalty);
    }
    assert_eq!(run.final_domain_satisfaction, run.final_satisfaction.ratio());
}
