//! End-to-end experiment protocol checks on both data sources.

use sgldkit::experiment::{self, config_from_toml_str, Strategy};

const EASY_SYNTHETIC: &str = r#"
[data]
source = "synthetic_gaussian"
n_per_class = 250
dim = 2
delta = 6.0

[split]
train = 200
holdout = 150
test = 150

[model]
hidden = [16]

[training]
strategy = "sgd"
epochs = 10
batch_size = 32
learning_rate = 0.5

[seeds]
split = 1
init = 1
data_order = 1
noise = 1
"#;

// Class means six pooled standard deviations apart: the task is separable,
// so a fitted baseline generalizes and the threshold attack finds almost no
// membership signal.
#[test]
fn easy_synthetic_task_shows_no_leakage() {
    let base = config_from_toml_str(EASY_SYNTHETIC).unwrap();
    let masters = [1u64, 2, 3, 4, 5];
    let mut test_acc = 0.0;
    let mut auc = 0.0;
    for &master in &masters {
        let mut config = base.clone();
        config.apply_seed_bundle(master);
        let record = experiment::run_experiment(&config).unwrap();
        test_acc += record.test_acc;
        auc += record.auc;
    }
    test_acc /= masters.len() as f64;
    auc /= masters.len() as f64;
    assert!(test_acc >= 0.95, "seed-mean test accuracy {test_acc:.3}");
    assert!((auc - 0.5).abs() <= 0.1, "seed-mean attack auc {auc:.3} strays from chance");
}

// The shipped credit config under plain SGD memorizes: near-perfect training
// accuracy with a large train/test gap for the attack to exploit.
#[test]
fn credit_baseline_memorizes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/german_credit.toml");
    let mut config = experiment::load_config(path).unwrap().derive_for_strategy(Strategy::Sgd);
    config.apply_seed_bundle(1);
    let record = experiment::run_experiment(&config).unwrap();
    assert!(record.train_acc >= 0.95, "train accuracy {:.3}", record.train_acc);
    assert!(record.gap >= 0.15, "generalization gap {:.3}", record.gap);
}
