//! Desk-scale leave-one-subject-out run on a synthetic shoulder-abduction
//! corpus. Usage: `loocv [metric] [folds] [epochs] [lr] [alpha] [ablation]`.

use std::env;

use repsense_core::synth::{generate_corpus, CorpusSpec};
use repsense_core::{MetricConfig, MetricKind};
use repsense_model::ModelConfig;
use repsense_train::{run_fold, split_dataset, Dataset, SplitMode, TrainConfig};

fn main() {
    let args: Vec<String> = env::args().collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let metric: MetricKind = arg(1, "rom").parse().unwrap();
    let folds: usize = arg(2, "10").parse().unwrap();
    let cfg = TrainConfig {
        metric,
        epochs: arg(3, "40").parse().unwrap(),
        lr: arg(4, "3e-3").parse().unwrap(),
        alpha: arg(5, "0.1").parse().unwrap(),
        pair_fraction: 1.0,
        ..TrainConfig::default()
    };
    let mut model_cfg = ModelConfig::desk();
    match arg(6, "full").as_str() {
        "no-attention" => model_cfg.use_attention = false,
        "no-spatial" => model_cfg.use_spatial = false,
        "no-temporal" => model_cfg.use_temporal = false,
        _ => {}
    }
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    let ds = Dataset::from_corpus(&corpus, MetricConfig::default()).unwrap();
    let plan = split_dataset(&ds, SplitMode::Loocv, 0).unwrap();
    let mut r2 = Vec::new();
    for fold in plan.folds.iter().take(folds) {
        let (report, outcome) = run_fold(&ds, fold, &model_cfg, &cfg).unwrap();
        println!(
            "{} r2 {:.3} acc {:.3} best {} / {} ({:.1}s)",
            fold.name, report.scores.r2, report.accuracy, outcome.best_epoch, outcome.history.len(), report.seconds
        );
        r2.push(report.scores.r2);
    }
    println!("mean r2 {:.3}", r2.iter().sum::<f64>() / r2.len() as f64);
}
