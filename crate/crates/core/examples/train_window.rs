//! Train one rolling window on a synthetic market and report validation IC
//! per epoch plus test IC of the selected checkpoint.
//!
//! cargo run --release --example train_window -- [days_per_epoch] [epochs]

use std::time::Instant;

use factorgcl::dataio::{rolling_splits, SplitSpec};
use factorgcl::eval::metric_report;
use factorgcl::model::ModelConfig;
use factorgcl::synthgen::{generate_market, SynthSpec};
use factorgcl::train::{predict_range, train_window, TrainConfig, TrainData};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let days_per_epoch = args.next().map(|s| s.parse()).transpose()?.unwrap_or(64);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);

    let spec = SynthSpec {
        days: 2016,
        persistence: 0.9,
        ..SynthSpec::default()
    };
    let (panel, prior, _) = generate_market(&spec)?;
    let plan = rolling_splits(panel.n_dates(), &SplitSpec::default())?;
    let triple = &plan.triples[0];

    let mcfg = ModelConfig::default();
    let tcfg = TrainConfig {
        days_per_epoch,
        max_epochs: epochs,
        valid_days: 50,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let data = TrainData::new(&panel, &prior, &mcfg.horizons);
    let start = Instant::now();
    let (params, log) = train_window(&data, triple, &mcfg, &tcfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    for e in &log.epochs {
        println!(
            "epoch {:>2}  steps {:>4}  mse {:.4}  cl {:.4}  valid IC {:?}",
            e.epoch, e.steps, e.loss.mse, e.loss.cl, e.mean_valid_ic
        );
    }
    let steps: usize = log.epochs.iter().map(|e| e.steps).sum();
    println!("{steps} steps in {elapsed:.1}s, {:.3}s per step incl. validation", elapsed / steps as f64);
    println!("selected epoch {}", log.selected_epoch);

    let test = predict_range(&params, &data, &triple.test)?;
    let report = metric_report(&test, "full");
    for m in &report.horizons {
        println!("test horizon {:>2}: IC {:?} ICIR {:?}", m.horizon, m.ic, m.icir);
    }
    Ok(())
}
