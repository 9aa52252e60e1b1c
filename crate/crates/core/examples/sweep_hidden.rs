//! Test IC as a function of the number of hidden factors the model may
//! mine, on a market with four true hidden factors.
//!
//! cargo run --release --example sweep_hidden -- [grid] [days_per_epoch] [epochs]

use factorgcl::dataio::{rolling_splits, SplitSpec};
use factorgcl::eval::metric_report;
use factorgcl::model::ModelConfig;
use factorgcl::synthgen::{generate_market, SynthSpec};
use factorgcl::train::{predict_range, train_window, TrainConfig, TrainData};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let grid: Vec<usize> = args
        .next()
        .unwrap_or_else(|| "1,4,16".into())
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    let days_per_epoch = args.next().map(|s| s.parse()).transpose()?.unwrap_or(48);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);

    let spec = SynthSpec {
        persistence: 0.9,
        ..SynthSpec::default()
    };
    let (panel, prior, _) = generate_market(&spec)?;
    let triple = rolling_splits(panel.n_dates(), &SplitSpec::default())?.triples.remove(0);
    let tcfg = TrainConfig {
        days_per_epoch,
        max_epochs: epochs,
        valid_days: 40,
        ..TrainConfig::default()
    };
    let base = ModelConfig::default();
    let data = TrainData::new(&panel, &prior, &base.horizons);
    println!("n_factors,ic_1,ic_5,ic_10,ic_20");
    for m in grid {
        let mcfg = ModelConfig { n_factors: m, ..base.clone() };
        let (params, _) = train_window(&data, &triple, &mcfg, &tcfg)?;
        let report = metric_report(&predict_range(&params, &data, &triple.test)?, &m.to_string());
        let ics: Vec<String> = report.horizons.iter().map(|h| format!("{:.4}", h.ic.unwrap_or(f64::NAN))).collect();
        println!("{m},{}", ics.join(","));
    }
    Ok(())
}
