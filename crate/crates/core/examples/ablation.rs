//! Trains every model variant on the same synthetic window and seed and
//! prints the test IC matrix.
//!
//! cargo run --release --example ablation -- [days_per_epoch] [epochs]

use factorgcl::dataio::{rolling_splits, SplitSpec};
use factorgcl::eval::{metric_report, write_ablation_csv};
use factorgcl::model::{ModelConfig, Variant};
use factorgcl::synthgen::{generate_market, SynthSpec};
use factorgcl::train::{predict_range, train_window, TrainConfig, TrainData};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
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
    let mut reports = Vec::new();
    for v in Variant::ALL {
        let mcfg = ModelConfig { variant: v, ..base.clone() };
        let (params, log) = train_window(&data, &triple, &mcfg, &tcfg)?;
        let table = predict_range(&params, &data, &triple.test)?;
        eprintln!("{v}: selected epoch {}", log.selected_epoch);
        reports.push(metric_report(&table, v.name()));
    }
    write_ablation_csv(&reports, std::io::stdout())?;
    Ok(())
}
