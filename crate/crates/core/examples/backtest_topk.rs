//! TopK backtest of noisy foresight scores on a synthetic market, showing
//! how transaction costs eat into cumulative excess return.
//!
//! cargo run --release --example backtest_topk

use factorgcl::backtest::{run_topk, BacktestConfig};
use factorgcl::dataio::{compute_labels, Field};
use factorgcl::eval::{DayPredictions, PredictionTable};
use factorgcl::synthgen::{generate_market, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> anyhow::Result<()> {
    let spec = SynthSpec {
        days: 504,
        persistence: 0.5,
        ..SynthSpec::default()
    };
    let (panel, _, _) = generate_market(&spec)?;
    let labels = compute_labels(&panel, &[10]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let mut table = PredictionTable::new(vec![10]);
    for d in 0..panel.n_dates() - 12 {
        let scores = (0..panel.n_stocks())
            .map(|s| labels.get(d, s, 0).unwrap_or(0.0) + 0.05 * { let z: f64 = StandardNormal.sample(&mut rng); z })
            .collect();
        table.days.push(DayPredictions {
            date: panel.dates()[d],
            tickers: panel.tickers().to_vec(),
            scores,
            labels: vec![None; panel.n_stocks()],
        });
    }
    let last = panel.n_dates() - 1;
    let universe: f64 = (0..panel.n_stocks())
        .map(|s| panel.get(last, s, Field::Vwap) / panel.get(0, s, Field::Vwap) - 1.0)
        .sum::<f64>()
        / panel.n_stocks() as f64;
    println!("buy-and-hold universe return {universe:.3}");

    println!("{:>6} {:>9} {:>9} {:>8} {:>8} {:>8} {:>9}", "cost", "final CR", "final CER", "AR", "IR", "RoMaD", "turnover");
    for cost in [0.0, 0.001, 0.003, 0.01] {
        let cfg = BacktestConfig {
            cost_rate: cost,
            ..BacktestConfig::default()
        };
        let r = run_topk(&table, &panel, &cfg)?;
        let turnover = r.turnover.iter().sum::<f64>() / r.turnover.len() as f64;
        println!(
            "{:>6.3} {:>9.3} {:>9.3} {:>8.3} {:>8.3} {:>8.3} {:>9.3}",
            cost,
            r.cr.last().unwrap_or(&0.0),
            r.cer.last().unwrap_or(&0.0),
            r.metrics.ar,
            r.metrics.ir.unwrap_or(f64::NAN),
            r.metrics.romad.unwrap_or(f64::NAN),
            turnover
        );
    }
    Ok(())
}
