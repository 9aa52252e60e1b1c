//! Daily IC, rank IC and ICIR of noisy oracle scores at several noise
//! levels, next to a permutation null.
//!
//! cargo run --release --example evaluate_ic

use factorgcl::dataio::compute_labels;
use factorgcl::eval::{metric_report, DayPredictions, PredictionTable};
use factorgcl::synthgen::{generate_market, SynthSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> anyhow::Result<()> {
    let spec = SynthSpec {
        days: 300,
        ..SynthSpec::default()
    };
    let (panel, _, _) = generate_market(&spec)?;
    let horizons = vec![1, 5];
    let labels = compute_labels(&panel, &horizons);
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let table = |noise: f64, shuffle: bool, rng: &mut ChaCha8Rng| {
        let mut t = PredictionTable::new(horizons.clone());
        for d in 0..panel.n_dates() - 7 {
            let n = panel.n_stocks();
            let mut truth: Vec<Option<f64>> = Vec::with_capacity(n * 2);
            for s in 0..n {
                for h in 0..horizons.len() {
                    truth.push(labels.get(d, s, h));
                }
            }
            let mut scores: Vec<f64> = truth
                .iter()
                .map(|l| l.unwrap_or(0.0) * 100.0 + noise * { let z: f64 = StandardNormal.sample(rng); z })
                .collect();
            if shuffle {
                scores.shuffle(rng);
            }
            t.days.push(DayPredictions {
                date: panel.dates()[d],
                tickers: panel.tickers().to_vec(),
                scores,
                labels: truth,
            });
        }
        t
    };

    println!("{:<12} {:>8} {:>8} {:>8}", "scores", "IC(5)", "ICIR(5)", "rankIC");
    for (name, noise, shuffle) in [("oracle", 0.0, false), ("noise 2", 2.0, false), ("noise 8", 8.0, false), ("shuffled", 0.0, true)] {
        let report = metric_report(&table(noise, shuffle, &mut rng), name);
        let m = report.horizon(5).expect("horizon 5");
        let rank: Vec<f64> = report.daily.iter().filter(|r| r.horizon == 5).filter_map(|r| r.rank_ic).collect();
        println!(
            "{:<12} {:>8.4} {:>8.3} {:>8.4}",
            name,
            m.ic.unwrap_or(f64::NAN),
            m.icir.unwrap_or(f64::NAN),
            rank.iter().sum::<f64>() / rank.len() as f64
        );
    }
    Ok(())
}
