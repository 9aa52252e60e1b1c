//! Generates a synthetic market and writes it in the CSV layouts the CLI
//! reads: panel, prior exposures and the ground-truth sidecars.
//!
//! cargo run --example gen_synthetic -- [out_dir]

use std::fs::{self, File};
use std::path::PathBuf;

use factorgcl::synthgen::{generate_market, SynthSpec};

fn main() -> anyhow::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "synthetic".into()).into();
    fs::create_dir_all(&out)?;
    let spec = SynthSpec {
        n_stocks: 50,
        days: 600,
        ..SynthSpec::default()
    };
    let (panel, prior, truth) = generate_market(&spec)?;
    panel.save(&out.join("panel.csv"))?;
    prior.save(&out.join("prior.csv"), panel.tickers())?;
    truth.write_loadings(File::create(out.join("truth_loadings.csv"))?, panel.tickers())?;
    truth.write_factor_returns(File::create(out.join("truth_factor_returns.csv"))?, panel.dates())?;

    println!(
        "{} stocks x {} days ({} .. {}), {} industries, {} hidden factors",
        panel.n_stocks(),
        panel.n_dates(),
        panel.dates()[0],
        panel.dates()[panel.n_dates() - 1],
        prior.n_factors(),
        truth.n_hidden()
    );
    let r = truth.returns.data();
    let sd = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
    println!("daily return volatility {sd:.4}");
    println!("wrote {}", out.display());
    Ok(())
}
