//! Central finite differences against the tape gradient of the full training
//! objective (prediction MSE plus the contrastive term) on a toy model.
//!
//! cargo run --release --example gradient_check

use factorgcl::diffcore::{finite_diff_check, Tape, Tensor};
use factorgcl::model::{forward, forward_future, Mode, ModelConfig, ModelParams};
use factorgcl::objective::total_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig {
        hidden_dim: 4,
        n_factors: 2,
        horizons: vec![1, 5],
        past_len: 8,
        future_len: 8,
        gamma: 1.0,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let x = Tensor::new(vec![4, 8, 6], uniform(192))?;
    let xf = Tensor::new(vec![4, 8, 6], uniform(192))?;
    let y = Tensor::matrix(4, 2, uniform(8))?;
    let prior = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]])?;

    let params = ModelParams::init(&cfg)?;
    let names: Vec<String> = params.names().map(String::from).collect();
    let loss = |p: &ModelParams| -> anyhow::Result<(f64, Vec<Tensor>)> {
        let tape = Tape::new();
        let b = p.bind(&tape);
        let out = forward(&tape, &b, &x, &prior, Mode::Train)?;
        let fut = forward_future(&tape, &b, &xf, &prior, out.beta_h.as_ref(), Mode::Train)?;
        let (total, _) = total_loss(&b, &out, Some(&fut), &y, cfg.gamma)?;
        let grads = tape.backward(&total)?;
        Ok((total.item()?, b.gradients(&grads).into_values().collect()))
    };
    let (value, analytic) = loss(&params)?;
    let mut flat: Vec<Tensor> = names.iter().map(|n| params.get(n).expect("named").clone()).collect();
    let report = finite_diff_check(&mut flat, &analytic, 1e-4, |ts| {
        let mut p = params.clone();
        for (n, t) in names.iter().zip(ts) {
            *p.get_mut(n).expect("named") = t.clone();
        }
        loss(&p).expect("toy forward").0
    });
    println!("loss {value:.6}, {} scalars in {} tensors", report.checked, names.len());
    println!("max relative error {:.3e}", report.max_rel_error);
    if let Some((k, i)) = report.worst {
        println!("worst entry: {}[{i}]", names[k]);
    }
    Ok(())
}
