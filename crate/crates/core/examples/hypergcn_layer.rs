//! One hypergraph convolution over a soft incidence matrix, with gradients
//! with respect to the node embeddings and the weight.
//!
//! cargo run --example hypergcn_layer

use factorgcl::diffcore::{Tape, Tensor};
use factorgcl::model::hypergcn_layer;

fn main() -> anyhow::Result<()> {
    // five stocks, two factors: a hard industry edge and a soft style edge
    let incidence = Tensor::from_rows(&[
        vec![1.0, 0.9],
        vec![1.0, 0.1],
        vec![0.0, 0.8],
        vec![0.0, 0.5],
        vec![1.0, 0.0],
    ])?;
    let e = Tensor::from_rows(&[
        vec![0.5, -1.0, 0.2],
        vec![1.5, 0.3, -0.4],
        vec![-0.7, 0.8, 1.1],
        vec![0.0, 0.1, -0.3],
        vec![0.9, -0.2, 0.6],
    ])?;
    let w = Tensor::from_rows(&[vec![0.5, 0.0], vec![-0.3, 0.8], vec![0.2, 0.4]])?;

    let tape = Tape::new();
    let (ev, hv, wv) = (tape.param(e), tape.constant(incidence), tape.param(w));
    let out = hypergcn_layer(&ev, &hv, &wv, 0.01, 1e-6)?;
    println!("propagated embeddings (5 x 2):");
    for i in 0..5 {
        println!("  {:?}", out.value().row(i));
    }
    let grads = tape.backward(&out.sum())?;
    println!("d sum / d w: {:?}", grads.wrt(&wv).expect("param").data());
    println!("d sum / d e[0]: {:?}", grads.wrt(&ev).expect("param").row(0));
    Ok(())
}
