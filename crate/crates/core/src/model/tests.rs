use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::{stable_sigmoid, Tape, Tensor};

type Dense = Vec<Vec<f64>>;

fn dense(t: &Tensor) -> Dense {
    let (r, c) = t.dims2().unwrap();
    (0..r).map(|i| (0..c).map(|j| t.at(i, j)).collect()).collect()
}

fn mm(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            out[i][j] = (0..k).map(|p| a[i][p] * b[p][j]).sum();
        }
    }
    out
}

fn tr(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn diag(v: &[f64]) -> Dense {
    let n = v.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { v[i] } else { 0.0 }).collect())
        .collect()
}

fn leaky(a: &Dense, slope: f64) -> Dense {
    a.iter()
        .map(|r| r.iter().map(|v| if *v >= 0.0 { *v } else { slope * v }).collect())
        .collect()
}

/// The five-matrix product written out densely.
fn hypergcn_oracle(e: &Dense, inc: &Dense, w: &Dense, slope: f64, eps: f64) -> Dense {
    let dn: Vec<f64> = inc.iter().map(|r| r.iter().sum::<f64>().max(eps).powf(-0.5)).collect();
    let de: Vec<f64> = (0..inc[0].len())
        .map(|j| inc.iter().map(|r| r[j]).sum::<f64>().max(eps).recip())
        .collect();
    let ident = diag(&vec![1.0; inc[0].len()]);
    let p = mm(&mm(&mm(&mm(&diag(&dn), inc), &ident), &diag(&de)), &mm(&tr(inc), &diag(&dn)));
    leaky(&mm(&mm(&p, e), w), slope)
}

fn close(a: &Dense, b: &Tensor, tol: f64) {
    let b = dense(b);
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random3(rng: &mut ChaCha8Rng, n: usize, t: usize, d: usize) -> Tensor {
    Tensor::new(vec![n, t, d], (0..n * t * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn toy() -> ModelConfig {
    ModelConfig {
        hidden_dim: 4,
        n_factors: 2,
        horizons: vec![1],
        past_len: 8,
        future_len: 8,
        seed: 11,
        ..ModelConfig::default()
    }
}

fn two_industries(n: usize) -> Tensor {
    let assign: Vec<usize> = (0..n).map(|i| i % 2).collect();
    crate::dataio::PriorExposure::from_assignment(vec!["A".into(), "B".into()], &assign)
        .unwrap()
        .matrix()
        .clone()
}

#[test]
fn feature_extract_shape() {
    let cfg = ModelConfig {
        hidden_dim: 16,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random3(&mut rng, 3, 60, 6);
    let tape = Tape::new();
    let b = params.bind(&tape);
    let (e, stats) = feature_extract(&tape, &b, Extractor::Past, &x, Mode::Train).unwrap();
    assert_eq!(e.shape(), vec![3, 16]);
    assert_eq!(stats.len(), 60);
}

#[test]
fn zero_network_gives_zero_embedding() {
    let mut params = ModelParams::init(&toy()).unwrap();
    for (name, t) in params.iter_mut() {
        if name.starts_with("past.gru") {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let x = Tensor::zeros(&[3, 8, 6]);
    let tape = Tape::new();
    let b = params.bind(&tape);
    let (e, _) = feature_extract(&tape, &b, Extractor::Past, &x, Mode::Train).unwrap();
    assert!(e.value().data().iter().all(|v| *v == 0.0));
}

fn gru_oracle(params: &ModelParams, x: &Tensor) -> Dense {
    let cfg = params.config();
    let (n, t, d, h) = (x.shape()[0], x.shape()[1], x.shape()[2], cfg.hidden_dim);
    let g = |k: &str| params.get(&format!("past.{k}")).unwrap().clone();
    let (gamma, beta) = (g("bn.gamma"), g("bn.beta"));
    let (wi, wh, bi, bh) = (g("gru.w_i"), g("gru.w_h"), g("gru.b_i"), g("gru.b_h"));
    let rm = params.buffer("past.bn.running_mean").unwrap();
    let rv = params.buffer("past.bn.running_var").unwrap();
    let mut state = vec![vec![0.0; h]; n];
    for step in 0..t {
        let mut next = state.clone();
        for i in 0..n {
            let xn: Vec<f64> = (0..d)
                .map(|j| {
                    let raw = x.data()[(i * t + step) * d + j];
                    gamma.data()[j] * (raw - rm.at(step, j)) / (rv.at(step, j) + cfg.bn_eps).sqrt()
                        + beta.data()[j]
                })
                .collect();
            let gate = |col: usize| {
                let a: f64 = (0..d).map(|p| xn[p] * wi.at(p, col)).sum::<f64>() + bi.data()[col];
                let b: f64 = (0..h).map(|p| state[i][p] * wh.at(p, col)).sum::<f64>() + bh.data()[col];
                (a, b)
            };
            for k in 0..h {
                let (ar, br) = gate(k);
                let (az, bz) = gate(h + k);
                let (an, bn) = gate(2 * h + k);
                let r = stable_sigmoid(ar + br);
                let z = stable_sigmoid(az + bz);
                let c = (an + r * bn).tanh();
                next[i][k] = (1.0 - z) * c + z * state[i][k];
            }
        }
        state = next;
    }
    state
}

#[test]
fn feature_extract_matches_unrolled_gru() {
    let cfg = toy();
    let mut params = ModelParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (_, t) in params.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
    }
    let stats: Vec<_> = (0..8)
        .map(|s| crate::diffcore::BatchStats {
            mean: (0..6).map(|j| 0.1 * (s + j) as f64).collect(),
            var: (0..6).map(|j| 0.5 + 0.1 * j as f64).collect(),
        })
        .collect();
    let mut p2 = ModelParams::init(&ModelConfig { bn_momentum: 1.0, ..cfg.clone() }).unwrap();
    p2.update_running_stats(Extractor::Past, &stats).unwrap();
    let mut params_eval = params.clone();
    params_eval.set_config(ModelConfig { bn_momentum: 1.0, ..cfg }).unwrap();
    params_eval.update_running_stats(Extractor::Past, &stats).unwrap();
    assert_eq!(params_eval.buffer("past.bn.running_mean"), p2.buffer("past.bn.running_mean"));

    let x = random3(&mut rng, 5, 8, 6);
    let tape = Tape::new();
    let b = params_eval.bind(&tape);
    let (e, stats) = feature_extract(&tape, &b, Extractor::Past, &x, Mode::Eval).unwrap();
    assert!(stats.is_empty());
    close(&gru_oracle(&params_eval, &x), &e.value(), 1e-12);
}

#[test]
fn feature_extract_is_deterministic_and_validates() {
    let params = ModelParams::init(&toy()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random3(&mut rng, 4, 8, 6);
    let run = || {
        let tape = Tape::new();
        let b = params.bind(&tape);
        feature_extract(&tape, &b, Extractor::Past, &x, Mode::Train).unwrap().0.value()
    };
    assert_eq!(run(), run());
    let tape = Tape::new();
    let b = params.bind(&tape);
    let one = random3(&mut rng, 1, 8, 6);
    assert!(feature_extract(&tape, &b, Extractor::Past, &one, Mode::Train).is_err());
    assert!(feature_extract(&tape, &b, Extractor::Past, &one, Mode::Eval).is_ok());
    let short = random3(&mut rng, 4, 7, 6);
    assert!(feature_extract(&tape, &b, Extractor::Past, &short, Mode::Eval).is_err());
}

fn hgcn(e: &Tensor, inc: &Tensor, w: &Tensor) -> Result<Tensor, ModelError> {
    let tape = Tape::new();
    let (e, inc, w) = (tape.constant(e.clone()), tape.constant(inc.clone()), tape.constant(w.clone()));
    Ok(hypergcn_layer(&e, &inc, &w, 0.01, 1e-6)?.value())
}

#[test]
fn hypergcn_examples() {
    let one = Tensor::from_rows(&[vec![1.0]]).unwrap();
    let out = hgcn(&Tensor::from_rows(&[vec![2.0]]).unwrap(), &one, &Tensor::eye(1)).unwrap();
    assert_eq!(out.data(), &[2.0]);

    let inc = Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
    let e = Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
    let out = hgcn(&e, &inc, &Tensor::eye(1)).unwrap();
    assert!((out.data()[0] - 2.0).abs() < 1e-15 && (out.data()[1] - 2.0).abs() < 1e-15);

    assert!(hgcn(&e, &Tensor::zeros(&[2, 1]), &Tensor::eye(1)).is_err());
    let neg = Tensor::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
    assert!(hgcn(&e, &neg, &Tensor::eye(1)).is_err());
}

#[test]
fn hypergcn_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (n, edges, h) in [(6, 3, 4), (8, 4, 3), (2, 1, 5), (7, 2, 2)] {
        let e = random(&mut rng, n, h);
        let inc = Tensor::matrix(n, edges, (0..n * edges).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap();
        let w = random(&mut rng, h, h);
        let oracle = hypergcn_oracle(&dense(&e), &dense(&inc), &dense(&w), 0.01, 1e-6);
        close(&oracle, &hgcn(&e, &inc, &w).unwrap(), 1e-12);
    }
}

fn bound_for<'t>(params: &'t ModelParams, tape: &'t Tape) -> Bound<'t, 't> {
    params.bind(tape)
}

#[test]
fn prior_beta_properties() {
    let cfg = toy();
    let params = ModelParams::init(&cfg).unwrap();
    let tape = Tape::new();
    let b = bound_for(&params, &tape);
    let row = [0.3, -0.2, 0.5, 0.1];
    let e = tape.constant(Tensor::from_rows(&vec![row.to_vec(); 3]).unwrap());
    let one = tape.constant(Tensor::full(&[3, 1], 1.0));
    let out = prior_beta(&b, &e, &one).unwrap().value();
    assert_eq!(out.row(0), out.row(1));
    assert_eq!(out.row(1), out.row(2));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e_val = random(&mut rng, 4, 4);
    let mut inc = two_industries(4);
    let oracle = hypergcn_oracle(
        &dense(&e_val),
        &dense(&inc),
        &dense(params.get("prior.w.0").unwrap()),
        cfg.leaky_slope,
        cfg.eps_deg,
    );
    let out = prior_beta(&b, &tape.constant(e_val.clone()), &tape.constant(inc.clone())).unwrap();
    close(&oracle, &out.value(), 1e-12);

    // stock 3 loses its industry
    inc.data_mut()[3 * 2 + 1] = 0.0;
    let out = prior_beta(&b, &tape.constant(e_val), &tape.constant(inc)).unwrap().value();
    assert!(out.row(3).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn hidden_exposure_examples() {
    let tape = Tape::new();
    let e = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let c = tape.constant(Tensor::from_rows(&[vec![0.5, -0.25]]).unwrap());
    assert_eq!(hidden_exposures(&e, &c).unwrap().value().data(), &[0.5]);

    let e = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![-2.0, 0.0]]).unwrap());
    let c = tape.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, -3.0]]).unwrap());
    assert!(hidden_exposures(&e, &c).unwrap().value().data().iter().all(|v| *v == 0.5));

    let c = Tensor::from_rows(&[vec![0.3, 0.1], vec![-0.2, 0.4]]).unwrap();
    let e = Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
    let small = hidden_exposures(&tape.constant(e.clone()), &tape.constant(c.clone())).unwrap().value();
    let big = hidden_exposures(&tape.constant(e), &tape.constant(c.map(|v| 10.0 * v))).unwrap().value();
    for (s, b) in small.data().iter().zip(big.data()) {
        assert!((b - 0.5).abs() >= (s - 0.5).abs());
        assert_eq!((b - 0.5).signum(), (s - 0.5).signum());
    }
}

#[test]
fn hidden_beta_soft_degrees() {
    let cfg = ModelConfig { hidden_dim: 1, n_factors: 1, ..toy() };
    let mut params = ModelParams::init(&cfg).unwrap();
    params.get_mut("hidden.w.0").unwrap().data_mut()[0] = 1.0;
    let tape = Tape::new();
    let b = bound_for(&params, &tape);
    // β = [0.2, 0.6]: dn = β, de = 0.8
    let beta = tape.constant(Tensor::from_rows(&[vec![0.2], vec![0.6]]).unwrap());
    let e = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
    let out = hidden_beta(&b, &e, &beta).unwrap().value();
    let gathered = 0.2f64.sqrt() * 1.0 + 0.6f64.sqrt() * 2.0;
    let expect = [0.2f64.sqrt() / 0.8 * gathered, 0.6f64.sqrt() / 0.8 * gathered];
    assert!((out.data()[0] - expect[0]).abs() < 1e-14);
    assert!((out.data()[1] - expect[1]).abs() < 1e-14);

    let params = ModelParams::init(&toy()).unwrap();
    let b = bound_for(&params, &tape);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = tape.constant(random(&mut rng, 5, 4));
    let half = tape.constant(Tensor::full(&[5, 2], 0.5));
    let out = hidden_beta(&b, &e, &half).unwrap().value();
    assert_eq!(out.shape(), &[5, 4]);
    for i in 1..5 {
        for j in 0..4 {
            assert!((out.at(i, j) - out.at(0, j)).abs() < 1e-15);
        }
    }
}

#[test]
fn individual_alpha_examples() {
    let mut params = ModelParams::init(&toy()).unwrap();
    let tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (ep, eh) = (random(&mut rng, 3, 4), random(&mut rng, 3, 4));
    let mut es = ep.clone();
    es.data_mut().iter_mut().zip(eh.data()).for_each(|(a, b)| *a += b);
    {
        let b = bound_for(&params, &tape);
        let out = individual_alpha(&b, &tape.constant(es.clone()), &tape.constant(ep.clone()), &tape.constant(eh.clone()))
            .unwrap()
            .value();
        assert!(out.data().iter().all(|v| v.abs() < 1e-15));
    }
    let w = params.get("alpha.w").unwrap().clone();
    let bias = Tensor::from_rows(&[vec![0.1, -0.2, 0.0, 0.3]]).unwrap();
    *params.get_mut("alpha.b").unwrap() = bias.clone();
    let es = random(&mut rng, 3, 4);
    let b = bound_for(&params, &tape);
    let out = individual_alpha(&b, &tape.constant(es.clone()), &tape.constant(ep.clone()), &tape.constant(eh.clone()))
        .unwrap()
        .value();
    let resid: Dense = (0..3)
        .map(|i| (0..4).map(|j| es.at(i, j) - ep.at(i, j) - eh.at(i, j)).collect())
        .collect();
    let mut pre = mm(&resid, &dense(&w));
    pre.iter_mut().for_each(|r| r.iter_mut().zip(bias.data()).for_each(|(v, b)| *v += b));
    close(&leaky(&pre, 0.01), &out, 1e-14);

    let mut params = ModelParams::init(&toy()).unwrap();
    *params.get_mut("alpha.w").unwrap() = Tensor::eye(4);
    let b = bound_for(&params, &tape);
    let zero = tape.constant(Tensor::zeros(&[1, 4]));
    let pos = Tensor::from_rows(&[vec![0.5, 1.0, 2.0, 0.25]]).unwrap();
    let out = individual_alpha(&b, &tape.constant(pos.clone()), &zero, &zero).unwrap().value();
    assert_eq!(out, pos);
}

#[test]
fn head_examples() {
    let cfg = ModelConfig { horizons: vec![1, 5, 10, 20], ..toy() };
    let mut params = ModelParams::init(&cfg).unwrap();
    *params.get_mut("head.b").unwrap() = Tensor::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
    let tape = Tape::new();
    let b = bound_for(&params, &tape);
    let zero = tape.constant(Tensor::zeros(&[3, 4]));
    let out = predict_heads(&tape, &b, 3, Some(&zero), Some(&zero), Some(&zero)).unwrap().value();
    assert_eq!(out.shape(), &[3, 4]);
    for i in 0..3 {
        assert_eq!(out.row(i), &[0.1, 0.2, 0.3, 0.4]);
    }
    let none = predict_heads(&tape, &b, 3, None, None, None).unwrap().value();
    assert_eq!(none, out);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let e: Vec<Tensor> = (0..3).map(|_| random(&mut rng, 3, 4)).collect();
    let v: Vec<_> = e.iter().map(|t| tape.constant(t.clone())).collect();
    let out = predict_heads(&tape, &b, 3, Some(&v[0]), Some(&v[1]), Some(&v[2])).unwrap().value();
    for i in 0..3 {
        for l in 0..4 {
            let mut want = params.get("head.b").unwrap().data()[l];
            for (t, name) in e.iter().zip(["head.prior", "head.hidden", "head.alpha"]) {
                let w = params.get(name).unwrap();
                want += (0..4).map(|k| t.at(i, k) * w.at(k, l)).sum::<f64>();
            }
            assert!((out.at(i, l) - want).abs() < 1e-14);
        }
    }
}

#[test]
fn forward_composes_the_cascade() {
    let cfg = toy();
    let params = ModelParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random3(&mut rng, 4, 8, 6);
    let prior = two_industries(4);
    let tape = Tape::new();
    let b = bound_for(&params, &tape);
    let out = forward(&tape, &b, &x, &prior, Mode::Train).unwrap();
    assert!(out.pred.value().is_finite());
    assert_eq!(out.pred.shape(), vec![4, 1]);
    let (es, ep, er) = (out.e_s.value(), out.e_p.value(), out.e_r.value());
    for k in 0..es.numel() {
        assert_eq!(er.data()[k], es.data()[k] - ep.data()[k]);
    }
    let bh = out.beta_h.unwrap().value();
    assert!(bh.data().iter().all(|v| *v > 0.0 && *v < 1.0));

    let (e_s, _) = feature_extract(&tape, &b, Extractor::Past, &x, Mode::Train).unwrap();
    let e_p = prior_beta(&b, &e_s, &tape.constant(prior)).unwrap();
    let e_r = e_s.sub(&e_p).unwrap();
    let beta_h = hidden_exposures(&e_r, &b.var("hidden.c").unwrap()).unwrap();
    let e_h = hidden_beta(&b, &e_r, &beta_h).unwrap();
    let e_a = individual_alpha(&b, &e_s, &e_p, &e_h).unwrap();
    let pred = predict_heads(&tape, &b, 4, Some(&e_p), Some(&e_h), Some(&e_a)).unwrap();
    assert_eq!(pred.value(), out.pred.value());
    assert_eq!(e_a.value(), out.e_alpha.value());
}

#[test]
fn future_pass_with_copied_extractor_equals_past_residual() {
    let cfg = toy();
    let mut params = ModelParams::init(&cfg).unwrap();
    let names: Vec<String> = params.names().filter(|n| n.starts_with("past.")).map(String::from).collect();
    for name in names {
        let v = params.get(&name).unwrap().clone();
        *params.get_mut(&name.replacen("past.", "future.", 1)).unwrap() = v;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random3(&mut rng, 5, 8, 6);
    let prior = two_industries(5);
    let tape = Tape::new();
    let b = bound_for(&params, &tape);
    let past = forward(&tape, &b, &x, &prior, Mode::Train).unwrap();
    let fut = forward_future(&tape, &b, &x, &prior, past.beta_h.as_ref(), Mode::Train).unwrap();
    let es = past.e_s.value();
    let (ep, eh) = (past.e_p.value(), past.e_h.value());
    let want: Vec<f64> = (0..es.numel()).map(|k| es.data()[k] - ep.data()[k] - eh.data()[k]).collect();
    assert_eq!(fut.e_alpha.value().data(), want.as_slice());
    assert_eq!(fut.e_alpha.shape(), vec![5, 4]);
    assert!(forward_future(&tape, &b, &x, &prior, None, Mode::Train).is_err());
}

#[test]
fn variants_bypass_their_modules() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random3(&mut rng, 4, 8, 6);
    let prior = two_industries(4);
    for variant in Variant::ALL {
        let params = ModelParams::init(&ModelConfig { variant, ..toy() }).unwrap();
        let tape = Tape::new();
        let b = bound_for(&params, &tape);
        let out = forward(&tape, &b, &x, &prior, Mode::Train).unwrap();
        let zero = |v: &crate::diffcore::Var| v.value().data().iter().all(|x| *x == 0.0);
        assert_eq!(zero(&out.e_p), !variant.uses_prior(), "{variant}");
        assert_eq!(zero(&out.e_h), !variant.uses_hidden(), "{variant}");
        assert_eq!(out.beta_h.is_none(), !variant.uses_hidden());
        assert_eq!(zero(&out.e_alpha), !variant.uses_alpha(), "{variant}");
        if !variant.uses_prior() {
            assert_eq!(out.e_r.value(), out.e_s.value());
        }
    }
    assert_eq!("wo_alpha_cl".parse::<Variant>().unwrap(), Variant::WoAlphaCl);
    assert!("nope".parse::<Variant>().is_err());
}

#[test]
fn eval_mode_is_permutation_equivariant() {
    let cfg = toy();
    let params = ModelParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 6;
    let x = random3(&mut rng, n, 8, 6);
    let prior = two_industries(n);
    let perm = [3, 0, 5, 1, 4, 2];
    let mut xp = Vec::new();
    let mut pp = Vec::new();
    for &s in &perm {
        xp.extend_from_slice(&x.data()[s * 48..(s + 1) * 48]);
        pp.extend_from_slice(prior.row(s));
    }
    let xp = Tensor::new(vec![n, 8, 6], xp).unwrap();
    let pp = Tensor::matrix(n, 2, pp).unwrap();
    let a = predict(&params, &x, &prior).unwrap();
    let b = predict(&params, &xp, &pp).unwrap();
    for (i, &s) in perm.iter().enumerate() {
        for l in 0..1 {
            assert!((b.at(i, l) - a.at(s, l)).abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = toy();
    let mut params = ModelParams::init(&cfg).unwrap();
    params.get_mut("alpha.b").unwrap().data_mut()[0] = 0.1 + 0.2;
    params.get_mut("head.b").unwrap().data_mut()[0] = -1.234_567_890_123_456_7e-300;
    let back = ModelParams::from_json(&params.to_json().unwrap()).unwrap();
    assert_eq!(params, back);
    for (a, b) in params.iter().zip(back.iter()) {
        for (x, y) in a.1.data().iter().zip(b.1.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    let other = ModelParams::init(&ModelConfig { hidden_dim: 5, ..cfg }).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&other.to_json().unwrap()).unwrap();
    v["config"]["hidden_dim"] = 4.into();
    assert!(ModelParams::from_json(&v.to_string()).is_err());
    assert!(ModelParams::from_json("{}").is_err());
}

#[test]
fn rejects_invalid_configs() {
    for cfg in [
        ModelConfig { hidden_dim: 0, ..toy() },
        ModelConfig { n_factors: 0, ..toy() },
        ModelConfig { horizons: vec![], ..toy() },
        ModelConfig { tau: 0.0, ..toy() },
        ModelConfig { gamma: -1.0, ..toy() },
    ] {
        assert!(ModelParams::init(&cfg).is_err());
    }
}
