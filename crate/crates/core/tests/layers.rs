mod common;

use common::{assert_close, build, int, names, rand_tensor, run};
use composer::config::ConfigValue;
use composer::layers::ops::*;
use composer::layers::{scaled_hidden_dim, scaled_hidden_dim_spec, standard_registry};
use composer::runtime::instantiate;
use composer::tensor::Tensor;

type Mat = Vec<Vec<f64>>;

fn mat(t: &Tensor) -> Mat {
    let c = t.last_dim();
    t.data().chunks(c).map(|r| r.to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().enumerate().map(|(k, v)| v * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn rms_rows(x: &Mat, scale: &[f64], eps: f64) -> Mat {
    x.iter()
        .map(|r| {
            let ms = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
            r.iter().zip(scale).map(|(v, s)| v / (ms + eps).sqrt() * s).collect()
        })
        .collect()
}

fn t(rows: &[&[f64]]) -> Tensor {
    Tensor::matrix(rows).unwrap()
}

#[test]
fn linear_hand_matmul() {
    let y = linear_forward(
        &t(&[&[1.0, 2.0]]),
        &t(&[&[1.0, 0.0], &[0.0, 2.0]]),
        Some(&Tensor::new(vec![2], vec![1.0, 1.0]).unwrap()),
    )
    .unwrap();
    assert_eq!(y.data(), &[2.0, 5.0]);
}

#[test]
fn linear_identity_and_shapes() {
    let reg = standard_registry();
    let cfg = build(&reg, "Linear", &[("input_dim", int(3)), ("output_dim", int(3))]);
    let x = rand_tensor(&[4, 3], 1);
    let (out, _) = run(
        &reg,
        &cfg,
        &[("", "weight", Tensor::identity(3)), ("", "bias", Tensor::zeros(&[3]))],
        vec![x.clone()],
    );
    assert_eq!(out[0], x);

    let cfg = build(&reg, "Linear", &[("input_dim", int(84)), ("output_dim", int(10))]);
    let (out, _) = run(&reg, &cfg, &[], vec![rand_tensor(&[2, 84], 2)]);
    assert_eq!(out[0].shape(), &[2, 10]);
}

#[test]
fn rmsnorm_formula() {
    let y = rmsnorm_forward(&t(&[&[3.0, 4.0]]), &Tensor::ones(&[2]), 0.0).unwrap();
    let rms = 12.5f64.sqrt();
    assert!((y.data()[0] - 3.0 / rms).abs() < 1e-12);
    assert!((y.data()[1] - 4.0 / rms).abs() < 1e-12);
    assert!((y.data()[0] - 0.848528).abs() < 1e-6);
    assert!((y.data()[1] - 1.131371).abs() < 1e-6);

    let c = Tensor::filled(&[3, 5], 2.5);
    let y = rmsnorm_forward(&c, &Tensor::ones(&[5]), 1e-12).unwrap();
    assert!(y.data().iter().all(|v| (v - 1.0).abs() < 1e-9));
    let y = rmsnorm_forward(&rand_tensor(&[3, 5], 3), &Tensor::zeros(&[5]), 1e-6).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
    assert!(rmsnorm_forward(&c, &Tensor::ones(&[4]), 1e-6).is_err());
}

#[test]
fn feed_forward_identity_is_two_linears() {
    let x = rand_tensor(&[3, 4], 4);
    let w = FeedForwardWeights {
        linear1: vec![(Tensor::identity(4), None)],
        linear2: (Tensor::identity(4), None),
    };
    let act = Activation::from_names(&["linear"]).unwrap();
    assert_eq!(feed_forward_forward(&x, &w, act).unwrap(), x);

    let (w1, w2) = (rand_tensor(&[4, 6], 5), rand_tensor(&[6, 4], 6));
    let w = FeedForwardWeights {
        linear1: vec![(w1.clone(), None)],
        linear2: (w2.clone(), None),
    };
    let expected = mm(&mm(&mat(&x), &mat(&w1)), &mat(&w2));
    let got = mat(&feed_forward_forward(&x, &w, act).unwrap());
    for (a, b) in got.iter().flatten().zip(expected.iter().flatten()) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// Solves silu(c) = 1 by Newton's method.
fn silu_inverse_of_one() -> f64 {
    let silu = |v: f64| v / (1.0 + (-v).exp());
    let mut c: f64 = 1.0;
    for _ in 0..60 {
        let s = 1.0 / (1.0 + (-c).exp());
        let grad = s + c * s * (1.0 - s);
        c -= (silu(c) - 1.0) / grad;
    }
    c
}

#[test]
fn gated_feed_forward_reduces_to_linear_path() {
    let c = silu_inverse_of_one();
    let x = rand_tensor(&[5, 3], 7);
    let (w1a, w2) = (rand_tensor(&[3, 4], 8), rand_tensor(&[4, 3], 9));
    let gated = FeedForwardWeights {
        linear1: vec![
            (w1a.clone(), None),
            (Tensor::zeros(&[3, 4]), Some(Tensor::filled(&[4], c))),
        ],
        linear2: (w2.clone(), None),
    };
    let plain = FeedForwardWeights {
        linear1: vec![(w1a, None)],
        linear2: (w2, None),
    };
    let y = feed_forward_forward(&x, &gated, Activation::from_names(&["linear", "nn.silu"]).unwrap())
        .unwrap();
    let oracle =
        feed_forward_forward(&x, &plain, Activation::from_names(&["linear"]).unwrap()).unwrap();
    assert_close(&y, &oracle, 1e-12);
}

#[test]
fn scaled_hidden_dim_through_propagation() {
    assert_eq!(scaled_hidden_dim(12, 8.0 / 3.0), 32);
    let reg = standard_registry();
    let mut cfg = build(&reg, "TransformerLayer", &[("input_dim", int(12))]);
    cfg.set_in_place("self_attention.num_heads", 2i64).unwrap();
    cfg.set_in_place("feed_forward.hidden_dim", scaled_hidden_dim_spec(8.0 / 3.0))
        .unwrap();
    let tree = instantiate(&reg, &cfg).unwrap();
    let ff = tree.child("feed_forward").unwrap();
    assert_eq!(ff.config().int("input_dim"), Some(12));
    assert_eq!(ff.config().int("hidden_dim"), Some(32));
    let params = ff.behavior().params(ff.config()).unwrap();
    assert_eq!(params[0].shape, vec![12, 32]);
    assert_eq!(params[1].shape, vec![32, 12]);
}

#[test]
fn gated_activation_is_stored_as_pair() {
    let reg = standard_registry();
    let cfg = build(
        &reg,
        "FeedForward",
        &[("input_dim", int(4)), ("hidden_dim", int(8)), ("activation", names(&["linear", "nn.silu"]))],
    );
    let tree = instantiate(&reg, &cfg).unwrap();
    let names: Vec<_> = tree.behavior().params(tree.config()).unwrap().into_iter().map(|p| p.name).collect();
    assert_eq!(names, ["linear1_0", "linear1_1", "linear2"]);
    assert_eq!(
        Activation::from_names(&["linear", "nn.silu"]).unwrap(),
        Activation::Gated(ActivationFn::Linear, ActivationFn::Silu)
    );
    assert_eq!(
        ActivationFn::parse("nn.bogus").unwrap_err().code(),
        "E_UNKNOWN_ACTIVATION"
    );
}

#[test]
fn rope_trig_and_isometry() {
    let x = rand_tensor(&[2, 3, 6], 10);
    let positions = [0.0, 1.0, 7.0];
    let y = rope_rotate(&x, &positions, 10000.0).unwrap();
    for b in 0..2 {
        let row = |t: &Tensor, p: usize| t.data()[(b * 3 + p) * 6..(b * 3 + p + 1) * 6].to_vec();
        assert_eq!(row(&x, 0), row(&y, 0));
        for p in 0..3 {
            let (xr, yr) = (row(&x, p), row(&y, p));
            for i in 0..3 {
                let nx = (xr[2 * i].powi(2) + xr[2 * i + 1].powi(2)).sqrt();
                let ny = (yr[2 * i].powi(2) + yr[2 * i + 1].powi(2)).sqrt();
                assert!((nx - ny).abs() <= 1e-12);
            }
        }
    }

    let x = t(&[&[0.3, -1.7], &[0.3, -1.7]]);
    let y = rope_rotate(&x, &[0.0, 1.0], 10000.0).unwrap();
    let (a, b) = (0.3f64, -1.7f64);
    assert!((y.data()[2] - (a * 1f64.cos() - b * 1f64.sin())).abs() <= 1e-12);
    assert!((y.data()[3] - (a * 1f64.sin() + b * 1f64.cos())).abs() <= 1e-12);

    assert_eq!(rope_rotate(&rand_tensor(&[2, 3], 1), &[0.0, 1.0], 1e4).unwrap_err().code(), "E_ODD_DIM");
}

#[test]
fn rope_layer_rejects_odd_dim() {
    let reg = standard_registry();
    let cfg = build(&reg, "RoPE", &[("dim", int(3))]);
    assert_eq!(instantiate(&reg, &cfg).unwrap_err().code(), "E_ODD_DIM");
}

fn softmax_rows(s: &Mat) -> Mat {
    s.iter()
        .map(|r| {
            let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        })
        .collect()
}

/// Single-head attention over one sequence by explicit loops.
fn attention_oracle(x: &Mat, wq: &Mat, wk: &Mat, wv: &Mat, wo: &Mat, causal: bool) -> Mat {
    let (q, k, v) = (mm(x, wq), mm(x, wk), mm(x, wv));
    let d = q[0].len() as f64;
    let scores: Mat = (0..x.len())
        .map(|a| {
            (0..x.len())
                .map(|b| {
                    if causal && b > a {
                        f64::NEG_INFINITY
                    } else {
                        q[a].iter().zip(&k[b]).map(|(p, r)| p * r).sum::<f64>() / d.sqrt()
                    }
                })
                .collect()
        })
        .collect();
    mm(&mm(&softmax_rows(&scores), &v), wo)
}

fn attention_cfg(reg: &composer::runtime::ModuleRegistry, d: i64, heads: i64, causal: bool) -> composer::config::ConfigNode {
    build(
        reg,
        "Attention",
        &[("input_dim", int(d)), ("num_heads", int(heads)), ("causal", ConfigValue::from(causal))],
    )
}

#[test]
fn attention_single_token_identity() {
    let reg = standard_registry();
    let cfg = attention_cfg(&reg, 3, 1, true);
    let id = Tensor::identity(3);
    let x = Tensor::new(vec![1, 1, 3], vec![0.5, -2.0, 1.5]).unwrap();
    let params: Vec<_> = ["q_proj", "k_proj", "v_proj", "o_proj"]
        .iter()
        .map(|n| ("", *n, id.clone()))
        .collect();
    let (out, _) = run(&reg, &cfg, &params, vec![x.clone()]);
    assert_close(&out[0], &x, 1e-15);
}

#[test]
fn attention_two_tokens_matches_oracle() {
    let reg = standard_registry();
    for causal in [false, true] {
        let cfg = attention_cfg(&reg, 2, 1, causal);
        let wq = t(&[&[1.0, 0.5], &[-0.5, 2.0]]);
        let wk = t(&[&[0.3, 0.0], &[1.0, -1.0]]);
        let wv = t(&[&[2.0, 1.0], &[0.0, 1.0]]);
        let wo = t(&[&[1.0, -1.0], &[0.5, 0.25]]);
        let x = t(&[&[1.0, 2.0], &[-0.5, 0.75]]);
        let (out, _) = run(
            &reg,
            &cfg,
            &[("", "q_proj", wq.clone()), ("", "k_proj", wk.clone()), ("", "v_proj", wv.clone()), ("", "o_proj", wo.clone())],
            vec![x.clone().reshape(vec![1, 2, 2]).unwrap()],
        );
        let expected = attention_oracle(&mat(&x), &mat(&wq), &mat(&wk), &mat(&wv), &mat(&wo), causal);
        for (a, b) in out[0].data().iter().zip(expected.iter().flatten()) {
            assert!((a - b).abs() < 1e-12, "causal={causal}: {a} vs {b}");
        }
    }
}

#[test]
fn attention_probability_rows_sum_to_one() {
    let q = rand_tensor(&[2, 3, 5, 4], 11);
    let k = rand_tensor(&[2, 3, 5, 4], 12);
    for causal in [false, true] {
        let p = attention_probs(&q, &k, causal).unwrap();
        for row in p.data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_heads_must_divide_dim() {
    let reg = standard_registry();
    let cfg = attention_cfg(&reg, 6, 4, true);
    assert_eq!(instantiate(&reg, &cfg).unwrap_err().code(), "E_SHAPE");
}

fn random_ffn(d: usize, h: usize, seed: u64) -> FeedForwardWeights {
    FeedForwardWeights {
        linear1: vec![(rand_tensor(&[d, h], seed), None)],
        linear2: (rand_tensor(&[h, d], seed + 1), None),
    }
}

#[test]
fn moe_identical_experts_equal_ffn() {
    let act = Activation::from_names(&["nn.gelu"]).unwrap();
    let expert = random_ffn(4, 6, 20);
    let x = rand_tensor(&[7, 4], 21);
    for e in [2usize, 4, 8] {
        for k in 1..=e.min(3) {
            let router = rand_tensor(&[4, e], 22 + e as u64);
            let experts = vec![expert.clone(); e];
            let (y, _) = moe_forward(&x, &router, &experts, act, k).unwrap();
            assert_close(&y, &feed_forward_forward(&x, &expert, act).unwrap(), 1e-12);
        }
    }
}

#[test]
fn moe_forced_route_uses_expert_zero() {
    let act = Activation::from_names(&["nn.relu"]).unwrap();
    let experts = vec![random_ffn(3, 5, 30), random_ffn(3, 5, 40)];
    // Positive inputs and a router whose first column dominates.
    let x = Tensor::from_fn(&[6, 3], |i| 0.1 + (i % 5) as f64 * 0.2);
    let router = t(&[&[10.0, -10.0], &[10.0, -10.0], &[10.0, -10.0]]);
    let (y, gate) = moe_forward(&x, &router, &experts, act, 1).unwrap();
    assert!(gate.indices.iter().all(|i| i == &vec![0]));
    assert_close(&y, &feed_forward_forward(&x, &experts[0], act).unwrap(), 1e-15);
    assert!(y.max_abs_diff(&feed_forward_forward(&x, &experts[1], act).unwrap()) > 1e-3);
}

#[test]
fn moe_uniform_routing_loss_is_one() {
    for e in [2usize, 4, 8] {
        let gate = moe_gate(&Tensor::zeros(&[10, e]), e).unwrap();
        assert!((gate.load_balance_loss() - 1.0).abs() < 1e-12);
    }
    assert_eq!(moe_gate(&Tensor::zeros(&[2, 3]), 4).unwrap_err().code(), "E_BAD_K");
    assert_eq!(moe_gate(&Tensor::zeros(&[2, 3]), 0).unwrap_err().code(), "E_BAD_K");
}

#[test]
fn moe_layer_emits_load_balance_loss() {
    let reg = standard_registry();
    let cfg = build(
        &reg,
        "MoE",
        &[("input_dim", int(4)), ("hidden_dim", int(8)), ("num_experts", int(4)), ("top_k", int(2))],
    );
    let (out, coll) = run(&reg, &cfg, &[], vec![rand_tensor(&[2, 3, 4], 50)]);
    assert_eq!(out[0].shape(), &[2, 3, 4]);
    assert_eq!(coll.summary_keys(), vec!["load_balance_loss".to_string()]);
    let bad = build(&reg, "MoE", &[("input_dim", int(4)), ("hidden_dim", int(8)), ("num_experts", int(2)), ("top_k", int(3))]);
    assert_eq!(instantiate(&reg, &bad).unwrap_err().code(), "E_BAD_K");
}

fn transformer_cfg(reg: &composer::runtime::ModuleRegistry, d: i64) -> composer::config::ConfigNode {
    let mut cfg = build(reg, "TransformerLayer", &[("input_dim", int(d))]);
    cfg.set_in_place("self_attention.num_heads", 1i64).unwrap();
    cfg.set_in_place("feed_forward.hidden_dim", 3i64).unwrap();
    cfg
}

#[test]
fn transformer_zero_projections_is_identity() {
    let reg = standard_registry();
    let cfg = transformer_cfg(&reg, 4);
    let x = rand_tensor(&[2, 5, 4], 60);
    let (out, _) = run(
        &reg,
        &cfg,
        &[
            ("self_attention", "o_proj", Tensor::zeros(&[4, 4])),
            ("feed_forward", "linear2", Tensor::zeros(&[3, 4])),
        ],
        vec![x.clone()],
    );
    assert_eq!(out[0], x);
    let (out, _) = run(&reg, &cfg, &[], vec![x.clone()]);
    assert_eq!(out[0].shape(), x.shape());
}

#[test]
fn transformer_step_by_step_oracle() {
    let reg = standard_registry();
    let cfg = transformer_cfg(&reg, 2);
    let eps = cfg.float("norm_eps").unwrap();
    let s1 = [1.0, 0.5];
    let s2 = [0.75, 1.25];
    let wq = t(&[&[0.2, -0.1], &[0.4, 0.3]]);
    let wk = t(&[&[-0.3, 0.5], &[0.1, 0.2]]);
    let wv = t(&[&[0.6, 0.0], &[-0.2, 0.9]]);
    let wo = t(&[&[0.5, 0.1], &[0.0, -0.4]]);
    let w1 = t(&[&[0.3, -0.6, 0.2], &[0.7, 0.1, -0.5]]);
    let w2 = t(&[&[0.2, 0.4], &[-0.3, 0.1], &[0.5, -0.2]]);
    let x = t(&[&[1.0, -2.0], &[0.5, 0.25], &[-1.5, 0.75]]);
    let (out, _) = run(
        &reg,
        &cfg,
        &[
            ("", "attention_norm_scale", Tensor::new(vec![2], s1.to_vec()).unwrap()),
            ("", "feed_forward_norm_scale", Tensor::new(vec![2], s2.to_vec()).unwrap()),
            ("self_attention", "q_proj", wq.clone()),
            ("self_attention", "k_proj", wk.clone()),
            ("self_attention", "v_proj", wv.clone()),
            ("self_attention", "o_proj", wo.clone()),
            ("feed_forward", "linear1_0", w1.clone()),
            ("feed_forward", "linear2", w2.clone()),
        ],
        vec![x.clone().reshape(vec![1, 3, 2]).unwrap()],
    );

    let xm = mat(&x);
    let attn = attention_oracle(&rms_rows(&xm, &s1, eps), &mat(&wq), &mat(&wk), &mat(&wv), &mat(&wo), true);
    let h: Mat = xm.iter().zip(&attn).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
    let hidden: Mat = mm(&rms_rows(&h, &s2, eps), &mat(&w1))
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    let ffn = mm(&hidden, &mat(&w2));
    let expected: Vec<f64> = h
        .iter()
        .zip(&ffn)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect::<Vec<_>>())
        .collect();
    for (a, b) in out[0].data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn cross_entropy_matches_log_softmax() {
    let logits = t(&[&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]]);
    let ce = cross_entropy(&logits, &[2, 0]).unwrap();
    let l0 = -(3f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp())).ln();
    let l1 = 3f64.ln();
    assert!((ce - (l0 + l1) / 2.0).abs() < 1e-12);
    assert!(cross_entropy(&logits, &[3, 0]).is_err());
}

#[test]
fn activation_values() {
    assert_eq!(ActivationFn::Relu.apply(-2.0), 0.0);
    assert!((ActivationFn::Silu.apply(1.0) - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-15);
    assert!((ActivationFn::Gelu.apply(0.0)).abs() < 1e-15);
    assert!((ActivationFn::Tanh.apply(0.5) - 0.5f64.tanh()).abs() < 1e-15);
}

#[test]
fn head_split_round_trip() {
    let x = rand_tensor(&[2, 3, 8], 70);
    let s = split_heads(&x, 4).unwrap();
    assert_eq!(s.shape(), &[2, 4, 3, 2]);
    assert_eq!(merge_heads(&s).unwrap(), x);
    assert!(split_heads(&x, 3).is_err());
}
