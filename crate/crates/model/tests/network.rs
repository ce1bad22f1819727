use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repsense_core::{AxisScaler, Exercise, MetricKind, SignalMatrix};
use repsense_model::checkpoint::round_to_f32;
use repsense_model::network::param_shapes;
use repsense_model::{argmax, slide, Checkpoint, Graph, Model, ModelConfig, ModelError, Tensor, WindowTensor};

fn signal(len: usize, seed: u64) -> SignalMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SignalMatrix::from_rows(&std::array::from_fn(|_| (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect())).unwrap()
}

fn windows(cfg: &ModelConfig, len: usize, seed: u64) -> WindowTensor {
    slide(&signal(len, seed), cfg).unwrap()
}

fn set(model: &mut Model, name: &str, data: Vec<f64>) {
    let t = model.params.get_mut(name).unwrap();
    assert_eq!(t.len(), data.len(), "{name}");
    t.data = data;
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn lstm_matches_single_step_oracle() {
    // n = (10 − 6)/2 + 1 = 3 steps, d = 4
    let cfg = ModelConfig {
        l_max: 10,
        d_model: 4,
        heads: 2,
        lstm_layers: 1,
        ..ModelConfig::tiny()
    };
    assert_eq!(cfg.windows(), 3);
    let model = Model::new(cfg, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut g = Graph::eval();
    let xv = g.constant(Tensor::from_vec(3, 4, x.clone()));
    let out = model.temporal(&mut g, xv, 1);
    let got = g.value(out).clone();

    let p = |n: &str| model.params.get(&format!("temporal.l0.{n}")).unwrap().clone();
    // row-vector product v·M
    let vm = |v: &[f64], m: &Tensor| -> Vec<f64> { (0..m.cols).map(|j| (0..m.rows).map(|i| v[i] * m.get(i, j)).sum()).collect() };
    let mut h = vec![0.0; 4];
    let mut c = vec![0.0; 4];
    for t in 0..3 {
        let xt = &x[t * 4..(t + 1) * 4];
        let gate = |name: &str| -> Vec<f64> {
            let (w, u, b) = (p(&format!("W_{name}")), p(&format!("U_{name}")), p(&format!("b_{name}")));
            let (xw, hu) = (vm(xt, &w), vm(&h, &u));
            (0..4).map(|j| xw[j] + hu[j] + b.data[j]).collect()
        };
        let f: Vec<f64> = gate("f").into_iter().map(sigmoid).collect();
        let i: Vec<f64> = gate("i").into_iter().map(sigmoid).collect();
        let o: Vec<f64> = gate("o").into_iter().map(sigmoid).collect();
        let cand: Vec<f64> = gate("c").into_iter().map(f64::tanh).collect();
        for j in 0..4 {
            c[j] = f[j] * c[j] + i[j] * cand[j];
            h[j] = o[j] * c[j].tanh();
        }
        for j in 0..4 {
            assert!((got.get(t, j) - h[j]).abs() < 1e-12, "step {t} unit {j}");
        }
    }
}

#[test]
fn zero_lstm_weights_keep_hidden_state_zero() {
    let cfg = ModelConfig::tiny();
    let mut model = Model::new(cfg.clone(), 3).unwrap();
    for name in model.params.names().to_vec() {
        if name.starts_with("temporal.") {
            let t = model.params.get_mut(&name).unwrap();
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut g = Graph::eval();
    let x = g.constant(Tensor::from_vec(cfg.windows(), cfg.d_model, vec![0.7; cfg.windows() * cfg.d_model]));
    let out = model.temporal(&mut g, x, 1);
    assert!(g.value(out).data.iter().all(|&v| v == 0.0));
}

fn scalar_attention_model(n_windows: usize) -> Model {
    let cfg = ModelConfig {
        l_max: 6 + 2 * (n_windows - 1),
        d_model: 1,
        heads: 1,
        ..ModelConfig::tiny()
    };
    assert_eq!(cfg.windows(), n_windows);
    let mut model = Model::new(cfg, 0).unwrap();
    for w in ["W_q", "W_k", "W_v", "W_o"] {
        set(&mut model, &format!("attention.{w}"), vec![1.0]);
    }
    model
}

#[test]
fn two_token_attention_matches_hand_softmax() {
    let model = scalar_attention_model(2);
    let (x1, x2) = (0.8, -0.3);
    let mut g = Graph::eval();
    let h = g.constant(Tensor::from_vec(2, 1, vec![x1, x2]));
    let (out, weights) = model.attend(&mut g, h);
    for (i, xi) in [x1, x2].into_iter().enumerate() {
        let (e1, e2) = ((xi * x1).exp(), (xi * x2).exp());
        let expected = (e1 * x1 + e2 * x2) / (e1 + e2);
        assert!((g.value(out).data[i] - expected).abs() < 1e-12);
        assert!((g.value(weights).get(i, 0) - e1 / (e1 + e2)).abs() < 1e-12);
    }
}

#[test]
fn single_token_attention_passes_value_through() {
    let cfg = ModelConfig {
        l_max: 6,
        ..ModelConfig::tiny()
    };
    assert_eq!(cfg.windows(), 1);
    let model = Model::new(cfg.clone(), 4).unwrap();
    let row: Vec<f64> = (0..cfg.d_model).map(|i| i as f64 * 0.3 - 1.0).collect();
    let mut g = Graph::eval();
    let h = g.constant(Tensor::from_vec(1, cfg.d_model, row.clone()));
    let (out, weights) = model.attend(&mut g, h);
    assert!(g.value(weights).data.iter().all(|&w| w == 1.0));
    let wv = model.params.get("attention.W_v").unwrap();
    let wo = model.params.get("attention.W_o").unwrap();
    let expected = Tensor::from_vec(1, cfg.d_model, row).matmul(wv).matmul(wo);
    for (a, b) in g.value(out).data.iter().zip(&expected.data) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn attention_rows_are_distributions() {
    let cfg = ModelConfig::tiny();
    let model = Model::new(cfg.clone(), 8).unwrap();
    let out = model.encode(&windows(&cfg, 11, 2)).unwrap();
    let att = out.attention.unwrap();
    assert_eq!(att.shape(), [cfg.heads * cfg.windows(), cfg.windows()]);
    for r in 0..att.rows {
        let row = att.row(r);
        assert!(row.iter().all(|&w| w >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn zero_window_with_zero_biases_encodes_to_zero() {
    let cfg = ModelConfig::tiny();
    let mut model = Model::new(cfg.clone(), 1).unwrap();
    for name in model.params.names().to_vec() {
        if name.starts_with("spatial.") && name.ends_with(".bias") {
            let t = model.params.get_mut(&name).unwrap();
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut g = Graph::eval();
    let x = g.constant(Tensor::zeros(cfg.windows() * cfg.k, 6));
    let h = model.spatial(&mut g, x, cfg.windows());
    assert_eq!(g.value(h).shape(), [cfg.windows(), cfg.d_model]);
    assert!(g.value(h).data.iter().all(|&v| v == 0.0));
}

#[test]
fn flat_projection_is_linear_without_convs() {
    let cfg = ModelConfig {
        use_spatial: false,
        ..ModelConfig::tiny()
    };
    let mut model = Model::new(cfg.clone(), 1).unwrap();
    set(&mut model, "spatial.proj.bias", vec![0.0; cfg.d_model]);
    let w = windows(&cfg, 12, 3);
    let run = |scale: f64| {
        let mut g = Graph::eval();
        let data: Vec<f64> = w.data.iter().map(|v| v * scale).collect();
        let x = g.constant(Tensor::from_vec(cfg.windows() * cfg.k, 6, data));
        let h = model.spatial(&mut g, x, cfg.windows());
        g.value(h).clone()
    };
    let (one, two) = (run(1.0), run(2.0));
    for (a, b) in one.data.iter().zip(&two.data) {
        assert!((2.0 * a - b).abs() < 1e-12);
    }
}

#[test]
fn encoder_shapes_at_default_config() {
    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), 0).unwrap();
    let out = model.encode(&windows(&cfg, 100, 1)).unwrap();
    assert_eq!(out.a.shape(), [31, 256]);
    assert_eq!(out.pooled.len(), 7936);
}

#[test]
fn siamese_contracts() {
    let cfg = ModelConfig::tiny();
    let model = Model::new(cfg.clone(), 21).unwrap();
    let a = windows(&cfg, 12, 5);
    let b = windows(&cfg, 8, 6);
    let saa = model.similarity(&a, &a).unwrap();
    assert!((saa - 1.0).abs() < 1e-6);
    let (sab, sba) = (model.similarity(&a, &b).unwrap(), model.similarity(&b, &a).unwrap());
    assert_eq!(sab.to_bits(), sba.to_bits());
    assert!((-1.0..=1.0).contains(&sab));
    assert_eq!(model.encode(&a).unwrap(), model.encode(&a).unwrap());
}

#[test]
fn front_padding_is_invisible_to_the_encoder() {
    let cfg = ModelConfig::tiny();
    let model = Model::new(cfg.clone(), 2).unwrap();
    let sig = signal(7, 3);
    let mut rows: [Vec<f64>; 6] = std::array::from_fn(|c| sig.row(c).to_vec());
    for r in &mut rows {
        r.splice(0..0, [0.0; 3]);
    }
    let padded = SignalMatrix::from_rows(&rows).unwrap();
    let e1 = model.encode(&slide(&sig, &cfg).unwrap()).unwrap();
    let e2 = model.encode(&slide(&padded, &cfg).unwrap()).unwrap();
    assert_eq!(e1.pooled, e2.pooled);
}

#[test]
fn classifier_outputs_a_distribution() {
    for (exercise, expected) in [(Exercise::ShoulderAbduction, 5), (Exercise::ForwardFlexion, 5), (Exercise::ExternalRotation, 3)] {
        let cfg = ModelConfig {
            num_classes: exercise.num_rom_classes(),
            ..ModelConfig::tiny()
        };
        let model = Model::new(cfg.clone(), 9).unwrap();
        let probs = model.classify(&windows(&cfg, 12, 1)).unwrap();
        assert_eq!(probs.len(), expected);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(probs.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn logit_shift_keeps_argmax() {
    let cfg = ModelConfig::tiny();
    let mut model = Model::new(cfg.clone(), 9).unwrap();
    let w = windows(&cfg, 12, 1);
    let before = model.classify(&w).unwrap();
    let bias = model.params.get_mut("classifier.fc2.bias").unwrap();
    bias.data.iter_mut().for_each(|v| *v += 3.5);
    let after = model.classify(&w).unwrap();
    assert_eq!(argmax(&before), argmax(&after));
    for (p, q) in before.iter().zip(&after) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn weight_sharing_is_observable_through_both_branches() {
    let cfg = ModelConfig::tiny();
    let mut model = Model::new(cfg.clone(), 4).unwrap();
    let (a, b) = (windows(&cfg, 12, 1), windows(&cfg, 12, 2));
    let before = model.similarity(&a, &b).unwrap();
    let ea = model.encode(&a).unwrap();
    model.params.get_mut("attention.W_o").unwrap().data[0] += 0.5;
    assert_ne!(model.encode(&a).unwrap(), ea);
    assert_ne!(model.similarity(&a, &b).unwrap(), before);
    let mut g = Graph::eval();
    let refs = [&a, &b];
    model.encode_graph(&mut g, &refs).unwrap();
    let leaf = model.params.index_of("attention.W_o").unwrap();
    assert!(g.param_var(leaf).is_some());
}

#[test]
fn parameter_layout_is_deterministic() {
    let cfg = ModelConfig::tiny();
    let m1 = Model::new(cfg.clone(), 3).unwrap();
    let m2 = Model::new(cfg.clone(), 3).unwrap();
    assert_eq!(m1, m2);
    assert_ne!(m1, Model::new(cfg.clone(), 4).unwrap());
    let expected: usize = param_shapes(&cfg).iter().map(|(_, [r, c])| r * c).sum();
    assert_eq!(m1.num_params(), expected);
    assert!(m1.params.names().iter().any(|n| n == "temporal.l0.U_f"));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = ModelConfig::tiny();
    let mut model = Model::new(cfg.clone(), 12).unwrap();
    round_to_f32(&mut model.params);
    let ckpt = Checkpoint {
        model,
        scaler: AxisScaler::identity(),
        exercise: Some(Exercise::ShoulderAbduction),
        metric: Some(MetricKind::Rom),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    for (name, t) in ckpt.model.params.iter() {
        let l = loaded.model.params.get(name).unwrap();
        assert!(t.data.iter().zip(&l.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    assert_eq!(loaded.to_bytes().unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn checkpoint_rejects_mismatches() {
    let cfg = ModelConfig::tiny();
    let ckpt = Checkpoint {
        model: Model::new(cfg.clone(), 1).unwrap(),
        scaler: AxisScaler::identity(),
        exercise: None,
        metric: None,
    };
    let bytes = ckpt.to_bytes().unwrap();
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let header = std::str::from_utf8(&bytes[8..8 + header_len]).unwrap();

    let rewrite = |new_header: String| {
        let mut out = (new_header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(new_header.as_bytes());
        out.extend_from_slice(&bytes[8 + header_len..]);
        out
    };
    let bumped = rewrite(header.replacen("\"version\":1", "\"version\":2", 1));
    assert!(matches!(Checkpoint::from_bytes(&bumped), Err(ModelError::Version { found: 2, expected: 1 })));

    let wider = rewrite(header.replacen("\"d_model\":8", "\"d_model\":16", 1));
    assert!(matches!(Checkpoint::from_bytes(&wider), Err(ModelError::Shape { .. })));

    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..4]).is_err());
}
