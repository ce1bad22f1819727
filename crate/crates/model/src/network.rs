//! The Siamese encoder and its two heads.
//!
//! A segment is cut into `n` windows; each window goes through a small
//! conv stack (spatial encoder), the window sequence through a stacked LSTM
//! (temporal encoder) and then multi-head self-attention. The row-flattened
//! attention output is the segment embedding: cosine between embeddings is
//! the similarity head, an MLP over it the classification head.
//!
//! Parameter layout (row-vector convention, `y = x·W + b`):
//!
//! | name | shape |
//! |---|---|
//! | `spatial.conv{i}.weight` | `(kernel·c_in) × c_out` |
//! | `spatial.proj.weight` | `(len·c_last) × d` or `(k·6) × d` without convs |
//! | `temporal.l{l}.W_{f,i,o,c}`, `U_*` | `d × d` |
//! | `temporal.l{l}.b_*` | `1 × d` |
//! | `attention.W_{q,k,v}` | `d × d`, head `h` in columns `h·d_k..(h+1)·d_k` |
//! | `attention.W_o` | `d × d` |
//! | `classifier.fc1.weight` | `(n·d) × hidden` |
//! | `classifier.fc2.weight` | `hidden × classes` |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repsense_core::CHANNELS;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::graph::{cosine_from, softmax_row, Graph, Var};
use crate::params::{uniform, ParamStore};
use crate::tensor::Tensor;
use crate::window::{batch_windows, WindowTensor};

pub const GATES: [&str; 4] = ["f", "i", "o", "c"];

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// n × d_model attention output.
    pub a: Tensor,
    /// Row-flattened `a`.
    pub pooled: Vec<f64>,
    /// (H·n) × n attention weights, when attention is enabled.
    pub attention: Option<Tensor>,
}

/// Graph handles for an encoded batch.
#[derive(Debug, Clone, Copy)]
pub struct EncodedBatch {
    /// (B·n) × d.
    pub a: Var,
    /// B × (n·d).
    pub pooled: Var,
    pub attention: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

/// Parameter names and shapes implied by `cfg`, in storage order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, [usize; 2])> {
    let d = cfg.d_model;
    let mut out = Vec::new();
    if cfg.use_spatial {
        let mut cin = CHANNELS;
        for (i, layer) in cfg.conv.iter().enumerate() {
            out.push((format!("spatial.conv{i}.weight"), [layer.kernel * cin, layer.channels]));
            out.push((format!("spatial.conv{i}.bias"), [1, layer.channels]));
            cin = layer.channels;
        }
        out.push(("spatial.proj.weight".into(), [cfg.conv_out_len() * cin, d]));
    } else {
        out.push(("spatial.proj.weight".into(), [cfg.k * CHANNELS, d]));
    }
    out.push(("spatial.proj.bias".into(), [1, d]));
    if cfg.use_temporal {
        for l in 0..cfg.lstm_layers {
            for gate in GATES {
                out.push((format!("temporal.l{l}.W_{gate}"), [d, d]));
                out.push((format!("temporal.l{l}.U_{gate}"), [d, d]));
                out.push((format!("temporal.l{l}.b_{gate}"), [1, d]));
            }
        }
    }
    if cfg.use_attention {
        for p in ["W_q", "W_k", "W_v", "W_o"] {
            out.push((format!("attention.{p}"), [d, d]));
        }
    }
    out.push(("classifier.fc1.weight".into(), [cfg.windows() * d, cfg.classifier_hidden]));
    out.push(("classifier.fc1.bias".into(), [1, cfg.classifier_hidden]));
    out.push(("classifier.fc2.weight".into(), [cfg.classifier_hidden, cfg.num_classes]));
    out.push(("classifier.fc2.bias".into(), [1, cfg.num_classes]));
    out
}

fn init_bound(name: &str, shape: [usize; 2], cfg: &ModelConfig) -> f64 {
    if name.starts_with("attention.W_") && !name.ends_with("W_o") {
        (6.0 / (2 * shape[1]) as f64).sqrt()
    } else if name.starts_with("temporal.") {
        1.0 / (cfg.d_model as f64).sqrt()
    } else {
        // fan-in of the matching weight for both weights and biases
        let fan_in = if name.ends_with(".bias") {
            param_shapes(cfg)
                .iter()
                .find(|(n, _)| *n == name.replace(".bias", ".weight"))
                .map(|(_, s)| s[0])
                .unwrap_or(1)
        } else {
            shape[0]
        };
        1.0 / (fan_in as f64).sqrt()
    }
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        for (name, [r, c]) in param_shapes(&cfg) {
            let bound = init_bound(&name, [r, c], &cfg);
            params.insert(name, uniform(r, c, bound, &mut rng));
        }
        Ok(Self { cfg, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let expected = param_shapes(&cfg);
        if expected.len() != params.len() {
            return Err(ModelError::Checkpoint(format!(
                "config implies {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let t = params.get(name).ok_or_else(|| ModelError::Checkpoint(format!("missing parameter {name}")))?;
            if t.shape() != *shape {
                return Err(ModelError::Shape {
                    name: name.clone(),
                    expected: shape.to_vec(),
                    found: t.shape().to_vec(),
                });
            }
        }
        params.check_finite()?;
        Ok(Self { cfg, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Spatial encoder: `(B·n·k) × 6` window samples → `(B·n) × d`.
    pub fn spatial(&self, g: &mut Graph, x: Var, windows: usize) -> Var {
        let cfg = &self.cfg;
        let p = &self.params;
        let flat = if cfg.use_spatial {
            let mut h = x;
            let mut len = cfg.k;
            let mut channels = CHANNELS;
            for (i, layer) in cfg.conv.iter().enumerate() {
                let w = g.param(p, &format!("spatial.conv{i}.weight"));
                let b = g.param(p, &format!("spatial.conv{i}.bias"));
                h = g.conv1d(h, w, b, len, layer.kernel);
                h = g.relu(h);
                h = g.dropout(h, cfg.dropout);
                h = g.maxpool2(h, len);
                len /= 2;
                channels = layer.channels;
            }
            g.reshape(h, windows, len * channels)
        } else {
            g.reshape(x, windows, cfg.k * CHANNELS)
        };
        let w = g.param(p, "spatial.proj.weight");
        let b = g.param(p, "spatial.proj.bias");
        g.linear(flat, w, b)
    }

    /// Stacked LSTM over each sequence of `n` rows; returns every hidden
    /// state in the same `(B·n) × d` layout.
    pub fn temporal(&self, g: &mut Graph, x: Var, batch: usize) -> Var {
        let n = self.cfg.windows();
        let p = &self.params;
        let mut input = x;
        for l in 0..self.cfg.lstm_layers {
            let mut pre = Vec::with_capacity(4);
            let mut u = Vec::with_capacity(4);
            for gate in GATES {
                let w = g.param(p, &format!("temporal.l{l}.W_{gate}"));
                let b = g.param(p, &format!("temporal.l{l}.b_{gate}"));
                pre.push(g.linear(input, w, b));
                u.push(g.param(p, &format!("temporal.l{l}.U_{gate}")));
            }
            let mut h: Option<Var> = None;
            let mut c: Option<Var> = None;
            let mut outputs = Vec::with_capacity(n);
            for t in 0..n {
                let rows: Vec<usize> = (0..batch).map(|b| b * n + t).collect();
                let mut z = [pre[0]; 4];
                for k in 0..4 {
                    let xt = g.gather_rows(pre[k], rows.clone());
                    z[k] = match h {
                        Some(h) => {
                            let hu = g.matmul(h, u[k]);
                            g.add(xt, hu)
                        }
                        None => xt,
                    };
                }
                let f = g.sigmoid(z[0]);
                let i = g.sigmoid(z[1]);
                let o = g.sigmoid(z[2]);
                let cand = g.tanh(z[3]);
                let ic = g.mul(i, cand);
                // c_0 = 0, so the first step has no forget term
                let c_new = match c {
                    Some(c) => {
                        let fc = g.mul(f, c);
                        g.add(fc, ic)
                    }
                    None => ic,
                };
                let squashed = g.tanh(c_new);
                let h_new = g.mul(o, squashed);
                outputs.push(h_new);
                h = Some(h_new);
                c = Some(c_new);
            }
            input = g.interleave_rows(outputs);
            if l + 1 < self.cfg.lstm_layers {
                input = g.dropout(input, self.cfg.dropout);
            }
        }
        input
    }

    /// Multi-head self-attention; returns the output and the weights.
    pub fn attend(&self, g: &mut Graph, h: Var) -> (Var, Var) {
        let p = &self.params;
        let (heads, n) = (self.cfg.heads, self.cfg.windows());
        let wq = g.param(p, "attention.W_q");
        let wk = g.param(p, "attention.W_k");
        let wv = g.param(p, "attention.W_v");
        let wo = g.param(p, "attention.W_o");
        let q = g.matmul(h, wq);
        let k = g.matmul(h, wk);
        let v = g.matmul(h, wv);
        let scores = g.attn_scores(q, k, heads, n);
        let weights = g.softmax_rows(scores);
        let ctx = g.attn_apply(weights, v, heads, n);
        (g.matmul(ctx, wo), weights)
    }

    pub fn encode_graph(&self, g: &mut Graph, batch: &[&WindowTensor]) -> Result<EncodedBatch> {
        let cfg = &self.cfg;
        let n = cfg.windows();
        for w in batch {
            if w.n != n || w.k != cfg.k {
                return Err(ModelError::Shape {
                    name: "window tensor".into(),
                    expected: vec![n, cfg.k, CHANNELS],
                    found: vec![w.n, w.k, CHANNELS],
                });
            }
        }
        let b = batch.len();
        let x = g.constant(batch_windows(batch));
        let mut h = self.spatial(g, x, b * n);
        if cfg.use_temporal {
            h = self.temporal(g, h, b);
        }
        let mut attention = None;
        if cfg.use_attention {
            let (out, weights) = self.attend(g, h);
            h = out;
            attention = Some(weights);
        }
        let pooled = g.reshape(h, b, n * cfg.d_model);
        Ok(EncodedBatch { a: h, pooled, attention })
    }

    /// Classification logits from pooled embeddings (B × n·d → B × classes).
    pub fn logits_graph(&self, g: &mut Graph, pooled: Var) -> Var {
        let p = &self.params;
        let w1 = g.param(p, "classifier.fc1.weight");
        let b1 = g.param(p, "classifier.fc1.bias");
        let w2 = g.param(p, "classifier.fc2.weight");
        let b2 = g.param(p, "classifier.fc2.bias");
        let h = g.linear(pooled, w1, b1);
        let h = g.relu(h);
        g.linear(h, w2, b2)
    }

    pub fn encode(&self, windows: &WindowTensor) -> Result<EncoderOutput> {
        let mut g = Graph::eval();
        let enc = self.encode_graph(&mut g, &[windows])?;
        let a = g.value(enc.a).clone();
        if !a.is_finite() {
            return Err(ModelError::NonFinite("encoder output".into()));
        }
        Ok(EncoderOutput {
            pooled: a.data.clone(),
            a,
            attention: enc.attention.map(|v| g.value(v).clone()),
        })
    }

    /// Pooled embeddings of many segments, encoded in chunks.
    pub fn embed_all(&self, windows: &[&WindowTensor], chunk: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(windows.len());
        for part in windows.chunks(chunk.max(1)) {
            let mut g = Graph::eval();
            let enc = self.encode_graph(&mut g, part)?;
            let pooled = g.value(enc.pooled);
            if !pooled.is_finite() {
                return Err(ModelError::NonFinite("encoder output".into()));
            }
            out.extend((0..pooled.rows).map(|r| pooled.row(r).to_vec()));
        }
        Ok(out)
    }

    pub fn similarity(&self, a: &WindowTensor, b: &WindowTensor) -> Result<f64> {
        let ea = self.encode(a)?;
        let eb = self.encode(b)?;
        Ok(cosine(&ea.pooled, &eb.pooled))
    }

    pub fn classify(&self, windows: &WindowTensor) -> Result<Vec<f64>> {
        let emb = self.encode(windows)?;
        Ok(self.classify_embedding(&emb.pooled))
    }

    pub fn classify_embedding(&self, pooled: &[f64]) -> Vec<f64> {
        let mut g = Graph::eval();
        let x = g.constant(Tensor::from_vec(1, pooled.len(), pooled.to_vec()));
        let logits = self.logits_graph(&mut g, x);
        let row = g.value(logits).row(0);
        let mut probs = vec![0.0; row.len()];
        softmax_row(row, &mut probs);
        probs
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    cosine_from(a, b, na, nb)
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}
