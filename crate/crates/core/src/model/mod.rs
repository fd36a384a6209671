//! DistilBERT-shaped encoder with a span-prediction head, inference only.
//!
//! Token and position embeddings (no token-type embeddings) are summed and
//! layer-normed, then passed through `n_layers` post-norm transformer blocks
//! (masked multi-head self-attention, exact-GELU feed-forward). A linear head
//! maps each final hidden state to a start and an end logit.
//!
//! Projection matrices are stored `[in, out]`, so a layer computes `x · W + b`.
//!
//! Tensor names:
//!
//! | name | shape |
//! |------|-------|
//! | `embed.token` | `[vocab_size, hidden]` |
//! | `embed.position` | `[max_positions, hidden]` |
//! | `embed.norm.weight`, `embed.norm.bias` | `[hidden]` |
//! | `layer.{i}.attn.{q,k,v,out}.weight` | `[hidden, hidden]` |
//! | `layer.{i}.attn.{q,k,v,out}.bias` | `[hidden]` |
//! | `layer.{i}.attn.norm.{weight,bias}` | `[hidden]` |
//! | `layer.{i}.ffn.in.weight` | `[hidden, intermediate]` |
//! | `layer.{i}.ffn.in.bias` | `[intermediate]` |
//! | `layer.{i}.ffn.out.weight` | `[intermediate, hidden]` |
//! | `layer.{i}.ffn.out.bias` | `[hidden]` |
//! | `layer.{i}.ffn.norm.{weight,bias}` | `[hidden]` |
//! | `qa.weight` | `[hidden, 2]` |
//! | `qa.bias` | `[2]` |

pub mod ops;
pub mod qaw;

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wordpiece::Encoding;
use ops::{attention_with_probs, gelu, layer_norm_in_place};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden: usize,
    pub intermediate: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub layer_norm_eps: f32,
}

impl ModelConfig {
    /// The uncased DistilBERT shape: 6 layers, 12 heads, hidden 768.
    pub fn distilbert_base() -> Self {
        ModelConfig {
            n_layers: 6,
            n_heads: 12,
            hidden: 768,
            intermediate: 3072,
            vocab_size: 30522,
            max_positions: 512,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("hidden", self.hidden),
            ("intermediate", self.intermediate),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if !self.hidden.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "hidden {} is not divisible by n_heads {}",
                self.hidden, self.n_heads
            )));
        }
        if !(self.layer_norm_eps.is_finite() && self.layer_norm_eps >= 0.0) {
            return Err(Error::Config("layer_norm_eps must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.n_heads
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let cfg: ModelConfig = serde_json::from_slice(&bytes).map_err(|e| Error::from_json(&e, &bytes))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every tensor name with its shape, in canonical file order.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.hidden;
        let mut specs = vec![
            ("embed.token".to_owned(), vec![self.vocab_size, h]),
            ("embed.position".to_owned(), vec![self.max_positions, h]),
            ("embed.norm.weight".to_owned(), vec![h]),
            ("embed.norm.bias".to_owned(), vec![h]),
        ];
        for i in 0..self.n_layers {
            let p = format!("layer.{i}");
            for proj in ["q", "k", "v", "out"] {
                specs.push((format!("{p}.attn.{proj}.weight"), vec![h, h]));
                specs.push((format!("{p}.attn.{proj}.bias"), vec![h]));
            }
            specs.push((format!("{p}.attn.norm.weight"), vec![h]));
            specs.push((format!("{p}.attn.norm.bias"), vec![h]));
            specs.push((format!("{p}.ffn.in.weight"), vec![h, self.intermediate]));
            specs.push((format!("{p}.ffn.in.bias"), vec![self.intermediate]));
            specs.push((format!("{p}.ffn.out.weight"), vec![self.intermediate, h]));
            specs.push((format!("{p}.ffn.out.bias"), vec![h]));
            specs.push((format!("{p}.ffn.norm.weight"), vec![h]));
            specs.push((format!("{p}.ffn.norm.bias"), vec![h]));
        }
        specs.push(("qa.weight".to_owned(), vec![h, 2]));
        specs.push(("qa.bias".to_owned(), vec![2]));
        specs
    }

    pub fn tensor_count(&self) -> usize {
        4 + 16 * self.n_layers + 2
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_specs()
            .iter()
            .map(|(_, dims)| dims.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub q_weight: Array2<f32>,
    pub q_bias: Array1<f32>,
    pub k_weight: Array2<f32>,
    pub k_bias: Array1<f32>,
    pub v_weight: Array2<f32>,
    pub v_bias: Array1<f32>,
    pub out_weight: Array2<f32>,
    pub out_bias: Array1<f32>,
    pub attn_norm_weight: Array1<f32>,
    pub attn_norm_bias: Array1<f32>,
    pub ffn_in_weight: Array2<f32>,
    pub ffn_in_bias: Array1<f32>,
    pub ffn_out_weight: Array2<f32>,
    pub ffn_out_bias: Array1<f32>,
    pub ffn_norm_weight: Array1<f32>,
    pub ffn_norm_bias: Array1<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub token_embedding: Array2<f32>,
    pub position_embedding: Array2<f32>,
    pub embed_norm_weight: Array1<f32>,
    pub embed_norm_bias: Array1<f32>,
    pub layers: Vec<LayerWeights>,
    pub qa_weight: Array2<f32>,
    pub qa_bias: Array1<f32>,
}

struct TensorTable {
    tensors: HashMap<String, (Vec<usize>, Vec<f32>)>,
}

impl TensorTable {
    fn matrix(&mut self, name: &str) -> Array2<f32> {
        let (dims, data) = self.tensors.remove(name).expect("validated before extraction");
        Array2::from_shape_vec((dims[0], dims[1]), data).expect("validated shape")
    }

    fn vector(&mut self, name: &str) -> Array1<f32> {
        let (_, data) = self.tensors.remove(name).expect("validated before extraction");
        Array1::from_vec(data)
    }
}

impl ModelWeights {
    /// Build weights from named tensors, checking every name and shape against `config`.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<qaw::RawTensor>) -> Result<Self> {
        config.validate()?;
        let specs: HashMap<String, Vec<usize>> = config.tensor_specs().into_iter().collect();
        let mut table = HashMap::with_capacity(tensors.len());
        for t in tensors {
            let Some(expected) = specs.get(&t.name) else {
                return Err(Error::UnexpectedTensor { name: t.name });
            };
            if *expected != t.dims {
                return Err(Error::ShapeMismatch {
                    name: t.name,
                    expected: expected.clone(),
                    found: t.dims,
                });
            }
            if let Some(index) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { name: t.name, index });
            }
            if table.insert(t.name.clone(), (t.dims, t.data)).is_some() {
                return Err(Error::UnexpectedTensor {
                    name: format!("{} (duplicate)", t.name),
                });
            }
        }
        for (name, _) in config.tensor_specs() {
            if !table.contains_key(&name) {
                return Err(Error::MissingTensor { name });
            }
        }

        let mut t = TensorTable { tensors: table };
        let layers = (0..config.n_layers)
            .map(|i| {
                let p = format!("layer.{i}");
                LayerWeights {
                    q_weight: t.matrix(&format!("{p}.attn.q.weight")),
                    q_bias: t.vector(&format!("{p}.attn.q.bias")),
                    k_weight: t.matrix(&format!("{p}.attn.k.weight")),
                    k_bias: t.vector(&format!("{p}.attn.k.bias")),
                    v_weight: t.matrix(&format!("{p}.attn.v.weight")),
                    v_bias: t.vector(&format!("{p}.attn.v.bias")),
                    out_weight: t.matrix(&format!("{p}.attn.out.weight")),
                    out_bias: t.vector(&format!("{p}.attn.out.bias")),
                    attn_norm_weight: t.vector(&format!("{p}.attn.norm.weight")),
                    attn_norm_bias: t.vector(&format!("{p}.attn.norm.bias")),
                    ffn_in_weight: t.matrix(&format!("{p}.ffn.in.weight")),
                    ffn_in_bias: t.vector(&format!("{p}.ffn.in.bias")),
                    ffn_out_weight: t.matrix(&format!("{p}.ffn.out.weight")),
                    ffn_out_bias: t.vector(&format!("{p}.ffn.out.bias")),
                    ffn_norm_weight: t.vector(&format!("{p}.ffn.norm.weight")),
                    ffn_norm_bias: t.vector(&format!("{p}.ffn.norm.bias")),
                }
            })
            .collect();
        Ok(ModelWeights {
            config,
            token_embedding: t.matrix("embed.token"),
            position_embedding: t.matrix("embed.position"),
            embed_norm_weight: t.vector("embed.norm.weight"),
            embed_norm_bias: t.vector("embed.norm.bias"),
            layers,
            qa_weight: t.matrix("qa.weight"),
            qa_bias: t.vector("qa.bias"),
        })
    }

    /// Weights drawn uniformly from `[-scale, scale]`; layer-norm scales are 1 and biases 0.
    pub fn random(config: ModelConfig, seed: u64, scale: f32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .tensor_specs()
            .into_iter()
            .map(|(name, dims)| {
                let n: usize = dims.iter().product();
                let data = if name.ends_with("norm.weight") {
                    vec![1.0; n]
                } else if name.ends_with("norm.bias") {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
                };
                qaw::RawTensor { name, dims, data }
            })
            .collect();
        Self::from_tensors(config, tensors)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let tensors = config
            .tensor_specs()
            .into_iter()
            .map(|(name, dims)| {
                let n = dims.iter().product();
                qaw::RawTensor {
                    name,
                    dims,
                    data: vec![0.0; n],
                }
            })
            .collect();
        Self::from_tensors(config, tensors)
    }

    /// `(name, dims, data)` for every tensor in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        fn flat<D: ndarray::Dimension>(a: &ndarray::Array<f32, D>) -> &[f32] {
            a.as_slice().expect("owned arrays are standard layout")
        }
        let mut out: Vec<(String, Vec<usize>, &[f32])> = vec![
            (
                "embed.token".into(),
                self.token_embedding.shape().to_vec(),
                flat(&self.token_embedding),
            ),
            (
                "embed.position".into(),
                self.position_embedding.shape().to_vec(),
                flat(&self.position_embedding),
            ),
            (
                "embed.norm.weight".into(),
                self.embed_norm_weight.shape().to_vec(),
                flat(&self.embed_norm_weight),
            ),
            (
                "embed.norm.bias".into(),
                self.embed_norm_bias.shape().to_vec(),
                flat(&self.embed_norm_bias),
            ),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layer.{i}");
            let mats = [
                ("attn.q", &l.q_weight, &l.q_bias),
                ("attn.k", &l.k_weight, &l.k_bias),
                ("attn.v", &l.v_weight, &l.v_bias),
                ("attn.out", &l.out_weight, &l.out_bias),
            ];
            for (n, w, b) in mats {
                out.push((format!("{p}.{n}.weight"), w.shape().to_vec(), flat(w)));
                out.push((format!("{p}.{n}.bias"), b.shape().to_vec(), flat(b)));
            }
            out.push((
                format!("{p}.attn.norm.weight"),
                l.attn_norm_weight.shape().to_vec(),
                flat(&l.attn_norm_weight),
            ));
            out.push((
                format!("{p}.attn.norm.bias"),
                l.attn_norm_bias.shape().to_vec(),
                flat(&l.attn_norm_bias),
            ));
            out.push((
                format!("{p}.ffn.in.weight"),
                l.ffn_in_weight.shape().to_vec(),
                flat(&l.ffn_in_weight),
            ));
            out.push((
                format!("{p}.ffn.in.bias"),
                l.ffn_in_bias.shape().to_vec(),
                flat(&l.ffn_in_bias),
            ));
            out.push((
                format!("{p}.ffn.out.weight"),
                l.ffn_out_weight.shape().to_vec(),
                flat(&l.ffn_out_weight),
            ));
            out.push((
                format!("{p}.ffn.out.bias"),
                l.ffn_out_bias.shape().to_vec(),
                flat(&l.ffn_out_bias),
            ));
            out.push((
                format!("{p}.ffn.norm.weight"),
                l.ffn_norm_weight.shape().to_vec(),
                flat(&l.ffn_norm_weight),
            ));
            out.push((
                format!("{p}.ffn.norm.bias"),
                l.ffn_norm_bias.shape().to_vec(),
                flat(&l.ffn_norm_bias),
            ));
        }
        out.push((
            "qa.weight".into(),
            self.qa_weight.shape().to_vec(),
            flat(&self.qa_weight),
        ));
        out.push(("qa.bias".into(), self.qa_bias.shape().to_vec(), flat(&self.qa_bias)));
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let named = self.named_tensors();
        let view: Vec<(&str, &[usize], &[f32])> = named
            .iter()
            .map(|(n, d, data)| (n.as_str(), d.as_slice(), *data))
            .collect();
        qaw::write(w, &view)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn load_weights(path: impl AsRef<Path>, config: ModelConfig) -> Result<ModelWeights> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_weights_bytes(&bytes, config)
}

pub fn load_weights_bytes(bytes: &[u8], config: ModelConfig) -> Result<ModelWeights> {
    config.validate()?;
    ModelWeights::from_tensors(config, qaw::read(bytes)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanLogits {
    pub start_logits: Vec<f32>,
    pub end_logits: Vec<f32>,
}

impl SpanLogits {
    pub fn len(&self) -> usize {
        self.start_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_logits.is_empty()
    }
}

/// Observer for per-layer, per-head attention probabilities `[seq, seq]`.
pub trait AttentionObserver {
    fn observe(&mut self, layer: usize, head: usize, probs: ArrayView2<f32>);
}

impl<F: FnMut(usize, usize, ArrayView2<f32>)> AttentionObserver for F {
    fn observe(&mut self, layer: usize, head: usize, probs: ArrayView2<f32>) {
        self(layer, head, probs)
    }
}

struct NoObserver;

impl AttentionObserver for NoObserver {
    fn observe(&mut self, _: usize, _: usize, _: ArrayView2<f32>) {}
}

fn linear(x: &Array2<f32>, w: &Array2<f32>, b: &Array1<f32>) -> Array2<f32> {
    let mut y = x.dot(w);
    y += b;
    y
}

fn layer_norm_rows(x: &mut Array2<f32>, scale: &Array1<f32>, bias: &Array1<f32>, eps: f32) {
    let scale = scale.as_slice().expect("contiguous");
    let bias = bias.as_slice().expect("contiguous");
    for mut row in x.axis_iter_mut(Axis(0)) {
        layer_norm_in_place(row.as_slice_mut().expect("contiguous rows"), scale, bias, eps);
    }
}

pub fn forward(encoding: &Encoding, weights: &ModelWeights) -> Result<SpanLogits> {
    forward_ids(&encoding.ids, &encoding.attention_mask(), weights, &mut NoObserver)
}

pub fn forward_observed(
    encoding: &Encoding,
    weights: &ModelWeights,
    observer: &mut dyn AttentionObserver,
) -> Result<SpanLogits> {
    forward_ids(&encoding.ids, &encoding.attention_mask(), weights, observer)
}

/// Forward pass over raw ids. `mask[j]` is true for positions that may be attended to.
pub fn forward_ids(
    ids: &[u32],
    mask: &[bool],
    weights: &ModelWeights,
    observer: &mut dyn AttentionObserver,
) -> Result<SpanLogits> {
    let cfg = &weights.config;
    let len = ids.len();
    if mask.len() != len {
        return Err(Error::LengthMismatch {
            what: "ids and attention mask",
            left: len,
            right: mask.len(),
        });
    }
    if len > cfg.max_positions {
        return Err(Error::SequenceTooLong {
            len,
            max_positions: cfg.max_positions,
        });
    }
    if let Some((position, &id)) = ids.iter().enumerate().find(|(_, &id)| id as usize >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            position,
            vocab_size: cfg.vocab_size,
        });
    }

    let h = cfg.hidden;
    let mut x = Array2::<f32>::zeros((len, h));
    for (i, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(i);
        row.assign(&weights.token_embedding.row(id as usize));
        row += &weights.position_embedding.row(i);
    }
    layer_norm_rows(
        &mut x,
        &weights.embed_norm_weight,
        &weights.embed_norm_bias,
        cfg.layer_norm_eps,
    );

    let d = cfg.head_dim();
    for (li, layer) in weights.layers.iter().enumerate() {
        let q = linear(&x, &layer.q_weight, &layer.q_bias);
        let k = linear(&x, &layer.k_weight, &layer.k_bias);
        let v = linear(&x, &layer.v_weight, &layer.v_bias);
        let mut context = Array2::<f32>::zeros((len, h));
        for head in 0..cfg.n_heads {
            let cols = s![.., head * d..(head + 1) * d];
            let (ctx, probs) = attention_with_probs(q.slice(cols), k.slice(cols), v.slice(cols), mask);
            observer.observe(li, head, probs.view());
            context.slice_mut(cols).assign(&ctx);
        }
        let attn_out = linear(&context, &layer.out_weight, &layer.out_bias);
        x += &attn_out;
        layer_norm_rows(
            &mut x,
            &layer.attn_norm_weight,
            &layer.attn_norm_bias,
            cfg.layer_norm_eps,
        );

        let mut inner = linear(&x, &layer.ffn_in_weight, &layer.ffn_in_bias);
        inner.mapv_inplace(gelu);
        let ffn_out = linear(&inner, &layer.ffn_out_weight, &layer.ffn_out_bias);
        x += &ffn_out;
        layer_norm_rows(&mut x, &layer.ffn_norm_weight, &layer.ffn_norm_bias, cfg.layer_norm_eps);
    }

    let logits = linear(&x, &weights.qa_weight, &weights.qa_bias);
    Ok(SpanLogits {
        start_logits: logits.column(0).to_vec(),
        end_logits: logits.column(1).to_vec(),
    })
}
