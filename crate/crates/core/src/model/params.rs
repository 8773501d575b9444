use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::tensor::{Matrix, Scalar};
use crate::{Error, Result};

/// Indices of one attention block's projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionIds {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormIds {
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfnIds {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderLayerIds {
    pub self_attn: AttentionIds,
    pub norm1: NormIds,
    pub ffn: FfnIds,
    pub norm2: NormIds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderLayerIds {
    pub self_attn: AttentionIds,
    pub norm1: NormIds,
    pub cross_attn: AttentionIds,
    pub norm2: NormIds,
    pub ffn: FfnIds,
    pub norm3: NormIds,
}

/// Gate feed-forward: `[c; s]` (2d) -> hidden -> 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateIds {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Where each named tensor lives in [`Parameters::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub seg_emb: usize,
    pub encoder: Vec<EncoderLayerIds>,
    pub decoder: Vec<DecoderLayerIds>,
    pub out_proj: usize,
    pub gate: GateIds,
}

#[derive(Clone, Copy)]
enum Init {
    Xavier,
    Zeros,
    Ones,
}

struct Spec {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    inits: Vec<Init>,
}

impl Spec {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.names.push(name);
        self.shapes.push((rows, cols));
        self.inits.push(init);
        self.names.len() - 1
    }

    fn attention(&mut self, prefix: &str, d: usize) -> AttentionIds {
        let mut w = |n: &str| self.add(format!("{prefix}.{n}"), d, d, Init::Xavier);
        let (wq, wk, wv, wo) = (w("wq"), w("wk"), w("wv"), w("wo"));
        let mut b = |n: &str| self.add(format!("{prefix}.{n}"), 1, d, Init::Zeros);
        let (bq, bk, bv, bo) = (b("bq"), b("bk"), b("bv"), b("bo"));
        AttentionIds { wq, bq, wk, bk, wv, bv, wo, bo }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIds {
        NormIds {
            gamma: self.add(format!("{prefix}.gamma"), 1, d, Init::Ones),
            beta: self.add(format!("{prefix}.beta"), 1, d, Init::Zeros),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIds {
        FfnIds {
            w1: self.add(format!("{prefix}.w1"), d, f, Init::Xavier),
            b1: self.add(format!("{prefix}.b1"), 1, f, Init::Zeros),
            w2: self.add(format!("{prefix}.w2"), f, d, Init::Xavier),
            b2: self.add(format!("{prefix}.b2"), 1, d, Init::Zeros),
        }
    }
}

fn layout(cfg: &ModelConfig) -> (Layout, Spec) {
    let d = cfg.d_model;
    let mut s = Spec { names: Vec::new(), shapes: Vec::new(), inits: Vec::new() };
    let tok_emb = s.add("tok_emb".into(), cfg.vocab_size, d, Init::Xavier);
    let pos_emb = s.add("pos_emb".into(), cfg.position_rows(), d, Init::Xavier);
    let seg_emb = s.add("seg_emb".into(), cfg.max_segments, d, Init::Xavier);
    let encoder = (0..cfg.n_layers)
        .map(|l| EncoderLayerIds {
            self_attn: s.attention(&format!("enc.{l}.self_attn"), d),
            norm1: s.norm(&format!("enc.{l}.norm1"), d),
            ffn: s.ffn(&format!("enc.{l}.ffn"), d, cfg.d_ffn),
            norm2: s.norm(&format!("enc.{l}.norm2"), d),
        })
        .collect();
    let decoder = (0..cfg.n_layers)
        .map(|l| DecoderLayerIds {
            self_attn: s.attention(&format!("dec.{l}.self_attn"), d),
            norm1: s.norm(&format!("dec.{l}.norm1"), d),
            cross_attn: s.attention(&format!("dec.{l}.cross_attn"), d),
            norm2: s.norm(&format!("dec.{l}.norm2"), d),
            ffn: s.ffn(&format!("dec.{l}.ffn"), d, cfg.d_ffn),
            norm3: s.norm(&format!("dec.{l}.norm3"), d),
        })
        .collect();
    let out_proj = s.add("out_proj".into(), d, cfg.vocab_size, Init::Xavier);
    let gate = GateIds {
        w1: s.add("gate.w1".into(), 2 * d, cfg.gate_hidden, Init::Xavier),
        b1: s.add("gate.b1".into(), 1, cfg.gate_hidden, Init::Zeros),
        w2: s.add("gate.w2".into(), cfg.gate_hidden, 1, Init::Xavier),
        b2: s.add("gate.b2".into(), 1, 1, Init::Zeros),
    };
    (Layout { tok_emb, pos_emb, seg_emb, encoder, decoder, out_proj, gate }, s)
}

/// All learnable weights, as an ordered list of named matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<S> {
    config: ModelConfig,
    layout: Layout,
    names: Vec<String>,
    tensors: Vec<Matrix<S>>,
}

impl<S: Scalar> Parameters<S> {
    /// Xavier-uniform weights, zero biases, unit layer-norm scales, drawn
    /// from a ChaCha stream seeded with `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (layout, spec) = layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = spec
            .shapes
            .iter()
            .zip(&spec.inits)
            .map(|(&(r, c), init)| match init {
                Init::Zeros => Matrix::zeros(r, c),
                Init::Ones => Matrix::from_vec(r, c, alloc::vec![S::one(); r * c]),
                Init::Xavier => {
                    let a = libm::sqrt(6.0 / (r + c) as f64);
                    Matrix::from_fn(r, c, |_, _| S::of(rng.gen_range(-a..a)))
                }
            })
            .collect();
        Ok(Parameters { config, layout, names: spec.names, tensors })
    }

    /// Zero-filled parameters with the right shapes (for moment buffers and tests).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (layout, spec) = layout(&config);
        let tensors = spec.shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        Ok(Parameters { config, layout, names: spec.names, tensors })
    }

    /// Assembles parameters from named tensors, which must match the layout
    /// of `config` exactly (names, order, and shapes).
    pub fn from_named(config: ModelConfig, named: Vec<(String, Matrix<S>)>) -> Result<Self> {
        config.validate()?;
        let (layout, spec) = layout(&config);
        if named.len() != spec.names.len() {
            return Err(Error::LengthMismatch { expected: spec.names.len(), found: named.len() });
        }
        let mut tensors = Vec::with_capacity(named.len());
        for ((name, m), (want, &shape)) in named.into_iter().zip(spec.names.iter().zip(&spec.shapes)) {
            if &name != want || m.shape() != shape {
                return Err(Error::InvalidConfig(format!(
                    "tensor `{name}` {:?} does not match expected `{want}` {:?}",
                    m.shape(),
                    shape
                )));
            }
            tensors.push(m);
        }
        Ok(Parameters { config, layout, names: spec.names, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Matrix<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix<S>] {
        &mut self.tensors
    }

    pub fn tensor(&self, idx: usize) -> &Matrix<S> {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Matrix<S> {
        &mut self.tensors[idx]
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<S>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix<S>> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    pub fn cast<T: Scalar>(&self) -> Parameters<T> {
        Parameters {
            config: self.config,
            layout: self.layout.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Matrix::cast).collect(),
        }
    }
}
