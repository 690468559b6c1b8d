use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Layer-norm epsilon used throughout the model.
pub const LN_EPS: f64 = 1e-12;

/// Architectural hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    /// Width of region feature vectors.
    pub d_visual: usize,
    pub seed: u64,
    /// Output projection shares the token embedding table.
    #[serde(default = "default_true")]
    pub tied_head: bool,
    /// Add the `[IMG]` token embedding at region positions.
    #[serde(default)]
    pub region_token: bool,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_true() -> bool {
    true
}

fn default_init_std() -> f64 {
    0.02
}

impl ModelConfig {
    /// Desk-scale defaults: 2 layers, 2 heads, width 64, feed-forward 256.
    pub fn toy(vocab_size: usize, d_visual: usize) -> Self {
        Self {
            layers: 2,
            heads: 2,
            d_model: 64,
            d_ff: 256,
            vocab_size,
            max_positions: 64,
            d_visual,
            seed: 0,
            tied_head: true,
            region_token: false,
            init_std: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("heads", self.heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
            ("d_visual", self.d_visual),
        ];
        for (name, v) in extents {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        Ok(())
    }

    /// Every parameter name with its shape, in canonical (sorted) order.
    pub fn parameter_shapes(&self) -> BTreeMap<String, Vec<usize>> {
        let (d, f, v) = (self.d_model, self.d_ff, self.vocab_size);
        let mut m = BTreeMap::new();
        let mut put = |name: String, shape: Vec<usize>| {
            m.insert(name, shape);
        };
        put(names::TOKEN.into(), vec![v, d]);
        put(names::POSITION.into(), vec![self.max_positions, d]);
        put(names::SEGMENT.into(), vec![SEGMENTS, d]);
        put(names::EMB_GAIN.into(), vec![d]);
        put(names::EMB_BIAS.into(), vec![d]);
        put(names::VIS_WEIGHT.into(), vec![self.d_visual, d]);
        put(names::VIS_BIAS.into(), vec![d]);
        put(names::GEO_WEIGHT.into(), vec![4, d]);
        for l in 0..self.layers {
            let p = |s: &str| format!("layers.{l}.{s}");
            put(p("attention.query.weight"), vec![d, d]);
            put(p("attention.query.bias"), vec![d]);
            // No key bias: it shifts every score in a row equally and
            // cancels in the softmax.
            put(p("attention.key.weight"), vec![d, d]);
            put(p("attention.value.weight"), vec![d, d]);
            put(p("attention.value.bias"), vec![d]);
            put(p("attention.output.weight"), vec![d, d]);
            put(p("attention.output.bias"), vec![d]);
            put(p("attention.norm.gain"), vec![d]);
            put(p("attention.norm.bias"), vec![d]);
            put(p("ffn.input.weight"), vec![d, f]);
            put(p("ffn.input.bias"), vec![f]);
            put(p("ffn.output.weight"), vec![f, d]);
            put(p("ffn.output.bias"), vec![d]);
            put(p("ffn.norm.gain"), vec![d]);
            put(p("ffn.norm.bias"), vec![d]);
        }
        put(names::HEAD_TRANSFORM_WEIGHT.into(), vec![d, d]);
        put(names::HEAD_TRANSFORM_BIAS.into(), vec![d]);
        put(names::HEAD_GAIN.into(), vec![d]);
        put(names::HEAD_BIAS.into(), vec![d]);
        put(names::HEAD_OUTPUT_BIAS.into(), vec![v]);
        if !self.tied_head {
            put(names::HEAD_OUTPUT_WEIGHT.into(), vec![d, v]);
        }
        m
    }
}

/// Segment ids: source side, target side, visual.
pub const SEGMENTS: usize = 3;

pub mod names {
    pub const TOKEN: &str = "embeddings.token";
    pub const POSITION: &str = "embeddings.position";
    pub const SEGMENT: &str = "embeddings.segment";
    pub const EMB_GAIN: &str = "embeddings.norm.gain";
    pub const EMB_BIAS: &str = "embeddings.norm.bias";
    pub const VIS_WEIGHT: &str = "visual.feature.weight";
    pub const VIS_BIAS: &str = "visual.feature.bias";
    pub const GEO_WEIGHT: &str = "visual.geometry.weight";
    pub const HEAD_TRANSFORM_WEIGHT: &str = "head.transform.weight";
    pub const HEAD_TRANSFORM_BIAS: &str = "head.transform.bias";
    pub const HEAD_GAIN: &str = "head.norm.gain";
    pub const HEAD_BIAS: &str = "head.norm.bias";
    pub const HEAD_OUTPUT_WEIGHT: &str = "head.output.weight";
    pub const HEAD_OUTPUT_BIAS: &str = "head.output.bias";
}

/// Which pretrained checkpoint a tensor is transferred from under hybrid
/// initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// Word embeddings, the transformer stack and the MLM head.
    Text,
    /// Region feature and bounding-box projections.
    Visual,
    /// Position and segment embeddings, always freshly initialized.
    Fresh,
}

pub fn group_of(name: &str) -> ParamGroup {
    if name.starts_with("visual.") {
        ParamGroup::Visual
    } else if name == names::POSITION || name == names::SEGMENT {
        ParamGroup::Fresh
    } else {
        ParamGroup::Text
    }
}

enum InitKind {
    Normal,
    Zeros,
    Ones,
}

fn init_kind(name: &str) -> InitKind {
    if name.ends_with(".gain") {
        InitKind::Ones
    } else if name.ends_with(".bias") {
        InitKind::Zeros
    } else {
        InitKind::Normal
    }
}

/// Named parameter tensors in canonical sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    tensors: BTreeMap<String, Tensor>,
}

impl Parameters {
    /// Seeded initialization: `N(0, init_std)` weights, zero biases, unit
    /// layer-norm gains.
    pub fn init_random(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for (name, shape) in config.parameter_shapes() {
            let n: usize = shape.iter().product();
            let data = match init_kind(&name) {
                InitKind::Normal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                InitKind::Zeros => vec![0.0; n],
                InitKind::Ones => vec![1.0; n],
            };
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Ok(Self { tensors })
    }

    /// Builds from a full tensor map, checking names and shapes against
    /// `config`.
    pub fn from_tensors(config: &ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        let want = config.parameter_shapes();
        for (name, shape) in &want {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::TensorShapeConflict {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = tensors.keys().find(|k| !want.contains_key(*k)) {
            return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(Self { tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn tensor(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    pub fn zero_grad(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    /// Whether values (not gradients) are bit-identical.
    pub fn same_values(&self, other: &Parameters) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((ka, a), (kb, b))| {
                    ka == kb
                        && a.shape() == b.shape()
                        && a.data()
                            .iter()
                            .zip(b.data())
                            .all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }

    /// Registers every tensor on `tape` as a tracked leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>, config: &ModelConfig) -> Bound {
        let mut leaf = |name: &str| tape.leaf(self.tensor(name));
        let layers = (0..config.layers)
            .map(|l| {
                let mut p = |s: &str| leaf(&format!("layers.{l}.{s}"));
                BoundLayer {
                    q_w: p("attention.query.weight"),
                    q_b: p("attention.query.bias"),
                    k_w: p("attention.key.weight"),
                    v_w: p("attention.value.weight"),
                    v_b: p("attention.value.bias"),
                    o_w: p("attention.output.weight"),
                    o_b: p("attention.output.bias"),
                    attn_gain: p("attention.norm.gain"),
                    attn_bias: p("attention.norm.bias"),
                    ff_in_w: p("ffn.input.weight"),
                    ff_in_b: p("ffn.input.bias"),
                    ff_out_w: p("ffn.output.weight"),
                    ff_out_b: p("ffn.output.bias"),
                    ff_gain: p("ffn.norm.gain"),
                    ff_bias: p("ffn.norm.bias"),
                }
            })
            .collect();
        Bound {
            token: leaf(names::TOKEN),
            position: leaf(names::POSITION),
            segment: leaf(names::SEGMENT),
            emb_gain: leaf(names::EMB_GAIN),
            emb_bias: leaf(names::EMB_BIAS),
            vis_w: leaf(names::VIS_WEIGHT),
            vis_b: leaf(names::VIS_BIAS),
            geo_w: leaf(names::GEO_WEIGHT),
            layers,
            head_w: leaf(names::HEAD_TRANSFORM_WEIGHT),
            head_b: leaf(names::HEAD_TRANSFORM_BIAS),
            head_gain: leaf(names::HEAD_GAIN),
            head_bias: leaf(names::HEAD_BIAS),
            out_w: (!config.tied_head).then(|| leaf(names::HEAD_OUTPUT_WEIGHT)),
            out_b: leaf(names::HEAD_OUTPUT_BIAS),
        }
    }
}

/// Tape handles for every parameter of one model.
#[derive(Debug, Clone)]
pub struct Bound {
    pub token: Var,
    pub position: Var,
    pub segment: Var,
    pub emb_gain: Var,
    pub emb_bias: Var,
    pub vis_w: Var,
    pub vis_b: Var,
    pub geo_w: Var,
    pub layers: Vec<BoundLayer>,
    pub head_w: Var,
    pub head_b: Var,
    pub head_gain: Var,
    pub head_bias: Var,
    pub out_w: Option<Var>,
    pub out_b: Var,
}

impl Bound {
    /// `(name, var)` for every bound tensor.
    pub fn named(&self) -> Vec<(String, Var)> {
        let mut v = vec![
            (names::TOKEN.to_string(), self.token),
            (names::POSITION.to_string(), self.position),
            (names::SEGMENT.to_string(), self.segment),
            (names::EMB_GAIN.to_string(), self.emb_gain),
            (names::EMB_BIAS.to_string(), self.emb_bias),
            (names::VIS_WEIGHT.to_string(), self.vis_w),
            (names::VIS_BIAS.to_string(), self.vis_b),
            (names::GEO_WEIGHT.to_string(), self.geo_w),
            (names::HEAD_TRANSFORM_WEIGHT.to_string(), self.head_w),
            (names::HEAD_TRANSFORM_BIAS.to_string(), self.head_b),
            (names::HEAD_GAIN.to_string(), self.head_gain),
            (names::HEAD_BIAS.to_string(), self.head_bias),
            (names::HEAD_OUTPUT_BIAS.to_string(), self.out_b),
        ];
        if let Some(w) = self.out_w {
            v.push((names::HEAD_OUTPUT_WEIGHT.to_string(), w));
        }
        for (l, b) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("layers.{l}.{s}");
            v.extend([
                (p("attention.query.weight"), b.q_w),
                (p("attention.query.bias"), b.q_b),
                (p("attention.key.weight"), b.k_w),
                (p("attention.value.weight"), b.v_w),
                (p("attention.value.bias"), b.v_b),
                (p("attention.output.weight"), b.o_w),
                (p("attention.output.bias"), b.o_b),
                (p("attention.norm.gain"), b.attn_gain),
                (p("attention.norm.bias"), b.attn_bias),
                (p("ffn.input.weight"), b.ff_in_w),
                (p("ffn.input.bias"), b.ff_in_b),
                (p("ffn.output.weight"), b.ff_out_w),
                (p("ffn.output.bias"), b.ff_out_b),
                (p("ffn.norm.gain"), b.ff_gain),
                (p("ffn.norm.bias"), b.ff_bias),
            ]);
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct BoundLayer {
    pub q_w: Var,
    pub q_b: Var,
    pub k_w: Var,
    pub v_w: Var,
    pub v_b: Var,
    pub o_w: Var,
    pub o_b: Var,
    pub attn_gain: Var,
    pub attn_bias: Var,
    pub ff_in_w: Var,
    pub ff_in_b: Var,
    pub ff_out_w: Var,
    pub ff_out_b: Var,
    pub ff_gain: Var,
    pub ff_bias: Var,
}
