use crate::embeddings::{compose_input, ComposedInput, Conditioning};
use crate::error::{Error, Result};
use crate::numerics::{numeric_gradients, GradientComparison, Tape, Tensor, Var};
use crate::vocab::TokenId;

use super::params::{Bound, BoundLayer, ModelConfig, Parameters, LN_EPS};

/// Post-norm multi-head self-attention sublayer: `LN(x + Attn(x))`.
///
/// There is no causal mask; every position attends to every position.
pub fn self_attention(
    tape: &mut Tape<'_>,
    layer: &BoundLayer,
    x: Var,
    heads: usize,
) -> Result<Var> {
    let width = tape.value(layer.q_w).rows();
    if tape.value(x).cols() != width {
        return Err(Error::ShapeMismatch {
            op: "self_attention",
            lhs: tape.value(x).shape().to_vec(),
            rhs: vec![width],
        });
    }
    let attn = attention_only(tape, layer, x, heads)?;
    let res = tape.add(x, attn)?;
    tape.layer_norm(res, layer.attn_gain, layer.attn_bias, LN_EPS)
}

/// Attention output projection before the residual, exposed for probes.
pub fn attention_only(
    tape: &mut Tape<'_>,
    layer: &BoundLayer,
    x: Var,
    heads: usize,
) -> Result<Var> {
    let q = tape.linear(x, layer.q_w, Some(layer.q_b))?;
    let k = tape.linear(x, layer.k_w, None)?;
    let v = tape.linear(x, layer.v_w, Some(layer.v_b))?;
    let a = tape.attention(q, k, v, heads)?;
    tape.linear(a, layer.o_w, Some(layer.o_b))
}

/// Post-norm feed-forward sublayer: `LN(x + W₂·gelu(W₁·x))`.
pub fn feed_forward(tape: &mut Tape<'_>, layer: &BoundLayer, x: Var) -> Result<Var> {
    let h = tape.linear(x, layer.ff_in_w, Some(layer.ff_in_b))?;
    let h = tape.gelu(h)?;
    let h = tape.linear(h, layer.ff_out_w, Some(layer.ff_out_b))?;
    let res = tape.add(x, h)?;
    tape.layer_norm(res, layer.ff_gain, layer.ff_bias, LN_EPS)
}

/// Runs the layer stack over a composed input, returning `[len, d_model]`.
pub fn encode(
    tape: &mut Tape<'_>,
    bound: &Bound,
    config: &ModelConfig,
    input: &ComposedInput,
) -> Result<Var> {
    let mut x = input.embeddings;
    for layer in &bound.layers {
        x = self_attention(tape, layer, x, config.heads)?;
        x = feed_forward(tape, layer, x)?;
    }
    Ok(x)
}

/// MLM head on a single hidden row: dense → GELU → layer norm → vocabulary
/// projection (tied to the token table unless configured otherwise).
pub fn mlm_head(tape: &mut Tape<'_>, bound: &Bound, hidden: Var) -> Result<Var> {
    let t = tape.linear(hidden, bound.head_w, Some(bound.head_b))?;
    let t = tape.gelu(t)?;
    let t = tape.layer_norm(t, bound.head_gain, bound.head_bias, LN_EPS)?;
    let logits = match bound.out_w {
        Some(w) => tape.matmul(t, w)?,
        None => tape.matmul_nt(t, bound.token)?,
    };
    tape.add_row(logits, bound.out_b)
}

/// Logits `[1, V]` at the `[MASK]` position.
pub fn forward(
    tape: &mut Tape<'_>,
    bound: &Bound,
    config: &ModelConfig,
    input: &ComposedInput,
) -> Result<Var> {
    let h = encode(tape, bound, config, input)?;
    let row = tape.gather(h, &[input.layout.mask_index])?;
    mlm_head(tape, bound, row)
}

/// One masked-prediction case: condition on `prefix`, predict `gold`.
#[derive(Debug, Clone, Copy)]
pub struct MaskedCase<'a> {
    pub cond: Conditioning<'a>,
    pub prefix: &'a [TokenId],
    pub gold: TokenId,
}

/// Architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

impl Model {
    pub fn new(config: ModelConfig, params: Parameters) -> Result<Self> {
        let params = Parameters::from_tensors(
            &config,
            params
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        )?;
        Ok(Self { config, params })
    }

    pub fn init_random(config: ModelConfig) -> Result<Self> {
        let params = Parameters::init_random(&config)?;
        Ok(Self { config, params })
    }

    /// Vocabulary logits for the token following `prefix`.
    pub fn logits(&self, cond: &Conditioning<'_>, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, &self.config);
        let input = compose_input(&mut tape, &bound, &self.config, cond, prefix)?;
        let logits = forward(&mut tape, &bound, &self.config, &input)?;
        Ok(tape.value(logits).data().to_vec())
    }

    fn case_loss<'t>(
        &'t self,
        tape: &mut Tape<'t>,
        bound: &Bound,
        case: &MaskedCase<'_>,
    ) -> Result<Var> {
        let input = compose_input(tape, bound, &self.config, &case.cond, case.prefix)?;
        let logits = forward(tape, bound, &self.config, &input)?;
        tape.cross_entropy(logits, case.gold)
    }

    /// Summed cross entropy over `cases`.
    pub fn mlm_loss(&self, cases: &[MaskedCase<'_>]) -> Result<f64> {
        if cases.is_empty() {
            return Err(Error::Empty("mlm_loss examples"));
        }
        let mut total = 0.0;
        for case in cases {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, &self.config);
            let loss = self.case_loss(&mut tape, &bound, case)?;
            total += tape.value(loss).data()[0];
        }
        Ok(total)
    }

    /// Adds `∂loss/∂θ` of every case into the parameters' gradient buffers
    /// and returns the per-case losses. Buffers are not cleared first.
    pub fn accumulate_gradients(&mut self, cases: &[MaskedCase<'_>]) -> Result<Vec<f64>> {
        if cases.is_empty() {
            return Err(Error::Empty("mlm_loss examples"));
        }
        let mut losses = Vec::with_capacity(cases.len());
        for case in cases {
            let (loss, grads) = {
                let mut tape = Tape::new();
                let bound = self.params.bind(&mut tape, &self.config);
                let loss = self.case_loss(&mut tape, &bound, case)?;
                tape.backward(loss)?;
                let value = tape.value(loss).data()[0];
                let grads: Vec<(String, Option<Vec<f64>>)> = bound
                    .named()
                    .into_iter()
                    .map(|(name, v)| (name, tape.take_grad(v)))
                    .collect();
                (value, grads)
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite("loss".into()));
            }
            for (name, g) in grads {
                if let Some(g) = g {
                    self.params
                        .get_mut(&name)
                        .expect("bound names match parameters")
                        .accumulate_grad(&g)?;
                }
            }
            losses.push(loss);
        }
        Ok(losses)
    }

    /// Backpropagated gradients of the summed loss over `cases` checked
    /// against central finite differences of step `step`, every parameter
    /// coordinate included.
    pub fn grad_check(&self, cases: &[MaskedCase<'_>], step: f64) -> Result<GradientComparison> {
        let mut work = self.clone();
        work.params.zero_grad();
        work.accumulate_gradients(cases)?;
        let names: Vec<String> = work.params.names().map(str::to_string).collect();
        let analytic: Vec<Vec<f64>> = work
            .params
            .iter()
            .map(|(_, t)| {
                t.grad()
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.len()])
            })
            .collect();
        let tensors: Vec<Tensor> = self.params.iter().map(|(_, t)| t.detached()).collect();
        let value = |ts: &[Tensor]| {
            let params = Parameters::from_tensors(
                &self.config,
                names.iter().cloned().zip(ts.iter().cloned()).collect(),
            )?;
            Model {
                config: self.config.clone(),
                params,
            }
            .mlm_loss(cases)
        };
        let numeric = numeric_gradients(value, &tensors, step)?;
        Ok(GradientComparison { analytic, numeric })
    }
}
