//! Graph temporal attention encoder.
//!
//! Rows of every layer tensor are slot-major: row `k * N + i` holds
//! candidate `i` at slot `k`, with `K = T * M` slots and `N = I + I'`
//! candidates. Spatial attention runs over the `N` candidates of each slot,
//! temporal attention over the `K` slots of each candidate, and the two are
//! fused by a sigmoid of a linear map of their concatenation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureSet;
use crate::tensor::{AttentionSpec, Graph, ParameterStore, Result, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionScale {
    /// Divide scores by `sqrt(D)`, the full hidden width.
    Hidden,
    /// Divide scores by `sqrt(D / heads)`, the per-head width.
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Number of site locations `J`; the input token is `[chi, one-hot(0..=J)]`.
    pub n_locations: usize,
    pub scale: AttentionScale,
    #[serde(default)]
    pub residual: bool,
    #[serde(default)]
    pub layer_norm: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_layers: 3,
            hidden: 128,
            heads: 8,
            n_locations: 4,
            scale: AttentionScale::Hidden,
            residual: false,
            layer_norm: false,
        }
    }
}

impl EncoderConfig {
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.n_layers == 0 {
            return Err("encoder needs at least one layer".into());
        }
        if self.heads == 0 || self.hidden == 0 || self.hidden % self.heads != 0 {
            return Err(format!(
                "hidden width {} must be a positive multiple of the head count {}",
                self.hidden, self.heads
            ));
        }
        if self.n_locations == 0 {
            return Err("n_locations must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn attention_scale(&self) -> f64 {
        let d = match self.scale {
            AttentionScale::Hidden => self.hidden,
            AttentionScale::Head => self.head_dim(),
        };
        1.0 / (d as f64).sqrt()
    }

    pub fn token_width(&self) -> usize {
        FeatureSet::token_width(self.n_locations)
    }
}

/// Store ids of one query/key/value triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionIds {
    pub w_q: usize,
    pub w_k: usize,
    pub w_v: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIds {
    pub spatial: AttentionIds,
    pub temporal: AttentionIds,
    /// `wI`, shape `2D x D`.
    pub integrate: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderParams {
    pub input_weight: usize,
    pub input_bias: usize,
    pub layers: Vec<LayerIds>,
}

/// Uniform on `[-1/sqrt(fan), 1/sqrt(fan)]`.
pub(crate) fn uniform_init<R: Rng + ?Sized>(rows: usize, cols: usize, fan: usize, rng: &mut R) -> Tensor {
    let a = 1.0 / (fan as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    Tensor::new(vec![rows, cols], data).expect("sized above")
}

impl EncoderParams {
    pub fn register<R: Rng + ?Sized>(cfg: &EncoderConfig, store: &mut ParameterStore, rng: &mut R) -> Result<Self> {
        let d = cfg.hidden;
        let input_weight = store.insert("encoder.input.weight", uniform_init(cfg.token_width(), d, d, rng))?;
        let input_bias = store.insert("encoder.input.bias", Tensor::zeros(&[1, d]))?;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let triple = |kind: &str, store: &mut ParameterStore, rng: &mut R| -> Result<AttentionIds> {
                Ok(AttentionIds {
                    w_q: store.insert(format!("encoder.layer{l}.{kind}.w_q"), uniform_init(d, d, d, rng))?,
                    w_k: store.insert(format!("encoder.layer{l}.{kind}.w_k"), uniform_init(d, d, d, rng))?,
                    w_v: store.insert(format!("encoder.layer{l}.{kind}.w_v"), uniform_init(d, d, d, rng))?,
                })
            };
            let spatial = triple("spatial", store, rng)?;
            let temporal = triple("temporal", store, rng)?;
            let integrate = store.insert(format!("encoder.layer{l}.integrate.w_i"), uniform_init(2 * d, d, d, rng))?;
            layers.push(LayerIds {
                spatial,
                temporal,
                integrate,
            });
        }
        Ok(Self {
            input_weight,
            input_bias,
            layers,
        })
    }

    /// Resolves ids of an already populated store.
    pub fn lookup(cfg: &EncoderConfig, store: &ParameterStore) -> Result<Self> {
        let triple = |l: usize, kind: &str| -> Result<AttentionIds> {
            Ok(AttentionIds {
                w_q: store.id(&format!("encoder.layer{l}.{kind}.w_q"))?,
                w_k: store.id(&format!("encoder.layer{l}.{kind}.w_k"))?,
                w_v: store.id(&format!("encoder.layer{l}.{kind}.w_v"))?,
            })
        };
        let layers = (0..cfg.n_layers)
            .map(|l| {
                Ok(LayerIds {
                    spatial: triple(l, "spatial")?,
                    temporal: triple(l, "temporal")?,
                    integrate: store.id(&format!("encoder.layer{l}.integrate.w_i"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input_weight: store.id("encoder.input.weight")?,
            input_bias: store.id("encoder.input.bias")?,
            layers,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `H^(L)`, shape `(K * N) x D`.
    pub h: Var,
    /// Output of every layer, `layers[0]` being the input embedding.
    pub layers: Vec<Var>,
    pub n_slots: usize,
    pub n_candidates: usize,
}

/// Affine map of each `[chi, one-hot location]` token to `D` dimensions.
pub fn input_embedding(g: &mut Graph, vars: &[Var], p: &EncoderParams, x: Var) -> Result<Var> {
    let h = g.matmul(x, vars[p.input_weight])?;
    g.add_row(h, vars[p.input_bias])
}

fn project(g: &mut Graph, vars: &[Var], ids: &AttentionIds, h: Var) -> Result<(Var, Var, Var)> {
    Ok((
        g.matmul(h, vars[ids.w_q])?,
        g.matmul(h, vars[ids.w_k])?,
        g.matmul(h, vars[ids.w_v])?,
    ))
}

/// Self-attention among the candidates of each slot.
pub fn spatial_attention(
    g: &mut Graph,
    cfg: &EncoderConfig,
    vars: &[Var],
    ids: &AttentionIds,
    h: Var,
    n_slots: usize,
    n_candidates: usize,
) -> Result<Var> {
    let (q, k, v) = project(g, vars, ids, h)?;
    g.attention(
        q,
        k,
        v,
        AttentionSpec {
            groups: n_slots,
            q_rows: n_candidates,
            kv_rows: n_candidates,
            heads: cfg.heads,
            scale: cfg.attention_scale(),
            key_mask: None,
        },
    )
}

/// Row permutation from slot-major to candidate-major order.
fn to_candidate_major(n_slots: usize, n_candidates: usize) -> Vec<usize> {
    (0..n_candidates)
        .flat_map(|i| (0..n_slots).map(move |k| k * n_candidates + i))
        .collect()
}

fn to_slot_major(n_slots: usize, n_candidates: usize) -> Vec<usize> {
    (0..n_slots)
        .flat_map(|k| (0..n_candidates).map(move |i| i * n_slots + k))
        .collect()
}

/// Self-attention across all slots of each candidate, past and future alike.
/// Input and output are slot-major.
pub fn temporal_attention(
    g: &mut Graph,
    cfg: &EncoderConfig,
    vars: &[Var],
    ids: &AttentionIds,
    h: Var,
    n_slots: usize,
    n_candidates: usize,
) -> Result<Var> {
    let hc = g.gather_rows(h, &to_candidate_major(n_slots, n_candidates))?;
    let (q, k, v) = project(g, vars, ids, hc)?;
    let out = g.attention(
        q,
        k,
        v,
        AttentionSpec {
            groups: n_candidates,
            q_rows: n_slots,
            kv_rows: n_slots,
            heads: cfg.heads,
            scale: cfg.attention_scale(),
            key_mask: None,
        },
    )?;
    g.gather_rows(out, &to_slot_major(n_slots, n_candidates))
}

/// `sigmoid((H_S || H_T) wI)`.
pub fn integrate(g: &mut Graph, w_i: Var, hs: Var, ht: Var) -> Result<Var> {
    if g.value(hs).shape() != g.value(ht).shape() {
        return Err(TensorError::ShapeMismatch {
            op: "integrate",
            lhs: g.value(hs).shape().to_vec(),
            rhs: g.value(ht).shape().to_vec(),
        });
    }
    let cat = g.concat(&[hs, ht], 1)?;
    let z = g.matmul(cat, w_i)?;
    Ok(g.sigmoid(z))
}

/// One encoder layer on slot-major `h`.
pub fn encoder_layer(
    g: &mut Graph,
    cfg: &EncoderConfig,
    vars: &[Var],
    ids: &LayerIds,
    h: Var,
    n_slots: usize,
    n_candidates: usize,
) -> Result<Var> {
    let hs = spatial_attention(g, cfg, vars, &ids.spatial, h, n_slots, n_candidates)?;
    let ht = temporal_attention(g, cfg, vars, &ids.temporal, h, n_slots, n_candidates)?;
    let mut out = integrate(g, vars[ids.integrate], hs, ht)?;
    if cfg.residual {
        out = g.add(out, h)?;
    }
    if cfg.layer_norm {
        out = g.row_standardize(out);
    }
    Ok(out)
}

pub fn encode(g: &mut Graph, cfg: &EncoderConfig, p: &EncoderParams, vars: &[Var], fs: &FeatureSet) -> Result<EncoderOutput> {
    if fs.n_locations != cfg.n_locations {
        return Err(TensorError::ShapeMismatch {
            op: "encoder input locations",
            lhs: vec![cfg.n_locations],
            rhs: vec![fs.n_locations],
        });
    }
    let (k, n) = (fs.n_slots(), fs.n_candidates());
    let x = g.input(fs.normalize().network_input());
    let mut h = input_embedding(g, vars, p, x)?;
    let mut layers = vec![h];
    for ids in &p.layers {
        h = encoder_layer(g, cfg, vars, ids, h, k, n)?;
        layers.push(h);
    }
    Ok(EncoderOutput {
        h,
        layers,
        n_slots: k,
        n_candidates: n,
    })
}
