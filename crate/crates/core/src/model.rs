//! The encoder-decoder policy: configuration, parameters, inference and
//! checkpoints.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{self, default_rules, DecodeMode, Decoded, DecoderCache, DecoderConfig, DecoderNet, DecoderParams, ScheduleSolution};
use crate::encoder::{self, EncoderConfig, EncoderOutput, EncoderParams};
use crate::features::{FeatureError, FeatureSet};
use crate::instance::{check_feasible, Instance};
use crate::oracle::{evaluate, OracleError};
use crate::tensor::{read_checkpoint, write_checkpoint, Checkpoint, Graph, ParameterStore, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("decoded schedule failed the feasibility check")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    /// Three layers, width 128, eight heads.
    pub fn full() -> Self {
        Self::default()
    }

    /// Same shape as [`full`](Self::full); kept separate so desk runs can diverge.
    pub fn desk() -> Self {
        Self::full()
    }

    /// One layer of width 8 with two heads, for gradient checks.
    pub fn micro(n_locations: usize) -> Self {
        Self {
            encoder: EncoderConfig {
                n_layers: 1,
                hidden: 8,
                heads: 2,
                n_locations,
                ..Default::default()
            },
            decoder: DecoderConfig::default(),
        }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        self.encoder.check().map_err(ModelError::Config)?;
        if !(self.decoder.logit_scale.is_finite() && self.decoder.logit_scale > 0.0) {
            return Err(ModelError::Config("logit_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    format: String,
    model: ModelConfig,
    adam_step: u64,
    #[serde(default)]
    extra: serde_json::Value,
}

const META_FORMAT: &str = "windsched-model";
const FIRST_MOMENT: &str = "adam.m.";
const SECOND_MOMENT: &str = "adam.v.";

/// Graph handles of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub vars: Vec<Var>,
    pub encoder: EncoderOutput,
    pub cache: DecoderCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParameterStore,
    pub encoder_params: EncoderParams,
    pub decoder_params: DecoderParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let encoder_params = EncoderParams::register(&config.encoder, &mut store, &mut rng)?;
        let decoder_params = DecoderParams::register(config.encoder.hidden, &mut store, &mut rng)?;
        Ok(Self {
            config,
            store,
            encoder_params,
            decoder_params,
        })
    }

    pub fn net<'a>(&'a self, vars: &'a [Var]) -> DecoderNet<'a> {
        DecoderNet {
            cfg: &self.config.decoder,
            params: &self.decoder_params,
            vars,
            heads: self.config.encoder.heads,
            attention_scale: self.config.encoder.attention_scale(),
        }
    }

    /// Encoder pass plus the decoder's per-slot projections.
    pub fn forward(&self, g: &mut Graph, fs: &FeatureSet) -> Result<Forward, ModelError> {
        let vars = self.store.bind(g);
        let enc = encoder::encode(g, &self.config.encoder, &self.encoder_params, &vars, fs)?;
        let cache = decoder::prepare(g, &self.net(&vars), &enc)?;
        Ok(Forward {
            vars,
            encoder: enc,
            cache,
        })
    }

    /// Decodes on an existing forward pass.
    pub fn decode<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        fwd: &Forward,
        fs: &FeatureSet,
        visit_cost: f64,
        mode: &DecodeMode,
        rng: &mut R,
    ) -> Result<Decoded, ModelError> {
        Ok(decoder::decode(g, &self.net(&fwd.vars), &fwd.cache, fs, visit_cost, mode, &default_rules(), rng)?)
    }

    /// Gradient-free decode of one instance with `n_candidates` candidates
    /// (`None` for the native `T * M`). The schedule is checked and scored
    /// under the canonical objective.
    pub fn solve_with<R: Rng + ?Sized>(
        &self,
        inst: &Instance,
        n_candidates: Option<usize>,
        mode: &DecodeMode,
        rng: &mut R,
    ) -> Result<ScheduleSolution, ModelError> {
        let start = Instant::now();
        let fs = FeatureSet::padded(inst, n_candidates.unwrap_or(inst.n_slots()))?;
        let mut g = Graph::no_grad();
        let fwd = self.forward(&mut g, &fs)?;
        let d = self.decode(&mut g, &fwd, &fs, inst.visit_cost, mode, rng)?;
        let schedule = decoder::sequence_to_schedule(&fs, &d.sequence);
        let wall_time = start.elapsed();
        let feas = check_feasible(inst, &schedule).map_err(OracleError::from)?;
        if !feas.feasible {
            return Err(ModelError::Infeasible);
        }
        let eq11 = evaluate(inst, &schedule)?.eq11_value;
        Ok(ScheduleSolution {
            sequence: d.sequence,
            schedule,
            crew_locations: feas.crew_locations.into_iter().map(|s| s.into_iter().collect()).collect(),
            change_flags: feas.change_flags,
            eq11_value: eq11,
            sequence_cost: d.sequence_cost,
            log_prob: d.log_prob_value,
            wall_time,
            n_candidates: fs.n_candidates(),
        })
    }

    pub fn solve<R: Rng + ?Sized>(&self, inst: &Instance, mode: &DecodeMode, rng: &mut R) -> Result<ScheduleSolution, ModelError> {
        self.solve_with(inst, None, mode, rng)
    }

    /// Greedy decode; needs no randomness.
    pub fn greedy(&self, inst: &Instance, n_candidates: Option<usize>) -> Result<ScheduleSolution, ModelError> {
        self.solve_with(inst, n_candidates, &DecodeMode::Greedy, &mut ChaCha8Rng::seed_from_u64(0))
    }

    /// Parameters, Adam moments and step count, with `extra` stored in the
    /// metadata blob.
    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Result<Checkpoint, ModelError> {
        let meta = CheckpointMeta {
            format: META_FORMAT.into(),
            model: self.config.clone(),
            adam_step: self.store.adam_step_count(),
            extra,
        };
        let mut tensors = Vec::with_capacity(3 * self.store.len());
        for (id, (name, t)) in self.store.iter().enumerate() {
            tensors.push((name.to_string(), t.clone()));
            let (m, v) = self.store.moments(id);
            tensors.push((format!("{FIRST_MOMENT}{name}"), Tensor::new(t.shape().to_vec(), m.to_vec())?));
            tensors.push((format!("{SECOND_MOMENT}{name}"), Tensor::new(t.shape().to_vec(), v.to_vec())?));
        }
        Ok(Checkpoint {
            meta: serde_json::to_string(&meta)?,
            tensors,
        })
    }

    /// Inverse of [`to_checkpoint`](Self::to_checkpoint); returns the extra metadata.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, serde_json::Value), ModelError> {
        let meta: CheckpointMeta = serde_json::from_str(&ckpt.meta)?;
        if meta.format != META_FORMAT {
            return Err(TensorError::Checkpoint(format!("unexpected format `{}`", meta.format)).into());
        }
        let mut model = Model::new(meta.model, 0)?;
        let mut first = Vec::with_capacity(model.store.len());
        let mut second = Vec::with_capacity(model.store.len());
        for id in 0..model.store.len() {
            let name = model.store.name(id).to_string();
            let find = |n: &str| ckpt.get(n).ok_or_else(|| TensorError::Checkpoint(format!("missing tensor `{n}`")));
            model.store.set(id, find(&name)?.clone())?;
            first.push(find(&format!("{FIRST_MOMENT}{name}"))?.data().to_vec());
            second.push(find(&format!("{SECOND_MOMENT}{name}"))?.data().to_vec());
        }
        model.store.restore_optimizer(meta.adam_step, first, second);
        Ok((model, meta.extra))
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<(), ModelError> {
        write_checkpoint(path, &self.to_checkpoint(extra)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value), ModelError> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }
}
