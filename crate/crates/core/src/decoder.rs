//! Sequential candidate selection over the `K = T * M` slots.
//!
//! Step `k` (0-based) fills slot `k mod M` of period `k / M`. Each step
//! slices the encoder output at slot `k`, builds a context from the last
//! pick and the slot sum, runs a masked glimpse over the candidates and
//! scores them with a tanh pointer. Already chosen candidates are masked,
//! so every decode maintains each real turbine exactly once and never more
//! than `M` per period.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{uniform_init, EncoderOutput};
use crate::features::FeatureSet;
use crate::instance::{Schedule, DEPOT};
use crate::tensor::{AttentionSpec, Graph, ParameterStore, Result, Tensor, TensorError, Var, MASK_NEG};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Multiplies the tanh logits before the softmax.
    pub logit_scale: f64,
    /// Idle picks cost nothing and leave the last location unchanged.
    #[serde(default)]
    pub idle_transparent: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            logit_scale: 1.0,
            idle_transparent: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderParams {
    /// Stands in for the last pick at the first step, `1 x D`.
    pub placeholder: usize,
    /// `2D x D`.
    pub wc_q: usize,
    pub wc_k: usize,
    pub wc_v: usize,
    /// Pointer projection `wP`, `D x D`.
    pub w_p: usize,
}

impl DecoderParams {
    pub fn register<R: Rng + ?Sized>(hidden: usize, store: &mut ParameterStore, rng: &mut R) -> Result<Self> {
        let d = hidden;
        Ok(Self {
            placeholder: store.insert("decoder.placeholder", uniform_init(1, d, d, rng))?,
            wc_q: store.insert("decoder.glimpse.w_q", uniform_init(2 * d, d, d, rng))?,
            wc_k: store.insert("decoder.glimpse.w_k", uniform_init(d, d, d, rng))?,
            wc_v: store.insert("decoder.glimpse.w_v", uniform_init(d, d, d, rng))?,
            w_p: store.insert("decoder.pointer.w_p", uniform_init(d, d, d, rng))?,
        })
    }

    pub fn lookup(store: &ParameterStore) -> Result<Self> {
        Ok(Self {
            placeholder: store.id("decoder.placeholder")?,
            wc_q: store.id("decoder.glimpse.w_q")?,
            wc_k: store.id("decoder.glimpse.w_k")?,
            wc_v: store.id("decoder.glimpse.w_v")?,
            w_p: store.id("decoder.pointer.w_p")?,
        })
    }
}

/// Everything a decode needs from the model, bound to one graph.
#[derive(Debug, Clone, Copy)]
pub struct DecoderNet<'a> {
    pub cfg: &'a DecoderConfig,
    pub params: &'a DecoderParams,
    pub vars: &'a [Var],
    pub heads: usize,
    pub attention_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeState {
    /// Next step, 0-based.
    pub step: usize,
    pub n_slots: usize,
    pub capacity: usize,
    pub selected: Vec<bool>,
    pub sequence: Vec<usize>,
    pub last: Option<usize>,
    pub last_location: Option<usize>,
    pub real_left: usize,
    /// Running sequence cost.
    pub cost: f64,
}

impl DecodeState {
    pub fn new(fs: &FeatureSet) -> Self {
        Self {
            step: 0,
            n_slots: fs.n_slots(),
            capacity: fs.capacity,
            selected: vec![false; fs.n_candidates()],
            sequence: Vec::with_capacity(fs.n_slots()),
            last: None,
            last_location: None,
            real_left: fs.n_real,
            cost: 0.0,
        }
    }

    /// Period of the current step, 0-based.
    pub fn period(&self) -> usize {
        self.step / self.capacity
    }

    pub fn slot_in_period(&self) -> usize {
        self.step % self.capacity
    }

    pub fn remaining_steps(&self) -> usize {
        self.n_slots - self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.n_slots
    }

    /// Records pick `v` and returns its cost increment.
    pub fn advance(&mut self, fs: &FeatureSet, visit_cost: f64, idle_transparent: bool, v: usize) -> f64 {
        let inc = step_cost(self, fs, visit_cost, idle_transparent, v);
        self.selected[v] = true;
        self.sequence.push(v);
        self.last = Some(v);
        if !fs.is_idle(v) {
            self.real_left -= 1;
        }
        if !(idle_transparent && fs.is_idle(v)) {
            self.last_location = Some(fs.location(v));
        }
        self.cost += inc;
        self.step += 1;
        inc
    }
}

/// One masking predicate applied after the already-selected mask.
pub trait MaskRule {
    fn apply(&self, state: &DecodeState, fs: &FeatureSet, mask: &mut [f64]);
}

/// Masks idle candidates once every remaining step is needed for a real
/// turbine. Only binds when there are more candidates than slots.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReserveForReal;

impl MaskRule for ReserveForReal {
    fn apply(&self, state: &DecodeState, fs: &FeatureSet, mask: &mut [f64]) {
        if state.remaining_steps() <= state.real_left {
            mask[fs.n_real..].fill(MASK_NEG);
        }
    }
}

pub fn default_rules() -> Vec<Box<dyn MaskRule + Send + Sync>> {
    vec![Box::new(ReserveForReal)]
}

/// `MASK_NEG` for every selected candidate, then each extra rule in order.
pub fn build_mask(state: &DecodeState, fs: &FeatureSet, rules: &[Box<dyn MaskRule + Send + Sync>]) -> Vec<f64> {
    let mut mask: Vec<f64> = state.selected.iter().map(|&s| if s { MASK_NEG } else { 0.0 }).collect();
    for r in rules {
        r.apply(state, fs, &mut mask);
    }
    mask
}

/// Cost of picking `v` at the current step: its raw scheduling cost in the
/// current period, plus `visit_cost` if its location differs from the last
/// one. The first pick has no predecessor and pays no visit cost.
pub fn step_cost(state: &DecodeState, fs: &FeatureSet, visit_cost: f64, idle_transparent: bool, v: usize) -> f64 {
    if idle_transparent && fs.is_idle(v) {
        return 0.0;
    }
    let chi = fs.chi_at(v, state.period(), state.slot_in_period()) * fs.chi_scale;
    let moved = state.last_location.is_some_and(|l| l != fs.location(v));
    chi + if moved { visit_cost } else { 0.0 }
}

/// Sequence cost of a complete pick order.
pub fn sequence_cost(fs: &FeatureSet, visit_cost: f64, idle_transparent: bool, sequence: &[usize]) -> f64 {
    let mut st = DecodeState::new(fs);
    for &v in sequence {
        st.advance(fs, visit_cost, idle_transparent, v);
    }
    st.cost
}

/// `m[v][k / M] = 1` for every real pick `v` at step `k`.
pub fn sequence_to_schedule(fs: &FeatureSet, sequence: &[usize]) -> Schedule {
    let mut s = Schedule::empty(fs.n_real, fs.n_periods);
    for (k, &v) in sequence.iter().enumerate() {
        if !fs.is_idle(v) {
            s.set(v, k / fs.capacity, true);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    /// Scaled tanh logits before masking.
    pub logits: Vec<f64>,
    pub mask: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Per-slot projections of `H^(L)`, computed once per decode.
#[derive(Debug, Clone, Copy)]
pub struct DecoderCache {
    pub h: Var,
    pub keys: Var,
    pub values: Var,
    pub pointer: Var,
    pub n_slots: usize,
    pub n_candidates: usize,
}

pub fn prepare(g: &mut Graph, net: &DecoderNet<'_>, enc: &EncoderOutput) -> Result<DecoderCache> {
    let v = net.vars;
    Ok(DecoderCache {
        h: enc.h,
        keys: g.matmul(enc.h, v[net.params.wc_k])?,
        values: g.matmul(enc.h, v[net.params.wc_v])?,
        pointer: g.matmul(enc.h, v[net.params.w_p])?,
        n_slots: enc.n_slots,
        n_candidates: enc.n_candidates,
    })
}

/// Rows of `h` (slot-major, `n_candidates` per slot) belonging to slot `k`.
pub fn temporal_pointer(g: &mut Graph, h: Var, n_candidates: usize, k: usize) -> Result<Var> {
    let rows = g.value(h).rows();
    if n_candidates == 0 || (k + 1) * n_candidates > rows {
        return Err(TensorError::OutOfRange {
            op: "temporal pointer",
            index: k,
            extent: rows / n_candidates.max(1),
        });
    }
    g.slice_rows(h, k * n_candidates, n_candidates)
}

/// `[h_last || sum_i h_i]` over the slot slice `h_d`, `1 x 2D`.
pub fn context_embedding(g: &mut Graph, net: &DecoderNet<'_>, h_d: Var, last: Option<usize>) -> Result<Var> {
    let head = match last {
        Some(i) => g.slice_rows(h_d, i, 1)?,
        None => net.vars[net.params.placeholder],
    };
    let total = g.sum_axis(h_d, 0)?;
    g.concat(&[head, total], 1)
}

/// Returns the `1 x N` masked probabilities and their numeric summary.
pub fn masked_pointer_logits(
    g: &mut Graph,
    net: &DecoderNet<'_>,
    context: Var,
    keys: Var,
    values: Var,
    pointer: Var,
    mask: &[f64],
) -> Result<(Var, StepDistribution)> {
    let n = g.value(keys).rows();
    let q = g.matmul(context, net.vars[net.params.wc_q])?;
    let glimpse = g.attention(
        q,
        keys,
        values,
        AttentionSpec {
            groups: 1,
            q_rows: 1,
            kv_rows: n,
            heads: net.heads,
            scale: net.attention_scale,
            key_mask: Some(mask.to_vec()),
        },
    )?;
    let pt = g.transpose(pointer);
    let raw = g.matmul(glimpse, pt)?;
    let bounded = g.tanh(raw);
    let logits = g.scale(bounded, net.cfg.logit_scale);
    let masked = g.masked_add(logits, mask)?;
    let probs = g.softmax(masked);
    let dist = StepDistribution {
        logits: g.value(logits).data().to_vec(),
        mask: mask.to_vec(),
        probs: g.value(probs).data().to_vec(),
    };
    Ok((probs, dist))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeMode {
    Sample,
    /// Highest probability, lowest index on ties.
    Greedy,
    /// Replays a given pick order.
    Forced(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub sequence: Vec<usize>,
    /// `1 x 1` sum of the chosen log-probabilities.
    pub log_prob: Var,
    pub log_prob_value: f64,
    pub step_log_probs: Vec<f64>,
    pub sequence_cost: f64,
}

fn pick<R: Rng + ?Sized>(mode: &DecodeMode, step: usize, probs: &[f64], mask: &[f64], rng: &mut R) -> Result<usize> {
    let unmasked = |i: usize| mask[i] > MASK_NEG * 0.5;
    match mode {
        DecodeMode::Greedy => {
            let mut best = None;
            for (i, &p) in probs.iter().enumerate() {
                if unmasked(i) && best.is_none_or(|b: usize| p > probs[b]) {
                    best = Some(i);
                }
            }
            best.ok_or(TensorError::FullyMasked)
        }
        DecodeMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last_ok = None;
            for (i, &p) in probs.iter().enumerate() {
                if !unmasked(i) || p <= 0.0 {
                    continue;
                }
                acc += p;
                last_ok = Some(i);
                if u < acc {
                    return Ok(i);
                }
            }
            // rounding left the cumulative sum just under u
            last_ok.ok_or(TensorError::FullyMasked)
        }
        DecodeMode::Forced(seq) => {
            let v = *seq.get(step).ok_or(TensorError::OutOfRange {
                op: "forced decode length",
                index: step,
                extent: seq.len(),
            })?;
            if v >= probs.len() || !unmasked(v) {
                return Err(TensorError::OutOfRange {
                    op: "forced decode pick",
                    index: v,
                    extent: probs.len(),
                });
            }
            Ok(v)
        }
    }
}

/// Runs all `K` steps. `fs` may be normalized; costs use raw values.
#[allow(clippy::too_many_arguments)]
pub fn decode<R: Rng + ?Sized>(
    g: &mut Graph,
    net: &DecoderNet<'_>,
    cache: &DecoderCache,
    fs: &FeatureSet,
    visit_cost: f64,
    mode: &DecodeMode,
    rules: &[Box<dyn MaskRule + Send + Sync>],
    rng: &mut R,
) -> Result<Decoded> {
    decode_with(g, net, cache, fs, visit_cost, mode, rules, rng, |_, _| {})
}

/// [`decode`] with a callback seeing every step's state and distribution.
#[allow(clippy::too_many_arguments)]
pub fn decode_with<R: Rng + ?Sized>(
    g: &mut Graph,
    net: &DecoderNet<'_>,
    cache: &DecoderCache,
    fs: &FeatureSet,
    visit_cost: f64,
    mode: &DecodeMode,
    rules: &[Box<dyn MaskRule + Send + Sync>],
    rng: &mut R,
    mut observe: impl FnMut(&DecodeState, &StepDistribution),
) -> Result<Decoded> {
    let n = cache.n_candidates;
    if fs.n_candidates() != n || fs.n_slots() != cache.n_slots {
        return Err(TensorError::ShapeMismatch {
            op: "decode features",
            lhs: vec![cache.n_slots, n],
            rhs: vec![fs.n_slots(), fs.n_candidates()],
        });
    }
    let mut state = DecodeState::new(fs);
    let mut log_prob: Option<Var> = None;
    let mut step_log_probs = Vec::with_capacity(cache.n_slots);
    while !state.is_done() {
        let k = state.step;
        let h_d = temporal_pointer(g, cache.h, n, k)?;
        let keys = temporal_pointer(g, cache.keys, n, k)?;
        let values = temporal_pointer(g, cache.values, n, k)?;
        let pointer = temporal_pointer(g, cache.pointer, n, k)?;
        let ctx = context_embedding(g, net, h_d, state.last)?;
        let mask = build_mask(&state, fs, rules);
        let (probs, dist) = masked_pointer_logits(g, net, ctx, keys, values, pointer, &mask)?;
        observe(&state, &dist);
        let v = pick(mode, k, &dist.probs, &mask, rng)?;
        let p = g.element(probs, v)?;
        let lp = g.log(p);
        step_log_probs.push(g.value(lp).data()[0]);
        log_prob = Some(match log_prob {
            None => lp,
            Some(acc) => g.add(acc, lp)?,
        });
        state.advance(fs, visit_cost, net.cfg.idle_transparent, v);
    }
    let log_prob = match log_prob {
        Some(v) => v,
        None => g.input(Tensor::scalar(0.0)),
    };
    Ok(Decoded {
        log_prob_value: g.value(log_prob).data()[0],
        sequence: state.sequence,
        step_log_probs,
        log_prob,
        sequence_cost: state.cost,
    })
}

/// A decoded schedule with both objective values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub sequence: Vec<usize>,
    pub schedule: Schedule,
    pub crew_locations: Vec<Vec<usize>>,
    pub change_flags: Vec<bool>,
    /// Canonical cost-form value.
    pub eq11_value: f64,
    pub sequence_cost: f64,
    pub log_prob: f64,
    pub wall_time: Duration,
    /// Number of candidates decoded over (`> T*M` when padded).
    pub n_candidates: usize,
}

impl ScheduleSolution {
    /// Locations per step, depot for idle picks.
    pub fn step_locations(&self, fs: &FeatureSet) -> Vec<usize> {
        self.sequence
            .iter()
            .map(|&v| if fs.is_idle(v) { DEPOT } else { fs.location(v) })
            .collect()
    }
}
