//! Forward pass: pre-norm transformer encoder, polarity stream, blended
//! pooling and the binary classification head.

use rand::Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{BlendConfig, BlendMode, EncoderParams, LayerParams};
use crate::error::{Error, Result};
use crate::tensor::{NodeId, Tape, Tensor};
use crate::text::TokenizedPair;

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Additive score for masked (PAD) keys; `exp` of it underflows to exactly 0.
pub const MASK_SCORE: f64 = -1e9;
/// Probabilities at or above this are positive predictions.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Seeded inverted dropout, only used while training.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut Xoshiro256PlusPlus,
}

#[derive(Default)]
pub struct ForwardOptions<'r> {
    /// Run the encoder over the real tokens only instead of the padded
    /// sequence. Non-PAD outputs and the logit are unaffected.
    pub trim_padding: bool,
    pub dropout: Option<Dropout<'r>>,
}

impl<'r> ForwardOptions<'r> {
    pub fn inference() -> Self {
        ForwardOptions {
            trim_padding: true,
            dropout: None,
        }
    }

    pub fn training(rate: f64, rng: &'r mut Xoshiro256PlusPlus) -> Self {
        ForwardOptions {
            trim_padding: true,
            dropout: Some(Dropout { rate, rng }),
        }
    }
}

/// Attention probabilities of one head. With key blending, `primary` and
/// `polarity` are already scaled by their block weights.
#[derive(Debug, Clone, Copy)]
pub struct AttentionBlocks {
    pub primary: NodeId,
    pub polarity: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct PrimaryStates {
    /// `[L×d]` hidden states after the final layer norm.
    pub states: NodeId,
    pub seq_len: usize,
    pub primary_len: usize,
    /// Per-head attention of the last layer.
    pub final_attention: Vec<AttentionBlocks>,
}

/// Polarity states to append as extra keys/values in the final layer.
#[derive(Debug, Clone, Copy)]
pub struct KeyBlend {
    pub polarity_states: NodeId,
    pub w_primary: f64,
    pub w_polarity: f64,
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub logit: NodeId,
    pub pooled: NodeId,
    pub primary: PrimaryStates,
    pub polarity: Option<NodeId>,
}

fn normalized(w_primary: f64, w_polarity: f64) -> (f64, f64) {
    let total = w_primary + w_polarity;
    (w_primary / total, w_polarity / total)
}

fn dropout(tape: &mut Tape<'_>, x: NodeId, opts: &mut ForwardOptions<'_>) -> Result<NodeId> {
    let Some(d) = opts.dropout.as_mut() else {
        return Ok(x);
    };
    if d.rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - d.rate);
    let shape = tape.shape(x).to_vec();
    let n = tape.value(x).len();
    let mask: Vec<f64> = (0..n)
        .map(|_| {
            if d.rng.random::<f64>() < d.rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    let m = tape.constant(Tensor::new(shape, mask)?);
    tape.mul(x, m)
}

fn key_mask(seq_len: usize, primary_len: usize) -> Option<Tensor> {
    (seq_len > primary_len).then(|| {
        let mut data = vec![0.0; seq_len * seq_len];
        for row in data.chunks_mut(seq_len) {
            row[primary_len..].fill(MASK_SCORE);
        }
        Tensor::new(vec![seq_len, seq_len], data).expect("square mask")
    })
}

fn matmul_param(tape: &mut Tape<'_>, x: NodeId, w: crate::tensor::ParamId) -> Result<NodeId> {
    let w = tape.param(w)?;
    tape.matmul(x, w)
}

#[allow(clippy::too_many_arguments)]
fn encoder_layer(
    tape: &mut Tape<'_>,
    params: &EncoderParams,
    layer: &LayerParams,
    x: NodeId,
    mask: Option<NodeId>,
    key_blend: Option<KeyBlend>,
    opts: &mut ForwardOptions<'_>,
) -> Result<(NodeId, Vec<AttentionBlocks>)> {
    let cfg = &params.config;
    let dh = cfg.head_dim();
    let inv_sqrt = 1.0 / (dh as f64).sqrt();

    let g1 = tape.param(layer.ln1_gain)?;
    let b1 = tape.param(layer.ln1_bias)?;
    let h = tape.layer_norm(x, g1, b1, LAYER_NORM_EPS)?;
    let q = matmul_param(tape, h, layer.wq)?;
    let k = matmul_param(tape, h, layer.wk)?;
    let v = matmul_param(tape, h, layer.wv)?;

    let extra = match key_blend {
        Some(kb) => {
            let hs = tape.layer_norm(kb.polarity_states, g1, b1, LAYER_NORM_EPS)?;
            let ks = matmul_param(tape, hs, layer.wk)?;
            let vs = matmul_param(tape, hs, layer.wv)?;
            let (wp, ws) = normalized(kb.w_primary, kb.w_polarity);
            Some((ks, vs, wp, ws))
        }
        None => None,
    };

    let mut heads = Vec::with_capacity(cfg.n_heads);
    let mut blocks = Vec::with_capacity(cfg.n_heads);
    for head in 0..cfg.n_heads {
        let off = head * dh;
        let qh = tape.slice_cols(q, off, dh)?;
        let kh = tape.slice_cols(k, off, dh)?;
        let vh = tape.slice_cols(v, off, dh)?;
        let kt = tape.transpose(kh)?;
        let raw = tape.matmul(qh, kt)?;
        let mut scores = tape.scale(raw, inv_sqrt);
        if let Some(m) = mask {
            scores = tape.add(scores, m)?;
        }
        let attn = tape.softmax(scores, 1)?;
        let out = match extra {
            Some((ks, vs, wp, ws)) => {
                let ksh = tape.slice_cols(ks, off, dh)?;
                let vsh = tape.slice_cols(vs, off, dh)?;
                let kst = tape.transpose(ksh)?;
                let raw_s = tape.matmul(qh, kst)?;
                let scores_s = tape.scale(raw_s, inv_sqrt);
                let attn_s = tape.softmax(scores_s, 1)?;
                let ap = tape.scale(attn, wp);
                let as_ = tape.scale(attn_s, ws);
                blocks.push(AttentionBlocks {
                    primary: ap,
                    polarity: Some(as_),
                });
                let op = tape.matmul(ap, vh)?;
                let os = tape.matmul(as_, vsh)?;
                tape.add(op, os)?
            }
            None => {
                blocks.push(AttentionBlocks {
                    primary: attn,
                    polarity: None,
                });
                tape.matmul(attn, vh)?
            }
        };
        heads.push(out);
    }
    let merged = tape.concat_cols(&heads)?;
    let projected = matmul_param(tape, merged, layer.wo)?;
    let projected = dropout(tape, projected, opts)?;
    let x = tape.add(x, projected)?;

    let g2 = tape.param(layer.ln2_gain)?;
    let b2 = tape.param(layer.ln2_bias)?;
    let h2 = tape.layer_norm(x, g2, b2, LAYER_NORM_EPS)?;
    let f = matmul_param(tape, h2, layer.ff_w1)?;
    let fb1 = tape.param(layer.ff_b1)?;
    let f = tape.add_row_bias(f, fb1)?;
    let f = tape.gelu(f);
    let f = matmul_param(tape, f, layer.ff_w2)?;
    let fb2 = tape.param(layer.ff_b2)?;
    let f = tape.add_row_bias(f, fb2)?;
    let f = dropout(tape, f, opts)?;
    Ok((tape.add(x, f)?, blocks))
}

/// Runs the encoder over the primary token stream. PAD keys are masked.
///
/// Without `trim_padding` the output has one row per padded position. When
/// `key_blend` is given, the final layer also attends over the polarity
/// states.
pub fn encode_primary(
    tape: &mut Tape<'_>,
    params: &EncoderParams,
    pair: &TokenizedPair,
    key_blend: Option<KeyBlend>,
    opts: &mut ForwardOptions<'_>,
) -> Result<PrimaryStates> {
    let cfg = &params.config;
    if pair.primary_ids.len() > cfg.max_len {
        return Err(Error::Contract(format!(
            "sequence of {} ids exceeds max_len {}",
            pair.primary_ids.len(),
            cfg.max_len
        )));
    }
    if pair.primary_len == 0 || pair.primary_len > pair.primary_ids.len() {
        return Err(Error::Contract(format!(
            "primary_len {} invalid for {} ids",
            pair.primary_len,
            pair.primary_ids.len()
        )));
    }
    let seq_len = if opts.trim_padding {
        pair.primary_len
    } else {
        pair.primary_ids.len()
    };

    let tok = tape.param(params.token_embedding)?;
    let pos = tape.param(params.position_embedding)?;
    let te = tape.embed(tok, &pair.primary_ids[..seq_len])?;
    let positions: Vec<usize> = (0..seq_len).collect();
    let pe = tape.embed(pos, &positions)?;
    let mut x = tape.add(te, pe)?;
    x = dropout(tape, x, opts)?;

    let mask = key_mask(seq_len, pair.primary_len).map(|m| tape.constant(m));
    let mut final_attention = Vec::new();
    let n_layers = params.layers.len();
    for (i, layer) in params.layers.iter().enumerate() {
        let kb = if i + 1 == n_layers { key_blend } else { None };
        let (next, blocks) = encoder_layer(tape, params, layer, x, mask, kb, opts)?;
        x = next;
        final_attention = blocks;
    }
    let g = tape.param(params.final_ln_gain)?;
    let b = tape.param(params.final_ln_bias)?;
    let states = tape.layer_norm(x, g, b, LAYER_NORM_EPS)?;
    Ok(PrimaryStates {
        states,
        seq_len,
        primary_len: pair.primary_len,
        final_attention,
    })
}

/// Polarity word embeddings plus the learned segment offset, `[P×d]`. No
/// positions: the polarity list has set semantics.
pub fn encode_polarity(
    tape: &mut Tape<'_>,
    params: &EncoderParams,
    pair: &TokenizedPair,
) -> Result<NodeId> {
    let tok = tape.param(params.token_embedding)?;
    let e = tape.embed(tok, &pair.polarity_ids[..pair.polarity_len])?;
    let seg = tape.param(params.segment_offset)?;
    tape.add_row_bias(e, seg)
}

/// Attention pooling `softmax(H q)ᵀ H` over the first `valid` rows of `h`.
fn attention_pool(
    tape: &mut Tape<'_>,
    h: NodeId,
    query: crate::tensor::ParamId,
    valid: usize,
) -> Result<NodeId> {
    let rows = tape.shape(h)[0];
    let mut scores = matmul_param(tape, h, query)?;
    if rows > valid {
        let mut mask = vec![0.0; rows];
        mask[valid..].fill(MASK_SCORE);
        let m = tape.constant(Tensor::new(vec![rows, 1], mask)?);
        scores = tape.add(scores, m)?;
    }
    let weights = tape.softmax(scores, 0)?;
    let wt = tape.transpose(weights)?;
    tape.matmul(wt, h)
}

/// Produces the `[1×2d]` vector fed to the classifier.
///
/// `pooled-concat` yields `[w_primary·pool(H_p), w_polarity·pool(H_s)]`; with
/// no polarity rows the primary half keeps scale 1 and the polarity half is
/// zero, which is exactly the baseline vector. The other modes return
/// `[pool(H_p), 0]`.
pub fn blend_pool(
    tape: &mut Tape<'_>,
    params: &EncoderParams,
    primary: &PrimaryStates,
    polarity_states: Option<NodeId>,
    blend: &BlendConfig,
) -> Result<NodeId> {
    let d = params.config.d_model;
    let pooled_p = attention_pool(tape, primary.states, params.pool_query, primary.primary_len)?;
    let zeros = |tape: &mut Tape<'_>| tape.constant(Tensor::zeros(vec![1, d]));
    match blend.mode {
        BlendMode::PooledConcat => {
            let hs = polarity_states.ok_or_else(|| {
                Error::Contract("pooled-concat blending needs polarity states".into())
            })?;
            let p = tape.shape(hs)[0];
            if p == 0 {
                let z = zeros(tape);
                return tape.concat_cols(&[pooled_p, z]);
            }
            let pooled_s = attention_pool(tape, hs, params.polarity_pool_query, p)?;
            let (wp, ws) = normalized(blend.w_primary, blend.w_polarity);
            let a = tape.scale(pooled_p, wp);
            let b = tape.scale(pooled_s, ws);
            tape.concat_cols(&[a, b])
        }
        BlendMode::None | BlendMode::AttentionKeys => {
            let z = zeros(tape);
            tape.concat_cols(&[pooled_p, z])
        }
    }
}

/// Affine classifier head; returns a `[1×1]` logit.
pub fn classify(tape: &mut Tape<'_>, params: &EncoderParams, pooled: NodeId) -> Result<NodeId> {
    let w = tape.param(params.classifier_weight)?;
    let rows = tape.shape(w)[0];
    if tape.shape(pooled) != [1, rows] {
        return Err(Error::shape(
            "classify",
            format!(
                "pooled {:?} vs weight {:?}",
                tape.shape(pooled),
                tape.shape(w)
            ),
        ));
    }
    let z = tape.matmul(pooled, w)?;
    let b = tape.param(params.classifier_bias)?;
    tape.add_row_bias(z, b)
}

/// Full model: encoder, optional polarity stream, blend, head.
pub fn forward(
    tape: &mut Tape<'_>,
    params: &EncoderParams,
    pair: &TokenizedPair,
    blend: &BlendConfig,
    opts: &mut ForwardOptions<'_>,
) -> Result<ModelOutput> {
    let polarity = if blend.uses_polarity() {
        Some(encode_polarity(tape, params, pair)?)
    } else {
        None
    };
    let key_blend = match (blend.mode, polarity) {
        (BlendMode::AttentionKeys, Some(hs)) if pair.polarity_len > 0 => Some(KeyBlend {
            polarity_states: hs,
            w_primary: blend.w_primary,
            w_polarity: blend.w_polarity,
        }),
        _ => None,
    };
    let primary = encode_primary(tape, params, pair, key_blend, opts)?;
    let pooled = blend_pool(tape, params, &primary, polarity, blend)?;
    let logit = classify(tape, params, pooled)?;
    Ok(ModelOutput {
        logit,
        pooled,
        primary,
        polarity,
    })
}

/// Inference-mode logit for one utterance.
pub fn logit(params: &EncoderParams, pair: &TokenizedPair, blend: &BlendConfig) -> Result<f64> {
    let mut tape = Tape::with_params(&params.set);
    let out = forward(
        &mut tape,
        params,
        pair,
        blend,
        &mut ForwardOptions::inference(),
    )?;
    Ok(tape.scalar(out.logit))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A probability of exactly 0.5 counts as positive.
pub fn decide(probability: f64) -> bool {
    probability >= DECISION_THRESHOLD
}

/// Rows of one head's attention over `[primary keys ; polarity keys]`.
pub fn attention_rows(tape: &Tape<'_>, blocks: &AttentionBlocks) -> Vec<Vec<f64>> {
    let (rows, pc) = (tape.shape(blocks.primary)[0], tape.shape(blocks.primary)[1]);
    let pv = tape.value(blocks.primary);
    (0..rows)
        .map(|r| {
            let mut row = pv[r * pc..(r + 1) * pc].to_vec();
            if let Some(s) = blocks.polarity {
                let sc = tape.shape(s)[1];
                row.extend_from_slice(&tape.value(s)[r * sc..(r + 1) * sc]);
            }
            row
        })
        .collect()
}

/// Reference computation of one blended attention row from raw scores: each
/// block is softmaxed on its own and scaled by its normalized weight.
pub fn blend_attention_row(
    primary_scores: &[f64],
    polarity_scores: &[f64],
    w_primary: f64,
    w_polarity: f64,
) -> Vec<f64> {
    fn softmax(x: &[f64]) -> Vec<f64> {
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }
    if polarity_scores.is_empty() {
        return softmax(primary_scores);
    }
    let (wp, ws) = normalized(w_primary, w_polarity);
    softmax(primary_scores)
        .into_iter()
        .map(|v| v * wp)
        .chain(softmax(polarity_scores).into_iter().map(|v| v * ws))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EncoderConfig;
    use crate::tensor::grad_check;

    fn small() -> EncoderConfig {
        EncoderConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            max_len: 10,
            vocab_size: 20,
            dropout_rate: 0.1,
        }
    }

    fn pair(real: &[usize], max_len: usize, polarity: &[usize]) -> TokenizedPair {
        let mut ids = real.to_vec();
        ids.resize(max_len, 0);
        TokenizedPair {
            primary_ids: ids,
            primary_len: real.len(),
            polarity_ids: polarity.to_vec(),
            polarity_len: polarity.len(),
        }
    }

    fn full_logit(params: &EncoderParams, p: &TokenizedPair, blend: &BlendConfig) -> f64 {
        let mut tape = Tape::with_params(&params.set);
        let mut opts = ForwardOptions::default();
        let out = forward(&mut tape, params, p, blend, &mut opts).unwrap();
        tape.scalar(out.logit)
    }

    #[test]
    fn untrimmed_output_is_max_len_by_d() {
        let params = EncoderParams::init(&small(), 1).unwrap();
        let p = pair(&[2, 5, 6], 10, &[]);
        let mut tape = Tape::with_params(&params.set);
        let h =
            encode_primary(&mut tape, &params, &p, None, &mut ForwardOptions::default()).unwrap();
        assert_eq!(tape.shape(h.states), &[10, 8]);
    }

    #[test]
    fn trimming_does_not_change_logit() {
        let params = EncoderParams::init(&small(), 2).unwrap();
        for mode in [
            BlendMode::None,
            BlendMode::PooledConcat,
            BlendMode::AttentionKeys,
        ] {
            let blend = BlendConfig::with_mode(mode);
            let p = pair(&[2, 5, 6, 7], 10, &[11, 12]);
            let a = full_logit(&params, &p, &blend);
            let b = logit(&params, &p, &blend).unwrap();
            assert!((a - b).abs() < 1e-12, "{mode}: {a} vs {b}");
        }
    }

    #[test]
    fn pad_tail_content_is_ignored() {
        let params = EncoderParams::init(&small(), 3).unwrap();
        let p = pair(&[2, 5, 6], 10, &[9]);
        let mut q = p.clone();
        for (i, id) in q.primary_ids.iter_mut().enumerate().skip(3) {
            *id = 10 + i;
        }
        let states = |pp: &TokenizedPair| {
            let mut tape = Tape::with_params(&params.set);
            let h = encode_primary(&mut tape, &params, pp, None, &mut ForwardOptions::default())
                .unwrap();
            tape.value(h.states)[..3 * 8].to_vec()
        };
        assert_eq!(states(&p), states(&q));
        let blend = BlendConfig::default();
        assert_eq!(
            full_logit(&params, &p, &blend),
            full_logit(&params, &q, &blend)
        );
    }

    #[test]
    fn too_long_sequence_is_contract_error() {
        let params = EncoderParams::init(&small(), 1).unwrap();
        let p = pair(&[2; 12], 12, &[]);
        assert!(matches!(
            logit(&params, &p, &BlendConfig::baseline()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn polarity_states() {
        let params = EncoderParams::init(&small(), 4).unwrap();
        let mut tape = Tape::with_params(&params.set);
        let empty = encode_polarity(&mut tape, &params, &pair(&[2], 10, &[])).unwrap();
        assert_eq!(tape.shape(empty), &[0, 8]);

        let one = encode_polarity(&mut tape, &params, &pair(&[2], 10, &[7])).unwrap();
        let emb = &params.set.get(params.token_embedding).data()[7 * 8..8 * 8];
        let seg = params.set.get(params.segment_offset).data();
        let want: Vec<f64> = emb.iter().zip(seg).map(|(a, b)| a + b).collect();
        assert_eq!(tape.value(one), want.as_slice());
    }

    #[test]
    fn uniform_attention_row_is_forced() {
        let mut params = EncoderParams::init(&small(), 5).unwrap();
        let last = *params.layers.last().unwrap();
        params.set.get_mut(last.wq).data_mut().fill(0.0);
        let p = pair(&[2, 3, 4, 5], 10, &[8, 9]);
        let mut tape = Tape::with_params(&params.set);
        let blend = BlendConfig::with_mode(BlendMode::AttentionKeys);
        let out = forward(
            &mut tape,
            &params,
            &p,
            &blend,
            &mut ForwardOptions::inference(),
        )
        .unwrap();
        for blocks in &out.primary.final_attention {
            for row in attention_rows(&tape, blocks) {
                let want = [0.1875, 0.1875, 0.1875, 0.1875, 0.125, 0.125];
                for (a, b) in row.iter().zip(want) {
                    assert!((a - b).abs() < 1e-15);
                }
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tape_rows_match_reference_blend() {
        let row = blend_attention_row(&[0.0; 4], &[0.0; 2], 0.75, 0.25);
        assert_eq!(row, vec![0.1875, 0.1875, 0.1875, 0.1875, 0.125, 0.125]);
        assert_eq!(
            blend_attention_row(&[0.0, 0.0], &[], 0.75, 0.25),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn empty_polarity_matches_baseline() {
        let params = EncoderParams::init(&small(), 6).unwrap();
        let p = pair(&[2, 4, 6, 8], 10, &[]);
        let base = logit(&params, &p, &BlendConfig::baseline()).unwrap();
        for mode in [BlendMode::PooledConcat, BlendMode::AttentionKeys] {
            let other = logit(&params, &p, &BlendConfig::with_mode(mode)).unwrap();
            assert!((base - other).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_polarity_weight_ignores_polarity_content() {
        let params = EncoderParams::init(&small(), 7).unwrap();
        let blend = BlendConfig {
            mode: BlendMode::PooledConcat,
            w_primary: 1.0,
            w_polarity: 0.0,
        };
        let a = logit(&params, &pair(&[2, 4], 10, &[9, 10]), &blend).unwrap();
        let b = logit(&params, &pair(&[2, 4], 10, &[15]), &blend).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_head_gives_half_probability() {
        let mut params = EncoderParams::init(&small(), 8).unwrap();
        params
            .set
            .get_mut(params.classifier_weight)
            .data_mut()
            .fill(0.0);
        let z = logit(&params, &pair(&[2, 3], 10, &[4]), &BlendConfig::default()).unwrap();
        assert_eq!(z, 0.0);
        assert_eq!(sigmoid(z), 0.5);
        assert!(decide(sigmoid(z)));
        assert!(!decide(0.4999999));
    }

    #[test]
    fn dropout_only_changes_training_passes() {
        use rand::SeedableRng;
        let params = EncoderParams::init(&small(), 9).unwrap();
        let p = pair(&[2, 3, 4, 5, 6], 10, &[7]);
        let blend = BlendConfig::default();
        let clean = logit(&params, &p, &blend).unwrap();
        let train = |seed| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let mut tape = Tape::with_params(&params.set);
            let mut opts = ForwardOptions::training(0.5, &mut rng);
            let out = forward(&mut tape, &params, &p, &blend, &mut opts).unwrap();
            tape.scalar(out.logit)
        };
        assert_eq!(train(1), train(1));
        assert_ne!(train(1), clean);
    }

    #[test]
    fn full_model_gradient_check() {
        let cfg = EncoderConfig {
            n_layers: 4,
            max_len: 6,
            vocab_size: 12,
            ..small()
        };
        let p = pair(&[2, 5, 7, 3], 6, &[8, 9]);
        for mode in [BlendMode::PooledConcat, BlendMode::AttentionKeys] {
            let mut params = EncoderParams::init(&cfg, 11).unwrap();
            for t in params.set.tensors_mut() {
                for v in t.data_mut() {
                    *v *= 5.0;
                }
            }
            let blend = BlendConfig::with_mode(mode);
            let handles = params.clone();
            let err = grad_check(&mut params.set, 1e-5, |tape| {
                let out = forward(tape, &handles, &p, &blend, &mut ForwardOptions::default())?;
                tape.bce_loss(out.logit, 1.0)
            })
            .unwrap();
            assert!(err < 1e-4, "{mode}: {err}");
        }
    }
}
