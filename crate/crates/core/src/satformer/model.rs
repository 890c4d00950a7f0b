//! Forward and backward passes of the satisfaction predictor.
//!
//! Each real turn is encoded by the text stack over `[AGG] query [SEP]
//! response` and the structured stack over `[text summary, intent, item,
//! slots]`; row 0 of the structured output is the turn embedding. A
//! turn-distance embedding is added, the current turn attends over the
//! previous turns, every real turn is concatenated with the attended vector
//! and passed through a tanh FC layer, the results are max-pooled
//! elementwise and fed to a sigmoid unit. Null turns that pad short windows
//! never enter the computation.

use super::attention::{attend_turns, attend_turns_backward, Attended};
use super::block::{block_backward, block_forward, BlockCache};
use super::config::PredictorConfig;
use super::params::PredictorParams;
use super::tensor::{add_at_b, affine, dot, matmul_bt, Mat};
use super::vocab::TurnInput;
use crate::error::{Error, Result};
use crate::weaklabel::logistic::{sigmoid, softplus};

/// Embedding of one turn, `embed_dim` long.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnEmbedding(pub Vec<f64>);

#[derive(Debug, Clone)]
struct TurnCache {
    text_ids: Vec<usize>,
    text: Vec<BlockCache>,
    structured: Vec<BlockCache>,
    intent: usize,
    item: usize,
    slots: Vec<(usize, Vec<usize>)>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    turns: Vec<TurnCache>,
    /// Turn embeddings with distance embeddings added, oldest first.
    pub embeddings: Vec<Vec<f64>>,
    distances: Vec<usize>,
    context_rows: Vec<usize>,
    query: Vec<f64>,
    keys: Mat,
    values: Mat,
    pub attended: Attended,
    fc_out: Vec<Vec<f64>>,
    argmax: Vec<usize>,
    pub pooled: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
}

impl ForwardTrace {
    /// Attention probability rows of every softmax in both stacks.
    pub fn stack_attention(&self) -> impl Iterator<Item = &Mat> {
        self.turns.iter().flat_map(|t| t.text.iter().chain(&t.structured)).flat_map(|c| c.attn.iter())
    }
}

fn check_id(id: usize, table: &Mat) -> Result<()> {
    if id >= table.rows {
        return Err(Error::Bounds { index: id, len: table.rows });
    }
    Ok(())
}

fn encode_cached(params: &PredictorParams, config: &PredictorConfig, input: &TurnInput) -> Result<(Vec<f64>, TurnCache)> {
    let d = config.embed_dim;
    let len = input.text_len.min(config.max_text_len).min(input.text_ids.len());
    if len == 0 {
        return Err(Error::Validation("empty text sequence".into()));
    }
    let text_ids = input.text_ids[..len].to_vec();
    let mut x = Mat::zeros(len, d);
    for (i, &id) in text_ids.iter().enumerate() {
        check_id(id, &params.token_emb)?;
        for ((o, t), p) in x.row_mut(i).iter_mut().zip(params.token_emb.row(id)).zip(params.position_emb.row(i)) {
            *o = t + p;
        }
    }
    let mut text = Vec::with_capacity(params.text_blocks.len());
    for block in &params.text_blocks {
        let (out, cache) = block_forward(block, &x, config.num_heads);
        text.push(cache);
        x = out;
    }

    check_id(input.intent, &params.intent_emb)?;
    check_id(input.item, &params.item_emb)?;
    let rows = if input.slots.is_empty() { 3 } else { 4 };
    let mut s = Mat::zeros(rows, d);
    s.row_mut(0).copy_from_slice(x.row(0));
    s.row_mut(1).copy_from_slice(params.intent_emb.row(input.intent));
    s.row_mut(2).copy_from_slice(params.item_emb.row(input.item));
    if !input.slots.is_empty() {
        let w = 1.0 / input.slots.len() as f64;
        for (key, values) in &input.slots {
            check_id(*key, &params.slot_key_emb)?;
            for (o, k) in s.row_mut(3).iter_mut().zip(params.slot_key_emb.row(*key)) {
                *o += w * k;
            }
            if !values.is_empty() {
                let wv = w / values.len() as f64;
                for &t in values {
                    check_id(t, &params.token_emb)?;
                    for (o, e) in s.row_mut(3).iter_mut().zip(params.token_emb.row(t)) {
                        *o += wv * e;
                    }
                }
            }
        }
    }
    let mut structured = Vec::with_capacity(params.struct_blocks.len());
    for block in &params.struct_blocks {
        let (out, cache) = block_forward(block, &s, config.num_heads);
        structured.push(cache);
        s = out;
    }
    let cache = TurnCache {
        text_ids,
        text,
        structured,
        intent: input.intent,
        item: input.item,
        slots: input.slots.clone(),
    };
    Ok((s.row(0).to_vec(), cache))
}

pub fn encode_turn(params: &PredictorParams, config: &PredictorConfig, input: &TurnInput) -> Result<TurnEmbedding> {
    encode_cached(params, config, input).map(|(e, _)| TurnEmbedding(e))
}

/// Runs the predictor on a window ending at the current turn. Windows longer
/// than `num_turns` keep their last `num_turns` turns.
pub fn forward(params: &PredictorParams, config: &PredictorConfig, window: &[TurnInput]) -> Result<ForwardTrace> {
    if window.is_empty() {
        return Err(Error::Validation("empty window".into()));
    }
    let d = config.embed_dim;
    let window = &window[window.len().saturating_sub(config.num_turns)..];
    let r = window.len();
    let mut turns = Vec::with_capacity(r);
    let mut embeddings = Vec::with_capacity(r);
    let mut distances = Vec::with_capacity(r);
    for (i, input) in window.iter().enumerate() {
        let (mut e, cache) = encode_cached(params, config, input)?;
        let dist = r - 1 - i;
        for (v, p) in e.iter_mut().zip(params.turn_pos_emb.row(dist)) {
            *v += p;
        }
        turns.push(cache);
        embeddings.push(e);
        distances.push(dist);
    }
    let current = &embeddings[r - 1];
    let context_rows: Vec<usize> = if r == 1 { vec![0] } else { (0..r - 1).collect() };
    let ctx = Mat::from_vec(context_rows.len(), d, context_rows.iter().flat_map(|&j| embeddings[j].clone()).collect());
    let query = affine(&Mat::from_vec(1, d, current.clone()), &params.cross_wq, None).data;
    let keys = affine(&ctx, &params.cross_wk, None);
    let values = affine(&ctx, &params.cross_wv, None);
    let attended = attend_turns(&query, &keys, &values, config.attention_scale)?;

    let mut fc_out = Vec::with_capacity(r);
    for e in &embeddings {
        let mut input = e.clone();
        input.extend_from_slice(&attended.output);
        let z = affine(&Mat::from_vec(1, 2 * d, input), &params.fc_w, Some(&params.fc_b));
        fc_out.push(z.data.iter().map(|v| v.tanh()).collect::<Vec<f64>>());
    }
    let mut argmax = vec![0usize; d];
    let mut pooled = fc_out[0].clone();
    for (j, h) in fc_out.iter().enumerate().skip(1) {
        for c in 0..d {
            if h[c] > pooled[c] {
                pooled[c] = h[c];
                argmax[c] = j;
            }
        }
    }
    let logit = dot(&pooled, &params.out_w.data) + params.out_b.data[0];
    let prob = sigmoid(logit);
    Ok(ForwardTrace {
        turns,
        embeddings,
        distances,
        context_rows,
        query,
        keys,
        values,
        attended,
        fc_out,
        argmax,
        pooled,
        logit,
        prob,
    })
}

/// Soft-label cross-entropy `-(l log p + (1 - l) log(1 - p))`.
pub fn loss(p: f64, label: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0,1)")));
    }
    if !(0.0..=1.0).contains(&label) {
        return Err(Error::Domain(format!("label {label} outside [0,1]")));
    }
    Ok(-(label * p.ln() + (1.0 - label) * (-p).ln_1p()))
}

/// The same loss expressed through the pre-sigmoid logit, stable for
/// saturated outputs.
pub fn loss_from_logit(logit: f64, label: f64) -> f64 {
    softplus(logit) - label * logit
}

fn check_label(label: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&label) {
        return Err(Error::Domain(format!("label {label} outside [0,1]")));
    }
    Ok(())
}

/// Adds the loss gradient for one example to `grad`; returns `(loss, prob)`.
pub fn accumulate_gradients(
    params: &PredictorParams,
    config: &PredictorConfig,
    window: &[TurnInput],
    label: f64,
    grad: &mut PredictorParams,
) -> Result<(f64, f64)> {
    check_label(label)?;
    let t = forward(params, config, window)?;
    backward_from_trace(params, config, &t, label, 1.0, grad);
    Ok((loss_from_logit(t.logit, label), t.prob))
}

/// Loss and full gradient for one example.
pub fn backward(
    params: &PredictorParams,
    config: &PredictorConfig,
    window: &[TurnInput],
    label: f64,
) -> Result<(f64, PredictorParams)> {
    let mut grad = params.zeros_like();
    let (l, _) = accumulate_gradients(params, config, window, label, &mut grad)?;
    Ok((l, grad))
}

/// Backpropagates `weight * dloss/dlogit` through a recorded forward pass.
pub fn backward_from_trace(
    params: &PredictorParams,
    config: &PredictorConfig,
    t: &ForwardTrace,
    label: f64,
    weight: f64,
    grad: &mut PredictorParams,
) {
    let d = config.embed_dim;
    let r = t.embeddings.len();
    let dlogit = weight * (t.prob - label);
    for (g, m) in grad.out_w.data.iter_mut().zip(&t.pooled) {
        *g += dlogit * m;
    }
    grad.out_b.data[0] += dlogit;

    let mut de: Vec<Vec<f64>> = vec![vec![0.0; d]; r];
    let mut dattended = vec![0.0; d];
    for j in 0..r {
        let dz: Vec<f64> = (0..d)
            .map(|c| if t.argmax[c] == j { dlogit * params.out_w.data[c] * (1.0 - t.fc_out[j][c].powi(2)) } else { 0.0 })
            .collect();
        if dz.iter().all(|&v| v == 0.0) {
            continue;
        }
        let dz = Mat::from_vec(1, d, dz);
        let mut input = t.embeddings[j].clone();
        input.extend_from_slice(&t.attended.output);
        add_at_b(&mut grad.fc_w, &Mat::from_vec(1, 2 * d, input), &dz);
        grad.fc_b.add_assign(&dz);
        let dinput = matmul_bt(&dz, &params.fc_w);
        for c in 0..d {
            de[j][c] += dinput.data[c];
            dattended[c] += dinput.data[d + c];
        }
    }

    let ag = attend_turns_backward(&t.query, &t.keys, &t.values, config.attention_scale, &t.attended.weights, &dattended);
    let current = Mat::from_vec(1, d, t.embeddings[r - 1].clone());
    let dq = Mat::from_vec(1, d, ag.query);
    add_at_b(&mut grad.cross_wq, &current, &dq);
    let dcur = matmul_bt(&dq, &params.cross_wq);
    for (o, v) in de[r - 1].iter_mut().zip(&dcur.data) {
        *o += v;
    }
    let ctx = Mat::from_vec(
        t.context_rows.len(),
        d,
        t.context_rows.iter().flat_map(|&j| t.embeddings[j].clone()).collect(),
    );
    add_at_b(&mut grad.cross_wk, &ctx, &ag.keys);
    add_at_b(&mut grad.cross_wv, &ctx, &ag.values);
    let mut dctx = matmul_bt(&ag.keys, &params.cross_wk);
    dctx.add_assign(&matmul_bt(&ag.values, &params.cross_wv));
    for (row, &j) in t.context_rows.iter().enumerate() {
        for (o, v) in de[j].iter_mut().zip(dctx.row(row)) {
            *o += v;
        }
    }

    for j in 0..r {
        for (g, v) in grad.turn_pos_emb.row_mut(t.distances[j]).iter_mut().zip(&de[j]) {
            *g += v;
        }
        turn_backward(params, &t.turns[j], &de[j], grad);
    }
}

fn turn_backward(params: &PredictorParams, cache: &TurnCache, de: &[f64], grad: &mut PredictorParams) {
    let d = de.len();
    let rows = cache.structured.first().map_or(if cache.slots.is_empty() { 3 } else { 4 }, |c| c.x.rows);
    let mut ds = Mat::zeros(rows, d);
    ds.row_mut(0).copy_from_slice(de);
    for (b, c) in cache.structured.iter().enumerate().rev() {
        ds = block_backward(&params.struct_blocks[b], c, &ds, &mut grad.struct_blocks[b]);
    }
    for (g, v) in grad.intent_emb.row_mut(cache.intent).iter_mut().zip(ds.row(1)) {
        *g += v;
    }
    for (g, v) in grad.item_emb.row_mut(cache.item).iter_mut().zip(ds.row(2)) {
        *g += v;
    }
    if !cache.slots.is_empty() {
        let w = 1.0 / cache.slots.len() as f64;
        for (key, values) in &cache.slots {
            for (g, v) in grad.slot_key_emb.row_mut(*key).iter_mut().zip(ds.row(3)) {
                *g += w * v;
            }
            if !values.is_empty() {
                let wv = w / values.len() as f64;
                for &tok in values {
                    for (g, v) in grad.token_emb.row_mut(tok).iter_mut().zip(ds.row(3)) {
                        *g += wv * v;
                    }
                }
            }
        }
    }

    let len = cache.text_ids.len();
    let mut dx = Mat::zeros(len, d);
    dx.row_mut(0).copy_from_slice(ds.row(0));
    for (b, c) in cache.text.iter().enumerate().rev() {
        dx = block_backward(&params.text_blocks[b], c, &dx, &mut grad.text_blocks[b]);
    }
    for (i, &id) in cache.text_ids.iter().enumerate() {
        for (g, v) in grad.token_emb.row_mut(id).iter_mut().zip(dx.row(i)) {
            *g += v;
        }
        for (g, v) in grad.position_emb.row_mut(i).iter_mut().zip(dx.row(i)) {
            *g += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog_model::tests::turn;
    use crate::dialog_model::{Session, Slot};
    use crate::satformer::params::TableSizes;
    use crate::satformer::vocab::{Vocab, PAD};
    use proptest::prelude::*;

    fn session() -> Session {
        let mut turns = vec![
            turn("play hello by adele", "music-play", "playing hello", 0.0),
            turn("no play halo", "music-play", "playing halo by beyonce", 5.0),
            turn("what is the weather", "weather-query", "it is sunny", 30.0),
            turn("stop", "player-stop", "ok", 40.0),
            turn("set an alarm", "alarm-set", "alarm set for seven", 90.0),
        ];
        turns[0].slots = vec![Slot { key: "song".into(), value: vec!["hello".into()] }];
        turns[1].slots = vec![
            Slot { key: "song".into(), value: vec!["halo".into()] },
            Slot { key: "artist".into(), value: vec![] },
        ];
        Session::new("m", turns)
    }

    fn setup(config: &PredictorConfig, seed: u64) -> (Vocab, PredictorParams) {
        let vocab = Vocab::build(&[session()], config.vocab_size);
        let sizes = TableSizes {
            tokens: vocab.num_tokens(),
            intents: vocab.num_intents(),
            slot_keys: vocab.num_slot_keys(),
            items: vocab.num_items(),
        };
        let mut p = PredictorParams::init(config, sizes, seed);
        // move off the symmetric initial point so every path is exercised
        let mut rng = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        for m in p.tensors_mut() {
            for v in &mut m.data {
                rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *v += ((rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.2;
            }
        }
        (vocab, p)
    }

    fn window(vocab: &Vocab, config: &PredictorConfig, n: usize) -> Vec<TurnInput> {
        vocab.encode_window(&session(), n, config.num_turns, config.max_text_len).unwrap()
    }

    #[test]
    fn loss_values() {
        assert!((loss(0.5, 0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(loss(1.0 - 1e-7, 1.0).unwrap() < 1e-6);
        let expect = -(0.3 * 0.6f64.ln() + 0.7 * 0.4f64.ln());
        assert!((loss(0.6, 0.3).unwrap() - expect).abs() < 1e-12);
        assert!(matches!(loss(1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(loss(0.0, 0.5), Err(Error::Domain(_))));
        for &(z, l) in &[(-3.0, 0.2), (0.4, 1.0), (2.0, 0.0)] {
            assert!((loss_from_logit(z, l) - loss(sigmoid(z), l).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn padding_amount_and_repeat_do_not_change_embedding() {
        let cfg = PredictorConfig::tiny();
        let (vocab, p) = setup(&cfg, 1);
        let t = &session().turns[2];
        let short = vocab.encode_turn(t, 10).unwrap();
        let mut long = short.clone();
        long.text_ids.resize(cfg.max_text_len, PAD);
        let a = encode_turn(&p, &cfg, &short).unwrap();
        assert_eq!(a, encode_turn(&p, &cfg, &long).unwrap());
        assert_eq!(a, encode_turn(&p, &cfg, &short).unwrap());
    }

    #[test]
    fn empty_window_rejected() {
        let cfg = PredictorConfig::tiny();
        let (_, p) = setup(&cfg, 1);
        assert!(matches!(forward(&p, &cfg, &[]), Err(Error::Validation(_))));
    }

    #[test]
    fn short_window_matches_unpadded_config() {
        let c5 = PredictorConfig { num_turns: 5, ..PredictorConfig::tiny() };
        let c3 = PredictorConfig { num_turns: 3, ..c5.clone() };
        let (vocab, p5) = setup(&c5, 2);
        let mut p3 = p5.clone();
        p3.turn_pos_emb = Mat::from_vec(3, c5.embed_dim, p5.turn_pos_emb.data[..3 * c5.embed_dim].to_vec());
        let w = window(&vocab, &c5, 2);
        assert_eq!(w.len(), 3);
        let a = forward(&p5, &c5, &w).unwrap().prob;
        let b = forward(&p3, &c3, &w).unwrap().prob;
        assert_eq!(a, b);
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn null_turn_gradient_is_zero() {
        let cfg = PredictorConfig::tiny();
        let (vocab, p) = setup(&cfg, 3);
        for n in [0, 3] {
            let (_, g) = backward(&p, &cfg, &window(&vocab, &cfg, n), 0.8).unwrap();
            assert!(g.null_turn.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_is_deterministic() {
        let cfg = PredictorConfig::tiny();
        let (vocab, p) = setup(&cfg, 4);
        let w = window(&vocab, &cfg, 1);
        assert_eq!(backward(&p, &cfg, &w, 0.3).unwrap().1, backward(&p, &cfg, &w, 0.3).unwrap().1);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = PredictorConfig { num_turns: 4, ..PredictorConfig::tiny() };
        let (vocab, p) = setup(&cfg, 5);
        let t = forward(&p, &cfg, &window(&vocab, &cfg, 4)).unwrap();
        for a in t.stack_attention() {
            for i in 0..a.rows {
                assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        assert!((t.attended.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn first_turn_attends_to_itself() {
        let cfg = PredictorConfig::tiny();
        let (vocab, p) = setup(&cfg, 6);
        let t = forward(&p, &cfg, &window(&vocab, &cfg, 0)).unwrap();
        let e = Mat::from_vec(1, cfg.embed_dim, t.embeddings[0].clone());
        let v = affine(&e, &p.cross_wv, None);
        assert_eq!(t.attended.output, v.data);
    }

    /// Relative error with an absolute floor on the denominator, so
    /// coordinates whose true gradient is ~0 are judged on absolute error.
    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
    }

    #[test]
    fn gradients_match_finite_differences_over_seeds() {
        let cfg = PredictorConfig::tiny();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for seed in 0..10u64 {
            let (vocab, p) = setup(&cfg, 100 + seed);
            let n = (seed % 3) as usize + 1;
            let w = window(&vocab, &cfg, n);
            let label = 0.15 + 0.07 * seed as f64;
            let (_, g) = backward(&p, &cfg, &w, label).unwrap();
            let grads: Vec<Vec<f64>> = g.tensors().iter().map(|(_, m)| m.data.clone()).collect();
            let names: Vec<String> = g.tensors().into_iter().map(|(n, _)| n).collect();
            let mut q = p.clone();
            for (ti, an) in grads.iter().enumerate() {
                for i in 0..an.len() {
                    let orig = q.tensors_mut()[ti].data[i];
                    q.tensors_mut()[ti].data[i] = orig + h;
                    let up = forward(&q, &cfg, &w).unwrap().logit;
                    q.tensors_mut()[ti].data[i] = orig - h;
                    let down = forward(&q, &cfg, &w).unwrap().logit;
                    q.tensors_mut()[ti].data[i] = orig;
                    let fd = (loss_from_logit(up, label) - loss_from_logit(down, label)) / (2.0 * h);
                    let e = rel_err(fd, an[i]);
                    worst = worst.max(e);
                    assert!(e <= 1e-4, "seed {seed} {}[{i}]: fd {fd} analytic {}", names[ti], an[i]);
                }
            }
        }
        eprintln!("worst relative gradient error {worst:.3e}");
    }

    #[test]
    fn output_is_lipschitz_in_token_embeddings() {
        let cfg = PredictorConfig::tiny();
        let (vocab, p) = setup(&cfg, 7);
        let w = window(&vocab, &cfg, 2);
        let base = forward(&p, &cfg, &w).unwrap().prob;
        let id = w[1].text_ids[1];
        for eps in [1e-6, 1e-7, 1e-8] {
            let mut q = p.clone();
            for v in q.token_emb.row_mut(id) {
                *v += eps;
            }
            let moved = forward(&q, &cfg, &w).unwrap().prob;
            assert!((moved - base).abs() <= 10.0 * eps, "eps {eps}: change {}", (moved - base).abs());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn padded_slots_never_matter(junk in prop::collection::vec(0usize..20, 12), n in 0usize..5) {
            let cfg = PredictorConfig::tiny();
            let (vocab, p) = setup(&cfg, 8);
            let w = window(&vocab, &cfg, n);
            let base = forward(&p, &cfg, &w).unwrap().prob;
            let mut corrupted = w.clone();
            for t in &mut corrupted {
                for (i, id) in t.text_ids.iter_mut().enumerate().skip(t.text_len) {
                    *id = junk[i] % vocab.num_tokens();
                }
            }
            prop_assert_eq!(forward(&p, &cfg, &corrupted).unwrap().prob, base);
        }
    }
}
