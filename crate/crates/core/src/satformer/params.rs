//! Learnable tensors of the predictor. The same struct doubles as the
//! gradient container, so optimizers can walk parameters and gradients in
//! lockstep through [`PredictorParams::tensors`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::PredictorConfig;
use super::tensor::Mat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub wq: Mat,
    pub bq: Mat,
    pub wk: Mat,
    pub bk: Mat,
    pub wv: Mat,
    pub bv: Mat,
    pub wo: Mat,
    pub bo: Mat,
    pub ln1_gain: Mat,
    pub ln1_bias: Mat,
    pub ffn_w1: Mat,
    pub ffn_b1: Mat,
    pub ffn_w2: Mat,
    pub ffn_b2: Mat,
    pub ln2_gain: Mat,
    pub ln2_bias: Mat,
}

impl BlockParams {
    fn zeros(d: usize, f: usize) -> Self {
        BlockParams {
            wq: Mat::zeros(d, d),
            bq: Mat::zeros(1, d),
            wk: Mat::zeros(d, d),
            bk: Mat::zeros(1, d),
            wv: Mat::zeros(d, d),
            bv: Mat::zeros(1, d),
            wo: Mat::zeros(d, d),
            bo: Mat::zeros(1, d),
            ln1_gain: Mat::zeros(1, d),
            ln1_bias: Mat::zeros(1, d),
            ffn_w1: Mat::zeros(d, f),
            ffn_b1: Mat::zeros(1, f),
            ffn_w2: Mat::zeros(f, d),
            ffn_b2: Mat::zeros(1, d),
            ln2_gain: Mat::zeros(1, d),
            ln2_bias: Mat::zeros(1, d),
        }
    }

    fn named(&self, prefix: &str) -> Vec<(String, &Mat)> {
        let fields: [(&str, &Mat); 16] = [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln1_gain", &self.ln1_gain),
            ("ln1_bias", &self.ln1_bias),
            ("ffn_w1", &self.ffn_w1),
            ("ffn_b1", &self.ffn_b1),
            ("ffn_w2", &self.ffn_w2),
            ("ffn_b2", &self.ffn_b2),
            ("ln2_gain", &self.ln2_gain),
            ("ln2_bias", &self.ln2_bias),
        ];
        fields.into_iter().map(|(n, m)| (format!("{prefix}.{n}"), m)).collect()
    }

    fn all_mut(&mut self) -> [&mut Mat; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

/// Sizes of the embedding tables, fixed by the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableSizes {
    pub tokens: usize,
    pub intents: usize,
    pub slot_keys: usize,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub token_emb: Mat,
    pub position_emb: Mat,
    pub intent_emb: Mat,
    pub slot_key_emb: Mat,
    pub item_emb: Mat,
    pub text_blocks: Vec<BlockParams>,
    pub struct_blocks: Vec<BlockParams>,
    /// Indexed by distance from the current turn (0 = current).
    pub turn_pos_emb: Mat,
    /// Fills window slots before the session start; always masked.
    pub null_turn: Mat,
    pub cross_wq: Mat,
    pub cross_wk: Mat,
    pub cross_wv: Mat,
    /// Maps [turn embedding, attended context] (2d) to d.
    pub fc_w: Mat,
    pub fc_b: Mat,
    pub out_w: Mat,
    pub out_b: Mat,
}

impl PredictorParams {
    pub fn zeros(config: &PredictorConfig, sizes: TableSizes) -> Self {
        let d = config.embed_dim;
        let f = config.ffn_dim;
        PredictorParams {
            token_emb: Mat::zeros(sizes.tokens, d),
            position_emb: Mat::zeros(config.max_text_len, d),
            intent_emb: Mat::zeros(sizes.intents, d),
            slot_key_emb: Mat::zeros(sizes.slot_keys, d),
            item_emb: Mat::zeros(sizes.items, d),
            text_blocks: (0..config.text_blocks).map(|_| BlockParams::zeros(d, f)).collect(),
            struct_blocks: (0..config.struct_blocks).map(|_| BlockParams::zeros(d, f)).collect(),
            turn_pos_emb: Mat::zeros(config.num_turns, d),
            null_turn: Mat::zeros(1, d),
            cross_wq: Mat::zeros(d, d),
            cross_wk: Mat::zeros(d, d),
            cross_wv: Mat::zeros(d, d),
            fc_w: Mat::zeros(2 * d, d),
            fc_b: Mat::zeros(1, d),
            out_w: Mat::zeros(1, d),
            out_b: Mat::zeros(1, 1),
        }
    }

    /// Random initialization: embeddings N(0, 0.1^2), weight matrices
    /// N(0, 1/fan_in), layer-norm gains 1, biases 0.
    pub fn init(config: &PredictorConfig, sizes: TableSizes, seed: u64) -> Self {
        let mut p = Self::zeros(config, sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |m: &mut Mat, sd: f64| {
            let normal = Normal::new(0.0, sd).expect("positive sd");
            for v in &mut m.data {
                *v = normal.sample(&mut rng);
            }
        };
        let emb_sd = 0.1;
        fill(&mut p.token_emb, emb_sd);
        fill(&mut p.position_emb, emb_sd);
        fill(&mut p.intent_emb, emb_sd);
        fill(&mut p.slot_key_emb, emb_sd);
        fill(&mut p.item_emb, emb_sd);
        fill(&mut p.turn_pos_emb, emb_sd);
        fill(&mut p.null_turn, emb_sd);
        let d = config.embed_dim as f64;
        let f = config.ffn_dim as f64;
        for block in p.text_blocks.iter_mut().chain(p.struct_blocks.iter_mut()) {
            fill(&mut block.wq, d.powf(-0.5));
            fill(&mut block.wk, d.powf(-0.5));
            fill(&mut block.wv, d.powf(-0.5));
            fill(&mut block.wo, d.powf(-0.5));
            fill(&mut block.ffn_w1, d.powf(-0.5));
            fill(&mut block.ffn_w2, f.powf(-0.5));
            block.ln1_gain.fill(1.0);
            block.ln2_gain.fill(1.0);
        }
        fill(&mut p.cross_wq, d.powf(-0.5));
        fill(&mut p.cross_wk, d.powf(-0.5));
        fill(&mut p.cross_wv, d.powf(-0.5));
        fill(&mut p.fc_w, (2.0 * d).powf(-0.5));
        fill(&mut p.out_w, d.powf(-0.5));
        p
    }

    pub fn table_sizes(&self) -> TableSizes {
        TableSizes {
            tokens: self.token_emb.rows,
            intents: self.intent_emb.rows,
            slot_keys: self.slot_key_emb.rows,
            items: self.item_emb.rows,
        }
    }

    /// All tensors with stable names, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = vec![
            ("token_emb".into(), &self.token_emb),
            ("position_emb".into(), &self.position_emb),
            ("intent_emb".into(), &self.intent_emb),
            ("slot_key_emb".into(), &self.slot_key_emb),
            ("item_emb".into(), &self.item_emb),
        ];
        for (i, b) in self.text_blocks.iter().enumerate() {
            out.extend(b.named(&format!("text.{i}")));
        }
        for (i, b) in self.struct_blocks.iter().enumerate() {
            out.extend(b.named(&format!("struct.{i}")));
        }
        out.extend([
            ("turn_pos_emb".into(), &self.turn_pos_emb),
            ("null_turn".into(), &self.null_turn),
            ("cross_wq".into(), &self.cross_wq),
            ("cross_wk".into(), &self.cross_wk),
            ("cross_wv".into(), &self.cross_wv),
            ("fc_w".into(), &self.fc_w),
            ("fc_b".into(), &self.fc_b),
            ("out_w".into(), &self.out_w),
            ("out_b".into(), &self.out_b),
        ]);
        out
    }

    /// Mutable tensors in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out: Vec<&mut Mat> = vec![
            &mut self.token_emb,
            &mut self.position_emb,
            &mut self.intent_emb,
            &mut self.slot_key_emb,
            &mut self.item_emb,
        ];
        for b in self.text_blocks.iter_mut() {
            out.extend(b.all_mut());
        }
        for b in self.struct_blocks.iter_mut() {
            out.extend(b.all_mut());
        }
        out.extend([
            &mut self.turn_pos_emb,
            &mut self.null_turn,
            &mut self.cross_wq,
            &mut self.cross_wk,
            &mut self.cross_wv,
            &mut self.fc_w,
            &mut self.fc_b,
            &mut self.out_w,
            &mut self.out_b,
        ]);
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    pub fn set_zero(&mut self) {
        for m in self.tensors_mut() {
            m.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &PredictorParams) {
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.tensors_mut() {
            m.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Checks tensor shapes against a config.
    pub fn check_shapes(&self, config: &PredictorConfig) -> Result<()> {
        let expected = Self::zeros(config, self.table_sizes());
        for ((name, a), (_, b)) in self.tensors().iter().zip(expected.tensors()) {
            if (a.rows, a.cols) != (b.rows, b.cols) {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, config expects {}x{}",
                    a.rows, a.cols, b.rows, b.cols
                )));
            }
        }
        if self.tensors().len() != expected.tensors().len() {
            return Err(Error::Shape("block count differs from config".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes() -> TableSizes {
        TableSizes { tokens: 20, intents: 4, slot_keys: 3, items: 5 }
    }

    #[test]
    fn tensor_views_align() {
        let cfg = PredictorConfig::tiny();
        let mut p = PredictorParams::init(&cfg, sizes(), 1);
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        let shapes: Vec<(usize, usize)> = p.tensors().iter().map(|(_, m)| (m.rows, m.cols)).collect();
        let mut_shapes: Vec<(usize, usize)> = p.tensors_mut().iter().map(|m| (m.rows, m.cols)).collect();
        assert_eq!(shapes, mut_shapes);
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        p.check_shapes(&cfg).unwrap();
        assert!(p.check_shapes(&PredictorConfig { embed_dim: 4, ..cfg }).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = PredictorConfig::tiny();
        assert_eq!(PredictorParams::init(&cfg, sizes(), 3), PredictorParams::init(&cfg, sizes(), 3));
        assert_ne!(PredictorParams::init(&cfg, sizes(), 3), PredictorParams::init(&cfg, sizes(), 4));
    }
}
