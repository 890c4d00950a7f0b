//! Transformer-based satisfaction predictor.

pub mod attention;
pub mod block;
pub mod checkpoint;
pub mod config;
pub mod model;
pub mod params;
pub mod tensor;
pub mod vocab;

use std::path::Path;

pub use attention::attend_turns;
pub use config::PredictorConfig;
pub use model::{accumulate_gradients, backward, encode_turn, forward, loss, TurnEmbedding};
pub use params::{PredictorParams, TableSizes};
pub use vocab::{TurnInput, Vocab};

use crate::dialog_model::Session;
use crate::error::Result;

/// Config, vocabulary and weights: everything needed to score sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub config: PredictorConfig,
    pub vocab: Vocab,
    pub params: PredictorParams,
}

impl Predictor {
    /// Builds a vocabulary from `sessions` and randomly initializes weights.
    pub fn new(config: PredictorConfig, sessions: &[Session], seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = Vocab::build(sessions, config.vocab_size);
        let sizes = TableSizes {
            tokens: vocab.num_tokens(),
            intents: vocab.num_intents(),
            slot_keys: vocab.num_slot_keys(),
            items: vocab.num_items(),
        };
        let params = PredictorParams::init(&config, sizes, seed);
        Ok(Predictor { config, vocab, params })
    }

    pub fn window(&self, session: &Session, n: usize) -> Result<Vec<TurnInput>> {
        self.vocab.encode_window(session, n, self.config.num_turns, self.config.max_text_len)
    }

    /// Probability that turn `n` satisfied the user, given turns up to `n`.
    pub fn predict(&self, session: &Session, n: usize) -> Result<f64> {
        let w = self.window(session, n)?;
        Ok(forward(&self.params, &self.config, &w)?.prob)
    }

    pub fn predict_session(&self, session: &Session) -> Result<Vec<f64>> {
        (0..session.len()).map(|n| self.predict(session, n)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthcorpus::{generate, CorpusConfig};

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let corpus = generate(&CorpusConfig { num_sessions: 20, ..CorpusConfig::default() }).unwrap();
        let p = Predictor::new(PredictorConfig::tiny(), &corpus, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        p.save(&path).unwrap();
        let back = Predictor::load(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.predict_session(&corpus[0]).unwrap(), p.predict_session(&corpus[0]).unwrap());
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let corpus = generate(&CorpusConfig { num_sessions: 5, ..CorpusConfig::default() }).unwrap();
        let p = Predictor::new(PredictorConfig::tiny(), &corpus, 9).unwrap();
        let bytes = checkpoint::to_bytes(&p).unwrap();
        assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(checkpoint::from_bytes(b"NOTACKPT0000000000000000").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(checkpoint::from_bytes(&extra).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(checkpoint::from_bytes(&nan).is_err());
    }
}
