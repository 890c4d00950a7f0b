//! Weak satisfaction labels inferred after the fact from a turn and the
//! user's next move.
//!
//! A logistic model over the 21 [`features`] is fitted on a small set of
//! expert (or oracle) labels and then applied to the whole corpus; its
//! posterior becomes the soft training target of the sequence model.

pub mod features;
pub mod logistic;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialog_model::Session;
use crate::error::{Error, Result};
pub use features::{FeatureExtractor, FeatureVector, Lexicons, Popularity, CURRENT_TURN_FEATURES, NUM_FEATURES};
pub use logistic::{sigmoid, FitReport, LogisticModel};

/// Output clamp that keeps labels strictly inside (0,1).
pub const PROB_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabelModel {
    pub weights: [f64; NUM_FEATURES],
    pub bias: f64,
    pub feature_mean: [f64; NUM_FEATURES],
    pub feature_std: [f64; NUM_FEATURES],
}

impl WeakLabelModel {
    pub fn zeros() -> Self {
        WeakLabelModel {
            weights: [0.0; NUM_FEATURES],
            bias: 0.0,
            feature_mean: [0.0; NUM_FEATURES],
            feature_std: [1.0; NUM_FEATURES],
        }
    }

    fn from_logistic(m: LogisticModel) -> Self {
        let arr = |v: Vec<f64>| -> [f64; NUM_FEATURES] { v.try_into().expect("21 weights") };
        WeakLabelModel {
            weights: arr(m.weights),
            bias: m.bias,
            feature_mean: arr(m.feature_mean),
            feature_std: arr(m.feature_std),
        }
    }
}

pub fn train_weak_labeler(features: &[FeatureVector], labels: &[u8], reg_strength: f64) -> Result<WeakLabelModel> {
    train_weak_labeler_traced(features, labels, reg_strength, None).map(|(m, _)| m)
}

/// Fits the weak labeler and returns the per-iteration objective trace.
/// `init` (standardized weights then bias) defaults to zeros.
pub fn train_weak_labeler_traced(
    features: &[FeatureVector],
    labels: &[u8],
    reg_strength: f64,
    init: Option<&[f64]>,
) -> Result<(WeakLabelModel, FitReport)> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Validation(format!("{} feature vectors for {} labels", features.len(), labels.len())));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Validation("labels must be 0 or 1".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateData("training labels contain a single class".into()));
    }
    let x: Vec<Vec<f64>> = features.iter().map(|f| f.0.to_vec()).collect();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let zero = vec![0.0; NUM_FEATURES + 1];
    let (model, report) = logistic::fit_from(&x, &y, reg_strength, init.unwrap_or(&zero))?;
    Ok((WeakLabelModel::from_logistic(model), report))
}

/// Posterior probability that the user was satisfied with the turn.
pub fn weak_label(model: &WeakLabelModel, fv: &FeatureVector) -> f64 {
    let s = model.weights.iter().zip(fv.values()).map(|(w, v)| w * v).sum::<f64>() + model.bias;
    sigmoid(s).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// A fitted model together with the frozen feature extractor it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabeler {
    pub extractor: FeatureExtractor,
    pub model: WeakLabelModel,
}

impl WeakLabeler {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("serializable");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema { line: e.line(), message: e.to_string() })
    }
}

/// Returns a copy of `sessions` with `weak_labels` set on every session.
pub fn label_corpus(labeler: &WeakLabeler, sessions: &[Session]) -> Vec<Session> {
    sessions
        .iter()
        .map(|s| {
            let labels = (0..s.len())
                .map(|n| weak_label(&labeler.model, &labeler.extractor.extract(s, n).expect("index in range")))
                .collect();
            Session {
                weak_labels: Some(labels),
                ..s.clone()
            }
        })
        .collect()
}

/// Collects (features, oracle label) pairs from sessions carrying oracle labels.
pub fn labeled_pairs(extractor: &FeatureExtractor, sessions: &[Session]) -> (Vec<FeatureVector>, Vec<u8>) {
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for s in sessions {
        if let Some(oracle) = &s.oracle_satisfaction {
            for (n, &l) in oracle.iter().enumerate() {
                feats.push(extractor.extract(s, n).expect("index in range"));
                labels.push(l);
            }
        }
    }
    (feats, labels)
}

/// Logistic scorer restricted to signals available before the user's next
/// turn. Serves as the handcrafted-feature comparison predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBaseline {
    pub extractor: FeatureExtractor,
    pub features: Vec<usize>,
    pub model: LogisticModel,
}

impl FeatureBaseline {
    /// Fits on the weak labels of `sessions`.
    pub fn train(extractor: FeatureExtractor, sessions: &[Session], reg_strength: f64) -> Result<Self> {
        let features = CURRENT_TURN_FEATURES.to_vec();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for s in sessions {
            let weak = s
                .weak_labels
                .as_ref()
                .ok_or_else(|| Error::Validation(format!("session {} has no weak labels", s.session_id)))?;
            for (n, &l) in weak.iter().enumerate() {
                x.push(extractor.extract(s, n)?.project(&features));
                y.push(l);
            }
        }
        let (model, _) = logistic::fit(&x, &y, reg_strength)?;
        Ok(FeatureBaseline { extractor, features, model })
    }

    pub fn score(&self, session: &Session, n: usize) -> Result<f64> {
        let fv = self.extractor.extract(session, n)?;
        Ok(self.model.predict(&fv.project(&self.features)).clamp(PROB_EPS, 1.0 - PROB_EPS))
    }
}
