//! Threshold gate deciding between responding and asking a clarification
//! question, and an offline A/B replay that scores gating variants by CUS.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dialog_model::Session;
use crate::error::{Error, Result};
use crate::evalmetrics::cus;

/// Probabilities the oracle variant reports for satisfied / unsatisfied turns.
pub const ORACLE_HIGH: f64 = 0.99;
pub const ORACLE_LOW: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Respond,
    Clarify,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub probability: f64,
    pub decision: Decision,
    pub threshold: f64,
}

/// Clarifies iff `probability < threshold`; ties respond.
pub fn gate(probability: f64, threshold: f64) -> Result<GateDecision> {
    if !(probability > 0.0 && probability < 1.0) {
        return Err(Error::Domain(format!("probability {probability} outside (0,1)")));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Domain(format!("threshold {threshold} outside (0,1)")));
    }
    let decision = if probability < threshold { Decision::Clarify } else { Decision::Respond };
    Ok(GateDecision { probability, decision, threshold })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarificationOutcome {
    pub user_satisfied_with_question: u8,
    pub post_clarification_rating: f64,
}

/// How simulated users react to a clarification question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorModel {
    /// Chance that clarifying a wrong response leads to a satisfying one.
    pub p_fix: f64,
    /// Chance that a question asked about a correct response annoys the user.
    pub p_annoy: f64,
}

impl Default for BehaviorModel {
    fn default() -> Self {
        BehaviorModel { p_fix: 0.8, p_annoy: 0.5 }
    }
}

impl BehaviorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_fix) || !(0.0..=1.0).contains(&self.p_annoy) {
            return Err(Error::Validation("p_fix and p_annoy must lie in [0,1]".into()));
        }
        Ok(())
    }

    /// Resolves a clarification given the true turn outcome and two uniform
    /// draws (one per possible branch, so variants share random numbers).
    pub fn resolve(&self, turn_satisfied: bool, u_fix: f64, u_annoy: f64) -> ClarificationOutcome {
        if turn_satisfied {
            ClarificationOutcome {
                user_satisfied_with_question: u8::from(u_annoy >= self.p_annoy),
                post_clarification_rating: 1.0,
            }
        } else {
            ClarificationOutcome {
                user_satisfied_with_question: 1,
                post_clarification_rating: if u_fix < self.p_fix { 1.0 } else { 0.0 },
            }
        }
    }
}

/// A gating policy: per-session, per-turn satisfaction probabilities and a
/// threshold. `scores: None` always responds.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub scores: Option<Vec<Vec<f64>>>,
    pub threshold: f64,
}

impl Variant {
    pub fn no_predictor(name: &str) -> Self {
        Variant { name: name.into(), scores: None, threshold: 0.7 }
    }

    /// Scores each turn with `score(session, turn)`.
    pub fn scored(name: &str, corpus: &[Session], threshold: f64, score: impl Fn(&Session, usize) -> Result<f64> + Sync) -> Result<Self> {
        let scores = corpus.par_iter().map(|s| (0..s.len()).map(|n| score(s, n)).collect::<Result<Vec<f64>>>()).collect::<Result<_>>()?;
        Ok(Variant { name: name.into(), scores: Some(scores), threshold })
    }

    /// Knows the true outcome of every turn.
    pub fn oracle(name: &str, corpus: &[Session], threshold: f64) -> Result<Self> {
        Self::scored(name, corpus, threshold, |s, n| {
            let o = s.oracle_satisfaction.as_ref().ok_or_else(|| Error::Validation(format!("session {} has no oracle labels", s.session_id)))?;
            Ok(if o[n] == 1 { ORACLE_HIGH } else { ORACLE_LOW })
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub behavior: BehaviorModel,
    /// When set, each session is assigned to one variant by a hash of its id
    /// with these relative weights (one per variant); otherwise every
    /// variant replays every session.
    pub partition_weights: Option<Vec<f64>>,
    /// Replay only the first `n` sessions of a seeded shuffle.
    pub sample_sessions: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantReport {
    pub variant: String,
    pub avg_cus: f64,
    pub clarification_rate: f64,
    pub n_sessions: usize,
}

pub fn report_csv(reports: &[VariantReport]) -> String {
    let mut s = String::from("variant,avg_cus,clarification_rate,n_sessions\n");
    for r in reports {
        s.push_str(&format!("{},{:.10},{:.10},{}\n", r.variant, r.avg_cus, r.clarification_rate, r.n_sessions));
    }
    s
}

fn id_hash(seed: u64, session_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(session_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Group index for a session under relative `weights`, stable across runs.
pub fn partition(session_id: &str, weights: &[f64]) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(Error::Validation("partition weights must be nonnegative with a positive sum".into()));
    }
    let u = (id_hash(0x7061_7274, session_id) >> 11) as f64 / (1u64 << 53) as f64 * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(weights.iter().rposition(|w| *w > 0.0).expect("positive weight"))
}

struct SessionOutcome {
    cus_sum: f64,
    clarified: usize,
    turns: usize,
}

fn replay(session: &Session, scores: Option<&[f64]>, threshold: f64, behavior: &BehaviorModel, seed: u64) -> Result<SessionOutcome> {
    let oracle = session
        .oracle_satisfaction
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("session {} has no oracle labels", session.session_id)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(id_hash(seed, &session.session_id));
    let mut out = SessionOutcome { cus_sum: 0.0, clarified: 0, turns: oracle.len() };
    for (n, &rating) in oracle.iter().enumerate() {
        let u_fix: f64 = rng.random();
        let u_annoy: f64 = rng.random();
        let clarify = match scores {
            Some(s) => gate(s[n], threshold)?.decision == Decision::Clarify,
            None => false,
        };
        out.cus_sum += if clarify {
            out.clarified += 1;
            let o = behavior.resolve(rating == 1, u_fix, u_annoy);
            cus(o.user_satisfied_with_question as f64, o.post_clarification_rating)?.contextual
        } else {
            rating as f64
        };
    }
    Ok(out)
}

/// Replays the corpus under each variant. Average CUS is the mean over
/// sessions of each session's mean per-turn experience; reports are sorted
/// by average CUS, highest first.
pub fn simulate_ab(corpus: &[Session], variants: &[Variant], config: &SimConfig) -> Result<Vec<VariantReport>> {
    config.behavior.validate()?;
    for v in variants {
        if let Some(s) = &v.scores {
            if s.len() != corpus.len() || s.iter().zip(corpus).any(|(x, c)| x.len() != c.len()) {
                return Err(Error::Shape(format!("variant {} scores do not match the corpus", v.name)));
            }
        }
        if !(v.threshold > 0.0 && v.threshold < 1.0) {
            return Err(Error::Domain(format!("variant {} threshold outside (0,1)", v.name)));
        }
    }
    let mut selected: Vec<usize> = (0..corpus.len()).collect();
    if let Some(n) = config.sample_sessions {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rand::seq::SliceRandom::shuffle(selected.as_mut_slice(), &mut rng);
        selected.truncate(n);
        selected.sort_unstable();
    }
    let groups: Option<Vec<usize>> = match &config.partition_weights {
        Some(w) => {
            if w.len() != variants.len() {
                return Err(Error::Validation(format!("{} partition weights for {} variants", w.len(), variants.len())));
            }
            Some(selected.iter().map(|&i| partition(&corpus[i].session_id, w)).collect::<Result<_>>()?)
        }
        None => None,
    };

    let mut reports = Vec::with_capacity(variants.len());
    for (vi, v) in variants.iter().enumerate() {
        let members: Vec<usize> = match &groups {
            Some(g) => selected.iter().zip(g).filter(|(_, &gi)| gi == vi).map(|(&i, _)| i).collect(),
            None => selected.clone(),
        };
        let outcomes: Vec<SessionOutcome> = members
            .par_iter()
            .map(|&i| replay(&corpus[i], v.scores.as_ref().map(|s| s[i].as_slice()), v.threshold, &config.behavior, config.seed))
            .collect::<Result<_>>()?;
        let n = outcomes.len();
        let turns: usize = outcomes.iter().map(|o| o.turns).sum();
        let avg_cus = if n == 0 { 0.0 } else { outcomes.iter().map(|o| o.cus_sum / o.turns as f64).sum::<f64>() / n as f64 };
        let clarification_rate = if turns == 0 { 0.0 } else { outcomes.iter().map(|o| o.clarified).sum::<usize>() as f64 / turns as f64 };
        reports.push(VariantReport { variant: v.name.clone(), avg_cus, clarification_rate, n_sessions: n });
    }
    reports.sort_by(|a, b| b.avg_cus.total_cmp(&a.avg_cus));
    Ok(reports)
}
