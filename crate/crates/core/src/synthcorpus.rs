//! Synthetic multi-turn dialogue corpora with injected errors and oracle
//! satisfaction labels.
//!
//! Each turn is corrupted independently: with probability
//! `asr + nlu + user` exactly one error type is applied, chosen in
//! proportion to the three rates. A corrupted turn always yields a response
//! that does not match what the user wanted and is labeled 0. The user's
//! next move then leaves the footprints a weak labeler can pick up: low
//! upstream confidences, rephrases, negations, terminations and short gaps.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialog_model::{tokenize, DialogueTurn, Session, Slot};
use crate::error::{Error, Result};

pub const NEGATION_PREFIXES: &[&str] = &["no", "no i said", "not that", "no no", "wrong"];
pub const NEGATION_TURNS: &[&str] = &["no that is wrong", "that is not what i asked", "no not that one", "wrong"];
pub const TERMINATION_TURNS: &[&str] = &["stop", "cancel", "forget it", "never mind", "no stop", "quit"];
pub const AFFIRMATION_PREFIXES: &[&str] = &["thanks", "great", "ok now", "good"];
/// Tokens an ASR error substitutes into the utterance.
pub const ASR_CONFUSIONS: &[&str] = &[
    "up", "shoe", "blew", "moo", "hollow", "sing", "rain", "wine", "hey", "lump", "fur", "bay",
];

/// One catalog entry: an intent, how users ask for it, and what can be asked for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_intent: String,
    /// Utterance templates; `{item}` is replaced by the item name.
    pub templates: Vec<String>,
    pub items: Vec<String>,
    pub slot_key: String,
    /// Voice response template; `{item}` is replaced by the returned item.
    pub response: String,
    /// Relative frequency with which users start this intent.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Shape parameters of the beta distributions confidences are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub num_sessions: usize,
    pub turns_min: usize,
    pub turns_max: usize,
    pub asr_error_rate: f64,
    pub nlu_error_rate: f64,
    pub user_error_rate: f64,
    pub rephrase_prob: f64,
    /// Probability a satisfied user continues with a fresh intent.
    pub continue_prob: f64,
    pub confidence_clean: BetaShape,
    pub confidence_degraded: BetaShape,
    pub confidence_corrupted: BetaShape,
    pub domain_catalog: Vec<DomainSpec>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 0,
            num_sessions: 1000,
            turns_min: 1,
            turns_max: 8,
            asr_error_rate: 0.10,
            nlu_error_rate: 0.08,
            user_error_rate: 0.05,
            rephrase_prob: 0.6,
            continue_prob: 0.7,
            confidence_clean: BetaShape { alpha: 9.0, beta: 1.0 },
            confidence_degraded: BetaShape { alpha: 7.5, beta: 2.5 },
            confidence_corrupted: BetaShape { alpha: 5.5, beta: 4.5 },
            domain_catalog: default_catalog(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        for (name, v) in [
            ("asr_error_rate", self.asr_error_rate),
            ("nlu_error_rate", self.nlu_error_rate),
            ("user_error_rate", self.user_error_rate),
            ("rephrase_prob", self.rephrase_prob),
            ("continue_prob", self.continue_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0,1]"));
            }
        }
        if self.asr_error_rate + self.nlu_error_rate + self.user_error_rate > 1.0 + 1e-12 {
            return bad("error rates sum above 1".into());
        }
        if self.num_sessions == 0 {
            return bad("num_sessions must be >= 1".into());
        }
        if self.turns_min == 0 || self.turns_max < self.turns_min {
            return bad(format!("invalid turn range [{}, {}]", self.turns_min, self.turns_max));
        }
        for shape in [self.confidence_clean, self.confidence_degraded, self.confidence_corrupted] {
            if !(shape.alpha > 0.0 && shape.beta > 0.0 && shape.alpha.is_finite() && shape.beta.is_finite()) {
                return bad(format!("invalid beta shape {shape:?}"));
            }
        }
        if self.domain_catalog.len() < 2 {
            return bad("catalog needs at least two domains".into());
        }
        for spec in &self.domain_catalog {
            if spec.templates.is_empty() || spec.items.len() < 2 || spec.weight <= 0.0 {
                return bad(format!("catalog entry {} needs templates, >= 2 items and positive weight", spec.domain_intent));
            }
            if !spec.domain_intent.contains('-') {
                return bad(format!("domain_intent {} must look like domain-intent", spec.domain_intent));
            }
        }
        Ok(())
    }
}

/// What happened to a generated turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TurnError {
    None,
    Asr,
    Nlu,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    Content { domain: usize, item: usize },
    Negate,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lead {
    Plain,
    Negation,
    Affirmation,
}

pub fn generate(config: &CorpusConfig) -> Result<Vec<Session>> {
    Ok(generate_with_trace(config)?.into_iter().map(|(s, _)| s).collect())
}

/// Like [`generate`] but also returns the per-turn injected error types.
pub fn generate_with_trace(config: &CorpusConfig) -> Result<Vec<(Session, Vec<TurnError>)>> {
    config.validate()?;
    Ok((0..config.num_sessions)
        .into_par_iter()
        .map(|idx| SessionBuilder::new(config, idx).build())
        .collect())
}

/// Random stream for one session; independent of how sessions are scheduled.
pub fn session_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct SessionBuilder<'a> {
    config: &'a CorpusConfig,
    index: usize,
    rng: ChaCha8Rng,
    clean: Beta<f64>,
    degraded: Beta<f64>,
    corrupted: Beta<f64>,
}

impl<'a> SessionBuilder<'a> {
    fn new(config: &'a CorpusConfig, index: usize) -> Self {
        let beta = |s: BetaShape| Beta::new(s.alpha, s.beta).expect("validated beta shape");
        SessionBuilder {
            config,
            index,
            rng: session_rng(config.seed, index),
            clean: beta(config.confidence_clean),
            degraded: beta(config.confidence_degraded),
            corrupted: beta(config.confidence_corrupted),
        }
    }

    fn build(mut self) -> (Session, Vec<TurnError>) {
        let cfg = self.config;
        let length = self.rng.random_range(cfg.turns_min..=cfg.turns_max);
        let mut turns = Vec::with_capacity(length);
        let mut oracle = Vec::with_capacity(length);
        let mut trace = Vec::with_capacity(length);

        let mut goal = self.fresh_goal();
        let mut lead = Lead::Plain;
        let mut previous_template = None;
        // Goal to resume after a negation turn.
        let mut pending: Option<Goal> = None;
        let mut clock = 0.0;

        while turns.len() < length {
            let error = self.draw_error();
            let (turn, template) = self.realize(goal, lead, error, previous_template, clock);
            let satisfied = error == TurnError::None;
            turns.push(turn);
            oracle.push(u8::from(satisfied));
            trace.push(error);

            let may_end = turns.len() >= cfg.turns_min;
            if turns.len() == length {
                break;
            }
            clock += self.gap(satisfied);

            let next = if satisfied {
                if let Some(resume) = pending.take() {
                    Some((resume, Lead::Plain, None))
                } else if may_end && (matches!(goal, Goal::Terminate) || !self.rng.random_bool(cfg.continue_prob)) {
                    None
                } else {
                    let lead = if self.rng.random_bool(0.15) { Lead::Affirmation } else { Lead::Plain };
                    Some((self.fresh_goal(), lead, None))
                }
            } else {
                match goal {
                    Goal::Content { .. } => {
                        if self.rng.random_bool(cfg.rephrase_prob) {
                            let lead = if self.rng.random_bool(0.5) { Lead::Negation } else { Lead::Plain };
                            Some((goal, lead, template))
                        } else if self.rng.random_bool(0.5) {
                            pending = Some(goal);
                            Some((Goal::Negate, Lead::Plain, None))
                        } else if may_end && self.rng.random_bool(0.5) {
                            None
                        } else {
                            Some((Goal::Terminate, Lead::Plain, None))
                        }
                    }
                    // A misheard control turn: the user retries it.
                    Goal::Negate | Goal::Terminate => Some((goal, Lead::Plain, template)),
                }
            };
            match next {
                Some((g, l, t)) => {
                    goal = g;
                    lead = l;
                    previous_template = t;
                }
                None => break,
            }
        }

        let session = Session {
            session_id: format!("s{}-{:07}", cfg.seed, self.index),
            turns,
            oracle_satisfaction: Some(oracle),
            weak_labels: None,
        };
        (session, trace)
    }

    fn draw_error(&mut self) -> TurnError {
        let cfg = self.config;
        let u: f64 = self.rng.random();
        if u < cfg.asr_error_rate {
            TurnError::Asr
        } else if u < cfg.asr_error_rate + cfg.nlu_error_rate {
            TurnError::Nlu
        } else if u < cfg.asr_error_rate + cfg.nlu_error_rate + cfg.user_error_rate {
            TurnError::User
        } else {
            TurnError::None
        }
    }

    fn fresh_goal(&mut self) -> Goal {
        let catalog = &self.config.domain_catalog;
        let domain = weighted_index(&mut self.rng, catalog.iter().map(|d| d.weight));
        let item = weighted_index(&mut self.rng, (0..catalog[domain].items.len()).map(|k| 1.0 / (k as f64 + 1.0)));
        Goal::Content { domain, item }
    }

    fn gap(&mut self, satisfied: bool) -> f64 {
        let (base, mean) = if satisfied { (10.0, 40.0) } else { (2.0, 4.0) };
        base + Exp::new(1.0 / mean).expect("positive rate").sample(&mut self.rng)
    }

    fn confidence(&mut self, which: Confidence) -> f64 {
        let v = match which {
            Confidence::Clean => self.clean.sample(&mut self.rng),
            Confidence::Degraded => self.degraded.sample(&mut self.rng),
            Confidence::Corrupted => self.corrupted.sample(&mut self.rng),
        };
        v.clamp(0.0, 1.0)
    }

    fn other_index(&mut self, len: usize, avoid: usize) -> usize {
        let k = self.rng.random_range(0..len - 1);
        if k >= avoid {
            k + 1
        } else {
            k
        }
    }

    /// Builds the logged turn for a goal under an error. Returns the turn and
    /// the template index used, so a rephrase can pick a different one.
    fn realize(
        &mut self,
        goal: Goal,
        lead: Lead,
        error: TurnError,
        avoid_template: Option<usize>,
        clock: f64,
    ) -> (DialogueTurn, Option<usize>) {
        let catalog = &self.config.domain_catalog;
        let (mut query, template, mut intent, mut slots, mut result_item, mut response) = match goal {
            Goal::Content { domain, item } => {
                let spec = &catalog[domain];
                let template = match avoid_template {
                    Some(prev) if spec.templates.len() > 1 => self.other_index(spec.templates.len(), prev),
                    _ => self.rng.random_range(0..spec.templates.len()),
                };
                let name = &spec.items[item];
                (
                    tokenize(&spec.templates[template].replace("{item}", name)),
                    Some(template),
                    spec.domain_intent.clone(),
                    vec![Slot { key: spec.slot_key.clone(), value: tokenize(name) }],
                    item_id(&spec.domain_intent, name),
                    tokenize(&spec.response.replace("{item}", name)),
                )
            }
            Goal::Negate => (
                tokenize(NEGATION_TURNS.choose(&mut self.rng).unwrap()),
                None,
                "general-negate".to_string(),
                vec![],
                "none".to_string(),
                tokenize("sorry let me try again"),
            ),
            Goal::Terminate => (
                tokenize(TERMINATION_TURNS.choose(&mut self.rng).unwrap()),
                None,
                "general-cancel".to_string(),
                vec![],
                "none".to_string(),
                tokenize("okay cancelled"),
            ),
        };

        let (asr_conf, nlu_conf) = match error {
            TurnError::None | TurnError::User => (Confidence::Clean, Confidence::Clean),
            TurnError::Asr => (Confidence::Corrupted, Confidence::Degraded),
            TurnError::Nlu => (Confidence::Degraded, Confidence::Corrupted),
        };

        match (error, goal) {
            (TurnError::None, _) => {}
            (TurnError::Asr, Goal::Content { domain, item }) => {
                // Misheard item words; retrieval returns a different item.
                let spec = &catalog[domain];
                let heard = self.corrupt_tokens(&tokenize(&spec.items[item]));
                query = splice_item(&query, &tokenize(&spec.items[item]), &heard);
                slots = vec![Slot { key: spec.slot_key.clone(), value: heard }];
                let wrong = self.other_index(spec.items.len(), item);
                result_item = item_id(&spec.domain_intent, &spec.items[wrong]);
                response = tokenize(&spec.response.replace("{item}", &spec.items[wrong]));
            }
            (TurnError::Nlu, Goal::Content { domain, item }) => {
                // Correct text, wrong domain-intent.
                let wrong_domain = self.other_index(catalog.len(), domain);
                let spec = &catalog[wrong_domain];
                let name = &catalog[domain].items[item];
                intent = spec.domain_intent.clone();
                slots = vec![Slot { key: spec.slot_key.clone(), value: tokenize(name) }];
                let pick = self.rng.random_range(0..spec.items.len());
                result_item = item_id(&spec.domain_intent, &spec.items[pick]);
                response = tokenize(&spec.response.replace("{item}", &spec.items[pick]));
            }
            (TurnError::User, Goal::Content { domain, item }) => {
                // The user leaves the item out or truncates it; the system guesses.
                let spec = &catalog[domain];
                let full = tokenize(&spec.items[item]);
                let said: Vec<String> = if full.len() > 1 && self.rng.random_bool(0.5) {
                    full[..1].to_vec()
                } else {
                    vec![]
                };
                query = splice_item(&query, &full, &said);
                if query.is_empty() {
                    query = tokenize("play");
                }
                slots = if said.is_empty() { vec![] } else { vec![Slot { key: spec.slot_key.clone(), value: said }] };
                let wrong = self.other_index(spec.items.len(), item);
                result_item = item_id(&spec.domain_intent, &spec.items[wrong]);
                response = tokenize(&spec.response.replace("{item}", &spec.items[wrong]));
            }
            (TurnError::Asr, _) => {
                // Misheard control word: the system treats it as an unrelated request.
                query = self.corrupt_tokens(&query);
                intent = "general-unknown".to_string();
                response = tokenize("sorry i did not understand");
            }
            (TurnError::Nlu, _) | (TurnError::User, _) => {
                let spec = &catalog[self.rng.random_range(0..catalog.len())];
                let pick = self.rng.random_range(0..spec.items.len());
                intent = spec.domain_intent.clone();
                result_item = item_id(&spec.domain_intent, &spec.items[pick]);
                response = tokenize(&spec.response.replace("{item}", &spec.items[pick]));
            }
        }

        match lead {
            Lead::Plain => {}
            Lead::Negation => query = prepend(NEGATION_PREFIXES.choose(&mut self.rng).unwrap(), query),
            Lead::Affirmation => query = prepend(AFFIRMATION_PREFIXES.choose(&mut self.rng).unwrap(), query),
        }

        let turn = DialogueTurn {
            query,
            domain_intent: intent,
            slots,
            result_item,
            voice_response: response,
            timestamp: clock,
            asr_confidence: self.confidence(asr_conf),
            nlu_confidence: self.confidence(nlu_conf),
        };
        (turn, template)
    }

    /// Replaces one or two tokens with acoustic confusions, always changing
    /// at least one token.
    fn corrupt_tokens(&mut self, tokens: &[String]) -> Vec<String> {
        let mut out = tokens.to_vec();
        let hits = if out.len() > 1 && self.rng.random_bool(0.5) { 2 } else { 1 };
        for _ in 0..hits {
            let pos = self.rng.random_range(0..out.len());
            let replacement = loop {
                let c = *ASR_CONFUSIONS.choose(&mut self.rng).unwrap();
                if c != out[pos] {
                    break c;
                }
            };
            out[pos] = replacement.to_string();
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Confidence {
    Clean,
    Degraded,
    Corrupted,
}

fn weighted_index(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if u < w {
            return i;
        }
        u -= w;
        last = i;
    }
    last
}

fn item_id(domain_intent: &str, name: &str) -> String {
    format!("{}:{}", domain_intent, name.replace(' ', "_"))
}

fn prepend(prefix: &str, query: Vec<String>) -> Vec<String> {
    let mut out = tokenize(prefix);
    out.extend(query);
    out
}

/// Replaces the first occurrence of `item` inside `query` by `with`.
fn splice_item(query: &[String], item: &[String], with: &[String]) -> Vec<String> {
    if let Some(pos) = query.windows(item.len()).position(|w| w == item) {
        let mut out = query[..pos].to_vec();
        out.extend_from_slice(with);
        out.extend_from_slice(&query[pos + item.len()..]);
        out
    } else {
        query.to_vec()
    }
}

pub fn default_catalog() -> Vec<DomainSpec> {
    let spec = |intent: &str, slot: &str, templates: &[&str], items: &[&str], response: &str, weight: f64| DomainSpec {
        domain_intent: intent.into(),
        templates: templates.iter().map(|s| s.to_string()).collect(),
        items: items.iter().map(|s| s.to_string()).collect(),
        slot_key: slot.into(),
        response: response.into(),
        weight,
    };
    vec![
        spec(
            "music-play",
            "song",
            &["play the song {item}", "play {item}", "i want to hear {item}", "put on the song {item}"],
            &[
                "show me love", "yellow submarine", "let it be", "blue moon", "hotel california",
                "shape of you", "bad guy", "imagine", "yesterday", "dancing queen", "hey jude", "rolling in the deep",
            ],
            "now playing the song {item}",
            0.32,
        ),
        spec(
            "video-play",
            "video",
            &["play the video {item}", "show me the video {item}", "i want to watch {item}"],
            &["funny cats", "cooking pasta", "lion king", "ocean documentary", "car review", "magic tricks"],
            "here is the video {item}",
            0.16,
        ),
        spec(
            "weather-query",
            "city",
            &["what is the weather in {item}", "weather in {item}", "will it rain in {item} today"],
            &["beijing", "shanghai", "sydney", "new york", "london", "paris", "shenzhen"],
            "the weather in {item} is sunny with light wind",
            0.16,
        ),
        spec(
            "alarm-set",
            "time",
            &["set an alarm for {item}", "wake me up at {item}"],
            &["seven am", "six thirty", "eight pm", "noon", "five fifteen"],
            "your alarm is set for {item}",
            0.1,
        ),
        spec(
            "news-play",
            "topic",
            &["play the {item} news", "tell me the latest {item} news"],
            &["sports", "technology", "finance", "world", "local"],
            "here are the latest {item} headlines",
            0.1,
        ),
        spec(
            "story-play",
            "story",
            &["tell me the story {item}", "read the story {item}"],
            &["the little prince", "snow white", "three little pigs", "the ugly duckling"],
            "here is the story {item}",
            0.1,
        ),
        spec(
            "player-stop",
            "target",
            &["stop the {item}", "pause the {item}"],
            &["music", "video", "story"],
            "okay stopping the {item}",
            0.06,
        ),
    ]
}
