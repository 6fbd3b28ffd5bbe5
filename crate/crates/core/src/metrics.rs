//! Per-iteration statistics and the equilibrium verdict derived from them.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentType, Message};
use crate::error::{Error, Result};
use crate::game::{InteractionRecord, PublicLog};

/// Accuracy at or above which a run counts as separating.
pub const SEPARATING_THRESHOLD: f64 = 0.80;
/// Accuracy at or below which a run counts as pooling.
pub const POOLING_THRESHOLD: f64 = 0.65;
/// Fraction of the run, counted from the end, that verdicts look at.
pub const DEFAULT_WINDOW: f64 = 0.2;

/// One CSV row per iteration. Entropies and mutual information are in bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    /// Fraction of messages labelled correctly.
    #[serde(rename = "acc")]
    pub accuracy: f64,
    #[serde(rename = "acc_blue")]
    pub accuracy_blue: f64,
    #[serde(rename = "acc_red")]
    pub accuracy_red: f64,
    /// Mean interrogator reward, i.e. the fraction of rounds with both
    /// labels right.
    #[serde(rename = "r_I")]
    pub reward_interrogator: f64,
    #[serde(rename = "r_blue")]
    pub reward_blue: f64,
    #[serde(rename = "r_red")]
    pub reward_red: f64,
    #[serde(rename = "H_blue")]
    pub entropy_blue: f64,
    #[serde(rename = "H_red")]
    pub entropy_red: f64,
    #[serde(rename = "MI")]
    pub mutual_information: f64,
}

impl MetricsRow {
    pub fn from_records(iteration: u64, records: &[InteractionRecord]) -> Result<Self> {
        let s = RecordStats::from_records(records)?;
        Ok(Self {
            iteration,
            accuracy: s.accuracy,
            accuracy_blue: s.accuracy_blue,
            accuracy_red: s.accuracy_red,
            reward_interrogator: s.reward_interrogator,
            reward_blue: s.reward_blue,
            reward_red: s.reward_red,
            entropy_blue: s.entropy_blue,
            entropy_red: s.entropy_red,
            mutual_information: s.mutual_information,
        })
    }
}

/// Aggregates over an arbitrary set of rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordStats {
    pub rounds: usize,
    pub accuracy: f64,
    pub accuracy_blue: f64,
    pub accuracy_red: f64,
    pub reward_interrogator: f64,
    pub reward_blue: f64,
    pub reward_red: f64,
    pub entropy_blue: f64,
    pub entropy_red: f64,
    pub mutual_information: f64,
    /// Mean number of ordinary symbols per answer.
    pub length_blue: f64,
    pub length_red: f64,
}

impl RecordStats {
    pub fn from_records(records: &[InteractionRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Input("statistics over zero rounds".into()));
        }
        let n = records.len() as f64;
        let mean = |f: &dyn Fn(&InteractionRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let labelled_right = |agent: AgentType| {
            move |r: &InteractionRecord| f64::from(u8::from(r.label_of(agent) == agent))
        };
        let answers = |agent: AgentType| records.iter().map(move |r| r.answer_of(agent));
        Ok(Self {
            rounds: records.len(),
            accuracy: mean(&|r| r.correct_count() as f64 / 2.0),
            accuracy_blue: mean(&labelled_right(AgentType::Blue)),
            accuracy_red: mean(&labelled_right(AgentType::Red)),
            reward_interrogator: mean(&|r| f64::from(r.rewards.interrogator)),
            reward_blue: mean(&|r| f64::from(r.rewards.blue)),
            reward_red: mean(&|r| f64::from(r.rewards.red)),
            entropy_blue: entropy(answers(AgentType::Blue)),
            entropy_red: entropy(answers(AgentType::Red)),
            mutual_information: type_message_information(records),
            length_blue: mean(&|r| r.answer_of(AgentType::Blue).body_len() as f64),
            length_red: mean(&|r| r.answer_of(AgentType::Red).body_len() as f64),
        })
    }
}

/// Plug-in Shannon entropy, in bits, of the empirical distribution of `items`.
pub fn entropy<T: Eq + Hash>(items: impl IntoIterator<Item = T>) -> f64 {
    let mut counts: HashMap<T, usize> = HashMap::new();
    let mut total = 0usize;
    for it in items {
        *counts.entry(it).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    // summation order must not depend on hash order
    let mut counts: Vec<usize> = counts.into_values().collect();
    counts.sort_unstable();
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Plug-in mutual information, in bits, between paired discrete samples.
pub fn mutual_information<X: Eq + Hash + Clone, Y: Eq + Hash + Clone>(pairs: &[(X, Y)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let hx = entropy(pairs.iter().map(|(x, _)| x.clone()));
    let hy = entropy(pairs.iter().map(|(_, y)| y.clone()));
    let hxy = entropy(pairs.iter().cloned());
    // clamp rounding residue; the bound min(H(X), H(Y)) holds exactly in reals
    (hx + hy - hxy).max(0.0).min(hx.min(hy))
}

/// Mutual information between an answer's true source and the answer
/// itself (as an atom).
pub fn type_message_information(records: &[InteractionRecord]) -> f64 {
    let pairs: Vec<(AgentType, &Message)> = records
        .iter()
        .flat_map(|r| (0..2).map(move |i| (r.sources[i], &r.answers[i])))
        .collect();
    mutual_information(&pairs)
}

/// Number of trailing iterations covered by `window` of `total`.
pub fn window_len(total: usize, window: f64) -> Result<usize> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Input(format!(
            "window must lie in (0, 1], got {window}"
        )));
    }
    Ok(((window * total as f64).ceil() as usize).clamp(1.min(total), total))
}

/// Rounds of the final `window` fraction of the iterations in `log`.
pub fn window_records(log: &PublicLog, window: f64) -> Result<&[InteractionRecord]> {
    if log.is_empty() {
        return Err(Error::Input("empty log".into()));
    }
    let k = window_len(log.iteration_count(), window)?;
    Ok(log.last_iterations(k))
}

/// Mean per-message accuracy over the final `window` fraction of iterations.
pub fn accuracy_window(log: &PublicLog, window: f64) -> Result<f64> {
    Ok(RecordStats::from_records(window_records(log, window)?)?.accuracy)
}

/// Same as [`accuracy_window`] computed from metrics rows. Every row must
/// summarize the same number of rounds.
pub fn accuracy_window_rows(rows: &[MetricsRow], window: f64) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Input("no metrics rows".into()));
    }
    let k = window_len(rows.len(), window)?;
    let tail = &rows[rows.len() - k..];
    Ok(tail.iter().map(|r| r.accuracy).sum::<f64>() / k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equilibrium {
    Pooling,
    Separating,
    Undetermined,
}

impl std::fmt::Display for Equilibrium {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Equilibrium::Pooling => "pooling",
            Equilibrium::Separating => "separating",
            Equilibrium::Undetermined => "undetermined",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumLabel {
    pub kind: Equilibrium,
    pub accuracy: f64,
}

pub fn classify_equilibrium(accuracy: f64) -> Result<EquilibriumLabel> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::Input(format!("accuracy {accuracy} outside [0, 1]")));
    }
    let kind = if accuracy >= SEPARATING_THRESHOLD {
        Equilibrium::Separating
    } else if accuracy <= POOLING_THRESHOLD {
        Equilibrium::Pooling
    } else {
        Equilibrium::Undetermined
    };
    Ok(EquilibriumLabel { kind, accuracy })
}
