//! One round of the game: question, anonymous answers, classification,
//! rewards, and the public log every player learns from.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{classify, ActorModel, AgentType, Alphabet, InterrogatorModel, Message};
use crate::error::{Error, Result};
use crate::nn::tape::Tape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Ordinary symbols; EOS comes on top.
    pub alphabet_size: usize,
    /// Longest question the interrogator may ask (0 disables questioning).
    pub question_limit: usize,
    pub blue_limit: usize,
    pub red_limit: usize,
    pub interrogator_hidden: usize,
    pub blue_hidden: usize,
    pub red_hidden: usize,
    /// Rounds per iteration.
    pub batch_size: usize,
    pub iterations: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            alphabet_size: 4,
            question_limit: 0,
            blue_limit: 8,
            red_limit: 8,
            interrogator_hidden: 8,
            blue_hidden: 8,
            red_hidden: 8,
            batch_size: 64,
            iterations: 2000,
        }
    }
}

impl GameConfig {
    pub fn alphabet(&self) -> Result<Alphabet> {
        Alphabet::new(self.alphabet_size)
    }

    pub fn answer_limit(&self, agent: AgentType) -> usize {
        match agent {
            AgentType::Blue => self.blue_limit,
            AgentType::Red => self.red_limit,
        }
    }

    pub fn hidden(&self, agent: AgentType) -> usize {
        match agent {
            AgentType::Blue => self.blue_hidden,
            AgentType::Red => self.red_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alphabet()?;
        for (name, h) in [
            ("interrogator_hidden", self.interrogator_hidden),
            ("blue_hidden", self.blue_hidden),
            ("red_hidden", self.red_hidden),
        ] {
            if h == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rewards {
    pub interrogator: u8,
    pub blue: u8,
    pub red: u8,
}

/// Reward rule, given the true type and the inferred type of each of the
/// two messages:
///
/// * blue scores when its message is labelled blue,
/// * red scores when its message is labelled blue,
/// * the interrogator scores only when both labels are right.
pub fn assign_rewards(truth: [AgentType; 2], inferred: [AgentType; 2]) -> Rewards {
    let label_of = |agent: AgentType| {
        let slot = truth.iter().position(|&t| t == agent);
        slot.map(|i| inferred[i])
    };
    let blue = u8::from(label_of(AgentType::Blue) == Some(AgentType::Blue));
    let red = u8::from(label_of(AgentType::Red) == Some(AgentType::Blue));
    let interrogator = u8::from(truth == inferred);
    Rewards {
        interrogator,
        blue,
        red,
    }
}

/// Everything that happened in one round. Slot `i` holds the `i`-th
/// anonymous answer as the interrogator saw it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub iteration: u64,
    pub round: u32,
    pub question: Message,
    /// True source of each slot; always a permutation of {blue, red}.
    pub sources: [AgentType; 2],
    pub answers: [Message; 2],
    pub inferred: [AgentType; 2],
    pub p_blue: [f64; 2],
    pub rewards: Rewards,
}

impl InteractionRecord {
    fn slot_of(&self, agent: AgentType) -> usize {
        if self.sources[0] == agent {
            0
        } else {
            1
        }
    }

    pub fn answer_of(&self, agent: AgentType) -> &Message {
        &self.answers[self.slot_of(agent)]
    }

    pub fn label_of(&self, agent: AgentType) -> AgentType {
        self.inferred[self.slot_of(agent)]
    }

    pub fn correct(&self, slot: usize) -> bool {
        self.sources[slot] == self.inferred[slot]
    }

    pub fn correct_count(&self) -> usize {
        (0..2).filter(|&i| self.correct(i)).count()
    }

    /// `question || answer` for a slot.
    pub fn exchange(&self, slot: usize) -> Vec<usize> {
        self.question.concat_indices(&self.answers[slot])
    }

    pub fn validate(&self, alphabet: Alphabet) -> Result<()> {
        if self.sources[0] == self.sources[1] {
            return Err(Error::Logic(format!(
                "round {}/{} has two {} answers",
                self.iteration, self.round, self.sources[0]
            )));
        }
        self.question.validate(alphabet)?;
        for a in &self.answers {
            a.validate(alphabet)?;
        }
        if self.rewards != assign_rewards(self.sources, self.inferred) {
            return Err(Error::Logic(format!(
                "round {}/{} carries rewards inconsistent with its labels",
                self.iteration, self.round
            )));
        }
        Ok(())
    }
}

/// Source of probability-of-blue judgements for full exchanges.
pub trait Judge {
    fn p_blue(&self, scratch: &mut Tape, exchange: &[usize]) -> Result<f64>;
}

impl Judge for InterrogatorModel {
    fn p_blue(&self, scratch: &mut Tape, exchange: &[usize]) -> Result<f64> {
        self.discriminate_sequence_with(scratch, exchange)
    }
}

/// Plays one round with the interrogator's own discriminator.
pub fn play_round<R: Rng + ?Sized>(
    interrogator: &InterrogatorModel,
    blue: &ActorModel,
    red: &ActorModel,
    cfg: &GameConfig,
    at: (u64, u32),
    scratch: &mut Tape,
    rng: &mut R,
) -> Result<InteractionRecord> {
    play_round_judged(interrogator, interrogator, blue, red, cfg, at, scratch, rng)
}

/// Plays one round with an arbitrary judge standing in for the
/// discriminator.
#[allow(clippy::too_many_arguments)]
pub fn play_round_judged<R: Rng + ?Sized, J: Judge + ?Sized>(
    interrogator: &InterrogatorModel,
    judge: &J,
    blue: &ActorModel,
    red: &ActorModel,
    cfg: &GameConfig,
    (iteration, round): (u64, u32),
    scratch: &mut Tape,
    rng: &mut R,
) -> Result<InteractionRecord> {
    let (question, _) = interrogator.question_with(scratch, cfg.question_limit, rng)?;
    let (blue_answer, _) = blue.respond_with(scratch, &question, cfg.blue_limit, rng)?;
    let (red_answer, _) = red.respond_with(scratch, &question, cfg.red_limit, rng)?;

    let (sources, answers) = if rng.gen_bool(0.5) {
        ([AgentType::Blue, AgentType::Red], [blue_answer, red_answer])
    } else {
        ([AgentType::Red, AgentType::Blue], [red_answer, blue_answer])
    };

    let mut p_blue = [0.0; 2];
    for (p, answer) in p_blue.iter_mut().zip(&answers) {
        *p = judge.p_blue(scratch, &question.concat_indices(answer))?;
    }
    let inferred = [classify(p_blue[0]), classify(p_blue[1])];
    Ok(InteractionRecord {
        iteration,
        round,
        question,
        sources,
        answers,
        inferred,
        p_blue,
        rewards: assign_rewards(sources, inferred),
    })
}

/// Append-only record of every round, readable by all players.
#[derive(Clone, Debug, Default)]
pub struct PublicLog {
    records: Vec<InteractionRecord>,
    iteration_starts: Vec<(u64, usize)>,
}

impl PublicLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record. Records must arrive in strictly increasing
    /// `(iteration, round)` order.
    pub fn publish(&mut self, record: InteractionRecord) -> Result<()> {
        if record.sources[0] == record.sources[1] {
            return Err(Error::Logic(
                "record without one blue and one red answer".into(),
            ));
        }
        if let Some(last) = self.records.last() {
            if (record.iteration, record.round) <= (last.iteration, last.round) {
                return Err(Error::Logic(format!(
                    "record {}/{} published after {}/{}",
                    record.iteration, record.round, last.iteration, last.round
                )));
            }
        }
        if self.iteration_starts.last().map(|&(t, _)| t) != Some(record.iteration) {
            self.iteration_starts
                .push((record.iteration, self.records.len()));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn iteration_count(&self) -> usize {
        self.iteration_starts.len()
    }

    /// Records of the `k`-th published iteration.
    pub fn iteration(&self, k: usize) -> &[InteractionRecord] {
        let start = self.iteration_starts[k].1;
        let end = self
            .iteration_starts
            .get(k + 1)
            .map_or(self.records.len(), |&(_, s)| s);
        &self.records[start..end]
    }

    pub fn iterations(&self) -> impl Iterator<Item = &[InteractionRecord]> + '_ {
        (0..self.iteration_count()).map(|k| self.iteration(k))
    }

    /// Records of the last `count` iterations.
    pub fn last_iterations(&self, count: usize) -> &[InteractionRecord] {
        let n = self.iteration_starts.len();
        if count == 0 {
            return &[];
        }
        let first = n.saturating_sub(count);
        match self.iteration_starts.get(first) {
            Some(&(_, start)) => &self.records[start..],
            None => &[],
        }
    }
}

/// Writes records as JSON lines, one object per round.
pub fn write_transcript<W: Write>(
    out: &mut W,
    records: &[InteractionRecord],
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_transcript<R: BufRead>(input: R) -> Result<Vec<InteractionRecord>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|(i, line)| {
            let line = line.map_err(|e| Error::Input(format!("transcript line {}: {e}", i + 1)))?;
            serde_json::from_str(&line)
                .map_err(|e| Error::Input(format!("transcript line {}: {e}", i + 1)))
        })
        .collect()
}
