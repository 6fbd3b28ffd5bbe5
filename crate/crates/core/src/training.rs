//! Two-stage learning: critics and the discriminator fit the published
//! rounds, then every actor climbs its critic's expected reward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::seq::DecodedStep;
use crate::agents::{
    ActorModel, AgentType, Alphabet, CriticModel, InterrogatorModel, Message, QFunction, Sampling,
};
use crate::error::{Error, Result};
use crate::game::{play_round, GameConfig, InteractionRecord, PublicLog};
use crate::metrics::MetricsRow;
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::module::{checksum_tensors, Module};
use crate::nn::ops::BCE_CLAMP;
use crate::nn::tape::{Tape, Var};

/// What the discriminator is fitted to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorTarget {
    /// 1 iff the message really came from blue.
    #[default]
    TrueSource,
    /// 1 iff the interrogator's own label for the message was right.
    LabelAgreement,
}

impl DiscriminatorTarget {
    pub fn target(self, truth: AgentType, label: AgentType) -> f64 {
        let hit = match self {
            DiscriminatorTarget::TrueSource => truth == AgentType::Blue,
            DiscriminatorTarget::LabelAgreement => truth == label,
        };
        f64::from(u8::from(hit))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub adam: AdamConfig,
    pub discriminator_target: DiscriminatorTarget,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            discriminator_target: DiscriminatorTarget::TrueSource,
        }
    }
}

/// `blue` or `red` with its actor, critic and their optimizers.
#[derive(Clone, Debug)]
pub struct AnsweringAgent {
    pub kind: AgentType,
    pub actor: ActorModel,
    pub critic: CriticModel,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl AnsweringAgent {
    pub fn new<R: Rng + ?Sized>(
        kind: AgentType,
        alphabet: Alphabet,
        hidden: usize,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let actor = ActorModel::new(alphabet, hidden, rng)?;
        let critic = CriticModel::new(alphabet, hidden, rng)?;
        Ok(Self {
            kind,
            actor_opt: AdamState::new(adam, &actor.tensors()),
            critic_opt: AdamState::new(adam, &critic.tensors()),
            actor,
            critic,
        })
    }
}

#[derive(Clone, Debug)]
pub struct InterrogatorAgent {
    pub model: InterrogatorModel,
    pub question_opt: AdamState,
    pub discriminator_opt: AdamState,
    pub critic_opt: AdamState,
}

impl InterrogatorAgent {
    pub fn new<R: Rng + ?Sized>(
        alphabet: Alphabet,
        hidden: usize,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let model = InterrogatorModel::new(alphabet, hidden, rng)?;
        Ok(Self {
            question_opt: AdamState::new(adam, &model.decoder.tensors()),
            discriminator_opt: AdamState::new(adam, &model.discriminator_tensors()),
            critic_opt: AdamState::new(adam, &model.critic.tensors()),
            model,
        })
    }
}

/// All three players.
#[derive(Clone, Debug)]
pub struct Players {
    pub interrogator: InterrogatorAgent,
    pub blue: AnsweringAgent,
    pub red: AnsweringAgent,
}

impl Players {
    pub fn new<R: Rng + ?Sized>(
        game: &GameConfig,
        training: &TrainingConfig,
        rng: &mut R,
    ) -> Result<Self> {
        game.validate()?;
        let alphabet = game.alphabet()?;
        Ok(Self {
            interrogator: InterrogatorAgent::new(
                alphabet,
                game.interrogator_hidden,
                training.adam,
                rng,
            )?,
            blue: AnsweringAgent::new(
                AgentType::Blue,
                alphabet,
                game.blue_hidden,
                training.adam,
                rng,
            )?,
            red: AnsweringAgent::new(
                AgentType::Red,
                alphabet,
                game.red_hidden,
                training.adam,
                rng,
            )?,
        })
    }

    /// Fingerprints of the parameter groups each stage may touch.
    pub fn checksums(&self) -> StageChecksums {
        StageChecksums {
            actors: [
                self.blue.actor.checksum(),
                self.red.actor.checksum(),
                self.interrogator.model.decoder.checksum(),
            ],
            learners: [
                self.blue.critic.checksum(),
                self.red.critic.checksum(),
                self.interrogator.model.critic.checksum(),
                checksum_tensors(self.interrogator.model.discriminator_tensors()),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageChecksums {
    /// blue actor, red actor, interrogator question branch
    pub actors: [u64; 3],
    /// blue critic, red critic, interrogator critic, discriminator
    pub learners: [u64; 4],
}

// -- losses ----------------------------------------------------------------

/// `sum_k H[q(seq[..k])[seq[k]], target]` recorded on the tape.
pub fn critic_loss_on_tape(
    tape: &mut Tape,
    critic: &CriticModel,
    vars: &crate::agents::CriticVars,
    seq: &[usize],
    target: f64,
) -> Result<Var> {
    if seq.is_empty() {
        return Err(Error::Input("critic loss over an empty sequence".into()));
    }
    let trace = critic.q_trace(tape, vars, seq, seq.len())?;
    let terms: Vec<Var> = trace
        .iter()
        .zip(seq)
        .map(|(&q, &s)| {
            let picked = tape.index(q, s);
            tape.bce(picked, target, BCE_CLAMP)
        })
        .collect();
    Ok(tape.sum(&terms))
}

fn critic_loss(critic: &CriticModel, seq: &[usize], target: f64) -> Result<f64> {
    if let Some(bad) = seq.iter().find(|&&s| s >= critic.alphabet().total()) {
        return Err(Error::Input(format!("symbol {bad} outside the alphabet")));
    }
    let mut tape = Tape::new();
    let (vars, _) = critic.bind(&mut tape);
    let loss = critic_loss_on_tape(&mut tape, critic, &vars, seq, target)?;
    tape.check_finite()?;
    Ok(tape.scalar(loss))
}

/// Answering-agent critic loss: every position is pushed toward "this
/// message was labelled blue".
pub fn agent_critic_loss(critic: &CriticModel, seq: &[usize], label: AgentType) -> Result<f64> {
    critic_loss(critic, seq, f64::from(u8::from(label == AgentType::Blue)))
}

/// Interrogator critic loss: every position is pushed toward "the label
/// was right".
pub fn interrogator_critic_loss(
    critic: &CriticModel,
    seq: &[usize],
    truth: AgentType,
    label: AgentType,
) -> Result<f64> {
    critic_loss(critic, seq, f64::from(u8::from(label == truth)))
}

pub fn discriminator_loss(
    interrogator: &InterrogatorModel,
    seq: &[usize],
    truth: AgentType,
    label: AgentType,
    mode: DiscriminatorTarget,
) -> Result<f64> {
    crate::agents::validate_exchange(interrogator.alphabet(), seq)?;
    let mut tape = Tape::new();
    let (vars, _) = interrogator.bind_discriminator(&mut tape);
    let p = interrogator.discriminate_on_tape(&mut tape, &vars, seq)?;
    let loss = tape.bce(p, mode.target(truth, label), BCE_CLAMP);
    tape.check_finite()?;
    Ok(tape.scalar(loss))
}

// -- training with data ------------------------------------------------------

/// Sequence and 0/1 target for one supervised example.
pub type Example = (Vec<usize>, f64);

/// One accumulated Adam step of a critic over `examples`. Returns the
/// summed loss before the step.
pub fn train_critic(
    critic: &mut CriticModel,
    opt: &mut AdamState,
    examples: &[Example],
    tape: &mut Tape,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Input("critic update without examples".into()));
    }
    tape.clear();
    let (vars, bound) = critic.bind(tape);
    let terms = examples
        .iter()
        .map(|(seq, target)| critic_loss_on_tape(tape, critic, &vars, seq, *target))
        .collect::<Result<Vec<_>>>()?;
    let total = tape.sum(&terms);
    let value = finite_loss(tape, total, "critic")?;
    let grads = tape.backward(total)?;
    critic.accumulate(&grads, &bound)?;
    opt.update(critic.tensors_mut())?;
    Ok(value)
}

/// One accumulated Adam step of the discriminator (shared encoder plus
/// head) over full exchanges.
pub fn train_discriminator(
    interrogator: &mut InterrogatorModel,
    opt: &mut AdamState,
    examples: &[Example],
    tape: &mut Tape,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Input("discriminator update without examples".into()));
    }
    tape.clear();
    let (vars, bound) = interrogator.bind_discriminator(tape);
    let terms = examples
        .iter()
        .map(|(seq, target)| {
            let p = interrogator.discriminate_on_tape(tape, &vars, seq)?;
            Ok(tape.bce(p, *target, BCE_CLAMP))
        })
        .collect::<Result<Vec<_>>>()?;
    let total = tape.sum(&terms);
    let value = finite_loss(tape, total, "discriminator")?;
    let grads = tape.backward(total)?;
    grads.accumulate_into(interrogator.discriminator_tensors_mut(), &bound)?;
    opt.update(interrogator.discriminator_tensors_mut())?;
    Ok(value)
}

fn finite_loss(tape: &Tape, loss: Var, what: &str) -> Result<f64> {
    tape.check_finite()
        .map_err(|e| Error::NonFinite(format!("{what} loss: {e}")))?;
    let v = tape.scalar(loss);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} loss is {v}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataLosses {
    pub blue_critic: f64,
    pub red_critic: f64,
    pub interrogator_critic: f64,
    pub discriminator: f64,
}

fn check_batch(batch: &[InteractionRecord]) -> Result<()> {
    let Some(first) = batch.first() else {
        return Err(Error::Input("empty batch".into()));
    };
    if batch.iter().any(|r| r.iteration != first.iteration) {
        return Err(Error::Input(
            "batch mixes rounds of different iterations".into(),
        ));
    }
    Ok(())
}

/// Fits all three critics and the discriminator to the batch's `2N`
/// (exchange, label) pairs. Both agent critics see every published answer.
pub fn train_from_data(
    batch: &[InteractionRecord],
    players: &mut Players,
    cfg: &TrainingConfig,
    tape: &mut Tape,
) -> Result<DataLosses> {
    check_batch(batch)?;
    let mut labelled_blue = Vec::with_capacity(2 * batch.len());
    let mut labelled_right = Vec::with_capacity(2 * batch.len());
    let mut discriminator = Vec::with_capacity(2 * batch.len());
    for r in batch {
        for slot in 0..2 {
            let seq = r.exchange(slot);
            let (truth, label) = (r.sources[slot], r.inferred[slot]);
            labelled_blue.push((seq.clone(), f64::from(u8::from(label == AgentType::Blue))));
            labelled_right.push((seq.clone(), f64::from(u8::from(label == truth))));
            discriminator.push((seq, cfg.discriminator_target.target(truth, label)));
        }
    }
    let Players {
        interrogator,
        blue,
        red,
    } = players;
    Ok(DataLosses {
        blue_critic: train_critic(&mut blue.critic, &mut blue.critic_opt, &labelled_blue, tape)?,
        red_critic: train_critic(&mut red.critic, &mut red.critic_opt, &labelled_blue, tape)?,
        interrogator_critic: train_critic(
            &mut interrogator.model.critic,
            &mut interrogator.critic_opt,
            &labelled_right,
            tape,
        )?,
        discriminator: train_discriminator(
            &mut interrogator.model,
            &mut interrogator.discriminator_opt,
            &discriminator,
            tape,
        )?,
    })
}

// -- training with critics ---------------------------------------------------

/// Sum over generated positions of `pi_k . Q(prefix_k, *)`, where the
/// critic's prefix is `critic_context || generated[..k]`. The q-vectors are
/// constants on the tape, so gradients reach the actor only through `pi`.
pub fn score_steps<Q: QFunction + ?Sized>(
    tape: &mut Tape,
    steps: &[DecodedStep],
    critic_context: &[usize],
    critic: &Q,
    critic_tape: &mut Tape,
) -> Result<Var> {
    let mut seq = critic_context.to_vec();
    seq.extend(steps.iter().map(|s| s.symbol.index()));
    // no q-vector is needed after the final symbol
    seq.pop();
    let qs = critic.q_along(critic_tape, &seq)?;
    let terms: Vec<Var> = steps
        .iter()
        .enumerate()
        .map(|(k, step)| {
            let q = &qs[critic_context.len() + k];
            if q.len() != tape.dim(step.probs) {
                return Err(Error::Config(format!(
                    "critic emits {} q-values for a {}-symbol alphabet",
                    q.len(),
                    tape.dim(step.probs)
                )));
            }
            let qv = tape.constant(q);
            Ok(tape.dot(step.probs, qv))
        })
        .collect::<Result<_>>()?;
    Ok(tape.sum(&terms))
}

/// Expected-reward score of one freshly sampled answer to `trigger`.
pub fn actor_score<Q: QFunction + ?Sized, R: Rng + ?Sized>(
    actor: &ActorModel,
    critic: &Q,
    trigger: &Message,
    max_len: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut tape = Tape::new();
    let (vars, _) = actor.bind(&mut tape);
    let steps = actor.respond_on_tape(&mut tape, &vars, trigger, max_len, Sampling::Sample(rng))?;
    let context: Vec<usize> = trigger.indices().collect();
    let score = score_steps(&mut tape, &steps, &context, critic, &mut Tape::new())?;
    tape.check_finite()?;
    Ok(tape.scalar(score))
}

/// One Adam step of an answering actor maximizing the summed score over
/// `triggers`. Returns the mean score before the step.
pub fn train_actor<Q: QFunction + ?Sized, R: Rng + ?Sized>(
    actor: &mut ActorModel,
    opt: &mut AdamState,
    critic: &Q,
    triggers: &[Message],
    max_len: usize,
    tapes: (&mut Tape, &mut Tape),
    rng: &mut R,
) -> Result<f64> {
    if triggers.is_empty() {
        return Err(Error::Input("actor update without triggers".into()));
    }
    let (tape, critic_tape) = tapes;
    tape.clear();
    let (vars, bound) = actor.bind(tape);
    let mut scores = Vec::with_capacity(triggers.len());
    for trigger in triggers {
        let steps =
            actor.respond_on_tape(tape, &vars, trigger, max_len, Sampling::Sample(&mut *rng))?;
        let context: Vec<usize> = trigger.indices().collect();
        scores.push(score_steps(tape, &steps, &context, critic, critic_tape)?);
    }
    let total = tape.sum(&scores);
    let value = finite_loss(tape, total, "actor score")?;
    let loss = tape.scale(total, -1.0);
    let grads = tape.backward(loss)?;
    actor.accumulate(&grads, &bound)?;
    opt.update(actor.tensors_mut())?;
    Ok(value / triggers.len() as f64)
}

/// One Adam step of the interrogator's question branch over `count`
/// EOS-only triggers, scored by its own critic on the question prefixes.
pub fn train_questioner<R: Rng + ?Sized>(
    agent: &mut InterrogatorAgent,
    count: usize,
    max_len: usize,
    tapes: (&mut Tape, &mut Tape),
    rng: &mut R,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::Input("question update without triggers".into()));
    }
    let (tape, critic_tape) = tapes;
    tape.clear();
    let model = &agent.model;
    let (disc, _) = model.bind_discriminator(tape);
    let (dec, dec_vars) = model.decoder.bind(tape);
    let mut scores = Vec::with_capacity(count);
    for _ in 0..count {
        let steps = model.question_on_tape(
            tape,
            &disc.encoder,
            &dec,
            max_len,
            Sampling::Sample(&mut *rng),
        )?;
        scores.push(score_steps(tape, &steps, &[], &model.critic, critic_tape)?);
    }
    let total = tape.sum(&scores);
    let value = finite_loss(tape, total, "question score")?;
    let loss = tape.scale(total, -1.0);
    let grads = tape.backward(loss)?;
    agent.model.decoder.accumulate(&grads, &dec_vars)?;
    agent
        .question_opt
        .update(agent.model.decoder.tensors_mut())?;
    Ok(value / count as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActorScores {
    pub blue: f64,
    pub red: f64,
    pub interrogator: f64,
}

/// Agents answer the batch's questions again and climb their critics; the
/// interrogator asks `N` new questions from the empty trigger.
pub fn train_actors<R: Rng + ?Sized>(
    batch: &[InteractionRecord],
    players: &mut Players,
    game: &GameConfig,
    tapes: (&mut Tape, &mut Tape),
    rng: &mut R,
) -> Result<ActorScores> {
    check_batch(batch)?;
    let (tape, critic_tape) = tapes;
    let triggers: Vec<Message> = batch.iter().map(|r| r.question.clone()).collect();
    let Players {
        interrogator,
        blue,
        red,
    } = players;
    let mut answer = |agent: &mut AnsweringAgent, tape: &mut Tape, critic_tape: &mut Tape| {
        train_actor(
            &mut agent.actor,
            &mut agent.actor_opt,
            &agent.critic,
            &triggers,
            game.answer_limit(agent.kind),
            (tape, critic_tape),
            rng,
        )
    };
    let blue_score = answer(blue, tape, critic_tape)?;
    let red_score = answer(red, tape, critic_tape)?;
    let interrogator_score = train_questioner(
        interrogator,
        batch.len(),
        game.question_limit,
        (tape, critic_tape),
        rng,
    )?;
    Ok(ActorScores {
        blue: blue_score,
        red: red_score,
        interrogator: interrogator_score,
    })
}

/// Reusable scratch space for a training run.
#[derive(Debug, Default)]
pub struct Workspace {
    pub tape: Tape,
    pub critic_tape: Tape,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub metrics: MetricsRow,
    pub losses: DataLosses,
    pub scores: ActorScores,
}

/// Plays `N` rounds, publishes them, then runs both training stages.
pub fn training_iteration<R: Rng + ?Sized>(
    players: &mut Players,
    game: &GameConfig,
    training: &TrainingConfig,
    log: &mut PublicLog,
    iteration: u64,
    ws: &mut Workspace,
    rng: &mut R,
) -> Result<IterationReport> {
    let start = log.len();
    for round in 0..game.batch_size {
        let record = play_round(
            &players.interrogator.model,
            &players.blue.actor,
            &players.red.actor,
            game,
            (iteration, round as u32),
            &mut ws.tape,
            rng,
        )?;
        log.publish(record)?;
    }
    let batch = &log.records()[start..];
    let metrics = MetricsRow::from_records(iteration, batch)?;
    let losses = train_from_data(batch, players, training, &mut ws.tape)?;
    let scores = train_actors(
        batch,
        players,
        game,
        (&mut ws.tape, &mut ws.critic_tape),
        rng,
    )?;
    Ok(IterationReport {
        metrics,
        losses,
        scores,
    })
}
