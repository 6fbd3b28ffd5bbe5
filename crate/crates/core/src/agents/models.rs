use rand::Rng;

use crate::agents::message::{validate_exchange, Alphabet, Message, Symbol};
use crate::agents::seq::{
    AttnDecoder, AttnDecoderVars, DecodedStep, Sampling, SeqEncoder, SeqEncoderVars,
};
use crate::error::{Error, Result};
use crate::nn::layers::{init_bound, LinearParams, LinearVars};
use crate::nn::module::Module;
use crate::nn::param::ParamTensor;
use crate::nn::tape::{Tape, Var};

/// Distribution the decoder used at one position of a generated message.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    pub position: usize,
    pub probs: Vec<f64>,
    pub symbol: Symbol,
    /// EOS appended by the environment at the length limit.
    pub forced: bool,
}

fn materialize(tape: &Tape, steps: &[DecodedStep]) -> (Message, Vec<StepDistribution>) {
    let symbols = steps.iter().map(|s| s.symbol).collect();
    let dists = steps
        .iter()
        .enumerate()
        .map(|(position, s)| StepDistribution {
            position,
            probs: tape.value(s.probs).to_vec(),
            symbol: s.symbol,
            forced: s.forced,
        })
        .collect();
    (Message::from_trusted(symbols), dists)
}

/// Seq2Seq answering model: GRU encoder over the question, attention GRU
/// decoder emitting the answer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorModel {
    alphabet: Alphabet,
    pub encoder: SeqEncoder,
    pub decoder: AttnDecoder,
}

#[derive(Clone, Copy, Debug)]
pub struct ActorVars {
    pub encoder: SeqEncoderVars,
    pub decoder: AttnDecoderVars,
}

impl ActorModel {
    pub fn new<R: Rng + ?Sized>(alphabet: Alphabet, hidden: usize, rng: &mut R) -> Result<Self> {
        check_hidden(hidden)?;
        Ok(Self {
            alphabet,
            encoder: SeqEncoder::new(alphabet, hidden, rng),
            decoder: AttnDecoder::new(alphabet, hidden, hidden, rng),
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn hidden_size(&self) -> usize {
        self.encoder.hidden_size()
    }

    /// Size of the output distribution (alphabet plus EOS).
    pub fn output_dim(&self) -> usize {
        self.decoder.head.out_dim()
    }

    /// Generates an answer to `trigger` on `tape`.
    pub fn respond_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &ActorVars,
        trigger: &Message,
        max_len: usize,
        sampling: Sampling<'_, R>,
    ) -> Result<Vec<DecodedStep>> {
        let question: Vec<usize> = trigger.indices().collect();
        let enc = vars.encoder.encode(tape, &question)?;
        vars.decoder
            .generate(tape, self.alphabet, &enc, max_len, sampling)
    }

    /// Samples an answer of at most `max_len` ordinary symbols.
    pub fn respond<R: Rng + ?Sized>(
        &self,
        question: &Message,
        max_len: usize,
        rng: &mut R,
    ) -> Result<(Message, Vec<StepDistribution>)> {
        self.respond_with(&mut Tape::new(), question, max_len, rng)
    }

    /// Like [`respond`](Self::respond), reusing a scratch tape.
    pub fn respond_with<R: Rng + ?Sized>(
        &self,
        scratch: &mut Tape,
        question: &Message,
        max_len: usize,
        rng: &mut R,
    ) -> Result<(Message, Vec<StepDistribution>)> {
        question.validate(self.alphabet)?;
        scratch.clear();
        let (vars, _) = self.bind(scratch);
        let steps =
            self.respond_on_tape(scratch, &vars, question, max_len, Sampling::Sample(rng))?;
        scratch.check_finite()?;
        Ok(materialize(scratch, &steps))
    }

    /// Probability that `respond(question, max_len)` returns `answer`.
    pub fn answer_probability(
        &self,
        question: &Message,
        answer: &Message,
        max_len: usize,
    ) -> Result<f64> {
        answer.validate(self.alphabet)?;
        if answer.body_len() > max_len {
            return Ok(0.0);
        }
        let mut tape = Tape::new();
        let (vars, _) = self.bind(&mut tape);
        let steps = self.respond_on_tape::<rand::rngs::mock::StepRng>(
            &mut tape,
            &vars,
            question,
            max_len,
            Sampling::Replay(answer.symbols()),
        )?;
        Ok(steps
            .iter()
            .filter(|s| !s.forced)
            .map(|s| tape.value(s.probs)[s.symbol.index()])
            .product())
    }
}

impl Module for ActorModel {
    type Bound = ActorVars;

    fn tensors(&self) -> Vec<&ParamTensor> {
        let mut t = self.encoder.tensors();
        t.extend(self.decoder.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.decoder.tensors_mut());
        t
    }

    fn bound_from(&self, vars: &[Var]) -> ActorVars {
        let n = self.encoder.tensor_count();
        ActorVars {
            encoder: self.encoder.bound_from(&vars[..n]),
            decoder: self.decoder.bound_from(&vars[n..]),
        }
    }
}

/// Anything that yields a q-vector for every prefix of a sequence.
pub trait QFunction {
    /// `result[k]` is the q-vector after consuming `seq[..k]`, for
    /// `k = 0..=seq.len()`.
    fn q_along(&self, scratch: &mut Tape, seq: &[usize]) -> Result<Vec<Vec<f64>>>;
}

/// GRU encoder plus a feed-forward head producing one logistic q-value per
/// possible next symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticModel {
    alphabet: Alphabet,
    pub encoder: SeqEncoder,
    pub head: LinearParams,
}

#[derive(Clone, Copy, Debug)]
pub struct CriticVars {
    pub encoder: SeqEncoderVars,
    pub head: LinearVars,
}

impl CriticModel {
    pub fn new<R: Rng + ?Sized>(alphabet: Alphabet, hidden: usize, rng: &mut R) -> Result<Self> {
        check_hidden(hidden)?;
        Ok(Self {
            alphabet,
            encoder: SeqEncoder::new(alphabet, hidden, rng),
            head: LinearParams::new(alphabet.total(), hidden, init_bound(hidden), rng),
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// q-vectors for the prefixes `seq[..k]`, `k = 0..count`, recorded on the
    /// tape. `count` may be at most `seq.len() + 1`.
    pub fn q_trace(
        &self,
        tape: &mut Tape,
        vars: &CriticVars,
        seq: &[usize],
        count: usize,
    ) -> Result<Vec<Var>> {
        assert!(count <= seq.len() + 1);
        let mut out = Vec::with_capacity(count);
        let mut state = vars.encoder.zero_state(tape);
        for k in 0..count {
            if k > 0 {
                state = vars.encoder.step(tape, state, seq[k - 1])?;
            }
            let logits = vars.head.forward(tape, state);
            out.push(tape.sigmoid(logits));
        }
        Ok(out)
    }

    /// q-values for every possible next symbol after `prefix`.
    pub fn q_values(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        Ok(self
            .q_along(&mut tape, prefix)?
            .pop()
            .expect("at least the empty prefix"))
    }
}

impl QFunction for CriticModel {
    fn q_along(&self, scratch: &mut Tape, seq: &[usize]) -> Result<Vec<Vec<f64>>> {
        if let Some(bad) = seq.iter().find(|&&s| s >= self.alphabet.total()) {
            return Err(Error::Input(format!("symbol {bad} outside the alphabet")));
        }
        scratch.clear();
        let (vars, _) = self.bind(scratch);
        let trace = self.q_trace(scratch, &vars, seq, seq.len() + 1)?;
        scratch.check_finite()?;
        Ok(trace
            .into_iter()
            .map(|q| scratch.value(q).to_vec())
            .collect())
    }
}

impl Module for CriticModel {
    type Bound = CriticVars;

    fn tensors(&self) -> Vec<&ParamTensor> {
        let mut t = self.encoder.tensors();
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }

    fn bound_from(&self, vars: &[Var]) -> CriticVars {
        let n = self.encoder.tensor_count();
        CriticVars {
            encoder: self.encoder.bound_from(&vars[..n]),
            head: self.head.bound_from(&vars[n..]),
        }
    }
}

/// The interrogator: one encoder feeding a question decoder and a
/// discriminator head, plus its own critic.
///
/// Parameters fall into two training groups. The question branch is the
/// decoder alone; the discriminator is the encoder plus its head.
#[derive(Clone, Debug, PartialEq)]
pub struct InterrogatorModel {
    alphabet: Alphabet,
    pub encoder: SeqEncoder,
    pub decoder: AttnDecoder,
    pub discriminator: LinearParams,
    pub critic: CriticModel,
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorVars {
    pub encoder: SeqEncoderVars,
    pub head: LinearVars,
}

impl InterrogatorModel {
    pub fn new<R: Rng + ?Sized>(alphabet: Alphabet, hidden: usize, rng: &mut R) -> Result<Self> {
        check_hidden(hidden)?;
        Ok(Self {
            alphabet,
            encoder: SeqEncoder::new(alphabet, hidden, rng),
            decoder: AttnDecoder::new(alphabet, hidden, hidden, rng),
            discriminator: LinearParams::new(1, hidden, init_bound(hidden), rng),
            critic: CriticModel::new(alphabet, hidden, rng)?,
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn hidden_size(&self) -> usize {
        self.encoder.hidden_size()
    }

    /// The fixed trigger that elicits a question.
    pub fn trigger(&self) -> Message {
        Message::eos_only(self.alphabet)
    }

    pub fn discriminator_tensors(&self) -> Vec<&ParamTensor> {
        let mut t = self.encoder.tensors();
        t.extend(self.discriminator.tensors());
        t
    }

    pub fn discriminator_tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.discriminator.tensors_mut());
        t
    }

    pub fn bind_discriminator(&self, tape: &mut Tape) -> (DiscriminatorVars, Vec<Var>) {
        let vars = tape.params(self.discriminator_tensors());
        let n = self.encoder.tensor_count();
        let bound = DiscriminatorVars {
            encoder: self.encoder.bound_from(&vars[..n]),
            head: self.discriminator.bound_from(&vars[n..]),
        };
        (bound, vars)
    }

    /// Question generation on a tape whose encoder variables come from
    /// `disc` (the shared encoder) and decoder variables from `decoder`.
    pub fn question_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        encoder: &SeqEncoderVars,
        decoder: &AttnDecoderVars,
        max_len: usize,
        sampling: Sampling<'_, R>,
    ) -> Result<Vec<DecodedStep>> {
        let trigger = [self.alphabet.eos().index()];
        let enc = encoder.encode(tape, &trigger)?;
        decoder.generate(tape, self.alphabet, &enc, max_len, sampling)
    }

    /// Samples a question of at most `max_len` ordinary symbols from the
    /// EOS-only trigger.
    pub fn question<R: Rng + ?Sized>(
        &self,
        max_len: usize,
        rng: &mut R,
    ) -> Result<(Message, Vec<StepDistribution>)> {
        self.question_with(&mut Tape::new(), max_len, rng)
    }

    pub fn question_with<R: Rng + ?Sized>(
        &self,
        scratch: &mut Tape,
        max_len: usize,
        rng: &mut R,
    ) -> Result<(Message, Vec<StepDistribution>)> {
        scratch.clear();
        let (disc, _) = self.bind_discriminator(scratch);
        let (dec, _) = self.decoder.bind(scratch);
        let steps =
            self.question_on_tape(scratch, &disc.encoder, &dec, max_len, Sampling::Sample(rng))?;
        scratch.check_finite()?;
        Ok(materialize(scratch, &steps))
    }

    /// Probability-of-blue for a full `question || answer` sequence.
    pub fn discriminate_on_tape(
        &self,
        tape: &mut Tape,
        vars: &DiscriminatorVars,
        seq: &[usize],
    ) -> Result<Var> {
        let states = vars.encoder.encode(tape, seq)?;
        let last = *states
            .last()
            .ok_or_else(|| Error::Input("discriminator needs a non-empty sequence".into()))?;
        let logit = vars.head.forward(tape, last);
        Ok(tape.sigmoid(logit))
    }

    pub fn discriminate_sequence(&self, seq: &[usize]) -> Result<f64> {
        self.discriminate_sequence_with(&mut Tape::new(), seq)
    }

    pub fn discriminate_sequence_with(&self, scratch: &mut Tape, seq: &[usize]) -> Result<f64> {
        validate_exchange(self.alphabet, seq)?;
        scratch.clear();
        let (vars, _) = self.bind_discriminator(scratch);
        let p = self.discriminate_on_tape(scratch, &vars, seq)?;
        scratch.check_finite()?;
        Ok(scratch.scalar(p))
    }

    pub fn discriminate(&self, question: &Message, answer: &Message) -> Result<f64> {
        self.discriminate_sequence(&question.concat_indices(answer))
    }
}

fn check_hidden(hidden: usize) -> Result<()> {
    if hidden == 0 {
        Err(Error::Config("hidden size must be positive".into()))
    } else {
        Ok(())
    }
}
