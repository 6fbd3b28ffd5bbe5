//! Encoder and attention decoder shared by every model assembly.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::agents::message::{Alphabet, Symbol};
use crate::error::{Error, Result};
use crate::nn::layers::{
    encode_on_tape, init_bound, AttentionParams, AttentionVars, GruParams, GruVars, LinearParams,
    LinearVars,
};
use crate::nn::module::Module;
use crate::nn::param::ParamTensor;
use crate::nn::tape::{Tape, Var};

/// Symbol embedding followed by a GRU.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqEncoder {
    pub embed: LinearParams,
    pub gru: GruParams,
}

#[derive(Clone, Copy, Debug)]
pub struct SeqEncoderVars {
    pub embed: LinearVars,
    pub gru: GruVars,
    vocab: usize,
}

impl SeqEncoder {
    pub fn new<R: Rng + ?Sized>(alphabet: Alphabet, hidden: usize, rng: &mut R) -> Self {
        Self {
            embed: LinearParams::new(hidden, alphabet.total(), init_bound(hidden), rng),
            gru: GruParams::new(hidden, hidden, rng),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.gru.hidden_size()
    }
}

impl Module for SeqEncoder {
    type Bound = SeqEncoderVars;

    fn tensors(&self) -> Vec<&ParamTensor> {
        let mut t = self.embed.tensors();
        t.extend(self.gru.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut t = self.embed.tensors_mut();
        t.extend(self.gru.tensors_mut());
        t
    }

    fn bound_from(&self, vars: &[Var]) -> SeqEncoderVars {
        SeqEncoderVars {
            embed: self.embed.bound_from(&vars[..2]),
            gru: self.gru.bound_from(&vars[2..]),
            vocab: self.embed.in_dim(),
        }
    }
}

impl SeqEncoderVars {
    pub fn hidden_size(&self) -> usize {
        self.gru.hidden_size()
    }

    /// One state per symbol; state `i` has consumed symbols `0..=i`.
    pub fn encode(&self, tape: &mut Tape, symbols: &[usize]) -> Result<Vec<Var>> {
        encode_on_tape(tape, &self.gru, &self.embed, self.vocab, symbols)
    }

    pub fn zero_state(&self, tape: &mut Tape) -> Var {
        tape.constant(&vec![0.0; self.hidden_size()])
    }

    pub fn step(&self, tape: &mut Tape, state: Var, symbol: usize) -> Result<Var> {
        if symbol >= self.vocab {
            return Err(Error::Input(format!(
                "symbol {symbol} outside a vocabulary of {}",
                self.vocab
            )));
        }
        let x = self.embed.embed(tape, symbol);
        self.gru.step(tape, x, state)
    }
}

/// GRU decoder with additive attention over encoder states and a softmax
/// head over the alphabet. Its input at each step is the embedding of the
/// previous symbol (EOS at the first step) concatenated with the attention
/// context computed from the previous decoder state.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnDecoder {
    pub embed: LinearParams,
    pub gru: GruParams,
    pub attention: AttentionParams,
    pub head: LinearParams,
}

#[derive(Clone, Copy, Debug)]
pub struct AttnDecoderVars {
    pub embed: LinearVars,
    pub gru: GruVars,
    pub attention: AttentionVars,
    pub head: LinearVars,
}

impl AttnDecoder {
    pub fn new<R: Rng + ?Sized>(
        alphabet: Alphabet,
        enc_hidden: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let bound = init_bound(hidden);
        Self {
            embed: LinearParams::new(hidden, alphabet.total(), bound, rng),
            gru: GruParams::new(hidden + enc_hidden, hidden, rng),
            attention: AttentionParams::new(hidden, enc_hidden, hidden, rng),
            head: LinearParams::new(alphabet.total(), hidden, bound, rng),
        }
    }
}

impl Module for AttnDecoder {
    type Bound = AttnDecoderVars;

    fn tensors(&self) -> Vec<&ParamTensor> {
        let mut t = self.embed.tensors();
        t.extend(self.gru.tensors());
        t.extend(self.attention.tensors());
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut t = self.embed.tensors_mut();
        t.extend(self.gru.tensors_mut());
        t.extend(self.attention.tensors_mut());
        t.extend(self.head.tensors_mut());
        t
    }

    fn bound_from(&self, v: &[Var]) -> AttnDecoderVars {
        AttnDecoderVars {
            embed: self.embed.bound_from(&v[..2]),
            gru: self.gru.bound_from(&v[2..11]),
            attention: self.attention.bound_from(&v[11..14]),
            head: self.head.bound_from(&v[14..16]),
        }
    }
}

/// How the decoder chooses each symbol.
pub enum Sampling<'a, R: Rng + ?Sized> {
    /// Draw from the model's distribution.
    Sample(&'a mut R),
    /// Reproduce a known message (teacher forcing). Its length must be
    /// consistent with the length limit.
    Replay(&'a [Symbol]),
}

/// One decoder position as recorded on the tape.
#[derive(Clone, Copy, Debug)]
pub struct DecodedStep {
    /// Softmax distribution over the alphabet.
    pub probs: Var,
    pub symbol: Symbol,
    /// True when the environment appended EOS because the length limit was
    /// reached; the symbol was not drawn from `probs`.
    pub forced: bool,
}

impl AttnDecoderVars {
    /// Autoregressive generation. Stops when EOS is chosen or, after
    /// `max_len` ordinary symbols, appends EOS itself.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        alphabet: Alphabet,
        enc_states: &[Var],
        max_len: usize,
        mut sampling: Sampling<'_, R>,
    ) -> Result<Vec<DecodedStep>> {
        let keys = self.attention.keys(tape, enc_states)?;
        let mut state = *enc_states.last().expect("keys() rejects empty encodings");
        let eos = alphabet.eos();
        let mut prev = eos;
        let mut steps = Vec::with_capacity(max_len + 1);
        loop {
            let (context, _) = self.attention.attend(tape, state, &keys);
            let emb = self.embed.embed(tape, prev.index());
            let input = tape.concat(&[emb, context]);
            state = self.gru.step(tape, input, state)?;
            let logits = self.head.forward(tape, state);
            let probs = tape.softmax(logits);
            let k = steps.len();

            if k == max_len {
                if let Sampling::Replay(target) = &sampling {
                    if target.get(k) != Some(&eos) || target.len() != k + 1 {
                        return Err(Error::Input(format!(
                            "replayed message {target:?} exceeds the limit of {max_len} symbols"
                        )));
                    }
                }
                steps.push(DecodedStep {
                    probs,
                    symbol: eos,
                    forced: true,
                });
                return Ok(steps);
            }

            let symbol = match &mut sampling {
                Sampling::Sample(rng) => {
                    let dist = WeightedIndex::new(tape.value(probs))
                        .map_err(|e| Error::NonFinite(format!("decoder distribution: {e}")))?;
                    Symbol(dist.sample(*rng) as u8)
                }
                Sampling::Replay(target) => match target.get(k) {
                    Some(&s) if alphabet.contains(s) => s,
                    _ => {
                        return Err(Error::Input(format!(
                            "replayed message {target:?} is not a message over this alphabet"
                        )))
                    }
                },
            };
            steps.push(DecodedStep {
                probs,
                symbol,
                forced: false,
            });
            if symbol == eos {
                return Ok(steps);
            }
            prev = symbol;
        }
    }
}
