//! GRU cell, additive attention and affine layers, recorded on a [`Tape`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::module::{expect_len, Module};
use crate::nn::param::ParamTensor;
use crate::nn::tape::{Tape, Var};

/// Symmetric init bound `1/sqrt(h)`.
pub fn init_bound(hidden: usize) -> f64 {
    1.0 / (hidden.max(1) as f64).sqrt()
}

/// `y = W x + b`
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearParams {
    pub fn new<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, bound: f64, rng: &mut R) -> Self {
        Self {
            weight: ParamTensor::uniform(out_dim, in_dim, bound, rng),
            bias: ParamTensor::zeros_vector(out_dim),
        }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: ParamTensor::zeros(out_dim, in_dim),
            bias: ParamTensor::zeros_vector(out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn validate(&self) -> Result<()> {
        expect_len("linear bias", self.bias.len(), self.weight.rows())
    }
}

impl Module for LinearParams {
    type Bound = LinearVars;

    fn tensors(&self) -> Vec<&ParamTensor> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn bound_from(&self, vars: &[Var]) -> LinearVars {
        LinearVars {
            weight: vars[0],
            bias: vars[1],
        }
    }
}

impl LinearVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        tape.affine(self.weight, x, self.bias)
    }

    /// Embedding lookup: the affine map applied to a one-hot vector.
    pub fn embed(&self, tape: &mut Tape, symbol: usize) -> Var {
        let col = tape.column(self.weight, symbol);
        tape.add(col, self.bias)
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z  = sigmoid(Wz x + Uz h + bz)
/// r  = sigmoid(Wr x + Ur h + br)
/// h~ = tanh(Wh x + Uh (r * h) + bh)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: ParamTensor,
    pub u_z: ParamTensor,
    pub b_z: ParamTensor,
    pub w_r: ParamTensor,
    pub u_r: ParamTensor,
    pub b_r: ParamTensor,
    pub w_h: ParamTensor,
    pub u_h: ParamTensor,
    pub b_h: ParamTensor,
}

#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
    hidden: usize,
    input: usize,
}

impl GruParams {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let a = init_bound(hidden);
        Self {
            w_z: ParamTensor::uniform(hidden, input, a, rng),
            u_z: ParamTensor::uniform(hidden, hidden, a, rng),
            b_z: ParamTensor::zeros_vector(hidden),
            w_r: ParamTensor::uniform(hidden, input, a, rng),
            u_r: ParamTensor::uniform(hidden, hidden, a, rng),
            b_r: ParamTensor::zeros_vector(hidden),
            w_h: ParamTensor::uniform(hidden, input, a, rng),
            u_h: ParamTensor::uniform(hidden, hidden, a, rng),
            b_h: ParamTensor::zeros_vector(hidden),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: ParamTensor::zeros(hidden, input),
            u_z: ParamTensor::zeros(hidden, hidden),
            b_z: ParamTensor::zeros_vector(hidden),
            w_r: ParamTensor::zeros(hidden, input),
            u_r: ParamTensor::zeros(hidden, hidden),
            b_r: ParamTensor::zeros_vector(hidden),
            w_h: ParamTensor::zeros(hidden, input),
            u_h: ParamTensor::zeros(hidden, hidden),
            b_h: ParamTensor::zeros_vector(hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.u_z.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden_size(), self.input_size());
        if h == 0 {
            return Err(Error::Config("GRU hidden size must be positive".into()));
        }
        for (name, w) in [("w_z", &self.w_z), ("w_r", &self.w_r), ("w_h", &self.w_h)] {
            if w.shape() != (h, i) {
                return Err(Error::Config(format!(
                    "GRU {name} is {:?}, expected ({h}, {i})",
                    w.shape()
                )));
            }
        }
        for (name, u) in [("u_z", &self.u_z), ("u_r", &self.u_r), ("u_h", &self.u_h)] {
            if u.shape() != (h, h) {
                return Err(Error::Config(format!(
                    "GRU {name} is {:?}, expected ({h}, {h})",
                    u.shape()
                )));
            }
        }
        for (name, b) in [("b_z", &self.b_z), ("b_r", &self.b_r), ("b_h", &self.b_h)] {
            expect_len(&format!("GRU {name}"), b.len(), h)?;
        }
        Ok(())
    }
}

impl Module for GruParams {
    type Bound = GruVars;

    fn tensors(&self) -> Vec<&ParamTensor> {
        vec![
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h,
            &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }

    fn bound_from(&self, v: &[Var]) -> GruVars {
        GruVars {
            w_z: v[0],
            u_z: v[1],
            b_z: v[2],
            w_r: v[3],
            u_r: v[4],
            b_r: v[5],
            w_h: v[6],
            u_h: v[7],
            b_h: v[8],
            hidden: self.hidden_size(),
            input: self.input_size(),
        }
    }
}

impl GruVars {
    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        expect_len("GRU input", tape.dim(x), self.input)?;
        expect_len("GRU state", tape.dim(h), self.hidden)?;
        let z = gate(tape, self.w_z, x, self.b_z, self.u_z, h);
        let z = tape.sigmoid(z);
        let r = gate(tape, self.w_r, x, self.b_r, self.u_r, h);
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h);
        let c = gate(tape, self.w_h, x, self.b_h, self.u_h, rh);
        let c = tape.tanh(c);
        Ok(tape.gru_mix(z, h, c))
    }
}

fn gate(tape: &mut Tape, w: Var, x: Var, b: Var, u: Var, h: Var) -> Var {
    let wx = tape.affine(w, x, b);
    let uh = tape.matvec(u, h);
    tape.add(wx, uh)
}

/// Additive attention: `score(s, e) = v . tanh(Ws s + We e)`, softmaxed over
/// encoder positions.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_dec: ParamTensor,
    pub w_enc: ParamTensor,
    pub v: ParamTensor,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub w_dec: Var,
    pub w_enc: Var,
    pub v: Var,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(
        dec_dim: usize,
        enc_dim: usize,
        attn_dim: usize,
        rng: &mut R,
    ) -> Self {
        let a = init_bound(attn_dim);
        Self {
            w_dec: ParamTensor::uniform(attn_dim, dec_dim, a, rng),
            w_enc: ParamTensor::uniform(attn_dim, enc_dim, a, rng),
            v: ParamTensor::uniform(attn_dim, 1, a, rng),
        }
    }

    pub fn zeros(dec_dim: usize, enc_dim: usize, attn_dim: usize) -> Self {
        Self {
            w_dec: ParamTensor::zeros(attn_dim, dec_dim),
            w_enc: ParamTensor::zeros(attn_dim, enc_dim),
            v: ParamTensor::zeros(attn_dim, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        expect_len(
            "attention encoder projection",
            self.w_enc.rows(),
            self.w_dec.rows(),
        )?;
        expect_len("attention scoring vector", self.v.len(), self.w_dec.rows())
    }
}

impl Module for AttentionParams {
    type Bound = AttentionVars;

    fn tensors(&self) -> Vec<&ParamTensor> {
        vec![&self.w_dec, &self.w_enc, &self.v]
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.w_dec, &mut self.w_enc, &mut self.v]
    }

    fn bound_from(&self, v: &[Var]) -> AttentionVars {
        AttentionVars {
            w_dec: v[0],
            w_enc: v[1],
            v: v[2],
        }
    }
}

/// Encoder states together with their attention projections `We e_i`,
/// which do not change across decoder steps.
#[derive(Clone, Debug)]
pub struct AttentionKeys {
    pub states: Vec<Var>,
    pub projected: Vec<Var>,
}

impl AttentionVars {
    pub fn keys(&self, tape: &mut Tape, enc_states: &[Var]) -> Result<AttentionKeys> {
        if enc_states.is_empty() {
            return Err(Error::Logic(
                "attention over an empty encoder sequence".into(),
            ));
        }
        let projected = enc_states
            .iter()
            .map(|&e| tape.matvec(self.w_enc, e))
            .collect();
        Ok(AttentionKeys {
            states: enc_states.to_vec(),
            projected,
        })
    }

    /// Returns `(context, weights)`.
    pub fn attend(&self, tape: &mut Tape, dec_state: Var, keys: &AttentionKeys) -> (Var, Var) {
        let q = tape.matvec(self.w_dec, dec_state);
        let scores: Vec<Var> = keys
            .projected
            .iter()
            .map(|&k| {
                let pre = tape.add(q, k);
                let act = tape.tanh(pre);
                tape.dot(self.v, act)
            })
            .collect();
        let scores = tape.concat(&scores);
        let alpha = tape.softmax(scores);
        let context = tape.weighted_sum(alpha, &keys.states);
        (context, alpha)
    }
}

/// Runs `gru` over the embedded `symbols`, returning one state per symbol.
/// The initial state is zero.
pub fn encode_on_tape(
    tape: &mut Tape,
    gru: &GruVars,
    embed: &LinearVars,
    vocab: usize,
    symbols: &[usize],
) -> Result<Vec<Var>> {
    let mut h = tape.constant(&vec![0.0; gru.hidden_size()]);
    let mut states = Vec::with_capacity(symbols.len());
    for &s in symbols {
        if s >= vocab {
            return Err(Error::Input(format!(
                "symbol {s} outside a vocabulary of {vocab}"
            )));
        }
        let x = embed.embed(tape, s);
        h = gru.step(tape, x, h)?;
        states.push(h);
    }
    Ok(states)
}

// -- value-level entry points --------------------------------------------

/// One GRU step on plain vectors.
pub fn gru_step(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    expect_len("GRU input", x.len(), p.input_size())?;
    expect_len("GRU state", h_prev.len(), p.hidden_size())?;
    let mut tape = Tape::new();
    let (gru, _) = p.bind(&mut tape);
    let xv = tape.constant(x);
    let hv = tape.constant(h_prev);
    let out = gru.step(&mut tape, xv, hv)?;
    tape.check_finite()?;
    Ok(tape.value(out).to_vec())
}

/// Encoder states, one per symbol, for a symbol sequence over a vocabulary
/// of `embed.in_dim()` symbols.
pub fn encode(p: &GruParams, embed: &LinearParams, symbols: &[usize]) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    embed.validate()?;
    expect_len("embedding width", embed.out_dim(), p.input_size())?;
    let mut tape = Tape::new();
    let (gru, _) = p.bind(&mut tape);
    let (emb, _) = embed.bind(&mut tape);
    let states = encode_on_tape(&mut tape, &gru, &emb, embed.in_dim(), symbols)?;
    tape.check_finite()?;
    Ok(states.into_iter().map(|s| tape.value(s).to_vec()).collect())
}

/// Attention context and weights for plain vectors.
pub fn attend(
    p: &AttentionParams,
    dec_state: &[f64],
    enc_states: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    if enc_states.is_empty() {
        return Err(Error::Logic(
            "attention over an empty encoder sequence".into(),
        ));
    }
    expect_len("attention decoder state", dec_state.len(), p.w_dec.cols())?;
    for e in enc_states {
        expect_len("attention encoder state", e.len(), p.w_enc.cols())?;
    }
    let mut tape = Tape::new();
    let (attn, _) = p.bind(&mut tape);
    let s = tape.constant(dec_state);
    let enc: Vec<Var> = enc_states.iter().map(|e| tape.constant(e)).collect();
    let keys = attn.keys(&mut tape, &enc)?;
    let (ctx, alpha) = attn.attend(&mut tape, s, &keys);
    tape.check_finite()?;
    Ok((tape.value(ctx).to_vec(), tape.value(alpha).to_vec()))
}
