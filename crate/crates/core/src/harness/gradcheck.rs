//! Finite-difference checks of every differentiable piece, from single tape
//! ops up to the full actor and questioner pipelines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agents::{
    ActorModel, Alphabet, CriticModel, DiscriminatorVars, InterrogatorModel, Message, Sampling,
};
use crate::error::Result;
use crate::nn::layers::{AttentionParams, GruParams, LinearParams};
use crate::nn::{grad_check, GradCheckReport, Module, ParamTensor, Tape, Var, BCE_CLAMP};
use crate::training::{critic_loss_on_tape, score_steps};

pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: u64 = 10;

const HIDDEN: usize = 8;
const MAX_LEN: usize = 4;

/// Worst result of one case over all seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: &'static str,
    pub seeds: u64,
    pub max_rel_error: f64,
    pub worst_seed: u64,
    /// Parameter entries compared per seed, summed over seeds.
    pub checked: usize,
}

impl CaseReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

type Case = fn(&mut ChaCha8Rng, f64) -> Result<GradCheckReport>;

pub const CASES: &[(&str, Case)] = &[
    ("linear", linear),
    ("elementwise ops", elementwise),
    ("gru step with inputs", gru_with_inputs),
    ("encoder", encoder),
    ("attention and softmax", attention),
    ("softmax and bce", softmax_bce),
    ("critic loss", critic),
    ("discriminator loss", discriminator),
    ("actor pipeline", actor_pipeline),
    ("actor score", actor_score),
    ("question branch", question_branch),
];

/// Runs every case for seeds `0..seeds`.
pub fn gradcheck_suite(seeds: u64, eps: f64) -> Result<Vec<CaseReport>> {
    CASES
        .iter()
        .map(|&(name, case)| run_case(name, case, seeds, eps))
        .collect()
}

pub fn run_case(name: &'static str, case: Case, seeds: u64, eps: f64) -> Result<CaseReport> {
    let mut out = CaseReport {
        name,
        seeds,
        max_rel_error: 0.0,
        worst_seed: 0,
        checked: 0,
    };
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = case(&mut rng, eps)?;
        out.checked += r.checked;
        if r.max_rel_error > out.max_rel_error {
            out.max_rel_error = r.max_rel_error;
            out.worst_seed = seed;
        }
    }
    Ok(out)
}

fn values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn vector(rng: &mut ChaCha8Rng, n: usize) -> ParamTensor {
    ParamTensor::from_values(n, 1, values(rng, n)).expect("finite values")
}

fn project(tape: &mut Tape, x: Var, c: &[f64]) -> Var {
    let c = tape.constant(c);
    tape.dot(x, c)
}

fn alphabet() -> Alphabet {
    Alphabet::new(4).expect("valid size")
}

fn symbols(rng: &mut ChaCha8Rng, len: usize, total: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..total)).collect()
}

fn linear(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let mut p = LinearParams::new(3, 5, 1.0, rng);
    let x = values(rng, 5);
    let c = values(rng, 3);
    grad_check(&mut p, eps, |tape, v| {
        let x = tape.constant(&x);
        let y = v.forward(tape, x);
        Ok(project(tape, y, &c))
    })
}

fn elementwise(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let mut p = vec![vector(rng, 4), vector(rng, 4), vector(rng, 3)];
    let c = values(rng, 8);
    grad_check(&mut p, eps, |tape, v| {
        let (a, b, w) = (v[0], v[1], v[2]);
        let sa = tape.sigmoid(a);
        let tb = tape.tanh(b);
        let m = tape.mul(sa, tb);
        let s = tape.scale(m, 0.7);
        let mix = tape.gru_mix(sa, b, tb);
        let weights = tape.softmax(w);
        let ws = tape.weighted_sum(weights, &[a, s, mix]);
        let cat = tape.concat(&[ws, s]);
        let head = project(tape, cat, &c);
        let picked = tape.index(mix, 2);
        let total = tape.sum(&[head, picked]);
        Ok(tape.add(total, picked))
    })
}

fn gru_with_inputs(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let (input, hidden) = (5, 4);
    let template = GruParams::new(input, hidden, rng);
    let mut p: Vec<ParamTensor> = template.tensors().into_iter().cloned().collect();
    let n = p.len();
    p.push(vector(rng, input));
    p.push(vector(rng, hidden));
    let c = values(rng, hidden);
    grad_check(&mut p, eps, |tape, v| {
        let gru = template.bound_from(&v[..n]);
        let h = gru.step(tape, v[n], v[n + 1])?;
        let h2 = gru.step(tape, v[n], h)?;
        Ok(project(tape, h2, &c))
    })
}

fn encoder(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let a = alphabet();
    let mut critic = CriticModel::new(a, HIDDEN, rng)?;
    let seq = symbols(rng, 5, a.total());
    let cs: Vec<Vec<f64>> = (0..seq.len()).map(|_| values(rng, HIDDEN)).collect();
    grad_check(&mut critic.encoder, eps, |tape, v| {
        let states = v.encode(tape, &seq)?;
        let terms: Vec<Var> = states
            .iter()
            .zip(&cs)
            .map(|(&s, c)| project(tape, s, c))
            .collect();
        Ok(tape.sum(&terms))
    })
}

fn attention(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let (dec, enc, attn, steps) = (4, 5, 3, 3);
    let template = AttentionParams::new(dec, enc, attn, rng);
    let mut p: Vec<ParamTensor> = template.tensors().into_iter().cloned().collect();
    let n = p.len();
    for _ in 0..steps {
        p.push(vector(rng, enc));
    }
    p.push(vector(rng, dec));
    let c_ctx = values(rng, enc);
    let c_alpha = values(rng, steps);
    grad_check(&mut p, eps, |tape, v| {
        let att = template.bound_from(&v[..n]);
        let keys = att.keys(tape, &v[n..n + steps])?;
        let (ctx, alpha) = att.attend(tape, v[n + steps], &keys);
        let a = project(tape, ctx, &c_ctx);
        let b = project(tape, alpha, &c_alpha);
        Ok(tape.add(a, b))
    })
}

fn softmax_bce(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let mut p = vec![vector(rng, 5)];
    let hit = rng.gen_range(0..5);
    let miss = (hit + 1 + rng.gen_range(0..4)) % 5;
    grad_check(&mut p, eps, |tape, v| {
        let probs = tape.softmax(v[0]);
        let ph = tape.index(probs, hit);
        let pm = tape.index(probs, miss);
        let first = tape.index(v[0], 0);
        let sig = tape.sigmoid(first);
        let terms = [
            tape.bce(ph, 1.0, BCE_CLAMP),
            tape.bce(pm, 0.0, BCE_CLAMP),
            tape.bce(sig, 1.0, BCE_CLAMP),
        ];
        Ok(tape.sum(&terms))
    })
}

fn critic(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let a = alphabet();
    let mut critic = CriticModel::new(a, HIDDEN, rng)?;
    let template = critic.clone();
    let seq = symbols(rng, 6, a.total());
    let target = f64::from(u8::from(rng.gen_bool(0.5)));
    grad_check(&mut critic, eps, |tape, v| {
        critic_loss_on_tape(tape, &template, v, &seq, target)
    })
}

fn discriminator(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let a = alphabet();
    let model = InterrogatorModel::new(a, HIDDEN, rng)?;
    let mut p: Vec<ParamTensor> = model.discriminator_tensors().into_iter().cloned().collect();
    let n = model.encoder.tensor_count();
    let eos = a.eos().index();
    let mut seq = vec![eos];
    seq.extend(symbols(rng, 4, a.size()));
    seq.push(eos);
    let target = f64::from(u8::from(rng.gen_bool(0.5)));
    grad_check(&mut p, eps, |tape, v| {
        let vars = DiscriminatorVars {
            encoder: model.encoder.bound_from(&v[..n]),
            head: model.discriminator.bound_from(&v[n..]),
        };
        let prob = model.discriminate_on_tape(tape, &vars, &seq)?;
        Ok(tape.bce(prob, target, BCE_CLAMP))
    })
}

/// A random question and an answer sampled from `actor` itself.
fn exchange(rng: &mut ChaCha8Rng, actor: &ActorModel) -> Result<(Message, Message)> {
    let a = actor.alphabet();
    let question = Message::from_body(a, &symbols(rng, 3, a.size()))?;
    let (answer, _) = actor.respond(&question, MAX_LEN, rng)?;
    Ok((question, answer))
}

type NoRng = rand::rngs::mock::StepRng;

fn actor_pipeline(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let mut actor = ActorModel::new(alphabet(), HIDDEN, rng)?;
    let template = actor.clone();
    let (question, answer) = exchange(rng, &actor)?;
    grad_check(&mut actor, eps, |tape, v| {
        let steps = template.respond_on_tape::<NoRng>(
            tape,
            v,
            &question,
            MAX_LEN,
            Sampling::Replay(answer.symbols()),
        )?;
        let terms: Vec<Var> = steps
            .iter()
            .filter(|s| !s.forced)
            .map(|s| {
                let p = tape.index(s.probs, s.symbol.index());
                tape.bce(p, 1.0, BCE_CLAMP)
            })
            .collect();
        Ok(tape.sum(&terms))
    })
}

fn actor_score(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let a = alphabet();
    let mut actor = ActorModel::new(a, HIDDEN, rng)?;
    let critic = CriticModel::new(a, HIDDEN, rng)?;
    let template = actor.clone();
    let (question, answer) = exchange(rng, &actor)?;
    let context: Vec<usize> = question.indices().collect();
    grad_check(&mut actor, eps, |tape, v| {
        let steps = template.respond_on_tape::<NoRng>(
            tape,
            v,
            &question,
            MAX_LEN,
            Sampling::Replay(answer.symbols()),
        )?;
        score_steps(tape, &steps, &context, &critic, &mut Tape::new())
    })
}

fn question_branch(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let model = InterrogatorModel::new(alphabet(), HIDDEN, rng)?;
    let (question, _) = model.question(MAX_LEN, rng)?;
    let mut decoder = model.decoder.clone();
    grad_check(&mut decoder, eps, |tape, dec| {
        let (enc, _) = model.encoder.bind(tape);
        let steps = model.question_on_tape::<NoRng>(
            tape,
            &enc,
            dec,
            MAX_LEN,
            Sampling::Replay(question.symbols()),
        )?;
        score_steps(tape, &steps, &[], &model.critic, &mut Tape::new())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes_on_two_seeds() {
        for r in gradcheck_suite(2, EPSILON).unwrap() {
            assert!(
                r.passes(TOLERANCE),
                "{} failed: {:e}",
                r.name,
                r.max_rel_error
            );
            assert!(r.checked > 0, "{}", r.name);
        }
    }
}
