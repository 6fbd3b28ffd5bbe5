use crate::error::{Error, Result};
use crate::nn::param::ParamTensor;
use crate::nn::tape::{Gradients, Tape, Var};

/// A bundle of parameter tensors with a fixed traversal order.
///
/// `bind` records every tensor on a tape and hands back a typed view of
/// the resulting variables; `accumulate` routes gradients back into the
/// tensors in the same order.
pub trait Module {
    type Bound;

    fn tensors(&self) -> Vec<&ParamTensor>;

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor>;

    /// Builds the typed view from variables in `tensors()` order.
    fn bound_from(&self, vars: &[Var]) -> Self::Bound;

    fn tensor_count(&self) -> usize {
        self.tensors().len()
    }

    fn bind(&self, tape: &mut Tape) -> (Self::Bound, Vec<Var>) {
        let vars = tape.params(self.tensors());
        (self.bound_from(&vars), vars)
    }

    fn accumulate(&mut self, grads: &Gradients<'_>, vars: &[Var]) -> Result<()> {
        grads.accumulate_into(self.tensors_mut(), vars)
    }

    fn zero_grad(&mut self) {
        for p in self.tensors_mut() {
            p.zero_grad();
        }
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|p| p.len()).sum()
    }

    /// Order-sensitive fingerprint of every parameter bit. Used to prove
    /// that a training stage left a model untouched.
    fn checksum(&self) -> u64 {
        checksum_tensors(self.tensors())
    }
}

/// FNV-1a over the bit patterns of every value, in order.
pub fn checksum_tensors<'a>(tensors: impl IntoIterator<Item = &'a ParamTensor>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in tensors {
        for v in p.values() {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

impl Module for Vec<ParamTensor> {
    type Bound = Vec<Var>;

    fn tensors(&self) -> Vec<&ParamTensor> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.iter_mut().collect()
    }

    fn bound_from(&self, vars: &[Var]) -> Vec<Var> {
        vars.to_vec()
    }
}

pub(crate) fn expect_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what}: expected length {want}, got {got}"
        )))
    }
}
