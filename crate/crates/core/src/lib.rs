//! Seq2Seq actor-critic agents learning to signal in a three-player
//! adversarial imitation game.
//!
//! Two answering agents, `blue` and `red`, reply to an interrogator's
//! question. The interrogator sees both answers anonymously and labels each
//! one; blue wants to be recognised, red wants to pass as blue. Everything
//! (GRUs, attention, reverse-mode gradients, Adam) is implemented in
//! [`nn`] on top of a small vector tape.

pub mod agents;
pub mod error;
pub mod game;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod training;

pub use agents::{classify, AgentType, Alphabet, Message, Symbol};
pub use error::{Error, Result};
