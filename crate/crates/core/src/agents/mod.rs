//! Actor, critic and interrogator assemblies.

pub mod message;
pub mod models;
pub mod seq;

pub use message::{classify, validate_exchange, AgentType, Alphabet, Message, Symbol};
pub use models::{
    ActorModel, ActorVars, CriticModel, CriticVars, DiscriminatorVars, InterrogatorModel,
    QFunction, StepDistribution,
};
pub use seq::{AttnDecoder, DecodedStep, Sampling, SeqEncoder};
