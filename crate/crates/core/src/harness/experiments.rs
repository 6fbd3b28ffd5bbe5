use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::metrics::Equilibrium;

/// Question limit used by every experiment that lets the interrogator ask.
pub const QUESTION_LIMIT: usize = 8;

/// One row of the experiment table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: u8,
    pub name: String,
    pub interrogator_hidden: usize,
    pub blue_hidden: usize,
    pub red_hidden: usize,
    pub blue_limit: usize,
    pub red_limit: usize,
    /// 0 means the interrogator never asks anything.
    pub question_limit: usize,
    pub expected: Equilibrium,
}

impl ExperimentSpec {
    /// `base` with this experiment's sizes and limits written over it.
    pub fn game_config(&self, base: &GameConfig) -> GameConfig {
        GameConfig {
            interrogator_hidden: self.interrogator_hidden,
            blue_hidden: self.blue_hidden,
            red_hidden: self.red_hidden,
            blue_limit: self.blue_limit,
            red_limit: self.red_limit,
            question_limit: self.question_limit,
            ..base.clone()
        }
    }
}

fn spec(
    id: u8,
    name: &str,
    h: (usize, usize, usize),
    limits: (usize, usize),
    question_limit: usize,
    expected: Equilibrium,
) -> ExperimentSpec {
    ExperimentSpec {
        id,
        name: name.to_owned(),
        interrogator_hidden: h.0,
        blue_hidden: h.1,
        red_hidden: h.2,
        blue_limit: limits.0,
        red_limit: limits.1,
        question_limit,
        expected,
    }
}

/// The seven experiments, in order.
pub fn builtin_experiments() -> Vec<ExperimentSpec> {
    use Equilibrium::{Pooling, Separating};
    let q = QUESTION_LIMIT;
    vec![
        spec(1, "Identical", (8, 8, 8), (8, 8), 0, Pooling),
        spec(2, "Handicap blue", (8, 8, 8), (6, 5), 0, Separating),
        spec(3, "Handicap red", (8, 8, 8), (5, 6), 0, Pooling),
        spec(4, "Neurons A blue", (8, 8, 4), (8, 8), q, Separating),
        spec(5, "Neurons A red", (8, 4, 8), (8, 8), q, Pooling),
        spec(6, "Neurons B blue", (8, 16, 8), (8, 8), q, Pooling),
        spec(7, "Neurons B red", (8, 8, 16), (8, 8), q, Pooling),
    ]
}

pub fn experiment(id: u8) -> Result<ExperimentSpec> {
    builtin_experiments()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::Config(format!("no experiment {id}; valid ids are 1-7")))
}
