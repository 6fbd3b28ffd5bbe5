//! Run configuration and the optional TOML override file.
//!
//! Every key is optional; anything left out keeps the experiment's value.
//!
//! ```toml
//! window = 0.2                 # fraction of final iterations for the verdict
//!
//! [game]
//! alphabet_size = 4            # ordinary symbols; EOS is added on top
//! question_limit = 8
//! blue_limit = 8
//! red_limit = 8
//! interrogator_hidden = 8
//! blue_hidden = 8
//! red_hidden = 8
//! batch_size = 64              # rounds per iteration (N)
//! iterations = 2000            # T
//!
//! [training]
//! discriminator_target = "true_source"   # or "label_agreement"
//! learning_rate = 0.001
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiments::ExperimentSpec;
use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::metrics::DEFAULT_WINDOW;
use crate::training::{DiscriminatorTarget, TrainingConfig};

/// Everything a run needs besides the seed and the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub game: GameConfig,
    pub training: TrainingConfig,
    pub window: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            game: GameConfig::default(),
            training: TrainingConfig::default(),
            window: DEFAULT_WINDOW,
        }
    }
}

impl RunConfig {
    pub fn for_experiment(spec: &ExperimentSpec) -> Self {
        let mut cfg = Self::default();
        cfg.game = spec.game_config(&cfg.game);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        if !(self.window > 0.0 && self.window <= 1.0) {
            return Err(Error::Config(format!(
                "window must lie in (0, 1], got {}",
                self.window
            )));
        }
        let a = &self.training.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                a.learning_rate
            )));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::Config(
                "adam betas must lie in [0, 1) and epsilon be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(w) = o.window {
            self.window = w;
        }
        let g = &o.game;
        let game = &mut self.game;
        for (slot, value) in [
            (&mut game.alphabet_size, g.alphabet_size),
            (&mut game.question_limit, g.question_limit),
            (&mut game.blue_limit, g.blue_limit),
            (&mut game.red_limit, g.red_limit),
            (&mut game.interrogator_hidden, g.interrogator_hidden),
            (&mut game.blue_hidden, g.blue_hidden),
            (&mut game.red_hidden, g.red_hidden),
            (&mut game.batch_size, g.batch_size),
            (&mut game.iterations, g.iterations),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        let t = &o.training;
        let adam = &mut self.training.adam;
        for (slot, value) in [
            (&mut adam.learning_rate, t.learning_rate),
            (&mut adam.beta1, t.beta1),
            (&mut adam.beta2, t.beta2),
            (&mut adam.epsilon, t.epsilon),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(d) = t.discriminator_target {
            self.training.discriminator_target = d;
        }
    }

    /// Applies the overrides in the TOML file at `path`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let o = Overrides::from_toml(&text).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                path: path.to_owned(),
                message,
            },
            other => other,
        })?;
        self.apply(&o);
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub window: Option<f64>,
    pub game: GameOverrides,
    pub training: TrainingOverrides,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameOverrides {
    pub alphabet_size: Option<usize>,
    pub question_limit: Option<usize>,
    pub blue_limit: Option<usize>,
    pub red_limit: Option<usize>,
    pub interrogator_hidden: Option<usize>,
    pub blue_hidden: Option<usize>,
    pub red_hidden: Option<usize>,
    pub batch_size: Option<usize>,
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingOverrides {
    pub discriminator_target: Option<DiscriminatorTarget>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
}

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
