//! Fixtures shared by the benchmarks under `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siggame_core::game::{GameConfig, PublicLog};
use siggame_core::nn::{GruParams, ParamTensor};
use siggame_core::training::{Players, TrainingConfig, Workspace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// A GRU cell with random weights plus an input and a previous state.
pub fn gru_fixture(input: usize, hidden: usize) -> (GruParams, Vec<f64>, Vec<f64>) {
    let mut r = rng(0);
    let gru = GruParams::new(input, hidden, &mut r);
    let x = random_vector(&mut r, input);
    let h = random_vector(&mut r, hidden);
    (gru, x, h)
}

pub fn vector_param(rng: &mut ChaCha8Rng, n: usize) -> ParamTensor {
    ParamTensor::from_values(n, 1, random_vector(rng, n)).expect("finite")
}

/// Everything needed to call `training_iteration` repeatedly.
pub struct IterationFixture {
    pub game: GameConfig,
    pub training: TrainingConfig,
    pub players: Players,
    pub log: PublicLog,
    pub workspace: Workspace,
    pub rng: ChaCha8Rng,
    pub next: u64,
}

impl IterationFixture {
    pub fn new(game: GameConfig) -> Self {
        let training = TrainingConfig::default();
        let mut r = rng(1);
        let players = Players::new(&game, &training, &mut r).expect("valid game");
        Self {
            game,
            training,
            players,
            log: PublicLog::new(),
            workspace: Workspace::default(),
            rng: r,
            next: 0,
        }
    }

    pub fn step(&mut self) {
        siggame_core::training::training_iteration(
            &mut self.players,
            &self.game,
            &self.training,
            &mut self.log,
            self.next,
            &mut self.workspace,
            &mut self.rng,
        )
        .expect("iteration");
        self.next += 1;
    }
}
