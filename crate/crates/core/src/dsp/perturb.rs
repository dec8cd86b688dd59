use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded per-step disturbance on stored controller state.
///
/// Every stored number picks up `eps * u` per step, `u ~ U[0.5, 1.5]`, always
/// positive so the drift is systematic. A cumulative sum stands for all the
/// samples it has absorbed, so it receives `eps * u * entries`; a recursion
/// that keeps one previous output receives `eps * u`.
#[derive(Debug, Clone)]
pub struct SumPerturbation {
    eps: f64,
    rng: ChaCha8Rng,
}

impl SumPerturbation {
    pub fn new(eps: f64, seed: u64) -> Self {
        Self {
            eps,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Disturbance for a stored value that represents `entries` samples.
    pub fn draw(&mut self, entries: u64) -> f64 {
        if self.eps == 0.0 {
            return 0.0;
        }
        let u: f64 = self.rng.random_range(0.5..1.5);
        self.eps * u * entries.max(1) as f64
    }
}
