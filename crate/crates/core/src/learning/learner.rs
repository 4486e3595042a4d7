use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stand-in for a human answering prompts during simulation. Each prompt gets its own
/// random stream derived from the seed and prompt id, so answers do not depend on the
/// order prompts are asked in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedLearner {
    pub seed: u64,
    pub accuracy: f64,
}

impl SimulatedLearner {
    pub fn new(seed: u64, accuracy: f64) -> Self {
        Self {
            seed,
            accuracy: accuracy.clamp(0.0, 1.0),
        }
    }

    pub fn answer(&self, prompt_id: &str, expected: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(prompt_id.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        if rng.gen_bool(self.accuracy) {
            return expected.to_owned();
        }
        let words: Vec<&str> = expected.split_whitespace().collect();
        if words.len() > 1 {
            words[..words.len() - 1].join(" ")
        } else {
            let chars: Vec<char> = expected.chars().collect();
            chars[..chars.len() / 2].iter().collect()
        }
    }
}
