use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::sigmoid;

/// Names of the five trait dimensions, in storage order.
pub const TRAIT_NAMES: [&str; 5] = [
    "extraversion",
    "agreeableness",
    "conscientiousness",
    "neuroticism",
    "openness",
];

/// Ground-truth map from `(arousal, valence)` to the five traits:
/// `traits = clip(sigmoid(matrix * [arousal, valence] + bias) + noise, 0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedRelationship {
    pub matrix: [[f64; 2]; 5],
    pub bias: [f64; 5],
    pub noise_sigma: f64,
}

impl Default for PlantedRelationship {
    /// Agreeableness and conscientiousness rows are nearly parallel and the
    /// openness row is close to the negated neuroticism row.
    fn default() -> Self {
        PlantedRelationship {
            matrix: [
                [1.6, 1.0],   // extraversion
                [-0.5, 1.8],  // agreeableness
                [-0.7, 1.6],  // conscientiousness
                [1.5, -1.3],  // neuroticism
                [-1.4, 1.2],  // openness
            ],
            bias: [0.0, 0.2, 0.1, -0.1, 0.0],
            noise_sigma: 0.02,
        }
    }
}

impl PlantedRelationship {
    /// Noise-free traits for a latent emotion.
    pub fn expected(&self, arousal: f64, valence: f64) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (j, o) in out.iter_mut().enumerate() {
            let [ma, mv] = self.matrix[j];
            *o = sigmoid(ma * arousal + mv * valence + self.bias[j]);
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, arousal: f64, valence: f64, rng: &mut R) -> [f64; 5] {
        let mut t = self.expected(arousal, valence);
        if self.noise_sigma > 0.0 {
            let n = Normal::new(0.0, self.noise_sigma).expect("finite noise level");
            for v in &mut t {
                *v = (*v + n.sample(rng)).clamp(0.0, 1.0);
            }
        }
        t
    }
}
