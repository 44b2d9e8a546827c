use rand::Rng;

/// Inverted-dropout multipliers for every hidden unit: 0 for dropped units,
/// 1/(1−ρ) for kept ones, so the masked activation is unbiased.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    layers: Vec<Vec<f64>>,
}

impl DropoutMask {
    pub fn keep_all(hidden: &[usize]) -> Self {
        Self {
            layers: hidden.iter().map(|&n| vec![1.0; n]).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(hidden: &[usize], rate: f64, rng: &mut R) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        Self {
            layers: hidden
                .iter()
                .map(|&n| {
                    (0..n)
                        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                        .collect()
                })
                .collect(),
        }
    }

    /// Builds a mask from explicit keep indicators.
    pub fn from_keep(keep: &[Vec<bool>], rate: f64) -> Self {
        let scale = 1.0 / (1.0 - rate);
        Self {
            layers: keep
                .iter()
                .map(|l| l.iter().map(|&k| if k { scale } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn factors(&self, layer: usize) -> &[f64] {
        &self.layers[layer]
    }

    pub fn kept(&self) -> usize {
        self.layers.iter().flatten().filter(|&&f| f != 0.0).count()
    }

    pub(super) fn fits(&self, hidden: &[usize]) -> bool {
        self.layers.len() == hidden.len() && self.layers.iter().zip(hidden).all(|(l, &n)| l.len() == n)
    }
}
