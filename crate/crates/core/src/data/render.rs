use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::Tensor;

/// Dataset-specific nuisance added on top of the informative blob.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftParams {
    /// Constant added to every pixel.
    pub brightness: f64,
    /// Peak amplitude of the concentric ring background.
    pub ring_amplitude: f64,
    /// Ring wavelength in pixels.
    pub ring_period: f64,
}

impl ShiftParams {
    pub const NONE: ShiftParams = ShiftParams {
        brightness: 0.0,
        ring_amplitude: 0.0,
        ring_period: 4.0,
    };

    /// Default nuisance of the emotion set: brighter, with rings.
    pub fn emotion_default() -> Self {
        ShiftParams {
            brightness: 0.15,
            ring_amplitude: 0.15,
            ring_period: 4.0,
        }
    }

    pub fn personality_default() -> Self {
        Self::NONE
    }
}

/// How labels are drawn into pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub image_size: usize,
    pub background: f64,
    pub blob_amplitude: f64,
    /// Blob standard deviation as a fraction of the image size.
    pub blob_sigma: f64,
    /// Fraction of the half-width covered by a unit label.
    pub position_span: f64,
    /// Standard deviation of additive per-pixel Gaussian noise.
    pub pixel_noise: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            image_size: 32,
            background: 0.1,
            blob_amplitude: 0.7,
            blob_sigma: 0.1,
            position_span: 0.7,
            pixel_noise: 0.02,
        }
    }
}

impl RenderParams {
    /// Blob centre `(row, col)` in pixel coordinates for a label pair.
    /// Valence moves the blob right, arousal moves it up.
    pub fn blob_center(&self, arousal: f64, valence: f64) -> (f64, f64) {
        let c = (self.image_size as f64 - 1.0) / 2.0;
        let span = self.position_span * c;
        (c - arousal * span, c + valence * span)
    }
}

/// Renders one grayscale `[1,S,S]` frame with values clipped to `[0,1]`.
pub fn render_frame<R: Rng + ?Sized>(
    arousal: f64,
    valence: f64,
    shift: &ShiftParams,
    render: &RenderParams,
    rng: &mut R,
) -> Tensor {
    let s = render.image_size;
    let (cy, cx) = render.blob_center(arousal, valence);
    let mid = (s as f64 - 1.0) / 2.0;
    let sigma = render.blob_sigma * s as f64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let noise = (render.pixel_noise > 0.0)
        .then(|| Normal::new(0.0, render.pixel_noise).expect("finite noise level"));
    Tensor::from_fn(&[1, s, s], |i| {
        let (r, c) = ((i / s) as f64, (i % s) as f64);
        let d = ((r - mid).powi(2) + (c - mid).powi(2)).sqrt();
        let ring = shift.ring_amplitude
            * 0.5
            * (1.0 + (2.0 * std::f64::consts::PI * d / shift.ring_period).cos());
        let blob = render.blob_amplitude * (-((r - cy).powi(2) + (c - cx).powi(2)) * inv).exp();
        let n = noise.as_ref().map_or(0.0, |n| n.sample(rng));
        (render.background + shift.brightness + ring + blob + n).clamp(0.0, 1.0)
    })
}
