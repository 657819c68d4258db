//! Training-loop helpers for the GAN trainer: step learning-rate decay,
//! discriminator skip schedule, Gaussian image noise, and named presets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genai::CoverImage;

/// Noise level used by presets that enable discriminator input noise
/// (normalized pixel scale). The published configurations do not state one.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("malformed preset JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Step decay: `initial · factor^⌊epoch / interval⌋`, constant without an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub factor: f64,
    pub interval: Option<u32>,
}

impl LrSchedule {
    pub fn constant(initial: f64) -> Self {
        Self { initial, factor: 1.0, interval: None }
    }

    pub fn step(initial: f64, factor: f64, interval: u32) -> Self {
        Self { initial, factor, interval: Some(interval) }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.initial > 0.0 && self.initial.is_finite()) {
            return Err(TrainError::Invalid(format!("initial lr {} must be positive", self.initial)));
        }
        if !(self.factor > 0.0 && self.factor <= 1.0) {
            return Err(TrainError::Invalid(format!("decay factor {} must be in (0, 1]", self.factor)));
        }
        if self.interval == Some(0) {
            return Err(TrainError::Invalid("decay interval must be at least 1 epoch".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: u32) -> f64 {
        match self.interval {
            None => self.initial,
            Some(interval) => {
                let steps = (epoch / interval.max(1)) as i32;
                self.initial * self.factor.powi(steps)
            }
        }
    }
}

/// The discriminator trains on epochs where `epoch mod period == phase`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipSchedule {
    pub period: u32,
    pub phase: u32,
}

impl Default for SkipSchedule {
    fn default() -> Self {
        Self { period: 1, phase: 0 }
    }
}

impl SkipSchedule {
    pub fn every_other_epoch() -> Self {
        Self { period: 2, phase: 0 }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.period == 0 {
            return Err(TrainError::Invalid("skip period must be at least 1".into()));
        }
        if self.phase >= self.period {
            return Err(TrainError::Invalid(format!("phase {} not in [0, {})", self.phase, self.period)));
        }
        Ok(())
    }

    pub fn should_train_discriminator(&self, epoch: u32) -> bool {
        self.period <= 1 || epoch % self.period == self.phase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscriminatorVariant {
    Standard,
    /// Conditional and unconditional losses combined into one output.
    OneWay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPreset {
    pub name: String,
    pub g_lr: LrSchedule,
    pub d_variant: DiscriminatorVariant,
    pub skip: SkipSchedule,
    pub noise_sigma: f64,
}

impl TrainPreset {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.g_lr.validate()?;
        self.skip.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(TrainError::Invalid(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }

    /// Serializes to the trainer config schema
    /// `{name, g_lr:{initial,factor,interval}, d_variant, skip:{period,phase}, noise_sigma}`.
    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("preset serializes")
    }

    pub fn parse_json(text: &str) -> Result<Self, TrainError> {
        let preset: TrainPreset = serde_json::from_str(text)?;
        preset.validate()?;
        Ok(preset)
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "table1-row-1",
    "table1-row-2",
    "table1-row-3",
    "table1-row-4",
    "table1-row-5",
    "table1-row-6",
];

/// The six published training configurations.
pub fn table1_presets() -> Vec<TrainPreset> {
    let preset = |name: &str, g_lr, d_variant, skip, noise_sigma| TrainPreset {
        name: name.to_string(),
        g_lr,
        d_variant,
        skip,
        noise_sigma,
    };
    use DiscriminatorVariant::*;
    vec![
        preset(PRESET_NAMES[0], LrSchedule::constant(0.002), Standard, SkipSchedule::default(), 0.0),
        preset(PRESET_NAMES[1], LrSchedule::constant(0.0002), Standard, SkipSchedule::default(), 0.0),
        preset(
            PRESET_NAMES[2],
            LrSchedule::step(0.0002, 0.5, 100),
            Standard,
            SkipSchedule::every_other_epoch(),
            0.0,
        ),
        preset(PRESET_NAMES[3], LrSchedule::step(0.0002, 0.5, 50), OneWay, SkipSchedule::default(), 0.0),
        preset(PRESET_NAMES[4], LrSchedule::constant(0.0002), Standard, SkipSchedule::default(), DEFAULT_NOISE_SIGMA),
        preset(PRESET_NAMES[5], LrSchedule::constant(0.002), Standard, SkipSchedule::default(), DEFAULT_NOISE_SIGMA),
    ]
}

pub fn preset(name: &str) -> Result<TrainPreset, TrainError> {
    table1_presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| TrainError::UnknownPreset(name.to_string()))
}

/// Adds independent N(0, σ²) noise to every channel in normalized [0, 1]
/// space, clamps, and re-quantizes to 8 bits. σ = 0 returns the input unchanged.
pub fn add_gaussian_noise(image: &CoverImage, sigma: f64, seed: u64) -> CoverImage {
    let mut out = image.clone();
    if sigma.is_nan() || sigma <= 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for px in out.pixels_mut() {
        let v = *px as f64 / 255.0 + normal.sample(&mut rng);
        *px = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    out
}
