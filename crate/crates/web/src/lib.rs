//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export wraps a plain function returning `Result<String, String>` (JSON on
//! success) so the logic is testable on the host.

use std::sync::OnceLock;

use chrono::{TimeZone, Utc};
use covergen_core::augment::{generate_new_titles, sample_vocabulary, Provenance, Sampling, Vocabulary};
use covergen_core::genai::{hash64, stub_generate_sized, StubBackend};
use covergen_core::pipeline::{execute_run, RunContext, RunManifest, RunParams};
use covergen_core::train::{add_gaussian_noise, preset, PRESET_NAMES};
use covergen_core::wndb::{fixture_lexicon, Lexicon};
use serde::Serialize;
use uuid::Uuid;
use wasm_bindgen::prelude::*;

/// Gallery and preview image edge length; small so the page stays responsive.
pub const DEMO_SIZE: u32 = 128;
pub const MAX_EPOCHS: u32 = 5000;
pub const MAX_VARIANTS: usize = 24;

fn lexicon() -> &'static Lexicon {
    static LEX: OnceLock<Lexicon> = OnceLock::new();
    LEX.get_or_init(fixture_lexicon)
}

fn vocabulary() -> &'static Vocabulary {
    static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
    VOCAB.get_or_init(sample_vocabulary)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn data_url(png_base64: &str) -> String {
    format!("data:image/png;base64,{png_base64}")
}

#[derive(Debug, Serialize)]
struct Candidate {
    title: String,
    tokens: Vec<String>,
    provenance: Vec<Provenance>,
}

/// Candidate titles for `title` from the bundled lexicon and vocabulary.
pub fn augment_json(title: &str, count: usize, seed: u64, round_robin: bool) -> Result<String, String> {
    let sampling = if round_robin { Sampling::RoundRobin } else { Sampling::Random };
    let titles = generate_new_titles(title, count.min(MAX_VARIANTS * 10), lexicon(), vocabulary(), seed, sampling)
        .map_err(|e| e.to_string())?;
    let out: Vec<Candidate> = titles
        .into_iter()
        .map(|c| Candidate {
            title: c.text(),
            tokens: c.tokens,
            provenance: c.provenance,
        })
        .collect();
    to_json(&out)
}

#[derive(Debug, Serialize)]
struct Gallery {
    manifest: RunManifest,
    images: Vec<String>,
}

/// Runs the full pipeline on the stub backend. Returns the manifest and one PNG data URL per cover.
pub fn gallery_json(title: &str, num_variants: usize, top_k: usize, seed: u64, now_ms: f64) -> Result<String, String> {
    if num_variants > MAX_VARIANTS {
        return Err(format!("at most {MAX_VARIANTS} variants in the demo"));
    }
    let mut params = RunParams::new(title);
    params.num_variants = num_variants;
    params.top_k = top_k;
    params.seed = seed;
    params.image_size = (DEMO_SIZE, DEMO_SIZE);
    let created_at = Utc
        .timestamp_millis_opt(now_ms as i64)
        .single()
        .ok_or_else(|| format!("invalid timestamp {now_ms}"))?;
    let run_id = Uuid::from_u128(((hash64(title) as u128) << 64) | ((seed ^ now_ms as u64) as u128));
    let outcome = execute_run(&params, lexicon(), vocabulary(), &StubBackend, RunContext::new(run_id, created_at))
        .map_err(|e| e.to_string())?;
    let images = outcome.images.iter().map(|img| data_url(&img.to_base64_png())).collect();
    to_json(&Gallery {
        manifest: outcome.manifest,
        images,
    })
}

#[derive(Debug, Serialize)]
struct SchedulePoint {
    epoch: u32,
    lr: f64,
    d_trained: bool,
}

#[derive(Debug, Serialize)]
struct Schedule {
    name: String,
    noise_sigma: f64,
    preset: serde_json::Value,
    points: Vec<SchedulePoint>,
}

/// Generator learning rate and discriminator training flag for each epoch of a named preset.
pub fn schedule_json(name: &str, epochs: u32) -> Result<String, String> {
    if epochs == 0 || epochs > MAX_EPOCHS {
        return Err(format!("epochs must be in 1..={MAX_EPOCHS}"));
    }
    let p = preset(name).map_err(|e| e.to_string())?;
    let points = (0..epochs)
        .map(|epoch| SchedulePoint {
            epoch,
            lr: p.g_lr.lr_at(epoch),
            d_trained: p.skip.should_train_discriminator(epoch),
        })
        .collect();
    to_json(&Schedule {
        name: p.name.clone(),
        noise_sigma: p.noise_sigma,
        preset: serde_json::from_str(&p.export_json()).map_err(|e| e.to_string())?,
        points,
    })
}

/// Stub cover for `title` with gaussian noise of `sigma` applied, as a PNG data URL.
pub fn noise_preview_url(title: &str, sigma: f64, seed: u64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err("sigma must be in [0, 1]".into());
    }
    let clean = stub_generate_sized(title, seed, DEMO_SIZE, DEMO_SIZE);
    Ok(data_url(&add_gaussian_noise(&clean, sigma, seed).to_base64_png()))
}

pub fn preset_names() -> Vec<String> {
    PRESET_NAMES.iter().map(|s| s.to_string()).collect()
}

// JS-facing wrappers. Seeds arrive as f64 from JS numbers.

fn seed_from_js(seed: f64) -> Result<u64, JsValue> {
    if seed.is_finite() && seed >= 0.0 && seed.fract() == 0.0 && seed <= 9_007_199_254_740_991.0 {
        Ok(seed as u64)
    } else {
        Err(JsValue::from_str("seed must be a non-negative integer"))
    }
}

#[wasm_bindgen]
pub fn augment_titles(title: &str, count: u32, seed: f64, round_robin: bool) -> Result<String, JsValue> {
    augment_json(title, count as usize, seed_from_js(seed)?, round_robin).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn generate_gallery(title: &str, num_variants: u32, top_k: u32, seed: f64, now_ms: f64) -> Result<String, JsValue> {
    gallery_json(title, num_variants as usize, top_k as usize, seed_from_js(seed)?, now_ms)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn training_schedule(name: &str, epochs: u32) -> Result<String, JsValue> {
    schedule_json(name, epochs).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn noise_preview(title: &str, sigma: f64, seed: f64) -> Result<String, JsValue> {
    noise_preview_url(title, sigma, seed_from_js(seed)?).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn training_presets() -> String {
    serde_json::to_string(&preset_names()).expect("names serialize")
}
