//! Generator/discriminator backends: cover images, the JSON wire protocol,
//! and a deterministic in-process stub.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SIZE: u32 = 256;
pub const DEFAULT_BATCH_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error in `{field}`: {message}")]
    Protocol { field: String, message: String },
    #[error("backend rejected request: {0}")]
    Backend(String),
    #[error("image decode error: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn protocol(field: impl Into<String>, message: impl Into<String>) -> Self {
        ClientError::Protocol {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, ClientError::Transport(_))
    }
}

/// 8-bit RGB raster, stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for CoverImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CoverImage({}x{})", self.width, self.height)
    }
}

impl CoverImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ClientError> {
        if width == 0 || height == 0 {
            return Err(ClientError::Decode(format!("degenerate size {width}x{height}")));
        }
        let expected = 3 * width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ClientError::Decode(format!(
                "expected {expected} bytes for {width}x{height} RGB, got {}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(3 * width as usize * height as usize).collect();
        Self::new(width, height, pixels).expect("non-zero size")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory PNG header");
            writer.write_image_data(&self.pixels).expect("in-memory PNG data");
        }
        out
    }

    /// Decodes 8-bit RGB or RGBA PNG data; alpha is dropped.
    pub fn from_png(bytes: &[u8]) -> Result<Self, ClientError> {
        let err = |e: png::DecodingError| ClientError::Decode(e.to_string());
        let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(err)?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| ClientError::Decode("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(err)?;
        buf.truncate(info.buffer_size());
        let rgb = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            other => return Err(ClientError::Decode(format!("unsupported color type {other:?}"))),
        };
        Self::new(info.width, info.height, rgb)
    }

    pub fn to_base64_png(&self) -> String {
        BASE64.encode(self.to_png())
    }

    pub fn from_base64_png(data: &str) -> Result<Self, ClientError> {
        let bytes = BASE64
            .decode(data)
            .map_err(|e| ClientError::Decode(format!("invalid base64: {e}")))?;
        Self::from_png(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub unconditional: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<Vec<f64>>,
}

// Wire protocol bodies.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub titles: Vec<String>,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedImage {
    pub title_index: usize,
    pub png_base64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub images: Vec<GeneratedImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub png_base64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub images: Vec<ImagePayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub titles: Option<Vec<String>>,
}

pub type ScoreResponse = ScoreReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl GenerateResponse {
    /// Reorders images by `title_index` and checks there is exactly one per title.
    pub fn into_images(self, expected: usize) -> Result<Vec<CoverImage>, ClientError> {
        if self.images.len() != expected {
            return Err(ClientError::protocol(
                "images",
                format!("expected {expected} images, got {}", self.images.len()),
            ));
        }
        let mut slots: Vec<Option<CoverImage>> = vec![None; expected];
        for (i, item) in self.images.into_iter().enumerate() {
            let slot = slots.get_mut(item.title_index).ok_or_else(|| {
                ClientError::protocol(
                    format!("images[{i}].title_index"),
                    format!("index {} out of range", item.title_index),
                )
            })?;
            if slot.is_some() {
                return Err(ClientError::protocol(
                    format!("images[{i}].title_index"),
                    format!("duplicate index {}", item.title_index),
                ));
            }
            let image = CoverImage::from_base64_png(&item.png_base64)
                .map_err(|e| ClientError::protocol(format!("images[{i}].png_base64"), e.to_string()))?;
            *slot = Some(image);
        }
        Ok(slots.into_iter().map(|s| s.expect("every slot filled")).collect())
    }
}

impl ScoreReport {
    /// Checks alignment with the request and that every score is finite.
    pub fn validate(&self, images: usize, with_titles: bool) -> Result<(), ClientError> {
        if self.unconditional.len() != images {
            return Err(ClientError::protocol(
                "unconditional",
                format!("expected {images} scores, got {}", self.unconditional.len()),
            ));
        }
        if let Some(i) = self.unconditional.iter().position(|s| !s.is_finite()) {
            return Err(ClientError::protocol(format!("unconditional[{i}]"), "score is not finite"));
        }
        match (&self.conditional, with_titles) {
            (Some(c), _) if c.len() != images => Err(ClientError::protocol(
                "conditional",
                format!("expected {images} scores, got {}", c.len()),
            )),
            (Some(c), _) if c.iter().any(|s| !s.is_finite()) => {
                Err(ClientError::protocol("conditional", "score is not finite"))
            }
            _ => Ok(()),
        }
    }
}

/// A text-to-image generator plus the discriminator trained alongside it.
pub trait CoverBackend: Send + Sync {
    /// Identity string recorded in run manifests.
    fn identity(&self) -> String;

    /// One image per title, order-aligned.
    fn generate(&self, titles: &[String], seed: u64, width: u32, height: u32) -> Result<Vec<CoverImage>, ClientError>;

    fn score(&self, images: &[CoverImage], titles: Option<&[String]>) -> Result<ScoreReport, ClientError>;
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn hash64(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Procedural cover: vertical gradient background, three rectangles and a
/// band whose height follows the title length. Pure in `(title, seed)`.
pub fn stub_generate_sized(title: &str, seed: u64, width: u32, height: u32) -> CoverImage {
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(title) ^ seed);
    let (w, h) = (width.max(1) as usize, height.max(1) as usize);
    let top: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
    let bottom: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
    let mut pixels = vec![0u8; 3 * w * h];
    for y in 0..h {
        let t = if h > 1 { y as f64 / (h - 1) as f64 } else { 0.0 };
        let row: [u8; 3] = std::array::from_fn(|c| (top[c] + (bottom[c] - top[c]) * t).round() as u8);
        for x in 0..w {
            pixels[3 * (y * w + x)..3 * (y * w + x) + 3].copy_from_slice(&row);
        }
    }
    let mut fill = |x0: usize, y0: usize, x1: usize, y1: usize, rgb: [u8; 3]| {
        for y in y0..y1.min(h) {
            for x in x0..x1.min(w) {
                pixels[3 * (y * w + x)..3 * (y * w + x) + 3].copy_from_slice(&rgb);
            }
        }
    };
    for _ in 0..3 {
        let x0 = rng.random_range(0..w);
        let y0 = rng.random_range(0..h);
        let x1 = x0 + rng.random_range(1..=w / 2 + 1);
        let y1 = y0 + rng.random_range(1..=h / 2 + 1);
        let rgb: [u8; 3] = std::array::from_fn(|_| rng.random());
        fill(x0, y0, x1, y1, rgb);
    }
    // title band near the top, thicker for longer titles
    let band = (h / 16 + title.chars().count() * h / 256).clamp(1, h / 3 + 1);
    let band_y = h / 10;
    let ink: [u8; 3] = std::array::from_fn(|_| rng.random());
    fill(w / 8, band_y, w - w / 8, band_y + band, ink);
    CoverImage::new(w as u32, h as u32, pixels).expect("sized buffer")
}

pub fn stub_generate(title: &str, seed: u64) -> CoverImage {
    stub_generate_sized(title, seed, DEFAULT_SIZE, DEFAULT_SIZE)
}

/// Mean per-channel variance normalized by the 8-bit maximum (127.5²), in `[0, 1]`.
pub fn stub_score(image: &CoverImage) -> f64 {
    let n = (image.width as usize * image.height as usize) as f64;
    let mut total = 0.0;
    for c in 0..3 {
        let values = image.pixels.iter().skip(c).step_by(3).map(|&v| v as f64);
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        total += var;
    }
    (total / 3.0 / (127.5 * 127.5)).clamp(0.0, 1.0)
}

/// Decodes PNG bytes and scores them with [`stub_score`].
pub fn stub_score_png(png: &[u8]) -> Result<f64, ClientError> {
    CoverImage::from_png(png).map(|img| stub_score(&img))
}

/// In-process backend built on [`stub_generate_sized`] and [`stub_score`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

impl CoverBackend for StubBackend {
    fn identity(&self) -> String {
        "stub/v1".to_string()
    }

    fn generate(&self, titles: &[String], seed: u64, width: u32, height: u32) -> Result<Vec<CoverImage>, ClientError> {
        if titles.is_empty() {
            return Err(ClientError::protocol("titles", "must not be empty"));
        }
        Ok(titles.iter().map(|t| stub_generate_sized(t, seed, width, height)).collect())
    }

    fn score(&self, images: &[CoverImage], titles: Option<&[String]>) -> Result<ScoreReport, ClientError> {
        if images.is_empty() {
            return Err(ClientError::protocol("images", "must not be empty"));
        }
        if let Some(t) = titles {
            if t.len() != images.len() {
                return Err(ClientError::protocol("titles", "must align with images"));
            }
        }
        let unconditional: Vec<f64> = images.iter().map(stub_score).collect();
        // the stub has no notion of text conditioning; mirror the unconditional score
        let conditional = titles.map(|_| unconditional.clone());
        Ok(ScoreReport {
            unconditional,
            conditional,
        })
    }
}

/// Serves one `/generate` request body with the stub generator.
pub fn stub_handle_generate(req: &GenerateRequest) -> Result<GenerateResponse, ClientError> {
    if req.titles.is_empty() {
        return Err(ClientError::protocol("titles", "must not be empty"));
    }
    if req.width == 0 || req.height == 0 {
        return Err(ClientError::protocol("width", "width and height must be positive"));
    }
    let images = req
        .titles
        .iter()
        .enumerate()
        .map(|(i, t)| GeneratedImage {
            title_index: i,
            png_base64: stub_generate_sized(t, req.seed, req.width, req.height).to_base64_png(),
        })
        .collect();
    Ok(GenerateResponse { images })
}

/// Serves one `/score` request body with the stub discriminator.
pub fn stub_handle_score(req: &ScoreRequest) -> Result<ScoreResponse, ClientError> {
    let images = req
        .images
        .iter()
        .enumerate()
        .map(|(i, p)| {
            CoverImage::from_base64_png(&p.png_base64)
                .map_err(|e| ClientError::protocol(format!("images[{i}].png_base64"), e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    StubBackend.score(&images, req.titles.as_deref())
}
