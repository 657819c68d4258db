use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use covergen_core::augment::{sample_vocabulary, Vocabulary};
use covergen_core::genai::{CoverBackend, StubBackend, DEFAULT_BATCH_CAP, DEFAULT_SIZE};
use covergen_core::pipeline::{DEFAULT_TOP_K, DEFAULT_VARIANTS};
use covergen_core::wndb::{fixture_lexicon, load_lexicon, Lexicon, LoadMode};
use serde::{Deserialize, Serialize};

use crate::client::HttpBackend;

pub const CONFIG_ENV: &str = "COVERGEN_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconMode {
    Strict,
    #[default]
    Lenient,
}

impl From<LexiconMode> for LoadMode {
    fn from(m: LexiconMode) -> Self {
        match m {
            LexiconMode::Strict => LoadMode::Strict,
            LexiconMode::Lenient => LoadMode::Lenient,
        }
    }
}

/// Service and CLI configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub run_store: PathBuf,
    /// WNDB directory; the bundled fixture lexicon when unset.
    pub lexicon_dir: Option<PathBuf>,
    pub lexicon_mode: LexiconMode,
    /// Titles file (one per line) or a vocabulary JSON; the bundled sample titles when unset.
    pub vocabulary: Option<PathBuf>,
    pub generator_url: Option<String>,
    pub discriminator_url: Option<String>,
    pub stub: bool,
    pub num_variants: usize,
    pub top_k: usize,
    pub image_size: u32,
    pub batch_cap: usize,
    pub parallelism: usize,
    pub request_timeout_secs: u64,
    /// Allowed CORS origins; `"*"` allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            run_store: PathBuf::from("runs"),
            lexicon_dir: None,
            lexicon_mode: LexiconMode::Lenient,
            vocabulary: None,
            generator_url: None,
            discriminator_url: None,
            stub: true,
            num_variants: DEFAULT_VARIANTS,
            top_k: DEFAULT_TOP_K,
            image_size: DEFAULT_SIZE,
            batch_cap: DEFAULT_BATCH_CAP,
            parallelism: 4,
            request_timeout_secs: 120,
            cors_origins: vec!["*".into()],
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, with relative paths inside resolved against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(base) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            rebase(&mut cfg.run_store);
            cfg.lexicon_dir.as_mut().map(rebase);
            cfg.vocabulary.as_mut().map(rebase);
        }
        Ok(cfg)
    }

    /// Config from the explicit path, else `COVERGEN_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> anyhow::Result<Self> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match env_path.as_deref().or(explicit) {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !self.stub && (self.generator_url.is_none() || self.discriminator_url.is_none()) {
            bail!("generator_url and discriminator_url are required unless stub = true");
        }
        if let Some(dir) = &self.lexicon_dir {
            if !dir.is_dir() {
                bail!("lexicon_dir {} does not exist", dir.display());
            }
        }
        if let Some(v) = &self.vocabulary {
            if !v.is_file() {
                bail!("vocabulary {} does not exist", v.display());
            }
        }
        if self.top_k == 0 || self.top_k > self.num_variants + 1 {
            bail!("top_k must be in 1..={}", self.num_variants + 1);
        }
        if self.image_size == 0 {
            bail!("image_size must be positive");
        }
        Ok(())
    }

    pub fn load_lexicon(&self) -> anyhow::Result<Lexicon> {
        match &self.lexicon_dir {
            Some(dir) => load_lexicon(dir, self.lexicon_mode.into())
                .with_context(|| format!("loading lexicon from {}", dir.display())),
            None => Ok(fixture_lexicon()),
        }
    }

    pub fn load_vocabulary(&self) -> anyhow::Result<Vocabulary> {
        match &self.vocabulary {
            Some(path) => read_vocabulary(path),
            None => Ok(sample_vocabulary()),
        }
    }

    pub fn backend(&self) -> anyhow::Result<Arc<dyn CoverBackend>> {
        if self.stub {
            return Ok(Arc::new(StubBackend));
        }
        match (&self.generator_url, &self.discriminator_url) {
            (Some(g), Some(d)) => Ok(Arc::new(
                HttpBackend::new(g, d)
                    .with_batch_cap(self.batch_cap)
                    .with_timeout(std::time::Duration::from_secs(self.request_timeout_secs)),
            )),
            _ => bail!("generator_url and discriminator_url are required unless stub = true"),
        }
    }
}

/// `.json` files are vocabulary dumps; anything else is a titles file.
pub fn read_vocabulary(path: &Path) -> anyhow::Result<Vocabulary> {
    let ctx = || format!("reading vocabulary {}", path.display());
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).with_context(ctx)?;
        Ok(Vocabulary::from_json(&text).with_context(ctx)?)
    } else {
        let file = std::fs::File::open(path).with_context(ctx)?;
        Ok(Vocabulary::build(std::io::BufReader::new(file)).with_context(ctx)?)
    }
}
