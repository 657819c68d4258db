//! Title augmentation → generation → scoring → ranking → persistence.
//!
//! The cover generated from the original title is pinned to rank 0 and is
//! always kept. Variants are ordered by unconditional discriminator score;
//! conditional scores are stored but never used for ordering because they
//! are not comparable across different titles.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::augment::{analyze_title, combine, AugmentError, CandidateTitle, Provenance, Sampling, Vocabulary};
use crate::genai::{ClientError, CoverBackend, CoverImage, DEFAULT_BATCH_CAP, DEFAULT_SIZE};
use crate::wndb::Lexicon;

pub const DEFAULT_VARIANTS: usize = 9;
pub const DEFAULT_TOP_K: usize = 6;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("ranking contract violated: {0}")]
    Contract(String),
    #[error("persistence error at {path}: {source}")]
    Persistence {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run {0} not found")]
    NotFound(String),
    #[error("run integrity error: {0}")]
    Integrity(String),
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Persistence {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunParams {
    pub input_title: String,
    pub num_variants: usize,
    pub top_k: usize,
    pub seed: u64,
    #[serde(skip)]
    pub sampling: Sampling,
    #[serde(skip)]
    pub image_size: (u32, u32),
    #[serde(skip)]
    pub batch_cap: usize,
    /// Maximum number of backend batches in flight at once.
    #[serde(skip)]
    pub parallelism: usize,
}

impl RunParams {
    pub fn new(input_title: impl Into<String>) -> Self {
        Self {
            input_title: input_title.into(),
            num_variants: DEFAULT_VARIANTS,
            top_k: DEFAULT_TOP_K,
            seed: 0,
            sampling: Sampling::Random,
            image_size: (DEFAULT_SIZE, DEFAULT_SIZE),
            batch_cap: DEFAULT_BATCH_CAP,
            parallelism: 1,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.input_title.trim().is_empty() {
            return Err(PipelineError::InvalidParams("title must not be empty".into()));
        }
        if self.top_k == 0 {
            return Err(PipelineError::InvalidParams("top_k must be at least 1".into()));
        }
        if self.top_k > self.num_variants + 1 {
            return Err(PipelineError::InvalidParams(format!(
                "top_k {} exceeds num_variants + 1 = {}",
                self.top_k,
                self.num_variants + 1
            )));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(PipelineError::InvalidParams("image size must be positive".into()));
        }
        Ok(())
    }
}

/// One cover after ranking. `index` is its position in the candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCover {
    pub index: usize,
    pub candidate: CandidateTitle,
    pub unconditional: f64,
    pub rank: usize,
    pub kept: bool,
}

/// Orders covers: the original at rank 0, then variants by descending score
/// with ties broken by candidate order. The first `top_k` ranks are kept.
pub fn rank_covers(scored: &[(CandidateTitle, f64)], top_k: usize) -> Result<Vec<ScoredCover>, PipelineError> {
    let originals: Vec<usize> = scored
        .iter()
        .enumerate()
        .filter(|(_, (c, _))| c.is_original)
        .map(|(i, _)| i)
        .collect();
    let &[orig] = originals.as_slice() else {
        return Err(PipelineError::Contract(format!(
            "expected exactly one original candidate, found {}",
            originals.len()
        )));
    };
    if let Some(i) = scored.iter().position(|(_, s)| !s.is_finite()) {
        return Err(PipelineError::Contract(format!("score {i} is not finite")));
    }
    let mut variants: Vec<usize> = (0..scored.len()).filter(|&i| i != orig).collect();
    // scores are finite here; partial_cmp treats -0.0 and 0.0 as a tie.
    // Stable sort keeps candidate order among ties.
    variants.sort_by(|&a, &b| scored[b].1.partial_cmp(&scored[a].1).expect("finite scores"));
    let top_k = top_k.max(1);
    Ok(std::iter::once(orig)
        .chain(variants)
        .enumerate()
        .map(|(rank, i)| ScoredCover {
            index: i,
            candidate: scored[i].0.clone(),
            unconditional: scored[i].1,
            rank,
            kept: rank < top_k,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverRecord {
    pub title: String,
    pub provenance: Vec<Provenance>,
    pub file: String,
    pub unconditional: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<f64>,
    pub rank: usize,
    pub kept: bool,
    pub original: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParams {
    pub input_title: String,
    pub num_variants: usize,
    pub top_k: usize,
    pub seed: u64,
}

/// Persisted record of one pipeline invocation. Covers are listed in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: Uuid,
    pub created_at: DateTime<Utc>,
    pub params: ManifestParams,
    pub backend: String,
    pub covers: Vec<CoverRecord>,
    pub status: RunStatus,
    #[serde(default)]
    pub variants_generated: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn kept(&self) -> impl Iterator<Item = &CoverRecord> {
        self.covers.iter().filter(|c| c.kept)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Identity of a run, supplied by the caller so the pipeline itself stays pure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunContext {
    pub run_id: Uuid,
    pub created_at: DateTime<Utc>,
}

impl RunContext {
    pub fn new(run_id: Uuid, created_at: DateTime<Utc>) -> Self {
        Self { run_id, created_at }
    }
}

/// A finished (or aborted) run: the manifest plus one image per cover, in cover order.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub images: Vec<CoverImage>,
}

fn cover_file(rank: usize) -> String {
    format!("{rank:03}.png")
}

/// Runs `f` over `batches`, at most `parallelism` at a time, returning results in batch order.
fn run_batches<T, R, F>(batches: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if parallelism <= 1 || batches.len() <= 1 {
        return batches.iter().map(&f).collect();
    }
    let mut out = Vec::with_capacity(batches.len());
    for group in batches.chunks(parallelism) {
        std::thread::scope(|s| {
            let handles: Vec<_> = group.iter().map(|b| s.spawn(|| f(b))).collect();
            out.extend(handles.into_iter().map(|h| h.join().expect("backend call panicked")));
        });
    }
    out
}

/// Generates images for `titles`, isolating failures to single titles.
/// An `Err` entry marks a title whose generation failed even on its own.
fn generate_all(
    backend: &dyn CoverBackend,
    titles: &[String],
    params: &RunParams,
) -> Vec<Result<CoverImage, ClientError>> {
    let (w, h) = params.image_size;
    let cap = params.batch_cap.max(1);
    let batches: Vec<&[String]> = titles.chunks(cap).collect();
    let single = |t: &String| {
        backend
            .generate(std::slice::from_ref(t), params.seed, w, h)
            .and_then(|mut v| match (v.pop(), v.is_empty()) {
                (Some(img), true) => Ok(img),
                _ => Err(ClientError::protocol("images", "expected exactly one image")),
            })
    };
    let results = run_batches(&batches, params.parallelism, |batch| {
        match backend.generate(batch, params.seed, w, h) {
            Ok(images) if images.len() == batch.len() => images.into_iter().map(Ok).collect::<Vec<_>>(),
            // retry titles one by one so a single bad title only loses itself
            _ if batch.len() > 1 => batch.iter().map(single).collect(),
            Ok(images) => vec![Err(ClientError::protocol(
                "images",
                format!("expected 1 image, got {}", images.len()),
            ))],
            Err(e) => vec![Err(e)],
        }
    });
    results.into_iter().flatten().collect()
}

fn score_all(
    backend: &dyn CoverBackend,
    images: &[CoverImage],
    titles: &[String],
    params: &RunParams,
) -> Result<(Vec<f64>, Vec<Option<f64>>), ClientError> {
    let cap = params.batch_cap.max(1);
    let batches: Vec<(&[CoverImage], &[String])> = images.chunks(cap).zip(titles.chunks(cap)).collect();
    let results = run_batches(&batches, params.parallelism, |(imgs, ts)| {
        let report = backend.score(imgs, Some(ts))?;
        report.validate(imgs.len(), true)?;
        Ok::<_, ClientError>(report)
    });
    let mut unconditional = Vec::with_capacity(images.len());
    let mut conditional = Vec::with_capacity(images.len());
    for report in results {
        let report = report?;
        let n = report.unconditional.len();
        unconditional.extend(report.unconditional);
        match report.conditional {
            Some(c) => conditional.extend(c.into_iter().map(Some)),
            None => conditional.extend(std::iter::repeat_n(None, n)),
        }
    }
    Ok((unconditional, conditional))
}

/// Runs one pipeline invocation without touching the filesystem.
///
/// Backend failures do not produce an `Err`: the returned manifest has
/// status `failed` and carries the error message.
pub fn execute_run(
    params: &RunParams,
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    backend: &dyn CoverBackend,
    ctx: RunContext,
) -> Result<RunOutcome, PipelineError> {
    params.validate()?;
    let tokens = analyze_title(&params.input_title, lexicon, vocab);
    if tokens.is_empty() {
        return Err(AugmentError::EmptyTitle.into());
    }
    let mut candidates = vec![CandidateTitle::original(&tokens)];
    candidates.extend(combine(&tokens, params.num_variants, params.seed, params.sampling));
    let variants_generated = candidates.len() - 1;

    let mut manifest = RunManifest {
        run_id: ctx.run_id,
        created_at: ctx.created_at,
        params: ManifestParams {
            input_title: params.input_title.clone(),
            num_variants: params.num_variants,
            top_k: params.top_k,
            seed: params.seed,
        },
        backend: backend.identity(),
        covers: Vec::new(),
        status: RunStatus::Completed,
        variants_generated,
        warnings: Vec::new(),
        error: None,
    };
    if variants_generated < params.num_variants {
        manifest.warnings.push(format!(
            "only {variants_generated} of {} requested variants could be formed",
            params.num_variants
        ));
    }

    let titles: Vec<String> = candidates.iter().map(CandidateTitle::text).collect();
    let generated = generate_all(backend, &titles, params);
    let mut kept_candidates = Vec::new();
    let mut images = Vec::new();
    for (cand, result) in candidates.into_iter().zip(generated) {
        match result {
            Ok(img) => {
                kept_candidates.push(cand);
                images.push(img);
            }
            Err(e) if cand.is_original => {
                manifest.status = RunStatus::Failed;
                manifest.error = Some(format!("generation failed for the original title: {e}"));
                return Ok(RunOutcome { manifest, images: Vec::new() });
            }
            Err(e) => manifest.warnings.push(format!("dropped variant \"{}\": {e}", cand.text())),
        }
    }

    let titles: Vec<String> = kept_candidates.iter().map(CandidateTitle::text).collect();
    let (unconditional, conditional) = match score_all(backend, &images, &titles, params) {
        Ok(s) => s,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(format!("scoring failed: {e}"));
            return Ok(RunOutcome { manifest, images: Vec::new() });
        }
    };

    let pairs: Vec<(CandidateTitle, f64)> = kept_candidates.into_iter().zip(unconditional.iter().copied()).collect();
    let ranked = rank_covers(&pairs, params.top_k)?;
    let mut ordered_images = Vec::with_capacity(ranked.len());
    for sc in ranked {
        ordered_images.push(images[sc.index].clone());
        manifest.covers.push(CoverRecord {
            title: sc.candidate.text(),
            provenance: sc.candidate.provenance.clone(),
            file: cover_file(sc.rank),
            unconditional: sc.unconditional,
            conditional: conditional[sc.index],
            rank: sc.rank,
            kept: sc.kept,
            original: sc.candidate.is_original,
        });
    }
    Ok(RunOutcome {
        manifest,
        images: ordered_images,
    })
}

/// [`execute_run`] followed by [`persist_run`] under `root`.
pub fn run_pipeline(
    params: &RunParams,
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    backend: &dyn CoverBackend,
    ctx: RunContext,
    root: &Path,
) -> Result<RunOutcome, PipelineError> {
    let outcome = execute_run(params, lexicon, vocab, backend, ctx)?;
    persist_run(&outcome.manifest, &outcome.images, root)?;
    Ok(outcome)
}

pub fn run_dir(root: &Path, run_id: &Uuid) -> PathBuf {
    root.join(run_id.to_string())
}

/// Writes `<root>/<run_id>/manifest.json` and one PNG per cover.
pub fn persist_run(manifest: &RunManifest, images: &[CoverImage], root: &Path) -> Result<PathBuf, PipelineError> {
    if images.len() != manifest.covers.len() {
        return Err(PipelineError::Integrity(format!(
            "{} covers but {} images",
            manifest.covers.len(),
            images.len()
        )));
    }
    let dir = run_dir(root, &manifest.run_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (cover, image) in manifest.covers.iter().zip(images) {
        let path = dir.join(&cover.file);
        fs::write(&path, image.to_png()).map_err(io_err(&path))?;
    }
    // manifest last, so a readable manifest implies its images are on disk
    let tmp = dir.join(".manifest.json.tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(manifest.to_json().as_bytes()).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    let path = dir.join(MANIFEST_FILE);
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    Ok(dir)
}

pub fn load_run(root: &Path, run_id: &Uuid) -> Result<RunManifest, PipelineError> {
    let dir = run_dir(root, run_id);
    let path = dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(PipelineError::NotFound(run_id.to_string())),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|source| PipelineError::Manifest { path: path.clone(), source })?;
    if manifest.run_id != *run_id {
        return Err(PipelineError::Integrity(format!(
            "manifest in {} belongs to run {}",
            dir.display(),
            manifest.run_id
        )));
    }
    for cover in &manifest.covers {
        if !dir.join(&cover.file).is_file() {
            return Err(PipelineError::Integrity(format!("missing image file {}", cover.file)));
        }
    }
    Ok(manifest)
}

/// PNG bytes of the cover at position `index` (0-based, rank order).
pub fn load_image(root: &Path, run_id: &Uuid, index: usize) -> Result<Vec<u8>, PipelineError> {
    let manifest = load_run(root, run_id)?;
    let cover = manifest
        .covers
        .get(index)
        .ok_or_else(|| PipelineError::NotFound(format!("{run_id}/images/{index}")))?;
    let path = run_dir(root, run_id).join(&cover.file);
    fs::read(&path).map_err(io_err(&path))
}

/// All loadable runs under `root`, newest first.
pub fn list_runs(root: &Path) -> Result<Vec<RunManifest>, PipelineError> {
    let entries = match fs::read_dir(root) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(root)(e)),
    };
    let mut runs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(io_err(root))?;
        let Some(id) = entry.file_name().to_str().and_then(|s| Uuid::parse_str(s).ok()) else {
            continue;
        };
        if let Ok(m) = load_run(root, &id) {
            runs.push(m);
        }
    }
    runs.sort_by(|a, b| b.created_at.cmp(&a.created_at).then(a.run_id.cmp(&b.run_id)));
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::sample_vocabulary;
    use crate::genai::{stub_generate_sized, ScoreReport, StubBackend};
    use crate::wndb::fixture_lexicon;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn cand(name: &str, original: bool) -> CandidateTitle {
        CandidateTitle {
            tokens: vec![name.to_string()],
            provenance: vec![if original { Provenance::Original } else { Provenance::Synonym }],
            is_original: original,
        }
    }

    fn ctx(n: u128) -> RunContext {
        RunContext::new(Uuid::from_u128(n), DateTime::from_timestamp(1_700_000_000, 0).unwrap())
    }

    fn small(title: &str) -> RunParams {
        RunParams {
            image_size: (32, 32),
            ..RunParams::new(title)
        }
    }

    #[test]
    fn rank_hand_example() {
        let scored = vec![(cand("orig", true), 0.1), (cand("a", false), 0.9), (cand("b", false), 0.5)];
        let r = rank_covers(&scored, 2).unwrap();
        let names: Vec<&str> = r.iter().map(|c| c.candidate.tokens[0].as_str()).collect();
        assert_eq!(names, ["orig", "a", "b"]);
        assert_eq!(r.iter().map(|c| c.kept).collect::<Vec<_>>(), [true, true, false]);
        assert_eq!(r.iter().map(|c| c.rank).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn rank_ties_keep_input_order() {
        let scored = vec![(cand("x", false), 0.5), (cand("o", true), 0.5), (cand("y", false), 0.5)];
        let r = rank_covers(&scored, 3).unwrap();
        assert_eq!(r.iter().map(|c| c.index).collect::<Vec<_>>(), [1, 0, 2]);
    }

    #[test]
    fn signed_zeros_tie() {
        let scored = vec![(cand("o", true), 1.0), (cand("x", false), -0.0), (cand("y", false), 0.0)];
        let r = rank_covers(&scored, 3).unwrap();
        assert_eq!(r.iter().map(|c| c.index).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn rank_drops_lowest_four_of_ten() {
        let mut scored = vec![(cand("o", true), -5.0)];
        scored.extend((0..9).map(|i| (cand(&format!("v{i}"), false), i as f64)));
        let r = rank_covers(&scored, 6).unwrap();
        assert_eq!(r.iter().filter(|c| c.kept).count(), 6);
        let dropped: Vec<f64> = r.iter().filter(|c| !c.kept).map(|c| c.unconditional).collect();
        assert_eq!(dropped, [3.0, 2.0, 1.0, 0.0]);
        assert!(r[0].candidate.is_original && r[0].kept);
    }

    #[test]
    fn rank_requires_exactly_one_original() {
        let none = vec![(cand("a", false), 1.0)];
        assert!(matches!(rank_covers(&none, 1), Err(PipelineError::Contract(_))));
        let two = vec![(cand("a", true), 1.0), (cand("b", true), 1.0)];
        assert!(matches!(rank_covers(&two, 1), Err(PipelineError::Contract(_))));
    }

    #[test]
    fn params_validation() {
        assert!(small("Lost at sea").validate().is_ok());
        assert!(RunParams { top_k: 0, ..small("x") }.validate().is_err());
        assert!(RunParams { top_k: 11, ..small("x") }.validate().is_err());
        assert!(RunParams { num_variants: 0, top_k: 1, ..small("x") }.validate().is_ok());
        assert!(small(" ").validate().is_err());
    }

    #[test]
    fn lost_at_sea_stub_run() {
        let out = execute_run(&small("Lost at sea"), &fixture_lexicon(), &sample_vocabulary(), &StubBackend, ctx(1)).unwrap();
        let m = &out.manifest;
        assert_eq!(m.status, RunStatus::Completed);
        assert_eq!(m.covers.len(), 10);
        assert_eq!(out.images.len(), 10);
        assert_eq!(m.kept().count(), 6);
        assert!(m.covers[0].original && m.covers[0].kept && m.covers[0].rank == 0);
        assert_eq!(m.covers[0].title, "Lost at sea");
        for w in m.covers[1..].windows(2) {
            assert!(w[0].unconditional >= w[1].unconditional);
        }
        // images are stored in rank order
        for (c, img) in m.covers.iter().zip(&out.images) {
            assert_eq!(c.unconditional, crate::genai::stub_score(img));
        }
    }

    #[test]
    fn zero_variants_and_unreplaceable_titles() {
        let lex = fixture_lexicon();
        let v = sample_vocabulary();
        let p = RunParams { num_variants: 0, top_k: 1, ..small("Dragon Fire") };
        let out = execute_run(&p, &lex, &v, &StubBackend, ctx(2)).unwrap();
        assert_eq!(out.manifest.covers.len(), 1);
        assert!(out.manifest.covers[0].kept);

        let out = execute_run(&small("In and Out"), &lex, &v, &StubBackend, ctx(3)).unwrap();
        assert_eq!(out.manifest.covers.len(), 1);
        assert_eq!(out.manifest.variants_generated, 0);
        assert!(!out.manifest.warnings.is_empty());
    }

    #[test]
    fn deterministic_modulo_identity() {
        let lex = fixture_lexicon();
        let v = sample_vocabulary();
        let a = execute_run(&small("Lost at sea"), &lex, &v, &StubBackend, ctx(4)).unwrap();
        let mut b = execute_run(&small("Lost at sea"), &lex, &v, &StubBackend, ctx(5)).unwrap();
        b.manifest.run_id = a.manifest.run_id;
        assert_eq!(a.manifest.to_json(), b.manifest.to_json());
        assert_eq!(a.images, b.images);
    }

    #[test]
    fn parallel_batches_match_sequential() {
        let lex = fixture_lexicon();
        let v = sample_vocabulary();
        let seq = execute_run(&small("Lost at sea"), &lex, &v, &StubBackend, ctx(6)).unwrap();
        let par = RunParams { batch_cap: 3, parallelism: 4, ..small("Lost at sea") };
        let par = execute_run(&par, &lex, &v, &StubBackend, ctx(6)).unwrap();
        assert_eq!(seq.manifest, par.manifest);
    }

    /// Fails generation for titles containing `poison`, and optionally all scoring.
    struct Flaky {
        poison: &'static str,
        fail_scoring: bool,
        calls: AtomicUsize,
    }

    impl CoverBackend for Flaky {
        fn identity(&self) -> String {
            "flaky".into()
        }
        fn generate(&self, titles: &[String], seed: u64, w: u32, h: u32) -> Result<Vec<CoverImage>, ClientError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if titles.iter().any(|t| t.contains(self.poison)) {
                return Err(ClientError::Backend("boom".into()));
            }
            Ok(titles.iter().map(|t| stub_generate_sized(t, seed, w, h)).collect())
        }
        fn score(&self, images: &[CoverImage], _: Option<&[String]>) -> Result<ScoreReport, ClientError> {
            if self.fail_scoring {
                return Err(ClientError::Transport("down".into()));
            }
            Ok(ScoreReport { unconditional: vec![0.5; images.len()], conditional: None })
        }
    }

    #[test]
    fn failing_variant_is_dropped_with_warning() {
        let backend = Flaky { poison: "ocean", fail_scoring: false, calls: AtomicUsize::new(0) };
        let out = execute_run(&small("Lost at sea"), &fixture_lexicon(), &sample_vocabulary(), &backend, ctx(7)).unwrap();
        let m = out.manifest;
        assert_eq!(m.status, RunStatus::Completed);
        assert!(m.covers.iter().all(|c| !c.title.contains("ocean")));
        assert!(m.covers.len() < 10);
        assert!(m.warnings.iter().any(|w| w.contains("ocean")));
        assert_eq!(m.kept().count(), 6.min(m.covers.len()));
    }

    #[test]
    fn failing_original_or_scoring_marks_run_failed() {
        let lex = fixture_lexicon();
        let v = sample_vocabulary();
        let backend = Flaky { poison: "Lost at sea", fail_scoring: false, calls: AtomicUsize::new(0) };
        let out = execute_run(&small("Lost at sea"), &lex, &v, &backend, ctx(8)).unwrap();
        assert_eq!(out.manifest.status, RunStatus::Failed);
        assert!(out.manifest.error.is_some());

        let backend = Flaky { poison: "\u{0}", fail_scoring: true, calls: AtomicUsize::new(0) };
        let out = execute_run(&small("Lost at sea"), &lex, &v, &backend, ctx(9)).unwrap();
        assert_eq!(out.manifest.status, RunStatus::Failed);
        assert!(out.manifest.error.unwrap().contains("scoring"));
        assert!(out.manifest.covers.is_empty());
    }

    #[test]
    fn persist_and_load_round_trip() {
        let root = tempfile::tempdir().unwrap();
        let lex = fixture_lexicon();
        let v = sample_vocabulary();
        let a = run_pipeline(&small("Lost at sea"), &lex, &v, &StubBackend, ctx(10), root.path()).unwrap();
        let b = run_pipeline(&small("Lost at sea"), &lex, &v, &StubBackend, ctx(11), root.path()).unwrap();
        let loaded = load_run(root.path(), &a.manifest.run_id).unwrap();
        assert_eq!(loaded, a.manifest);
        assert_ne!(run_dir(root.path(), &a.manifest.run_id), run_dir(root.path(), &b.manifest.run_id));
        assert_eq!(list_runs(root.path()).unwrap().len(), 2);

        let png = load_image(root.path(), &a.manifest.run_id, 3).unwrap();
        assert_eq!(CoverImage::from_png(&png).unwrap(), a.images[3]);
        assert!(matches!(load_image(root.path(), &a.manifest.run_id, 10), Err(PipelineError::NotFound(_))));
        assert!(matches!(load_run(root.path(), &Uuid::from_u128(99)), Err(PipelineError::NotFound(_))));

        fs::remove_file(run_dir(root.path(), &a.manifest.run_id).join("004.png")).unwrap();
        match load_run(root.path(), &a.manifest.run_id) {
            Err(PipelineError::Integrity(msg)) => assert!(msg.contains("004.png")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn persist_rejects_mismatched_images() {
        let root = tempfile::tempdir().unwrap();
        let out = execute_run(&small("Lost at sea"), &fixture_lexicon(), &sample_vocabulary(), &StubBackend, ctx(12)).unwrap();
        assert!(matches!(
            persist_run(&out.manifest, &out.images[..3], root.path()),
            Err(PipelineError::Integrity(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ranking_invariant_under_exp(scores in proptest::collection::vec(-5.0f64..5.0, 1..12), orig in 0usize..12, k in 1usize..12) {
                let orig = orig % scores.len();
                let scored: Vec<_> = scores.iter().enumerate().map(|(i, &s)| (cand(&i.to_string(), i == orig), s)).collect();
                let exp: Vec<_> = scored.iter().map(|(c, s)| (c.clone(), s.exp())).collect();
                let a = rank_covers(&scored, k).unwrap();
                let b = rank_covers(&exp, k).unwrap();
                prop_assert_eq!(a.iter().map(|c| (c.index, c.kept)).collect::<Vec<_>>(), b.iter().map(|c| (c.index, c.kept)).collect::<Vec<_>>());
                prop_assert_eq!(a[0].index, orig);
                prop_assert_eq!(a.iter().filter(|c| c.kept).count(), k.min(scores.len()));
                let mut ranks: Vec<usize> = a.iter().map(|c| c.rank).collect();
                ranks.sort_unstable();
                prop_assert_eq!(ranks, (0..scores.len()).collect::<Vec<_>>());
            }
        }
    }
}
