//! Fréchet Inception Distance and Inception Score over externally computed
//! feature and class-probability matrices.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Asymmetry tolerated by [`matrix_sqrt_psd`], relative to the matrix scale.
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("matrix is not symmetric (max deviation {0:e})")]
    Asymmetric(f64),
    #[error("row {row} is not a probability distribution (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },
    #[error("splits must be at least 1")]
    ZeroSplits,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed matrix file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Samples × features, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, MetricsError> {
        check_finite(&m)?;
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MetricsError> {
        Self::new(rows_to_matrix(rows)?)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Samples × classes; every row is a probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix(DMatrix<f64>);

impl ProbMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, MetricsError> {
        check_finite(&m)?;
        for (r, row) in m.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MetricsError::NotStochastic { row: r, sum });
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MetricsError> {
        Self::new(rows_to_matrix(rows)?)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn classes(&self) -> usize {
        self.0.ncols()
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<(), MetricsError> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Err(MetricsError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, MetricsError> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(MetricsError::Dimension(cols, bad.len()));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Column means and unbiased (n − 1) sample covariance.
pub fn gaussian_stats(features: &FeatureMatrix) -> Result<GaussianStats, MetricsError> {
    let x = &features.0;
    let n = x.nrows();
    if n < 2 {
        return Err(MetricsError::TooFewRows { needed: 2, got: n });
    }
    let mu = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    // exact symmetry despite accumulation order
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mu, cov })
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Negative eigenvalues from roundoff are clamped to zero.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    if m.nrows() != m.ncols() {
        return Err(MetricsError::Dimension(m.nrows(), m.ncols()));
    }
    check_finite(m)?;
    let asym = max_abs(&(m - m.transpose()));
    if asym > SYMMETRY_TOL * (1.0 + max_abs(m)) {
        return Err(MetricsError::Asymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let root = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok((&root + root.transpose()) * 0.5)
}

/// ‖μa − μb‖² + Tr(Σa + Σb − 2·(√Σa·Σb·√Σa)^{1/2}).
///
/// The cross term uses the symmetric form, which has the same trace as
/// (Σa·Σb)^{1/2} but keeps every square root on a symmetric matrix.
pub fn fid(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() || a.cov.nrows() != a.dim() || b.cov.nrows() != b.dim() {
        return Err(MetricsError::Dimension(a.dim(), b.dim()));
    }
    let diff = &a.mu - &b.mu;
    let sqrt_a = matrix_sqrt_psd(&a.cov)?;
    let inner = &sqrt_a * &b.cov * &sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = matrix_sqrt_psd(&inner)?;
    let value = diff.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    Ok(value.max(0.0))
}

/// FID between two feature sets.
pub fn fid_from_features(real: &FeatureMatrix, fake: &FeatureMatrix) -> Result<f64, MetricsError> {
    if real.cols() != fake.cols() {
        return Err(MetricsError::Dimension(real.cols(), fake.cols()));
    }
    fid(&gaussian_stats(real)?, &gaussian_stats(fake)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InceptionScore {
    pub mean: f64,
    pub std: f64,
}

/// exp(E_x KL(p(y|x) ‖ p(y))) per contiguous split; mean and population std over splits.
pub fn inception_score(probs: &ProbMatrix, splits: usize) -> Result<InceptionScore, MetricsError> {
    if splits == 0 {
        return Err(MetricsError::ZeroSplits);
    }
    let n = probs.rows();
    if n < splits || n == 0 {
        return Err(MetricsError::TooFewRows { needed: splits.max(1), got: n });
    }
    let p = &probs.0;
    let scores: Vec<f64> = (0..splits)
        .map(|k| {
            let (start, end) = (k * n / splits, (k + 1) * n / splits);
            let part = p.rows(start, end - start);
            let marginal = part.row_mean();
            let mean_kl = part
                .row_iter()
                .map(|row| {
                    row.iter()
                        .zip(marginal.iter())
                        .filter(|(&pi, _)| pi > 0.0)
                        .map(|(&pi, &mi)| pi * (pi.ln() - mi.ln()))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / part.nrows() as f64;
            mean_kl.exp()
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / splits as f64;
    Ok(InceptionScore { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub rows: usize,
    pub cols: usize,
}

fn format_err(path: &Path, message: impl Into<String>) -> MetricsError {
    MetricsError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_err(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sidecar path for a raw float32 file: `<file>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Reads a matrix from CSV (`.csv`, one sample per row, optional non-numeric header)
/// or from raw little-endian float32 with a `{rows, cols}` JSON sidecar.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, MetricsError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv(path)
    } else {
        read_raw_f32(path)
    }
}

fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>, MetricsError> {
    let text = fs::read_to_string(path).map_err(read_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(format_err(path, format!("record {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

fn read_raw_f32(path: &Path) -> Result<Vec<Vec<f64>>, MetricsError> {
    let side = sidecar_path(path);
    let meta: RawSidecar = serde_json::from_str(&fs::read_to_string(&side).map_err(read_err(&side))?)
        .map_err(|e| format_err(&side, e.to_string()))?;
    let bytes = fs::read(path).map_err(read_err(path))?;
    if bytes.len() != meta.rows * meta.cols * 4 {
        return Err(format_err(
            path,
            format!("expected {} bytes for {}x{} float32, got {}", meta.rows * meta.cols * 4, meta.rows, meta.cols, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(values.chunks(meta.cols.max(1)).take(meta.rows).map(<[f64]>::to_vec).collect())
}

/// Writes raw little-endian float32 data plus its sidecar.
pub fn write_raw_f32(path: &Path, rows: &[Vec<f64>]) -> Result<(), MetricsError> {
    let cols = rows.first().map_or(0, Vec::len);
    let bytes: Vec<u8> = rows.iter().flatten().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(read_err(path))?;
    let side = sidecar_path(path);
    let meta = serde_json::to_string(&RawSidecar { rows: rows.len(), cols }).expect("sidecar serializes");
    fs::write(&side, meta).map_err(read_err(&side))
}

/// Reference IS/FID values of the six published training configurations, for display only.
pub const REFERENCE_RESULTS: &str = include_str!("../data/reference_results.json");

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn stats(mu: &[f64], cov: DMatrix<f64>) -> GaussianStats {
        GaussianStats { mu: DVector::from_column_slice(mu), cov }
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose() + DMatrix::identity(d, d) * 1e-3
    }

    #[test]
    fn stats_examples() {
        let s = gaussian_stats(&FeatureMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap()).unwrap();
        assert_eq!(s.mu[0], 1.0);
        assert_eq!(s.cov[(0, 0)], 2.0);
        let same = gaussian_stats(&FeatureMatrix::from_rows(&vec![vec![3.0, -1.0]; 4]).unwrap()).unwrap();
        assert_eq!(same.cov, DMatrix::zeros(2, 2));
        assert!(matches!(
            gaussian_stats(&FeatureMatrix::from_rows(&[vec![1.0]]).unwrap()),
            Err(MetricsError::TooFewRows { .. })
        ));
        assert!(matches!(FeatureMatrix::from_rows(&[vec![f64::NAN]]), Err(MetricsError::NonFinite { .. })));
    }

    #[test]
    fn stats_permutation_invariant() {
        let rows = vec![vec![1.0, 2.0], vec![-3.0, 0.5], vec![4.0, 4.0], vec![0.0, -2.0]];
        let mut perm = rows.clone();
        perm.rotate_left(1);
        perm.swap(0, 2);
        let a = gaussian_stats(&FeatureMatrix::from_rows(&rows).unwrap()).unwrap();
        let b = gaussian_stats(&FeatureMatrix::from_rows(&perm).unwrap()).unwrap();
        assert!((a.mu - b.mu).amax() < 1e-12);
        assert!((a.cov - b.cov).amax() < 1e-12);
    }

    #[test]
    fn sqrt_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((matrix_sqrt_psd(&i).unwrap() - &i).amax() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = matrix_sqrt_psd(&d).unwrap();
        assert!((r - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).amax() < 1e-12);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(matrix_sqrt_psd(&asym), Err(MetricsError::Asymmetric(_))));
    }

    #[test]
    fn sqrt_reconstruction_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let d = rng.random_range(1..=16);
            let m = random_spd(&mut rng, d);
            let r = matrix_sqrt_psd(&m).unwrap();
            let err = (&r * &r - &m).amax();
            assert!(err <= 1e-6 * (1.0 + m.amax()), "d={d} err={err}");
        }
    }

    #[test]
    fn fid_examples() {
        let s = stats(&[0.3, -1.0], DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]));
        assert!(fid(&s, &s).unwrap() <= 1e-6);
        let a = stats(&[0.0], DMatrix::from_element(1, 1, 1.0));
        let b = stats(&[1.0], DMatrix::from_element(1, 1, 1.0));
        assert!((fid(&a, &b).unwrap() - 1.0).abs() < 1e-9);
        let c = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        assert!(matches!(fid(&a, &c), Err(MetricsError::Dimension(1, 2))));
    }

    #[test]
    fn fid_matches_diagonal_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = rng.random_range(1..=8);
            let mu1: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mu2: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c1: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..5.0)).collect();
            let c2: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..5.0)).collect();
            let oracle: f64 = (0..d)
                .map(|i| (mu1[i] - mu2[i]).powi(2) + (c1[i].sqrt() - c2[i].sqrt()).powi(2))
                .sum();
            let a = stats(&mu1, DMatrix::from_diagonal(&DVector::from_vec(c1)));
            let b = stats(&mu2, DMatrix::from_diagonal(&DVector::from_vec(c2)));
            assert!((fid(&a, &b).unwrap() - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn fid_symmetric_and_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 5;
        let mk = |rng: &mut ChaCha8Rng, shift: f64| {
            let rows: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..d).map(|j| rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64 * 0.3) + shift).collect())
                .collect();
            DMatrix::from_row_iterator(40, d, rows.into_iter().flatten())
        };
        let x = mk(&mut rng, 0.0);
        let y = mk(&mut rng, 0.7);
        let fx = FeatureMatrix::new(x.clone()).unwrap();
        let fy = FeatureMatrix::new(y.clone()).unwrap();
        let base = fid_from_features(&fx, &fy).unwrap();
        assert!((base - fid_from_features(&fy, &fx).unwrap()).abs() < 1e-6);

        let q = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
        let rotated = fid_from_features(&FeatureMatrix::new(&x * &q).unwrap(), &FeatureMatrix::new(&y * &q).unwrap()).unwrap();
        assert!((base - rotated).abs() < 1e-5, "{base} vs {rotated}");
    }

    #[test]
    fn inception_score_examples() {
        let uniform = ProbMatrix::from_rows(&vec![vec![0.25; 4]; 8]).unwrap();
        let is = inception_score(&uniform, 1).unwrap();
        assert!((is.mean - 1.0).abs() < 1e-9);
        assert_eq!(is.std, 0.0);

        let one_hot: Vec<Vec<f64>> = (0..8).map(|i| (0..4).map(|c| if c == i % 4 { 1.0 } else { 0.0 }).collect()).collect();
        let p = ProbMatrix::from_rows(&one_hot).unwrap();
        assert!((inception_score(&p, 1).unwrap().mean - 4.0).abs() < 1e-6);

        let doubled: Vec<Vec<f64>> = one_hot.iter().chain(&one_hot).cloned().collect();
        let p2 = ProbMatrix::from_rows(&doubled).unwrap();
        assert!((inception_score(&p2, 1).unwrap().mean - inception_score(&p, 1).unwrap().mean).abs() < 1e-12);
    }

    #[test]
    fn inception_score_errors_and_splits() {
        assert!(matches!(ProbMatrix::from_rows(&[vec![0.5, 0.6]]), Err(MetricsError::NotStochastic { row: 0, .. })));
        assert!(matches!(ProbMatrix::from_rows(&[vec![1.5, -0.5]]), Err(MetricsError::NotStochastic { .. })));
        let p = ProbMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(inception_score(&p, 0), Err(MetricsError::ZeroSplits)));
        assert!(matches!(inception_score(&p, 3), Err(MetricsError::TooFewRows { .. })));
        // two splits of one row each: marginal equals the row, so every split scores 1
        let s = inception_score(&p, 2).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12 && s.std < 1e-12);
    }

    #[test]
    fn inception_score_bounded_by_class_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let c = rng.random_range(2..10);
            let n = rng.random_range(c..40);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>().powi(4)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / s).collect()
                })
                .collect();
            let is = inception_score(&ProbMatrix::from_rows(&rows).unwrap(), 1).unwrap();
            assert!(is.mean >= 1.0 - 1e-9 && is.mean <= c as f64 + 1e-9);
        }
    }

    #[test]
    fn matrix_files() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("f.csv");
        fs::write(&csv, "a,b\n1.5, 2\n-3,4e-1\n").unwrap();
        assert_eq!(read_matrix(&csv).unwrap(), vec![vec![1.5, 2.0], vec![-3.0, 0.4]]);
        fs::write(&csv, "1,2\n3,x\n").unwrap();
        assert!(matches!(read_matrix(&csv), Err(MetricsError::Format { .. })));

        let raw = dir.path().join("f.f32");
        let rows = vec![vec![0.5, -1.25, 3.0], vec![2.0, 0.0, 1.0]];
        write_raw_f32(&raw, &rows).unwrap();
        assert_eq!(read_matrix(&raw).unwrap(), rows);
        fs::write(&raw, [0u8; 5]).unwrap();
        assert!(matches!(read_matrix(&raw), Err(MetricsError::Format { .. })));
        assert!(matches!(read_matrix(&dir.path().join("missing.f32")), Err(MetricsError::Io { .. })));
    }

    #[test]
    fn reference_results_parse() {
        let v: serde_json::Value = serde_json::from_str(REFERENCE_RESULTS).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 6);
    }
}
