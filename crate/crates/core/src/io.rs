//! On-disk formats: triplet and dense CSV response matrices, JSON fit and
//! ground-truth documents, TOML synthetic specs and metric CSV rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fit::{FitResult, KktResidual, RunInfo, SweepTouches};
use crate::metrics::MetricsReport;
use crate::params::ModelParams;
use crate::response::{Response, ResponseError, ResponseMatrix};
use crate::synthetic::{GroundTruth, SyntheticSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid data: {0}")]
    Validation(String),
    #[error("unsupported format_version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed document: {0}")]
    Document(String),
}

impl From<ResponseError> for IoError {
    fn from(e: ResponseError) -> Self {
        IoError::Validation(e.to_string())
    }
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_string(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixFormat {
    #[default]
    Triplet,
    Dense,
}

impl FromStr for MatrixFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "triplet" => Ok(MatrixFormat::Triplet),
            "dense" => Ok(MatrixFormat::Dense),
            other => Err(format!("unknown matrix format '{other}'")),
        }
    }
}

/// Whether a dense file carries a header row and/or a leading label column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DenseLabels {
    pub header_row: bool,
    pub label_col: bool,
}

pub fn parse_matrix(path: &Path, format: MatrixFormat, labels: DenseLabels) -> Result<ResponseMatrix, IoError> {
    let text = read_to_string(path)?;
    match format {
        MatrixFormat::Triplet => parse_triplets(&text),
        MatrixFormat::Dense => parse_dense(&text, labels),
    }
}

fn parse_int<T: FromStr>(field: &str, line: usize, what: &str) -> Result<T, IoError> {
    field.trim().parse().map_err(|_| IoError::Parse {
        line,
        reason: format!("invalid {what} '{}'", field.trim()),
    })
}

/// Parses `row,col,y` triplets with 0-based indices. An optional `# dims N J`
/// comment fixes the dimensions; otherwise they are inferred as max index + 1.
pub fn parse_triplets(text: &str) -> Result<ResponseMatrix, IoError> {
    let mut dims: Option<(usize, usize)> = None;
    let mut seen_header = false;
    let mut triplets = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        if let Some(comment) = s.strip_prefix('#') {
            let parts: Vec<&str> = comment.split_whitespace().collect();
            if parts.first() == Some(&"dims") {
                if parts.len() != 3 {
                    return Err(IoError::Parse { line, reason: "expected '# dims N J'".into() });
                }
                dims = Some((parse_int(parts[1], line, "N")?, parse_int(parts[2], line, "J")?));
            }
            continue;
        }
        if !seen_header {
            let cols: Vec<String> = s.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
            if cols != ["row", "col", "y"] {
                return Err(IoError::Parse { line, reason: format!("expected header 'row,col,y', got '{s}'") });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = s.split(',').collect();
        if fields.len() != 3 {
            return Err(IoError::Parse { line, reason: format!("expected 3 fields, got {}", fields.len()) });
        }
        let i: usize = parse_int(fields[0], line, "row index")?;
        let j: usize = parse_int(fields[1], line, "column index")?;
        let y: i64 = parse_int(fields[2], line, "response")?;
        if y != 1 && y != -1 {
            return Err(IoError::Parse { line, reason: format!("response must be -1 or 1, got {y}") });
        }
        triplets.push((i, j, y));
    }
    if !seen_header {
        return Err(IoError::Parse { line: 1, reason: "missing 'row,col,y' header".into() });
    }
    let (n, j) = match dims {
        Some(d) => d,
        None => {
            if triplets.is_empty() {
                return Err(IoError::Validation("no entries and no '# dims' line".into()));
            }
            let n = triplets.iter().map(|t| t.0).max().unwrap() + 1;
            let j = triplets.iter().map(|t| t.1).max().unwrap() + 1;
            (n, j)
        }
    };
    Ok(ResponseMatrix::from_triplets(n, j, &triplets)?)
}

/// Parses a dense grid with cells `1`, `-1` or blank (missing).
pub fn parse_dense(text: &str, labels: DenseLabels) -> Result<ResponseMatrix, IoError> {
    let mut rows = Vec::new();
    let mut width: Option<usize> = None;
    let mut skipped_header = !labels.header_row;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if !skipped_header {
            skipped_header = true;
            continue;
        }
        let mut cells: Vec<&str> = raw.split(',').collect();
        if labels.label_col {
            cells.remove(0);
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(IoError::Parse { line, reason: format!("expected {w} cells, got {}", cells.len()) })
            }
            _ => {}
        }
        let i = rows.len();
        let mut row = Vec::new();
        for (j, cell) in cells.iter().enumerate() {
            let c = cell.trim();
            let y = match c {
                "" => continue,
                "1" | "+1" => Response::Correct,
                "-1" => Response::Incorrect,
                other => return Err(IoError::Parse { line, reason: format!("invalid cell '{other}' in column {j}") }),
            };
            row.push((i, j, y));
        }
        rows.push(row);
    }
    let n = rows.len();
    let j = width.unwrap_or(0);
    if n == 0 || j == 0 {
        return Err(IoError::Validation("dense file has no data rows".into()));
    }
    Ok(ResponseMatrix::from_entries(n, j, rows.into_iter().flatten().collect())?)
}

pub fn format_triplets(m: &ResponseMatrix) -> String {
    let mut out = String::with_capacity(m.n_observed() * 10 + 32);
    let _ = writeln!(out, "# dims {} {}", m.n_models(), m.n_items());
    out.push_str("row,col,y\n");
    for (i, j, y) in m.entries() {
        let _ = writeln!(out, "{i},{j},{y}");
    }
    out
}

pub fn format_dense(m: &ResponseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.n_models() {
        let mut cells = vec![""; m.n_items()];
        for pos in m.row_range(i) {
            cells[m.col_at(pos)] = match m.response_at(pos) {
                Response::Correct => "1",
                Response::Incorrect => "-1",
            };
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_triplets(m: &ResponseMatrix, path: &Path) -> Result<(), IoError> {
    write_string(path, &format_triplets(m))
}

#[derive(Debug, Serialize, Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn check_version(text: &str) -> Result<(), IoError> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| IoError::Document(e.to_string()))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(IoError::VersionMismatch { found: probe.format_version, expected: FORMAT_VERSION });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct FitResultFile {
    format_version: u32,
    n_models: usize,
    n_items: usize,
    theta: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    loss_trace: Vec<f64>,
    step_norms: Vec<f64>,
    iterations: usize,
    converged: bool,
    kkt: KktResidual,
    degenerate_rows: Vec<usize>,
    degenerate_cols: Vec<usize>,
    collapsed: bool,
    touches: SweepTouches,
    config: RunInfo,
}

fn check_shape(n: usize, j: usize, theta: usize, a: usize, b: usize) -> Result<(), IoError> {
    if n == 0 || j == 0 {
        return Err(IoError::Validation(format!("dimensions must be positive, got {n}x{j}")));
    }
    if theta != n || a != j || b != j {
        return Err(IoError::Validation(format!(
            "array lengths (theta {theta}, a {a}, b {b}) do not match declared {n}x{j}"
        )));
    }
    Ok(())
}

pub fn fit_result_to_json(r: &FitResult) -> String {
    let file = FitResultFile {
        format_version: FORMAT_VERSION,
        n_models: r.params.n_models(),
        n_items: r.params.n_items(),
        theta: r.params.theta.clone(),
        a: r.params.a.clone(),
        b: r.params.b.clone(),
        loss_trace: r.loss_trace.clone(),
        step_norms: r.step_norms.clone(),
        iterations: r.iterations,
        converged: r.converged,
        kkt: r.kkt,
        degenerate_rows: r.degenerate_rows.clone(),
        degenerate_cols: r.degenerate_cols.clone(),
        collapsed: r.collapsed,
        touches: r.touches,
        config: r.run.clone(),
    };
    serde_json::to_string_pretty(&file).expect("fit results contain only finite numbers")
}

pub fn fit_result_from_json(text: &str) -> Result<FitResult, IoError> {
    check_version(text)?;
    let f: FitResultFile = serde_json::from_str(text).map_err(|e| IoError::Document(e.to_string()))?;
    check_shape(f.n_models, f.n_items, f.theta.len(), f.a.len(), f.b.len())?;
    if f.loss_trace.is_empty() {
        return Err(IoError::Validation("loss_trace must hold at least the initial loss".into()));
    }
    Ok(FitResult {
        params: ModelParams::new(f.theta, f.a, f.b),
        loss_trace: f.loss_trace,
        step_norms: f.step_norms,
        iterations: f.iterations,
        converged: f.converged,
        kkt: f.kkt,
        degenerate_rows: f.degenerate_rows,
        degenerate_cols: f.degenerate_cols,
        collapsed: f.collapsed,
        touches: f.touches,
        run: f.config,
    })
}

pub fn write_fit_result(r: &FitResult, path: &Path) -> Result<(), IoError> {
    write_string(path, &fit_result_to_json(r))
}

pub fn read_fit_result(path: &Path) -> Result<FitResult, IoError> {
    fit_result_from_json(&read_to_string(path)?)
}

/// SHA-256 of the little-endian bytes of a row-major score grid.
pub fn scores_digest(scores: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in scores {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Ground-truth document. Scores are not stored: they are rebuilt from the
/// parameters and checked against `scores_sha256`. A document without a
/// digest has no known score grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub format_version: u32,
    pub n_models: usize,
    pub n_items: usize,
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub zero_mask: Vec<usize>,
    pub sigma: f64,
    #[serde(default)]
    pub scores_sha256: Option<String>,
    #[serde(default)]
    pub realized_missing_rate: Option<f64>,
    #[serde(default)]
    pub spec: Option<SyntheticSpec>,
}

impl GroundTruthFile {
    pub fn from_truth(g: &GroundTruth, spec: &SyntheticSpec) -> Self {
        GroundTruthFile {
            format_version: FORMAT_VERSION,
            n_models: g.params.n_models(),
            n_items: g.params.n_items(),
            theta: g.params.theta.clone(),
            a: g.params.a.clone(),
            b: g.params.b.clone(),
            zero_mask: g.zero_mask.clone(),
            sigma: spec.sigma,
            scores_sha256: Some(scores_digest(&g.scores)),
            realized_missing_rate: Some(g.responses.missing_rate()),
            spec: Some(spec.clone()),
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.theta.clone(), self.a.clone(), self.b.clone())
    }

    /// The true score grid when the document declares one.
    pub fn scores(&self) -> Result<Option<Vec<f64>>, IoError> {
        let Some(digest) = &self.scores_sha256 else {
            return Ok(None);
        };
        let scores = self.params().dense_scores();
        if &scores_digest(&scores) != digest {
            return Err(IoError::Validation("score digest does not match the stored parameters".into()));
        }
        Ok(Some(scores))
    }
}

pub fn ground_truth_to_json(g: &GroundTruthFile) -> String {
    serde_json::to_string_pretty(g).expect("finite values")
}

pub fn ground_truth_from_json(text: &str) -> Result<GroundTruthFile, IoError> {
    check_version(text)?;
    let g: GroundTruthFile = serde_json::from_str(text).map_err(|e| IoError::Document(e.to_string()))?;
    check_shape(g.n_models, g.n_items, g.theta.len(), g.a.len(), g.b.len())?;
    Ok(g)
}

pub fn write_ground_truth(g: &GroundTruthFile, path: &Path) -> Result<(), IoError> {
    write_string(path, &ground_truth_to_json(g))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruthFile, IoError> {
    ground_truth_from_json(&read_to_string(path)?)
}

pub fn spec_to_toml(spec: &SyntheticSpec) -> String {
    toml::to_string(spec).expect("flat spec serializes")
}

pub fn spec_from_toml(text: &str) -> Result<SyntheticSpec, IoError> {
    toml::from_str(text).map_err(|e| IoError::Document(e.to_string()))
}

pub fn read_spec(path: &Path) -> Result<SyntheticSpec, IoError> {
    spec_from_toml(&read_to_string(path)?)
}

pub fn write_spec(spec: &SyntheticSpec, path: &Path) -> Result<(), IoError> {
    write_string(path, &spec_to_toml(spec))
}

/// `NA` for undefined values, shortest round-trip decimal otherwise.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Column names and values of a metrics row; score-based metrics are
/// omitted when the truth grid is unknown.
pub fn metrics_fields(r: &MetricsReport) -> Vec<(&'static str, String)> {
    let mut out = vec![
        ("spearman_theta", fmt_opt(r.spearman_theta)),
        ("spearman_a", fmt_opt(r.spearman_a)),
        ("rmse_b", r.rmse_b.to_string()),
    ];
    if r.rel_err_x.is_some() || r.hellinger.is_some() {
        out.push(("rel_err_x", fmt_opt(r.rel_err_x)));
        out.push(("hellinger", fmt_opt(r.hellinger)));
    }
    out.push(("recall_a", fmt_opt(r.recall_a)));
    out.push(("precision_a", fmt_opt(r.precision_a)));
    out
}

pub fn metrics_csv(r: &MetricsReport) -> String {
    let fields = metrics_fields(r);
    let header: Vec<&str> = fields.iter().map(|f| f.0).collect();
    let values: Vec<&str> = fields.iter().map(|f| f.1.as_str()).collect();
    format!("{}\n{}\n", header.join(","), values.join(","))
}
