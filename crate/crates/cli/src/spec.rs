//! Chain and experiment files.
//!
//! Grammar (TOML; JSON with the same keys is also accepted):
//!
//! ```text
//! kind   = "ctmc" | "dtmc"
//! states = ["E", "ES", "EP"]
//! matrix = [[...], [...], ...]     # one row per state
//! start  = "E"                     # optional
//!
//! [experiment]                     # optional defaults, overridden by flags
//! cycles      = "(E,ES,EP),(E,EP,ES)"
//! t           = 2.0                # ctmc horizon
//! steps       = 40                 # dtmc horizon
//! replicas    = 10000
//! seed        = 7
//! mode        = "exact" | "mc"
//! lambda_grid = "-1:1:0.05"        # one axis per cycle, or one shared axis
//! x_grid      = "-0.5:0.5:0.01"
//! caps        = 20
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use cyclecirc_core::lab::{Mode, ProductGrid};
use cyclecirc_core::{
    parse_cycle_list, ChainKind, ChainSpec, Cycle, Error as CoreError, StateSpace, ValidateOptions,
};
use serde::Deserialize;

/// Parse or validation failure with file, line and key context.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub kind: SpecErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecErrorKind {
    Io,
    Parse,
    UnknownState,
    BadCycle,
    InvalidChain,
    InvalidValue,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": key `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for SpecError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    kind: String,
    states: Vec<String>,
    matrix: Vec<Vec<f64>>,
    start: Option<String>,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    cycles: Option<String>,
    t: Option<f64>,
    steps: Option<usize>,
    replicas: Option<usize>,
    seed: Option<u64>,
    mode: Option<String>,
    lambda_grid: Option<String>,
    x_grid: Option<String>,
    caps: Option<usize>,
}

/// A validated chain plus experiment defaults. Command-line flags are
/// merged in with [`ExperimentSpec::set_cycles`] and friends.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub path: PathBuf,
    pub chain: ChainSpec,
    pub start: Option<usize>,
    pub cycles: Vec<Cycle>,
    pub t: Option<f64>,
    pub steps: Option<usize>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub lambda_grid: Option<ProductGrid>,
    pub x_grid: Option<ProductGrid>,
    pub caps: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Toml,
    Json,
}

struct Locator<'a> {
    path: &'a Path,
    text: &'a str,
    format: Format,
}

impl Locator<'_> {
    fn err(
        &self,
        table: Option<&str>,
        key: &str,
        kind: SpecErrorKind,
        message: String,
    ) -> SpecError {
        SpecError {
            path: self.path.to_path_buf(),
            line: self.key_line(table, key),
            key: Some(match table {
                Some(t) => format!("{t}.{key}"),
                None => key.to_string(),
            }),
            kind,
            message,
        }
    }

    /// Byte offset of `key`'s value, if the key appears.
    fn key_offset(&self, table: Option<&str>, key: &str) -> Option<usize> {
        match self.format {
            Format::Json => {
                let pat = format!("\"{key}\"");
                let scope = match table {
                    Some(t) => self.text.find(&format!("\"{t}\""))?,
                    None => 0,
                };
                self.text[scope..].find(&pat).map(|p| scope + p)
            }
            Format::Toml => {
                let mut current: Option<String> = None;
                let mut offset = 0;
                for line in self.text.split_inclusive('\n') {
                    let trimmed = line.trim();
                    if let Some(h) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                        if !h.starts_with('[') && !trimmed.contains('=') {
                            current = Some(h.trim().to_string());
                        }
                    } else if current.as_deref() == table {
                        if let Some((k, _)) = trimmed.split_once('=') {
                            if k.trim() == key {
                                return Some(offset + line.find('=').unwrap_or(0));
                            }
                        }
                    }
                    offset += line.len();
                }
                None
            }
        }
    }

    fn key_line(&self, table: Option<&str>, key: &str) -> Option<usize> {
        self.key_offset(table, key).map(|o| self.line_of(o))
    }

    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset].matches('\n').count() + 1
    }

    /// Line where row `row` of the matrix opens.
    fn matrix_row_line(&self, row: usize) -> Option<usize> {
        let start = self.key_offset(None, "matrix")?;
        let mut depth = 0usize;
        let mut seen = 0usize;
        let mut in_comment = false;
        for (i, ch) in self.text[start..].char_indices() {
            if in_comment {
                in_comment = ch != '\n';
                continue;
            }
            match ch {
                '#' if self.format == Format::Toml => in_comment = true,
                '[' => {
                    depth += 1;
                    if depth == 2 {
                        if seen == row {
                            return Some(self.line_of(start + i));
                        }
                        seen += 1;
                    }
                }
                ']' => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return None;
                    }
                }
                _ => {}
            }
        }
        None
    }
}

/// Reads, parses and validates a chain file.
pub fn parse_spec(path: &Path) -> Result<ExperimentSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecError {
        path: path.to_path_buf(),
        line: None,
        key: None,
        kind: SpecErrorKind::Io,
        message: e.to_string(),
    })?;
    let format =
        if path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{') {
            Format::Json
        } else {
            Format::Toml
        };
    parse_text(path, &text, format)
}

/// Parses file contents; `path` is only used in diagnostics.
pub fn parse_str(path: &Path, text: &str) -> Result<ExperimentSpec, SpecError> {
    let format = if text.trim_start().starts_with('{') {
        Format::Json
    } else {
        Format::Toml
    };
    parse_text(path, text, format)
}

fn parse_text(path: &Path, text: &str, format: Format) -> Result<ExperimentSpec, SpecError> {
    let loc = Locator { path, text, format };
    let raw: RawFile = match format {
        Format::Toml => toml::from_str(text).map_err(|e| SpecError {
            path: path.to_path_buf(),
            line: e.span().map(|s| loc.line_of(s.start)),
            key: None,
            kind: SpecErrorKind::Parse,
            message: e.message().to_string(),
        })?,
        Format::Json => serde_json::from_str(text).map_err(|e| SpecError {
            path: path.to_path_buf(),
            line: Some(e.line()),
            key: None,
            kind: SpecErrorKind::Parse,
            message: e.to_string(),
        })?,
    };

    let kind = match raw.kind.as_str() {
        "ctmc" => ChainKind::Ctmc,
        "dtmc" => ChainKind::Dtmc,
        other => {
            return Err(loc.err(
                None,
                "kind",
                SpecErrorKind::InvalidValue,
                format!("expected `ctmc` or `dtmc`, got `{other}`"),
            ))
        }
    };
    let states = StateSpace::new(raw.states.clone())
        .map_err(|e| loc.err(None, "states", SpecErrorKind::InvalidChain, e.to_string()))?;
    let chain = ChainSpec::new(kind, states, &raw.matrix, ValidateOptions::default())
        .map_err(|e| chain_error(&loc, e))?;
    let labels = chain.states();

    let start = raw
        .start
        .as_deref()
        .map(|s| labels.index_of(s))
        .transpose()
        .map_err(|e| loc.err(None, "start", SpecErrorKind::UnknownState, e.to_string()))?;

    let ex = raw.experiment;
    let exp = Some("experiment");
    let cycles = match &ex.cycles {
        Some(text) => parse_cycle_list(text, labels).map_err(|e| {
            let kind = match e {
                CoreError::UnknownState(_) => SpecErrorKind::UnknownState,
                _ => SpecErrorKind::BadCycle,
            };
            loc.err(exp, "cycles", kind, e.to_string())
        })?,
        None => Vec::new(),
    };
    let mode = ex
        .mode
        .as_deref()
        .map(str::parse::<Mode>)
        .transpose()
        .map_err(|e| loc.err(exp, "mode", SpecErrorKind::InvalidValue, e.to_string()))?;
    let grid = |key: &str, v: &Option<String>| -> Result<Option<ProductGrid>, SpecError> {
        v.as_deref()
            .map(str::parse::<ProductGrid>)
            .transpose()
            .map_err(|e| loc.err(exp, key, SpecErrorKind::InvalidValue, e.to_string()))
    };
    let lambda_grid = grid("lambda_grid", &ex.lambda_grid)?;
    let x_grid = grid("x_grid", &ex.x_grid)?;
    if let Some(t) = ex.t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(loc.err(
                exp,
                "t",
                SpecErrorKind::InvalidValue,
                format!("horizon must be positive and finite, got {t}"),
            ));
        }
    }
    if ex.replicas == Some(0) {
        return Err(loc.err(
            exp,
            "replicas",
            SpecErrorKind::InvalidValue,
            "must be at least 1".into(),
        ));
    }

    Ok(ExperimentSpec {
        path: path.to_path_buf(),
        chain,
        start,
        cycles,
        t: ex.t,
        steps: ex.steps,
        replicas: ex.replicas,
        seed: ex.seed,
        mode,
        lambda_grid,
        x_grid,
        caps: ex.caps,
    })
}

fn chain_error(loc: &Locator<'_>, e: CoreError) -> SpecError {
    use CoreError::*;
    let row = match e {
        NotSquare { row, .. }
        | NonFinite { row, .. }
        | NonStochasticRow { row, .. }
        | NegativeProbability { row, .. }
        | NegativeRate { row, .. }
        | BadDiagonal { row, .. } => Some(row),
        _ => None,
    };
    let key = match e {
        DuplicateLabel(_) | LabelCountMismatch { .. } => "states",
        _ => "matrix",
    };
    let mut err = loc.err(None, key, SpecErrorKind::InvalidChain, e.to_string());
    if let Some(line) = row.and_then(|r| loc.matrix_row_line(r)) {
        err.line = Some(line);
    }
    err
}

impl ExperimentSpec {
    pub fn labels(&self) -> &StateSpace {
        self.chain.states()
    }

    pub fn set_cycles(&mut self, text: &str) -> Result<(), CoreError> {
        self.cycles = parse_cycle_list(text, self.chain.states())?;
        Ok(())
    }

    pub fn set_start(&mut self, label: &str) -> Result<(), CoreError> {
        self.start = Some(self.chain.states().index_of(label)?);
        Ok(())
    }

    /// The start state, falling back to the first listed state.
    pub fn start_or_first(&self) -> usize {
        self.start.unwrap_or(0)
    }
}
