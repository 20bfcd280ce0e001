//! Code bundle: one JSON document with the check matrices and how they were
//! built.

use serde::{Deserialize, Serialize};

use qldpc_core::codes::{Construction, CssCode, RowDeletion};

use crate::error::{read_to_string, write_atomic};
use crate::{matrix_text, FormatError};

pub const BUNDLE_FORMAT: &str = "qldpc-code";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeBundle {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub n: usize,
    pub k: usize,
    /// 64-bit fingerprint of `(Hx, Hz)` in hex.
    pub fingerprint: String,
    pub construction: ConstructionDoc,
    /// Matrices in the text format, one array entry per line.
    pub hx: Vec<String>,
    pub hz: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ConstructionDoc {
    Hgp {
        /// Generator polynomials of the seed codes, bit `i` = coefficient of `x^i`.
        generators: [Option<u64>; 2],
        seed_shapes: [(usize, usize); 2],
    },
    Bicycle {
        seed: u64,
        support: Vec<usize>,
        deleted_rows: Vec<usize>,
        deletion: String,
        attempts: usize,
    },
    Explicit,
}

pub fn fingerprint_hex(code: &CssCode) -> String {
    format!("{:016x}", code.fingerprint())
}

fn deletion_name(d: RowDeletion) -> &'static str {
    match d {
        RowDeletion::BalanceColumns => "balance_columns",
        RowDeletion::Random => "random",
    }
}

fn parse_deletion(s: &str) -> Result<RowDeletion, FormatError> {
    match s {
        "balance_columns" => Ok(RowDeletion::BalanceColumns),
        "random" => Ok(RowDeletion::Random),
        other => Err(FormatError::invalid(format!("unknown row deletion {other:?}"))),
    }
}

impl CodeBundle {
    pub fn from_code(code: &CssCode) -> Self {
        let construction = match &code.construction {
            Construction::HypergraphProduct {
                generators,
                seed_shapes,
            } => ConstructionDoc::Hgp {
                generators: *generators,
                seed_shapes: *seed_shapes,
            },
            Construction::Bicycle {
                seed,
                support,
                deleted_rows,
                deletion,
                attempts,
            } => ConstructionDoc::Bicycle {
                seed: *seed,
                support: support.clone(),
                deleted_rows: deleted_rows.clone(),
                deletion: deletion_name(*deletion).into(),
                attempts: *attempts,
            },
            Construction::Explicit => ConstructionDoc::Explicit,
        };
        Self {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            name: code.name.clone(),
            n: code.n,
            k: code.k,
            fingerprint: fingerprint_hex(code),
            construction,
            hx: matrix_text::to_lines(&code.hx),
            hz: matrix_text::to_lines(&code.hz),
        }
    }

    /// Rebuilds the code and checks the recorded `n`, `k` and fingerprint.
    pub fn to_code(&self) -> Result<CssCode, FormatError> {
        if self.format != BUNDLE_FORMAT || self.version != BUNDLE_VERSION {
            return Err(FormatError::invalid(format!(
                "not a code bundle (format {:?} version {})",
                self.format, self.version
            )));
        }
        let hx = matrix_text::from_lines(self.hx.iter().map(String::as_str))?;
        let hz = matrix_text::from_lines(self.hz.iter().map(String::as_str))?;
        let construction = match &self.construction {
            ConstructionDoc::Hgp {
                generators,
                seed_shapes,
            } => Construction::HypergraphProduct {
                generators: *generators,
                seed_shapes: *seed_shapes,
            },
            ConstructionDoc::Bicycle {
                seed,
                support,
                deleted_rows,
                deletion,
                attempts,
            } => Construction::Bicycle {
                seed: *seed,
                support: support.clone(),
                deleted_rows: deleted_rows.clone(),
                deletion: parse_deletion(deletion)?,
                attempts: *attempts,
            },
            ConstructionDoc::Explicit => Construction::Explicit,
        };
        let code = CssCode::new(self.name.clone(), hx, hz, construction)?;
        if code.n != self.n || code.k != self.k || fingerprint_hex(&code) != self.fingerprint {
            return Err(FormatError::invalid(format!(
                "bundle header says [[{}, {}]] {} but matrices give [[{}, {}]] {}",
                self.n,
                self.k,
                self.fingerprint,
                code.n,
                code.k,
                fingerprint_hex(&code)
            )));
        }
        Ok(code)
    }
}

pub fn to_json(code: &CssCode) -> Result<String, FormatError> {
    let mut s = serde_json::to_string_pretty(&CodeBundle::from_code(code))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<CssCode, FormatError> {
    serde_json::from_str::<CodeBundle>(text)?.to_code()
}

pub fn save(code: &CssCode, path: &std::path::Path) -> Result<(), FormatError> {
    write_atomic(path, to_json(code)?.as_bytes())
}

pub fn load(path: &std::path::Path) -> Result<CssCode, FormatError> {
    from_json(&read_to_string(path)?)
}
