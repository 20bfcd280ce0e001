use std::io::Write;
use std::path::{Path, PathBuf};

/// Failures while reading or writing workbench files.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("I/O: {0}")]
    Stream(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Code(#[from] qldpc_core::codes::CodeError),
    #[error(transparent)]
    Nn(#[from] qldpc_core::nn::NnError),
    #[error(transparent)]
    Gnn(#[from] qldpc_core::gnn::GnnError),
    #[error(transparent)]
    Nbp(#[from] qldpc_core::nbp::NbpError),
}

impl FormatError {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        FormatError::Invalid(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Fails unless the directory that would hold `path` exists.
pub fn check_parent_dir(path: &Path) -> Result<(), FormatError> {
    let dir = parent_dir(path);
    if dir.is_dir() {
        Ok(())
    } else {
        Err(FormatError::io(
            &dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ))
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Streams into a sibling temporary file and renames it over `path` on
/// success, so a failed write never leaves a partial file behind.
pub fn write_atomic_with(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> Result<(), FormatError>,
) -> Result<(), FormatError> {
    check_parent_dir(path)?;
    let name = path
        .file_name()
        .ok_or_else(|| FormatError::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = parent_dir(path).join(format!(".{}.partial", name.to_string_lossy()));
    let result = (|| {
        let file = std::fs::File::create(&tmp).map_err(|e| FormatError::io(&tmp, e))?;
        let mut w = std::io::BufWriter::new(file);
        fill(&mut w)?;
        w.flush()?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(|e| FormatError::io(path, e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), FormatError> {
    write_atomic_with(path, |w| Ok(w.write_all(contents)?))
}

pub fn read_to_string(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}
