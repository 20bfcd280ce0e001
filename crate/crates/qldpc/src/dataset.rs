//! Datasets as JSON Lines: a header object, then one `{"s", "e"}` record per
//! line. Bitstrings are hex bytes, bit `i` in byte `i / 8` at position `i % 8`.

use std::borrow::Borrow;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use qldpc_core::channel::{gen_test_stream, gen_training_set, DatasetMeta, Recipe};
use qldpc_core::{BinVector, ChannelParams, CssCode, Dataset, ErrorVector, Syndrome};

use crate::FormatError;

pub const DATASET_FORMAT: &str = "qldpc-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub code_name: String,
    pub code_hash: String,
    pub p_f: f64,
    pub seed: u64,
    pub recipe: String,
    pub count: usize,
    pub error_bits: usize,
    pub syndrome_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    s: String,
    e: String,
}

pub fn bits_to_hex(v: &BinVector) -> String {
    let bytes: Vec<u8> = v
        .words()
        .iter()
        .flat_map(|w| w.to_le_bytes())
        .take(v.len().div_ceil(8))
        .collect();
    hex::encode(bytes)
}

pub fn hex_to_bits(text: &str, len: usize) -> Result<BinVector, FormatError> {
    let bytes = hex::decode(text).map_err(|e| FormatError::invalid(format!("bad hex {text:?}: {e}")))?;
    if bytes.len() != len.div_ceil(8) {
        return Err(FormatError::invalid(format!(
            "{} hex bytes cannot hold exactly {len} bits",
            bytes.len()
        )));
    }
    let mut v = BinVector::zeros(len);
    for (i, byte) in bytes.iter().enumerate() {
        for b in 0..8 {
            if byte >> b & 1 == 1 {
                let bit = 8 * i + b;
                if bit >= len {
                    return Err(FormatError::invalid(format!("bit {bit} set beyond length {len}")));
                }
                v.set(bit, true);
            }
        }
    }
    Ok(v)
}

fn recipe_from_str(s: &str) -> Result<Recipe, FormatError> {
    match s {
        "train" => Ok(Recipe::Train),
        "test" => Ok(Recipe::Test),
        other => Err(FormatError::invalid(format!("unknown recipe {other:?}"))),
    }
}

/// Streams a header plus `entries` to `out`.
pub fn write_entries<W: Write + ?Sized, T: Borrow<(Syndrome, ErrorVector)>>(
    out: &mut W,
    meta: &DatasetMeta,
    count: usize,
    error_bits: usize,
    syndrome_bits: usize,
    entries: impl IntoIterator<Item = T>,
) -> Result<(), FormatError> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        code_name: meta.code_name.clone(),
        code_hash: format!("{:016x}", meta.code_hash),
        p_f: meta.p_f,
        seed: meta.seed,
        recipe: meta.recipe.as_str().into(),
        count,
        error_bits,
        syndrome_bits,
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    let mut written = 0;
    for entry in entries {
        let (s, e) = entry.borrow();
        let record = Record {
            s: bits_to_hex(s.bits()),
            e: bits_to_hex(e.bits()),
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
        written += 1;
    }
    if written != count {
        return Err(FormatError::invalid(format!("header promised {count} records, wrote {written}")));
    }
    Ok(())
}

pub fn write_dataset<W: Write + ?Sized>(out: &mut W, code: &CssCode, dataset: &Dataset) -> Result<(), FormatError> {
    write_entries(
        out,
        &dataset.meta,
        dataset.len(),
        2 * code.n,
        code.m(),
        &dataset.entries,
    )
}

/// Generates and writes a dataset for `recipe` without holding test draws in memory.
pub fn generate<W: Write + ?Sized>(
    out: &mut W,
    code: &CssCode,
    channel: ChannelParams,
    recipe: Recipe,
    count: usize,
    seed: u64,
) -> Result<(), FormatError> {
    match recipe {
        Recipe::Train => {
            let ds = gen_training_set(code, channel, count, seed)
                .map_err(|e| FormatError::invalid(e.to_string()))?;
            write_dataset(out, code, &ds)
        }
        Recipe::Test => {
            let meta = DatasetMeta {
                code_name: code.name.clone(),
                code_hash: code.fingerprint(),
                p_f: channel.p_f(),
                seed,
                recipe,
            };
            let draws = gen_test_stream(code, channel, count, seed);
            write_entries(out, &meta, count, 2 * code.n, code.m(), draws)
        }
    }
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset, FormatError> {
    let mut lines = input.lines();
    let header_line = lines.next().ok_or_else(|| FormatError::Parse {
        line: 1,
        message: "empty dataset".into(),
    })??;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(FormatError::invalid(format!(
            "not a dataset (format {:?} version {})",
            header.format, header.version
        )));
    }
    let code_hash = u64::from_str_radix(&header.code_hash, 16)
        .map_err(|e| FormatError::invalid(format!("bad code hash {:?}: {e}", header.code_hash)))?;
    let mut entries = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: FormatError| FormatError::Parse {
            line: i + 2,
            message: e.to_string(),
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| at(e.into()))?;
        let s = hex_to_bits(&record.s, header.syndrome_bits).map_err(at)?;
        let e = hex_to_bits(&record.e, header.error_bits).map_err(at)?;
        entries.push((Syndrome(s), ErrorVector(e)));
    }
    if entries.len() != header.count {
        return Err(FormatError::invalid(format!(
            "header promises {} records, found {}",
            header.count,
            entries.len()
        )));
    }
    Ok(Dataset {
        meta: DatasetMeta {
            code_name: header.code_name,
            code_hash,
            p_f: header.p_f,
            seed: header.seed,
            recipe: recipe_from_str(&header.recipe)?,
        },
        entries,
    })
}

pub fn load(path: &std::path::Path) -> Result<Dataset, FormatError> {
    let file = std::fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    read_dataset(std::io::BufReader::new(file))
}
