//! Text form of a binary matrix: a `rows cols` header line, then one line of
//! `0`/`1` characters per row.

use qldpc_core::BinMatrix;

use crate::FormatError;

pub fn to_lines(m: &BinMatrix) -> Vec<String> {
    let mut lines = Vec::with_capacity(m.rows() + 1);
    lines.push(format!("{} {}", m.rows(), m.cols()));
    for r in 0..m.rows() {
        lines.push((0..m.cols()).map(|c| if m.get(r, c) { '1' } else { '0' }).collect());
    }
    lines
}

pub fn write(m: &BinMatrix) -> String {
    let mut out = to_lines(m).join("\n");
    out.push('\n');
    out
}

pub fn parse(text: &str) -> Result<BinMatrix, FormatError> {
    from_lines(text.lines())
}

pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Result<BinMatrix, FormatError> {
    let mut lines = lines.into_iter().map(str::trim_end).enumerate();
    let bad = |line: usize, message: String| FormatError::Parse { line: line + 1, message };
    let (_, header) = lines.next().ok_or_else(|| bad(0, "missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| bad(0, format!("header {header:?}: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(bad(0, format!("header {header:?} must be \"rows cols\"")));
    };
    let mut m = BinMatrix::zeros(rows, cols);
    let mut seen = 0;
    for (i, line) in lines {
        if line.is_empty() && seen == rows {
            continue;
        }
        if seen == rows {
            return Err(bad(i, format!("more than {rows} rows")));
        }
        if line.len() != cols {
            return Err(bad(i, format!("row has {} characters, expected {cols}", line.len())));
        }
        for (c, ch) in line.bytes().enumerate() {
            match ch {
                b'0' => {}
                b'1' => m.set(seen, c, true),
                other => return Err(bad(i, format!("unexpected character {:?}", other as char))),
            }
        }
        seen += 1;
    }
    if seen != rows {
        return Err(bad(seen + 1, format!("found {seen} rows, expected {rows}")));
    }
    Ok(m)
}
