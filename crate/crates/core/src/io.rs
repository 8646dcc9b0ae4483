//! Text formats: whitespace-separated chain files and CSV matrices.
//!
//! States are written as 1-based labels; blanks in filtered chains use a
//! configurable token.

use nalgebra::DMatrix;

use crate::chain::{CompleteChain, StateSpace};
use crate::error::{Error, ParseError, Result};
use crate::filter::{FilterMatrix, FilteredChain};
use crate::matrix::{SupportMask, TransitionMatrix};

pub const DEFAULT_BLANK: &str = "-";

/// Formats with 12 significant digits, `%g` style.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{}", x);
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Tokens with their 1-based line and column.
fn tokens(text: &str) -> impl Iterator<Item = (usize, usize, &str)> {
    text.lines().enumerate().flat_map(|(ln, line)| {
        line.split_whitespace().map(move |tok| {
            let col = tok.as_ptr() as usize - line.as_ptr() as usize + 1;
            (ln + 1, col, tok)
        })
    })
}

fn parse_label(tok: &str, line: usize, column: usize, k: usize) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(l) if (1..=k).contains(&l) => Ok(l - 1),
        Ok(l) => Err(ParseError { line, column, message: format!("state {} outside 1..={}", l, k) }.into()),
        Err(_) => Err(ParseError { line, column, message: format!("'{}' is not a state label", tok) }.into()),
    }
}

pub fn parse_chain(text: &str, k: usize) -> Result<CompleteChain> {
    let space = StateSpace::new(k)?;
    let states = tokens(text).map(|(l, c, t)| parse_label(t, l, c, k)).collect::<Result<Vec<_>>>()?;
    CompleteChain::new(states, space)
}

pub fn write_chain(x: &CompleteChain) -> String {
    let labels: Vec<String> = x.labels().map(|l| l.to_string()).collect();
    labels.join(" ") + "\n"
}

pub fn parse_filtered_chain(text: &str, k: usize, blank: &str) -> Result<FilteredChain> {
    let space = StateSpace::new(k)?;
    let symbols = tokens(text)
        .map(|(l, c, t)| if t == blank { Ok(None) } else { parse_label(t, l, c, k).map(Some) })
        .collect::<Result<Vec<_>>>()?;
    FilteredChain::new(symbols, space)
}

pub fn write_filtered_chain(y: &FilteredChain, blank: &str) -> String {
    y.to_tokens(blank) + "\n"
}

/// A square numeric CSV matrix. Errors name the offending cell.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse(ParseError { line, column: 0, message: e.to_string() })
        })?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Parse(ParseError { line, column: c + 1, message: format!("'{}' is not a number", cell) })
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(ParseError {
                    line,
                    column: row.len().min(first.len()) + 1,
                    message: format!("expected {} values, found {}", first.len(), row.len()),
                }
                .into());
            }
        }
        rows.push(row);
    }
    let k = rows.len();
    if k == 0 {
        return Err(ParseError { line: 1, column: 1, message: "empty matrix".into() }.into());
    }
    if rows[0].len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: rows[0].len() });
    }
    Ok(DMatrix::from_row_slice(k, k, &rows.concat()))
}

fn parse_binary(text: &str) -> Result<Vec<Vec<bool>>> {
    let m = parse_matrix_csv(text)?;
    let mut out = vec![vec![false; m.ncols()]; m.nrows()];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i][j] = match m[(i, j)] {
                1.0 => true,
                0.0 => false,
                v => {
                    return Err(ParseError { line: i + 1, column: j + 1, message: format!("{} is not 0 or 1", v) }.into())
                }
            };
        }
    }
    Ok(out)
}

pub fn parse_filter(text: &str) -> Result<FilterMatrix> {
    FilterMatrix::from_rows(&parse_binary(text)?)
}

pub fn parse_support(text: &str) -> Result<SupportMask> {
    SupportMask::from_rows(&parse_binary(text)?)
}

/// A transition matrix; without an explicit support the positive entries
/// define it.
pub fn parse_transition_matrix(text: &str, support: Option<&SupportMask>) -> Result<TransitionMatrix> {
    let m = parse_matrix_csv(text)?;
    match support {
        Some(s) => TransitionMatrix::new(m, s.clone()),
        None => TransitionMatrix::from_probs(m),
    }
}

pub fn write_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_number(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_binary_csv(k: usize, get: impl Fn(usize, usize) -> bool) -> String {
    let mut out = String::new();
    for i in 0..k {
        let row: Vec<&str> = (0..k).map(|j| if get(i, j) { "1" } else { "0" }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
