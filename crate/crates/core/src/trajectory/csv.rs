//! Comma-separated text formats. One header row, `\n` line endings, values
//! rounded to 9 significant digits and printed in shortest round-trip form,
//! so `encode(decode(encode(x)))` is byte-identical to `encode(x)`.

use super::{validate_raw_row, InterpolatedTrajectory, RawSequence, TipTailTrajectory, TrajectoryError};

pub const RAW_HEADER: &str = "xgl,ygl,rgl,xrl,yrl,rrl,xgr,ygr,rgr,xrr,yrr,rrr";
pub const TIP_TAIL_HEADER: &str = "Xr,Yr,Zr,Xg,Yg,Zg";
pub const TIP_HEADER: &str = "Xr,Yr,Zr";

/// Formats a value with 9 significant digits.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn encode_rows<'a>(header: &str, rows: impl Iterator<Item = &'a [f64]>) -> String {
    let mut out = String::with_capacity(64);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a table, checking the header; returns the header's column count
/// and row-major values.
fn decode_rows(text: &str, headers: &[&str]) -> Result<(usize, Vec<f64>), TrajectoryError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(TrajectoryError::Parse {
        row: 0,
        message: "missing header".into(),
    })?;
    let header = header.trim_end_matches('\r');
    let cols = headers
        .iter()
        .find(|h| **h == header)
        .map(|h| h.split(',').count())
        .ok_or_else(|| TrajectoryError::Parse {
            row: 0,
            message: format!("unexpected header {header:?}"),
        })?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(TrajectoryError::Parse {
                row,
                message: format!("expected {cols} columns, found {}", cells.len()),
            });
        }
        for cell in cells {
            let v: f64 = cell.trim().parse().map_err(|_| TrajectoryError::Parse {
                row,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(TrajectoryError::Parse {
                    row,
                    message: format!("non-finite cell {cell:?}"),
                });
            }
            values.push(v);
        }
    }
    Ok((cols, values))
}

pub fn encode_raw_csv(seq: &RawSequence) -> String {
    encode_rows(RAW_HEADER, seq.rows.iter().map(|r| &r[..]))
}

pub fn decode_raw_csv(text: &str) -> Result<RawSequence, TrajectoryError> {
    let (_, values) = decode_rows(text, &[RAW_HEADER])?;
    let mut seq = RawSequence::new();
    for (i, chunk) in values.chunks(12).enumerate() {
        let mut row = [0.0; 12];
        row.copy_from_slice(chunk);
        validate_raw_row(&row).map_err(|message| TrajectoryError::Parse { row: i + 1, message })?;
        seq.rows.push(row);
    }
    Ok(seq)
}

pub fn encode_tip_tail_csv(traj: &TipTailTrajectory) -> String {
    encode_rows(TIP_TAIL_HEADER, traj.rows.iter().map(|r| &r[..]))
}

pub fn decode_tip_tail_csv(text: &str) -> Result<TipTailTrajectory, TrajectoryError> {
    let (_, values) = decode_rows(text, &[TIP_TAIL_HEADER])?;
    let rows = values
        .chunks(6)
        .map(|c| [c[0], c[1], c[2], c[3], c[4], c[5]])
        .collect();
    Ok(TipTailTrajectory { rows })
}

pub fn encode_interpolated_csv(traj: &InterpolatedTrajectory) -> String {
    let header = if traj.has_tail() {
        TIP_TAIL_HEADER
    } else {
        TIP_HEADER
    };
    encode_rows(header, traj.rows())
}

/// Decodes a 3- or 6-column interpolated table. When `expected_len` is given
/// the row count must match it.
pub fn decode_interpolated_csv(
    text: &str,
    expected_len: Option<usize>,
) -> Result<InterpolatedTrajectory, TrajectoryError> {
    let (cols, values) = decode_rows(text, &[TIP_TAIL_HEADER, TIP_HEADER])?;
    let traj = InterpolatedTrajectory::new(cols, values)?;
    if let Some(t) = expected_len {
        if traj.len() != t {
            return Err(TrajectoryError::Parse {
                row: traj.len(),
                message: format!("expected exactly {t} rows, found {}", traj.len()),
            });
        }
    }
    Ok(traj)
}
