//! Pose file grammar shared by training databases and prediction files.
//!
//! One record per line: `image_id tx ty tz qw qx qy qz`, whitespace separated.
//! Lines starting with `#` are comments and blank lines are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::DbError;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    /// 1-based source line.
    pub line: usize,
    pub image_id: String,
    pub values: [f64; 7],
}

pub fn parse_pose_text(text: &str) -> Result<Vec<PoseRecord>, DbError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let image_id = fields.next().expect("non-empty line").to_string();
        let mut values = [0.0; 7];
        let mut count = 0;
        for field in fields {
            if count == 7 {
                return Err(DbError::Parse {
                    line,
                    reason: "more than 8 fields".into(),
                });
            }
            values[count] = field.parse::<f64>().map_err(|_| DbError::Parse {
                line,
                reason: format!("invalid number {field:?}"),
            })?;
            if !values[count].is_finite() {
                return Err(DbError::Parse {
                    line,
                    reason: format!("non-finite value {field:?}"),
                });
            }
            count += 1;
        }
        if count != 7 {
            return Err(DbError::Parse {
                line,
                reason: format!("expected 7 numbers after the image id, found {count}"),
            });
        }
        records.push(PoseRecord {
            line,
            image_id,
            values,
        });
    }
    Ok(records)
}

pub fn read_pose_file(path: &Path) -> Result<Vec<PoseRecord>, DbError> {
    let text = fs::read_to_string(path).map_err(|source| DbError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pose_text(&text)
}

/// Formats records with shortest round-trip float representations, so a file
/// written here parses back to bit-identical values.
pub fn format_pose_text<'a>(records: impl IntoIterator<Item = (&'a str, [f64; 7])>) -> String {
    let mut out = String::new();
    for (id, v) in records {
        let _ = writeln!(
            out,
            "{id} {} {} {} {} {} {} {}",
            v[0], v[1], v[2], v[3], v[4], v[5], v[6]
        );
    }
    out
}

pub fn write_pose_file<'a>(
    path: &Path,
    records: impl IntoIterator<Item = (&'a str, [f64; 7])>,
) -> Result<(), DbError> {
    fs::write(path, format_pose_text(records)).map_err(|source| DbError::Io {
        path: path.to_path_buf(),
        source,
    })
}
