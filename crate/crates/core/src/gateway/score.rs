use thiserror::Error;

/// Parsed scores this far outside `[0, 1]` are clamped instead of rejected.
pub const CLAMP_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreParseError {
    #[error("no number in completion {0:?}")]
    NoNumber(String),
    #[error("score {0} outside [0, 1] beyond the clamp band")]
    OutOfRange(f64),
}

/// Extract the similarity score from a scoring completion.
///
/// The first decimal literal wins. Values within [`CLAMP_BAND`] of the unit
/// interval are clamped into it; anything further out is an error.
pub fn parse_similarity_score(text: &str) -> Result<f64, ScoreParseError> {
    let literal = first_decimal(text).ok_or_else(|| ScoreParseError::NoNumber(text.to_string()))?;
    let value: f64 = literal
        .parse()
        .map_err(|_| ScoreParseError::NoNumber(text.to_string()))?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else if value > 1.0 && value <= 1.0 + CLAMP_BAND {
        log::warn!("clamping score {value} to 1.0");
        Ok(1.0)
    } else if (-CLAMP_BAND..0.0).contains(&value) {
        log::warn!("clamping score {value} to 0.0");
        Ok(0.0)
    } else {
        Err(ScoreParseError::OutOfRange(value))
    }
}

/// First `-?(\d+(\.\d*)?|\.\d+)` in `text`.
fn first_decimal(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let n = bytes.len();
    let digit = |i: usize| i < n && bytes[i].is_ascii_digit();
    let mut i = 0;
    while i < n {
        let start = i;
        let mut j = i;
        if bytes[j] == b'-' {
            j += 1;
        }
        let int_start = j;
        while digit(j) {
            j += 1;
        }
        let has_int = j > int_start;
        if j < n && bytes[j] == b'.' && (has_int || digit(j + 1)) {
            j += 1;
            while digit(j) {
                j += 1;
            }
        }
        if has_int || j > int_start + 1 {
            // Drop a trailing '.' ("1." parses, but keep the literal tidy).
            let end = if bytes[j - 1] == b'.' { j - 1 } else { j };
            return Some(&text[start..end]);
        }
        i += 1;
    }
    None
}
