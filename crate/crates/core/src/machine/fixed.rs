//! Fixed-point register formats.
//!
//! LINEAR values are unsigned 16-bit fractions (`raw / 65535`), anchored so the
//! largest component of a normalized vector is 65535. LOG values are signed
//! Q8.8 (`raw / 256`, range `[-128, 127.996]`), anchored so the largest
//! component is 0. Registers hold raw values in `i64` so that intermediate
//! results (reduction sums) may exceed 16 bits before normalization.

use thiserror::Error;

pub const FULL_SCALE: i64 = 65_535;
pub const LOG_ONE: i64 = 256;
pub const LOG_MIN: i64 = -32_768;
pub const LOG_MAX: i64 = 32_767;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NumMode {
    Linear,
    Log,
}

impl NumMode {
    /// The full-scale anchor every normalized vector contains.
    pub fn anchor(self) -> i64 {
        match self {
            NumMode::Linear => FULL_SCALE,
            NumMode::Log => 0,
        }
    }

    /// The "impossible" value: 0 in LINEAR, −128 in LOG.
    pub fn floor(self) -> i64 {
        match self {
            NumMode::Linear => 0,
            NumMode::Log => LOG_MIN,
        }
    }

    pub fn lsb(self) -> f64 {
        match self {
            NumMode::Linear => 1.0 / FULL_SCALE as f64,
            NumMode::Log => 1.0 / LOG_ONE as f64,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedError {
    #[error("cannot quantize an all-zero LINEAR vector")]
    AllZero,
    #[error("cannot quantize negative or non-finite LINEAR value {0}")]
    Negative(f64),
    #[error("cannot quantize non-finite LOG value {0}")]
    NonFinite(f64),
}

/// A fixed-point vector tagged with its format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedVector {
    pub mode: NumMode,
    pub raw: Vec<i64>,
}

/// Scales so the max maps to full scale (LINEAR) or to 0 (LOG), rounding to nearest even.
pub fn quantize(v: &[f64], mode: NumMode) -> Result<FixedVector, FixedError> {
    let raw = match mode {
        NumMode::Linear => {
            if let Some(&bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(FixedError::Negative(bad));
            }
            let max = v.iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(FixedError::AllZero);
            }
            v.iter()
                .map(|&x| (x / max * FULL_SCALE as f64).round_ties_even() as i64)
                .collect()
        }
        NumMode::Log => {
            if let Some(&bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(FixedError::NonFinite(bad));
            }
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            v.iter()
                .map(|&x| (((x - max) * LOG_ONE as f64).round_ties_even() as i64).clamp(LOG_MIN, 0))
                .collect()
        }
    };
    Ok(FixedVector { mode, raw })
}

/// Quantizes a log-domain vector where `-inf` marks impossible entries.
pub fn quantize_log_lenient(v: &[f64]) -> Vec<i64> {
    let max = v
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0; v.len()];
    }
    v.iter()
        .map(|&x| {
            if x.is_finite() {
                (((x - max) * LOG_ONE as f64).round_ties_even() as i64).clamp(LOG_MIN, 0)
            } else {
                LOG_MIN
            }
        })
        .collect()
}

pub fn dequantize(v: &FixedVector) -> Vec<f64> {
    match v.mode {
        NumMode::Linear => v
            .raw
            .iter()
            .map(|&x| x as f64 / FULL_SCALE as f64)
            .collect(),
        NumMode::Log => v.raw.iter().map(|&x| x as f64 / LOG_ONE as f64).collect(),
    }
}

/// `round(num / den)` with ties to even.
pub fn div_round_even(num: u128, den: u128) -> u128 {
    let q = num / den;
    let r = num % den;
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

pub fn sat_log(x: i64) -> i64 {
    x.clamp(LOG_MIN, LOG_MAX)
}

/// LINEAR product of two 16-bit fractions.
pub fn mul_linear(a: i64, b: i64) -> i64 {
    div_round_even(a.max(0) as u128 * b.max(0) as u128, FULL_SCALE as u128) as i64
}

/// Re-anchors a vector in place. Returns `false` when the vector carried no
/// information (all zero in LINEAR), in which case it becomes uniform full scale.
pub fn normalize(mode: NumMode, v: &mut [i64]) -> bool {
    let max = v.iter().copied().max().unwrap_or(0);
    match mode {
        NumMode::Linear => {
            if max <= 0 {
                v.iter_mut().for_each(|x| *x = FULL_SCALE);
                return false;
            }
            for x in v.iter_mut() {
                *x = div_round_even((*x).max(0) as u128 * FULL_SCALE as u128, max as u128) as i64;
            }
        }
        NumMode::Log => {
            for x in v.iter_mut() {
                *x = (*x - max).clamp(LOG_MIN, 0);
            }
        }
    }
    true
}

/// One-hot vector at `index`: anchor there, floor elsewhere.
pub fn one_hot(mode: NumMode, len: usize, index: usize) -> Vec<i64> {
    (0..len)
        .map(|i| {
            if i == index {
                mode.anchor()
            } else {
                mode.floor()
            }
        })
        .collect()
}

/// L∞ distance in LSBs.
pub fn linf_lsb(a: &[i64], b: &[i64]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .max()
        .unwrap_or(0)
}
