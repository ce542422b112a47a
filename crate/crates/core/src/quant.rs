//! Signed fixed-point (`Qi.f`) weight quantization.
//!
//! A `Qi.f` number has one sign bit, `i` integer bits and `f` fractional bits
//! in two's complement, so it covers `[-2^i, 2^i - 2^-f]` on a grid of step
//! `2^-f`. Values are held as scaled integers (`raw * 2^-f`), which makes grid
//! membership a property of the type rather than something to check.
//!
//! The default rounding is truncation: the low-order bits are dropped, which
//! on the scaled integer is `floor` (toward negative infinity). Inputs outside
//! the range saturate at the nearest bound.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plasticity::SynapseMatrix;
use crate::scalar::Scalar;

/// Widest supported total width, sign bit included.
pub const MAX_TOTAL_BITS: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantError {
    #[error("fixed-point format needs at least one fractional bit (got Q{integer_bits}.0)")]
    NoFractionalBits { integer_bits: u32 },
    #[error("Q{integer_bits}.{fractional_bits} is {total} bits wide; at most {MAX_TOTAL_BITS} are supported")]
    TooWide {
        integer_bits: u32,
        fractional_bits: u32,
        total: u32,
    },
    #[error("cannot parse weight precision {0:?}: expected \"Qi.f\" (e.g. \"Q0.3\") or \"fp32\"")]
    Parse(String),
    #[error("unknown rounding mode {0:?}: expected \"truncate\" or \"nearest\"")]
    Rounding(String),
}

/// The `Qi.f` layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointFormat {
    integer_bits: u32,
    fractional_bits: u32,
}

impl FixedPointFormat {
    pub fn new(integer_bits: u32, fractional_bits: u32) -> Result<Self, QuantError> {
        if fractional_bits == 0 {
            return Err(QuantError::NoFractionalBits { integer_bits });
        }
        let total = 1 + integer_bits + fractional_bits;
        if total > MAX_TOTAL_BITS {
            return Err(QuantError::TooWide {
                integer_bits,
                fractional_bits,
                total,
            });
        }
        Ok(Self {
            integer_bits,
            fractional_bits,
        })
    }

    pub fn integer_bits(&self) -> u32 {
        self.integer_bits
    }

    pub fn fractional_bits(&self) -> u32 {
        self.fractional_bits
    }

    /// Sign + integer + fractional bits.
    pub fn total_bits(&self) -> u32 {
        1 + self.integer_bits + self.fractional_bits
    }

    /// `2^f`, the factor between a real value and its raw integer.
    pub fn scale(&self) -> f64 {
        (self.fractional_bits as f64).exp2()
    }

    /// Grid step `2^-f`.
    pub fn epsilon(&self) -> f64 {
        (-(self.fractional_bits as f64)).exp2()
    }

    pub fn raw_min(&self) -> i64 {
        -(1i64 << (self.integer_bits + self.fractional_bits))
    }

    pub fn raw_max(&self) -> i64 {
        (1i64 << (self.integer_bits + self.fractional_bits)) - 1
    }

    pub fn min_value(&self) -> f64 {
        self.raw_min() as f64 * self.epsilon()
    }

    pub fn max_value(&self) -> f64 {
        self.raw_max() as f64 * self.epsilon()
    }

    /// Number of significant bits a raw value can need; used to check that a
    /// scalar type stores every grid point exactly.
    pub(crate) fn magnitude_bits(&self) -> u32 {
        self.integer_bits + self.fractional_bits
    }
}

impl fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.integer_bits, self.fractional_bits)
    }
}

impl FromStr for FixedPointFormat {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || QuantError::Parse(s.to_string());
        let body = s.trim().strip_prefix(['Q', 'q']).ok_or_else(bad)?;
        let (i, f) = body.split_once('.').ok_or_else(bad)?;
        let i: u32 = i.parse().map_err(|_| bad())?;
        let f: u32 = f.parse().map_err(|_| bad())?;
        FixedPointFormat::new(i, f)
    }
}

/// Build a format from its integer and fractional bit counts.
pub fn make_format(integer_bits: u32, fractional_bits: u32) -> Result<FixedPointFormat, QuantError> {
    FixedPointFormat::new(integer_bits, fractional_bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMode {
    /// Drop the low-order bits (floor on the scaled integer).
    #[default]
    Truncate,
    /// Round to the nearest grid point, ties away from zero.
    Nearest,
}

impl FromStr for RoundingMode {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truncate" | "truncation" | "floor" => Ok(Self::Truncate),
            "nearest" | "round" => Ok(Self::Nearest),
            _ => Err(QuantError::Rounding(s.to_string())),
        }
    }
}

/// A real number lying on a format's grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedValue {
    raw: i64,
    format: FixedPointFormat,
}

impl QuantizedValue {
    /// Wraps a raw scaled integer, saturating it into the format's range.
    pub fn from_raw(raw: i64, format: FixedPointFormat) -> Self {
        Self {
            raw: raw.clamp(format.raw_min(), format.raw_max()),
            format,
        }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FixedPointFormat {
        self.format
    }

    pub fn value(&self) -> f64 {
        self.raw as f64 * self.format.epsilon()
    }

    pub fn to_scalar<T: Scalar>(&self) -> T {
        T::from_f64_lossy(self.value())
    }
}

#[inline]
fn raw_of(x: f64, format: FixedPointFormat, mode: RoundingMode) -> i64 {
    let scaled = x * format.scale();
    let snapped = match mode {
        RoundingMode::Truncate => scaled.floor(),
        RoundingMode::Nearest => scaled.round(),
    };
    snapped.clamp(format.raw_min() as f64, format.raw_max() as f64) as i64
}

/// Truncating quantization `clamp(floor(x * 2^f) / 2^f, -2^i, 2^i - 2^-f)`.
///
/// Panics if `x` is not finite.
pub fn quantize<T: Scalar>(x: T, format: FixedPointFormat) -> QuantizedValue {
    quantize_with(x, format, RoundingMode::Truncate)
}

pub fn quantize_with<T: Scalar>(x: T, format: FixedPointFormat, mode: RoundingMode) -> QuantizedValue {
    let x = x.as_f64();
    assert!(x.is_finite(), "cannot quantize non-finite value {x}");
    QuantizedValue {
        raw: raw_of(x, format, mode),
        format,
    }
}

/// Storage precision of a weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightPrecision {
    /// Native reals; stands in for the unquantized 32-bit reference.
    Full,
    Fixed {
        format: FixedPointFormat,
        rounding: RoundingMode,
    },
}

impl WeightPrecision {
    pub fn truncating(format: FixedPointFormat) -> Self {
        Self::Fixed {
            format,
            rounding: RoundingMode::Truncate,
        }
    }

    /// Bits charged per stored weight. Full precision is accounted as 32 bits.
    pub fn bits_per_weight(&self) -> u32 {
        match self {
            Self::Full => 32,
            Self::Fixed { format, .. } => format.total_bits(),
        }
    }

    pub fn format(&self) -> Option<FixedPointFormat> {
        match self {
            Self::Full => None,
            Self::Fixed { format, .. } => Some(*format),
        }
    }

    /// Maps a real onto the storage grid (identity at full precision).
    #[inline]
    pub fn snap<T: Scalar>(&self, x: T) -> T {
        match *self {
            Self::Full => x,
            Self::Fixed { format, rounding } => {
                let x = x.as_f64();
                debug_assert!(x.is_finite());
                T::from_f64_lossy(raw_of(x, format, rounding) as f64 * format.epsilon())
            }
        }
    }

    /// The scaled integer a stored weight corresponds to; `None` at full precision.
    pub fn raw_of<T: Scalar>(&self, x: T) -> Option<i64> {
        self.format().map(|f| raw_of(x.as_f64(), f, RoundingMode::Truncate))
    }

    /// Largest storable value not above `w_max`.
    pub fn ceiling<T: Scalar>(&self, w_max: T) -> T {
        match self.format() {
            None => w_max,
            Some(f) => {
                let capped = w_max.as_f64().min(f.max_value());
                T::from_f64_lossy(raw_of(capped, f, RoundingMode::Truncate) as f64 * f.epsilon())
            }
        }
    }
}

impl fmt::Display for WeightPrecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => write!(f, "fp32"),
            Self::Fixed { format, .. } => write!(f, "{format}"),
        }
    }
}

impl FromStr for WeightPrecision {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fp32" | "full" | "f32" | "32bit" | "none" => Ok(Self::Full),
            _ => s.parse().map(Self::truncating),
        }
    }
}

/// Snaps every weight of `syn` onto `format`'s grid. Traces and the remaining
/// synapse state are carried over untouched.
pub fn quantize_weights<T: Scalar>(syn: &SynapseMatrix<T>, format: FixedPointFormat) -> SynapseMatrix<T> {
    let precision = WeightPrecision::truncating(format);
    let mut out = syn.clone();
    for w in out.weights_mut() {
        *w = precision.snap(*w);
    }
    out.set_precision_unchecked(precision);
    out
}
