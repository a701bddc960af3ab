//! Thin wrappers over `libm` so the crate builds without `std`.
//!
//! All float math in this crate goes through these functions; results are
//! bit-identical across platforms for a given `libm` version, which the
//! determinism guarantees rely on.

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn asin(x: f64) -> f64 {
    libm::asin(x)
}

#[inline]
pub fn acos(x: f64) -> f64 {
    libm::acos(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub const PI: f64 = core::f64::consts::PI;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_definition_on_both_branches() {
        for &x in &[-30.0, -2.0, -1e-9, 0.0, 1e-9, 2.0, 30.0] {
            let direct = 1.0 / (1.0 + (-x as f64).exp());
            assert!((sigmoid(x) - direct).abs() < 1e-15, "x={x}");
        }
    }

    #[test]
    fn libm_agrees_with_std_to_rounding() {
        for &x in &[0.1, 0.5, 1.0, 2.5, 10.0] {
            assert!((exp(x) - f64::exp(x)).abs() <= f64::exp(x) * 1e-15);
            assert!((tanh(x) - f64::tanh(x)).abs() <= 1e-15);
            assert!((sqrt(x) - f64::sqrt(x)).abs() <= 1e-15);
        }
    }
}
