//! Float helpers routed through `libm` so the crate builds without `std`.
//!
//! Using one math backend everywhere also keeps results bit-identical
//! across platforms, which the determinism guarantees rely on.

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// Rounds half away from zero, like `f64::round` in `std`.
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}
