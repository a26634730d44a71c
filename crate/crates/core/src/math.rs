//! Float helpers that `core` does not provide.

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Distance from `x` to the nearest integer.
#[inline]
pub(crate) fn frac_dist(x: f64) -> f64 {
    (x - round(x)).abs()
}

#[inline]
pub(crate) fn log2(x: f64) -> f64 {
    libm::log2(x)
}
