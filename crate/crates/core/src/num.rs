//! Small float helpers that `core` does not provide.

pub(crate) fn is_whole(x: f64) -> bool {
    x.is_finite() && libm::trunc(x) == x
}

pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}
