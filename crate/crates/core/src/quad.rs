//! Composite Simpson quadrature used for compensators and deterministic
//! time integrals.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Default number of Simpson panels across the horizon.
pub const DEFAULT_PANELS: usize = 4096;

/// Step control for composite quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Target panel width; the actual width is `(b - a) / n` with `n` even.
    pub h: f64,
}

impl QuadConfig {
    pub fn new(h: f64) -> Self {
        Self { h }
    }

    /// `h = horizon / 4096`.
    pub fn for_horizon(horizon: f64) -> Self {
        Self { h: horizon / DEFAULT_PANELS as f64 }
    }

    /// Number of (even) panels used on `[a, b]`.
    pub fn panels(&self, a: f64, b: f64) -> usize {
        let len = (b - a).abs();
        if len == 0.0 || !(self.h > 0.0) {
            return 2;
        }
        let n = (len / self.h).ceil().max(2.0) as usize;
        n + (n & 1)
    }

    pub fn halved(&self) -> Self {
        Self { h: self.h / 2.0 }
    }
}

/// Composite Simpson rule with `n` panels (`n` rounded up to even).
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = n.max(2);
    let n = n + (n & 1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Vector-valued composite Simpson rule.
pub fn simpson_vec<F: FnMut(f64) -> DVector<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    n: usize,
    dim: usize,
) -> DVector<f64> {
    if a == b {
        return DVector::zeros(dim);
    }
    let n = n.max(2);
    let n = n + (n & 1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.axpy(w, &f(a + i as f64 * h), 1.0);
    }
    acc * (h / 3.0)
}

/// Simpson integral of `f` over `[a, b]` with the step taken from `cfg`.
pub fn integrate(cfg: &QuadConfig, a: f64, b: f64, f: impl FnMut(f64) -> f64) -> f64 {
    simpson(f, a, b, cfg.panels(a, b))
}
