//! Finite-dimensional smooth-normed spaces: ℓ^r(d) with the functional
//! `φ(x) = |x|_r^q`, its first two derivatives, and sampled estimates of the
//! growth constants of `φ'`, `φ''` and of the martingale-type constant.

use crate::error::{domain, Result};
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// An element of the space.
pub type Point = DVector<f64>;

/// Fixed seed for the internal sampling of sphere points.
const SPHERE_SEED: u64 = 0x5eed_5a3c_e000_0001;

/// ℓ^r norm on `d` coordinates together with the exponents `q` (smoothness
/// power of `φ`) and `p` (martingale type).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothSpace {
    pub d: usize,
    pub r: f64,
    pub q: f64,
    pub p: f64,
}

fn int_exponent(e: f64) -> Option<i32> {
    (e.fract() == 0.0 && e.abs() <= 64.0).then_some(e as i32)
}

impl SmoothSpace {
    pub fn new(d: usize, r: f64, q: f64, p: f64) -> Result<Self> {
        if d == 0 {
            return domain("dimension must be at least 1");
        }
        if !(r.is_finite() && r >= 2.0) {
            return domain(format!("norm exponent r must be finite and >= 2, got {r}"));
        }
        if !(q.is_finite() && q >= 2.0) {
            return domain(format!("smoothness power q must be >= 2, got {q}"));
        }
        if !(p > 1.0 && p <= 2.0) {
            return domain(format!("type parameter p must lie in (1, 2], got {p}"));
        }
        if q < p {
            return domain(format!("need q >= p, got q={q}, p={p}"));
        }
        Ok(Self { d, r, q, p })
    }

    /// Euclidean space `ℓ²(d)` with `φ = |x|²` and `p = 2`.
    pub fn hilbert(d: usize) -> Self {
        Self { d, r: 2.0, q: 2.0, p: 2.0 }
    }

    pub fn is_hilbert(&self) -> bool {
        self.r == 2.0
    }

    /// Conjugate exponent `r' = r / (r - 1)`.
    pub fn dual_exponent(&self) -> f64 {
        self.r / (self.r - 1.0)
    }

    pub fn zero(&self) -> Point {
        Point::zeros(self.d)
    }

    pub fn check_dim(&self, x: &Point) -> Result<()> {
        if x.len() != self.d {
            return domain(format!("point has dimension {}, space has {}", x.len(), self.d));
        }
        Ok(())
    }

    /// `Σ |x_i|^r`, the r-th power of the norm.
    #[inline]
    pub fn sum_pow(&self, x: &[f64]) -> f64 {
        if self.r == 2.0 {
            x.iter().map(|v| v * v).sum()
        } else if let Some(k) = int_exponent(self.r) {
            x.iter().map(|v| v.abs().powi(k)).sum()
        } else {
            x.iter().map(|v| v.abs().powf(self.r)).sum()
        }
    }

    /// Converts `Σ|x_i|^r` into the norm.
    #[inline]
    pub fn root(&self, s: f64) -> f64 {
        if self.r == 2.0 {
            s.sqrt()
        } else {
            s.powf(1.0 / self.r)
        }
    }

    /// Unchecked norm on a coordinate slice.
    #[inline]
    pub fn norm_of(&self, x: &[f64]) -> f64 {
        self.root(self.sum_pow(x))
    }

    /// `|x|_r`.
    pub fn norm(&self, x: &Point) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.norm_of(x.as_slice()))
    }

    /// Raises a nonnegative norm value to the power `q`.
    #[inline]
    pub fn pow_q(&self, n: f64) -> f64 {
        match int_exponent(self.q) {
            Some(k) => n.powi(k),
            None => n.powf(self.q),
        }
    }

    /// Unchecked `φ` on a coordinate slice.
    #[inline]
    pub fn phi_of(&self, x: &[f64]) -> f64 {
        let s = self.sum_pow(x);
        if self.q == self.r {
            s
        } else if self.q == 2.0 * self.r {
            s * s
        } else {
            self.pow_q(self.root(s))
        }
    }

    /// `φ(x) = |x|^q`.
    pub fn phi(&self, x: &Point) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.phi_of(x.as_slice()))
    }

    /// Coefficients `c` with `φ'(x)(h) = Σ c_i h_i`.
    pub fn gradient_covector(&self, x: &[f64]) -> Point {
        let n = self.norm_of(x);
        if n == 0.0 {
            return Point::zeros(x.len());
        }
        let scale = self.q * n.powf(self.q - self.r);
        Point::from_iterator(
            x.len(),
            x.iter()
                .map(|v| scale * v.abs().powf(self.r - 1.0) * v.signum()),
        )
    }

    /// Unchecked `φ'(x)(h)`.
    pub fn phi_grad_of(&self, x: &[f64], h: &[f64]) -> f64 {
        let n = self.norm_of(x);
        if n == 0.0 {
            return 0.0;
        }
        let rm1 = self.r - 1.0;
        let dot: f64 = if self.r == 2.0 {
            x.iter().zip(h).map(|(a, b)| a * b).sum()
        } else {
            x.iter()
                .zip(h)
                .map(|(a, b)| a.abs().powf(rm1) * a.signum() * b)
                .sum()
        };
        let scale = if self.q == self.r {
            self.q
        } else {
            self.q * n.powf(self.q - self.r)
        };
        scale * dot
    }

    /// Directional derivative `φ'(x)(h)`.
    pub fn phi_grad(&self, x: &Point, h: &Point) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(h)?;
        Ok(self.phi_grad_of(x.as_slice(), h.as_slice()))
    }

    /// Matrix of the bilinear form `φ''(x)`.
    pub fn hessian_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let n = self.norm_of(x);
        if n == 0.0 {
            return if self.q == 2.0 && self.r == 2.0 {
                DMatrix::identity(d, d) * 2.0
            } else {
                DMatrix::zeros(d, d)
            };
        }
        let (q, r) = (self.q, self.r);
        let s = Point::from_iterator(d, x.iter().map(|v| v.abs().powf(r - 1.0) * v.signum()));
        let outer = q * (q - r) * n.powf(q - 2.0 * r);
        let diag = q * (r - 1.0) * n.powf(q - r);
        let mut h = &s * s.transpose() * outer;
        for i in 0..d {
            h[(i, i)] += diag * x[i].abs().powf(r - 2.0);
        }
        h
    }

    /// Unchecked `φ''(x)(h, k)`.
    pub fn phi_hess_of(&self, x: &[f64], h: &[f64], k: &[f64]) -> f64 {
        let n = self.norm_of(x);
        if n == 0.0 {
            return if self.q == 2.0 && self.r == 2.0 {
                2.0 * h.iter().zip(k).map(|(a, b)| a * b).sum::<f64>()
            } else {
                0.0
            };
        }
        let (q, r) = (self.q, self.r);
        let mut sh = 0.0;
        let mut sk = 0.0;
        let mut dk = 0.0;
        for i in 0..x.len() {
            let a = x[i].abs();
            let s = a.powf(r - 1.0) * x[i].signum();
            sh += s * h[i];
            sk += s * k[i];
            dk += a.powf(r - 2.0) * h[i] * k[i];
        }
        let outer = if q == r { 0.0 } else { q * (q - r) * n.powf(q - 2.0 * r) * sh * sk };
        outer + q * (r - 1.0) * n.powf(q - r) * dk
    }

    /// `φ''(x)(h, k)`.
    pub fn phi_hess(&self, x: &Point, h: &Point, k: &Point) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(h)?;
        self.check_dim(k)?;
        Ok(self.phi_hess_of(x.as_slice(), h.as_slice(), k.as_slice()))
    }

    /// ℓ^{r'} norm of a covector.
    pub fn dual_norm(&self, c: &[f64]) -> f64 {
        let rp = self.dual_exponent();
        if self.r == 2.0 {
            return c.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        c.iter().map(|v| v.abs().powf(rp)).sum::<f64>().powf(1.0 / rp)
    }

    /// Norm of a symmetric matrix as a map `ℓ^r -> ℓ^{r'}`.
    ///
    /// Exact (spectral radius) for `r = 2`; otherwise the best value found by
    /// a nonlinear power iteration started from the coordinate axes and a few
    /// seeded directions, which is a lower bound.
    pub fn operator_norm(&self, h: &DMatrix<f64>) -> f64 {
        let d = h.nrows();
        if self.r == 2.0 {
            let eig = h.clone().symmetric_eigen();
            return eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let rp = self.dual_exponent();
        let mut starts: Vec<Point> = (0..d)
            .map(|i| {
                let mut e = Point::zeros(d);
                e[i] = 1.0;
                e
            })
            .collect();
        starts.push(Point::from_element(d, 1.0));
        let mut rng = rng::seeded(SPHERE_SEED ^ 0xabcdef);
        for _ in 0..4 {
            starts.push(Point::from_iterator(d, (0..d).map(|_| rng.sample(StandardNormal))));
        }
        let mut best = 0.0f64;
        for mut v in starts {
            let n = self.norm_of(v.as_slice());
            if n == 0.0 {
                continue;
            }
            v /= n;
            for _ in 0..50 {
                let y = h * &v;
                let yn = self.dual_norm(y.as_slice());
                best = best.max(yn);
                if yn == 0.0 {
                    break;
                }
                // duality map of ℓ^{r'}: the unit ℓ^r vector attaining <y, v> = |y|_{r'}
                let next = Point::from_iterator(
                    d,
                    y.iter().map(|c| c.signum() * (c.abs() / yn).powf(rp - 1.0)),
                );
                let nn = self.norm_of(next.as_slice());
                if nn == 0.0 {
                    break;
                }
                v = next / nn;
            }
        }
        best
    }

    /// Draws `n` seeded points on the unit sphere of the norm.
    pub fn sphere_samples(&self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = rng::seeded(seed);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = Point::from_iterator(self.d, (0..self.d).map(|_| rng.sample(StandardNormal)));
            let nx = self.norm_of(x.as_slice());
            if nx > 0.0 {
                out.push(x / nx);
            }
        }
        out
    }
}

/// Sampled `(k1, k2)` with `|φ'(x)| <= k1 |x|^{q-1}` and
/// `|φ''(x)| <= k2 |x|^{q-2}` on every sampled point.
pub fn estimate_smoothness_constants(sp: &SmoothSpace, n_samples: usize) -> Result<(f64, f64)> {
    if n_samples < 1000 {
        return domain(format!("need at least 1000 samples, got {n_samples}"));
    }
    let mut points: Vec<Point> = (0..sp.d)
        .map(|i| {
            let mut e = sp.zero();
            e[i] = 1.0;
            e
        })
        .collect();
    points.push(Point::from_element(sp.d, 1.0));
    let mut rng = rng::seeded(SPHERE_SEED);
    while points.len() < n_samples {
        let scale = (rng.random::<f64>() * 4.0 - 2.0).exp();
        let x = Point::from_iterator(
            sp.d,
            (0..sp.d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)),
        );
        points.push(x);
    }
    let mut k1 = 0.0f64;
    let mut k2 = 0.0f64;
    for x in &points {
        let n = sp.norm_of(x.as_slice());
        if n == 0.0 {
            continue;
        }
        let g = sp.gradient_covector(x.as_slice());
        k1 = k1.max(sp.dual_norm(g.as_slice()) / n.powf(sp.q - 1.0));
        let h = sp.hessian_matrix(x.as_slice());
        k2 = k2.max(sp.operator_norm(&h) / n.powf(sp.q - 2.0));
    }
    Ok((k1, k2))
}

/// Independent mean-zero increments `ΔM_k` for `paths` discrete martingales
/// of `steps` steps each.
#[derive(Debug, Clone)]
pub struct MartingaleEnsemble {
    d: usize,
    paths: usize,
    steps: usize,
    increments: Vec<f64>,
    law: String,
}

impl MartingaleEnsemble {
    /// `increments` is laid out path-major, then step, then coordinate.
    pub fn from_increments(
        d: usize,
        paths: usize,
        steps: usize,
        increments: Vec<f64>,
        law: impl Into<String>,
    ) -> Result<Self> {
        if increments.len() != d * paths * steps {
            return domain(format!(
                "expected {} increment values, got {}",
                d * paths * steps,
                increments.len()
            ));
        }
        if increments.iter().any(|v| !v.is_finite()) {
            return domain("increments must be finite");
        }
        Ok(Self { d, paths, steps, increments, law: law.into() })
    }

    /// Independent symmetric ±1 coordinates.
    pub fn rademacher(d: usize, paths: usize, steps: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let increments = (0..d * paths * steps)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Self { d, paths, steps, increments, law: "rademacher".into() }
    }

    /// Independent Gaussian coordinates with per-step scales `1 + k/steps`.
    pub fn gaussian(d: usize, paths: usize, steps: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut increments = Vec::with_capacity(d * paths * steps);
        for _ in 0..paths {
            for k in 0..steps {
                let s = 1.0 + k as f64 / steps as f64;
                for _ in 0..d {
                    increments.push(s * rng.sample::<f64, _>(StandardNormal));
                }
            }
        }
        Self { d, paths, steps, increments, law: "gaussian".into() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn law(&self) -> &str {
        &self.law
    }

    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * self.steps + step) * self.d;
        &self.increments[at..at + self.d]
    }

    /// Every per-step, per-coordinate sample mean lies within four standard
    /// errors of zero.
    pub fn mean_zero_check(&self) -> bool {
        let m = self.paths as f64;
        (0..self.steps).all(|k| {
            (0..self.d).all(|c| {
                let vals: Vec<f64> = (0..self.paths).map(|i| self.increment(i, k)[c]).collect();
                let mean = vals.iter().sum::<f64>() / m;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
                mean.abs() <= 4.0 * (var / m).sqrt() + f64::EPSILON
            })
        })
    }
}

/// Empirical `max_n E|M_n|^p / Σ_k E|ΔM_k|^p`, a lower bound for `K_p`.
pub fn estimate_mtype_constant(sp: &SmoothSpace, p: f64, ens: &MartingaleEnsemble) -> Result<f64> {
    if ens.dim() != sp.d {
        return domain(format!("ensemble dimension {} vs space {}", ens.dim(), sp.d));
    }
    if !(p > 0.0) {
        return domain(format!("exponent must be positive, got {p}"));
    }
    let m = ens.paths() as f64;
    let mut partial = vec![0.0; ens.steps()];
    let mut denom = 0.0;
    let mut state = vec![0.0; sp.d];
    for i in 0..ens.paths() {
        state.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..ens.steps() {
            let inc = ens.increment(i, k);
            denom += sp.norm_of(inc).powf(p);
            for (s, v) in state.iter_mut().zip(inc) {
                *s += v;
            }
            partial[k] += sp.norm_of(&state).powf(p);
        }
    }
    if denom == 0.0 {
        return Ok(0.0);
    }
    let num = partial.iter().fold(0.0f64, |a, b| a.max(*b)) / m;
    Ok(num / (denom / m))
}
