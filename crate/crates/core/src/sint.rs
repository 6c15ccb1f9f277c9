//! Pathwise stochastic integrals against `N` and `Ñ = N - ν ⊗ dt`.
//!
//! Integrands are deterministic in `(t, z)` ([`FieldIntegrand`]) or step
//! functions whose coefficients may read the path strictly before the left
//! end of their interval ([`StepIntegrand`]). The jump part of every integral
//! is an exact event sum; the compensator is exact when an antiderivative is
//! known and composite Simpson otherwise.

use crate::error::{domain, Error, Result};
use crate::prm::{self, Event, MarkSet, MarkSpace, PoissonPath};
use crate::quad::{self, QuadConfig};
use crate::space::{Point, SmoothSpace};
use nalgebra::DMatrix;
use std::fmt;
use std::sync::Arc;

type VecRule = Arc<dyn Fn(f64, usize) -> Point + Send + Sync>;
type ScalarFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;
type AdaptedFn = Arc<dyn Fn(&[Event]) -> Point + Send + Sync>;

#[derive(Clone)]
enum Rule {
    /// `f(t, z_k) = Σ_j coeffs[k][j] t^j`.
    Polynomial(Vec<Vec<Point>>),
    /// `f(t, z_k) = values[i][k]` for `t` in `(bp[i], bp[i+1]]`.
    Step { breakpoints: Vec<f64>, values: Vec<Vec<Point>> },
    Custom { eval: VecRule, antiderivative: Option<VecRule> },
}

/// Deterministic integrand `ξ(t, z)` with values in `R^dim`.
#[derive(Clone)]
pub struct FieldIntegrand {
    dim: usize,
    n_marks: usize,
    rule: Rule,
}

impl fmt::Debug for FieldIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.rule {
            Rule::Polynomial(c) => format!("polynomial(degree {})", c[0].len().saturating_sub(1)),
            Rule::Step { breakpoints, .. } => format!("step({} intervals)", breakpoints.len() - 1),
            Rule::Custom { antiderivative, .. } => {
                format!("custom(antiderivative: {})", antiderivative.is_some())
            }
        };
        f.debug_struct("FieldIntegrand")
            .field("dim", &self.dim)
            .field("n_marks", &self.n_marks)
            .field("rule", &kind)
            .finish()
    }
}

fn check_points(points: &[Point], dim: usize) -> Result<()> {
    for p in points {
        if p.len() != dim {
            return domain(format!("coefficient of dimension {} where {dim} expected", p.len()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return domain("coefficients must be finite");
        }
    }
    Ok(())
}

impl FieldIntegrand {
    /// `ξ(t, z_k) = values[k]`.
    pub fn constant(values: Vec<Point>) -> Result<Self> {
        Self::polynomial(values.into_iter().map(|v| vec![v]).collect())
    }

    /// `ξ(t, z_k) = Σ_j coeffs[k][j] t^j`.
    pub fn polynomial(coeffs: Vec<Vec<Point>>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| c.is_empty()) {
            return domain("polynomial integrand needs at least one coefficient per mark");
        }
        let dim = coeffs[0][0].len();
        let degree = coeffs.iter().map(|c| c.len()).max().unwrap_or(1);
        let mut padded = Vec::with_capacity(coeffs.len());
        for mut c in coeffs {
            check_points(&c, dim)?;
            c.resize(degree, Point::zeros(dim));
            padded.push(c);
        }
        Ok(Self { dim, n_marks: padded.len(), rule: Rule::Polynomial(padded) })
    }

    /// Piecewise constant in time: `values[i][k]` on `(bp[i], bp[i+1]]`, zero
    /// after the last breakpoint.
    pub fn step(breakpoints: Vec<f64>, values: Vec<Vec<Point>>) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints[0] != 0.0 {
            return domain("step breakpoints must start at 0 and contain an interval");
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("step breakpoints must be strictly increasing");
        }
        if values.len() != breakpoints.len() - 1 {
            return domain(format!(
                "{} interval value sets for {} intervals",
                values.len(),
                breakpoints.len() - 1
            ));
        }
        let n_marks = values[0].len();
        if n_marks == 0 || values.iter().any(|v| v.len() != n_marks) {
            return domain("every interval needs one value per mark");
        }
        let dim = values[0][0].len();
        for v in &values {
            check_points(v, dim)?;
        }
        Ok(Self { dim, n_marks, rule: Rule::Step { breakpoints, values } })
    }

    /// Arbitrary rule, optionally with its time antiderivative
    /// `F(t, z) = ∫_0^t ξ(s, z) ds`.
    pub fn custom(
        dim: usize,
        n_marks: usize,
        eval: impl Fn(f64, usize) -> Point + Send + Sync + 'static,
        antiderivative: Option<VecRule>,
    ) -> Self {
        Self { dim, n_marks, rule: Rule::Custom { eval: Arc::new(eval), antiderivative } }
    }

    /// `ξ(t, z_k) = base[k] + amplitude[k] sin(ω t)`, with exact antiderivative.
    pub fn sinusoidal(base: Vec<Point>, amplitude: Vec<Point>, omega: f64) -> Result<Self> {
        if base.is_empty() || base.len() != amplitude.len() {
            return domain("sinusoidal integrand needs matching base and amplitude per mark");
        }
        if !(omega.is_finite() && omega != 0.0) {
            return domain("sinusoidal frequency must be finite and nonzero");
        }
        let dim = base[0].len();
        check_points(&base, dim)?;
        check_points(&amplitude, dim)?;
        let n_marks = base.len();
        let (b1, a1) = (base.clone(), amplitude.clone());
        let eval = move |t: f64, k: usize| &b1[k] + &a1[k] * (omega * t).sin();
        let anti: VecRule =
            Arc::new(move |t: f64, k: usize| &base[k] * t + &amplitude[k] * ((1.0 - (omega * t).cos()) / omega));
        Ok(Self::custom(dim, n_marks, eval, Some(anti)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_marks(&self) -> usize {
        self.n_marks
    }

    /// Polynomial coefficients per mark, when the rule is polynomial in `t`.
    pub fn polynomial_coeffs(&self) -> Option<&[Vec<Point>]> {
        match &self.rule {
            Rule::Polynomial(c) => Some(c),
            _ => None,
        }
    }

    /// Whether the rule is constant in time between finitely many breakpoints.
    pub fn is_piecewise_constant(&self) -> bool {
        match &self.rule {
            Rule::Polynomial(c) => c[0].len() == 1,
            Rule::Step { .. } => true,
            Rule::Custom { .. } => false,
        }
    }

    pub fn has_antiderivative(&self) -> bool {
        !matches!(&self.rule, Rule::Custom { antiderivative: None, .. })
    }

    fn step_interval(breakpoints: &[f64], t: f64) -> usize {
        // (bp[i], bp[i+1]] contains t; t = 0 belongs to the first interval
        breakpoints[1..]
            .partition_point(|b| *b < t)
            .min(breakpoints.len() - 2)
    }

    /// `ξ(t, z_k)` written into `out`.
    #[inline]
    pub fn eval_into(&self, t: f64, k: usize, out: &mut [f64]) {
        match &self.rule {
            Rule::Polynomial(c) => {
                let coeffs = &c[k];
                out.copy_from_slice(coeffs[coeffs.len() - 1].as_slice());
                for j in (0..coeffs.len() - 1).rev() {
                    for (o, v) in out.iter_mut().zip(coeffs[j].iter()) {
                        *o = *o * t + v;
                    }
                }
            }
            Rule::Step { breakpoints, values } => {
                if t > breakpoints[breakpoints.len() - 1] {
                    out.fill(0.0);
                } else {
                    let i = Self::step_interval(breakpoints, t);
                    out.copy_from_slice(values[i][k].as_slice());
                }
            }
            Rule::Custom { eval, .. } => out.copy_from_slice(eval(t, k).as_slice()),
        }
    }

    /// `ξ(t, z_k)`.
    pub fn eval(&self, t: f64, k: usize) -> Point {
        let mut out = Point::zeros(self.dim);
        self.eval_into(t, k, out.as_mut_slice());
        out
    }

    /// `∫_0^t ξ(s, z_k) ds` when known in closed form.
    pub fn antiderivative(&self, t: f64, k: usize) -> Option<Point> {
        match &self.rule {
            Rule::Polynomial(c) => {
                let mut acc = Point::zeros(self.dim);
                let mut pow = t;
                for (j, cj) in c[k].iter().enumerate() {
                    acc.axpy(pow / (j + 1) as f64, cj, 1.0);
                    pow *= t;
                }
                Some(acc)
            }
            Rule::Step { breakpoints, values } => {
                let mut acc = Point::zeros(self.dim);
                for (i, w) in breakpoints.windows(2).enumerate() {
                    if t <= w[0] {
                        break;
                    }
                    acc.axpy(t.min(w[1]) - w[0], &values[i][k], 1.0);
                }
                Some(acc)
            }
            Rule::Custom { antiderivative, .. } => antiderivative.as_ref().map(|f| f(t, k)),
        }
    }

    /// `m(t) = Σ_k ν_k ξ(t, z_k)`.
    pub fn compensator_density(&self, ms: &MarkSpace, t: f64) -> Point {
        let mut acc = Point::zeros(self.dim);
        let mut buf = Point::zeros(self.dim);
        for (k, w) in ms.weights().iter().enumerate() {
            self.eval_into(t, k, buf.as_mut_slice());
            acc.axpy(*w, &buf, 1.0);
        }
        acc
    }

    /// `∫_a^b Σ_k ν_k ξ(s, z_k) ds`, exact when an antiderivative is known.
    pub fn compensator(&self, ms: &MarkSpace, a: f64, b: f64, quad: &QuadConfig) -> Point {
        if self.has_antiderivative() {
            let mut acc = Point::zeros(self.dim);
            for (k, w) in ms.weights().iter().enumerate() {
                let fb = self.antiderivative(b, k).expect("antiderivative available");
                let fa = self.antiderivative(a, k).expect("antiderivative available");
                acc.axpy(*w, &(fb - fa), 1.0);
            }
            acc
        } else {
            quad::simpson_vec(|s| self.compensator_density(ms, s), a, b, quad.panels(a, b), self.dim)
        }
    }

    /// `x ↦ M x` applied to every value; keeps the polynomial, step or
    /// antiderivative structure.
    pub fn map_linear(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != self.dim {
            return domain(format!("map has {} columns, integrand dimension {}", m.ncols(), self.dim));
        }
        let dim = m.nrows();
        let rule = match &self.rule {
            Rule::Polynomial(c) => {
                Rule::Polynomial(c.iter().map(|ck| ck.iter().map(|v| m * v).collect()).collect())
            }
            Rule::Step { breakpoints, values } => Rule::Step {
                breakpoints: breakpoints.clone(),
                values: values.iter().map(|vi| vi.iter().map(|v| m * v).collect()).collect(),
            },
            Rule::Custom { eval, antiderivative } => {
                let (e, m1) = (eval.clone(), m.clone());
                let anti = antiderivative.clone().map(|a| {
                    let m2 = m.clone();
                    Arc::new(move |t: f64, k: usize| &m2 * a(t, k)) as VecRule
                });
                Rule::Custom { eval: Arc::new(move |t, k| &m1 * e(t, k)), antiderivative: anti }
            }
        };
        Ok(Self { dim, n_marks: self.n_marks, rule })
    }

    /// `c ξ`.
    pub fn scaled(&self, c: f64) -> Self {
        let rule = match &self.rule {
            Rule::Polynomial(co) => {
                Rule::Polynomial(co.iter().map(|ck| ck.iter().map(|v| v * c).collect()).collect())
            }
            Rule::Step { breakpoints, values } => Rule::Step {
                breakpoints: breakpoints.clone(),
                values: values.iter().map(|vi| vi.iter().map(|v| v * c).collect()).collect(),
            },
            Rule::Custom { eval, antiderivative } => {
                let e = eval.clone();
                let anti = antiderivative.clone().map(|a| Arc::new(move |t: f64, k: usize| a(t, k) * c) as VecRule);
                Rule::Custom { eval: Arc::new(move |t, k| e(t, k) * c), antiderivative: anti }
            }
        };
        Self { dim: self.dim, n_marks: self.n_marks, rule }
    }

    /// `1_{(a,b]}(t) 1_B(z) ξ(t, z)`; the antiderivative, when present, stays exact.
    pub fn restricted(&self, a: f64, b: f64, set: &MarkSet) -> Self {
        let base = self.clone();
        let base2 = self.clone();
        let (s1, s2) = (set.clone(), set.clone());
        let dim = self.dim;
        let eval = move |t: f64, k: usize| {
            if t > a && t <= b && s1.contains(k) {
                base.eval(t, k)
            } else {
                Point::zeros(dim)
            }
        };
        let anti = self.has_antiderivative().then(|| {
            Arc::new(move |t: f64, k: usize| {
                if !s2.contains(k) {
                    return Point::zeros(dim);
                }
                let hi = t.clamp(a, b);
                let fa = base2.antiderivative(a, k).expect("antiderivative available");
                base2.antiderivative(hi, k).expect("antiderivative available") - fa
            }) as VecRule
        });
        Self::custom(dim, self.n_marks, eval, anti)
    }

    /// Scalar rule `(t, z) ↦ ‖ξ(t, z)‖^p`; exact antiderivative when `ξ` is
    /// piecewise constant in time.
    pub fn norm_power_rule(&self, sp: &SmoothSpace, p: f64) -> ScalarRule {
        let f1 = self.clone();
        let sp1 = *sp;
        let eval = move |t: f64, k: usize| sp1.norm_of(f1.eval(t, k).as_slice()).powf(p);
        match &self.rule {
            Rule::Polynomial(c) if c[0].len() == 1 => {
                let norms: Vec<f64> = c.iter().map(|ck| sp.norm_of(ck[0].as_slice()).powf(p)).collect();
                ScalarRule::new(eval).with_antiderivative(move |t, k| norms[k] * t)
            }
            Rule::Step { breakpoints, values } => {
                let bp = breakpoints.clone();
                let norms: Vec<Vec<f64>> = values
                    .iter()
                    .map(|vi| vi.iter().map(|v| sp.norm_of(v.as_slice()).powf(p)).collect())
                    .collect();
                ScalarRule::new(eval).with_antiderivative(move |t, k| {
                    bp.windows(2)
                        .enumerate()
                        .take_while(|(_, w)| t > w[0])
                        .map(|(i, w)| (t.min(w[1]) - w[0]) * norms[i][k])
                        .sum()
                })
            }
            _ => ScalarRule::new(eval),
        }
    }

    /// Pieces of `[a, b]` on which `m(s) = Σ_k ν_k ξ(s, z_k)` is a polynomial,
    /// with coefficients in powers of `s - start`. `None` for custom rules.
    pub fn density_pieces(&self, ms: &MarkSpace, a: f64, b: f64) -> Option<Vec<DensityPiece>> {
        match &self.rule {
            Rule::Polynomial(c) => {
                let deg = c[0].len();
                let mut m = vec![Point::zeros(self.dim); deg];
                for (ck, w) in c.iter().zip(ms.weights()) {
                    for (mj, cj) in m.iter_mut().zip(ck) {
                        mj.axpy(*w, cj, 1.0);
                    }
                }
                // re-centre: Σ_j m_j (a + σ)^j = Σ_i σ^i Σ_{j>=i} C(j,i) a^{j-i} m_j
                let mut centred = vec![Point::zeros(self.dim); deg];
                for (j, mj) in m.iter().enumerate() {
                    let mut binom = 1.0;
                    for i in 0..=j {
                        if i > 0 {
                            binom = binom * (j + 1 - i) as f64 / i as f64;
                        }
                        centred[i].axpy(binom * a.powi((j - i) as i32), mj, 1.0);
                    }
                }
                Some(vec![DensityPiece { start: a, end: b, coeffs: centred }])
            }
            Rule::Step { breakpoints, values } => {
                let mut out = Vec::new();
                for (i, w) in breakpoints.windows(2).enumerate() {
                    let (lo, hi) = (w[0].max(a), w[1].min(b));
                    if lo >= hi {
                        continue;
                    }
                    let mut m = Point::zeros(self.dim);
                    for (v, nu) in values[i].iter().zip(ms.weights()) {
                        m.axpy(*nu, v, 1.0);
                    }
                    out.push(DensityPiece { start: lo, end: hi, coeffs: vec![m] });
                }
                if b > *breakpoints.last().unwrap() {
                    let lo = a.max(*breakpoints.last().unwrap());
                    let mut m = Point::zeros(self.dim);
                    for (v, nu) in values.last().unwrap().iter().zip(ms.weights()) {
                        m.axpy(*nu, v, 1.0);
                    }
                    out.push(DensityPiece { start: lo, end: b, coeffs: vec![m] });
                }
                Some(out)
            }
            Rule::Custom { .. } => None,
        }
    }

    /// Checks `∫_0^T Σ_k ‖ξ(t, z_k)‖^p ν_k dt < ∞` by quadrature.
    pub fn check_integrable(
        &self,
        ms: &MarkSpace,
        sp: &SmoothSpace,
        horizon: f64,
        quad: &QuadConfig,
    ) -> Result<f64> {
        let v = ls_integral_nu(ms, &self.norm_power_rule(sp, sp.p), horizon, quad)?;
        if !v.is_finite() {
            return Err(Error::Numeric("integrand is not p-integrable".into()));
        }
        Ok(v)
    }
}

/// `m(s) = Σ_j coeffs[j] (s - start)^j` on `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPiece {
    pub start: f64,
    pub end: f64,
    pub coeffs: Vec<Point>,
}

impl DensityPiece {
    pub fn eval(&self, s: f64) -> Point {
        let x = s - self.start;
        let mut acc = self.coeffs[self.coeffs.len() - 1].clone();
        for c in self.coeffs[..self.coeffs.len() - 1].iter().rev() {
            acc *= x;
            acc += c;
        }
        acc
    }
}

/// A nonnegative scalar rule `g(t, z)`, optionally with `∫_0^t g(s, z) ds`.
#[derive(Clone)]
pub struct ScalarRule {
    eval: ScalarFn,
    antiderivative: Option<ScalarFn>,
}

impl ScalarRule {
    pub fn new(eval: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval), antiderivative: None }
    }

    pub fn with_antiderivative(mut self, f: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        self.antiderivative = Some(Arc::new(f));
        self
    }

    pub fn eval(&self, t: f64, k: usize) -> f64 {
        (self.eval)(t, k)
    }

    pub fn has_antiderivative(&self) -> bool {
        self.antiderivative.is_some()
    }

    /// `∫_0^t g(s, z_k) ds` when known in closed form.
    pub fn antiderivative(&self, t: f64, k: usize) -> Option<f64> {
        self.antiderivative.as_ref().map(|f| f(t, k))
    }
}

/// Coefficient of a step integrand on one cell.
#[derive(Clone)]
pub enum Coefficient {
    Fixed(Point),
    /// Computed from the events strictly before the left end of the interval.
    Adapted(AdaptedFn),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Fixed(p) => f.debug_tuple("Fixed").field(&p.as_slice()).finish(),
            Coefficient::Adapted(_) => f.write_str("Adapted(..)"),
        }
    }
}

/// `f = Σ_j Σ_k ξ^k_{j-1} 1_{(t_{j-1}, t_j]} 1_{A^k_{j-1}}`.
#[derive(Debug, Clone)]
pub struct StepIntegrand {
    dim: usize,
    breakpoints: Vec<f64>,
    cells: Vec<Vec<(MarkSet, Coefficient)>>,
}

impl StepIntegrand {
    pub fn new(
        dim: usize,
        breakpoints: Vec<f64>,
        cells: Vec<Vec<(MarkSet, Coefficient)>>,
    ) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints[0] != 0.0 {
            return domain("step breakpoints must start at 0 and contain an interval");
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("step breakpoints must be strictly increasing");
        }
        if cells.len() != breakpoints.len() - 1 {
            return domain("one cell list per interval is required");
        }
        for (j, interval) in cells.iter().enumerate() {
            for (a, (set_a, coef)) in interval.iter().enumerate() {
                if let Coefficient::Fixed(p) = coef {
                    check_points(std::slice::from_ref(p), dim)?;
                }
                for (set_b, _) in &interval[a + 1..] {
                    if !set_a.is_disjoint(set_b) {
                        return domain(format!("mark cells in interval {j} overlap"));
                    }
                }
            }
        }
        Ok(Self { dim, breakpoints, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cells(&self) -> &[Vec<(MarkSet, Coefficient)>] {
        &self.cells
    }

    fn coefficient(&self, coef: &Coefficient, path: &PoissonPath, left: f64) -> Result<Point> {
        let v = match coef {
            Coefficient::Fixed(p) => p.clone(),
            Coefficient::Adapted(f) => f(path.before(left)),
        };
        if v.len() != self.dim || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("step coefficient at t={left} is invalid")));
        }
        Ok(v)
    }

    /// Deterministic field obtained by evaluating every coefficient on `path`.
    pub fn realize(&self, path: &PoissonPath, n_marks: usize) -> Result<FieldIntegrand> {
        let mut values = Vec::with_capacity(self.cells.len());
        for (w, interval) in self.breakpoints.windows(2).zip(&self.cells) {
            let mut per_mark = vec![Point::zeros(self.dim); n_marks];
            for (set, coef) in interval {
                let v = self.coefficient(coef, path, w[0])?;
                for k in set.indices() {
                    per_mark[k] = v.clone();
                }
            }
            values.push(per_mark);
        }
        FieldIntegrand::step(self.breakpoints.clone(), values)
    }

    pub fn is_deterministic(&self) -> bool {
        self.cells.iter().flatten().all(|(_, c)| matches!(c, Coefficient::Fixed(_)))
    }

    /// Equivalent deterministic field, available when every coefficient is fixed.
    pub fn to_field(&self, n_marks: usize) -> Result<FieldIntegrand> {
        let mut values = Vec::with_capacity(self.cells.len());
        for interval in &self.cells {
            let mut per_mark = vec![Point::zeros(self.dim); n_marks];
            for (set, coef) in interval {
                let Coefficient::Fixed(p) = coef else {
                    return domain("path-dependent step coefficients have no deterministic field");
                };
                for k in set.indices() {
                    per_mark[k] = p.clone();
                }
            }
            values.push(per_mark);
        }
        FieldIntegrand::step(self.breakpoints.clone(), values)
    }
}

fn check_time(path: &PoissonPath, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= path.horizon()) {
        return domain(format!("time {t} outside [0, {}]", path.horizon()));
    }
    Ok(())
}

/// `I_t(f) = Σ_j Σ_k ξ^k_{j-1} Ñ((t_{j-1} ∧ t, t_j ∧ t] × A^k_{j-1})`.
pub fn integrate_step(ms: &MarkSpace, path: &PoissonPath, f: &StepIntegrand, t: f64) -> Result<Point> {
    check_time(path, t)?;
    let mut acc = Point::zeros(f.dim);
    for (w, interval) in f.breakpoints.windows(2).zip(&f.cells) {
        let (a, b) = (w[0].min(t), w[1].min(t));
        if a >= b {
            break;
        }
        if b > path.horizon() {
            return domain(format!("step breakpoint {b} beyond horizon {}", path.horizon()));
        }
        for (set, coef) in interval {
            let n = prm::compensated(ms, path, a, b, set)?;
            let v = f.coefficient(coef, path, w[0])?;
            acc.axpy(n, &v, 1.0);
        }
    }
    Ok(acc)
}

/// `Σ_{t_i ≤ t} f(t_i, z_i) - ∫_0^t Σ_k f(s, z_k) ν_k ds`.
pub fn integrate_field(
    ms: &MarkSpace,
    path: &PoissonPath,
    f: &FieldIntegrand,
    t: f64,
    quad: &QuadConfig,
) -> Result<Point> {
    check_time(path, t)?;
    let mut acc = jump_sum(path.up_to(t), f);
    acc -= f.compensator(ms, 0.0, t, quad);
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("stochastic integral at t={t} is not finite")));
    }
    Ok(acc)
}

/// `Σ_{a < t_i ≤ b, z_i ∈ B} f(t_i, z_i) - ∫_a^b Σ_{k ∈ B} f(s, z_k) ν_k ds`.
pub fn integrate_field_window(
    ms: &MarkSpace,
    path: &PoissonPath,
    f: &FieldIntegrand,
    a: f64,
    b: f64,
    set: &MarkSet,
    quad: &QuadConfig,
) -> Result<Point> {
    integrate_field(ms, path, &f.restricted(a, b, set), path.horizon(), quad)
}

fn jump_sum(events: &[Event], f: &FieldIntegrand) -> Point {
    let mut acc = Point::zeros(f.dim);
    let mut buf = Point::zeros(f.dim);
    for e in events {
        f.eval_into(e.time, e.mark, buf.as_mut_slice());
        acc += &buf;
    }
    acc
}

/// Jump of a càdlàg path at an event time.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub left: Point,
    pub right: Point,
}

/// Sampled càdlàg trajectory: right-continuous values on the grid merged
/// with the event times, plus the left limits at every jump.
#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    horizon: f64,
    times: Vec<f64>,
    values: Vec<Point>,
    jumps: Vec<Jump>,
}

impl CadlagPath {
    pub fn new(horizon: f64, times: Vec<f64>, values: Vec<Point>, jumps: Vec<Jump>) -> Result<Self> {
        if times.len() != values.len() {
            return domain("one value per sampled time is required");
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return domain("sampled times must be sorted");
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("càdlàg path has non-finite values".into()));
        }
        Ok(Self { horizon, times, values, jumps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Right-continuous value at the last sampled time `<= t`.
    pub fn value_at(&self, t: f64) -> Option<&Point> {
        let i = self.times.partition_point(|s| *s <= t);
        (i > 0).then(|| &self.values[i - 1])
    }

    /// `sup ‖u(s)‖` over sampled times `<= t` and the left limits of jumps `<= t`.
    pub fn sup_norm_until(&self, sp: &SmoothSpace, t: f64) -> f64 {
        let hi = self.times.partition_point(|s| *s <= t);
        let on_grid = self.values[..hi]
            .iter()
            .map(|v| sp.sum_pow(v.as_slice()))
            .fold(0.0, f64::max);
        let at_jumps = self
            .jumps
            .iter()
            .take_while(|j| j.time <= t)
            .map(|j| sp.sum_pow(j.left.as_slice()))
            .fold(0.0, f64::max);
        sp.root(on_grid.max(at_jumps))
    }

    pub fn sup_norm(&self, sp: &SmoothSpace) -> f64 {
        self.sup_norm_until(sp, self.horizon)
    }

    /// CSV rows `t, x0, .., x{d-1}, is_jump`; at jump times the row holds the
    /// right limit.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.values.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        header.push("is_jump".into());
        out.write_record(&header)?;
        let mut jumps = self.jumps.iter().peekable();
        for (t, v) in self.times.iter().zip(&self.values) {
            let mut is_jump = false;
            while let Some(j) = jumps.peek() {
                if j.time < *t {
                    jumps.next();
                } else {
                    is_jump = j.time == *t;
                    break;
                }
            }
            let mut row = vec![format!("{t:e}")];
            row.extend(v.iter().map(|x| format!("{x:e}")));
            row.push(if is_jump { "1" } else { "0" }.into());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sorted union of `grid` and the event times of `path`.
pub fn merge_times(grid: &[f64], path: &PoissonPath) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len() + path.len());
    let (mut i, mut j) = (0, 0);
    let ev = path.events();
    while i < grid.len() || j < ev.len() {
        let next = match (grid.get(i), ev.get(j)) {
            (Some(g), Some(e)) if *g < e.time => {
                i += 1;
                *g
            }
            (Some(g), Some(e)) if *g == e.time => {
                i += 1;
                j += 1;
                *g
            }
            (_, Some(e)) => {
                j += 1;
                e.time
            }
            (Some(g), None) => {
                i += 1;
                *g
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Evaluates `t ↦ I_t(f)` on the grid merged with the event times.
pub fn integral_path(
    ms: &MarkSpace,
    path: &PoissonPath,
    f: &FieldIntegrand,
    grid: &[f64],
    quad: &QuadConfig,
) -> Result<CadlagPath> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return domain("grid must be sorted");
    }
    if let (Some(first), Some(last)) = (grid.first(), grid.last()) {
        if *first < 0.0 || *last > path.horizon() {
            return domain(format!("grid must lie in [0, {}]", path.horizon()));
        }
    }
    let times = merge_times(grid, path);
    let mut values = Vec::with_capacity(times.len());
    let mut jumps = Vec::with_capacity(path.len());
    let mut state = Point::zeros(f.dim);
    let mut prev = 0.0;
    let mut events = path.events().iter().peekable();
    let mut buf = Point::zeros(f.dim);
    for &t in &times {
        state -= f.compensator(ms, prev, t, quad);
        prev = t;
        if let Some(e) = events.next_if(|e| e.time == t) {
            let left = state.clone();
            f.eval_into(e.time, e.mark, buf.as_mut_slice());
            state += &buf;
            jumps.push(Jump { time: t, left, right: state.clone() });
        }
        values.push(state.clone());
    }
    CadlagPath::new(path.horizon(), times, values, jumps)
}

/// `∫_0^t ∫_Z g dN = Σ_{t_i ≤ t} g(t_i, z_i)` for `g >= 0`.
pub fn ls_integral_n(path: &PoissonPath, g: &ScalarRule, t: f64) -> Result<f64> {
    check_time(path, t)?;
    let mut acc = 0.0;
    for e in path.up_to(t) {
        let v = g.eval(e.time, e.mark);
        if !(v >= 0.0) {
            return domain(format!("integrand {v} at t={} is not nonnegative", e.time));
        }
        acc += v;
    }
    Ok(acc)
}

/// `∫_0^t Σ_k g(s, z_k) ν_k ds` for `g >= 0`.
pub fn ls_integral_nu(ms: &MarkSpace, g: &ScalarRule, t: f64, quad: &QuadConfig) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("time {t} must be nonnegative"));
    }
    let v = match &g.antiderivative {
        Some(anti) => ms
            .weights()
            .iter()
            .enumerate()
            .map(|(k, w)| w * (anti(t, k) - anti(0.0, k)))
            .sum(),
        None => quad::integrate(quad, 0.0, t, |s| {
            ms.weights()
                .iter()
                .enumerate()
                .map(|(k, w)| w * g.eval(s, k))
                .sum()
        }),
    };
    if !v.is_finite() {
        return Err(Error::Numeric("ν-integral is not finite".into()));
    }
    if v < 0.0 {
        return domain("ν-integral of a nonnegative rule came out negative");
    }
    Ok(v)
}
