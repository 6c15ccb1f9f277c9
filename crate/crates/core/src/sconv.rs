//! Stochastic convolution `u(t) = ∫_0^t ∫_Z S(t-s) ξ(s,z) Ñ(ds,dz)`.
//!
//! The production path propagates the state recursively over the grid merged
//! with the event times; [`ConvolutionScenario::convolve_at`] is the direct
//! `O(N)` evaluation used as its oracle.

use crate::error::{domain, Error, Result};
use crate::expm::expm;
use crate::prm::{MarkSpace, PoissonPath};
use crate::quad::QuadConfig;
use crate::sgp::{self, Generator, Spectral};
use crate::sint::{self, CadlagPath, FieldIntegrand, Jump, StepIntegrand};
use crate::space::{Point, SmoothSpace};
use nalgebra::{DMatrix, DVector};
use std::borrow::Cow;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Sampling grid of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// `n + 1` equispaced points `i T / n`.
    Count(usize),
    Times(Vec<f64>),
}

impl GridSpec {
    pub fn build(&self, horizon: f64) -> Result<Vec<f64>> {
        let grid = match self {
            GridSpec::Count(0) => return domain("grid count must be positive"),
            GridSpec::Count(n) => (0..=*n).map(|i| i as f64 * horizon / *n as f64).collect(),
            GridSpec::Times(t) => t.clone(),
        };
        if grid.is_empty() {
            return domain("grid must not be empty");
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("grid times must be strictly increasing");
        }
        if !(grid[0] >= 0.0 && *grid.last().unwrap() <= horizon) {
            return domain(format!("grid must lie in [0, {horizon}]"));
        }
        Ok(grid)
    }
}

/// Integrand driving a convolution.
#[derive(Debug, Clone)]
pub enum ScenarioIntegrand {
    Field(FieldIntegrand),
    /// Step integrand; path-dependent coefficients are realized per path.
    Step(StepIntegrand),
}

impl ScenarioIntegrand {
    fn dim(&self) -> usize {
        match self {
            ScenarioIntegrand::Field(f) => f.dim(),
            ScenarioIntegrand::Step(s) => s.dim(),
        }
    }

    /// The deterministic field driving `path`.
    pub fn realize<'a>(&'a self, path: &PoissonPath, n_marks: usize) -> Result<Cow<'a, FieldIntegrand>> {
        match self {
            ScenarioIntegrand::Field(f) => Ok(Cow::Borrowed(f)),
            ScenarioIntegrand::Step(s) => Ok(Cow::Owned(s.realize(path, n_marks)?)),
        }
    }

    fn fixed_field(&self, n_marks: usize) -> Option<FieldIntegrand> {
        match self {
            ScenarioIntegrand::Field(f) => Some(f.clone()),
            ScenarioIntegrand::Step(s) if s.is_deterministic() => s.to_field(n_marks).ok(),
            ScenarioIntegrand::Step(_) => None,
        }
    }
}

/// `S(δ)` in whatever form is cheapest to apply.
#[derive(Debug, Clone)]
enum Prop {
    Identity,
    Spectral(DVector<f64>),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone)]
struct GridCache {
    props: Vec<Prop>,
    step_prop: Vec<usize>,
    comp: Option<Vec<Point>>,
}

/// Terms of the Itô expansion of `φ(u(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItoTerms {
    pub phi_u_t: f64,
    /// `∫_0^t φ'(u(s))(A u(s)) ds`.
    pub drift_term: f64,
    /// `∫∫ φ'(u(s-))(ξ) Ñ(ds,dz)`.
    pub mart_term: f64,
    /// `Σ φ(u- + ξ) - φ(u-) - φ'(u-)(ξ)`.
    pub jump_term: f64,
    pub initial: f64,
    /// Estimated quadrature error of the time integrals.
    pub quad_tolerance: f64,
}

impl ItoTerms {
    /// `φ(u(t)) - (drift + mart + jump)`.
    pub fn identity_gap(&self) -> f64 {
        self.phi_u_t - self.initial - (self.drift_term + self.mart_term + self.jump_term)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["phi_u_t", "drift_term", "mart_term", "jump_term", "initial", "quad_tolerance"])?;
        out.write_record(
            [self.phi_u_t, self.drift_term, self.mart_term, self.jump_term, self.initial, self.quad_tolerance]
                .iter()
                .map(|v| format!("{v:e}")),
        )?;
        out.flush()?;
        Ok(())
    }
}

/// Mark space, space, generator, integrand, horizon and grid of one convolution.
#[derive(Debug, Clone)]
pub struct ConvolutionScenario {
    ms: MarkSpace,
    sp: SmoothSpace,
    gen: Generator,
    xi: ScenarioIntegrand,
    horizon: f64,
    grid: Vec<f64>,
    quad: QuadConfig,
    contraction: f64,
    cache: GridCache,
    /// Dense `S(δ)` keyed by the bits of `δ`, shared by clones with the same generator.
    dense_memo: Arc<Mutex<HashMap<u64, DMatrix<f64>>>>,
}

const DENSE_MEMO_CAP: usize = 1024;

/// `φ_k(z) = Σ_{n>=0} z^n / (n+k)!` for `k = 0..=kmax`.
fn phi_functions(z: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    out[0] = z.exp();
    if z.abs() < 1.0 {
        for (k, o) in out.iter_mut().enumerate().skip(1) {
            let mut term = 1.0;
            for i in 1..=k {
                term /= i as f64;
            }
            let mut acc = term;
            for n in 1..60 {
                term *= z / (n + k) as f64;
                acc += term;
                if term.abs() < 1e-18 * acc.abs() {
                    break;
                }
            }
            *o = acc;
        }
    } else {
        let mut fact = 1.0;
        for k in 1..=kmax {
            out[k] = (out[k - 1] - 1.0 / fact) / z;
            fact *= k as f64;
        }
    }
    out
}

impl ConvolutionScenario {
    pub fn new(
        ms: MarkSpace,
        sp: SmoothSpace,
        gen: Generator,
        xi: ScenarioIntegrand,
        horizon: f64,
        grid: GridSpec,
        quad: QuadConfig,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        if gen.dim() != sp.d || xi.dim() != sp.d {
            return domain(format!(
                "dimensions disagree: space {}, generator {}, integrand {}",
                sp.d,
                gen.dim(),
                xi.dim()
            ));
        }
        if let ScenarioIntegrand::Field(f) = &xi {
            if f.n_marks() != ms.len() {
                return domain(format!("integrand has {} marks, mark space {}", f.n_marks(), ms.len()));
            }
            f.check_integrable(&ms, &sp, horizon, &quad)?;
        }
        if let ScenarioIntegrand::Step(s) = &xi {
            if *s.breakpoints().last().unwrap() > horizon {
                return domain("step breakpoints extend beyond the horizon");
            }
            for (set, _) in s.cells().iter().flatten() {
                if set.universe() != ms.len() {
                    return domain("step cells refer to a different mark space");
                }
            }
        }
        let contraction = sgp::certify_contraction(&gen, &sp)?;
        let grid = grid.build(horizon)?;
        let mut scn = Self {
            ms,
            sp,
            gen,
            xi,
            horizon,
            grid,
            quad,
            contraction,
            cache: GridCache { props: Vec::new(), step_prop: Vec::new(), comp: None },
            dense_memo: Arc::default(),
        };
        scn.cache = scn.build_cache()?;
        Ok(scn)
    }

    /// Same scenario on another grid.
    pub fn with_grid(&self, grid: GridSpec) -> Result<Self> {
        let mut scn = self.clone();
        scn.grid = grid.build(self.horizon)?;
        scn.cache = scn.build_cache()?;
        Ok(scn)
    }

    /// Same scenario with another integrand of the same dimension.
    pub fn with_integrand(&self, xi: ScenarioIntegrand) -> Result<Self> {
        if xi.dim() != self.sp.d {
            return domain("integrand dimension differs from the scenario's");
        }
        let mut scn = self.clone();
        scn.xi = xi;
        scn.cache = scn.build_cache()?;
        Ok(scn)
    }

    /// Same scenario with `ξ` replaced by `c ξ`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let xi = match &self.xi {
            ScenarioIntegrand::Field(f) => ScenarioIntegrand::Field(f.scaled(c)),
            ScenarioIntegrand::Step(s) => match s.to_field(self.ms.len()) {
                Ok(f) => ScenarioIntegrand::Field(f.scaled(c)),
                Err(_) => return domain("path-dependent step integrands cannot be rescaled"),
            },
        };
        self.with_integrand(xi)
    }

    fn build_cache(&self) -> Result<GridCache> {
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut props = Vec::new();
        let mut step_prop = Vec::with_capacity(self.grid.len().saturating_sub(1));
        for w in self.grid.windows(2) {
            let delta = w[1] - w[0];
            let k = *index.entry(delta.to_bits()).or_insert_with(|| {
                props.push(self.propagator(delta));
                props.len() - 1
            });
            step_prop.push(k);
        }
        let comp = match self.xi.fixed_field(self.ms.len()) {
            Some(f) => Some(
                self.grid
                    .windows(2)
                    .map(|w| self.compensator(&f, w[0], w[1]))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(GridCache { props, step_prop, comp })
    }

    pub fn mark_space(&self) -> &MarkSpace {
        &self.ms
    }

    pub fn space(&self) -> &SmoothSpace {
        &self.sp
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn integrand(&self) -> &ScenarioIntegrand {
        &self.xi
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn quad(&self) -> &QuadConfig {
        &self.quad
    }

    /// Largest sampled `‖S(t)x‖ / ‖x‖` found by the certificate.
    pub fn contraction_ratio(&self) -> f64 {
        self.contraction
    }

    fn propagator(&self, delta: f64) -> Prop {
        if delta == 0.0 || self.gen.is_identity() {
            return Prop::Identity;
        }
        match self.gen.spectral() {
            Some(s) => Prop::Spectral(s.eigenvalues().map(|e| (e * delta).exp())),
            None => {
                let key = delta.to_bits();
                if let Some(m) = self.dense_memo.lock().expect("memo lock").get(&key) {
                    return Prop::Dense(m.clone());
                }
                let m = expm(&(self.gen.matrix() * delta));
                let mut memo = self.dense_memo.lock().expect("memo lock");
                if memo.len() < DENSE_MEMO_CAP {
                    memo.insert(key, m.clone());
                }
                Prop::Dense(m)
            }
        }
    }

    fn apply_prop(&self, prop: &Prop, x: &Point) -> Point {
        match prop {
            Prop::Identity => x.clone(),
            Prop::Spectral(f) => {
                let s = self.gen.spectral().expect("spectral generator");
                match s {
                    Spectral::Coordinate(_) => x.component_mul(f),
                    Spectral::Orthogonal { .. } => s.from_eigen(&s.to_eigen(x).component_mul(f)),
                }
            }
            Prop::Dense(m) => m * x,
        }
    }

    /// `∫_a^b S(b-s) m(s) ds` with `m(s) = Σ_k ν_k ξ(s, z_k)`.
    fn compensator(&self, xi: &FieldIntegrand, a: f64, b: f64) -> Result<Point> {
        let d = self.sp.d;
        if b <= a {
            return Ok(Point::zeros(d));
        }
        if self.gen.is_identity() {
            return Ok(xi.compensator(&self.ms, a, b, &self.quad));
        }
        let pieces = xi.density_pieces(&self.ms, a, b);
        let out = match (self.gen.spectral(), pieces) {
            (Some(eig), Some(pieces)) => {
                let mu = eig.eigenvalues();
                let mut acc = Point::zeros(d);
                for piece in &pieces {
                    let delta = piece.end - piece.start;
                    let decay = b - piece.end;
                    let ys: Vec<Point> = piece.coeffs.iter().map(|c| eig.to_eigen(c)).collect();
                    let deg = ys.len();
                    for i in 0..d {
                        let phis = phi_functions(mu[i] * delta, deg);
                        let mut val = 0.0;
                        let mut fact = 1.0;
                        let mut dpow = delta;
                        for (j, y) in ys.iter().enumerate() {
                            if j > 0 {
                                fact *= j as f64;
                            }
                            val += y[i] * fact * dpow * phis[j + 1];
                            dpow *= delta;
                        }
                        acc[i] += (mu[i] * decay).exp() * val;
                    }
                }
                eig.from_eigen(&acc)
            }
            (_, Some(pieces)) => {
                let mut acc = Point::zeros(d);
                for piece in &pieces {
                    let part = self.simpson_conv(|s| piece.eval(s), piece.start, piece.end);
                    acc += self.apply_prop(&self.propagator(b - piece.end), &part);
                }
                acc
            }
            (_, None) => self.simpson_conv(|s| xi.compensator_density(&self.ms, s), a, b),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("convolution compensator on [{a}, {b}] is not finite")));
        }
        Ok(out)
    }

    /// Composite Simpson for `∫_a^b S(b-s) m(s) ds`, accumulated by Horner's
    /// scheme in `S(h)`.
    fn simpson_conv(&self, m: impl Fn(f64) -> Point, a: f64, b: f64) -> Point {
        let n = self.quad.panels(a, b);
        let h = (b - a) / n as f64;
        let e = self.propagator(h);
        let mut acc = m(a);
        for j in 1..=n {
            let w = if j == n {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc = self.apply_prop(&e, &acc);
            acc.axpy(w, &m(a + j as f64 * h), 1.0);
        }
        acc * (h / 3.0)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon) {
            return domain(format!("time {t} outside [0, {}]", self.horizon));
        }
        Ok(())
    }

    fn check_path(&self, path: &PoissonPath) -> Result<()> {
        if path.horizon() != self.horizon {
            return domain(format!("path horizon {} vs scenario {}", path.horizon(), self.horizon));
        }
        if let Some(e) = path.events().iter().find(|e| e.mark >= self.ms.len()) {
            return domain(format!("event mark {} outside the mark space", e.mark));
        }
        Ok(())
    }

    /// Direct evaluation `Σ_{t_i<=t} S(t-t_i) ξ(t_i,z_i) - ∫_0^t S(t-s) m(s) ds`.
    pub fn convolve_at(&self, path: &PoissonPath, t: f64) -> Result<Point> {
        self.check_time(t)?;
        self.check_path(path)?;
        let xi = self.xi.realize(path, self.ms.len())?;
        let mut acc = Point::zeros(self.sp.d);
        let mut buf = Point::zeros(self.sp.d);
        for e in path.up_to(t) {
            xi.eval_into(e.time, e.mark, buf.as_mut_slice());
            if self.gen.is_identity() {
                acc += &buf;
            } else {
                acc += self.apply_prop(&self.propagator(t - e.time), &buf);
            }
        }
        acc -= self.compensator(&xi, 0.0, t)?;
        Ok(acc)
    }

    /// Recursive propagation over `grid ∪ events`. `visit(t, right, left)`
    /// receives the right value and, at events, the left limit; returning
    /// `false` stops the walk.
    fn walk(
        &self,
        path: &PoissonPath,
        xi: &FieldIntegrand,
        grid: &[f64],
        cache: Option<&GridCache>,
        mut visit: impl FnMut(f64, &Point, Option<&Point>) -> bool,
    ) -> Result<()> {
        let times = sint::merge_times(grid, path);
        let mut events = path.events().iter().peekable();
        let mut state = Point::zeros(self.sp.d);
        let mut buf = Point::zeros(self.sp.d);
        let mut prev = 0.0;
        let mut prev_grid: Option<usize> = None;
        let mut gi = 0;
        for &t in &times {
            let is_grid = gi < grid.len() && grid[gi] == t;
            if t > prev {
                let cached = match (cache, prev_grid) {
                    (Some(c), Some(k)) if is_grid && gi == k + 1 => {
                        c.comp.as_ref().map(|comp| (&c.props[c.step_prop[k]], &comp[k]))
                    }
                    _ => None,
                };
                state = match cached {
                    Some((prop, comp)) => self.apply_prop(prop, &state) - comp,
                    None => self.apply_prop(&self.propagator(t - prev), &state) - self.compensator(xi, prev, t)?,
                };
            }
            prev = t;
            prev_grid = is_grid.then_some(gi);
            if is_grid {
                gi += 1;
            }
            let keep_going = match events.next_if(|e| e.time == t) {
                Some(e) => {
                    let left = state.clone();
                    xi.eval_into(e.time, e.mark, buf.as_mut_slice());
                    state += &buf;
                    visit(t, &state, Some(&left))
                }
                None => visit(t, &state, None),
            };
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("convolution state at t={t} is not finite")));
            }
            if !keep_going {
                break;
            }
        }
        Ok(())
    }

    fn collect(
        &self,
        path: &PoissonPath,
        xi: &FieldIntegrand,
        grid: &[f64],
        cache: Option<&GridCache>,
    ) -> Result<CadlagPath> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut jumps = Vec::new();
        self.walk(path, xi, grid, cache, |t, right, left| {
            times.push(t);
            values.push(right.clone());
            if let Some(l) = left {
                jumps.push(Jump { time: t, left: l.clone(), right: right.clone() });
            }
            true
        })?;
        CadlagPath::new(self.horizon, times, values, jumps)
    }

    /// `u` on `grid ∪ events` with both limits at every event.
    pub fn convolution_path(&self, path: &PoissonPath) -> Result<CadlagPath> {
        self.check_path(path)?;
        let xi = self.xi.realize(path, self.ms.len())?;
        self.collect(path, &xi, &self.grid, Some(&self.cache))
    }

    /// `sup_{s<=t} ‖u(s)‖` over `grid ∪ events`, both limits at events,
    /// without storing the path.
    pub fn sup_norm_until(&self, path: &PoissonPath, t: f64) -> Result<f64> {
        self.check_time(t)?;
        self.check_path(path)?;
        let xi = self.xi.realize(path, self.ms.len())?;
        let mut best = 0.0f64;
        self.walk(path, &xi, &self.grid, Some(&self.cache), |s, right, left| {
            if s > t {
                return false;
            }
            best = best.max(self.sp.sum_pow(right.as_slice()));
            if let Some(l) = left {
                best = best.max(self.sp.sum_pow(l.as_slice()));
            }
            true
        })?;
        Ok(self.sp.root(best))
    }

    pub fn sup_norm(&self, path: &PoissonPath) -> Result<f64> {
        self.sup_norm_until(path, self.horizon)
    }

    /// `sup_{s<=t} ‖u(s)‖` together with `u(t)`.
    pub fn sup_and_value(&self, path: &PoissonPath, t: f64) -> Result<(f64, Point)> {
        self.check_time(t)?;
        self.check_path(path)?;
        let xi = self.xi.realize(path, self.ms.len())?;
        let mut best = 0.0f64;
        let mut last = (0.0, Point::zeros(self.sp.d));
        self.walk(path, &xi, &self.grid, Some(&self.cache), |s, right, left| {
            if s > t {
                return false;
            }
            best = best.max(self.sp.sum_pow(right.as_slice()));
            if let Some(l) = left {
                best = best.max(self.sp.sum_pow(l.as_slice()));
            }
            last = (s, right.clone());
            true
        })?;
        let value = if last.0 == t { last.1 } else { self.value_at(path, t)? };
        best = best.max(self.sp.sum_pow(value.as_slice()));
        Ok((self.sp.root(best), value))
    }

    /// `u(t)` by recursive propagation.
    pub fn value_at(&self, path: &PoissonPath, t: f64) -> Result<Point> {
        self.check_time(t)?;
        self.check_path(path)?;
        let xi = self.xi.realize(path, self.ms.len())?;
        let mut grid: Vec<f64> = self.grid.iter().copied().filter(|g| *g < t).collect();
        grid.push(t);
        let mut out = Point::zeros(self.sp.d);
        self.walk(path, &xi, &grid, None, |s, right, _| {
            if s == t {
                out = right.clone();
                return false;
            }
            true
        })?;
        Ok(out)
    }

    /// `max_grid ‖u(t) - ∫_0^t A u(s) ds - I_t(ξ)‖`, with the time integral
    /// by the trapezoid rule on every piece between consecutive grid and
    /// event times.
    pub fn strong_solution_residual(&self, path: &PoissonPath) -> Result<f64> {
        let u = self.convolution_path(path)?;
        let xi = self.xi.realize(path, self.ms.len())?;
        let ito = sint::integral_path(&self.ms, path, &xi, &self.grid, &self.quad)?;
        let a = self.gen.matrix();
        let mut q = Point::zeros(self.sp.d);
        let mut worst = 0.0f64;
        let mut jumps = u.jumps().iter().peekable();
        let mut gi = 0;
        let zero = Point::zeros(self.sp.d);
        let (mut prev_t, mut prev_x) = (0.0, &zero);
        for (m, (&t, x)) in u.times().iter().zip(u.values()).enumerate() {
            let left = jumps.next_if(|j| j.time == t).map_or(x, |j| &j.left);
            if !self.gen.is_identity() && t > prev_t {
                q += a * (prev_x + left) * (0.5 * (t - prev_t));
            }
            (prev_t, prev_x) = (t, x);
            if gi < self.grid.len() && self.grid[gi] == t {
                gi += 1;
                let r = x - &q - &ito.values()[m];
                worst = worst.max(self.sp.norm_of(r.as_slice()));
            }
        }
        Ok(worst)
    }

    /// `nR(n, A)` as a matrix.
    pub fn yosida_matrix(&self, n: f64) -> Result<DMatrix<f64>> {
        let d = self.sp.d;
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = Point::zeros(d);
            e[j] = 1.0;
            m.set_column(j, &self.gen.yosida_scale(n, &e)?);
        }
        Ok(m)
    }

    /// Convolution path driven by `nR(n, A) ξ`.
    pub fn yosida_convolution(&self, path: &PoissonPath, n: f64) -> Result<CadlagPath> {
        self.check_path(path)?;
        let y = self.yosida_matrix(n)?;
        let xi = self.xi.realize(path, self.ms.len())?.map_linear(&y)?;
        self.collect(path, &xi, &self.grid, None)
    }

    /// Itô expansion of `φ(u(t))` along the path.
    pub fn ito_terms(&self, path: &PoissonPath, t: f64) -> Result<ItoTerms> {
        self.check_time(t)?;
        self.check_path(path)?;
        if self.sp.q < 2.0 {
            return domain(format!("φ needs q >= 2 for the Itô expansion, got q = {}", self.sp.q));
        }
        let xi = self.xi.realize(path, self.ms.len())?;
        let mut grid: Vec<f64> = self.grid.iter().copied().filter(|g| *g < t).collect();
        grid.push(t);
        let prefix = self.grid.get(grid.len() - 1) == Some(&t);
        let u = self.collect(path, &xi, &grid, prefix.then_some(&self.cache))?;
        let sp = &self.sp;
        let a = self.gen.matrix();
        let integrand = |x: &Point, s: f64| -> (f64, f64) {
            let drift = if self.gen.is_identity() {
                0.0
            } else {
                sp.phi_grad_of(x.as_slice(), (a * x).as_slice())
            };
            let comp = sp.phi_grad_of(x.as_slice(), xi.compensator_density(&self.ms, s).as_slice());
            (drift, comp)
        };
        let (times, values) = (u.times(), u.values());
        let mut jumps = u.jumps().iter().peekable();
        let (mut drift, mut comp, mut tol, mut mass) = (0.0, 0.0, 0.0, 0.0);
        let (mut jump_mart, mut jump_term) = (0.0, 0.0);
        let mut buf = Point::zeros(sp.d);
        let events: Vec<_> = path.up_to(t).to_vec();
        let mut ev = events.iter();
        let zero = Point::zeros(sp.d);
        let (mut prev_t, mut prev_x) = (0.0, &zero);
        for (&s1, x) in times.iter().zip(values) {
            if s1 > t {
                break;
            }
            let jump = jumps.next_if(|j| j.time == s1);
            if s1 > prev_t {
                let s0 = prev_t;
                let delta = s1 - s0;
                let mid = 0.5 * (s0 + s1);
                let x0 = prev_x;
                let x1 = jump.map_or(x, |j| &j.left);
                let xm = self.apply_prop(&self.propagator(mid - s0), x0) - self.compensator(&xi, s0, mid)?;
                let (d0, c0) = integrand(x0, s0);
                let (dm, cm) = integrand(&xm, mid);
                let (d1, c1) = integrand(x1, s1);
                let simpson = |f0: f64, fm: f64, f1: f64| delta / 6.0 * (f0 + 4.0 * fm + f1);
                let trap = |f0: f64, f1: f64| delta / 2.0 * (f0 + f1);
                let ds = simpson(d0, dm, d1);
                let cs = simpson(c0, cm, c1);
                tol += (ds - trap(d0, d1)).abs() + (cs - trap(c0, c1)).abs();
                mass += ds.abs() + cs.abs();
                drift += ds;
                comp += cs;
            }
            (prev_t, prev_x) = (s1, x);
            if let Some(j) = jump {
                let e = ev.next().expect("event for every jump");
                xi.eval_into(e.time, e.mark, buf.as_mut_slice());
                let g = sp.phi_grad_of(j.left.as_slice(), buf.as_slice());
                let k = sp.phi_of(j.right.as_slice()) - sp.phi_of(j.left.as_slice()) - g;
                jump_mart += g;
                jump_term += k;
                mass += g.abs() + k.abs();
            }
        }
        let phi_u_t = sp.phi_of(prev_x.as_slice());
        let terms = ItoTerms {
            phi_u_t,
            drift_term: drift,
            mart_term: jump_mart - comp,
            jump_term,
            initial: 0.0,
            quad_tolerance: tol + 1e-12 * (1.0 + mass + phi_u_t.abs()),
        };
        if [terms.phi_u_t, terms.drift_term, terms.mart_term, terms.jump_term]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numeric(format!("Itô terms at t={t} are not finite")));
        }
        if terms.identity_gap().abs() > 10.0 * terms.quad_tolerance {
            log::warn!(
                "Itô identity gap {:e} exceeds 10x tolerance {:e} at t={t}",
                terms.identity_gap(),
                terms.quad_tolerance
            );
        }
        Ok(terms)
    }
}
