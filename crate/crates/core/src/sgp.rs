//! Contraction semigroups `S(t) = exp(tA)` on ℓ^r(d): action, resolvent,
//! Yosida approximations and sampled certificates of contraction and of
//! dissipativity with respect to `φ`.

use crate::error::{domain, Error, Result};
use crate::expm::expm;
use crate::space::{Point, SmoothSpace};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Slack allowed on `‖S(t)x‖ <= ‖x‖`.
pub const CONTRACTION_TOL: f64 = 1e-10;

/// Seed for sphere sampling in the certificates.
const CERT_SEED: u64 = 0xc0de_0000_5eed;

/// Description of a generator, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorKind {
    /// `A = 0`, `S(t) = I`.
    #[serde(alias = "identity")]
    IdentitySemigroup,
    /// `A = diag(rates)`.
    Diagonal { rates: Vec<f64> },
    /// `A = scale * tridiag(1, -2, 1)`.
    DirichletLaplacian { scale: f64 },
    /// Arbitrary square matrix, rows first.
    Dense { matrix: Vec<Vec<f64>> },
}

/// Eigen-structure used for exact evaluation.
#[derive(Debug, Clone)]
pub enum Spectral {
    /// Diagonal in the coordinate basis.
    Coordinate(DVector<f64>),
    /// `A = V diag(eig) Vᵀ` with orthonormal `V`.
    Orthogonal { basis: DMatrix<f64>, eig: DVector<f64> },
}

impl Spectral {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        match self {
            Spectral::Coordinate(e) => e,
            Spectral::Orthogonal { eig, .. } => eig,
        }
    }

    /// Coordinates of `x` in the eigenbasis.
    pub fn to_eigen(&self, x: &Point) -> Point {
        match self {
            Spectral::Coordinate(_) => x.clone(),
            Spectral::Orthogonal { basis, .. } => basis.tr_mul(x),
        }
    }

    pub fn from_eigen(&self, y: &Point) -> Point {
        match self {
            Spectral::Coordinate(_) => y.clone(),
            Spectral::Orthogonal { basis, .. } => basis * y,
        }
    }

    fn map(&self, x: &Point, f: impl Fn(f64) -> f64) -> Point {
        let mut y = self.to_eigen(x);
        for (v, e) in y.iter_mut().zip(self.eigenvalues().iter()) {
            *v *= f(*e);
        }
        self.from_eigen(&y)
    }

    fn matrix(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        match self {
            Spectral::Coordinate(e) => DMatrix::from_diagonal(&e.map(f)),
            Spectral::Orthogonal { basis, eig } => {
                let scaled = basis * DMatrix::from_diagonal(&eig.map(f));
                scaled * basis.transpose()
            }
        }
    }
}

/// Generator `A` of a semigroup on `d` coordinates, with cached matrix and
/// eigen-structure.
#[derive(Debug, Clone)]
pub struct Generator {
    d: usize,
    kind: GeneratorKind,
    matrix: DMatrix<f64>,
    spectral: Option<Spectral>,
}

impl Generator {
    pub fn new(d: usize, kind: GeneratorKind) -> Result<Self> {
        if d == 0 {
            return domain("generator dimension must be at least 1");
        }
        let (matrix, spectral) = match &kind {
            GeneratorKind::IdentitySemigroup => (
                DMatrix::zeros(d, d),
                Some(Spectral::Coordinate(DVector::zeros(d))),
            ),
            GeneratorKind::Diagonal { rates } => {
                if rates.len() != d {
                    return domain(format!("{} diagonal rates for dimension {d}", rates.len()));
                }
                if rates.iter().any(|r| !r.is_finite()) {
                    return domain("diagonal rates must be finite");
                }
                let e = DVector::from_column_slice(rates);
                (DMatrix::from_diagonal(&e), Some(Spectral::Coordinate(e)))
            }
            GeneratorKind::DirichletLaplacian { scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return domain(format!("laplacian scale must be positive, got {scale}"));
                }
                let mut m = DMatrix::zeros(d, d);
                for i in 0..d {
                    m[(i, i)] = -2.0 * scale;
                    if i + 1 < d {
                        m[(i, i + 1)] = *scale;
                        m[(i + 1, i)] = *scale;
                    }
                }
                let n1 = (d + 1) as f64;
                let norm = (2.0 / n1).sqrt();
                let basis = DMatrix::from_fn(d, d, |j, k| {
                    norm * (((j + 1) * (k + 1)) as f64 * std::f64::consts::PI / n1).sin()
                });
                let eig = DVector::from_fn(d, |k, _| {
                    let s = ((k + 1) as f64 * std::f64::consts::PI / (2.0 * n1)).sin();
                    -4.0 * scale * s * s
                });
                (m, Some(Spectral::Orthogonal { basis, eig }))
            }
            GeneratorKind::Dense { matrix } => {
                if matrix.len() != d || matrix.iter().any(|row| row.len() != d) {
                    return domain(format!("dense generator must be {d}x{d}"));
                }
                if matrix.iter().flatten().any(|v| !v.is_finite()) {
                    return domain("dense generator entries must be finite");
                }
                (DMatrix::from_fn(d, d, |i, j| matrix[i][j]), None)
            }
        };
        Ok(Self { d, kind, matrix, spectral })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(d, GeneratorKind::IdentitySemigroup).expect("d >= 1")
    }

    pub fn diagonal(rates: Vec<f64>) -> Result<Self> {
        Self::new(rates.len(), GeneratorKind::Diagonal { rates })
    }

    /// `A = -a I`.
    pub fn scalar_decay(d: usize, a: f64) -> Result<Self> {
        Self::diagonal(vec![-a; d])
    }

    pub fn dirichlet_laplacian(d: usize, scale: f64) -> Result<Self> {
        Self::new(d, GeneratorKind::DirichletLaplacian { scale })
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return domain("dense generator must be square");
        }
        let rows = matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self::new(matrix.nrows(), GeneratorKind::Dense { matrix: rows })
    }

    /// Skew generator of the rotation group in the first two coordinates.
    pub fn rotation(d: usize, omega: f64) -> Result<Self> {
        if d < 2 {
            return domain("rotation needs at least two coordinates");
        }
        let mut m = DMatrix::zeros(d, d);
        m[(0, 1)] = -omega;
        m[(1, 0)] = omega;
        Self::dense(m)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn spectral(&self) -> Option<&Spectral> {
        self.spectral.as_ref()
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, GeneratorKind::IdentitySemigroup)
    }

    fn check(&self, x: &Point) -> Result<()> {
        if x.len() != self.d {
            return domain(format!("point has dimension {}, generator has {}", x.len(), self.d));
        }
        Ok(())
    }

    /// `A x`.
    pub fn apply_generator(&self, x: &Point) -> Result<Point> {
        self.check(x)?;
        Ok(&self.matrix * x)
    }

    /// Matrix of `S(t)`.
    pub fn semigroup_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return domain(format!("semigroup time must be finite and >= 0, got {t}"));
        }
        if t == 0.0 || self.is_identity() {
            return Ok(DMatrix::identity(self.d, self.d));
        }
        Ok(match &self.spectral {
            Some(s) => s.matrix(|e| (e * t).exp()),
            None => expm(&(&self.matrix * t)),
        })
    }

    /// `S(t) x`.
    pub fn apply(&self, t: f64, x: &Point) -> Result<Point> {
        self.check(x)?;
        if !(t >= 0.0 && t.is_finite()) {
            return domain(format!("semigroup time must be finite and >= 0, got {t}"));
        }
        if t == 0.0 || self.is_identity() {
            return Ok(x.clone());
        }
        Ok(match &self.spectral {
            Some(s) => s.map(x, |e| (e * t).exp()),
            None => expm(&(&self.matrix * t)) * x,
        })
    }

    /// `R(λ, A) x = (λI - A)^{-1} x`.
    pub fn resolvent(&self, lam: f64, x: &Point) -> Result<Point> {
        self.check(x)?;
        if !(lam > 0.0 && lam.is_finite()) {
            return domain(format!("resolvent parameter must be positive, got {lam}"));
        }
        if let Some(s) = &self.spectral {
            return Ok(s.map(x, |e| 1.0 / (lam - e)));
        }
        let m = DMatrix::identity(self.d, self.d) * lam - &self.matrix;
        let lu = m.clone().lu();
        let mut y = lu
            .solve(x)
            .ok_or_else(|| Error::Internal(format!("λI - A singular at λ={lam}")))?;
        // one step of iterative refinement
        let resid = x - &m * &y;
        if let Some(corr) = lu.solve(&resid) {
            y += corr;
        }
        Ok(y)
    }

    /// `n R(n, A) x`.
    pub fn yosida_scale(&self, n: f64, x: &Point) -> Result<Point> {
        self.check(x)?;
        if !(n > 0.0 && n.is_finite()) {
            return domain(format!("Yosida parameter must be positive, got {n}"));
        }
        if self.is_identity() {
            return Ok(x.clone());
        }
        if let Some(s) = &self.spectral {
            return Ok(s.map(x, |e| n / (n - e)));
        }
        Ok(self.resolvent(n, x)? * n)
    }

    /// Yosida approximation `A_λ x = λ(λR(λ, A) - I)x`.
    pub fn yosida_operator(&self, lam: f64, x: &Point) -> Result<Point> {
        self.check(x)?;
        if !(lam > 0.0 && lam.is_finite()) {
            return domain(format!("Yosida parameter must be positive, got {lam}"));
        }
        if let Some(s) = &self.spectral {
            return Ok(s.map(x, |e| lam * e / (lam - e)));
        }
        let y = self.resolvent(lam, x)? * lam - x;
        Ok(y * lam)
    }
}

/// Largest `‖S(t)x‖ / ‖x‖` over `t_grid` and `n_sphere` seeded unit vectors
/// (plus the coordinate axes).
pub fn check_contraction(
    gen: &Generator,
    sp: &SmoothSpace,
    t_grid: &[f64],
    n_sphere: usize,
) -> Result<f64> {
    if t_grid.is_empty() {
        return domain("contraction check needs a nonempty time grid");
    }
    if n_sphere < 100 {
        return domain(format!("need at least 100 sphere samples, got {n_sphere}"));
    }
    if gen.dim() != sp.d {
        return domain(format!("generator dimension {} vs space {}", gen.dim(), sp.d));
    }
    let mut samples = sp.sphere_samples(n_sphere, CERT_SEED);
    for i in 0..sp.d {
        let mut e = sp.zero();
        e[i] = 1.0;
        samples.push(e);
    }
    let mut worst = 0.0f64;
    for &t in t_grid {
        let s = gen.semigroup_matrix(t)?;
        for x in &samples {
            let y = &s * x;
            worst = worst.max(sp.norm_of(y.as_slice()) / sp.norm_of(x.as_slice()));
        }
    }
    Ok(worst)
}

/// Default certification grid: `t = 2^k` for `k = -8..=4`.
pub fn default_certificate_grid() -> Vec<f64> {
    (-8..=4).map(|k| 2f64.powi(k)).collect()
}

/// Runs [`check_contraction`] on the default grid and rejects generators
/// exceeding `1 + CONTRACTION_TOL`.
pub fn certify_contraction(gen: &Generator, sp: &SmoothSpace) -> Result<f64> {
    let ratio = check_contraction(gen, sp, &default_certificate_grid(), 256)?;
    if ratio > 1.0 + CONTRACTION_TOL {
        return Err(Error::NotContractive(format!(
            "max ‖S(t)x‖/‖x‖ = {ratio} in ℓ^{} exceeds 1",
            sp.r
        )));
    }
    Ok(ratio)
}

/// Largest `φ'(x)(Ax)` over `n_samples` seeded unit vectors.
pub fn check_dissipativity_phi(gen: &Generator, sp: &SmoothSpace, n_samples: usize) -> Result<f64> {
    if n_samples < 100 {
        return domain(format!("need at least 100 samples, got {n_samples}"));
    }
    if gen.dim() != sp.d {
        return domain(format!("generator dimension {} vs space {}", gen.dim(), sp.d));
    }
    let mut worst = f64::NEG_INFINITY;
    for x in sp.sphere_samples(n_samples, CERT_SEED ^ 1) {
        let ax = gen.matrix() * &x;
        worst = worst.max(sp.phi_grad_of(x.as_slice(), ax.as_slice()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    fn rel(a: &Point, b: &Point) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    fn tridiagonal_dense(d: usize, scale: f64) -> Generator {
        let lap = Generator::dirichlet_laplacian(d, scale).unwrap();
        Generator::dense(lap.matrix().clone()).unwrap()
    }

    fn sub_markov_dense() -> Generator {
        // off-diagonal >= 0, row and column sums <= 0
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[-1.2, 0.7, 0.3, 0.2, -0.9, 0.6, 0.8, 0.1, -1.0],
        );
        Generator::dense(m).unwrap()
    }

    #[test]
    fn identity_semigroup_is_identity() {
        let g = Generator::identity(3);
        let x = pt(&[1.0, -2.0, 3.0]);
        assert_eq!(g.apply(5.0, &x).unwrap(), x);
        assert_eq!(g.yosida_scale(3.0, &x).unwrap(), x);
        let r = g.resolvent(3.0, &x).unwrap();
        assert!(rel(&r, &(&x / 3.0)) < 1e-15);
    }

    #[test]
    fn diagonal_examples() {
        let g = Generator::diagonal(vec![-1.0, -1.0]).unwrap();
        let x = pt(&[1.0, 0.0]);
        assert_eq!(g.apply(1.0, &x).unwrap(), pt(&[(-1f64).exp(), 0.0]));
        assert!(g.apply(-1.0, &x).is_err());
        assert_eq!(g.apply(0.0, &x).unwrap(), x);
        let y = pt(&[2.0, -4.0]);
        assert!(rel(&g.resolvent(1.0, &y).unwrap(), &(&y / 2.0)) < 1e-15);
        assert!(rel(&g.yosida_scale(1.0, &y).unwrap(), &(&y * 0.5)) < 1e-15);
        assert!(rel(&g.yosida_scale(9.0, &y).unwrap(), &(&y * 0.9)) < 1e-15);
        assert!(rel(&g.yosida_operator(1.0, &y).unwrap(), &(&y * -0.5)) < 1e-15);
        let g2 = Generator::scalar_decay(2, 2.0).unwrap();
        assert!(rel(&g2.yosida_operator(8.0, &y).unwrap(), &(&y * -1.6)) < 1e-15);
        assert!(g.yosida_scale(0.0, &y).is_err());
        assert!(g.yosida_operator(-1.0, &y).is_err());
        assert!(g.resolvent(0.0, &y).is_err());
    }

    #[test]
    fn dense_laplacian_matches_spectral() {
        let lap = Generator::dirichlet_laplacian(5, 1.3).unwrap();
        let dense = tridiagonal_dense(5, 1.3);
        let x = pt(&[0.3, -1.0, 2.0, 0.1, -0.7]);
        for t in [0.01, 0.3, 1.0, 4.0] {
            let a = lap.apply(t, &x).unwrap();
            let b = dense.apply(t, &x).unwrap();
            assert!(rel(&b, &a) < 1e-10, "t={t}");
        }
    }

    #[test]
    fn yosida_error_decreases_for_diagonal() {
        let g = Generator::diagonal(vec![-0.5, -3.0, 0.0]).unwrap();
        let x = pt(&[1.0, 2.0, -1.0]);
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let n = 2f64.powi(k);
            let err = (g.yosida_scale(n, &x).unwrap() - &x).norm();
            let oracle: f64 = [(-0.5, 1.0), (-3.0, 2.0)]
                .iter()
                .map(|(a, v): &(f64, f64)| ((n / (n - a) - 1.0) * v).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((err - oracle).abs() < 1e-14);
            assert!(err < last);
            last = err;
        }
    }

    #[test]
    fn yosida_operator_converges_at_rate_one_over_lambda() {
        let g = sub_markov_dense();
        let x = pt(&[1.0, -0.5, 2.0]);
        let ax = g.apply_generator(&x).unwrap();
        let errs: Vec<f64> = (4..14)
            .map(|k| (g.yosida_operator(2f64.powi(k), &x).unwrap() - &ax).norm())
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.8..2.2).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn resolvent_residual_and_hille_yosida() {
        let g = sub_markov_dense();
        let sp = SmoothSpace::new(3, 3.0, 3.0, 2.0).unwrap();
        for (i, x) in sp.sphere_samples(200, 3).into_iter().enumerate() {
            let lam = 0.1 + i as f64 * 0.37;
            let y = g.resolvent(lam, &x).unwrap();
            let resid = &y * lam - g.matrix() * &y - &x;
            assert!(resid.norm() <= 1e-12 * x.norm());
            assert!(lam * sp.norm_of(y.as_slice()) <= sp.norm_of(x.as_slice()) * (1.0 + 1e-10));
            let ys = g.yosida_scale(lam, &x).unwrap();
            assert!(sp.norm_of((ys - &x).as_slice()) <= 2.0 * sp.norm_of(x.as_slice()));
        }
    }

    #[test]
    fn contraction_certificates() {
        let grid = default_certificate_grid();
        let sp2 = SmoothSpace::hilbert(3);
        let diag = Generator::diagonal(vec![-1.0, 0.0, -0.2]).unwrap();
        assert!(check_contraction(&diag, &sp2, &grid, 100).unwrap() <= 1.0 + 1e-12);
        for r in [2.0, 3.0, 4.0] {
            let sp = SmoothSpace::new(4, r, r, 2.0).unwrap();
            let lap = Generator::dirichlet_laplacian(4, 2.0).unwrap();
            assert!(check_contraction(&lap, &sp, &grid, 200).unwrap() <= 1.0 + 1e-10);
        }
        let sp4 = SmoothSpace::new(2, 4.0, 4.0, 2.0).unwrap();
        let rot = Generator::rotation(2, 1.0).unwrap();
        assert!(check_contraction(&rot, &sp4, &grid, 200).unwrap() > 1.0 + 1e-3);
        assert!(certify_contraction(&rot, &sp4).is_err());
        assert!(certify_contraction(&rot, &SmoothSpace::hilbert(2)).is_ok());
        assert!(check_contraction(&rot, &sp4, &[], 200).is_err());
    }

    #[test]
    fn dissipativity_certificates() {
        let sp = SmoothSpace::new(3, 3.0, 4.0, 2.0).unwrap();
        let neg = Generator::scalar_decay(3, 1.0).unwrap();
        let worst = check_dissipativity_phi(&neg, &sp, 500).unwrap();
        // unit sphere: φ'(x)(-x) = -q φ(x) = -q
        assert!((worst + sp.q).abs() < 1e-12);
        assert_eq!(check_dissipativity_phi(&Generator::identity(3), &sp, 200).unwrap(), 0.0);
        let lap = Generator::dirichlet_laplacian(3, 1.0).unwrap();
        assert!(check_dissipativity_phi(&lap, &SmoothSpace::hilbert(3), 1000).unwrap() <= 1e-10);
        assert!(check_dissipativity_phi(&sub_markov_dense(), &sp, 1000).unwrap() <= 1e-9);
    }

    proptest! {
        #[test]
        fn semigroup_law(t in 0.0f64..2.0, s in 0.0f64..2.0, x in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let x = Point::from_vec(x);
            prop_assume!(x.norm() > 1e-6);
            for g in [sub_markov_dense(), Generator::dirichlet_laplacian(3, 0.7).unwrap()] {
                let lhs = g.apply(t + s, &x).unwrap();
                let rhs = g.apply(t, &g.apply(s, &x).unwrap()).unwrap();
                prop_assert!((&lhs - &rhs).norm() <= 1e-10 * x.norm());
            }
        }

        #[test]
        fn resolvent_identity_and_commutation(l in 0.1f64..10.0, m in 0.1f64..10.0, x in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let x = Point::from_vec(x);
            prop_assume!(x.norm() > 1e-6);
            let g = sub_markov_dense();
            let lhs = g.resolvent(l, &x).unwrap() - g.resolvent(m, &x).unwrap();
            let rhs = g.resolvent(l, &g.resolvent(m, &x).unwrap()).unwrap() * (m - l);
            prop_assert!((&lhs - &rhs).norm() <= 1e-10 * x.norm() / l.min(m));
            let ra = g.resolvent(l, &g.apply_generator(&x).unwrap()).unwrap();
            let ar = g.apply_generator(&g.resolvent(l, &x).unwrap()).unwrap();
            prop_assert!((&ra - &ar).norm() <= 1e-12 * x.norm().max(1.0));
            let ys = g.yosida_scale(l, &x).unwrap();
            let sp = SmoothSpace::new(3, 3.0, 3.0, 2.0).unwrap();
            prop_assert!(sp.norm_of(ys.as_slice()) <= sp.norm_of(x.as_slice()) * (1.0 + 1e-10));
        }
    }
}
