//! The autonomous field g and the periodic perturbation f(t, p, q).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{fd_step, EmbeddedManifold};

pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ForcingFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A vector field w: M → ℝᵏ with w(p) ∈ T_pM.
#[derive(Clone)]
pub struct TangentField {
    dim: usize,
    eval: VectorFn,
    jacobian: Option<MatrixFn>,
}

impl fmt::Debug for TangentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TangentField")
            .field("ambient_dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl TangentField {
    pub fn new<F>(ambient_dim: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim: ambient_dim,
            eval: Arc::new(eval),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Self::new(ambient_dim, move |_| DVector::zeros(ambient_dim))
            .with_jacobian(move |_| DMatrix::zeros(ambient_dim, ambient_dim))
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, p: &DVector<f64>) -> DVector<f64> {
        (self.eval)(p)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Ambient k×k Jacobian: the supplied one, or central differences.
    pub fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(p),
            None => self.fd_jacobian(p),
        }
    }

    /// Central differences with step ε^{1/3}(1 + |p|).
    pub fn fd_jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let h = fd_step(p);
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        let mut x = p.clone();
        for a in 0..self.dim {
            x[a] = p[a] + h;
            let plus = self.eval(&x);
            x[a] = p[a] - h;
            let minus = self.eval(&x);
            x[a] = p[a];
            jac.set_column(a, &((plus - minus) / (2.0 * h)));
        }
        jac
    }

    /// p ↦ −w(p).
    pub fn negated(&self) -> TangentField {
        let eval = self.eval.clone();
        let mut out = TangentField::new(self.dim, move |p| -eval(p));
        if let Some(j) = self.jacobian.clone() {
            out.jacobian = Some(Arc::new(move |p| -j(p)));
        }
        out
    }

    /// Pointwise convex combination (1 − s)·self + s·other.
    pub fn blend(&self, other: &TangentField, s: f64) -> TangentField {
        let a = self.eval.clone();
        let b = other.eval.clone();
        TangentField::new(self.dim, move |p| a(p) * (1.0 - s) + b(p) * s)
    }
}

/// f(t, p, q): T-periodic in t, tangent to M in p, with q the delayed state.
#[derive(Clone)]
pub struct PerturbationField {
    dim: usize,
    eval: ForcingFn,
    period: f64,
    delay: f64,
    identically_zero: bool,
}

impl fmt::Debug for PerturbationField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationField")
            .field("ambient_dim", &self.dim)
            .field("period", &self.period)
            .field("delay", &self.delay)
            .field("identically_zero", &self.identically_zero)
            .finish()
    }
}

impl PerturbationField {
    pub fn new<F>(ambient_dim: usize, period: f64, delay: f64, eval: F) -> Self
    where
        F: Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        assert!(period > 0.0, "period must be positive");
        assert!(delay >= 0.0, "delay must be non-negative");
        Self {
            dim: ambient_dim,
            eval: Arc::new(eval),
            period,
            delay,
            identically_zero: false,
        }
    }

    /// f ≡ 0.
    pub fn zero(ambient_dim: usize, period: f64, delay: f64) -> Self {
        let mut f = Self::new(ambient_dim, period, delay, move |_, _, _| {
            DVector::zeros(ambient_dim)
        });
        f.identically_zero = true;
        f
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn eval(&self, t: f64, p: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        (self.eval)(t, p, q)
    }

    /// Declared identically zero at construction.
    pub fn is_identically_zero(&self) -> bool {
        self.identically_zero
    }

    /// Probes f on a deterministic set of (t, p, q) samples and reports
    /// whether every value is exactly zero.
    pub fn vanishes_on_probes(&self, probes: &[DVector<f64>]) -> bool {
        if self.identically_zero {
            return true;
        }
        let times = [0.0, 0.173, 0.31, 0.5, 0.77].map(|s| s * self.period);
        probes.iter().enumerate().all(|(i, p)| {
            let q = &probes[(i * 7 + 3) % probes.len()];
            times
                .iter()
                .all(|&t| self.eval(t, p, q).iter().all(|x| *x == 0.0))
        })
    }

    /// max |f(t+T,p,q) − f(t,p,q)| over the supplied samples.
    pub fn periodicity_defect(&self, samples: &[(f64, DVector<f64>, DVector<f64>)]) -> f64 {
        samples
            .iter()
            .map(|(t, p, q)| (self.eval(t + self.period, p, q) - self.eval(*t, p, q)).amax())
            .fold(0.0, f64::max)
    }
}

/// Composes a field with the tangent projection, making tangency hold by
/// construction. On ℝᵏ the field is returned unchanged.
pub fn tangentize(manifold: &EmbeddedManifold, field: &TangentField) -> TangentField {
    if manifold.is_euclidean() {
        return field.clone();
    }
    let m = manifold.clone();
    let inner = field.eval.clone();
    TangentField::new(field.dim, move |p| m.project_tangent_lenient(p, &inner(p)))
}

/// Projects f(t, p, q) onto T_pM.
pub fn tangentize_perturbation(
    manifold: &EmbeddedManifold,
    f: &PerturbationField,
) -> PerturbationField {
    if manifold.is_euclidean() || f.identically_zero {
        return f.clone();
    }
    let m = manifold.clone();
    let inner = f.eval.clone();
    let mut out = PerturbationField::new(f.dim, f.period, f.delay, move |t, p, q| {
        m.project_tangent_lenient(p, &inner(t, p, q))
    });
    out.identically_zero = f.identically_zero;
    out
}

/// |w(p) − Π_p w(p)| ≤ tol·(1 + |w(p)|).
pub fn is_tangent_at(
    manifold: &EmbeddedManifold,
    field: &TangentField,
    p: &DVector<f64>,
    tol: f64,
) -> Result<bool> {
    let w = field.eval(p);
    let proj = manifold.project_tangent(p, &w)?;
    Ok((&w - proj).norm() <= tol * (1.0 + w.norm()))
}

/// w′(q) restricted to T_qM in an orthonormal basis B: A = Bᵀ·Dw(q)·B.
#[derive(Debug, Clone)]
pub struct TangentJacobian {
    pub matrix: DMatrix<f64>,
    pub det: f64,
    pub sign: i32,
}

/// Restricted Jacobian at a zero of `g`, with the sign of its determinant.
pub fn tangent_jacobian(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    q: &DVector<f64>,
    zero_tol: f64,
    singular_tol: f64,
) -> Result<TangentJacobian> {
    let value = g.eval(q);
    if value.norm() > zero_tol {
        return Err(Error::NotAZero {
            point: q.as_slice().to_vec(),
            norm: value.norm(),
        });
    }
    let basis = manifold.tangent_basis(q)?;
    let matrix = basis.transpose() * g.jacobian(q) * &basis;
    let det = matrix.determinant();
    if nearly_singular(&matrix, det, singular_tol) {
        return Err(Error::NearSingular {
            point: q.as_slice().to_vec(),
            det,
        });
    }
    Ok(TangentJacobian {
        sign: if det > 0.0 { 1 } else { -1 },
        matrix,
        det,
    })
}

/// |det A| < tol·max(1, ‖A‖)ᵐ.
pub(crate) fn nearly_singular(matrix: &DMatrix<f64>, det: f64, tol: f64) -> bool {
    let m = matrix.nrows() as i32;
    let scale = matrix.norm().max(1.0);
    !det.is_finite() || det.abs() < tol * scale.powi(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn cubic() -> TangentField {
        TangentField::new(1, |p| v(&[p[0] * (1.0 - p[0] * p[0])]))
    }

    #[test]
    fn tangentize_on_euclidean_is_identity() {
        let r2 = EmbeddedManifold::euclidean(2);
        let g = TangentField::new(2, |p| v(&[p[1], -p[0]]));
        let t = tangentize(&r2, &g);
        let p = v(&[0.3, -1.2]);
        assert_eq!(t.eval(&p), g.eval(&p));
        let z = tangentize(&r2, &TangentField::zero(2));
        assert_eq!(z.eval(&p), DVector::zeros(2));
    }

    #[test]
    fn tangentized_height_field_on_sphere() {
        let s2 = EmbeddedManifold::sphere(3);
        let g = tangentize(&s2, &TangentField::new(3, |_| v(&[0.0, 0.0, 1.0])));
        let p = v(&[0.6, 0.0, 0.8]);
        let w = g.eval(&p);
        let expected = v(&[0.0, 0.0, 1.0]) - &p * 0.8;
        assert!((&w - expected).amax() < 1e-15);
        assert!(w.dot(&p).abs() < 1e-15);
        assert!(is_tangent_at(&s2, &g, &p, 1e-8).unwrap());
    }

    #[test]
    fn rotation_jacobian_at_origin() {
        let r2 = EmbeddedManifold::euclidean(2);
        let g = TangentField::new(2, |p| v(&[p[1], -p[0]]));
        let tj = tangent_jacobian(&r2, &g, &DVector::zeros(2), 1e-8, 1e-8).unwrap();
        assert!((tj.det - 1.0).abs() < 1e-9);
        assert_eq!(tj.sign, 1);
    }

    #[test]
    fn cubic_jacobian_signs() {
        let r1 = EmbeddedManifold::euclidean(1);
        let g = cubic();
        let at0 = tangent_jacobian(&r1, &g, &v(&[0.0]), 1e-8, 1e-8).unwrap();
        assert!((at0.det - 1.0).abs() < 1e-9);
        assert_eq!(at0.sign, 1);
        for q in [-1.0, 1.0] {
            let tj = tangent_jacobian(&r1, &g, &v(&[q]), 1e-8, 1e-8).unwrap();
            assert!((tj.det + 2.0).abs() < 1e-9);
            assert_eq!(tj.sign, -1);
        }
    }

    #[test]
    fn height_field_zero_has_positive_sign() {
        let s2 = EmbeddedManifold::sphere(3);
        let g = tangentize(&s2, &TangentField::new(3, |_| v(&[0.0, 0.0, 1.0])));
        for z in [1.0, -1.0] {
            let tj = tangent_jacobian(&s2, &g, &v(&[0.0, 0.0, z]), 1e-8, 1e-8).unwrap();
            assert_eq!(tj.sign, 1);
        }
    }

    #[test]
    fn degenerate_and_non_zero_points_are_rejected() {
        let r1 = EmbeddedManifold::euclidean(1);
        let square = TangentField::new(1, |p| v(&[p[0] * p[0]]));
        assert!(matches!(
            tangent_jacobian(&r1, &square, &v(&[0.0]), 1e-8, 1e-8),
            Err(Error::NearSingular { .. })
        ));
        assert!(matches!(
            tangent_jacobian(&r1, &cubic(), &v(&[0.5]), 1e-8, 1e-8),
            Err(Error::NotAZero { .. })
        ));
    }

    #[test]
    fn negation_flips_sign_by_parity() {
        let r2 = EmbeddedManifold::euclidean(2);
        let g = TangentField::new(2, |p| v(&[p[0], -2.0 * p[1]]));
        let s = tangent_jacobian(&r2, &g, &DVector::zeros(2), 1e-8, 1e-8)
            .unwrap()
            .sign;
        let sn = tangent_jacobian(&r2, &g.negated(), &DVector::zeros(2), 1e-8, 1e-8)
            .unwrap()
            .sign;
        assert_eq!(sn, s);
        let r1 = EmbeddedManifold::euclidean(1);
        let s1 = tangent_jacobian(&r1, &cubic(), &v(&[1.0]), 1e-8, 1e-8)
            .unwrap()
            .sign;
        let s1n = tangent_jacobian(&r1, &cubic().negated(), &v(&[1.0]), 1e-8, 1e-8)
            .unwrap()
            .sign;
        assert_eq!(s1n, -s1);
    }

    #[test]
    fn perturbation_probes_and_periodicity() {
        let f = PerturbationField::new(1, 2.0 * std::f64::consts::PI, 0.5, |t, _, q| {
            v(&[t.sin() - q[0]])
        });
        let probes = vec![v(&[0.1]), v(&[-0.4]), v(&[1.3])];
        assert!(!f.vanishes_on_probes(&probes));
        let samples: Vec<_> = (0..5)
            .map(|i| (i as f64 * 0.7, v(&[0.2]), v(&[0.1])))
            .collect();
        assert!(f.periodicity_defect(&samples) < 1e-12);
        let z = PerturbationField::new(1, 1.0, 0.0, |_, _, _| v(&[0.0]));
        assert!(z.vanishes_on_probes(&probes));
        assert!(PerturbationField::zero(1, 1.0, 0.0).is_identically_zero());
    }
}
