//! Manifolds M ⊆ ℝᵏ presented as regular level sets F⁻¹(0) of a constraint
//! map F: ℝᵏ → ℝᶜ. Tangent spaces are null spaces of the constraint
//! Jacobian; points are brought back onto M by closest-point Gauss–Newton.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::region::BoundingBox;

pub type ConstraintFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ConstraintJacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Central-difference step for a point `p`: ε^{1/3}(1 + |p|).
pub fn fd_step(p: &DVector<f64>) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + p.norm())
}

#[derive(Clone)]
pub struct EmbeddedManifold {
    name: String,
    ambient_dim: usize,
    constraint_dim: usize,
    constraint: Option<ConstraintFn>,
    jacobian: Option<ConstraintJacobianFn>,
    euler_characteristic: Option<i64>,
    extent: Option<BoundingBox>,
    on_tolerance: f64,
    rank_threshold: f64,
    step_cap: f64,
    max_iter: usize,
}

impl fmt::Debug for EmbeddedManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddedManifold")
            .field("name", &self.name)
            .field("ambient_dim", &self.ambient_dim)
            .field("constraint_dim", &self.constraint_dim)
            .field("euler_characteristic", &self.euler_characteristic)
            .field("on_tolerance", &self.on_tolerance)
            .finish()
    }
}

impl EmbeddedManifold {
    /// M = ℝᵏ.
    pub fn euclidean(k: usize) -> Self {
        assert!(k >= 1, "ambient dimension must be positive");
        Self {
            name: format!("R^{k}"),
            ambient_dim: k,
            constraint_dim: 0,
            constraint: None,
            jacobian: None,
            euler_characteristic: None,
            extent: None,
            on_tolerance: 1e-9,
            rank_threshold: 1e-8,
            step_cap: f64::INFINITY,
            max_iter: 50,
        }
    }

    /// Unit sphere S^{k-1} ⊆ ℝᵏ, F(p) = |p|² − 1.
    pub fn sphere(k: usize) -> Self {
        assert!(k >= 2, "sphere needs ambient dimension >= 2");
        let chi = if (k - 1).is_multiple_of(2) { 2 } else { 0 };
        Self::custom(
            format!("S^{}", k - 1),
            k,
            1,
            Arc::new(|p: &DVector<f64>| DVector::from_element(1, p.norm_squared() - 1.0)),
            Some(Arc::new(|p: &DVector<f64>| {
                DMatrix::from_row_slice(1, p.len(), (p * 2.0).as_slice())
            })),
        )
        .with_euler_characteristic(chi)
        .with_extent(BoundingBox::symmetric(k, 1.1))
        .with_step_cap(0.5)
    }

    /// Torus of revolution in ℝ³ around the z-axis with radii R > ρ > 0,
    /// F(x,y,z) = (√(x²+y²) − R)² + z² − ρ².
    pub fn torus2(major: f64, minor: f64) -> Self {
        assert!(
            major > minor && minor > 0.0,
            "torus radii must satisfy R > rho > 0"
        );
        let constraint = move |p: &DVector<f64>| {
            let s = (p[0] * p[0] + p[1] * p[1]).sqrt();
            DVector::from_element(1, (s - major).powi(2) + p[2] * p[2] - minor * minor)
        };
        let jacobian = move |p: &DVector<f64>| {
            let s = (p[0] * p[0] + p[1] * p[1]).sqrt().max(f64::MIN_POSITIVE);
            let a = 2.0 * (s - major) / s;
            DMatrix::from_row_slice(1, 3, &[a * p[0], a * p[1], 2.0 * p[2]])
        };
        let reach = major + minor;
        Self::custom("T^2", 3, 1, Arc::new(constraint), Some(Arc::new(jacobian)))
            .with_euler_characteristic(0)
            .with_extent(BoundingBox::new(
                vec![-1.1 * reach, -1.1 * reach, -1.1 * minor],
                vec![1.1 * reach, 1.1 * reach, 1.1 * minor],
            ))
            .with_step_cap(0.5 * minor)
    }

    /// Level set of a user constraint; the Jacobian is finite-differenced
    /// when not supplied.
    pub fn custom(
        name: impl Into<String>,
        ambient_dim: usize,
        constraint_dim: usize,
        constraint: ConstraintFn,
        jacobian: Option<ConstraintJacobianFn>,
    ) -> Self {
        assert!(constraint_dim < ambient_dim, "need 0 <= c < k");
        let mut m = Self::euclidean(ambient_dim);
        m.name = name.into();
        m.constraint_dim = constraint_dim;
        if constraint_dim > 0 {
            m.constraint = Some(constraint);
            m.jacobian = jacobian;
            m.step_cap = 1.0;
        }
        m
    }

    pub fn with_euler_characteristic(mut self, chi: i64) -> Self {
        self.euler_characteristic = Some(chi);
        self
    }

    /// Box strictly containing a compact manifold.
    pub fn with_extent(mut self, extent: BoundingBox) -> Self {
        self.extent = Some(extent);
        self
    }

    pub fn with_on_tolerance(mut self, tol: f64) -> Self {
        self.on_tolerance = tol;
        self
    }

    pub fn with_rank_threshold(mut self, threshold: f64) -> Self {
        self.rank_threshold = threshold;
        self
    }

    pub fn with_step_cap(mut self, cap: f64) -> Self {
        self.step_cap = cap;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn constraint_dim(&self) -> usize {
        self.constraint_dim
    }

    /// m = k − c.
    pub fn dim(&self) -> usize {
        self.ambient_dim - self.constraint_dim
    }

    pub fn is_euclidean(&self) -> bool {
        self.constraint_dim == 0
    }

    pub fn euler_characteristic(&self) -> Option<i64> {
        self.euler_characteristic
    }

    pub fn extent(&self) -> Option<&BoundingBox> {
        self.extent.as_ref()
    }

    pub fn on_tolerance(&self) -> f64 {
        self.on_tolerance
    }

    pub fn step_cap(&self) -> f64 {
        self.step_cap
    }

    pub fn constraint_value(&self, p: &DVector<f64>) -> DVector<f64> {
        match &self.constraint {
            Some(f) => f(p),
            None => DVector::zeros(0),
        }
    }

    pub fn constraint_jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        if self.constraint_dim == 0 {
            return DMatrix::zeros(0, self.ambient_dim);
        }
        if let Some(j) = &self.jacobian {
            return j(p);
        }
        let h = fd_step(p);
        let mut jac = DMatrix::zeros(self.constraint_dim, self.ambient_dim);
        for a in 0..self.ambient_dim {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[a] += h;
            minus[a] -= h;
            let col = (self.constraint_value(&plus) - self.constraint_value(&minus)) / (2.0 * h);
            jac.set_column(a, &col);
        }
        jac
    }

    /// max_i |F_i(p)|.
    pub fn violation(&self, p: &DVector<f64>) -> f64 {
        if self.constraint_dim == 0 {
            return 0.0;
        }
        self.constraint_value(p).amax()
    }

    pub fn is_on(&self, p: &DVector<f64>) -> bool {
        p.len() == self.ambient_dim
            && p.iter().all(|x| x.is_finite())
            && self.violation(p) <= self.on_tolerance
    }

    fn check_rank(&self, p: &DVector<f64>, jac: &DMatrix<f64>) -> Result<()> {
        let ratio = rank_ratio(jac);
        if ratio < self.rank_threshold {
            return Err(Error::RankDeficient {
                point: p.as_slice().to_vec(),
                ratio,
            });
        }
        Ok(())
    }

    /// Orthogonal projection of `v` onto the null space of the constraint
    /// Jacobian at `p`.
    pub fn project_tangent(&self, p: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        if self.constraint_dim == 0 {
            return Ok(v.clone());
        }
        let jac = self.constraint_jacobian(p);
        self.check_rank(p, &jac)?;
        Ok(remove_normal(&jac, v))
    }

    /// Same projection without the rank check; rank-deficient points (e.g.
    /// the centre of a sphere) leave `v` untouched. Used inside field
    /// evaluations, which may be probed slightly off M.
    pub fn project_tangent_lenient(&self, p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        if self.constraint_dim == 0 {
            return v.clone();
        }
        let jac = self.constraint_jacobian(p);
        if rank_ratio(&jac) < self.rank_threshold {
            return v.clone();
        }
        remove_normal(&jac, v)
    }

    /// Orthonormal basis (k×m) of T_pM. Columns come from pivoted
    /// Gram–Schmidt on the tangent projector applied to e_1..e_k, so the
    /// basis is a deterministic function of p and equals the identity on ℝᵏ.
    pub fn tangent_basis(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let k = self.ambient_dim;
        if self.constraint_dim == 0 {
            return Ok(DMatrix::identity(k, k));
        }
        let jac = self.constraint_jacobian(p);
        self.check_rank(p, &jac)?;
        let mut cols: Vec<(usize, DVector<f64>)> = (0..k)
            .map(|a| {
                let e = DVector::from_fn(k, |i, _| if i == a { 1.0 } else { 0.0 });
                (a, remove_normal(&jac, &e))
            })
            .collect();
        let mut chosen: Vec<(usize, DVector<f64>)> = Vec::with_capacity(self.dim());
        for _ in 0..self.dim() {
            let (pos, _) = cols
                .iter()
                .enumerate()
                .fold((0usize, -1.0_f64), |best, (i, (_, c))| {
                    let n = c.norm();
                    if n > best.1 + 1e-12 {
                        (i, n)
                    } else {
                        best
                    }
                });
            let (orig, mut c) = cols.remove(pos);
            // two passes of Gram–Schmidt against the already chosen vectors
            for _ in 0..2 {
                for (_, q) in &chosen {
                    let d = q.dot(&c);
                    c -= q * d;
                }
            }
            c /= c.norm();
            for (_, rest) in cols.iter_mut() {
                let d = c.dot(rest);
                *rest -= &c * d;
            }
            chosen.push((orig, c));
        }
        chosen.sort_by_key(|(orig, _)| *orig);
        let mut basis = DMatrix::zeros(k, self.dim());
        for (j, (_, c)) in chosen.iter().enumerate() {
            basis.set_column(j, c);
        }
        Ok(basis)
    }

    /// Retraction p + v ↦ closest point of M, for tangent steps below the cap.
    pub fn retract(&self, p: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        if self.constraint_dim == 0 {
            return Ok(p + v);
        }
        let length = v.norm();
        if length > self.step_cap {
            return Err(Error::StepTooLarge {
                length,
                cap: self.step_cap,
            });
        }
        self.project_point(&(p + v))
    }

    /// Gauss–Newton with minimum-norm steps q ← q − Jᵀ(JJᵀ)⁻¹F(q); every
    /// step is normal to M at the current iterate, so the limit is the
    /// nearest point when it exists.
    pub fn project_point(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.constraint_dim == 0 {
            return Ok(x.clone());
        }
        let target = 1e-2 * self.on_tolerance;
        let mut q = x.clone();
        let mut polished = false;
        for _ in 0..self.max_iter {
            let residual = self.constraint_value(&q);
            if residual.amax() <= target {
                if polished || residual.amax() == 0.0 {
                    return Ok(q);
                }
                polished = true;
            }
            let jac = self.constraint_jacobian(&q);
            let gram = &jac * jac.transpose();
            let mu = match gram.clone().cholesky() {
                Some(ch) => ch.solve(&residual),
                None => {
                    return Err(Error::RetractionDiverged {
                        point: x.as_slice().to_vec(),
                        residual: residual.amax(),
                    })
                }
            };
            let step = jac.transpose() * mu;
            if !step.iter().all(|s| s.is_finite()) {
                break;
            }
            q -= step;
        }
        let residual = self.violation(&q);
        if residual <= self.on_tolerance && q.iter().all(|s| s.is_finite()) {
            Ok(q)
        } else {
            Err(Error::RetractionDiverged {
                point: x.as_slice().to_vec(),
                residual,
            })
        }
    }
}

/// σ_min / σ_max of the constraint Jacobian; 0 when it vanishes.
fn rank_ratio(jac: &DMatrix<f64>) -> f64 {
    if jac.nrows() == 1 {
        return if jac.norm() > 0.0 { 1.0 } else { 0.0 };
    }
    let sv = jac.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max <= 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// v − Jᵀ(JJᵀ)⁻¹Jv.
fn remove_normal(jac: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    if jac.nrows() == 1 {
        let n = jac.row(0).transpose();
        let nn = n.norm_squared();
        if nn == 0.0 {
            return v.clone();
        }
        return v - &n * (n.dot(v) / nn);
    }
    let gram = jac * jac.transpose();
    match gram.cholesky() {
        Some(ch) => v - jac.transpose() * ch.solve(&(jac * v)),
        None => v.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn euclidean_projection_and_retraction_are_trivial() {
        let m = EmbeddedManifold::euclidean(3);
        let p = v(&[1.0, -2.0, 0.5]);
        let w = v(&[3.0, 4.0, 5.0]);
        assert_eq!(m.project_tangent(&p, &w).unwrap(), w);
        assert_eq!(m.retract(&p, &w).unwrap(), &p + &w);
        assert_eq!(m.tangent_basis(&p).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn sphere_projection_examples() {
        let s2 = EmbeddedManifold::sphere(3);
        let w = s2
            .project_tangent(&v(&[0.0, 0.0, 1.0]), &v(&[1.0, 2.0, 3.0]))
            .unwrap();
        assert!(close(w.as_slice(), &[1.0, 2.0, 0.0], 1e-14));
        let p = v(&[1.0, 0.0, 0.0]);
        let w = s2.project_tangent(&p, &v(&[1.0, 1.0, 1.0])).unwrap();
        assert!(close(w.as_slice(), &[0.0, 1.0, 1.0], 1e-14));
        assert!(w.dot(&p).abs() < 1e-14);
    }

    #[test]
    fn sphere_retraction_is_closest_point() {
        let s2 = EmbeddedManifold::sphere(3);
        let eps = 1e-3;
        let q = s2
            .retract(&v(&[1.0, 0.0, 0.0]), &v(&[0.0, eps, 0.0]))
            .unwrap();
        let n = (1.0 + eps * eps).sqrt();
        assert!(close(q.as_slice(), &[1.0 / n, eps / n, 0.0], 1e-14));
        let p = v(&[0.0, 0.6, 0.8]);
        assert_eq!(s2.retract(&p, &DVector::zeros(3)).unwrap(), p);
    }

    #[test]
    fn retraction_step_cap() {
        let s2 = EmbeddedManifold::sphere(3);
        let err = s2.retract(&v(&[1.0, 0.0, 0.0]), &v(&[0.0, 2.0, 0.0]));
        assert!(matches!(err, Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn circle_basis_is_vertical_at_east_pole() {
        let s1 = EmbeddedManifold::sphere(2);
        let b = s1.tangent_basis(&v(&[1.0, 0.0])).unwrap();
        assert_eq!(b.shape(), (2, 1));
        assert!(b[(0, 0)].abs() < 1e-15);
        assert!((b[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_basis_at_pole_spans_horizontal_plane() {
        let s2 = EmbeddedManifold::sphere(3);
        let b = s2.tangent_basis(&v(&[0.0, 0.0, 1.0])).unwrap();
        assert!((b.transpose() * &b - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(b.row(2).amax() < 1e-15);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let s2 = EmbeddedManifold::sphere(3);
        let origin = DVector::zeros(3);
        assert!(matches!(
            s2.tangent_basis(&origin),
            Err(Error::RankDeficient { .. })
        ));
        assert!(matches!(
            s2.project_tangent(&origin, &v(&[1.0, 0.0, 0.0])),
            Err(Error::RankDeficient { .. })
        ));
        // two identical constraints: rank one instead of two
        let doubled = EmbeddedManifold::custom(
            "doubled",
            3,
            2,
            Arc::new(|p: &DVector<f64>| {
                let f = p.norm_squared() - 1.0;
                DVector::from_vec(vec![f, f])
            }),
            None,
        );
        assert!(matches!(
            doubled.tangent_basis(&v(&[1.0, 0.0, 0.0])),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn custom_constraint_uses_finite_differences() {
        let circle = EmbeddedManifold::custom(
            "circle",
            2,
            1,
            Arc::new(|p: &DVector<f64>| DVector::from_element(1, p[0] * p[0] + p[1] * p[1] - 4.0)),
            None,
        );
        let jac = circle.constraint_jacobian(&v(&[2.0, 0.0]));
        assert!((jac[(0, 0)] - 4.0).abs() < 1e-8);
        let q = circle.project_point(&v(&[3.0, 0.0])).unwrap();
        assert!(close(q.as_slice(), &[2.0, 0.0], 1e-10));
    }

    #[test]
    fn torus_points_and_tangents() {
        let t2 = EmbeddedManifold::torus2(2.0, 1.0);
        let p = v(&[3.0, 0.0, 0.0]);
        assert!(t2.is_on(&p));
        let b = t2.tangent_basis(&p).unwrap();
        assert_eq!(b.shape(), (3, 2));
        // outward normal at (3,0,0) is e1
        assert!(b.row(0).amax() < 1e-14);
        let q = t2.retract(&p, &v(&[0.0, 0.1, 0.1])).unwrap();
        assert!(t2.is_on(&q));
    }
}
