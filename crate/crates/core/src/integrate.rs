//! Fixed-step RK4 (optionally step-doubling adaptive) on embedded manifolds,
//! the method of steps for the delay equation, and the variational flow.
//!
//! Every accepted step is followed by a closest-point retraction onto M, so
//! trajectories satisfy the constraint to the manifold's `on_tolerance`.
//! Dense output is cubic Hermite using the stored right-hand-side values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::{PerturbationField, TangentField};
use crate::manifold::EmbeddedManifold;
use crate::settings::Settings;

/// Delay after reduction modulo the period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    /// r = 0: the equation is an ODE and histories collapse to φ(0).
    Zero,
    /// r′ ∈ (0, T].
    Positive(f64),
}

impl Delay {
    pub fn value(self) -> f64 {
        match self {
            Delay::Zero => 0.0,
            Delay::Positive(r) => r,
        }
    }
}

/// Replaces r by r − nT with the unique integer n such that 0 < r − nT ≤ T.
/// Both delays give the same T-periodic solutions.
pub fn normalize_delay(r: f64, period: f64) -> Delay {
    assert!(period > 0.0, "period must be positive");
    assert!(r >= 0.0, "delay must be non-negative");
    if r == 0.0 {
        return Delay::Zero;
    }
    let n = (r / period).ceil() - 1.0;
    let mut reduced = r - n * period;
    if reduced <= 0.0 {
        reduced += period;
    } else if reduced > period {
        reduced -= period;
    }
    Delay::Positive(reduced)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    /// Fixed step; the final step is shortened so the end time is hit exactly.
    pub step: f64,
    /// Step-doubling local error target (ODE flows only).
    pub adaptive_tol: Option<f64>,
    pub escape_radius: f64,
}

impl FlowOptions {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            adaptive_tol: None,
            escape_radius: 1e6,
        }
    }

    /// Step T / steps_per_period, shrunk so that the delay is an integer
    /// multiple of the step (delay breakpoints then fall on grid points).
    pub fn for_problem(period: f64, delay: Delay, settings: &Settings) -> Self {
        let base = period / settings.steps_per_period as f64;
        let step = match delay {
            Delay::Zero => base,
            Delay::Positive(r) => r / (r / base).ceil().max(1.0),
        };
        Self {
            step,
            adaptive_tol: settings.adaptive_tol,
            escape_radius: settings.escape_radius,
        }
    }
}

/// Time grid from t0 to t1 with spacing h and an exact final node.
fn time_grid(t0: f64, t1: f64, h: f64) -> Vec<f64> {
    let span = t1 - t0;
    if span <= 0.0 {
        return vec![t0];
    }
    let ratio = span / h;
    let n = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    };
    let mut grid: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
    grid.push(t1);
    grid
}

fn hermite(
    y0: &DVector<f64>,
    m0: &DVector<f64>,
    y1: &DVector<f64>,
    m1: &DVector<f64>,
    h: f64,
    s: f64,
) -> DVector<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    y0 * h00 + m0 * (h10 * h) + y1 * h01 + m1 * (h11 * h)
}

/// States on a strictly increasing time grid with the vector field value at
/// every node (used for Hermite dense output).
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    slopes: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn slopes(&self) -> &[DVector<f64>] {
        &self.slopes
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("empty trajectory")
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("empty trajectory")
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.times.len();
        match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).expect("NaN time"))
        {
            Ok(i) => i.min(n.saturating_sub(2)),
            Err(i) => i.saturating_sub(1).min(n.saturating_sub(2)),
        }
    }

    /// Cubic Hermite dense output in ambient coordinates.
    pub fn at(&self, t: f64) -> DVector<f64> {
        if self.times.len() == 1 {
            return self.states[0].clone();
        }
        let i = self.interval(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        if s == 0.0 {
            return self.states[i].clone();
        }
        if s == 1.0 {
            return self.states[i + 1].clone();
        }
        hermite(
            &self.states[i],
            &self.slopes[i],
            &self.states[i + 1],
            &self.slopes[i + 1],
            h,
            s,
        )
    }

    /// Dense output pulled back onto M.
    pub fn at_on(&self, manifold: &EmbeddedManifold, t: f64) -> Result<DVector<f64>> {
        manifold.project_point(&self.at(t))
    }

    pub fn max_violation(&self, manifold: &EmbeddedManifold) -> f64 {
        self.states
            .iter()
            .map(|s| manifold.violation(s))
            .fold(0.0, f64::max)
    }

    /// max over nodes of |x(t)|.
    pub fn sup_norm(&self) -> f64 {
        self.states.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// max over nodes of |x(t) − x(0)|.
    pub fn spread(&self) -> f64 {
        let x0 = &self.states[0];
        self.states
            .iter()
            .map(|s| (s - x0).norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn from_parts(
        times: Vec<f64>,
        states: Vec<DVector<f64>>,
        slopes: Vec<DVector<f64>>,
    ) -> Self {
        debug_assert!(times.len() == states.len() && states.len() == slopes.len());
        Self {
            times,
            states,
            slopes,
        }
    }
}

/// A discretised element of C([−r, 0], M): values on n_h + 1 uniform nodes,
/// interpolated by cubic Hermite with fourth-order finite-difference slopes.
/// With r = 0 the history is the single value φ(0).
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    delay: f64,
    thetas: Vec<f64>,
    values: Vec<DVector<f64>>,
    slopes: Vec<DVector<f64>>,
}

impl History {
    /// `values[i]` sits at θ_i = −r + i·r/n_h.
    pub fn new(delay: f64, values: Vec<DVector<f64>>) -> Self {
        if delay == 0.0 {
            assert_eq!(values.len(), 1, "a zero-delay history has a single node");
            let dim = values[0].len();
            return Self {
                delay,
                thetas: vec![0.0],
                values,
                slopes: vec![DVector::zeros(dim)],
            };
        }
        let n = values.len() - 1;
        assert!(n >= 4, "a history needs at least 4 intervals");
        let d = delay / n as f64;
        let thetas = (0..=n)
            .map(|i| if i == n { 0.0 } else { -delay + i as f64 * d })
            .collect();
        let slopes = fd_slopes(&values, d);
        Self {
            delay,
            thetas,
            values,
            slopes,
        }
    }

    pub fn from_fn<F>(delay: f64, intervals: usize, f: F) -> Self
    where
        F: Fn(f64) -> DVector<f64>,
    {
        if delay == 0.0 {
            return Self::new(0.0, vec![f(0.0)]);
        }
        let d = delay / intervals as f64;
        let values = (0..=intervals)
            .map(|i| {
                f(if i == intervals {
                    0.0
                } else {
                    -delay + i as f64 * d
                })
            })
            .collect();
        Self::new(delay, values)
    }

    /// The constant history p̂.
    pub fn constant(p: DVector<f64>, delay: f64, intervals: usize) -> Self {
        if delay == 0.0 {
            return Self::new(0.0, vec![p]);
        }
        Self::new(delay, vec![p; intervals + 1])
    }

    /// Constant history on the same grid as `self`.
    pub fn constant_like(&self, p: DVector<f64>) -> Self {
        let n = self.values.len();
        let dim = p.len();
        Self {
            delay: self.delay,
            thetas: self.thetas.clone(),
            values: vec![p; n],
            slopes: vec![DVector::zeros(dim); n],
        }
    }

    /// Same grid, new node values.
    pub fn with_values(&self, values: Vec<DVector<f64>>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self::new(self.delay, values)
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_degenerate(&self) -> bool {
        self.values.len() == 1
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn ambient_dim(&self) -> usize {
        self.values[0].len()
    }

    /// φ(0).
    pub fn at_zero(&self) -> &DVector<f64> {
        self.values.last().expect("empty history")
    }

    pub fn same_grid(&self, other: &History) -> bool {
        self.values.len() == other.values.len() && self.delay == other.delay
    }

    /// Hermite interpolant at θ ∈ [−r, 0], ambient coordinates.
    pub fn eval_ambient(&self, theta: f64) -> DVector<f64> {
        if self.values.len() == 1 {
            return self.values[0].clone();
        }
        let n = self.values.len() - 1;
        let d = self.delay / n as f64;
        let x = ((theta + self.delay) / d).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let s = x - i as f64;
        if s == 0.0 {
            return self.values[i].clone();
        }
        hermite(
            &self.values[i],
            &self.slopes[i],
            &self.values[i + 1],
            &self.slopes[i + 1],
            d,
            s,
        )
    }

    /// Interpolated value retracted onto M.
    pub fn eval(&self, manifold: &EmbeddedManifold, theta: f64) -> Result<DVector<f64>> {
        manifold.project_point(&self.eval_ambient(theta))
    }

    /// Sup over nodes of |φ(θ_i)|.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Fourth-order finite-difference slopes on a uniform grid (five-point
/// centred stencil inside, five-point one-sided stencils at the ends).
fn fd_slopes(values: &[DVector<f64>], d: f64) -> Vec<DVector<f64>> {
    let n = values.len();
    let f = |i: usize| &values[i];
    (0..n)
        .map(|i| {
            let s = if i >= 2 && i + 2 < n {
                -f(i + 2) + f(i + 1) * 8.0 - f(i - 1) * 8.0 + f(i - 2)
            } else if i == 0 {
                f(0) * -25.0 + f(1) * 48.0 - f(2) * 36.0 + f(3) * 16.0 - f(4) * 3.0
            } else if i == 1 {
                f(0) * -3.0 - f(1) * 10.0 + f(2) * 18.0 - f(3) * 6.0 + f(4)
            } else if i == n - 1 {
                f(n - 1) * 25.0 - f(n - 2) * 48.0 + f(n - 3) * 36.0 - f(n - 4) * 16.0
                    + f(n - 5) * 3.0
            } else {
                f(n - 1) * 3.0 + f(n - 2) * 10.0 - f(n - 3) * 18.0 + f(n - 4) * 6.0 - f(n - 5)
            };
            s / (12.0 * d)
        })
        .collect()
}

fn check_escape(x: &DVector<f64>, t: f64, radius: f64) -> Result<()> {
    if !x.iter().all(|v| v.is_finite()) || x.norm() > radius {
        return Err(Error::BlowUp { time: t, radius });
    }
    Ok(())
}

fn rk4<F>(rhs: &F, t: f64, x: &DVector<f64>, k1: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k2 = rhs(t + 0.5 * h, &(x + k1 * (0.5 * h)))?;
    let k3 = rhs(t + 0.5 * h, &(x + &k2 * (0.5 * h)))?;
    let k4 = rhs(t + h, &(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Solution of ẋ = g(x), x(t0) = p, on [t0, t1].
pub fn flow_ode(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    p: &DVector<f64>,
    t0: f64,
    t1: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    check_escape(p, t0, opts.escape_radius)?;
    let rhs = |_t: f64, x: &DVector<f64>| -> Result<DVector<f64>> { Ok(g.eval(x)) };
    if let Some(tol) = opts.adaptive_tol {
        return flow_adaptive(manifold, &rhs, p, t0, t1, opts, tol);
    }
    let grid = time_grid(t0, t1, opts.step);
    let mut states = Vec::with_capacity(grid.len());
    let mut slopes = Vec::with_capacity(grid.len());
    let mut x = p.clone();
    let mut k1 = g.eval(&x);
    for w in grid.windows(2) {
        let next = rk4(&rhs, w[0], &x, &k1, w[1] - w[0])?;
        let next = manifold.project_point(&next)?;
        check_escape(&next, w[1], opts.escape_radius)?;
        states.push(std::mem::replace(&mut x, next));
        slopes.push(std::mem::replace(&mut k1, g.eval(&x)));
    }
    states.push(x);
    slopes.push(k1);
    Ok(Trajectory::from_parts(grid, states, slopes))
}

fn flow_adaptive<F>(
    manifold: &EmbeddedManifold,
    rhs: &F,
    p: &DVector<f64>,
    t0: f64,
    t1: f64,
    opts: &FlowOptions,
    tol: f64,
) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut times = vec![t0];
    let mut x = p.clone();
    let mut k1 = rhs(t0, &x)?;
    let mut states = Vec::new();
    let mut slopes = Vec::new();
    let mut t = t0;
    let mut h = opts.step.min(t1 - t0);
    let h_min = 1e-12 * (t1 - t0).abs().max(1.0);
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let full = rk4(rhs, t, &x, &k1, h)?;
        let mid = rk4(rhs, t, &x, &k1, 0.5 * h)?;
        let kmid = rhs(t + 0.5 * h, &mid)?;
        let two = rk4(rhs, t + 0.5 * h, &mid, &kmid, 0.5 * h)?;
        let err = (&two - &full).amax() / 15.0;
        if err <= tol || h <= h_min {
            // local extrapolation
            let accepted = &two + (&two - &full) / 15.0;
            let accepted = manifold.project_point(&accepted)?;
            let t_next = if t1 - (t + h) < h_min { t1 } else { t + h };
            check_escape(&accepted, t_next, opts.escape_radius)?;
            states.push(std::mem::replace(&mut x, accepted));
            slopes.push(std::mem::replace(&mut k1, rhs(t_next, &x)?));
            times.push(t_next);
            t = t_next;
        }
        let factor = if err == 0.0 {
            2.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 2.0)
        };
        h = (h * factor).max(h_min);
    }
    states.push(x);
    slopes.push(k1);
    Ok(Trajectory::from_parts(times, states, slopes))
}

/// Solution of the delay equation on [−r, t1]: the history on [−r, 0] and
/// the forward part on [0, t1].
#[derive(Debug, Clone)]
pub struct DelayTrajectory {
    pub history: History,
    pub forward: Trajectory,
}

impl DelayTrajectory {
    /// x(t) for t ∈ [−r, t1], ambient coordinates.
    pub fn at(&self, t: f64) -> DVector<f64> {
        if t < 0.0 {
            self.history.eval_ambient(t)
        } else {
            self.forward.at(t)
        }
    }

    /// Every node on [−r, t1]: history nodes with θ < 0, then the forward grid.
    pub fn nodes(&self) -> Vec<(f64, &DVector<f64>)> {
        let mut out: Vec<(f64, &DVector<f64>)> = self
            .history
            .thetas()
            .iter()
            .zip(self.history.values())
            .filter(|(th, _)| **th < 0.0)
            .map(|(th, v)| (*th, v))
            .collect();
        out.extend(
            self.forward
                .times()
                .iter()
                .copied()
                .zip(self.forward.states()),
        );
        out
    }

    pub fn max_violation(&self, manifold: &EmbeddedManifold) -> f64 {
        self.nodes()
            .into_iter()
            .map(|(_, v)| manifold.violation(v))
            .fold(0.0, f64::max)
    }
}

/// Method of steps for ẋ(t) = g(x(t)) + λ f(t, x(t), x(t − r)), x = φ on
/// [−r, 0]. The step divides r, so delayed arguments are read from the
/// history interpolant or from the Hermite dense output of already
/// computed steps; breakpoints at multiples of r are grid points.
#[allow(clippy::too_many_arguments)]
pub fn flow_dde(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    f: &PerturbationField,
    lambda: f64,
    phi: &History,
    t1: f64,
    opts: &FlowOptions,
) -> Result<DelayTrajectory> {
    assert!(t1 > 0.0, "integration horizon must be positive");
    let p = phi.at_zero().clone();
    check_escape(&p, 0.0, opts.escape_radius)?;
    let r = phi.delay();
    let curved = !manifold.is_euclidean();
    let zero_forcing = lambda == 0.0 || f.is_identically_zero();

    let grid = time_grid(0.0, t1, opts.step);
    let mut states: Vec<DVector<f64>> = Vec::with_capacity(grid.len());
    let mut slopes: Vec<DVector<f64>> = Vec::with_capacity(grid.len());

    // delayed state x(s) for s = t − r, read from the already computed part
    let delayed =
        |s: f64, states: &[DVector<f64>], slopes: &[DVector<f64>]| -> Result<DVector<f64>> {
            let raw = if s <= 0.0 {
                phi.eval_ambient(s)
            } else {
                let n = states.len();
                let i = match grid[..n].binary_search_by(|x| x.partial_cmp(&s).expect("NaN time")) {
                    Ok(i) => i.min(n - 1),
                    Err(i) => i.saturating_sub(1),
                };
                if i + 1 >= n || grid[i] == s {
                    states[i.min(n - 1)].clone()
                } else {
                    let h = grid[i + 1] - grid[i];
                    hermite(
                        &states[i],
                        &slopes[i],
                        &states[i + 1],
                        &slopes[i + 1],
                        h,
                        (s - grid[i]) / h,
                    )
                }
            };
            if curved {
                manifold.project_point(&raw)
            } else {
                Ok(raw)
            }
        };

    let field = |t: f64,
                 x: &DVector<f64>,
                 states: &[DVector<f64>],
                 slopes: &[DVector<f64>]|
     -> Result<DVector<f64>> {
        let mut v = g.eval(x);
        if !zero_forcing {
            let q = if r == 0.0 {
                x.clone()
            } else {
                delayed(t - r, states, slopes)?
            };
            v += f.eval(t, x, &q) * lambda;
        }
        Ok(v)
    };

    let mut x = p;
    let mut k1 = field(0.0, &x, &states, &slopes)?;
    for w in grid.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        // the node being stepped from must be visible to delayed lookups
        states.push(x.clone());
        slopes.push(k1.clone());
        let rhs = |tt: f64, y: &DVector<f64>| field(tt, y, &states, &slopes);
        let next = rk4(&rhs, t, &x, &k1, h)?;
        let next = manifold.project_point(&next)?;
        check_escape(&next, w[1], opts.escape_radius)?;
        x = next;
        k1 = field(w[1], &x, &states, &slopes)?;
    }
    states.push(x);
    slopes.push(k1);
    Ok(DelayTrajectory {
        history: phi.clone(),
        forward: Trajectory::from_parts(grid, states, slopes),
    })
}

/// Linearisation of the time-T map at p.
#[derive(Debug, Clone)]
pub struct Monodromy {
    /// P(p).
    pub endpoint: DVector<f64>,
    /// Images of the tangent basis at p, in ambient coordinates (k×m).
    pub ambient: DMatrix<f64>,
    /// dP(p) in the bases at p and P(p) (m×m).
    pub matrix: DMatrix<f64>,
    pub basis_start: DMatrix<f64>,
    pub basis_end: DMatrix<f64>,
}

/// Integrates v̇ = Dg(x(t))·v along x(p, ·) for each tangent basis vector at
/// p, projecting onto T_{x(t)}M after every step.
pub fn variational_flow(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    p: &DVector<f64>,
    period: f64,
    opts: &FlowOptions,
) -> Result<Monodromy> {
    let k = manifold.ambient_dim();
    let basis_start = manifold.tangent_basis(p)?;
    let m = basis_start.ncols();
    check_escape(p, 0.0, opts.escape_radius)?;
    let grid = time_grid(0.0, period, opts.step);

    let rhs = |x: &DVector<f64>, v: &DMatrix<f64>| -> (DVector<f64>, DMatrix<f64>) {
        (g.eval(x), g.jacobian(x) * v)
    };
    let mut x = p.clone();
    let mut v = basis_start.clone();
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        let (a1, b1) = rhs(&x, &v);
        let (a2, b2) = rhs(&(&x + &a1 * (0.5 * h)), &(&v + &b1 * (0.5 * h)));
        let (a3, b3) = rhs(&(&x + &a2 * (0.5 * h)), &(&v + &b2 * (0.5 * h)));
        let (a4, b4) = rhs(&(&x + &a3 * h), &(&v + &b3 * h));
        let xn = &x + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        let vn = &v + (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
        x = manifold.project_point(&xn)?;
        check_escape(&x, w[1], opts.escape_radius)?;
        v = vn;
        if !manifold.is_euclidean() {
            for j in 0..m {
                let col = manifold.project_tangent_lenient(&x, &v.column(j).into_owned());
                v.set_column(j, &col);
            }
        }
    }
    debug_assert_eq!(v.nrows(), k);
    let basis_end = manifold.tangent_basis(&x)?;
    let matrix = basis_end.transpose() * &v;
    Ok(Monodromy {
        endpoint: x,
        ambient: v,
        matrix,
        basis_start,
        basis_end,
    })
}
