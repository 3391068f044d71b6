//! T-periodic pairs (λ, x) of the delay equation: shooting on the history
//! segment, pseudo-arclength continuation from trivial pairs, and
//! existence certificates.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::degree::{degree, find_zeros};
use crate::error::{Error, Result};
use crate::integrate::{History, Trajectory};
use crate::poincare::translation_q_lambda;
use crate::region::{sup_distance, BoundingBox, PairRegion, RegionPredicate};
use crate::system::System;

/// (λ, φ) whose initial value problem has a T-periodic solution.
#[derive(Debug, Clone)]
pub struct StartingPair {
    pub lambda: f64,
    pub history: History,
    /// Sign of det g′ at the zero for trivial pairs.
    pub local_sign: i32,
}

/// A solved pair: initial history, the loop on [0, T] and its residual.
#[derive(Debug, Clone)]
pub struct PeriodicPair {
    pub lambda: f64,
    pub history: History,
    pub orbit: Trajectory,
    /// sup over nodes of |Q_λ(φ) − φ|.
    pub residual: f64,
    pub is_trivial: bool,
}

impl PeriodicPair {
    pub fn sup_norm(&self) -> f64 {
        self.orbit.sup_norm()
    }
}

/// One (0, p̂) per zero p of g in the region.
pub fn trivial_starting_pairs(sys: &System, region: &RegionPredicate) -> Result<Vec<StartingPair>> {
    let zeros = find_zeros(
        &sys.manifold,
        &sys.g,
        region,
        sys.settings.seeds_per_axis,
        &sys.settings,
    )?;
    Ok(zeros
        .into_iter()
        .map(|z| StartingPair {
            lambda: 0.0,
            history: sys.constant_history(z.point),
            local_sign: z.local_sign,
        })
        .collect())
}

/// Tangent coordinates around a history: node i moves along the columns
/// of an orthonormal basis of T_{φ(θ_i)}M.
struct Chart {
    base: History,
    bases: Vec<DMatrix<f64>>,
    m: usize,
}

impl Chart {
    fn at(sys: &System, phi: &History) -> Result<Self> {
        let bases = phi
            .values()
            .iter()
            .map(|p| sys.manifold.tangent_basis(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            base: phi.clone(),
            bases,
            m: sys.manifold.dim(),
        })
    }

    fn dim(&self) -> usize {
        self.m * self.bases.len()
    }

    fn apply(&self, sys: &System, delta: &DVector<f64>) -> Result<History> {
        let m = self.m;
        let values = self
            .base
            .values()
            .iter()
            .zip(&self.bases)
            .enumerate()
            .map(|(i, (p, b))| sys.manifold.retract(p, &(b * delta.rows(i * m, m))))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.base.with_values(values))
    }

    /// Bᵢᵀvᵢ stacked.
    fn components(&self, vectors: &[DVector<f64>]) -> DVector<f64> {
        let m = self.m;
        let mut out = DVector::zeros(self.dim());
        for (i, (v, b)) in vectors.iter().zip(&self.bases).enumerate() {
            out.rows_mut(i * m, m).copy_from(&(b.transpose() * v));
        }
        out
    }

    fn coords(&self, other: &History) -> DVector<f64> {
        let diffs: Vec<DVector<f64>> = other
            .values()
            .iter()
            .zip(self.base.values())
            .map(|(a, b)| a - b)
            .collect();
        self.components(&diffs)
    }
}

fn node_sup(r: &DVector<f64>, m: usize) -> f64 {
    (0..r.len() / m.max(1))
        .map(|i| r.rows(i * m, m).norm())
        .fold(0.0, f64::max)
}

/// Node-wise tangent components of Q_λ(φ) − φ, in the basis at each φ(θ_i).
pub fn periodic_residual(sys: &System, lambda: f64, phi: &History) -> Result<DVector<f64>> {
    let out = translation_q_lambda(sys, lambda, phi)?.output;
    let chart = Chart::at(sys, phi)?;
    Ok(chart.coords(&out))
}

fn fd_step(scale: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + scale)
}

fn jacobian_z(sys: &System, lambda: f64, chart: &Chart) -> Result<DMatrix<f64>> {
    let n = chart.dim();
    let h = fd_step(chart.base.sup_norm());
    let mut jac = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = h;
        let plus = periodic_residual(sys, lambda, &chart.apply(sys, &e)?)?;
        e[j] = -h;
        let minus = periodic_residual(sys, lambda, &chart.apply(sys, &e)?)?;
        e[j] = 0.0;
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}

fn derivative_lambda(sys: &System, lambda: f64, phi: &History) -> Result<DVector<f64>> {
    let h = fd_step(lambda.abs());
    let plus = periodic_residual(sys, lambda + h, phi)?;
    let minus = periodic_residual(sys, lambda - h, phi)?;
    Ok((plus - minus) / (2.0 * h))
}

/// The pair (λ, φ) with its loop over one period and its residual.
pub fn periodic_pair(sys: &System, lambda: f64, phi: &History) -> Result<PeriodicPair> {
    let run = translation_q_lambda(sys, lambda, phi)?;
    let residual = sup_distance(&run.output, phi);
    let orbit = run.underlying.forward;
    let tol = sys.settings.zero_tol;
    let is_trivial = lambda.abs() <= f64::EPSILON
        && orbit.spread() <= tol
        && sys.g.eval(phi.at_zero()).norm() <= tol;
    Ok(PeriodicPair {
        lambda,
        history: phi.clone(),
        orbit,
        residual,
        is_trivial,
    })
}

/// Newton on Q_λ(φ) = φ over node tangent coordinates, with a dense
/// central-difference Jacobian and backtracking.
pub fn solve_periodic(sys: &System, lambda: f64, guess: &History) -> Result<History> {
    let s = &sys.settings;
    let m = sys.manifold.dim();
    let values = guess
        .values()
        .iter()
        .map(|p| sys.manifold.project_point(p))
        .collect::<Result<Vec<_>>>()?;
    let mut phi = guess.with_values(values);
    let mut r = periodic_residual(sys, lambda, &phi)?;
    for _ in 0..s.periodic_max_iter {
        if node_sup(&r, m) <= s.periodic_tol {
            return Ok(phi);
        }
        let chart = Chart::at(sys, &phi)?;
        let svd = jacobian_z(sys, lambda, &chart)?.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin >= s.singular_tol * smax.max(1.0)) {
            return Err(Error::SingularJacobian { sigma_min: smin });
        }
        let delta = -svd
            .solve(&r, 0.0)
            .map_err(|e| Error::NewtonDiverged(e.to_string()))?;
        let scale = 1.0 + phi.sup_norm();
        if !(delta.amax() <= 1e4 * scale) {
            return Err(Error::NewtonDiverged(format!(
                "Newton step {:.3e} is out of proportion to the history size {scale:.3e}",
                delta.amax()
            )));
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            if let Ok(trial) = chart.apply(sys, &(&delta * alpha)) {
                if let Ok(rt) = periodic_residual(sys, lambda, &trial) {
                    if rt.norm() < r.norm() {
                        accepted = Some((trial, rt));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, rt)) = accepted else {
            return Err(Error::NewtonDiverged(format!(
                "no decrease along the Newton direction (residual {:.3e})",
                node_sup(&r, m)
            )));
        };
        phi = trial;
        r = rt;
    }
    if node_sup(&r, m) <= s.periodic_tol {
        return Ok(phi);
    }
    Err(Error::NewtonDiverged(format!(
        "no convergence in {} iterations (residual {:.3e})",
        s.periodic_max_iter,
        node_sup(&r, m)
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    LambdaMax,
    NormMax,
    LeftOmega,
    Vertical,
    StepFailure,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Termination::LambdaMax => "LambdaMax",
            Termination::NormMax => "NormMax",
            Termination::LeftOmega => "LeftOmega",
            Termination::Vertical => "Vertical",
            Termination::StepFailure => "StepFailure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationControls {
    pub lambda_max: f64,
    pub norm_max: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    pub lambda_vert_tol: f64,
    pub n_vert: usize,
    pub corrector_max_iter: usize,
}

impl Default for ContinuationControls {
    fn default() -> Self {
        Self {
            lambda_max: 10.0,
            norm_max: 1e3,
            initial_step: 1e-2,
            min_step: 1e-6,
            max_step: 0.5,
            max_steps: 2000,
            lambda_vert_tol: 1e-6,
            n_vert: 5,
            corrector_max_iter: 8,
        }
    }
}

impl ContinuationControls {
    /// Caps λ and the loop norm by the bounds of Ω where those are finite.
    pub fn within(&self, omega: &PairRegion) -> Self {
        let mut out = self.clone();
        if omega.lambda_max.is_finite() {
            out.lambda_max = omega.lambda_max;
        }
        if omega.norm_max.is_finite() {
            out.norm_max = omega.norm_max;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub origin: StartingPair,
    pub pairs: Vec<PeriodicPair>,
    /// Cumulative arclength at each pair.
    pub arclength: Vec<f64>,
    pub termination: Termination,
    /// StepFailure strictly inside Ω.
    pub anomaly: bool,
    pub detail: Option<String>,
}

impl Branch {
    pub fn last(&self) -> &PeriodicPair {
        self.pairs
            .last()
            .expect("a branch holds at least its origin")
    }

    pub fn lambda_range(&self) -> (f64, f64) {
        self.pairs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.lambda), hi.max(p.lambda))
            })
    }
}

/// Direction in (λ, history) space: λ-component and one ambient tangent
/// vector per node. Unit length in the weighted norm λ² + w·Σ|vᵢ|².
#[derive(Debug, Clone)]
struct Tangent {
    lambda: f64,
    nodes: Vec<DVector<f64>>,
}

fn weighted_distance(w: f64, a: (f64, &History), b: (f64, &History)) -> f64 {
    let dz: f64 =
        a.1.values()
            .iter()
            .zip(b.1.values())
            .map(|(x, y)| (x - y).norm_squared())
            .sum();
    ((a.0 - b.0).powi(2) + w * dz).sqrt()
}

/// Null direction of [∂_λ r | ∂_z r] at a solved pair, from the SVD of the
/// Jacobian padded to a square matrix with a zero row.
fn null_tangent(sys: &System, lambda: f64, phi: &History, w: f64) -> Result<Tangent> {
    let chart = Chart::at(sys, phi)?;
    let n = chart.dim();
    let jz = jacobian_z(sys, lambda, &chart)?;
    let jl = derivative_lambda(sys, lambda, phi)?;
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, 1)).copy_from(&jl);
    a.view_mut((0, 1), (n, n)).copy_from(&jz);
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let k = svd.singular_values.imin();
    let v: DVector<f64> = vt.row(k).transpose();
    let mut tl = v[0];
    let mut tz = v.rows(1, n).into_owned();
    let norm = (tl * tl + w * tz.norm_squared()).sqrt();
    tl /= norm;
    tz /= norm;
    let flip = if tl.abs() > 1e-6 {
        tl < 0.0
    } else {
        let lead = tz
            .iter()
            .find(|c| c.abs() > 1e-6 * tz.amax())
            .copied()
            .unwrap_or(1.0);
        lead < 0.0
    };
    if flip {
        tl = -tl;
        tz = -tz;
    }
    let m = chart.m;
    let nodes = chart
        .bases
        .iter()
        .enumerate()
        .map(|(i, b)| b * tz.rows(i * m, m))
        .collect();
    Ok(Tangent { lambda: tl, nodes })
}

fn secant(w: f64, from: (f64, &History), to: (f64, &History)) -> Tangent {
    let d = weighted_distance(w, from, to).max(f64::MIN_POSITIVE);
    Tangent {
        lambda: (to.0 - from.0) / d,
        nodes: to
            .1
            .values()
            .iter()
            .zip(from.1.values())
            .map(|(a, b)| (a - b) / d)
            .collect(),
    }
}

/// Newton on the periodicity residual with the pseudo-arclength condition
/// appended. Linear solves are minimum-norm with a tiny relative cutoff, so
/// nearly rank-deficient Jacobians are still followed.
fn correct(
    sys: &System,
    predictor: (f64, &History),
    tangent: &Tangent,
    w: f64,
    controls: &ContinuationControls,
) -> Result<(f64, History, usize)> {
    let s = &sys.settings;
    let m = sys.manifold.dim();
    let (lam_p, phi_p) = predictor;
    let chart_p = Chart::at(sys, phi_p)?;
    let tz_p = chart_p.components(&tangent.nodes);
    let mut lam = lam_p;
    let mut phi = phi_p.clone();
    for it in 0..controls.corrector_max_iter {
        let r = periodic_residual(sys, lam, &phi)?;
        let a = tangent.lambda * (lam - lam_p) + w * tz_p.dot(&chart_p.coords(&phi));
        if node_sup(&r, m) <= s.periodic_tol && a.abs() <= s.periodic_tol {
            return Ok((lam, phi, it));
        }
        let chart = Chart::at(sys, &phi)?;
        let n = chart.dim();
        let jz = jacobian_z(sys, lam, &chart)?;
        let jl = derivative_lambda(sys, lam, &phi)?;
        let tz = chart.components(&tangent.nodes);
        let mut mat = DMatrix::zeros(n + 1, n + 1);
        mat[(0, 0)] = tangent.lambda;
        mat.view_mut((0, 1), (1, n))
            .copy_from(&(tz.transpose() * w));
        mat.view_mut((1, 0), (n, 1)).copy_from(&jl);
        mat.view_mut((1, 1), (n, n)).copy_from(&jz);
        let mut rhs = DVector::zeros(n + 1);
        rhs[0] = -a;
        rhs.rows_mut(1, n).copy_from(&(-r));
        let svd = mat.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let delta = svd
            .solve(&rhs, cutoff)
            .map_err(|e| Error::NewtonDiverged(e.to_string()))?;
        if !delta.iter().all(|d| d.is_finite()) || delta.amax() > 10.0 * controls.max_step.max(1.0)
        {
            return Err(Error::NewtonDiverged("corrector step too large".into()));
        }
        lam += delta[0];
        phi = chart.apply(sys, &delta.rows(1, n).into_owned())?;
    }
    Err(Error::NewtonDiverged(format!(
        "corrector did not converge in {} iterations",
        controls.corrector_max_iter
    )))
}

/// Sample points around `center` for deciding whether f vanishes.
fn probe_points(sys: &System, center: &DVector<f64>) -> Vec<DVector<f64>> {
    let bbox = BoundingBox::around(center.as_slice(), 1.0);
    let mut out = vec![center.clone()];
    for p in bbox.grid(3) {
        if let Ok(q) = sys.manifold.project_point(&p) {
            out.push(q);
        }
    }
    out
}

fn finish(
    origin: &StartingPair,
    pairs: Vec<PeriodicPair>,
    arclength: Vec<f64>,
    termination: Termination,
    detail: Option<String>,
    controls: &ContinuationControls,
) -> Branch {
    let last = pairs.last().expect("origin pair present");
    let anomaly = termination == Termination::StepFailure
        && last.lambda >= -controls.lambda_vert_tol
        && last.lambda < controls.lambda_max
        && last.sup_norm() < controls.norm_max;
    Branch {
        origin: origin.clone(),
        pairs,
        arclength,
        termination,
        anomaly,
        detail,
    }
}

fn horizontal_branch(
    sys: &System,
    origin: &StartingPair,
    first: PeriodicPair,
    controls: &ContinuationControls,
) -> Result<Branch> {
    let span = controls.lambda_max - origin.lambda;
    let n = (span / controls.max_step).ceil().max(1.0) as usize;
    let mut pairs = vec![first];
    let mut arclength = vec![0.0];
    for j in 1..=n {
        let lam = if j == n {
            controls.lambda_max
        } else {
            origin.lambda + span * j as f64 / n as f64
        };
        let prev = pairs.last().expect("origin pair present").lambda;
        pairs.push(periodic_pair(sys, lam, &origin.history)?);
        arclength.push(arclength.last().copied().unwrap_or(0.0) + (lam - prev));
    }
    Ok(finish(
        origin,
        pairs,
        arclength,
        Termination::LambdaMax,
        Some("perturbation vanishes identically; horizontal branch".into()),
        controls,
    ))
}

/// Pseudo-arclength continuation of T-periodic pairs from a starting pair.
pub fn continue_branch(
    sys: &System,
    origin: &StartingPair,
    controls: &ContinuationControls,
) -> Result<Branch> {
    let s = &sys.settings;
    let first = periodic_pair(sys, origin.lambda, &origin.history)?;
    if first.residual > s.periodic_tol {
        return Err(Error::NotAdmissible(format!(
            "starting pair is not periodic (residual {:.3e})",
            first.residual
        )));
    }
    if sys
        .f
        .vanishes_on_probes(&probe_points(sys, origin.history.at_zero()))
    {
        return horizontal_branch(sys, origin, first, controls);
    }

    let w = 1.0 / origin.history.values().len() as f64;
    let mut tangent = null_tangent(sys, origin.lambda, &origin.history, w)?;
    let mut pairs = vec![first];
    let mut arclength = vec![0.0];
    let mut step = controls.initial_step;
    let mut vertical_run = 0usize;
    let mut last_error: Option<String> = None;

    loop {
        if pairs.len() > controls.max_steps {
            return Ok(finish(
                origin,
                pairs,
                arclength,
                Termination::StepFailure,
                Some(format!("step budget of {} exhausted", controls.max_steps)),
                controls,
            ));
        }
        if step < controls.min_step {
            return Ok(finish(
                origin,
                pairs,
                arclength,
                Termination::StepFailure,
                last_error,
                controls,
            ));
        }
        let cur = pairs.last().expect("origin pair present").clone();
        let chart = Chart::at(sys, &cur.history)?;
        let tz = chart.components(&tangent.nodes);

        if tangent.lambda > 0.0 && cur.lambda + step * tangent.lambda >= controls.lambda_max {
            let sf = (controls.lambda_max - cur.lambda) / tangent.lambda;
            let solved = chart
                .apply(sys, &(&tz * sf))
                .and_then(|guess| solve_periodic(sys, controls.lambda_max, &guess))
                .and_then(|phi| periodic_pair(sys, controls.lambda_max, &phi));
            match solved {
                Ok(pair) => {
                    let ds = weighted_distance(
                        w,
                        (cur.lambda, &cur.history),
                        (pair.lambda, &pair.history),
                    );
                    arclength.push(arclength.last().copied().unwrap_or(0.0) + ds);
                    pairs.push(pair);
                    return Ok(finish(
                        origin,
                        pairs,
                        arclength,
                        Termination::LambdaMax,
                        None,
                        controls,
                    ));
                }
                Err(e) => {
                    last_error = Some(e.to_string());
                    step = sf * 0.5;
                    continue;
                }
            }
        }

        let lam_p = cur.lambda + step * tangent.lambda;
        let attempt = chart.apply(sys, &(&tz * step)).and_then(|phi_p| {
            let (lam, phi, iters) = correct(sys, (lam_p, &phi_p), &tangent, w, controls)?;
            if weighted_distance(w, (lam, &phi), (lam_p, &phi_p)) > step {
                return Err(Error::NewtonDiverged(
                    "corrector left the step neighbourhood".into(),
                ));
            }
            Ok((periodic_pair(sys, lam, &phi)?, iters))
        });
        let (pair, iters) = match attempt {
            Ok(x) => x,
            Err(e) => {
                last_error = Some(e.to_string());
                step *= 0.5;
                continue;
            }
        };

        let ds = weighted_distance(w, (cur.lambda, &cur.history), (pair.lambda, &pair.history));
        tangent = secant(w, (cur.lambda, &cur.history), (pair.lambda, &pair.history));
        arclength.push(arclength.last().copied().unwrap_or(0.0) + ds);
        let (lam, norm) = (pair.lambda, pair.sup_norm());
        pairs.push(pair);

        if lam < -controls.lambda_vert_tol {
            return Ok(finish(
                origin,
                pairs,
                arclength,
                Termination::LeftOmega,
                None,
                controls,
            ));
        }
        if lam >= controls.lambda_max {
            return Ok(finish(
                origin,
                pairs,
                arclength,
                Termination::LambdaMax,
                None,
                controls,
            ));
        }
        if norm >= controls.norm_max {
            return Ok(finish(
                origin,
                pairs,
                arclength,
                Termination::NormMax,
                None,
                controls,
            ));
        }
        if lam.abs() <= controls.lambda_vert_tol {
            vertical_run += 1;
            if vertical_run >= controls.n_vert {
                return Ok(finish(
                    origin,
                    pairs,
                    arclength,
                    Termination::Vertical,
                    None,
                    controls,
                ));
            }
        } else {
            vertical_run = 0;
        }
        if iters <= 3 {
            step = (step * 2.0).min(controls.max_step);
        }
    }
}

/// Existence certificate for a connected set of nontrivial T-periodic pairs
/// in Ω, with continuation witnesses from every trivial pair in Ω ∩ M.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub degree: i64,
    pub issued: bool,
    pub witnesses: Vec<Branch>,
}

impl Certificate {
    pub fn anomaly(&self) -> bool {
        self.witnesses.iter().any(|b| b.anomaly)
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("deg(g, Omega ∩ M) = {}\n", self.degree));
        if self.issued {
            out.push_str(
                "certificate: issued; Omega contains a connected set of nontrivial T-periodic pairs \
                 meeting the trivial pairs, not both bounded and contained in Omega\n",
            );
        } else {
            out.push_str("certificate: none (degree zero says nothing about branches)\n");
        }
        for (i, b) in self.witnesses.iter().enumerate() {
            let (lo, hi) = b.lambda_range();
            out.push_str(&format!(
                "witness {i}: origin {:?} sign {:+} pairs {} lambda [{lo:.6e}, {hi:.6e}] arclength {:.6e} termination {}{}\n",
                b.origin.history.at_zero().as_slice(),
                b.origin.local_sign,
                b.pairs.len(),
                b.arclength.last().copied().unwrap_or(0.0),
                b.termination,
                if b.anomaly { " ANOMALY" } else { "" }
            ));
            if let Some(d) = &b.detail {
                out.push_str(&format!("  note: {d}\n"));
            }
        }
        out
    }
}

/// Computes deg(g, Ω ∩ M); when nonzero, launches a witness branch from
/// every trivial pair in Ω ∩ M (independent branches run in parallel).
pub fn branch_certificate(
    sys: &System,
    omega: &PairRegion,
    controls: &ContinuationControls,
) -> Result<Certificate> {
    let section = omega.section();
    let deg = degree(&sys.manifold, &sys.g, &section, &sys.settings)?;
    if deg == 0 {
        return Ok(Certificate {
            degree: 0,
            issued: false,
            witnesses: Vec::new(),
        });
    }
    let controls = controls.within(omega);
    let starts = trivial_starting_pairs(sys, &section)?;
    let witnesses = starts
        .par_iter()
        .map(|sp| continue_branch(sys, sp, &controls))
        .collect::<Result<Vec<_>>>()?;
    Ok(Certificate {
        degree: deg,
        issued: true,
        witnesses,
    })
}
