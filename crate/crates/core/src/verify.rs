//! Built-in check suite over the named examples.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::branch::{
    branch_certificate, continue_branch, solve_periodic, trivial_starting_pairs, Termination,
};
use crate::builtin::{example, names};
use crate::config::Problem;
use crate::degree::{
    box_polyline, check_poincare_hopf, circle_polyline, degree_report, winding_degree_planar,
};
use crate::error::Result;
use crate::fields::TangentField;
use crate::index::{index_p_region, index_q_region, verify_fix_correspondence};
use crate::integrate::{flow_dde, flow_ode, variational_flow, FlowOptions, Trajectory};
use crate::manifold::EmbeddedManifold;
use crate::poincare::poincare_p;
use crate::region::{BoundingBox, HistoryRegion, RegionPredicate};
use crate::settings::Settings;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = Result<(bool, String)>;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_vec(xs.to_vec())
}

/// |c| for x(t) ≈ Im(c e^{it}) sampled on a uniform grid over one period.
pub fn first_harmonic_amplitude(orbit: &Trajectory) -> f64 {
    let t = orbit.times();
    let x = orbit.states();
    let n = t.len() - 1;
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..n {
        a += x[i][0] * t[i].sin();
        b += x[i][0] * t[i].cos();
    }
    let scale = 2.0 / n as f64;
    (a * scale).hypot(b * scale)
}

pub fn oscillator_amplitude(lambda: f64) -> f64 {
    lambda / (1.0 + (1.0 - lambda).powi(2)).sqrt()
}

fn cubic_degree() -> Outcome {
    let p = example("cubic1d")?;
    let rep = degree_report(
        &p.system.manifold,
        &p.system.g,
        &p.region_or_whole()?,
        &p.system.settings,
    )?;
    Ok((
        rep.degree == -1 && rep.zeros.len() == 3,
        format!("deg = {}", rep.degree),
    ))
}

fn index_equals_degree(p: &Problem, subregions: Vec<RegionPredicate>) -> Outcome {
    let whole = index_p_region(&p.system, &p.region_or_whole()?)?;
    let mut detail = format!("whole: ind P = deg(-g) = {}", whole.index);
    for r in &subregions {
        let rep = index_p_region(&p.system, r)?;
        detail.push_str(&format!("; {}: {}", r.label(), rep.index));
    }
    Ok((true, detail))
}

fn cubic_index() -> Outcome {
    let p = example("cubic1d")?;
    let subs = [-1.0, 0.0, 1.0]
        .iter()
        .map(|c| RegionPredicate::open_box(BoundingBox::new(vec![c - 0.5], vec![c + 0.5])))
        .collect();
    index_equals_degree(&p, subs)
}

fn sphere_index() -> Outcome {
    let p = example("sphere_height")?;
    let subs = vec![
        RegionPredicate::ball(vec![0.0, 0.0, 1.0], 0.5),
        RegionPredicate::ball(vec![0.0, 0.0, -1.0], 0.5),
    ];
    index_equals_degree(&p, subs)
}

fn q_reduction() -> Outcome {
    let p = example("cubic1d")?;
    let sys = &p.system;
    let regions = [(1.0, 0.5), (-1.0, 0.5), (0.0, 0.3), (0.5, 1.2)];
    let mut detail = Vec::new();
    for (c, r) in regions {
        let w = HistoryRegion::sup_ball(sys.constant_history(v(&[c])), r);
        let rep = index_q_region(sys, &w)?;
        detail.push(format!("B({c},{r}): {}", rep.index_q));
    }
    Ok((true, detail.join(", ")))
}

fn poincare_hopf() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for name in ["sphere_height", "torus_flow"] {
        let p = example(name)?;
        let rep = check_poincare_hopf(&p.system.manifold, &p.system.g, &p.system.settings)?;
        ok &= rep.pass;
        detail.push(format!(
            "{name}: deg {} chi {}",
            rep.degree, rep.euler_characteristic
        ));
    }
    Ok((ok, detail.join(", ")))
}

fn winding() -> Outcome {
    let w = |x: f64, y: f64| [x * x - y * y, 2.0 * x * y];
    let d = winding_degree_planar(w, &circle_polyline([0.0, 0.0], 1.0, 64), 1024, 1e-8)?;
    Ok((d == 2, format!("winding of z^2 = {d}")))
}

fn oscillator_solution() -> Outcome {
    let p = example("delay_oscillator")?;
    let (lambda, guess) = p.periodic.clone().expect("example has [periodic]");
    let phi = solve_periodic(&p.system, lambda, &guess)?;
    let err = phi
        .thetas()
        .iter()
        .zip(phi.values())
        .map(|(th, x)| (x[0] - th.sin()).abs())
        .fold(0.0, f64::max);
    Ok((err <= 1e-6, format!("sup |phi - sin| = {err:.2e}")))
}

fn oscillator_branch() -> Outcome {
    let p = example("delay_oscillator")?;
    let starts = trivial_starting_pairs(&p.system, &p.region_or_whole()?)?;
    let b = continue_branch(&p.system, &starts[0], &p.controls)?;
    let err = b
        .pairs
        .iter()
        .map(|q| (first_harmonic_amplitude(&q.orbit) - oscillator_amplitude(q.lambda)).abs())
        .fold(0.0, f64::max);
    let ok = b.termination == Termination::LambdaMax && err <= 1e-5;
    Ok((
        ok,
        format!(
            "{} pairs, {}, amplitude error {err:.2e}",
            b.pairs.len(),
            b.termination
        ),
    ))
}

fn resonance() -> Outcome {
    let p = example("resonance")?;
    let starts = trivial_starting_pairs(&p.system, &p.region_or_whole()?)?;
    let b = continue_branch(&p.system, &starts[0], &p.controls)?;
    let (_, hi) = b.lambda_range();
    let (lambda, guess) = p.periodic.clone().expect("example has [periodic]");
    let solve = solve_periodic(&p.system, lambda, &guess);
    let ok = b.termination == Termination::Vertical && hi <= 1e-6 && solve.is_err();
    Ok((
        ok,
        format!(
            "{}, max lambda {hi:.2e}, solve at {lambda}: {}",
            b.termination,
            if solve.is_err() { "fails" } else { "converged" }
        ),
    ))
}

fn horizontal() -> Outcome {
    let p = example("cubic1d")?;
    let cert = branch_certificate(&p.system, &p.omega, &p.controls)?;
    let mut ok = !cert.witnesses.is_empty();
    let mut spread: f64 = 0.0;
    for b in &cert.witnesses {
        ok &= b.termination == Termination::LambdaMax && b.last().lambda == p.controls.lambda_max;
        for q in &b.pairs {
            spread = spread.max(q.orbit.spread());
        }
    }
    Ok((
        ok && spread <= 1e-9,
        format!(
            "{} branches, loop spread {spread:.1e}",
            cert.witnesses.len()
        ),
    ))
}

fn correspondence() -> Outcome {
    let p = example("rotation")?;
    let w = p
        .history_region
        .clone()
        .expect("example has a history region");
    let rep = verify_fix_correspondence(&p.system, &w);
    let outside = rep.entries.iter().filter(|e| e.in_w && !e.in_check).count();
    Ok((
        rep.exhibits_gap,
        format!("{outside} fixed points of P in h^-1(W) outside W_check"),
    ))
}

fn certificates() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for name in names() {
        let p = example(name)?;
        let cert = branch_certificate(&p.system, &p.omega, &p.controls)?;
        ok &= !cert.anomaly();
        detail.push(format!(
            "{name}: deg {} {}",
            cert.degree,
            if cert.anomaly() { "ANOMALY" } else { "ok" }
        ));
    }
    Ok((ok, detail.join(", ")))
}

fn rk4_order() -> Outcome {
    let p = example("decay")?;
    let m = &p.system.manifold;
    let x0 = v(&[1.0]);
    let err = |h: f64| -> Result<f64> {
        let tr = flow_ode(m, &p.system.g, &x0, 0.0, 1.0, &FlowOptions::with_step(h))?;
        Ok((tr.final_state()[0] - (-1.0f64).exp()).abs())
    };
    let ratio = err(0.1)? / err(0.05)?;
    Ok((ratio >= 15.0, format!("error ratio {ratio:.2}")))
}

fn variational() -> Outcome {
    let p = example("cubic1d")?;
    let sys = &p.system;
    let x = v(&[0.5]);
    let mono = variational_flow(&sys.manifold, &sys.g, &x, sys.period(), sys.flow_options())?;
    let eps = 1e-5;
    let fd = (poincare_p(sys, &v(&[0.5 + eps]))?[0] - poincare_p(sys, &v(&[0.5 - eps]))?[0])
        / (2.0 * eps);
    let rel = (mono.matrix[(0, 0)] - fd).abs() / fd.abs();
    Ok((rel <= 1e-4, format!("relative difference {rel:.1e}")))
}

fn adherence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for name in ["sphere_height", "torus_flow"] {
        let p = example(name)?;
        let sys = &p.system;
        let x0 = p
            .flow
            .initial
            .clone()
            .expect("example has an initial point");
        let tr = flow_ode(
            &sys.manifold,
            &sys.g,
            &x0,
            0.0,
            p.flow.t_end,
            sys.flow_options(),
        )?;
        let dde = flow_dde(
            &sys.manifold,
            &sys.g,
            &sys.f,
            1.0,
            &sys.constant_history(x0),
            p.flow.t_end,
            sys.flow_options(),
        )?;
        let bound = 10.0 * sys.manifold.on_tolerance();
        let viol = tr
            .max_violation(&sys.manifold)
            .max(dde.max_violation(&sys.manifold));
        ok &= viol <= bound;
        worst = worst.max(viol / bound);
    }
    Ok((
        ok,
        format!("worst violation {worst:.1e} of the allowed bound"),
    ))
}

/// Roots in (−1, 1) at least 0.2 apart.
fn separated_roots(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let mut roots: Vec<f64> = Vec::new();
    while roots.len() < count {
        let r = rng.random_range(-1.0..1.0);
        if roots.iter().all(|q: &f64| (q - r).abs() >= 0.2) {
            roots.push(r);
        }
    }
    roots
}

fn poly(roots: &[f64], lead: f64, x: f64) -> f64 {
    roots.iter().fold(lead, |acc, r| acc * (x - r))
}

/// Sign-sum degree against the winding number for random product fields
/// (p(x), q(y)) on a box.
pub fn random_product_fields(seed: u64, trials: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings = Settings::default();
    let plane = EmbeddedManifold::euclidean(2);
    let mut degrees = Vec::new();
    for _ in 0..trials {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let a = separated_roots(&mut rng, n);
        let b = separated_roots(&mut rng, m);
        let la: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let lb: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (a2, b2) = (a.clone(), b.clone());
        let g = TangentField::new(2, move |p| v(&[poly(&a2, la, p[0]), poly(&b2, lb, p[1])]));
        let bbox = BoundingBox::symmetric(2, 1.5);
        let sum = degree_report(
            &plane,
            &g,
            &RegionPredicate::open_box(bbox.clone()),
            &settings,
        )?
        .degree;
        let (a3, b3) = (a.clone(), b.clone());
        let wind = winding_degree_planar(
            move |x, y| [poly(&a3, la, x), poly(&b3, lb, y)],
            &box_polyline(&bbox),
            settings.winding_samples,
            settings.zero_tol,
        )?;
        if sum != wind {
            return Ok((
                false,
                format!("roots {a:?} x {b:?}: sign sum {sum}, winding {wind}"),
            ));
        }
        degrees.push(sum);
    }
    Ok((true, format!("seed {seed}: degrees {degrees:?}")))
}

type CheckFn = fn() -> Outcome;

const CHECKS: &[(&str, CheckFn)] = &[
    ("degree of cubic1d is -1", cubic_degree),
    ("ind P = deg(-g) on cubic1d", cubic_index),
    ("ind P = deg(-g) on the sphere", sphere_index),
    ("ind Q = deg(-g, W_check) = ind P", q_reduction),
    ("Poincare-Hopf on sphere and torus", poincare_hopf),
    ("planar winding number", winding),
    ("delay oscillator solves to sin t", oscillator_solution),
    ("delay oscillator branch amplitude", oscillator_branch),
    ("resonance branch is vertical", resonance),
    ("unforced branches are horizontal", horizontal),
    ("fix(P, h^-1(W)) not inside W_check", correspondence),
    ("no anomalies under certificates", certificates),
    ("RK4 fourth order", rk4_order),
    ("variational flow matches differences", variational),
    ("trajectories stay on the manifold", adherence),
];

fn check(name: &'static str, outcome: Outcome) -> Check {
    match outcome {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Runs every check; independent checks run in parallel, results keep
/// their fixed order. `seed` drives the randomized degree check.
pub fn run_suite(seed: u64) -> Vec<Check> {
    let mut out: Vec<Check> = CHECKS
        .par_iter()
        .map(|(name, f)| check(name, f()))
        .collect();
    out.push(check(
        "sign-sum degree matches winding",
        random_product_fields(seed, 5),
    ));
    out
}
