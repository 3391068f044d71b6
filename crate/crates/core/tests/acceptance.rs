//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use dperiod::branch::{
    branch_certificate, continue_branch, solve_periodic, trivial_starting_pairs,
    ContinuationControls, Termination,
};
use dperiod::builtin::{example, names};
use dperiod::degree::{box_polyline, check_poincare_hopf, degree_report, winding_degree_planar};
use dperiod::index::{fixed_points, index_q_region, verify_fix_correspondence};
use dperiod::integrate::{flow_dde, flow_ode, variational_flow, FlowOptions, Trajectory};
use dperiod::poincare::poincare_p;
use dperiod::region::{BoundingBox, HistoryRegion, RegionPredicate};
use dperiod::{EmbeddedManifold, PerturbationField, Settings, System, TangentField};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_vec(xs.to_vec())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn interval(a: f64, b: f64) -> RegionPredicate {
    RegionPredicate::open_box(BoundingBox::new(vec![a], vec![b]))
}

/// ind(P) from monodromy signs and deg(−g) from zero signs, both against
/// an expected integer.
fn p_index_vs_degree(sys: &System, region: &RegionPredicate, expected: i64) -> Result<(), String> {
    let ind: i64 = fixed_points(sys, region)
        .map_err(e)?
        .iter()
        .map(|f| f.index as i64)
        .sum();
    let deg = degree_report(&sys.manifold, &sys.g.negated(), region, &sys.settings)
        .map_err(e)?
        .degree;
    ensure(ind == deg && deg == expected, || {
        format!(
            "{}: ind P {ind}, deg(-g) {deg}, oracle {expected}",
            region.label()
        )
    })
}

fn criterion_1() -> Verdict {
    // x' = x(1 − x²): P'(q) = exp(g'(q) T), index sign(1 − P'(q)).
    let cubic = example("cubic1d").map_err(e)?;
    let gp = |q: f64| 1.0 - 3.0 * q * q;
    let local = |q: f64| (1.0 - (gp(q) * cubic.system.period()).exp()).signum() as i64;
    let zeros = [-1.0, 0.0, 1.0];
    let total: i64 = zeros.iter().map(|q| local(*q)).sum();
    p_index_vs_degree(&cubic.system, &cubic.region_or_whole().map_err(e)?, total)?;
    for q in zeros {
        p_index_vs_degree(&cubic.system, &interval(q - 0.4, q + 0.4), local(q))?;
    }
    // Height field on S²: Dg = ∓I at the poles, so each pole has index +1.
    let sphere = example("sphere_height").map_err(e)?;
    p_index_vs_degree(&sphere.system, &sphere.region_or_whole().map_err(e)?, 2)?;
    for pole in [1.0, -1.0] {
        p_index_vs_degree(
            &sphere.system,
            &RegionPredicate::ball(vec![0.0, 0.0, pole], 0.5),
            1,
        )?;
    }
    Ok(format!(
        "cubic1d total {total}, sphere total 2, every single-zero region agrees"
    ))
}

fn criterion_2() -> Verdict {
    let p = example("cubic1d").map_err(e)?;
    let sys = &p.system;
    let oracle = |c: f64, r: f64| -> i64 {
        [-1.0f64, 0.0, 1.0]
            .iter()
            .filter(|q| (*q - c).abs() < r)
            .map(|q| (3.0 * q * q - 1.0).signum() as i64)
            .sum()
    };
    let balls = [(1.0, 0.5), (-1.0, 0.5), (0.0, 0.3), (0.5, 1.2), (-0.2, 1.6)];
    let mut seen = Vec::new();
    for (c, r) in balls {
        let w = HistoryRegion::sup_ball(sys.constant_history(v(&[c])), r);
        let rep = index_q_region(sys, &w).map_err(e)?;
        let want = oracle(c, r);
        ensure(
            rep.index_q == want && rep.degree_neg_g == want && rep.index_p == want,
            || {
                format!(
                    "B({c}, {r}): ind Q {}, deg {}, ind P {}, oracle {want}",
                    rep.index_q, rep.degree_neg_g, rep.index_p
                )
            },
        )?;
        seen.push(want);
    }
    Ok(format!("{} sup-norm balls, indices {seen:?}", balls.len()))
}

fn criterion_3() -> Verdict {
    let mut out = Vec::new();
    for (name, chi) in [("sphere_height", 2), ("torus_flow", 0)] {
        let p = example(name).map_err(e)?;
        let rep =
            check_poincare_hopf(&p.system.manifold, &p.system.g, &p.system.settings).map_err(e)?;
        ensure(rep.degree == chi && rep.pass, || {
            format!("{name}: deg {} chi {chi}", rep.degree)
        })?;
        out.push(format!("{name} deg {}", rep.degree));
    }
    Ok(out.join(", "))
}

struct Product {
    a: Vec<f64>,
    b: Vec<f64>,
    la: f64,
    lb: f64,
}

impl Product {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let roots = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(1..=3);
            let mut out: Vec<f64> = Vec::new();
            while out.len() < n {
                let r = rng.random_range(-1.0..1.0);
                if out.iter().all(|q: &f64| (q - r).abs() >= 0.25) {
                    out.push(r);
                }
            }
            out.sort_by(f64::total_cmp);
            out
        };
        let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Product {
            a: roots(rng),
            b: roots(rng),
            la: sign(rng),
            lb: sign(rng),
        }
    }

    fn eval(a: &[f64], lead: f64, x: f64) -> f64 {
        a.iter().fold(lead, |acc, r| acc * (x - r))
    }

    fn shifted(&self, d: f64) -> Product {
        Product {
            a: self.a.iter().map(|r| r + d).collect(),
            b: self.b.iter().map(|r| r - d).collect(),
            la: self.la,
            lb: self.lb,
        }
    }

    fn field(&self) -> TangentField {
        let (a, b, la, lb) = (self.a.clone(), self.b.clone(), self.la, self.lb);
        TangentField::new(2, move |p| {
            v(&[Self::eval(&a, la, p[0]), Self::eval(&b, lb, p[1])])
        })
    }

    /// Σ sign p′(aᵢ) · Σ sign q′(bⱼ) over roots inside the given ranges.
    fn oracle(&self, x: (f64, f64), y: (f64, f64)) -> i64 {
        let axis = |roots: &[f64], lead: f64, (lo, hi): (f64, f64)| -> i64 {
            roots
                .iter()
                .enumerate()
                .filter(|(_, r)| **r > lo && **r < hi)
                .map(|(i, r)| {
                    let d: f64 = roots
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, s)| r - s)
                        .product();
                    (lead * d).signum() as i64
                })
                .sum()
        };
        axis(&self.a, self.la, x) * axis(&self.b, self.lb, y)
    }
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(20240517);
    let plane = EmbeddedManifold::euclidean(2);
    let s = Settings::default();
    let deg = |g: &TangentField, r: &RegionPredicate| {
        degree_report(&plane, g, r, &s).map(|d| d.degree).map_err(e)
    };
    let bbox = BoundingBox::symmetric(2, 1.5);
    let whole = RegionPredicate::open_box(bbox.clone());
    let trials = 6;
    for t in 0..trials {
        let prod = Product::random(&mut rng);
        let g = prod.field();
        let full = deg(&g, &whole)?;
        let oracle = prod.oracle((-1.5, 1.5), (-1.5, 1.5));
        ensure(full == oracle, || {
            format!("trial {t}: deg {full}, oracle {oracle}")
        })?;

        // Winding number of the boundary image.
        let (a, b, la, lb) = (prod.a.clone(), prod.b.clone(), prod.la, prod.lb);
        let wind = winding_degree_planar(
            move |x, y| [Product::eval(&a, la, x), Product::eval(&b, lb, y)],
            &box_polyline(&bbox),
            s.winding_samples,
            s.zero_tol,
        )
        .map_err(e)?;
        ensure(wind == full, || {
            format!("trial {t}: winding {wind}, sign sum {full}")
        })?;

        // Excision: a tighter box still containing every zero.
        let lo = [prod.a[0] - 0.1, prod.b[0] - 0.1];
        let hi = [
            prod.a[prod.a.len() - 1] + 0.1,
            prod.b[prod.b.len() - 1] + 0.1,
        ];
        let tight = deg(
            &g,
            &RegionPredicate::open_box(BoundingBox::new(lo.to_vec(), hi.to_vec())),
        )?;
        ensure(tight == full, || {
            format!("trial {t}: excision {tight} vs {full}")
        })?;

        // Additivity: cut between two roots (or beside the only one).
        let cut = if prod.a.len() > 1 {
            0.5 * (prod.a[0] + prod.a[1])
        } else {
            prod.a[0] + 0.12
        };
        let left = deg(
            &g,
            &RegionPredicate::open_box(BoundingBox::new(vec![-1.5, -1.5], vec![cut, 1.5])),
        )?;
        let right = deg(
            &g,
            &RegionPredicate::open_box(BoundingBox::new(vec![cut, -1.5], vec![1.5, 1.5])),
        )?;
        ensure(left + right == full, || {
            format!("trial {t}: additivity {left} + {right} vs {full}")
        })?;
        ensure(left == prod.oracle((-1.5, cut), (-1.5, 1.5)), || {
            format!("trial {t}: left part {left}")
        })?;

        // Homotopy: blend towards a shifted field, zeros never reach the boundary.
        let target = prod.shifted(0.05).field();
        for sgrid in [0.25, 0.5, 0.75, 1.0] {
            let d = deg(&g.blend(&target, sgrid), &whole)?;
            ensure(d == full, || {
                format!("trial {t}: homotopy at s = {sgrid}: {d} vs {full}")
            })?;
        }
    }
    Ok(format!("{trials} seeded trials per axiom"))
}

/// |c| for x(t) = Im(c e^{it}) from trapezoid sums over one period.
fn amplitude(orbit: &Trajectory) -> f64 {
    let (t, x) = (orbit.times(), orbit.states());
    let n = t.len() - 1;
    let mut s = 0.0;
    let mut c = 0.0;
    for i in 0..n {
        s += x[i][0] * t[i].sin();
        c += x[i][0] * t[i].cos();
    }
    (2.0 / n as f64) * s.hypot(c)
}

fn criterion_5() -> Verdict {
    // x = sin t: cos t = −sin t + (sin t − sin(t − π/2)) for all t.
    let defect = (0..100)
        .map(|i| {
            let t = 0.0628 * i as f64;
            (t.cos() - (-t.sin() + t.sin() - (t - FRAC_PI_2).sin())).abs()
        })
        .fold(0.0, f64::max);
    ensure(defect < 1e-14, || {
        format!("substitution defect {defect:.1e}")
    })?;

    let p = example("delay_oscillator").map_err(e)?;
    let sys = &p.system;
    let guess = sys.history_from_fn(|th| v(&[0.3 * th.cos()])).map_err(e)?;
    let phi = solve_periodic(sys, 1.0, &guess).map_err(e)?;
    let err = phi
        .thetas()
        .iter()
        .zip(phi.values())
        .map(|(th, x)| (x[0] - th.sin()).abs())
        .fold(0.0, f64::max);
    ensure(err <= 1e-6, || format!("sup |phi - sin| = {err:.2e}"))?;

    let starts = trivial_starting_pairs(sys, &p.region_or_whole().map_err(e)?).map_err(e)?;
    ensure(starts.len() == 1, || {
        format!("{} trivial pairs", starts.len())
    })?;
    let controls = ContinuationControls {
        lambda_max: 5.0,
        ..ContinuationControls::default()
    };
    let b = continue_branch(sys, &starts[0], &controls).map_err(e)?;
    ensure(b.termination == Termination::LambdaMax, || {
        format!("terminated {}", b.termination)
    })?;
    let mut worst: f64 = 0.0;
    for q in &b.pairs {
        let exact = q.lambda / (1.0 + (1.0 - q.lambda).powi(2)).sqrt();
        worst = worst.max((amplitude(&q.orbit) - exact).abs());
    }
    ensure(worst <= 1e-5, || format!("amplitude error {worst:.2e}"))?;
    Ok(format!(
        "sup error at lambda 1: {err:.1e}; {} pairs to lambda 5, amplitude error {worst:.1e}",
        b.pairs.len()
    ))
}

fn criterion_6() -> Verdict {
    let p = example("resonance").map_err(e)?;
    let sys = &p.system;
    let starts = trivial_starting_pairs(sys, &p.region_or_whole().map_err(e)?).map_err(e)?;
    let origin = starts
        .iter()
        .find(|s| s.history.at_zero().norm() < 1e-12)
        .ok_or("no trivial pair at the origin")?;
    let b = continue_branch(sys, origin, &p.controls).map_err(e)?;
    let (_, hi) = b.lambda_range();
    ensure(b.termination == Termination::Vertical && hi <= 1e-6, || {
        format!("terminated {} with max lambda {hi:.2e}", b.termination)
    })?;
    let guess = sys.constant_history(v(&[0.0, 0.0]));
    match solve_periodic(sys, 0.1, &guess) {
        Ok(_) => Err("solve_periodic converged at lambda 0.1".into()),
        Err(err) => Ok(format!("Vertical at lambda {hi:.1e}; at 0.1: {err}")),
    }
}

fn criterion_7() -> Verdict {
    let mut count = 0;
    for name in ["cubic1d", "sphere_height", "decay"] {
        let p = example(name).map_err(e)?;
        ensure(p.system.f.is_identically_zero(), || {
            format!("{name} is forced")
        })?;
        let starts =
            trivial_starting_pairs(&p.system, &p.region_or_whole().map_err(e)?).map_err(e)?;
        for s in &starts {
            let b = continue_branch(&p.system, s, &p.controls).map_err(e)?;
            let spread = b.pairs.iter().map(|q| q.orbit.spread()).fold(0.0, f64::max);
            ensure(
                b.termination == Termination::LambdaMax
                    && b.last().lambda == p.controls.lambda_max
                    && spread <= 1e-9,
                || {
                    format!(
                        "{name}: {} at lambda {}, spread {spread:.1e}",
                        b.termination,
                        b.last().lambda
                    )
                },
            )?;
            count += 1;
        }
    }
    Ok(format!("{count} branches horizontal up to lambda_max"))
}

fn criterion_8() -> Verdict {
    let p = example("rotation").map_err(e)?;
    let sys = &p.system;
    let tube = HistoryRegion::sup_ball(
        sys.history_from_fn(|th| v(&[th.cos(), -th.sin()]))
            .map_err(e)?,
        0.2,
    );
    let rep = verify_fix_correspondence(sys, &tube);
    let witness = rep.entries.iter().find(|x| x.in_w && !x.in_check);
    ensure(rep.exhibits_gap && rep.all_fixed, || {
        "no point of fix(P, h^-1(W)) outside W_check".into()
    })?;
    let w = witness.expect("gap has a witness");
    Ok(format!(
        "p = {:?} is fixed, h(p) in W, p not in W_check",
        w.point.as_slice()
    ))
}

fn criterion_9() -> Verdict {
    let mut issued = 0;
    let mut witnesses = 0;
    for name in names() {
        let p = example(name).map_err(e)?;
        let cert = branch_certificate(&p.system, &p.omega, &p.controls).map_err(e)?;
        if cert.issued {
            issued += 1;
            witnesses += cert.witnesses.len();
            ensure(!cert.anomaly(), || {
                format!("{name}: ANOMALY\n{}", cert.report())
            })?;
        }
    }
    Ok(format!(
        "{issued} certificates, {witnesses} witness branches, no anomaly"
    ))
}

fn criterion_10() -> Verdict {
    // RK4 order on x' = x(1 − x²), exact x(t)² = x0² e^{2t} / (1 − x0² + x0² e^{2t}).
    let line = EmbeddedManifold::euclidean(1);
    let g = TangentField::new(1, |p| v(&[p[0] * (1.0 - p[0] * p[0])]));
    let x0: f64 = 0.2;
    let exact = {
        let e2 = (2.0f64).exp();
        (x0 * x0 * e2 / (1.0 - x0 * x0 + x0 * x0 * e2)).sqrt()
    };
    let err = |h: f64| -> Result<f64, String> {
        let tr = flow_ode(&line, &g, &v(&[x0]), 0.0, 1.0, &FlowOptions::with_step(h)).map_err(e)?;
        Ok((tr.final_state()[0] - exact).abs())
    };
    let ratio = err(0.1)? / err(0.05)?;
    ensure(ratio >= 15.0, || format!("RK4 error ratio {ratio:.2}"))?;

    // Variational flow against central differences of P.
    let cubic = example("cubic1d").map_err(e)?;
    let sys = &cubic.system;
    let mut worst_rel: f64 = 0.0;
    for x in [0.3, 0.5, -1.2] {
        let mono = variational_flow(
            &sys.manifold,
            &sys.g,
            &v(&[x]),
            sys.period(),
            sys.flow_options(),
        )
        .map_err(e)?;
        let h = 1e-5;
        let fd = (poincare_p(sys, &v(&[x + h])).map_err(e)?[0]
            - poincare_p(sys, &v(&[x - h])).map_err(e)?[0])
            / (2.0 * h);
        worst_rel = worst_rel.max((mono.matrix[(0, 0)] - fd).abs() / fd.abs());
    }
    let sphere = example("sphere_height").map_err(e)?;
    let s = &sphere.system;
    let p = s.manifold.project_point(&v(&[0.6, 0.0, 0.8])).map_err(e)?;
    let mono = variational_flow(&s.manifold, &s.g, &p, s.period(), s.flow_options()).map_err(e)?;
    for j in 0..2 {
        let h = 1e-6;
        let dir = mono.basis_start.column(j).into_owned();
        let plus = poincare_p(s, &s.manifold.retract(&p, &(&dir * h)).map_err(e)?).map_err(e)?;
        let minus = poincare_p(s, &s.manifold.retract(&p, &(&dir * -h)).map_err(e)?).map_err(e)?;
        let fd = (plus - minus) / (2.0 * h);
        let col = mono.ambient.column(j).into_owned();
        worst_rel = worst_rel.max((&col - &fd).norm() / fd.norm());
    }
    ensure(worst_rel <= 1e-4, || {
        format!("variational vs differences {worst_rel:.1e}")
    })?;

    // Adherence on every trajectory, including a forced delay equation on S².
    let mut worst: f64 = 0.0;
    for name in ["sphere_height", "torus_flow"] {
        let p = example(name).map_err(e)?;
        let sys = &p.system;
        let x0 = p.flow.initial.clone().expect("initial point");
        let bound = 10.0 * sys.manifold.on_tolerance();
        let ode = flow_ode(
            &sys.manifold,
            &sys.g,
            &x0,
            0.0,
            p.flow.t_end,
            sys.flow_options(),
        )
        .map_err(e)?;
        worst = worst.max(ode.max_violation(&sys.manifold) / bound);
    }
    let forced = System::new(
        EmbeddedManifold::sphere(3),
        TangentField::new(3, |p| v(&[0.0, 0.0, 1.0]) - p * p[2]),
        PerturbationField::new(3, 2.0 * PI, 1.0, |t, p, q| {
            q - p + v(&[t.sin(), t.cos(), 0.0])
        }),
        Settings::default(),
    )
    .map_err(e)?;
    let phi = forced
        .history_from_fn(|th| v(&[th.cos(), th.sin(), 0.3]))
        .map_err(e)?;
    let dde = flow_dde(
        &forced.manifold,
        &forced.g,
        &forced.f,
        2.0,
        &phi,
        4.0 * PI,
        forced.flow_options(),
    )
    .map_err(e)?;
    worst =
        worst.max(dde.max_violation(&forced.manifold) / (10.0 * forced.manifold.on_tolerance()));
    ensure(worst <= 1.0, || {
        format!("manifold violation {worst:.2} of the bound")
    })?;
    Ok(format!(
        "RK4 ratio {ratio:.2}, variational rel {worst_rel:.1e}, adherence {worst:.1e} of bound"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "ind(P, U) = deg(-g, U) on cubic1d and the sphere",
            criterion_1,
        ),
        (
            "ind(Q, W) = deg(-g, W_check) = ind(P, W_check) on cubic1d",
            criterion_2,
        ),
        ("Poincare-Hopf on S^2 and T^2", criterion_3),
        ("degree axioms on random fields", criterion_4),
        ("delay oscillator closed form", criterion_5),
        ("resonance branch is vertical", criterion_6),
        ("unforced branches are horizontal", criterion_7),
        ("fix(P, h^-1(W)) not contained in W_check", criterion_8),
        ("no anomaly under a certificate", criterion_9),
        ("numerical hygiene", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = run();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {:>2} PASS ({secs:.1}s) {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL ({secs:.1}s) {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
