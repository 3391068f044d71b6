//! Degree of a tangent field by signed counting of nondegenerate zeros, a
//! planar winding-number oracle, and the Poincaré–Hopf check.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::{tangent_jacobian, TangentField};
use crate::manifold::EmbeddedManifold;
use crate::region::{BoundingBox, RegionPredicate};
use crate::settings::Settings;

/// A nondegenerate zero with its local sign.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroRecord {
    pub point: DVector<f64>,
    pub local_sign: i32,
    pub det: f64,
    pub residual: f64,
}

/// Residual in tangent coordinates at x, its m×m Jacobian and the basis used.
pub(crate) struct Linearization {
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub basis: DMatrix<f64>,
}

pub(crate) struct LocateOptions {
    pub seeds_per_axis: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub dedup_rel: f64,
}

/// Seeds from a grid over `bbox`, retracted onto M and thinned so that no two
/// seeds are closer than one cell.
pub(crate) fn seeds(
    manifold: &EmbeddedManifold,
    bbox: &BoundingBox,
    per_axis: usize,
) -> Vec<DVector<f64>> {
    let raw = bbox.grid(per_axis);
    if manifold.is_euclidean() {
        return raw;
    }
    let cell = bbox
        .lower
        .iter()
        .zip(&bbox.upper)
        .map(|(l, u)| (u - l) / per_axis.max(1) as f64)
        .fold(f64::INFINITY, f64::min);
    let mut out: Vec<DVector<f64>> = Vec::new();
    for s in raw {
        let Ok(p) = manifold.project_point(&s) else {
            continue;
        };
        if out.iter().all(|q| (q - &p).norm() > cell) {
            out.push(p);
        }
    }
    out
}

fn newton_step(jac: &DMatrix<f64>, residual: &DVector<f64>) -> DVector<f64> {
    if let Some(x) = jac.clone().lu().solve(residual) {
        if x.iter().all(|v| v.is_finite()) {
            return -x;
        }
    }
    let svd = jac.clone().svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    -svd.solve(residual, cutoff)
        .unwrap_or_else(|_| DVector::zeros(residual.len()))
}

/// Newton in tangent coordinates from every seed, with updates through the
/// retraction. An iterate that comes within the capture radius of a root
/// already found is assigned to it. Returned points are unique up to the
/// deduplication radius, in seed order.
pub(crate) fn locate<F>(
    manifold: &EmbeddedManifold,
    bbox: &BoundingBox,
    opts: &LocateOptions,
    linearize: F,
) -> Vec<(DVector<f64>, f64)>
where
    F: Fn(&DVector<f64>) -> Result<Linearization>,
{
    let diam = bbox.diameter().max(f64::MIN_POSITIVE);
    let dedup = opts.dedup_rel * diam;
    let capture = 1e-4 * diam;
    let cap = manifold.step_cap().min(0.25 * diam);
    let mut found: Vec<(DVector<f64>, f64)> = Vec::new();

    'seeds: for seed in seeds(manifold, bbox, opts.seeds_per_axis) {
        let mut x = seed;
        let mut last_residual = f64::INFINITY;
        for _ in 0..opts.max_iter {
            let Ok(lin) = linearize(&x) else {
                continue 'seeds;
            };
            last_residual = lin.residual.norm();
            if found.iter().any(|(z, _)| (&x - z).norm() < capture) {
                continue 'seeds;
            }
            let delta = newton_step(&lin.jacobian, &lin.residual);
            let mut step = &lin.basis * delta;
            let len = step.norm();
            if !len.is_finite() {
                continue 'seeds;
            }
            if last_residual <= opts.tol && len <= 1e-12 * (1.0 + x.norm()) {
                break;
            }
            if len > cap {
                step *= cap / len;
            }
            x = match manifold.retract(&x, &step) {
                Ok(y) => y,
                Err(_) => continue 'seeds,
            };
            if !bbox.contains_inflated(x.as_slice(), 0.5 * diam) {
                continue 'seeds;
            }
        }
        if let Ok(lin) = linearize(&x) {
            last_residual = lin.residual.norm();
        }
        if last_residual <= opts.tol && found.iter().all(|(z, _)| (&x - z).norm() > dedup) {
            found.push((x, last_residual));
        }
    }
    found
}

/// Lexicographic order with coordinates closer than 1e-9 treated as equal,
/// so round-off does not reorder zeros.
pub(crate) fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            if (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())) {
                Ordering::Equal
            } else {
                x.partial_cmp(y).unwrap_or(Ordering::Equal)
            }
        })
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

fn field_linearization(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    x: &DVector<f64>,
) -> Result<Linearization> {
    let basis = manifold.tangent_basis(x)?;
    let bt = basis.transpose();
    Ok(Linearization {
        residual: &bt * g.eval(x),
        jacobian: &bt * g.jacobian(x) * &basis,
        basis,
    })
}

/// Zeros of g in `region`, sorted lexicographically, each certified
/// nondegenerate.
pub fn find_zeros(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    region: &RegionPredicate,
    seeds_per_axis: usize,
    settings: &Settings,
) -> Result<Vec<ZeroRecord>> {
    let opts = LocateOptions {
        seeds_per_axis,
        max_iter: settings.newton_max_iter,
        tol: settings.zero_tol,
        dedup_rel: settings.dedup_radius_rel,
    };
    let located = locate(manifold, region.bbox(), &opts, |x| {
        field_linearization(manifold, g, x)
    });
    let mut zeros = Vec::new();
    for (point, _) in located {
        let near = region.near_boundary(&point);
        if !near && !region.contains(&point) {
            continue;
        }
        if near {
            return Err(Error::BoundaryZero {
                point: point.as_slice().to_vec(),
            });
        }
        let residual = g.eval(&point).norm();
        let tj = tangent_jacobian(
            manifold,
            g,
            &point,
            settings.zero_tol,
            settings.singular_tol,
        )
        .map_err(|e| match e {
            Error::NearSingular { point, det } => Error::DegenerateZero { point, det },
            other => other,
        })?;
        zeros.push(ZeroRecord {
            point,
            local_sign: tj.sign,
            det: tj.det,
            residual,
        });
    }
    zeros.sort_by(|a, b| lexicographic(&a.point, &b.point));
    Ok(zeros)
}

/// deg(g, U) together with the zeros it was summed over.
#[derive(Debug, Clone)]
pub struct DegreeReport {
    pub degree: i64,
    pub zeros: Vec<ZeroRecord>,
}

pub fn degree_report(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    region: &RegionPredicate,
    settings: &Settings,
) -> Result<DegreeReport> {
    let zeros = find_zeros(manifold, g, region, settings.seeds_per_axis, settings).map_err(
        |e| match e {
            Error::BoundaryZero { point } => Error::NotAdmissible(format!(
                "zero at {point:?} lies within {:.1e} of the boundary of {}",
                region.boundary_margin(),
                region.label()
            )),
            other => other,
        },
    )?;
    Ok(DegreeReport {
        degree: zeros.iter().map(|z| z.local_sign as i64).sum(),
        zeros,
    })
}

/// deg(g, U) = Σ sign det g′(q) over the zeros q in U.
pub fn degree(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    region: &RegionPredicate,
    settings: &Settings,
) -> Result<i64> {
    Ok(degree_report(manifold, g, region, settings)?.degree)
}

fn wrap(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > std::f64::consts::PI {
        a - TAU
    } else {
        a
    }
}

/// Points spaced along a closed polyline, `n` in total, distributed by
/// segment length.
fn sample_polyline(boundary: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    let segs: Vec<([f64; 2], [f64; 2])> = (0..boundary.len())
        .map(|i| (boundary[i], boundary[(i + 1) % boundary.len()]))
        .collect();
    let lens: Vec<f64> = segs
        .iter()
        .map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
        .collect();
    let total: f64 = lens.iter().sum();
    let mut out = Vec::with_capacity(n + segs.len());
    for ((a, b), len) in segs.iter().zip(&lens) {
        let k = ((n as f64) * len / total).ceil().max(1.0) as usize;
        for j in 0..k {
            let s = j as f64 / k as f64;
            out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
        }
    }
    out
}

fn winding_once<W>(w: &W, pts: &[[f64; 2]], zero_tol: f64) -> Result<(f64, f64)>
where
    W: Fn(f64, f64) -> [f64; 2],
{
    let values: Vec<[f64; 2]> = pts.iter().map(|p| w(p[0], p[1])).collect();
    let min_norm = values
        .iter()
        .map(|v| v[0].hypot(v[1]))
        .fold(f64::INFINITY, f64::min);
    if !(min_norm >= 10.0 * zero_tol) {
        return Err(Error::VanishingOnBoundary { min_norm });
    }
    let mut total = 0.0;
    let mut largest = 0.0f64;
    for i in 0..values.len() {
        let a = values[i];
        let b = values[(i + 1) % values.len()];
        let d = wrap(b[1].atan2(b[0]) - a[1].atan2(a[0]));
        largest = largest.max(d.abs());
        total += d;
    }
    Ok((total / TAU, largest))
}

/// Winding number of w along a closed polyline (vertices in order, closed
/// implicitly). Sampling doubles while the rounding residue exceeds 0.05 or
/// a single increment exceeds a quarter turn.
pub fn winding_degree_planar<W>(
    w: W,
    boundary: &[[f64; 2]],
    samples: usize,
    zero_tol: f64,
) -> Result<i64>
where
    W: Fn(f64, f64) -> [f64; 2],
{
    assert!(boundary.len() >= 2, "boundary needs at least two vertices");
    let mut n = samples.max(8);
    let mut last = (0.0, f64::INFINITY);
    for _ in 0..8 {
        let pts = sample_polyline(boundary, n);
        let (turns, largest) = winding_once(&w, &pts, zero_tol)?;
        let residue = (turns - turns.round()).abs();
        last = (turns, residue);
        if residue <= 0.05 && largest <= std::f64::consts::FRAC_PI_2 {
            return Ok(turns.round() as i64);
        }
        n *= 2;
    }
    if last.1 <= 0.1 {
        Ok(last.0.round() as i64)
    } else {
        Err(Error::AngleResidueTooLarge {
            residue: last.1,
            samples: n / 2,
        })
    }
}

/// Closed polyline approximating a circle, counter-clockwise.
pub fn circle_polyline(center: [f64; 2], radius: f64, vertices: usize) -> Vec<[f64; 2]> {
    (0..vertices)
        .map(|i| {
            let a = TAU * i as f64 / vertices as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

/// Boundary of a planar box, counter-clockwise.
pub fn box_polyline(bbox: &BoundingBox) -> Vec<[f64; 2]> {
    assert_eq!(bbox.dim(), 2);
    let (l, u) = (&bbox.lower, &bbox.upper);
    vec![[l[0], l[1]], [u[0], l[1]], [u[0], u[1]], [l[0], u[1]]]
}

#[derive(Debug, Clone)]
pub struct PoincareHopfReport {
    pub degree: i64,
    pub euler_characteristic: i64,
    pub zeros: Vec<ZeroRecord>,
    pub pass: bool,
}

/// deg(g, M) against χ(M) on a compact manifold.
pub fn check_poincare_hopf(
    manifold: &EmbeddedManifold,
    g: &TangentField,
    settings: &Settings,
) -> Result<PoincareHopfReport> {
    let chi = manifold.euler_characteristic().ok_or_else(|| {
        Error::NotAdmissible(format!(
            "no Euler characteristic recorded for {}",
            manifold.name()
        ))
    })?;
    let extent = manifold.extent().ok_or_else(|| {
        Error::NotAdmissible(format!("{} has no bounding extent", manifold.name()))
    })?;
    let report = degree_report(
        manifold,
        g,
        &RegionPredicate::whole(extent.clone()),
        settings,
    )?;
    Ok(PoincareHopfReport {
        pass: report.degree == chi,
        degree: report.degree,
        euler_characteristic: chi,
        zeros: report.zeros,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::tangentize;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn cubic() -> TangentField {
        TangentField::new(1, |p| v(&[p[0] * (1.0 - p[0] * p[0])]))
    }

    fn interval(a: f64, b: f64) -> RegionPredicate {
        RegionPredicate::open_box(BoundingBox::new(vec![a], vec![b]))
    }

    #[test]
    fn cubic_zeros_and_degree() {
        let s = Settings::default();
        let r = EmbeddedManifold::euclidean(1);
        let zeros = find_zeros(&r, &cubic(), &interval(-2.0, 2.0), 16, &s).unwrap();
        let pts: Vec<f64> = zeros.iter().map(|z| z.point[0]).collect();
        let signs: Vec<i32> = zeros.iter().map(|z| z.local_sign).collect();
        assert_eq!(signs, vec![-1, 1, -1]);
        for (p, want) in pts.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((p - want).abs() < 1e-10);
        }
        assert_eq!(degree(&r, &cubic(), &interval(-2.0, 2.0), &s).unwrap(), -1);
        assert_eq!(
            degree(&r, &cubic().negated(), &interval(-2.0, 2.0), &s).unwrap(),
            1
        );
    }

    #[test]
    fn no_zeros_in_region() {
        let r = EmbeddedManifold::euclidean(1);
        let g = TangentField::new(1, |p| -p.clone());
        assert!(
            find_zeros(&r, &g, &interval(1.0, 2.0), 16, &Settings::default())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn rotation_degree() {
        let r2 = EmbeddedManifold::euclidean(2);
        let g = TangentField::new(2, |p| v(&[p[1], -p[0]]));
        let u = RegionPredicate::open_box(BoundingBox::symmetric(2, 1.0));
        let s = Settings::default();
        assert_eq!(degree(&r2, &g, &u, &s).unwrap(), 1);
        assert_eq!(degree(&r2, &g.negated(), &u, &s).unwrap(), 1);
    }

    #[test]
    fn sphere_height_field() {
        let s2 = EmbeddedManifold::sphere(3);
        let g = tangentize(&s2, &TangentField::new(3, |_| v(&[0.0, 0.0, 1.0])));
        let report = check_poincare_hopf(&s2, &g, &Settings::default()).unwrap();
        assert_eq!(report.degree, 2);
        assert!(report.pass);
        assert_eq!(report.zeros.len(), 2);
        assert!(report.zeros.iter().all(|z| z.local_sign == 1));
        assert!((report.zeros[0].point[2] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_and_boundary_zeros() {
        let r = EmbeddedManifold::euclidean(1);
        let sq = TangentField::new(1, |p| v(&[p[0] * p[0]]));
        let s = Settings::default();
        assert!(matches!(
            find_zeros(&r, &sq, &interval(-1.0, 1.0), 16, &s),
            Err(Error::DegenerateZero { .. })
        ));
        assert!(matches!(
            find_zeros(&r, &cubic(), &interval(-1.0, 0.5), 16, &s),
            Err(Error::BoundaryZero { .. })
        ));
        assert!(matches!(
            degree(&r, &cubic(), &interval(-1.0, 0.5), &s),
            Err(Error::NotAdmissible(_))
        ));
    }

    #[test]
    fn winding_examples() {
        let c = circle_polyline([0.0, 0.0], 1.0, 64);
        assert_eq!(
            winding_degree_planar(|x, y| [x, y], &c, 4096, 1e-8).unwrap(),
            1
        );
        assert_eq!(
            winding_degree_planar(|x, y| [y, -x], &c, 4096, 1e-8).unwrap(),
            1
        );
        assert_eq!(
            winding_degree_planar(|x, y| [x * x - y * y, 2.0 * x * y], &c, 4096, 1e-8).unwrap(),
            2
        );
        assert_eq!(
            winding_degree_planar(|x, y| [x, -y], &c, 4096, 1e-8).unwrap(),
            -1
        );
        let off = circle_polyline([3.0, 0.0], 1.0, 64);
        assert_eq!(
            winding_degree_planar(|x, y| [x, y], &off, 64, 1e-8).unwrap(),
            0
        );
        assert!(matches!(
            winding_degree_planar(|x, y| [x - 1.0, y], &c, 4096, 1e-8),
            Err(Error::VanishingOnBoundary { .. })
        ));
    }

    #[test]
    fn square_boundary_winding() {
        let b = box_polyline(&BoundingBox::symmetric(2, 1.0));
        assert_eq!(
            winding_degree_planar(|x, y| [y, -x], &b, 4096, 1e-8).unwrap(),
            1
        );
    }
}
