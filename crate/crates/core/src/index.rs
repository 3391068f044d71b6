//! Fixed point indices of P and Q, checked against deg(−g, ·).

use nalgebra::{DMatrix, DVector};

use crate::degree::{degree, lexicographic, locate, seeds, Linearization, LocateOptions};
use crate::error::{Error, Result};
use crate::fields::nearly_singular;
use crate::integrate::variational_flow;
use crate::poincare::{map_h, poincare_p, translation_q};
use crate::region::{sup_distance, HistoryRegion, RegionPredicate};
use crate::system::System;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRecord {
    pub point: DVector<f64>,
    pub index: i32,
    /// det(I − dP) in the tangent basis at the point.
    pub det: f64,
    pub displacement: f64,
}

fn displacement_linearization(sys: &System, x: &DVector<f64>) -> Result<Linearization> {
    let mono = variational_flow(&sys.manifold, &sys.g, x, sys.period(), sys.flow_options())?;
    let basis = mono.basis_start;
    let bt = basis.transpose();
    let m = basis.ncols();
    Ok(Linearization {
        residual: &bt * (&mono.endpoint - x),
        jacobian: &bt * &mono.ambient - DMatrix::identity(m, m),
        basis,
    })
}

fn index_detail(sys: &System, q: &DVector<f64>) -> Result<FixedPointRecord> {
    let endpoint = poincare_p(sys, q)?;
    let displacement = (&endpoint - q).norm();
    if displacement > sys.settings.zero_tol {
        return Err(Error::NotAFixedPoint {
            point: q.as_slice().to_vec(),
            displacement,
        });
    }
    let mono = variational_flow(&sys.manifold, &sys.g, q, sys.period(), sys.flow_options())?;
    let d = mono.basis_start.transpose() * &mono.ambient;
    let m = d.nrows();
    let a = DMatrix::identity(m, m) - d;
    let det = a.determinant();
    if nearly_singular(&a, det, sys.settings.singular_tol) {
        return Err(Error::NonHyperbolic {
            point: q.as_slice().to_vec(),
            det,
        });
    }
    Ok(FixedPointRecord {
        point: q.clone(),
        index: if det > 0.0 { 1 } else { -1 },
        det,
        displacement,
    })
}

/// Index of P at a hyperbolic fixed point q: sign det(I − dP(q)).
pub fn index_p_at(sys: &System, q: &DVector<f64>) -> Result<i32> {
    Ok(index_detail(sys, q)?.index)
}

/// Hyperbolic fixed points of P in U, sorted lexicographically.
pub fn fixed_points(sys: &System, region: &RegionPredicate) -> Result<Vec<FixedPointRecord>> {
    let s = &sys.settings;
    let opts = LocateOptions {
        seeds_per_axis: s.seeds_per_axis,
        max_iter: s.newton_max_iter,
        tol: s.zero_tol,
        dedup_rel: s.dedup_radius_rel,
    };
    let located = locate(&sys.manifold, region.bbox(), &opts, |x| {
        displacement_linearization(sys, x)
    });
    let mut out = Vec::new();
    for (p, _) in located {
        let near = region.near_boundary(&p);
        if !near && !region.contains(&p) {
            continue;
        }
        if near {
            return Err(Error::NotAdmissible(format!(
                "fixed point of P at {:?} lies on the boundary of {}",
                p.as_slice(),
                region.label()
            )));
        }
        out.push(index_detail(sys, &p)?);
    }
    out.sort_by(|a, b| lexicographic(&a.point, &b.point));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct IndexReport {
    pub index: i64,
    pub degree_neg_g: i64,
    pub fixed_points: Vec<FixedPointRecord>,
}

/// ind(P, U) as a sum of local indices, required to equal deg(−g, U).
pub fn index_p_region(sys: &System, region: &RegionPredicate) -> Result<IndexReport> {
    let fixed = fixed_points(sys, region)?;
    let index: i64 = fixed.iter().map(|f| f.index as i64).sum();
    let degree_neg_g = degree(&sys.manifold, &sys.g.negated(), region, &sys.settings)?;
    if index != degree_neg_g {
        return Err(Error::IndexMismatch {
            index,
            degree: degree_neg_g,
        });
    }
    Ok(IndexReport {
        index,
        degree_neg_g,
        fixed_points: fixed,
    })
}

#[derive(Debug, Clone)]
pub struct QIndexReport {
    /// Σ ind(P, p) over fixed points p of P with h(p) ∈ W.
    pub index_q: i64,
    pub degree_neg_g: i64,
    pub index_p: i64,
    /// W̌ has an empty bounding box, so deg(−g, W̌) and ind(P, W̌) are 0 without search.
    pub check_set_empty: bool,
    /// The fixed points of P summed into `index_q`.
    pub preimage_fixed_points: Vec<FixedPointRecord>,
}

/// Fixed points p of P with h(p) ∈ W, each required to be hyperbolic. Every
/// fixed history of Q in W is h(p) for such a p, and ind(Q, W) = ind(P, h⁻¹(W)).
pub fn preimage_fixed_points(sys: &System, w: &HistoryRegion) -> Result<Vec<FixedPointRecord>> {
    let bbox = w.anchor_bbox();
    if bbox.is_empty() {
        return Ok(Vec::new());
    }
    let s = &sys.settings;
    let opts = LocateOptions {
        seeds_per_axis: s.seeds_per_axis,
        max_iter: s.newton_max_iter,
        tol: s.zero_tol,
        dedup_rel: s.dedup_radius_rel,
    };
    let mut candidates: Vec<DVector<f64>> = locate(&sys.manifold, &bbox, &opts, |x| {
        displacement_linearization(sys, x)
    })
    .into_iter()
    .map(|(p, _)| p)
    .collect();
    let dedup = s.dedup_radius_rel * bbox.diameter();
    for seed in seeds(&sys.manifold, &bbox, s.seeds_per_axis) {
        let fixed = poincare_p(sys, &seed).is_ok_and(|end| (end - &seed).norm() <= s.zero_tol);
        if fixed && candidates.iter().all(|q| (q - &seed).norm() > dedup) {
            candidates.push(seed);
        }
    }
    let mut out = Vec::new();
    for p in candidates {
        if w.contains(&map_h(sys, &p)?) {
            out.push(index_detail(sys, &p)?);
        }
    }
    out.sort_by(|a, b| lexicographic(&a.point, &b.point));
    Ok(out)
}

/// ind(Q, W) from the fixed points of P in h⁻¹(W), against deg(−g, W̌) and
/// ind(P, W̌).
pub fn index_q_region(sys: &System, w: &HistoryRegion) -> Result<QIndexReport> {
    let preimage = preimage_fixed_points(sys, w)?;
    let index_q: i64 = preimage.iter().map(|f| f.index as i64).sum();
    let template = sys.constant_history(DVector::zeros(sys.manifold.ambient_dim()));
    let check = w.check_region(&template);
    let check_set_empty = check.bbox().is_empty();
    let (degree_neg_g, index_p) = if check_set_empty {
        (0, 0)
    } else {
        let d = degree(&sys.manifold, &sys.g.negated(), &check, &sys.settings)?;
        let i: i64 = fixed_points(sys, &check)?
            .iter()
            .map(|f| f.index as i64)
            .sum();
        (d, i)
    };
    if index_q != degree_neg_g || index_p != degree_neg_g {
        return Err(Error::ReductionMismatch {
            index_q,
            degree: degree_neg_g,
            index_p,
        });
    }
    Ok(QIndexReport {
        index_q,
        degree_neg_g,
        index_p,
        check_set_empty,
        preimage_fixed_points: preimage,
    })
}

#[derive(Debug, Clone)]
pub struct CorrespondenceEntry {
    pub point: DVector<f64>,
    /// |P(p) − p|, which is also |k(h(p)) − p|.
    pub p_residual: f64,
    /// sup-distance between Q(h(p)) and h(p).
    pub q_residual: f64,
    /// h(p) ∈ W.
    pub in_w: bool,
    /// p ∈ W̌.
    pub in_check: bool,
}

#[derive(Debug, Clone)]
pub struct CorrespondenceReport {
    pub entries: Vec<CorrespondenceEntry>,
    pub tolerance: f64,
    /// Every h-image is fixed by Q and k inverts h on it.
    pub all_fixed: bool,
    /// Some p has h(p) ∈ W but p ∉ W̌.
    pub exhibits_gap: bool,
}

impl CorrespondenceReport {
    /// fix(Q, W) as h-images.
    pub fn fix_q(&self) -> impl Iterator<Item = &CorrespondenceEntry> {
        self.entries.iter().filter(|e| e.in_w)
    }
}

/// Fixed points of P whose h-image may lie in W, each checked for
/// Q-fixedness. Seeds already fixed within `fix_tol` are kept as they are,
/// so continua of fixed points are sampled rather than collapsed.
pub fn verify_fix_correspondence(sys: &System, w: &HistoryRegion) -> CorrespondenceReport {
    let s = &sys.settings;
    let tol = s.fix_tol;
    let bbox = w.anchor_bbox();
    let mut points: Vec<DVector<f64>> = Vec::new();
    if !bbox.is_empty() {
        for seed in seeds(&sys.manifold, &bbox, s.seeds_per_axis) {
            if let Ok(end) = poincare_p(sys, &seed) {
                if (end - &seed).norm() <= tol {
                    points.push(seed);
                }
            }
        }
        let opts = LocateOptions {
            seeds_per_axis: s.seeds_per_axis,
            max_iter: s.newton_max_iter,
            tol: s.zero_tol,
            dedup_rel: s.dedup_radius_rel,
        };
        let dedup = s.dedup_radius_rel * bbox.diameter();
        for (p, _) in locate(&sys.manifold, &bbox, &opts, |x| {
            displacement_linearization(sys, x)
        }) {
            if points.iter().all(|q| (q - &p).norm() > dedup) {
                points.push(p);
            }
        }
    }
    points.sort_by(lexicographic);

    let mut entries = Vec::new();
    for p in points {
        let Ok(hp) = map_h(sys, &p) else { continue };
        let Ok(qhp) = translation_q(sys, &hp) else {
            continue;
        };
        let p_residual = (hp.at_zero() - &p).norm();
        entries.push(CorrespondenceEntry {
            q_residual: sup_distance(&qhp.output, &hp),
            in_w: w.contains(&hp),
            in_check: w.contains(&sys.constant_history(p.clone())),
            p_residual,
            point: p,
        });
    }
    let all_fixed = entries
        .iter()
        .all(|e| e.q_residual <= tol && e.p_residual <= tol);
    let exhibits_gap = entries.iter().any(|e| e.in_w && !e.in_check);
    CorrespondenceReport {
        entries,
        tolerance: tol,
        all_fixed,
        exhibits_gap,
    }
}
