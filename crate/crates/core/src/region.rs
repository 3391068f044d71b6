//! Open-set surrogates: axis-aligned boxes, membership predicates on M,
//! predicates on histories (the sets W of the history space) and on
//! (λ, loop) pairs (the sets Ω).

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::integrate::History;

/// Axis-aligned box in the ambient space.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(
            lower.len(),
            upper.len(),
            "bounding box corners differ in dimension"
        );
        Self { lower, upper }
    }

    /// The cube [-half, half]^dim.
    pub fn symmetric(dim: usize, half: f64) -> Self {
        Self::new(vec![-half; dim], vec![half; dim])
    }

    pub fn around(center: &[f64], radius: f64) -> Self {
        Self::new(
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| u <= l)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x > *l && *x < *u)
    }

    /// Closed containment with a slack, used to cut off runaway Newton iterates.
    pub fn contains_inflated(&self, p: &[f64], slack: f64) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= *l - slack && *x <= *u + slack)
    }

    pub fn intersect(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox::new(
            self.lower
                .iter()
                .zip(&other.lower)
                .map(|(a, b)| a.max(*b))
                .collect(),
            self.upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a.min(*b))
                .collect(),
        )
    }

    pub fn hull(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox::new(
            self.lower
                .iter()
                .zip(&other.lower)
                .map(|(a, b)| a.min(*b))
                .collect(),
            self.upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a.max(*b))
                .collect(),
        )
    }

    /// Cell-centred grid with `per_axis` points along every axis, in
    /// lexicographic order (last axis fastest).
    pub fn grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        let dim = self.dim();
        let n = per_axis.max(1);
        let total = n.pow(dim as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let p = DVector::from_fn(dim, |a, _| {
                let w = self.upper[a] - self.lower[a];
                self.lower[a] + (idx[a] as f64 + 0.5) * w / n as f64
            });
            out.push(p);
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < n {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }
}

type PointPredicate = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;

/// Membership test for an open subset U of M, with a bounding box used for
/// seeding and a margin used to flag points too close to the boundary.
#[derive(Clone)]
pub struct RegionPredicate {
    contains: PointPredicate,
    bbox: BoundingBox,
    boundary_margin: f64,
    label: String,
}

impl fmt::Debug for RegionPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionPredicate")
            .field("label", &self.label)
            .field("bbox", &self.bbox)
            .field("boundary_margin", &self.boundary_margin)
            .finish()
    }
}

pub const DEFAULT_BOUNDARY_MARGIN: f64 = 1e-6;

impl RegionPredicate {
    pub fn new<F>(label: impl Into<String>, bbox: BoundingBox, contains: F) -> Self
    where
        F: Fn(&DVector<f64>) -> bool + Send + Sync + 'static,
    {
        Self {
            contains: Arc::new(contains),
            bbox,
            boundary_margin: DEFAULT_BOUNDARY_MARGIN,
            label: label.into(),
        }
    }

    /// The open box itself.
    pub fn open_box(bbox: BoundingBox) -> Self {
        let b = bbox.clone();
        Self::new(
            format!("box {:?}..{:?}", bbox.lower, bbox.upper),
            bbox,
            move |p| b.contains(p.as_slice()),
        )
    }

    /// Open Euclidean ball in the ambient space.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let bbox = BoundingBox::around(&center, radius);
        let c = DVector::from_vec(center.clone());
        Self::new(format!("ball {center:?} r={radius}"), bbox, move |p| {
            p.len() == c.len() && (p - &c).norm() < radius
        })
    }

    /// Everything inside `bbox`, with no boundary: used for compact manifolds
    /// that sit strictly inside the box.
    pub fn whole(bbox: BoundingBox) -> Self {
        Self::new("whole manifold", bbox, |_| true).with_boundary_margin(0.0)
    }

    pub fn union(parts: Vec<RegionPredicate>) -> Self {
        assert!(!parts.is_empty(), "union of no regions");
        let bbox = parts[1..]
            .iter()
            .fold(parts[0].bbox.clone(), |acc, r| acc.hull(&r.bbox));
        let margin = parts
            .iter()
            .map(|r| r.boundary_margin)
            .fold(0.0_f64, f64::max);
        let label = parts
            .iter()
            .map(|r| r.label.clone())
            .collect::<Vec<_>>()
            .join(" | ");
        Self::new(label, bbox, move |p| parts.iter().any(|r| r.contains(p)))
            .with_boundary_margin(margin)
    }

    pub fn with_boundary_margin(mut self, margin: f64) -> Self {
        self.boundary_margin = margin;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn contains(&self, p: &DVector<f64>) -> bool {
        (self.contains)(p)
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn boundary_margin(&self) -> f64 {
        self.boundary_margin
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// True when a point within `boundary_margin` along some coordinate axis
    /// has a different membership than `p`.
    pub fn near_boundary(&self, p: &DVector<f64>) -> bool {
        if self.boundary_margin <= 0.0 {
            return false;
        }
        let inside = self.contains(p);
        for a in 0..p.len() {
            for s in [-1.0, 1.0] {
                let mut q = p.clone();
                q[a] += s * self.boundary_margin;
                if self.contains(&q) != inside {
                    return true;
                }
            }
        }
        false
    }
}

/// Open sets W of histories, restricted to the shapes for which the check
/// set W̌ = {p : constant history at p lies in W} is computable.
#[derive(Debug, Clone)]
pub enum HistoryRegion {
    /// Sup-norm ball around a reference history.
    SupBall {
        center: History,
        radius: f64,
    },
    /// φ(0) in an open box and φ within a sup-norm ball of `center`.
    AnchoredBall {
        anchor: BoundingBox,
        center: History,
        radius: f64,
    },
    Union(Vec<HistoryRegion>),
    /// Every history whose values stay inside the open box.
    Everything {
        bbox: BoundingBox,
    },
}

impl HistoryRegion {
    pub fn sup_ball(center: History, radius: f64) -> Self {
        HistoryRegion::SupBall { center, radius }
    }

    pub fn contains(&self, phi: &History) -> bool {
        match self {
            HistoryRegion::SupBall { center, radius } => sup_distance(center, phi) < *radius,
            HistoryRegion::AnchoredBall {
                anchor,
                center,
                radius,
            } => anchor.contains(phi.at_zero().as_slice()) && sup_distance(center, phi) < *radius,
            HistoryRegion::Union(parts) => parts.iter().any(|w| w.contains(phi)),
            HistoryRegion::Everything { bbox } => {
                phi.values().iter().all(|v| bbox.contains(v.as_slice()))
            }
        }
    }

    /// Box that contains φ(0) for every φ in W; also bounds W̌.
    pub fn anchor_bbox(&self) -> BoundingBox {
        match self {
            HistoryRegion::SupBall { center, radius } => {
                BoundingBox::around(center.at_zero().as_slice(), *radius)
            }
            HistoryRegion::AnchoredBall {
                anchor,
                center,
                radius,
            } => anchor.intersect(&BoundingBox::around(center.at_zero().as_slice(), *radius)),
            HistoryRegion::Union(parts) => {
                let mut it = parts.iter().map(|w| w.anchor_bbox());
                let first = it.next().expect("union of no history regions");
                it.fold(first, |acc, b| acc.hull(&b))
            }
            HistoryRegion::Everything { bbox } => bbox.clone(),
        }
    }

    /// Bounding box of the check set W̌. Constant histories must be close to
    /// the reference at every node, so the box is the intersection over nodes.
    pub fn check_bbox(&self) -> BoundingBox {
        match self {
            HistoryRegion::SupBall { center, radius }
            | HistoryRegion::AnchoredBall { center, radius, .. } => {
                let mut b = BoundingBox::around(center.values()[0].as_slice(), *radius);
                for v in &center.values()[1..] {
                    b = b.intersect(&BoundingBox::around(v.as_slice(), *radius));
                }
                if let HistoryRegion::AnchoredBall { anchor, .. } = self {
                    b = b.intersect(anchor);
                }
                b
            }
            HistoryRegion::Union(parts) => {
                let mut it = parts.iter().map(|w| w.check_bbox());
                let first = it.next().expect("union of no history regions");
                it.fold(first, |acc, b| {
                    if b.is_empty() {
                        acc
                    } else if acc.is_empty() {
                        b
                    } else {
                        acc.hull(&b)
                    }
                })
            }
            HistoryRegion::Everything { bbox } => bbox.clone(),
        }
    }

    /// The derived set W̌ ⊆ M as a point predicate, testing the constant
    /// history built on `template`'s grid.
    pub fn check_region(&self, template: &History) -> RegionPredicate {
        let w = self.clone();
        let grid = template.clone();
        let bbox = self.check_bbox();
        RegionPredicate::new("check set of W", bbox, move |p| {
            w.contains(&grid.constant_like(p.clone()))
        })
    }
}

/// Sup over grid nodes of the ambient distance; histories on different grids
/// are compared at the nodes of `b`.
pub fn sup_distance(a: &History, b: &History) -> f64 {
    if a.same_grid(b) {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    } else {
        b.thetas()
            .iter()
            .zip(b.values())
            .map(|(&th, y)| (a.eval_ambient(th) - y).norm())
            .fold(0.0, f64::max)
    }
}

/// Open set Ω of (λ, loop) pairs: λ in [0, lambda_max), loop sup-norm below
/// `norm_max`, trivial pairs seeded from `seed_bbox`.
#[derive(Debug, Clone)]
pub struct PairRegion {
    pub lambda_max: f64,
    pub norm_max: f64,
    pub seed_bbox: BoundingBox,
}

impl PairRegion {
    pub fn unbounded(seed_bbox: BoundingBox) -> Self {
        Self {
            lambda_max: f64::INFINITY,
            norm_max: f64::INFINITY,
            seed_bbox,
        }
    }

    pub fn contains(&self, lambda: f64, sup_norm: f64) -> bool {
        lambda >= 0.0 && lambda < self.lambda_max && sup_norm < self.norm_max
    }

    pub fn is_bounded(&self) -> bool {
        self.lambda_max.is_finite() && self.norm_max.is_finite()
    }

    /// Ω ∩ M: points p whose trivial pair (0, p̄) lies in Ω.
    pub fn section(&self) -> RegionPredicate {
        let norm_max = self.norm_max;
        let lambda_ok = self.lambda_max > 0.0;
        let bbox = if norm_max.is_finite() {
            self.seed_bbox
                .intersect(&BoundingBox::symmetric(self.seed_bbox.dim(), norm_max))
        } else {
            self.seed_bbox.clone()
        };
        let inner = bbox.clone();
        let bounded = norm_max.is_finite();
        RegionPredicate::new("section of Omega", bbox, move |p| {
            lambda_ok && p.norm() < norm_max && (bounded || inner.contains(p.as_slice()))
        })
    }
}
