//! Run configuration: TOML with fixed sections, unknown keys rejected.
//!
//! ```toml
//! [system]
//! period = "2*pi"        # number or constant expression
//! delay = "pi/2"
//!
//! [manifold]
//! kind = "euclidean"     # euclidean | sphere | torus | custom
//! dim = 1
//!
//! [fields]
//! g = ["-x1"]            # variables x1..xk
//! f = ["sin(t) - y1"]    # variables t, x1..xk, y1..yk (y = delayed state)
//!
//! [region]               # U ⊆ M, also the seeding box for Ω ∩ M
//! lower = [-2.0]
//! upper = [2.0]
//! ```
//!
//! Further sections: `[[history_region]]` (several entries form a union),
//! `[flow]`, `[periodic]`, `[continuation]`, `[solver]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use toml::Spanned;

use crate::branch::ContinuationControls;
use crate::error::{Error, Result};
use crate::expr::{point_variables, Expr};
use crate::fields::{PerturbationField, TangentField};
use crate::integrate::History;
use crate::manifold::EmbeddedManifold;
use crate::region::{BoundingBox, HistoryRegion, PairRegion, RegionPredicate};
use crate::settings::Settings;
use crate::system::System;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expression(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub period: Spanned<Scalar>,
    pub delay: Option<Spanned<Scalar>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Torus,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSection {
    pub kind: ManifoldKind,
    /// Ambient dimension k (euclidean, sphere, custom).
    pub dim: Option<usize>,
    pub major: Option<f64>,
    pub minor: Option<f64>,
    /// Constraint components in x1..xk (custom).
    pub constraints: Option<Vec<Spanned<String>>>,
    pub euler_characteristic: Option<i64>,
    /// Half-width of a cube containing a compact custom manifold.
    pub extent: Option<f64>,
    pub on_tolerance: Option<f64>,
    pub step_cap: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSection {
    pub g: Spanned<Vec<Spanned<String>>>,
    pub f: Option<Spanned<Vec<Spanned<String>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    #[default]
    Box,
    Ball,
    Whole,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    #[serde(default)]
    pub kind: RegionKind,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryRegionKind {
    SupBall,
    AnchoredBall,
    Everything,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryRegionSection {
    pub kind: HistoryRegionKind,
    /// Constant reference history at this point.
    pub point: Option<Vec<f64>>,
    /// Reference history as expressions in `theta`.
    pub center: Option<Vec<Spanned<String>>>,
    pub radius: Option<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// Initial point for the unperturbed flow.
    pub initial: Option<Vec<f64>>,
    /// Initial history as expressions in `theta`; selects the delay equation.
    pub history: Option<Vec<Spanned<String>>>,
    #[serde(default)]
    pub lambda: f64,
    pub t_end: Option<Spanned<Scalar>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicSection {
    pub lambda: f64,
    /// Initial guess as expressions in `theta`.
    pub guess: Vec<Spanned<String>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSection {
    pub lambda_max: Option<f64>,
    pub norm_max: Option<f64>,
    pub initial_step: Option<f64>,
    pub min_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: Option<usize>,
    pub lambda_vert_tol: Option<f64>,
    pub n_vert: Option<usize>,
    pub corrector_max_iter: Option<usize>,
    /// Bounds of Ω; absent means unbounded.
    pub omega_lambda_max: Option<f64>,
    pub omega_norm_max: Option<f64>,
}

/// The file as parsed, before expressions are compiled.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: Option<String>,
    pub description: Option<String>,
    pub system: SystemSection,
    pub manifold: ManifoldSection,
    pub fields: FieldsSection,
    pub region: Option<RegionSection>,
    pub history_region: Option<Vec<HistoryRegionSection>>,
    pub flow: Option<FlowSection>,
    pub periodic: Option<PeriodicSection>,
    #[serde(default)]
    pub continuation: ContinuationSection,
    #[serde(default)]
    pub solver: Settings,
}

#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub initial: Option<DVector<f64>>,
    pub history: Option<History>,
    pub lambda: f64,
    pub t_end: f64,
}

/// A fully built run: the system plus every region and option a
/// subcommand may need.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub description: String,
    pub system: System,
    pub region: Option<RegionPredicate>,
    pub history_region: Option<HistoryRegion>,
    pub flow: FlowSpec,
    pub periodic: Option<(f64, History)>,
    pub controls: ContinuationControls,
    pub omega: PairRegion,
}

impl Problem {
    /// U from `[region]`, or the manifold's extent for compact manifolds.
    pub fn region_or_whole(&self) -> Result<RegionPredicate> {
        if let Some(r) = &self.region {
            return Ok(r.clone());
        }
        match self.system.manifold.extent() {
            Some(b) => Ok(RegionPredicate::whole(b.clone())),
            None => Err(Error::Config(
                "a [region] section is required for this manifold".into(),
            )),
        }
    }
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())]
            .matches('\n')
            .count()
            + 1
    }

    fn err<T>(&self, span: std::ops::Range<usize>, msg: impl std::fmt::Display) -> Result<T> {
        Err(Error::Config(format!(
            "line {}: {msg}",
            self.line(span.start)
        )))
    }

    fn expr(&self, s: &Spanned<String>, vars: &[&str]) -> Result<Expr> {
        Expr::parse(s.get_ref(), vars).or_else(|e| self.err(s.span(), e))
    }

    fn exprs(&self, list: &[Spanned<String>], vars: &[&str]) -> Result<Vec<Expr>> {
        list.iter().map(|s| self.expr(s, vars)).collect()
    }

    fn scalar(&self, s: &Spanned<Scalar>) -> Result<f64> {
        match s.get_ref() {
            Scalar::Number(x) => Ok(*x),
            Scalar::Expression(src) => {
                let e = Expr::parse(src, &[]).or_else(|e| self.err(s.span(), e))?;
                Ok(e.eval(&[]))
            }
        }
    }
}

fn eval_all(exprs: &[Expr], vars: &[f64]) -> DVector<f64> {
    DVector::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval(vars)))
}

fn dim_error(what: &str, got: usize, k: usize) -> Error {
    Error::Config(format!(
        "{what} has {got} components, the ambient dimension is {k}"
    ))
}

fn build_manifold(src: &Source, sec: &ManifoldSection) -> Result<EmbeddedManifold> {
    let need_dim = || {
        sec.dim
            .filter(|d| *d >= 1)
            .ok_or_else(|| Error::Config("[manifold] needs dim >= 1".into()))
    };
    let mut m = match sec.kind {
        ManifoldKind::Euclidean => EmbeddedManifold::euclidean(need_dim()?),
        ManifoldKind::Sphere => {
            let k = need_dim()?;
            if k < 2 {
                return Err(Error::Config("a sphere needs dim >= 2".into()));
            }
            EmbeddedManifold::sphere(k)
        }
        ManifoldKind::Torus => {
            let (r, rho) = (sec.major.unwrap_or(2.0), sec.minor.unwrap_or(1.0));
            if !(r > rho && rho > 0.0) {
                return Err(Error::Config(
                    "torus radii must satisfy major > minor > 0".into(),
                ));
            }
            EmbeddedManifold::torus2(r, rho)
        }
        ManifoldKind::Custom => {
            let k = need_dim()?;
            let list = sec
                .constraints
                .as_ref()
                .ok_or_else(|| Error::Config("custom manifold needs constraints".into()))?;
            if list.is_empty() || list.len() >= k {
                return Err(Error::Config(format!(
                    "custom manifold needs between 1 and {} constraints",
                    k - 1
                )));
            }
            let names = point_variables("x", k);
            let vars: Vec<&str> = names.iter().map(String::as_str).collect();
            let exprs = src.exprs(list, &vars)?;
            let c = exprs.len();
            let mut m = EmbeddedManifold::custom(
                "custom",
                k,
                c,
                Arc::new(move |p: &DVector<f64>| eval_all(&exprs, p.as_slice())),
                None::<Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>>,
            );
            if let Some(h) = sec.extent {
                m = m.with_extent(BoundingBox::symmetric(k, h));
            }
            m
        }
    };
    if let Some(chi) = sec.euler_characteristic {
        m = m.with_euler_characteristic(chi);
    }
    if let Some(t) = sec.on_tolerance {
        m = m.with_on_tolerance(t);
    }
    if let Some(c) = sec.step_cap {
        m = m.with_step_cap(c);
    }
    Ok(m)
}

fn build_region(
    sec: &RegionSection,
    k: usize,
    manifold: &EmbeddedManifold,
) -> Result<RegionPredicate> {
    let r = match sec.kind {
        RegionKind::Box => {
            let (lo, hi) = match (&sec.lower, &sec.upper) {
                (Some(l), Some(u)) => (l.clone(), u.clone()),
                _ => return Err(Error::Config("[region] box needs lower and upper".into())),
            };
            if lo.len() != k || hi.len() != k {
                return Err(dim_error("[region] corner", lo.len().max(hi.len()), k));
            }
            RegionPredicate::open_box(BoundingBox::new(lo, hi))
        }
        RegionKind::Ball => {
            let c = sec
                .center
                .clone()
                .ok_or_else(|| Error::Config("[region] ball needs center".into()))?;
            if c.len() != k {
                return Err(dim_error("[region] center", c.len(), k));
            }
            let radius = sec
                .radius
                .filter(|r| *r > 0.0)
                .ok_or_else(|| Error::Config("[region] ball needs radius > 0".into()))?;
            RegionPredicate::ball(c, radius)
        }
        RegionKind::Whole => {
            let b = manifold.extent().ok_or_else(|| {
                Error::Config("region kind 'whole' needs a compact manifold".into())
            })?;
            RegionPredicate::whole(b.clone())
        }
    };
    Ok(match sec.margin {
        Some(m) => r.with_boundary_margin(m),
        None => r,
    })
}

fn history_from_exprs(src: &Source, sys: &System, list: &[Spanned<String>]) -> Result<History> {
    let k = sys.manifold.ambient_dim();
    if list.len() != k {
        return Err(dim_error("history", list.len(), k));
    }
    let exprs = src.exprs(list, &["theta"])?;
    sys.history_from_fn(|th| eval_all(&exprs, &[th]))
}

fn build_history_region(
    src: &Source,
    sys: &System,
    sec: &HistoryRegionSection,
) -> Result<HistoryRegion> {
    let k = sys.manifold.ambient_dim();
    let center = || -> Result<History> {
        match (&sec.point, &sec.center) {
            (Some(p), None) => {
                if p.len() != k {
                    return Err(dim_error("history_region point", p.len(), k));
                }
                Ok(sys.constant_history(DVector::from_vec(p.clone())))
            }
            (None, Some(list)) => history_from_exprs(src, sys, list),
            _ => Err(Error::Config(
                "history_region needs exactly one of point or center".into(),
            )),
        }
    };
    let radius = || {
        sec.radius
            .filter(|r| *r > 0.0)
            .ok_or_else(|| Error::Config("history_region needs radius > 0".into()))
    };
    let bbox = || -> Result<BoundingBox> {
        match (&sec.lower, &sec.upper) {
            (Some(l), Some(u)) if l.len() == k && u.len() == k => {
                Ok(BoundingBox::new(l.clone(), u.clone()))
            }
            _ => Err(Error::Config(format!(
                "history_region needs lower and upper of length {k}"
            ))),
        }
    };
    Ok(match sec.kind {
        HistoryRegionKind::SupBall => HistoryRegion::SupBall {
            center: center()?,
            radius: radius()?,
        },
        HistoryRegionKind::AnchoredBall => HistoryRegion::AnchoredBall {
            anchor: bbox()?,
            center: center()?,
            radius: radius()?,
        },
        HistoryRegionKind::Everything => HistoryRegion::Everything { bbox: bbox()? },
    })
}

impl Problem {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(&cfg, text)
    }

    pub fn from_config(cfg: &RunConfig, text: &str) -> Result<Self> {
        let src = Source { text };
        let period = src.scalar(&cfg.system.period)?;
        if !(period > 0.0 && period.is_finite()) {
            return src.err(cfg.system.period.span(), "period must be positive");
        }
        let delay = match &cfg.system.delay {
            Some(d) => {
                let r = src.scalar(d)?;
                if !(r >= 0.0 && r.is_finite()) {
                    return src.err(d.span(), "delay must be non-negative");
                }
                r
            }
            None => 0.0,
        };
        let manifold = build_manifold(&src, &cfg.manifold)?;
        let k = manifold.ambient_dim();

        let names = point_variables("x", k);
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        if cfg.fields.g.get_ref().len() != k {
            return src.err(
                cfg.fields.g.span(),
                dim_error("g", cfg.fields.g.get_ref().len(), k),
            );
        }
        let g_exprs = src.exprs(cfg.fields.g.get_ref(), &vars)?;
        let g = TangentField::new(k, move |p| eval_all(&g_exprs, p.as_slice()));

        let f = match &cfg.fields.f {
            None => PerturbationField::zero(k, period, delay),
            Some(list) => {
                if list.get_ref().len() != k {
                    return src.err(list.span(), dim_error("f", list.get_ref().len(), k));
                }
                let ys = point_variables("y", k);
                let mut fvars: Vec<&str> = vec!["t"];
                fvars.extend(names.iter().map(String::as_str));
                fvars.extend(ys.iter().map(String::as_str));
                let exprs = src.exprs(list.get_ref(), &fvars)?;
                if exprs.iter().all(Expr::is_zero_literal) {
                    PerturbationField::zero(k, period, delay)
                } else {
                    PerturbationField::new(k, period, delay, move |t, p, q| {
                        let mut v = Vec::with_capacity(1 + 2 * k);
                        v.push(t);
                        v.extend_from_slice(p.as_slice());
                        v.extend_from_slice(q.as_slice());
                        eval_all(&exprs, &v)
                    })
                }
            }
        };
        let system = System::new(manifold, g, f, cfg.solver.clone())?;

        let region = cfg
            .region
            .as_ref()
            .map(|r| build_region(r, k, &system.manifold))
            .transpose()?;

        let history_region = match &cfg.history_region {
            None => None,
            Some(list) if list.is_empty() => None,
            Some(list) => {
                let mut parts = list
                    .iter()
                    .map(|s| build_history_region(&src, &system, s))
                    .collect::<Result<Vec<_>>>()?;
                Some(if parts.len() == 1 {
                    parts.remove(0)
                } else {
                    HistoryRegion::Union(parts)
                })
            }
        };

        let fs = cfg.flow.clone().unwrap_or_default();
        let initial = match &fs.initial {
            Some(p) if p.len() != k => return Err(dim_error("[flow] initial", p.len(), k)),
            Some(p) => Some(
                system
                    .manifold
                    .project_point(&DVector::from_vec(p.clone()))?,
            ),
            None => None,
        };
        let history = fs
            .history
            .as_ref()
            .map(|list| history_from_exprs(&src, &system, list))
            .transpose()?;
        let t_end = match &fs.t_end {
            Some(s) => src.scalar(s)?,
            None => period,
        };
        if !(t_end > 0.0) {
            return Err(Error::Config("[flow] t_end must be positive".into()));
        }
        if fs.lambda < 0.0 {
            return Err(Error::Config("[flow] lambda must be non-negative".into()));
        }

        let periodic = match &cfg.periodic {
            None => None,
            Some(p) => {
                if p.lambda < 0.0 {
                    return Err(Error::Config(
                        "[periodic] lambda must be non-negative".into(),
                    ));
                }
                Some((p.lambda, history_from_exprs(&src, &system, &p.guess)?))
            }
        };

        let c = &cfg.continuation;
        let d = ContinuationControls::default();
        let controls = ContinuationControls {
            lambda_max: c.lambda_max.unwrap_or(d.lambda_max),
            norm_max: c.norm_max.unwrap_or(d.norm_max),
            initial_step: c.initial_step.unwrap_or(d.initial_step),
            min_step: c.min_step.unwrap_or(d.min_step),
            max_step: c.max_step.unwrap_or(d.max_step),
            max_steps: c.max_steps.unwrap_or(d.max_steps),
            lambda_vert_tol: c.lambda_vert_tol.unwrap_or(d.lambda_vert_tol),
            n_vert: c.n_vert.unwrap_or(d.n_vert),
            corrector_max_iter: c.corrector_max_iter.unwrap_or(d.corrector_max_iter),
        };
        if !(controls.min_step > 0.0
            && controls.min_step <= controls.initial_step
            && controls.initial_step <= controls.max_step)
        {
            return Err(Error::Config(
                "[continuation] needs 0 < min_step <= initial_step <= max_step".into(),
            ));
        }
        let seed_bbox = match (&region, system.manifold.extent()) {
            (Some(r), _) => r.bbox().clone(),
            (None, Some(b)) => b.clone(),
            (None, None) => BoundingBox::symmetric(k, 10.0),
        };
        let omega = PairRegion {
            lambda_max: c.omega_lambda_max.unwrap_or(f64::INFINITY),
            norm_max: c.omega_norm_max.unwrap_or(f64::INFINITY),
            seed_bbox,
        };

        Ok(Problem {
            name: cfg.name.clone().unwrap_or_else(|| "config".into()),
            description: cfg.description.clone().unwrap_or_default(),
            system,
            region,
            history_region,
            flow: FlowSpec {
                initial,
                history,
                lambda: fs.lambda,
                t_end,
            },
            periodic,
            controls,
            omega,
        })
    }
}
