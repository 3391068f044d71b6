use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fields::{tangentize, tangentize_perturbation, PerturbationField, TangentField};
use crate::integrate::{normalize_delay, Delay, FlowOptions, History};
use crate::manifold::EmbeddedManifold;
use crate::settings::Settings;

/// Everything that defines one instance of the perturbed equation: the
/// manifold, the tangent fields g and f, the period T and the (normalised)
/// delay, plus numerical settings. Fields are tangentized on construction.
#[derive(Debug, Clone)]
pub struct System {
    pub manifold: EmbeddedManifold,
    pub g: TangentField,
    pub f: PerturbationField,
    pub settings: Settings,
    delay: Delay,
    flow: FlowOptions,
}

impl System {
    pub fn new(
        manifold: EmbeddedManifold,
        g: TangentField,
        f: PerturbationField,
        settings: Settings,
    ) -> Result<Self> {
        let k = manifold.ambient_dim();
        if g.ambient_dim() != k || f.ambient_dim() != k {
            return Err(Error::Dimension(format!(
                "manifold lives in R^{k}, g in R^{}, f in R^{}",
                g.ambient_dim(),
                f.ambient_dim()
            )));
        }
        if settings.history_nodes < 4 {
            return Err(Error::Config("history_nodes must be at least 4".into()));
        }
        let delay = normalize_delay(f.delay(), f.period());
        let flow = FlowOptions::for_problem(f.period(), delay, &settings);
        Ok(Self {
            g: tangentize(&manifold, &g),
            f: tangentize_perturbation(&manifold, &f),
            manifold,
            settings,
            delay,
            flow,
        })
    }

    /// f ≡ 0 with the given period and delay.
    pub fn unperturbed(
        manifold: EmbeddedManifold,
        g: TangentField,
        period: f64,
        delay: f64,
        settings: Settings,
    ) -> Result<Self> {
        let k = manifold.ambient_dim();
        Self::new(
            manifold,
            g,
            PerturbationField::zero(k, period, delay),
            settings,
        )
    }

    pub fn period(&self) -> f64 {
        self.f.period()
    }

    /// Delay after reduction into (0, T].
    pub fn delay(&self) -> Delay {
        self.delay
    }

    pub fn flow_options(&self) -> &FlowOptions {
        &self.flow
    }

    /// Overrides the integrator step (used by convergence studies).
    pub fn with_step(mut self, step: f64) -> Self {
        self.flow.step = step;
        self
    }

    /// Number of history intervals (0 when the delay vanishes).
    pub fn history_intervals(&self) -> usize {
        match self.delay {
            Delay::Zero => 0,
            Delay::Positive(_) => self.settings.history_nodes,
        }
    }

    pub fn constant_history(&self, p: DVector<f64>) -> History {
        History::constant(p, self.delay.value(), self.settings.history_nodes)
    }

    /// Samples θ ↦ x(θ) on the system's history grid and retracts onto M.
    pub fn history_from_fn<F>(&self, f: F) -> Result<History>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        let raw = History::from_fn(self.delay.value(), self.settings.history_nodes, f);
        let values = raw
            .values()
            .iter()
            .map(|v| self.manifold.project_point(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(raw.with_values(values))
    }
}
