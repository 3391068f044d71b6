use serde::{Deserialize, Serialize};

/// Numerical knobs shared by the integrators, zero finders and the
/// continuation driver. Manifold tolerances live on the manifold itself.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    /// Tangency tolerance for user fields.
    pub tang_tol: f64,
    /// |g(q)| threshold for accepting q as a zero.
    pub zero_tol: f64,
    /// Relative determinant threshold for degenerate zeros and non-hyperbolic fixed points.
    pub singular_tol: f64,
    /// RK4 steps per period T (fixed-step integrator).
    pub steps_per_period: usize,
    /// Step-doubling local error target; `None` keeps the fixed-step integrator.
    pub adaptive_tol: Option<f64>,
    /// |x| beyond which a trajectory is declared to have blown up.
    pub escape_radius: f64,
    /// Number of history intervals n_h on [-r, 0].
    pub history_nodes: usize,
    pub seeds_per_axis: usize,
    /// Deduplication radius relative to the seeding box diameter.
    pub dedup_radius_rel: f64,
    pub newton_max_iter: usize,
    pub winding_samples: usize,
    /// Sup-norm residual accepted for a periodic solution.
    pub periodic_tol: f64,
    pub periodic_max_iter: usize,
    /// Residual below which Q-fixedness of h-images is accepted.
    pub fix_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tang_tol: 1e-8,
            zero_tol: 1e-8,
            singular_tol: 1e-8,
            steps_per_period: 200,
            adaptive_tol: None,
            escape_radius: 1e6,
            history_nodes: 32,
            seeds_per_axis: 16,
            dedup_radius_rel: 1e-6,
            newton_max_iter: 50,
            winding_samples: 4096,
            periodic_tol: 1e-8,
            periodic_max_iter: 25,
            fix_tol: 1e-7,
        }
    }
}
