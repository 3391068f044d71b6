//! The time-T map P on M, the history translation operators Q and Q_λ on
//! discretised histories, and the maps h: M → histories, k: φ ↦ φ(0) that
//! factor Q = h∘k and P = k∘h.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::integrate::{flow_dde, flow_ode, DelayTrajectory, History, Trajectory};
use crate::system::System;

/// Output history of a translation operator and the run it was read from.
#[derive(Debug, Clone)]
pub struct HistoryOperatorResult {
    pub output: History,
    pub underlying: DelayTrajectory,
}

fn outside_domain(err: Error) -> Error {
    match err {
        Error::BlowUp { time, radius } => Error::OutsideDomain(format!(
            "solution is not defined up to T (escaped radius {radius:.3e} at t = {time:.6e})"
        )),
        other => other,
    }
}

/// P(p) = x(p, T).
pub fn poincare_p(sys: &System, p: &DVector<f64>) -> Result<DVector<f64>> {
    let tr = flow_ode(
        &sys.manifold,
        &sys.g,
        p,
        0.0,
        sys.period(),
        sys.flow_options(),
    )
    .map_err(outside_domain)?;
    Ok(tr.final_state().clone())
}

/// Reads x(T + θ_i) at every node of `grid` from a run on [0, T].
fn read_segment(sys: &System, grid: &History, run: &Trajectory) -> Result<History> {
    let period = sys.period();
    let values = grid
        .thetas()
        .iter()
        .map(|th| {
            if *th == 0.0 {
                Ok(run.final_state().clone())
            } else {
                run.at_on(&sys.manifold, period + th)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(grid.with_values(values))
}

/// Q(φ)(θ) = x(φ(0), T + θ): depends on φ only through φ(0).
pub fn translation_q(sys: &System, phi: &History) -> Result<HistoryOperatorResult> {
    debug_assert!(phi.delay() <= sys.period());
    let run = flow_ode(
        &sys.manifold,
        &sys.g,
        phi.at_zero(),
        0.0,
        sys.period(),
        sys.flow_options(),
    )
    .map_err(outside_domain)?;
    let output = read_segment(sys, phi, &run)?;
    Ok(HistoryOperatorResult {
        output,
        underlying: DelayTrajectory {
            history: phi.clone(),
            forward: run,
        },
    })
}

/// Q_λ(φ)(θ) = ξ^λ(φ, T + θ) with ξ^λ the solution of the delay equation
/// with initial history φ. Q_0 = Q. Slightly negative λ is evaluated as
/// written; continuation correctors may probe there.
pub fn translation_q_lambda(
    sys: &System,
    lambda: f64,
    phi: &History,
) -> Result<HistoryOperatorResult> {
    let run = flow_dde(
        &sys.manifold,
        &sys.g,
        &sys.f,
        lambda,
        phi,
        sys.period(),
        sys.flow_options(),
    )
    .map_err(outside_domain)?;
    let output = read_segment(sys, phi, &run.forward)?;
    Ok(HistoryOperatorResult {
        output,
        underlying: run,
    })
}

/// h(p)(θ) = x(p, θ + T) on the system's history grid.
pub fn map_h(sys: &System, p: &DVector<f64>) -> Result<History> {
    Ok(translation_q(sys, &sys.constant_history(p.clone()))?.output)
}

/// k(φ) = φ(0).
pub fn map_k(phi: &History) -> DVector<f64> {
    phi.at_zero().clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{PerturbationField, TangentField};
    use crate::manifold::EmbeddedManifold;
    use crate::region::sup_distance;
    use crate::settings::Settings;
    use nalgebra::DMatrix;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn decay_system(delay: f64) -> System {
        let g = TangentField::new(1, |p| -p.clone())
            .with_jacobian(|_| DMatrix::from_element(1, 1, -1.0));
        System::unperturbed(
            EmbeddedManifold::euclidean(1),
            g,
            1.0,
            delay,
            Settings::default(),
        )
        .unwrap()
    }

    #[test]
    fn p_of_zero_field_is_identity() {
        let sys = System::unperturbed(
            EmbeddedManifold::euclidean(2),
            TangentField::zero(2),
            1.0,
            0.0,
            Settings::default(),
        )
        .unwrap();
        let p = v(&[0.3, 0.7]);
        assert_eq!(poincare_p(&sys, &p).unwrap(), p);
    }

    #[test]
    fn p_of_decay() {
        let sys = decay_system(0.5);
        let out = poincare_p(&sys, &v(&[2.0])).unwrap();
        assert!((out[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn zeros_of_cubic_are_fixed() {
        let g = TangentField::new(1, |p| v(&[p[0] * (1.0 - p[0] * p[0])]));
        let sys = System::unperturbed(
            EmbeddedManifold::euclidean(1),
            g,
            1.0,
            0.3,
            Settings::default(),
        )
        .unwrap();
        for q in [-1.0, 0.0, 1.0] {
            assert!((poincare_p(&sys, &v(&[q])).unwrap()[0] - q).abs() < 1e-9);
        }
    }

    #[test]
    fn q_closed_form_and_factorisation() {
        let sys = decay_system(0.5);
        let phi = sys.history_from_fn(|th| v(&[1.0 + 0.3 * th * th])).unwrap();
        let out = translation_q(&sys, &phi).unwrap().output;
        for (th, x) in out.thetas().iter().zip(out.values()) {
            assert!((x[0] - (-(1.0 + th)).exp()).abs() < 1e-8, "theta {th}");
        }
        let other = sys
            .history_from_fn(|th| v(&[1.0 + (5.0 * th).sin()]))
            .unwrap();
        let out2 = translation_q(&sys, &other).unwrap().output;
        assert_eq!(out.values(), out2.values());
    }

    #[test]
    fn q_of_zero_field_is_constant() {
        let sys = System::unperturbed(
            EmbeddedManifold::euclidean(1),
            TangentField::zero(1),
            1.0,
            0.4,
            Settings::default(),
        )
        .unwrap();
        let phi = sys.history_from_fn(|th| v(&[th])).unwrap();
        let out = translation_q(&sys, &phi).unwrap().output;
        assert!(out.values().iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn q_lambda_reduces_to_q() {
        let period = 2.0 * PI;
        let f = PerturbationField::new(1, period, FRAC_PI_2, |t, _, q| v(&[t.sin() - q[0]]));
        let g = TangentField::new(1, |p| -p.clone());
        let sys = System::new(
            EmbeddedManifold::euclidean(1),
            g.clone(),
            f,
            Settings::default(),
        )
        .unwrap();
        let phi = sys.history_from_fn(|th| v(&[0.3 + th.cos()])).unwrap();
        let q = translation_q(&sys, &phi).unwrap().output;
        let q0 = translation_q_lambda(&sys, 0.0, &phi).unwrap().output;
        assert!(sup_distance(&q, &q0) <= 1e-10);

        let unforced = System::new(
            EmbeddedManifold::euclidean(1),
            g,
            PerturbationField::zero(1, period, FRAC_PI_2),
            Settings::default(),
        )
        .unwrap();
        let q7 = translation_q_lambda(&unforced, 7.0, &phi).unwrap().output;
        assert!(sup_distance(&q, &q7) <= 1e-10);
    }

    #[test]
    fn sine_history_is_fixed_by_q_lambda() {
        let period = 2.0 * PI;
        let f = PerturbationField::new(1, period, FRAC_PI_2, |t, _, q| v(&[t.sin() - q[0]]));
        let g = TangentField::new(1, |p| -p.clone());
        let sys = System::new(EmbeddedManifold::euclidean(1), g, f, Settings::default()).unwrap();
        let phi = sys.history_from_fn(|th| v(&[th.sin()])).unwrap();
        let out = translation_q_lambda(&sys, 1.0, &phi).unwrap().output;
        assert!(sup_distance(&phi, &out) <= 1e-6);
    }

    #[test]
    fn h_and_k_compose_to_q_and_p() {
        let sys = decay_system(0.5);
        let phi = sys.history_from_fn(|th| v(&[0.8 - th])).unwrap();
        let hk = map_h(&sys, &map_k(&phi)).unwrap();
        let q = translation_q(&sys, &phi).unwrap().output;
        assert!(sup_distance(&hk, &q) <= 1e-10);
        for p in [-1.5, 0.2, 3.0] {
            let p = v(&[p]);
            let kh = map_k(&map_h(&sys, &p).unwrap());
            assert!((kh - poincare_p(&sys, &p).unwrap()).norm() <= 1e-10);
        }
        assert_eq!(map_k(&sys.constant_history(v(&[4.0])))[0], 4.0);
    }

    #[test]
    fn blow_up_is_outside_domain() {
        let g = TangentField::new(1, |p| v(&[p[0] * p[0]]));
        let sys = System::unperturbed(
            EmbeddedManifold::euclidean(1),
            g,
            2.0,
            0.5,
            Settings::default(),
        )
        .unwrap();
        assert!(matches!(
            poincare_p(&sys, &v(&[1.0])),
            Err(Error::OutsideDomain(_))
        ));
        let phi = sys.constant_history(v(&[1.0]));
        assert!(matches!(
            translation_q(&sys, &phi),
            Err(Error::OutsideDomain(_))
        ));
    }
}
