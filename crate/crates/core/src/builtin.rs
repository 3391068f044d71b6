//! Named example problems, runnable without a configuration file.

use crate::config::Problem;
use crate::error::{Error, Result};

const CUBIC1D: &str = r#"
name = "cubic1d"
description = "x' = x(1 - x^2) on the line, unforced"
[system]
period = 1.0
delay = 0.3
[manifold]
kind = "euclidean"
dim = 1
[fields]
g = ["x1*(1 - x1^2)"]
[region]
lower = [-2.0]
upper = [2.0]
[[history_region]]
kind = "sup_ball"
point = [1.0]
radius = 0.5
[flow]
initial = [0.5]
t_end = 3.0
[continuation]
lambda_max = 3.0
omega_lambda_max = 3.0
omega_norm_max = 10.0
"#;

const SPHERE_HEIGHT: &str = r#"
name = "sphere_height"
description = "gradient of the height function on the unit sphere"
[system]
period = 1.0
delay = 0.5
[manifold]
kind = "sphere"
dim = 3
[fields]
g = ["0", "0", "1"]
[region]
kind = "whole"
[flow]
initial = [1.0, 0.0, 0.0]
t_end = 2.0
[continuation]
lambda_max = 2.0
omega_lambda_max = 2.0
omega_norm_max = 10.0
"#;

const TORUS_FLOW: &str = r#"
name = "torus_flow"
description = "rotation about the axis of a torus, no zeros"
[system]
period = 1.0
delay = 0.5
[manifold]
kind = "torus"
major = 2.0
minor = 1.0
[fields]
g = ["-x2", "x1", "0"]
[region]
kind = "whole"
[flow]
initial = [3.0, 0.0, 0.0]
t_end = "2*pi"
"#;

const DELAY_OSCILLATOR: &str = r#"
name = "delay_oscillator"
description = "x' = -x + lambda (sin t - x(t - pi/2)), closed-form periodic branch"
[system]
period = "2*pi"
delay = "pi/2"
[manifold]
kind = "euclidean"
dim = 1
[fields]
g = ["-x1"]
f = ["sin(t) - y1"]
[region]
lower = [-2.0]
upper = [2.0]
[flow]
history = ["0"]
lambda = 1.0
t_end = "6*pi"
[periodic]
lambda = 1.0
guess = ["0.5*sin(theta)"]
[continuation]
lambda_max = 5.0
omega_lambda_max = 5.0
omega_norm_max = 100.0
"#;

const RESONANCE: &str = r#"
name = "resonance"
description = "harmonic oscillator in the plane forced at its own frequency"
[system]
period = "2*pi"
delay = 0.0
[manifold]
kind = "euclidean"
dim = 2
[fields]
g = ["x2", "-x1"]
f = ["0", "sin(t)"]
[region]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
[flow]
initial = [0.0, 0.0]
lambda = 0.1
t_end = "4*pi"
[periodic]
lambda = 0.1
guess = ["0", "0"]
[continuation]
lambda_max = 1.0
"#;

const ROTATION: &str = r#"
name = "rotation"
description = "planar rotation, every orbit has period 2 pi"
[system]
period = "2*pi"
delay = "pi/2"
[manifold]
kind = "euclidean"
dim = 2
[fields]
g = ["x2", "-x1"]
[region]
lower = [-1.5, -1.5]
upper = [1.5, 1.5]
[[history_region]]
kind = "sup_ball"
center = ["cos(theta)", "-sin(theta)"]
radius = 0.2
[flow]
initial = [1.0, 0.0]
[solver]
steps_per_period = 400
"#;

const DECAY: &str = r#"
name = "decay"
description = "x' = -x with a delayed history space"
[system]
period = 1.0
delay = 0.5
[manifold]
kind = "euclidean"
dim = 1
[fields]
g = ["-x1"]
[region]
lower = [-1.0]
upper = [1.0]
[[history_region]]
kind = "sup_ball"
point = [0.0]
radius = 0.3
[flow]
initial = [1.0]
t_end = 2.0
[continuation]
lambda_max = 2.0
omega_lambda_max = 2.0
omega_norm_max = 10.0
"#;

/// Name and configuration text of every built-in example.
pub const EXAMPLES: &[(&str, &str)] = &[
    ("cubic1d", CUBIC1D),
    ("sphere_height", SPHERE_HEIGHT),
    ("torus_flow", TORUS_FLOW),
    ("delay_oscillator", DELAY_OSCILLATOR),
    ("resonance", RESONANCE),
    ("rotation", ROTATION),
    ("decay", DECAY),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    EXAMPLES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    EXAMPLES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn example(name: &str) -> Result<Problem> {
    let src = source(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown example '{name}', available: {}",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    Problem::from_toml(src)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_example_parses() {
        for name in names() {
            let p = example(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(p.name, name);
            assert!(p.region_or_whole().is_ok(), "{name}");
        }
        assert!(example("nope").is_err());
    }
}
