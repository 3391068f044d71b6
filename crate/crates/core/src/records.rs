//! Line-delimited records: one JSON object per line, numbers written in full
//! precision scientific notation.
//!
//! | kind       | keys                                                      |
//! |------------|-----------------------------------------------------------|
//! | trajectory | `t`, `x`                                                  |
//! | history    | `theta`, `x`                                              |
//! | zero       | `x`, `sign`, `det`, `residual`                            |
//! | branch     | `index`, `lambda`, `arclength`, `sup_norm`, `residual`, `trivial`, `history`, `loop` |

use std::fmt::Write as _;
use std::io::{self, Write};

use nalgebra::DVector;
use serde::Deserialize;

use crate::branch::{Branch, PeriodicPair};
use crate::degree::ZeroRecord;
use crate::error::{Error, Result};
use crate::integrate::{History, Trajectory};

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn vector(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(","))
}

fn node(key: &str, at: f64, x: &DVector<f64>) -> String {
    format!("{{\"{key}\":{},\"x\":{}}}", num(at), vector(x))
}

pub fn trajectory_line(t: f64, x: &DVector<f64>) -> String {
    node("t", t, x)
}

pub fn write_trajectory<W: Write>(out: &mut W, tr: &Trajectory) -> io::Result<()> {
    for (t, x) in tr.times().iter().zip(tr.states()) {
        writeln!(out, "{}", trajectory_line(*t, x))?;
    }
    Ok(())
}

pub fn write_history<W: Write>(out: &mut W, phi: &History) -> io::Result<()> {
    for (th, x) in phi.thetas().iter().zip(phi.values()) {
        writeln!(out, "{}", node("theta", *th, x))?;
    }
    Ok(())
}

pub fn write_zeros<W: Write>(out: &mut W, zeros: &[ZeroRecord]) -> io::Result<()> {
    for z in zeros {
        writeln!(
            out,
            "{{\"x\":{},\"sign\":{},\"det\":{},\"residual\":{}}}",
            vector(&z.point),
            z.local_sign,
            num(z.det),
            num(z.residual)
        )?;
    }
    Ok(())
}

/// One line per accepted pair.
pub fn write_branch<W: Write>(out: &mut W, branch: &Branch) -> io::Result<()> {
    for (i, (pair, s)) in branch.pairs.iter().zip(&branch.arclength).enumerate() {
        writeln!(out, "{}", pair_line(i, pair, *s))?;
    }
    Ok(())
}

pub fn pair_line(i: usize, pair: &PeriodicPair, s: f64) -> String {
    let mut line = format!(
            "{{\"index\":{i},\"lambda\":{},\"arclength\":{},\"sup_norm\":{},\"residual\":{},\"trivial\":{},\"history\":[",
            num(pair.lambda),
            num(s),
            num(pair.sup_norm()),
            num(pair.residual),
            pair.is_trivial
        );
    let hist: Vec<String> = pair
        .history
        .thetas()
        .iter()
        .zip(pair.history.values())
        .map(|(th, x)| node("theta", *th, x))
        .collect();
    line.push_str(&hist.join(","));
    line.push_str("],\"loop\":[");
    let nodes: Vec<String> = pair
        .orbit
        .times()
        .iter()
        .zip(pair.orbit.states())
        .map(|(t, x)| node("t", *t, x))
        .collect();
    line.push_str(&nodes.join(","));
    line.push_str("]}");
    line
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryRecord {
    pub theta: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroLine {
    pub x: Vec<f64>,
    pub sign: i32,
    pub det: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub index: usize,
    pub lambda: f64,
    pub arclength: f64,
    pub sup_norm: f64,
    pub residual: f64,
    pub trivial: bool,
    pub history: Vec<HistoryRecord>,
    #[serde(rename = "loop")]
    pub orbit: Vec<TrajectoryRecord>,
}

impl BranchRecord {
    pub fn history(&self) -> Result<History> {
        history_from_records(&self.history)
    }
}

/// Parses one record per non-empty line.
pub fn read_records<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Record {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Rebuilds a history from its node records (θ from −r to 0).
pub fn history_from_records(records: &[HistoryRecord]) -> Result<History> {
    let bad = |message: String| Error::Record { line: 0, message };
    let first = records.first().ok_or_else(|| bad("empty history".into()))?;
    let last = records.last().expect("non-empty");
    if last.theta != 0.0 {
        return Err(bad(format!(
            "history must end at theta = 0, ends at {}",
            last.theta
        )));
    }
    let delay = -first.theta;
    if records.len() > 1 && records.len() < 5 {
        return Err(bad("a history needs at least 4 intervals".into()));
    }
    let values = records
        .iter()
        .map(|r| DVector::from_vec(r.x.clone()))
        .collect();
    Ok(History::new(delay, values))
}

pub fn read_history(text: &str) -> Result<History> {
    history_from_records(&read_records::<HistoryRecord>(text)?)
}

pub fn history_to_string(phi: &History) -> String {
    let mut s = String::new();
    for (th, x) in phi.thetas().iter().zip(phi.values()) {
        let _ = writeln!(s, "{}", node("theta", *th, x));
    }
    s
}
