use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dperiod::branch::{branch_certificate, periodic_pair};
use dperiod::builtin;
use dperiod::config::Problem;
use dperiod::degree::degree_report;
use dperiod::index::{index_q_region, verify_fix_correspondence};
use dperiod::integrate::{flow_dde, flow_ode};
use dperiod::records;
use dperiod::verify::run_suite;
use dperiod::Error;

/// Periodic solutions of delay-perturbed ODEs on embedded manifolds.
#[derive(Parser)]
#[command(name = "dperiod", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "example")]
    config: Option<PathBuf>,
    /// Built-in example by name.
    #[arg(long, global = true, value_name = "NAME")]
    example: Option<String>,
    /// Write data records here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Seed for the randomized checks.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Suppress the human-readable report.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// deg(g, U) and the zero table.
    Degree,
    /// ind(Q, W), deg(-g, W_check) and ind(P, W_check).
    Index,
    /// Trajectory records of the ODE or the delay equation.
    Flow,
    /// Solve for a periodic solution at fixed lambda.
    Periodic,
    /// Continue branches from the trivial pairs and report the certificate.
    Branch,
    /// Run the built-in check suite.
    Verify,
    /// List the built-in examples.
    Examples,
}

enum Failure {
    Domain(String),
    Config(String),
    Anomaly,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Expression(_) | Error::Record { .. } => {
                Failure::Config(e.to_string())
            }
            other => Failure::Domain(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Domain(format!("i/o error: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn load(common: &Common) -> Result<Problem, Failure> {
    match (&common.config, &common.example) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            Problem::from_toml(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
        }
        (None, Some(name)) => Ok(builtin::example(name)?),
        (None, None) => Err(Failure::Config(
            "pass --config PATH or --example NAME".into(),
        )),
    }
}

/// Records go to --out when given, else to standard output.
fn sink(common: &Common) -> Result<Box<dyn Write>, Failure> {
    Ok(match &common.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn report(common: &Common, text: &str) {
    if !common.quiet {
        print!("{text}");
    }
}

fn degree(common: &Common) -> Outcome {
    let p = load(common)?;
    let region = p.region_or_whole()?;
    let rep = degree_report(&p.system.manifold, &p.system.g, &region, &p.system.settings)?;
    println!("{}", rep.degree);
    let mut table = format!("{:>4}  {:>12}  {:>12}  point\n", "sign", "det", "|g|");
    for z in &rep.zeros {
        table.push_str(&format!(
            "{:>+4}  {:>12.4e}  {:>12.4e}  {:?}\n",
            z.local_sign,
            z.det,
            z.residual,
            z.point.as_slice()
        ));
    }
    report(common, &table);
    if common.out.is_some() {
        let mut w = sink(common)?;
        records::write_zeros(&mut w, &rep.zeros)?;
        w.flush()?;
    }
    Ok(())
}

fn index(common: &Common) -> Outcome {
    let p = load(common)?;
    let w = p
        .history_region
        .as_ref()
        .ok_or_else(|| Failure::Config("index needs a [[history_region]] section".into()))?;
    let corr = verify_fix_correspondence(&p.system, w);
    let in_w = corr.fix_q().count();
    let outside = corr.fix_q().filter(|e| !e.in_check).count();
    report(
        common,
        &format!(
            "fix(Q, W): {in_w} histories h(p), {outside} with p outside W_check, all fixed within {:.1e}: {}\n",
            corr.tolerance, corr.all_fixed
        ),
    );
    let rep = index_q_region(&p.system, w)?;
    let pass = rep.index_q == rep.degree_neg_g && rep.degree_neg_g == rep.index_p;
    println!("ind(Q, W) = {}", rep.index_q);
    println!("deg(-g, W_check) = {}", rep.degree_neg_g);
    println!("ind(P, W_check) = {}", rep.index_p);
    if rep.check_set_empty {
        report(common, "W_check is empty\n");
    }
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(Failure::Domain("reduction formula not satisfied".into()))
    }
}

fn flow(common: &Common) -> Outcome {
    let p = load(common)?;
    let sys = &p.system;
    let spec = &p.flow;
    let mut w = sink(common)?;
    match (&spec.history, &spec.initial) {
        (None, Some(x0)) if spec.lambda == 0.0 => {
            let tr = flow_ode(
                &sys.manifold,
                &sys.g,
                x0,
                0.0,
                spec.t_end,
                sys.flow_options(),
            )?;
            records::write_trajectory(&mut w, &tr)?;
        }
        (history, initial) => {
            let phi = match (history, initial) {
                (Some(h), _) => h.clone(),
                (None, Some(x0)) => sys.constant_history(x0.clone()),
                (None, None) => {
                    return Err(Failure::Config("[flow] needs initial or history".into()))
                }
            };
            let tr = flow_dde(
                &sys.manifold,
                &sys.g,
                &sys.f,
                spec.lambda,
                &phi,
                spec.t_end,
                sys.flow_options(),
            )?;
            for (t, x) in tr.nodes() {
                writeln!(w, "{}", records::trajectory_line(t, x))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn periodic(common: &Common) -> Outcome {
    let p = load(common)?;
    let (lambda, guess) = p
        .periodic
        .as_ref()
        .ok_or_else(|| Failure::Config("periodic needs a [periodic] section".into()))?;
    let phi = dperiod::branch::solve_periodic(&p.system, *lambda, guess)?;
    let pair = periodic_pair(&p.system, *lambda, &phi)?;
    report(
        common,
        &format!(
            "lambda = {:.6e}  sup norm = {:.6e}  residual = {:.3e}\n",
            pair.lambda,
            pair.sup_norm(),
            pair.residual
        ),
    );
    let mut w = sink(common)?;
    writeln!(w, "{}", records::pair_line(0, &pair, 0.0))?;
    w.flush()?;
    Ok(())
}

fn branch(common: &Common) -> Outcome {
    let p = load(common)?;
    let cert = branch_certificate(&p.system, &p.omega, &p.controls)?;
    if common.out.is_some() {
        let mut w = sink(common)?;
        for b in &cert.witnesses {
            records::write_branch(&mut w, b)?;
        }
        w.flush()?;
    }
    let text = cert.report();
    if common.quiet {
        for b in &cert.witnesses {
            println!("termination {}", b.termination);
        }
    } else {
        print!("{text}");
    }
    if cert.anomaly() {
        println!("ANOMALY");
        return Err(Failure::Anomaly);
    }
    Ok(())
}

fn verify(common: &Common) -> Outcome {
    let checks = run_suite(common.seed);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        if common.quiet {
            println!("{status}  {}", c.name);
        } else {
            println!("{status}  {:<width$}  {}", c.name, c.detail);
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Domain(format!("{failed} checks failed")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let outcome = match cli.command {
        Command::Degree => degree(c),
        Command::Index => index(c),
        Command::Flow => flow(c),
        Command::Periodic => periodic(c),
        Command::Branch => branch(c),
        Command::Verify => verify(c),
        Command::Examples => {
            for name in builtin::names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    let _ = io::stdout().flush();
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Anomaly) => ExitCode::from(3),
    }
}
