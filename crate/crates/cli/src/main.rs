mod args;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use qvi_geometry::io::{self, LoadError, RunKind, RunManifest};
use qvi_geometry::report::{analyze, AnalyzeConfig};
use qvi_geometry::trajectory::{
    run_qlearning_batch, run_qvi_batch, InitialState, QLearnConfig, SolveOptions, SolvedMdp,
};
use qvi_geometry::{toy, Error, Execution, QVector, ValidatedMdp};

use args::{Cli, Command, Common, Start};

/// A failure with its exit status: 1 for input problems, 2 for numerics.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Self::input(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::input(format!("write failed: {e}"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::MaxIterExceeded { .. }
            | Error::EigenNoConvergence { .. }
            | Error::DeltaOutsideHull { .. }
            | Error::EtaNotCertified { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn prepare(common: &Common) -> Result<SolvedMdp, Failure> {
    let mdp = io::load_mdp(&common.mdp, common.renormalize)?;
    let opts = SolveOptions {
        tol: common.tol,
        max_iter: common.max_iter,
        tube_fraction: common.delta_frac,
        basis: None,
    };
    if !(common.delta_frac > 0.0 && common.delta_frac < 0.5) {
        return Err(Failure::input(format!(
            "--delta-frac {} outside (0, 0.5)",
            common.delta_frac
        )));
    }
    Ok(SolvedMdp::new(mdp, opts)?)
}

fn reference_q0(mdp: &ValidatedMdp) -> Result<QVector, Failure> {
    if toy::is_toy(mdp) {
        Ok(toy::reference_q0())
    } else {
        Err(Failure::input(format!(
            "--paper-q0 is only defined for {}",
            toy::NAME
        )))
    }
}

fn initials(
    problem: &SolvedMdp,
    start: &Start,
    fallback: Option<args::Circle>,
) -> Result<Vec<QVector>, Failure> {
    let mdp = &problem.mdp;
    if let Some(path) = &start.q0 {
        return Ok(vec![io::load_q0(
            path,
            mdp.num_states(),
            mdp.num_actions(),
        )?]);
    }
    if start.reference_q0 {
        return Ok(vec![reference_q0(mdp)?]);
    }
    let circle = start
        .circle
        .or(fallback)
        .ok_or_else(|| Failure::input("choose a start: --q0 FILE, --paper-q0 or --circle R:M"))?;
    Ok(problem
        .basis
        .circle_initials(problem.q_star(), circle.radius, circle.count)?)
}

fn circle_of(start: &Start, fallback: Option<args::Circle>) -> Option<io::Circle> {
    if start.q0.is_some() || start.reference_q0 {
        return None;
    }
    start.circle.or(fallback).map(|c| io::Circle {
        radius: c.radius,
        count: c.count,
    })
}

fn validate(path: &Path, renormalize: bool) -> Outcome {
    let mdp = io::load_mdp(path, renormalize)?;
    println!(
        "valid: {} ({} states, {} actions, gamma {})",
        mdp.name(),
        mdp.num_states(),
        mdp.num_actions(),
        mdp.gamma()
    );
    Ok(())
}

fn example(name: &str, out: &Path) -> Outcome {
    let spec = io::builtin_example(name).ok_or_else(|| {
        Failure::input(format!(
            "unknown example {name:?}; available: {}",
            io::BUILTIN_EXAMPLES.join(", ")
        ))
    })?;
    io::save_mdp(&spec, out)?;
    println!("wrote {name} to {}", out.display());
    Ok(())
}

fn analyze_cmd(a: &args::AnalyzeArgs) -> Outcome {
    let problem = prepare(&a.common)?;
    let mdp = &problem.mdp;
    let (q0, source) = match &a.q0 {
        Some(path) => (
            io::load_q0(path, mdp.num_states(), mdp.num_actions())?,
            format!("file:{}", path.display()),
        ),
        None if toy::is_toy(mdp) => (toy::reference_q0(), "reference".to_string()),
        None => (
            QVector::zeros(mdp.num_states(), mdp.num_actions()),
            "zeros".to_string(),
        ),
    };
    let config = AnalyzeConfig {
        mdp_path: Some(a.common.mdp.display().to_string()),
        delta_frac: a.common.delta_frac,
        depth: a.depth,
        cap: a.cap,
        solver_tol: a.common.tol,
        sample_seed: a.seed,
        q0_source: source,
        ..Default::default()
    };
    if a.depth == 0 {
        return Err(Failure::input("--depth must be at least 1"));
    }
    let report = analyze(&problem, &q0, &config, execution(a.common.sequential))?;
    let text = serde_json::to_string_pretty(&report).map_err(Failure::input)? + "\n";
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match &a.report {
        Some(path) => {
            std::fs::write(path, text)?;
            let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            println!("report written to {}", path.display());
            println!(
                "delta_bar {}  delta {}",
                fmt(report.optimality.delta_bar),
                fmt(report.tube.map(|t| t.delta))
            );
            println!(
                "|lambda2| {}  gamma|lambda2| {}",
                fmt(report.spectral.lambda2),
                fmt(report.spectral.gamma_lambda2)
            );
            for c in [&report.certificates.full, &report.certificates.optimal]
                .into_iter()
                .flatten()
            {
                println!(
                    "{} family ({} policies): restricted JSR in [{:.4}, {:.4}], {}",
                    c.family, c.num_policies, c.lower_bound, c.upper_bound, c.strict
                );
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn trajectory_cmd(a: &args::TrajectoryArgs) -> Outcome {
    let problem = prepare(&a.common)?;
    let init = initials(&problem, &a.start, None)?;
    let runs = run_qvi_batch(&problem, &init, a.iters, execution(a.common.sequential))?;
    let mut manifest = RunManifest::new(&problem, RunKind::Qvi);
    manifest.circle = circle_of(&a.start, None);
    manifest.iters = Some(a.iters);
    let records: Vec<_> = runs.into_iter().map(|r| r.records).collect();
    let manifest = io::write_run(&a.csv, "qvi", manifest, &records)?;
    report_run(&a.csv, &manifest);
    Ok(())
}

fn qlearn_cmd(a: &args::QlearnArgs) -> Outcome {
    let problem = prepare(&a.common)?;
    let default_circle = Some(args::Circle {
        radius: 2.0,
        count: 12,
    });
    let init = initials(&problem, &a.start, default_circle)?;
    let initial_state = match a.initial_state {
        None => InitialState::Uniform,
        Some(0) => return Err(Failure::input("--initial-state is 1-based")),
        Some(s) => InitialState::Fixed(s - 1),
    };
    let config = QLearnConfig {
        seed: a.seed,
        steps: a.steps,
        alpha0: a.alpha0,
        decay: a.decay,
        record_stride: a.stride,
        initial_state,
        reward_noise_std: a.reward_noise,
    };
    config.validate()?;
    let runs = run_qlearning_batch(&problem, &init, &config, execution(a.common.sequential))?;
    let mut manifest = RunManifest::new(&problem, RunKind::Qlearn);
    manifest.circle = circle_of(&a.start, default_circle);
    manifest.qlearn = Some(config);
    let manifest = io::write_run(&a.csv, "qlearn", manifest, &runs)?;
    report_run(&a.csv, &manifest);
    Ok(())
}

fn report_run(dir: &Path, manifest: &RunManifest) {
    println!(
        "wrote {} trajectories and {} to {}",
        manifest.trajectories.len(),
        io::MANIFEST_FILE,
        dir.display()
    );
    for t in &manifest.trajectories {
        let show = |x: Option<u64>| x.map_or("-".to_string(), |k| k.to_string());
        println!(
            "  {}: {} rows, tube entrance {}, POSS entrance {}",
            t.csv,
            t.rows,
            show(t.tube_entrance),
            show(t.poss_entrance)
        );
    }
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Validate { mdp, renormalize } => validate(mdp, *renormalize),
        Command::Example { name, out } => example(name, out),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Trajectory(a) => trajectory_cmd(a),
        Command::Qlearn(a) => qlearn_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
