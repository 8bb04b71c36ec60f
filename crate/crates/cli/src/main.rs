use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use banditfh::eval::{self, write_csv};
use banditfh::sim::simulate_with;
use banditfh::{
    action_of, beta_params_from_moments, dp, exec, load_table, moments_from_beta, optimal_action, table_sweep,
    ActionProb, ActionTable, DesignSpec, Error, Exec, PhysicalState, PriorSpec, Scenario, SimConfig,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "banditfh",
    version,
    about = "Finite-horizon two-armed Bernoulli bandit designs: solve, evaluate, compare"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run single-threaded code paths.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Bayes-optimal design and write its action table.
    Solve(SolveArgs),
    /// Evaluate designs exactly and print CSV.
    Eval(EvalArgs),
    /// Evaluate the standard design roster over a horizon grid.
    Table(TableArgs),
    /// Convert between Beta parameters and moments.
    Prior(PriorArgs),
    /// Next allocation of a design at a given state.
    Recommend(RecommendArgs),
    /// Monte Carlo replay of a design.
    Simulate(SimulateArgs),
    /// Verify an action-table file and print its header.
    Info(InfoArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// True success probabilities `theta_C,theta_D` (frequentist mode).
    #[arg(long, value_parser = parse_pair, conflicts_with = "bayes")]
    theta: Option<(f64, f64)>,
    /// Average over the prior instead of fixing the arms.
    #[arg(long)]
    bayes: bool,
    /// Prior pseudo-counts `sC,fC,sD,fD`.
    #[arg(long, default_value = "1,1,1,1", value_parser = parse_prior)]
    prior: PriorSpec,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<Scenario, Error> {
        match (self.theta, self.bayes) {
            (Some((c, d)), false) => Scenario::frequentist(c, d, self.prior),
            (None, true) => Ok(Scenario::bayesian(self.prior)),
            _ => Err(Error::Config("give either --theta C,D or --bayes".into())),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_parser = parse_horizon)]
    horizon: u32,
    #[arg(long, default_value = "1,1,1,1", value_parser = parse_prior)]
    prior: PriorSpec,
    /// Output BFH1 file. Without it only the Bayes number is computed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Design names, comma separated or repeated.
    #[arg(long = "design", alias = "designs", required = true, value_delimiter = ',')]
    designs: Vec<String>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// A horizon, a comma list, or a `start:step:stop` range.
    #[arg(long = "horizon", alias = "horizons", value_parser = parse_horizons)]
    horizons: Horizons,
    /// Precomputed DP action table (must match prior and horizon).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    /// Design names, or `all`. Defaults to the standard roster.
    #[arg(long, value_delimiter = ',')]
    designs: Option<Vec<String>>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long = "horizons", alias = "horizon", default_value = "60:60:1200", value_parser = parse_horizons)]
    horizons: Horizons,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PriorArgs {
    #[arg(long, requires = "var", conflicts_with_all = ["alpha", "beta"])]
    mean: Option<f64>,
    #[arg(long, requires = "mean")]
    var: Option<f64>,
    #[arg(long, requires = "beta")]
    alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    beta: Option<f64>,
}

#[derive(Args)]
struct RecommendArgs {
    /// Observed counts `sC,fC,sD,fD`.
    #[arg(long, value_parser = parse_state)]
    state: PhysicalState,
    #[arg(long, value_parser = parse_horizon)]
    horizon: u32,
    #[arg(long, default_value = "dp")]
    design: String,
    #[arg(long, default_value = "1,1,1,1", value_parser = parse_prior)]
    prior: PriorSpec,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    design: String,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_parser = parse_horizon)]
    horizon: u32,
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InfoArgs {
    table: PathBuf,
}

#[derive(Clone, Debug)]
struct Horizons(Vec<u32>);

fn parse_horizon(s: &str) -> Result<u32, String> {
    let t: u32 = s.trim().parse().map_err(|_| format!("invalid horizon {s:?}"))?;
    if t == 0 {
        return Err("horizon must be at least 1".into());
    }
    Ok(t)
}

fn parse_horizons(s: &str) -> Result<Horizons, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let list = match parts[..] {
        [start, step, stop] => {
            let (start, stop) = (parse_horizon(start)?, parse_horizon(stop)?);
            let step: u32 = step.trim().parse().map_err(|_| format!("invalid step {step:?}"))?;
            if step == 0 {
                return Err("range step must be positive".into());
            }
            (start..=stop).step_by(step as usize).collect()
        }
        [_] => s.split(',').map(parse_horizon).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("expected T, T1,T2,... or start:step:stop, got {s:?}")),
    };
    if list.is_empty() {
        return Err(format!("horizon range {s:?} is empty"));
    }
    Ok(Horizons(list))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("invalid pair {s:?}"))?;
    match v[..] {
        [a, b] => Ok((a, b)),
        _ => Err(format!("expected two comma-separated numbers, got {s:?}")),
    }
}

fn parse_prior(s: &str) -> Result<PriorSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_state(s: &str) -> Result<PhysicalState, String> {
    let v: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("invalid state {s:?}"))?;
    match v[..] {
        [s_c, f_c, s_d, f_d] => Ok(PhysicalState { s_c, f_c, s_d, f_d }),
        _ => Err(format!("state needs four counts sC,fC,sD,fD, got {s:?}")),
    }
}

fn parse_designs(names: &[String]) -> Result<Vec<DesignSpec>, Error> {
    if names.len() == 1 && names[0].trim().eq_ignore_ascii_case("all") {
        let mut all = DesignSpec::standard_roster();
        all.push(DesignSpec::Flff);
        return Ok(all);
    }
    names.iter().map(|n| n.parse()).collect()
}

enum Failure {
    Core(Error),
    Io(PathBuf, io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(..) => 4,
            Failure::Core(e) => match e.root() {
                Error::MemoryCap { .. } | Error::TableMismatch(_) => 3,
                Error::Io(_) | Error::Format(_) => 4,
                Error::Numerical(_) => 1,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::Io(p.into(), e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(path: &Path) -> Result<ActionTable, Failure> {
    load_table(path).map_err(|e| Failure::Core(e.context(format!("loading {}", path.display()))))
}

fn cmd_solve(a: &SolveArgs, exec: Exec) -> Outcome {
    let start = Instant::now();
    let out = match &a.out {
        Some(path) => dp::solve_to_file(&a.prior, a.horizon, path, exec)?,
        None => dp::solve_with(&a.prior, a.horizon, dp::SolveOptions { keep_actions: false, exec })?,
    };
    println!(
        "T={} bayes_number={} peak_memory_bytes={} wall_time_s={:.3}",
        out.horizon,
        eval::fmt_g17(out.bayes_number),
        out.estimated_bytes,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs, exec: Exec) -> Outcome {
    let designs = parse_designs(&a.designs)?;
    let scenario = a.scenario.scenario()?;
    let table = a.table.as_deref().map(load).transpose()?;
    let mut w = open_out(a.out.as_deref())?;
    let io_err = |e: io::Error| Failure::Io(a.out.clone().unwrap_or_else(|| "<stdout>".into()), e);
    writeln!(w, "{}", eval::CSV_HEADER).map_err(io_err)?;
    for design in &designs {
        for &t in &a.horizons.0 {
            let tab = if design.needs_table() { table.as_ref() } else { None };
            let r = eval::forward_eval_with(design, &scenario, t, tab, exec)
                .map_err(|e| e.context(format!("evaluating {design} at T={t}")))?;
            writeln!(w, "{}", eval::csv_row(design, &scenario, &r)).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn cmd_table(a: &TableArgs, exec: Exec) -> Outcome {
    let designs = match &a.designs {
        Some(names) => parse_designs(names)?,
        None => DesignSpec::standard_roster(),
    };
    let scenario = a.scenario.scenario()?;
    let rows = table_sweep(&designs, &[scenario], &a.horizons.0, exec)?;
    let w = open_out(a.out.as_deref())?;
    write_csv(&rows, w).map_err(|e| match e {
        Error::Io(io) => Failure::Io(a.out.clone().unwrap_or_else(|| "<stdout>".into()), io),
        other => Failure::Core(other),
    })
}

fn cmd_prior(a: &PriorArgs) -> Outcome {
    match (a.mean, a.var, a.alpha, a.beta) {
        (Some(m), Some(v), None, None) => {
            let (s, f) = beta_params_from_moments(m, v)?;
            println!("alpha={} beta={}", eval::fmt_g17(s), eval::fmt_g17(f));
        }
        (None, None, Some(s), Some(f)) => {
            let (m, v) = moments_from_beta(s, f)?;
            println!("mean={} var={}", eval::fmt_g17(m), eval::fmt_g17(v));
        }
        _ => return Err(Error::Config("give either --mean/--var or --alpha/--beta".into()).into()),
    }
    Ok(())
}

fn describe(act: ActionProb) -> String {
    if act == ActionProb::PURE_C {
        "C".into()
    } else if act == ActionProb::PURE_D {
        "D".into()
    } else {
        format!("MIXED ({},{})", act.p_c, act.p_d)
    }
}

fn cmd_recommend(a: &RecommendArgs, exec: Exec) -> Outcome {
    let design: DesignSpec = a.design.parse()?;
    let t = a.state.epoch();
    if t >= a.horizon {
        return Err(Error::Domain(format!("state {} is at epoch {t}, horizon is {}", a.state, a.horizon)).into());
    }
    let act = if design == DesignSpec::Dp {
        optimal_action(&a.prior, &a.state, t, a.horizon)?
    } else {
        let table = if design.needs_table() {
            dp::solve_with(&a.prior, a.horizon, dp::SolveOptions { keep_actions: true, exec })?.table
        } else {
            None
        };
        action_of(&design, &a.prior, &a.state, t, a.horizon, table.as_ref())?
    };
    println!("{}", describe(act));
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, exec: Exec) -> Outcome {
    let cfg = SimConfig {
        runs: a.runs,
        seed: a.seed,
        scenario: a.scenario.scenario()?,
        design: a.design.parse()?,
        horizon: a.horizon,
    };
    let r = simulate_with(&cfg, None, exec)?;
    println!(
        "design={} T={} runs={} seed={} rng={} mean_successes={} sd_successes={} standard_error={} mean_regret={}",
        cfg.design,
        cfg.horizon,
        r.runs,
        cfg.seed,
        r.algorithm,
        eval::fmt_g17(r.mean_successes),
        eval::fmt_g17(r.sd_successes),
        eval::fmt_g17(r.standard_error),
        eval::fmt_g17(r.mean_regret),
    );
    Ok(())
}

fn cmd_info(a: &InfoArgs) -> Outcome {
    let table = load(&a.table)?;
    println!(
        "T={} prior={} bayes_number={} payload_bytes={}",
        table.horizon(),
        table.prior(),
        eval::fmt_g17(table.bayes_number()),
        table.payload().len()
    );
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        exec::set_threads(n)?;
    }
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, exec),
        Command::Eval(a) => cmd_eval(a, exec),
        Command::Table(a) => cmd_table(a, exec),
        Command::Prior(a) => cmd_prior(a),
        Command::Recommend(a) => cmd_recommend(a, exec),
        Command::Simulate(a) => cmd_simulate(a, exec),
        Command::Info(a) => cmd_info(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
