//! Exact evaluation of designs.
//!
//! The forward sweep pushes the state distribution from the origin to the
//! terminal layer and reads every moment off it. Two backward recursions
//! (per-step reward and terminal reward) give independent checks of the
//! mean.

use std::io::Write;
use std::path::Path;

use crate::beta::{expected_max_prior, predictive, PriorSpec};
use crate::design::{ActionProb, DesignSpec, Policy};
use crate::dp::{self, table_payload_len, ActionTable, SolveOptions};
use crate::error::{Error, Result};
use crate::exec::{check_memory, Exec};
use crate::lattice::{layer_states, tetra_len, LayerIndexer, PhysicalState};
use crate::sweep::{tri_len, Sweep};
use crate::table_io::TableLayerReader;

/// Largest action table kept in memory during evaluation; bigger tables are
/// streamed through a temporary file.
pub const IN_MEMORY_TABLE_LIMIT: u64 = 1 << 30;

/// Tolerated drift of the total probability mass of any layer.
pub const MASS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Fixed, known success probabilities.
    Frequentist { theta_c: f64, theta_d: f64 },
    /// Success probabilities drawn from the prior.
    Bayesian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    /// Drives design decisions in both modes and transitions in bayesian mode.
    pub prior: PriorSpec,
}

impl Scenario {
    pub fn frequentist(theta_c: f64, theta_d: f64, prior: PriorSpec) -> Result<Self> {
        for th in [theta_c, theta_d] {
            if !(th.is_finite() && (0.0..=1.0).contains(&th)) {
                return Err(Error::domain(format!("success probability {th} outside [0, 1]")));
            }
        }
        Ok(Self { mode: Mode::Frequentist { theta_c, theta_d }, prior })
    }

    pub fn bayesian(prior: PriorSpec) -> Self {
        Self { mode: Mode::Bayesian, prior }
    }

    pub fn mode_label(&self) -> &'static str {
        match self.mode {
            Mode::Frequentist { .. } => "freq",
            Mode::Bayesian => "bayes",
        }
    }

    pub fn theta(&self) -> Option<(f64, f64)> {
        match self.mode {
            Mode::Frequentist { theta_c, theta_d } => Some((theta_c, theta_d)),
            Mode::Bayesian => None,
        }
    }

    /// The scenario with the arms exchanged.
    pub fn mirror(&self) -> Self {
        let mode = match self.mode {
            Mode::Frequentist { theta_c, theta_d } => Mode::Frequentist { theta_c: theta_d, theta_d: theta_c },
            Mode::Bayesian => Mode::Bayesian,
        };
        Self { mode, prior: self.prior.mirror() }
    }

    #[inline]
    fn q_c(&self, s: u32, f: u32) -> f64 {
        match self.mode {
            Mode::Frequentist { theta_c, .. } => theta_c,
            Mode::Bayesian => predictive(self.prior.s_c, self.prior.f_c, s, f),
        }
    }

    #[inline]
    fn q_d(&self, s: u32, f: u32) -> f64 {
        match self.mode {
            Mode::Frequentist { theta_d, .. } => theta_d,
            Mode::Bayesian => predictive(self.prior.s_d, self.prior.f_d, s, f),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.mode {
            Mode::Frequentist { theta_c, theta_d } => write!(f, "freq({theta_c},{theta_d}) prior {}", self.prior),
            Mode::Bayesian => write!(f, "bayes prior {}", self.prior),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub horizon: u32,
    pub mean_successes: f64,
    pub sd_successes: f64,
    pub mean_proportion: f64,
    pub sd_proportion: f64,
    pub mean_regret: f64,
    pub sd_regret: f64,
    /// `T·max θ` (frequentist) or `T·E[max θ]` (bayesian).
    pub benchmark: f64,
}

impl EvalResult {
    pub fn new(mean: f64, sd: f64, scenario: &Scenario, horizon: u32) -> Result<Self> {
        let (mean_regret, benchmark) = regret_of(mean, scenario, horizon)?;
        let h = horizon as f64;
        Ok(Self {
            horizon,
            mean_successes: mean,
            sd_successes: sd,
            mean_proportion: mean / h,
            sd_proportion: sd / h,
            mean_regret,
            sd_regret: sd,
            benchmark,
        })
    }
}

/// Regret benchmark for a horizon-`T` trial.
pub fn benchmark(scenario: &Scenario, horizon: u32) -> Result<f64> {
    let h = horizon as f64;
    Ok(match scenario.mode {
        Mode::Frequentist { theta_c, theta_d } => h * theta_c.max(theta_d),
        Mode::Bayesian => h * expected_max_prior(&scenario.prior)?,
    })
}

/// `(benchmark − mean, benchmark)`.
pub fn regret_of(mean_successes: f64, scenario: &Scenario, horizon: u32) -> Result<(f64, f64)> {
    let b = benchmark(scenario, horizon)?;
    Ok((b - mean_successes, b))
}

/// Exact distribution over the terminal layer, indexed by layer rank.
#[derive(Debug, Clone)]
pub struct TerminalDistribution {
    pub horizon: u32,
    pub probs: Vec<f64>,
    indexer: LayerIndexer,
}

impl TerminalDistribution {
    pub fn prob(&self, x: &PhysicalState) -> f64 {
        match self.indexer.rank(x) {
            Ok(r) if x.epoch() == self.horizon => self.probs[r as usize],
            _ => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PhysicalState, f64)> + '_ {
        layer_states(self.horizon).zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(x, p)| p * x.successes() as f64).sum()
    }
}

/// Where design actions come from during a sweep.
trait ActionSource: Sync {
    fn prepare(&mut self, _t: u32) -> Result<()> {
        Ok(())
    }

    fn decide(&self, x: &PhysicalState, t: u32) -> ActionProb;
}

impl ActionSource for Policy<'_> {
    #[inline]
    fn decide(&self, x: &PhysicalState, t: u32) -> ActionProb {
        Policy::decide(self, x, t)
    }
}

/// DP actions read layer by layer from a table file.
struct StreamedTable {
    reader: TableLayerReader,
    layer: Vec<u8>,
    indexer: LayerIndexer,
}

impl ActionSource for StreamedTable {
    fn prepare(&mut self, t: u32) -> Result<()> {
        self.reader.read_layer(t, &mut self.layer)
    }

    #[inline]
    fn decide(&self, x: &PhysicalState, t: u32) -> ActionProb {
        let r = self.indexer.rank_in(t, x.s_c, x.f_c, x.s_d) as usize;
        ActionProb::from_code((self.layer[r >> 2] >> ((r & 3) * 2)) & 3).unwrap_or(ActionProb::MIXED)
    }
}

fn check_inputs(scenario: &Scenario, horizon: u32) -> Result<()> {
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    scenario.prior.require_predictive()
}

fn forward_memory(horizon: u32) -> u64 {
    8 * tetra_len(horizon) + 64 * tri_len(horizon as usize + 1) as u64
}

/// Runs the forward sweep and hands the terminal store to `finish`.
fn forward_core<A: ActionSource, R>(
    src: &mut A,
    scenario: &Scenario,
    horizon: u32,
    exec: Exec,
    finish: impl FnOnce(&Sweep, &[f64]) -> R,
) -> Result<R> {
    check_inputs(scenario, horizon)?;
    check_memory(forward_memory(horizon))?;
    let sweep = Sweep::new(horizon, exec);
    let mut store = vec![0.0f64; sweep.store_len()];
    store[0] = 1.0;
    let mut scratch = sweep.forward_scratch();
    for t in 0..horizon {
        src.prepare(t)?;
        let src: &A = src;
        let kernel = |t: u32, a: u32, b: u32| {
            let qc = scenario.q_c(a, b);
            let rest = t - a - b;
            move |c: u32, mass: f64| {
                let d = rest - c;
                let act = src.decide(&PhysicalState::new(a, b, c, d), t);
                let qd = scenario.q_d(c, d);
                let mc = mass * act.p_c;
                let md = mass * act.p_d;
                [mc * qc, mc * (1.0 - qc), md * qd, md * (1.0 - qd)]
            }
        };
        let mass = sweep.forward_layer(&mut store, t, &mut scratch, &kernel);
        let drift = (mass - 1.0).abs();
        if drift.is_nan() || drift > MASS_TOLERANCE {
            return Err(Error::Numerical(format!(
                "probability mass {mass} at layer {} drifted beyond {MASS_TOLERANCE}",
                t + 1
            )));
        }
    }
    Ok(finish(&sweep, &store))
}

fn summarize(sweep: &Sweep, store: &[f64], horizon: u32) -> (f64, f64) {
    let [mean] = sweep.reduce_layer(store, horizon, |a, _, c, p| [*p * (a + c) as f64]);
    let [var] = sweep.reduce_layer(store, horizon, |a, _, c, p| {
        let dev = (a + c) as f64 - mean;
        [*p * dev * dev]
    });
    (mean, var.max(0.0).sqrt())
}

fn terminal(sweep: &Sweep, store: &[f64], horizon: u32) -> Result<TerminalDistribution> {
    let probs = layer_states(horizon).map(|x| sweep.get(store, x.s_c, x.f_c, x.s_d)).collect();
    Ok(TerminalDistribution { horizon, probs, indexer: LayerIndexer::new(horizon)? })
}

/// Exact forward evaluation. `table` supplies DP actions; pass `None` to
/// have DP designs solved on the fly.
pub fn forward_eval(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&ActionTable>,
) -> Result<EvalResult> {
    forward_eval_with(design, scenario, horizon, table, Exec::default())
}

pub fn forward_eval_with(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&ActionTable>,
    exec: Exec,
) -> Result<EvalResult> {
    let (mean, sd) = run_forward(design, scenario, horizon, table, exec, |sw, st| summarize(sw, st, horizon))?;
    EvalResult::new(mean, sd, scenario, horizon)
}

/// Full terminal distribution of the forward sweep.
pub fn terminal_distribution(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&ActionTable>,
) -> Result<TerminalDistribution> {
    run_forward(design, scenario, horizon, table, Exec::default(), |sw, st| terminal(sw, st, horizon))?
}

fn run_forward<R>(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&ActionTable>,
    exec: Exec,
    finish: impl FnOnce(&Sweep, &[f64]) -> R,
) -> Result<R> {
    match resolve(design, scenario, horizon, table, exec)? {
        Resolved::Borrowed(t) => {
            let mut p = Policy::new(design, &scenario.prior, horizon, t)?;
            forward_core(&mut p, scenario, horizon, exec, finish)
        }
        Resolved::Owned(t) => {
            let mut p = Policy::new(design, &scenario.prior, horizon, Some(&t))?;
            forward_core(&mut p, scenario, horizon, exec, finish)
        }
        Resolved::Streamed(file) => {
            let mut s = open_streamed(file.path())?;
            forward_core(&mut s, scenario, horizon, exec, finish)
        }
    }
}

enum Resolved<'a> {
    Borrowed(Option<&'a ActionTable>),
    Owned(ActionTable),
    Streamed(tempfile::NamedTempFile),
}

fn resolve<'a>(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&'a ActionTable>,
    exec: Exec,
) -> Result<Resolved<'a>> {
    if table.is_some() || !design.needs_table() {
        return Ok(Resolved::Borrowed(table));
    }
    scenario.prior.require_predictive()?;
    if table_payload_len(horizon) <= IN_MEMORY_TABLE_LIMIT {
        let out = dp::solve_with(&scenario.prior, horizon, SolveOptions { keep_actions: true, exec })?;
        return Ok(Resolved::Owned(out.table.expect("table requested")));
    }
    if *design != DesignSpec::Dp {
        return Err(Error::config(format!(
            "{} at T={horizon} needs an in-memory action table larger than {IN_MEMORY_TABLE_LIMIT} bytes",
            design.name()
        )));
    }
    let file = tempfile::Builder::new().prefix("banditfh-").suffix(".bfh").tempfile()?;
    dp::solve_to_file(&scenario.prior, horizon, file.path(), exec)?;
    Ok(Resolved::Streamed(file))
}

fn open_streamed(path: &Path) -> Result<StreamedTable> {
    let reader = TableLayerReader::open(path)?;
    let indexer = LayerIndexer::new(reader.header.horizon)?;
    Ok(StreamedTable { reader, layer: Vec::new(), indexer })
}

/// Which backward recursion to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RewardForm {
    /// `F_T = 0`, one unit per observed success along the way.
    PerStep,
    /// `G_T = s_C + s_D`, no intermediate reward.
    Terminal,
}

fn backward_core<A: ActionSource>(
    src: &mut A,
    scenario: &Scenario,
    horizon: u32,
    exec: Exec,
    form: RewardForm,
) -> Result<f64> {
    check_inputs(scenario, horizon)?;
    check_memory(dp::solve_memory_estimate(horizon, 0))?;
    let sweep = Sweep::new(horizon, exec);
    let mut store = vec![0.0f64; sweep.store_len()];
    if form == RewardForm::Terminal {
        sweep.fill_layer(&mut store, horizon, |a, _, c| (a + c) as f64);
    }
    let unit = if form == RewardForm::PerStep { 1.0 } else { 0.0 };
    let mut scratch = sweep.backward_scratch::<f64>();
    for t in (0..horizon).rev() {
        src.prepare(t)?;
        let src: &A = src;
        let kernel = |t: u32, a: u32, b: u32| {
            let qc = scenario.q_c(a, b);
            let rest = t - a - b;
            move |c: u32, s: [f64; 4]| {
                let d = rest - c;
                let act = src.decide(&PhysicalState::new(a, b, c, d), t);
                let qd = scenario.q_d(c, d);
                let vc = qc * (unit + s[0]) + (1.0 - qc) * s[1];
                let vd = qd * (unit + s[2]) + (1.0 - qd) * s[3];
                (act.p_c * vc + act.p_d * vd, 0)
            }
        };
        sweep.backward_layer(&mut store, t, &mut scratch, None, &kernel);
    }
    Ok(store[0])
}

fn run_backward(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&ActionTable>,
    form: RewardForm,
) -> Result<f64> {
    let exec = Exec::default();
    match resolve(design, scenario, horizon, table, exec)? {
        Resolved::Borrowed(t) => {
            let mut p = Policy::new(design, &scenario.prior, horizon, t)?;
            backward_core(&mut p, scenario, horizon, exec, form)
        }
        Resolved::Owned(t) => {
            let mut p = Policy::new(design, &scenario.prior, horizon, Some(&t))?;
            backward_core(&mut p, scenario, horizon, exec, form)
        }
        Resolved::Streamed(file) => {
            let mut s = open_streamed(file.path())?;
            backward_core(&mut s, scenario, horizon, exec, form)
        }
    }
}

/// Mean number of successes by the per-step reward recursion.
pub fn backward_mean_classic(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&ActionTable>,
) -> Result<f64> {
    run_backward(design, scenario, horizon, table, RewardForm::PerStep)
}

/// Mean number of successes by the terminal reward recursion.
pub fn backward_mean_terminal(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&ActionTable>,
) -> Result<f64> {
    run_backward(design, scenario, horizon, table, RewardForm::Terminal)
}

/// Backward evaluation of an arbitrary state-dependent rule. Useful for
/// checking the recursions on designs outside the named zoo.
pub fn backward_mean_of<F>(rule: F, scenario: &Scenario, horizon: u32, terminal_reward: bool) -> Result<f64>
where
    F: Fn(&PhysicalState, u32) -> ActionProb + Sync,
{
    struct Rule<F>(F);
    impl<F: Fn(&PhysicalState, u32) -> ActionProb + Sync> ActionSource for Rule<F> {
        fn decide(&self, x: &PhysicalState, t: u32) -> ActionProb {
            (self.0)(x, t)
        }
    }
    let form = if terminal_reward { RewardForm::Terminal } else { RewardForm::PerStep };
    backward_core(&mut Rule(rule), scenario, horizon, Exec::default(), form)
}

/// Forward evaluation of an arbitrary state-dependent rule.
pub fn forward_eval_of<F>(rule: F, scenario: &Scenario, horizon: u32) -> Result<EvalResult>
where
    F: Fn(&PhysicalState, u32) -> ActionProb + Sync,
{
    struct Rule<F>(F);
    impl<F: Fn(&PhysicalState, u32) -> ActionProb + Sync> ActionSource for Rule<F> {
        fn decide(&self, x: &PhysicalState, t: u32) -> ActionProb {
            (self.0)(x, t)
        }
    }
    let (mean, sd) =
        forward_core(&mut Rule(rule), scenario, horizon, Exec::default(), |sw, st| summarize(sw, st, horizon))?;
    EvalResult::new(mean, sd, scenario, horizon)
}

/// One output row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub design: DesignSpec,
    pub scenario: Scenario,
    pub result: EvalResult,
}

/// Evaluates every `(scenario, design, T)` combination, rows ordered by
/// scenario, then design, then horizon. DP tables are solved once per
/// scenario and horizon and shared by every design that needs one.
pub fn table_sweep(
    designs: &[DesignSpec],
    scenarios: &[Scenario],
    horizons: &[u32],
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(designs.len() * scenarios.len() * horizons.len());
    for scenario in scenarios {
        let mut cells: Vec<Vec<Option<EvalResult>>> = vec![vec![None; horizons.len()]; designs.len()];
        for (j, &horizon) in horizons.iter().enumerate() {
            let shared =
                if designs.iter().any(|d| d.needs_table()) && table_payload_len(horizon) <= IN_MEMORY_TABLE_LIMIT {
                    let out = dp::solve_with(&scenario.prior, horizon, SolveOptions { keep_actions: true, exec })
                        .map_err(|e| e.context(format!("solving DP for {scenario}, T={horizon}")))?;
                    out.table
                } else {
                    None
                };
            for (i, design) in designs.iter().enumerate() {
                let table = if design.needs_table() { shared.as_ref() } else { None };
                let r = forward_eval_with(design, scenario, horizon, table, exec)
                    .map_err(|e| e.context(format!("evaluating {} for {scenario}, T={horizon}", design.name())))?;
                cells[i][j] = Some(r);
            }
        }
        for (i, design) in designs.iter().enumerate() {
            for cell in cells[i].iter_mut() {
                rows.push(SweepRow { design: design.clone(), scenario: *scenario, result: cell.take().unwrap() });
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "design,T,mode,theta_C,theta_D,prior,mean_successes,sd_successes,mean_proportion,sd_proportion,mean_regret,sd_regret";

/// `%.17g`-style formatting: 17 significant digits, trailing zeros trimmed.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn csv_row(design: &DesignSpec, scenario: &Scenario, r: &EvalResult) -> String {
    let (tc, td) = match scenario.theta() {
        Some((c, d)) => (fmt_g17(c), fmt_g17(d)),
        None => (String::new(), String::new()),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        design.name(),
        r.horizon,
        scenario.mode_label(),
        tc,
        td,
        scenario.prior,
        fmt_g17(r.mean_successes),
        fmt_g17(r.sd_successes),
        fmt_g17(r.mean_proportion),
        fmt_g17(r.sd_proportion),
        fmt_g17(r.mean_regret),
        fmt_g17(r.sd_regret),
    )
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", csv_row(&row.design, &row.scenario, &row.result))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const U: PriorSpec = PriorSpec::uniform();

    fn freq(c: f64, d: f64) -> Scenario {
        Scenario::frequentist(c, d, U).unwrap()
    }

    #[test]
    fn era_table_value() {
        let r = forward_eval(&DesignSpec::Era, &freq(0.7, 0.9), 60, None).unwrap();
        assert!((r.mean_regret - 6.0).abs() < 1e-10);
        assert!((r.sd_successes - (60.0f64 * 1.6 * 0.4 / 4.0).sqrt()).abs() < 1e-10);
        assert_eq!(r.sd_regret, r.sd_successes);
    }

    #[test]
    fn era_bayesian_uniform() {
        for horizon in [1, 7, 30] {
            let r = forward_eval(&DesignSpec::Era, &Scenario::bayesian(U), horizon, None).unwrap();
            let h = horizon as f64;
            assert!((r.mean_successes - h / 2.0).abs() < 1e-12);
            assert!((r.mean_regret - h / 6.0).abs() < 1e-8);
        }
    }

    #[test]
    fn backward_examples() {
        let m = backward_mean_classic(&DesignSpec::Era, &freq(0.5, 0.5), 10, None).unwrap();
        assert!((m - 5.0).abs() < 1e-12);
        let bayes = Scenario::bayesian(U);
        for f in [backward_mean_classic, backward_mean_terminal] {
            let m = f(&DesignSpec::Dp, &bayes, 2, None).unwrap();
            assert!((m - 13.0 / 12.0).abs() < 1e-15);
        }
        for spec in DesignSpec::standard_roster() {
            let m = backward_mean_terminal(&spec, &freq(0.35, 0.35), 1, None).unwrap();
            assert!((m - 0.35).abs() < 1e-15, "{spec}");
        }
    }

    #[test]
    fn regret_examples() {
        let (r, b) = regret_of(48.0, &freq(0.7, 0.9), 60).unwrap();
        assert!((r - 6.0).abs() < 1e-12);
        assert!((b - 54.0).abs() < 1e-12);
        let (r, _) = regret_of(54.0, &freq(0.7, 0.9), 60).unwrap();
        assert_eq!(r, 0.0);
        let (r, _) = regret_of(13.0 / 12.0, &Scenario::bayesian(U), 2).unwrap();
        assert!((r - 0.25).abs() < 1e-10);
    }

    #[test]
    fn forward_matches_backward_on_roster() {
        let scenarios = [freq(0.7, 0.9), freq(0.3, 0.1), Scenario::bayesian(U)];
        for s in &scenarios {
            for spec in DesignSpec::standard_roster() {
                let f = forward_eval(&spec, s, 25, None).unwrap().mean_successes;
                let b = backward_mean_classic(&spec, s, 25, None).unwrap();
                let g = backward_mean_terminal(&spec, s, 25, None).unwrap();
                assert!((f - b).abs() <= 1e-9 * 25.0, "{spec} {s}: {f} vs {b}");
                assert!((b - g).abs() <= 1e-8, "{spec} {s}: {b} vs {g}");
            }
        }
    }

    #[test]
    fn exec_modes_agree_bitwise() {
        let s = freq(0.6, 0.45);
        for spec in [DesignSpec::Bkg, DesignSpec::Ucb(0.18), DesignSpec::Dp] {
            let a = forward_eval_with(&spec, &s, 40, None, Exec::Sequential).unwrap();
            let b = forward_eval_with(&spec, &s, 40, None, Exec::Parallel).unwrap();
            assert_eq!(a.mean_successes.to_bits(), b.mean_successes.to_bits());
            assert_eq!(a.sd_successes.to_bits(), b.sd_successes.to_bits());
        }
    }

    #[test]
    fn haldane_is_rejected() {
        let h = PriorSpec::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let s = Scenario::frequentist(0.5, 0.5, h).unwrap();
        assert!(forward_eval(&DesignSpec::Era, &s, 5, None).is_err());
        assert!(Scenario::frequentist(1.2, 0.5, U).is_err());
    }

    #[test]
    fn table_mismatch_is_reported() {
        let table = dp::solve(&U, 5, true).unwrap().table.unwrap();
        let e = forward_eval(&DesignSpec::Dp, &freq(0.5, 0.6), 6, Some(&table)).unwrap_err();
        assert!(matches!(e.root(), Error::TableMismatch(_)));
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(fmt_g17(6.0), "6");
        assert_eq!(fmt_g17(1.85), "1.8500000000000001");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(123456.5), "123456.5");
        for x in [1.0 / 3.0, 2.0f64.sqrt() * 1e5, 4.2e-5, 7.5e20] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let rows = table_sweep(&[DesignSpec::Era], &[freq(0.7, 0.9), Scenario::bayesian(U)], &[4, 8], Exec::Sequential)
            .unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("era,4,freq,0.69999999999999996,0.90000000000000002,1;1;1;1,"));
        assert!(lines[3].starts_with("era,4,bayes,,,1;1;1;1,2,"));
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), 12);
        }
    }
}
