//! Verification oracles: Monte Carlo replay and exhaustive path enumeration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::beta::PriorSpec;
use crate::design::{action_of, ActionProb, DesignSpec, Policy};
use crate::dp::{self, ActionTable};
use crate::error::{Error, Result};
use crate::eval::{regret_of, Mode, Scenario};
use crate::exec::Exec;
use crate::lattice::PhysicalState;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Identifier of the generator behind [`simulate`].
pub const RNG_ALGORITHM: &str = "chacha8";

/// Largest horizon the enumerator accepts.
pub const MAX_ENUMERATION_HORIZON: u32 = 12;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub runs: u64,
    pub seed: u64,
    pub scenario: Scenario,
    pub design: DesignSpec,
    pub horizon: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub runs: u64,
    pub mean_successes: f64,
    pub sd_successes: f64,
    /// `sd / sqrt(runs)`.
    pub standard_error: f64,
    pub mean_regret: f64,
    pub algorithm: &'static str,
}

/// Replicate `i` uses stream `i` of a ChaCha8 generator keyed by the seed,
/// so results do not depend on how replicates are spread over workers.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    simulate_with(cfg, None, Exec::default())
}

pub fn simulate_with(cfg: &SimConfig, table: Option<&ActionTable>, exec: Exec) -> Result<SimResult> {
    if cfg.runs == 0 {
        return Err(Error::config("runs must be at least 1"));
    }
    if cfg.horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    let prior = cfg.scenario.prior;
    prior.require_predictive()?;
    let owned;
    let table = match table {
        Some(t) => Some(t),
        None if cfg.design.needs_table() => {
            owned = dp::solve_with(&prior, cfg.horizon, dp::SolveOptions { keep_actions: true, exec })?
                .table
                .expect("table requested");
            Some(&owned)
        }
        None => None,
    };
    let policy = Policy::new(&cfg.design, &prior, cfg.horizon, table)?;
    let draw = ThetaDraw::new(&cfg.scenario)?;
    let replicate = |i: u64| -> u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i);
        run_once(&policy, &draw, cfg.horizon, &mut rng)
    };
    let totals: Vec<u32> = if exec.is_parallel() {
        #[cfg(feature = "parallel")]
        {
            (0..cfg.runs).into_par_iter().map(replicate).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..cfg.runs).map(replicate).collect()
        }
    } else {
        (0..cfg.runs).map(replicate).collect()
    };
    let n = cfg.runs as f64;
    let mean = totals.iter().map(|&s| s as f64).sum::<f64>() / n;
    let ss: f64 = totals.iter().map(|&s| (s as f64 - mean).powi(2)).sum();
    let sd = if cfg.runs > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    let (mean_regret, _) = regret_of(mean, &cfg.scenario, cfg.horizon)?;
    Ok(SimResult {
        runs: cfg.runs,
        mean_successes: mean,
        sd_successes: sd,
        standard_error: sd / n.sqrt(),
        mean_regret,
        algorithm: RNG_ALGORITHM,
    })
}

enum ThetaDraw {
    Fixed(f64, f64),
    Prior(Marginal, Marginal),
}

enum Marginal {
    Point(f64),
    Beta(Beta<f64>),
}

impl Marginal {
    fn new(s: f64, f: f64) -> Result<Self> {
        Ok(match (s > 0.0, f > 0.0) {
            (true, true) => Marginal::Beta(Beta::new(s, f).map_err(|e| Error::domain(e.to_string()))?),
            (true, false) => Marginal::Point(1.0),
            (false, true) => Marginal::Point(0.0),
            (false, false) => return Err(Error::UndefinedPredictive { arm: '?' }),
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Marginal::Point(p) => *p,
            Marginal::Beta(b) => b.sample(rng),
        }
    }
}

impl ThetaDraw {
    fn new(scenario: &Scenario) -> Result<Self> {
        Ok(match scenario.mode {
            Mode::Frequentist { theta_c, theta_d } => ThetaDraw::Fixed(theta_c, theta_d),
            Mode::Bayesian => {
                let p: PriorSpec = scenario.prior;
                ThetaDraw::Prior(Marginal::new(p.s_c, p.f_c)?, Marginal::new(p.s_d, p.f_d)?)
            }
        })
    }
}

fn run_once(policy: &Policy<'_>, draw: &ThetaDraw, horizon: u32, rng: &mut ChaCha8Rng) -> u32 {
    let (theta_c, theta_d) = match draw {
        ThetaDraw::Fixed(c, d) => (*c, *d),
        ThetaDraw::Prior(c, d) => (c.sample(rng), d.sample(rng)),
    };
    let mut x = PhysicalState::ORIGIN;
    for t in 0..horizon {
        let act = policy.decide(&x, t);
        let to_c = if act.p_d == 0.0 {
            true
        } else if act.p_c == 0.0 {
            false
        } else {
            rng.random::<f64>() < act.p_c
        };
        if to_c {
            if rng.random::<f64>() < theta_c {
                x.s_c += 1;
            } else {
                x.f_c += 1;
            }
        } else if rng.random::<f64>() < theta_d {
            x.s_d += 1;
        } else {
            x.f_d += 1;
        }
    }
    x.successes()
}

/// Exact terminal distribution by expanding every action and outcome branch.
///
/// Posterior probabilities are recomputed from the raw counts on each path
/// and nothing is shared with the lattice sweeps.
pub fn enumerate_paths(
    design: &DesignSpec,
    scenario: &Scenario,
    horizon: u32,
    table: Option<&ActionTable>,
) -> Result<BTreeMap<PhysicalState, f64>> {
    if horizon > MAX_ENUMERATION_HORIZON {
        return Err(Error::config(format!(
            "path enumeration is limited to T <= {MAX_ENUMERATION_HORIZON}, got {horizon}"
        )));
    }
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    scenario.prior.require_predictive()?;
    let owned;
    let table = match table {
        Some(t) => Some(t),
        None if design.needs_table() => {
            owned = dp::solve(&scenario.prior, horizon, true)?.table.expect("table requested");
            Some(&owned)
        }
        None => None,
    };
    let mut out = BTreeMap::new();
    let ctx = Enum { design, scenario, horizon, table };
    ctx.expand(PhysicalState::ORIGIN, 1.0, &mut out)?;
    Ok(out)
}

struct Enum<'a> {
    design: &'a DesignSpec,
    scenario: &'a Scenario,
    horizon: u32,
    table: Option<&'a ActionTable>,
}

impl Enum<'_> {
    fn success_prob(&self, x: &PhysicalState, to_c: bool) -> f64 {
        let p = &self.scenario.prior;
        match (self.scenario.mode, to_c) {
            (Mode::Frequentist { theta_c, .. }, true) => theta_c,
            (Mode::Frequentist { theta_d, .. }, false) => theta_d,
            (Mode::Bayesian, true) => {
                let a = p.s_c + x.s_c as f64;
                a / (a + p.f_c + x.f_c as f64)
            }
            (Mode::Bayesian, false) => {
                let a = p.s_d + x.s_d as f64;
                a / (a + p.f_d + x.f_d as f64)
            }
        }
    }

    fn expand(&self, x: PhysicalState, prob: f64, out: &mut BTreeMap<PhysicalState, f64>) -> Result<()> {
        let t = x.s_c + x.f_c + x.s_d + x.f_d;
        if t == self.horizon {
            *out.entry(x).or_insert(0.0) += prob;
            return Ok(());
        }
        let act: ActionProb = action_of(self.design, &self.scenario.prior, &x, t, self.horizon, self.table)?;
        for (to_c, w) in [(true, act.p_c), (false, act.p_d)] {
            if w == 0.0 {
                continue;
            }
            let q = self.success_prob(&x, to_c);
            let (mut win, mut lose) = (x, x);
            if to_c {
                win.s_c += 1;
                lose.f_c += 1;
            } else {
                win.s_d += 1;
                lose.f_d += 1;
            }
            if q > 0.0 {
                self.expand(win, prob * w * q, out)?;
            }
            if q < 1.0 {
                self.expand(lose, prob * w * (1.0 - q), out)?;
            }
        }
        Ok(())
    }
}
