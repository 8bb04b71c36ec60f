//! Allocation designs.
//!
//! Every design maps `(state, epoch)` to a randomized action. Ties are
//! always resolved by the equally weighted mixed action, never by a coin
//! flip, so that exact evaluation stays deterministic.
//!
//! Two layers live here: the free functions (`bm_action`, `bkg_score`, ...)
//! are the checked, per-rule entry points, and [`Policy`] is the prepared,
//! infallible form that the sweep engines call once per lattice state.

use crate::beta::{BetaCounts, PriorSpec};
use crate::dp::ActionTable;
use crate::error::{Error, Result};
use crate::lattice::PhysicalState;

/// Allocation probabilities `(p_C, p_D)` with `p_C + p_D = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionProb {
    pub p_c: f64,
    pub p_d: f64,
}

impl ActionProb {
    pub const PURE_C: ActionProb = ActionProb { p_c: 1.0, p_d: 0.0 };
    pub const PURE_D: ActionProb = ActionProb { p_c: 0.0, p_d: 1.0 };
    pub const MIXED: ActionProb = ActionProb { p_c: 0.5, p_d: 0.5 };

    /// Action-table code: 1 = pure C, 2 = pure D, 3 = mixed.
    pub fn from_code(code: u8) -> Option<ActionProb> {
        match code {
            1 => Some(Self::PURE_C),
            2 => Some(Self::PURE_D),
            3 => Some(Self::MIXED),
            _ => None,
        }
    }

    pub fn code(&self) -> Option<u8> {
        if *self == Self::PURE_C {
            Some(1)
        } else if *self == Self::PURE_D {
            Some(2)
        } else if *self == Self::MIXED {
            Some(3)
        } else {
            None
        }
    }

    /// The action with the arms exchanged.
    pub fn mirror(&self) -> ActionProb {
        ActionProb { p_c: self.p_d, p_d: self.p_c }
    }
}

impl std::fmt::Display for ActionProb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.code() {
            Some(1) => write!(f, "C"),
            Some(2) => write!(f, "D"),
            _ => write!(f, "MIXED ({}, {})", self.p_c, self.p_d),
        }
    }
}

/// Larger score wins; equal scores give the mixed action.
#[inline]
fn prefer(score_c: f64, score_d: f64) -> ActionProb {
    // branch-free: the winner flips unpredictably across a layer
    let p_c = f64::from(u8::from(score_c > score_d)) + 0.5 * f64::from(u8::from(score_c == score_d));
    ActionProb { p_c, p_d: 1.0 - p_c }
}

/// Compares `s_c / n_c` against `s_d / n_d` by cross-multiplication.
#[inline]
fn prefer_ratio(s_c: f64, n_c: f64, s_d: f64, n_d: f64) -> ActionProb {
    prefer(s_c * n_d, s_d * n_c)
}

/// A named allocation rule.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSpec {
    /// Equal 1:1 randomization.
    Era,
    /// Bayes-optimal design from a solved action table.
    Dp,
    /// Bayesian myopic: largest posterior mean.
    Bm,
    /// Frequentist myopic ("play the favourite").
    Fm,
    /// UCB index rule with exploration coefficient α.
    Ucb(f64),
    /// Bayesian knowledge gradient.
    Bkg,
    /// Bayesian least failures first.
    Blff,
    /// Frequentist least failures first.
    Flff,
    /// Bayesian most successes first, ties to fewer failures.
    Bmsf,
    /// Bayesian greatest difference (successes − failures) first, ties to
    /// more successes.
    Bgdf,
    /// `first` for the first `N = round(sqrt(c·T))` subjects, `second` after.
    Combo(Box<Combo>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combo {
    pub first: DesignSpec,
    pub second: DesignSpec,
    pub coefficient: f64,
}

impl DesignSpec {
    pub fn combo(first: DesignSpec, second: DesignSpec, coefficient: f64) -> Result<DesignSpec> {
        if matches!(first, DesignSpec::Combo(_)) || matches!(second, DesignSpec::Combo(_)) {
            return Err(Error::config("combination designs nest at most one level"));
        }
        if !(coefficient.is_finite() && coefficient > 0.0) {
            return Err(Error::config(format!("stage coefficient must be positive, got {coefficient}")));
        }
        Ok(DesignSpec::Combo(Box::new(Combo { first, second, coefficient })))
    }

    pub fn ucb(alpha: f64) -> Result<DesignSpec> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config(format!("UCB needs alpha > 0, got {alpha}")));
        }
        Ok(DesignSpec::Ucb(alpha))
    }

    /// Command-line token, e.g. `ucb:0.18` or `combo:blff+bm:4`.
    pub fn name(&self) -> String {
        match self {
            DesignSpec::Era => "era".into(),
            DesignSpec::Dp => "dp".into(),
            DesignSpec::Bm => "bm".into(),
            DesignSpec::Fm => "fm".into(),
            DesignSpec::Ucb(a) => format!("ucb:{a}"),
            DesignSpec::Bkg => "bkg".into(),
            DesignSpec::Blff => "blff".into(),
            DesignSpec::Flff => "flff".into(),
            DesignSpec::Bmsf => "bmsf".into(),
            DesignSpec::Bgdf => "bgdf".into(),
            DesignSpec::Combo(c) => format!("combo:{}+{}:{}", c.first.name(), c.second.name(), c.coefficient),
        }
    }

    /// Table-row label, e.g. `0.18UCB` or `BLFF+BM`.
    pub fn label(&self) -> String {
        match self {
            DesignSpec::Era => "1:1".into(),
            DesignSpec::Ucb(a) => format!("{a}UCB"),
            DesignSpec::Combo(c) => format!("{}+{}", c.first.label(), c.second.label()),
            other => other.name().to_uppercase(),
        }
    }

    pub fn needs_table(&self) -> bool {
        match self {
            DesignSpec::Dp => true,
            DesignSpec::Combo(c) => c.first.needs_table() || c.second.needs_table(),
            _ => false,
        }
    }

    /// The seventeen rows of the standard comparison tables, in row order.
    pub fn standard_roster() -> Vec<DesignSpec> {
        use DesignSpec::*;
        let combo = |a, b, c| DesignSpec::combo(a, b, c).expect("valid roster entry");
        vec![
            Era,
            Dp,
            Bm,
            Fm,
            Ucb(2.0),
            Ucb(1.0),
            Ucb(0.18),
            Bkg,
            Blff,
            Bmsf,
            Bgdf,
            combo(Blff, Bm, 4.0),
            combo(Blff, Ucb(2.0), 4.0),
            combo(Blff, Ucb(1.0), 4.0),
            combo(Blff, Ucb(0.18), 4.0),
            combo(Blff, Bmsf, 9.0),
            combo(Era, Bmsf, 2.0),
        ]
    }
}

impl std::fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for DesignSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("combo:") {
            let (pair, coef) = rest
                .rsplit_once(':')
                .ok_or_else(|| Error::config(format!("combo needs a stage coefficient: {s:?}")))?;
            let (first, second) =
                pair.split_once('+').ok_or_else(|| Error::config(format!("combo needs <first>+<second>: {s:?}")))?;
            let coef: f64 = coef.parse().map_err(|_| Error::config(format!("invalid stage coefficient {coef:?}")))?;
            return DesignSpec::combo(first.parse()?, second.parse()?, coef);
        }
        if let Some(alpha) = s.strip_prefix("ucb:") {
            let alpha: f64 = alpha.parse().map_err(|_| Error::config(format!("invalid UCB alpha {alpha:?}")))?;
            return DesignSpec::ucb(alpha);
        }
        Ok(match s.as_str() {
            "era" | "1:1" => DesignSpec::Era,
            "dp" => DesignSpec::Dp,
            "bm" => DesignSpec::Bm,
            "fm" => DesignSpec::Fm,
            "bkg" => DesignSpec::Bkg,
            "blff" => DesignSpec::Blff,
            "flff" => DesignSpec::Flff,
            "bmsf" => DesignSpec::Bmsf,
            "bgdf" => DesignSpec::Bgdf,
            _ => return Err(Error::config(format!("unknown design {s:?}"))),
        })
    }
}

/// Length of the first stage of a combination design, `round(sqrt(c·T))`
/// with halves rounded up.
pub fn stage_length(coefficient: f64, horizon: u32) -> u32 {
    ((coefficient * horizon as f64).sqrt() + 0.5).floor() as u32
}

pub fn era_action() -> ActionProb {
    ActionProb::MIXED
}

pub fn bm_action(prior: &PriorSpec, x: &PhysicalState) -> Result<ActionProb> {
    let (c, d) = crate::beta::posterior(prior, x);
    if c.total() <= 0.0 {
        return Err(Error::UndefinedPredictive { arm: 'C' });
    }
    if d.total() <= 0.0 {
        return Err(Error::UndefinedPredictive { arm: 'D' });
    }
    Ok(prefer_ratio(c.s, c.total(), d.s, d.total()))
}

fn observed_means_action(x: &PhysicalState) -> ActionProb {
    let (n_c, n_d) = (x.s_c + x.f_c, x.s_d + x.f_d);
    match (n_c, n_d) {
        // only reachable outside the forced opening; an unobserved arm goes first
        (0, 0) => ActionProb::MIXED,
        (0, _) => ActionProb::PURE_C,
        (_, 0) => ActionProb::PURE_D,
        _ => prefer_ratio(x.s_c as f64, n_c as f64, x.s_d as f64, n_d as f64),
    }
}

pub fn fm_action(x: &PhysicalState, t: u32) -> ActionProb {
    match t {
        0 => ActionProb::PURE_C,
        1 => ActionProb::PURE_D,
        _ => observed_means_action(x),
    }
}

/// `s/(s+f) + sqrt(α·ln(t+1)/(s+f))`.
pub fn ucb_index(alpha: f64, s: u32, f: u32, t: u32) -> Result<f64> {
    let n = s + f;
    if n == 0 {
        return Err(Error::domain("UCB index undefined for an arm with no observations"));
    }
    Ok(ucb_index_unchecked(alpha, s, n, t))
}

#[inline]
fn ucb_index_unchecked(alpha: f64, s: u32, n: u32, t: u32) -> f64 {
    let n = n as f64;
    s as f64 / n + (alpha * ((t + 1) as f64).ln() / n).sqrt()
}

pub fn ucb_action(alpha: f64, x: &PhysicalState, t: u32) -> ActionProb {
    match t {
        0 => ActionProb::PURE_C,
        1 => ActionProb::PURE_D,
        _ => {
            let (n_c, n_d) = (x.s_c + x.f_c, x.s_d + x.f_d);
            match (n_c, n_d) {
                (0, 0) => ActionProb::MIXED,
                (0, _) => ActionProb::PURE_C,
                (_, 0) => ActionProb::PURE_D,
                _ => prefer(ucb_index_unchecked(alpha, x.s_c, n_c, t), ucb_index_unchecked(alpha, x.s_d, n_d, t)),
            }
        }
    }
}

/// Knowledge-gradient score of arm `k` against the other arm `l`.
pub fn bkg_score(k: BetaCounts, l: BetaCounts, t: u32, horizon: u32) -> f64 {
    let remaining = horizon.saturating_sub(t + 1) as f64;
    bkg_score_inner(k.s, k.total(), l.s / l.total(), remaining)
}

#[inline]
fn bkg_score_inner(s_k: f64, n_k: f64, mu_l: f64, remaining: f64) -> f64 {
    let mu_k = s_k / n_k;
    let up = (s_k + 1.0) / (n_k + 1.0);
    let down = s_k / (n_k + 1.0);
    let future = if mu_l >= up {
        mu_l
    } else if mu_l >= down {
        (1.0 - mu_k) * mu_l + mu_k * up
    } else {
        (s_k + mu_k) / (n_k + 1.0)
    };
    mu_k + remaining * future
}

pub fn bkg_action(prior: &PriorSpec, x: &PhysicalState, t: u32, horizon: u32) -> Result<ActionProb> {
    let (c, d) = crate::beta::posterior(prior, x);
    if c.total() <= 0.0 {
        return Err(Error::UndefinedPredictive { arm: 'C' });
    }
    if d.total() <= 0.0 {
        return Err(Error::UndefinedPredictive { arm: 'D' });
    }
    Ok(prefer(bkg_score(c, d, t, horizon), bkg_score(d, c, t, horizon)))
}

/// Fewer failures first, then more successes, then mixed.
#[inline]
fn least_failures(s_c: f64, f_c: f64, s_d: f64, f_d: f64) -> ActionProb {
    if f_c < f_d {
        ActionProb::PURE_C
    } else if f_d < f_c {
        ActionProb::PURE_D
    } else {
        prefer(s_c, s_d)
    }
}

pub fn blff_action(prior: &PriorSpec, x: &PhysicalState) -> ActionProb {
    let (c, d) = crate::beta::posterior(prior, x);
    least_failures(c.s, c.f, d.s, d.f)
}

pub fn flff_action(x: &PhysicalState) -> ActionProb {
    least_failures(x.s_c as f64, x.f_c as f64, x.s_d as f64, x.f_d as f64)
}

/// More successes first, then fewer failures, then mixed.
#[inline]
fn most_successes(s_c: f64, f_c: f64, s_d: f64, f_d: f64) -> ActionProb {
    match prefer(s_c, s_d) {
        ActionProb::MIXED => prefer(f_d, f_c),
        a => a,
    }
}

/// Larger `s - f` first, then more successes, then mixed.
#[inline]
fn greatest_difference(s_c: f64, f_c: f64, s_d: f64, f_d: f64) -> ActionProb {
    match prefer(s_c - f_c, s_d - f_d) {
        ActionProb::MIXED => prefer(s_c, s_d),
        a => a,
    }
}

pub fn bmsf_action(prior: &PriorSpec, x: &PhysicalState) -> ActionProb {
    let (c, d) = crate::beta::posterior(prior, x);
    most_successes(c.s, c.f, d.s, d.f)
}

pub fn bgdf_action(prior: &PriorSpec, x: &PhysicalState) -> ActionProb {
    let (c, d) = crate::beta::posterior(prior, x);
    greatest_difference(c.s, c.f, d.s, d.f)
}

pub fn combo_action(
    spec: &DesignSpec,
    prior: &PriorSpec,
    x: &PhysicalState,
    t: u32,
    horizon: u32,
    table: Option<&ActionTable>,
) -> Result<ActionProb> {
    let DesignSpec::Combo(c) = spec else {
        return Err(Error::config(format!("{} is not a combination design", spec.name())));
    };
    if t < stage_length(c.coefficient, horizon) {
        action_of(&c.first, prior, x, t, horizon, table)
    } else {
        action_of(&c.second, prior, x, t, horizon, table)
    }
}

/// Checked dispatcher over every design.
pub fn action_of(
    spec: &DesignSpec,
    prior: &PriorSpec,
    x: &PhysicalState,
    t: u32,
    horizon: u32,
    table: Option<&ActionTable>,
) -> Result<ActionProb> {
    if x.epoch() != t {
        return Err(Error::domain(format!("state {x} does not belong to epoch {t}")));
    }
    if t >= horizon {
        return Err(Error::domain(format!("no allocation at epoch {t} for horizon {horizon}")));
    }
    Ok(match spec {
        DesignSpec::Era => era_action(),
        DesignSpec::Bm => bm_action(prior, x)?,
        DesignSpec::Fm => fm_action(x, t),
        DesignSpec::Ucb(a) => ucb_action(*a, x, t),
        DesignSpec::Bkg => bkg_action(prior, x, t, horizon)?,
        DesignSpec::Blff => blff_action(prior, x),
        DesignSpec::Flff => flff_action(x),
        DesignSpec::Bmsf => bmsf_action(prior, x),
        DesignSpec::Bgdf => bgdf_action(prior, x),
        DesignSpec::Dp => {
            let table = table.ok_or_else(|| Error::config("the dp design needs an action table"))?;
            table.check_matches(prior, horizon)?;
            table.action(x)?
        }
        DesignSpec::Combo(_) => return combo_action(spec, prior, x, t, horizon, table),
    })
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Era,
    Dp,
    Bm,
    Fm,
    Ucb(f64),
    Bkg,
    Blff,
    Flff,
    Bmsf,
    Bgdf,
}

impl Rule {
    fn of(spec: &DesignSpec) -> Rule {
        match spec {
            DesignSpec::Era => Rule::Era,
            DesignSpec::Dp => Rule::Dp,
            DesignSpec::Bm => Rule::Bm,
            DesignSpec::Fm => Rule::Fm,
            DesignSpec::Ucb(a) => Rule::Ucb(*a),
            DesignSpec::Bkg => Rule::Bkg,
            DesignSpec::Blff => Rule::Blff,
            DesignSpec::Flff => Rule::Flff,
            DesignSpec::Bmsf => Rule::Bmsf,
            DesignSpec::Bgdf => Rule::Bgdf,
            DesignSpec::Combo(_) => unreachable!("combos are flattened by Policy::new"),
        }
    }

    fn uses_posterior_mean(self) -> bool {
        matches!(self, Rule::Bm | Rule::Bkg)
    }
}

/// A design prepared for one prior and horizon; cheap to call per state.
#[derive(Debug, Clone)]
pub struct Policy<'a> {
    first: Rule,
    second: Rule,
    switch_at: u32,
    prior: PriorSpec,
    horizon: u32,
    table: Option<&'a ActionTable>,
}

impl<'a> Policy<'a> {
    pub fn new(
        spec: &DesignSpec,
        prior: &PriorSpec,
        horizon: u32,
        table: Option<&'a ActionTable>,
    ) -> Result<Policy<'a>> {
        let (first, second, switch_at) = match spec {
            DesignSpec::Combo(c) => (Rule::of(&c.first), Rule::of(&c.second), stage_length(c.coefficient, horizon)),
            other => (Rule::of(other), Rule::of(other), 0),
        };
        let rules = [first, second];
        if rules.iter().any(|r| matches!(r, Rule::Dp)) {
            let t = table.ok_or_else(|| Error::config(format!("{} needs an action table", spec.name())))?;
            t.check_matches(prior, horizon)?;
        }
        if rules.iter().any(|r| r.uses_posterior_mean()) {
            prior.require_predictive()?;
        }
        Ok(Policy { first, second, switch_at, prior: *prior, horizon, table })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Action at `x`, which must lie in layer `t < T`.
    #[inline]
    pub fn decide(&self, x: &PhysicalState, t: u32) -> ActionProb {
        let rule = if t < self.switch_at { self.first } else { self.second };
        let p = &self.prior;
        match rule {
            Rule::Era => ActionProb::MIXED,
            Rule::Bm => {
                let (s_c, f_c) = (p.s_c + x.s_c as f64, p.f_c + x.f_c as f64);
                let (s_d, f_d) = (p.s_d + x.s_d as f64, p.f_d + x.f_d as f64);
                prefer_ratio(s_c, s_c + f_c, s_d, s_d + f_d)
            }
            Rule::Fm => fm_action(x, t),
            Rule::Ucb(a) => ucb_action(a, x, t),
            Rule::Bkg => {
                let (s_c, f_c) = (p.s_c + x.s_c as f64, p.f_c + x.f_c as f64);
                let (s_d, f_d) = (p.s_d + x.s_d as f64, p.f_d + x.f_d as f64);
                let (n_c, n_d) = (s_c + f_c, s_d + f_d);
                let remaining = (self.horizon - t - 1) as f64;
                prefer(bkg_score_inner(s_c, n_c, s_d / n_d, remaining), bkg_score_inner(s_d, n_d, s_c / n_c, remaining))
            }
            Rule::Blff => {
                least_failures(p.s_c + x.s_c as f64, p.f_c + x.f_c as f64, p.s_d + x.s_d as f64, p.f_d + x.f_d as f64)
            }
            Rule::Flff => flff_action(x),
            Rule::Bmsf => {
                most_successes(p.s_c + x.s_c as f64, p.f_c + x.f_c as f64, p.s_d + x.s_d as f64, p.f_d + x.f_d as f64)
            }
            Rule::Bgdf => greatest_difference(
                p.s_c + x.s_c as f64,
                p.f_c + x.f_c as f64,
                p.s_d + x.s_d as f64,
                p.f_d + x.f_d as f64,
            ),
            Rule::Dp => {
                let table = self.table.expect("checked in Policy::new");
                ActionProb::from_code(table.code_in(t, x)).unwrap_or(ActionProb::MIXED)
            }
        }
    }
}
