//! Beta-Bernoulli machinery: priors, posterior pseudo-counts, predictive
//! probabilities, moment conversions and `E[max(θ_C, θ_D)]`.

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::lattice::PhysicalState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    C,
    D,
}

impl Arm {
    pub fn other(self) -> Arm {
        match self {
            Arm::C => Arm::D,
            Arm::D => Arm::C,
        }
    }

    pub fn label(self) -> char {
        match self {
            Arm::C => 'C',
            Arm::D => 'D',
        }
    }
}

/// Independent Beta priors on both arms, as pseudo-counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub s_c: f64,
    pub f_c: f64,
    pub s_d: f64,
    pub f_d: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::uniform()
    }
}

impl PriorSpec {
    pub fn new(s_c: f64, f_c: f64, s_d: f64, f_d: f64) -> Result<Self> {
        let p = Self { s_c, f_c, s_d, f_d };
        for v in p.as_array() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!("prior pseudo-counts must be finite and >= 0, got {v}")));
            }
        }
        Ok(p)
    }

    /// Beta(1, 1) on both arms.
    pub const fn uniform() -> Self {
        Self { s_c: 1.0, f_c: 1.0, s_d: 1.0, f_d: 1.0 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.s_c, self.f_c, self.s_d, self.f_d]
    }

    pub fn arm(&self, arm: Arm) -> BetaCounts {
        match arm {
            Arm::C => BetaCounts { s: self.s_c, f: self.f_c },
            Arm::D => BetaCounts { s: self.s_d, f: self.f_d },
        }
    }

    /// Both arms carry the same prior.
    pub fn is_symmetric(&self) -> bool {
        self.s_c == self.s_d && self.f_c == self.f_d
    }

    /// True if an arm has no pseudo-observations (Haldane prior).
    pub fn has_haldane_arm(&self) -> bool {
        self.s_c + self.f_c == 0.0 || self.s_d + self.f_d == 0.0
    }

    /// Fails if the predictive law is undefined before any observation.
    pub fn require_predictive(&self) -> Result<()> {
        if self.s_c + self.f_c == 0.0 {
            return Err(Error::UndefinedPredictive { arm: 'C' });
        }
        if self.s_d + self.f_d == 0.0 {
            return Err(Error::UndefinedPredictive { arm: 'D' });
        }
        Ok(())
    }

    /// Prior with the arms exchanged.
    pub fn mirror(&self) -> Self {
        Self { s_c: self.s_d, f_c: self.f_d, s_d: self.s_c, f_d: self.f_c }
    }

    /// The posterior at `x`, used as a prior for the sub-problem rooted there.
    pub fn shifted(&self, x: &PhysicalState) -> Self {
        Self {
            s_c: self.s_c + x.s_c as f64,
            f_c: self.f_c + x.f_c as f64,
            s_d: self.s_d + x.s_d as f64,
            f_d: self.f_d + x.f_d as f64,
        }
    }
}

impl std::fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{};{};{};{}", self.s_c, self.f_c, self.s_d, self.f_d)
    }
}

impl std::str::FromStr for PriorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::domain(format!("invalid prior {s:?}")))?;
        match vals[..] {
            [a, b, c, d] => PriorSpec::new(a, b, c, d),
            _ => Err(Error::domain(format!("prior needs four comma-separated values, got {s:?}"))),
        }
    }
}

/// Posterior Beta parameters of one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaCounts {
    pub s: f64,
    pub f: f64,
}

impl BetaCounts {
    pub fn new(s: f64, f: f64) -> Self {
        Self { s, f }
    }

    pub fn total(&self) -> f64 {
        self.s + self.f
    }

    pub fn predictive_success(&self) -> Result<f64> {
        let n = self.total();
        if n <= 0.0 {
            return Err(Error::domain("predictive success undefined: s + f = 0"));
        }
        Ok(self.s / n)
    }

    pub fn predictive_failure(&self) -> Result<f64> {
        let n = self.total();
        if n <= 0.0 {
            return Err(Error::domain("predictive failure undefined: s + f = 0"));
        }
        Ok(self.f / n)
    }
}

/// Posterior counts on both arms after observing `x`.
pub fn posterior(prior: &PriorSpec, x: &PhysicalState) -> (BetaCounts, BetaCounts) {
    (
        BetaCounts::new(prior.s_c + x.s_c as f64, prior.f_c + x.f_c as f64),
        BetaCounts::new(prior.s_d + x.s_d as f64, prior.f_d + x.f_d as f64),
    )
}

pub fn predictive_success(counts: (BetaCounts, BetaCounts), arm: Arm) -> Result<f64> {
    let c = match arm {
        Arm::C => counts.0,
        Arm::D => counts.1,
    };
    c.predictive_success().map_err(|_| Error::UndefinedPredictive { arm: arm.label() })
}

/// Predictive success probability from prior pseudo-counts plus integer
/// observations. Every solver and evaluator goes through this one
/// expression so that a shifted prior reproduces the same bits.
#[inline]
pub(crate) fn predictive(prior_s: f64, prior_f: f64, s: u32, f: u32) -> f64 {
    let a = prior_s + s as f64;
    let b = prior_f + f as f64;
    a / (a + b)
}

/// Beta parameters `(s̃, f̃)` with the given mean and variance.
pub fn beta_params_from_moments(mean: f64, var: f64) -> Result<(f64, f64)> {
    if !mean.is_finite() || !var.is_finite() {
        return Err(Error::InfeasibleMoments(format!("non-finite input ({mean}, {var})")));
    }
    if !(0.0..=1.0).contains(&mean) {
        return Err(Error::InfeasibleMoments(format!("mean {mean} outside [0, 1]")));
    }
    if mean == 0.0 || mean == 1.0 {
        return Err(Error::NotUniquelyDetermined(format!(
            "a mean of {mean} is only attained by degenerate Beta distributions"
        )));
    }
    if mean == 0.5 && var == 0.25 {
        return Ok((0.0, 0.0));
    }
    let bound = mean * (1.0 - mean);
    if var <= 0.0 || var >= bound {
        return Err(Error::InfeasibleMoments(format!("variance {var} must lie in (0, mean(1-mean) = {bound})")));
    }
    let k = bound / var - 1.0;
    // var == mean(1-mean) up to rounding
    if k <= 4.0 * f64::EPSILON {
        return Err(Error::InfeasibleMoments(format!("variance {var} must lie in (0, mean(1-mean) = {bound})")));
    }
    Ok((mean * k, (1.0 - mean) * k))
}

/// Mean and variance of `Beta(s̃, f̃)`, including the degenerate cases.
pub fn moments_from_beta(s: f64, f: f64) -> Result<(f64, f64)> {
    if !(s.is_finite() && f.is_finite()) || s < 0.0 || f < 0.0 {
        return Err(Error::domain(format!("Beta parameters must be finite and >= 0, got ({s}, {f})")));
    }
    Ok(match (s == 0.0, f == 0.0) {
        (true, true) => (0.5, 0.25),
        (true, false) => (0.0, 0.0),
        (false, true) => (1.0, 0.0),
        (false, false) => {
            let mu = s / (s + f);
            (mu, mu * (1.0 - mu) / (s + f + 1.0))
        }
    })
}

/// `E[max(θ_C, θ_D)]` for independent Beta-distributed arms, computed as
/// `∫₀¹ 1 − F_C(u) F_D(u) du` by adaptive Simpson quadrature.
pub fn expected_max(c: BetaCounts, d: BetaCounts) -> Result<f64> {
    for (arm, p) in [('C', c), ('D', d)] {
        if !(p.s > 0.0 && p.f > 0.0 && p.s.is_finite() && p.f.is_finite()) {
            return Err(Error::domain(format!("expected maximum needs s, f > 0 on arm {arm}, got ({}, {})", p.s, p.f)));
        }
    }
    let g = |u: f64| 1.0 - beta_reg(c.s, c.f, u) * beta_reg(d.s, d.f, u);
    Ok(adaptive_simpson(&g, 0.0, 1.0, 1e-10))
}

/// `E[max(θ_C, θ_D)]` under the prior.
pub fn expected_max_prior(prior: &PriorSpec) -> Result<f64> {
    expected_max(prior.arm(Arm::C), prior.arm(Arm::D))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // a handful of forced levels guards against a lucky early agreement
    if depth == 0 || (depth < 52 && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
