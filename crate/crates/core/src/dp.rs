//! Bayes-optimal design by backward induction.
//!
//! `V_T = 0` and, for each earlier layer,
//! `V_t(x) = max_k q_k(x) (1 + V_{t+1}(x + e_k^s)) + (1 - q_k(x)) V_{t+1}(x + e_k^f)`
//! with `q_k` the predictive success probability of arm `k` at `x`.
//! Arms whose continuation values lie within `1e-9 · (T - t)` of each other
//! are recorded as a tie (mixed action).

use std::path::Path;

use crate::beta::{predictive, PriorSpec};
use crate::design::ActionProb;
use crate::error::{Error, Result};
use crate::exec::{check_memory, Exec};
use crate::lattice::{LayerIndexer, PhysicalState};
use crate::sweep::{packed_layer_len, Sweep};
use crate::table_io::TableWriter;

pub const CODE_NONE: u8 = 0;
pub const CODE_C: u8 = 1;
pub const CODE_D: u8 = 2;
pub const CODE_MIXED: u8 = 3;

/// Tie tolerance at epoch `t` of a horizon-`T` problem.
#[inline]
pub fn tie_tolerance(t: u32, horizon: u32) -> f64 {
    1e-9 * (horizon - t) as f64
}

/// Packed optimal actions, 2 bits per state, layer-major in rank order.
/// Each layer starts on a byte boundary; terminal-layer codes are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTable {
    pub(crate) horizon: u32,
    pub(crate) prior: PriorSpec,
    pub(crate) bayes_number: f64,
    pub(crate) payload: Vec<u8>,
    pub(crate) layer_offsets: Vec<usize>,
    pub(crate) indexer: LayerIndexer,
}

/// Byte offset of every layer in the payload, plus the total at the end.
pub(crate) fn layer_offsets(horizon: u32) -> Vec<usize> {
    let mut offs = Vec::with_capacity(horizon as usize + 2);
    let mut acc = 0;
    for t in 0..=horizon {
        offs.push(acc);
        acc += packed_layer_len(t);
    }
    offs.push(acc);
    offs
}

/// Payload size in bytes of a horizon-`T` table.
pub fn table_payload_len(horizon: u32) -> u64 {
    (0..=horizon).map(|t| packed_layer_len(t) as u64).sum()
}

impl ActionTable {
    pub(crate) fn from_parts(horizon: u32, prior: PriorSpec, bayes_number: f64, payload: Vec<u8>) -> Result<Self> {
        let layer_offsets = layer_offsets(horizon);
        if payload.len() != layer_offsets[horizon as usize + 1] {
            return Err(Error::Format(format!(
                "payload of {} bytes does not match horizon {horizon} ({} bytes expected)",
                payload.len(),
                layer_offsets[horizon as usize + 1]
            )));
        }
        Ok(Self { horizon, prior, bayes_number, payload, layer_offsets, indexer: LayerIndexer::new(horizon)? })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    /// Optimal expected number of successes from the origin.
    pub fn bayes_number(&self) -> f64 {
        self.bayes_number
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Number of stored codes, `C(T+4, 4)`.
    pub fn code_count(&self) -> u64 {
        self.indexer.total_states()
    }

    /// Code at `x`, which must lie in layer `t` (unchecked).
    #[inline]
    pub fn code_in(&self, t: u32, x: &PhysicalState) -> u8 {
        let r = self.indexer.rank_in(t, x.s_c, x.f_c, x.s_d) as usize;
        (self.payload[self.layer_offsets[t as usize] + (r >> 2)] >> ((r & 3) * 2)) & 3
    }

    pub fn code(&self, x: &PhysicalState) -> Result<u8> {
        let t = x.epoch();
        if t > self.horizon {
            return Err(Error::domain(format!("state {x} lies beyond horizon {}", self.horizon)));
        }
        Ok(self.code_in(t, x))
    }

    /// Optimal action at a non-terminal state.
    pub fn action(&self, x: &PhysicalState) -> Result<ActionProb> {
        let t = x.epoch();
        if t >= self.horizon {
            return Err(Error::domain(format!("no action at terminal state {x}")));
        }
        ActionProb::from_code(self.code_in(t, x)).ok_or_else(|| Error::Format(format!("missing action code at {x}")))
    }

    /// Refuses use with a different horizon or prior.
    pub fn check_matches(&self, prior: &PriorSpec, horizon: u32) -> Result<()> {
        if self.horizon != horizon {
            return Err(Error::TableMismatch(format!(
                "action table was solved for T={} but T={horizon} was requested",
                self.horizon
            )));
        }
        if self.prior != *prior {
            return Err(Error::TableMismatch(format!(
                "action table was solved for prior {} but {prior} was requested",
                self.prior
            )));
        }
        Ok(())
    }

    /// Verifies that every non-terminal state carries a code in 1..=3.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.horizon {
            let n = self.indexer.layer_size(t)? as usize;
            let layer = &self.payload[self.layer_offsets[t as usize]..];
            for r in 0..n {
                if (layer[r >> 2] >> ((r & 3) * 2)) & 3 == CODE_NONE {
                    let x = self.indexer.unrank(t, r as u64)?;
                    return Err(Error::Format(format!("state {x} has no action code")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Keep the packed action table in memory.
    pub keep_actions: bool,
    pub exec: Exec,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub horizon: u32,
    /// `V_0` at the origin.
    pub bayes_number: f64,
    /// Action code at the origin.
    pub root_code: u8,
    pub table: Option<ActionTable>,
    /// Value slots resident at peak (store plus slab scratch).
    pub peak_value_slots: u64,
    /// Memory estimate checked against the cap, in bytes.
    pub estimated_bytes: u64,
}

/// Estimated footprint of a solve: one value store, slab scratch, and the
/// action payload (whole table, or one layer when streaming to a file).
pub fn solve_memory_estimate(horizon: u32, table_bytes: u64) -> u64 {
    let store = crate::lattice::tetra_len(horizon);
    let scratch = crate::sweep::tri_len(horizon as usize) as u64;
    8 * store + 9 * scratch + table_bytes
}

/// Solves with default options (parallel, table kept when asked).
pub fn solve(prior: &PriorSpec, horizon: u32, keep_actions: bool) -> Result<SolveOutput> {
    solve_with(prior, horizon, SolveOptions { keep_actions, exec: Exec::default() })
}

pub fn solve_with(prior: &PriorSpec, horizon: u32, opts: SolveOptions) -> Result<SolveOutput> {
    check_problem(prior, horizon)?;
    let table_bytes = if opts.keep_actions { table_payload_len(horizon) } else { 0 };
    let estimated_bytes = solve_memory_estimate(horizon, table_bytes);
    check_memory(estimated_bytes)?;
    let mut payload = if opts.keep_actions { vec![0u8; table_bytes as usize] } else { Vec::new() };
    let offsets = layer_offsets(horizon);
    let mut root = [0u8; 1];
    let (v0, peak) = run_solve(prior, horizon, opts.exec, |t, fill| {
        if opts.keep_actions {
            fill(&mut payload[offsets[t as usize]..offsets[t as usize + 1]]);
            if t == 0 {
                root[0] = payload[0];
            }
        } else if t == 0 {
            fill(&mut root);
        }
        Ok(())
    })?;
    let table = if opts.keep_actions { Some(ActionTable::from_parts(horizon, *prior, v0, payload)?) } else { None };
    Ok(SolveOutput {
        horizon,
        bayes_number: v0,
        root_code: root[0] & 3,
        table,
        peak_value_slots: peak,
        estimated_bytes,
    })
}

/// Solves and streams the action table straight into a BFH1 file, holding
/// only one layer of codes in memory.
pub fn solve_to_file(prior: &PriorSpec, horizon: u32, path: &Path, exec: Exec) -> Result<SolveOutput> {
    check_problem(prior, horizon)?;
    let estimated_bytes = solve_memory_estimate(horizon, packed_layer_len(horizon) as u64);
    check_memory(estimated_bytes)?;
    let mut writer = TableWriter::create(path, horizon, prior)?;
    let mut root = 0u8;
    let mut buf = Vec::new();
    let (v0, peak) = run_solve(prior, horizon, exec, |t, fill| {
        buf.clear();
        buf.resize(packed_layer_len(t), 0);
        fill(&mut buf);
        if t == 0 {
            root = buf[0] & 3;
        }
        writer.write_layer(t, &buf)
    })?;
    writer.finish(v0)?;
    Ok(SolveOutput { horizon, bayes_number: v0, root_code: root, table: None, peak_value_slots: peak, estimated_bytes })
}

fn check_problem(prior: &PriorSpec, horizon: u32) -> Result<()> {
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    prior.require_predictive()
}

/// Backward induction driver. `on_layer(t, fill)` is called once per
/// non-terminal layer, from `T-1` down to 0; calling `fill(buf)` runs the
/// sweep for that layer and ORs its codes into `buf` (zeroed, packed).
fn run_solve<F>(prior: &PriorSpec, horizon: u32, exec: Exec, mut on_layer: F) -> Result<(f64, u64)>
where
    F: FnMut(u32, &mut dyn FnMut(&mut [u8])) -> Result<()>,
{
    let sweep = Sweep::new(horizon, exec);
    let mut store = vec![0.0f64; sweep.store_len()];
    let mut scratch = sweep.backward_scratch::<f64>();
    let p = *prior;
    let symmetric = p.is_symmetric();
    for t in (0..horizon).rev() {
        let tol = tie_tolerance(t, horizon);
        let kernel = |t: u32, a: u32, b: u32| {
            let qc = predictive(p.s_c, p.f_c, a, b);
            let qc0 = 1.0 - qc;
            let rest = t - a - b;
            move |c: u32, s: [f64; 4]| {
                let d = rest - c;
                let qd = predictive(p.s_d, p.f_d, c, d);
                let qd0 = 1.0 - qd;
                let vc = qc * (1.0 + s[0]) + qc0 * s[1];
                let vd = qd * (1.0 + s[2]) + qd0 * s[3];
                let code = if symmetric && a == c && b == d {
                    CODE_MIXED
                } else {
                    let diff = vc - vd;
                    if diff.abs() <= tol {
                        CODE_MIXED
                    } else if diff > 0.0 {
                        CODE_C
                    } else {
                        CODE_D
                    }
                };
                (vc.max(vd), code)
            }
        };
        let mut ran = false;
        on_layer(t, &mut |buf: &mut [u8]| {
            sweep.backward_layer(&mut store, t, &mut scratch, Some(buf), &kernel);
            ran = true;
        })?;
        if !ran {
            sweep.backward_layer(&mut store, t, &mut scratch, None, &kernel);
        }
    }
    let peak = (sweep.store_len() + sweep.scratch_len()) as u64;
    Ok((store[0], peak))
}

/// Optimal action at `x` computed online: solves the sub-problem rooted at
/// `x` (posterior as prior, `T - t` subjects left) without storing actions.
pub fn optimal_action(prior: &PriorSpec, x: &PhysicalState, t: u32, horizon: u32) -> Result<ActionProb> {
    if x.epoch() != t {
        return Err(Error::domain(format!("state {x} does not belong to epoch {t}")));
    }
    if t >= horizon {
        return Err(Error::domain(format!("epoch {t} leaves no allocation before horizon {horizon}")));
    }
    prior.require_predictive()?;
    let out = solve_with(&prior.shifted(x), horizon - t, SolveOptions { keep_actions: false, exec: Exec::default() })?;
    ActionProb::from_code(out.root_code).ok_or_else(|| Error::Numerical("root action missing".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::layer_states;

    const U: PriorSpec = PriorSpec::uniform();

    #[test]
    fn small_horizons_by_hand() {
        let one = solve(&U, 1, true).unwrap();
        assert_eq!(one.bayes_number, 0.5);
        assert_eq!(one.root_code, CODE_MIXED);
        let two = solve(&U, 2, true).unwrap();
        assert!((two.bayes_number - 13.0 / 12.0).abs() < 1e-15);
        let table = two.table.unwrap();
        assert_eq!(table.code(&PhysicalState::new(1, 0, 0, 0)).unwrap(), CODE_C);
        assert_eq!(table.code(&PhysicalState::new(0, 1, 0, 0)).unwrap(), CODE_D);
        assert_eq!(table.code(&PhysicalState::new(0, 0, 1, 0)).unwrap(), CODE_D);
        assert_eq!(table.code(&PhysicalState::new(0, 0, 0, 1)).unwrap(), CODE_C);
        assert_eq!(table.code(&PhysicalState::new(1, 1, 0, 0)).unwrap(), CODE_NONE);
        table.validate().unwrap();
        assert_eq!(table.code_count(), 15);
    }

    #[test]
    fn refusals() {
        assert!(solve(&U, 0, false).is_err());
        let haldane = PriorSpec::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(solve(&haldane, 3, false), Err(Error::UndefinedPredictive { arm: 'C' })));
    }

    #[test]
    fn online_examples() {
        assert_eq!(optimal_action(&U, &PhysicalState::ORIGIN, 0, 2).unwrap(), ActionProb::MIXED);
        assert_eq!(optimal_action(&U, &PhysicalState::new(1, 0, 0, 0), 1, 2).unwrap(), ActionProb::PURE_C);
        assert!(optimal_action(&U, &PhysicalState::new(1, 0, 0, 0), 0, 2).is_err());
        assert!(optimal_action(&U, &PhysicalState::new(1, 1, 0, 0), 2, 2).is_err());
    }

    #[test]
    fn online_matches_table() {
        for horizon in [1, 2, 5, 9] {
            let table = solve(&U, horizon, true).unwrap().table.unwrap();
            for t in 0..horizon {
                for x in layer_states(t) {
                    assert_eq!(optimal_action(&U, &x, t, horizon).unwrap(), table.action(&x).unwrap(), "{x}");
                }
            }
        }
    }

    #[test]
    fn exec_modes_agree_bitwise() {
        let prior = PriorSpec::new(0.5, 1.5, 2.0, 0.7).unwrap();
        let seq = solve_with(&prior, 30, SolveOptions { keep_actions: true, exec: Exec::Sequential }).unwrap();
        let par = solve_with(&prior, 30, SolveOptions { keep_actions: true, exec: Exec::Parallel }).unwrap();
        assert_eq!(seq.bayes_number.to_bits(), par.bayes_number.to_bits());
        assert_eq!(seq.table, par.table);
    }

    #[test]
    fn value_bracketing() {
        for horizon in [1, 3, 10, 40] {
            let v = solve(&U, horizon, false).unwrap().bayes_number;
            let h = horizon as f64;
            assert!(v >= 0.5 * h - 1e-12);
            assert!(v <= 2.0 / 3.0 * h + 1e-12);
        }
    }

    #[test]
    fn peak_slots_within_two_layers() {
        for horizon in [1, 4, 25, 60] {
            let out = solve(&U, horizon, false).unwrap();
            let layer = crate::lattice::tetra_len(horizon);
            assert!(out.peak_value_slots <= 2 * layer);
        }
    }

    #[test]
    fn memory_cap_is_enforced() {
        let need = solve_memory_estimate(100, 0);
        assert!(crate::exec::check_memory_with(need, need - 1).is_err());
    }
}
