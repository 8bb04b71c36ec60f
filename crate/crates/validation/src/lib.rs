//! Helpers for the acceptance run in `tests/acceptance.rs`.
//!
//! The run lives in its own package so that cargo schedules it after the
//! engine and command-line test targets.

use std::io::Write;

use banditfh::{ActionProb, PhysicalState};

/// Result of one criterion: pass flag plus notes. Failed checks always
/// leave a note.
#[derive(Debug, Default)]
pub struct Outcome {
    pub pass: bool,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn new() -> Self {
        Outcome { pass: true, notes: Vec::new() }
    }

    pub fn check(&mut self, ok: bool, note: impl Into<String>) {
        if !ok {
            self.pass = false;
            self.notes.push(note.into());
        }
    }

    pub fn info(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }
}

/// Writes a line straight to stdout. libtest only captures the print
/// macros, so these lines show up in a plain `cargo test`.
pub fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

/// Agreement with a value printed to 3 significant digits.
pub fn printed_match(got: f64, want: f64) -> bool {
    (got - want).abs() <= 0.005 * want.abs()
}

/// A fixed pseudo-random state-dependent rule keyed by `seed`.
pub fn hashed_rule(seed: u64) -> impl Fn(&PhysicalState, u32) -> ActionProb + Sync {
    move |x, t| {
        let mut h = seed ^ (u64::from(x.s_c) << 48 | u64::from(x.f_c) << 32 | u64::from(x.s_d) << 16 | u64::from(t));
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
        ActionProb::from_code((h % 3) as u8 + 1).expect("codes 1..=3 are actions")
    }
}

/// Peak resident set size in bytes since the last [`reset_peak_rss`].
pub fn peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Resets the kernel's peak RSS counter. Returns false where unsupported.
pub fn reset_peak_rss() -> bool {
    std::fs::write("/proc/self/clear_refs", "5").is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_match_is_relative() {
        assert!(printed_match(2.5449, 2.54));
        assert!(!printed_match(2.56, 2.54));
        assert!(printed_match(30.1, 30.0));
    }

    #[test]
    fn failed_checks_flip_the_verdict() {
        let mut o = Outcome::new();
        o.check(true, "fine");
        assert!(o.pass && o.notes.is_empty());
        o.check(false, "broken");
        assert!(!o.pass);
        assert_eq!(o.notes, ["broken"]);
    }

    #[test]
    fn hashed_rule_is_deterministic() {
        let x = PhysicalState { s_c: 1, f_c: 2, s_d: 0, f_d: 3 };
        assert_eq!(hashed_rule(3)(&x, 6), hashed_rule(3)(&x, 6));
    }
}
