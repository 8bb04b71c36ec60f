//! Execution strategy and resource limits.

use crate::error::{Error, Result};

/// Environment variable overriding the memory cap, in bytes.
pub const MEM_CAP_ENV: &str = "BANDITFH_MEM_CAP_BYTES";

pub const DEFAULT_MEM_CAP: u64 = 8 << 30;

/// How per-layer work is scheduled.
///
/// Results never depend on this choice: every state is computed by the
/// same kernel, and all reductions run in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rows of a layer run on the rayon pool. Without the `parallel`
    /// feature this behaves like `Sequential`.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Sizes the global worker pool. Only the first call has any effect.
pub fn set_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config("thread count must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    {
        // a second initialization is harmless; keep whichever pool won
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// The active memory cap: the environment override if set, else 8 GiB.
pub fn memory_cap() -> Result<u64> {
    match std::env::var(MEM_CAP_ENV) {
        Ok(v) => {
            v.trim().parse::<u64>().map_err(|_| Error::config(format!("{MEM_CAP_ENV} must be a byte count, got {v:?}")))
        }
        Err(_) => Ok(DEFAULT_MEM_CAP),
    }
}

/// Refuses work whose estimated footprint exceeds the active cap.
pub fn check_memory(required: u64) -> Result<()> {
    check_memory_with(required, memory_cap()?)
}

pub fn check_memory_with(required: u64, cap: u64) -> Result<()> {
    if required > cap {
        Err(Error::MemoryCap { required, cap })
    } else {
        Ok(())
    }
}
