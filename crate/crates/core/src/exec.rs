//! Deterministic work mapping.
//!
//! Per-document E-steps and kernel rows are independent, so they can be
//! farmed out; results are always collected in index order, making the output
//! identical for any worker count. The serial executor lives here; a
//! thread-pool implementation belongs to the std companion crate.

use alloc::vec::Vec;

/// Maps `f` over `0..n` and returns the results in index order.
///
/// Implementations must not reorder results and must not let worker count
/// influence any value.
pub trait Executor {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExecutor;

impl Executor for SerialExecutor {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }
}
