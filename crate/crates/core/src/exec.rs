//! Execution backends for embarrassingly parallel loops.

use alloc::vec::Vec;

/// Maps `f` over `0..n` and returns the results in index order.
///
/// Implementations may run the calls in any order and on any number of
/// threads; because each call only depends on its index, the output is the
/// same for every backend.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
