//! Order-preserving data-parallel helpers.
//!
//! Every helper returns results in input order, so reductions performed by
//! callers over the returned vectors have a fixed summation order whether or
//! not rayon is used.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

thread_local! {
    static OVERRIDE: Cell<Option<Execution>> = const { Cell::new(None) };
}

/// Execution mode in effect on the current thread.
pub fn current() -> Execution {
    OVERRIDE.with(|o| o.get()).unwrap_or_default()
}

/// Run `f` with the given execution mode on the current thread.
///
/// Without the `parallel` feature, `Execution::Parallel` silently runs
/// sequentially.
pub fn with_execution<R>(mode: Execution, f: impl FnOnce() -> R) -> R {
    struct Restore(Option<Execution>);
    impl Drop for Restore {
        fn drop(&mut self) {
            OVERRIDE.with(|o| o.set(self.0));
        }
    }
    let _restore = Restore(OVERRIDE.with(|o| o.replace(Some(mode))));
    f()
}

pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match current() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Like [`map_collect`] but stops at the first error in input order.
pub fn try_map_collect<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map_collect(items, f).into_iter().collect()
}

/// Maps over fixed-size chunks; the chunk boundaries do not depend on the
/// execution mode.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let chunks: Vec<&[T]> = items.chunks(chunk).collect();
    map_collect(&chunks, |c| f(c))
}
