//! Process-wide execution settings for the md-function backend.
//!
//! With the `parallel` feature the backend splits work across rayon workers
//! whenever the written index sets are disjoint. Splitting never changes the
//! per-element accumulation order, so results are bitwise identical with and
//! without threads. Turning off deterministic mode additionally allows
//! parallel tree reductions, whose association order depends on scheduling.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);
static DETERMINISTIC: AtomicBool = AtomicBool::new(true);

/// Minimum number of scalar kernel applications before work is split.
pub(crate) const PAR_THRESHOLD: usize = 1 << 14;

/// Enables or disables multi-threaded execution at runtime.
///
/// Has no effect when the crate is built without the `parallel` feature.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Sizes the global worker pool. `1` disables threading altogether. The pool
/// can only be sized once per process; later calls just toggle threading.
pub fn set_threads(n: usize) {
    set_parallel(n > 1);
    #[cfg(feature = "parallel")]
    if n > 1 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn set_deterministic(enabled: bool) {
    DETERMINISTIC.store(enabled, Ordering::Relaxed);
}

pub fn deterministic() -> bool {
    DETERMINISTIC.load(Ordering::Relaxed)
}

/// Maps `f` over `0..n`, in parallel when enabled. Output order is by index.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel_enabled() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Runs `f` on each chunk of `data` (chunks of `chunk` elements), in parallel
/// when enabled and the total work exceeds the threshold.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, work: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel_enabled() && work >= PAR_THRESHOLD && data.len() > chunk {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    let _ = work;
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

pub(crate) fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        if parallel_enabled() {
            return rayon::current_num_threads();
        }
    }
    1
}
