//! Bounded worker pool with deterministic result ordering: jobs are pulled
//! from an atomic counter, results are keyed by job index and handed back
//! sorted, so the output never depends on scheduling or completion order.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Worker cap: `GSOID_THREADS` when set (minimum 1), otherwise the
/// available parallelism.
pub fn worker_count() -> usize {
    if let Ok(v) = std::env::var("GSOID_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Run `f(0..jobs)` on at most `threads` workers, returning results in job
/// order.
pub fn run_indexed<T, F>(jobs: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if jobs == 0 {
        return Vec::new();
    }
    let threads = threads.clamp(1, jobs);
    if threads == 1 {
        return (0..jobs).map(f).collect();
    }
    let counter = AtomicUsize::new(0);
    let mut keyed: Vec<(usize, T)> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = counter.fetch_add(1, Ordering::Relaxed);
                        if i >= jobs {
                            break;
                        }
                        local.push((i, f(i)));
                    }
                    local
                })
            })
            .collect();
        workers
            .into_iter()
            .flat_map(|w| w.join().expect("worker panicked"))
            .collect()
    });
    keyed.sort_by_key(|(i, _)| *i);
    keyed.into_iter().map(|(_, v)| v).collect()
}
