//! Scoped worker threads shared by every parallel strategy.

use std::panic::{catch_unwind, AssertUnwindSafe};

use crate::perf::tally;

/// Message of the first worker panic, if any.
pub(crate) type WorkerPanic = String;

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".to_owned())
}

/// Runs `work(worker_index, items)` once per worker, each on its own thread,
/// and blocks until all finish. A single worker runs inline on the caller.
///
/// Workers inherit the caller's tally attachment under their own slot and
/// flush before returning, so counts are visible once this call returns.
pub(crate) fn run_workers<I, F>(per_worker: Vec<Vec<I>>, work: F) -> Result<(), WorkerPanic>
where
    I: Send,
    F: Fn(usize, Vec<I>) + Sync,
{
    if per_worker.len() <= 1 {
        let items = per_worker.into_iter().next().unwrap_or_default();
        return catch_unwind(AssertUnwindSafe(|| work(0, items))).map_err(panic_message);
    }
    let bank = tally::current_bank();
    let results: Vec<Result<(), WorkerPanic>> = std::thread::scope(|scope| {
        let handles: Vec<_> = per_worker
            .into_iter()
            .enumerate()
            .map(|(worker, items)| {
                let bank = bank.clone();
                let work = &work;
                scope.spawn(move || {
                    let prev = tally::attach(bank, worker);
                    let r = catch_unwind(AssertUnwindSafe(|| work(worker, items))).map_err(panic_message);
                    tally::restore(prev);
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| Err(panic_message(p))))
            .collect()
    });
    results.into_iter().collect()
}
