//! Per-thread software operation tallies.
//!
//! Kernels call [`add_flops`] from whichever thread runs them. Counts sit in a
//! thread-local accumulator until [`flush`] moves them into the slot bank the
//! thread is attached to. A marker region attaches the orchestration thread to
//! its profiler's bank (slot 0) and the worker pool attaches each worker to the
//! same bank under its worker index.

use std::cell::{Cell, RefCell};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Upper bound on worker indices that get their own slot.
pub const MAX_WORKERS: usize = 1024;

#[derive(Debug)]
pub(crate) struct SlotBank {
    slots: Vec<AtomicU64>,
}

impl SlotBank {
    pub(crate) fn new() -> Self {
        Self { slots: (0..MAX_WORKERS).map(|_| AtomicU64::new(0)).collect() }
    }

    pub(crate) fn snapshot(&self) -> Vec<u64> {
        self.slots.iter().map(|s| s.load(Ordering::Acquire)).collect()
    }

    fn add(&self, slot: usize, n: u64) {
        self.slots[slot % MAX_WORKERS].fetch_add(n, Ordering::AcqRel);
    }
}

thread_local! {
    static PENDING: Cell<u64> = const { Cell::new(0) };
    static ATTACHED: RefCell<Option<(Arc<SlotBank>, usize)>> = const { RefCell::new(None) };
}

/// Records `n` floating-point operations against the current thread.
#[inline]
pub fn add_flops(n: u64) {
    PENDING.with(|p| p.set(p.get() + n));
}

/// Moves pending counts into the attached bank. Counts on an unattached
/// thread are dropped.
pub(crate) fn flush() {
    let n = PENDING.with(Cell::take);
    if n == 0 {
        return;
    }
    ATTACHED.with(|a| {
        if let Some((bank, slot)) = &*a.borrow() {
            bank.add(*slot, n);
        }
    });
}

/// Bank the current thread reports into, if any.
pub(crate) fn current_bank() -> Option<Arc<SlotBank>> {
    ATTACHED.with(|a| a.borrow().as_ref().map(|(b, _)| Arc::clone(b)))
}

/// Attaches the current thread to `bank` under `slot`, returning the previous
/// attachment. Pending counts are flushed to the previous attachment first.
pub(crate) fn attach(bank: Option<Arc<SlotBank>>, slot: usize) -> Option<(Arc<SlotBank>, usize)> {
    flush();
    ATTACHED.with(|a| std::mem::replace(&mut *a.borrow_mut(), bank.map(|b| (b, slot))))
}

pub(crate) fn restore(previous: Option<(Arc<SlotBank>, usize)>) {
    flush();
    ATTACHED.with(|a| *a.borrow_mut() = previous);
}

pub(crate) fn is_attached_to(bank: &Arc<SlotBank>) -> bool {
    ATTACHED.with(|a| a.borrow().as_ref().is_some_and(|(b, _)| Arc::ptr_eq(b, bank)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unattached_counts_are_dropped() {
        let bank = Arc::new(SlotBank::new());
        add_flops(5);
        let prev = attach(Some(Arc::clone(&bank)), 3);
        assert!(prev.is_none());
        add_flops(7);
        flush();
        restore(prev);
        let snap = bank.snapshot();
        assert_eq!(snap[3], 7);
        assert_eq!(snap.iter().sum::<u64>(), 7);
        assert!(current_bank().is_none());
    }
}
