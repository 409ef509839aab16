//! Deterministic work distribution.
//!
//! Batch `i` always computes the same value no matter which worker runs it,
//! and results are returned in batch-index order, so downstream reductions
//! are bit-identical for any worker count.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Run `job(0..n_batches)` on `workers` threads and return the results in
/// batch order. `workers == 1` runs inline.
pub fn run_batches<T, F>(n_batches: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    assert!(workers >= 1, "need at least one worker");
    if workers == 1 || n_batches <= 1 {
        return (0..n_batches).map(job).collect();
    }

    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<T>> = (0..n_batches).map(|_| None).collect();
    let slot_ptr = SendPtr(slots.as_mut_ptr());

    std::thread::scope(|scope| {
        for _ in 0..workers.min(n_batches) {
            let job = &job;
            let next = &next;
            let slot_ptr = &slot_ptr;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n_batches {
                    break;
                }
                let value = job(i);
                // Each index is claimed by exactly one worker, so the write
                // targets a distinct slot.
                unsafe { *slot_ptr.0.add(i) = Some(value) };
            });
        }
    });

    slots
        .into_iter()
        .map(|s| s.expect("all batches completed"))
        .collect()
}

struct SendPtr<T>(*mut T);
unsafe impl<T: Send> Send for SendPtr<T> {}
unsafe impl<T: Send> Sync for SendPtr<T> {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_by_batch_index() {
        let out = run_batches(64, 4, |i| i * i);
        assert_eq!(out, (0..64).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let f = |i: usize| (i as f64).sin();
        let one = run_batches(37, 1, f);
        let four = run_batches(37, 4, f);
        assert_eq!(one, four);
    }
}
