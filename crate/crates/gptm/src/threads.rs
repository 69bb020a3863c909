//! Scoped-thread executor with deterministic output.
//!
//! The index range is cut into one contiguous chunk per worker and every
//! result lands in its own slot, so the collected vector is identical for
//! any thread count — only wall-clock time changes.

use gptm_core::exec::Executor;

#[derive(Debug, Clone, Copy)]
pub struct ThreadPoolExecutor {
    threads: usize,
}

impl ThreadPoolExecutor {
    pub fn new(threads: usize) -> Self {
        ThreadPoolExecutor { threads: threads.max(1) }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl Executor for ThreadPoolExecutor {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.threads.min(n.max(1));
        if workers <= 1 || n == 0 {
            return (0..n).map(f).collect();
        }
        let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
        let chunk = n.div_ceil(workers);
        let f = &f;
        std::thread::scope(|scope| {
            for (worker, piece) in slots.chunks_mut(chunk).enumerate() {
                let start = worker * chunk;
                scope.spawn(move || {
                    for (offset, slot) in piece.iter_mut().enumerate() {
                        *slot = Some(f(start + offset));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("worker filled every slot")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gptm_core::exec::SerialExecutor;

    #[test]
    fn all_indices_covered_in_order() {
        let exec = ThreadPoolExecutor::new(3);
        let out = exec.map_indexed(10, |i| i * i);
        assert_eq!(out, (0..10).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn matches_serial_for_any_thread_count() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let serial = SerialExecutor.map_indexed(37, f);
        for threads in [1, 2, 4, 8, 64] {
            let out = ThreadPoolExecutor::new(threads).map_indexed(37, f);
            assert_eq!(out, serial);
        }
    }

    #[test]
    fn empty_range() {
        let out: Vec<usize> = ThreadPoolExecutor::new(4).map_indexed(0, |i| i);
        assert!(out.is_empty());
    }
}
