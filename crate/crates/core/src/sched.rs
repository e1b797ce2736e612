//! Schedulers for the `par` construct.

use thiserror::Error;

/// Runs two closures, possibly concurrently, and returns both results.
pub trait Scheduler: Sync {
    fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send;

    fn threads(&self) -> usize;
}

/// Deterministic scheduler: left side first, then right side, on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Scheduler for Sequential {
    fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        let ra = a();
        (ra, b())
    }

    fn threads(&self) -> usize {
        1
    }
}

#[derive(Debug, Error)]
#[error("could not start thread pool: {0}")]
pub struct PoolError(#[from] rayon::ThreadPoolBuildError);

/// Work-stealing pool. A blocked `join` keeps executing other tasks, so
/// nested forks cannot deadlock.
pub struct ThreadPool {
    pool: rayon::ThreadPool,
    threads: usize,
}

/// Worker stack size. Evaluation recurses on the program structure.
const WORKER_STACK: usize = 256 << 20;

impl ThreadPool {
    pub fn new(threads: usize) -> Result<Self, PoolError> {
        let threads = threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).stack_size(WORKER_STACK).build()?;
        Ok(ThreadPool { pool, threads })
    }

    /// Runs `f` on one of the pool's workers.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl Scheduler for ThreadPool {
    fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        self.pool.install(|| rayon::join(a, b))
    }

    fn threads(&self) -> usize {
        self.threads
    }
}

/// Stack size for [`with_big_stack`]. Only touched pages are committed.
pub const BIG_STACK: usize = 1 << 30;

/// Runs `f` on a fresh thread with a [`BIG_STACK`]-sized stack. Evaluating
/// non-tail recursion over long lists (and resolving the matching staged
/// closures) recurses once per element.
pub fn with_big_stack<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(BIG_STACK)
            .spawn_scoped(s, f)
            .expect("spawn evaluation thread")
            .join()
            .unwrap_or_else(|p| std::panic::resume_unwind(p))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fib<S: Scheduler>(s: &S, n: u32) -> u64 {
        if n < 2 {
            return n as u64;
        }
        let (a, b) = s.join(|| fib(s, n - 1), || fib(s, n - 2));
        a + b
    }

    #[test]
    fn nested_forks_complete() {
        let pool = ThreadPool::new(4).unwrap();
        assert_eq!(fib(&pool, 20), 6765);
        assert_eq!(fib(&Sequential, 20), 6765);
    }

    #[test]
    fn sequential_runs_left_first() {
        let log = std::sync::Mutex::new(Vec::new());
        Sequential.join(|| log.lock().unwrap().push('l'), || log.lock().unwrap().push('r'));
        assert_eq!(*log.lock().unwrap(), vec!['l', 'r']);
    }
}
