//! Worker pool sized by `ABYSS_THREADS`.

use rayon::{ThreadPool, ThreadPoolBuilder};

pub const THREADS_ENV: &str = "ABYSS_THREADS";

/// Thread cap from the environment; `None` when unset or unparsable.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n: &usize| *n > 0)
}

pub fn pool() -> ThreadPool {
    let mut b = ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        b = b.num_threads(n);
    }
    b.build().expect("rayon pool")
}
