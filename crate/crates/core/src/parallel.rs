//! Worker pool shared by bootstrap and Monte Carlo loops.
//!
//! The worker count comes from the `MSD_WORKERS` environment variable when set to a positive
//! integer, else from the number of available cores. Results never depend on the count:
//! every replication draws from its own seeded stream and outputs are collected in index
//! order.

use std::sync::OnceLock;

use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "MSD_WORKERS";

/// Worker count requested through the environment, if any.
pub fn requested_workers() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// The shared pool, built on first use.
pub fn pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = requested_workers().unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });
        ThreadPoolBuilder::new()
            .num_threads(n)
            .thread_name(|i| format!("msd-worker-{i}"))
            .build()
            .expect("thread pool")
    })
}
