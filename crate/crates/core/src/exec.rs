//! Execution mode switch for the data-parallel loops.
//!
//! With the `parallel` feature (on by default) the independent-job loops
//! (Gram rows, experiment cells, SVM one-vs-rest problems) run on rayon.
//! Without it, or with [`Exec::Sequential`], they run in order on the
//! calling thread. Results are always collected in index order, so both
//! modes produce identical outputs.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

const UNSET: u8 = 0;
const SEQ: u8 = 1;
const PAR: u8 = 2;

static DEFAULT_MODE: AtomicU8 = AtomicU8::new(UNSET);

impl Exec {
    /// Mode used by functions that do not take an explicit [`Exec`].
    pub fn current() -> Exec {
        match DEFAULT_MODE.load(Ordering::Relaxed) {
            SEQ => Exec::Sequential,
            PAR => Exec::Parallel,
            _ => {
                if cfg!(feature = "parallel") {
                    Exec::Parallel
                } else {
                    Exec::Sequential
                }
            }
        }
    }

    /// Overrides the process-wide default mode.
    pub fn set_default(mode: Exec) {
        let v = match mode {
            Exec::Sequential => SEQ,
            Exec::Parallel => PAR,
        };
        DEFAULT_MODE.store(v, Ordering::Relaxed);
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `0..n`, collecting results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Runs `f` inside a pool capped at `jobs` threads. `jobs == 1` or a
    /// sequential build runs `f` directly.
    pub fn with_jobs<T, F>(jobs: Option<usize>, f: F) -> T
    where
        T: Send,
        F: FnOnce() -> T + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(n) = jobs {
            if n >= 1 {
                if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    return pool.install(f);
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        let _ = jobs;
        f()
    }
}

/// Mixes a root seed with a list of labels into a child seed.
///
/// Stable across platforms and compiler versions (FNV-1a over the label
/// bytes folded through splitmix64).
pub fn derive_seed(root: u64, parts: &[&str]) -> u64 {
    let mut h = splitmix64(root);
    for part in parts {
        let mut fnv: u64 = 0xcbf2_9ce4_8422_2325;
        for b in part.as_bytes() {
            fnv ^= u64::from(*b);
            fnv = fnv.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h = splitmix64(h ^ fnv);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
