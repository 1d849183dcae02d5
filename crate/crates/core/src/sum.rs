//! Compensated summation and the deterministic block reduction used by all
//! pairwise energy sums.
//!
//! Sums over source atoms are split into fixed blocks of [`BLOCK`] items.
//! Each block is accumulated serially with Kahan compensation and the block
//! partials are then combined in block order. The block layout does not
//! depend on the thread count, so serial and parallel runs are bitwise
//! identical.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Number of outer-loop items per reduction block.
pub const BLOCK: usize = 64;

static THREADS: AtomicUsize = AtomicUsize::new(0);

/// Caps internal parallelism. `0` (the default) runs every reduction on the
/// calling thread.
pub fn set_threads(threads: usize) {
    THREADS.store(threads, Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Sums `term(i)` for `i in 0..n` with the blocked compensated scheme.
pub fn block_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let block = |b: usize| -> f64 {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(n);
        (lo..hi).map(&term).collect::<KahanSum>().value()
    };
    let partials = block_partials(blocks, block);
    partials.into_iter().collect::<KahanSum>().value()
}

#[cfg(feature = "parallel")]
fn block_partials<F>(blocks: usize, block: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    use rayon::prelude::*;
    let threads = threads();
    if threads == 0 || blocks < 2 {
        return (0..blocks).map(block).collect();
    }
    match pool(threads) {
        Some(pool) => pool.install(|| (0..blocks).into_par_iter().map(&block).collect()),
        None => (0..blocks).map(block).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn block_partials<F>(blocks: usize, block: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..blocks).map(block).collect()
}

#[cfg(feature = "parallel")]
fn pool(threads: usize) -> Option<&'static rayon::ThreadPool> {
    use std::sync::OnceLock;
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .ok()
    })
    .as_ref()
}
