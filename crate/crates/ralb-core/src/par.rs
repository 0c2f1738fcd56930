//! Data-parallel map over fixed sample chunks.
//!
//! Work is always split into the same fixed-size chunks regardless of worker
//! count, and each chunk is a pure function of its index range, so the
//! parallel and sequential paths produce identical bytes. The `parallel`
//! feature selects rayon for [`map_chunks`]; both explicit variants stay
//! available for the benchmark suite.

use std::ops::Range;

/// Fixed chunk width used by attack and evaluation loops. Part of the
/// determinism contract: results must not depend on worker count, so the
/// partition is a constant of the crate, not of the thread pool.
pub const CHUNK: usize = 16;

fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0);
    (0..n.div_ceil(chunk))
        .map(|c| (c * chunk)..((c * chunk + chunk).min(n)))
        .collect()
}

/// Sequential chunked map; chunks processed in index order.
pub fn map_chunks_seq<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> Vec<T> + Sync,
{
    let mut out = Vec::with_capacity(n);
    for r in chunk_ranges(n, chunk) {
        out.extend(f(r));
    }
    out
}

/// Parallel chunked map; output order matches the sequential path.
#[cfg(feature = "parallel")]
pub fn map_chunks_par<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> Vec<T> + Sync,
{
    use rayon::prelude::*;
    chunk_ranges(n, chunk)
        .into_par_iter()
        .map(&f)
        .collect::<Vec<Vec<T>>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Chunked map using rayon when the `parallel` feature is enabled, the
/// sequential fallback otherwise.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> Vec<T> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        map_chunks_par(n, chunk, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_chunks_seq(n, chunk, f)
    }
}

/// Cap the global worker count. Callable once per process, before any
/// parallel work runs; later calls are ignored by rayon. No-op without the
/// `parallel` feature.
pub fn set_workers(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covers_all_indices_in_order() {
        let f = |r: Range<usize>| r.map(|i| i * i).collect::<Vec<_>>();
        let seq = map_chunks_seq(37, 5, f);
        assert_eq!(seq.len(), 37);
        assert_eq!(seq[36], 36 * 36);
        #[cfg(feature = "parallel")]
        {
            let par = map_chunks_par(37, 5, f);
            assert_eq!(seq, par);
        }
    }

    #[test]
    fn empty_input() {
        let out = map_chunks_seq(0, CHUNK, |r| r.map(|i| i).collect::<Vec<_>>());
        assert!(out.is_empty());
    }
}
