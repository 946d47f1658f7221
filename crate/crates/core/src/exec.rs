//! Execution policy for the data-parallel loops.
//!
//! Batch-level work (per-sample convolutions, spectrogram extraction, audio
//! transforms, scoring) goes through these helpers. With the `parallel`
//! feature they fan out over rayon; without it, or with [`Exec::Sequential`],
//! they run in index order. Both paths produce identical results: every
//! reduction is performed sequentially over per-item outputs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Runs `f` on consecutive `chunk`-sized pieces of `data`, passing the chunk index.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        if chunk == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// Like [`Exec::for_each_chunk_mut`] but zips two buffers chunked at their own sizes.
    pub fn for_each_chunk_pair_mut<T, U, F>(
        self,
        a: &mut [T],
        chunk_a: usize,
        b: &mut [U],
        chunk_b: usize,
        f: F,
    ) where
        T: Send,
        U: Send,
        F: Fn(usize, &mut [T], &mut [U]) + Sync + Send,
    {
        if chunk_a == 0 || chunk_b == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            a.par_chunks_mut(chunk_a)
                .zip(b.par_chunks_mut(chunk_b))
                .enumerate()
                .for_each(|(i, (x, y))| f(i, x, y));
            return;
        }
        a.chunks_mut(chunk_a)
            .zip(b.chunks_mut(chunk_b))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
}
