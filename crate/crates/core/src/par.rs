//! Data-parallel helpers. With the `parallel` feature, [`Execution::Parallel`]
//! runs on the rayon pool; without it (or with [`Execution::Sequential`]) the
//! same closures run in a plain loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    fn parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Calls `f(i, chunk)` for consecutive chunks of `size` elements.
pub fn for_each_chunk<T, F>(exec: Execution, data: &mut [T], size: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if size == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.parallel() {
        data.par_chunks_mut(size).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec.parallel();
    data.chunks_mut(size).enumerate().for_each(|(i, c)| f(i, c));
}

/// Like [`for_each_chunk`] over two arrays chunked in lockstep.
pub fn for_each_chunk2<T, U, F>(
    exec: Execution,
    a: &mut [T],
    sa: usize,
    b: &mut [U],
    sb: usize,
    f: F,
) where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut [U]) + Sync + Send,
{
    if sa == 0 || sb == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.parallel() {
        a.par_chunks_mut(sa)
            .zip(b.par_chunks_mut(sb))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
        return;
    }
    let _ = exec.parallel();
    a.chunks_mut(sa)
        .zip(b.chunks_mut(sb))
        .enumerate()
        .for_each(|(i, (x, y))| f(i, x, y));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        for exec in [Execution::Parallel, Execution::Sequential] {
            let mut v = vec![0usize; 12];
            for_each_chunk(exec, &mut v, 3, |i, c| c.iter_mut().for_each(|x| *x = i));
            assert_eq!(v, [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        }
    }
}
