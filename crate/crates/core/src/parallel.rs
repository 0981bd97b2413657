//! Ordered parallel map over trajectory indices.
//!
//! Work runs on the current rayon pool in fixed-size chunks; results are
//! handed to the sink strictly in index order, so any reduction done by the
//! sink is independent of the worker count.

use rayon::prelude::*;

use crate::error::Result;

const CHUNK: usize = 512;

pub fn for_each_ordered<T, F, S>(n: usize, f: F, mut sink: S) -> Result<()>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
    S: FnMut(u64, T) -> Result<()>,
{
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let out: Vec<T> = (start as u64..end as u64).into_par_iter().map(&f).collect::<Result<_>>()?;
        for (i, item) in out.into_iter().enumerate() {
            sink((start + i) as u64, item)?;
        }
        start = end;
    }
    Ok(())
}
