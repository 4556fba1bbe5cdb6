//! Site-parallel execution switch.
//!
//! Every site kernel is written as a gather (each output site reads its
//! neighbours and writes only itself), so parallel and serial runs produce
//! identical bits. Reductions are always serial. `--serial` pins everything to
//! the calling thread.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

static SERIAL: AtomicBool = AtomicBool::new(false);

/// Below this many sites the thread-pool overhead dominates.
const PARALLEL_THRESHOLD: usize = 2048;

pub fn set_serial(serial: bool) {
    SERIAL.store(serial, Ordering::Relaxed);
}

pub fn is_serial() -> bool {
    SERIAL.load(Ordering::Relaxed)
}

/// Fills `out` site by site, `components` values per site.
pub(crate) fn fill_sites<T, F>(out: &mut [T], components: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if components == 0 {
        return;
    }
    let sites = out.len() / components;
    if is_serial() || sites < PARALLEL_THRESHOLD {
        out.chunks_mut(components).enumerate().for_each(|(x, c)| f(x, c));
    } else {
        out.par_chunks_mut(components).enumerate().for_each(|(x, c)| f(x, c));
    }
}
