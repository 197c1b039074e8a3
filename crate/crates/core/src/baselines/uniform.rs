use std::time::Instant;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::selection::SelectionResult;

/// `n` distinct indices out of `0..total`, drawn by a partial Fisher–Yates
/// shuffle.
pub fn uniform_select(total: usize, n: usize, seed: u64) -> Result<SelectionResult> {
    if n > total {
        return Err(Error::invalid(format!(
            "budget {n} exceeds the {total} available sentences"
        )));
    }
    let start = Instant::now();
    let mut rng = stream(seed);
    let mut perm: Vec<usize> = (0..total).collect();
    for i in 0..n {
        let j = rng.random_range(i..total);
        perm.swap(i, j);
    }
    perm.truncate(n);
    Ok(SelectionResult {
        method: "uniform".into(),
        seed,
        n,
        sigma0: None,
        batch_size: None,
        chosen: perm,
        round_gains: Vec::new(),
        gain_evaluations: 0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        weights: None,
    })
}
