use rand::seq::SliceRandom;

use super::{Coordinate, Extent};
use crate::error::{ensure, Result};
use crate::seed::rng_from_seed;

/// Reference points at multiples of `spacing` from the origin, row-major
/// (x varies fastest). Both room edges are included when they land on the grid.
pub fn make_grid(extent: Extent, spacing: f64) -> Result<Vec<Coordinate>> {
    ensure!(
        extent.width > 0.0 && extent.height > 0.0,
        "extent must be positive, got {}x{}",
        extent.width,
        extent.height
    );
    ensure!(
        spacing > 0.0 && spacing.is_finite(),
        "grid spacing must be positive, got {spacing}"
    );
    let steps = |len: f64| (len / spacing + 1e-9).floor() as usize + 1;
    let (nx, ny) = (steps(extent.width), steps(extent.height));
    let mut points = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            points.push(Coordinate::new(ix as f64 * spacing, iy as f64 * spacing));
        }
    }
    Ok(points)
}

/// Uniformly samples `n_train` points for training; the rest are test
/// points. Both sides keep the input order.
pub fn coordinate_split(
    points: &[Coordinate],
    n_train: usize,
    seed: u64,
) -> Result<(Vec<Coordinate>, Vec<Coordinate>)> {
    ensure!(
        (1..=points.len()).contains(&n_train),
        "n_train must lie in 1..={}, got {n_train}",
        points.len()
    );
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut in_train = vec![false; points.len()];
    for &i in &idx[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = points
        .iter()
        .zip(&in_train)
        .partition(|(_, &t)| t);
    Ok((
        train.into_iter().map(|(p, _)| *p).collect(),
        test.into_iter().map(|(p, _)| *p).collect(),
    ))
}
