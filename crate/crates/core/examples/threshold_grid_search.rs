//! Chooses the two confidence thresholds from a validation run under a
//! bound on auto-accepted errors.
//!
//! ```bash
//! cargo run --release --example threshold_grid_search
//! ```

use simtext::workflow::{grid_points, grid_search, Grid, DEFAULT_TARGET_HCFN};

fn main() -> anyhow::Result<()> {
    // (model confidence, model label correct) for a validation set where
    // confident predictions are mostly right
    let validation: Vec<(f64, bool)> = (0..400)
        .map(|i| {
            let c = 0.4 + 0.6 * (i as f64 / 399.0);
            let correct = c > 0.9 || i % 5 != 0;
            (c, correct)
        })
        .collect();

    let grid = Grid::default();
    println!("{} grid points per threshold", grid_points(grid)?.len());
    for target in [DEFAULT_TARGET_HCFN, 0.05] {
        let r = grid_search(&validation, grid, target)?;
        println!(
            "target {target}: theta1 {:.2}, theta2 {:.2}, efficiency {:.3}, HCFN {:.4}, feasible {} ({} pairs scored)",
            r.thresholds.theta1,
            r.thresholds.theta2,
            r.metrics.efficiency,
            r.metrics.hcfn.unwrap_or(0.0),
            r.feasible,
            r.evaluated
        );
    }
    Ok(())
}
