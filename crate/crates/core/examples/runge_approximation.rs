//! Approximate an interior target by solutions of the homogeneous equation
//! driven by exterior controls.

use fracholtz::config::{DEFAULT_CONFIG, RunConfig};
use fracholtz::inverse::{self, RungeApproximation};
use fracholtz::linalg;
use fracholtz::scenarios;
use num_complex::Complex64;

fn main() -> fracholtz::Result<()> {
    let cfg = RunConfig::from_toml(DEFAULT_CONFIG)?;
    let scenario = cfg.build_scenario()?;
    let grid = scenario.grid();
    let runge = RungeApproximation::new(&scenario)?;
    let target = scenarios::gaussian_profile(grid, [0.0, 0.0], Complex64::new(1.0, 0.0));
    let sweep = runge.sweep(grid, &target, &linalg::logspace(1e-12, 1e-2, 11))?;
    println!("     reg    residual   relative   |control|");
    for r in &sweep {
        println!(
            "{:8.1e} {:10.3e} {:10.3e} {:11.3e}",
            r.reg,
            r.residual,
            r.relative_residual,
            r.psi.l2_norm_over(grid, grid.exterior_nodes())
        );
    }
    println!("monotone in reg: {}", inverse::is_monotone_in_reg(&sweep));
    Ok(())
}
