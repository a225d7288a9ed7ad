//! Numerical rank of the zero-frequency source-to-measurement map.

use fracholtz::config::{DEFAULT_CONFIG, RunConfig};
use fracholtz::grid::GridFunction;
use fracholtz::inverse;

fn main() -> fracholtz::Result<()> {
    let cfg = RunConfig::from_toml(DEFAULT_CONFIG)?;
    let scenario = cfg.build_scenario()?;
    let grid = scenario.grid();
    let single = inverse::injectivity_check(&scenario, &[GridFunction::zeros(grid)])?;
    println!(
        "single datum: rank {} of {} ({} rows), full rank {}",
        single.rank,
        single.interior_dim,
        single.rows,
        single.full_rank()
    );
    for (k, s) in single.singular_values.iter().enumerate().take(24) {
        println!("  sigma_{k:<2} {s:.3e}");
    }

    let psis: Vec<GridFunction> = cfg.excitations(grid)?.into_iter().map(|e| e.psi).collect();
    let stacked = inverse::injectivity_check(&scenario, &psis)?;
    println!(
        "{} data stacked: rank {} of {} ({} rows)",
        psis.len(),
        stacked.rank,
        stacked.interior_dim,
        stacked.rows
    );
    Ok(())
}
