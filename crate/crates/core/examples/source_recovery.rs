//! Recover the zeroth and first frequency coefficients of the source from
//! low-frequency exterior data.

use fracholtz::config::{DEFAULT_CONFIG, RunConfig};
use fracholtz::inverse::{self, SourceRecoveryOptions};

fn main() -> fracholtz::Result<()> {
    let cfg = RunConfig::from_toml(DEFAULT_CONFIG)?;
    let scenario = cfg.build_scenario()?;
    let grid = scenario.grid();
    let excitations = cfg.excitations(grid)?;
    let zero = &excitations[0];
    let records = scenario.sweep(std::slice::from_ref(zero), &cfg.sweep_omegas())?;
    let map = inverse::build_source_map(&scenario, &zero.psi)?;
    let truth = (scenario.source().p0().clone(), scenario.source().p1().clone());

    let options = SourceRecoveryOptions {
        regs: cfg.regs(),
        degree: cfg.frequencies.fit_degree,
        truth: Some(truth),
    };
    let rec = inverse::recover_source(grid, &records, &map, &options)?;
    println!(
        "forward map: rank {} of {}, singular values {:.2e} .. {:.2e}",
        rec.rank,
        map.matrix.ncols(),
        rec.singular_max,
        rec.singular_min
    );
    println!("     reg   error p0   error p1      gcv p0");
    for r in &rec.sweep {
        println!(
            "{:8.1e} {:10.3e} {:10.3e} {:11.3e}",
            r.reg,
            r.error0.unwrap_or(f64::NAN),
            r.error1.unwrap_or(f64::NAN),
            r.gcv0
        );
    }

    let blind = inverse::recover_source(grid, &records, &map, &SourceRecoveryOptions { truth: None, ..options })?;
    println!(
        "GCV choice: reg {:.1e} for p0 and {:.1e} for p1",
        blind.sweep[blind.best0].reg, blind.sweep[blind.best1].reg
    );

    let doubled = scenario.with_q(scenario.q() * 2.0)?;
    let other = inverse::recover_source(
        grid,
        &doubled.sweep(std::slice::from_ref(zero), &cfg.sweep_omegas())?,
        &map,
        &SourceRecoveryOptions { regs: cfg.regs(), degree: cfg.frequencies.fit_degree, truth: None },
    )?;
    let diff = (other.p0_hat().values() - blind.p0_hat().values()).norm() / blind.p0_hat().values().norm();
    println!("p0 estimate change when q doubles: {diff:.2e}");
    Ok(())
}
