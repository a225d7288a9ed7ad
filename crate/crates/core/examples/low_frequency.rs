//! Low-frequency gap between the field and its zero-frequency limit,
//! against the computable upper bound.

use fracholtz::asymptotics;
use fracholtz::config::{DEFAULT_CONFIG, RunConfig};

fn main() -> fracholtz::Result<()> {
    let mut cfg = RunConfig::from_toml(DEFAULT_CONFIG)?;
    for source in ["linear(1, 1)", "constant(1)"] {
        cfg.medium.source = source.into();
        let scenario = cfg.build_scenario()?;
        let excitations = cfg.excitations(scenario.grid())?;
        let report = asymptotics::low_freq_report(&scenario, &excitations[1].psi, &cfg.asymptotics.values())?;
        let k = &report.constants;
        println!(
            "source {source}: c0 = {:.4}, c1 = {:.4e}, alpha0 = {:.4e}",
            k.c0, k.c1, k.alpha0
        );
        println!("   omega        gap      bound");
        for row in &report.rows {
            let bound = row.bound.map_or("      n/a".to_string(), |b| format!("{b:10.3e}"));
            println!("{:9.3e} {:10.3e} {bound}", row.omega, row.gap);
        }
        println!(
            "slope {:.4}, within bound {}, gap ratio {:.2e}\n",
            report.slope.unwrap_or(f64::NAN),
            report.within_bound(),
            report.decay_ratio().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
