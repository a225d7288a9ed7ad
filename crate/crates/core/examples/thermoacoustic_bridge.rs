//! Map wave-equation data onto the fractional model, recover the sources
//! and the potential from exterior data, and map back to the wave speed.

use fracholtz::config::{DEFAULT_CONFIG, RunConfig};
use fracholtz::forward::Scenario;
use fracholtz::fracop::{EllipticTensor, SigmaPreset};
use fracholtz::inverse::{self, SourceRecoveryOptions};
use fracholtz::scenarios::{self, WaveInputs};

fn main() -> fracholtz::Result<()> {
    let cfg = RunConfig::from_toml(DEFAULT_CONFIG)?;
    let grid = cfg.build_grid()?;
    let inputs = WaveInputs {
        heat: None,
        ..WaveInputs::preset(&grid)
    };
    let (q, source) = scenarios::wave_bridge(&grid, &inputs)?;
    let sigma = EllipticTensor::from_preset(&grid, &SigmaPreset::Identity, None)?;
    let scenario = Scenario::new(grid, sigma, cfg.operator.s, q, source, inputs.omega0)?;
    let grid = scenario.grid();
    let excitations = cfg.excitations(grid)?;

    let zero = &excitations[0];
    let low = scenario.sweep(std::slice::from_ref(zero), &cfg.sweep_omegas())?;
    let map = inverse::build_source_map(&scenario, &zero.psi)?;
    let options = SourceRecoveryOptions {
        regs: cfg.regs(),
        degree: cfg.frequencies.fit_degree,
        truth: None,
    };
    let sources = inverse::recover_source(grid, &low, &map, &options)?;

    let records = scenario.sweep(&excitations, &cfg.potential.omegas)?;
    let potential = inverse::recover_potential(&scenario, &excitations, &records, &cfg.potential_options())?;

    let recovered = scenarios::invert_wave_bridge(grid, &potential.q_hat, sources.p0_hat(), sources.p1_hat())?;
    println!("     x    c_true     c_hat    g_true     g_hat    f_true     f_hat");
    for &i in grid.omega_nodes().iter().step_by(5) {
        println!(
            "{:6.2} {:9.4} {:9.4} {:9.4} {:9.4} {:9.4} {:9.4}",
            grid.node(i)[0],
            inputs.c[i],
            recovered.c[i],
            inputs.g[i],
            recovered.g[i],
            inputs.f[i],
            recovered.f[i]
        );
    }

    let heated = WaveInputs::preset(grid);
    let heat = heated.heat.as_ref().expect("preset carries a heat term");
    let only_heat = WaveInputs {
        f: heated.f.map(|_| 0.0),
        g: heated.g.map(|_| 0.0),
        ..heated.clone()
    };
    let (_, heat_source) = scenarios::wave_bridge(grid, &only_heat)?;
    let rho = scenarios::recover_heat_profile(heat_source.p0(), heat.kappa.value(0.0))?;
    let err = (rho.values() - heat.rho.values()).norm() / heat.rho.values().norm();
    println!("heat profile from p0 / kappa(0): relative error {err:.2e}");
    Ok(())
}
