//! Gauss-Newton reconstruction of the potential with a known source.

use fracholtz::config::{DEFAULT_CONFIG, RunConfig};
use fracholtz::inverse;
use nalgebra::DVector;

fn main() -> fracholtz::Result<()> {
    let cfg = RunConfig::from_toml(DEFAULT_CONFIG)?;
    let scenario = cfg.build_scenario()?;
    let grid = scenario.grid();
    let excitations = cfg.excitations(grid)?;
    let records = scenario.sweep(&excitations, &cfg.potential.omegas)?;

    let rec = inverse::recover_potential(&scenario, &excitations, &records, &cfg.potential_options())?;
    let nodes = grid.omega_nodes();
    let interior = |v: &DVector<f64>| DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| v[i]));
    let (est, truth) = (interior(&rec.q_hat), interior(scenario.q()));
    println!(
        "{} iterations, converged {}, misfit {:.3e}, relative error {:.3e}",
        rec.iterations,
        rec.converged,
        rec.misfit,
        (&est - &truth).norm() / truth.norm()
    );
    println!("     x     q_hat    q_true");
    for (k, &i) in nodes.iter().enumerate().step_by(4) {
        println!("{:6.2} {:9.5} {:9.5}", grid.node(i)[0], est[k], truth[k]);
    }
    Ok(())
}
