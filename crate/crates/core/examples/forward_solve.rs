//! Solve the exterior-value problem once and inspect the solution.

use fracholtz::config::{DEFAULT_CONFIG, RunConfig};

fn main() -> fracholtz::Result<()> {
    let cfg = RunConfig::from_toml(DEFAULT_CONFIG)?;
    let scenario = cfg.build_scenario()?;
    let grid = scenario.grid();
    let excitations = cfg.excitations(grid)?;
    let psi = &excitations[1].psi;

    for omega in [0.0, 0.25, 0.5, 1.0] {
        let cond = scenario.check_eigen_condition(omega)?;
        let solver = scenario.solver(omega)?;
        let p = scenario.source().eval(omega, scenario.omega0())?;
        let u = solver.solve(psi, &p)?;
        let stability = scenario.stability_ratio(omega, 10, cfg.seed)?;
        println!(
            "omega {omega:4.2}: |u|_inf {:.4e}, residual {:.2e}, eigenvalue moduli [{:.3e}, {:.3e}], stability ratio {:.3}",
            u.max_abs(),
            solver.residual(psi, &p, &u),
            cond.min_modulus,
            cond.max_modulus,
            stability.max_ratio
        );
    }

    let u = scenario.solver(0.5)?.solve(psi, &scenario.source().eval(0.5, 1.0)?)?;
    println!("\n     x        Re u        Im u");
    for &i in grid.omega_nodes().iter().step_by(5) {
        let z = u.values()[i];
        println!("{:6.2} {:11.4e} {:11.4e}", grid.node(i)[0], z.re, z.im);
    }
    Ok(())
}
