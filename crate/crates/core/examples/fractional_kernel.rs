//! Spectral fractional powers, the induced nonlocal kernel and the
//! Gagliardo seminorm.

use fracholtz::fracop::{self, EllipticTensor, SeminormRegion, SigmaPreset, SpectralOperator};
use fracholtz::grid::{Grid, GridFunction, GridSpec, RegionSpec};
use num_complex::Complex64;

fn main() -> fracholtz::Result<()> {
    let grid = Grid::build(&GridSpec {
        dim: 2,
        box_halfwidth: 1.0,
        h: 2.0 / 23.0,
        omega: RegionSpec::disc([0.0, 0.0], 0.3),
        o1: RegionSpec::rect([-1.5, -1.5], [-0.5, 1.5]),
        o2: RegionSpec::rect([0.5, -1.5], [1.5, 1.5]),
    })?;
    let sigma = EllipticTensor::from_preset(&grid, &SigmaPreset::Identity, None)?;
    let op = SpectralOperator::assemble(&grid, &sigma)?;
    println!("{} nodes, spectrum [{:.3e}, {:.3e}]", grid.len(), op.eigenvalues()[0], op.eigenvalues()[op.len() - 1]);

    let a = op.matrix();
    for s in [0.3, 0.5, 0.7] {
        let prod = op.power(s)?.matrix() * op.power(1.0 - s)?.matrix();
        println!("s = {s}: |A^s A^(1-s) - A| / |A| = {:.2e}", (prod - a).norm() / a.norm());
    }

    let kernel = fracop::effective_kernel(&op.power(0.5)?, &grid)?;
    let center = grid.linear_index([11, 11]);
    println!("\n  r/h   kernel      C r^-3     ratio");
    for k in 1..=8 {
        let j = grid.linear_index([11 + k, 11]);
        let r = grid.distance(center, j);
        let (kv, reference) = (kernel.get(center, j), kernel.reference(r));
        println!("{k:5} {kv:11.4e} {reference:11.4e} {:7.4}", kv / reference);
    }

    let bump = GridFunction::from_fn(&grid, |x| Complex64::new((-8.0 * (x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
    for s in [0.25, 0.5, 0.75] {
        println!(
            "s = {s}: |v|_H^s(box) = {:.4e}, |v|_H^s(omega) = {:.4e}",
            fracop::hs_seminorm(&grid, &bump, s, SeminormRegion::Box),
            fracop::hs_seminorm(&grid, &bump, s, SeminormRegion::Omega)
        );
    }
    Ok(())
}
