//! Frequency-dependent sources, the zero-frequency solve, the explicit
//! low-frequency bound and polynomial fits of measurement channels.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{DtnRecord, Scenario};
use crate::fracop::{self};
use crate::grid::{Grid, GridFunction};
use crate::linalg;

/// Remainder term `r(omega)` returning full-length nodal values.
pub type Remainder = Arc<dyn Fn(f64) -> GridFunction + Send + Sync>;

/// `p(x, omega) = p0 + p1 omega + p2 omega^2 + r(x, omega)`.
///
/// Coefficients are stored with the factorials already divided out, so `p2`
/// is half the second derivative at zero.
#[derive(Clone)]
pub struct FreqSource {
    p0: GridFunction,
    p1: GridFunction,
    p2: GridFunction,
    remainder: Option<Remainder>,
    r3: f64,
}

impl fmt::Debug for FreqSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FreqSource")
            .field("p0", &self.p0)
            .field("p1", &self.p1)
            .field("p2", &self.p2)
            .field("has_remainder", &self.remainder.is_some())
            .field("r3", &self.r3)
            .finish()
    }
}

impl FreqSource {
    pub fn polynomial(p0: GridFunction, p1: GridFunction, p2: GridFunction) -> Self {
        FreqSource {
            p0,
            p1,
            p2,
            remainder: None,
            r3: 0.0,
        }
    }

    pub fn zero(grid: &Grid) -> Self {
        let z = GridFunction::zeros(grid);
        Self::polynomial(z.clone(), z.clone(), z)
    }

    /// `p = zeta + eta omega`.
    pub fn affine(zeta: GridFunction, eta: GridFunction) -> Self {
        let z = GridFunction::zeros_like(&zeta);
        Self::polynomial(zeta, eta, z)
    }

    /// Attach a remainder with declared bound `||r(omega)||_{L^2} <= r3 omega^3`.
    pub fn with_remainder(mut self, remainder: Remainder, r3: f64) -> Self {
        self.remainder = Some(remainder);
        self.r3 = r3;
        self
    }

    /// Remainder `r3 omega^3 profile / ||profile||_{L^2(omega)}`, which meets
    /// its bound with equality.
    pub fn with_cubic_remainder(self, grid: &Grid, profile: &GridFunction, r3: f64) -> Result<Self> {
        let norm = profile.l2_norm_over(grid, grid.omega_nodes());
        if norm == 0.0 {
            return Err(Error::InvalidInput("remainder profile is zero".into()));
        }
        let unit = profile.scale(Complex64::new(1.0 / norm, 0.0));
        let remainder: Remainder = Arc::new(move |w: f64| unit.scale(Complex64::new(r3 * w.powi(3), 0.0)));
        Ok(self.with_remainder(remainder, r3))
    }

    pub fn p0(&self) -> &GridFunction {
        &self.p0
    }

    pub fn p1(&self) -> &GridFunction {
        &self.p1
    }

    pub fn p2(&self) -> &GridFunction {
        &self.p2
    }

    pub fn r3(&self) -> f64 {
        self.r3
    }

    pub fn has_remainder(&self) -> bool {
        self.remainder.is_some()
    }

    /// True when `p` does not depend on frequency.
    pub fn is_frequency_constant(&self) -> bool {
        self.remainder.is_none() && self.p1.max_abs() == 0.0 && self.p2.max_abs() == 0.0
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for (name, p) in [("p0", &self.p0), ("p1", &self.p1), ("p2", &self.p2)] {
            if p.len() != grid.len() {
                return Err(Error::InvalidInput(format!("{name} length does not match the grid")));
            }
            if !p.is_supported_on(grid.omega_mask()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must vanish on exterior nodes"
                )));
            }
            if p.values().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} is not finite")));
            }
        }
        if !(self.r3 >= 0.0 && self.r3.is_finite()) {
            return Err(Error::InvalidInput("remainder bound must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// `p(., omega)` for `0 <= omega <= omega0`.
    pub fn eval(&self, omega: f64, omega0: f64) -> Result<GridFunction> {
        if !(0.0..=omega0).contains(&omega) {
            return Err(Error::InvalidInput(format!(
                "frequency {omega} outside [0, {omega0}]"
            )));
        }
        if omega == 0.0 {
            return Ok(self.p0.clone());
        }
        let w = Complex64::new(omega, 0.0);
        let mut out = self.p0.add(&self.p1.scale(w)).add(&self.p2.scale(w * w));
        if let Some(r) = &self.remainder {
            out = out.add(&r(omega));
        }
        Ok(out)
    }

    /// `p(., omega) - p(., 0)`.
    pub fn eval_increment(&self, omega: f64, omega0: f64) -> Result<GridFunction> {
        Ok(self.eval(omega, omega0)?.sub(&self.p0))
    }

    /// Largest `||p - p0 - p1 w - p2 w^2|| / (r3 w^3)` over `omegas`; at most
    /// one when the declared bound holds.
    pub fn remainder_bound_ratio(&self, grid: &Grid, omegas: &[f64], omega0: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &w in omegas {
            if w == 0.0 {
                continue;
            }
            let wc = Complex64::new(w, 0.0);
            let poly = self.p0.add(&self.p1.scale(wc)).add(&self.p2.scale(wc * wc));
            let rest = self.eval(w, omega0)?.sub(&poly);
            let norm = rest.l2_norm_over(grid, grid.omega_nodes());
            if norm == 0.0 {
                continue;
            }
            worst = worst.max(norm / (self.r3 * w.powi(3)));
        }
        Ok(worst)
    }
}

pub fn eval_source(source: &FreqSource, omega: f64, omega0: f64) -> Result<GridFunction> {
    source.eval(omega, omega0)
}

/// `u(., 0)`: the solution with source `p0` and exterior data `psi`.
pub fn solve_zero_frequency(scenario: &Scenario, psi: &GridFunction) -> Result<GridFunction> {
    scenario.solve_exterior_dirichlet(0.0, psi, scenario.source().p0())
}

/// Constants entering the low-frequency bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    pub c0: f64,
    pub c1: f64,
    pub alpha0: f64,
    /// Minimum distance from the box boundary of nodes used as partners.
    pub core_margin: f64,
}

impl AsymptoticConstants {
    /// `2 c0^2 c1 / (1 + c0)^2`, the upper end of the admissible interval.
    pub fn alpha_limit(&self) -> f64 {
        2.0 * self.c0 * self.c0 * self.c1 / (1.0 + self.c0).powi(2)
    }

    pub fn radicand(&self, omega: f64, q_sup: f64) -> f64 {
        self.alpha_limit() - (self.alpha0 + 3.0 * omega * omega * q_sup)
    }
}

/// Nodes at least `margin` from the box boundary, with
/// `margin = min(10 h, distance of the omega nodes from the boundary)`.
fn core_nodes(grid: &Grid) -> (Vec<usize>, f64) {
    let h = grid.h();
    let omega_margin = grid
        .omega_nodes()
        .iter()
        .map(|&i| grid.distance_to_box(i))
        .fold(f64::INFINITY, f64::min);
    let margin = (10.0 * h).min(omega_margin);
    let tol = 1e-9 * h;
    let nodes = (0..grid.len())
        .filter(|&i| grid.distance_to_box(i) >= margin - tol)
        .collect();
    (nodes, margin)
}

/// `c0`, `c1` and `alpha0` for the scenario's operator.
///
/// Pairs run over omega nodes against the core nodes, which keeps the
/// embedding constant positive and excludes the truncation-polluted tail.
pub fn estimate_constants(scenario: &Scenario) -> Result<AsymptoticConstants> {
    let grid = scenario.grid();
    let s = scenario.order();
    if grid.omega_nodes().len() < 2 {
        return Err(Error::InvalidInput(
            "constants need at least two omega nodes".into(),
        ));
    }
    let (core, margin) = core_nodes(grid);
    let kernel = fracop::effective_kernel(scenario.power(), grid)?;
    let pairs = grid
        .omega_nodes()
        .iter()
        .flat_map(|&i| core.iter().filter(move |&&j| j != i).map(move |&j| (i, j)));
    let c1 = 0.5 * kernel.lower_constant(grid, pairs);
    if !(c1 > 0.0) {
        return Err(Error::Numerical(format!(
            "kernel lower constant is not positive ({c1})"
        )));
    }
    let form = fracop::seminorm_quadratic_form(grid, s, grid.omega_nodes(), &core);
    let (values, _) = linalg::symmetric_eigen(&form)?;
    let c0 = (values[0].max(0.0) / grid.cell_volume()).sqrt();
    if !(c0 > 0.0) {
        return Err(Error::Numerical("embedding constant vanished".into()));
    }
    let alpha0 = c0 * c0 * c1 / (1.0 + c0).powi(2);
    Ok(AsymptoticConstants {
        c0,
        c1,
        alpha0,
        core_margin: margin,
    })
}

/// `||v||_{L^2(omega)} + |v|_{H^s(omega)}`.
pub fn omega_norm(grid: &Grid, v: &GridFunction, s: f64) -> f64 {
    v.l2_norm_over(grid, grid.omega_nodes()) + fracop::hs_seminorm_over(grid, v, s, grid.omega_nodes())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticsRow {
    pub omega: f64,
    pub gap: f64,
    /// `None` where the radicand is not positive.
    pub bound: Option<f64>,
    pub radicand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub constants: AsymptoticConstants,
    pub rows: Vec<AsymptoticsRow>,
    /// Least-squares slope of `ln gap` against `ln omega` over rows with
    /// positive gap.
    pub slope: Option<f64>,
}

impl AsymptoticsReport {
    /// True when `gap <= bound` at every usable frequency.
    pub fn within_bound(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.bound.is_none_or(|b| r.gap <= b))
    }

    pub fn usable_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.bound.is_some()).count()
    }

    /// Gap at the smallest frequency divided by the gap at the largest.
    pub fn decay_ratio(&self) -> Option<f64> {
        let lo = self.rows.iter().min_by(|a, b| a.omega.total_cmp(&b.omega))?;
        let hi = self.rows.iter().max_by(|a, b| a.omega.total_cmp(&b.omega))?;
        if hi.gap == 0.0 {
            return Some(0.0);
        }
        Some(lo.gap / hi.gap)
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(0.0, f64::max)
    }

    /// CSV with columns `omega,gap,bound,radicand`; unusable bounds are `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,gap,bound,radicand\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.omega,
                r.gap,
                r.bound.unwrap_or(f64::NAN),
                r.radicand
            ));
        }
        out
    }

    pub fn header_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Header<'a> {
            c0: f64,
            c1: f64,
            alpha0: f64,
            core_margin: f64,
            slope: Option<f64>,
            omegas: Vec<f64>,
            within_bound: bool,
            #[serde(skip_serializing_if = "Option::is_none")]
            note: Option<&'a str>,
        }
        let header = Header {
            c0: self.constants.c0,
            c1: self.constants.c1,
            alpha0: self.constants.alpha0,
            core_margin: self.constants.core_margin,
            slope: self.slope,
            omegas: self.rows.iter().map(|r| r.omega).collect(),
            within_bound: self.within_bound(),
            note: (self.usable_rows() < self.rows.len())
                .then_some("rows with nonpositive radicand carry no bound"),
        };
        Ok(serde_json::to_string_pretty(&header)?)
    }
}

/// Gap and bound at each frequency for exterior data `psi`.
pub fn low_freq_report(
    scenario: &Scenario,
    psi: &GridFunction,
    omegas: &[f64],
) -> Result<AsymptoticsReport> {
    let constants = estimate_constants(scenario)?;
    low_freq_report_with(scenario, psi, omegas, constants)
}

pub fn low_freq_report_with(
    scenario: &Scenario,
    psi: &GridFunction,
    omegas: &[f64],
    constants: AsymptoticConstants,
) -> Result<AsymptoticsReport> {
    let grid = scenario.grid();
    let s = scenario.order();
    let q_sup = scenario.q_sup();
    let omega0 = scenario.omega0();
    let u0 = solve_zero_frequency(scenario, psi)?;
    let u0_l2 = u0.l2_norm_over(grid, grid.omega_nodes());
    let mut rows: Vec<AsymptoticsRow> = omegas
        .par_iter()
        .map(|&omega| {
            let p = scenario.source().eval(omega, omega0)?;
            let u = scenario.solve_exterior_dirichlet(omega, psi, &p)?;
            let gap = omega_norm(grid, &u.sub(&u0), s);
            let p_tilde = p.sub(scenario.source().p0()).l2_norm_over(grid, grid.omega_nodes());
            let radicand = constants.radicand(omega, q_sup);
            let bound = (radicand > 0.0).then(|| {
                let inner = p_tilde * p_tilde / constants.alpha0 + omega * omega * q_sup * u0_l2 * u0_l2;
                inner.sqrt() / radicand.sqrt()
            });
            Ok(AsymptoticsRow {
                omega,
                gap,
                bound,
                radicand,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    let slope = loglog_slope(&rows);
    Ok(AsymptoticsReport {
        constants,
        rows,
        slope,
    })
}

fn loglog_slope(rows: &[AsymptoticsRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.gap > 0.0 && r.omega > 0.0)
        .map(|r| (r.omega.ln(), r.gap.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Polynomial coefficients of each measurement channel in `omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorFit {
    /// `coefficients[k]` multiplies `omega^k`.
    pub coefficients: Vec<DVector<Complex64>>,
    pub omegas: Vec<f64>,
}

impl TaylorFit {
    fn coefficient(&self, k: usize) -> DVector<Complex64> {
        self.coefficients
            .get(k)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.coefficients[0].len()))
    }

    pub fn d0(&self) -> DVector<Complex64> {
        self.coefficient(0)
    }

    pub fn d1(&self) -> DVector<Complex64> {
        self.coefficient(1)
    }

    pub fn d2(&self) -> DVector<Complex64> {
        self.coefficient(2)
    }
}

/// Least-squares fit of degree `degree` to records of a single excitation.
pub fn taylor_fit(records: &[DtnRecord], degree: usize) -> Result<TaylorFit> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidInput("no records to fit".into()))?;
    if records.iter().any(|r| r.excitation_id != first.excitation_id) {
        return Err(Error::InvalidInput("records mix excitations".into()));
    }
    let width = first.measurement.len();
    if records.iter().any(|r| r.measurement.len() != width) {
        return Err(Error::InvalidInput("records have different lengths".into()));
    }
    let mut sorted: Vec<&DtnRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    if sorted.windows(2).any(|w| w[0].omega == w[1].omega) {
        return Err(Error::InvalidInput("duplicate frequencies".into()));
    }
    if sorted.len() < degree + 2 {
        return Err(Error::InvalidInput(format!(
            "degree {degree} needs at least {} frequencies, got {}",
            degree + 2,
            sorted.len()
        )));
    }
    let omegas: Vec<f64> = sorted.iter().map(|r| r.omega).collect();
    let scale = omegas.iter().map(|w| w.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let vander = DMatrix::from_fn(omegas.len(), degree + 1, |i, k| (omegas[i] / scale).powi(k as i32));
    let solver = linalg::TikhonovSvd::new(&vander, 1e-14)?;
    let mut coefficients = vec![DVector::zeros(width); degree + 1];
    for ch in 0..width {
        let data = DVector::from_iterator(sorted.len(), sorted.iter().map(|r| r.measurement[ch]));
        let c = solver.solve_complex(&data, 0.0);
        for k in 0..=degree {
            coefficients[k][ch] = c[k] / scale.powi(k as i32);
        }
    }
    Ok(TaylorFit {
        coefficients,
        omegas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(omega: f64, values: &[Complex64]) -> DtnRecord {
        DtnRecord {
            excitation_id: 0,
            omega,
            measurement: DVector::from_column_slice(values),
        }
    }

    #[test]
    fn affine_fit_is_exact() {
        let a = Complex64::new(1.5, -0.25);
        let b = Complex64::new(-3.0, 2.0);
        let recs: Vec<DtnRecord> = [0.02, 0.04, 0.06, 0.08, 0.1]
            .iter()
            .map(|&w| record(w, &[a + b * w, a]))
            .collect();
        let fit = taylor_fit(&recs, 2).unwrap();
        assert!((fit.d0()[0] - a).norm() < 1e-10);
        assert!((fit.d1()[0] - b).norm() < 1e-10);
        assert!(fit.d2()[0].norm() < 1e-10);
        assert!(fit.d1()[1].norm() < 1e-10 && fit.d2()[1].norm() < 1e-10);
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let one = [Complex64::new(1.0, 0.0)];
        let recs: Vec<DtnRecord> = [0.1, 0.2, 0.3].iter().map(|&w| record(w, &one)).collect();
        assert!(taylor_fit(&recs, 2).is_err());
        let dup: Vec<DtnRecord> = [0.1, 0.2, 0.2, 0.3].iter().map(|&w| record(w, &one)).collect();
        assert!(taylor_fit(&dup, 2).is_err());
        let mut mixed: Vec<DtnRecord> = [0.1, 0.2, 0.3, 0.4].iter().map(|&w| record(w, &one)).collect();
        mixed[1].excitation_id = 7;
        assert!(taylor_fit(&mixed, 2).is_err());
    }
}
