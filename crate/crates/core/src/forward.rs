//! Exterior-value Dirichlet solver, the eigenvalue-condition check, the
//! stability probe and the exterior DtN map.
//!
//! With `A^s` split into interior (`I`) and exterior (`E`) blocks, the
//! solution with exterior data `psi` and interior source `p` satisfies
//!
//! ```text
//! u_E = psi_E,   ((A^s)_II + omega^2 diag(q_I)) u_I = p_I - (A^s)_IE psi_E
//! ```
//!
//! and the measurement is the raw nodal restriction `(A^s u)|_{O2}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::asymptotics::FreqSource;
use crate::error::{Error, Result};
use crate::fracop::{self, EllipticTensor, FractionalPower, SeminormRegion, SpectralOperator};
use crate::grid::{Grid, GridFunction};
use crate::linalg;

/// Relative threshold below which the interior block counts as singular.
pub const RESONANCE_TOL: f64 = 1e-12;

/// One complete problem instance.
#[derive(Clone, Debug)]
pub struct Scenario {
    grid: Arc<Grid>,
    sigma: Arc<EllipticTensor>,
    s: f64,
    q: DVector<f64>,
    source: FreqSource,
    omega0: f64,
    op: Arc<SpectralOperator>,
    blocks: Arc<Blocks>,
}

/// Pieces of `A^s` reused by every solve.
#[derive(Debug)]
struct Blocks {
    power: FractionalPower,
    interior: DMatrix<f64>,
    interior_exterior: DMatrix<f64>,
    /// Rows of `A^s` on the O2 nodes.
    o2_rows: DMatrix<f64>,
}

impl Scenario {
    /// Assemble the operator and its fractional power. This performs the
    /// dense eigendecomposition and is the expensive step.
    pub fn new(
        grid: Grid,
        sigma: EllipticTensor,
        s: f64,
        q: DVector<f64>,
        source: FreqSource,
        omega0: f64,
    ) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidInput(format!(
                "fractional order must lie in (0, 1), got {s}"
            )));
        }
        let op = SpectralOperator::assemble(&grid, &sigma)?;
        Self::from_operator(Arc::new(grid), Arc::new(sigma), Arc::new(op), s, q, source, omega0)
    }

    /// Build on an already decomposed operator.
    pub fn from_operator(
        grid: Arc<Grid>,
        sigma: Arc<EllipticTensor>,
        op: Arc<SpectralOperator>,
        s: f64,
        q: DVector<f64>,
        source: FreqSource,
        omega0: f64,
    ) -> Result<Self> {
        if !(omega0 > 0.0) {
            return Err(Error::InvalidInput("omega0 must be positive".into()));
        }
        fracop::check_potential(&grid, &q)?;
        source.validate(&grid)?;
        let power = op.power(s)?;
        let interior = linalg::submatrix(power.matrix(), grid.omega_nodes(), grid.omega_nodes());
        let interior_exterior =
            linalg::submatrix(power.matrix(), grid.omega_nodes(), grid.exterior_nodes());
        let all: Vec<usize> = (0..grid.len()).collect();
        let o2_rows = linalg::submatrix(power.matrix(), grid.o2_nodes(), &all);
        Ok(Scenario {
            grid,
            sigma,
            s,
            q,
            source,
            omega0,
            op,
            blocks: Arc::new(Blocks {
                power,
                interior,
                interior_exterior,
                o2_rows,
            }),
        })
    }

    /// Same operator, different potential.
    pub fn with_q(&self, q: DVector<f64>) -> Result<Self> {
        fracop::check_potential(&self.grid, &q)?;
        Ok(Scenario { q, ..self.clone() })
    }

    /// Same operator, different source.
    pub fn with_source(&self, source: FreqSource) -> Result<Self> {
        source.validate(&self.grid)?;
        Ok(Scenario {
            source,
            ..self.clone()
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        self.grid.clone()
    }

    pub fn sigma(&self) -> &EllipticTensor {
        &self.sigma
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn q_sup(&self) -> f64 {
        self.q.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn source(&self) -> &FreqSource {
        &self.source
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn operator(&self) -> &SpectralOperator {
        &self.op
    }

    pub fn operator_arc(&self) -> Arc<SpectralOperator> {
        self.op.clone()
    }

    pub fn sigma_arc(&self) -> Arc<EllipticTensor> {
        self.sigma.clone()
    }

    pub fn power(&self) -> &FractionalPower {
        &self.blocks.power
    }

    /// `(A^s)_{O2, I}`.
    pub fn o2_interior_block(&self) -> DMatrix<f64> {
        let cols: Vec<usize> = self.grid.omega_nodes().to_vec();
        DMatrix::from_fn(self.blocks.o2_rows.nrows(), cols.len(), |r, c| {
            self.blocks.o2_rows[(r, cols[c])]
        })
    }

    pub(crate) fn interior_exterior_block(&self) -> &DMatrix<f64> {
        &self.blocks.interior_exterior
    }

    /// Factor the interior operator at `omega`; fails on resonance.
    pub fn solver(&self, omega: f64) -> Result<FrequencySolver<'_>> {
        let system = InteriorSystem::new(&self.blocks.interior, &self.q_interior(), omega)?;
        Ok(FrequencySolver {
            scenario: self,
            omega,
            system,
        })
    }

    fn q_interior(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.grid.omega_nodes().len(),
            self.grid.omega_nodes().iter().map(|&i| self.q[i]),
        )
    }

    /// Minimum-modulus eigenvalue of `(A^s)_II + omega^2 diag(q)`; the
    /// eigenvalue condition holds iff it exceeds `RESONANCE_TOL * ||block||`.
    pub fn check_eigen_condition(&self, omega: f64) -> Result<EigenCondition> {
        let k = interior_matrix(&self.blocks.interior, &self.q_interior(), omega);
        let (values, _) = linalg::symmetric_eigen(&k)?;
        Ok(EigenCondition::from_eigenvalues(&values))
    }

    pub fn solve_exterior_dirichlet(
        &self,
        omega: f64,
        psi: &GridFunction,
        p: &GridFunction,
    ) -> Result<GridFunction> {
        self.solver(omega)?.solve(psi, p)
    }

    /// DtN record for `psi` with the scenario's source evaluated at `omega`.
    pub fn dtn(&self, omega: f64, excitation_id: usize, psi: &GridFunction) -> Result<DtnRecord> {
        self.solver(omega)?.dtn(excitation_id, psi)
    }

    /// Raw `(A^s u)|_{O2}`.
    pub fn measure(&self, u: &GridFunction) -> DVector<Complex64> {
        linalg::real_times_complex(&self.blocks.o2_rows, u.values())
    }

    /// DtN records for every excitation at every frequency, ordered by
    /// excitation then frequency. Frequencies are processed in parallel.
    pub fn sweep(&self, excitations: &[Excitation], omegas: &[f64]) -> Result<Vec<DtnRecord>> {
        let per_omega: Vec<Vec<DtnRecord>> = omegas
            .par_iter()
            .map(|&omega| {
                let solver = self.solver(omega)?;
                excitations
                    .iter()
                    .map(|e| solver.dtn(e.id, &e.psi))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut records: Vec<DtnRecord> = per_omega.into_iter().flatten().collect();
        records.sort_by(|a, b| {
            a.excitation_id
                .cmp(&b.excitation_id)
                .then(a.omega.total_cmp(&b.omega))
        });
        Ok(records)
    }

    /// Both DtN pairings `B(u_psi, h)` and `B(u_h, psi)` (zero extensions of
    /// the exterior data) and their relative gap.
    pub fn dtn_symmetry_check(
        &self,
        omega: f64,
        psi: &GridFunction,
        h: &GridFunction,
    ) -> Result<SymmetryCheck> {
        let solver = self.solver(omega)?;
        let p = self.source.eval(omega, self.omega0)?;
        let u_psi = solver.solve(psi, &p)?;
        let u_h = solver.solve(h, &p)?;
        let power = self.power();
        let lhs = power.bilinear(&self.grid, &self.q, omega, &u_psi, h)?;
        let rhs = power.bilinear(&self.grid, &self.q, omega, &u_h, psi)?;
        let scale = lhs.norm().max(rhs.norm());
        let gap = if scale == 0.0 {
            0.0
        } else {
            (lhs - rhs).norm() / scale
        };
        Ok(SymmetryCheck { lhs, rhs, gap })
    }

    /// Largest `||u||_{H^s(box)} / (||p||_{L^2(omega)} + ||psi||_{H^s(box)})`
    /// over seeded random smooth trial data.
    pub fn stability_ratio(&self, omega: f64, trials: usize, seed: u64) -> Result<StabilityProbe> {
        let solver = self.solver(omega)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ratios = Vec::with_capacity(trials);
        for _ in 0..trials {
            let (psi, p) = random_trial_data(&self.grid, &mut rng);
            let denom = p.l2_norm_over(&self.grid, self.grid.omega_nodes())
                + fracop::hs_norm(&self.grid, &psi, self.s, SeminormRegion::Box);
            if denom == 0.0 {
                continue;
            }
            let u = solver.solve(&psi, &p)?;
            ratios.push(fracop::hs_norm(&self.grid, &u, self.s, SeminormRegion::Box) / denom);
        }
        let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        Ok(StabilityProbe { max_ratio, ratios })
    }
}

fn interior_matrix(interior: &DMatrix<f64>, q: &DVector<f64>, omega: f64) -> DMatrix<f64> {
    let mut k = interior.clone();
    let w2 = omega * omega;
    for (i, &qi) in q.iter().enumerate() {
        k[(i, i)] += w2 * qi;
    }
    k
}

/// Result of the eigenvalue-condition check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenCondition {
    pub min_modulus: f64,
    pub max_modulus: f64,
}

impl EigenCondition {
    fn from_eigenvalues(values: &DVector<f64>) -> Self {
        let min_modulus = values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let max_modulus = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        EigenCondition {
            min_modulus,
            max_modulus,
        }
    }

    pub fn holds(&self) -> bool {
        self.min_modulus > RESONANCE_TOL * self.max_modulus
    }
}

/// Symmetric eigendecomposition of the interior operator at one frequency.
#[derive(Clone, Debug)]
pub struct InteriorSystem {
    omega: f64,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl InteriorSystem {
    fn new(interior: &DMatrix<f64>, q: &DVector<f64>, omega: f64) -> Result<Self> {
        let k = interior_matrix(interior, q, omega);
        let (eigenvalues, eigenvectors) = linalg::symmetric_eigen(&k)?;
        let cond = EigenCondition::from_eigenvalues(&eigenvalues);
        if !cond.holds() {
            return Err(Error::Resonance {
                omega,
                min_modulus: cond.min_modulus,
            });
        }
        Ok(InteriorSystem {
            omega,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn solve(&self, rhs: &DVector<Complex64>) -> DVector<Complex64> {
        let vt = self.eigenvectors.transpose();
        let apply = |b: DVector<f64>| {
            let mut c = &vt * b;
            for (k, ck) in c.iter_mut().enumerate() {
                *ck /= self.eigenvalues[k];
            }
            &self.eigenvectors * c
        };
        let (re, im) = linalg::split(rhs);
        linalg::complexify(&apply(re), &apply(im))
    }

    /// `X K^{-1}` for a real matrix `X` with interior-sized columns.
    pub fn right_solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut xv = x * &self.eigenvectors;
        for (k, mut col) in xv.column_iter_mut().enumerate() {
            col /= self.eigenvalues[k];
        }
        xv * self.eigenvectors.transpose()
    }
}

/// A scenario with its interior operator factored at one frequency.
pub struct FrequencySolver<'a> {
    scenario: &'a Scenario,
    omega: f64,
    system: InteriorSystem,
}

impl FrequencySolver<'_> {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn system(&self) -> &InteriorSystem {
        &self.system
    }

    pub fn solve(&self, psi: &GridFunction, p: &GridFunction) -> Result<GridFunction> {
        let grid = self.scenario.grid();
        if psi.len() != grid.len() || p.len() != grid.len() {
            return Err(Error::InvalidInput("data length does not match the grid".into()));
        }
        if !psi.is_supported_on(grid.exterior_mask()) {
            return Err(Error::InvalidInput(
                "exterior data must vanish on omega nodes".into(),
            ));
        }
        if !p.is_supported_on(grid.omega_mask()) {
            return Err(Error::InvalidInput(
                "interior source must vanish on exterior nodes".into(),
            ));
        }
        let rhs = self.interior_rhs(psi, p);
        let u_i = self.system.solve(&rhs);
        let mut values = psi.values().clone();
        for (&i, v) in grid.omega_nodes().iter().zip(u_i.iter()) {
            values[i] = *v;
        }
        GridFunction::from_values(grid, values)
    }

    fn interior_rhs(&self, psi: &GridFunction, p: &GridFunction) -> DVector<Complex64> {
        let grid = self.scenario.grid();
        let psi_e = psi.gather(grid.exterior_nodes());
        p.gather(grid.omega_nodes())
            - linalg::real_times_complex(self.scenario.interior_exterior_block(), &psi_e)
    }

    /// Relative residual of the interior linear system for a candidate `u`.
    pub fn residual(&self, psi: &GridFunction, p: &GridFunction, u: &GridFunction) -> f64 {
        let grid = self.scenario.grid();
        let rhs = self.interior_rhs(psi, p);
        let u_i = u.gather(grid.omega_nodes());
        let k = interior_matrix(
            &self.scenario.blocks.interior,
            &self.scenario.q_interior(),
            self.omega,
        );
        let r = linalg::real_times_complex(&k, &u_i) - &rhs;
        let scale = rhs.norm().max(f64::MIN_POSITIVE);
        r.norm() / scale
    }

    pub fn dtn(&self, excitation_id: usize, psi: &GridFunction) -> Result<DtnRecord> {
        let s = self.scenario;
        let p = s.source.eval(self.omega, s.omega0)?;
        let u = self.solve(psi, &p)?;
        Ok(DtnRecord {
            excitation_id,
            omega: self.omega,
            measurement: s.measure(&u),
        })
    }
}

/// Exterior Dirichlet data with an identifier.
#[derive(Clone, Debug)]
pub struct Excitation {
    pub id: usize,
    pub psi: GridFunction,
}

/// One exterior measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct DtnRecord {
    pub excitation_id: usize,
    pub omega: f64,
    /// `(A^s u)` at the O2 nodes, in grid order.
    pub measurement: DVector<Complex64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SymmetryCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct StabilityProbe {
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Random smooth trial pair: `psi` on exterior nodes and `p` on omega nodes,
/// each a random combination of low box sine modes.
pub fn random_trial_data(grid: &Grid, rng: &mut ChaCha8Rng) -> (GridFunction, GridFunction) {
    let psi = random_smooth(grid, rng).restricted(grid.exterior_mask());
    let p = random_smooth(grid, rng).restricted(grid.omega_mask());
    (psi, p)
}

/// Random combination of the first four box sine modes per axis.
pub fn random_smooth(grid: &Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    const MODES: usize = 4;
    let l = grid.box_halfwidth();
    let nterms = if grid.dim() == 1 { MODES } else { MODES * MODES };
    let coeffs: Vec<Complex64> = (0..nterms)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect();
    let mode = |k: usize, x: f64| (k as f64 * std::f64::consts::PI * (x + l) / (2.0 * l)).sin();
    GridFunction::from_fn(grid, |x| {
        if grid.dim() == 1 {
            (0..MODES).map(|k| coeffs[k] * mode(k + 1, x[0])).sum()
        } else {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..MODES {
                for b in 0..MODES {
                    acc += coeffs[a * MODES + b] * mode(a + 1, x[0]) * mode(b + 1, x[1]);
                }
            }
            acc
        }
    })
}
