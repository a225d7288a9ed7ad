//! Reconstruction of the source Taylor coefficients and of the potential
//! from exterior measurements, the Runge approximation and the discrete
//! injectivity check.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{self, FreqSource};
use crate::error::{Error, Result};
use crate::forward::{DtnRecord, Excitation, Scenario};
use crate::grid::{Grid, GridFunction};
use crate::linalg::{self, TikhonovSvd};

/// Relative singular-value threshold used for ranks and pseudo-inverses.
pub const RANK_TOL: f64 = 1e-10;
/// Smallest-to-largest singular value ratio below which a warning is raised.
pub const DEFICIENCY_TOL: f64 = 1e-12;

/// Affine map `p -> M p_I + b` from interior sources to the zero-frequency
/// measurement for one exterior datum.
#[derive(Clone, Debug)]
pub struct SourceForwardMap {
    pub psi: GridFunction,
    /// `|O2| x |omega nodes|`.
    pub matrix: DMatrix<f64>,
    pub offset: DVector<Complex64>,
}

impl SourceForwardMap {
    pub fn apply(&self, grid: &Grid, p: &GridFunction) -> DVector<Complex64> {
        let p_i = p.gather(grid.omega_nodes());
        linalg::real_times_complex(&self.matrix, &p_i) + &self.offset
    }
}

pub fn build_source_map(scenario: &Scenario, psi: &GridFunction) -> Result<SourceForwardMap> {
    let solver = scenario.solver(0.0)?;
    let matrix = solver.system().right_solve(&scenario.o2_interior_block());
    let u = solver.solve(psi, &GridFunction::zeros(scenario.grid()))?;
    Ok(SourceForwardMap {
        psi: psi.clone(),
        matrix,
        offset: scenario.measure(&u),
    })
}

/// One regularization level of a source recovery.
#[derive(Clone, Debug)]
pub struct SourceRegResult {
    pub reg: f64,
    pub p0_hat: GridFunction,
    pub p1_hat: GridFunction,
    pub residual0: f64,
    pub residual1: f64,
    pub gcv0: f64,
    pub gcv1: f64,
    /// Relative errors against the truth when it is known.
    pub error0: Option<f64>,
    pub error1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SourceRecoveryOptions {
    pub regs: Vec<f64>,
    pub degree: usize,
    pub truth: Option<(GridFunction, GridFunction)>,
}

impl Default for SourceRecoveryOptions {
    fn default() -> Self {
        SourceRecoveryOptions {
            regs: linalg::logspace(1e-12, 1e-6, 7),
            degree: 2,
            truth: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SourceRecovery {
    pub sweep: Vec<SourceRegResult>,
    /// Indices into `sweep` chosen for `p0` and `p1`.
    pub best0: usize,
    pub best1: usize,
    pub singular_max: f64,
    pub singular_min: f64,
    pub rank: usize,
    pub rank_deficient: bool,
    pub fit_degree: usize,
}

impl SourceRecovery {
    pub fn p0_hat(&self) -> &GridFunction {
        &self.sweep[self.best0].p0_hat
    }

    pub fn p1_hat(&self) -> &GridFunction {
        &self.sweep[self.best1].p1_hat
    }

    pub fn into_result(self, truth: Option<(GridFunction, GridFunction)>) -> RecoveryResult {
        let b0 = &self.sweep[self.best0];
        let b1 = &self.sweep[self.best1];
        RecoveryResult {
            p0_hat: Some(b0.p0_hat.clone()),
            p1_hat: Some(b1.p1_hat.clone()),
            q_hat: None,
            residuals: vec![
                ("p0".into(), b0.residual0),
                ("p1".into(), b1.residual1),
            ],
            regularization: vec![("p0".into(), b0.reg), ("p1".into(), b1.reg)],
            singular_max: Some(self.singular_max),
            singular_min: Some(self.singular_min),
            rank_deficient: self.rank_deficient,
            iterations: None,
            truth_p0: truth.as_ref().map(|t| t.0.clone()),
            truth_p1: truth.map(|t| t.1),
            truth_q: None,
        }
    }

    /// CSV of the sweep: `reg,residual0,residual1,gcv0,gcv1,error0,error1`.
    pub fn sweep_csv(&self) -> String {
        let mut out = String::from("reg,residual0,residual1,gcv0,gcv1,error0,error1\n");
        for r in &self.sweep {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.reg,
                r.residual0,
                r.residual1,
                r.gcv0,
                r.gcv1,
                r.error0.unwrap_or(f64::NAN),
                r.error1.unwrap_or(f64::NAN)
            ));
        }
        out
    }
}

/// Recover `p0` and `p1` from records of one excitation.
///
/// The records are fitted by a polynomial in frequency; the constant and
/// linear coefficients are inverted through the zero-frequency map. With a
/// known truth the best regularization minimizes the error, otherwise GCV.
pub fn recover_source(
    grid: &Grid,
    records: &[DtnRecord],
    map: &SourceForwardMap,
    options: &SourceRecoveryOptions,
) -> Result<SourceRecovery> {
    if options.regs.is_empty() {
        return Err(Error::InvalidInput("empty regularization sweep".into()));
    }
    let fit = asymptotics::taylor_fit(records, options.degree)?;
    if fit.d0().len() != map.matrix.nrows() {
        return Err(Error::InvalidInput(
            "records do not match the source map".into(),
        ));
    }
    let svd = TikhonovSvd::new(&map.matrix, RANK_TOL)?;
    let sv = svd.singular_values();
    let singular_max = sv[0];
    let singular_min = sv[sv.len() - 1];
    let rank = svd.rank();
    let rank_deficient =
        sv.len() < map.matrix.ncols() || singular_min < DEFICIENCY_TOL * singular_max;
    let rhs0 = fit.d0() - &map.offset;
    let rhs1 = fit.d1();
    let nodes = grid.omega_nodes();
    let error = |est: &DVector<Complex64>, truth: &GridFunction| {
        linalg::relative_error(est, &truth.gather(nodes))
    };
    let sweep: Vec<SourceRegResult> = options
        .regs
        .iter()
        .map(|&reg| {
            let x0 = svd.solve_complex(&rhs0, reg);
            let x1 = svd.solve_complex(&rhs1, reg);
            let residual0 = (linalg::real_times_complex(&map.matrix, &x0) - &rhs0).norm();
            let residual1 = (linalg::real_times_complex(&map.matrix, &x1) - &rhs1).norm();
            Ok(SourceRegResult {
                reg,
                error0: options.truth.as_ref().map(|t| error(&x0, &t.0)),
                error1: options.truth.as_ref().map(|t| error(&x1, &t.1)),
                p0_hat: GridFunction::scatter(grid, nodes, &x0)?,
                p1_hat: GridFunction::scatter(grid, nodes, &x1)?,
                residual0,
                residual1,
                gcv0: svd.gcv(&rhs0, reg),
                gcv1: svd.gcv(&rhs1, reg),
            })
        })
        .collect::<Result<_>>()?;
    let argmin = |key: &dyn Fn(&SourceRegResult) -> f64| {
        (0..sweep.len())
            .min_by(|&a, &b| key(&sweep[a]).total_cmp(&key(&sweep[b])))
            .unwrap_or(0)
    };
    let (best0, best1) = if options.truth.is_some() {
        (
            argmin(&|r| r.error0.unwrap_or(f64::INFINITY)),
            argmin(&|r| r.error1.unwrap_or(f64::INFINITY)),
        )
    } else {
        (argmin(&|r| r.gcv0), argmin(&|r| r.gcv1))
    };
    Ok(SourceRecovery {
        sweep,
        best0,
        best1,
        singular_max,
        singular_min,
        rank,
        rank_deficient,
        fit_degree: options.degree,
    })
}

/// Outcome of a reconstruction, serializable with the truth when known.
#[derive(Clone, Debug, Default)]
pub struct RecoveryResult {
    pub p0_hat: Option<GridFunction>,
    pub p1_hat: Option<GridFunction>,
    /// Full-length potential estimate.
    pub q_hat: Option<DVector<f64>>,
    pub residuals: Vec<(String, f64)>,
    pub regularization: Vec<(String, f64)>,
    pub singular_max: Option<f64>,
    pub singular_min: Option<f64>,
    pub rank_deficient: bool,
    pub iterations: Option<usize>,
    pub truth_p0: Option<GridFunction>,
    pub truth_p1: Option<GridFunction>,
    pub truth_q: Option<DVector<f64>>,
}

impl RecoveryResult {
    /// JSON with estimates restricted to the omega nodes, complex values as
    /// separate `re`/`im` arrays.
    pub fn to_json(&self, grid: &Grid) -> Result<String> {
        #[derive(Serialize)]
        struct Complexes {
            re: Vec<f64>,
            im: Vec<f64>,
        }
        #[derive(Serialize)]
        struct Out {
            omega_nodes: Vec<usize>,
            #[serde(skip_serializing_if = "Option::is_none")]
            p0_hat: Option<Complexes>,
            #[serde(skip_serializing_if = "Option::is_none")]
            p1_hat: Option<Complexes>,
            #[serde(skip_serializing_if = "Option::is_none")]
            q_hat: Option<Vec<f64>>,
            #[serde(skip_serializing_if = "Option::is_none")]
            p0_true: Option<Complexes>,
            #[serde(skip_serializing_if = "Option::is_none")]
            p1_true: Option<Complexes>,
            #[serde(skip_serializing_if = "Option::is_none")]
            q_true: Option<Vec<f64>>,
            residuals: BTreeMap<String, f64>,
            regularization: BTreeMap<String, f64>,
            singular_max: Option<f64>,
            singular_min: Option<f64>,
            rank_deficient: bool,
            iterations: Option<usize>,
        }
        let nodes = grid.omega_nodes();
        let complexes = |f: &Option<GridFunction>| {
            f.as_ref().map(|g| {
                let v = g.gather(nodes);
                Complexes {
                    re: v.iter().map(|z| z.re).collect(),
                    im: v.iter().map(|z| z.im).collect(),
                }
            })
        };
        let reals = |q: &Option<DVector<f64>>| q.as_ref().map(|q| nodes.iter().map(|&i| q[i]).collect());
        let out = Out {
            omega_nodes: nodes.to_vec(),
            p0_hat: complexes(&self.p0_hat),
            p1_hat: complexes(&self.p1_hat),
            q_hat: reals(&self.q_hat),
            p0_true: complexes(&self.truth_p0),
            p1_true: complexes(&self.truth_p1),
            q_true: reals(&self.truth_q),
            residuals: self.residuals.iter().cloned().collect(),
            regularization: self.regularization.iter().cloned().collect(),
            singular_max: self.singular_max,
            singular_min: self.singular_min,
            rank_deficient: self.rank_deficient,
            iterations: self.iterations,
        };
        Ok(serde_json::to_string_pretty(&out)?)
    }
}

/// Interior restriction of the solution of `A^s u = 0` in omega with
/// exterior data `psi`: `S = -(A^s)_II^{-1} (A^s)_IE`.
pub fn runge_operator(scenario: &Scenario) -> Result<DMatrix<f64>> {
    let solver = scenario.solver(0.0)?;
    let block = scenario.interior_exterior_block();
    // (K^{-1} X) = (X^T K^{-1})^T for symmetric K
    Ok(-solver.system().right_solve(&block.transpose()).transpose())
}

#[derive(Clone, Debug)]
pub struct RungeResult {
    pub reg: f64,
    /// Control on the exterior nodes (zero inside omega).
    pub psi: GridFunction,
    /// `S psi` on the omega nodes, zero outside.
    pub u_eps: GridFunction,
    /// `||S psi - f||_{L^2(omega)}`.
    pub residual: f64,
    pub relative_residual: f64,
}

/// Exterior control minimizing `||S psi - f||^2 + reg ||psi||^2` in the
/// discrete `L^2` norms.
pub struct RungeApproximation {
    svd: TikhonovSvd,
    operator: DMatrix<f64>,
}

impl RungeApproximation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let operator = runge_operator(scenario)?;
        Ok(RungeApproximation {
            svd: TikhonovSvd::new(&operator, 0.0)?,
            operator,
        })
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn approximate(&self, grid: &Grid, target: &GridFunction, reg: f64) -> Result<RungeResult> {
        if !target.is_supported_on(grid.omega_mask()) {
            return Err(Error::InvalidInput("target must vanish on exterior nodes".into()));
        }
        let f = target.gather(grid.omega_nodes());
        let control = self.svd.solve_complex(&f, reg);
        let image = linalg::real_times_complex(&self.operator, &control);
        let sqrt_vol = grid.cell_volume().sqrt();
        let residual = (&image - &f).norm() * sqrt_vol;
        let target_norm = f.norm() * sqrt_vol;
        Ok(RungeResult {
            reg,
            psi: GridFunction::scatter(grid, grid.exterior_nodes(), &control)?,
            u_eps: GridFunction::scatter(grid, grid.omega_nodes(), &image)?,
            residual,
            relative_residual: if target_norm == 0.0 { residual } else { residual / target_norm },
        })
    }

    /// Results for each `reg`, in the given order.
    pub fn sweep(&self, grid: &Grid, target: &GridFunction, regs: &[f64]) -> Result<Vec<RungeResult>> {
        regs.iter().map(|&r| self.approximate(grid, target, r)).collect()
    }
}

pub fn runge_approximate(scenario: &Scenario, target: &GridFunction, reg: f64) -> Result<RungeResult> {
    RungeApproximation::new(scenario)?.approximate(scenario.grid(), target, reg)
}

/// True when residuals do not increase as `reg` decreases (up to a relative
/// rounding allowance).
pub fn is_monotone_in_reg(results: &[RungeResult]) -> bool {
    let mut sorted: Vec<&RungeResult> = results.iter().collect();
    sorted.sort_by(|a, b| b.reg.total_cmp(&a.reg));
    sorted
        .windows(2)
        .all(|w| w[1].residual <= w[0].residual * (1.0 + 1e-9) + 1e-14)
}

/// Predicted measurements and their Jacobian with respect to the interior
/// potential values.
#[derive(Clone, Debug)]
pub struct ModelEvaluation {
    /// Predictions in record order.
    pub predictions: Vec<DVector<Complex64>>,
    /// One `|O2| x |omega nodes|` complex Jacobian per record.
    pub jacobians: Option<Vec<DMatrix<Complex64>>>,
}

/// Data and known quantities for potential recovery.
pub struct PotentialProblem<'a> {
    pub scenario: &'a Scenario,
    pub excitations: &'a [Excitation],
    pub records: &'a [DtnRecord],
}

#[derive(Clone, Debug)]
pub struct PotentialOptions {
    pub reg: f64,
    /// Interior reference values; zero when `None`.
    pub q_ref: Option<DVector<f64>>,
    pub max_iter: usize,
    pub step_tol: f64,
    pub max_halvings: usize,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        PotentialOptions {
            reg: 1e-10,
            q_ref: None,
            max_iter: 50,
            step_tol: 1e-8,
            max_halvings: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PotentialRecovery {
    /// Full-length estimate, zero outside omega.
    pub q_hat: DVector<f64>,
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub misfit: f64,
    pub reg: f64,
}

impl PotentialRecovery {
    pub fn into_result(self, truth: Option<DVector<f64>>) -> RecoveryResult {
        RecoveryResult {
            q_hat: Some(self.q_hat),
            residuals: vec![("q".into(), self.misfit)],
            regularization: vec![("q".into(), self.reg)],
            iterations: Some(self.iterations),
            truth_q: truth,
            ..RecoveryResult::default()
        }
    }
}

impl PotentialProblem<'_> {
    fn excitation(&self, id: usize) -> Result<&Excitation> {
        self.excitations
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::InvalidInput(format!("no excitation with id {id}")))
    }

    fn validate(&self) -> Result<()> {
        let o2 = self.scenario.grid().o2_nodes().len();
        for r in self.records {
            self.excitation(r.excitation_id)?;
            if r.measurement.len() != o2 {
                return Err(Error::InvalidInput("record length does not match O2".into()));
            }
        }
        if self.records.is_empty() {
            return Err(Error::InvalidInput("no records".into()));
        }
        Ok(())
    }

    fn full_q(&self, q_interior: &DVector<f64>) -> DVector<f64> {
        let grid = self.scenario.grid();
        let mut q = DVector::zeros(grid.len());
        for (&i, &v) in grid.omega_nodes().iter().zip(q_interior.iter()) {
            q[i] = v;
        }
        q
    }

    /// Predictions (and optionally Jacobians) at interior potential values.
    pub fn evaluate(&self, q_interior: &DVector<f64>, with_jacobian: bool) -> Result<ModelEvaluation> {
        let scenario = self.scenario.with_q(self.full_q(q_interior))?;
        let grid = scenario.grid();
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (k, r) in self.records.iter().enumerate() {
            groups.entry(r.omega.to_bits()).or_default().push(k);
        }
        let block = scenario.o2_interior_block();
        let per_group: Vec<Vec<(usize, DVector<Complex64>, Option<DMatrix<Complex64>>)>> = groups
            .into_par_iter()
            .map(|(bits, idx)| {
                let omega = f64::from_bits(bits);
                let solver = scenario.solver(omega)?;
                let p = scenario.source().eval(omega, scenario.omega0())?;
                let gain = with_jacobian.then(|| solver.system().right_solve(&block));
                idx.into_iter()
                    .map(|k| {
                        let psi = &self.excitation(self.records[k].excitation_id)?.psi;
                        let u = solver.solve(psi, &p)?;
                        let pred = scenario.measure(&u);
                        let jac = gain.as_ref().map(|g| {
                            let u_i = u.gather(grid.omega_nodes());
                            let w2 = -omega * omega;
                            DMatrix::from_fn(g.nrows(), g.ncols(), |r, c| u_i[c] * (w2 * g[(r, c)]))
                        });
                        Ok((k, pred, jac))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut flat: Vec<_> = per_group.into_iter().flatten().collect();
        flat.sort_by_key(|t| t.0);
        let mut predictions = Vec::with_capacity(flat.len());
        let mut jacobians = Vec::with_capacity(flat.len());
        for (_, p, j) in flat {
            predictions.push(p);
            if let Some(j) = j {
                jacobians.push(j);
            }
        }
        Ok(ModelEvaluation {
            predictions,
            jacobians: with_jacobian.then_some(jacobians),
        })
    }

    fn misfit_squared(&self, predictions: &[DVector<Complex64>]) -> f64 {
        predictions
            .iter()
            .zip(self.records)
            .map(|(p, r)| (p - &r.measurement).norm_squared())
            .sum()
    }

    fn objective(&self, q: &DVector<f64>, q_ref: &DVector<f64>, reg: f64) -> Result<(f64, f64)> {
        let eval = self.evaluate(q, false)?;
        let misfit = self.misfit_squared(&eval.predictions);
        Ok((misfit + reg * (q - q_ref).norm_squared(), misfit))
    }

    /// Largest relative discrepancy between the Jacobian applied to
    /// `direction` and a central difference with step `eps`.
    pub fn jacobian_check(&self, q: &DVector<f64>, direction: &DVector<f64>, eps: f64) -> Result<f64> {
        let eval = self.evaluate(q, true)?;
        let jac = eval.jacobians.expect("requested jacobians");
        let plus = self.evaluate(&(q + direction * eps), false)?;
        let minus = self.evaluate(&(q - direction * eps), false)?;
        let dir = direction.map(|v| Complex64::new(v, 0.0));
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..jac.len() {
            let analytic = &jac[k] * &dir;
            let fd = (&plus.predictions[k] - &minus.predictions[k]) / Complex64::new(2.0 * eps, 0.0);
            num += (&analytic - &fd).norm_squared();
            den += analytic.norm_squared();
        }
        Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
    }

    /// Gauss-Newton on `sum ||model(q) - data||^2 + reg ||q - q_ref||^2`.
    pub fn recover(&self, options: &PotentialOptions) -> Result<PotentialRecovery> {
        self.validate()?;
        let n = self.scenario.grid().omega_nodes().len();
        let q_ref = options.q_ref.clone().unwrap_or_else(|| DVector::zeros(n));
        if q_ref.len() != n {
            return Err(Error::InvalidInput("reference potential has wrong length".into()));
        }
        let reg = options.reg;
        let data_norm2: f64 = self.records.iter().map(|r| r.measurement.norm_squared()).sum();
        let mut q = q_ref.clone();
        let (mut phi, mut misfit) = self.objective(&q, &q_ref, reg)?;
        let mut history = vec![phi];
        let mut converged = false;
        let mut failures = 0;
        let mut damping = 0.0;
        let mut iterations = 0;
        while iterations < options.max_iter {
            iterations += 1;
            let eval = self.evaluate(&q, true)?;
            let jac = eval.jacobians.expect("requested jacobians");
            let mut normal = DMatrix::<f64>::zeros(n, n);
            let mut grad = DVector::<f64>::zeros(n);
            for (k, j) in jac.iter().enumerate() {
                let r = &eval.predictions[k] - &self.records[k].measurement;
                let (jr, ji) = (j.map(|z| z.re), j.map(|z| z.im));
                let (rr, ri) = linalg::split(&r);
                normal += jr.tr_mul(&jr) + ji.tr_mul(&ji);
                grad += jr.tr_mul(&rr) + ji.tr_mul(&ri);
            }
            grad += (&q - &q_ref) * reg;
            for i in 0..n {
                normal[(i, i)] += reg + damping;
            }
            let step = solve_spd(normal, -grad)?;
            if step.norm() < options.step_tol {
                converged = true;
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=options.max_halvings {
                let trial = &q + &step * t;
                match self.objective(&trial, &q_ref, reg) {
                    Ok((phi_t, misfit_t)) if phi_t <= phi => {
                        accepted = Some((trial, phi_t, misfit_t));
                        break;
                    }
                    Ok(_) | Err(Error::Resonance { .. }) => t *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            match accepted {
                Some((trial, phi_t, misfit_t)) => {
                    let small = (&trial - &q).norm() < options.step_tol;
                    q = trial;
                    phi = phi_t;
                    misfit = misfit_t;
                    history.push(phi);
                    failures = 0;
                    damping = 0.0;
                    if small {
                        converged = true;
                        break;
                    }
                }
                None => {
                    if phi <= 1e-26 * data_norm2.max(f64::MIN_POSITIVE) {
                        converged = true;
                        break;
                    }
                    failures += 1;
                    if failures >= 2 {
                        return Err(Error::Numerical(format!(
                            "Gauss-Newton stalled after {iterations} iterations: objective {phi:.6e}, misfit {misfit:.6e}, last step norm {:.6e}",
                            step.norm()
                        )));
                    }
                    damping = 10.0 * (reg + 1e-12 * normal_scale(&jac));
                }
            }
        }
        Ok(PotentialRecovery {
            q_hat: self.full_q(&q),
            objective_history: history,
            iterations,
            converged,
            misfit: misfit.sqrt(),
            reg,
        })
    }
}

fn normal_scale(jac: &[DMatrix<Complex64>]) -> f64 {
    jac.iter().map(|j| j.norm_squared()).sum()
}

fn solve_spd(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = matrix.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    matrix
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Gauss-Newton system".into()))
}

pub fn recover_potential(
    scenario: &Scenario,
    excitations: &[Excitation],
    records: &[DtnRecord],
    options: &PotentialOptions,
) -> Result<PotentialRecovery> {
    PotentialProblem {
        scenario,
        excitations,
        records,
    }
    .recover(options)
}

#[derive(Clone, Debug, Serialize)]
pub struct InjectivityReport {
    pub rank: usize,
    pub interior_dim: usize,
    pub rows: usize,
    pub singular_values: Vec<f64>,
    /// False when the stacked system has fewer rows than unknowns.
    pub conclusive: bool,
}

impl InjectivityReport {
    pub fn full_rank(&self) -> bool {
        self.rank == self.interior_dim
    }
}

/// Rank of the zero-frequency source-to-measurement operator stacked over
/// the excitations.
pub fn injectivity_check(scenario: &Scenario, excitations: &[GridFunction]) -> Result<InjectivityReport> {
    if excitations.is_empty() {
        return Err(Error::InvalidInput("at least one excitation is required".into()));
    }
    let maps = excitations
        .iter()
        .map(|psi| build_source_map(scenario, psi))
        .collect::<Result<Vec<_>>>()?;
    let cols = maps[0].matrix.ncols();
    let rows: usize = maps.iter().map(|m| m.matrix.nrows()).sum();
    let mut stacked = DMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for m in &maps {
        stacked.view_mut((r0, 0), m.matrix.shape()).copy_from(&m.matrix);
        r0 += m.matrix.nrows();
    }
    let singular_values: Vec<f64> = {
        let mut sv: Vec<f64> = stacked.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    };
    let rank = linalg::numerical_rank(&DVector::from_column_slice(&singular_values), RANK_TOL);
    Ok(InjectivityReport {
        rank,
        interior_dim: cols,
        rows,
        singular_values,
        conclusive: rows >= cols,
    })
}

/// Known source used by the potential recovery, evaluated per frequency.
pub fn known_source_records(
    scenario: &Scenario,
    source: &FreqSource,
    excitations: &[Excitation],
    omegas: &[f64],
) -> Result<Vec<DtnRecord>> {
    scenario.with_source(source.clone())?.sweep(excitations, omegas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracop::{EllipticTensor, SigmaPreset};
    use crate::grid::{GridSpec, RegionSpec};

    fn small() -> Scenario {
        let grid = Grid::build(&GridSpec {
            dim: 1,
            box_halfwidth: 2.0,
            h: 0.1,
            omega: RegionSpec::interval(-1.0, 1.0),
            o1: RegionSpec::interval(-2.5, -1.0),
            o2: RegionSpec::interval(1.0, 2.5),
        })
        .unwrap();
        let sigma = EllipticTensor::from_preset(&grid, &SigmaPreset::Identity, None).unwrap();
        let q = DVector::zeros(grid.len());
        let source = FreqSource::zero(&grid);
        Scenario::new(grid, sigma, 0.5, q, source, 1.0).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_source() {
        let sc = small();
        let psi = GridFunction::zeros(sc.grid());
        let map = build_source_map(&sc, &psi).unwrap();
        assert_eq!(map.offset.norm(), 0.0);
        let recs = sc
            .sweep(&[Excitation { id: 0, psi }], &[0.02, 0.04, 0.06, 0.08])
            .unwrap();
        let rec = recover_source(sc.grid(), &recs, &map, &SourceRecoveryOptions::default()).unwrap();
        assert_eq!(rec.p0_hat().max_abs(), 0.0);
        assert_eq!(rec.p1_hat().max_abs(), 0.0);
    }

    #[test]
    fn runge_zero_target() {
        let sc = small();
        let r = runge_approximate(&sc, &GridFunction::zeros(sc.grid()), 1e-8).unwrap();
        assert_eq!(r.psi.max_abs(), 0.0);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn single_row_is_inconclusive() {
        let grid = Grid::build(&GridSpec {
            dim: 1,
            box_halfwidth: 2.0,
            h: 0.1,
            omega: RegionSpec::interval(-1.0, 1.0),
            o1: RegionSpec::interval(-2.5, -1.0),
            o2: RegionSpec::interval(1.45, 1.55),
        })
        .unwrap();
        let sigma = EllipticTensor::from_preset(&grid, &SigmaPreset::Identity, None).unwrap();
        let sc = Scenario::new(grid.clone(), sigma, 0.5, DVector::zeros(grid.len()), FreqSource::zero(&grid), 1.0)
            .unwrap();
        let rep = injectivity_check(&sc, &[GridFunction::zeros(&grid)]).unwrap();
        assert_eq!(rep.rank, 1);
        assert!(!rep.conclusive);
    }
}
