//! Command driver behind the `fracholtz` binary.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;

use crate::asymptotics;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forward::{DtnRecord, Excitation, Scenario};
use crate::grid::Grid;
use crate::inverse::{self, RungeApproximation, SourceRecovery, SourceRecoveryOptions};
use crate::io::{self, DtnDataset};
use crate::scenarios;
use crate::selftest;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Forward,
    Dtn,
    Sweep,
    Asym,
    InvertSource,
    InvertPotential,
    Runge,
    Selftest,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Forward,
        Command::Dtn,
        Command::Sweep,
        Command::Asym,
        Command::InvertSource,
        Command::InvertPotential,
        Command::Runge,
        Command::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Dtn => "dtn",
            Command::Sweep => "sweep",
            Command::Asym => "asym",
            Command::InvertSource => "invert-source",
            Command::InvertPotential => "invert-potential",
            Command::Runge => "runge",
            Command::Selftest => "selftest",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown command `{s}`")))
    }
}

/// Command-line adjustments applied on top of a loaded configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub omega_points: Option<usize>,
    pub reg_min: Option<f64>,
    pub reg_max: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, config: &RunConfig) -> Result<RunConfig> {
        let mut c = config.clone();
        if let Some(out) = &self.out {
            c.output_dir = out.display().to_string();
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(n) = self.omega_points {
            c.frequencies.points = n;
        }
        if let Some(lo) = self.reg_min {
            c.regularization.min = lo;
        }
        if let Some(hi) = self.reg_max {
            c.regularization.max = hi;
        }
        c.validate()?;
        Ok(c)
    }
}

/// What a command produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        io::ensure_dir(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        io::write_text(&path, text)?;
        self.files.push(path);
        Ok(())
    }

    fn finish(self, exit_code: i32, summary: String) -> Outcome {
        Outcome {
            exit_code,
            files: self.files,
            summary,
        }
    }
}

fn e(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn run_command(config: &RunConfig, command: Command) -> Result<Outcome> {
    let mut out = Writer::new(&config.output_path())?;
    match command {
        Command::Forward => forward(config, &mut out),
        Command::Dtn => dtn(config, &mut out),
        Command::Sweep => sweep(config, &mut out),
        Command::Asym => asym(config, &mut out),
        Command::InvertSource => invert_source(config, &mut out),
        Command::InvertPotential => invert_potential(config, &mut out),
        Command::Runge => runge(config, &mut out),
        Command::Selftest => self_test(config, &mut out),
    }
    .map(|(code, summary)| out.finish(code, summary))
}

type Step = Result<(i32, String)>;

fn first_nonzero(excitations: &[Excitation]) -> &Excitation {
    excitations.iter().find(|e| e.id != 0).unwrap_or(&excitations[0])
}

#[derive(Serialize)]
struct ForwardHeader {
    fingerprint: String,
    omega: f64,
    excitation_id: usize,
    residual: f64,
    min_eigen_modulus: f64,
    max_eigen_modulus: f64,
}

fn forward(config: &RunConfig, out: &mut Writer) -> Step {
    let scenario = config.build_scenario()?;
    let grid = scenario.grid();
    let omega = config.frequencies.probe;
    let excitations = config.excitations(grid)?;
    let ex = first_nonzero(&excitations);
    let solver = scenario.solver(omega)?;
    let p = scenario.source().eval(omega, scenario.omega0())?;
    let u = solver.solve(&ex.psi, &p)?;
    let residual = solver.residual(&ex.psi, &p, &u);
    let cond = scenario.check_eigen_condition(omega)?;
    let mut csv = String::from("node,x,y,in_omega,in_o1,in_o2,psi,p_re,p_im,u_re,u_im\n");
    for i in 0..grid.len() {
        let x = grid.node(i);
        let flag = |m: &[bool]| u8::from(m[i]);
        let (pv, uv) = (p.values()[i], u.values()[i]);
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{},{}\n",
            e(x[0]),
            e(x[1]),
            flag(grid.omega_mask()),
            flag(grid.o1_mask()),
            flag(grid.o2_mask()),
            e(ex.psi.values()[i].re),
            e(pv.re),
            e(pv.im),
            e(uv.re),
            e(uv.im)
        ));
    }
    out.put("forward.csv", &csv)?;
    let header = ForwardHeader {
        fingerprint: config.fingerprint()?,
        omega,
        excitation_id: ex.id,
        residual,
        min_eigen_modulus: cond.min_modulus,
        max_eigen_modulus: cond.max_modulus,
    };
    out.put("forward.json", &serde_json::to_string_pretty(&header)?)?;
    Ok((0, format!("forward solve at omega = {omega}: relative residual {residual:.3e}")))
}

fn dtn(config: &RunConfig, out: &mut Writer) -> Step {
    let scenario = config.build_scenario()?;
    let grid = scenario.grid();
    let omega = config.frequencies.probe;
    let excitations = config.excitations(grid)?;
    let ex = first_nonzero(&excitations);
    let record = scenario.dtn(omega, ex.id, &ex.psi)?;
    let norm = record.measurement.norm();
    let ds = DtnDataset::new(config.fingerprint()?, grid, vec![record]);
    write_dataset(out, grid, &ds, "dtn")?;
    Ok((0, format!("dtn record for excitation {} at omega = {omega}: norm {norm:.6e}", ex.id)))
}

fn write_dataset(out: &mut Writer, grid: &Grid, ds: &DtnDataset, stem: &str) -> Result<()> {
    out.put(&format!("{stem}.json"), &ds.to_json()?)?;
    out.put(&format!("{stem}.csv"), &ds.to_csv(grid))
}

/// Noisy (when configured) records of every excitation on the sweep grid.
pub fn generate_sweep(config: &RunConfig, scenario: &Scenario) -> Result<DtnDataset> {
    let grid = scenario.grid();
    let excitations = config.excitations(grid)?;
    let mut records = scenario.sweep(&excitations, &config.sweep_omegas())?;
    scenarios::add_noise(&mut records, config.noise.level, config.seed);
    Ok(DtnDataset::new(config.fingerprint()?, grid, records))
}

fn sweep(config: &RunConfig, out: &mut Writer) -> Step {
    let scenario = config.build_scenario()?;
    let ds = generate_sweep(config, &scenario)?;
    write_dataset(out, scenario.grid(), &ds, "sweep")?;
    Ok((
        0,
        format!(
            "{} records ({} excitations x {} frequencies)",
            ds.records.len(),
            ds.excitation_ids().len(),
            config.frequencies.points
        ),
    ))
}

fn asym(config: &RunConfig, out: &mut Writer) -> Step {
    let scenario = config.build_scenario()?;
    let excitations = config.excitations(scenario.grid())?;
    let ex = first_nonzero(&excitations);
    let report = asymptotics::low_freq_report(&scenario, &ex.psi, &config.asymptotics.values())?;
    out.put("asym.csv", &report.to_csv())?;
    out.put("asym.json", &report.header_json()?)?;
    Ok((
        0,
        format!(
            "c0 = {:.4e}, c1 = {:.4e}, alpha0 = {:.4e}, slope = {}, within bound: {}",
            report.constants.c0,
            report.constants.c1,
            report.constants.alpha0,
            report.slope.map_or("n/a".into(), |s| format!("{s:.4}")),
            report.within_bound()
        ),
    ))
}

/// Dataset at `<out>/sweep.json` when it was produced by the same
/// configuration, otherwise a fresh in-process sweep.
fn load_or_sweep(config: &RunConfig, scenario: &Scenario) -> Result<(DtnDataset, &'static str)> {
    let path = config.output_path().join("sweep.json");
    if path.exists() {
        let ds = DtnDataset::read(&path)?;
        if ds.fingerprint == config.fingerprint()? && ds.o2_nodes == scenario.grid().o2_nodes() {
            return Ok((ds, "read sweep.json"));
        }
        return Ok((generate_sweep(config, scenario)?, "sweep.json is stale, regenerated"));
    }
    Ok((generate_sweep(config, scenario)?, "generated in process"))
}

/// Source recovery for every excitation of a dataset; the truth is the
/// configured source.
pub fn recover_sources(
    config: &RunConfig,
    scenario: &Scenario,
    dataset: &DtnDataset,
) -> Result<Vec<(usize, SourceRecovery)>> {
    let grid = scenario.grid();
    let excitations = config.excitations(grid)?;
    let truth = (scenario.source().p0().clone(), scenario.source().p1().clone());
    let options = SourceRecoveryOptions {
        regs: config.regs(),
        degree: config.frequencies.fit_degree,
        truth: Some(truth),
    };
    dataset
        .excitation_ids()
        .into_iter()
        .map(|id| {
            let ex = excitations
                .iter()
                .find(|e| e.id == id)
                .ok_or_else(|| Error::InvalidInput(format!("dataset excitation {id} is not configured")))?;
            let map = inverse::build_source_map(scenario, &ex.psi)?;
            Ok((id, inverse::recover_source(grid, &dataset.excitation(id), &map, &options)?))
        })
        .collect()
}

fn invert_source(config: &RunConfig, out: &mut Writer) -> Step {
    let scenario = config.build_scenario()?;
    let grid = scenario.grid();
    let (dataset, origin) = load_or_sweep(config, &scenario)?;
    let recoveries = recover_sources(config, &scenario, &dataset)?;
    let mut summary = String::from("excitation_id,reg_p0,reg_p1,error_p0,error_p1,residual_p0,residual_p1,rank\n");
    for (id, r) in &recoveries {
        let (b0, b1) = (&r.sweep[r.best0], &r.sweep[r.best1]);
        summary.push_str(&format!(
            "{id},{},{},{},{},{},{},{}\n",
            e(b0.reg),
            e(b1.reg),
            e(b0.error0.unwrap_or(f64::NAN)),
            e(b1.error1.unwrap_or(f64::NAN)),
            e(b0.residual0),
            e(b1.residual1),
            r.rank
        ));
    }
    out.put("invert_source_summary.csv", &summary)?;
    let (id, primary) = recoveries
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidInput("dataset has no records".into()))?;
    out.put("invert_source_sweep.csv", &primary.sweep_csv())?;
    let truth = (scenario.source().p0().clone(), scenario.source().p1().clone());
    let (e0, e1) = (
        primary.sweep[primary.best0].error0.unwrap_or(f64::NAN),
        primary.sweep[primary.best1].error1.unwrap_or(f64::NAN),
    );
    let result = primary.into_result(Some(truth));
    out.put("invert_source.json", &result.to_json(grid)?)?;
    Ok((
        0,
        format!("{origin}; excitation {id}: relative error p0 {e0:.3e}, p1 {e1:.3e}"),
    ))
}

fn invert_potential(config: &RunConfig, out: &mut Writer) -> Step {
    let scenario = config.build_scenario()?;
    let grid = scenario.grid();
    let excitations = config.excitations(grid)?;
    let mut records: Vec<DtnRecord> = scenario.sweep(&excitations, &config.potential.omegas)?;
    scenarios::add_noise(&mut records, config.noise.level, config.seed);
    let truth = scenario.q().clone();
    let rec = inverse::recover_potential(&scenario, &excitations, &records, &config.potential_options())?;
    let nodes = grid.omega_nodes();
    let interior = |v: &DVector<f64>| DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| v[i]));
    let error = (interior(&rec.q_hat) - interior(&truth)).norm() / interior(&truth).norm().max(f64::MIN_POSITIVE);
    let mut csv = String::from("node,x,y,q_hat,q_true\n");
    for &i in nodes {
        let x = grid.node(i);
        csv.push_str(&format!("{i},{},{},{},{}\n", e(x[0]), e(x[1]), e(rec.q_hat[i]), e(truth[i])));
    }
    out.put("invert_potential.csv", &csv)?;
    let mut history = String::from("iteration,objective\n");
    for (k, v) in rec.objective_history.iter().enumerate() {
        history.push_str(&format!("{k},{}\n", e(*v)));
    }
    out.put("invert_potential_history.csv", &history)?;
    let converged = rec.converged;
    let iterations = rec.iterations;
    out.put("invert_potential.json", &rec.into_result(Some(truth)).to_json(grid)?)?;
    let code = if converged { 0 } else { 3 };
    Ok((
        code,
        format!(
            "Gauss-Newton {} after {iterations} iterations; relative error {error:.3e}",
            if converged { "converged" } else { "did not converge" }
        ),
    ))
}

#[derive(Serialize)]
struct RungeHeader {
    fingerprint: String,
    target: &'static str,
    monotone: bool,
    best_reg: f64,
    best_relative_residual: f64,
}

fn runge(config: &RunConfig, out: &mut Writer) -> Step {
    let scenario = config.build_scenario()?;
    let grid = scenario.grid();
    let target = scenarios::gaussian_profile(grid, [0.0, 0.0], num_complex::Complex64::new(1.0, 0.0));
    let runge = RungeApproximation::new(&scenario)?;
    let results = runge.sweep(grid, &target, &config.regs())?;
    let mut csv = String::from("reg,residual,relative_residual,control_norm\n");
    for r in &results {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e(r.reg),
            e(r.residual),
            e(r.relative_residual),
            e(r.psi.l2_norm_over(grid, grid.exterior_nodes()))
        ));
    }
    out.put("runge.csv", &csv)?;
    let best = results
        .iter()
        .min_by(|a, b| a.relative_residual.total_cmp(&b.relative_residual))
        .ok_or_else(|| Error::InvalidInput("empty regularization sweep".into()))?;
    let header = RungeHeader {
        fingerprint: config.fingerprint()?,
        target: "exp(-|x|^2) on omega",
        monotone: inverse::is_monotone_in_reg(&results),
        best_reg: best.reg,
        best_relative_residual: best.relative_residual,
    };
    out.put("runge.json", &serde_json::to_string_pretty(&header)?)?;
    let mut control = String::from("node,x,y,psi_re,psi_im,u_re,u_im\n");
    for i in 0..grid.len() {
        let x = grid.node(i);
        let (p, u) = (best.psi.values()[i], best.u_eps.values()[i]);
        control.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            e(x[0]),
            e(x[1]),
            e(p.re),
            e(p.im),
            e(u.re),
            e(u.im)
        ));
    }
    out.put("runge_control.csv", &control)?;
    Ok((
        0,
        format!(
            "best relative residual {:.3e} at reg {:.1e}; monotone: {}",
            best.relative_residual, best.reg, header.monotone
        ),
    ))
}

fn self_test(config: &RunConfig, out: &mut Writer) -> Step {
    let checks = selftest::run(config)?;
    out.put("selftest.csv", &selftest::to_csv(&checks))?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.passed == Some(false))
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok((0, format!("all {} checks passed", checks.len())))
    } else {
        Ok((3, format!("{} of {} checks failed: {}", failed.len(), checks.len(), failed.join(", "))))
    }
}

