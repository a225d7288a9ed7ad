//! Preset potentials, sources and excitations, the wave-equation bridge and
//! measurement noise.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::asymptotics::{FreqSource, Remainder};
use crate::error::{Error, Result};
use crate::forward::{DtnRecord, Excitation};
use crate::grid::{Grid, GridFunction, Point};

/// Smallest admissible wave speed.
pub const MIN_WAVE_SPEED: f64 = 1e-6;

fn sq_norm(x: &Point, dim: usize) -> f64 {
    x[..dim].iter().map(|v| v * v).sum()
}

/// Splits `name(a, b, ...)` into the name and its numeric arguments.
fn parse_call(text: &str) -> Result<(String, Vec<f64>)> {
    let text = text.trim();
    let Some(open) = text.find('(') else {
        return Ok((text.to_string(), Vec::new()));
    };
    if !text.ends_with(')') {
        return Err(Error::Config(format!("malformed preset `{text}`")));
    }
    let name = text[..open].trim().to_string();
    let inner = &text[open + 1..text.len() - 1];
    let args = inner
        .split(',')
        .filter(|a| !a.trim().is_empty())
        .map(|a| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{}` in `{text}`", a.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((name, args))
}

fn expect_args(text: &str, args: &[f64], n: usize) -> Result<()> {
    if args.len() != n {
        return Err(Error::Config(format!(
            "`{text}` takes {n} argument(s), got {}",
            args.len()
        )));
    }
    if args.iter().any(|a| !a.is_finite()) {
        return Err(Error::Config(format!("`{text}` has non-finite arguments")));
    }
    Ok(())
}

fn fmt_args(name: &str, args: &[f64]) -> String {
    let parts: Vec<String> = args.iter().map(|a| format!("{a:?}")).collect();
    format!("{name}({})", parts.join(", "))
}

/// Potential presets. All vanish outside omega.
#[derive(Clone, Debug, PartialEq)]
pub enum QPreset {
    Zero,
    Constant(f64),
    /// `a exp(-2 |x|^2)`.
    Bump(f64),
    /// `-1 / c^2` from the wave preset.
    WaveDerived,
}

impl QPreset {
    pub fn parse(text: &str) -> Result<Self> {
        let (name, args) = parse_call(text)?;
        match name.as_str() {
            "zero" => expect_args(text, &args, 0).map(|_| QPreset::Zero),
            "constant" => expect_args(text, &args, 1).map(|_| QPreset::Constant(args[0])),
            "bump" => expect_args(text, &args, 1).map(|_| QPreset::Bump(args[0])),
            "wave-derived" => expect_args(text, &args, 0).map(|_| QPreset::WaveDerived),
            _ => Err(Error::Config(format!("unknown potential preset `{text}`"))),
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            QPreset::Zero => "zero".into(),
            QPreset::Constant(a) => fmt_args("constant", &[*a]),
            QPreset::Bump(a) => fmt_args("bump", &[*a]),
            QPreset::WaveDerived => "wave-derived".into(),
        }
    }

    pub fn values(&self, grid: &Grid) -> DVector<f64> {
        let dim = grid.dim();
        let f = |x: &Point| match self {
            QPreset::Zero => 0.0,
            QPreset::Constant(a) => *a,
            QPreset::Bump(a) => a * (-2.0 * sq_norm(x, dim)).exp(),
            QPreset::WaveDerived => -1.0 / default_wave_speed(x, dim).powi(2),
        };
        DVector::from_iterator(
            grid.len(),
            grid.nodes()
                .iter()
                .zip(grid.omega_mask())
                .map(|(x, &m)| if m { f(x) } else { 0.0 }),
        )
    }
}

/// Smooth profile `exp(-|x - c|^2)` on omega nodes.
pub fn gaussian_profile(grid: &Grid, center: Point, amplitude: Complex64) -> GridFunction {
    let dim = grid.dim();
    GridFunction::from_fn(grid, |x| {
        let d: Point = [x[0] - center[0], x[1] - center[1]];
        amplitude * (-sq_norm(&d, dim)).exp()
    })
    .restricted(grid.omega_mask())
}

/// Smooth non-symmetric profile used for first-order source terms.
fn tilted_profile(grid: &Grid, amplitude: Complex64) -> GridFunction {
    let dim = grid.dim();
    GridFunction::from_fn(grid, |x| amplitude * (1.0 + 0.5 * x[0]) * (-1.5 * sq_norm(x, dim)).exp())
        .restricted(grid.omega_mask())
}

/// Source presets.
#[derive(Clone, Debug, PartialEq)]
pub enum SourcePreset {
    Zero,
    /// `p = a phi`, independent of frequency.
    Constant(f64),
    /// `p = a phi + i b chi omega`.
    Linear(f64, f64),
    /// `p = a phi + i b chi omega + c phi omega^2 + r(omega)`,
    /// `||r|| <= r3 omega^3`.
    Taylor(f64, f64, f64, f64),
    /// Thermoacoustic source from the wave preset.
    Wave,
}

impl SourcePreset {
    pub fn parse(text: &str) -> Result<Self> {
        let (name, args) = parse_call(text)?;
        match name.as_str() {
            "zero" => expect_args(text, &args, 0).map(|_| SourcePreset::Zero),
            "constant" => expect_args(text, &args, 1).map(|_| SourcePreset::Constant(args[0])),
            "linear" => expect_args(text, &args, 2).map(|_| SourcePreset::Linear(args[0], args[1])),
            "taylor" => {
                expect_args(text, &args, 4)?;
                if args[3] < 0.0 {
                    return Err(Error::Config(format!("`{text}`: remainder bound must be nonnegative")));
                }
                Ok(SourcePreset::Taylor(args[0], args[1], args[2], args[3]))
            }
            "wave" => expect_args(text, &args, 0).map(|_| SourcePreset::Wave),
            _ => Err(Error::Config(format!("unknown source preset `{text}`"))),
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            SourcePreset::Zero => "zero".into(),
            SourcePreset::Constant(a) => fmt_args("constant", &[*a]),
            SourcePreset::Linear(a, b) => fmt_args("linear", &[*a, *b]),
            SourcePreset::Taylor(a, b, c, r) => fmt_args("taylor", &[*a, *b, *c, *r]),
            SourcePreset::Wave => "wave".into(),
        }
    }

    pub fn build(&self, grid: &Grid) -> Result<FreqSource> {
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let phi = |a: f64| gaussian_profile(grid, [0.2, 0.0], one * a);
        let chi = |b: f64| tilted_profile(grid, i * b);
        Ok(match *self {
            SourcePreset::Zero => FreqSource::zero(grid),
            SourcePreset::Constant(a) => FreqSource::affine(phi(a), GridFunction::zeros(grid)),
            SourcePreset::Linear(a, b) => FreqSource::affine(phi(a), chi(b)),
            SourcePreset::Taylor(a, b, c, r3) => {
                let base = FreqSource::polynomial(phi(a), chi(b), phi(c));
                if r3 > 0.0 {
                    let profile = gaussian_profile(grid, [-0.3, 0.1], one);
                    base.with_cubic_remainder(grid, &profile, r3)?
                } else {
                    base
                }
            }
            SourcePreset::Wave => wave_bridge(grid, &WaveInputs::preset(grid))?.1,
        })
    }
}

/// Wave speed of the wave preset: `2 / sqrt(1 + 0.5 exp(-|x|^2))`.
pub fn default_wave_speed(x: &Point, dim: usize) -> f64 {
    2.0 / (1.0 + 0.5 * (-sq_norm(x, dim)).exp()).sqrt()
}

/// `kappa(omega) = exp(omega)`, with Taylor coefficients `1, 1, 1/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialKappa;

impl ExponentialKappa {
    pub fn value(&self, omega: f64) -> f64 {
        omega.exp()
    }

    pub fn taylor(&self) -> [f64; 3] {
        [1.0, 1.0, 0.5]
    }

    /// `exp(w) - 1 - w - w^2 / 2`, evaluated without cancellation.
    pub fn remainder(&self, omega: f64) -> f64 {
        if omega.abs() < 0.5 {
            let mut term = omega.powi(3) / 6.0;
            let mut sum: f64 = 0.0;
            let mut k = 3.0;
            while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
                sum += term;
                k += 1.0;
                term *= omega / k;
            }
            sum
        } else {
            omega.exp_m1() - omega - 0.5 * omega * omega
        }
    }

    /// Bound of `remainder(w) / w^3` on `[0, omega0]`.
    pub fn remainder_constant(&self, omega0: f64) -> f64 {
        omega0.exp() / 6.0
    }
}

/// Separable heat term `h(x, omega) = rho(x) kappa(omega)`.
#[derive(Clone, Debug)]
pub struct SeparableHeat {
    pub rho: GridFunction,
    pub kappa: ExponentialKappa,
}

/// Inputs of the thermoacoustic bridge.
#[derive(Clone, Debug)]
pub struct WaveInputs {
    /// Wave speed on every node; only omega nodes are used.
    pub c: DVector<f64>,
    pub f: DVector<f64>,
    pub g: DVector<f64>,
    pub heat: Option<SeparableHeat>,
    pub omega0: f64,
}

impl WaveInputs {
    /// The preset used by the `wave` source and `wave-derived` potential.
    pub fn preset(grid: &Grid) -> Self {
        let dim = grid.dim();
        let on_omega = |f: &dyn Fn(&Point) -> f64| {
            DVector::from_iterator(
                grid.len(),
                grid.nodes()
                    .iter()
                    .zip(grid.omega_mask())
                    .map(|(x, &m)| if m { f(x) } else { 0.0 }),
            )
        };
        let c = DVector::from_iterator(grid.len(), grid.nodes().iter().map(|x| default_wave_speed(x, dim)));
        let f = on_omega(&|x| (1.0 - 0.5 * x[0]) * (-3.0 * sq_norm(x, dim)).exp());
        let g = on_omega(&|x| (-4.0 * sq_norm(x, dim)).exp() * (1.0 + 0.3 * x[0]));
        let rho = gaussian_profile(grid, [-0.25, 0.0], Complex64::new(0.5, 0.0));
        WaveInputs {
            c,
            f,
            g,
            heat: Some(SeparableHeat {
                rho,
                kappa: ExponentialKappa,
            }),
            omega0: 1.0,
        }
    }
}

/// `q = -1/c^2`, `p0 = g/c^2 + h(0)`, `p1 = i f/c^2 + h'(0)`,
/// `p2 = h''(0)/2` and the Taylor remainder of `h`.
pub fn wave_bridge(grid: &Grid, inputs: &WaveInputs) -> Result<(DVector<f64>, FreqSource)> {
    let n = grid.len();
    if inputs.c.len() != n || inputs.f.len() != n || inputs.g.len() != n {
        return Err(Error::InvalidInput("wave inputs do not match the grid".into()));
    }
    let mut q = DVector::zeros(n);
    let mut p0 = DVector::<Complex64>::zeros(n);
    let mut p1 = DVector::<Complex64>::zeros(n);
    for &i in grid.omega_nodes() {
        let c = inputs.c[i];
        if !(c >= MIN_WAVE_SPEED) || !c.is_finite() {
            return Err(Error::InvalidInput(format!(
                "wave speed {c} at node {i} is not bounded away from zero"
            )));
        }
        let c2 = c * c;
        q[i] = -1.0 / c2;
        p0[i] = Complex64::new(inputs.g[i] / c2, 0.0);
        p1[i] = Complex64::new(0.0, inputs.f[i] / c2);
    }
    let mut p0 = GridFunction::from_values(grid, p0)?;
    let mut p1 = GridFunction::from_values(grid, p1)?;
    let mut p2 = GridFunction::zeros(grid);
    let mut source = None;
    if let Some(heat) = &inputs.heat {
        let [k0, k1, k2] = heat.kappa.taylor();
        let rho = heat.rho.restricted(grid.omega_mask());
        p0 = p0.add(&rho.scale(Complex64::new(k0, 0.0)));
        p1 = p1.add(&rho.scale(Complex64::new(k1, 0.0)));
        p2 = rho.scale(Complex64::new(k2, 0.0));
        let kappa = heat.kappa;
        let rho_r = rho.clone();
        let remainder: Remainder = Arc::new(move |w: f64| rho_r.scale(Complex64::new(kappa.remainder(w), 0.0)));
        let r3 = rho.l2_norm_over(grid, grid.omega_nodes()) * kappa.remainder_constant(inputs.omega0);
        source = Some(FreqSource::polynomial(p0.clone(), p1.clone(), p2.clone()).with_remainder(remainder, r3));
    }
    let source = source.unwrap_or_else(|| FreqSource::polynomial(p0, p1, p2));
    Ok((q, source))
}

/// Medium and sources recovered from `q`, `p0`, `p1` when `h = 0`:
/// `c = 1/sqrt(-q)`, `g = p0 c^2`, `f = Im(p1) c^2`.
#[derive(Clone, Debug)]
pub struct WaveRecovery {
    pub c: DVector<f64>,
    pub f: DVector<f64>,
    pub g: DVector<f64>,
}

pub fn invert_wave_bridge(
    grid: &Grid,
    q: &DVector<f64>,
    p0: &GridFunction,
    p1: &GridFunction,
) -> Result<WaveRecovery> {
    let n = grid.len();
    let mut c = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut g = DVector::zeros(n);
    for &i in grid.omega_nodes() {
        if !(q[i] < 0.0) {
            return Err(Error::InvalidInput(format!(
                "potential {} at node {i} does not come from a wave speed",
                q[i]
            )));
        }
        let c2 = -1.0 / q[i];
        c[i] = c2.sqrt();
        g[i] = p0.values()[i].re * c2;
        f[i] = p1.values()[i].im * c2;
    }
    Ok(WaveRecovery { c, f, g })
}

/// `rho = p0 / kappa(0)` for a separable heat term without other sources.
pub fn recover_heat_profile(p0: &GridFunction, kappa0: f64) -> Result<GridFunction> {
    if kappa0 == 0.0 {
        return Err(Error::InvalidInput("kappa(0) must be nonzero".into()));
    }
    Ok(p0.scale(Complex64::new(1.0 / kappa0, 0.0)))
}

/// Specification of an excitation family.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationSpec {
    pub count: usize,
    pub include_zero: bool,
    /// Bump radius.
    pub width: f64,
}

/// `exp(1 - 1 / (1 - |x - c|^2 / r^2))` inside the ball of radius `r`, zero
/// outside. Peak value 1.
pub fn smooth_bump(grid: &Grid, center: Point, radius: f64) -> GridFunction {
    let dim = grid.dim();
    GridFunction::from_fn(grid, |x| {
        let d: Point = [x[0] - center[0], x[1] - center[1]];
        let r2 = sq_norm(&d, dim) / (radius * radius);
        let v = if r2 < 1.0 { (1.0 - 1.0 / (1.0 - r2)).exp() } else { 0.0 };
        Complex64::new(v, 0.0)
    })
}

/// Smooth compactly supported bumps on O1 centered on an evenly spaced
/// selection of O1 nodes. Ids start at 1; the zero excitation has id 0.
pub fn excitations(grid: &Grid, spec: &ExcitationSpec) -> Result<Vec<Excitation>> {
    if !(spec.width > 0.0) {
        return Err(Error::Config("excitation width must be positive".into()));
    }
    let o1 = grid.o1_nodes();
    if spec.count > o1.len() {
        return Err(Error::Config(format!(
            "{} excitations requested but O1 has {} nodes",
            spec.count,
            o1.len()
        )));
    }
    let mut out = Vec::new();
    if spec.include_zero {
        out.push(Excitation {
            id: 0,
            psi: GridFunction::zeros(grid),
        });
    }
    for k in 0..spec.count {
        let pos = ((k as f64 + 0.5) * o1.len() as f64 / spec.count as f64).floor() as usize;
        let center = *grid.node(o1[pos.min(o1.len() - 1)]);
        let psi = smooth_bump(grid, center, spec.width).restricted(grid.o1_mask());
        out.push(Excitation { id: k + 1, psi });
    }
    Ok(out)
}

/// Adds seeded complex Gaussian noise with standard deviation
/// `level * rms(measurement)` to each record.
pub fn add_noise(records: &mut [DtnRecord], level: f64, seed: u64) {
    if level == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in records {
        let n = r.measurement.len().max(1) as f64;
        let rms = r.measurement.norm() / n.sqrt();
        for z in r.measurement.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += Complex64::new(re, im) * (level * rms);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, RegionSpec};

    fn grid() -> Grid {
        Grid::build(&GridSpec {
            dim: 1,
            box_halfwidth: 2.0,
            h: 0.1,
            omega: RegionSpec::interval(-1.0, 1.0),
            o1: RegionSpec::interval(-2.5, -1.0),
            o2: RegionSpec::interval(1.0, 2.5),
        })
        .unwrap()
    }

    #[test]
    fn preset_round_trip() {
        for text in ["zero", "constant(0.5)", "bump(-0.25)", "wave-derived"] {
            let p = QPreset::parse(text).unwrap();
            assert_eq!(QPreset::parse(&p.canonical()).unwrap(), p);
        }
        for text in ["zero", "constant(1)", "linear(1, 2)", "taylor(1,2,3,0.1)", "wave"] {
            let p = SourcePreset::parse(text).unwrap();
            assert_eq!(SourcePreset::parse(&p.canonical()).unwrap(), p);
        }
        assert!(QPreset::parse("lumpy").is_err());
        assert!(SourcePreset::parse("linear(1)").is_err());
        assert!(SourcePreset::parse("taylor(1,2,3,-1)").is_err());
    }

    #[test]
    fn unit_speed_bridge() {
        let g = grid();
        let rho = gaussian_profile(&g, [0.0, 0.0], Complex64::new(1.0, 0.0));
        let inputs = WaveInputs {
            c: DVector::from_element(g.len(), 1.0),
            f: DVector::zeros(g.len()),
            g: DVector::zeros(g.len()),
            heat: Some(SeparableHeat {
                rho: rho.clone(),
                kappa: ExponentialKappa,
            }),
            omega0: 1.0,
        };
        let (q, src) = wave_bridge(&g, &inputs).unwrap();
        for &i in g.omega_nodes() {
            assert_eq!(q[i], -1.0);
        }
        for w in [0.0, 0.3, 0.9] {
            let p = src.eval(w, 1.0).unwrap();
            let expected = rho.scale(Complex64::new(w.exp(), 0.0));
            assert!((p.values() - expected.values()).norm() < 1e-14);
        }
        let rho_hat = recover_heat_profile(src.p0(), 1.0).unwrap();
        assert_eq!(rho_hat, rho);
        let omegas: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        assert!(src.remainder_bound_ratio(&g, &omegas, 1.0).unwrap() <= 1.0);
    }

    #[test]
    fn bridge_inverts_without_heat() {
        let g = grid();
        let mut inputs = WaveInputs::preset(&g);
        inputs.heat = None;
        let (q, src) = wave_bridge(&g, &inputs).unwrap();
        let back = invert_wave_bridge(&g, &q, src.p0(), src.p1()).unwrap();
        for &i in g.omega_nodes() {
            assert!((back.c[i] - inputs.c[i]).abs() < 1e-14);
            assert!((back.f[i] - inputs.f[i]).abs() < 1e-14);
            assert!((back.g[i] - inputs.g[i]).abs() < 1e-14);
        }
        inputs.c[g.omega_nodes()[0]] = 0.0;
        assert!(wave_bridge(&g, &inputs).is_err());
    }

    #[test]
    fn excitations_live_on_o1() {
        let g = grid();
        let ex = excitations(
            &g,
            &ExcitationSpec {
                count: 4,
                include_zero: true,
                width: 0.4,
            },
        )
        .unwrap();
        assert_eq!(ex.len(), 5);
        assert_eq!(ex[0].psi.max_abs(), 0.0);
        for e in &ex[1..] {
            assert!(e.psi.is_supported_on(g.o1_mask()));
            assert!(e.psi.max_abs() > 0.0);
        }
    }

    #[test]
    fn kappa_remainder_is_accurate() {
        let k = ExponentialKappa;
        for w in [1e-4f64, 1e-2, 0.3, 0.7] {
            let exact = w.exp_m1() - w - 0.5 * w * w;
            assert!((k.remainder(w) - exact).abs() <= 1e-12 * exact.abs().max(1e-30) + 1e-17);
        }
    }
}
