use std::f64::consts::PI;
use std::sync::OnceLock;

use fracholtz::config::{DEFAULT_CONFIG, RunConfig};
use fracholtz::forward::{DtnRecord, Scenario};
use fracholtz::fracop::{self, EllipticTensor, SigmaPreset, SpectralOperator};
use fracholtz::grid::{Grid, GridFunction, GridSpec, RegionSpec};
use fracholtz::inverse::{self, RungeApproximation};
use fracholtz::io::DtnDataset;
use fracholtz::linalg::{self, TikhonovSvd};
use fracholtz::scenarios::{QPreset, SourcePreset};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn scenario() -> &'static Scenario {
    static SCENARIO: OnceLock<Scenario> = OnceLock::new();
    SCENARIO.get_or_init(|| RunConfig::from_toml(DEFAULT_CONFIG).unwrap().build_scenario().unwrap())
}

fn small_grid() -> Grid {
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

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len)
}

fn on_mask(grid: &Grid, mask: &[bool], raw: &[(f64, f64)]) -> GridFunction {
    let mut k = 0;
    GridFunction::from_fn(grid, |_| {
        let (a, b) = raw[k % raw.len()];
        k += 1;
        Complex64::new(a, b)
    })
    .restricted(mask)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let inner: f64 = (1..panels)
        .map(|k| if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h))
        .sum();
    (f(a) + inner + f(b)) * h / 3.0
}

/// `2 int_0^inf (1 - cos x) x^{-1-2s} dx`, whose reciprocal is `C(1, s)`.
fn one_dimensional_symbol_integral(s: f64) -> f64 {
    let p = 1.0 + 2.0 * s;
    let eps = 1e-4f64;
    // 1 - cos x = x^2/2 - x^4/24 + ... on [0, eps]
    let near = 0.5 * eps.powf(3.0 - p) / (3.0 - p) - eps.powf(5.0 - p) / (24.0 * (5.0 - p));
    let g = |x: f64| (1.0 - x.cos()) * x.powf(-p);
    let graded = simpson(|u: f64| g(u.exp()) * u.exp(), eps.ln(), 0.0, 2_000);
    let top = 2.0 * PI * 400.0;
    let body = simpson(g, 1.0, top, 400_000);
    // sin(top) = 0 and cos(top) = 1
    let tail = top.powf(1.0 - p) / (p - 1.0) - p * top.powf(-p - 1.0);
    2.0 * (near + graded + body + tail)
}

#[test]
fn kernel_constant_matches_quadrature() {
    for s in [0.3, 0.5, 0.7] {
        let oracle = 1.0 / one_dimensional_symbol_integral(s);
        let c = fracop::fractional_laplacian_constant(1, s);
        assert!((c - oracle).abs() < 1e-6 * oracle, "s = {s}: {c} vs {oracle}");
    }
    assert!((fracop::fractional_laplacian_constant(1, 0.5) - 1.0 / PI).abs() < 1e-14);
    assert!((fracop::fractional_laplacian_constant(3, 0.5) - 1.0 / (PI * PI)).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bilinear_form_is_symmetric(raw_v in complex_vec(121), raw_w in complex_vec(121), omega in 0.0..1.0f64) {
        let sc = scenario();
        let grid = sc.grid();
        let all = vec![true; grid.len()];
        let v = on_mask(grid, &all, &raw_v);
        let w = on_mask(grid, &all, &raw_w);
        let a = sc.power().bilinear(grid, sc.q(), omega, &v, &w).unwrap();
        let b = sc.power().bilinear(grid, sc.q(), omega, &w, &v).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn solutions_are_linear_in_the_data(
        raw_psi in complex_vec(40), raw_p in complex_vec(40),
        alpha in -2.0..2.0f64, omega in 0.0..1.0f64,
    ) {
        let sc = scenario();
        let grid = sc.grid();
        let solver = sc.solver(omega).unwrap();
        let psi = on_mask(grid, grid.o1_mask(), &raw_psi);
        let p = on_mask(grid, grid.omega_mask(), &raw_p);
        let zero = GridFunction::zeros(grid);
        let u_psi = solver.solve(&psi, &zero).unwrap();
        let u_p = solver.solve(&zero, &p).unwrap();
        let a = Complex64::new(alpha, 0.5);
        let combined = solver.solve(&psi.scale(a), &p).unwrap();
        let expected = u_psi.scale(a).add(&u_p);
        let err = (combined.values() - expected.values()).norm();
        prop_assert!(err <= 1e-10 * (1.0 + expected.values().norm()));
        for &i in grid.exterior_nodes() {
            prop_assert_eq!(combined.values()[i], psi.values()[i] * a);
        }
    }

    #[test]
    fn fractional_powers_compose(a in 0.05..0.5f64, b in 0.05..0.5f64) {
        let grid = small_grid();
        let op = SpectralOperator::assemble(&grid, &EllipticTensor::from_preset(&grid, &SigmaPreset::SmoothBump, None).unwrap()).unwrap();
        let prod = op.power(a).unwrap().matrix() * op.power(b).unwrap().matrix();
        let direct = op.power(a + b).unwrap();
        prop_assert!((prod - direct.matrix()).norm() <= 1e-10 * direct.matrix().norm());
    }

    #[test]
    fn runge_residual_never_grows_as_reg_shrinks(raw in complex_vec(40)) {
        let sc = scenario();
        let grid = sc.grid();
        let target = on_mask(grid, grid.omega_mask(), &raw);
        let runge = RungeApproximation::new(sc).unwrap();
        let sweep = runge.sweep(grid, &target, &linalg::logspace(1e-12, 1.0, 13)).unwrap();
        prop_assert!(inverse::is_monotone_in_reg(&sweep));
    }

    #[test]
    fn tikhonov_residual_is_monotone(entries in prop::collection::vec(-1.0..1.0f64, 48), rhs in prop::collection::vec(-1.0..1.0f64, 8)) {
        let m = DMatrix::from_row_slice(8, 6, &entries);
        let svd = TikhonovSvd::new(&m, 0.0).unwrap();
        let b = DVector::from_vec(rhs);
        let regs = linalg::logspace(1e-10, 10.0, 12);
        let res: Vec<f64> = regs.iter().map(|&r| svd.residual_squared(&b, r)).collect();
        prop_assert!(res.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-9) + 1e-14));
    }

    #[test]
    fn dataset_json_is_lossless(bits in prop::collection::vec(any::<u64>(), 1..6), omega in 1e-6..1.0f64) {
        let grid = small_grid();
        let n = grid.o2_nodes().len();
        let to_finite = |b: u64| {
            let x = f64::from_bits(b);
            if x.is_finite() { x } else { (b >> 12) as f64 }
        };
        let measurement = DVector::from_fn(n, |i, _| {
            Complex64::new(to_finite(bits[i % bits.len()]), to_finite(bits[(i + 1) % bits.len()].rotate_left(7)))
        });
        let ds = DtnDataset::new("fp", &grid, vec![DtnRecord { excitation_id: 3, omega, measurement }]);
        let back = DtnDataset::from_json(&ds.to_json().unwrap()).unwrap();
        for (x, y) in back.records[0].measurement.iter().zip(ds.records[0].measurement.iter()) {
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        prop_assert_eq!(back.records[0].omega.to_bits(), omega.to_bits());
    }

    #[test]
    fn config_round_trip(seed in any::<u64>(), s in 0.05..0.95f64, reg_lo in -14.0..-8.0f64, q in -1.0..1.0f64, a in -3.0..3.0f64) {
        let mut cfg = RunConfig::from_toml(DEFAULT_CONFIG).unwrap();
        cfg.seed = seed;
        cfg.operator.s = s;
        cfg.regularization.min = 10f64.powf(reg_lo);
        cfg.medium.q = QPreset::Bump(q).canonical();
        cfg.medium.source = SourcePreset::Linear(a, 1.0).canonical();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.canonical().unwrap(), cfg.canonical().unwrap());
        prop_assert_eq!(back.fingerprint().unwrap(), cfg.fingerprint().unwrap());
    }

    #[test]
    fn kernel_is_symmetric(s in 0.1..0.9f64) {
        let grid = small_grid();
        let op = SpectralOperator::assemble(&grid, &EllipticTensor::from_preset(&grid, &SigmaPreset::Identity, None).unwrap()).unwrap();
        let k = fracop::effective_kernel(&op.power(s).unwrap(), &grid).unwrap();
        prop_assert_eq!(k.matrix(), &k.matrix().transpose());
    }
}
