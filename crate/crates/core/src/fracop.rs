//! Discrete elliptic operator `-div(sigma grad)`, its spectral fractional
//! powers, the induced nonlocal kernel, the bilinear form and discrete
//! fractional Sobolev norms.
//!
//! The fractional power is taken of the box-truncated operator (zero values
//! outside the box) through one dense symmetric eigendecomposition:
//! `A^s = V diag(lambda^s) V^T`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Point};
use crate::linalg;

/// Named tensor presets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SigmaPreset {
    Identity,
    Scalar(f64),
    Diag(f64, f64),
    /// `(1 + 0.5 exp(-|x|^2)) I`
    SmoothBump,
}

impl SigmaPreset {
    /// Parse `identity`, `scalar(c)`, `diag(a,b)` or `smooth-bump`.
    pub fn parse(text: &str) -> Result<Self> {
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let args = |name: &str| -> Option<Vec<f64>> {
            let inner = t.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')?;
            inner.split(',').map(|a| a.parse::<f64>().ok()).collect()
        };
        if t == "identity" {
            return Ok(SigmaPreset::Identity);
        }
        if t == "smooth-bump" {
            return Ok(SigmaPreset::SmoothBump);
        }
        if let Some(a) = args("scalar") {
            if a.len() == 1 {
                return Ok(SigmaPreset::Scalar(a[0]));
            }
        }
        if let Some(a) = args("diag") {
            if a.len() == 2 {
                return Ok(SigmaPreset::Diag(a[0], a[1]));
            }
        }
        Err(Error::Config(format!("unknown sigma preset '{text}'")))
    }

    pub fn canonical(&self) -> String {
        match self {
            SigmaPreset::Identity => "identity".into(),
            SigmaPreset::Scalar(c) => format!("scalar({c:?})"),
            SigmaPreset::Diag(a, b) => format!("diag({a:?},{b:?})"),
            SigmaPreset::SmoothBump => "smooth-bump".into(),
        }
    }

    fn diagonal_at(&self, x: &Point) -> [f64; 2] {
        match *self {
            SigmaPreset::Identity => [1.0, 1.0],
            SigmaPreset::Scalar(c) => [c, c],
            SigmaPreset::Diag(a, b) => [a, b],
            SigmaPreset::SmoothBump => {
                let c = 1.0 + 0.5 * (-(x[0] * x[0] + x[1] * x[1])).exp();
                [c, c]
            }
        }
    }
}

/// Per-node diagonal elliptic tensor with its ellipticity bound.
///
/// Only diagonal tensors are represented (isotropic or axis-aligned
/// anisotropic); the ellipticity check `lambda <= sigma_kk <= 1/lambda` is
/// therefore the eigenvalue bound of every local matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticTensor {
    dim: usize,
    diag: Vec<[f64; 2]>,
    lambda: f64,
}

impl EllipticTensor {
    pub fn new(dim: usize, diag: Vec<[f64; 2]>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Assembly(format!(
                "ellipticity bound must lie in (0, 1], got {lambda}"
            )));
        }
        for (i, d) in diag.iter().enumerate() {
            for &v in &d[..dim] {
                if !(v >= lambda * (1.0 - 1e-14) && v <= (1.0 + 1e-14) / lambda) {
                    return Err(Error::Assembly(format!(
                        "ellipticity violated at node {i}: eigenvalue {v} outside [{lambda}, {}]",
                        1.0 / lambda
                    )));
                }
            }
        }
        Ok(EllipticTensor { dim, diag, lambda })
    }

    /// Sample a preset on the grid nodes; the bound is the tightest one the
    /// samples admit unless `lambda` is given explicitly.
    pub fn from_preset(grid: &Grid, preset: &SigmaPreset, lambda: Option<f64>) -> Result<Self> {
        let dim = grid.dim();
        let diag: Vec<[f64; 2]> = grid.nodes().iter().map(|x| preset.diagonal_at(x)).collect();
        let lambda = match lambda {
            Some(l) => l,
            None => {
                let mut l = 1.0f64;
                for d in &diag {
                    for &v in &d[..dim] {
                        if !(v > 0.0) {
                            return Err(Error::Assembly(format!(
                                "sigma preset {} is not positive definite",
                                preset.canonical()
                            )));
                        }
                        l = l.min(v).min(1.0 / v);
                    }
                }
                l
            }
        };
        Self::new(dim, diag, lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diagonal(&self, node: usize) -> [f64; 2] {
        self.diag[node]
    }
}

/// Assemble the finite-volume matrix of `-div(sigma grad)` on all box nodes
/// with zero values outside the box. Face coefficients average the two
/// adjacent node values; for `sigma = I` this is the standard 3-/5-point
/// Laplacian divided by `h^2`.
pub fn assemble_elliptic(grid: &Grid, sigma: &EllipticTensor) -> Result<DMatrix<f64>> {
    if sigma.dim != grid.dim() || sigma.diag.len() != grid.len() {
        return Err(Error::Assembly(
            "elliptic tensor does not match the grid".into(),
        ));
    }
    let n = grid.len();
    let m = grid.points_per_axis();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let ix = grid.axis_index(i);
        for axis in 0..grid.dim() {
            for step in [-1i64, 1] {
                let k = ix[axis] as i64 + step;
                let own = sigma.diag[i][axis];
                if k < 0 || k >= m as i64 {
                    a[(i, i)] += own * inv_h2;
                    continue;
                }
                let mut jx = ix;
                jx[axis] = k as usize;
                let j = grid.linear_index(jx);
                let c = 0.5 * (own + sigma.diag[j][axis]) * inv_h2;
                a[(i, i)] += c;
                a[(i, j)] -= c;
            }
        }
    }
    Ok(a)
}

/// Full eigendecomposition of the assembled operator.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    weight: f64,
}

impl SpectralOperator {
    /// Decompose a symmetric matrix; `weight` is the nodal quadrature weight.
    pub fn decompose(matrix: DMatrix<f64>, weight: f64) -> Result<Self> {
        let (eigenvalues, eigenvectors) = linalg::symmetric_eigen(&matrix)?;
        Ok(SpectralOperator {
            matrix,
            eigenvalues,
            eigenvectors,
            weight,
        })
    }

    pub fn assemble(grid: &Grid, sigma: &EllipticTensor) -> Result<Self> {
        Self::decompose(assemble_elliptic(grid, sigma)?, grid.cell_volume())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, one per column.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `V diag(lambda) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.spectral_function(|l| l)
    }

    fn spectral_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[k]);
        }
        let mut out = &scaled * self.eigenvectors.transpose();
        // exact symmetry
        let n = out.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Dense matrix of `A^s` for `s` in `(0, 1]`; `s = 1` returns the
    /// assembled matrix itself.
    pub fn power(&self, s: f64) -> Result<FractionalPower> {
        check_order(s)?;
        if s == 1.0 {
            return Ok(FractionalPower {
                s,
                matrix: self.matrix.clone(),
                weight: self.weight,
            });
        }
        if let Some(l) = self.eigenvalues.iter().find(|&&l| l <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "fractional power of an operator with eigenvalue {l}"
            )));
        }
        Ok(FractionalPower {
            s,
            matrix: self.spectral_function(|l| l.powf(s)),
            weight: self.weight,
        })
    }

    /// `A^s v` through the eigenbasis, without materializing `A^s`.
    pub fn apply_fractional(&self, s: f64, v: &GridFunction) -> Result<GridFunction> {
        check_order(s)?;
        if v.len() != self.len() {
            return Err(Error::InvalidInput("vector length does not match operator".into()));
        }
        let vt = self.eigenvectors.transpose();
        let apply = |x: DVector<f64>| -> DVector<f64> {
            let mut c = &vt * x;
            for (k, ck) in c.iter_mut().enumerate() {
                *ck *= self.eigenvalues[k].powf(s);
            }
            &self.eigenvectors * c
        };
        let re = apply(v.values().map(|z| z.re));
        let im = if v.is_real() {
            DVector::zeros(v.len())
        } else {
            apply(v.values().map(|z| z.im))
        };
        Ok(GridFunction::from_values_unchecked(linalg::complexify(&re, &im)))
    }
}

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fractional order must lie in (0, 1], got {s}"
        )));
    }
    Ok(())
}

/// Free-function form of [`SpectralOperator::decompose`] with unit weight.
pub fn spectral_decompose(matrix: DMatrix<f64>) -> Result<SpectralOperator> {
    SpectralOperator::decompose(matrix, 1.0)
}

/// Free-function form of [`SpectralOperator::apply_fractional`].
pub fn apply_fractional(op: &SpectralOperator, s: f64, v: &GridFunction) -> Result<GridFunction> {
    op.apply_fractional(s, v)
}

/// Materialized `A^s` for one order `s`.
#[derive(Clone, Debug)]
pub struct FractionalPower {
    s: f64,
    matrix: DMatrix<f64>,
    weight: f64,
}

impl FractionalPower {
    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn apply(&self, v: &GridFunction) -> GridFunction {
        GridFunction::from_values_unchecked(linalg::real_times_complex(&self.matrix, v.values()))
    }

    /// `B(v, w) = <A^s v, w> h^d + omega^2 sum_{omega nodes} q v w h^d`.
    ///
    /// The form is bilinear (no conjugation). `q` must vanish on exterior
    /// nodes.
    pub fn bilinear(
        &self,
        grid: &Grid,
        q: &DVector<f64>,
        omega: f64,
        v: &GridFunction,
        w: &GridFunction,
    ) -> Result<Complex64> {
        check_potential(grid, q)?;
        let av = self.apply(v);
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in av.values().iter().zip(w.values().iter()) {
            acc += a * b;
        }
        let mut mass = Complex64::new(0.0, 0.0);
        for &i in grid.omega_nodes() {
            mass += q[i] * v.values()[i] * w.values()[i];
        }
        Ok((acc + omega * omega * mass) * self.weight)
    }
}

/// Checks that a potential is finite and supported on the domain nodes.
pub fn check_potential(grid: &Grid, q: &DVector<f64>) -> Result<()> {
    if q.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "potential has {} values, grid has {} nodes",
            q.len(),
            grid.len()
        )));
    }
    for (i, &v) in q.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("potential is not finite at node {i}")));
        }
        if !grid.omega_mask()[i] && v != 0.0 {
            return Err(Error::InvalidInput(format!(
                "potential has value {v} on exterior node {i}"
            )));
        }
    }
    Ok(())
}

/// Free-function form of [`FractionalPower::bilinear`].
pub fn bilinear(
    power: &FractionalPower,
    grid: &Grid,
    q: &DVector<f64>,
    omega: f64,
    v: &GridFunction,
    w: &GridFunction,
) -> Result<Complex64> {
    power.bilinear(grid, q, omega, v, w)
}

/// `4^s Gamma(n/2 + s) / (pi^{n/2} |Gamma(-s)|)`, the normalizing constant
/// of the whole-space fractional Laplacian kernel.
pub fn fractional_laplacian_constant(n: usize, s: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let nh = n as f64 / 2.0;
    // |Gamma(-s)| = Gamma(1 - s) / s on (0, 1)
    let abs_gamma_neg = gamma(1.0 - s) / s;
    4f64.powf(s) * gamma(nh + s) / (PI.powf(nh) * abs_gamma_neg)
}

/// Off-diagonal nonlocal kernel induced by `A^s`:
/// `K(x_i, x_j) = -(A^s)_{ij} / h^d`, so that
/// `<A^s v, w> h^d = 1/2 sum_{i != j} K_ij (v_i - v_j)(w_i - w_j) h^{2d}`
/// plus a diagonal killing term.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    dim: usize,
    s: f64,
}

impl KernelMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    /// Whole-space reference `C(n, s) r^{-(n + 2s)}`.
    pub fn reference(&self, r: f64) -> f64 {
        fractional_laplacian_constant(self.dim, self.s) * r.powf(-(self.dim as f64 + 2.0 * self.s))
    }

    /// `min K_ij |x_i - x_j|^{n + 2s}` over the given pairs.
    pub fn lower_constant(&self, grid: &Grid, pairs: impl IntoIterator<Item = (usize, usize)>) -> f64 {
        let p = grid.dim() as f64 + 2.0 * self.s;
        pairs
            .into_iter()
            .map(|(i, j)| self.values[(i, j)] * grid.distance(i, j).powf(p))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn effective_kernel(power: &FractionalPower, grid: &Grid) -> Result<KernelMatrix> {
    let s = power.order();
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidInput(format!(
            "effective kernel needs s in (0, 1), got {s}"
        )));
    }
    let scale = 1.0 / grid.cell_volume();
    let mut values = power.matrix().map(|a| -a * scale);
    values.fill_diagonal(0.0);
    Ok(KernelMatrix {
        values,
        dim: grid.dim(),
        s,
    })
}

/// Node sets over which the Gagliardo double sum runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeminormRegion {
    Omega,
    Box,
}

/// Discrete Gagliardo seminorm
/// `(sum_{i != j in region} |v_i - v_j|^2 / |x_i - x_j|^{n + 2s} h^{2n})^{1/2}`.
pub fn hs_seminorm(grid: &Grid, v: &GridFunction, s: f64, region: SeminormRegion) -> f64 {
    match region {
        SeminormRegion::Omega => hs_seminorm_over(grid, v, s, grid.omega_nodes()),
        SeminormRegion::Box => {
            let all: Vec<usize> = (0..grid.len()).collect();
            hs_seminorm_over(grid, v, s, &all)
        }
    }
}

pub fn hs_seminorm_over(grid: &Grid, v: &GridFunction, s: f64, nodes: &[usize]) -> f64 {
    let p = grid.dim() as f64 + 2.0 * s;
    let vals = v.values();
    let mut sum = 0.0;
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            let d = (vals[i] - vals[j]).norm_sqr();
            if d != 0.0 {
                sum += d / grid.distance(i, j).powf(p);
            }
        }
    }
    // each unordered pair appears twice in the double sum
    (2.0 * sum).sqrt() * grid.cell_volume()
}

/// `||v||_{L^2(region)} + |v|_{H^s(region)}`.
pub fn hs_norm(grid: &Grid, v: &GridFunction, s: f64, region: SeminormRegion) -> f64 {
    let l2 = match region {
        SeminormRegion::Omega => v.l2_norm_over(grid, grid.omega_nodes()),
        SeminormRegion::Box => (v.values().norm_squared() * grid.cell_volume()).sqrt(),
    };
    l2 + hs_seminorm(grid, v, s, region)
}

/// Matrix `S` with `v^T S v = |v|^2` (seminorm over `pair_nodes`) for `v`
/// supported on `support`; rows/columns follow `support`.
pub(crate) fn seminorm_quadratic_form(
    grid: &Grid,
    s: f64,
    support: &[usize],
    pair_nodes: &[usize],
) -> DMatrix<f64> {
    let p = grid.dim() as f64 + 2.0 * s;
    let m = support.len();
    let w2 = grid.cell_volume().powi(2);
    let mut form = DMatrix::<f64>::zeros(m, m);
    for (a, &i) in support.iter().enumerate() {
        let diag: f64 = pair_nodes
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| grid.distance(i, j).powf(-p))
            .sum();
        form[(a, a)] = 2.0 * diag * w2;
        for (b, &j) in support.iter().enumerate() {
            if a != b {
                form[(a, b)] = -2.0 * grid.distance(i, j).powf(-p) * w2;
            }
        }
    }
    form
}
