//! Uniform tensor grids on a truncated box, the partition of nodes into the
//! open domain and its exterior, and nodal function storage.
//!
//! Nodes are ordered lexicographically by coordinate tuple: in two
//! dimensions the node with axis indices `(ix, iy)` sits at `ix * n + iy`.
//! The domain is treated as an open set, so a node lying exactly on its
//! boundary belongs to the exterior.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (in units of `h`) for geometric membership tests.
const GEOM_TOL: f64 = 1e-9;

/// A coordinate; the second component is unused (zero) in one dimension.
pub type Point = [f64; 2];

/// Region description used for the domain and the measurement sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionSpec {
    /// Open axis-aligned box (an interval in one dimension).
    Rect { min: Vec<f64>, max: Vec<f64> },
    /// Open disc (an interval `(c - r, c + r)` in one dimension).
    Disc { center: Vec<f64>, radius: f64 },
    /// Union of regions; allowed for the measurement sets only.
    Union { parts: Vec<RegionSpec> },
}

impl RegionSpec {
    pub fn interval(a: f64, b: f64) -> Self {
        RegionSpec::Rect {
            min: vec![a],
            max: vec![b],
        }
    }

    pub fn rect(min: [f64; 2], max: [f64; 2]) -> Self {
        RegionSpec::Rect {
            min: min.to_vec(),
            max: max.to_vec(),
        }
    }

    pub fn disc(center: [f64; 2], radius: f64) -> Self {
        RegionSpec::Disc {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn union(parts: Vec<RegionSpec>) -> Self {
        RegionSpec::Union { parts }
    }

    fn validate(&self, dim: usize, what: &str) -> Result<()> {
        match self {
            RegionSpec::Union { parts } => {
                if parts.is_empty() {
                    return Err(Error::Geometry(format!("{what}: union has no parts")));
                }
                for p in parts {
                    p.validate(dim, what)?;
                }
            }
            RegionSpec::Rect { min, max } => {
                if min.len() != dim || max.len() != dim {
                    return Err(Error::Geometry(format!(
                        "{what}: rect corners must have {dim} coordinates"
                    )));
                }
                if min.iter().zip(max).any(|(a, b)| !(a < b)) {
                    return Err(Error::Geometry(format!("{what}: rect has min >= max")));
                }
            }
            RegionSpec::Disc { center, radius } => {
                if center.len() != dim {
                    return Err(Error::Geometry(format!(
                        "{what}: disc center must have {dim} coordinates"
                    )));
                }
                if !(*radius > 0.0) {
                    return Err(Error::Geometry(format!("{what}: disc radius must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Strict (open-set) membership with an absolute tolerance `tol`.
    pub fn contains(&self, x: &Point, dim: usize, tol: f64) -> bool {
        match self {
            RegionSpec::Rect { min, max } => {
                (0..dim).all(|k| x[k] > min[k] + tol && x[k] < max[k] - tol)
            }
            RegionSpec::Disc { center, radius } => {
                let r2: f64 = (0..dim).map(|k| (x[k] - center[k]).powi(2)).sum();
                r2.sqrt() < radius - tol
            }
            RegionSpec::Union { parts } => parts.iter().any(|p| p.contains(x, dim, tol)),
        }
    }

    /// Axis-aligned bounding box as `(lo, hi)` per axis.
    fn bounds(&self, dim: usize) -> Vec<(f64, f64)> {
        match self {
            RegionSpec::Rect { min, max } => (0..dim).map(|k| (min[k], max[k])).collect(),
            RegionSpec::Disc { center, radius } => (0..dim)
                .map(|k| (center[k] - radius, center[k] + radius))
                .collect(),
            RegionSpec::Union { parts } => {
                let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
                for p in parts {
                    for (o, (lo, hi)) in out.iter_mut().zip(p.bounds(dim)) {
                        o.0 = o.0.min(lo);
                        o.1 = o.1.max(hi);
                    }
                }
                out
            }
        }
    }
}

/// Classification of a single node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Omega,
    Exterior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeClass {
    pub kind: NodeKind,
    pub in_o1: bool,
    pub in_o2: bool,
}

/// Truncated computational box with the node partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    box_halfwidth: f64,
    h: f64,
    points_per_axis: usize,
    nodes: Vec<Point>,
    omega_mask: Vec<bool>,
    exterior_mask: Vec<bool>,
    o1_mask: Vec<bool>,
    o2_mask: Vec<bool>,
    #[serde(skip)]
    omega_nodes: Vec<usize>,
    #[serde(skip)]
    exterior_nodes: Vec<usize>,
    #[serde(skip)]
    o1_nodes: Vec<usize>,
    #[serde(skip)]
    o2_nodes: Vec<usize>,
}

/// Inputs of [`Grid::build`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub box_halfwidth: f64,
    pub h: f64,
    pub omega: RegionSpec,
    pub o1: RegionSpec,
    pub o2: RegionSpec,
}

fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

impl Grid {
    pub fn build(spec: &GridSpec) -> Result<Grid> {
        let GridSpec {
            dim,
            box_halfwidth,
            h,
            ref omega,
            ref o1,
            ref o2,
        } = *spec;
        if dim != 1 && dim != 2 {
            return Err(Error::Geometry(format!("dim must be 1 or 2, got {dim}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Geometry(format!("spacing h must be positive, got {h}")));
        }
        if !(box_halfwidth > 0.0) {
            return Err(Error::Geometry("box halfwidth must be positive".into()));
        }
        let cells = 2.0 * box_halfwidth / h;
        let cells_rounded = cells.round();
        if cells_rounded < 1.0 || (cells - cells_rounded).abs() > 1e-8 * cells.max(1.0) {
            return Err(Error::Geometry(format!(
                "2 * box_halfwidth / h = {cells} is not an integer"
            )));
        }
        if matches!(omega, RegionSpec::Union { .. }) {
            return Err(Error::Geometry("omega must be a rect or a disc".into()));
        }
        omega.validate(dim, "omega")?;
        o1.validate(dim, "o1")?;
        o2.validate(dim, "o2")?;

        let n = cells_rounded as usize + 1;
        let coord = |k: usize| -box_halfwidth + k as f64 * h;
        let nodes: Vec<Point> = if dim == 1 {
            (0..n).map(|i| [coord(i), 0.0]).collect()
        } else {
            (0..n)
                .flat_map(|ix| (0..n).map(move |iy| [coord(ix), coord(iy)]))
                .collect()
        };

        let tol = GEOM_TOL * h;
        for (lo, hi) in omega.bounds(dim) {
            if lo <= -box_halfwidth + tol || hi >= box_halfwidth - tol {
                return Err(Error::Geometry(
                    "omega region touches or leaves the box".into(),
                ));
            }
        }
        let omega_mask: Vec<bool> = nodes.iter().map(|x| omega.contains(x, dim, tol)).collect();
        let exterior_mask: Vec<bool> = omega_mask.iter().map(|m| !m).collect();
        if !omega_mask.iter().any(|&m| m) {
            return Err(Error::Geometry("omega contains no grid nodes".into()));
        }
        let margin = 2.0 * h - tol;
        for (x, _) in nodes.iter().zip(&omega_mask).filter(|(_, &m)| m) {
            let dist = (0..dim)
                .map(|k| box_halfwidth - x[k].abs())
                .fold(f64::INFINITY, f64::min);
            if dist < margin {
                return Err(Error::Geometry(format!(
                    "omega node at {:?} lies within 2h of the box boundary",
                    &x[..dim]
                )));
            }
        }

        let measurement_mask = |spec: &RegionSpec, name: &str| -> Result<Vec<bool>> {
            let raw: Vec<bool> = nodes.iter().map(|x| spec.contains(x, dim, tol)).collect();
            if raw.iter().zip(&omega_mask).any(|(&r, &o)| r && o) {
                return Err(Error::Geometry(format!("{name} overlaps omega")));
            }
            if !raw.iter().any(|&m| m) {
                return Err(Error::Geometry(format!("{name} contains no grid nodes")));
            }
            Ok(raw)
        };
        let o1_mask = measurement_mask(o1, "o1")?;
        let o2_mask = measurement_mask(o2, "o2")?;

        Ok(Grid {
            dim,
            box_halfwidth,
            h,
            points_per_axis: n,
            omega_nodes: mask_indices(&omega_mask),
            exterior_nodes: mask_indices(&exterior_mask),
            o1_nodes: mask_indices(&o1_mask),
            o2_nodes: mask_indices(&o2_mask),
            nodes,
            omega_mask,
            exterior_mask,
            o1_mask,
            o2_mask,
        })
    }

    /// Rebuild the cached index lists after deserialization.
    pub fn from_json(text: &str) -> Result<Grid> {
        let mut grid: Grid = serde_json::from_str(text)?;
        grid.omega_nodes = mask_indices(&grid.omega_mask);
        grid.exterior_nodes = mask_indices(&grid.exterior_mask);
        grid.o1_nodes = mask_indices(&grid.o1_mask);
        grid.o2_nodes = mask_indices(&grid.o2_mask);
        Ok(grid)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn box_halfwidth(&self) -> f64 {
        self.box_halfwidth
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Point {
        &self.nodes[i]
    }

    /// Quadrature weight `h^dim` attached to every node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn omega_mask(&self) -> &[bool] {
        &self.omega_mask
    }

    pub fn exterior_mask(&self) -> &[bool] {
        &self.exterior_mask
    }

    pub fn o1_mask(&self) -> &[bool] {
        &self.o1_mask
    }

    pub fn o2_mask(&self) -> &[bool] {
        &self.o2_mask
    }

    pub fn omega_nodes(&self) -> &[usize] {
        &self.omega_nodes
    }

    pub fn exterior_nodes(&self) -> &[usize] {
        &self.exterior_nodes
    }

    pub fn o1_nodes(&self) -> &[usize] {
        &self.o1_nodes
    }

    pub fn o2_nodes(&self) -> &[usize] {
        &self.o2_nodes
    }

    pub fn classify_node(&self, index: usize) -> Result<NodeClass> {
        if index >= self.len() {
            return Err(Error::InvalidInput(format!(
                "node index {index} out of range (grid has {} nodes)",
                self.len()
            )));
        }
        Ok(NodeClass {
            kind: if self.omega_mask[index] {
                NodeKind::Omega
            } else {
                NodeKind::Exterior
            },
            in_o1: self.o1_mask[index],
            in_o2: self.o2_mask[index],
        })
    }

    /// Axis indices of a node.
    pub fn axis_index(&self, i: usize) -> [usize; 2] {
        if self.dim == 1 {
            [i, 0]
        } else {
            [i / self.points_per_axis, i % self.points_per_axis]
        }
    }

    pub fn linear_index(&self, ix: [usize; 2]) -> usize {
        if self.dim == 1 {
            ix[0]
        } else {
            ix[0] * self.points_per_axis + ix[1]
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.nodes[i], &self.nodes[j]);
        (0..self.dim)
            .map(|k| (a[k] - b[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Distance from a node to the box boundary (minimum over axes).
    pub fn distance_to_box(&self, i: usize) -> f64 {
        let x = &self.nodes[i];
        (0..self.dim)
            .map(|k| self.box_halfwidth - x[k].abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// A complex value per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    values: DVector<Complex64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> Self {
        GridFunction {
            values: DVector::zeros(grid.len()),
        }
    }

    pub fn from_values(grid: &Grid, values: DVector<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "grid function has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridFunction { values })
    }

    pub fn zeros_like(other: &GridFunction) -> Self {
        GridFunction {
            values: DVector::zeros(other.len()),
        }
    }

    pub(crate) fn from_values_unchecked(values: DVector<Complex64>) -> Self {
        GridFunction { values }
    }

    pub fn from_real(grid: &Grid, values: &DVector<f64>) -> Result<Self> {
        Self::from_values(grid, values.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn from_fn(grid: &Grid, f: impl FnMut(&Point) -> Complex64) -> Self {
        GridFunction {
            values: DVector::from_iterator(grid.len(), grid.nodes().iter().map(f)),
        }
    }

    /// Scatter `values` onto `nodes`, zero elsewhere.
    pub fn scatter(grid: &Grid, nodes: &[usize], values: &DVector<Complex64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "scatter: {} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        let mut out = DVector::zeros(grid.len());
        for (&i, v) in nodes.iter().zip(values.iter()) {
            out[i] = *v;
        }
        Ok(GridFunction { values: out })
    }

    /// Copy of `self` with every node outside `mask` set to zero.
    pub fn restricted(&self, mask: &[bool]) -> Self {
        let mut values = self.values.clone();
        for (v, &m) in values.iter_mut().zip(mask) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        GridFunction { values }
    }

    pub fn is_supported_on(&self, mask: &[bool]) -> bool {
        self.values
            .iter()
            .zip(mask)
            .all(|(v, &m)| m || (v.re == 0.0 && v.im == 0.0))
    }

    pub fn gather(&self, nodes: &[usize]) -> DVector<Complex64> {
        DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| self.values[i]))
    }

    pub fn values(&self) -> &DVector<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn real_part(&self) -> DVector<f64> {
        self.values.map(|v| v.re)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        GridFunction {
            values: self.values.map(|v| v * c),
        }
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        GridFunction {
            values: &self.values + &other.values,
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        GridFunction {
            values: &self.values - &other.values,
        }
    }

    /// Discrete L² norm over `nodes` with weight `h^dim`.
    pub fn l2_norm_over(&self, grid: &Grid, nodes: &[usize]) -> f64 {
        let sum: f64 = nodes.iter().map(|&i| self.values[i].norm_sqr()).sum();
        (sum * grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_1d(h: f64) -> GridSpec {
        GridSpec {
            dim: 1,
            box_halfwidth: 2.0,
            h,
            omega: RegionSpec::interval(-1.0, 1.0),
            o1: RegionSpec::interval(-2.5, -1.2),
            o2: RegionSpec::interval(1.2, 2.5),
        }
    }

    #[test]
    fn one_dimensional_counts() {
        let g = Grid::build(&spec_1d(0.5)).unwrap();
        assert_eq!(g.len(), 9);
        let xs: Vec<f64> = g.nodes().iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]);
        let omega: Vec<f64> = g.omega_nodes().iter().map(|&i| g.node(i)[0]).collect();
        assert_eq!(omega, vec![-0.5, 0.0, 0.5]);
        assert_eq!(g.omega_nodes().len() + g.exterior_nodes().len(), g.len());
    }

    #[test]
    fn two_dimensional_counts() {
        let spec = GridSpec {
            dim: 2,
            box_halfwidth: 1.0,
            h: 1.0,
            omega: RegionSpec::disc([0.0, 0.0], 0.5),
            o1: RegionSpec::rect([-1.5, -1.5], [-0.5, 1.5]),
            o2: RegionSpec::rect([0.5, -1.5], [1.5, 1.5]),
        };
        // omega must be 2h away from the box: a 3x3 box cannot host it
        assert!(matches!(Grid::build(&spec), Err(Error::Geometry(_))));
        let spec = GridSpec {
            h: 0.25,
            omega: RegionSpec::disc([0.0, 0.0], 0.3),
            ..spec
        };
        let g = Grid::build(&spec).unwrap();
        assert_eq!(g.len(), 81);
        assert_eq!(g.points_per_axis(), 9);
        // lexicographic ordering: x-major
        assert_eq!(g.node(1), &[-1.0, -0.75]);
        assert_eq!(g.node(9), &[-0.75, -1.0]);
        assert_eq!(g.linear_index(g.axis_index(40)), 40);
    }

    #[test]
    fn boundary_node_is_exterior() {
        let g = Grid::build(&spec_1d(0.5)).unwrap();
        let at_one = g.nodes().iter().position(|x| x[0] == 1.0).unwrap();
        assert_eq!(g.classify_node(at_one).unwrap().kind, NodeKind::Exterior);
        let center = g.nodes().iter().position(|x| x[0] == 0.0).unwrap();
        assert_eq!(g.classify_node(center).unwrap().kind, NodeKind::Omega);
        let corner = g.classify_node(0).unwrap();
        assert_eq!(corner.kind, NodeKind::Exterior);
        let in_o2 = g.nodes().iter().position(|x| x[0] == 1.5).unwrap();
        let class = g.classify_node(in_o2).unwrap();
        assert!(class.in_o2 && !class.in_o1 && class.kind == NodeKind::Exterior);
        assert!(g.classify_node(g.len()).is_err());
    }

    #[test]
    fn geometry_errors() {
        let mut s = spec_1d(0.5);
        s.omega = RegionSpec::interval(-1.9, 1.0);
        assert!(matches!(Grid::build(&s), Err(Error::Geometry(_))));
        let mut s = spec_1d(0.5);
        s.o2 = RegionSpec::interval(1.6, 1.9);
        assert!(matches!(Grid::build(&s), Err(Error::Geometry(_))));
        let mut s = spec_1d(0.5);
        s.o1 = RegionSpec::interval(-1.5, 0.0);
        assert!(matches!(Grid::build(&s), Err(Error::Geometry(_))));
        let s = spec_1d(0.3);
        assert!(matches!(Grid::build(&s), Err(Error::Geometry(_))));
    }

    #[test]
    fn refinement_and_determinism() {
        let coarse = Grid::build(&spec_1d(0.25)).unwrap();
        let fine = Grid::build(&spec_1d(0.125)).unwrap();
        assert!(fine.omega_nodes().len() >= 2 * coarse.omega_nodes().len());
        assert_eq!(coarse, Grid::build(&spec_1d(0.25)).unwrap());
        let back = Grid::from_json(&coarse.to_json().unwrap()).unwrap();
        assert_eq!(back, coarse);
        assert_eq!(back.o2_nodes(), coarse.o2_nodes());
    }

    #[test]
    fn masks_partition_and_nest() {
        let g = Grid::build(&spec_1d(0.125)).unwrap();
        for i in 0..g.len() {
            assert!(g.omega_mask()[i] ^ g.exterior_mask()[i]);
            if g.o1_mask()[i] || g.o2_mask()[i] {
                assert!(g.exterior_mask()[i]);
            }
        }
    }

    #[test]
    fn union_measurement_set() {
        let mut spec = spec_1d(0.5);
        spec.o2 = RegionSpec::union(vec![
            RegionSpec::interval(-2.5, -1.0),
            RegionSpec::interval(1.0, 2.5),
        ]);
        let g = Grid::build(&spec).unwrap();
        let xs: Vec<f64> = g.o2_nodes().iter().map(|&i| g.node(i)[0]).collect();
        assert_eq!(xs, vec![-2.0, -1.5, 1.5, 2.0]);
        spec.omega = RegionSpec::union(vec![RegionSpec::interval(-1.0, 1.0)]);
        assert!(matches!(Grid::build(&spec), Err(Error::Geometry(_))));
    }
}
