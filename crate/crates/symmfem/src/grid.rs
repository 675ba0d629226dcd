//! Tensor-product grids on axis-aligned boxes with lexicographic node
//! numbering (fastest along direction 1) and its permuted counterpart.

use crate::error::{Error, Result};
use crate::symmetrize::Permutation;

/// Which nodes of the tensor grid carry degrees of freedom.
///
/// `Inclusive` numbers all `N_k + 1` nodes per direction; `Interior` numbers
/// only the `N_k - 1` nodes strictly inside the box, which is the layout the
/// Dirichlet solves operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    Inclusive,
    Interior,
}

/// One-based position of a node in the flattened nodal vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinearIndex(usize);

impl LinearIndex {
    pub fn new(one_based: usize) -> Self {
        debug_assert!(one_based >= 1);
        LinearIndex(one_based)
    }

    /// The one-based position.
    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based offset into storage.
    pub fn offset(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for LinearIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-direction node index, each component in `0..c_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(components: Vec<usize>) -> Self {
        MultiIndex(components)
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }
}

impl std::ops::Deref for MultiIndex {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex(v)
    }
}

/// Uniform tensor-product grid on an axis-aligned box.
///
/// `subdivisions[k]` is the number of cells along direction `k`; the mesh
/// size is `h_k = (hi_k - lo_k) / N_k`. The node numbering runs along the
/// `x_1` direction first, then `x_2`, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    subdivisions: Vec<usize>,
    mode: BoundaryMode,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, subdivisions: Vec<usize>, mode: BoundaryMode) -> Result<Self> {
        let d = subdivisions.len();
        if d < 2 {
            return Err(Error::InvalidGrid {
                reason: format!("dimension must be at least 2, got {d}"),
            });
        }
        if lo.len() != d || hi.len() != d {
            return Err(Error::DimensionMismatch {
                left: lo.len().min(hi.len()),
                right: d,
            });
        }
        for k in 0..d {
            if !(lo[k].is_finite() && hi[k].is_finite()) || hi[k] <= lo[k] {
                return Err(Error::InvalidGrid {
                    reason: format!("box bounds in direction {} invalid: [{}, {}]", k + 1, lo[k], hi[k]),
                });
            }
            let min_n = match mode {
                BoundaryMode::Inclusive => 1,
                BoundaryMode::Interior => 2,
            };
            if subdivisions[k] < min_n {
                return Err(Error::InvalidGrid {
                    reason: format!(
                        "subdivision count {} in direction {} too small for {:?} mode",
                        subdivisions[k],
                        k + 1,
                        mode
                    ),
                });
            }
        }
        Ok(GridSpec { lo, hi, subdivisions, mode })
    }

    /// Grid on a cube `[lo, hi]^d` with per-direction subdivision counts.
    pub fn cube(lo: f64, hi: f64, subdivisions: Vec<usize>, mode: BoundaryMode) -> Result<Self> {
        let d = subdivisions.len();
        GridSpec::new(vec![lo; d], vec![hi; d], subdivisions, mode)
    }

    /// Grid on the unit cube.
    pub fn unit(subdivisions: Vec<usize>, mode: BoundaryMode) -> Result<Self> {
        GridSpec::cube(0.0, 1.0, subdivisions, mode)
    }

    pub fn dim(&self) -> usize {
        self.subdivisions.len()
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn subdivisions(&self) -> &[usize] {
        &self.subdivisions
    }

    pub fn mesh_size(&self, k: usize) -> f64 {
        (self.hi[k] - self.lo[k]) / self.subdivisions[k] as f64
    }

    pub fn mesh_sizes(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.mesh_size(k)).collect()
    }

    /// Number of numbered nodes along direction `k`.
    pub fn node_count(&self, k: usize) -> usize {
        match self.mode {
            BoundaryMode::Inclusive => self.subdivisions[k] + 1,
            BoundaryMode::Interior => self.subdivisions[k] - 1,
        }
    }

    pub fn node_counts(&self) -> Vec<usize> {
        (0..self.dim()).map(|k| self.node_count(k)).collect()
    }

    pub fn n_dof(&self) -> usize {
        (0..self.dim()).map(|k| self.node_count(k)).product()
    }

    /// Strides of the linear numbering: direction 1 has stride 1.
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1usize; d];
        for k in 1..d {
            s[k] = s[k - 1] * self.node_count(k - 1);
        }
        s
    }

    /// One-based position of a node in the flattened vector:
    /// `I(i) = sum_{l>=2} i_l * prod_{j<l} c_j + i_1 + 1`.
    pub fn linear_index(&self, idx: &[usize]) -> Result<LinearIndex> {
        if idx.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: idx.len(),
                right: self.dim(),
            });
        }
        let mut off = 0usize;
        for k in (0..self.dim()).rev() {
            let c = self.node_count(k);
            if idx[k] >= c {
                return Err(Error::IndexOutOfRange {
                    direction: k + 1,
                    index: idx[k],
                    count: c,
                });
            }
            off = off * c + idx[k];
        }
        Ok(LinearIndex(off + 1))
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    pub fn inverse_index(&self, lin: LinearIndex) -> Result<MultiIndex> {
        let n = self.n_dof();
        if lin.get() < 1 || lin.get() > n {
            return Err(Error::LinearIndexOutOfRange {
                index: lin.get(),
                n_dof: n,
            });
        }
        let mut off = lin.offset();
        let mut idx = vec![0usize; self.dim()];
        for k in 0..self.dim() {
            let c = self.node_count(k);
            idx[k] = off % c;
            off /= c;
        }
        Ok(MultiIndex(idx))
    }

    /// Coordinate of the node along direction `k` at inclusive offset `t`
    /// (so `t = 0` is the boundary node at `lo_k` and `t = N_k` the one at
    /// `hi_k`, regardless of mode). The last node is exactly `hi_k`.
    pub(crate) fn coord(&self, k: usize, t: usize) -> f64 {
        let n = self.subdivisions[k];
        if t == n {
            self.hi[k]
        } else {
            self.lo[k] + (self.hi[k] - self.lo[k]) * (t as f64 / n as f64)
        }
    }

    fn mode_shift(&self) -> usize {
        match self.mode {
            BoundaryMode::Inclusive => 0,
            BoundaryMode::Interior => 1,
        }
    }

    /// Physical coordinates of a node.
    pub fn node_coords(&self, idx: &[usize]) -> Result<Vec<f64>> {
        if idx.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: idx.len(),
                right: self.dim(),
            });
        }
        let s = self.mode_shift();
        let mut x = vec![0.0; self.dim()];
        for k in 0..self.dim() {
            let c = self.node_count(k);
            if idx[k] >= c {
                return Err(Error::IndexOutOfRange {
                    direction: k + 1,
                    index: idx[k],
                    count: c,
                });
            }
            x[k] = self.coord(k, idx[k] + s);
        }
        Ok(x)
    }

    /// Grid with subdivision counts permuted: `N'_k = N_{sigma(k)}`.
    ///
    /// Requires the box to be cubic across every pair of directions the
    /// permutation exchanges.
    pub fn permuted(&self, sigma: &Permutation) -> Result<GridSpec> {
        let d = self.dim();
        if sigma.dim() != d {
            return Err(Error::DimensionMismatch {
                left: sigma.dim(),
                right: d,
            });
        }
        for k in 0..d {
            let m = sigma.apply0(k);
            if m != k && (self.lo[m] != self.lo[k] || self.hi[m] != self.hi[k]) {
                return Err(Error::NonCubicBox { i: k + 1, j: m + 1 });
            }
        }
        let subdivisions = (0..d).map(|k| self.subdivisions[sigma.apply0(k)]).collect();
        GridSpec::new(self.lo.clone(), self.hi.clone(), subdivisions, self.mode)
    }

    /// True when all box bounds agree across directions.
    pub fn is_cubic_box(&self) -> bool {
        self.lo.iter().all(|&v| v == self.lo[0]) && self.hi.iter().all(|&v| v == self.hi[0])
    }

    /// Calls `f` for every multi-index in lexicographic (numbering) order.
    /// The slice passed to `f` is reused between calls.
    pub fn for_each_index(&self, mut f: impl FnMut(&[usize])) {
        let d = self.dim();
        let counts = self.node_counts();
        let mut idx = vec![0usize; d];
        let n = self.n_dof();
        for _ in 0..n {
            f(&idx);
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Coefficient vector over a grid's numbered nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVector {
    spec: GridSpec,
    values: Vec<f64>,
}

impl NodalVector {
    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.n_dof();
        NodalVector {
            spec,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.n_dof() {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: spec.n_dof(),
            });
        }
        Ok(NodalVector { spec, values })
    }

    /// Nodal samples of a function, in numbering order.
    pub fn sample(spec: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let s = spec.mode_shift();
        let d = spec.dim();
        let mut values = Vec::with_capacity(spec.n_dof());
        let mut x = vec![0.0; d];
        spec.for_each_index(|idx| {
            for k in 0..d {
                x[k] = spec.coord(k, idx[k] + s);
            }
            values.push(f(&x));
        });
        NodalVector {
            spec: spec.clone(),
            values,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, lin: LinearIndex) -> f64 {
        self.values[lin.offset()]
    }

    pub fn max_abs_diff(&self, other: &NodalVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
