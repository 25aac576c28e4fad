//! Rectangular grids, probability densities and node vector fields.
//!
//! Densities are cell-centered: node `i` sits at the center of its cell and
//! carries the value `ρ(x_i)`; all integrals are midpoint quadrature
//! `Σ ρ_i · Π h_a`. Grids are row-major with the first axis slowest.

use crate::error::{Error, Result};
use crate::exec;
use crate::norms::NormSpec;
use crate::triangle::TriangleDensity;

/// Rectangular grid in dimension 1..=3 with cell-centered nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub m: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, m: Vec<usize>) -> Result<Self> {
        let dim = lo.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidConfig(format!("grid dimension must be 1..=3, got {dim}")));
        }
        if hi.len() != dim || m.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: hi.len().max(m.len()) });
        }
        for a in 0..dim {
            if m[a] < 2 {
                return Err(Error::InvalidConfig(format!("m[{a}] must be >= 2")));
            }
            if !(hi[a] > lo[a]) {
                return Err(Error::InvalidConfig(format!("hi[{a}] must exceed lo[{a}]")));
            }
        }
        Ok(Grid { lo, hi, m })
    }

    /// Square 2D grid `[-half, half]²` with `m x m` cells.
    pub fn square(half: f64, m: usize) -> Result<Self> {
        Grid::new(vec![-half, -half], vec![half, half], vec![m, m])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.m.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.m[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn multi(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = rest % self.m[a];
            rest /= self.m[a];
        }
        out
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for a in 0..self.dim() {
            idx = idx * self.m[a] + multi[a];
        }
        idx
    }

    /// Cell-center coordinates of a node.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let multi = self.multi(flat);
        (0..self.dim())
            .map(|a| self.lo[a] + (multi[a] as f64 + 0.5) * self.spacing(a))
            .collect()
    }

    /// Neighbor одного step along `axis`; `None` across the boundary.
    pub fn neighbor(&self, flat: usize, axis: usize, dir: i64) -> Option<usize> {
        let mut multi = self.multi(flat);
        let next = multi[axis] as i64 + dir;
        if next < 0 || next >= self.m[axis] as i64 {
            return None;
        }
        multi[axis] = next as usize;
        Some(self.flat(&multi))
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let multi = self.multi(flat);
        (0..self.dim()).any(|a| multi[a] == 0 || multi[a] == self.m[a] - 1)
    }

    /// Grid scaled by `factor` about the origin (same cell counts).
    pub fn scaled(&self, factor: f64) -> Grid {
        Grid {
            lo: self.lo.iter().map(|v| v * factor).collect(),
            hi: self.hi.iter().map(|v| v * factor).collect(),
            m: self.m.clone(),
        }
    }
}

/// Nonnegative probability density on a grid (midpoint quadrature mass 1).
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Density profiles sampled at grid nodes by [`make_density`].
#[derive(Debug, Clone)]
pub enum Profile {
    /// Constant on a sub-box, zero outside.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// `exp(-‖x - center‖² / (4a))` for the given norm.
    GaussianLike { norm: NormSpec, center: Vec<f64>, a: f64 },
    /// Analytic tent density, optionally mollified by a bump of radius
    /// `mollify_cells` grid cells.
    Triangle { tri: TriangleDensity, mollify_cells: f64 },
    /// Mixture of Euclidean Gaussian bumps `(weight, center, a)`.
    Mixture { components: Vec<(f64, Vec<f64>, f64)> },
    /// Explicit node table (row-major).
    Table(Vec<f64>),
}

/// Sample a profile at the nodes, clip negatives at zero and normalize to
/// total mass one.
pub fn make_density(grid: &Grid, profile: &Profile) -> Result<GridDensity> {
    let n = grid.len();
    let values: Vec<f64> = match profile {
        Profile::Uniform { lo, hi } => exec::indexed_map(n, |i| {
            let x = grid.node(i);
            let inside = (0..grid.dim()).all(|a| x[a] >= lo[a] && x[a] <= hi[a]);
            if inside {
                1.0
            } else {
                0.0
            }
        }),
        Profile::GaussianLike { norm, center, a } => {
            if !(a > &0.0) {
                return Err(Error::InvalidConfig("gaussian width a must be > 0".into()));
            }
            exec::indexed_map(n, |i| {
                let x = grid.node(i);
                let d: Vec<f64> = x.iter().zip(center).map(|(p, c)| p - c).collect();
                let nd = norm.eval(&d);
                (-nd * nd / (4.0 * a)).exp()
            })
        }
        Profile::Triangle { tri, mollify_cells } => {
            let h = mollify_cells * grid.min_spacing();
            exec::indexed_map(n, |i| {
                let x = grid.node(i);
                tri.eval_mollified(&x, h)
            })
        }
        Profile::Mixture { components } => exec::indexed_map(n, |i| {
            let x = grid.node(i);
            components
                .iter()
                .map(|(w, c, a)| {
                    let d2: f64 = x.iter().zip(c).map(|(p, q)| (p - q) * (p - q)).sum();
                    w * (-d2 / (4.0 * a)).exp()
                })
                .sum()
        }),
        Profile::Table(t) => {
            if t.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: t.len() });
            }
            t.clone()
        }
    };
    GridDensity::from_raw(grid.clone(), values)
}

impl GridDensity {
    /// Clip negatives at zero and normalize to mass one.
    pub fn from_raw(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total: f64 = values.iter().sum::<f64>() * grid.cell_volume();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        for v in values.iter_mut() {
            *v /= total;
        }
        Ok(GridDensity { grid, values })
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Total mass sitting in boundary cells.
    pub fn boundary_mass(&self) -> f64 {
        let vol = self.grid.cell_volume();
        (0..self.grid.len())
            .filter(|&i| self.grid.is_boundary(i))
            .map(|i| self.values[i] * vol)
            .sum()
    }

    /// `∫ ρ log ρ dx` with `0 log 0 = 0`.
    pub fn relative_entropy(&self) -> f64 {
        let vol = self.grid.cell_volume();
        exec::sum_indexed(self.grid.len(), |i| {
            let r = self.values[i];
            if r > 0.0 {
                r * r.ln() * vol
            } else {
                0.0
            }
        })
    }

    /// `(∫ ‖x‖² dμ, ∫ ‖-x‖² dμ)`.
    pub fn second_moments(&self, norm: &NormSpec) -> (f64, f64) {
        let vol = self.grid.cell_volume();
        let parts = exec::indexed_map(self.grid.len(), |i| {
            let r = self.values[i];
            if r == 0.0 {
                return (0.0, 0.0);
            }
            let x = self.grid.node(i);
            let mx: Vec<f64> = x.iter().map(|v| -v).collect();
            let f = norm.eval(&x);
            let b = norm.eval(&mx);
            (f * f * r * vol, b * b * r * vol)
        });
        let mut fwd = 0.0;
        let mut bwd = 0.0;
        for (f, b) in parts {
            fwd += f;
            bwd += b;
        }
        (fwd, bwd)
    }

    /// Central-difference differential `Dρ` at a node (one-sided at the
    /// boundary), as a covector.
    pub fn node_differential(&self, flat: usize) -> Vec<f64> {
        let dim = self.grid.dim();
        let mut d = vec![0.0; dim];
        for a in 0..dim {
            let h = self.grid.spacing(a);
            let up = self.grid.neighbor(flat, a, 1);
            let dn = self.grid.neighbor(flat, a, -1);
            d[a] = match (dn, up) {
                (Some(l), Some(r)) => (self.values[r] - self.values[l]) / (2.0 * h),
                (None, Some(r)) => (self.values[r] - self.values[flat]) / h,
                (Some(l), None) => (self.values[flat] - self.values[l]) / h,
                (None, None) => 0.0,
            };
        }
        d
    }

    /// Pushforward under `x ↦ factor·x` realized on the rescaled grid:
    /// identical node layout, values multiplied by `factor^{-n}`. Exact in
    /// mass and matched in quadrature nodes.
    pub fn rescaled(&self, factor: f64) -> Result<GridDensity> {
        if !(factor > 0.0) {
            return Err(Error::DegenerateScale { s: factor, t_param: 0.0 });
        }
        let n = self.grid.dim() as i32;
        let values: Vec<f64> =
            self.values.iter().map(|v| v * factor.powi(-n)).collect();
        Ok(GridDensity { grid: self.grid.scaled(factor), values })
    }
}

/// One n-vector per grid node (node-major storage).
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Grid,
    pub comps: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        let comps = vec![0.0; grid.len() * grid.dim()];
        VectorField { grid, comps }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Vec<f64> + Sync + Send) -> Self {
        let dim = grid.dim();
        let rows = exec::indexed_map(grid.len(), |i| f(&grid.node(i)));
        let mut comps = vec![0.0; grid.len() * dim];
        for (i, row) in rows.iter().enumerate() {
            comps[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        VectorField { grid, comps }
    }

    pub fn get(&self, node: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.comps[node * d..(node + 1) * d]
    }

    /// `F_μ(Φ)² = ∫ ‖Φ‖² dμ`.
    pub fn l2_sq_mu(&self, norm: &NormSpec, mu: &GridDensity) -> f64 {
        let vol = self.grid.cell_volume();
        exec::sum_indexed(self.grid.len(), |i| {
            let r = mu.values[i];
            if r == 0.0 {
                return 0.0;
            }
            let v = self.get(i);
            let n = norm.eval(v);
            n * n * r * vol
        })
    }
}

/// The unique minimal geodesic from `mu` toward the Dirac at the origin:
/// pushforward under `x ↦ (1 - s/T)·x`, computed analytically on the
/// rescaled grid, together with the tangent field `ω̇_s(x) = -x/(T - s)`.
pub fn contraction_geodesic(
    mu: &GridDensity,
    t_param: f64,
    s: f64,
) -> Result<(GridDensity, VectorField)> {
    if !(t_param > 1.0) || !(0.0..t_param).contains(&s) {
        return Err(Error::DegenerateScale { s, t_param });
    }
    let factor = 1.0 - s / t_param;
    let density = mu.rescaled(factor)?;
    let rate = -1.0 / (t_param - s);
    let field = VectorField::from_fn(density.grid.clone(), |x| {
        x.iter().map(|v| v * rate).collect()
    });
    Ok((density, field))
}

/// `ρ_ε(x) = ε^{-n} ρ(ε^{-1} x)` on the co-rescaled grid; mass is preserved
/// exactly and the quadrature nodes stay matched, so `Θ(ρ_ε) = ε^{-2} Θ(ρ)`
/// holds to roundoff.
pub fn scale_density(mu: &GridDensity, eps: f64) -> Result<GridDensity> {
    if !(eps > 0.0) {
        return Err(Error::SupportOverflow);
    }
    mu.rescaled(eps)
}
