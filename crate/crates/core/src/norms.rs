//! Parametric Minkowski norm families with analytic derivative structure.
//!
//! A Minkowski norm here is positively 1-homogeneous (`‖cx‖ = c‖x‖` for
//! `c > 0`), strictly positive off the origin and strongly convex: the
//! metric tensor `g_ij(x) = ½ ∂²(‖·‖²)/∂xi∂xj` is positive definite for
//! `x ≠ 0`. Symmetry is *not* assumed, so `‖-x‖ ≠ ‖x‖` is allowed.
//!
//! The families form a closed enumeration with analytic first and second
//! derivatives, so strong convexity is guaranteed by construction instead
//! of being assumed of arbitrary user callables. The `p`-norm family is
//! admitted with `eps = 0` for evaluation and quadrature only; operations
//! that need an invertible metric reject the degenerate axis points.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;

/// The closed enumeration of supported norm families.
#[derive(Debug, Clone)]
pub enum NormFamily {
    /// `‖x‖² = xᵀ A x` for a symmetric positive-definite `A`.
    Quadratic { matrix: Vec<f64> },
    /// `‖x‖² = ‖Sx‖_p² + eps·|Sx|₂²` with an invertible shear `S`.
    RegularizedP { p: f64, eps: f64, shear: Vec<f64> },
    /// Gauge of the unit Euclidean ball translated to `center`, `|center| < 1`.
    ShiftedBall { center: Vec<f64> },
    /// `‖x‖ = inner‖-x‖`.
    Reversed { inner: Box<NormSpec> },
}

/// A norm family together with its dimension and write-once caches.
#[derive(Debug, Clone)]
pub struct NormSpec {
    dim: usize,
    family: NormFamily,
    /// Cached inverse of `A` for the quadratic family.
    quad_inverse: Option<Vec<f64>>,
    /// Cached off-axis ellipticity estimate (lo, hi) used to seed Newton
    /// iterations and the heat-solver stability bound.
    lambda_cache: OnceLock<(f64, f64)>,
}

/// The symmetric matrix `g_ij(x)` at a base point `x != 0`.
#[derive(Debug, Clone)]
pub struct MetricTensor {
    pub at: Vec<f64>,
    /// Row-major `n x n` entries.
    pub entries: Vec<f64>,
}

impl MetricTensor {
    pub fn dim(&self) -> usize {
        self.at.len()
    }

    /// Bilinear form `g_x(a, b)`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.entries[i * n + j] * a[i] * b[j];
            }
        }
        acc
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.entries, self.dim())
    }
}

/// Empirical uniform-ellipticity bounds `0 < λ ≤ Λ` over sampled directions.
#[derive(Debug, Clone, Copy)]
pub struct EllipticityBounds {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

/// The 2-uniform convexity and smoothness constants, both `>= 1`, equal to 1
/// exactly when the norm is an inner product.
#[derive(Debug, Clone, Copy)]
pub struct UniformConstants {
    pub c_const: f64,
    pub s_const: f64,
    pub resolution: usize,
}

const NEWTON_MAX_ITER: usize = 100;
const DEGENERACY_TOL: f64 = 1e-12;

impl NormSpec {
    pub fn quadratic(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: matrix.len() });
        }
        for i in 0..dim {
            for j in 0..i {
                if (matrix[i * dim + j] - matrix[j * dim + i]).abs()
                    > 1e-12 * (1.0 + matrix[i * dim + j].abs())
                {
                    return Err(Error::InvalidNorm("matrix is not symmetric".into()));
                }
            }
        }
        let eigs = linalg::sym_eigenvalues(&matrix, dim);
        if eigs[0] <= 0.0 {
            return Err(Error::InvalidNorm(format!(
                "matrix is not positive definite (min eigenvalue {:.3e})",
                eigs[0]
            )));
        }
        let quad_inverse = linalg::invert(&matrix, dim);
        Ok(NormSpec {
            dim,
            family: NormFamily::Quadratic { matrix },
            quad_inverse,
            lambda_cache: OnceLock::new(),
        })
    }

    pub fn euclidean(dim: usize) -> Self {
        let mut id = vec![0.0; dim * dim];
        for i in 0..dim {
            id[i * dim + i] = 1.0;
        }
        Self::quadratic(dim, id).expect("identity is SPD")
    }

    pub fn regularized_p(dim: usize, p: f64, eps: f64, shear: Vec<f64>) -> Result<Self> {
        if !(p > 2.0) {
            return Err(Error::InvalidNorm(format!("regularized_p needs p > 2, got {p}")));
        }
        if eps < 0.0 {
            return Err(Error::InvalidNorm(format!("eps must be >= 0, got {eps}")));
        }
        if shear.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: shear.len() });
        }
        if linalg::invert(&shear, dim).is_none() {
            return Err(Error::InvalidNorm("shear matrix is singular".into()));
        }
        Ok(NormSpec {
            dim,
            family: NormFamily::RegularizedP { p, eps, shear },
            quad_inverse: None,
            lambda_cache: OnceLock::new(),
        })
    }

    /// `ℓ_p` norm with an isotropic regularization and no shear.
    pub fn lp(dim: usize, p: f64, eps: f64) -> Result<Self> {
        let mut id = vec![0.0; dim * dim];
        for i in 0..dim {
            id[i * dim + i] = 1.0;
        }
        Self::regularized_p(dim, p, eps, id)
    }

    pub fn shifted_ball(center: Vec<f64>) -> Result<Self> {
        let c2 = linalg::dot(&center, &center);
        if c2 >= 1.0 {
            return Err(Error::InvalidNorm(format!(
                "ball center must satisfy |c| < 1, got |c| = {}",
                c2.sqrt()
            )));
        }
        Ok(NormSpec {
            dim: center.len(),
            family: NormFamily::ShiftedBall { center },
            quad_inverse: None,
            lambda_cache: OnceLock::new(),
        })
    }

    /// Wrap in the reversed family, `‖x‖ ↦ ‖-x‖`. Reversing a reversed norm
    /// unwraps back to the structural original.
    pub fn reverse(&self) -> NormSpec {
        match &self.family {
            NormFamily::Reversed { inner } => (**inner).clone(),
            _ => NormSpec {
                dim: self.dim,
                family: NormFamily::Reversed { inner: Box::new(self.clone()) },
                quad_inverse: None,
                lambda_cache: OnceLock::new(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &NormFamily {
        &self.family
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// `‖x‖`; zero exactly when `x = 0`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.family {
            NormFamily::Quadratic { matrix } => {
                let n = self.dim;
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += matrix[i * n + j] * x[i] * x[j];
                    }
                }
                acc.max(0.0).sqrt()
            }
            NormFamily::RegularizedP { p, eps, shear } => {
                let u = apply(shear, x);
                let q: f64 = u.iter().map(|v| v.abs().powf(*p)).sum();
                let e2: f64 = linalg::dot(&u, &u);
                (q.powf(2.0 / p) + eps * e2).sqrt()
            }
            NormFamily::ShiftedBall { center } => shifted_gauge(center, x).0,
            NormFamily::Reversed { inner } => inner.eval(&neg(x)),
        }
    }

    /// Checked variant of [`eval`](Self::eval) for external inputs.
    pub fn norm_eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.eval(x))
    }

    /// The Legendre transform `L(x) = ½ D(‖·‖²)(x)` as a covector;
    /// `L(0) = 0`. Satisfies `[L(x)](x) = ‖x‖²` and `Σ_i g_ij(x) xⁱ = L_j(x)`.
    pub fn legendre(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        if is_zero(x) {
            return vec![0.0; self.dim];
        }
        match &self.family {
            NormFamily::Quadratic { matrix } => {
                let mut w = vec![0.0; self.dim];
                linalg::matvec(matrix, x, &mut w);
                w
            }
            NormFamily::RegularizedP { p, eps, shear } => {
                let n = self.dim;
                let u = apply(shear, x);
                let q: f64 = u.iter().map(|v| v.abs().powf(*p)).sum();
                let qpow = q.powf(2.0 / p - 1.0);
                // grad in u-coordinates, then pull back through the shear
                let gu: Vec<f64> = u
                    .iter()
                    .map(|&ui| qpow * ui.abs().powf(p - 1.0) * ui.signum() + eps * ui)
                    .collect();
                let mut w = vec![0.0; n];
                for j in 0..n {
                    for i in 0..n {
                        w[j] += shear[i * n + j] * gu[i]; // Sᵀ gu
                    }
                }
                w
            }
            NormFamily::ShiftedBall { center } => {
                let (gamma, grad) = shifted_gauge(center, x);
                grad.iter().map(|g| gamma * g).collect()
            }
            NormFamily::Reversed { inner } => neg(&inner.legendre(&neg(x))),
        }
    }

    /// Metric tensor `g_ij(x)`, validated to be positive definite.
    pub fn metric_tensor(&self, x: &[f64]) -> Result<MetricTensor> {
        self.check_dim(x)?;
        if is_zero(x) {
            return Err(Error::ZeroVector);
        }
        let entries = self.metric_entries(x);
        let eigs = linalg::sym_eigenvalues(&entries, self.dim);
        if eigs[0] < DEGENERACY_TOL {
            return Err(Error::DegenerateHessian(eigs[0]));
        }
        Ok(MetricTensor { at: x.to_vec(), entries })
    }

    /// Raw metric entries without the definiteness check.
    fn metric_entries(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        match &self.family {
            NormFamily::Quadratic { matrix } => matrix.clone(),
            NormFamily::RegularizedP { p, eps, shear } => {
                let u = apply(shear, x);
                let q: f64 = u.iter().map(|v| v.abs().powf(*p)).sum();
                let s: Vec<f64> = u.iter().map(|&ui| ui.abs().powf(p - 1.0) * ui.signum()).collect();
                let d: Vec<f64> = u.iter().map(|&ui| ui.abs().powf(p - 2.0)).collect();
                let c1 = (2.0 - p) * q.powf(2.0 / p - 2.0);
                let c2 = (p - 1.0) * q.powf(2.0 / p - 1.0);
                // ½ H_u(‖u‖_p² + eps|u|²) = c1·ssᵀ + c2·diag(d) + eps·I
                let mut hu = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        hu[i * n + j] = c1 * s[i] * s[j];
                    }
                    hu[i * n + i] += c2 * d[i] + eps;
                }
                congruence(shear, &hu, n)
            }
            NormFamily::ShiftedBall { center } => {
                let (gamma, grad) = shifted_gauge(center, x);
                let k = 1.0 - linalg::dot(center, center);
                let xc = linalg::dot(x, center);
                let disc = (xc * xc + k * linalg::dot(x, x)).sqrt();
                // p = <x,c>·c + k·x
                let pvec: Vec<f64> = (0..n).map(|i| xc * center[i] + k * x[i]).collect();
                let mut g = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        let hess_gamma = ((center[i] * center[j] + if i == j { k } else { 0.0 })
                            / disc
                            - pvec[i] * pvec[j] / (disc * disc * disc))
                            / k;
                        g[i * n + j] = grad[i] * grad[j] + gamma * hess_gamma;
                    }
                }
                g
            }
            NormFamily::Reversed { inner } => inner.metric_entries(&neg(x)),
        }
    }

    /// `g_x(a, b)`; bilinear and symmetric in `(a, b)`.
    pub fn inner_g(&self, x: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        Ok(self.metric_tensor(x)?.inner(a, b))
    }

    /// `g_v(v, w)` via the identity `g_v(v, ·) = L(v)`: one Legendre
    /// evaluation instead of a full tensor assembly.
    pub fn inner_g_base(&self, v: &[f64], w: &[f64]) -> f64 {
        linalg::dot(&self.legendre(v), w)
    }

    /// Inverse Legendre transform `L*(w) = L⁻¹(w)` by damped Newton
    /// iteration with the metric tensor as Jacobian.
    pub fn legendre_inverse(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let lo = self.lambda_hat()?.0;
        let scale = 1.0 / lo.max(1e-8);
        let guess: Vec<f64> = w.iter().map(|&wi| wi * scale).collect();
        self.legendre_inverse_with_guess(w, &guess)
    }

    /// [`legendre_inverse`](Self::legendre_inverse) with a caller-provided
    /// starting point (used to warm-start PDE sweeps).
    pub fn legendre_inverse_with_guess(&self, w: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        if is_zero(w) {
            return Ok(vec![0.0; self.dim]);
        }
        match &self.family {
            NormFamily::Quadratic { .. } => {
                let inv = self.quad_inverse.as_ref().expect("cached at construction");
                let mut x = vec![0.0; self.dim];
                linalg::matvec(inv, w, &mut x);
                Ok(x)
            }
            NormFamily::Reversed { inner } => {
                Ok(neg(&inner.legendre_inverse_with_guess(&neg(w), &neg(guess))?))
            }
            _ => self.newton_inverse(w, guess),
        }
    }

    fn newton_inverse(&self, w: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        let w_norm = linalg::norm2(w);
        // accept at the contract tolerance, but keep polishing toward the
        // floating-point floor so the x-space roundtrip stays ~1e-13 even
        // when the metric is badly conditioned (lambda_min ~ eps)
        let tol_accept = 1e-12 * (1.0 + w_norm);
        let tol_target = 1e-15 * (1.0 + w_norm);
        let mut x = if is_zero(guess) { w.to_vec() } else { guess.to_vec() };
        let mut res: Vec<f64> = sub(&self.legendre(&x), w);
        let mut res_norm = linalg::norm2(&res);
        for _ in 0..NEWTON_MAX_ITER {
            if res_norm < tol_target {
                return Ok(x);
            }
            let mut jac = self.metric_entries(&x);
            let mut step = res.clone();
            if !linalg::solve_in_place(&mut jac, &mut step) {
                break;
            }
            // damping: halve until the residual actually decreases
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand: Vec<f64> = (0..n).map(|i| x[i] - alpha * step[i]).collect();
                let cand_res = sub(&self.legendre(&cand), w);
                let cand_norm = linalg::norm2(&cand_res);
                if cand_norm < res_norm {
                    x = cand;
                    res = cand_res;
                    res_norm = cand_norm;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if res_norm < tol_accept {
            Ok(x)
        } else {
            Err(Error::NewtonDivergence(res_norm))
        }
    }

    /// Gradient vector `∇f = L*(Df)` of a function with differential `df`.
    pub fn gradient_vector(&self, df: &[f64]) -> Result<Vec<f64>> {
        self.legendre_inverse(df)
    }

    /// Dual norm via the round trip `‖w‖_* = ‖L*(w)‖`.
    pub fn dual_norm(&self, w: &[f64]) -> Result<f64> {
        Ok(self.eval(&self.legendre_inverse(w)?))
    }

    /// Min/max eigenvalue of `g_ij` over `samples` unit directions. The
    /// angular grid includes the coordinate axes, so degenerate families
    /// (`eps = 0` on an axis) are detected.
    pub fn ellipticity_bounds(&self, samples: usize) -> Result<EllipticityBounds> {
        let samples = samples.max(1);
        let dirs = unit_directions(self.dim, samples, 0.0);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for d in &dirs {
            let entries = self.metric_entries(d);
            let eigs = linalg::sym_eigenvalues(&entries, self.dim);
            if eigs[0] < DEGENERACY_TOL {
                return Err(Error::DegenerateHessian(eigs[0]));
            }
            lo = lo.min(eigs[0]);
            hi = hi.max(eigs[self.dim - 1]);
        }
        Ok(EllipticityBounds { lambda_lo: lo, lambda_hi: hi })
    }

    /// Cached off-axis ellipticity estimate `(lo, hi)`; seeds Newton starts
    /// and the explicit heat-step stability bound. Write-once per spec.
    pub fn lambda_hat(&self) -> Result<(f64, f64)> {
        if let Some(v) = self.lambda_cache.get() {
            return Ok(*v);
        }
        // offset grid avoids the axes, where eps = 0 families degenerate
        let dirs = unit_directions(self.dim, 64, 0.37);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for d in &dirs {
            let eigs = linalg::sym_eigenvalues(&self.metric_entries(d), self.dim);
            if eigs[0] < DEGENERACY_TOL {
                return Err(Error::DegenerateHessian(eigs[0]));
            }
            lo = lo.min(eigs[0]);
            hi = hi.max(eigs[self.dim - 1]);
        }
        Ok(*self.lambda_cache.get_or_init(|| (lo, hi)))
    }

    /// Estimate the 2-uniform convexity and smoothness constants
    /// `C = sup ‖y‖ / g_x(y,y)^{1/2}` and `S = sup g_x(y,y)^{1/2} / ‖y‖`
    /// over a product grid of unit directions, with a pattern-search
    /// refinement around each grid argmax. Nondecreasing in resolution for
    /// nested grids.
    pub fn uniform_constants(&self, angular_resolution: usize) -> Result<UniformConstants> {
        if angular_resolution < 16 {
            return Err(Error::InvalidConfig(format!(
                "angular_resolution must be >= 16, got {angular_resolution}"
            )));
        }
        let dirs = unit_directions(self.dim, angular_resolution, 0.0);
        let tensors: Vec<Vec<f64>> =
            exec::indexed_map(dirs.len(), |i| self.metric_entries(&dirs[i]));
        let m = dirs.len();
        // ratio2[i*m+j] = g_{x_i}(y_j, y_j) / ‖y_j‖²
        let rows = exec::indexed_map(m, |i| {
            let mut row = vec![0.0; m];
            for j in 0..m {
                let y = &dirs[j];
                let ny2 = {
                    let v = self.eval(y);
                    v * v
                };
                let g = quad_form(&tensors[i], y);
                row[j] = g / ny2;
            }
            row
        });
        let mut best_s = (1.0f64, 0usize, 0usize);
        let mut best_c = (1.0f64, 0usize, 0usize);
        for i in 0..m {
            for j in 0..m {
                let r = rows[i][j];
                if r > best_s.0 {
                    best_s = (r, i, j);
                }
                if 1.0 / r > best_c.0 {
                    best_c = (1.0 / r, i, j);
                }
            }
        }
        let s2 = self.refine_ratio(&dirs[best_s.1], &dirs[best_s.2], false).max(best_s.0);
        let c2 = self.refine_ratio(&dirs[best_c.1], &dirs[best_c.2], true).max(best_c.0);
        Ok(UniformConstants {
            c_const: c2.max(1.0).sqrt(),
            s_const: s2.max(1.0).sqrt(),
            resolution: angular_resolution,
        })
    }

    /// Pattern search on the pair of directions maximizing the (possibly
    /// inverted) ratio `g_x(y,y)/‖y‖²`.
    fn refine_ratio(&self, x0: &[f64], y0: &[f64], inverted: bool) -> f64 {
        let eval = |x: &[f64], y: &[f64]| -> f64 {
            let g = quad_form(&self.metric_entries(x), y);
            let ny = self.eval(y);
            let r = g / (ny * ny);
            if inverted {
                1.0 / r
            } else {
                r
            }
        };
        let n = self.dim;
        let mut x = x0.to_vec();
        let mut y = y0.to_vec();
        let mut best = eval(&x, &y);
        let mut step = 0.2;
        for _ in 0..50 {
            let mut improved = false;
            for k in 0..2 * n {
                let (target, idx) = if k < n { (0usize, k) } else { (1usize, k - n) };
                for sgn in [-1.0, 1.0] {
                    let mut xc = x.clone();
                    let mut yc = y.clone();
                    let v = if target == 0 { &mut xc } else { &mut yc };
                    v[idx] += sgn * step;
                    let nv = linalg::norm2(v);
                    if nv < 1e-9 {
                        continue;
                    }
                    for t in v.iter_mut() {
                        *t /= nv;
                    }
                    let cand = eval(&xc, &yc);
                    if cand > best {
                        best = cand;
                        x = xc;
                        y = yc;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.6;
                if step < 1e-10 {
                    break;
                }
            }
        }
        best
    }

    /// Sampled symmetry check: `max |‖x‖ - ‖-x‖| / ‖x‖` over unit directions.
    pub fn symmetry_defect(&self, samples: usize) -> f64 {
        let dirs = unit_directions(self.dim, samples.max(8), 0.11);
        let mut worst = 0.0f64;
        for d in &dirs {
            let a = self.eval(d);
            let b = self.eval(&neg(d));
            worst = worst.max((a - b).abs() / a.max(1e-300));
        }
        worst
    }
}

/// `q(y) = yᵀ M y` for row-major `M`.
fn quad_form(m: &[f64], y: &[f64]) -> f64 {
    let n = y.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += m[i * n + j] * y[i] * y[j];
        }
    }
    acc
}

/// `SᵀHS` for row-major matrices.
fn congruence(s: &[f64], h: &[f64], n: usize) -> Vec<f64> {
    let mut hs = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += h[i * n + k] * s[k * n + j];
            }
            hs[i * n + j] = acc;
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += s[k * n + i] * hs[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn apply(m: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut y = vec![0.0; n];
    linalg::matvec(&m[..n * n], x, &mut y);
    y
}

fn neg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| -v).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn is_zero(x: &[f64]) -> bool {
    x.iter().all(|&v| v == 0.0)
}

/// Gauge `γ(x)` of the unit ball shifted to `c`, and its Euclidean gradient.
/// Closed form: `γ = (-<x,c> + sqrt(<x,c>² + (1-|c|²)|x|²)) / (1-|c|²)`.
fn shifted_gauge(center: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    let k = 1.0 - linalg::dot(center, center);
    let xc = linalg::dot(x, center);
    let xx = linalg::dot(x, x);
    if xx == 0.0 {
        return (0.0, vec![0.0; n]);
    }
    let disc = (xc * xc + k * xx).sqrt();
    let gamma = (-xc + disc) / k;
    let grad: Vec<f64> =
        (0..n).map(|i| (-center[i] + (xc * center[i] + k * x[i]) / disc) / k).collect();
    (gamma, grad)
}

/// Deterministic unit directions (w.r.t. the Euclidean sphere): an angular
/// grid in 2D, a Fibonacci sphere in 3D, and a seeded-free golden-ratio
/// lattice projected to the sphere for n > 3. `offset` shifts the grid off
/// the coordinate axes when nonzero.
pub fn unit_directions(dim: usize, count: usize, offset: f64) -> Vec<Vec<f64>> {
    let count = count.max(1);
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * (k as f64 + offset) / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5 + offset) / count as f64;
                    let z = z.clamp(-1.0, 1.0);
                    let r = (1.0 - z * z).sqrt();
                    let th = 2.0 * std::f64::consts::PI * (k as f64) / golden;
                    vec![r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
        _ => {
            // low-discrepancy lattice pushed through a smooth map to the sphere
            (0..count)
                .map(|k| {
                    let mut v: Vec<f64> = (0..dim)
                        .map(|d| {
                            let a = ((k as f64 + offset + 1.0) * (d as f64 + 1.618)).sin();
                            let b = ((k as f64 + 2.0 * offset) * 0.7548776662 + d as f64).cos();
                            a + 0.5 * b
                        })
                        .collect();
                    let nv = linalg::norm2(&v);
                    for t in v.iter_mut() {
                        *t /= nv;
                    }
                    v
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn sample_specs() -> Vec<(&'static str, NormSpec)> {
        vec![
            ("euclidean", NormSpec::euclidean(2)),
            ("quadratic_diag", NormSpec::quadratic(2, vec![1.0, 0.3, 0.3, 4.0]).unwrap()),
            ("reg_l4", NormSpec::lp(2, 4.0, 1e-3).unwrap()),
            (
                "sheared_l8",
                NormSpec::regularized_p(2, 8.0, 1e-3, vec![1.0, 0.9, 0.0, 1.0]).unwrap(),
            ),
            ("shifted_ball", NormSpec::shifted_ball(vec![0.5, 0.0]).unwrap()),
            (
                "reversed_ball",
                NormSpec::shifted_ball(vec![0.3, 0.2]).unwrap().reverse(),
            ),
            ("reg_l4_3d", NormSpec::lp(3, 4.0, 1e-3).unwrap()),
        ]
    }

    fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        loop {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if linalg::norm2(&x) > 1e-3 {
                return x;
            }
        }
    }

    /// Central-difference Hessian of ‖·‖²/2 with one Richardson step: the
    /// independent oracle for the analytic metric tensors. The extrapolation
    /// kills the O(h²) truncation term, which dominates for the p = 8
    /// families whose fourth derivatives are large.
    fn fd_metric(spec: &NormSpec, x: &[f64], h: f64) -> Vec<f64> {
        let single = |h: f64| {
            let n = x.len();
            let f = |y: &[f64]| {
                let v = spec.eval(y);
                0.5 * v * v
            };
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut xpp = x.to_vec();
                    let mut xpm = x.to_vec();
                    let mut xmp = x.to_vec();
                    let mut xmm = x.to_vec();
                    xpp[i] += h;
                    xpp[j] += h;
                    xpm[i] += h;
                    xpm[j] -= h;
                    xmp[i] -= h;
                    xmp[j] += h;
                    xmm[i] -= h;
                    xmm[j] -= h;
                    out[i * n + j] = (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h * h);
                }
            }
            out
        };
        let fine = single(h);
        let coarse = single(2.0 * h);
        fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
    }

    #[test]
    fn norm_eval_closed_forms() {
        let euc = NormSpec::euclidean(2);
        assert_relative_eq!(euc.eval(&[3.0, 4.0]), 5.0, epsilon = 1e-14);

        let ball = NormSpec::shifted_ball(vec![0.5, 0.0]).unwrap();
        assert_relative_eq!(ball.eval(&[1.0, 0.0]), 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(ball.eval(&[-1.0, 0.0]), 2.0, epsilon = 1e-12);

        let l4 = NormSpec::lp(2, 4.0, 0.0).unwrap();
        assert_relative_eq!(l4.eval(&[1.0, 1.0]), 2f64.powf(0.25), epsilon = 1e-12);

        assert_eq!(euc.eval(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn homogeneity_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (name, spec) in sample_specs() {
            for _ in 0..1000 {
                let x = random_point(&mut rng, spec.dim());
                let nx = spec.eval(&x);
                assert!(nx > 0.0, "{name}: ‖x‖ must be positive off the origin");
                for c in [0.5, 2.0, 10.0] {
                    let cx: Vec<f64> = x.iter().map(|v| v * c).collect();
                    assert!(
                        (spec.eval(&cx) - c * nx).abs() <= 1e-12 * c * nx,
                        "{name}: homogeneity violated"
                    );
                }
            }
        }
    }

    #[test]
    fn triangle_inequality_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (name, spec) in sample_specs() {
            for _ in 0..500 {
                let x = random_point(&mut rng, spec.dim());
                let y = random_point(&mut rng, spec.dim());
                let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                assert!(
                    spec.eval(&sum) <= spec.eval(&x) + spec.eval(&y) + 1e-12,
                    "{name}: triangle inequality violated"
                );
            }
        }
    }

    #[test]
    fn metric_matches_finite_differences() {
        // Oracle step: with h = 1e-5 the f64 cancellation floor eps/h² ~ 2e-6
        // already exceeds the 1e-6 target, so the oracle runs at h = 1e-4
        // where truncation and roundoff both sit near 1e-7.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (name, spec) in sample_specs() {
            for _ in 0..100 {
                let x = random_point(&mut rng, spec.dim());
                let g = spec.metric_tensor(&x).unwrap();
                let fd = fd_metric(&spec, &x, 1e-4);
                let scale = g.entries.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                for (a, b) in g.entries.iter().zip(&fd) {
                    assert!(
                        (a - b).abs() <= 1e-6 * scale.max(1.0),
                        "{name}: analytic {a} vs fd {b} at {x:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn metric_zero_homogeneity_and_quadratic_identity() {
        let quad = NormSpec::quadratic(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let g = quad.metric_tensor(&[0.3, -0.7]).unwrap();
        assert_eq!(g.entries, vec![2.0, 0.5, 0.5, 1.0]);

        for (name, spec) in sample_specs() {
            let x: Vec<f64> = (0..spec.dim()).map(|i| 0.4 + 0.3 * i as f64).collect();
            let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            let g1 = spec.metric_tensor(&x).unwrap();
            let g2 = spec.metric_tensor(&x2).unwrap();
            for (a, b) in g1.entries.iter().zip(&g2.entries) {
                assert!((a - b).abs() < 1e-9, "{name}: g is not 0-homogeneous");
            }
        }
    }

    #[test]
    fn metric_rejects_origin_and_degenerate_axis() {
        let spec = NormSpec::lp(2, 4.0, 0.0).unwrap();
        assert!(matches!(spec.metric_tensor(&[0.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(spec.metric_tensor(&[1.0, 0.0]), Err(Error::DegenerateHessian(_))));
    }

    #[test]
    fn inner_g_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (name, spec) in sample_specs() {
            for _ in 0..200 {
                let x = random_point(&mut rng, spec.dim());
                let nx = spec.eval(&x);
                let gxx = spec.inner_g(&x, &x, &x).unwrap();
                assert!(
                    (gxx - nx * nx).abs() <= 1e-10 * nx * nx,
                    "{name}: g_x(x,x) = ‖x‖² violated: {gxx} vs {}",
                    nx * nx
                );
                let a = random_point(&mut rng, spec.dim());
                let zero = vec![0.0; spec.dim()];
                assert_eq!(spec.inner_g(&x, &a, &zero).unwrap(), 0.0);
                // fast path agrees with the tensor path
                let b = random_point(&mut rng, spec.dim());
                let fast = spec.inner_g_base(&x, &b);
                let full = spec.inner_g(&x, &x, &b).unwrap();
                assert!((fast - full).abs() <= 1e-9 * (1.0 + full.abs()), "{name}");
            }
        }
    }

    #[test]
    fn legendre_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (name, spec) in sample_specs() {
            for _ in 0..200 {
                let x = random_point(&mut rng, spec.dim());
                let w = spec.legendre(&x);
                let nx2 = spec.eval(&x).powi(2);
                assert!(
                    (linalg::dot(&w, &x) - nx2).abs() <= 1e-10 * nx2,
                    "{name}: [L(x)](x) = ‖x‖² violated"
                );
                // L is 1-homogeneous in positive direction
                let x2: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
                let w2 = spec.legendre(&x2);
                for (a, b) in w.iter().zip(&w2) {
                    assert!((3.0 * a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{name}");
                }
            }
        }
        // ℓ4 closed form at (1,1): L = ‖x‖₄⁻²·(1,1)
        let l4 = NormSpec::lp(2, 4.0, 0.0).unwrap();
        let w = l4.legendre(&[1.0, 1.0]);
        assert_relative_eq!(w[0], 2f64.powf(-0.5), epsilon = 1e-12);
        assert_relative_eq!(w[1], 2f64.powf(-0.5), epsilon = 1e-12);
        // quadratic(I): identity map
        let euc = NormSpec::euclidean(2);
        assert_eq!(euc.legendre(&[1.5, -2.0]), vec![1.5, -2.0]);
        assert_eq!(euc.legendre(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn legendre_inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (name, spec) in sample_specs() {
            for _ in 0..1000 {
                let x = random_point(&mut rng, spec.dim());
                let w = spec.legendre(&x);
                let back = spec.legendre_inverse(&w).unwrap();
                let err: f64 = x
                    .iter()
                    .zip(&back)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err <= 1e-10 * (1.0 + linalg::norm2(&x)), "{name}: roundtrip err {err}");
            }
        }
    }

    #[test]
    fn legendre_inverse_closed_forms() {
        let quad = NormSpec::quadratic(2, vec![2.0, 0.0, 0.0, 8.0]).unwrap();
        let x = quad.legendre_inverse(&[1.0, 2.0]).unwrap();
        assert_relative_eq!(x[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.25, epsilon = 1e-12);

        let ball = NormSpec::shifted_ball(vec![0.5, 0.0]).unwrap();
        let w = ball.legendre(&[-1.0, 0.0]);
        let back = ball.legendre_inverse(&w).unwrap();
        assert_relative_eq!(back[0], -1.0, epsilon = 1e-10);
        assert_relative_eq!(back[1], 0.0, epsilon = 1e-10);

        assert_eq!(quad.legendre_inverse(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_vector_semantics() {
        // for f(x) = ‖-x‖²/2, D(-f)(x) = L(-x) and ∇(-f)(x) = -x
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (name, spec) in sample_specs() {
            for _ in 0..100 {
                let x = random_point(&mut rng, spec.dim());
                let mx = neg(&x);
                let dnf = spec.legendre(&mx);
                let grad = spec.gradient_vector(&dnf).unwrap();
                for (a, b) in grad.iter().zip(&mx) {
                    assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{name}");
                }
            }
        }
    }

    #[test]
    fn dual_norm_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for (name, spec) in sample_specs() {
            for _ in 0..100 {
                let x = random_point(&mut rng, spec.dim());
                let w = spec.legendre(&x);
                let dual = spec.dual_norm(&w).unwrap();
                let nx = spec.eval(&x);
                assert!((dual - nx).abs() <= 1e-9 * nx, "{name}: ‖L(x)‖_* = ‖x‖ violated");
            }
        }
    }

    #[test]
    fn ellipticity_closed_forms() {
        let quad = NormSpec::quadratic(2, vec![1.0, 0.0, 0.0, 4.0]).unwrap();
        let b = quad.ellipticity_bounds(64).unwrap();
        assert_relative_eq!(b.lambda_lo, 1.0, epsilon = 1e-9);
        assert_relative_eq!(b.lambda_hi, 4.0, epsilon = 1e-9);

        let l4 = NormSpec::lp(2, 4.0, 1e-3).unwrap();
        let b = l4.ellipticity_bounds(256).unwrap();
        assert!(b.lambda_lo >= 1e-3 - 1e-12, "ℓ4 regularization floors the spectrum");
        assert!(b.lambda_lo > 0.0 && b.lambda_hi >= b.lambda_lo);

        let degenerate = NormSpec::lp(2, 4.0, 0.0).unwrap();
        assert!(matches!(degenerate.ellipticity_bounds(64), Err(Error::DegenerateHessian(_))));

        let ball = NormSpec::shifted_ball(vec![0.5, 0.0]).unwrap();
        assert!(ball.ellipticity_bounds(128).unwrap().lambda_lo > 0.0);
    }

    #[test]
    fn uniform_constants_inner_product_iff_one() {
        let quad = NormSpec::quadratic(2, vec![1.0, 0.2, 0.2, 3.0]).unwrap();
        let u = quad.uniform_constants(64).unwrap();
        assert!((u.c_const - 1.0).abs() < 1e-9);
        assert!((u.s_const - 1.0).abs() < 1e-9);

        let l4 = NormSpec::lp(2, 4.0, 1e-3).unwrap();
        let u = l4.uniform_constants(64).unwrap();
        assert!(u.c_const > 1.05, "C = {}", u.c_const);
        assert!(u.s_const > 1.05, "S = {}", u.s_const);

        // shifted ball degenerates to Euclidean as c -> 0
        let near = NormSpec::shifted_ball(vec![1e-5, 0.0]).unwrap();
        let u = near.uniform_constants(32).unwrap();
        assert!(u.c_const < 1.001 && u.s_const < 1.001);
    }

    #[test]
    fn uniform_constants_monotone_in_nested_resolution() {
        let l4 = NormSpec::lp(2, 4.0, 1e-3).unwrap();
        let lo = l4.uniform_constants(16).unwrap();
        let hi = l4.uniform_constants(64).unwrap();
        assert!(hi.c_const >= lo.c_const - 1e-12);
        assert!(hi.s_const >= lo.s_const - 1e-12);
    }

    #[test]
    fn reverse_family_arithmetic() {
        let ball = NormSpec::shifted_ball(vec![0.5, 0.0]).unwrap();
        let rev = ball.reverse();
        assert_relative_eq!(rev.eval(&[1.0, 0.0]), 2.0, epsilon = 1e-12);
        // double reversal is structurally the original
        let back = rev.reverse();
        assert!(matches!(back.family(), NormFamily::ShiftedBall { .. }));
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let x = random_point(&mut rng, 2);
            assert_relative_eq!(back.eval(&x), ball.eval(&x), epsilon = 1e-14);
        }
        // symmetric families are pointwise invariant under reversal
        let quad = NormSpec::quadratic(2, vec![1.0, 0.3, 0.3, 2.0]).unwrap();
        let qrev = quad.reverse();
        for _ in 0..100 {
            let x = random_point(&mut rng, 2);
            assert_relative_eq!(qrev.eval(&x), quad.eval(&x), epsilon = 1e-14);
        }
    }

    #[test]
    fn symmetry_defect_detects_shifted_ball() {
        assert!(NormSpec::lp(2, 4.0, 1e-3).unwrap().symmetry_defect(64) < 1e-12);
        assert!(NormSpec::shifted_ball(vec![0.5, 0.0]).unwrap().symmetry_defect(64) > 0.1);
    }

    #[test]
    fn constructor_validation() {
        assert!(NormSpec::quadratic(2, vec![1.0, 0.0, 0.0, -1.0]).is_err());
        assert!(NormSpec::quadratic(2, vec![1.0, 0.5, 0.0, 1.0]).is_err());
        assert!(NormSpec::lp(2, 2.0, 0.1).is_err());
        assert!(NormSpec::shifted_ball(vec![1.0, 0.0]).is_err());
        assert!(NormSpec::euclidean(2).norm_eval(&[1.0, 2.0, 3.0]).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn homogeneity_under_random_scales(
                xs in proptest::collection::vec(-3.0f64..3.0, 2),
                c in 0.01f64..50.0,
                which in 0usize..6
            ) {
                let specs = sample_specs();
                let (_, spec) = &specs[which % specs.len()];
                prop_assume!(spec.dim() == 2);
                prop_assume!(linalg::norm2(&xs) > 1e-3);
                let cx: Vec<f64> = xs.iter().map(|v| v * c).collect();
                let lhs = spec.eval(&cx);
                let rhs = c * spec.eval(&xs);
                prop_assert!((lhs - rhs).abs() <= 1e-11 * rhs.max(1e-12));
            }

            #[test]
            fn legendre_duality_roundtrip(
                xs in proptest::collection::vec(-3.0f64..3.0, 2),
                which in 0usize..6
            ) {
                let specs = sample_specs();
                let (_, spec) = &specs[which % specs.len()];
                prop_assume!(spec.dim() == 2);
                prop_assume!(linalg::norm2(&xs) > 1e-2);
                let w = spec.legendre(&xs);
                let back = spec.legendre_inverse(&w).unwrap();
                for (a, b) in xs.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
                }
            }
        }
    }
}
