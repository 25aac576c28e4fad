//! Tangent-triangle geometry: the tent density, the inner-product detector
//! and the cut-off lift to three dimensions.
//!
//! The tent density is supported on a triangle circumscribed to the unit
//! sphere of a 2D norm, vanishing on the boundary with linear decay from
//! the peak at the origin. Its gradient vector is piecewise constant along
//! the tangent directions, which makes the Θ functional exactly computable
//! by piecewise quadrature.

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;
use crate::norms::NormSpec;

/// Analytic tent density over the `ℓ_p` tangent triangle, optionally
/// translated by `(-shift, 0)` and then rescaled by
/// `ρ_ε(x) = ε⁻² ρ(x / ε)`.
///
/// Base geometry (before shift and scale): tangent points
/// `a = (-1, 0)`, `b = (2^{-1/p}, 2^{-1/p})`, `c = (2^{-1/p}, -2^{-1/p})`
/// on the `ℓ_p` unit sphere, and vertices `A = (2^{1-1/p}, 0)`,
/// `B = (-1, -1-2^{1-1/p})`, `C = (-1, 1+2^{1-1/p})`. The peak value σ is
/// fixed by unit mass: `σ = 3 / area(ABC)`.
#[derive(Debug, Clone)]
pub struct TriangleDensity {
    pub p: f64,
    pub shift: f64,
    pub scale: f64,
    sigma: f64,
    vertices: [[f64; 2]; 3],
    tangents: [[f64; 2]; 3],
    /// `ℓ_w` with `D(-ρ̂) = σ ℓ_w` on the sub-triangle opposite tangent `w`;
    /// these are the supporting covectors `L_p(w)` of the base geometry.
    covectors: [[f64; 2]; 3],
}

/// A triangle circumscribed to the unit sphere with its tangent points:
/// edge `AB` touches at `c`, `BC` at `a`, `CA` at `b`.
#[derive(Debug, Clone)]
pub struct TangentTriangle {
    pub vertices: [[f64; 2]; 3],
    pub tangent_points: [[f64; 2]; 3],
    /// Areas `|OAB|, |OBC|, |OCA|`.
    pub areas: [f64; 3],
}

#[derive(Debug, Clone, Copy)]
pub struct ThetaResult {
    pub theta: f64,
    pub numerator: f64,
    pub second_moment: f64,
}

impl TriangleDensity {
    pub fn new(p: f64, shift: f64, scale: f64) -> Result<Self> {
        if !(p > 2.0) {
            return Err(Error::InvalidP(p));
        }
        if shift < 0.0 || !(scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "triangle density needs shift >= 0 and scale > 0, got {shift}, {scale}"
            )));
        }
        let e = 2f64.powf(1.0 - 1.0 / p);
        let h = 2f64.powf(-1.0 / p);
        let vertices = [[e, 0.0], [-1.0, -1.0 - e], [-1.0, 1.0 + e]];
        let tangents = [[-1.0, 0.0], [h, h], [h, -h]];
        // supporting covectors of the ℓ_p sphere at the tangent points,
        // i.e. L_p(w); each satisfies [ℓ](w) = 1 and is constant on the
        // tangent line
        let lp_cov = |w: &[f64; 2]| -> [f64; 2] {
            let q = (w[0].abs().powf(p) + w[1].abs().powf(p)).powf(2.0 / p - 1.0);
            [
                q * w[0].abs().powf(p - 1.0) * w[0].signum(),
                q * w[1].abs().powf(p - 1.0) * w[1].signum(),
            ]
        };
        let covectors = [lp_cov(&tangents[0]), lp_cov(&tangents[1]), lp_cov(&tangents[2])];
        let area = triangle_area(&vertices[0], &vertices[1], &vertices[2]).abs();
        Ok(TriangleDensity { p, shift, scale, sigma: 3.0 / area, vertices, tangents, covectors })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tangent_points(&self) -> [[f64; 2]; 3] {
        self.tangents
    }

    /// Vertices after shift and scale.
    pub fn transformed_vertices(&self) -> [[f64; 2]; 3] {
        let t = |v: &[f64; 2]| [(v[0] - self.shift) * self.scale, v[1] * self.scale];
        [t(&self.vertices[0]), t(&self.vertices[1]), t(&self.vertices[2])]
    }

    /// Peak location after shift and scale.
    pub fn peak(&self) -> [f64; 2] {
        [-self.shift * self.scale, 0.0]
    }

    /// Density value. The tent is `σ (1 - max_i ℓ_i(y))₊` in base
    /// coordinates: the triangle gauge is the max of the three supporting
    /// functionals.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let y = [x[0] / self.scale + self.shift, x[1] / self.scale];
        let mut gauge = f64::NEG_INFINITY;
        for l in &self.covectors {
            gauge = gauge.max(l[0] * y[0] + l[1] * y[1]);
        }
        if gauge >= 1.0 {
            0.0
        } else {
            self.sigma * (1.0 - gauge.max(0.0)) / (self.scale * self.scale)
        }
    }

    /// Mollified density: convolution with the C² bump
    /// `(1 - |y/h|²)³ · 4/(π h²)` evaluated by tensor quadrature.
    pub fn eval_mollified(&self, x: &[f64], h: f64) -> f64 {
        if h <= 0.0 {
            return self.eval(x);
        }
        const NODES: usize = 8;
        // Gauss-Legendre nodes/weights on [-1, 1], n = 8
        const GX: [f64; 8] = [
            -0.9602898564975363,
            -0.7966664774136267,
            -0.5255324099163290,
            -0.1834346424956498,
            0.1834346424956498,
            0.5255324099163290,
            0.7966664774136267,
            0.9602898564975363,
        ];
        const GW: [f64; 8] = [
            0.1012285362903763,
            0.2223810344533745,
            0.3137066458778873,
            0.3626837833783620,
            0.3626837833783620,
            0.3137066458778873,
            0.2223810344533745,
            0.1012285362903763,
        ];
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for i in 0..NODES {
            for j in 0..NODES {
                let u = GX[i];
                let v = GX[j];
                let r2 = u * u + v * v;
                if r2 >= 1.0 {
                    continue;
                }
                let bump = (1.0 - r2).powi(3);
                let w = GW[i] * GW[j] * bump;
                acc += w * self.eval(&[x[0] - h * u, x[1] - h * v]);
                wsum += w;
            }
        }
        acc / wsum
    }

    /// Sub-triangle opposite tangent `i`: `(peak, V_j, V_k)` after transform.
    fn sub_triangle(&self, i: usize) -> [[f64; 2]; 3] {
        let verts = self.transformed_vertices();
        let peak = self.peak();
        // opposite vertices: tangent a=(index 0) is on edge BC, etc.
        let (j, k) = match i {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        [peak, verts[j], verts[k]]
    }

    /// `D(-ρ)` on sub-triangle `i` (constant covector).
    pub fn grad_neg_covector(&self, i: usize) -> [f64; 2] {
        let s = self.sigma / (self.scale * self.scale * self.scale);
        [s * self.covectors[i][0], s * self.covectors[i][1]]
    }

    /// Gradient vector `∇(-ρ) = L*(D(-ρ))` on sub-triangle `i` for the given
    /// norm. For the generating exact `ℓ_p` norm this is `σ' · w_i` in
    /// closed form; the shortcut is taken whenever the norm reproduces the
    /// covector, which also avoids the degenerate on-axis Newton solve at
    /// `eps = 0`.
    pub fn grad_neg_vector(&self, norm: &NormSpec, i: usize) -> Result<Vec<f64>> {
        let cov = self.grad_neg_covector(i);
        let s = self.sigma / (self.scale * self.scale * self.scale);
        let candidate = vec![s * self.tangents[i][0], s * self.tangents[i][1]];
        let lc = norm.legendre(&candidate);
        let defect = ((lc[0] - cov[0]).powi(2) + (lc[1] - cov[1]).powi(2)).sqrt();
        if defect <= 1e-10 * s {
            return Ok(candidate);
        }
        norm.legendre_inverse_with_guess(&cov, &candidate)
    }

    /// Quadrature nodes `(x, weight)` per sub-triangle: uniform refinement
    /// to depth `level`, degree-2 edge-midpoint rule per cell. Nodes are
    /// generated in barycentric coordinates, so scaled copies of the density
    /// produce exactly matched (affinely mapped) nodes.
    pub fn quadrature(&self, i: usize, level: usize) -> Vec<([f64; 2], f64)> {
        let tri = self.sub_triangle(i);
        let mut cells = vec![tri];
        for _ in 0..level {
            let mut next = Vec::with_capacity(cells.len() * 4);
            for t in &cells {
                let m01 = midpoint(&t[0], &t[1]);
                let m12 = midpoint(&t[1], &t[2]);
                let m02 = midpoint(&t[0], &t[2]);
                next.push([t[0], m01, m02]);
                next.push([m01, t[1], m12]);
                next.push([m02, m12, t[2]]);
                next.push([m01, m12, m02]);
            }
            cells = next;
        }
        let mut nodes = Vec::with_capacity(cells.len() * 3);
        for t in &cells {
            let area = triangle_area(&t[0], &t[1], &t[2]).abs();
            let w = area / 3.0;
            nodes.push((midpoint(&t[0], &t[1]), w));
            nodes.push((midpoint(&t[1], &t[2]), w));
            nodes.push((midpoint(&t[0], &t[2]), w));
        }
        nodes
    }

    /// Total mass by piecewise quadrature (exactly 1 up to roundoff, since
    /// the rule integrates the linear tent exactly).
    pub fn mass(&self, level: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for (x, w) in self.quadrature(i, level) {
                acc += w * self.eval(&x);
            }
        }
        acc
    }

    /// `∫ ‖-x‖² ρ dx` by piecewise quadrature.
    pub fn second_moment_bwd(&self, norm: &NormSpec, level: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for (x, w) in self.quadrature(i, level) {
                let mx = [-x[0], -x[1]];
                let n = norm.eval(&mx);
                acc += w * n * n * self.eval(&x);
            }
        }
        acc
    }
}

/// Θ of the analytic tent density: numerator `∫ [L(-x)](∇(-ρ)) dx` with the
/// piecewise-exact gradient vector, divided by `∫ ‖-x‖² ρ dx`.
pub fn theta_analytic(norm: &NormSpec, tri: &TriangleDensity, level: usize) -> Result<ThetaResult> {
    let mut numerator = 0.0;
    for i in 0..3 {
        let v = tri.grad_neg_vector(norm, i)?;
        for (x, w) in tri.quadrature(i, level) {
            let mx = vec![-x[0], -x[1]];
            let l = norm.legendre(&mx);
            numerator += w * linalg::dot(&l, &v);
        }
    }
    let second_moment = tri.second_moment_bwd(norm, level);
    if second_moment <= 1e-300 {
        return Err(Error::ZeroSecondMoment);
    }
    Ok(ThetaResult { theta: numerator / second_moment, numerator, second_moment })
}

/// One row of the Step-0 convergence table.
#[derive(Debug, Clone, Copy)]
pub struct Step0Row {
    pub shift: f64,
    pub value: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone)]
pub struct Step0Table {
    pub rows: Vec<Step0Row>,
    pub limit: f64,
}

/// Numerator/R for the shifted tent against the closed-form limit
/// `(1 + 2^{1-1/p})(2^{1-2/p} - 1) σ`. With `eps_norm = 0` the quadrature
/// runs in exact `ℓ_p` mode.
pub fn step0_limit(p: f64, r_list: &[f64], eps_norm: f64, level: usize) -> Result<Step0Table> {
    if !(p > 2.0) {
        return Err(Error::InvalidP(p));
    }
    let norm = NormSpec::lp(2, p, eps_norm)?;
    let sigma = TriangleDensity::new(p, 0.0, 1.0)?.sigma();
    let limit = (1.0 + 2f64.powf(1.0 - 1.0 / p)) * (2f64.powf(1.0 - 2.0 / p) - 1.0) * sigma;
    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let tri = TriangleDensity::new(p, r, 1.0)?;
        let th = theta_analytic(&norm, &tri, level)?;
        let value = th.numerator / r;
        rows.push(Step0Row { shift: r, value, abs_err: (value - limit).abs() });
    }
    Ok(Step0Table { rows, limit })
}

fn midpoint(a: &[f64; 2], b: &[f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Signed area of the triangle `(a, b, c)`.
fn triangle_area(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Normalize a direction to the unit sphere of the norm.
fn to_sphere(norm: &NormSpec, dir: &[f64; 2]) -> Result<[f64; 2]> {
    let n = norm.eval(dir);
    if n < 1e-300 {
        return Err(Error::ZeroVector);
    }
    Ok([dir[0] / n, dir[1] / n])
}

/// Build the tangent triangle at unit-sphere points in directions
/// `(a, b, c)` and evaluate the detector vector
/// `|OAB|·c + |OBC|·a + |OCA|·b`, which vanishes identically exactly when
/// the norm is an inner product.
pub fn tangent_triangle_vector(
    norm: &NormSpec,
    a_dir: &[f64; 2],
    b_dir: &[f64; 2],
    c_dir: &[f64; 2],
) -> Result<([f64; 2], TangentTriangle)> {
    if norm.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: norm.dim() });
    }
    let a = to_sphere(norm, a_dir)?;
    let b = to_sphere(norm, b_dir)?;
    let c = to_sphere(norm, c_dir)?;
    let la = norm.legendre(&a);
    let lb = norm.legendre(&b);
    let lc = norm.legendre(&c);
    // vertex = intersection of two supporting lines {[L(s)](x) = 1}
    let vertex = |l1: &[f64], l2: &[f64]| -> Result<[f64; 2]> {
        let det = l1[0] * l2[1] - l1[1] * l2[0];
        if det.abs() < 1e-12 {
            return Err(Error::InvalidTriple("parallel supporting lines".into()));
        }
        Ok([(l2[1] - l1[1]) / det, (l1[0] - l2[0]) / det])
    };
    let va = vertex(&lb, &lc)?; // A on tangents at b and c
    let vb = vertex(&lc, &la)?;
    let vc = vertex(&la, &lb)?;
    let s_oab = triangle_area(&[0.0, 0.0], &va, &vb);
    let s_obc = triangle_area(&[0.0, 0.0], &vb, &vc);
    let s_oca = triangle_area(&[0.0, 0.0], &vc, &va);
    if !(s_oab.is_finite() && s_obc.is_finite() && s_oca.is_finite()) {
        return Err(Error::InvalidTriple("unbounded triangle".into()));
    }
    let same_sign = (s_oab > 0.0 && s_obc > 0.0 && s_oca > 0.0)
        || (s_oab < 0.0 && s_obc < 0.0 && s_oca < 0.0);
    if !same_sign {
        return Err(Error::InvalidTriple("origin is not interior to the triangle".into()));
    }
    let (w_ab, w_bc, w_ca) = (s_oab.abs(), s_obc.abs(), s_oca.abs());
    let vector = [
        w_ab * c[0] + w_bc * a[0] + w_ca * b[0],
        w_ab * c[1] + w_bc * a[1] + w_ca * b[1],
    ];
    Ok((
        vector,
        TangentTriangle {
            vertices: [va, vb, vc],
            tangent_points: [a, b, c],
            areas: [w_ab, w_bc, w_ca],
        },
    ))
}

/// Sweep tangent-point triples over an angular grid, maximizing the
/// detector magnitude, with an optional pattern-search refinement. A
/// maximum above `1e-3` certifies a non-inner-product norm; below `1e-8`
/// the sweep is consistent with an inner product.
pub fn triangle_search(
    norm: &NormSpec,
    angular_grid: usize,
    refine: bool,
) -> Result<(TangentTriangle, [f64; 2], f64)> {
    if angular_grid < 12 {
        return Err(Error::InvalidConfig(format!(
            "angular_grid must be >= 12, got {angular_grid}"
        )));
    }
    let tau = 2.0 * std::f64::consts::PI;
    let angle_dir = |t: f64| [t.cos(), t.sin()];
    let eval = |t1: f64, t2: f64, t3: f64| -> Option<([f64; 2], f64)> {
        match tangent_triangle_vector(norm, &angle_dir(t1), &angle_dir(t2), &angle_dir(t3)) {
            Ok((v, tri)) => {
                // discard nearly-degenerate triangles whose areas amplify noise
                if tri.areas.iter().any(|&s| s > 1e4) {
                    None
                } else {
                    Some((v, linalg::norm2(&v)))
                }
            }
            Err(_) => None,
        }
    };
    let per_i: Vec<Option<(f64, [f64; 3])>> = exec::indexed_map(angular_grid, |i| {
        let mut best: Option<(f64, [f64; 3])> = None;
        for j in i + 1..angular_grid {
            for k in j + 1..angular_grid {
                let (t1, t2, t3) = (
                    tau * i as f64 / angular_grid as f64,
                    tau * j as f64 / angular_grid as f64,
                    tau * k as f64 / angular_grid as f64,
                );
                if let Some((_, mag)) = eval(t1, t2, t3) {
                    if best.as_ref().map_or(true, |(m, _)| mag > *m) {
                        best = Some((mag, [t1, t2, t3]));
                    }
                }
            }
        }
        best
    });
    let mut best: Option<(f64, [f64; 3])> = None;
    for cand in per_i.into_iter().flatten() {
        if best.as_ref().map_or(true, |(m, _)| cand.0 > *m) {
            best = Some(cand);
        }
    }
    let (mut mag, mut angles) =
        best.ok_or_else(|| Error::InvalidTriple("no admissible triple on the grid".into()))?;
    if refine {
        let mut step = tau / angular_grid as f64;
        for _ in 0..60 {
            let mut improved = false;
            for idx in 0..3 {
                for sgn in [-1.0, 1.0] {
                    let mut cand = angles;
                    cand[idx] += sgn * step;
                    if let Some((_, m)) = eval(cand[0], cand[1], cand[2]) {
                        if m > mag {
                            mag = m;
                            angles = cand;
                            improved = true;
                        }
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
    }
    let (vector, tri) = tangent_triangle_vector(
        norm,
        &angle_dir(angles[0]),
        &angle_dir(angles[1]),
        &angle_dir(angles[2]),
    )?;
    Ok((tri, vector, mag))
}

/// A 2D tent lifted to three dimensions by a smooth cut-off in the extra
/// coordinate: `ρ(x, z) = ρ_2d(x) · η_R(z) / ∫η_R`, with `η_R ≡ 1` on
/// `|z| <= sqrt(R)`, supported in `|z| <= sqrt(R) + 1` and `|η'| < 2`.
#[derive(Debug, Clone)]
pub struct LiftedDensity {
    pub tri: TriangleDensity,
    pub r_cut: f64,
}

impl LiftedDensity {
    pub fn new(tri: TriangleDensity, r_cut: f64) -> Result<Self> {
        if r_cut < 4.0 {
            return Err(Error::InvalidConfig(format!("lift needs R >= 4, got {r_cut}")));
        }
        Ok(LiftedDensity { tri, r_cut })
    }

    fn plateau(&self) -> f64 {
        self.r_cut.sqrt()
    }

    /// Cut-off profile: 1 on the plateau, cos² ramp over one unit.
    pub fn eta(&self, z: f64) -> f64 {
        let s = z.abs() - self.plateau();
        if s <= 0.0 {
            1.0
        } else if s >= 1.0 {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * s).cos())
        }
    }

    fn eta_prime(&self, z: f64) -> f64 {
        let s = z.abs() - self.plateau();
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            -0.5 * std::f64::consts::PI * (std::f64::consts::PI * s).sin() * z.signum()
        }
    }

    /// `∫ η_R dz = 2 sqrt(R) + 1`.
    pub fn eta_mass(&self) -> f64 {
        2.0 * self.plateau() + 1.0
    }

    /// Share of the cut-off annulus, `O(R^{-1/2})`.
    pub fn boundary_share(&self) -> f64 {
        2.0 / self.eta_mass()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.tri.eval(&x[..2]) * self.eta(x[2]) / self.eta_mass()
    }

    /// Composite-midpoint nodes in `z` covering plateau and ramps.
    fn z_nodes(&self, per_unit: usize) -> Vec<(f64, f64)> {
        let top = self.plateau() + 1.0;
        let count = ((2.0 * top) * per_unit as f64).ceil() as usize;
        let h = 2.0 * top / count as f64;
        (0..count).map(|k| (-top + (k as f64 + 0.5) * h, h)).collect()
    }
}

/// Θ of the lifted 3D density by tensor quadrature. The covector
/// `D(-ρ)(x, z) = (η(z)·D(-ρ_2d)(x), -ρ_2d(x)·η'(z)) / Z` varies over
/// nodes, so the gradient vector is a Newton solve per node.
pub fn theta_lifted(
    norm3: &NormSpec,
    lift: &LiftedDensity,
    level: usize,
    z_per_unit: usize,
) -> Result<ThetaResult> {
    if norm3.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: norm3.dim() });
    }
    let z_nodes = lift.z_nodes(z_per_unit);
    let zmass = lift.eta_mass();
    let mut numerator = 0.0;
    let mut second = 0.0;
    for i in 0..3 {
        let cov2 = lift.tri.grad_neg_covector(i);
        let nodes = lift.tri.quadrature(i, level);
        let contribs = exec::indexed_map(z_nodes.len(), |zi| {
            let (z, wz) = z_nodes[zi];
            let eta = lift.eta(z);
            let etap = lift.eta_prime(z);
            let mut num = 0.0;
            let mut sec = 0.0;
            let mut guess = vec![0.0; 3];
            for (x, w) in &nodes {
                let rho2 = lift.tri.eval(x);
                let cov = [eta * cov2[0] / zmass, eta * cov2[1] / zmass, -rho2 * etap / zmass];
                if cov.iter().all(|&v| v == 0.0) && rho2 == 0.0 {
                    continue;
                }
                let v = match norm3.legendre_inverse_with_guess(&cov, &guess) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                guess.clone_from(&v);
                let mx = vec![-x[0], -x[1], -z];
                let l = norm3.legendre(&mx);
                num += w * wz * linalg::dot(&l, &v);
                let nrm = norm3.eval(&mx);
                sec += w * wz * nrm * nrm * rho2 * eta / zmass;
            }
            (num, sec)
        });
        for (num, sec) in contribs {
            numerator += num;
            second += sec;
        }
    }
    if second <= 1e-300 {
        return Err(Error::ZeroSecondMoment);
    }
    Ok(ThetaResult { theta: numerator / second, numerator, second_moment: second })
}
