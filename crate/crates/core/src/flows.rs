//! Gradient-curve integration and the skew-convexity quotient.
//!
//! On ℝⁿ with a Minkowski norm the minimal geodesic from `x` to `y` is the
//! straight segment with velocity `v = y - x` and `d(x, y) = ‖v‖`. For a
//! C¹ potential `f` the quotient
//!
//! ```text
//! Q(x, y) = -[ g_v(v, ∇(-f)(y)) - g_v(v, ∇(-f)(x)) ] / ‖v‖²
//! ```
//!
//! satisfies: `f` is K-skew convex on a region iff `Q >= K` there, and this
//! is equivalent to `d(ξ(t), ζ(t)) <= e^{-Kt} d(ξ(0), ζ(0))` for gradient
//! curves `ξ̇ = ∇(-f)(ξ)`. Since `g_v(v, ·) = L(v)`, one Legendre transform
//! evaluates the quotient.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;
use crate::norms::NormSpec;

/// Closed enumeration of C¹ potentials with analytic differentials.
#[derive(Debug, Clone)]
pub enum PotentialKind {
    /// `f(x) = ‖-x‖² / 2`; its gradient flow is `ξ(t) = e^{-t} ξ(0)`.
    SquaredReverseNorm,
    /// `f(x) = ‖z - x‖² / 2`, with the zero gradient at `x = z`.
    SquaredDistance { z: Vec<f64> },
    /// `f(x) = <x - m, Q (x - m)> / 2` for symmetric positive-definite `Q`.
    Quadratic { q: Vec<f64>, center: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub scale: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidConfig(format!("potential scale must be > 0, got {scale}")));
        }
        if let PotentialKind::Quadratic { q, center } = &kind {
            let n = center.len();
            if q.len() != n * n {
                return Err(Error::DimensionMismatch { expected: n * n, got: q.len() });
            }
            let eigs = linalg::sym_eigenvalues(q, n);
            if eigs[0] <= 0.0 {
                return Err(Error::InvalidConfig("quadratic potential matrix must be SPD".into()));
            }
        }
        Ok(PotentialSpec { kind, scale })
    }

    pub fn squared_reverse_norm() -> Self {
        PotentialSpec { kind: PotentialKind::SquaredReverseNorm, scale: 1.0 }
    }

    pub fn squared_distance(z: Vec<f64>) -> Self {
        PotentialSpec { kind: PotentialKind::SquaredDistance { z }, scale: 1.0 }
    }

    pub fn quadratic_isotropic(dim: usize) -> Self {
        let mut q = vec![0.0; dim * dim];
        for i in 0..dim {
            q[i * dim + i] = 1.0;
        }
        PotentialSpec {
            kind: PotentialKind::Quadratic { q, center: vec![0.0; dim] },
            scale: 1.0,
        }
    }

    /// The differential `D(-f)(x)` as a covector.
    pub fn d_neg_f(&self, norm: &NormSpec, x: &[f64]) -> Vec<f64> {
        let cov = match &self.kind {
            // f = ‖-x‖²/2  =>  Df(x) = -L(-x)
            PotentialKind::SquaredReverseNorm => {
                let mx: Vec<f64> = x.iter().map(|v| -v).collect();
                norm.legendre(&mx)
            }
            // f = ‖z-x‖²/2  =>  D(-f)(x) = L(z - x)
            PotentialKind::SquaredDistance { z } => {
                let zx: Vec<f64> = z.iter().zip(x).map(|(a, b)| a - b).collect();
                norm.legendre(&zx)
            }
            PotentialKind::Quadratic { q, center } => {
                let n = center.len();
                let d: Vec<f64> = (0..n).map(|i| x[i] - center[i]).collect();
                let mut qd = vec![0.0; n];
                linalg::matvec(q, &d, &mut qd);
                qd.iter().map(|v| -v).collect()
            }
        };
        cov.iter().map(|v| v * self.scale).collect()
    }

    /// The gradient vector `∇(-f)(x) = L*(D(-f)(x))`.
    pub fn grad_neg_f(&self, norm: &NormSpec, x: &[f64]) -> Result<Vec<f64>> {
        norm.legendre_inverse(&self.d_neg_f(norm, x))
    }

    fn grad_neg_f_with_guess(&self, norm: &NormSpec, x: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        norm.legendre_inverse_with_guess(&self.d_neg_f(norm, x), guess)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            PotentialKind::SquaredReverseNorm => format!("squared_reverse_norm x{}", self.scale),
            PotentialKind::SquaredDistance { z } => {
                format!("squared_distance(z={z:?}) x{}", self.scale)
            }
            PotentialKind::Quadratic { center, .. } => {
                format!("quadratic(center={center:?}) x{}", self.scale)
            }
        }
    }
}

/// Time-stamped sequence of states along a gradient curve.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

#[derive(Debug, Clone)]
pub struct TrajectoryMeta {
    pub dt: f64,
    pub norm_id: String,
    pub potential_id: String,
}

impl Trajectory {
    pub fn end_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is nonempty")
    }
}

/// Summary of a sampled skew-quotient infimum.
#[derive(Debug, Clone)]
pub struct SkewReport {
    /// Empirical infimum of the quotient: an upper bound on the best K.
    pub inf_quotient: f64,
    pub argmin_pair: (Vec<f64>, Vec<f64>),
    pub samples: usize,
    pub histogram: HistogramSummary,
    /// Reference constant for distance-skew checks (`K(0,S,0,r) = 1`).
    pub reference_k: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct HistogramSummary {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl HistogramSummary {
    fn from_values(mut vals: Vec<f64>) -> Self {
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pick = |q: f64| vals[(q * (vals.len() - 1) as f64).round() as usize];
        HistogramSummary {
            min: vals[0],
            q25: pick(0.25),
            median: pick(0.5),
            q75: pick(0.75),
            max: *vals.last().unwrap(),
        }
    }
}

/// Curvature/distortion parameters for the distance-skew reference constant.
/// Only the Minkowski case `k = delta = 0` is exercised; the general
/// constant is `K(k,S,δ,r) = sqrt(kS²+δ)·r·cot(sqrt(kS²+δ)·r)`.
#[derive(Debug, Clone)]
pub struct DistanceSkewConfig {
    pub k: f64,
    pub delta: f64,
    pub r: f64,
    pub z: Vec<f64>,
}

impl DistanceSkewConfig {
    pub fn minkowski(z: Vec<f64>, r: f64) -> Self {
        DistanceSkewConfig { k: 0.0, delta: 0.0, r, z }
    }

    /// `K(k, S, delta, r)`, with the continuous limit 1 as the argument
    /// tends to zero.
    pub fn reference_k(&self, s_const: f64) -> f64 {
        let arg = (self.k * s_const * s_const + self.delta).sqrt() * self.r;
        if arg < 1e-8 {
            1.0
        } else {
            arg * arg.cos() / arg.sin()
        }
    }
}

/// Classical fixed-step RK4 for `ξ̇ = ∇(-f)(ξ)`, with a step-halving
/// Richardson check keeping the endpoint error below `1e-8` per unit time.
/// The returned mesh is the requested `dt` grid regardless of any internal
/// refinement.
pub fn gradient_curve(
    norm: &NormSpec,
    pot: &PotentialSpec,
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || t_end < dt {
        return Err(Error::InvalidConfig(format!(
            "need 0 < dt <= t_end, got dt={dt}, t_end={t_end}"
        )));
    }
    let scale = 1.0 + linalg::norm2(x0);
    let tol = 1e-8 * t_end * scale;
    let mut refine = 1usize;
    for _ in 0..9 {
        let coarse = integrate_mesh(norm, pot, x0, t_end, dt, refine)?;
        let fine = integrate_mesh(norm, pot, x0, t_end, dt, refine * 2)?;
        let mut err = 0.0f64;
        for (a, b) in coarse.states.iter().zip(&fine.states) {
            let e: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            err = err.max(e);
        }
        if err <= tol {
            return Ok(fine);
        }
        refine *= 4;
    }
    Err(Error::StepSizeUnderflow { dt: dt / (1 << 18) as f64, err: tol })
}

/// Integrate with `refine` RK4 substeps per output step.
fn integrate_mesh(
    norm: &NormSpec,
    pot: &PotentialSpec,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    refine: usize,
) -> Result<Trajectory> {
    let n = x0.len();
    let steps = (t_end / dt).round().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    let h = dt / refine as f64;
    let mut guess = vec![0.0; n];
    for step in 0..steps {
        for _ in 0..refine {
            let k1 = pot.grad_neg_f_with_guess(norm, &x, &guess)?;
            guess.copy_from_slice(&k1);
            let x2: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
            let k2 = pot.grad_neg_f_with_guess(norm, &x2, &guess)?;
            let x3: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
            let k3 = pot.grad_neg_f_with_guess(norm, &x3, &guess)?;
            let x4: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
            let k4 = pot.grad_neg_f_with_guess(norm, &x4, &guess)?;
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        times.push((step + 1) as f64 * dt);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        meta: TrajectoryMeta {
            dt,
            norm_id: format!("{:?}", norm.family()).chars().take(40).collect(),
            potential_id: pot.describe(),
        },
    })
}

/// The skew quotient `Q(x, y)`; `f` is K-skew convex on a region iff
/// `Q >= K` for all pairs in it.
pub fn skew_quotient(norm: &NormSpec, pot: &PotentialSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let v: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    if crate::norms::is_zero(&v) {
        return Err(Error::CoincidentPoints);
    }
    let gy = pot.grad_neg_f(norm, y)?;
    let gx = pot.grad_neg_f(norm, x)?;
    let diff: Vec<f64> = gy.iter().zip(&gx).map(|(a, b)| a - b).collect();
    let lv = norm.legendre(&v);
    let nv = norm.eval(&v);
    Ok(-linalg::dot(&lv, &diff) / (nv * nv))
}

/// Draw a point uniformly from the Euclidean ball of radius `r`.
fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n2 = linalg::dot(&x, &x);
        if n2 <= 1.0 && n2 > 1e-12 {
            return x.iter().map(|v| v * r).collect();
        }
    }
}

fn pair_for_stream(seed: u64, idx: usize, dim: usize, radius: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx as u64 + 1);
    loop {
        let x = sample_ball(&mut rng, dim, radius);
        let y = sample_ball(&mut rng, dim, radius);
        let d: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
        if d > 1e-9 {
            return (x, y);
        }
    }
}

/// Sampled infimum of the skew quotient over pairs in a ball, with a
/// pattern-search refinement from the worst pair. The per-index RNG streams
/// make the result independent of the parallel schedule.
pub fn skew_estimate(
    norm: &NormSpec,
    pot: &PotentialSpec,
    sample_count: usize,
    region_radius: f64,
    seed: u64,
) -> Result<SkewReport> {
    if sample_count == 0 {
        return Err(Error::InvalidConfig("sample_count must be >= 1".into()));
    }
    let dim = norm.dim();
    let evals: Vec<Result<(f64, Vec<f64>, Vec<f64>)>> = exec::indexed_map(sample_count, |i| {
        let (x, y) = pair_for_stream(seed, i, dim, region_radius);
        let q = skew_quotient(norm, pot, &x, &y)?;
        Ok((q, x, y))
    });
    let mut values = Vec::with_capacity(sample_count);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for e in evals {
        let (q, x, y) = e?;
        values.push(q);
        if best.as_ref().map_or(true, |(b, _, _)| q < *b) {
            best = Some((q, x, y));
        }
    }
    let (q0, x0, y0) = best.expect("sample_count >= 1");
    let (q_ref, x_ref, y_ref) = refine_pair(norm, pot, q0, x0, y0, region_radius);
    Ok(SkewReport {
        inf_quotient: q_ref,
        argmin_pair: (x_ref, y_ref),
        samples: sample_count,
        histogram: HistogramSummary::from_values(values),
        reference_k: None,
    })
}

/// Coordinate-descent (pattern search) on the pair `(x, y)`, 50 rounds.
fn refine_pair(
    norm: &NormSpec,
    pot: &PotentialSpec,
    q0: f64,
    x0: Vec<f64>,
    y0: Vec<f64>,
    radius: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = x0.len();
    let mut x = x0;
    let mut y = y0;
    let mut q = q0;
    let mut step = 0.1 * radius;
    for _ in 0..50 {
        let mut improved = false;
        for coord in 0..2 * n {
            for sgn in [-1.0, 1.0] {
                let mut xc = x.clone();
                let mut yc = y.clone();
                if coord < n {
                    xc[coord] += sgn * step;
                } else {
                    yc[coord - n] += sgn * step;
                }
                let sep: f64 = xc.iter().zip(&yc).map(|(a, b)| (a - b).abs()).sum();
                if sep < 1e-9 {
                    continue;
                }
                if let Ok(cand) = skew_quotient(norm, pot, &xc, &yc) {
                    if cand < q {
                        q = cand;
                        x = xc;
                        y = yc;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.6;
            if step < 1e-12 {
                break;
            }
        }
    }
    (q, x, y)
}

/// Search for a pair with quotient below `threshold_k`. Returns the refined
/// pair, whose quotient re-evaluates identically, or `None`.
pub fn witness_search(
    norm: &NormSpec,
    pot: &PotentialSpec,
    threshold_k: f64,
    sample_count: usize,
    region_radius: f64,
    seed: u64,
) -> Result<Option<(Vec<f64>, Vec<f64>, f64)>> {
    let report = skew_estimate(norm, pot, sample_count, region_radius, seed)?;
    if report.inf_quotient < threshold_k {
        let (x, y) = report.argmin_pair;
        Ok(Some((x, y, report.inf_quotient)))
    } else {
        Ok(None)
    }
}

/// Largest K with `d(ξ(t), ζ(t)) <= e^{-Kt} d(0) (1 + 1e-6)` across all
/// integrated pairs and mesh times (log-slope minimum). Pairs come from the
/// same seeded sampler as [`skew_estimate`], plus that estimate's refined
/// worst pair, so the Theorem-3.2 comparison sees the same region.
pub fn contraction_fit(
    norm: &NormSpec,
    pot: &PotentialSpec,
    pair_count: usize,
    region_radius: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<f64> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidConfig("t_end must be > 0".into()));
    }
    let dim = norm.dim();
    let worst = skew_estimate(norm, pot, pair_count, region_radius, seed)?.argmin_pair;
    let mut pairs = vec![worst];
    for i in 0..pair_count {
        pairs.push(pair_for_stream(seed, i, dim, region_radius));
    }
    let slopes: Vec<Result<f64>> = exec::indexed_map(pairs.len(), |i| {
        let (x0, y0) = &pairs[i];
        let xi = gradient_curve(norm, pot, x0, t_end, dt)?;
        let zeta = gradient_curve(norm, pot, y0, t_end, dt)?;
        let d0 = {
            let v: Vec<f64> =
                zeta.states[0].iter().zip(&xi.states[0]).map(|(a, b)| a - b).collect();
            norm.eval(&v)
        };
        if d0 < 1e-12 {
            return Ok(f64::INFINITY);
        }
        let mut k_min = f64::INFINITY;
        for (t_idx, t) in xi.times.iter().enumerate().skip(1) {
            let v: Vec<f64> = zeta.states[t_idx]
                .iter()
                .zip(&xi.states[t_idx])
                .map(|(a, b)| a - b)
                .collect();
            let dist = norm.eval(&v);
            if dist < 1e-300 {
                continue;
            }
            let k = ((d0 * (1.0 + 1e-6)).ln() - dist.ln()) / t;
            k_min = k_min.min(k);
        }
        Ok(k_min)
    });
    let mut fitted = f64::INFINITY;
    for s in slopes {
        fitted = fitted.min(s?);
    }
    Ok(fitted)
}

/// Skew estimate for the squared distance from `cfg.z`, restricted to the
/// reverse ball `{x : ‖z - x‖ < r}`, with the Minkowski reference constant
/// `K(0, S, 0, r) = 1`.
pub fn distance_skew_check(
    norm: &NormSpec,
    cfg: &DistanceSkewConfig,
    samples: usize,
    seed: u64,
) -> Result<SkewReport> {
    if cfg.k != 0.0 || cfg.delta != 0.0 {
        return Err(Error::UnsupportedCurvature { k: cfg.k, delta: cfg.delta });
    }
    let dim = norm.dim();
    if cfg.z.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: cfg.z.len() });
    }
    let pot = PotentialSpec::squared_distance(cfg.z.clone());
    // rejection-sample pairs inside the reverse ball around z
    let draw = |idx: usize| -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64 + 1);
        let mut one = |rng: &mut ChaCha8Rng| loop {
            let u = sample_ball(rng, dim, 2.0 * cfg.r);
            let x: Vec<f64> = cfg.z.iter().zip(&u).map(|(a, b)| a + b).collect();
            let zx: Vec<f64> = cfg.z.iter().zip(&x).map(|(a, b)| a - b).collect();
            if norm.eval(&zx) < cfg.r {
                return x;
            }
        };
        loop {
            let x = one(&mut rng);
            let y = one(&mut rng);
            let d: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
            if d > 1e-9 {
                return (x, y);
            }
        }
    };
    let evals: Vec<Result<(f64, Vec<f64>, Vec<f64>)>> = exec::indexed_map(samples.max(1), |i| {
        let (x, y) = draw(i);
        let q = skew_quotient(norm, &pot, &x, &y)?;
        Ok((q, x, y))
    });
    let mut values = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for e in evals {
        let (q, x, y) = e?;
        values.push(q);
        if best.as_ref().map_or(true, |(b, _, _)| q < *b) {
            best = Some((q, x, y));
        }
    }
    let (q, x, y) = best.expect("samples >= 1");
    Ok(SkewReport {
        inf_quotient: q,
        argmin_pair: (x, y),
        samples: samples.max(1),
        histogram: HistogramSummary::from_values(values),
        reference_k: Some(cfg.reference_k(1.0)),
    })
}
