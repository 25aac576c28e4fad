//! Small dense linear algebra on row-major `[f64]` buffers.
//!
//! Everything here targets the tiny systems of this crate (n <= 3 in
//! practice, arbitrary n supported): Gaussian elimination with partial
//! pivoting and a cyclic Jacobi eigensolver for symmetric matrices.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y = M x for a row-major n x n matrix.
pub fn matvec(m: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        y[i] = dot(&m[i * n..(i + 1) * n], x);
    }
}

/// Solve M x = b in place (b becomes x). Returns false if M is singular
/// to working precision.
pub fn solve_in_place(m: &mut [f64], b: &mut [f64]) -> bool {
    let n = b.len();
    debug_assert_eq!(m.len(), n * n);
    for col in 0..n {
        // partial pivot
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in col + 1..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return false;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let factor = m[r * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[r * n + k] -= factor * m[col * n + k];
            }
            b[r] -= factor * b[col];
        }
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for k in i + 1..n {
            acc -= m[i * n + k] * b[k];
        }
        b[i] = acc / m[i * n + i];
    }
    true
}

/// Invert a (small) matrix; returns None if singular.
pub fn invert(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut a = m.to_vec();
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        if !solve_in_place(&mut a, &mut e) {
            return None;
        }
        for r in 0..n {
            inv[r * n + col] = e[r];
        }
    }
    Some(inv)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps, ascending.
pub fn sym_eigenvalues(m: &[f64], n: usize) -> Vec<f64> {
    let mut a = m.to_vec();
    // symmetrize defensively against roundoff in the caller
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j].abs();
            }
        }
        if off < 1e-15 * (1.0 + frobenius(&a, n)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

fn frobenius(a: &[f64], n: usize) -> f64 {
    a[..n * n].iter().map(|x| x * x).sum::<f64>().sqrt()
}
