//! Real polynomials stored as ascending coefficient vectors
//! (`p[k]` multiplies `s^k`).

use num_complex::Complex64;

use crate::linalg::{eigenvalues, RMat};

pub type Poly = Vec<f64>;

/// Drops exactly-zero leading (highest-degree) coefficients.
pub fn trim(mut p: Poly) -> Poly {
    while p.len() > 1 && p[p.len() - 1] == 0.0 {
        p.pop();
    }
    if p.is_empty() {
        p.push(0.0);
    }
    p
}

/// Drops leading coefficients whose magnitude is at most `rel` times the
/// largest coefficient.
pub fn trim_rel(p: Poly, rel: f64) -> Poly {
    let scale = max_coeff(&p);
    let mut p = p;
    while p.len() > 1 && p[p.len() - 1].abs() <= rel * scale {
        p.pop();
    }
    trim(p)
}

pub fn max_coeff(p: &[f64]) -> f64 {
    p.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn degree(p: &[f64]) -> usize {
    let mut d = p.len().saturating_sub(1);
    while d > 0 && p[d] == 0.0 {
        d -= 1;
    }
    d
}

pub fn is_zero(p: &[f64]) -> bool {
    p.iter().all(|&x| x == 0.0)
}

pub fn add(a: &[f64], b: &[f64]) -> Poly {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    trim(out)
}

pub fn sub(a: &[f64], b: &[f64]) -> Poly {
    add(a, &scale(b, -1.0))
}

pub fn scale(a: &[f64], k: f64) -> Poly {
    a.iter().map(|x| x * k).collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Poly {
    if a.is_empty() || b.is_empty() {
        return vec![0.0];
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(out)
}

/// Horner evaluation at a complex point.
pub fn eval(p: &[f64], s: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Polynomial long division `a = q b + r` with `deg r < deg b`.
/// Panics if `b` is the zero polynomial.
pub fn divmod(a: &[f64], b: &[f64]) -> (Poly, Poly) {
    let b = trim(b.to_vec());
    let db = degree(&b);
    assert!(b[db] != 0.0, "division by the zero polynomial");
    let mut r = trim(a.to_vec());
    if degree(&r) < db || is_zero(&r) {
        return (vec![0.0], r);
    }
    let dq = degree(&r) - db;
    let mut q = vec![0.0; dq + 1];
    for k in (0..=dq).rev() {
        let coef = r[k + db] / b[db];
        q[k] = coef;
        for (j, bj) in b.iter().enumerate() {
            r[k + j] -= coef * bj;
        }
        r[k + db] = 0.0;
    }
    r.truncate(db.max(1));
    (trim(q), trim(r))
}

/// Monic polynomial with the given roots. Roots must be closed under
/// conjugation for the result to be real; imaginary residue is discarded.
pub fn from_roots(roots: &[Complex64]) -> Poly {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        p = next;
    }
    p.iter().map(|z| z.re).collect()
}

/// Roots via the eigenvalues of the companion matrix. Exact zero leading
/// coefficients are ignored; constant polynomials have no roots.
pub fn roots(p: &[f64]) -> Vec<Complex64> {
    let p = trim(p.to_vec());
    let d = degree(&p);
    if d == 0 {
        return Vec::new();
    }
    let lead = p[d];
    let mut comp = RMat::zeros(d, d);
    for j in 0..d {
        comp[(0, j)] = -p[d - 1 - j] / lead;
    }
    for i in 1..d {
        comp[(i, i - 1)] = 1.0;
    }
    eigenvalues(&comp)
}

/// Characteristic polynomial `det(sI − A)` (monic, degree n) by the
/// division-free Samuelson–Berkowitz recursion.
pub fn charpoly(a: &RMat) -> Poly {
    let n = a.nrows();
    // Descending coefficients of the characteristic polynomial of the
    // leading k×k block.
    let mut desc = vec![1.0];
    for k in 0..n {
        let akk = a[(k, k)];
        let mut t = vec![1.0, -akk];
        if k > 0 {
            // -R M^j C for j = 0..k-1, with R = A[k, :k], C = A[:k, k].
            let m = a.view((0, 0), (k, k));
            let mut v: Vec<f64> = (0..k).map(|i| a[(i, k)]).collect();
            for _ in 0..k {
                let rv: f64 = (0..k).map(|i| a[(k, i)] * v[i]).sum();
                t.push(-rv);
                let mut nv = vec![0.0; k];
                for (i, nvi) in nv.iter_mut().enumerate() {
                    *nvi = (0..k).map(|j| m[(i, j)] * v[j]).sum();
                }
                v = nv;
            }
        }
        let mut next = vec![0.0; k + 2];
        for (i, nx) in next.iter_mut().enumerate() {
            for (j, &pj) in desc.iter().enumerate() {
                if i >= j && i - j < t.len() {
                    *nx += t[i - j] * pj;
                }
            }
        }
        desc = next;
    }
    desc.reverse();
    desc
}
