//! Dense complex linear algebra kernels: Kronecker products, matrix
//! exponentials and the action of `exp(-iHt)` on a vector.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == C64::new(0.0, 0.0) {
            continue;
        }
        for ((k, l), &y) in b.indexed_iter() {
            out[[i * br + k, j * bc + l]] = x * y;
        }
    }
    out
}

/// Maximum absolute column sum.
pub fn one_norm(m: &Array2<C64>) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Largest element of `|M - M†|`.
pub fn hermiticity_residual(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / 2f64.powi(squarings));

    let mut result = Array2::<C64>::eye(n);
    let mut term = Array2::<C64>::eye(n);
    for k in 1..=30 {
        term = term.dot(&scaled).mapv(|z| z / k as f64);
        result += &term;
        if one_norm(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// Computes `exp(-i H t) v` by sub-stepping a Taylor expansion of the action,
/// never forming the propagator. Each sub-step has `‖H‖₁·dt ≤ 1`.
pub fn expm_action(h: &Array2<C64>, t: f64, v: &Array1<C64>) -> Array1<C64> {
    expm_action_with(|x| h.dot(x), one_norm(h), t, v)
}

/// [`expm_action`] for an operator given only through its action `apply`
/// and an upper bound `norm` on its 1-norm.
pub fn expm_action_with<F>(apply: F, norm: f64, t: f64, v: &Array1<C64>) -> Array1<C64>
where
    F: Fn(&Array1<C64>) -> Array1<C64>,
{
    let size = norm * t.abs();
    if size == 0.0 {
        return v.clone();
    }
    let substeps = size.ceil().max(1.0) as usize;
    let dt = t / substeps as f64;
    let factor = -I * dt;
    let mut out = v.clone();
    for _ in 0..substeps {
        let scale = vec_norm(&out).max(1e-300);
        let mut term = out.clone();
        let mut acc = out.clone();
        for k in 1..=40 {
            term = apply(&term).mapv(|z| z * factor / k as f64);
            acc += &term;
            if vec_norm(&term) < 1e-17 * scale {
                break;
            }
        }
        out = acc;
    }
    out
}

pub fn vec_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &Array2<C64>) -> Vec<f64> {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let mut vals: Vec<f64> = dm.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}
