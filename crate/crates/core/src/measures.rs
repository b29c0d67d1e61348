//! State diagnostics: overlaps, reduced atomic state, two-qubit reduction of
//! the cavity fields, concurrence and cat-state parity.

use ndarray::Array1;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{coherent_amplitudes, FieldState, ModeState, PureState};

/// Common view of the state-vector types.
pub trait StateVector {
    fn vector(&self) -> &Array1<C64>;
    /// Shape tag; two states are comparable only if tags agree.
    fn space(&self) -> (usize, usize, usize);
}

impl StateVector for PureState {
    fn vector(&self) -> &Array1<C64> {
        self.amplitudes()
    }
    fn space(&self) -> (usize, usize, usize) {
        (2, self.dims().n_a(), self.dims().n_b())
    }
}

impl StateVector for FieldState {
    fn vector(&self) -> &Array1<C64> {
        self.amplitudes()
    }
    fn space(&self) -> (usize, usize, usize) {
        (1, self.dims().n_a(), self.dims().n_b())
    }
}

impl StateVector for ModeState {
    fn vector(&self) -> &Array1<C64> {
        self.amplitudes()
    }
    fn space(&self) -> (usize, usize, usize) {
        (1, self.levels(), 1)
    }
}

/// `|⟨a|b⟩|²`.
pub fn fidelity<S: StateVector>(a: &S, b: &S) -> Result<f64> {
    if a.space() != b.space() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.space(), b.space())));
    }
    let ov: C64 = a.vector().iter().zip(b.vector().iter()).map(|(x, y)| x.conj() * y).sum();
    Ok(ov.norm_sqr().min(1.0))
}

/// Cavity fields restricted to `span{|0⟩,|1⟩}⊗2`, ordered `00, 01, 10, 11`
/// (cavity A first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitState {
    pub amplitudes: [C64; 4],
    /// Probability the full field state carries inside the qubit subspace.
    pub embedding_weight: f64,
}

impl TwoQubitState {
    pub fn from_amplitudes(amplitudes: [C64; 4]) -> Result<Self> {
        let w: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if w < 1e-12 {
            return Err(Error::EmptySubspace(w));
        }
        let n = w.sqrt();
        Ok(Self {
            amplitudes: amplitudes.map(|z| z / n),
            embedding_weight: 1.0,
        })
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &TwoQubitState) -> f64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .norm_sqr()
    }
}

pub fn reduce_to_qubits(field: &FieldState) -> Result<TwoQubitState> {
    let d = field.dims();
    let pick = |i: usize, j: usize| {
        if i < d.n_a() && j < d.n_b() {
            field.amplitude(i, j)
        } else {
            C64::new(0.0, 0.0)
        }
    };
    let raw = [pick(0, 0), pick(0, 1), pick(1, 0), pick(1, 1)];
    let weight: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
    if weight < 1e-12 {
        return Err(Error::EmptySubspace(weight));
    }
    let mut q = TwoQubitState::from_amplitudes(raw)?;
    q.embedding_weight = weight;
    Ok(q)
}

/// Pure-state concurrence `2|a₀₀a₁₁ − a₀₁a₁₀|`.
pub fn concurrence(q: &TwoQubitState) -> f64 {
    let [a00, a01, a10, a11] = q.amplitudes;
    (2.0 * (a00 * a11 - a01 * a10).norm()).min(1.0)
}

/// Atomic reduced density matrix in the bare basis, `[[ρ_gg, ρ_ge], [ρ_eg, ρ_ee]]`.
pub fn reduced_atom_density(state: &PureState) -> [[C64; 2]; 2] {
    let f = state.dims().field_dim();
    let v = state.amplitudes();
    let block = |k: usize| v.slice(ndarray::s![k * f..(k + 1) * f]);
    let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
    for (i, row) in rho.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = block(i)
                .iter()
                .zip(block(j).iter())
                .map(|(a, b)| a * b.conj())
                .sum();
        }
    }
    rho
}

/// `Tr ρ_atom²`.
pub fn reduced_atom_purity(state: &PureState) -> f64 {
    let r = reduced_atom_density(state);
    let trace = r[0][0].re + r[1][1].re;
    let p: f64 = r.iter().flatten().map(|z| z.norm_sqr()).sum();
    (p / (trace * trace)).min(1.0)
}

/// Splits `|atom⟩ ⊗ |field⟩` when the atom is (nearly) factorized: the atomic
/// factor is the dominant eigenvector of the reduced state.
pub fn factor_atom(state: &PureState, min_purity: f64) -> Result<([C64; 2], FieldState)> {
    let purity = reduced_atom_purity(state);
    if purity < min_purity {
        return Err(Error::Degenerate(format!(
            "atom not factorized: reduced purity {purity:.6} < {min_purity}"
        )));
    }
    let r = reduced_atom_density(state);
    let (a, b, c) = (r[0][0].re, r[1][1].re, r[1][0]);
    let lambda = 0.5 * (a + b) + (0.25 * (a - b).powi(2) + c.norm_sqr()).sqrt();
    // (ρ − λ)v = 0 → v ∝ (ρ_ge, λ − ρ_gg) or (λ − ρ_ee, ρ_eg)
    let v1 = [r[0][1], C64::new(lambda - a, 0.0)];
    let v2 = [C64::new(lambda - b, 0.0), c];
    let n1 = v1.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let n2 = v2.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
    let atom = v.map(|z| z / n.sqrt());
    let field = FieldState::normalized(state.dims(), state.project_atom(atom))?;
    Ok((atom, field))
}

/// `⟨T|ρ_fields|T⟩` with the atom traced out.
pub fn field_fidelity(state: &PureState, target: &FieldState) -> Result<f64> {
    if state.dims() != target.dims() {
        return Err(Error::DimensionMismatch("field target vs joint state".into()));
    }
    let f = state.dims().field_dim();
    let v = state.amplitudes();
    let mut total = 0.0;
    for k in 0..2 {
        let block = v.slice(ndarray::s![k * f..(k + 1) * f]);
        let ov: C64 = target
            .amplitudes()
            .iter()
            .zip(block.iter())
            .map(|(t, x)| t.conj() * x)
            .sum();
        total += ov.norm_sqr();
    }
    Ok(total.min(1.0))
}

/// Squared overlaps of a single-mode state with the normalized even and odd
/// cats `|α⟩ ± |−α⟩` built in the same truncation. The odd cat is undefined
/// at `α = 0`; its weight is reported as 0.
pub fn cat_parity_overlap(mode: &ModeState, alpha: C64) -> (f64, f64) {
    let levels = mode.levels();
    let plus = coherent_amplitudes(levels, alpha);
    let minus = coherent_amplitudes(levels, -alpha);
    let weight = |sign: f64| -> f64 {
        let cat = Array1::from_iter(plus.iter().zip(minus.iter()).map(|(p, m)| p + m * sign));
        match ModeState::normalized(cat) {
            Ok(c) if c.amplitudes().iter().map(|z| z.norm_sqr()).sum::<f64>() > 0.0 => {
                c.inner(mode).norm_sqr()
            }
            _ => 0.0,
        }
    };
    let odd = if alpha.norm() == 0.0 { 0.0 } else { weight(-1.0) };
    (weight(1.0), odd)
}
