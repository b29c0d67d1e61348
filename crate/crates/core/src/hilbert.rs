//! Truncated Fock space for two cavity modes coupled to a two-level atom.
//!
//! The composite basis is `|atom⟩ ⊗ |n_A⟩ ⊗ |n_B⟩` with the atom index
//! slowest and cavity B fastest:
//!
//! ```text
//! index = atom·(n_a·n_b) + n_A·n_b + n_B,   atom ∈ {g = 0, e = 1}
//! ```
//!
//! so projectors onto an atomic level are contiguous blocks. The creation
//! operator is hard-truncated: `a†` annihilates the top retained level.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::{self, kron};

/// Default tolerance on truncated Poisson tails for coherent states.
pub const DEFAULT_LEAKAGE_TOLERANCE: f64 = 1e-8;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cavity {
    A,
    B,
}

impl Cavity {
    pub fn other(self) -> Cavity {
        match self {
            Cavity::A => Cavity::B,
            Cavity::B => Cavity::A,
        }
    }
}

/// Atomic basis labels, bare (`g`, `e`) or dressed (`±`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomLabel {
    G,
    E,
    Plus,
    Minus,
}

impl AtomLabel {
    /// Amplitudes on `(|g⟩, |e⟩)`.
    pub fn amplitudes(self) -> [C64; 2] {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            AtomLabel::G => [ONE, ZERO],
            AtomLabel::E => [ZERO, ONE],
            AtomLabel::Plus => [h, h],
            AtomLabel::Minus => [h, -h],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AtomLabel::G => "g",
            AtomLabel::E => "e",
            AtomLabel::Plus => "plus",
            AtomLabel::Minus => "minus",
        }
    }
}

/// Fock truncation of both cavities. The atom always has two levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemDims {
    n_a: usize,
    n_b: usize,
}

impl SystemDims {
    pub fn new(n_a: usize, n_b: usize) -> Result<Self> {
        if n_a == 0 || n_b == 0 {
            return Err(Error::Domain(format!(
                "Fock truncation must keep at least one level (got n_a = {n_a}, n_b = {n_b})"
            )));
        }
        Ok(Self { n_a, n_b })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn levels(&self, cavity: Cavity) -> usize {
        match cavity {
            Cavity::A => self.n_a,
            Cavity::B => self.n_b,
        }
    }

    /// Dimension of the two-cavity field space.
    pub fn field_dim(&self) -> usize {
        self.n_a * self.n_b
    }

    /// Dimension of the composite atom ⊗ A ⊗ B space.
    pub fn total(&self) -> usize {
        2 * self.field_dim()
    }

    pub fn index(&self, atom: usize, n_a: usize, n_b: usize) -> usize {
        debug_assert!(atom < 2 && n_a < self.n_a && n_b < self.n_b);
        atom * self.field_dim() + n_a * self.n_b + n_b
    }

    pub fn decode(&self, index: usize) -> (usize, usize, usize) {
        let atom = index / self.field_dim();
        let rest = index % self.field_dim();
        (atom, rest / self.n_b, rest % self.n_b)
    }

    fn check_levels(&self, n_a: usize, n_b: usize) -> Result<()> {
        if n_a >= self.n_a || n_b >= self.n_b {
            return Err(Error::Domain(format!(
                "Fock levels ({n_a}, {n_b}) outside truncation ({}, {})",
                self.n_a, self.n_b
            )));
        }
        Ok(())
    }

    fn require_same(&self, other: &SystemDims) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Fock truncation that keeps the Poisson tail of `|α⟩` below ~1e-8:
/// `ceil(|α|² + 6|α| + 10)`.
pub fn default_truncation(alpha_abs: f64) -> usize {
    (alpha_abs * alpha_abs + 6.0 * alpha_abs + 10.0).ceil() as usize
}

/// `P(n ≥ cut)` for a Poisson distribution of the given mean, summed directly
/// so that tiny tails keep full relative precision.
pub fn poisson_tail(mean: f64, cut: usize) -> f64 {
    if cut == 0 {
        return 1.0;
    }
    if mean == 0.0 {
        return 0.0;
    }
    let ln_fact: f64 = (1..=cut).map(|k| (k as f64).ln()).sum();
    let mut term = (-mean + cut as f64 * mean.ln() - ln_fact).exp();
    let mut total = 0.0;
    let mut n = cut;
    loop {
        total += term;
        n += 1;
        term *= mean / n as f64;
        if term < 1e-18 * total.max(1e-300) && n as f64 > mean {
            break;
        }
        if n > cut + 100_000 {
            break;
        }
    }
    total.min(1.0)
}

/// Untruncated coherent-state amplitudes `⟨n|α⟩` for `n < levels`.
pub fn coherent_amplitudes(levels: usize, alpha: C64) -> Vec<C64> {
    let mut amps = Vec::with_capacity(levels);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..levels {
        amps.push(c);
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    amps
}

fn norm_of(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn inner(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// State of a single cavity mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    amplitudes: Array1<C64>,
}

impl ModeState {
    /// Normalizes `amplitudes`; a zero vector is rejected.
    pub fn normalized(amplitudes: Array1<C64>) -> Result<Self> {
        let n = norm_of(&amplitudes);
        if n == 0.0 || amplitudes.is_empty() {
            return Err(Error::Degenerate("zero mode vector".into()));
        }
        Ok(Self {
            amplitudes: amplitudes.mapv(|z| z / n),
        })
    }

    pub fn fock(levels: usize, n: usize) -> Result<Self> {
        if n >= levels {
            return Err(Error::Domain(format!("Fock level {n} outside truncation {levels}")));
        }
        let mut v = Array1::zeros(levels);
        v[n] = ONE;
        Ok(Self { amplitudes: v })
    }

    /// Coherent state renormalized after truncation; errors if the cut
    /// Poisson tail exceeds `tolerance`.
    pub fn coherent(levels: usize, alpha: C64, tolerance: f64) -> Result<Self> {
        let leaked = poisson_tail(alpha.norm_sqr(), levels);
        if leaked > tolerance {
            return Err(Error::Truncation {
                leaked,
                tolerance,
                context: format!("coherent state |α| = {:.4} with {levels} Fock levels", alpha.norm()),
            });
        }
        Self::normalized(Array1::from(coherent_amplitudes(levels, alpha)))
    }

    pub fn levels(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn inner(&self, other: &ModeState) -> C64 {
        inner(&self.amplitudes, &other.amplitudes)
    }
}

/// State of both cavities with the atom removed (measured or factored out).
/// Index `n_A·n_b + n_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    dims: SystemDims,
    amplitudes: Array1<C64>,
}

impl FieldState {
    pub fn normalized(dims: SystemDims, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != dims.field_dim() {
            return Err(Error::DimensionMismatch(format!(
                "field vector of length {} for {dims:?}",
                amplitudes.len()
            )));
        }
        let n = norm_of(&amplitudes);
        if n == 0.0 {
            return Err(Error::Degenerate("zero field vector".into()));
        }
        Ok(Self {
            dims,
            amplitudes: amplitudes.mapv(|z| z / n),
        })
    }

    pub fn product(a: &ModeState, b: &ModeState) -> Result<Self> {
        let dims = SystemDims::new(a.levels(), b.levels())?;
        let v = Array1::from_shape_fn(dims.field_dim(), |k| {
            a.amplitudes[k / dims.n_b] * b.amplitudes[k % dims.n_b]
        });
        Self::normalized(dims, v)
    }

    pub fn fock(dims: SystemDims, n_a: usize, n_b: usize) -> Result<Self> {
        dims.check_levels(n_a, n_b)?;
        let mut v = Array1::zeros(dims.field_dim());
        v[n_a * dims.n_b + n_b] = ONE;
        Ok(Self { dims, amplitudes: v })
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, n_a: usize, n_b: usize) -> C64 {
        self.amplitudes[n_a * self.dims.n_b + n_b]
    }

    pub fn inner(&self, other: &FieldState) -> Result<C64> {
        self.dims.require_same(&other.dims)?;
        Ok(inner(&self.amplitudes, &other.amplitudes))
    }
}

/// Normalized pure state on atom ⊗ A ⊗ B.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    dims: SystemDims,
    amplitudes: Array1<C64>,
}

impl PureState {
    /// Wraps an amplitude vector after normalizing it.
    pub fn normalized(dims: SystemDims, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != dims.total() {
            return Err(Error::DimensionMismatch(format!(
                "state vector of length {} for {dims:?}",
                amplitudes.len()
            )));
        }
        let n = norm_of(&amplitudes);
        if n == 0.0 {
            return Err(Error::Degenerate("zero state vector".into()));
        }
        Ok(Self {
            dims,
            amplitudes: amplitudes.mapv(|z| z / n),
        })
    }

    /// Wraps amplitudes produced by a unitary map; no renormalization.
    pub(crate) fn from_unitary_image(dims: SystemDims, amplitudes: Array1<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), dims.total());
        Self { dims, amplitudes }
    }

    /// `|atom⟩ ⊗ |field⟩`.
    pub fn product(atom: [C64; 2], field: &FieldState) -> Result<Self> {
        let dims = field.dims;
        let mut v = Array1::zeros(dims.total());
        let f = dims.field_dim();
        for (k, &c) in atom.iter().enumerate() {
            v.slice_mut(s![k * f..(k + 1) * f])
                .assign(&field.amplitudes.mapv(|z| z * c));
        }
        Self::normalized(dims, v)
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, atom: usize, n_a: usize, n_b: usize) -> C64 {
        self.amplitudes[self.dims.index(atom, n_a, n_b)]
    }

    pub fn norm(&self) -> f64 {
        norm_of(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        self.dims.require_same(&other.dims)?;
        Ok(inner(&self.amplitudes, &other.amplitudes))
    }

    /// Unnormalized field vector `(⟨atom| ⊗ 1)|ψ⟩`.
    pub fn project_atom(&self, atom: [C64; 2]) -> Array1<C64> {
        let f = self.dims.field_dim();
        let mut out = Array1::zeros(f);
        for (k, &c) in atom.iter().enumerate() {
            let block = self.amplitudes.slice(s![k * f..(k + 1) * f]);
            out.scaled_add(c.conj(), &block);
        }
        out
    }

    /// Applies an operator without renormalizing.
    pub fn apply(&self, op: &Operator) -> Result<Array1<C64>> {
        self.dims.require_same(&op.dims)?;
        Ok(op.matrix.dot(&self.amplitudes))
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        let v = self.apply(op)?;
        Ok(inner(&self.amplitudes, &v))
    }
}

/// Dense operator on the composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dims: SystemDims,
    matrix: Array2<C64>,
    hermitian: bool,
}

/// Largest composite dimension for which dense operators are built.
pub const MAX_DENSE_DIM: usize = 2 * 64 * 64;

impl Operator {
    pub fn new(dims: SystemDims, matrix: Array2<C64>) -> Result<Self> {
        if matrix.dim() != (dims.total(), dims.total()) {
            return Err(Error::DimensionMismatch(format!(
                "matrix {:?} for {dims:?}",
                matrix.dim()
            )));
        }
        Ok(Self {
            dims,
            matrix,
            hermitian: false,
        })
    }

    /// Builds an operator flagged Hermitian, checking `max|M − M†| < 1e-12`
    /// relative to the largest element (absolute below unit scale).
    pub fn hermitian(dims: SystemDims, matrix: Array2<C64>) -> Result<Self> {
        let mut op = Self::new(dims, matrix)?;
        let residual = op.hermiticity_residual();
        let scale = linalg::max_abs(&op.matrix).max(1.0);
        if residual > 1e-12 * scale {
            return Err(Error::Contract(format!(
                "operator flagged Hermitian has |M - M†| = {residual:.3e}"
            )));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn zeros(dims: SystemDims) -> Self {
        Self {
            dims,
            matrix: Array2::zeros((dims.total(), dims.total())),
            hermitian: true,
        }
    }

    pub fn identity(dims: SystemDims) -> Self {
        Self {
            dims,
            matrix: Array2::eye(dims.total()),
            hermitian: true,
        }
    }

    /// `atom ⊗ cav_a ⊗ cav_b`, with identities for the `None` factors.
    pub fn local(
        dims: SystemDims,
        atom: Option<&Array2<C64>>,
        cav_a: Option<&Array2<C64>>,
        cav_b: Option<&Array2<C64>>,
    ) -> Result<Self> {
        let check = |m: Option<&Array2<C64>>, n: usize, what: &str| -> Result<Array2<C64>> {
            match m {
                Some(m) if m.dim() != (n, n) => Err(Error::DimensionMismatch(format!(
                    "{what} factor {:?}, expected {n}×{n}",
                    m.dim()
                ))),
                Some(m) => Ok(m.clone()),
                None => Ok(Array2::eye(n)),
            }
        };
        let at = check(atom, 2, "atom")?;
        let ma = check(cav_a, dims.n_a, "cavity A")?;
        let mb = check(cav_b, dims.n_b, "cavity B")?;
        Self::new(dims, kron(&at, &kron(&ma, &mb)))
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn is_flagged_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.matrix)
    }

    pub fn dagger(&self) -> Self {
        Self {
            dims: self.dims,
            matrix: linalg::dagger(&self.matrix),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            dims: self.dims,
            matrix: self.matrix.mapv(|z| z * c),
            hermitian: self.hermitian && c.im == 0.0,
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.dims.require_same(&other.dims)?;
        Ok(Self {
            dims: self.dims,
            matrix: &self.matrix + &other.matrix,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.dims.require_same(&other.dims)?;
        Ok(Self {
            dims: self.dims,
            matrix: &self.matrix - &other.matrix,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Self> {
        self.dims.require_same(&other.dims)?;
        Ok(Self {
            dims: self.dims,
            matrix: self.matrix.dot(&other.matrix),
            hermitian: false,
        })
    }

    /// `X + X†`, exactly Hermitian element by element.
    pub fn plus_adjoint(&self) -> Self {
        let n = self.matrix.nrows();
        let m = Array2::from_shape_fn((n, n), |(i, j)| self.matrix[[i, j]] + self.matrix[[j, i]].conj());
        Self {
            dims: self.dims,
            matrix: m,
            hermitian: true,
        }
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.compose(other)?.sub(&other.compose(self)?)
    }

    /// Largest element magnitude.
    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.matrix)
    }

    /// Operator 2-norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        let n = self.matrix.nrows();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.matrix[[i, j]]);
        m.singular_values().iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn with_hermitian_flag(mut self, flag: bool) -> Self {
        self.hermitian = flag;
        self
    }
}

/// Basis product state `|atom⟩|n_A⟩|n_B⟩`.
pub fn fock_state(dims: SystemDims, atom: AtomLabel, n_a: usize, n_b: usize) -> Result<PureState> {
    PureState::product(atom.amplitudes(), &FieldState::fock(dims, n_a, n_b)?)
}

/// `|atom⟩ ⊗ |α⟩` in `cavity` with the other cavity in vacuum, using the
/// default leakage tolerance.
pub fn coherent_state(
    dims: SystemDims,
    cavity: Cavity,
    alpha: C64,
    atom: AtomLabel,
) -> Result<PureState> {
    coherent_state_with_tolerance(dims, cavity, alpha, atom, DEFAULT_LEAKAGE_TOLERANCE)
}

pub fn coherent_state_with_tolerance(
    dims: SystemDims,
    cavity: Cavity,
    alpha: C64,
    atom: AtomLabel,
    tolerance: f64,
) -> Result<PureState> {
    let coh = ModeState::coherent(dims.levels(cavity), alpha, tolerance)?;
    let vac = ModeState::fock(dims.levels(cavity.other()), 0)?;
    let field = match cavity {
        Cavity::A => FieldState::product(&coh, &vac)?,
        Cavity::B => FieldState::product(&vac, &coh)?,
    };
    PureState::product(atom.amplitudes(), &field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderKind {
    Annihilate,
    Create,
}

/// Truncated single-mode annihilation matrix, `a|n⟩ = √n |n−1⟩`.
pub fn annihilation_matrix(levels: usize) -> Array2<C64> {
    let mut m = Array2::zeros((levels, levels));
    for n in 1..levels {
        m[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    m
}

/// Single-mode `D(α) = exp(α a† − α* a)` on `levels` Fock states.
pub fn displacement_matrix(levels: usize, alpha: C64) -> Array2<C64> {
    let a = annihilation_matrix(levels);
    let ad = linalg::dagger(&a);
    let gen = ad.mapv(|z| z * alpha) - a.mapv(|z| z * alpha.conj());
    linalg::expm(&gen)
}

fn embed_cavity(dims: SystemDims, cavity: Cavity, m: &Array2<C64>) -> Result<Operator> {
    match cavity {
        Cavity::A => Operator::local(dims, None, Some(m), None),
        Cavity::B => Operator::local(dims, None, None, Some(m)),
    }
}

/// `a_j` or `a†_j` embedded with identities on the atom and the other cavity.
pub fn ladder_op(dims: SystemDims, cavity: Cavity, kind: LadderKind) -> Operator {
    let a = annihilation_matrix(dims.levels(cavity));
    let m = match kind {
        LadderKind::Annihilate => a,
        LadderKind::Create => linalg::dagger(&a),
    };
    embed_cavity(dims, cavity, &m).expect("ladder matrix matches truncation")
}

/// Photon number `a†_j a_j`.
pub fn number_op(dims: SystemDims, cavity: Cavity) -> Operator {
    let n = dims.levels(cavity);
    let m = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            C64::new(i as f64, 0.0)
        } else {
            ZERO
        }
    });
    embed_cavity(dims, cavity, &m)
        .expect("number matrix matches truncation")
        .with_hermitian_flag(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomicOpKind {
    /// `σ = |g⟩⟨e|`
    Sigma,
    /// `σ† = |e⟩⟨g|`
    SigmaDag,
    /// `|+⟩⟨+|`
    ProjPlus,
    /// `|−⟩⟨−|`
    ProjMinus,
    /// `|+⟩⟨−|`
    FlipPm,
}

/// 2×2 atomic matrix in the bare `(g, e)` basis.
pub fn atomic_matrix(kind: AtomicOpKind) -> Array2<C64> {
    let outer = |ket: [C64; 2], bra: [C64; 2]| {
        Array2::from_shape_fn((2, 2), |(i, j)| ket[i] * bra[j].conj())
    };
    let (g, e) = (AtomLabel::G.amplitudes(), AtomLabel::E.amplitudes());
    let (p, m) = (AtomLabel::Plus.amplitudes(), AtomLabel::Minus.amplitudes());
    match kind {
        AtomicOpKind::Sigma => outer(g, e),
        AtomicOpKind::SigmaDag => outer(e, g),
        AtomicOpKind::ProjPlus => outer(p, p),
        AtomicOpKind::ProjMinus => outer(m, m),
        AtomicOpKind::FlipPm => outer(p, m),
    }
}

pub fn atomic_op(dims: SystemDims, kind: AtomicOpKind) -> Operator {
    let hermitian = matches!(kind, AtomicOpKind::ProjPlus | AtomicOpKind::ProjMinus);
    Operator::local(dims, Some(&atomic_matrix(kind)), None, None)
        .expect("2×2 atomic factor")
        .with_hermitian_flag(hermitian)
}

/// `D(α)` on `cavity`, identity elsewhere.
pub fn displacement_op(dims: SystemDims, cavity: Cavity, alpha: C64) -> Operator {
    let d = displacement_matrix(dims.levels(cavity), alpha);
    embed_cavity(dims, cavity, &d).expect("displacement matrix matches truncation")
}

/// Population in Fock levels `≥ threshold` of `cavity`. Returns 0 when the
/// threshold is at or above the truncation.
pub fn leakage(state: &PureState, threshold: usize, cavity: Cavity) -> f64 {
    let dims = state.dims;
    state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let (_, na, nb) = dims.decode(*k);
            match cavity {
                Cavity::A => na >= threshold,
                Cavity::B => nb >= threshold,
            }
        })
        .map(|(_, z)| z.norm_sqr())
        .sum()
}

/// Population in the top retained Fock level of either cavity.
pub fn edge_population(state: &PureState) -> f64 {
    let d = state.dims;
    leakage(state, d.n_a - 1, Cavity::A).max(leakage(state, d.n_b - 1, Cavity::B))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(a: usize, b: usize) -> SystemDims {
        SystemDims::new(a, b).unwrap()
    }

    fn close(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    // Independent oracle: Poisson pmf summed term by term from n = 0.
    fn poisson_pmf(mean: f64, n: usize) -> f64 {
        let mut p = (-mean).exp();
        for k in 1..=n {
            p *= mean / k as f64;
        }
        p
    }

    #[test]
    fn fock_ground_vacuum_is_first_basis_vector() {
        let psi = fock_state(dims(3, 3), AtomLabel::G, 0, 0).unwrap();
        assert_eq!(psi.amplitudes()[0], ONE);
        assert!(psi.amplitudes().iter().skip(1).all(|z| *z == ZERO));
    }

    #[test]
    fn fock_dressed_labels() {
        let d = dims(3, 2);
        let plus = fock_state(d, AtomLabel::Plus, 0, 0).unwrap();
        assert!((plus.amplitude(0, 0, 0).re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((plus.amplitude(1, 0, 0).re - FRAC_1_SQRT_2).abs() < 1e-15);
        let minus = fock_state(d, AtomLabel::Minus, 1, 0).unwrap();
        assert!((minus.amplitude(0, 1, 0).re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((minus.amplitude(1, 1, 0).re + FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn fock_out_of_range_is_domain_error() {
        assert!(matches!(
            fock_state(dims(2, 2), AtomLabel::G, 2, 0),
            Err(Error::Domain(_))
        ));
        assert!(SystemDims::new(0, 3).is_err());
    }

    #[test]
    fn coherent_vacuum_for_zero_alpha() {
        let d = dims(5, 3);
        let psi = coherent_state(d, Cavity::A, ZERO, AtomLabel::G).unwrap();
        let vac = fock_state(d, AtomLabel::G, 0, 0).unwrap();
        assert!(close(psi.amplitudes(), vac.amplitudes()) < 1e-15);
    }

    #[test]
    fn coherent_vacuum_amplitude_and_displacement_agree() {
        let d = dims(30, 1);
        let alpha = C64::new(1.0, 0.0);
        let psi = coherent_state(d, Cavity::A, alpha, AtomLabel::G).unwrap();
        assert!((psi.amplitude(0, 0, 0).re - (-0.5f64).exp()).abs() < 1e-12);
        assert!((psi.amplitude(0, 0, 0).re - 0.60653).abs() < 1e-5);

        let vac = fock_state(d, AtomLabel::G, 0, 0).unwrap();
        let displaced = vac.apply(&displacement_op(d, Cavity::A, alpha)).unwrap();
        assert!(close(&displaced, psi.amplitudes()) < 1e-8);
    }

    #[test]
    fn coherent_mean_photon_number() {
        let d = dims(30, 1);
        let psi = coherent_state(d, Cavity::A, C64::new(2.0, 0.0), AtomLabel::G).unwrap();
        let mean: f64 = (0..30).map(|n| n as f64 * psi.amplitude(0, n, 0).norm_sqr()).sum();
        assert!((mean - 4.0).abs() < 1e-6);
    }

    #[test]
    fn coherent_rejects_heavy_truncation() {
        let err = coherent_state(dims(4, 1), Cavity::A, C64::new(2.0, 0.0), AtomLabel::G).unwrap_err();
        match err {
            Error::Truncation { leaked, .. } => {
                let oracle = 1.0 - (0..4).map(|n| poisson_pmf(4.0, n)).sum::<f64>();
                assert!((leaked - oracle).abs() < 1e-12);
                assert!((leaked - 0.567).abs() < 1e-3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ladder_actions() {
        let d = dims(4, 3);
        let a = ladder_op(d, Cavity::A, LadderKind::Annihilate);
        let one = fock_state(d, AtomLabel::G, 1, 0).unwrap();
        let vac = fock_state(d, AtomLabel::G, 0, 0).unwrap();
        assert!(close(&one.apply(&a).unwrap(), vac.amplitudes()) < 1e-15);
        assert!(vac.apply(&a).unwrap().iter().all(|z| z.norm() == 0.0));

        let ad = ladder_op(d, Cavity::A, LadderKind::Create);
        let two = fock_state(d, AtomLabel::G, 2, 0).unwrap();
        let expected = two.amplitudes().mapv(|z| z * 2f64.sqrt());
        assert!(close(&one.apply(&ad).unwrap(), &expected) < 1e-15);

        // hard cut: a† kills the top level
        let top = fock_state(d, AtomLabel::G, 3, 0).unwrap();
        assert!(top.apply(&ad).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn ladder_on_cavity_b_uses_fast_index() {
        let d = dims(2, 3);
        let ad = ladder_op(d, Cavity::B, LadderKind::Create);
        let vac = fock_state(d, AtomLabel::E, 0, 0).unwrap();
        let out = vac.apply(&ad).unwrap();
        assert!((out[d.index(1, 0, 1)] - ONE).norm() < 1e-15);
    }

    #[test]
    fn atomic_operator_actions() {
        let d = dims(2, 2);
        let e = fock_state(d, AtomLabel::E, 0, 0).unwrap();
        let g = fock_state(d, AtomLabel::G, 0, 0).unwrap();
        let sigma = atomic_op(d, AtomicOpKind::Sigma);
        assert!(close(&e.apply(&sigma).unwrap(), g.amplitudes()) < 1e-15);

        let plus = fock_state(d, AtomLabel::Plus, 0, 0).unwrap();
        let projected = g.apply(&atomic_op(d, AtomicOpKind::ProjPlus)).unwrap();
        let expected = plus.amplitudes().mapv(|z| z * FRAC_1_SQRT_2);
        assert!(close(&projected, &expected) < 1e-15);

        let minus = fock_state(d, AtomLabel::Minus, 0, 0).unwrap();
        let flipped = minus.apply(&atomic_op(d, AtomicOpKind::FlipPm)).unwrap();
        assert!(close(&flipped, plus.amplitudes()) < 1e-15);
    }

    #[test]
    fn displacement_identity_and_inverse() {
        let d = dims(30, 1);
        let id = displacement_op(d, Cavity::A, ZERO);
        assert!(linalg::max_abs(&(id.matrix() - &Array2::<C64>::eye(d.total()))) < 1e-15);

        let alpha = C64::new(0.5, 0.5);
        let prod = displacement_op(d, Cavity::A, alpha)
            .compose(&displacement_op(d, Cavity::A, -alpha))
            .unwrap();
        let dev = linalg::max_abs(&(prod.matrix() - &Array2::<C64>::eye(d.total())));
        assert!(dev < 1e-8, "deviation {dev}");
    }

    #[test]
    fn displacement_is_unitary_within_truncation() {
        // |α|² ≤ n/4
        let n = 24;
        let d = dims(n, 1);
        let alpha = C64::new(1.5, -1.5);
        let dm = displacement_op(d, Cavity::A, alpha);
        let u = dm.dagger().compose(&dm).unwrap();
        let dev = linalg::max_abs(&(u.matrix() - &Array2::<C64>::eye(d.total())));
        assert!(dev < 1e-8, "deviation {dev}");
    }

    #[test]
    fn leakage_examples() {
        let d = dims(30, 2);
        let vac = fock_state(d, AtomLabel::G, 0, 0).unwrap();
        assert_eq!(leakage(&vac, 1, Cavity::A), 0.0);

        let c1 = coherent_state(d, Cavity::A, ONE, AtomLabel::G).unwrap();
        assert!(leakage(&c1, 30, Cavity::A) < 1e-20);

        let c2 = coherent_state(d, Cavity::A, C64::new(2.0, 0.0), AtomLabel::G).unwrap();
        let oracle = 1.0 - (0..5).map(|n| poisson_pmf(4.0, n)).sum::<f64>();
        let got = leakage(&c2, 5, Cavity::A);
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 0.371).abs() < 1e-3);
    }

    #[test]
    fn poisson_tail_matches_direct_sum() {
        for &(mean, cut) in &[(1.0, 3), (4.0, 5), (4.0, 4), (25.0, 30)] {
            let oracle = 1.0 - (0..cut).map(|n| poisson_pmf(mean, n)).sum::<f64>();
            assert!((poisson_tail(mean, cut) - oracle).abs() < 1e-12);
        }
        assert!(poisson_tail(1.0, 30) < 1e-20);
        assert!(poisson_tail(1.0, 30) > 0.0);
    }

    #[test]
    fn default_truncation_rule() {
        assert_eq!(default_truncation(0.0), 10);
        assert_eq!(default_truncation(1.0), 17);
        assert_eq!(default_truncation(2.0), 26);
        assert_eq!(default_truncation(5.0), 65);
        for a in [0.5, 1.0, 2.0, 3.0, 5.0] {
            assert!(poisson_tail(a * a, default_truncation(a)) < 1e-8);
        }
    }

    #[test]
    fn canonical_commutator_below_top_levels() {
        let n = 8;
        let d = dims(n, 1);
        let a = ladder_op(d, Cavity::A, LadderKind::Annihilate);
        let ad = ladder_op(d, Cavity::A, LadderKind::Create);
        let comm = a.commutator(&ad).unwrap();
        for k in 0..d.total() {
            let (_, na, _) = d.decode(k);
            if na < n - 1 {
                assert!((comm.matrix()[[k, k]] - ONE).norm() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn index_round_trip(n_a in 1usize..9, n_b in 1usize..9, atom in 0usize..2, i in 0usize..9, j in 0usize..9) {
            let d = dims(n_a, n_b);
            let (i, j) = (i % n_a, j % n_b);
            prop_assert_eq!(d.decode(d.index(atom, i, j)), (atom, i, j));
        }

        #[test]
        fn constructors_have_unit_norm(re in -2.0f64..2.0, im in -2.0f64..2.0, which in 0usize..4) {
            let d = dims(30, 3);
            let label = [AtomLabel::G, AtomLabel::E, AtomLabel::Plus, AtomLabel::Minus][which];
            let psi = coherent_state(d, Cavity::A, C64::new(re, im), label).unwrap();
            prop_assert!((psi.norm() - 1.0).abs() < 1e-10);
            let f = fock_state(d, label, 2, 1).unwrap();
            prop_assert!((f.norm() - 1.0).abs() < 1e-10);
        }
    }
}
