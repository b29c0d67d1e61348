//! Hamiltonians for one driven two-level atom inside cavity `j`.
//!
//! Frames, from the laboratory down:
//!
//! * lab: `ω₀σ†σ + ν a†a + Ω(e^{−iω_L t}σ† + e^{iω_L t}σ) + g(σ†a + σa†)`
//! * rotating at `ω_L`: `Δσ†σ + δ a†a + Ω(σ† + σ) + g(σ†a + σa†)`
//! * interaction picture w.r.t. `δ a†a + Ω(σ† + σ)` (requires `Δ = 0`):
//!   `(g/2)(|+⟩⟨+| − |−⟩⟨−| + e^{2iΩt}|+⟩⟨−| − e^{−2iΩt}|−⟩⟨+|) a e^{−iδt} + h.c.`
//!
//! and the effective generators valid for strong drive: the resonant
//! conditional displacement `(g/2)(σ† + σ)(a + a†)` at `δ = 0`, the dressed
//! JC coupling at `δ = 2Ω` and the dressed anti-JC coupling at `δ = −2Ω`.
//!
//! Validity conditions (`Ω ≫ g`, `|δ| ≫ g`) are never enforced; see
//! [`ValidityReport`].

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    atomic_matrix, atomic_op, ladder_op, number_op, AtomicOpKind, Cavity, LadderKind, Operator,
    PureState, SystemDims,
};
use crate::linalg::{self, I};
use crate::propagate::TimeDependentHamiltonian;

/// Absolute frequencies (rad/s), needed only in the laboratory frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteFrequencies {
    pub omega_0: f64,
    pub omega_l: f64,
    pub nu_a: f64,
    pub nu_b: f64,
}

/// Physical parameters of a two-cavity run. Frequencies in rad/s, times in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub g_a: f64,
    pub g_b: f64,
    pub omega_a: f64,
    pub omega_b: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    /// Atomic detuning `Δ = ω₀ − ω_L`.
    pub big_delta: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub absolute: Option<AbsoluteFrequencies>,
}

impl ProtocolParams {
    /// Equal couplings, no drive, no detuning, zero durations.
    pub fn with_couplings(g_a: f64, g_b: f64) -> Self {
        Self {
            g_a,
            g_b,
            omega_a: 0.0,
            omega_b: 0.0,
            delta_a: 0.0,
            delta_b: 0.0,
            big_delta: 0.0,
            t_a: 0.0,
            t_b: 0.0,
            absolute: None,
        }
    }

    pub fn coupling(&self, cavity: Cavity) -> f64 {
        match cavity {
            Cavity::A => self.g_a,
            Cavity::B => self.g_b,
        }
    }

    pub fn rabi(&self, cavity: Cavity) -> f64 {
        match cavity {
            Cavity::A => self.omega_a,
            Cavity::B => self.omega_b,
        }
    }

    pub fn detuning(&self, cavity: Cavity) -> f64 {
        match cavity {
            Cavity::A => self.delta_a,
            Cavity::B => self.delta_b,
        }
    }

    pub fn duration(&self, cavity: Cavity) -> f64 {
        match cavity {
            Cavity::A => self.t_a,
            Cavity::B => self.t_b,
        }
    }

    pub fn total_time(&self) -> f64 {
        self.t_a + self.t_b
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.g_a,
            self.g_b,
            self.omega_a,
            self.omega_b,
            self.delta_a,
            self.delta_b,
            self.big_delta,
            self.t_a,
            self.t_b,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Configuration("non-finite parameter".into()));
        }
        if self.g_a <= 0.0 || self.g_b <= 0.0 {
            return Err(Error::Configuration(format!(
                "couplings must be positive (g_A = {}, g_B = {})",
                self.g_a, self.g_b
            )));
        }
        if self.t_a < 0.0 || self.t_b < 0.0 {
            return Err(Error::Configuration("interaction times must be ≥ 0".into()));
        }
        if let Some(abs) = self.absolute {
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
            if !close(self.big_delta, abs.omega_0 - abs.omega_l) {
                return Err(Error::Configuration(format!(
                    "Δ = {} inconsistent with ω₀ − ω_L = {}",
                    self.big_delta,
                    abs.omega_0 - abs.omega_l
                )));
            }
            for (cav, nu) in [(Cavity::A, abs.nu_a), (Cavity::B, abs.nu_b)] {
                if !close(self.detuning(cav), nu - abs.omega_l) {
                    return Err(Error::Configuration(format!(
                        "δ_{cav:?} = {} inconsistent with ν − ω_L = {}",
                        self.detuning(cav),
                        nu - abs.omega_l
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    LabFrame,
    RotatingFrame,
    InteractionPicture,
    EffectiveResonant,
    DressedJc,
    DressedAjc,
}

impl ModelKind {
    pub fn is_time_dependent(self) -> bool {
        matches!(self, ModelKind::LabFrame | ModelKind::InteractionPicture)
    }
}

/// Coupling ratios that decide whether the effective models apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityValidity {
    pub omega_over_g: f64,
    pub delta_over_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub cavity_a: CavityValidity,
    pub cavity_b: CavityValidity,
}

impl ValidityReport {
    pub fn from_params(p: &ProtocolParams) -> Self {
        let one = |c: Cavity| CavityValidity {
            omega_over_g: p.rabi(c) / p.coupling(c),
            delta_over_g: p.detuning(c) / p.coupling(c),
        };
        Self {
            cavity_a: one(Cavity::A),
            cavity_b: one(Cavity::B),
        }
    }
}

fn require_absolute(params: &ProtocolParams) -> Result<AbsoluteFrequencies> {
    params.absolute.ok_or_else(|| {
        Error::Configuration("lab-frame model needs absolute frequencies ω₀, ω_L, ν_A, ν_B".into())
    })
}

fn cavity_frequency(abs: &AbsoluteFrequencies, cavity: Cavity) -> f64 {
    match cavity {
        Cavity::A => abs.nu_a,
        Cavity::B => abs.nu_b,
    }
}

/// `σ†a` on `cavity`.
fn jc_raising(dims: SystemDims, cavity: Cavity) -> Operator {
    atomic_op(dims, AtomicOpKind::SigmaDag)
        .compose(&ladder_op(dims, cavity, LadderKind::Annihilate))
        .expect("same dims")
}

fn excited_projector(dims: SystemDims) -> Operator {
    atomic_op(dims, AtomicOpKind::SigmaDag)
        .compose(&atomic_op(dims, AtomicOpKind::Sigma))
        .expect("same dims")
        .with_hermitian_flag(true)
}

fn sigma_x(dims: SystemDims) -> Operator {
    atomic_op(dims, AtomicOpKind::SigmaDag)
        .add(&atomic_op(dims, AtomicOpKind::Sigma))
        .expect("same dims")
        .with_hermitian_flag(true)
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn sum(terms: &[Operator]) -> Operator {
    let mut acc = Operator::zeros(terms[0].dims());
    for t in terms {
        acc = acc.add(t).expect("same dims");
    }
    acc
}

/// Laboratory-frame Hamiltonian of cavity `j` at time `t`.
pub fn build_lab_hamiltonian(
    dims: SystemDims,
    params: &ProtocolParams,
    cavity: Cavity,
    t: f64,
) -> Result<Operator> {
    let abs = require_absolute(params)?;
    let g = params.coupling(cavity);
    let omega = params.rabi(cavity);
    let drive = atomic_op(dims, AtomicOpKind::SigmaDag).scale(C64::from_polar(omega, -abs.omega_l * t));
    let coupling = jc_raising(dims, cavity).scale(real(g));
    let diag = excited_projector(dims)
        .scale(real(abs.omega_0))
        .add(&number_op(dims, cavity).scale(real(cavity_frequency(&abs, cavity))))?;
    let h = diag.add(&drive.add(&coupling)?.plus_adjoint())?;
    Operator::hermitian(dims, h.into_matrix())
}

/// Hamiltonian in the frame rotating at the drive frequency.
pub fn build_rotating_hamiltonian(
    dims: SystemDims,
    params: &ProtocolParams,
    cavity: Cavity,
) -> Operator {
    let g = params.coupling(cavity);
    let h = sum(&[
        excited_projector(dims).scale(real(params.big_delta)),
        number_op(dims, cavity).scale(real(params.detuning(cavity))),
        sigma_x(dims).scale(real(params.rabi(cavity))),
        jc_raising(dims, cavity).scale(real(g)).plus_adjoint(),
    ]);
    h.with_hermitian_flag(true)
}

/// Interaction-picture Hamiltonian as a reusable evaluate-at-`t` model.
///
/// Stored as `H(t) = Σ_k e^{iω_k t} X_k + h.c.` with
/// `X₀ = (g/2)(|+⟩⟨+| − |−⟩⟨−|)a` at `ω₀ = −δ`,
/// `X₁ = (g/2)|+⟩⟨−|a` at `ω₁ = 2Ω − δ`,
/// `X₂ = −(g/2)|−⟩⟨+|a` at `ω₂ = −2Ω − δ`.
#[derive(Debug, Clone)]
pub struct InteractionHamiltonian {
    dims: SystemDims,
    terms: Vec<(Array2<C64>, f64)>,
    /// Nonzero entries `(row, col, value)` of each term.
    sparse: Vec<Vec<(usize, usize, C64)>>,
    norm_bound: f64,
}

impl InteractionHamiltonian {
    pub fn new(dims: SystemDims, params: &ProtocolParams, cavity: Cavity) -> Result<Self> {
        if params.big_delta != 0.0 {
            return Err(Error::Unsupported(format!(
                "interaction-picture model requires Δ = 0 (got {})",
                params.big_delta
            )));
        }
        let g = params.coupling(cavity);
        let omega = params.rabi(cavity);
        let delta = params.detuning(cavity);
        let a = ladder_op(dims, cavity, LadderKind::Annihilate);
        let with_a = |kind: AtomicOpKind, c: f64| -> Operator {
            atomic_op(dims, kind).compose(&a).expect("same dims").scale(real(c))
        };
        let x0 = with_a(AtomicOpKind::ProjPlus, 0.5 * g)
            .sub(&with_a(AtomicOpKind::ProjMinus, 0.5 * g))?;
        let x1 = with_a(AtomicOpKind::FlipPm, 0.5 * g);
        let flip_mp = Operator::local(dims, Some(&linalg::dagger(&atomic_matrix(AtomicOpKind::FlipPm))), None, None)?;
        let x2 = flip_mp.compose(&a)?.scale(real(-0.5 * g));
        let terms = vec![
            (x0.into_matrix(), -delta),
            (x1.into_matrix(), 2.0 * omega - delta),
            (x2.into_matrix(), -2.0 * omega - delta),
        ];
        let norm_bound = 2.0 * terms.iter().map(|(m, _)| linalg::one_norm(m)).sum::<f64>();
        let sparse = terms
            .iter()
            .map(|(m, _)| {
                m.indexed_iter()
                    .filter(|(_, z)| z.norm() > 0.0)
                    .map(|((i, j), &z)| (i, j, z))
                    .collect()
            })
            .collect();
        Ok(Self {
            dims,
            terms,
            sparse,
            norm_bound,
        })
    }

    /// Largest oscillation frequency present, `max_k |ω_k|`.
    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|(_, w)| w.abs()).fold(0.0, f64::max)
    }
}

impl TimeDependentHamiltonian for InteractionHamiltonian {
    fn dims(&self) -> SystemDims {
        self.dims
    }

    fn at(&self, t: f64) -> Operator {
        let n = self.dims.total();
        let mut x = Array2::<C64>::zeros((n, n));
        for (m, w) in &self.terms {
            x.scaled_add(C64::from_polar(1.0, w * t), m);
        }
        Operator::new(self.dims, x).expect("dims").plus_adjoint()
    }

    fn apply(&self, t: f64, v: &Array1<C64>) -> Array1<C64> {
        self.apply_pair((t, 1.0), (t, 0.0), v)
    }

    fn apply_pair(&self, (t1, w1): (f64, f64), (t2, w2): (f64, f64), v: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(v.len());
        for ((_, w), entries) in self.terms.iter().zip(&self.sparse) {
            let phase = C64::from_polar(w1, w * t1) + C64::from_polar(w2, w * t2);
            for &(i, j, z) in entries {
                let c = phase * z;
                out[i] += c * v[j];
                out[j] += c.conj() * v[i];
            }
        }
        out
    }

    fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

/// Lab-frame model as an evaluate-at-`t` callable.
#[derive(Debug, Clone)]
pub struct LabHamiltonian {
    dims: SystemDims,
    params: ProtocolParams,
    cavity: Cavity,
    norm_bound: f64,
}

impl LabHamiltonian {
    pub fn new(dims: SystemDims, params: &ProtocolParams, cavity: Cavity) -> Result<Self> {
        let h0 = build_lab_hamiltonian(dims, params, cavity, 0.0)?;
        Ok(Self {
            dims,
            params: *params,
            cavity,
            norm_bound: linalg::one_norm(h0.matrix()),
        })
    }
}

impl TimeDependentHamiltonian for LabHamiltonian {
    fn dims(&self) -> SystemDims {
        self.dims
    }

    fn at(&self, t: f64) -> Operator {
        build_lab_hamiltonian(self.dims, &self.params, self.cavity, t).expect("validated at construction")
    }

    fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

/// Interaction-picture Hamiltonian evaluated at `t`.
pub fn build_interaction_hamiltonian(
    dims: SystemDims,
    params: &ProtocolParams,
    cavity: Cavity,
    t: f64,
) -> Result<Operator> {
    Ok(InteractionHamiltonian::new(dims, params, cavity)?.at(t))
}

/// Strong-drive resonant generator `(g/2)(σ† + σ)(a + a†)`.
pub fn build_effective_hamiltonian(
    dims: SystemDims,
    params: &ProtocolParams,
    cavity: Cavity,
) -> Operator {
    let g = params.coupling(cavity);
    let quad = ladder_op(dims, cavity, LadderKind::Annihilate)
        .add(&ladder_op(dims, cavity, LadderKind::Create))
        .expect("same dims");
    sigma_x(dims)
        .compose(&quad)
        .expect("same dims")
        .scale(real(0.5 * g))
        .with_hermitian_flag(true)
}

/// Dressed-basis JC coupling `(g/2)(|+⟩⟨−|a + |−⟩⟨+|a†)`.
pub fn build_dressed_jc(dims: SystemDims, params: &ProtocolParams, cavity: Cavity) -> Operator {
    let g = params.coupling(cavity);
    atomic_op(dims, AtomicOpKind::FlipPm)
        .compose(&ladder_op(dims, cavity, LadderKind::Annihilate))
        .expect("same dims")
        .scale(real(0.5 * g))
        .plus_adjoint()
}

/// Dressed-basis anti-JC coupling `(g/2)(|−⟩⟨+|a + |+⟩⟨−|a†)`.
pub fn build_dressed_ajc(dims: SystemDims, params: &ProtocolParams, cavity: Cavity) -> Operator {
    let g = params.coupling(cavity);
    atomic_op(dims, AtomicOpKind::FlipPm)
        .compose(&ladder_op(dims, cavity, LadderKind::Create))
        .expect("same dims")
        .scale(real(0.5 * g))
        .plus_adjoint()
}

/// Builds a time-independent model. Time-dependent kinds are rejected; use
/// [`InteractionHamiltonian`] or [`LabHamiltonian`] for those.
pub fn build_static(
    kind: ModelKind,
    dims: SystemDims,
    params: &ProtocolParams,
    cavity: Cavity,
) -> Result<Operator> {
    match kind {
        ModelKind::RotatingFrame => Ok(build_rotating_hamiltonian(dims, params, cavity)),
        ModelKind::EffectiveResonant => Ok(build_effective_hamiltonian(dims, params, cavity)),
        ModelKind::DressedJc => Ok(build_dressed_jc(dims, params, cavity)),
        ModelKind::DressedAjc => Ok(build_dressed_ajc(dims, params, cavity)),
        ModelKind::LabFrame | ModelKind::InteractionPicture => Err(Error::Unsupported(format!(
            "{kind:?} is time dependent"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FramePair {
    /// Lab frame ↔ frame rotating at `ω_L`; generator `ω_L(σ†σ + a†_j a_j)`.
    LabRotating,
    /// Rotating frame ↔ interaction picture; generator `δ_j a†_j a_j + Ω_j(σ† + σ)`.
    RotatingInteraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameDirection {
    /// Applies `e^{iH₀t}`.
    Into,
    /// Applies `e^{−iH₀t}`.
    OutOf,
}

/// Generator `H₀` of the frame change.
pub fn frame_generator(
    dims: SystemDims,
    params: &ProtocolParams,
    cavity: Cavity,
    pair: FramePair,
) -> Result<Operator> {
    match pair {
        FramePair::LabRotating => {
            let abs = require_absolute(params)?;
            Ok(excited_projector(dims)
                .add(&number_op(dims, cavity))?
                .scale(real(abs.omega_l)))
        }
        FramePair::RotatingInteraction => Ok(number_op(dims, cavity)
            .scale(real(params.detuning(cavity)))
            .add(&sigma_x(dims).scale(real(params.rabi(cavity))))?),
    }
}

/// Anything that changes under a frame unitary.
pub trait FrameTransformable: Sized {
    fn frame_dims(&self) -> SystemDims;
    fn conjugate_by(&self, u: &Operator) -> Result<Self>;
}

impl FrameTransformable for PureState {
    fn frame_dims(&self) -> SystemDims {
        self.dims()
    }

    fn conjugate_by(&self, u: &Operator) -> Result<Self> {
        Ok(PureState::from_unitary_image(self.dims(), self.apply(u)?))
    }
}

impl FrameTransformable for Operator {
    fn frame_dims(&self) -> SystemDims {
        self.dims()
    }

    fn conjugate_by(&self, u: &Operator) -> Result<Self> {
        let out = u.compose(self)?.compose(&u.dagger())?;
        Ok(out.with_hermitian_flag(self.is_flagged_hermitian()))
    }
}

/// `e^{iH₀t}(·)e^{−iH₀t}` for operators and `e^{iH₀t}|ψ⟩` for states
/// (`Into`); `OutOf` applies the inverse. The generator term itself is not
/// subtracted from Hamiltonians.
pub fn frame_transform<T: FrameTransformable>(
    x: &T,
    params: &ProtocolParams,
    cavity: Cavity,
    pair: FramePair,
    direction: FrameDirection,
    t: f64,
) -> Result<T> {
    let dims = x.frame_dims();
    let h0 = frame_generator(dims, params, cavity, pair)?;
    let sign = match direction {
        FrameDirection::Into => 1.0,
        FrameDirection::OutOf => -1.0,
    };
    let u = Operator::new(dims, linalg::expm(&h0.matrix().mapv(|z| z * I * (sign * t))))?;
    x.conjugate_by(&u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{fock_state, AtomLabel};
    use ndarray::Array1;

    fn dims() -> SystemDims {
        SystemDims::new(4, 3).unwrap()
    }

    fn unit_params() -> ProtocolParams {
        ProtocolParams::with_couplings(1.0, 1.0)
    }

    fn lab_params() -> ProtocolParams {
        let abs = AbsoluteFrequencies {
            omega_0: 50.3,
            omega_l: 50.0,
            nu_a: 51.1,
            nu_b: 49.2,
        };
        ProtocolParams {
            g_a: 0.7,
            g_b: 0.4,
            omega_a: 2.5,
            omega_b: 1.5,
            delta_a: abs.nu_a - abs.omega_l,
            delta_b: abs.nu_b - abs.omega_l,
            big_delta: abs.omega_0 - abs.omega_l,
            t_a: 1.0,
            t_b: 1.0,
            absolute: Some(abs),
        }
    }

    fn max_dev(a: &Operator, b: &Operator) -> f64 {
        linalg::max_abs(&(a.matrix() - b.matrix()))
    }

    fn vec_dev(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn lab_diagonal_energy() {
        let d = dims();
        let mut p = unit_params();
        p.g_a = 0.0;
        p.absolute = Some(AbsoluteFrequencies {
            omega_0: 1.0,
            omega_l: 1.0,
            nu_a: 1.0,
            nu_b: 1.0,
        });
        let h = build_lab_hamiltonian(d, &p, Cavity::A, 0.0).unwrap();
        let psi = fock_state(d, AtomLabel::E, 1, 0).unwrap();
        assert!((psi.expectation(&h).unwrap().re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lab_coupling_element() {
        let d = dims();
        let mut p = unit_params();
        p.absolute = Some(AbsoluteFrequencies {
            omega_0: 0.0,
            omega_l: 0.0,
            nu_a: 0.0,
            nu_b: 0.0,
        });
        let h = build_lab_hamiltonian(d, &p, Cavity::A, 0.0).unwrap();
        let elem = h.matrix()[[d.index(0, 1, 0), d.index(1, 0, 0)]];
        assert!((elem - real(1.0)).norm() < 1e-15);
    }

    #[test]
    fn lab_requires_absolute_frequencies() {
        assert!(matches!(
            build_lab_hamiltonian(dims(), &unit_params(), Cavity::A, 0.0),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn lab_is_hermitian_at_generic_time() {
        let p = lab_params();
        let h = build_lab_hamiltonian(dims(), &p, Cavity::B, 0.3 / 50.0).unwrap();
        assert!(h.hermiticity_residual() < 1e-12);
    }

    #[test]
    fn rotating_drive_only_spectrum() {
        let d = dims();
        let mut p = unit_params();
        p.g_a = 0.0;
        p.omega_a = 1.0;
        let h = build_rotating_hamiltonian(d, &p, Cavity::A);
        let vals = linalg::hermitian_eigenvalues(h.matrix());
        let half = vals.len() / 2;
        assert!(vals[..half].iter().all(|v| (v + 1.0).abs() < 1e-12));
        assert!(vals[half..].iter().all(|v| (v - 1.0).abs() < 1e-12));

        let elem = h.matrix()[[d.index(1, 0, 0), d.index(0, 0, 0)]];
        assert!((elem - real(1.0)).norm() < 1e-15);
    }

    #[test]
    fn rotating_matches_transformed_lab_hamiltonian() {
        let d = dims();
        let p = lab_params();
        for cav in [Cavity::A, Cavity::B] {
            for t in [0.0, 0.37, 1.9] {
                let lab = build_lab_hamiltonian(d, &p, cav, t).unwrap();
                let moved = frame_transform(&lab, &p, cav, FramePair::LabRotating, FrameDirection::Into, t).unwrap();
                let h0 = frame_generator(d, &p, cav, FramePair::LabRotating).unwrap();
                let rot = build_rotating_hamiltonian(d, &p, cav);
                let dev = max_dev(&moved.sub(&h0).unwrap(), &rot);
                assert!(dev < 1e-10, "cavity {cav:?} t = {t}: {dev}");
            }
        }
    }

    #[test]
    fn interaction_at_zero_matches_explicit_formula() {
        let d = dims();
        let mut p = unit_params();
        p.g_a = 0.8;
        p.omega_a = 5.0;
        p.delta_a = 1.3;
        let h = build_interaction_hamiltonian(d, &p, Cavity::A, 0.0).unwrap();
        // (g/2)(P+ − P− + |+⟩⟨−| − |−⟩⟨+|) = g σ† in the bare basis
        let explicit = jc_raising(d, Cavity::A).scale(real(p.g_a)).plus_adjoint();
        assert!(max_dev(&h, &explicit) < 1e-14);
    }

    #[test]
    fn interaction_is_hermitian_and_rejects_atomic_detuning() {
        let d = dims();
        let mut p = unit_params();
        p.omega_a = 10.0;
        p.delta_a = 3.0;
        for t in [0.11, 0.73, 4.4, 17.0] {
            let h = build_interaction_hamiltonian(d, &p, Cavity::A, t).unwrap();
            assert!(h.hermiticity_residual() < 1e-12);
        }
        p.big_delta = 0.1;
        assert!(matches!(
            build_interaction_hamiltonian(d, &p, Cavity::A, 0.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn interaction_sparse_action_matches_dense() {
        let d = dims();
        let mut p = unit_params();
        p.omega_b = 6.0;
        p.delta_b = -12.0;
        let h = InteractionHamiltonian::new(d, &p, Cavity::B).unwrap();
        let v = Array1::from_shape_fn(d.total(), |k| C64::new(1.0 / (k + 1) as f64, 0.03 * k as f64));
        for t in [0.0, 0.37, 2.9] {
            assert!(vec_dev(&h.apply(t, &v), &h.at(t).matrix().dot(&v)) < 1e-13);
            let pair = h.at(t).matrix().dot(&v).mapv(|z| z * 0.3) + h.at(t + 0.1).matrix().dot(&v).mapv(|z| z * -0.7);
            assert!(vec_dev(&h.apply_pair((t, 0.3), (t + 0.1, -0.7), &v), &pair) < 1e-13);
        }
    }

    #[test]
    fn interaction_matches_transformed_rotating_hamiltonian() {
        let d = dims();
        let mut p = unit_params();
        p.g_b = 0.6;
        p.omega_b = 4.0;
        p.delta_b = 7.5;
        for t in [0.0, 0.21, 1.7] {
            let rot = build_rotating_hamiltonian(d, &p, Cavity::B);
            let moved = frame_transform(&rot, &p, Cavity::B, FramePair::RotatingInteraction, FrameDirection::Into, t).unwrap();
            let h0 = frame_generator(d, &p, Cavity::B, FramePair::RotatingInteraction).unwrap();
            let hi = build_interaction_hamiltonian(d, &p, Cavity::B, t).unwrap();
            let dev = max_dev(&moved.sub(&h0).unwrap(), &hi);
            assert!(dev < 1e-10, "t = {t}: {dev}");
        }
    }

    #[test]
    fn frame_transform_identity_round_trip_and_norm() {
        let d = dims();
        let mut p = unit_params();
        p.omega_a = 2.0;
        p.delta_a = 0.7;
        let amps = Array1::from_shape_fn(d.total(), |k| C64::new(1.0 / (k + 1) as f64, 0.05 * k as f64));
        let psi = PureState::normalized(d, amps).unwrap();
        let same = frame_transform(&psi, &p, Cavity::A, FramePair::RotatingInteraction, FrameDirection::Into, 0.0).unwrap();
        assert!(vec_dev(same.amplitudes(), psi.amplitudes()) < 1e-15);

        let there = frame_transform(&psi, &p, Cavity::A, FramePair::RotatingInteraction, FrameDirection::Into, 2.3).unwrap();
        assert!((there.norm() - 1.0).abs() < 1e-10);
        let back = frame_transform(&there, &p, Cavity::A, FramePair::RotatingInteraction, FrameDirection::OutOf, 2.3).unwrap();
        assert!(vec_dev(back.amplitudes(), psi.amplitudes()) < 1e-10);

        let h = build_rotating_hamiltonian(d, &p, Cavity::A);
        let h2 = frame_transform(&h, &p, Cavity::A, FramePair::RotatingInteraction, FrameDirection::Into, 1.1).unwrap();
        let h3 = frame_transform(&h2, &p, Cavity::A, FramePair::RotatingInteraction, FrameDirection::OutOf, 1.1).unwrap();
        assert!(max_dev(&h, &h3) < 1e-10);
    }

    #[test]
    fn effective_actions() {
        let d = dims();
        let p = unit_params();
        let h = build_effective_hamiltonian(d, &p, Cavity::A);
        let out = fock_state(d, AtomLabel::G, 0, 0).unwrap().apply(&h).unwrap();
        let e10 = fock_state(d, AtomLabel::E, 1, 0).unwrap();
        assert!(vec_dev(&out, &e10.amplitudes().mapv(|z| z * 0.5)) < 1e-15);

        let out = fock_state(d, AtomLabel::Plus, 0, 0).unwrap().apply(&h).unwrap();
        let p10 = fock_state(d, AtomLabel::Plus, 1, 0).unwrap();
        assert!(vec_dev(&out, &p10.amplitudes().mapv(|z| z * 0.5)) < 1e-15);

        let parity = atomic_op(d, AtomicOpKind::ProjPlus).sub(&atomic_op(d, AtomicOpKind::ProjMinus)).unwrap();
        assert!(h.commutator(&parity).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn dressed_jc_actions() {
        let d = dims();
        let p = unit_params();
        let h = build_dressed_jc(d, &p, Cavity::A);
        let out = fock_state(d, AtomLabel::Minus, 1, 0).unwrap().apply(&h).unwrap();
        let target = fock_state(d, AtomLabel::Plus, 0, 0).unwrap();
        assert!(vec_dev(&out, &target.amplitudes().mapv(|z| z * 0.5)) < 1e-15);

        let out = fock_state(d, AtomLabel::Minus, 0, 0).unwrap().apply(&h).unwrap();
        assert!(out.iter().all(|z| z.norm() < 1e-15));

        let excitations = atomic_op(d, AtomicOpKind::ProjPlus).add(&number_op(d, Cavity::A)).unwrap();
        assert!(h.commutator(&excitations).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn dressed_ajc_actions_and_swap_relation() {
        let d = dims();
        let p = unit_params();
        let h = build_dressed_ajc(d, &p, Cavity::B);
        let out = fock_state(d, AtomLabel::Minus, 0, 0).unwrap().apply(&h).unwrap();
        let target = fock_state(d, AtomLabel::Plus, 0, 1).unwrap();
        assert!(vec_dev(&out, &target.amplitudes().mapv(|z| z * 0.5)) < 1e-15);

        let out = fock_state(d, AtomLabel::Plus, 0, 0).unwrap().apply(&h).unwrap();
        assert!(out.iter().all(|z| z.norm() < 1e-15));

        // |+⟩ ↔ |−⟩ swap is σ_z in the bare basis
        let z = Array2::from_shape_vec((2, 2), vec![real(1.0), real(0.0), real(0.0), real(-1.0)]).unwrap();
        let swap = Operator::local(d, Some(&z), None, None).unwrap();
        let jc = build_dressed_jc(d, &p, Cavity::B);
        let conj = swap.compose(&jc).unwrap().compose(&swap).unwrap();
        assert!(max_dev(&conj, &h) < 1e-12);
    }

    /// Uniform average of `H(t)` over one drive period `π/Ω`; exact for the
    /// harmonics present when the sample count exceeds their order.
    fn period_average(h: &InteractionHamiltonian, omega: f64) -> Array2<C64> {
        let samples = 64;
        let period = std::f64::consts::PI / omega;
        let mut acc = Array2::<C64>::zeros(h.at(0.0).matrix().dim());
        for k in 0..samples {
            acc += h.at(period * k as f64 / samples as f64).matrix();
        }
        acc.mapv(|z| z / samples as f64)
    }

    #[test]
    fn period_average_gives_effective_generators() {
        let d = dims();
        let mut p = unit_params();
        p.omega_a = 25.0;
        let h = InteractionHamiltonian::new(d, &p, Cavity::A).unwrap();
        let target = build_effective_hamiltonian(d, &p, Cavity::A);
        assert!(linalg::max_abs(&(period_average(&h, 25.0) - target.matrix())) < 1e-12);

        p.delta_a = 50.0;
        let h = InteractionHamiltonian::new(d, &p, Cavity::A).unwrap();
        let target = build_dressed_jc(d, &p, Cavity::A);
        assert!(linalg::max_abs(&(period_average(&h, 25.0) - target.matrix())) < 1e-12);

        // at δ = −2Ω the surviving coupling is the anti-JC generator with
        // the opposite sign
        p.delta_a = -50.0;
        let h = InteractionHamiltonian::new(d, &p, Cavity::A).unwrap();
        let target = build_dressed_ajc(d, &p, Cavity::A).scale(real(-1.0));
        assert!(linalg::max_abs(&(period_average(&h, 25.0) - target.matrix())) < 1e-12);
    }

    #[test]
    fn builders_are_hermitian() {
        let d = dims();
        let p = lab_params();
        let mut q = p;
        q.big_delta = 0.0;
        for cav in [Cavity::A, Cavity::B] {
            for kind in [ModelKind::RotatingFrame, ModelKind::EffectiveResonant, ModelKind::DressedJc, ModelKind::DressedAjc] {
                let h = build_static(kind, d, &p, cav).unwrap();
                assert!(h.hermiticity_residual() < 1e-12, "{kind:?}");
            }
            let ih = InteractionHamiltonian::new(d, &q, cav).unwrap();
            for k in 0..20 {
                assert!(ih.at(0.173 * k as f64).hermiticity_residual() < 1e-12);
            }
        }
        assert!(build_static(ModelKind::LabFrame, d, &p, Cavity::A).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = lab_params();
        assert!(p.validate().is_ok());
        p.delta_a += 1e-3;
        assert!(matches!(p.validate(), Err(Error::Configuration(_))));
        let mut q = unit_params();
        q.g_b = 0.0;
        assert!(q.validate().is_err());
        q.g_b = 1.0;
        q.t_a = -1.0;
        assert!(q.validate().is_err());
    }
}
