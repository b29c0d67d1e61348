//! End-to-end preparation protocols. The atom crosses cavity A for `t_A`,
//! then cavity B for `t_B`; the flight between cavities is the identity.
//!
//! | protocol | start | cavity A | cavity B | result |
//! |---|---|---|---|---|
//! | entangled coherent | `|g,0,0⟩` | displacement (`δ = 0`) | displacement (`δ = 0`) | `N±(|α,β⟩ ± |−α,−β⟩)` after a bare measurement |
//! | Bell odd | `|+,0,0⟩` | JC, `π/(2g_A)` | JC, `π/g_B` | `|−⟩(|01⟩+|10⟩)/√2` |
//! | Bell even | `|+,0,0⟩` | JC, `π/(2g_A)` | anti-JC, `π/g_B` | `|+⟩(|00⟩−|11⟩)/√2` |
//!
//! Each runs on three engines: `Analytic` (closed-form propagators, the
//! oracle), `EffectiveNumeric` (matrix exponentials of the effective
//! generators) and `FullNumeric` (the driven interaction-picture Hamiltonian,
//! integrated step by step). All states are in the interaction picture and
//! all fidelities are phase blind.

use ndarray::{s, Array1};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::hilbert::{
    coherent_amplitudes, edge_population, fock_state, poisson_tail, AtomLabel, Cavity, FieldState,
    PureState, SystemDims, DEFAULT_LEAKAGE_TOLERANCE, MAX_DENSE_DIM,
};
use crate::linalg::I;
use crate::measures::{self, field_fidelity, reduce_to_qubits, reduced_atom_purity};
use crate::models::{
    build_dressed_ajc, build_dressed_jc, build_effective_hamiltonian, InteractionHamiltonian,
    ProtocolParams, ValidityReport,
};
use crate::propagate::{
    conditional_displacement, displacement_amplitude, evolve_lindblad, evolve_time_dependent,
    evolve_unitary, DensityMatrix, IntegratorOptions, NoiseParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    EntangledCoherent,
    #[serde(rename = "bell_odd")]
    BellOddParity,
    #[serde(rename = "bell_even")]
    BellEvenParity,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [
        ProtocolKind::EntangledCoherent,
        ProtocolKind::BellOddParity,
        ProtocolKind::BellEvenParity,
    ];

    /// Parameters at the resonance each protocol needs, with drive
    /// `Ω_j = omega_over_g · g_j` and the default interaction times.
    /// Entangled-coherent runs get `t_j = 2/g_j` (`|α| = |β| = 1`).
    pub fn default_params(self, g_a: f64, g_b: f64, omega_over_g: f64) -> ProtocolParams {
        let mut p = ProtocolParams::with_couplings(g_a, g_b);
        p.omega_a = omega_over_g * g_a;
        p.omega_b = omega_over_g * g_b;
        match self {
            ProtocolKind::EntangledCoherent => {
                p.t_a = 2.0 / g_a;
                p.t_b = 2.0 / g_b;
            }
            ProtocolKind::BellOddParity => {
                p.delta_a = 2.0 * p.omega_a;
                p.delta_b = 2.0 * p.omega_b;
                p.t_a = PI / (2.0 * g_a);
                p.t_b = PI / g_b;
            }
            ProtocolKind::BellEvenParity => {
                p.delta_a = 2.0 * p.omega_a;
                p.delta_b = -2.0 * p.omega_b;
                p.t_a = PI / (2.0 * g_a);
                p.t_b = PI / g_b;
            }
        }
        p
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::EntangledCoherent => "entangled_coherent",
            ProtocolKind::BellOddParity => "bell_odd",
            ProtocolKind::BellEvenParity => "bell_even",
        }
    }
}

/// Interaction times `t_j = 2|α_j|/g_j` giving displacements of the given size.
pub fn ecs_times(params: &ProtocolParams, alpha_abs: f64, beta_abs: f64) -> (f64, f64) {
    (2.0 * alpha_abs / params.g_a, 2.0 * beta_abs / params.g_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Analytic,
    EffectiveNumeric,
    FullNumeric,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Analytic, Engine::EffectiveNumeric, Engine::FullNumeric];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::EffectiveNumeric => "effective_numeric",
            Engine::FullNumeric => "full_numeric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureBasis {
    Bare,
    Dressed,
}

/// Numerical settings shared by all protocol runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub dims: SystemDims,
    pub engine: Engine,
    pub integrator: IntegratorOptions,
    pub leakage_tolerance: f64,
}

impl RunSettings {
    pub fn new(dims: SystemDims, engine: Engine) -> Self {
        Self {
            dims,
            engine,
            integrator: IntegratorOptions::default(),
            leakage_tolerance: DEFAULT_LEAKAGE_TOLERANCE,
        }
    }
}

/// One outcome of a projective atomic measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub outcome: AtomLabel,
    pub probability: f64,
    /// Renormalized field state; `None` for a zero-probability outcome.
    pub field: Option<FieldState>,
    /// `|⟨target|field⟩|²` against the protocol's target for this outcome.
    pub target_fidelity: Option<f64>,
}

/// Branches below this probability carry no state.
pub const EMPTY_BRANCH_PROBABILITY: f64 = 1e-14;

/// Projective measurement of the atom.
pub fn measure_atom(state: &PureState, basis: MeasureBasis) -> Vec<Branch> {
    let labels = match basis {
        MeasureBasis::Bare => [AtomLabel::G, AtomLabel::E],
        MeasureBasis::Dressed => [AtomLabel::Plus, AtomLabel::Minus],
    };
    labels
        .iter()
        .map(|&outcome| {
            let v = state.project_atom(outcome.amplitudes());
            let probability: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let field = if probability > EMPTY_BRANCH_PROBABILITY {
                FieldState::normalized(state.dims(), v).ok()
            } else {
                None
            };
            Branch {
                outcome,
                probability,
                field,
                target_fidelity: None,
            }
        })
        .collect()
}

/// `N± = [2(1 ± e^{−2(|α|²+|β|²)})]^{−1/2}`.
pub fn ecs_normalization(alpha: C64, beta: C64, sign: f64) -> Result<f64> {
    let overlap = (-2.0 * (alpha.norm_sqr() + beta.norm_sqr())).exp();
    let inner = 2.0 * (1.0 + sign.signum() * overlap);
    if inner <= 0.0 {
        return Err(Error::Degenerate(
            "odd entangled coherent state vanishes at α = β = 0".into(),
        ));
    }
    Ok(inner.powf(-0.5))
}

/// `|α⟩_A|β⟩_B ± |−α⟩_A|−β⟩_B`, normalized in the truncated space.
pub fn ecs_target(dims: SystemDims, alpha: C64, beta: C64, sign: f64) -> Result<FieldState> {
    let pa = coherent_amplitudes(dims.n_a(), alpha);
    let ma = coherent_amplitudes(dims.n_a(), -alpha);
    let pb = coherent_amplitudes(dims.n_b(), beta);
    let mb = coherent_amplitudes(dims.n_b(), -beta);
    let s = sign.signum();
    let v = Array1::from_shape_fn(dims.field_dim(), |k| {
        let (i, j) = (k / dims.n_b(), k % dims.n_b());
        pa[i] * pb[j] + ma[i] * mb[j] * s
    });
    FieldState::normalized(dims, v)
}

/// `(|+⟩|α,β⟩ + |−⟩|−α,−β⟩)/√2`.
pub fn tripartite_target(dims: SystemDims, alpha: C64, beta: C64) -> Result<PureState> {
    let pa = coherent_amplitudes(dims.n_a(), alpha);
    let ma = coherent_amplitudes(dims.n_a(), -alpha);
    let pb = coherent_amplitudes(dims.n_b(), beta);
    let mb = coherent_amplitudes(dims.n_b(), -beta);
    let (kp, km) = (AtomLabel::Plus.amplitudes(), AtomLabel::Minus.amplitudes());
    let v = Array1::from_shape_fn(dims.total(), |idx| {
        let (atom, i, j) = dims.decode(idx);
        kp[atom] * pa[i] * pb[j] + km[atom] * ma[i] * mb[j]
    });
    PureState::normalized(dims, v)
}

fn require_qubit_room(dims: SystemDims) -> Result<()> {
    if dims.n_a() < 2 || dims.n_b() < 2 {
        return Err(Error::Domain(format!(
            "Bell protocols need at least two Fock levels per cavity ({dims:?})"
        )));
    }
    Ok(())
}

/// `(|0,1⟩ + |1,0⟩)/√2`.
pub fn bell_odd_target(dims: SystemDims) -> Result<FieldState> {
    require_qubit_room(dims)?;
    let v = FieldState::fock(dims, 0, 1)?.amplitudes() + FieldState::fock(dims, 1, 0)?.amplitudes();
    FieldState::normalized(dims, v)
}

/// `(|0,0⟩ − |1,1⟩)/√2`.
pub fn bell_even_target(dims: SystemDims) -> Result<FieldState> {
    require_qubit_room(dims)?;
    let v = FieldState::fock(dims, 0, 0)?.amplitudes() - FieldState::fock(dims, 1, 1)?.amplitudes();
    FieldState::normalized(dims, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DressedCoupling {
    /// pairs `|+,n⟩ ↔ |−,n+1⟩`
    Jc,
    /// pairs `|−,n⟩ ↔ |+,n+1⟩`
    Ajc,
}

/// Closed-form evolution under the dressed JC or anti-JC coupling: each pair
/// of coupled levels rotates by `θ_n = g t √(n+1)/2`.
fn dressed_rotation(state: &PureState, g: f64, t: f64, cavity: Cavity, kind: DressedCoupling) -> PureState {
    let dims = state.dims();
    let (kp, km) = (AtomLabel::Plus.amplitudes(), AtomLabel::Minus.amplitudes());
    let mut plus = state.project_atom(kp);
    let mut minus = state.project_atom(km);
    let levels = dims.levels(cavity);
    let others = dims.levels(cavity.other());
    let at = |n: usize, m: usize| match cavity {
        Cavity::A => n * dims.n_b() + m,
        Cavity::B => m * dims.n_b() + n,
    };
    for m in 0..others {
        for n in 0..levels.saturating_sub(1) {
            let theta = 0.5 * g * t * ((n + 1) as f64).sqrt();
            let (c, sn) = (theta.cos(), theta.sin());
            let (lo, hi) = (at(n, m), at(n + 1, m));
            match kind {
                DressedCoupling::Jc => {
                    let (x, y) = (plus[lo], minus[hi]);
                    plus[lo] = x * c - I * sn * y;
                    minus[hi] = y * c - I * sn * x;
                }
                DressedCoupling::Ajc => {
                    let (x, y) = (minus[lo], plus[hi]);
                    minus[lo] = x * c - I * sn * y;
                    plus[hi] = y * c - I * sn * x;
                }
            }
        }
    }
    let f = dims.field_dim();
    let mut out = Array1::zeros(dims.total());
    for k in 0..2 {
        let mut block = out.slice_mut(s![k * f..(k + 1) * f]);
        block.scaled_add(kp[k], &plus);
        block.scaled_add(km[k], &minus);
    }
    PureState::from_unitary_image(dims, out)
}

/// Photon-parity operator `(−1)^{n_B}` applied to cavity B.
fn parity_b(state: &PureState) -> PureState {
    let dims = state.dims();
    let out = Array1::from_shape_fn(dims.total(), |k| {
        let (_, _, nb) = dims.decode(k);
        if nb % 2 == 1 {
            -state.amplitudes()[k]
        } else {
            state.amplitudes()[k]
        }
    });
    PureState::from_unitary_image(dims, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub cavity: Cavity,
    pub steps: usize,
    pub cauchy_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t_a: f64,
    pub t_b: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub kind: ProtocolKind,
    pub engine: Engine,
    pub dims: SystemDims,
    /// Joint state before any measurement.
    pub final_joint_state: PureState,
    /// Joint state after the atom leaves cavity A.
    pub after_first_cavity: PureState,
    pub branches: Vec<Branch>,
    /// Bell runs: `⟨T|ρ_fields|T⟩` against the Bell target. Entangled-coherent
    /// runs: joint fidelity with the ideal tripartite state.
    pub target_fidelity: f64,
    pub atom_purity: f64,
    /// Concurrence and embedding weight of the fields in the `{0,1}⊗2`
    /// subspace, taken from the most probable branch.
    pub concurrence: Option<f64>,
    pub qubit_weight: Option<f64>,
    pub validity: ValidityReport,
    /// Largest truncation diagnostic met: cut Poisson tail of the intended
    /// displacements and top-level population of the final state.
    pub leakage: f64,
    pub timings: Timings,
    pub integrator: Vec<IntegratorStats>,
}

impl RunResult {
    pub fn probability_sum(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    pub fn branch(&self, outcome: AtomLabel) -> Option<&Branch> {
        self.branches.iter().find(|b| b.outcome == outcome)
    }
}

struct Leg<'a> {
    params: &'a ProtocolParams,
    settings: &'a RunSettings,
    stats: Vec<IntegratorStats>,
}

impl Leg<'_> {
    fn full(&mut self, state: &PureState, cavity: Cavity) -> Result<PureState> {
        let h = InteractionHamiltonian::new(state.dims(), self.params, cavity)?;
        let run = evolve_time_dependent(state, &h, self.params.duration(cavity), &self.settings.integrator)?;
        self.stats.push(IntegratorStats {
            cavity,
            steps: run.steps,
            cauchy_residual: run.cauchy_residual,
        });
        Ok(run.state)
    }
}

fn require_dense(dims: SystemDims) -> Result<()> {
    if dims.total() > MAX_DENSE_DIM {
        return Err(Error::Unsupported(format!(
            "composite dimension {} exceeds the dense limit {MAX_DENSE_DIM}; use the analytic engine",
            dims.total()
        )));
    }
    Ok(())
}

fn check_leakage(leak: f64, tolerance: f64, context: &str) -> Result<()> {
    if leak > tolerance {
        return Err(Error::Truncation {
            leaked: leak,
            tolerance,
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Dispatches to the protocol runner. Bell protocols ignore `basis` and
/// measure in the dressed basis.
pub fn run(
    kind: ProtocolKind,
    params: &ProtocolParams,
    settings: &RunSettings,
    basis: Option<MeasureBasis>,
) -> Result<RunResult> {
    match kind {
        ProtocolKind::EntangledCoherent => run_entangled_coherent(params, settings, basis),
        ProtocolKind::BellOddParity => run_bell_odd(params, settings),
        ProtocolKind::BellEvenParity => run_bell_even(params, settings),
    }
}

/// Entangled coherent states from `|g,0,0⟩`. With a bare measurement,
/// outcome `g` leaves `N⁺(|α,β⟩ + |−α,−β⟩)` and `e` leaves `N⁻(|α,β⟩ − |−α,−β⟩)`,
/// `α = −ig_A t_A/2`, `β = −ig_B t_B/2`.
pub fn run_entangled_coherent(
    params: &ProtocolParams,
    settings: &RunSettings,
    basis: Option<MeasureBasis>,
) -> Result<RunResult> {
    params.validate()?;
    let dims = settings.dims;
    let alpha = displacement_amplitude(params, Cavity::A, params.t_a);
    let beta = displacement_amplitude(params, Cavity::B, params.t_b);
    let tail = poisson_tail(alpha.norm_sqr(), dims.n_a()).max(poisson_tail(beta.norm_sqr(), dims.n_b()));
    check_leakage(tail, settings.leakage_tolerance, "entangled coherent displacement")?;

    let start = fock_state(dims, AtomLabel::G, 0, 0)?;
    let mut leg = Leg {
        params,
        settings,
        stats: Vec::new(),
    };
    let (after_a, fin) = match settings.engine {
        Engine::Analytic => {
            let a = conditional_displacement(&start, params, Cavity::A, params.t_a)?;
            let b = conditional_displacement(&a, params, Cavity::B, params.t_b)?;
            (a, b)
        }
        Engine::EffectiveNumeric => {
            require_dense(dims)?;
            let a = evolve_unitary(&start, &build_effective_hamiltonian(dims, params, Cavity::A), params.t_a)?;
            let b = evolve_unitary(&a, &build_effective_hamiltonian(dims, params, Cavity::B), params.t_b)?;
            (a, b)
        }
        Engine::FullNumeric => {
            require_dense(dims)?;
            let a = leg.full(&start, Cavity::A)?;
            let b = leg.full(&a, Cavity::B)?;
            (a, b)
        }
    };
    let leakage = tail.max(edge_population(&fin));
    check_leakage(leakage, settings.leakage_tolerance, "entangled coherent final state")?;

    let mut branches = basis.map(|b| measure_atom(&fin, b)).unwrap_or_default();
    for br in branches.iter_mut() {
        let sign = match br.outcome {
            AtomLabel::G => Some(1.0),
            AtomLabel::E => Some(-1.0),
            _ => None,
        };
        if let (Some(sign), Some(field)) = (sign, &br.field) {
            if let Ok(target) = ecs_target(dims, alpha, beta, sign) {
                br.target_fidelity = Some(measures::fidelity(field, &target)?);
            }
        }
    }
    let target = tripartite_target(dims, alpha, beta)?;
    let target_fidelity = measures::fidelity(&fin, &target)?;
    finish(
        ProtocolKind::EntangledCoherent,
        params,
        settings,
        after_a,
        fin,
        branches,
        target_fidelity,
        leakage,
        leg.stats,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: ProtocolKind,
    params: &ProtocolParams,
    settings: &RunSettings,
    after_first_cavity: PureState,
    final_joint_state: PureState,
    branches: Vec<Branch>,
    target_fidelity: f64,
    leakage: f64,
    integrator: Vec<IntegratorStats>,
) -> Result<RunResult> {
    let best = branches
        .iter()
        .filter(|b| b.field.is_some())
        .max_by(|a, b| a.probability.total_cmp(&b.probability));
    let qubits = best
        .and_then(|b| b.field.as_ref())
        .and_then(|f| reduce_to_qubits(f).ok());
    Ok(RunResult {
        kind,
        engine: settings.engine,
        dims: settings.dims,
        atom_purity: reduced_atom_purity(&final_joint_state),
        final_joint_state,
        after_first_cavity,
        branches,
        target_fidelity,
        concurrence: qubits.as_ref().map(measures::concurrence),
        qubit_weight: qubits.map(|q| q.embedding_weight),
        validity: ValidityReport::from_params(params),
        leakage,
        timings: Timings {
            t_a: params.t_a,
            t_b: params.t_b,
            total: params.total_time(),
        },
        integrator,
    })
}

fn run_bell(kind: ProtocolKind, params: &ProtocolParams, settings: &RunSettings) -> Result<RunResult> {
    params.validate()?;
    let dims = settings.dims;
    let target = match kind {
        ProtocolKind::BellOddParity => bell_odd_target(dims)?,
        _ => bell_even_target(dims)?,
    };
    let second = match kind {
        ProtocolKind::BellOddParity => DressedCoupling::Jc,
        _ => DressedCoupling::Ajc,
    };
    let start = fock_state(dims, AtomLabel::Plus, 0, 0)?;
    let mut leg = Leg {
        params,
        settings,
        stats: Vec::new(),
    };
    let (after_a, fin) = match settings.engine {
        Engine::Analytic => {
            let a = dressed_rotation(&start, params.g_a, params.t_a, Cavity::A, DressedCoupling::Jc);
            let b = dressed_rotation(&a, params.g_b, params.t_b, Cavity::B, second);
            (a, b)
        }
        Engine::EffectiveNumeric => {
            require_dense(dims)?;
            let a = evolve_unitary(&start, &build_dressed_jc(dims, params, Cavity::A), params.t_a)?;
            let hb = match second {
                DressedCoupling::Jc => build_dressed_jc(dims, params, Cavity::B),
                DressedCoupling::Ajc => build_dressed_ajc(dims, params, Cavity::B),
            };
            let b = evolve_unitary(&a, &hb, params.t_b)?;
            (a, b)
        }
        Engine::FullNumeric => {
            require_dense(dims)?;
            let a = leg.full(&start, Cavity::A)?;
            let b = leg.full(&a, Cavity::B)?;
            // The anti-JC coupling emerging from the driven Hamiltonian at
            // δ_B = −2Ω_B is the negative of the dressed anti-JC generator;
            // the B photon parity maps one onto the other.
            let b = match second {
                DressedCoupling::Jc => b,
                DressedCoupling::Ajc => parity_b(&b),
            };
            (a, b)
        }
    };
    let leakage = edge_population(&fin);
    check_leakage(leakage, settings.leakage_tolerance, "Bell final state")?;

    let mut branches = measure_atom(&fin, MeasureBasis::Dressed);
    for br in branches.iter_mut() {
        if let Some(field) = &br.field {
            br.target_fidelity = Some(measures::fidelity(field, &target)?);
        }
    }
    let target_fidelity = field_fidelity(&fin, &target)?;
    finish(kind, params, settings, after_a, fin, branches, target_fidelity, leakage, leg.stats)
}

/// `(|0,1⟩ + |1,0⟩)/√2` from `|+,0,0⟩` with JC couplings in both cavities.
pub fn run_bell_odd(params: &ProtocolParams, settings: &RunSettings) -> Result<RunResult> {
    run_bell(ProtocolKind::BellOddParity, params, settings)
}

/// `(|0,0⟩ − |1,1⟩)/√2` from `|+,0,0⟩`: JC in A, anti-JC in B.
pub fn run_bell_even(params: &ProtocolParams, settings: &RunSettings) -> Result<RunResult> {
    run_bell(ProtocolKind::BellEvenParity, params, settings)
}

/// Outcome of a Bell protocol run under cavity and atomic damping.
#[derive(Debug, Clone)]
pub struct NoisyRun {
    pub rho: DensityMatrix,
    /// `⟨Ψ|ρ|Ψ⟩` against the noiseless analytic final state.
    pub fidelity: f64,
    pub steps: usize,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

/// Bell protocol with damping: each leg evolves under the dressed JC or
/// anti-JC generator in the master equation, jump operators `a_A`, `a_B`, `σ`.
pub fn run_bell_noisy(
    kind: ProtocolKind,
    params: &ProtocolParams,
    dims: SystemDims,
    noise: &NoiseParams,
    steps_per_leg: usize,
) -> Result<NoisyRun> {
    if kind == ProtocolKind::EntangledCoherent {
        return Err(Error::Unsupported("noisy runs cover the Bell protocols only".into()));
    }
    require_dense(dims)?;
    let ideal = run(kind, params, &RunSettings::new(dims, Engine::Analytic), None)?;
    let start = fock_state(dims, AtomLabel::Plus, 0, 0)?;
    let hb = match kind {
        ProtocolKind::BellOddParity => build_dressed_jc(dims, params, Cavity::B),
        _ => build_dressed_ajc(dims, params, Cavity::B),
    };
    let leg_a = evolve_lindblad(
        &DensityMatrix::from_pure(&start),
        &build_dressed_jc(dims, params, Cavity::A),
        noise,
        params.t_a,
        steps_per_leg,
    )?;
    let leg_b = evolve_lindblad(&leg_a.rho, &hb, noise, params.t_b, steps_per_leg)?;
    Ok(NoisyRun {
        fidelity: leg_b.rho.fidelity_with(&ideal.final_joint_state)?,
        steps: leg_a.steps + leg_b.steps,
        max_trace_drift: leg_a.max_trace_drift.max(leg_b.max_trace_drift),
        min_eigenvalue: leg_a.min_eigenvalue.min(leg_b.min_eigenvalue),
        rho: leg_b.rho,
    })
}

/// `(|+,0⟩ − i|−,1⟩)/√2 ⊗ |0⟩_B`, the state after the first Bell leg.
pub fn bell_intermediate(dims: SystemDims) -> Result<PureState> {
    let a = fock_state(dims, AtomLabel::Plus, 0, 0)?;
    let b = fock_state(dims, AtomLabel::Minus, 1, 0)?;
    PureState::normalized(dims, (a.amplitudes() - &b.amplitudes().mapv(|z| z * I)).mapv(|z| z * FRAC_1_SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::fidelity;

    fn dims(n: usize) -> SystemDims {
        SystemDims::new(n, n).unwrap()
    }

    fn settings(n: usize, engine: Engine) -> RunSettings {
        RunSettings::new(dims(n), engine)
    }

    #[test]
    fn ecs_normalization_examples() {
        let z = C64::new(0.0, 0.0);
        assert!((ecs_normalization(z, z, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(ecs_normalization(z, z, -1.0), Err(Error::Degenerate(_))));
        let five = C64::new(0.0, -5.0);
        for s in [1.0, -1.0] {
            assert!((ecs_normalization(five, five, s).unwrap() - FRAC_1_SQRT_2).abs() < 1e-15);
        }
        // brute-force norm of the truncated construction at |α| = |β| = 1
        let a = C64::new(0.0, -1.0);
        for s in [1.0, -1.0] {
            let pa = coherent_amplitudes(30, a);
            let ma = coherent_amplitudes(30, -a);
            let mut norm2 = 0.0;
            for i in 0..30 {
                for j in 0..30 {
                    norm2 += (pa[i] * pa[j] + ma[i] * ma[j] * s).norm_sqr();
                }
            }
            assert!((ecs_normalization(a, a, s).unwrap() - 1.0 / norm2.sqrt()).abs() < 1e-7);
        }
    }

    #[test]
    fn measure_atom_examples() {
        let d = dims(3);
        let g = fock_state(d, AtomLabel::G, 0, 0).unwrap();
        let br = measure_atom(&g, MeasureBasis::Bare);
        assert_eq!(br[0].probability, 1.0);
        assert_eq!(br[1].probability, 0.0);
        assert!(br[1].field.is_none());

        let p = fock_state(d, AtomLabel::Plus, 0, 0).unwrap();
        let br = measure_atom(&p, MeasureBasis::Bare);
        assert!((br[0].probability - 0.5).abs() < 1e-15);
        assert!((br[1].probability - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ecs_zero_time_stays_in_vacuum() {
        let mut p = ProtocolKind::EntangledCoherent.default_params(1.0, 1.0, 100.0);
        p.t_a = 0.0;
        p.t_b = 0.0;
        for engine in [Engine::Analytic, Engine::EffectiveNumeric] {
            let r = run_entangled_coherent(&p, &settings(6, engine), Some(MeasureBasis::Bare)).unwrap();
            let g = r.branch(AtomLabel::G).unwrap();
            assert!((g.probability - 1.0).abs() < 1e-14);
            let vac = FieldState::fock(dims(6), 0, 0).unwrap();
            assert!((fidelity(g.field.as_ref().unwrap(), &vac).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ecs_tripartite_state_and_branch_probabilities() {
        let g = 2.0;
        let mut p = ProtocolKind::EntangledCoherent.default_params(g, g, 100.0);
        (p.t_a, p.t_b) = ecs_times(&p, 0.8, 0.6);
        let d = dims(17);
        for engine in [Engine::Analytic, Engine::EffectiveNumeric] {
            let r = run_entangled_coherent(&p, &RunSettings::new(d, engine), Some(MeasureBasis::Bare)).unwrap();
            assert!(r.target_fidelity > 1.0 - 1e-7, "{engine:?}: {}", r.target_fidelity);
            let pg = r.branch(AtomLabel::G).unwrap().probability;
            let expected = 0.5 * (1.0 + (-2.0f64 * (0.64 + 0.36)).exp());
            assert!((pg - expected).abs() < 1e-7);
            assert!((r.probability_sum() - 1.0).abs() < 1e-9);
            for b in &r.branches {
                assert!(b.target_fidelity.unwrap() > 1.0 - 1e-7);
            }
        }
    }

    #[test]
    fn ecs_analytic_rejects_detuning_and_truncation() {
        let mut p = ProtocolKind::EntangledCoherent.default_params(1.0, 1.0, 100.0);
        p.delta_a = 0.1;
        assert!(matches!(
            run_entangled_coherent(&p, &settings(17, Engine::Analytic), None),
            Err(Error::Unsupported(_))
        ));
        let mut p = ProtocolKind::EntangledCoherent.default_params(1.0, 1.0, 100.0);
        (p.t_a, p.t_b) = ecs_times(&p, 2.0, 2.0);
        assert!(matches!(
            run_entangled_coherent(&p, &settings(4, Engine::Analytic), None),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn bell_odd_analytic_default() {
        let p = ProtocolKind::BellOddParity.default_params(1.3, 0.7, 100.0);
        let r = run_bell_odd(&p, &settings(8, Engine::Analytic)).unwrap();
        assert!(r.target_fidelity > 1.0 - 1e-10);
        assert!(r.atom_purity > 1.0 - 1e-10);
        let minus = r.branch(AtomLabel::Minus).unwrap();
        assert!((minus.probability - 1.0).abs() < 1e-10);
        assert!((r.concurrence.unwrap() - 1.0).abs() < 1e-9);
        let mid = bell_intermediate(dims(8)).unwrap();
        assert!(crate::hilbert::PureState::inner(&r.after_first_cavity, &mid).unwrap().norm_sqr() > 1.0 - 1e-10);
        // amplitude-level match, not only fidelity
        let dev: f64 = r
            .after_first_cavity
            .amplitudes()
            .iter()
            .zip(mid.amplitudes().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10);
    }

    #[test]
    fn bell_odd_without_second_leg() {
        let mut p = ProtocolKind::BellOddParity.default_params(1.0, 1.0, 100.0);
        p.t_b = 0.0;
        let r = run_bell_odd(&p, &settings(4, Engine::Analytic)).unwrap();
        // brute force: ρ_fields = ½|00⟩⟨00| + ½|10⟩⟨10|, and the |−⟩ branch
        // leaves |1,0⟩, half of the target
        assert!((r.target_fidelity - 0.25).abs() < 1e-12);
        let minus = r.branch(AtomLabel::Minus).unwrap();
        assert!((minus.probability - 0.5).abs() < 1e-12);
        assert!((minus.target_fidelity.unwrap() - 0.5).abs() < 1e-12);
        assert!(crate::hilbert::leakage(&r.final_joint_state, 1, Cavity::B) < 1e-15);
    }

    #[test]
    fn bell_even_analytic_default() {
        let p = ProtocolKind::BellEvenParity.default_params(0.9, 1.4, 100.0);
        let r = run_bell_even(&p, &settings(8, Engine::Analytic)).unwrap();
        assert!(r.target_fidelity > 1.0 - 1e-10);
        assert!(r.atom_purity > 1.0 - 1e-10);
        assert!((r.branch(AtomLabel::Plus).unwrap().probability - 1.0).abs() < 1e-10);

        let odd = run_bell_odd(&ProtocolKind::BellOddParity.default_params(0.9, 1.4, 100.0), &settings(8, Engine::Analytic)).unwrap();
        assert_eq!(odd.after_first_cavity, r.after_first_cavity);
    }

    #[test]
    fn bell_even_half_time_leaves_atom_entangled() {
        let mut p = ProtocolKind::BellEvenParity.default_params(1.0, 1.0, 100.0);
        p.t_b *= 0.5;
        let r = run_bell_even(&p, &settings(4, Engine::Analytic)).unwrap();
        // ψ = (|+,0,0⟩ − i cos(π/4)|−,1,0⟩ − sin(π/4)|+,1,1⟩)/√2: ρ_atom in the
        // dressed basis is diag(3/4, 1/4), so purity 5/8
        let (c, s) = ((PI / 4.0).cos(), (PI / 4.0).sin());
        let pp = 0.5 * (1.0 + s * s);
        let pm = 0.5 * c * c;
        assert!((r.atom_purity - (pp * pp + pm * pm)).abs() < 1e-12);
        assert!(r.atom_purity < 1.0 - 1e-3);
    }

    #[test]
    fn analytic_matches_effective_numeric() {
        let d = dims(6);
        for kind in [ProtocolKind::BellOddParity, ProtocolKind::BellEvenParity] {
            let p = kind.default_params(1.0, 1.7, 50.0);
            let a = run(kind, &p, &RunSettings::new(d, Engine::Analytic), None).unwrap();
            let e = run(kind, &p, &RunSettings::new(d, Engine::EffectiveNumeric), None).unwrap();
            let f = fidelity(&a.final_joint_state, &e.final_joint_state).unwrap();
            assert!(f > 1.0 - 1e-10, "{kind:?}: {f}");
            // also at a generic, non-default time with multi-photon content
            let mut q = p;
            q.t_a = 2.3;
            q.t_b = 1.1;
            let a = run(kind, &q, &RunSettings::new(d, Engine::Analytic), None).unwrap();
            let e = run(kind, &q, &RunSettings::new(d, Engine::EffectiveNumeric), None).unwrap();
            let dev: f64 = a
                .final_joint_state
                .amplitudes()
                .iter()
                .zip(e.final_joint_state.amplitudes().iter())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-10, "{kind:?}: {dev}");
        }
    }

    #[test]
    fn noisy_bell_without_noise_is_ideal() {
        let p = ProtocolKind::BellEvenParity.default_params(1.0, 1.0, 100.0);
        let r = run_bell_noisy(ProtocolKind::BellEvenParity, &p, dims(3), &NoiseParams::default(), 1).unwrap();
        assert!(r.fidelity > 1.0 - 1e-8, "{}", r.fidelity);
    }

    #[test]
    fn noisy_bell_with_strong_cavity_decay() {
        let p = ProtocolKind::BellOddParity.default_params(1.0, 1.0, 100.0);
        let noise = NoiseParams {
            kappa_a: 0.5,
            kappa_b: 0.5,
            gamma_atom: 0.0,
        };
        let r = run_bell_noisy(ProtocolKind::BellOddParity, &p, dims(3), &noise, 1).unwrap();
        assert!(r.fidelity < 0.9 && r.fidelity > 0.2, "{}", r.fidelity);
        assert!((r.rho.trace() - 1.0).abs() < 1e-9);
        assert!(r.min_eigenvalue > -1e-7);
    }

    #[test]
    fn bell_requires_two_levels() {
        let p = ProtocolKind::BellOddParity.default_params(1.0, 1.0, 100.0);
        let s = RunSettings::new(SystemDims::new(1, 4).unwrap(), Engine::Analytic);
        assert!(matches!(run_bell_odd(&p, &s), Err(Error::Domain(_))));
    }

    #[test]
    fn full_numeric_bell_odd_tracks_effective_model() {
        let p = ProtocolKind::BellOddParity.default_params(1.0, 1.0, 20.0);
        let r = run_bell_odd(&p, &settings(5, Engine::FullNumeric)).unwrap();
        assert_eq!(r.integrator.len(), 2);
        for st in &r.integrator {
            assert!(st.cauchy_residual < 1e-8);
        }
        assert!(r.target_fidelity > 0.9, "{}", r.target_fidelity);
        assert!((r.probability_sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_numeric_bell_even_reaches_target_after_parity_frame() {
        let p = ProtocolKind::BellEvenParity.default_params(1.0, 1.0, 20.0);
        let r = run_bell_even(&p, &settings(5, Engine::FullNumeric)).unwrap();
        assert!(r.target_fidelity > 0.9, "{}", r.target_fidelity);
    }
}
