//! Time evolution.
//!
//! * [`evolve_unitary`]: `e^{−iHt}|ψ⟩` for a static Hermitian generator.
//! * [`evolve_time_dependent`]: fourth-order commutator-free Magnus steps
//!   (two exponentials per step, Gauss nodes) with step doubling until two
//!   successive estimates agree (Cauchy criterion).
//! * [`conditional_displacement`]: closed-form resonant propagator
//!   `D(α)|+⟩⟨+| + D(−α)|−⟩⟨−|`, `α = −igt/2`.
//! * [`evolve_lindblad`]: RK4 on the full density matrix with zero-temperature
//!   damping of both cavities and the atom.
//!
//! Global phases are never removed.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    atomic_op, displacement_matrix, displacement_op, ladder_op, AtomLabel, AtomicOpKind, Cavity,
    LadderKind, Operator, PureState, SystemDims,
};
use crate::linalg::{self, expm_action, expm_action_with, I};
use crate::models::{
    build_static, InteractionHamiltonian, LabHamiltonian, ModelKind, ProtocolParams,
};

/// A Hamiltonian that can be evaluated at any time.
pub trait TimeDependentHamiltonian: Sync {
    fn dims(&self) -> SystemDims;
    fn at(&self, t: f64) -> Operator;
    /// `H(t)|v⟩`.
    fn apply(&self, t: f64, v: &Array1<C64>) -> Array1<C64> {
        self.at(t).matrix().dot(v)
    }
    /// `(w1·H(t1) + w2·H(t2))|v⟩` for real weights.
    fn apply_pair(&self, (t1, w1): (f64, f64), (t2, w2): (f64, f64), v: &Array1<C64>) -> Array1<C64> {
        let mut y = self.apply(t1, v).mapv(|z| z * w1);
        y.scaled_add(C64::new(w2, 0.0), &self.apply(t2, v));
        y
    }
    /// Upper bound on `‖H(t)‖₁` over all `t`.
    fn norm_bound(&self) -> f64;
}

/// Step control for [`evolve_time_dependent`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub initial_steps: usize,
    /// Bound on `‖ψ_{2N} − ψ_N‖` for acceptance.
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            initial_steps: 16,
            tolerance: 1e-8,
            max_steps: 1 << 20,
        }
    }
}

/// Largest `‖H‖₁·dt` allowed per step.
pub const MAX_PHASE_PER_STEP: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct TimeDependentRun {
    pub state: PureState,
    /// Step count of the accepted estimate.
    pub steps: usize,
    /// `‖ψ_steps − ψ_{steps/2}‖` at acceptance.
    pub cauchy_residual: f64,
}

fn check_hermitian(h: &Operator) -> Result<()> {
    let residual = h.hermiticity_residual();
    let scale = h.max_abs().max(1.0);
    if residual > 1e-10 * scale {
        return Err(Error::Contract(format!(
            "generator is not Hermitian: |H - H†| = {residual:.3e}"
        )));
    }
    Ok(())
}

/// `e^{−iHt}|ψ⟩`. Rejects non-Hermitian generators.
pub fn evolve_unitary(state: &PureState, hamiltonian: &Operator, duration: f64) -> Result<PureState> {
    if state.dims() != hamiltonian.dims() {
        return Err(Error::DimensionMismatch(format!(
            "state {:?} vs operator {:?}",
            state.dims(),
            hamiltonian.dims()
        )));
    }
    check_hermitian(hamiltonian)?;
    let out = expm_action(hamiltonian.matrix(), duration, state.amplitudes());
    Ok(PureState::from_unitary_image(state.dims(), out))
}

fn magnus_sweep(
    psi: &Array1<C64>,
    model: &dyn TimeDependentHamiltonian,
    duration: f64,
    steps: usize,
) -> Array1<C64> {
    let r = 3f64.sqrt() / 6.0;
    let (c1, c2) = (0.5 - r, 0.5 + r);
    let (w1, w2) = (0.25 - r, 0.25 + r);
    let norm = model.norm_bound() * (w1.abs() + w2.abs());
    let dt = duration / steps as f64;
    let mut v = psi.clone();
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let (t1, t2) = (t0 + c1 * dt, t0 + c2 * dt);
        let mix = |a: f64, b: f64| move |x: &Array1<C64>| model.apply_pair((t1, a), (t2, b), x);
        v = expm_action_with(mix(w2, w1), norm, dt, &v);
        v = expm_action_with(mix(w1, w2), norm, dt, &v);
    }
    v
}

fn distance(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Fourth-order Magnus propagation with automatic step doubling.
pub fn evolve_time_dependent(
    state: &PureState,
    model: &dyn TimeDependentHamiltonian,
    duration: f64,
    options: &IntegratorOptions,
) -> Result<TimeDependentRun> {
    if state.dims() != model.dims() {
        return Err(Error::DimensionMismatch("state and model dims differ".into()));
    }
    if duration < 0.0 {
        return Err(Error::Domain(format!("negative duration {duration}")));
    }
    if duration == 0.0 {
        return Ok(TimeDependentRun {
            state: state.clone(),
            steps: 0,
            cauchy_residual: 0.0,
        });
    }
    let mut steps = options.initial_steps.max(1);
    let needed = (model.norm_bound() * duration / MAX_PHASE_PER_STEP).ceil();
    if needed.is_finite() && needed > steps as f64 {
        steps = (needed as usize).min(options.max_steps);
    }
    let mut coarse = magnus_sweep(state.amplitudes(), model, duration, steps);
    let mut previous_change = f64::INFINITY;
    loop {
        if 2 * steps > options.max_steps {
            return Err(Error::Convergence {
                steps,
                last_change: previous_change,
                previous_change: f64::INFINITY,
                tolerance: options.tolerance,
            });
        }
        let fine = magnus_sweep(state.amplitudes(), model, duration, 2 * steps);
        let change = distance(&fine, &coarse);
        steps *= 2;
        if change < options.tolerance {
            return Ok(TimeDependentRun {
                state: PureState::from_unitary_image(state.dims(), fine),
                steps,
                cauchy_residual: change,
            });
        }
        if 2 * steps > options.max_steps {
            return Err(Error::Convergence {
                steps,
                last_change: change,
                previous_change,
                tolerance: options.tolerance,
            });
        }
        previous_change = change;
        coarse = fine;
    }
}

fn apply_mode_matrix(field: &Array1<C64>, dims: SystemDims, cavity: Cavity, m: &Array2<C64>) -> Array1<C64> {
    let grid = field
        .clone()
        .into_shape_with_order((dims.n_a(), dims.n_b()))
        .expect("field vector shape");
    let out = match cavity {
        Cavity::A => m.dot(&grid),
        Cavity::B => grid.dot(&m.t()),
    };
    Array1::from_iter(out.iter().copied())
}

/// Displacement amplitude `α = −igt/2` reached after `duration` in `cavity`.
pub fn displacement_amplitude(params: &ProtocolParams, cavity: Cavity, duration: f64) -> C64 {
    -I * (0.5 * params.coupling(cavity) * duration)
}

fn require_resonant(params: &ProtocolParams, cavity: Cavity) -> Result<()> {
    let delta = params.detuning(cavity);
    if delta != 0.0 {
        return Err(Error::Unsupported(format!(
            "conditional displacement needs δ = 0 in cavity {cavity:?} (got {delta})"
        )));
    }
    Ok(())
}

/// Closed-form resonant strong-drive propagator applied to `state`.
///
/// Acts on the `2·n_j` atom-cavity factor only; equal to
/// [`conditional_displacement_op`] applied as a dense matrix.
pub fn conditional_displacement(
    state: &PureState,
    params: &ProtocolParams,
    cavity: Cavity,
    duration: f64,
) -> Result<PureState> {
    require_resonant(params, cavity)?;
    let dims = state.dims();
    let alpha = displacement_amplitude(params, cavity, duration);
    let levels = dims.levels(cavity);
    let mut out = Array1::<C64>::zeros(dims.total());
    let f = dims.field_dim();
    for (label, amp) in [(AtomLabel::Plus, alpha), (AtomLabel::Minus, -alpha)] {
        let ket = label.amplitudes();
        let shifted = apply_mode_matrix(
            &state.project_atom(ket),
            dims,
            cavity,
            &displacement_matrix(levels, amp),
        );
        for (k, &c) in ket.iter().enumerate() {
            let mut block = out.slice_mut(ndarray::s![k * f..(k + 1) * f]);
            block.scaled_add(c, &shifted);
        }
    }
    Ok(PureState::from_unitary_image(dims, out))
}

/// Dense `D(α) ⊗ |+⟩⟨+| + D(−α) ⊗ |−⟩⟨−|`.
pub fn conditional_displacement_op(
    dims: SystemDims,
    params: &ProtocolParams,
    cavity: Cavity,
    duration: f64,
) -> Result<Operator> {
    require_resonant(params, cavity)?;
    let alpha = displacement_amplitude(params, cavity, duration);
    let plus = atomic_op(dims, AtomicOpKind::ProjPlus).compose(&displacement_op(dims, cavity, alpha))?;
    let minus = atomic_op(dims, AtomicOpKind::ProjMinus).compose(&displacement_op(dims, cavity, -alpha))?;
    plus.add(&minus)
}

/// What to evolve under, for how long.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    pub model: ModelKind,
    pub cavity: Cavity,
    pub duration: f64,
    pub options: IntegratorOptions,
}

#[derive(Debug, Clone)]
pub struct Evolved {
    pub state: PureState,
    /// Accepted step count and Cauchy residual of time-dependent runs.
    pub integrator: Option<(usize, f64)>,
}

/// Dispatches on the model kind: static generators go through
/// [`evolve_unitary`], time-dependent ones through [`evolve_time_dependent`].
pub fn evolve(state: &PureState, params: &ProtocolParams, spec: &EvolutionSpec) -> Result<Evolved> {
    let dims = state.dims();
    match spec.model {
        ModelKind::InteractionPicture => {
            let h = InteractionHamiltonian::new(dims, params, spec.cavity)?;
            let run = evolve_time_dependent(state, &h, spec.duration, &spec.options)?;
            Ok(Evolved {
                state: run.state,
                integrator: Some((run.steps, run.cauchy_residual)),
            })
        }
        ModelKind::LabFrame => {
            let h = LabHamiltonian::new(dims, params, spec.cavity)?;
            let run = evolve_time_dependent(state, &h, spec.duration, &spec.options)?;
            Ok(Evolved {
                state: run.state,
                integrator: Some((run.steps, run.cauchy_residual)),
            })
        }
        kind => {
            let h = build_static(kind, dims, params, spec.cavity)?;
            Ok(Evolved {
                state: evolve_unitary(state, &h, spec.duration)?,
                integrator: None,
            })
        }
    }
}

/// Zero-temperature decay rates (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseParams {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub gamma_atom: f64,
}

impl NoiseParams {
    /// Rates as inverse lifetimes, `κ = 1/T`.
    pub fn from_lifetimes(cavity_a: f64, cavity_b: f64, atom: f64) -> Result<Self> {
        let rate = |t: f64| -> Result<f64> {
            if t > 0.0 {
                Ok(1.0 / t)
            } else if t.is_infinite() {
                Ok(0.0)
            } else {
                Err(Error::Configuration(format!("lifetime must be positive (got {t})")))
            }
        };
        Self {
            kappa_a: rate(cavity_a)?,
            kappa_b: rate(cavity_b)?,
            gamma_atom: rate(atom)?,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if [self.kappa_a, self.kappa_b, self.gamma_atom]
            .iter()
            .any(|r| !(r.is_finite() && *r >= 0.0))
        {
            return Err(Error::Configuration(format!("decay rates must be ≥ 0: {self:?}")));
        }
        Ok(self)
    }

    pub fn is_closed(&self) -> bool {
        self.kappa_a == 0.0 && self.kappa_b == 0.0 && self.gamma_atom == 0.0
    }
}

/// Density matrix on the composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dims: SystemDims,
    matrix: Array2<C64>,
}

impl DensityMatrix {
    /// Checks unit trace (1e-9), Hermiticity (1e-10) and positivity (−1e-9).
    pub fn new(dims: SystemDims, matrix: Array2<C64>) -> Result<Self> {
        if matrix.dim() != (dims.total(), dims.total()) {
            return Err(Error::DimensionMismatch(format!("{:?} for {dims:?}", matrix.dim())));
        }
        let rho = Self { dims, matrix };
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("trace {tr}")));
        }
        let herm = rho.hermiticity_residual();
        if herm > 1e-10 {
            return Err(Error::Contract(format!("|ρ − ρ†| = {herm:.3e}")));
        }
        let min = rho.min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::Contract(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(rho)
    }

    pub fn from_pure(state: &PureState) -> Self {
        let v = state.amplitudes();
        let n = v.len();
        let matrix = Array2::from_shape_fn((n, n), |(i, j)| v[i] * v[j].conj());
        Self {
            dims: state.dims(),
            matrix,
        }
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.matrix)
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with(&self, state: &PureState) -> Result<f64> {
        if state.dims() != self.dims {
            return Err(Error::DimensionMismatch("state vs density matrix".into()));
        }
        let v = state.amplitudes();
        let rv = self.matrix.dot(v);
        Ok(v.iter().zip(rv.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re)
    }

    /// Largest element of `|ρ − |ψ⟩⟨ψ||`.
    pub fn distance_to_pure(&self, state: &PureState) -> f64 {
        let p = DensityMatrix::from_pure(state);
        linalg::max_abs(&(&self.matrix - &p.matrix))
    }
}

#[derive(Debug, Clone)]
pub struct LindbladRun {
    pub rho: DensityMatrix,
    pub steps: usize,
    /// Largest `|Tr ρ − 1|` seen before per-step renormalization.
    pub max_trace_drift: f64,
    /// Smallest eigenvalue over the monitored checkpoints.
    pub min_eigenvalue: f64,
}

/// Largest generator-norm × step allowed in the RK4 integrator.
pub const LINDBLAD_MAX_PHASE_PER_STEP: f64 = 0.02;

const TRACE_DRIFT_LIMIT: f64 = 1e-6;
const POSITIVITY_CHECKPOINTS: usize = 8;

struct Dissipator {
    jump: Array2<C64>,
    jump_dag: Array2<C64>,
    decay: Array2<C64>,
}

fn lindblad_rhs(h: &Array2<C64>, ds: &[Dissipator], rho: &Array2<C64>) -> Array2<C64> {
    let mut out = (h.dot(rho) - rho.dot(h)).mapv(|z| -I * z);
    for d in ds {
        out = out + d.jump.dot(rho).dot(&d.jump_dag)
            - (d.decay.dot(rho) + rho.dot(&d.decay)).mapv(|z| 0.5 * z);
    }
    out
}

/// Integrates `dρ/dt = −i[H,ρ] + Σ_k (L_k ρ L_k† − ½{L_k†L_k, ρ})` with
/// `L ∈ {√κ_A a_A, √κ_B a_B, √γ σ}` by fixed-step RK4.
///
/// `steps` is raised if needed so that the generator norm times the step
/// stays below [`LINDBLAD_MAX_PHASE_PER_STEP`].
pub fn evolve_lindblad(
    rho: &DensityMatrix,
    hamiltonian: &Operator,
    noise: &NoiseParams,
    duration: f64,
    steps: usize,
) -> Result<LindbladRun> {
    let noise = noise.validated()?;
    let dims = rho.dims;
    if hamiltonian.dims() != dims {
        return Err(Error::DimensionMismatch("Hamiltonian vs density matrix".into()));
    }
    check_hermitian(hamiltonian)?;
    if duration < 0.0 {
        return Err(Error::Domain(format!("negative duration {duration}")));
    }

    let mut dissipators = Vec::new();
    let channels = [
        (noise.kappa_a, ladder_op(dims, Cavity::A, LadderKind::Annihilate)),
        (noise.kappa_b, ladder_op(dims, Cavity::B, LadderKind::Annihilate)),
        (noise.gamma_atom, atomic_op(dims, AtomicOpKind::Sigma)),
    ];
    for (rate, op) in channels {
        if rate > 0.0 {
            let jump = op.matrix().mapv(|z| z * rate.sqrt());
            let jump_dag = linalg::dagger(&jump);
            let decay = jump_dag.dot(&jump);
            dissipators.push(Dissipator { jump, jump_dag, decay });
        }
    }

    let h = hamiltonian.matrix();
    let generator_norm = 2.0 * linalg::one_norm(h)
        + dissipators.iter().map(|d| 2.0 * linalg::one_norm(&d.decay)).sum::<f64>();
    let needed = (generator_norm * duration / LINDBLAD_MAX_PHASE_PER_STEP).ceil() as usize;
    let steps = steps.max(needed).max(1);
    let dt = duration / steps as f64;

    let mut r = rho.matrix.clone();
    let mut max_drift = 0.0_f64;
    let mut min_eig = rho.min_eigenvalue();
    let every = (steps / POSITIVITY_CHECKPOINTS).max(1);

    for step in 1..=steps {
        if duration == 0.0 {
            break;
        }
        let k1 = lindblad_rhs(h, &dissipators, &r);
        let k2 = lindblad_rhs(h, &dissipators, &(&r + &k1.mapv(|z| z * (0.5 * dt))));
        let k3 = lindblad_rhs(h, &dissipators, &(&r + &k2.mapv(|z| z * (0.5 * dt))));
        let k4 = lindblad_rhs(h, &dissipators, &(&r + &k3.mapv(|z| z * dt)));
        r = &r + &(k1 + k2.mapv(|z| 2.0 * z) + k3.mapv(|z| 2.0 * z) + k4).mapv(|z| z * (dt / 6.0));

        let tr: f64 = r.diag().iter().map(|z| z.re).sum();
        let drift = (tr - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > TRACE_DRIFT_LIMIT {
            return Err(Error::Integration(format!(
                "trace drift {drift:.3e} at step {step} exceeds {TRACE_DRIFT_LIMIT:.0e}"
            )));
        }
        let n = r.nrows();
        r = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (r[[i, j]] + r[[j, i]].conj()) / tr);

        if step % every == 0 || step == steps {
            let current = linalg::hermitian_eigenvalues(&r)[0];
            min_eig = min_eig.min(current);
        }
    }

    Ok(LindbladRun {
        rho: DensityMatrix { dims, matrix: r },
        steps,
        max_trace_drift: max_drift,
        min_eigenvalue: min_eig,
    })
}
