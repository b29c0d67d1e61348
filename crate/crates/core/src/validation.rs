//! Invariant suite: every check reports a measured residual against its
//! threshold so a failure says by how much.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hilbert::{
    default_truncation, fock_state, poisson_tail, AtomLabel, Cavity, Operator,
    SystemDims, DEFAULT_LEAKAGE_TOLERANCE,
};
use crate::measures::{self, fidelity};
use crate::models::{
    build_dressed_ajc, build_dressed_jc, build_effective_hamiltonian, build_interaction_hamiltonian,
    build_lab_hamiltonian, build_rotating_hamiltonian, AbsoluteFrequencies, InteractionHamiltonian,
    ProtocolParams,
};
use crate::propagate::{
    conditional_displacement, evolve_lindblad, evolve_time_dependent, evolve_unitary,
    DensityMatrix, IntegratorOptions, NoiseParams,
};
use crate::protocols::{
    ecs_times, run, run_bell_noisy, Engine, MeasureBasis, ProtocolKind, RunSettings,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, residual: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            residual,
            threshold,
            passed: residual <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Knobs of the suite. The leakage probe places a coherent state of
/// amplitude `leakage_alpha` in a cavity cut at `leakage_levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub leakage_alpha: f64,
    pub leakage_levels: usize,
    pub leakage_tolerance: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            leakage_alpha: 2.0,
            leakage_levels: default_truncation(2.0),
            leakage_tolerance: DEFAULT_LEAKAGE_TOLERANCE,
        }
    }
}

pub const NORM_TOLERANCE: f64 = 1e-10;
pub const HERMITICITY_TOLERANCE: f64 = 1e-12;
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;
pub const TRACE_DRIFT_TOLERANCE: f64 = 1e-7;
pub const CLOSED_LINDBLAD_TOLERANCE: f64 = 1e-7;
pub const PROPAGATOR_INFIDELITY_TOLERANCE: f64 = 1e-7;
pub const COMPOSITION_TOLERANCE: f64 = 1e-9;
pub const POSITIVITY_TOLERANCE: f64 = 1e-7;

fn relative_hermiticity(h: &Operator) -> f64 {
    h.hermiticity_residual() / h.max_abs().max(1.0)
}

fn sample_params() -> ProtocolParams {
    let abs = AbsoluteFrequencies {
        omega_0: 80.0,
        omega_l: 80.0,
        nu_a: 100.0,
        nu_b: 60.0,
    };
    ProtocolParams {
        g_a: 1.0,
        g_b: 0.8,
        omega_a: 10.0,
        omega_b: 10.0,
        delta_a: abs.nu_a - abs.omega_l,
        delta_b: abs.nu_b - abs.omega_l,
        big_delta: 0.0,
        t_a: 1.0,
        t_b: 1.0,
        absolute: Some(abs),
    }
}

fn hermiticity_check() -> Result<Check> {
    let d = SystemDims::new(5, 4)?;
    let p = sample_params();
    let mut worst = 0.0_f64;
    for cav in [Cavity::A, Cavity::B] {
        let mut ops = vec![
            build_rotating_hamiltonian(d, &p, cav),
            build_effective_hamiltonian(d, &p, cav),
            build_dressed_jc(d, &p, cav),
            build_dressed_ajc(d, &p, cav),
        ];
        for t in [0.0, 0.37, 2.1] {
            ops.push(build_lab_hamiltonian(d, &p, cav, t)?);
            ops.push(build_interaction_hamiltonian(d, &p, cav, t)?);
        }
        for h in &ops {
            worst = worst.max(relative_hermiticity(h));
        }
    }
    Ok(Check::at_most("hamiltonian hermiticity", worst, HERMITICITY_TOLERANCE))
}

fn norm_check() -> Result<Check> {
    let d = SystemDims::new(6, 6)?;
    let p = sample_params();
    let psi = fock_state(d, AtomLabel::Plus, 1, 0)?;
    let mut worst = 0.0_f64;
    for h in [
        build_effective_hamiltonian(d, &p, Cavity::A),
        build_dressed_jc(d, &p, Cavity::B),
        build_dressed_ajc(d, &p, Cavity::A),
    ] {
        for t in [0.3, 2.0, 11.0] {
            worst = worst.max((evolve_unitary(&psi, &h, t)?.norm() - 1.0).abs());
        }
    }
    let h = InteractionHamiltonian::new(d, &p, Cavity::A)?;
    let run = evolve_time_dependent(&psi, &h, 1.0, &IntegratorOptions::default())?;
    worst = worst.max((run.state.norm() - 1.0).abs());
    Ok(Check::at_most("norm conservation", worst, NORM_TOLERANCE))
}

fn composition_check() -> Result<Check> {
    let d = SystemDims::new(6, 3)?;
    let p = sample_params();
    let h = build_effective_hamiltonian(d, &p, Cavity::A);
    let psi = fock_state(d, AtomLabel::G, 0, 1)?;
    let split = evolve_unitary(&evolve_unitary(&psi, &h, 0.4)?, &h, 0.9)?;
    let whole = evolve_unitary(&psi, &h, 1.3)?;
    let dev = (split.amplitudes() - whole.amplitudes())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    Ok(Check::at_most("unitary composition", dev, COMPOSITION_TOLERANCE))
}

fn propagator_equivalence_check() -> Result<Check> {
    let n = 30;
    let d = SystemDims::new(n, 1)?;
    let mut worst = 0.0_f64;
    for gt in [0.5, 1.0, 2.0] {
        let p = ProtocolParams::with_couplings(1.0, 1.0);
        for start in [
            fock_state(d, AtomLabel::G, 0, 0)?,
            fock_state(d, AtomLabel::Plus, 1, 0)?,
        ] {
            let analytic = conditional_displacement(&start, &p, Cavity::A, gt)?;
            let numeric = evolve_unitary(&start, &build_effective_hamiltonian(d, &p, Cavity::A), gt)?;
            worst = worst.max(1.0 - fidelity(&analytic, &numeric)?);
        }
    }
    Ok(Check::at_most(
        "conditional displacement vs effective exponential",
        worst,
        PROPAGATOR_INFIDELITY_TOLERANCE,
    ))
}

fn protocol_checks() -> Result<Vec<Check>> {
    let mut prob_sum = 0.0_f64;
    let mut branch_norm = 0.0_f64;
    let mut agreement = 0.0_f64;
    let mut bell_purity = 0.0_f64;
    let mut orthogonality = 0.0_f64;
    for kind in ProtocolKind::ALL {
        let mut p = kind.default_params(1.0, 1.3, 100.0);
        let n = match kind {
            ProtocolKind::EntangledCoherent => {
                (p.t_a, p.t_b) = ecs_times(&p, 1.0, 1.0);
                default_truncation(1.0)
            }
            _ => 6,
        };
        let d = SystemDims::new(n, n)?;
        let mut finals = Vec::new();
        for engine in [Engine::Analytic, Engine::EffectiveNumeric] {
            let r = run(kind, &p, &RunSettings::new(d, engine), Some(MeasureBasis::Bare))?;
            prob_sum = prob_sum.max((r.probability_sum() - 1.0).abs());
            for b in r.branches.iter().filter_map(|b| b.field.as_ref()) {
                let norm: f64 = b.amplitudes().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                branch_norm = branch_norm.max((norm - 1.0).abs());
            }
            match kind {
                ProtocolKind::EntangledCoherent => {
                    let g = r.branch(AtomLabel::G).and_then(|b| b.field.clone());
                    let e = r.branch(AtomLabel::E).and_then(|b| b.field.clone());
                    if let (Some(g), Some(e)) = (g, e) {
                        orthogonality = orthogonality.max(g.inner(&e)?.norm());
                    }
                }
                _ => bell_purity = bell_purity.max(1.0 - r.atom_purity),
            }
            finals.push(r.final_joint_state);
        }
        agreement = agreement.max(1.0 - measures::fidelity(&finals[0], &finals[1])?);
    }
    Ok(vec![
        Check::at_most("branch probability sums", prob_sum, PROBABILITY_SUM_TOLERANCE),
        Check::at_most("branch state norms", branch_norm, PROBABILITY_SUM_TOLERANCE),
        Check::at_most("analytic vs effective engine", agreement, PROPAGATOR_INFIDELITY_TOLERANCE),
        Check::at_most("Bell atomic factorization", bell_purity, PROBABILITY_SUM_TOLERANCE),
        Check::at_most("ECS branch orthogonality", orthogonality, PROBABILITY_SUM_TOLERANCE),
    ])
}

fn integrator_check() -> Result<Check> {
    let p = ProtocolKind::BellOddParity.default_params(1.0, 1.0, 20.0);
    let d = SystemDims::new(4, 1)?;
    let opts = IntegratorOptions::default();
    let h = InteractionHamiltonian::new(d, &p, Cavity::A)?;
    let psi = fock_state(d, AtomLabel::Plus, 0, 0)?;
    let run = evolve_time_dependent(&psi, &h, p.t_a, &opts)?;
    Ok(Check::at_most("time-dependent Cauchy residual", run.cauchy_residual, opts.tolerance))
}

fn lindblad_checks() -> Result<Vec<Check>> {
    let d = SystemDims::new(4, 3)?;
    let p = ProtocolParams::with_couplings(1.0, 1.0);
    let h = build_dressed_jc(d, &p, Cavity::A);
    let psi = fock_state(d, AtomLabel::Plus, 1, 0)?;
    let closed = evolve_lindblad(&DensityMatrix::from_pure(&psi), &h, &NoiseParams::default(), 2.5, 1)?;
    let unitary = evolve_unitary(&psi, &h, 2.5)?;
    let noise = NoiseParams {
        kappa_a: 0.3,
        kappa_b: 0.2,
        gamma_atom: 0.1,
    };
    let open = evolve_lindblad(&DensityMatrix::from_pure(&psi), &h, &noise, 2.5, 1)?;
    let bell = ProtocolKind::BellOddParity.default_params(1.0, 1.0, 100.0);
    let noisy = run_bell_noisy(ProtocolKind::BellOddParity, &bell, SystemDims::new(3, 3)?, &noise, 1)?;
    Ok(vec![
        Check::at_most(
            "closed Lindblad vs unitary",
            closed.rho.distance_to_pure(&unitary),
            CLOSED_LINDBLAD_TOLERANCE,
        ),
        Check::at_most(
            "Lindblad trace drift",
            open.max_trace_drift.max(noisy.max_trace_drift).max((open.rho.trace() - 1.0).abs()),
            TRACE_DRIFT_TOLERANCE,
        ),
        Check::at_most(
            "Lindblad positivity",
            (-open.min_eigenvalue.min(noisy.min_eigenvalue)).max(0.0),
            POSITIVITY_TOLERANCE,
        ),
        Check::at_most(
            "Lindblad hermiticity",
            open.rho.hermiticity_residual(),
            HERMITICITY_TOLERANCE,
        ),
    ])
}

fn leakage_check(options: &ValidationOptions) -> Result<Check> {
    let alpha = C64::new(options.leakage_alpha, 0.0);
    let levels = options.leakage_levels.max(1);
    let tail = poisson_tail(alpha.norm_sqr(), levels);
    Ok(Check::at_most(
        &format!("truncation leakage (|α| = {}, n = {levels})", options.leakage_alpha),
        tail,
        options.leakage_tolerance,
    ))
}

/// Runs every check; errors only if a check could not be evaluated.
pub fn run_invariant_suite(options: &ValidationOptions) -> Result<ValidationReport> {
    let mut checks = vec![
        norm_check()?,
        hermiticity_check()?,
        composition_check()?,
        propagator_equivalence_check()?,
        integrator_check()?,
    ];
    checks.extend(protocol_checks()?);
    checks.extend(lindblad_checks()?);
    checks.push(leakage_check(options)?);
    Ok(ValidationReport { checks })
}
