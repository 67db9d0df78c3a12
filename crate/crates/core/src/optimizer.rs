//! Joint optimization of network parameters and orbital rotation.
//!
//! Each step rotates the reference integrals by `exp(κ)`, evaluates the
//! energy and forces of the current network on the rotated (and, for active
//! spaces, effective) Hamiltonian, then updates `θ` by stochastic
//! reconfiguration and `κ` by plain gradient descent.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::active_space::{effective_active_integrals, embed_rdms, validate_spec, ActiveSpaceSpec};
use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_energy_force, estimate_metric, estimate_rdms, local_estimates, LocalEnergyTable,
    MetricTensor, WeightedSamples,
};
use crate::fock::{Sector, SectorBasis};
use crate::integrals::IntegralSet;
use crate::rotation::{kappa_force, n_params, OrbitalRotation};
use crate::sampler::{exact_distribution, run_chains, SamplerConfig};

/// Multiplier separating the sampler seeds of consecutive steps.
const STEP_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
/// Maximum number of tenfold shift increases in the dense solve.
const MAX_SHIFT_ESCALATIONS: usize = 3;
/// Shift tried first when a zero-shift factorization fails.
const FALLBACK_SHIFT: f64 = 1e-8;

/// How the forces become a parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// Metric-preconditioned step for the network or circuit, plain
    /// gradient step for `κ`.
    #[default]
    NaturalGradient,
    /// `δ = −η F` for every parameter.
    PlainGradient,
    /// Limited-memory BFGS over all parameters jointly with an Armijo line
    /// search. Circuit runs only.
    Lbfgs,
}

impl UpdateRule {
    pub const ALL: [UpdateRule; 3] = [
        UpdateRule::NaturalGradient,
        UpdateRule::PlainGradient,
        UpdateRule::Lbfgs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UpdateRule::NaturalGradient => "natural-gradient",
            UpdateRule::PlainGradient => "plain-gradient",
            UpdateRule::Lbfgs => "lbfgs",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Step size `η`.
    pub eta: f64,
    /// Geometric per-step factor applied to both step sizes.
    pub eta_decay: f64,
    /// Diagonal regularization of the metric.
    pub shift: f64,
    pub steps: usize,
    /// Enumerate the sector instead of sampling.
    pub exact: bool,
    pub sampler: SamplerConfig,
    pub kappa_enabled: bool,
    /// Orbital step size; `eta` when absent.
    pub kappa_eta: Option<f64>,
    pub theta_enabled: bool,
    pub rule: UpdateRule,
    pub seed: u64,
    /// Steps in the convergence window; zero disables the check.
    pub window: usize,
    pub tolerance: f64,
    /// Circuit runs only: keep a step only if it lowers the energy, growing
    /// the step scale after a success and shrinking it before a retry.
    pub backtracking: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eta: 0.02,
            eta_decay: 1.0,
            shift: 1e-3,
            steps: 500,
            exact: true,
            sampler: SamplerConfig::default(),
            kappa_enabled: true,
            kappa_eta: None,
            theta_enabled: true,
            rule: UpdateRule::NaturalGradient,
            seed: 0,
            window: 50,
            tolerance: 1e-7,
            backtracking: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument("eta must be positive".into()));
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(Error::InvalidArgument("shift must be non-negative".into()));
        }
        if !(self.eta_decay > 0.0 && self.eta_decay <= 1.0) {
            return Err(Error::InvalidArgument("eta_decay must lie in (0, 1]".into()));
        }
        if let Some(k) = self.kappa_eta {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidArgument("kappa_eta must be non-negative".into()));
            }
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidArgument("tolerance must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn step_sizes(&self, step: usize) -> (f64, f64) {
        let decay = self.eta_decay.powi(step as i32);
        (self.eta * decay, self.kappa_eta.unwrap_or(self.eta) * decay)
    }

    fn step_seed(&self, step: usize) -> u64 {
        self.seed.wrapping_add((step as u64).wrapping_mul(STEP_SEED_STRIDE))
    }
}

/// `δθ` solving `(S + shift·I) δθ = −η F`.
///
/// A factored metric with fewer rows than parameters and a positive shift is
/// inverted through the Woodbury identity; otherwise the dense matrix is
/// Cholesky factorized, raising the shift tenfold on failure.
pub fn sr_solve(metric: &MetricTensor, force: &[f64], eta: f64, shift: f64) -> Result<Vec<f64>> {
    let p = metric.dim();
    if force.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: force.len(),
        });
    }
    if p == 0 {
        return Ok(Vec::new());
    }
    let f = DVector::from_column_slice(force);
    if let Some(y) = metric.factor() {
        if y.nrows() < p && shift > 0.0 {
            if let Some(d) = woodbury_solve(y, &f, shift) {
                return Ok((d * -eta).as_slice().to_vec());
            }
        }
    }
    let s = metric.dense();
    let mut lambda = shift;
    for attempt in 0..=MAX_SHIFT_ESCALATIONS {
        if attempt > 0 {
            lambda = if lambda == 0.0 { FALLBACK_SHIFT } else { lambda * 10.0 };
        }
        let mut a = s.clone();
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        if let Some(ch) = a.cholesky() {
            let d = ch.solve(&f);
            if d.iter().all(|v| v.is_finite()) {
                return Ok((d * -eta).as_slice().to_vec());
            }
        }
    }
    Err(Error::SolverFailure { shift: lambda })
}

/// `(2YᵀY + λI)⁻¹ F = [F − Yᵀ(λ/2·I + YYᵀ)⁻¹ Y F] / λ`.
fn woodbury_solve(y: &DMatrix<f64>, f: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut inner = y * y.transpose();
    for i in 0..inner.nrows() {
        inner[(i, i)] += 0.5 * lambda;
    }
    let yf = y * f;
    let z = inner.cholesky()?.solve(&yf);
    let d = (f - y.transpose() * z) / lambda;
    d.iter().all(|v| v.is_finite()).then_some(d)
}

/// Reference integrals together with the sector the network lives in.
#[derive(Debug, Clone)]
pub struct Problem {
    /// Unrotated full-space integrals.
    pub integrals: IntegralSet,
    pub active: Option<ActiveSpaceSpec>,
    /// Sector of the variational state (the active sector when restricted).
    pub sector: Sector,
}

impl Problem {
    pub fn full(integrals: IntegralSet, sector: Sector) -> Result<Self> {
        integrals.validate()?;
        if sector.n_orb != integrals.n_orb {
            return Err(Error::DimensionMismatch {
                expected: integrals.n_orb,
                got: sector.n_orb,
            });
        }
        Ok(Problem {
            integrals,
            active: None,
            sector,
        })
    }

    /// Restricts to `spec`; `sector` is the full-space sector.
    pub fn active(integrals: IntegralSet, spec: ActiveSpaceSpec, sector: Sector) -> Result<Self> {
        integrals.validate()?;
        if sector.n_orb != integrals.n_orb {
            return Err(Error::DimensionMismatch {
                expected: integrals.n_orb,
                got: sector.n_orb,
            });
        }
        let active_sector = validate_spec(&spec, &sector)?;
        Ok(Problem {
            integrals,
            active: Some(spec),
            sector: active_sector,
        })
    }

    pub fn n_kappa(&self) -> usize {
        n_params(self.integrals.n_orb)
    }

    /// Integrals seen by the network under `rotation`.
    pub fn variational_integrals(&self, rotation: &OrbitalRotation) -> IntegralSet {
        let rotated = rotation.rotate(&self.integrals);
        match &self.active {
            Some(spec) => effective_active_integrals(&rotated, spec),
            None => rotated,
        }
    }
}

/// Network parameters and orbital rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct VmcState {
    pub params: Vec<f64>,
    pub rotation: OrbitalRotation,
}

impl VmcState {
    /// `θ` with the identity rotation.
    pub fn new(params: Vec<f64>, n_orb: usize) -> Self {
        VmcState {
            params,
            rotation: OrbitalRotation::identity(n_orb),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub energy: f64,
    /// Standard error; zero in exact mode.
    pub energy_error: f64,
    pub variance: f64,
    pub force_theta_norm: f64,
    pub force_kappa_norm: f64,
    /// Metropolis acceptance; absent in exact mode.
    pub acceptance: Option<f64>,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Evaluations taken before each update.
    pub records: Vec<StepRecord>,
    /// Evaluation of the returned state.
    pub final_record: StepRecord,
    pub state: VmcState,
    pub converged: bool,
}

struct Evaluation {
    record: StepRecord,
    force_theta: Vec<f64>,
    force_kappa: Vec<f64>,
    metric: Option<MetricTensor>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn evaluate<A: Ansatz + ?Sized>(
    ansatz: &A,
    problem: &Problem,
    basis: Option<&SectorBasis>,
    state: &VmcState,
    cfg: &OptimizerConfig,
    step: usize,
    with_metric: bool,
) -> Result<Evaluation> {
    let ints = problem.variational_integrals(&state.rotation);
    let table = LocalEnergyTable::new(&ints);
    let (samples, acceptance) = match basis {
        Some(basis) => {
            let dist = exact_distribution(ansatz, &state.params, basis)?;
            (WeightedSamples::from_distribution(basis, &dist), None)
        }
        None => {
            let sampler = SamplerConfig {
                seed: cfg.step_seed(step),
                ..cfg.sampler
            };
            let batches = run_chains(ansatz, &state.params, &problem.sector, &sampler)?;
            let proposed: u64 = batches.iter().map(|b| b.proposed).sum();
            let accepted: u64 = batches.iter().map(|b| b.accepted).sum();
            let acc = if proposed == 0 {
                0.0
            } else {
                accepted as f64 / proposed as f64
            };
            (WeightedSamples::from_batches(&batches)?, Some(acc))
        }
    };
    let derivs = cfg.theta_enabled && ansatz.n_params() > 0;
    let locals = local_estimates(ansatz, &state.params, &table, &samples, derivs)?;
    let ef = estimate_energy_force(&samples, &locals)?;
    let force_theta = if derivs { ef.force } else { Vec::new() };
    let metric = if derivs && with_metric && cfg.rule == UpdateRule::NaturalGradient {
        Some(estimate_metric(&samples, &locals)?)
    } else {
        None
    };
    let force_kappa = if cfg.kappa_enabled {
        let rdms = estimate_rdms(ansatz, &state.params, &samples, problem.sector.n_orb)?;
        let full = match &problem.active {
            Some(spec) => embed_rdms(spec, &rdms)?,
            None => rdms,
        };
        kappa_force(&problem.integrals, &state.rotation, &full)?
    } else {
        Vec::new()
    };
    let (eta, _) = cfg.step_sizes(step);
    Ok(Evaluation {
        record: StepRecord {
            step,
            energy: ef.energy,
            energy_error: ef.error,
            variance: ef.variance,
            force_theta_norm: norm(&force_theta),
            force_kappa_norm: norm(&force_kappa),
            acceptance,
            eta,
        },
        force_theta,
        force_kappa,
        metric,
    })
}

fn apply_update(state: &mut VmcState, eval: &Evaluation, cfg: &OptimizerConfig, step: usize) -> Result<()> {
    let (eta, eta_kappa) = cfg.step_sizes(step);
    if !eval.force_theta.is_empty() {
        let delta = match &eval.metric {
            Some(s) => sr_solve(s, &eval.force_theta, eta, cfg.shift)?,
            None => eval.force_theta.iter().map(|f| -eta * f).collect(),
        };
        for (p, d) in state.params.iter_mut().zip(&delta) {
            *p += d;
        }
    }
    if !eval.force_kappa.is_empty() {
        let delta: Vec<f64> = eval.force_kappa.iter().map(|f| -eta_kappa * f).collect();
        state.rotation.step(&delta)?;
    }
    if state.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("network parameters"));
    }
    Ok(())
}

fn check_network_rule(cfg: &OptimizerConfig) -> Result<()> {
    if cfg.rule == UpdateRule::Lbfgs || cfg.backtracking {
        return Err(Error::InvalidArgument(
            "line searches are only available for circuit runs".into(),
        ));
    }
    Ok(())
}

fn check_state<A: Ansatz + ?Sized>(ansatz: &A, problem: &Problem, state: &VmcState) -> Result<()> {
    if state.params.len() != ansatz.n_params() {
        return Err(Error::DimensionMismatch {
            expected: ansatz.n_params(),
            got: state.params.len(),
        });
    }
    if state.rotation.n_orb() != problem.integrals.n_orb {
        return Err(Error::DimensionMismatch {
            expected: problem.integrals.n_orb,
            got: state.rotation.n_orb(),
        });
    }
    Ok(())
}

fn exact_basis(problem: &Problem, cfg: &OptimizerConfig) -> Result<Option<SectorBasis>> {
    if cfg.exact {
        SectorBasis::new(problem.sector).map(Some)
    } else {
        Ok(None)
    }
}

/// One evaluation at `state` followed by the simultaneous `(θ, κ)` update.
/// Returns the pre-update record.
pub fn vmc_step<A: Ansatz + ?Sized>(
    ansatz: &A,
    problem: &Problem,
    state: &mut VmcState,
    cfg: &OptimizerConfig,
    step: usize,
) -> Result<StepRecord> {
    cfg.validate()?;
    check_network_rule(cfg)?;
    check_state(ansatz, problem, state)?;
    let basis = exact_basis(problem, cfg)?;
    let eval = evaluate(ansatz, problem, basis.as_ref(), state, cfg, step, true)?;
    apply_update(state, &eval, cfg, step)?;
    Ok(eval.record)
}

/// Energy of `state` without updating it.
pub fn evaluate_state<A: Ansatz + ?Sized>(
    ansatz: &A,
    problem: &Problem,
    state: &VmcState,
    cfg: &OptimizerConfig,
    step: usize,
) -> Result<StepRecord> {
    check_state(ansatz, problem, state)?;
    let basis = exact_basis(problem, cfg)?;
    Ok(evaluate(ansatz, problem, basis.as_ref(), state, cfg, step, false)?.record)
}

/// Runs until `cfg.steps` updates are done or the energy settles.
pub fn run_optimization<A: Ansatz + ?Sized>(
    ansatz: &A,
    problem: &Problem,
    init: VmcState,
    cfg: &OptimizerConfig,
) -> Result<Trajectory> {
    run_optimization_with(ansatz, problem, init, cfg, |_| {})
}

/// As [`run_optimization`], calling `observe` after every step.
pub fn run_optimization_with<A: Ansatz + ?Sized>(
    ansatz: &A,
    problem: &Problem,
    init: VmcState,
    cfg: &OptimizerConfig,
    mut observe: impl FnMut(&StepRecord),
) -> Result<Trajectory> {
    cfg.validate()?;
    check_network_rule(cfg)?;
    check_state(ansatz, problem, &init)?;
    let basis = exact_basis(problem, cfg)?;
    let mut state = init;
    let mut records = Vec::with_capacity(cfg.steps);
    let mut converged = false;
    for step in 0..cfg.steps {
        let eval = evaluate(ansatz, problem, basis.as_ref(), &state, cfg, step, true)?;
        apply_update(&mut state, &eval, cfg, step)?;
        observe(&eval.record);
        records.push(eval.record);
        if has_converged(&records, cfg) {
            converged = true;
            break;
        }
    }
    let final_eval = evaluate(
        ansatz,
        problem,
        basis.as_ref(),
        &state,
        cfg,
        records.len(),
        false,
    )?;
    Ok(Trajectory {
        records,
        final_record: final_eval.record,
        state,
        converged,
    })
}

/// Exact mode: relative change across the window below the tolerance.
/// Sampled mode: the means of the two window halves agree within their
/// combined error bar.
pub(crate) fn has_converged(records: &[StepRecord], cfg: &OptimizerConfig) -> bool {
    let w = cfg.window;
    if w < 2 || records.len() <= w {
        return false;
    }
    let last = &records[records.len() - 1];
    if cfg.exact {
        let first = &records[records.len() - 1 - w];
        let scale = last.energy.abs().max(f64::MIN_POSITIVE);
        return (last.energy - first.energy).abs() / scale < cfg.tolerance;
    }
    let window = &records[records.len() - w..];
    let (a, b) = window.split_at(w / 2);
    let stats = |r: &[StepRecord]| {
        let n = r.len() as f64;
        let mean = r.iter().map(|x| x.energy).sum::<f64>() / n;
        let err2 = r.iter().map(|x| x.energy_error * x.energy_error).sum::<f64>() / (n * n);
        (mean, err2)
    };
    let (ma, ea) = stats(a);
    let (mb, eb) = stats(b);
    (ma - mb).abs() <= (ea + eb).sqrt() || (ma - mb).abs() / mb.abs().max(f64::MIN_POSITIVE) < cfg.tolerance
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{init_params, AnsatzConfig, Family, Network, TableAnsatz};
    use crate::integrals::test_support::*;
    use crate::integrals::{hubbard_ring, HubbardSpec};
    use crate::oracle::ground_energy;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(s: &DMatrix<f64>, shift: f64, d: &[f64], f: &[f64], eta: f64) -> f64 {
        let n = f.len();
        let a = s + DMatrix::identity(n, n) * shift;
        let r = a * DVector::from_column_slice(d) + DVector::from_column_slice(f) * eta;
        r.norm() / (eta * norm(f))
    }

    #[test]
    fn identity_metric_gives_gradient_step() {
        let f = [0.3, -1.2, 2.0];
        let d = sr_solve(&MetricTensor::from_dense(DMatrix::identity(3, 3)), &f, 0.1, 0.0).unwrap();
        for (a, b) in d.iter().zip(&f) {
            assert!((a + 0.1 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_metric_divides_componentwise() {
        let diag = [2.0, 0.5, 4.0];
        let f = [1.0, 1.0, -2.0];
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&diag));
        let d = sr_solve(&MetricTensor::from_dense(s), &f, 0.2, 0.0).unwrap();
        for k in 0..3 {
            assert!((d[k] + 0.2 * f[k] / diag[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn random_psd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(rows, p) in &[(4, 10), (30, 8), (10, 10)] {
            let y = DMatrix::from_fn(rows, p, |_, _| rng.random_range(-1.0..1.0));
            let f: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let metric = MetricTensor::from_factor(y);
            let s = metric.dense();
            for shift in [1e-3, 0.1] {
                let d = sr_solve(&metric, &f, 0.05, shift).unwrap();
                assert!(residual(&s, shift, &d, &f, 0.05) <= 1e-10);
                let dense = sr_solve(&MetricTensor::from_dense(s.clone()), &f, 0.05, shift).unwrap();
                assert!(residual(&s, shift, &dense, &f, 0.05) <= 1e-10);
            }
        }
    }

    #[test]
    fn singular_metric_escalates_shift() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let d = sr_solve(&MetricTensor::from_dense(s), &[1.0, -1.0], 1.0, 0.0).unwrap();
        assert!(d.iter().all(|v| v.is_finite()));
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            sr_solve(&MetricTensor::from_dense(bad), &[1.0, 1.0], 1.0, 0.0),
            Err(Error::SolverFailure { .. })
        ));
        assert!(sr_solve(&MetricTensor::from_dense(DMatrix::identity(2, 2)), &[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.eta = 0.0;
        assert!(cfg.validate().is_err());
        cfg.eta = 0.1;
        cfg.shift = -1.0;
        assert!(cfg.validate().is_err());
    }

    fn hubbard_problem(sites: usize, u: f64) -> Problem {
        let ints = hubbard_ring(&HubbardSpec::new(sites, 1.0, u, true).unwrap());
        let half = sites / 2;
        Problem::full(ints, Sector::new(sites, half, half).unwrap()).unwrap()
    }

    fn rbm(problem: &Problem, seed: u64) -> (Network, Vec<f64>) {
        let mut cfg = AnsatzConfig::new(Family::Rbm, 1, problem.sector);
        cfg.seed = seed;
        cfg.param_scale = 0.1;
        let net = Network::new(cfg).unwrap();
        (net, init_params(&cfg).unwrap())
    }

    #[test]
    fn zero_steps_returns_initial_evaluation() {
        let problem = hubbard_problem(2, 4.0);
        let (net, p) = rbm(&problem, 3);
        let cfg = OptimizerConfig {
            steps: 0,
            ..OptimizerConfig::default()
        };
        let init = VmcState::new(p, 2);
        let t = run_optimization(&net, &problem, init.clone(), &cfg).unwrap();
        assert!(t.records.is_empty());
        assert_eq!(t.state, init);
        assert_eq!(t.final_record.step, 0);
        let e = evaluate_state(&net, &problem, &init, &cfg, 0).unwrap();
        assert_eq!(e.energy, t.final_record.energy);
    }

    #[test]
    fn disabled_rotation_matches_zero_orbital_step() {
        let problem = hubbard_problem(4, 2.0);
        let (net, p) = rbm(&problem, 4);
        let off = OptimizerConfig {
            steps: 20,
            kappa_enabled: false,
            ..OptimizerConfig::default()
        };
        let frozen = OptimizerConfig {
            kappa_enabled: true,
            kappa_eta: Some(0.0),
            ..off.clone()
        };
        let a = run_optimization(&net, &problem, VmcState::new(p.clone(), 4), &off).unwrap();
        let b = run_optimization(&net, &problem, VmcState::new(p, 4), &frozen).unwrap();
        assert_eq!(a.state.params, b.state.params);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.energy.to_bits(), y.energy.to_bits());
        }
    }

    #[test]
    fn exact_mode_descent_is_monotone_and_variational() {
        let ints = random_integrals(3, 11);
        let sector = Sector::new(3, 1, 1).unwrap();
        let e0 = ground_energy(&ints, &SectorBasis::new(sector).unwrap()).unwrap();
        let problem = Problem::full(ints, sector).unwrap();
        let (net, p) = rbm(&problem, 5);
        let cfg = OptimizerConfig {
            eta: 1e-2,
            steps: 50,
            ..OptimizerConfig::default()
        };
        let t = run_optimization(&net, &problem, VmcState::new(p, 3), &cfg).unwrap();
        let mut energies: Vec<f64> = t.records.iter().map(|r| r.energy).collect();
        energies.push(t.final_record.energy);
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert!(energies.iter().all(|&e| e >= e0 - 1e-9));
        assert!(energies.last().unwrap() < energies.first().unwrap());
    }

    /// Restricted Hartree–Fock by Roothaan iteration with damping.
    fn rhf_energy(ints: &IntegralSet, n_occ: usize) -> f64 {
        let n = ints.n_orb;
        let mut c = DMatrix::identity(n, n);
        let mut density = DMatrix::zeros(n, n);
        let mut energy = 0.0;
        for _ in 0..500 {
            let occ = c.columns(0, n_occ);
            let new_density = &occ * occ.transpose();
            density = if energy == 0.0 { new_density } else { &density * 0.5 + new_density * 0.5 };
            let fock = DMatrix::from_fn(n, n, |p, q| {
                let mut v = ints.h[(p, q)];
                for r in 0..n {
                    for s in 0..n {
                        v += density[(r, s)] * (2.0 * ints.g.get(p, r, q, s) - ints.g.get(p, r, s, q));
                    }
                }
                v
            });
            energy = ints.core
                + (0..n)
                    .flat_map(|p| (0..n).map(move |q| (p, q)))
                    .map(|(p, q)| density[(p, q)] * (ints.h[(p, q)] + fock[(p, q)]))
                    .sum::<f64>();
            let eig = SymmetricEigen::new(fock);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            c = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        }
        energy
    }

    #[test]
    fn orbital_only_optimization_reaches_hartree_fock() {
        let ints = random_integrals(3, 12);
        let sector = Sector::new(3, 1, 1).unwrap();
        let e_hf = rhf_energy(&ints, 1);
        let basis = SectorBasis::new(sector).unwrap();
        let values: Vec<f64> = basis
            .configs()
            .iter()
            .map(|&c| if c == sector.reference() { 1.0 } else { 0.0 })
            .collect();
        let det = TableAnsatz::from_real(basis, &values).unwrap();
        let problem = Problem::full(ints, sector).unwrap();
        let cfg = OptimizerConfig {
            eta: 0.1,
            steps: 3000,
            theta_enabled: false,
            window: 50,
            tolerance: 1e-13,
            ..OptimizerConfig::default()
        };
        let t = run_optimization(&det, &problem, VmcState::new(Vec::new(), 3), &cfg).unwrap();
        assert!(
            (t.final_record.energy - e_hf).abs() < 1e-6,
            "{} vs {}",
            t.final_record.energy,
            e_hf
        );
        assert!(t.final_record.force_kappa_norm < 1e-4);
    }

    #[test]
    fn sampled_runs_are_deterministic() {
        let problem = hubbard_problem(4, 4.0);
        let (net, p) = rbm(&problem, 6);
        let cfg = OptimizerConfig {
            exact: false,
            steps: 5,
            sampler: SamplerConfig {
                n_sweeps: 200,
                n_chains: 2,
                ..SamplerConfig::default()
            },
            ..OptimizerConfig::default()
        };
        let a = run_optimization(&net, &problem, VmcState::new(p.clone(), 4), &cfg).unwrap();
        let b = run_optimization(&net, &problem, VmcState::new(p, 4), &cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.state, b.state);
        assert!(a.records.iter().all(|r| r.acceptance.is_some() && r.energy_error > 0.0));
    }

    #[test]
    fn rotations_help_on_small_hubbard() {
        let problem = hubbard_problem(4, 4.0);
        let e0 = ground_energy(&problem.integrals, &SectorBasis::new(problem.sector).unwrap()).unwrap();
        let (net, p) = rbm(&problem, 7);
        let on = OptimizerConfig {
            steps: 300,
            eta: 0.05,
            ..OptimizerConfig::default()
        };
        let off = OptimizerConfig {
            kappa_enabled: false,
            ..on.clone()
        };
        let a = run_optimization(&net, &problem, VmcState::new(p.clone(), 4), &on).unwrap();
        let b = run_optimization(&net, &problem, VmcState::new(p, 4), &off).unwrap();
        assert!(a.final_record.energy >= e0 - 1e-9);
        assert!(b.final_record.energy >= e0 - 1e-9);
        assert!(a.final_record.energy < a.records[0].energy);
    }

    #[test]
    fn active_space_problem_runs_and_stays_above_full_ground_state() {
        let ints = random_integrals(4, 13);
        let sector = Sector::new(4, 2, 2).unwrap();
        let e0 = ground_energy(&ints, &SectorBasis::new(sector).unwrap()).unwrap();
        let spec = ActiveSpaceSpec::window(4, 1, 2);
        let problem = Problem::active(ints, spec, sector).unwrap();
        assert_eq!(problem.sector.dimension(), 4);
        let (net, p) = rbm(&problem, 8);
        let cfg = OptimizerConfig {
            steps: 100,
            ..OptimizerConfig::default()
        };
        let t = run_optimization(&net, &problem, VmcState::new(p, 4), &cfg).unwrap();
        assert!(t.final_record.energy >= e0 - 1e-9);
        assert!(t.final_record.energy < t.records[0].energy);
    }
}
