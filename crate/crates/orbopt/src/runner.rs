//! Experiment drivers behind the command-line interface.
//!
//! Each command turns a [`Resolved`] config into an [`OutputSet`]. Reports
//! depend only on the config, its inputs and the seed; wall-clock timings go
//! to a separate file so the reports themselves are reproducible byte for
//! byte.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use orbopt_core::ansatz::{init_params, param_count, AnsatzConfig, Network};
use orbopt_core::estimators::{batch_means_error, local_estimates, LocalEnergyTable, WeightedSamples};
use orbopt_core::fock::{Sector, SectorBasis};
use orbopt_core::integrals::IntegralSet;
use orbopt_core::optimizer::{run_optimization, OptimizerConfig, Problem, StepRecord, Trajectory, VmcState};
use orbopt_core::oracle::{build_sector_hamiltonian, ground_state};
use orbopt_core::rotation::{n_params, param_pair, OrbitalRotation};
use orbopt_core::sampler::{autocorrelation_time, exact_distribution, run_chains};
use orbopt_core::vqe::{
    cumulative_fraction, restart_pair, restart_seed, vqe_run, CascadeParams, RestartPlan, RestartRow,
    VqeTrajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::checkpoint::Checkpoint;
use crate::config::{Command, ConfigError, ExperimentConfig, Overrides, Resolved, ScanMethod, SystemInstance};
use crate::fcidump::{self, Fcidump, FcidumpHeader};
use crate::report::{json_bytes, json_f64, json_opt, json_vec, object, OutputError, OutputSet, Table};

/// Largest sector whose distribution is written out by `diagnostics`.
pub const DISTRIBUTION_LIMIT: usize = 100_000;

/// Minimum expected count of a chi-square bin; sparser bins are pooled.
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("{0}")]
    Runtime(String),
    #[error("output: {0}")]
    Output(#[from] OutputError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Runtime(_) | RunError::Output(_) => 1,
            RunError::Config(_) => 2,
            RunError::Capacity(_) => 3,
            RunError::Convergence(_) => 4,
        }
    }
}

impl From<orbopt_core::Error> for RunError {
    fn from(e: orbopt_core::Error) -> Self {
        use orbopt_core::Error as E;
        match e {
            E::Capacity { .. } => RunError::Capacity(e.to_string()),
            E::NoConvergence { .. } | E::SolverFailure { .. } => RunError::Convergence(e.to_string()),
            other => RunError::Runtime(other.to_string()),
        }
    }
}

/// Files of a finished run and whether it met its convergence requirement.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub outputs: OutputSet,
    /// Set when `require_convergence` was asked for and a run did not settle.
    pub unconverged: Option<String>,
}

pub fn code_version() -> String {
    format!("orbopt {}", env!("CARGO_PKG_VERSION"))
}

/// `f(0..n)` on up to `threads` scoped threads, results in index order.
pub fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, threads: usize, f: F) -> Vec<T> {
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every index ran"))
        .collect()
}

/// Ground energy of `sys`, or `None` when the sector is too large to diagonalize.
pub fn oracle_energy(sys: &SystemInstance) -> Result<Option<f64>, RunError> {
    match exact_ground(&sys.integrals, sys.sector) {
        Ok((e, _, _)) => Ok(Some(e)),
        Err(RunError::Capacity(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn exact_ground(ints: &IntegralSet, sector: Sector) -> Result<(f64, Vec<f64>, SectorBasis), RunError> {
    let basis = SectorBasis::new(sector)?;
    let h = build_sector_hamiltonian(ints, &basis)?;
    let (e, v) = ground_state(&h)?;
    Ok((e, v, basis))
}

/// Network, problem and optimized trajectory of one VMC run.
pub struct VmcOutcome {
    pub network: Network,
    pub problem: Problem,
    pub trajectory: Trajectory,
}

pub fn run_vmc(
    sys: &SystemInstance,
    exp: &Resolved,
    cfg: &OptimizerConfig,
) -> Result<VmcOutcome, RunError> {
    let problem = match &exp.active {
        Some(spec) => Problem::active(sys.integrals.clone(), spec.clone(), sys.sector)?,
        None => Problem::full(sys.integrals.clone(), sys.sector)?,
    };
    let a = &exp.ansatz;
    let acfg = AnsatzConfig {
        family: a.family,
        alpha: a.alpha,
        sector: problem.sector,
        param_scale: a.param_scale,
        seed: exp.seed,
        output_scale: a.output_scale,
    };
    let network = Network::new(acfg)?;
    let n_orb = sys.integrals.n_orb;
    let state = match &exp.resume {
        Some(Checkpoint::Vmc {
            family,
            alpha,
            params,
            kappa,
            ..
        }) => {
            let bad = |m: String| RunError::Config(ConfigError::new("optimizer.resume", m));
            if family != a.family.name() || *alpha != a.alpha {
                return Err(bad(format!(
                    "checkpoint holds a {family} network with alpha {alpha}, the config asks for {} with alpha {}",
                    a.family.name(),
                    a.alpha
                )));
            }
            if params.len() != param_count(&acfg) || kappa.len() != n_params(n_orb) {
                return Err(bad("parameter counts do not match the system".into()));
            }
            VmcState {
                params: params.clone(),
                rotation: OrbitalRotation::from_params(n_orb, kappa.clone())?,
            }
        }
        Some(Checkpoint::Vqe { .. }) => {
            return Err(RunError::Config(ConfigError::new(
                "optimizer.resume",
                "a circuit checkpoint cannot start a network run",
            )))
        }
        None => {
            let scale = if cfg.kappa_enabled { exp.kappa_init_scale } else { 0.0 };
            VmcState {
                params: init_params(&acfg)?,
                rotation: OrbitalRotation::random(n_orb, scale, exp.seed)?,
            }
        }
    };
    let trajectory = run_optimization(&network, &problem, state, cfg)?;
    Ok(VmcOutcome {
        network,
        problem,
        trajectory,
    })
}

/// The lowest of `restarts` circuit runs from seeded random angles.
pub struct BestVqe {
    pub runs: Vec<(u64, VqeTrajectory)>,
    pub best: usize,
}

impl BestVqe {
    pub fn best_run(&self) -> &VqeTrajectory {
        &self.runs[self.best].1
    }
}

pub fn run_vqe_restarts(
    sys: &SystemInstance,
    exp: &Resolved,
    cfg: &OptimizerConfig,
    threads: usize,
) -> Result<BestVqe, RunError> {
    let v = &exp.vqe;
    let n_qubits = 2 * sys.integrals.n_orb;
    let runs = parallel_map(v.restarts, threads, |i| -> Result<_, RunError> {
        let seed = restart_seed(exp.seed, i);
        let init = CascadeParams::random(v.layout, n_qubits, v.layers, seed)?;
        Ok((seed, vqe_run(&sys.integrals, &sys.sector, &init, cfg)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let ea = a.1 .1.trajectory.final_record.energy;
            let eb = b.1 .1.trajectory.final_record.energy;
            ea.total_cmp(&eb)
        })
        .map(|(i, _)| i)
        .expect("at least one restart");
    Ok(BestVqe { runs, best })
}

fn trajectory_table(records: &[StepRecord]) -> Table {
    let mut t = Table::new(&[
        "step",
        "energy",
        "energy_error",
        "variance",
        "force_theta_norm",
        "force_kappa_norm",
        "acceptance",
        "eta",
    ]);
    for r in records {
        t.row(vec![
            r.step.into(),
            r.energy.into(),
            r.energy_error.into(),
            r.variance.into(),
            r.force_theta_norm.into(),
            r.force_kappa_norm.into(),
            r.acceptance.into(),
            r.eta.into(),
        ]);
    }
    t
}

fn orbitals_table(rotation: &OrbitalRotation) -> Table {
    let mut t = Table::new(&["p", "q", "phi", "kappa"]);
    let phi = rotation.phi();
    let kappa = rotation.kappa();
    for p in 0..rotation.n_orb() {
        for q in 0..rotation.n_orb() {
            t.row(vec![p.into(), q.into(), phi[(p, q)].into(), kappa[(p, q)].into()]);
        }
    }
    t
}

fn record_json(r: &StepRecord) -> Value {
    object(vec![
        ("step", r.step.into()),
        ("energy", json_f64(r.energy)),
        ("energy_error", json_f64(r.energy_error)),
        ("variance", json_f64(r.variance)),
        ("force_theta_norm", json_f64(r.force_theta_norm)),
        ("force_kappa_norm", json_f64(r.force_kappa_norm)),
    ])
}

fn system_json(sys: &SystemInstance) -> Value {
    object(vec![
        ("label", sys.label.clone().into()),
        ("n_orb", sys.integrals.n_orb.into()),
        ("n_up", sys.sector.n_up.into()),
        ("n_down", sys.sector.n_down.into()),
    ])
}

fn error_of(energy: f64, exact: Option<f64>) -> Value {
    json_opt(exact.map(|e| energy - e))
}

fn provenance(exp: &Resolved) -> Value {
    let mut inputs = serde_json::Map::new();
    for i in &exp.inputs {
        inputs.insert(i.name.clone(), i.sha256.clone().into());
    }
    object(vec![
        ("config_sha256", exp.config_sha256.clone().into()),
        ("inputs", Value::Object(inputs)),
        ("code_version", code_version().into()),
    ])
}

fn optimizer_json(cfg: &OptimizerConfig) -> Value {
    object(vec![
        ("rule", cfg.rule.name().into()),
        ("eta", json_f64(cfg.eta)),
        ("kappa_eta", json_opt(cfg.kappa_eta)),
        ("steps", cfg.steps.into()),
        ("exact", cfg.exact.into()),
        ("rotations", cfg.kappa_enabled.into()),
    ])
}

fn checkpoint_vmc(exp: &Resolved, t: &Trajectory) -> Checkpoint {
    Checkpoint::Vmc {
        family: exp.ansatz.family.name().into(),
        alpha: exp.ansatz.alpha,
        step: t.records.len(),
        params: t.state.params.clone(),
        kappa: t.state.rotation.params().to_vec(),
    }
}

fn checkpoint_vqe(exp: &Resolved, t: &Trajectory) -> Checkpoint {
    Checkpoint::Vqe {
        layout: exp.vqe.layout.name().into(),
        layers: exp.vqe.layers,
        step: t.records.len(),
        params: t.state.params.clone(),
        kappa: t.state.rotation.params().to_vec(),
    }
}

struct Ctx<'a> {
    exp: &'a Resolved,
    threads: usize,
    outputs: OutputSet,
    unconverged: Option<String>,
}

impl Ctx<'_> {
    fn require(&mut self, converged: bool, what: &str) {
        if self.exp.require_convergence && !converged && self.unconverged.is_none() {
            self.unconverged = Some(format!("{what} did not converge"));
        }
    }

    fn summary(&mut self, fields: Vec<(&str, Value)>) {
        let mut all = vec![
            ("command", self.exp.command.name().into()),
            ("seed", self.exp.seed.into()),
            ("provenance", provenance(self.exp)),
        ];
        all.extend(fields);
        self.outputs.add("summary.json", json_bytes(&object(all)));
    }
}

/// Runs a resolved experiment in memory.
pub fn execute(exp: &Resolved, threads: usize) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let mut ctx = Ctx {
        exp,
        threads: threads.max(1),
        outputs: OutputSet::new(),
        unconverged: None,
    };
    match exp.command {
        Command::Exact => cmd_exact(&mut ctx)?,
        Command::Vmc => cmd_vmc(&mut ctx)?,
        Command::Vqe => cmd_vqe(&mut ctx)?,
        Command::Scan => cmd_scan(&mut ctx)?,
        Command::RestartStudy => cmd_restart_study(&mut ctx)?,
        Command::Rotate => cmd_rotate(&mut ctx)?,
        Command::Diagnostics => cmd_diagnostics(&mut ctx)?,
    }
    let timing = object(vec![
        ("wall_seconds", json_f64(start.elapsed().as_secs_f64())),
        ("threads", ctx.threads.into()),
    ]);
    ctx.outputs.add("timing.json", json_bytes(&timing));
    Ok(RunOutput {
        outputs: ctx.outputs,
        unconverged: ctx.unconverged,
    })
}

/// Loads `config`, runs it and commits the reports; returns the output directory.
pub fn run_experiment(
    config: &Path,
    overrides: &Overrides,
    threads: usize,
) -> Result<(PathBuf, RunOutput), RunError> {
    let exp = ExperimentConfig::load(config, overrides)?;
    let out = execute(&exp, threads)?;
    out.outputs.commit(&exp.output)?;
    Ok((exp.output, out))
}

fn cmd_exact(ctx: &mut Ctx) -> Result<(), RunError> {
    let sys = &ctx.exp.systems[0];
    let (e0, v, basis) = exact_ground(&sys.integrals, sys.sector)?;
    let pivot = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
    let n_modes = sys.sector.n_modes();
    let mut t = Table::new(&["index", "configuration", "amplitude"]);
    for (i, (c, a)) in basis.configs().iter().zip(&v).enumerate() {
        t.row(vec![i.into(), c.to_bitstring(n_modes).into(), (sign * a).into()]);
    }
    let reference = basis
        .index_of(sys.sector.reference())
        .map(|i| build_sector_hamiltonian(&sys.integrals, &basis).map(|h| h.get(i, i)))
        .transpose()?;
    ctx.outputs.add("ground_state.csv", t.into_bytes());
    ctx.summary(vec![
        ("system", system_json(sys)),
        ("dimension", basis.len().into()),
        ("exact_energy", json_f64(e0)),
        ("final_energy", json_f64(e0)),
        ("error", json_f64(0.0)),
        ("reference_energy", json_opt(reference)),
    ]);
    Ok(())
}

fn cmd_vmc(ctx: &mut Ctx) -> Result<(), RunError> {
    let exp = ctx.exp;
    let sys = &exp.systems[0];
    let exact = oracle_energy(sys)?;
    let out = run_vmc(sys, exp, &exp.optimizer)?;
    let t = &out.trajectory;
    ctx.require(t.converged, "the vmc run");
    ctx.outputs.add("trajectory.csv", trajectory_table(&t.records).into_bytes());
    ctx.outputs.add("orbitals.csv", orbitals_table(&t.state.rotation).into_bytes());
    ctx.outputs
        .add("checkpoint.toml", checkpoint_vmc(exp, t).to_toml().into_bytes());
    let e = t.final_record.energy;
    ctx.summary(vec![
        ("system", system_json(sys)),
        ("ansatz", exp.ansatz.family.name().into()),
        ("alpha", exp.ansatz.alpha.into()),
        ("active_space", active_json(exp)),
        ("optimizer", optimizer_json(&exp.optimizer)),
        ("final", record_json(&t.final_record)),
        ("final_energy", json_f64(e)),
        ("exact_energy", json_opt(exact)),
        ("error", error_of(e, exact)),
        ("steps", t.records.len().into()),
        ("converged", t.converged.into()),
    ]);
    Ok(())
}

fn active_json(exp: &Resolved) -> Value {
    match &exp.active {
        None => Value::Null,
        Some(spec) => object(vec![
            ("inactive_occupied", spec.inactive_occupied.clone().into()),
            ("active", spec.active.clone().into()),
            ("inactive_virtual", spec.inactive_virtual.clone().into()),
        ]),
    }
}

fn cmd_vqe(ctx: &mut Ctx) -> Result<(), RunError> {
    let exp = ctx.exp;
    if exp.resume.is_some() {
        return Err(RunError::Config(ConfigError::new(
            "optimizer.resume",
            "only the vmc command resumes from a checkpoint",
        )));
    }
    let sys = &exp.systems[0];
    let exact = oracle_energy(sys)?;
    let best = run_vqe_restarts(sys, exp, &exp.optimizer, ctx.threads)?;
    let mut rows = Table::new(&[
        "restart",
        "seed",
        "energy",
        "error",
        "steps",
        "converged",
        "sector_weight",
    ]);
    for (i, (seed, run)) in best.runs.iter().enumerate() {
        let e = run.trajectory.final_record.energy;
        rows.row(vec![
            i.into(),
            (*seed).into(),
            e.into(),
            exact.map(|x| e - x).into(),
            run.trajectory.records.len().into(),
            run.trajectory.converged.into(),
            run.sector_weight.into(),
        ]);
    }
    let run = best.best_run();
    let t = &run.trajectory;
    ctx.require(t.converged, "the best vqe restart");
    ctx.outputs.add("restarts.csv", rows.into_bytes());
    ctx.outputs.add("trajectory.csv", trajectory_table(&t.records).into_bytes());
    ctx.outputs.add("orbitals.csv", orbitals_table(&t.state.rotation).into_bytes());
    ctx.outputs
        .add("checkpoint.toml", checkpoint_vqe(exp, t).to_toml().into_bytes());
    let e = t.final_record.energy;
    ctx.summary(vec![
        ("system", system_json(sys)),
        ("layout", exp.vqe.layout.name().into()),
        ("layers", exp.vqe.layers.into()),
        ("restarts", exp.vqe.restarts.into()),
        ("best_restart", best.best.into()),
        ("optimizer", optimizer_json(&exp.optimizer)),
        ("final", record_json(&t.final_record)),
        ("final_energy", json_f64(e)),
        ("exact_energy", json_opt(exact)),
        ("error", error_of(e, exact)),
        ("sector_weight", json_f64(run.sector_weight)),
        ("steps", t.records.len().into()),
        ("converged", t.converged.into()),
    ]);
    Ok(())
}

/// One geometry of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub label: String,
    pub energy: f64,
    pub exact: Option<f64>,
    pub steps: usize,
    pub converged: bool,
}

pub fn scan_point(
    sys: &SystemInstance,
    exp: &Resolved,
    method: ScanMethod,
) -> Result<ScanRow, RunError> {
    let exact = oracle_energy(sys)?;
    let (energy, steps, converged) = match method {
        ScanMethod::Exact => {
            let e = exact.ok_or_else(|| RunError::Capacity(format!("{}: sector too large", sys.label)))?;
            (e, 0, true)
        }
        ScanMethod::Vmc => {
            let t = run_vmc(sys, exp, &exp.optimizer)?.trajectory;
            (t.final_record.energy, t.records.len(), t.converged)
        }
        ScanMethod::Vqe => {
            let best = run_vqe_restarts(sys, exp, &exp.optimizer, 1)?;
            let t = &best.best_run().trajectory;
            (t.final_record.energy, t.records.len(), t.converged)
        }
    };
    Ok(ScanRow {
        label: sys.label.clone(),
        energy,
        exact,
        steps,
        converged,
    })
}

fn cmd_scan(ctx: &mut Ctx) -> Result<(), RunError> {
    let exp = ctx.exp;
    let rows = parallel_map(exp.systems.len(), ctx.threads, |i| {
        scan_point(&exp.systems[i], exp, exp.scan_method)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(&["label", "energy", "exact_energy", "error", "steps", "converged"]);
    for r in &rows {
        t.row(vec![
            r.label.clone().into(),
            r.energy.into(),
            r.exact.into(),
            r.exact.map(|x| r.energy - x).into(),
            r.steps.into(),
            r.converged.into(),
        ]);
        ctx.require(r.converged, &format!("scan point {}", r.label));
    }
    ctx.outputs.add("scan.csv", t.into_bytes());
    let energies: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let argmax = energies
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    let second: Vec<f64> = energies
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .collect();
    ctx.summary(vec![
        ("method", exp.scan_method.name().into()),
        ("labels", rows.iter().map(|r| r.label.clone()).collect::<Vec<_>>().into()),
        ("energies", json_vec(&energies)),
        ("maximum_at", rows[argmax].label.clone().into()),
        ("second_differences", json_vec(&second)),
    ]);
    Ok(())
}

pub fn restart_rows(
    sys: &SystemInstance,
    reference: f64,
    plan: &RestartPlan,
    cfg: &OptimizerConfig,
    threads: usize,
) -> Result<Vec<RestartRow>, RunError> {
    if plan.n_inits < 2 {
        return Err(RunError::Config(ConfigError::new("vqe.n_inits", "must be at least 2")));
    }
    parallel_map(plan.n_inits, threads, |i| {
        restart_pair(&sys.integrals, &sys.sector, reference, plan, i, cfg).map_err(RunError::from)
    })
    .into_iter()
    .collect()
}

fn cmd_restart_study(ctx: &mut Ctx) -> Result<(), RunError> {
    let exp = ctx.exp;
    let sys = &exp.systems[0];
    let reference = oracle_energy(sys)?
        .ok_or_else(|| RunError::Capacity("the restart study needs the exact energy".into()))?;
    let plan = RestartPlan {
        layout: exp.vqe.layout,
        layers: exp.vqe.layers,
        n_inits: exp.vqe.n_inits,
        seed: exp.seed,
    };
    let rows = restart_rows(sys, reference, &plan, &exp.optimizer, ctx.threads)?;
    let mut t = Table::new(&[
        "init_id",
        "seed",
        "error_rotated",
        "error_fixed",
        "iterations_rotated",
        "iterations_fixed",
        "sector_weight_rotated",
        "sector_weight_fixed",
    ]);
    for r in &rows {
        t.row(vec![
            r.init_id.into(),
            r.seed.into(),
            r.error_rotated.into(),
            r.error_fixed.into(),
            r.iterations_rotated.into(),
            r.iterations_fixed.into(),
            r.sector_weight_rotated.into(),
            r.sector_weight_fixed.into(),
        ]);
    }
    let on: Vec<f64> = rows.iter().map(|r| r.error_rotated).collect();
    let off: Vec<f64> = rows.iter().map(|r| r.error_fixed).collect();
    let th = &exp.vqe.thresholds;
    let (f_on, f_off) = (cumulative_fraction(&on, th), cumulative_fraction(&off, th));
    let mut c = Table::new(&["threshold", "fraction_rotated", "fraction_fixed"]);
    for i in 0..th.len() {
        c.row(vec![th[i].into(), f_on[i].into(), f_off[i].into()]);
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    ctx.outputs.add("restarts.csv", t.into_bytes());
    ctx.outputs.add("cumulative.csv", c.into_bytes());
    ctx.summary(vec![
        ("system", system_json(sys)),
        ("exact_energy", json_f64(reference)),
        ("layout", exp.vqe.layout.name().into()),
        ("layers", exp.vqe.layers.into()),
        ("n_inits", rows.len().into()),
        ("optimizer", optimizer_json(&exp.optimizer)),
        ("thresholds", json_vec(th)),
        ("fraction_rotated", json_vec(&f_on)),
        ("fraction_fixed", json_vec(&f_off)),
        ("best_error_rotated", json_f64(min(&on))),
        ("best_error_fixed", json_f64(min(&off))),
    ]);
    Ok(())
}

fn cmd_rotate(ctx: &mut Ctx) -> Result<(), RunError> {
    let exp = ctx.exp;
    let sys = &exp.systems[0];
    let n = sys.integrals.n_orb;
    let kappa = match &exp.rotate.kappa {
        Some(k) => k.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
            let s = exp.rotate.scale;
            (0..n_params(n))
                .map(|_| if s > 0.0 { rng.random_range(-s..s) } else { 0.0 })
                .collect()
        }
    };
    let rotation = OrbitalRotation::from_params(n, kappa)?;
    let rotated = rotation.rotate(&sys.integrals);
    let before = oracle_energy(sys)?;
    let after = oracle_energy(&SystemInstance {
        label: sys.label.clone(),
        integrals: rotated.clone(),
        sector: sys.sector,
    })?;
    let header = FcidumpHeader::new(
        n,
        sys.sector.n_electrons(),
        sys.sector.n_up as i64 - sys.sector.n_down as i64,
    );
    let dump = Fcidump {
        header,
        integrals: rotated,
    };
    ctx.outputs
        .add("rotated.fcidump", fcidump::write_string(&dump).into_bytes());
    ctx.outputs.add("orbitals.csv", orbitals_table(&rotation).into_bytes());
    let mut k = Table::new(&["k", "p", "q", "kappa"]);
    for (i, v) in rotation.params().iter().enumerate() {
        let (p, q) = param_pair(i);
        k.row(vec![i.into(), p.into(), q.into(), (*v).into()]);
    }
    ctx.outputs.add("kappa.csv", k.into_bytes());
    ctx.summary(vec![
        ("system", system_json(sys)),
        ("kappa", json_vec(rotation.params())),
        ("orthogonality_defect", json_f64(rotation.orthogonality_defect())),
        ("exact_energy", json_opt(before)),
        ("rotated_exact_energy", json_opt(after)),
        (
            "energy_difference",
            json_opt(before.zip(after).map(|(a, b)| b - a)),
        ),
    ]);
    Ok(())
}

/// Pearson statistic over bins with at least [`CHI_SQUARE_MIN_EXPECTED`]
/// expected counts, the sparser bins pooled into one; returns the statistic
/// and the degrees of freedom.
pub fn chi_square(counts: &[u64], probabilities: &[f64]) -> (f64, usize) {
    let total: u64 = counts.iter().sum();
    let total = total as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probabilities) {
        let expected = p * total;
        if expected >= CHI_SQUARE_MIN_EXPECTED {
            stat += (c as f64 - expected).powi(2) / expected;
            bins += 1;
        } else {
            pooled_obs += c as f64;
            pooled_exp += expected;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    (stat, bins.saturating_sub(1))
}

fn cmd_diagnostics(ctx: &mut Ctx) -> Result<(), RunError> {
    let exp = ctx.exp;
    let sys = &exp.systems[0];
    let out = run_vmc(sys, exp, &exp.optimizer)?;
    let state = &out.trajectory.state;
    let params = &state.params;
    let sector = out.problem.sector;
    let scfg = exp.optimizer.sampler;
    let batches = run_chains(&out.network, params, &sector, &scfg)?;
    let samples = WeightedSamples::from_batches(&batches)?;
    let table = LocalEnergyTable::new(&out.problem.variational_integrals(&state.rotation));
    let locals = local_estimates(&out.network, params, &table, &samples, false)?;
    let series: Vec<f64> = samples.sequence.iter().map(|&k| locals[k].e_loc.re).collect();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let error = batch_means_error(&samples.sequence, |k| locals[k].e_loc.re);
    let tau = autocorrelation_time(&series);

    let mut chains = Table::new(&["chain", "samples", "proposed", "accepted", "acceptance"]);
    for b in &batches {
        chains.row(vec![
            b.chain_id.into(),
            b.len().into(),
            b.proposed.into(),
            b.accepted.into(),
            b.acceptance().into(),
        ]);
    }
    let n_modes = sector.n_modes();
    let mut trace = Table::new(&["chain", "sweep", "configuration", "local_energy"]);
    let mut pos = 0;
    for b in &batches {
        for (c, sweep) in b.samples.iter().zip(&b.sweeps) {
            trace.row(vec![
                b.chain_id.into(),
                (*sweep).into(),
                c.to_bitstring(n_modes).into(),
                series[pos].into(),
            ]);
            pos += 1;
        }
    }
    ctx.outputs.add("chains.csv", chains.into_bytes());
    ctx.outputs.add("samples.csv", trace.into_bytes());

    let mut fields = vec![
        ("system", system_json(sys)),
        ("ansatz", exp.ansatz.family.name().into()),
        ("optimized_energy", json_f64(out.trajectory.final_record.energy)),
        ("samples", series.len().into()),
        ("sampled_energy", json_f64(mean)),
        ("sampled_energy_error", json_f64(error)),
        ("autocorrelation_time", json_f64(tau)),
    ];
    let basis = SectorBasis::with_limit(sector, DISTRIBUTION_LIMIT);
    if let Ok(basis) = basis {
        let dist = exact_distribution(&out.network, params, &basis)?;
        let ws = WeightedSamples::from_distribution(&basis, &dist);
        let exact_locals = local_estimates(&out.network, params, &table, &ws, false)?;
        let e_state: f64 = exact_locals
            .iter()
            .zip(&ws.weights)
            .map(|(l, w)| l.e_loc.re * w)
            .sum();
        let mut counts = vec![0u64; basis.len()];
        for b in &batches {
            for (i, c) in b.histogram(&basis).into_iter().enumerate() {
                counts[i] += c;
            }
        }
        let total = counts.iter().sum::<u64>() as f64;
        let mut d = Table::new(&["index", "configuration", "probability", "frequency", "count"]);
        for (i, c) in basis.configs().iter().enumerate() {
            d.row(vec![
                i.into(),
                c.to_bitstring(n_modes).into(),
                dist.probabilities[i].into(),
                (counts[i] as f64 / total).into(),
                counts[i].into(),
            ]);
        }
        ctx.outputs.add("distribution.csv", d.into_bytes());
        let (stat, dof) = chi_square(&counts, &dist.probabilities);
        fields.push(("state_energy", json_f64(e_state)));
        fields.push(("chi_square", json_f64(stat)));
        fields.push(("chi_square_dof", dof.into()));
    }
    ctx.summary(fields);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        for threads in [1, 2, 5] {
            let v = parallel_map(7, threads, |i| i * i);
            assert_eq!(v, vec![0, 1, 4, 9, 16, 25, 36]);
        }
        assert!(parallel_map(0, 3, |i| i).is_empty());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            RunError::Runtime(String::new()).exit_code(),
            RunError::Config(ConfigError::new("k", "m")).exit_code(),
            RunError::Capacity(String::new()).exit_code(),
            RunError::Convergence(String::new()).exit_code(),
        ];
        assert_eq!(codes, [1, 2, 3, 4]);
        let e: RunError = orbopt_core::Error::Capacity {
            what: "x",
            requested: 2,
            limit: 1,
        }
        .into();
        assert_eq!(e.exit_code(), 3);
        let e: RunError = orbopt_core::Error::NoConvergence { iterations: 3 }.into();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn chi_square_pools_sparse_bins() {
        let (stat, dof) = chi_square(&[50, 50, 0], &[0.5, 0.5, 0.0]);
        assert_eq!(stat, 0.0);
        assert_eq!(dof, 1);
        let (stat, dof) = chi_square(&[60, 40, 1, 1], &[0.5, 0.49, 0.005, 0.005]);
        assert!(stat > 0.0);
        assert_eq!(dof, 2);
    }
}
