//! Experiment configuration files.
//!
//! A config is TOML with nested blocks; unknown keys anywhere are rejected.
//! [`ExperimentConfig::parse`] checks syntax and types, and
//! [`ExperimentConfig::resolve`] validates values, loads the integral
//! sources and produces a [`Resolved`] experiment ready to run.

use std::path::{Path, PathBuf};

use orbopt_core::active_space::ActiveSpaceSpec;
use orbopt_core::ansatz::Family;
use orbopt_core::fock::Sector;
use orbopt_core::integrals::{hubbard_ring, HubbardSpec, IntegralSet};
use orbopt_core::optimizer::{OptimizerConfig, UpdateRule};
use orbopt_core::sampler::SamplerConfig;
use orbopt_core::vqe::CascadeLayout;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::fcidump;

/// An invalid configuration, attributed to a dotted key path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Exact,
    Vmc,
    Vqe,
    Scan,
    RestartStudy,
    Rotate,
    Diagnostics,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Exact,
        Command::Vmc,
        Command::Vqe,
        Command::Scan,
        Command::RestartStudy,
        Command::Rotate,
        Command::Diagnostics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Exact => "exact",
            Command::Vmc => "vmc",
            Command::Vqe => "vqe",
            Command::Scan => "scan",
            Command::RestartStudy => "restart-study",
            Command::Rotate => "rotate",
            Command::Diagnostics => "diagnostics",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Methods a scan can run at each geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMethod {
    Exact,
    Vmc,
    Vqe,
}

impl ScanMethod {
    pub fn name(self) -> &'static str {
        match self {
            ScanMethod::Exact => "exact",
            ScanMethod::Vmc => "vmc",
            ScanMethod::Vqe => "vqe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub system: SystemBlock,
    #[serde(default)]
    pub ansatz: AnsatzBlock,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
    #[serde(default)]
    pub sampler: SamplerBlock,
    pub active_space: Option<ActiveSpaceBlock>,
    #[serde(default)]
    pub vqe: VqeBlock,
    #[serde(default)]
    pub scan: ScanBlock,
    #[serde(default)]
    pub rotate: RotateBlock,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// FCIDUMP file, relative to the config file.
    pub fcidump: Option<PathBuf>,
    pub hubbard: Option<HubbardBlock>,
    /// FCIDUMP files of a scan, in scan order.
    pub scan: Option<Vec<PathBuf>>,
    /// Electron counts; taken from the FCIDUMP header when absent.
    pub n_up: Option<usize>,
    pub n_down: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubbardBlock {
    pub sites: usize,
    #[serde(default = "one")]
    pub t: f64,
    pub u: f64,
    #[serde(default = "yes")]
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnsatzBlock {
    pub family: String,
    pub alpha: usize,
    pub param_scale: f64,
    pub output_scale: bool,
}

impl Default for AnsatzBlock {
    fn default() -> Self {
        AnsatzBlock {
            family: "rbm".into(),
            alpha: 1,
            param_scale: 0.01,
            output_scale: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerBlock {
    pub rule: String,
    pub eta: f64,
    pub eta_decay: f64,
    pub shift: f64,
    pub steps: usize,
    pub exact: bool,
    pub rotations: bool,
    pub kappa_eta: Option<f64>,
    /// Half-width of the uniform initial `κ` of network runs with rotations.
    pub kappa_init_scale: f64,
    pub train_state: bool,
    pub window: usize,
    pub tolerance: f64,
    pub backtracking: bool,
    /// Exit with the convergence status when the run does not settle.
    pub require_convergence: bool,
    /// Checkpoint to start from, relative to the config file.
    pub resume: Option<PathBuf>,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        OptimizerBlock {
            rule: d.rule.name().into(),
            eta: d.eta,
            eta_decay: d.eta_decay,
            shift: d.shift,
            steps: d.steps,
            exact: d.exact,
            rotations: d.kappa_enabled,
            kappa_eta: d.kappa_eta,
            kappa_init_scale: 0.0,
            train_state: d.theta_enabled,
            window: d.window,
            tolerance: d.tolerance,
            backtracking: d.backtracking,
            require_convergence: false,
            resume: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerBlock {
    pub n_sweeps: usize,
    pub burn_in_fraction: f64,
    pub double_hop_fraction: f64,
    pub n_chains: usize,
    pub thin: usize,
    pub max_init_attempts: usize,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerBlock {
            n_sweeps: d.n_sweeps,
            burn_in_fraction: d.burn_in_fraction,
            double_hop_fraction: d.double_hop_fraction,
            n_chains: d.n_chains,
            thin: d.thin,
            max_init_attempts: d.max_init_attempts,
        }
    }
}

/// Either a window (`n_core`, `n_active`) or explicit orbital lists.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveSpaceBlock {
    pub n_core: Option<usize>,
    pub n_active: Option<usize>,
    pub inactive_occupied: Option<Vec<usize>>,
    pub active: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VqeBlock {
    pub layout: String,
    pub layers: usize,
    /// Independent random starts of the `vqe` command; the lowest is kept.
    pub restarts: usize,
    /// Paired initializations of the `restart-study` command.
    pub n_inits: usize,
    /// Error thresholds (Ha) of the cumulative table.
    pub thresholds: Vec<f64>,
}

impl Default for VqeBlock {
    fn default() -> Self {
        VqeBlock {
            layout: CascadeLayout::default().name().into(),
            layers: 3,
            restarts: 8,
            n_inits: 32,
            thresholds: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanBlock {
    pub method: String,
}

impl Default for ScanBlock {
    fn default() -> Self {
        ScanBlock {
            method: "vmc".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotateBlock {
    /// Explicit `κ` parameters; drawn at random when absent.
    pub kappa: Option<Vec<f64>>,
    /// Half-width of the uniform distribution of random `κ` parameters.
    pub scale: f64,
}

impl Default for RotateBlock {
    fn default() -> Self {
        RotateBlock {
            kappa: None,
            scale: 0.5,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub exact_mode: bool,
}

/// One Hamiltonian with its electron sector.
#[derive(Debug, Clone)]
pub struct SystemInstance {
    pub label: String,
    pub integrals: IntegralSet,
    pub sector: Sector,
}

/// A hashed input file, named as written in the config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputHash {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct AnsatzSettings {
    pub family: Family,
    pub alpha: usize,
    pub param_scale: f64,
    pub output_scale: bool,
}

#[derive(Debug, Clone)]
pub struct VqeSettings {
    pub layout: CascadeLayout,
    pub layers: usize,
    pub restarts: usize,
    pub n_inits: usize,
    pub thresholds: Vec<f64>,
}

/// A validated experiment with its inputs loaded.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub seed: u64,
    pub output: PathBuf,
    /// One entry, or one per geometry for a scan.
    pub systems: Vec<SystemInstance>,
    pub ansatz: AnsatzSettings,
    pub optimizer: OptimizerConfig,
    pub kappa_init_scale: f64,
    pub require_convergence: bool,
    pub resume: Option<crate::checkpoint::Checkpoint>,
    pub active: Option<ActiveSpaceSpec>,
    pub vqe: VqeSettings,
    pub scan_method: ScanMethod,
    pub rotate: RotateBlock,
    pub config_sha256: String,
    pub inputs: Vec<InputHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn check(ok: bool, key: &str, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(key, message))
    }
}

fn positive(x: f64, key: &str) -> Result<(), ConfigError> {
    check(x > 0.0 && x.is_finite(), key, "must be a positive number")
}

fn non_negative(x: f64, key: &str) -> Result<(), ConfigError> {
    check(x >= 0.0 && x.is_finite(), key, "must be a non-negative number")
}

/// Best-effort dotted key path for a TOML parse error.
fn toml_error(err: &toml::de::Error, text: &str) -> ConfigError {
    let message = err.message().to_string();
    let mut key = String::from("<config>");
    if let Some(field) = message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
    {
        key = field.to_string();
    } else if let Some(field) = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
    {
        key = field.to_string();
    } else if let Some(span) = err.span() {
        let line = text[..span.start].rsplit('\n').next().unwrap_or("");
        let full = text[span.start - line.len()..]
            .split('\n')
            .next()
            .unwrap_or("");
        if let Some((k, _)) = full.split_once('=') {
            key = k.trim().to_string();
        }
    }
    if let Some(span) = err.span() {
        let section = text[..span.start]
            .lines()
            .rev()
            .find_map(|l| {
                let l = l.trim();
                l.strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .map(|s| s.trim().to_string())
            });
        if let Some(section) = section {
            if !key.starts_with('<') && !key.contains('.') && key != section {
                key = format!("{section}.{key}");
            }
        }
    }
    ConfigError::new(key, message)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| toml_error(&e, text))
    }

    /// Reads and resolves `path`; relative paths inside are taken from its directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved, ConfigError> {
        let bytes = std::fs::read(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| ConfigError::new("--config", "config is not valid UTF-8"))?;
        let cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut resolved = cfg.resolve(base, overrides)?;
        resolved.config_sha256 = sha256_hex(&bytes);
        Ok(resolved)
    }

    pub fn resolve(&self, base: &Path, overrides: &Overrides) -> Result<Resolved, ConfigError> {
        let command = Command::from_name(&self.command).ok_or_else(|| {
            let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
            ConfigError::new(
                "command",
                format!("unknown command '{}', expected one of {}", self.command, names.join(", ")),
            )
        })?;
        let seed = overrides.seed.unwrap_or(self.seed);
        let output = overrides
            .output
            .clone()
            .or_else(|| self.output.as_ref().map(|o| base.join(o)))
            .ok_or_else(|| ConfigError::new("output", "no output directory in the config or on the command line"))?;

        let mut inputs = Vec::new();
        let systems = self.resolve_systems(command, base, &mut inputs)?;
        let ansatz = self.resolve_ansatz()?;
        let mut optimizer = self.resolve_optimizer(seed)?;
        if overrides.exact_mode {
            optimizer.exact = true;
        }
        let resume = match &self.optimizer.resume {
            Some(p) => {
                let path = base.join(p);
                let bytes = std::fs::read(&path).map_err(|e| {
                    ConfigError::new("optimizer.resume", format!("{}: {e}", path.display()))
                })?;
                inputs.push(InputHash {
                    name: p.display().to_string(),
                    sha256: sha256_hex(&bytes),
                });
                let text = String::from_utf8_lossy(&bytes);
                Some(
                    crate::checkpoint::Checkpoint::parse(&text)
                        .map_err(|e| ConfigError::new("optimizer.resume", e.to_string()))?,
                )
            }
            None => None,
        };
        let active = self.resolve_active(&systems)?;
        let vqe = self.resolve_vqe()?;
        let scan_method = match self.scan.method.as_str() {
            "exact" => ScanMethod::Exact,
            "vmc" => ScanMethod::Vmc,
            "vqe" => ScanMethod::Vqe,
            other => {
                return Err(ConfigError::new(
                    "scan.method",
                    format!("unknown method '{other}', expected exact, vmc or vqe"),
                ))
            }
        };
        non_negative(self.rotate.scale, "rotate.scale")?;
        if let Some(k) = &self.rotate.kappa {
            let n = systems[0].integrals.n_orb;
            check(
                k.len() == orbopt_core::rotation::n_params(n),
                "rotate.kappa",
                &format!("needs n(n-1)/2 = {} entries", orbopt_core::rotation::n_params(n)),
            )?;
            check(k.iter().all(|x| x.is_finite()), "rotate.kappa", "entries must be finite")?;
        }
        if active.is_some() && matches!(command, Command::Vqe | Command::RestartStudy) {
            return Err(ConfigError::new(
                "active_space",
                "circuit commands act on the full orbital space",
            ));
        }
        if active.is_some() && command == Command::Scan && scan_method == ScanMethod::Vqe {
            return Err(ConfigError::new(
                "active_space",
                "circuit commands act on the full orbital space",
            ));
        }
        Ok(Resolved {
            command,
            seed,
            output,
            systems,
            ansatz,
            optimizer,
            kappa_init_scale: self.optimizer.kappa_init_scale,
            require_convergence: self.optimizer.require_convergence,
            resume,
            active,
            vqe,
            scan_method,
            rotate: self.rotate.clone(),
            config_sha256: String::new(),
            inputs,
        })
    }

    fn resolve_systems(
        &self,
        command: Command,
        base: &Path,
        inputs: &mut Vec<InputHash>,
    ) -> Result<Vec<SystemInstance>, ConfigError> {
        let s = &self.system;
        let sources =
            s.fcidump.is_some() as usize + s.hubbard.is_some() as usize + s.scan.is_some() as usize;
        check(
            sources == 1,
            "system",
            "exactly one of fcidump, hubbard or scan must be given",
        )?;
        check(
            (command == Command::Scan) == s.scan.is_some(),
            "system.scan",
            "a scan list is required by, and only allowed for, the scan command",
        )?;
        let mut load = |p: &PathBuf, key: &str| -> Result<SystemInstance, ConfigError> {
            let path = base.join(p);
            let bytes = std::fs::read(&path)
                .map_err(|e| ConfigError::new(key, format!("{}: {e}", path.display())))?;
            inputs.push(InputHash {
                name: p.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
            let text = String::from_utf8_lossy(&bytes);
            let dump = fcidump::parse(&text)
                .map_err(|e| ConfigError::new(key, format!("{}: {e}", path.display())))?;
            let header_sector = dump
                .header
                .sector()
                .map_err(|e| ConfigError::new(key, e.to_string()))?;
            let sector = self.sector(dump.integrals.n_orb, Some(header_sector))?;
            let label = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(SystemInstance {
                label,
                integrals: dump.integrals,
                sector,
            })
        };
        if let Some(p) = &s.fcidump {
            return Ok(vec![load(p, "system.fcidump")?]);
        }
        if let Some(list) = &s.scan {
            check(!list.is_empty(), "system.scan", "the scan list is empty")?;
            return list.iter().map(|p| load(p, "system.scan")).collect();
        }
        let h = s.hubbard.as_ref().expect("one source");
        check(h.sites >= 2, "system.hubbard.sites", "needs at least two sites")?;
        check(h.t.is_finite(), "system.hubbard.t", "must be finite")?;
        check(h.u.is_finite(), "system.hubbard.u", "must be finite")?;
        let spec = HubbardSpec::new(h.sites, h.t, h.u, h.periodic)
            .map_err(|e| ConfigError::new("system.hubbard", e.to_string()))?;
        let sector = self.sector(h.sites, None)?;
        Ok(vec![SystemInstance {
            label: format!("hubbard{}_u{}", h.sites, h.u),
            integrals: hubbard_ring(&spec),
            sector,
        }])
    }

    fn sector(&self, n_orb: usize, header: Option<Sector>) -> Result<Sector, ConfigError> {
        let s = &self.system;
        let (up, down) = match (s.n_up, s.n_down, header) {
            (Some(u), Some(d), _) => (u, d),
            (None, None, Some(h)) => (h.n_up, h.n_down),
            (None, None, None) => {
                return Err(ConfigError::new(
                    "system.n_up",
                    "electron counts are required for a Hubbard system",
                ))
            }
            (None, Some(_), _) => {
                return Err(ConfigError::new("system.n_up", "give both n_up and n_down"))
            }
            (Some(_), None, _) => {
                return Err(ConfigError::new("system.n_down", "give both n_up and n_down"))
            }
        };
        Sector::new(n_orb, up, down).map_err(|e| ConfigError::new("system.n_up", e.to_string()))
    }

    fn resolve_ansatz(&self) -> Result<AnsatzSettings, ConfigError> {
        let a = &self.ansatz;
        let family = Family::from_name(&a.family).ok_or_else(|| {
            ConfigError::new(
                "ansatz.family",
                format!(
                    "unknown family '{}', expected ffn, rbm, slater-nn-jastrow or nn-backflow",
                    a.family
                ),
            )
        })?;
        check(a.alpha >= 1, "ansatz.alpha", "must be at least 1")?;
        non_negative(a.param_scale, "ansatz.param_scale")?;
        Ok(AnsatzSettings {
            family,
            alpha: a.alpha,
            param_scale: a.param_scale,
            output_scale: a.output_scale,
        })
    }

    fn resolve_optimizer(&self, seed: u64) -> Result<OptimizerConfig, ConfigError> {
        let o = &self.optimizer;
        let rule = UpdateRule::from_name(&o.rule).ok_or_else(|| {
            ConfigError::new(
                "optimizer.rule",
                format!(
                    "unknown rule '{}', expected natural-gradient, plain-gradient or lbfgs",
                    o.rule
                ),
            )
        })?;
        positive(o.eta, "optimizer.eta")?;
        check(
            o.eta_decay > 0.0 && o.eta_decay <= 1.0,
            "optimizer.eta_decay",
            "must lie in (0, 1]",
        )?;
        non_negative(o.shift, "optimizer.shift")?;
        non_negative(o.tolerance, "optimizer.tolerance")?;
        non_negative(o.kappa_init_scale, "optimizer.kappa_init_scale")?;
        if let Some(k) = o.kappa_eta {
            non_negative(k, "optimizer.kappa_eta")?;
        }
        let p = &self.sampler;
        check(p.n_sweeps >= 1, "sampler.n_sweeps", "must be at least 1")?;
        check(
            (0.0..1.0).contains(&p.burn_in_fraction),
            "sampler.burn_in_fraction",
            "must lie in [0, 1)",
        )?;
        check(
            (0.0..=1.0).contains(&p.double_hop_fraction),
            "sampler.double_hop_fraction",
            "must lie in [0, 1]",
        )?;
        check(p.n_chains >= 1, "sampler.n_chains", "must be at least 1")?;
        check(p.thin >= 1, "sampler.thin", "must be at least 1")?;
        check(p.max_init_attempts >= 1, "sampler.max_init_attempts", "must be at least 1")?;
        Ok(OptimizerConfig {
            eta: o.eta,
            eta_decay: o.eta_decay,
            shift: o.shift,
            steps: o.steps,
            exact: o.exact,
            sampler: SamplerConfig {
                n_sweeps: p.n_sweeps,
                burn_in_fraction: p.burn_in_fraction,
                double_hop_fraction: p.double_hop_fraction,
                n_chains: p.n_chains,
                thin: p.thin,
                seed,
                max_init_attempts: p.max_init_attempts,
            },
            kappa_enabled: o.rotations,
            kappa_eta: o.kappa_eta,
            theta_enabled: o.train_state,
            rule,
            seed,
            window: o.window,
            tolerance: o.tolerance,
            backtracking: o.backtracking,
        })
    }

    fn resolve_active(
        &self,
        systems: &[SystemInstance],
    ) -> Result<Option<ActiveSpaceSpec>, ConfigError> {
        let Some(a) = &self.active_space else {
            return Ok(None);
        };
        let n = systems[0].integrals.n_orb;
        let spec = match (a.n_core, a.n_active, &a.inactive_occupied, &a.active) {
            (Some(core), Some(act), None, None) => {
                check(
                    core + act <= n,
                    "active_space.n_active",
                    &format!("n_core + n_active exceeds the {n} orbitals"),
                )?;
                ActiveSpaceSpec::window(n, core, act)
            }
            (None, None, occ, Some(act)) => {
                let occ = occ.clone().unwrap_or_default();
                let mut used = vec![false; n];
                for (&o, key) in occ
                    .iter()
                    .map(|o| (o, "active_space.inactive_occupied"))
                    .chain(act.iter().map(|o| (o, "active_space.active")))
                {
                    check(o < n, key, &format!("orbital {o} out of range (n = {n})"))?;
                    check(!used[o], key, &format!("orbital {o} listed twice"))?;
                    used[o] = true;
                }
                let virt = (0..n).filter(|&o| !used[o]).collect();
                ActiveSpaceSpec {
                    inactive_occupied: occ,
                    active: act.clone(),
                    inactive_virtual: virt,
                }
            }
            _ => {
                return Err(ConfigError::new(
                    "active_space",
                    "give either n_core and n_active, or active (with optional inactive_occupied)",
                ))
            }
        };
        for sys in systems {
            orbopt_core::active_space::validate_spec(&spec, &sys.sector)
                .map_err(|e| ConfigError::new("active_space", e.to_string()))?;
        }
        Ok(Some(spec))
    }

    fn resolve_vqe(&self) -> Result<VqeSettings, ConfigError> {
        let v = &self.vqe;
        let layout = CascadeLayout::from_name(&v.layout).ok_or_else(|| {
            ConfigError::new(
                "vqe.layout",
                format!("unknown layout '{}', expected mirrored or ladder", v.layout),
            )
        })?;
        check(v.layers >= 1, "vqe.layers", "must be at least 1")?;
        check(v.restarts >= 1, "vqe.restarts", "must be at least 1")?;
        check(v.n_inits >= 2, "vqe.n_inits", "must be at least 2")?;
        check(
            v.thresholds.iter().all(|t| t.is_finite() && *t >= 0.0),
            "vqe.thresholds",
            "must be non-negative numbers",
        )?;
        Ok(VqeSettings {
            layout,
            layers: v.layers,
            restarts: v.restarts,
            n_inits: v.n_inits,
            thresholds: v.thresholds.clone(),
        })
    }
}
