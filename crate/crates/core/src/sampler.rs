//! Metropolis sampling of `|ψ(n)|²` within a fixed sector, and exact
//! enumeration of the same distribution on small sectors.
//!
//! Each chain owns a `ChaCha8Rng` seeded from the run seed with its chain id
//! as the stream number, so chains are reproducible and independent.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::fock::{spin_mask, Configuration, Sector, SectorBasis, Spin};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub n_sweeps: usize,
    /// Discarded leading fraction of sweeps.
    pub burn_in_fraction: f64,
    /// Probability that a proposal is two successive hops.
    pub double_hop_fraction: f64,
    pub n_chains: usize,
    /// Sweeps between recorded samples.
    pub thin: usize,
    pub seed: u64,
    /// Random restarts tried when the reference configuration is a node.
    pub max_init_attempts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_sweeps: 1000,
            burn_in_fraction: 0.1,
            double_hop_fraction: 0.1,
            n_chains: 1,
            thin: 1,
            seed: 0,
            max_init_attempts: 1000,
        }
    }
}

/// Moves one random electron of a spin species chosen with probability
/// proportional to its electron count to a random empty orbital of the same
/// species. Full or empty species leave the configuration unchanged.
pub fn propose_hop<R: Rng>(sector: &Sector, config: Configuration, rng: &mut R) -> Configuration {
    let n_el = sector.n_electrons();
    if n_el == 0 {
        return config;
    }
    let spin = if rng.random_range(0..n_el) < sector.n_up {
        Spin::Up
    } else {
        Spin::Down
    };
    let mask = spin_mask(sector.n_orb, spin);
    let occ = config.bits() & mask;
    let empty = !config.bits() & mask;
    let n_occ = occ.count_ones();
    let n_empty = empty.count_ones();
    if n_occ == 0 || n_empty == 0 {
        return config;
    }
    let from = nth_set_bit(occ, rng.random_range(0..n_occ));
    let to = nth_set_bit(empty, rng.random_range(0..n_empty));
    Configuration(config.bits() ^ (1 << from) ^ (1 << to))
}

/// Symmetric proposal: a single hop, or with probability `double_fraction`
/// two successive hops.
pub fn propose_move<R: Rng>(
    sector: &Sector,
    config: Configuration,
    double_fraction: f64,
    rng: &mut R,
) -> Configuration {
    let once = propose_hop(sector, config, rng);
    if double_fraction > 0.0 && rng.random::<f64>() < double_fraction {
        propose_hop(sector, once, rng)
    } else {
        once
    }
}

fn nth_set_bit(mut bits: u64, n: u32) -> usize {
    for _ in 0..n {
        bits &= bits - 1;
    }
    bits.trailing_zeros() as usize
}

/// Uniformly random member of the sector.
pub fn random_configuration<R: Rng>(sector: &Sector, rng: &mut R) -> Configuration {
    let mut bits = 0u64;
    for spin in Spin::BOTH {
        let mut orbs: Vec<usize> = (0..sector.n_orb).collect();
        for k in 0..sector.n_spin(spin) {
            let j = rng.random_range(k..orbs.len());
            orbs.swap(k, j);
            bits |= 1 << crate::fock::mode(sector.n_orb, orbs[k], spin);
        }
    }
    Configuration(bits)
}

/// Live state of one Markov chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub current: Configuration,
    pub log_psi: Complex64,
    pub rng: ChaCha8Rng,
    pub proposed: u64,
    pub accepted: u64,
}

impl ChainState {
    /// Starts at the sector reference, falling back to random members when it
    /// is a node of the ansatz.
    pub fn start<A: Ansatz + ?Sized>(
        ansatz: &A,
        params: &[f64],
        sector: &Sector,
        seed: u64,
        chain_id: u64,
        max_attempts: usize,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain_id);
        let mut current = sector.reference();
        let mut log_psi = ansatz.log_amplitude(params, current);
        let mut attempts = 0;
        while !log_psi.re.is_finite() {
            if attempts == max_attempts {
                return Err(Error::InitializationFailed(max_attempts));
            }
            current = random_configuration(sector, &mut rng);
            log_psi = ansatz.log_amplitude(params, current);
            attempts += 1;
        }
        Ok(ChainState {
            current,
            log_psi,
            rng,
            proposed: 0,
            accepted: 0,
        })
    }

    /// One Metropolis proposal with acceptance `min(1, |ψ(n')/ψ(n)|²)`.
    pub fn step<A: Ansatz + ?Sized>(
        &mut self,
        ansatz: &A,
        params: &[f64],
        sector: &Sector,
        double_fraction: f64,
    ) {
        let candidate = propose_move(sector, self.current, double_fraction, &mut self.rng);
        self.proposed += 1;
        let u: f64 = self.rng.random();
        if candidate == self.current {
            self.accepted += 1;
            return;
        }
        let log_new = ansatz.log_amplitude(params, candidate);
        let log_ratio = 2.0 * (log_new.re - self.log_psi.re);
        if log_ratio >= 0.0 || u < log_ratio.exp() {
            self.current = candidate;
            self.log_psi = log_new;
            self.accepted += 1;
        }
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Recorded configurations of one chain, in sweep order, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub chain_id: u64,
    pub samples: Vec<Configuration>,
    /// Sweep index at which each sample was recorded.
    pub sweeps: Vec<usize>,
    pub proposed: u64,
    pub accepted: u64,
}

impl SampleBatch {
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample counts per basis position.
    pub fn histogram(&self, basis: &SectorBasis) -> Vec<u64> {
        let mut counts = vec![0u64; basis.len()];
        for c in &self.samples {
            if let Some(i) = basis.index_of(*c) {
                counts[i] += 1;
            }
        }
        counts
    }
}

/// Runs one chain for `n_sweeps` sweeps of `2·n_orb` proposals and records
/// every `thin`-th sweep after the first `burn_in` sweeps.
#[allow(clippy::too_many_arguments)]
pub fn run_chain<A: Ansatz + ?Sized>(
    ansatz: &A,
    params: &[f64],
    sector: &Sector,
    n_sweeps: usize,
    burn_in: usize,
    seed: u64,
    chain_id: u64,
    cfg: &SamplerConfig,
) -> Result<SampleBatch> {
    if n_sweeps == 0 {
        return Err(Error::InvalidArgument("n_sweeps must be positive".into()));
    }
    let mut state = ChainState::start(ansatz, params, sector, seed, chain_id, cfg.max_init_attempts)?;
    let sweep_len = sector.n_modes();
    let thin = cfg.thin.max(1);
    let mut batch = SampleBatch {
        chain_id,
        samples: Vec::new(),
        sweeps: Vec::new(),
        proposed: 0,
        accepted: 0,
    };
    for sweep in 0..n_sweeps {
        for _ in 0..sweep_len {
            state.step(ansatz, params, sector, cfg.double_hop_fraction);
        }
        if sweep >= burn_in && (sweep - burn_in) % thin == 0 {
            batch.samples.push(state.current);
            batch.sweeps.push(sweep);
        }
    }
    batch.proposed = state.proposed;
    batch.accepted = state.accepted;
    Ok(batch)
}

/// Runs `cfg.n_chains` chains with streams `0..n_chains`, sharing `cfg.seed`.
pub fn run_chains<A: Ansatz + ?Sized>(
    ansatz: &A,
    params: &[f64],
    sector: &Sector,
    cfg: &SamplerConfig,
) -> Result<Vec<SampleBatch>> {
    let burn_in = (cfg.n_sweeps as f64 * cfg.burn_in_fraction).round() as usize;
    (0..cfg.n_chains.max(1) as u64)
        .map(|id| run_chain(ansatz, params, sector, cfg.n_sweeps, burn_in, cfg.seed, id, cfg))
        .collect()
}

/// Normalized `|ψ|²` and the normalized amplitudes in basis order.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub probabilities: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    /// Unnormalized `ln ψ` per basis position.
    pub log_amplitudes: Vec<Complex64>,
}

pub fn exact_distribution<A: Ansatz + ?Sized>(
    ansatz: &A,
    params: &[f64],
    basis: &SectorBasis,
) -> Result<ExactDistribution> {
    let logs: Vec<Complex64> = basis
        .configs()
        .iter()
        .map(|&c| ansatz.log_amplitude(params, c))
        .collect();
    let max = logs
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("every amplitude vanishes"));
    }
    let shifted: Vec<Complex64> = logs
        .iter()
        .map(|l| {
            if l.re == f64::NEG_INFINITY {
                Complex64::new(0.0, 0.0)
            } else {
                (l - max).exp()
            }
        })
        .collect();
    let norm: f64 = shifted.iter().map(|a| a.norm_sqr()).sum();
    let scale = 1.0 / norm.sqrt();
    Ok(ExactDistribution {
        probabilities: shifted.iter().map(|a| a.norm_sqr() / norm).collect(),
        amplitudes: shifted.iter().map(|a| a * scale).collect(),
        log_amplitudes: logs,
    })
}

/// Integrated autocorrelation time with Sokal's automatic window `M ≥ 5τ`.
pub fn autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n {
        let c = (0..n - lag)
            .map(|i| (series[i] - mean) * (series[i + lag] - mean))
            .sum::<f64>()
            / (n as f64 * var);
        tau += 2.0 * c;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}
