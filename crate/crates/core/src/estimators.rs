//! Local energies, energy and force estimators, the log-derivative metric,
//! and reduced density matrices of the bare state.
//!
//! Sampled and exact-enumeration modes share one path: both are reduced to a
//! list of distinct configurations with nonnegative weights summing to one.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::fock::{apply_one, apply_two, Configuration, SectorBasis};
use crate::integrals::IntegralSet;
use crate::sampler::{ExactDistribution, SampleBatch};

pub use crate::rdm::RdmSet;

/// Spin-orbital Hamiltonian with antisymmetrized two-body elements and a
/// per-pair list of double excitations with nonzero amplitude.
#[derive(Debug, Clone)]
pub struct LocalEnergyTable {
    n_orb: usize,
    d: usize,
    core: f64,
    h: Vec<f64>,
    anti: Vec<f64>,
    /// Indexed by `i * d + j` for occupied `i < j`: `(a, b, ⟨ab||ij⟩)` with `a < b`.
    doubles: Vec<Vec<(u8, u8, f64)>>,
}

impl LocalEnergyTable {
    pub fn new(integrals: &IntegralSet) -> Self {
        let n = integrals.n_orb;
        let d = 2 * n;
        let orb = |i: usize| i % n;
        let spin = |i: usize| i / n;
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                if spin(i) == spin(j) {
                    h[i * d + j] = integrals.h[(orb(i), orb(j))];
                }
            }
        }
        let v = |i: usize, j: usize, k: usize, l: usize| {
            if spin(i) == spin(k) && spin(j) == spin(l) {
                integrals.g.get(orb(i), orb(j), orb(k), orb(l))
            } else {
                0.0
            }
        };
        let mut anti = vec![0.0; d * d * d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        anti[((i * d + j) * d + k) * d + l] = v(i, j, k, l) - v(i, j, l, k);
                    }
                }
            }
        }
        let mut doubles = vec![Vec::new(); d * d];
        for i in 0..d {
            for j in i + 1..d {
                let list = &mut doubles[i * d + j];
                for a in 0..d {
                    for b in a + 1..d {
                        if a == i || a == j || b == i || b == j {
                            continue;
                        }
                        let val = anti[((a * d + b) * d + i) * d + j];
                        if val != 0.0 {
                            list.push((a as u8, b as u8, val));
                        }
                    }
                }
            }
        }
        LocalEnergyTable {
            n_orb: n,
            d,
            core: integrals.core,
            h,
            anti,
            doubles,
        }
    }

    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    #[inline]
    fn a(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.d;
        self.anti[((i * d + j) * d + k) * d + l]
    }

    /// Nonzero `⟨n'|H|n⟩` for every `n'` connected to `n`, diagonal first.
    pub fn row(&self, config: Configuration) -> Vec<(Configuration, f64)> {
        let mut out = Vec::new();
        self.for_each_connected(config, |c, v| out.push((c, v)));
        out
    }

    /// Calls `f(n', ⟨n'|H|n⟩)` for the diagonal and every single and double
    /// excitation of `n` with a nonzero element.
    pub fn for_each_connected(&self, config: Configuration, mut f: impl FnMut(Configuration, f64)) {
        let d = self.d;
        let n = self.n_orb;
        let occ: Vec<usize> = config.occupied().collect();
        let mut diag = self.core;
        for (x, &i) in occ.iter().enumerate() {
            diag += self.h[i * d + i];
            for &j in &occ[x + 1..] {
                diag += self.a(i, j, i, j);
            }
        }
        f(config, diag);
        for &i in &occ {
            let base = (i / n) * n;
            for a in base..base + n {
                if config.is_occupied(a) {
                    continue;
                }
                let mut val = self.h[a * d + i];
                for &j in &occ {
                    if j != i {
                        val += self.a(a, j, i, j);
                    }
                }
                if val == 0.0 {
                    continue;
                }
                let (c, sign) = apply_one(config, a, i).expect("valid single excitation");
                f(c, sign * val);
            }
        }
        for (x, &i) in occ.iter().enumerate() {
            for &j in &occ[x + 1..] {
                for &(a, b, val) in &self.doubles[i * d + j] {
                    let (a, b) = (a as usize, b as usize);
                    if config.is_occupied(a) || config.is_occupied(b) {
                        continue;
                    }
                    let (c, sign) = apply_two(config, a, b, j, i).expect("valid double excitation");
                    f(c, sign * val);
                }
            }
        }
    }
}

/// `E_loc(n) = Σ_n' ⟨n|H|n'⟩ ψ(n')/ψ(n)`.
pub fn local_energy<A: Ansatz + ?Sized>(
    ansatz: &A,
    params: &[f64],
    table: &LocalEnergyTable,
    config: Configuration,
) -> Result<Complex64> {
    let log_psi = ansatz.log_amplitude(params, config);
    local_energy_given(ansatz, params, table, config, log_psi)
}

fn local_energy_given<A: Ansatz + ?Sized>(
    ansatz: &A,
    params: &[f64],
    table: &LocalEnergyTable,
    config: Configuration,
    log_psi: Complex64,
) -> Result<Complex64> {
    if !log_psi.re.is_finite() {
        return Err(Error::Node(config.bits()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    table.for_each_connected(config, |c, v| {
        if c == config {
            acc += v;
        } else {
            let l = ansatz.log_amplitude(params, c);
            if l.re.is_finite() {
                acc += v * (l - log_psi).exp();
            }
        }
    });
    Ok(acc)
}

/// Distinct configurations with weights summing to one, plus the sample
/// sequence used for batch-means error bars.
#[derive(Debug, Clone)]
pub struct WeightedSamples {
    pub configs: Vec<Configuration>,
    pub weights: Vec<f64>,
    /// Position in `configs` of every raw sample, in order; empty in exact mode.
    pub sequence: Vec<usize>,
    pub exact: bool,
}

impl WeightedSamples {
    /// Pools sampled chains, in chain order.
    pub fn from_batches(batches: &[SampleBatch]) -> Result<Self> {
        let total: usize = batches.iter().map(|b| b.len()).sum();
        if total == 0 {
            return Err(Error::EmptyBatch);
        }
        let mut index: BTreeMap<u64, usize> = BTreeMap::new();
        let mut configs = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut sequence = Vec::with_capacity(total);
        for batch in batches {
            for &c in &batch.samples {
                let k = *index.entry(c.bits()).or_insert_with(|| {
                    configs.push(c);
                    counts.push(0);
                    configs.len() - 1
                });
                counts[k] += 1;
                sequence.push(k);
            }
        }
        Ok(WeightedSamples {
            configs,
            weights: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            sequence,
            exact: false,
        })
    }

    /// Every configuration of nonzero probability.
    pub fn from_distribution(basis: &SectorBasis, dist: &ExactDistribution) -> Self {
        let mut configs = Vec::new();
        let mut weights = Vec::new();
        for (c, &p) in basis.configs().iter().zip(&dist.probabilities) {
            if p > 0.0 {
                configs.push(*c);
                weights.push(p);
            }
        }
        WeightedSamples {
            configs,
            weights,
            sequence: Vec::new(),
            exact: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// Per-configuration local quantities.
#[derive(Debug, Clone)]
pub struct LocalEstimate {
    pub config: Configuration,
    pub log_psi: Complex64,
    pub e_loc: Complex64,
    /// `O_k(n)`; empty when derivatives were not requested.
    pub o: Vec<Complex64>,
}

/// Local energies (and optionally log-derivatives) for every distinct configuration.
pub fn local_estimates<A: Ansatz + ?Sized>(
    ansatz: &A,
    params: &[f64],
    table: &LocalEnergyTable,
    samples: &WeightedSamples,
    with_derivatives: bool,
) -> Result<Vec<LocalEstimate>> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    samples
        .configs
        .iter()
        .map(|&c| {
            let (log_psi, o) = if with_derivatives {
                let mut o = vec![Complex64::new(0.0, 0.0); ansatz.n_params()];
                let l = ansatz.log_derivatives(params, c, &mut o)?;
                (l, o)
            } else {
                (ansatz.log_amplitude(params, c), Vec::new())
            };
            let e_loc = local_energy_given(ansatz, params, table, c, log_psi)?;
            Ok(LocalEstimate {
                config: c,
                log_psi,
                e_loc,
                o,
            })
        })
        .collect()
}

/// Energy, its spread, and the parameter force.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyForce {
    pub energy: f64,
    /// Imaginary part of the mean local energy (sampling residue).
    pub energy_imag: f64,
    /// `⟨|E_loc − E|²⟩`.
    pub variance: f64,
    /// Batch-means standard error; zero in exact mode.
    pub error: f64,
    /// `F_k = 2 Re[⟨O_k* E_loc⟩ − ⟨O_k*⟩⟨E_loc⟩]`.
    pub force: Vec<f64>,
}

/// Number of contiguous blocks used for batch-means error bars.
pub const ERROR_BLOCKS: usize = 32;

pub fn estimate_energy_force(
    samples: &WeightedSamples,
    locals: &[LocalEstimate],
) -> Result<EnergyForce> {
    if locals.is_empty() || locals.len() != samples.configs.len() {
        return Err(Error::EmptyBatch);
    }
    let w = &samples.weights;
    let mean_e: Complex64 = locals.iter().zip(w).map(|(l, &w)| l.e_loc * w).sum();
    let variance = locals
        .iter()
        .zip(w)
        .map(|(l, &w)| w * (l.e_loc - mean_e).norm_sqr())
        .sum();
    let p = locals[0].o.len();
    let mut force = vec![0.0; p];
    if p > 0 {
        let mean_o = weighted_mean_o(locals, w);
        for (l, &wi) in locals.iter().zip(w) {
            let de = l.e_loc - mean_e;
            for k in 0..p {
                force[k] += 2.0 * wi * ((l.o[k] - mean_o[k]).conj() * de).re;
            }
        }
    }
    let error = if samples.exact {
        0.0
    } else {
        batch_means_error(&samples.sequence, |k| locals[k].e_loc.re)
    };
    Ok(EnergyForce {
        energy: mean_e.re,
        energy_imag: mean_e.im,
        variance,
        error,
        force,
    })
}

fn weighted_mean_o(locals: &[LocalEstimate], w: &[f64]) -> Vec<Complex64> {
    let p = locals[0].o.len();
    let mut mean = vec![Complex64::new(0.0, 0.0); p];
    for (l, &wi) in locals.iter().zip(w) {
        for k in 0..p {
            mean[k] += l.o[k] * wi;
        }
    }
    mean
}

/// Standard error of the mean of `value(sequence[i])` from contiguous blocks.
pub fn batch_means_error(sequence: &[usize], value: impl Fn(usize) -> f64) -> f64 {
    let n = sequence.len();
    let blocks = ERROR_BLOCKS.min(n);
    if blocks < 2 {
        return 0.0;
    }
    let size = n / blocks;
    let means: Vec<f64> = (0..blocks)
        .map(|b| {
            let chunk = &sequence[b * size..(b + 1) * size];
            chunk.iter().map(|&k| value(k)).sum::<f64>() / size as f64
        })
        .collect();
    let m = means.iter().sum::<f64>() / blocks as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (blocks - 1) as f64;
    (var / blocks as f64).sqrt()
}

/// Metric `S = 2 Re[⟨O* Oᵀ⟩ − ⟨O*⟩⟨Oᵀ⟩]`.
///
/// Estimates are held as the factor `Y` with `S = 2 YᵀY`, whose rows are
/// `√w (O − ⟨O⟩)` split into real and imaginary parts; the dense matrix is
/// formed on demand.
#[derive(Debug, Clone)]
pub struct MetricTensor {
    repr: MetricRepr,
}

#[derive(Debug, Clone)]
enum MetricRepr {
    Factor(DMatrix<f64>),
    Dense(DMatrix<f64>),
}

impl MetricTensor {
    pub fn from_factor(y: DMatrix<f64>) -> Self {
        MetricTensor {
            repr: MetricRepr::Factor(y),
        }
    }

    pub fn from_dense(s: DMatrix<f64>) -> Self {
        MetricTensor {
            repr: MetricRepr::Dense(s),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            MetricRepr::Factor(y) => y.ncols(),
            MetricRepr::Dense(s) => s.ncols(),
        }
    }

    /// `Y` with `S = 2 YᵀY`, when held in factored form.
    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            MetricRepr::Factor(y) => Some(y),
            MetricRepr::Dense(_) => None,
        }
    }

    /// `S` without the shift.
    pub fn dense(&self) -> DMatrix<f64> {
        match &self.repr {
            MetricRepr::Factor(y) => y.transpose() * y * 2.0,
            MetricRepr::Dense(s) => s.clone(),
        }
    }
}

pub fn estimate_metric(samples: &WeightedSamples, locals: &[LocalEstimate]) -> Result<MetricTensor> {
    if locals.is_empty() || locals.len() != samples.configs.len() {
        return Err(Error::EmptyBatch);
    }
    let w = &samples.weights;
    let p = locals[0].o.len();
    let mean_o = if p > 0 {
        weighted_mean_o(locals, w)
    } else {
        Vec::new()
    };
    let rows = 2 * locals.len();
    let mut y = DMatrix::zeros(rows, p);
    for (r, (l, &wi)) in locals.iter().zip(w).enumerate() {
        let sw = wi.sqrt();
        for k in 0..p {
            let d = l.o[k] - mean_o[k];
            y[(2 * r, k)] = sw * d.re;
            y[(2 * r + 1, k)] = sw * d.im;
        }
    }
    Ok(MetricTensor::from_factor(y))
}

/// RDMs over `n_orb` orbitals from local estimators of `c†c` and `c†c†cc`:
/// for each configuration `n`, every string whose adjoint maps `n` to some
/// `n'` contributes `⟨n|op|n'⟩ ψ(n')/ψ(n)`.
pub fn estimate_rdms<A: Ansatz + ?Sized>(
    ansatz: &A,
    params: &[f64],
    samples: &WeightedSamples,
    n_orb: usize,
) -> Result<RdmSet> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut rdm = RdmSet::zeros(n_orb);
    let mut cache: BTreeMap<u64, Complex64> = BTreeMap::new();
    let mut ratio = |c: Configuration, base: Complex64| -> f64 {
        let l = *cache
            .entry(c.bits())
            .or_insert_with(|| ansatz.log_amplitude(params, c));
        if l.re.is_finite() {
            (l - base).exp().re
        } else {
            0.0
        }
    };
    for (&n, &w) in samples.configs.iter().zip(&samples.weights) {
        let base = ansatz.log_amplitude(params, n);
        if !base.re.is_finite() {
            return Err(Error::Node(n.bits()));
        }
        let occ: Vec<usize> = n.occupied().collect();
        for &p in &occ {
            let sp = p / n_orb;
            for r in sp * n_orb..(sp + 1) * n_orb {
                // ⟨n|c†_p c_r|n'⟩ with n' = c†_r c_p n
                if let Some((c, sign)) = apply_one(n, r, p) {
                    let v = w * sign * ratio(c, base);
                    rdm.one[sp][(p % n_orb, r % n_orb)] += v;
                }
            }
        }
        for &p in &occ {
            for &q in &occ {
                if p == q {
                    continue;
                }
                let (sp, sq) = (p / n_orb, q / n_orb);
                let t = 2 * sp + sq;
                for r in sp * n_orb..(sp + 1) * n_orb {
                    for s in sq * n_orb..(sq + 1) * n_orb {
                        if r == s {
                            continue;
                        }
                        // ⟨n|c†_p c†_q c_s c_r|n'⟩ with n' = c†_r c†_s c_q c_p n
                        if let Some((c, sign)) = apply_two(n, r, s, q, p) {
                            let v = w * sign * ratio(c, base);
                            rdm.two[t].add(p % n_orb, q % n_orb, r % n_orb, s % n_orb, v);
                        }
                    }
                }
            }
        }
    }
    Ok(rdm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{init_params, AnsatzConfig, Family, Network, TableAnsatz};
    use crate::fock::Sector;
    use crate::integrals::test_support::*;
    use crate::integrals::{hubbard_ring, HubbardSpec};
    use crate::oracle::{build_sector_hamiltonian, exact_rdms, ground_state};
    use crate::sampler::exact_distribution;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact_samples<A: Ansatz>(a: &A, p: &[f64], basis: &SectorBasis) -> WeightedSamples {
        WeightedSamples::from_distribution(basis, &exact_distribution(a, p, basis).unwrap())
    }

    #[test]
    fn table_rows_match_oracle_matrix() {
        let ints = random_integrals(4, 17);
        let basis = SectorBasis::new(Sector::new(4, 2, 1).unwrap()).unwrap();
        let m = build_sector_hamiltonian(&ints, &basis).unwrap().to_dense();
        let table = LocalEnergyTable::new(&ints);
        for (j, &c) in basis.configs().iter().enumerate() {
            let mut col = vec![0.0; basis.len()];
            for (cp, v) in table.row(c) {
                col[basis.index_of(cp).unwrap()] += v;
            }
            for i in 0..basis.len() {
                assert!((col[i] - m[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigenvector_has_constant_local_energy() {
        let ints = random_integrals(3, 2);
        let basis = SectorBasis::new(Sector::new(3, 1, 1).unwrap()).unwrap();
        let (e0, v) = ground_state(&build_sector_hamiltonian(&ints, &basis).unwrap()).unwrap();
        let table = LocalEnergyTable::new(&ints);
        let psi = TableAnsatz::from_real(basis.clone(), &v).unwrap();
        for (&c, &vi) in basis.configs().iter().zip(&v) {
            if vi.abs() > 1e-8 {
                let e = local_energy(&psi, &[], &table, c).unwrap();
                assert!((e.re - e0).abs() < 1e-8 && e.im.abs() < 1e-12);
            }
        }
        let samples = exact_samples(&psi, &[], &basis);
        let locals = local_estimates(&psi, &[], &table, &samples, true).unwrap();
        let ef = estimate_energy_force(&samples, &locals).unwrap();
        assert!(ef.variance < 1e-14);
    }

    #[test]
    fn free_hubbard_slater_state() {
        // Ground state of the U = 0 ring as a determinant of the lowest
        // Bloch-like real orbitals (k = 0, ±1 doublet as cos / sin).
        let ints = hubbard_ring(&HubbardSpec::new(6, 1.0, 0.0, true).unwrap());
        let s = Sector::new(6, 3, 3).unwrap();
        let basis = SectorBasis::new(s).unwrap();
        let mut cfg = AnsatzConfig::new(Family::SlaterNnJastrow, 1, s);
        cfg.param_scale = 0.0;
        let net = Network::new(cfg).unwrap();
        let mut p = init_params(&cfg).unwrap();
        let orbital = |k: usize, site: usize| {
            let x = 2.0 * core::f64::consts::PI * site as f64 / 6.0;
            match k {
                0 => 1.0,
                1 => x.cos(),
                _ => x.sin(),
            }
        };
        for site in 0..6 {
            for k in 0..3 {
                p[site * 6 + k] = orbital(k, site);
                p[(6 + site) * 6 + k] = 0.0;
                p[site * 6 + 3 + k] = 0.0;
                p[(6 + site) * 6 + 3 + k] = orbital(k, site);
            }
        }
        let table = LocalEnergyTable::new(&ints);
        for &c in basis.configs() {
            if net.log_amplitude(&p, c).re.is_finite() {
                let e = local_energy(&net, &p, &table, c).unwrap();
                assert!((e.re + 8.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn energy_matches_rayleigh_quotient_and_force_matches_finite_difference() {
        let ints = random_integrals(2, 40);
        let s = Sector::new(2, 1, 1).unwrap();
        let basis = SectorBasis::new(s).unwrap();
        let m = build_sector_hamiltonian(&ints, &basis).unwrap();
        let table = LocalEnergyTable::new(&ints);
        for family in Family::ALL {
            let mut cfg = AnsatzConfig::new(family, 1, s);
            cfg.param_scale = 0.3;
            cfg.seed = 4;
            let net = Network::new(cfg).unwrap();
            let p = init_params(&cfg).unwrap();
            let loss = |q: &[f64]| {
                let d = exact_distribution(&net, q, &basis).unwrap();
                let num: Complex64 = (0..basis.len())
                    .map(|i| {
                        let mut hv = Complex64::new(0.0, 0.0);
                        for j in 0..basis.len() {
                            hv += m.get(i, j) * d.amplitudes[j];
                        }
                        d.amplitudes[i].conj() * hv
                    })
                    .sum();
                num.re
            };
            let samples = exact_samples(&net, &p, &basis);
            let locals = local_estimates(&net, &p, &table, &samples, true).unwrap();
            let ef = estimate_energy_force(&samples, &locals).unwrap();
            assert!((ef.energy - loss(&p)).abs() < 1e-10, "{family:?}");
            let h = 1e-5;
            for k in 0..p.len() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[k] += h;
                pm[k] -= h;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
                let scale = ef.force.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                assert!(
                    (fd - ef.force[k]).abs() <= 1e-6 * ef.force[k].abs().max(scale),
                    "{family:?} k={k}: {fd} vs {}",
                    ef.force[k]
                );
            }
        }
    }

    #[test]
    fn constant_shift_moves_energy_only() {
        let ints = random_integrals(3, 8);
        let s = Sector::new(3, 1, 1).unwrap();
        let basis = SectorBasis::new(s).unwrap();
        let cfg = AnsatzConfig {
            param_scale: 0.2,
            ..AnsatzConfig::new(Family::Rbm, 1, s)
        };
        let net = Network::new(cfg).unwrap();
        let p = init_params(&cfg).unwrap();
        let samples = exact_samples(&net, &p, &basis);
        let a = estimate_energy_force(
            &samples,
            &local_estimates(&net, &p, &LocalEnergyTable::new(&ints), &samples, true).unwrap(),
        )
        .unwrap();
        let b = estimate_energy_force(
            &samples,
            &local_estimates(&net, &p, &LocalEnergyTable::new(&ints.shifted(3.5)), &samples, true)
                .unwrap(),
        )
        .unwrap();
        assert!((b.energy - a.energy - 3.5).abs() < 1e-12);
        for (x, y) in a.force.iter().zip(&b.force) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rdms_match_oracle_for_random_state() {
        let ints = random_integrals(3, 3);
        let s = Sector::new(3, 2, 1).unwrap();
        let basis = SectorBasis::new(s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi = TableAnsatz::from_real(basis.clone(), &v).unwrap();
        let samples = exact_samples(&psi, &[], &basis);
        let est = estimate_rdms(&psi, &[], &samples, 3).unwrap();
        let exact = exact_rdms(&v, &basis).unwrap();
        assert!(est.max_abs_diff(&exact) < 1e-12);
        assert!((est.one[0].trace() - 2.0).abs() < 1e-12);
        assert!((est.one[1].trace() - 1.0).abs() < 1e-12);
        let table = LocalEnergyTable::new(&ints);
        let locals = local_estimates(&psi, &[], &table, &samples, false).unwrap();
        let ef = estimate_energy_force(&samples, &locals).unwrap();
        assert!((est.energy(&ints) - ef.energy).abs() < 1e-10);
    }

    #[test]
    fn two_body_partial_trace() {
        let s = Sector::new(3, 2, 1).unwrap();
        let basis = SectorBasis::new(s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi = TableAnsatz::from_real(basis.clone(), &v).unwrap();
        let rdm = estimate_rdms(&psi, &[], &exact_samples(&psi, &[], &basis), 3).unwrap();
        let counts = [2.0, 1.0];
        for s1 in 0..2 {
            for s2 in 0..2 {
                let factor = counts[s2] - if s1 == s2 { 1.0 } else { 0.0 };
                for p in 0..3 {
                    for r in 0..3 {
                        let tr: f64 = (0..3).map(|q| rdm.two[2 * s1 + s2].get(p, q, r, q)).sum();
                        assert!((tr - factor * rdm.one[s1][(p, r)]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn slater_one_rdm_is_idempotent() {
        let s = Sector::new(4, 2, 2).unwrap();
        let basis = SectorBasis::new(s).unwrap();
        let mut cfg = AnsatzConfig::new(Family::SlaterNnJastrow, 1, s);
        cfg.param_scale = 0.0;
        let net = Network::new(cfg).unwrap();
        let mut p = init_params(&cfg).unwrap();
        // Spin-block-diagonal orbitals from a random orthogonal matrix.
        let q = random_orthogonal(4, 3);
        for i in 0..4 {
            for c in 0..2 {
                p[i * 4 + c] = q[(i, c)];
                p[(4 + i) * 4 + 2 + c] = q[(i, c + 2)];
            }
        }
        let rdm = estimate_rdms(&net, &p, &exact_samples(&net, &p, &basis), 4).unwrap();
        for g in &rdm.one {
            assert!((g * g - g).abs().max() < 1e-10);
        }
    }

    #[test]
    fn metric_single_parameter_variance() {
        // ψ(n) = exp(θ f(n)) with real f: S = 2 Var(f).
        let s = Sector::new(2, 1, 1).unwrap();
        let basis = SectorBasis::new(s).unwrap();
        let f = [0.3, -1.0, 0.5, 2.0];
        let w = [0.1, 0.2, 0.3, 0.4];
        let samples = WeightedSamples {
            configs: basis.configs().to_vec(),
            weights: w.to_vec(),
            sequence: Vec::new(),
            exact: true,
        };
        let locals: Vec<LocalEstimate> = basis
            .configs()
            .iter()
            .zip(&f)
            .map(|(&c, &fi)| LocalEstimate {
                config: c,
                log_psi: Complex64::new(0.0, 0.0),
                e_loc: Complex64::new(0.0, 0.0),
                o: vec![Complex64::from(fi)],
            })
            .collect();
        let s = estimate_metric(&samples, &locals).unwrap().dense();
        let mean: f64 = f.iter().zip(&w).map(|(a, b)| a * b).sum();
        let var: f64 = f.iter().zip(&w).map(|(a, b)| b * (a - mean) * (a - mean)).sum();
        assert!((s[(0, 0)] - 2.0 * var).abs() < 1e-14);
    }

    #[test]
    fn metric_matches_fubini_study_of_normalized_state() {
        let s = Sector::new(2, 1, 1).unwrap();
        let basis = SectorBasis::new(s).unwrap();
        for family in [Family::Rbm, Family::NnBackflow] {
            let cfg = AnsatzConfig {
                param_scale: 0.3,
                seed: 2,
                ..AnsatzConfig::new(family, 1, s)
            };
            let net = Network::new(cfg).unwrap();
            let p = init_params(&cfg).unwrap();
            let table = LocalEnergyTable::new(&IntegralSet::zeros(2));
            let samples = exact_samples(&net, &p, &basis);
            let locals = local_estimates(&net, &p, &table, &samples, true).unwrap();
            let metric = estimate_metric(&samples, &locals).unwrap().dense();
            // G_jk = 2 Re[⟨∂_j φ|∂_k φ⟩ − ⟨∂_j φ|φ⟩⟨φ|∂_k φ⟩] for the normalized φ.
            let h = 1e-5;
            let state = |q: &[f64]| exact_distribution(&net, q, &basis).unwrap().amplitudes;
            let phi = state(&p);
            let np = p.len();
            let derivs: Vec<Vec<Complex64>> = (0..np)
                .map(|k| {
                    let mut pp = p.clone();
                    let mut pm = p.clone();
                    pp[k] += h;
                    pm[k] -= h;
                    let (a, b) = (state(&pp), state(&pm));
                    a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
                })
                .collect();
            let ip = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
                a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
            };
            let scale = metric.abs().max();
            for j in 0..np {
                for k in 0..np {
                    let g = 2.0
                        * (ip(&derivs[j], &derivs[k]) - ip(&derivs[j], &phi) * ip(&phi, &derivs[k])).re;
                    assert!((g - metric[(j, k)]).abs() < 1e-6 * scale, "{family:?} {j} {k}");
                }
            }
            let eig = nalgebra::SymmetricEigen::new(metric);
            assert!(eig.eigenvalues.min() > -1e-10);
        }
    }

    #[test]
    fn zero_variance_iff_eigenstate() {
        let ints = random_integrals(2, 12);
        let basis = SectorBasis::new(Sector::new(2, 1, 1).unwrap()).unwrap();
        let (_, v) = ground_state(&build_sector_hamiltonian(&ints, &basis).unwrap()).unwrap();
        let table = LocalEnergyTable::new(&ints);
        let var = |vals: &[f64]| {
            let psi = TableAnsatz::from_real(basis.clone(), vals).unwrap();
            let samples = exact_samples(&psi, &[], &basis);
            let locals = local_estimates(&psi, &[], &table, &samples, false).unwrap();
            estimate_energy_force(&samples, &locals).unwrap().variance
        };
        assert!(var(&v) < 1e-20);
        let mut off = v.clone();
        off[0] += 0.05;
        assert!(var(&off) > 1e-6);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            WeightedSamples::from_batches(&[]),
            Err(Error::EmptyBatch)
        ));
    }
}
