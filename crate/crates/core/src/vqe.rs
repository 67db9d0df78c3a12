//! Statevector simulation of the Cascade circuit.
//!
//! Qubit `i` is fock mode `i` and is bit `i` of the amplitude index. Every
//! gate in the circuit (y-rotations and CNOTs) is real, so amplitudes are held
//! as `f64`. The ladder is the run of CNOTs with control `i` and target
//! `i + 1` for ascending `i`; see [`CascadeLayout`] for how layers use it.
//!
//! Energies, angle gradients and the orbital force act on the whole register
//! through the second-quantized Hamiltonian; the Jordan–Wigner Pauli form is
//! built separately for inspection and cross-checks.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{LocalEnergyTable, MetricTensor};
use crate::fock::{apply_one, mode, Configuration, Sector, Spin};
use crate::integrals::IntegralSet;
use crate::optimizer::{
    has_converged, sr_solve, OptimizerConfig, StepRecord, Trajectory, UpdateRule, VmcState,
};
use crate::rotation::{n_params, param_pair, OrbitalRotation};

/// Largest register handled by the dense simulator.
pub const MAX_QUBITS: usize = 20;
/// Pauli terms with smaller coefficients are dropped.
pub const PAULI_PRUNE: f64 = 1e-12;
/// Tolerance on the state norm accepted by [`expectation`].
const NORM_TOL: f64 = 1e-10;

/// Gate pattern of one Cascade layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CascadeLayout {
    /// A rotation column followed by the ladder.
    Ladder,
    /// Rotation column, ladder, rotation column, reversed ladder. At zero
    /// angles every layer is the identity operator.
    #[default]
    Mirrored,
}

impl CascadeLayout {
    pub const ALL: [CascadeLayout; 2] = [CascadeLayout::Ladder, CascadeLayout::Mirrored];

    /// Rotation columns per layer.
    pub fn columns(self) -> usize {
        match self {
            CascadeLayout::Ladder => 1,
            CascadeLayout::Mirrored => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CascadeLayout::Ladder => "ladder",
            CascadeLayout::Mirrored => "mirrored",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }
}

/// Number of rotation angles in a Cascade circuit.
pub fn n_angles(layout: CascadeLayout, n_qubits: usize, layers: usize) -> usize {
    n_qubits * layers * layout.columns()
}

/// Angles ordered by layer, then rotation column, then qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeParams {
    pub layout: CascadeLayout,
    pub n_qubits: usize,
    pub layers: usize,
    pub angles: Vec<f64>,
}

impl CascadeParams {
    pub fn new(layout: CascadeLayout, n_qubits: usize, layers: usize, angles: Vec<f64>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Capacity {
                what: "qubits",
                requested: n_qubits,
                limit: MAX_QUBITS,
            });
        }
        let expected = n_angles(layout, n_qubits, layers);
        if angles.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: angles.len(),
            });
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("circuit angles"));
        }
        Ok(CascadeParams {
            layout,
            n_qubits,
            layers,
            angles,
        })
    }

    pub fn zeros(layout: CascadeLayout, n_qubits: usize, layers: usize) -> Result<Self> {
        Self::new(layout, n_qubits, layers, vec![0.0; n_angles(layout, n_qubits, layers)])
    }

    /// Every angle uniform in `[0, 2π)`.
    pub fn random(layout: CascadeLayout, n_qubits: usize, layers: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angles = (0..n_angles(layout, n_qubits, layers))
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        Self::new(layout, n_qubits, layers, angles)
    }

    pub fn angle(&self, layer: usize, column: usize, qubit: usize) -> f64 {
        self.angles[(layer * self.layout.columns() + column) * self.n_qubits + qubit]
    }

    /// Appends one layer whose angles are uniform in `[−noise, noise]`.
    /// With the mirrored layout and `noise = 0` the state is unchanged.
    pub fn with_added_layer(&self, noise: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut angles = self.angles.clone();
        let extra = self.layout.columns() * self.n_qubits;
        angles.extend((0..extra).map(|_| {
            if noise > 0.0 {
                rng.random_range(-noise..=noise)
            } else {
                0.0
            }
        }));
        Self::new(self.layout, self.n_qubits, self.layers + 1, angles)
    }
}

/// Real amplitudes over `2^n_qubits` computational states.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    pub n_qubits: usize,
    pub amps: Vec<f64>,
}

impl Statevector {
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amps = vec![0.0; 1 << n_qubits];
        amps[0] = 1.0;
        Statevector { n_qubits, amps }
    }

    pub fn norm(&self) -> f64 {
        dot(&self.amps, &self.amps).sqrt()
    }

    pub fn dot(&self, other: &Statevector) -> f64 {
        dot(&self.amps, &other.amps)
    }

    /// Weight on configurations of `sector`.
    pub fn sector_weight(&self, sector: &Sector) -> f64 {
        let n = sector.n_orb;
        self.amps
            .iter()
            .enumerate()
            .filter(|&(b, _)| {
                let c = Configuration(b as u64);
                c.count_spin(n, Spin::Up) as usize == sector.n_up
                    && c.count_spin(n, Spin::Down) as usize == sector.n_down
            })
            .map(|(_, a)| a * a)
            .sum()
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let bit = 1usize << qubit;
        for b in 0..self.amps.len() {
            if b & bit == 0 {
                let (a0, a1) = (self.amps[b], self.amps[b | bit]);
                self.amps[b] = c * a0 - s * a1;
                self.amps[b | bit] = s * a0 + c * a1;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let (cb, tb) = (1usize << control, 1usize << target);
        for b in 0..self.amps.len() {
            if b & cb != 0 && b & tb == 0 {
                self.amps.swap(b, b | tb);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
enum Gate {
    /// Rotation on `qubit` by angle number `angle`.
    Ry { qubit: usize, angle: usize },
    Cnot { control: usize, target: usize },
}

fn gates(params: &CascadeParams) -> Vec<Gate> {
    let n = params.n_qubits;
    let mut out = Vec::new();
    let mut k = 0;
    let mut column = |out: &mut Vec<Gate>| {
        for qubit in 0..n {
            out.push(Gate::Ry { qubit, angle: k });
            k += 1;
        }
    };
    let ladder = (0..n.saturating_sub(1)).map(|q| Gate::Cnot {
        control: q,
        target: q + 1,
    });
    for _ in 0..params.layers {
        column(&mut out);
        out.extend(ladder.clone());
        if params.layout == CascadeLayout::Mirrored {
            column(&mut out);
            out.extend(ladder.clone().rev());
        }
    }
    out
}

fn run_circuit(params: &CascadeParams, angle: impl Fn(usize) -> f64) -> Statevector {
    let mut state = Statevector::zero_state(params.n_qubits);
    for g in gates(params) {
        match g {
            Gate::Ry { qubit, angle: k } => state.apply_ry(qubit, angle(k)),
            Gate::Cnot { control, target } => state.apply_cnot(control, target),
        }
    }
    state
}

/// `⟨a|R_y(π)|b⟩` on `qubit`.
fn flipped_overlap(a: &[f64], b: &[f64], qubit: usize) -> f64 {
    let bit = 1usize << qubit;
    let mut acc = 0.0;
    for i in 0..a.len() {
        if i & bit == 0 {
            acc += a[i | bit] * b[i] - a[i] * b[i | bit];
        }
    }
    acc
}

/// `dE/dθ_k = 2⟨∂_kψ|Hψ⟩` for every angle by one backward sweep that
/// un-applies each gate to both `ψ` and `Hψ`.
pub fn adjoint_gradient(params: &CascadeParams, state: &Statevector, h_psi: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; params.angles.len()];
    let mut phi = state.clone();
    let mut lam = Statevector {
        n_qubits: state.n_qubits,
        amps: h_psi.to_vec(),
    };
    for g in gates(params).into_iter().rev() {
        match g {
            Gate::Ry { qubit, angle } => {
                grad[angle] = flipped_overlap(&lam.amps, &phi.amps, qubit);
                phi.apply_ry(qubit, -params.angles[angle]);
                lam.apply_ry(qubit, -params.angles[angle]);
            }
            Gate::Cnot { control, target } => {
                phi.apply_cnot(control, target);
                lam.apply_cnot(control, target);
            }
        }
    }
    grad
}

/// The Cascade circuit applied to `|0…0⟩`.
pub fn apply_cascade(params: &CascadeParams) -> Statevector {
    run_circuit(params, |k| params.angles[k])
}

/// `∂ψ/∂θ_k` for every angle, using `dR_y(θ)/dθ = R_y(θ + π)/2`.
pub fn derivative_states(params: &CascadeParams) -> Vec<Statevector> {
    (0..params.angles.len())
        .map(|k| {
            let mut s = run_circuit(params, |j| {
                params.angles[j] + if j == k { PI } else { 0.0 }
            });
            for a in &mut s.amps {
                *a *= 0.5;
            }
            s
        })
        .collect()
}

/// Tensor product of Paulis: qubit `i` carries `X` if only bit `i` of `x` is
/// set, `Z` if only bit `i` of `z`, and `Y` if both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
}

impl PauliString {
    pub const IDENTITY: PauliString = PauliString { x: 0, z: 0 };

    pub fn n_y(self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// `P|b⟩ = phase · |b ⊕ x⟩`.
    pub fn act(self, b: u64) -> (u64, Complex64) {
        let sign = if (self.z & b).count_ones() & 1 == 0 { 1.0 } else { -1.0 };
        (b ^ self.x, i_pow(self.n_y()) * sign)
    }

    /// Label with qubit 0 first, e.g. `"XIZY"`.
    pub fn label(self, n_qubits: usize) -> alloc::string::String {
        (0..n_qubits)
            .map(|q| match ((self.x >> q) & 1, (self.z >> q) & 1) {
                (0, 0) => 'I',
                (1, 0) => 'X',
                (0, 1) => 'Z',
                _ => 'Y',
            })
            .collect()
    }
}

fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Real-weighted sum of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliHamiltonian {
    pub n_qubits: usize,
    pub terms: Vec<(f64, PauliString)>,
}

impl PauliHamiltonian {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, p: PauliString) -> f64 {
        self.terms
            .iter()
            .find(|(_, q)| *q == p)
            .map_or(0.0, |(c, _)| *c)
    }

    /// Dense complex matrix over the whole register.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for &(c, p) in &self.terms {
            for b in 0..dim as u64 {
                let (out, phase) = p.act(b);
                m[(out as usize, b as usize)] += phase * c;
            }
        }
        m
    }
}

/// Sum of `X^x Z^z` monomials with complex weights.
type XzOperator = BTreeMap<(u64, u64), Complex64>;

fn xz_product(a: &XzOperator, b: &XzOperator) -> XzOperator {
    let mut out = XzOperator::new();
    for (&(x1, z1), &c1) in a {
        for (&(x2, z2), &c2) in b {
            let sign = if (z1 & x2).count_ones() & 1 == 0 { 1.0 } else { -1.0 };
            *out.entry((x1 ^ x2, z1 ^ z2)).or_default() += c1 * c2 * sign;
        }
    }
    out
}

/// `c_j` (`dagger = false`) or `c†_j` as `Z_{<j} X_j (I ∓ Z_j)/2`.
fn ladder(j: usize, dagger: bool) -> XzOperator {
    let below = (1u64 << j) - 1;
    let bit = 1u64 << j;
    let s = if dagger { 0.5 } else { -0.5 };
    let mut op = XzOperator::new();
    op.insert((bit, below), Complex64::new(0.5, 0.0));
    op.insert((bit, below | bit), Complex64::new(s, 0.0));
    op
}

/// Jordan–Wigner form of the second-quantized Hamiltonian on `2·n_orb` qubits.
pub fn jw_hamiltonian(integrals: &IntegralSet) -> Result<PauliHamiltonian> {
    let n = integrals.n_orb;
    let nq = 2 * n;
    if nq > MAX_QUBITS {
        return Err(Error::Capacity {
            what: "qubits",
            requested: nq,
            limit: MAX_QUBITS,
        });
    }
    let create: Vec<XzOperator> = (0..nq).map(|j| ladder(j, true)).collect();
    let annihilate: Vec<XzOperator> = (0..nq).map(|j| ladder(j, false)).collect();
    let mut total = XzOperator::new();
    let mut add = |op: XzOperator, w: f64| {
        for (k, c) in op {
            *total.entry(k).or_default() += c * w;
        }
    };
    add(
        [((0, 0), Complex64::new(1.0, 0.0))].into_iter().collect(),
        integrals.core,
    );
    for s in Spin::BOTH {
        for p in 0..n {
            for q in 0..n {
                let h = integrals.h[(p, q)];
                if h != 0.0 {
                    add(xz_product(&create[mode(n, p, s)], &annihilate[mode(n, q, s)]), h);
                }
            }
        }
    }
    for s1 in Spin::BOTH {
        for s2 in Spin::BOTH {
            for p in 0..n {
                for q in 0..n {
                    let (mp, mq) = (mode(n, p, s1), mode(n, q, s2));
                    if mp == mq {
                        continue;
                    }
                    let cc = xz_product(&create[mp], &create[mq]);
                    for r in 0..n {
                        for s in 0..n {
                            let g = integrals.g.get(p, q, r, s);
                            let (mr, ms) = (mode(n, r, s1), mode(n, s, s2));
                            if g == 0.0 || mr == ms {
                                continue;
                            }
                            let aa = xz_product(&annihilate[ms], &annihilate[mr]);
                            add(xz_product(&cc, &aa), 0.5 * g);
                        }
                    }
                }
            }
        }
    }
    // c·X^x Z^z = c·(−i)^k P with k the number of Y factors in P.
    let mut terms = Vec::new();
    for ((x, z), c) in total {
        let p = PauliString { x, z };
        let w = c * i_pow(p.n_y()).conj();
        if w.norm() < PAULI_PRUNE {
            continue;
        }
        if w.im.abs() > 1e-10 {
            return Err(Error::NonFinite("non-Hermitian Pauli coefficient"));
        }
        terms.push((w.re, p));
    }
    Ok(PauliHamiltonian { n_qubits: nq, terms })
}

/// `Σ_k c_k ⟨ψ|P_k|ψ⟩` for a normalized state.
pub fn expectation(state: &Statevector, ham: &PauliHamiltonian) -> Result<f64> {
    if state.n_qubits != ham.n_qubits {
        return Err(Error::DimensionMismatch {
            expected: ham.n_qubits,
            got: state.n_qubits,
        });
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidArgument(alloc::format!(
            "state norm {norm} differs from one"
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for &(c, p) in &ham.terms {
        let mut e = Complex64::new(0.0, 0.0);
        for (b, &a) in state.amps.iter().enumerate() {
            if a != 0.0 {
                let (out, phase) = p.act(b as u64);
                e += phase * (a * state.amps[out as usize]);
            }
        }
        acc += e * c;
    }
    if acc.im.abs() > 1e-10 {
        return Err(Error::NonFinite("imaginary energy residue"));
    }
    Ok(acc.re)
}

/// Energy of the circuit state under `ham`.
pub fn circuit_energy(params: &CascadeParams, ham: &PauliHamiltonian) -> Result<f64> {
    expectation(&apply_cascade(params), ham)
}

/// Angle derivatives by the two-point `±π/2` shift rule.
pub fn circuit_gradient(params: &CascadeParams, ham: &PauliHamiltonian) -> Result<Vec<f64>> {
    (0..params.angles.len())
        .map(|k| {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.angles[k] += 0.5 * PI;
            minus.angles[k] -= 0.5 * PI;
            Ok(0.5 * (circuit_energy(&plus, ham)? - circuit_energy(&minus, ham)?))
        })
        .collect()
}

/// `Re[⟨∂_kψ|∂_lψ⟩ − ⟨∂_kψ|ψ⟩⟨ψ|∂_lψ⟩]`.
pub fn qng_metric(params: &CascadeParams) -> DMatrix<f64> {
    let psi = apply_cascade(params);
    metric_from_states(&psi, &derivative_states(params))
}

fn metric_from_states(psi: &Statevector, derivs: &[Statevector]) -> DMatrix<f64> {
    let p = derivs.len();
    let proj: Vec<f64> = derivs.iter().map(|d| d.dot(psi)).collect();
    let mut g = DMatrix::zeros(p, p);
    for k in 0..p {
        for l in k..p {
            let v = derivs[k].dot(&derivs[l]) - proj[k] * proj[l];
            g[(k, l)] = v;
            g[(l, k)] = v;
        }
    }
    g
}

/// `H|ψ⟩` over the whole register, row by row from the excitation table.
pub fn apply_hamiltonian(table: &LocalEnergyTable, state: &Statevector) -> Vec<f64> {
    let mut out = vec![0.0; state.amps.len()];
    for (b, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        table.for_each_connected(Configuration(b as u64), |c, v| {
            acc += v * state.amps[c.bits() as usize];
        });
        *o = acc;
    }
    out
}

/// `⟨ψ|[H, E_pq]|ψ⟩` for all `p, q`, from `Hψ`, with `E_pq = Σ_σ c†_pσ c_qσ`.
pub fn generator_gradient(n_orb: usize, state: &Statevector, h_psi: &[f64]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n_orb, n_orb);
    for p in 0..n_orb {
        for q in 0..n_orb {
            if p == q {
                continue;
            }
            let mut acc = 0.0;
            for s in Spin::BOTH {
                let (mp, mq) = (mode(n_orb, p, s), mode(n_orb, q, s));
                for (b, &a) in state.amps.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let c = Configuration(b as u64);
                    if let Some((out, sign)) = apply_one(c, mp, mq) {
                        acc += h_psi[out.bits() as usize] * sign * a;
                    }
                    if let Some((out, sign)) = apply_one(c, mq, mp) {
                        acc -= h_psi[out.bits() as usize] * sign * a;
                    }
                }
            }
            g[(p, q)] = acc;
        }
    }
    g
}

/// `dE/dκ_k = Σ_pq (Φᵀ ∂_kΦ)_pq ⟨[H(κ), E_pq]⟩`.
pub fn orbital_force(rotation: &OrbitalRotation, generator: &DMatrix<f64>) -> Result<Vec<f64>> {
    let phi_t = rotation.phi().transpose();
    rotation
        .phi_derivatives()?
        .iter()
        .map(|d| Ok((&phi_t * d).component_mul(generator).sum()))
        .collect()
}

/// Energy, forces and metric at one point.
#[derive(Debug, Clone)]
pub struct VqeEvaluation {
    pub energy: f64,
    pub variance: f64,
    pub angle_force: Vec<f64>,
    pub orbital_force: Vec<f64>,
    pub metric: DMatrix<f64>,
    pub state: Statevector,
}

/// Evaluates the circuit state on the integrals rotated by `rotation`.
pub fn vqe_evaluate(
    integrals: &IntegralSet,
    params: &CascadeParams,
    rotation: &OrbitalRotation,
    with_orbital_force: bool,
) -> Result<VqeEvaluation> {
    let n = integrals.n_orb;
    if params.n_qubits != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            got: params.n_qubits,
        });
    }
    let table = LocalEnergyTable::new(&rotation.rotate(integrals));
    let psi = apply_cascade(params);
    let h_psi = apply_hamiltonian(&table, &psi);
    let energy = dot(&psi.amps, &h_psi);
    let variance = (dot(&h_psi, &h_psi) - energy * energy).max(0.0);
    let derivs = derivative_states(params);
    let angle_force = derivs.iter().map(|d| 2.0 * dot(&d.amps, &h_psi)).collect();
    let metric = metric_from_states(&psi, &derivs);
    let orbital_force = if with_orbital_force {
        orbital_force(rotation, &generator_gradient(n, &psi, &h_psi))?
    } else {
        Vec::new()
    };
    Ok(VqeEvaluation {
        energy,
        variance,
        angle_force,
        orbital_force,
        metric,
        state: psi,
    })
}

#[derive(Debug, Clone)]
pub struct VqeTrajectory {
    /// Network parameters in the state are the circuit angles.
    pub trajectory: Trajectory,
    /// Weight of the final state in the target sector.
    pub sector_weight: f64,
}

fn record(step: usize, eval: &VqeEvaluation, eta: f64) -> StepRecord {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    StepRecord {
        step,
        energy: eval.energy,
        energy_error: 0.0,
        variance: eval.variance,
        force_theta_norm: norm(&eval.angle_force),
        force_kappa_norm: norm(&eval.orbital_force),
        acceptance: None,
        eta,
    }
}

/// Energy of the circuit state on the rotated integrals.
pub fn vqe_energy(integrals: &IntegralSet, params: &CascadeParams, rotation: &OrbitalRotation) -> f64 {
    let table = LocalEnergyTable::new(&rotation.rotate(integrals));
    let psi = apply_cascade(params);
    dot(&psi.amps, &apply_hamiltonian(&table, &psi))
}

/// Step-scale factor after an accepted backtracking step.
const SCALE_GROWTH: f64 = 1.5;
/// Step-scale factor after a rejected trial.
const SCALE_SHRINK: f64 = 0.3;
/// Rejected trials before a point is declared stationary.
const MAX_BACKTRACKS: usize = 20;

/// Joint optimization of circuit angles and orbital rotation on the
/// classically rotated integrals.
///
/// The natural-gradient rule moves the angles by the quantum natural
/// gradient and `κ` by its plain gradient. With `cfg.backtracking` both
/// updates share a step scale that starts at one and is capped where the
/// larger effective step size reaches one; a point where no trial lowers the
/// energy ends the run as converged. The L-BFGS rule treats angles and `κ`
/// as one vector, starting from a gradient step of size `η`.
pub fn vqe_run(
    integrals: &IntegralSet,
    sector: &Sector,
    init: &CascadeParams,
    cfg: &OptimizerConfig,
) -> Result<VqeTrajectory> {
    cfg.validate()?;
    integrals.validate()?;
    let n = integrals.n_orb;
    let params = CascadeParams::new(init.layout, 2 * n, init.layers, init.angles.clone())?;
    let (params, rotation, records, converged) = if cfg.rule == UpdateRule::Lbfgs {
        lbfgs_loop(integrals, params, cfg)?
    } else {
        gradient_loop(integrals, params, cfg)?
    };
    let last = vqe_evaluate(integrals, &params, &rotation, cfg.kappa_enabled)?;
    let sector_weight = last.state.sector_weight(sector);
    let final_record = record(records.len(), &last, cfg.step_sizes(records.len()).0);
    Ok(VqeTrajectory {
        trajectory: Trajectory {
            records,
            final_record,
            state: VmcState {
                params: params.angles,
                rotation,
            },
            converged,
        },
        sector_weight,
    })
}

type LoopOutcome = (CascadeParams, OrbitalRotation, Vec<StepRecord>, bool);

fn gradient_loop(integrals: &IntegralSet, mut params: CascadeParams, cfg: &OptimizerConfig) -> Result<LoopOutcome> {
    let mut rotation = OrbitalRotation::identity(integrals.n_orb);
    let mut records = Vec::with_capacity(cfg.steps);
    let mut converged = false;
    let mut scale = 1.0;
    for step in 0..cfg.steps {
        let (eta, eta_kappa) = cfg.step_sizes(step);
        let eval = vqe_evaluate(integrals, &params, &rotation, cfg.kappa_enabled)?;
        let d_theta: Vec<f64> = if !cfg.theta_enabled {
            vec![0.0; params.angles.len()]
        } else if cfg.rule == UpdateRule::PlainGradient {
            eval.angle_force.iter().map(|f| -eta * f).collect()
        } else {
            sr_solve(
                &MetricTensor::from_dense(eval.metric.clone()),
                &eval.angle_force,
                eta,
                cfg.shift,
            )?
        };
        let d_kappa: Vec<f64> = eval.orbital_force.iter().map(|f| -eta_kappa * f).collect();
        let trial = |s: f64| -> Result<(CascadeParams, OrbitalRotation)> {
            let mut p = params.clone();
            for (a, d) in p.angles.iter_mut().zip(&d_theta) {
                *a += s * d;
            }
            if p.angles.iter().any(|a| !a.is_finite()) {
                return Err(Error::NonFinite("circuit angles"));
            }
            let mut r = rotation.clone();
            if !d_kappa.is_empty() {
                r.step(&d_kappa.iter().map(|d| s * d).collect::<Vec<_>>())?;
            }
            Ok((p, r))
        };
        if !cfg.backtracking {
            (params, rotation) = trial(1.0)?;
            records.push(record(step, &eval, eta));
        } else {
            let max_scale = 1.0 / eta.max(eta_kappa).max(f64::MIN_POSITIVE);
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let (p, r) = trial(scale)?;
                if vqe_energy(integrals, &p, &r) < eval.energy {
                    accepted = Some((p, r));
                    break;
                }
                scale *= SCALE_SHRINK;
            }
            records.push(record(step, &eval, eta * scale));
            match accepted {
                Some((p, r)) => {
                    params = p;
                    rotation = r;
                    scale = (scale * SCALE_GROWTH).min(max_scale.max(1.0));
                }
                None => {
                    converged = true;
                    break;
                }
            }
        }
        if has_converged(&records, cfg) {
            converged = true;
            break;
        }
    }
    Ok((params, rotation, records, converged))
}

/// Energy and analytic gradients without the metric.
struct Point {
    energy: f64,
    variance: f64,
    angle_grad: Vec<f64>,
    orbital_grad: Vec<f64>,
}

fn point(integrals: &IntegralSet, params: &CascadeParams, rotation: &OrbitalRotation, cfg: &OptimizerConfig) -> Result<Point> {
    let table = LocalEnergyTable::new(&rotation.rotate(integrals));
    let psi = apply_cascade(params);
    let h_psi = apply_hamiltonian(&table, &psi);
    let energy = dot(&psi.amps, &h_psi);
    let variance = (dot(&h_psi, &h_psi) - energy * energy).max(0.0);
    let angle_grad = if cfg.theta_enabled {
        adjoint_gradient(params, &psi, &h_psi)
    } else {
        Vec::new()
    };
    let orbital_grad = if cfg.kappa_enabled {
        orbital_force(rotation, &generator_gradient(integrals.n_orb, &psi, &h_psi))?
    } else {
        Vec::new()
    };
    Ok(Point {
        energy,
        variance,
        angle_grad,
        orbital_grad,
    })
}

/// Curvature pairs kept by the L-BFGS update.
const LBFGS_MEMORY: usize = 10;
/// Sufficient-decrease constant of the Armijo condition.
const ARMIJO: f64 = 1e-4;
/// Step halvings tried before the point is declared stationary.
const MAX_HALVINGS: usize = 30;

fn lbfgs_loop(integrals: &IntegralSet, mut params: CascadeParams, cfg: &OptimizerConfig) -> Result<LoopOutcome> {
    let mut rotation = OrbitalRotation::identity(integrals.n_orb);
    let n_theta = if cfg.theta_enabled { params.angles.len() } else { 0 };
    let split = |x: &[f64], params: &CascadeParams, rotation: &OrbitalRotation| -> Result<(CascadeParams, OrbitalRotation)> {
        let mut p = params.clone();
        p.angles[..n_theta].copy_from_slice(&x[..n_theta]);
        if p.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("circuit angles"));
        }
        let mut r = rotation.clone();
        if cfg.kappa_enabled {
            r.set_params(x[n_theta..].to_vec())?;
        }
        Ok((p, r))
    };
    let gradient = |pt: &Point| -> Vec<f64> { pt.angle_grad.iter().chain(&pt.orbital_grad).copied().collect() };
    let mut x: Vec<f64> = params.angles[..n_theta].to_vec();
    if cfg.kappa_enabled {
        x.extend_from_slice(rotation.params());
    }
    let mut current = point(integrals, &params, &rotation, cfg)?;
    let mut g = gradient(&current);
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut records = Vec::with_capacity(cfg.steps);
    let mut converged = false;
    for step in 0..cfg.steps {
        let (eta, _) = cfg.step_sizes(step);
        let mut d = lbfgs_direction(&g, &pairs);
        let mut slope = dot(&g, &d);
        if pairs.is_empty() || !(slope < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -eta * v).collect();
            slope = dot(&g, &d);
        }
        let norm = |v: &[f64]| dot(v, v).sqrt();
        let mut rec = StepRecord {
            step,
            energy: current.energy,
            energy_error: 0.0,
            variance: current.variance,
            force_theta_norm: norm(&current.angle_grad),
            force_kappa_norm: norm(&current.orbital_grad),
            acceptance: None,
            eta: 0.0,
        };
        let mut t = 1.0;
        let mut accepted = None;
        if slope < 0.0 {
            for _ in 0..MAX_HALVINGS {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let (p, r) = split(&xn, &params, &rotation)?;
                let pt = point(integrals, &p, &r, cfg)?;
                if pt.energy <= current.energy + ARMIJO * t * slope {
                    accepted = Some((xn, p, r, pt));
                    break;
                }
                t *= 0.5;
            }
        }
        let Some((xn, p, r, pt)) = accepted else {
            records.push(rec);
            converged = true;
            break;
        };
        rec.eta = t;
        records.push(rec);
        let gn = gradient(&pt);
        let s_vec: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y_vec: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s_vec, &y_vec);
        if sy > f64::EPSILON * dot(&y_vec, &y_vec).sqrt() * dot(&s_vec, &s_vec).sqrt() {
            if pairs.len() == LBFGS_MEMORY {
                pairs.remove(0);
            }
            pairs.push((s_vec, y_vec, 1.0 / sy));
        }
        (x, params, rotation, current, g) = (xn, p, r, pt, gn);
        if has_converged(&records, cfg) {
            converged = true;
            break;
        }
    }
    Ok((params, rotation, records, converged))
}

/// Two-loop recursion: `−H g` for the inverse-Hessian estimate `H` of the
/// stored pairs, scaled initially by `sᵀy / yᵀy` of the latest pair.
fn lbfgs_direction(g: &[f64], pairs: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; pairs.len()];
    for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[i] = rho * dot(s, &q);
        for (a, b) in q.iter_mut().zip(y) {
            *a -= alpha[i] * b;
        }
    }
    if let Some((s, y, _)) = pairs.last() {
        let gamma = dot(s, y) / dot(y, y);
        for a in &mut q {
            *a *= gamma;
        }
    }
    for (i, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * dot(y, &q);
        for (a, b) in q.iter_mut().zip(s) {
            *a += (alpha[i] - beta) * b;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// One paired restart: identical initial angles with and without rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartRow {
    pub init_id: usize,
    pub seed: u64,
    pub error_rotated: f64,
    pub error_fixed: f64,
    pub iterations_rotated: usize,
    pub iterations_fixed: usize,
    pub sector_weight_rotated: f64,
    pub sector_weight_fixed: f64,
}

/// Seed of the `i`-th restart.
pub fn restart_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Circuit shape and seeding shared by every restart of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestartPlan {
    pub layout: CascadeLayout,
    pub layers: usize,
    pub n_inits: usize,
    pub seed: u64,
}

/// Runs restart `init_id` of `plan`; errors are relative to `reference`.
pub fn restart_pair(
    integrals: &IntegralSet,
    sector: &Sector,
    reference: f64,
    plan: &RestartPlan,
    init_id: usize,
    cfg: &OptimizerConfig,
) -> Result<RestartRow> {
    let s = restart_seed(plan.seed, init_id);
    let init = CascadeParams::random(plan.layout, 2 * integrals.n_orb, plan.layers, s)?;
    let on = OptimizerConfig {
        kappa_enabled: true,
        ..cfg.clone()
    };
    let off = OptimizerConfig {
        kappa_enabled: false,
        ..cfg.clone()
    };
    let r = vqe_run(integrals, sector, &init, &on)?;
    let f = vqe_run(integrals, sector, &init, &off)?;
    Ok(RestartRow {
        init_id,
        seed: s,
        error_rotated: r.trajectory.final_record.energy - reference,
        error_fixed: f.trajectory.final_record.energy - reference,
        iterations_rotated: r.trajectory.records.len(),
        iterations_fixed: f.trajectory.records.len(),
        sector_weight_rotated: r.sector_weight,
        sector_weight_fixed: f.sector_weight,
    })
}

/// `plan.n_inits` paired restarts from uniformly random angles, in order.
pub fn restart_study(
    integrals: &IntegralSet,
    sector: &Sector,
    reference: f64,
    plan: &RestartPlan,
    cfg: &OptimizerConfig,
) -> Result<Vec<RestartRow>> {
    if plan.n_inits < 2 {
        return Err(Error::InvalidArgument("restart study needs at least two initializations".into()));
    }
    (0..plan.n_inits)
        .map(|i| restart_pair(integrals, sector, reference, plan, i, cfg))
        .collect()
}

/// Fraction of `errors` at or below each threshold.
pub fn cumulative_fraction(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if errors.is_empty() {
        return vec![0.0; thresholds.len()];
    }
    thresholds
        .iter()
        .map(|t| errors.iter().filter(|&&e| e <= *t).count() as f64 / errors.len() as f64)
        .collect()
}

/// Number of orbital-rotation parameters for `n_orb` orbitals, in the order
/// of [`param_pair`].
pub fn orbital_pairs(n_orb: usize) -> Vec<(usize, usize)> {
    (0..n_params(n_orb)).map(param_pair).collect()
}
