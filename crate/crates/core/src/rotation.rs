//! Orbital rotations `Φ = exp(κ)` generated by a real antisymmetric `κ`.
//!
//! The free parameters are the strictly lower-triangular entries of `κ` in
//! row order `(1,0), (2,0), (2,1), (3,0), …`; parameter `θ` at `(p, q)`
//! sets `κ[p][q] = θ` and `κ[q][p] = −θ`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::integrals::{orthogonality_defect, rotate_unchecked, IntegralSet, Tensor4};
use crate::rdm::RdmSet;

/// Number of free rotation parameters for `n` orbitals.
pub fn n_params(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// `(p, q)` with `p > q` for parameter `k`.
pub fn param_pair(k: usize) -> (usize, usize) {
    let mut p = 1;
    while p * (p + 1) / 2 <= k {
        p += 1;
    }
    (p, k - p * (p - 1) / 2)
}

/// Parameter index of the pair `p > q`.
pub fn param_index(p: usize, q: usize) -> usize {
    debug_assert!(p > q);
    p * (p - 1) / 2 + q
}

pub fn kappa_matrix(n: usize, params: &[f64]) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(n, n);
    for (idx, &v) in params.iter().enumerate() {
        let (p, q) = param_pair(idx);
        k[(p, q)] = v;
        k[(q, p)] = -v;
    }
    k
}

/// Unit generator of parameter `k`.
pub fn direction(n: usize, k: usize) -> DMatrix<f64> {
    let (p, q) = param_pair(k);
    let mut e = DMatrix::zeros(n, n);
    e[(p, q)] = 1.0;
    e[(q, p)] = -1.0;
    e
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by degree-13 Padé approximation with scaling and squaring.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or(Error::NonFinite("singular Padé denominator"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `Φ = exp(κ)` from the free parameters.
pub fn expm_antisymmetric(n: usize, params: &[f64]) -> Result<DMatrix<f64>> {
    if params.len() != n_params(n) {
        return Err(Error::DimensionMismatch {
            expected: n_params(n),
            got: params.len(),
        });
    }
    expm(&kappa_matrix(n, params))
}

/// Fréchet derivative `L(κ, E)` of the exponential, read off the upper-right
/// block of `exp([[κ, E], [0, κ]])`.
pub fn expm_directional_derivative(kappa: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = kappa.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(kappa);
    block.view_mut((n, n), (n, n)).copy_from(kappa);
    block.view_mut((0, n), (n, n)).copy_from(e);
    let big = expm(&block)?;
    Ok(big.view((0, n), (n, n)).into_owned())
}

/// Parameters of `κ` together with the cached orthogonal `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalRotation {
    n_orb: usize,
    params: Vec<f64>,
    phi: DMatrix<f64>,
}

impl OrbitalRotation {
    pub fn identity(n_orb: usize) -> Self {
        OrbitalRotation {
            n_orb,
            params: vec![0.0; n_params(n_orb)],
            phi: DMatrix::identity(n_orb, n_orb),
        }
    }

    pub fn from_params(n_orb: usize, params: Vec<f64>) -> Result<Self> {
        let phi = expm_antisymmetric(n_orb, &params)?;
        Ok(OrbitalRotation { n_orb, params, phi })
    }

    /// Parameters drawn uniformly from `[-scale, scale]`; the identity when
    /// `scale` is zero.
    pub fn random(n_orb: usize, scale: f64, seed: u64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument("rotation scale must be non-negative".into()));
        }
        if scale == 0.0 {
            return Ok(Self::identity(n_orb));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..n_params(n_orb)).map(|_| rng.random_range(-scale..=scale)).collect();
        Self::from_params(n_orb, params)
    }

    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn kappa(&self) -> DMatrix<f64> {
        kappa_matrix(self.n_orb, &self.params)
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        self.phi = expm_antisymmetric(self.n_orb, &params)?;
        self.params = params;
        Ok(())
    }

    /// Adds `delta` to the parameters and refreshes `Φ`.
    pub fn step(&mut self, delta: &[f64]) -> Result<()> {
        let next: Vec<f64> = self.params.iter().zip(delta).map(|(a, b)| a + b).collect();
        self.set_params(next)
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.phi)
    }

    pub fn rotate(&self, integrals: &IntegralSet) -> IntegralSet {
        rotate_unchecked(integrals, &self.phi)
    }

    /// `dΦ/dθ_k` for every free parameter.
    pub fn phi_derivatives(&self) -> Result<Vec<DMatrix<f64>>> {
        let kappa = self.kappa();
        (0..self.params.len())
            .map(|k| expm_directional_derivative(&kappa, &direction(self.n_orb, k)))
            .collect()
    }
}

/// Derivatives of the rotated integrals along parameter `k`:
/// `h̃' = Φ'ᵀ h Φ + Φᵀ h Φ'` and the four product-rule terms for `g̃'`.
pub fn integral_derivatives(
    integrals: &IntegralSet,
    rotation: &OrbitalRotation,
    k: usize,
) -> Result<(DMatrix<f64>, Tensor4)> {
    let n = integrals.n_orb;
    let phi = rotation.phi();
    let dphi = expm_directional_derivative(&rotation.kappa(), &direction(n, k))?;
    let dh = dphi.transpose() * &integrals.h * phi + phi.transpose() * &integrals.h * &dphi;
    let g = &integrals.g;
    let mut dg = g.transform(&dphi, phi, phi, phi);
    for t in [
        g.transform(phi, &dphi, phi, phi),
        g.transform(phi, phi, &dphi, phi),
        g.transform(phi, phi, phi, &dphi),
    ] {
        for (a, b) in dg.as_mut_slice().iter_mut().zip(t.as_slice()) {
            *a += b;
        }
    }
    Ok((dh, dg))
}

/// Gradient of `core + Σ h̃ D + ½ Σ g̃ P` with respect to the entries of `Φ`,
/// for spin-summed densities `D`, `P` held fixed.
pub fn phi_gradient(
    integrals: &IntegralSet,
    phi: &DMatrix<f64>,
    one: &DMatrix<f64>,
    two: &Tensor4,
) -> DMatrix<f64> {
    let n = integrals.n_orb;
    let id = DMatrix::<f64>::identity(n, n);
    let mut grad = &integrals.h * phi * one.transpose() + integrals.h.transpose() * phi * one;
    let g = &integrals.g;
    // Slot t left untransformed; contract the remaining three slots with P.
    let partials = [
        g.transform(&id, phi, phi, phi),
        g.transform(phi, &id, phi, phi),
        g.transform(phi, phi, &id, phi),
        g.transform(phi, phi, phi, &id),
    ];
    for (slot, y) in partials.iter().enumerate() {
        for a in 0..n {
            for p in 0..n {
                let mut acc = 0.0;
                for x in 0..n {
                    for yy in 0..n {
                        for z in 0..n {
                            let (yi, pi) = match slot {
                                0 => ((a, x, yy, z), (p, x, yy, z)),
                                1 => ((x, a, yy, z), (x, p, yy, z)),
                                2 => ((x, yy, a, z), (x, yy, p, z)),
                                _ => ((x, yy, z, a), (x, yy, z, p)),
                            };
                            acc += y.get(yi.0, yi.1, yi.2, yi.3) * two.get(pi.0, pi.1, pi.2, pi.3);
                        }
                    }
                }
                grad[(a, p)] += 0.5 * acc;
            }
        }
    }
    grad
}

/// Orbital force `F_κ[k] = Σ h̃'_k Γ1 + ½ Σ g̃'_k Γ2` for bare-state RDMs.
pub fn kappa_force(
    integrals: &IntegralSet,
    rotation: &OrbitalRotation,
    rdms: &RdmSet,
) -> Result<Vec<f64>> {
    rdms.check_dims(integrals.n_orb)?;
    kappa_force_from_densities(
        integrals,
        rotation,
        &rdms.spin_summed_one(),
        &rdms.spin_summed_two(),
    )
}

/// [`kappa_force`] from spin-summed densities.
pub fn kappa_force_from_densities(
    integrals: &IntegralSet,
    rotation: &OrbitalRotation,
    one: &DMatrix<f64>,
    two: &Tensor4,
) -> Result<Vec<f64>> {
    let n = integrals.n_orb;
    if rotation.n_orb() != n || one.nrows() != n || two.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: one.nrows(),
        });
    }
    let grad = phi_gradient(integrals, rotation.phi(), one, two);
    Ok(rotation
        .phi_derivatives()?
        .iter()
        .map(|d| grad.iter().zip(d.iter()).map(|(a, b)| a * b).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{Sector, SectorBasis};
    use crate::integrals::test_support::*;
    use crate::integrals::{hubbard_ring, HubbardSpec};
    use crate::oracle::{build_sector_hamiltonian, exact_rdms, ground_state};
    use crate::rdm::contract;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(n: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_params(n)).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn parameter_layout() {
        assert_eq!(n_params(4), 6);
        let pairs: Vec<_> = (0..6).map(param_pair).collect();
        assert_eq!(pairs, [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]);
        for (k, &(p, q)) in pairs.iter().enumerate() {
            assert_eq!(param_index(p, q), k);
        }
        let k = kappa_matrix(3, &[0.1, 0.2, 0.3]);
        assert_eq!(k, -k.transpose());
        assert_eq!(k[(2, 1)], 0.3);
    }

    #[test]
    fn zero_kappa_gives_identity() {
        let phi = expm_antisymmetric(5, &[0.0; 10]).unwrap();
        assert_eq!(phi, DMatrix::identity(5, 5));
    }

    #[test]
    fn planar_rotation_closed_form() {
        let a = 0.3f64;
        let k = DMatrix::from_row_slice(2, 2, &[0.0, a, -a, 0.0]);
        let phi = expm(&k).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[a.cos(), a.sin(), -a.sin(), a.cos()]);
        assert!((phi - want).abs().max() < 1e-15);
    }

    #[test]
    fn large_kappa_triggers_squaring() {
        let a = 20.0f64;
        let k = DMatrix::from_row_slice(2, 2, &[0.0, a, -a, 0.0]);
        let phi = expm(&k).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[a.cos(), a.sin(), -a.sin(), a.cos()]);
        assert!((phi - want).abs().max() < 1e-12);
    }

    #[test]
    fn random_rotation_is_seeded_and_bounded() {
        let a = OrbitalRotation::random(4, 0.1, 3).unwrap();
        assert_eq!(a, OrbitalRotation::random(4, 0.1, 3).unwrap());
        assert_ne!(a, OrbitalRotation::random(4, 0.1, 4).unwrap());
        assert!(a.params().iter().all(|x| x.abs() <= 0.1));
        assert!(a.orthogonality_defect() < 1e-14);
        assert_eq!(OrbitalRotation::random(4, 0.0, 3).unwrap(), OrbitalRotation::identity(4));
        assert!(OrbitalRotation::random(4, -1.0, 3).is_err());
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(
            expm_antisymmetric(2, &[f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn derivative_at_zero_is_direction() {
        let e = direction(4, 3);
        let d = expm_directional_derivative(&DMatrix::zeros(4, 4), &e).unwrap();
        assert!((d - e).abs().max() < 1e-15);
    }

    #[test]
    fn planar_derivative_closed_form() {
        let a = 0.3f64;
        let rot = OrbitalRotation::from_params(2, vec![a]).unwrap();
        // Parameter a at (1,0) gives Φ = [[cos, −sin], [sin, cos]].
        let d = &rot.phi_derivatives().unwrap()[0];
        let want = DMatrix::from_row_slice(2, 2, &[-a.sin(), -a.cos(), a.cos(), -a.sin()]);
        assert!((d - want).abs().max() < 1e-14);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let n = 5;
        let params = random_params(n, 3, 0.8);
        let rot = OrbitalRotation::from_params(n, params.clone()).unwrap();
        let derivs = rot.phi_derivatives().unwrap();
        let h = 1e-5;
        for (k, d) in derivs.iter().enumerate() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (expm_antisymmetric(n, &plus).unwrap() - expm_antisymmetric(n, &minus).unwrap())
                / (2.0 * h);
            let rel = (&fd - d).abs().max() / d.abs().max();
            assert!(rel < 1e-6, "direction {k}: {rel}");
        }
    }

    #[test]
    fn integral_derivatives_match_finite_difference() {
        let ints = random_integrals(4, 9);
        let h = 1e-5;
        for k in 0..n_params(4) {
            let rot = OrbitalRotation::identity(4);
            let (dh, dg) = integral_derivatives(&ints, &rot, k).unwrap();
            let mut plus = vec![0.0; 6];
            let mut minus = vec![0.0; 6];
            plus[k] = h;
            minus[k] = -h;
            let ip = OrbitalRotation::from_params(4, plus).unwrap().rotate(&ints);
            let im = OrbitalRotation::from_params(4, minus).unwrap().rotate(&ints);
            let fd_h = (&ip.h - &im.h) / (2.0 * h);
            assert!((&fd_h - &dh).abs().max() <= 1e-7 * dh.abs().max().max(1.0));
            let scale = dg.max_abs().max(1.0);
            for (i, v) in dg.as_slice().iter().enumerate() {
                let fd = (ip.g.as_slice()[i] - im.g.as_slice()[i]) / (2.0 * h);
                assert!((fd - v).abs() <= 1e-7 * scale);
            }
        }
    }

    #[test]
    fn hubbard_two_site_planar_derivatives() {
        let t = 1.0;
        let ints = hubbard_ring(&HubbardSpec::new(2, t, 4.0, true).unwrap());
        let a = 0.37f64;
        let rot = OrbitalRotation::from_params(2, vec![a]).unwrap();
        let (dh, _) = integral_derivatives(&ints, &rot, 0).unwrap();
        let c2 = (2.0 * a).cos();
        let s2 = (2.0 * a).sin();
        assert!((dh[(0, 0)] + 2.0 * t * c2).abs() < 1e-13);
        assert!((dh[(1, 1)] - 2.0 * t * c2).abs() < 1e-13);
        assert!((dh[(0, 1)] - 2.0 * t * s2).abs() < 1e-13);
    }

    #[test]
    fn zero_integrals_have_zero_derivatives() {
        let ints = IntegralSet::zeros(3);
        let rot = OrbitalRotation::from_params(3, vec![0.1, 0.2, 0.3]).unwrap();
        for k in 0..3 {
            let (dh, dg) = integral_derivatives(&ints, &rot, k).unwrap();
            assert_eq!(dh.abs().max(), 0.0);
            assert_eq!(dg.max_abs(), 0.0);
        }
    }

    /// `⟨v|H(κ)|v⟩` for fixed `v` in the sector basis.
    fn exact_loss(ints: &IntegralSet, basis: &SectorBasis, v: &[f64], params: &[f64]) -> f64 {
        let rot = OrbitalRotation::from_params(ints.n_orb, params.to_vec()).unwrap();
        build_sector_hamiltonian(&rot.rotate(ints), basis)
            .unwrap()
            .rayleigh_quotient(v)
    }

    #[test]
    fn kappa_force_matches_exact_loss_finite_difference() {
        let ints = random_integrals(4, 31);
        let basis = SectorBasis::new(Sector::new(4, 2, 1).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = random_params(4, 6, 0.4);
        let rot = OrbitalRotation::from_params(4, params.clone()).unwrap();
        let rdm = exact_rdms(&v, &basis).unwrap();
        let force = kappa_force(&ints, &rot, &rdm).unwrap();
        let h = 1e-4;
        for k in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (exact_loss(&ints, &basis, &v, &plus) - exact_loss(&ints, &basis, &v, &minus))
                / (2.0 * h);
            let rel = (fd - force[k]).abs() / force[k].abs().max(1e-3);
            assert!(rel < 1e-5, "k={k}: {fd} vs {}", force[k]);
        }
    }

    #[test]
    fn kappa_force_matches_integral_derivative_contraction() {
        let ints = random_integrals(3, 8);
        let basis = SectorBasis::new(Sector::new(3, 1, 1).unwrap()).unwrap();
        let (_, v) = ground_state(&build_sector_hamiltonian(&ints, &basis).unwrap()).unwrap();
        let rdm = exact_rdms(&v, &basis).unwrap();
        let rot = OrbitalRotation::from_params(3, vec![0.2, -0.1, 0.4]).unwrap();
        let force = kappa_force(&ints, &rot, &rdm).unwrap();
        for k in 0..3 {
            let (dh, dg) = integral_derivatives(&ints, &rot, k).unwrap();
            let deriv = IntegralSet {
                n_orb: 3,
                core: 0.0,
                h: dh,
                g: dg,
            };
            let direct = contract(&deriv, &rdm.spin_summed_one(), &rdm.spin_summed_two());
            assert!((direct - force[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn one_body_force_closed_form() {
        // h = diag(ε0, ε1) plus coupling w, D = diag(2, 0): E(a) = 2 h̃_00,
        // h̃_00 = ε0 cos²a + ε1 sin²a + 2 w sin a cos a for Φ = [[c, −s], [s, c]].
        let (e0, e1, w) = (-1.0, 0.5, 0.2);
        let mut ints = IntegralSet::zeros(2);
        ints.h = DMatrix::from_row_slice(2, 2, &[e0, w, w, e1]);
        let mut rdm = RdmSet::zeros(2);
        rdm.one[0][(0, 0)] = 1.0;
        rdm.one[1][(0, 0)] = 1.0;
        let a = 0.25f64;
        let rot = OrbitalRotation::from_params(2, vec![a]).unwrap();
        let f = kappa_force(&ints, &rot, &rdm).unwrap()[0];
        let want = 2.0 * ((e1 - e0) * (2.0 * a).sin() + 2.0 * w * (2.0 * a).cos());
        assert!((f - want).abs() < 1e-13);
    }

    #[test]
    fn hubbard_two_site_uncorrelated_force() {
        // Both electrons in site 0 at κ = 0: E(a) = 2 h̃_00 + U (c⁴ + s⁴),
        // dE/da at 0 = −4t.
        let t = 1.0;
        let ints = hubbard_ring(&HubbardSpec::new(2, t, 4.0, true).unwrap());
        let mut rdm = RdmSet::zeros(2);
        rdm.one[0][(0, 0)] = 1.0;
        rdm.one[1][(0, 0)] = 1.0;
        rdm.two[1].set(0, 0, 0, 0, 1.0);
        rdm.two[2].set(0, 0, 0, 0, 1.0);
        let f = kappa_force(&ints, &OrbitalRotation::identity(2), &rdm).unwrap()[0];
        assert!((f + 4.0 * t).abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn exponential_is_special_orthogonal(seed in 0u64..10_000, scale in 0.01f64..3.0) {
            let n = 6;
            let phi = expm_antisymmetric(n, &random_params(n, seed, scale)).unwrap();
            prop_assert!(orthogonality_defect(&phi) < 1e-12);
            prop_assert!((phi.determinant() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn opposite_parameter_is_transpose(seed in 0u64..10_000) {
            let params = random_params(4, seed, 1.0);
            let neg: Vec<f64> = params.iter().map(|v| -v).collect();
            let a = expm_antisymmetric(4, &params).unwrap();
            let b = expm_antisymmetric(4, &neg).unwrap();
            prop_assert!((a.transpose() - b).abs().max() < 1e-13);
        }
    }
}
