//! Exact diagonalization within a particle-number sector and exact reduced
//! density matrices. Ground truth for the variational machinery.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::RdmSet;
use crate::fock::{apply_one, apply_two, mode, Configuration, SectorBasis, Spin};
use crate::integrals::IntegralSet;

/// Dimension up to which the Hamiltonian is stored and diagonalized densely.
pub const DENSE_LIMIT: usize = 4096;
/// Default cap on stored nonzeros for the sparse representation.
pub const DEFAULT_NONZERO_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone)]
enum Storage {
    Dense(DMatrix<f64>),
    /// Compressed rows: `row_ptr[i]..row_ptr[i+1]` index into `cols`/`vals`.
    Sparse {
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

/// Hamiltonian restricted to one sector, in the basis order of [`SectorBasis`].
#[derive(Debug, Clone)]
pub struct SectorMatrix {
    dim: usize,
    storage: Storage,
}

impl SectorMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse {
                row_ptr,
                cols,
                vals,
            } => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                for i in 0..self.dim {
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        m[(i, cols[k])] += vals[k];
                    }
                }
                m
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Sparse {
                row_ptr,
                cols,
                vals,
            } => (row_ptr[i]..row_ptr[i + 1])
                .filter(|&k| cols[k] == j)
                .map(|k| vals[k])
                .sum(),
        }
    }

    /// `out = H x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        match &self.storage {
            Storage::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..self.dim).map(|j| m[(i, j)] * x[j]).sum();
                }
            }
            Storage::Sparse {
                row_ptr,
                cols,
                vals,
            } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (row_ptr[i]..row_ptr[i + 1])
                        .map(|k| vals[k] * x[cols[k]])
                        .sum();
                }
            }
        }
    }

    /// `xᵀ H x / xᵀ x`.
    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; self.dim];
        self.matvec(x, &mut hx);
        let num: f64 = x.iter().zip(&hx).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().map(|a| a * a).sum();
        num / den
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let m = self.to_dense();
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Column `ket` of the Hamiltonian, accumulated by applying every operator
/// string of the second-quantized Hamiltonian to the basis state.
fn column_entries(
    integrals: &IntegralSet,
    two_body: &[(usize, usize, usize, usize, f64)],
    basis: &SectorBasis,
    ket: Configuration,
    mut emit: impl FnMut(usize, f64),
) {
    let n = integrals.n_orb;
    let mut push = |c: Configuration, v: f64| {
        let i = basis
            .index_of(c)
            .expect("number-conserving operator left the sector");
        emit(i, v);
    };
    push(ket, integrals.core);
    for spin in Spin::BOTH {
        for p in 0..n {
            for q in 0..n {
                let hpq = integrals.h[(p, q)];
                if hpq == 0.0 {
                    continue;
                }
                if let Some((c, sign)) = apply_one(ket, mode(n, p, spin), mode(n, q, spin)) {
                    push(c, hpq * sign);
                }
            }
        }
    }
    for &(p, q, r, s, g) in two_body {
        for s1 in Spin::BOTH {
            for s2 in Spin::BOTH {
                if let Some((c, sign)) = apply_two(
                    ket,
                    mode(n, p, s1),
                    mode(n, q, s2),
                    mode(n, s, s2),
                    mode(n, r, s1),
                ) {
                    push(c, 0.5 * g * sign);
                }
            }
        }
    }
}

/// Sector Hamiltonian with the default nonzero cap.
pub fn build_sector_hamiltonian(
    integrals: &IntegralSet,
    basis: &SectorBasis,
) -> Result<SectorMatrix> {
    build_sector_hamiltonian_with(integrals, basis, DENSE_LIMIT, DEFAULT_NONZERO_LIMIT)
}

/// Sector Hamiltonian; dense when `dim ≤ dense_limit`, otherwise compressed
/// sparse rows holding at most `nonzero_limit` entries.
pub fn build_sector_hamiltonian_with(
    integrals: &IntegralSet,
    basis: &SectorBasis,
    dense_limit: usize,
    nonzero_limit: usize,
) -> Result<SectorMatrix> {
    if basis.sector().n_orb != integrals.n_orb {
        return Err(Error::DimensionMismatch {
            expected: integrals.n_orb,
            got: basis.sector().n_orb,
        });
    }
    let dim = basis.len();
    let two_body = integrals.nonzero_two_body();
    if dim <= dense_limit {
        let mut m = DMatrix::zeros(dim, dim);
        for (j, &ket) in basis.configs().iter().enumerate() {
            column_entries(integrals, &two_body, basis, ket, |i, v| m[(i, j)] += v);
        }
        return Ok(SectorMatrix {
            dim,
            storage: Storage::Dense(m),
        });
    }
    // H is symmetric, so the compressed columns double as compressed rows.
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let mut scratch: Vec<(usize, f64)> = Vec::new();
    for &ket in basis.configs() {
        scratch.clear();
        column_entries(integrals, &two_body, basis, ket, |i, v| scratch.push((i, v)));
        scratch.sort_unstable_by_key(|e| e.0);
        let mut k = 0;
        while k < scratch.len() {
            let i = scratch[k].0;
            let mut v = 0.0;
            while k < scratch.len() && scratch[k].0 == i {
                v += scratch[k].1;
                k += 1;
            }
            if v != 0.0 {
                cols.push(i);
                vals.push(v);
            }
        }
        if cols.len() > nonzero_limit {
            return Err(Error::Capacity {
                what: "sector Hamiltonian nonzeros",
                requested: cols.len(),
                limit: nonzero_limit,
            });
        }
        row_ptr.push(cols.len());
    }
    Ok(SectorMatrix {
        dim,
        storage: Storage::Sparse {
            row_ptr,
            cols,
            vals,
        },
    })
}

/// Flips `v` so that its first non-negligible component is positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Lowest eigenpair; dense solve for dense storage, Lanczos otherwise.
pub fn ground_state(matrix: &SectorMatrix) -> Result<(f64, Vec<f64>)> {
    match &matrix.storage {
        Storage::Dense(m) => {
            let eig = SymmetricEigen::new(m.clone());
            let (k, &e0) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).expect("NaN eigenvalue"))
                .ok_or(Error::EmptyBatch)?;
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            fix_sign(&mut v);
            Ok((e0, v))
        }
        Storage::Sparse { .. } => lanczos_ground_state(matrix, 300, 50, 1e-10),
    }
}

/// All eigenvalues, ascending (dense only; used for spectrum comparisons).
pub fn spectrum(matrix: &SectorMatrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(matrix.to_dense());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("NaN eigenvalue"));
    vals
}

/// Restarted Lanczos with full reorthogonalization and a fixed-seed start vector.
pub fn lanczos_ground_state(
    matrix: &SectorMatrix,
    krylov_dim: usize,
    max_restarts: usize,
    tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let dim = matrix.dim();
    let m = krylov_dim.min(dim).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut start: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut w = vec![0.0; dim];
    for iteration in 0..max_restarts {
        normalize(&mut start);
        let mut q: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for j in 0..m {
            matrix.matvec(&q[j], &mut w);
            let a = dot(&w, &q[j]);
            alpha.push(a);
            // Full reorthogonalization, applied twice.
            for _ in 0..2 {
                for qi in &q {
                    let c = dot(&w, qi);
                    for (x, y) in w.iter_mut().zip(qi) {
                        *x -= c * y;
                    }
                }
            }
            let b = dot(&w, &w).sqrt();
            if j + 1 == m || b < 1e-12 {
                break;
            }
            beta.push(b);
            q.push(w.iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j || j + 1 == i {
                beta[i.min(j)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (idx, &e0) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("NaN eigenvalue"))
            .expect("empty Krylov space");
        let coeffs = eig.eigenvectors.column(idx);
        let mut v = vec![0.0; dim];
        for (c, qi) in coeffs.iter().zip(&q) {
            for (x, y) in v.iter_mut().zip(qi) {
                *x += c * y;
            }
        }
        normalize(&mut v);
        matrix.matvec(&v, &mut w);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - e0 * b) * (a - e0 * b))
            .sum::<f64>()
            .sqrt();
        if residual <= tol || k == dim {
            fix_sign(&mut v);
            return Ok((e0, v));
        }
        let _ = iteration;
        start = v;
    }
    Err(Error::NoConvergence {
        iterations: max_restarts,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Spin-resolved 1- and 2-RDMs of a real sector vector, by direct application
/// of every operator string to every basis state.
pub fn exact_rdms(vector: &[f64], basis: &SectorBasis) -> Result<RdmSet> {
    if vector.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: vector.len(),
        });
    }
    let n = basis.sector().n_orb;
    let norm: f64 = vector.iter().map(|x| x * x).sum();
    let mut rdm = RdmSet::zeros(n);
    for (j, &ket) in basis.configs().iter().enumerate() {
        let vj = vector[j];
        if vj == 0.0 {
            continue;
        }
        for s1 in Spin::BOTH {
            for p in 0..n {
                for q in 0..n {
                    if let Some((c, sign)) = apply_one(ket, mode(n, p, s1), mode(n, q, s1)) {
                        let i = basis.index_of(c).expect("left sector");
                        rdm.one[s1.index()][(p, q)] += vector[i] * sign * vj / norm;
                    }
                }
            }
            for s2 in Spin::BOTH {
                let t = &mut rdm.two[2 * s1.index() + s2.index()];
                for p in 0..n {
                    for q in 0..n {
                        for r in 0..n {
                            for s in 0..n {
                                if let Some((c, sign)) = apply_two(
                                    ket,
                                    mode(n, p, s1),
                                    mode(n, q, s2),
                                    mode(n, s, s2),
                                    mode(n, r, s1),
                                ) {
                                    let i = basis.index_of(c).expect("left sector");
                                    t.add(p, q, r, s, vector[i] * sign * vj / norm);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(rdm)
}

/// Convenience: ground-state energy of `integrals` in `basis`.
pub fn ground_energy(integrals: &IntegralSet, basis: &SectorBasis) -> Result<f64> {
    Ok(ground_state(&build_sector_hamiltonian(integrals, basis)?)?.0)
}

/// Dense vector view as nalgebra type.
pub fn as_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Sector;
    use crate::integrals::test_support::*;
    use crate::integrals::{hubbard_ring, rotate_integrals, HubbardSpec};

    fn hubbard(sites: usize, u: f64) -> IntegralSet {
        hubbard_ring(&HubbardSpec::new(sites, 1.0, u, true).unwrap())
    }

    #[test]
    fn two_site_matrix_entries() {
        let ints = hubbard(2, 4.0);
        let basis = SectorBasis::new(Sector::new(2, 1, 1).unwrap()).unwrap();
        let m = build_sector_hamiltonian(&ints, &basis).unwrap().to_dense();
        for (i, &c) in basis.configs().iter().enumerate() {
            let doubly = (c.bits() & 0b11) & (c.bits() >> 2);
            let expect = if doubly != 0 { 4.0 } else { 0.0 };
            assert_eq!(m[(i, i)], expect);
            for j in 0..4 {
                if i != j {
                    assert!(m[(i, j)] == 0.0 || m[(i, j)].abs() == 1.0);
                }
            }
        }
        let nonzero_offdiag = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && m[(i, j)] != 0.0)
            .count();
        assert_eq!(nonzero_offdiag, 8);
    }

    #[test]
    fn two_site_closed_form() {
        for &u in &[0.0, 1.0, 4.0, 10.0] {
            let ints = hubbard(2, u);
            let basis = SectorBasis::new(Sector::new(2, 1, 1).unwrap()).unwrap();
            let e0 = ground_energy(&ints, &basis).unwrap();
            let exact = u / 2.0 - (u * u / 4.0 + 4.0).sqrt();
            assert!((e0 - exact).abs() < 1e-12, "U={u}: {e0} vs {exact}");
        }
    }

    #[test]
    fn six_site_free_band() {
        let basis = SectorBasis::new(Sector::new(6, 3, 3).unwrap()).unwrap();
        let m = build_sector_hamiltonian(&hubbard(6, 0.0), &basis).unwrap();
        let (e0, v) = ground_state(&m).unwrap();
        assert!((e0 + 8.0).abs() < 1e-10);
        let mut hv = vec![0.0; v.len()];
        m.matvec(&v, &mut hv);
        let res: f64 = hv.iter().zip(&v).map(|(a, b)| (a - e0 * b).powi(2)).sum();
        assert!(res.sqrt() < 1e-9);
    }

    #[test]
    fn strong_coupling_asymptotics() {
        let basis = SectorBasis::new(Sector::new(2, 1, 1).unwrap()).unwrap();
        let e0 = ground_energy(&hubbard(2, 50.0), &basis).unwrap();
        let approx = -4.0 / 50.0;
        assert!(((e0 - approx) / approx).abs() < 0.05);
    }

    #[test]
    fn core_only_is_scaled_identity() {
        let mut ints = IntegralSet::zeros(3);
        ints.core = 0.75;
        let basis = SectorBasis::new(Sector::new(3, 1, 2).unwrap()).unwrap();
        let m = build_sector_hamiltonian(&ints, &basis).unwrap().to_dense();
        assert_eq!(m, DMatrix::identity(basis.len(), basis.len()) * 0.75);
    }

    #[test]
    fn rotated_spectrum_is_invariant() {
        let ints = random_integrals(4, 11);
        let basis = SectorBasis::new(Sector::new(4, 2, 2).unwrap()).unwrap();
        let phi = random_orthogonal(4, 12);
        let rot = rotate_integrals(&ints, &phi).unwrap();
        let a = spectrum(&build_sector_hamiltonian(&ints, &basis).unwrap());
        let b = spectrum(&build_sector_hamiltonian(&rot, &basis).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn matrix_is_symmetric() {
        let ints = random_integrals(4, 7);
        let basis = SectorBasis::new(Sector::new(4, 2, 1).unwrap()).unwrap();
        let m = build_sector_hamiltonian(&ints, &basis).unwrap();
        assert!(m.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn sparse_and_lanczos_agree_with_dense() {
        let ints = hubbard(6, 4.0);
        let basis = SectorBasis::new(Sector::new(6, 3, 3).unwrap()).unwrap();
        let dense = build_sector_hamiltonian(&ints, &basis).unwrap();
        let sparse = build_sector_hamiltonian_with(&ints, &basis, 10, 1_000_000).unwrap();
        assert!(!sparse.is_dense());
        assert!((&dense.to_dense() - sparse.to_dense()).abs().max() < 1e-14);
        let (e_dense, v_dense) = ground_state(&dense).unwrap();
        let (e_sparse, v_sparse) = ground_state(&sparse).unwrap();
        assert!((e_dense - e_sparse).abs() < 1e-10);
        let overlap: f64 = v_dense.iter().zip(&v_sparse).map(|(a, b)| a * b).sum();
        assert!(overlap.abs() > 1.0 - 1e-8);
        let tight = build_sector_hamiltonian_with(&ints, &basis, 10, 100);
        assert!(matches!(tight, Err(Error::Capacity { .. })));
    }

    #[test]
    fn rdm_recontraction_gives_energy() {
        let ints = random_integrals(4, 21);
        let basis = SectorBasis::new(Sector::new(4, 2, 1).unwrap()).unwrap();
        let (e0, v) = ground_state(&build_sector_hamiltonian(&ints, &basis).unwrap()).unwrap();
        let rdm = exact_rdms(&v, &basis).unwrap();
        assert!((rdm.energy(&ints) - e0).abs() < 1e-9);
        assert!((rdm.one[0].trace() - 2.0).abs() < 1e-10);
        assert!((rdm.one[1].trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_site_double_occupancy() {
        // Singlet ground state of the 2-site model: ⟨n_i↑ n_i↓⟩ = (1 - cos φ)/4
        // with tan φ = 4t / U, from the closed-form eigenvector.
        let u = 4.0;
        let ints = hubbard(2, u);
        let basis = SectorBasis::new(Sector::new(2, 1, 1).unwrap()).unwrap();
        let (_, v) = ground_state(&build_sector_hamiltonian(&ints, &basis).unwrap()).unwrap();
        let rdm = exact_rdms(&v, &basis).unwrap();
        let phi = (4.0f64 / u).atan();
        let expected = (1.0 - phi.cos()) / 4.0;
        // ⟨c†_0↑ c†_0↓ c_0↓ c_0↑⟩ = ⟨n_0↑ n_0↓⟩
        assert!((rdm.two[1].get(0, 0, 0, 0) - expected).abs() < 1e-12);
    }
}
