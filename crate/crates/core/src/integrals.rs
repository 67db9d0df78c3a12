//! Hamiltonian coefficient tensors.
//!
//! The two-body tensor is stored in the operator ordering of
//!
//! ```text
//! H = core + Σ_{pq,σ} h_pq c†_pσ c_qσ
//!          + ½ Σ_{pqrs,σσ'} g_pqrs c†_pσ c†_qσ' c_sσ' c_rσ
//! ```
//!
//! so `g[p,q,r,s]` is the physicists' integral ⟨pq|rs⟩ = (pr|qs) in chemists'
//! notation. Conversion from FCIDUMP's chemists' ordering happens at the
//! parse boundary.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense rank-4 tensor with row-major `(p, q, r, s)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        t.data[((p * n + q) * n + r) * n + s] = f(p, q, r, s);
                    }
                }
            }
        }
        t
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        ((p * self.n + q) * self.n + r) * self.n + s
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.data[self.offset(p, q, r, s)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        let o = self.offset(p, q, r, s);
        self.data[o] = v;
    }

    #[inline]
    pub fn add(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        let o = self.offset(p, q, r, s);
        self.data[o] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Contracts every index with its own matrix:
    /// `out[p,q,r,s] = Σ t[i,j,k,l] a[i,p] b[j,q] c[k,r] d[l,s]`,
    /// as four sequential one-index transforms (O(n⁵)).
    pub fn transform(
        &self,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
    ) -> Tensor4 {
        let mut t = self.data.clone();
        let mut out = vec![0.0; t.len()];
        // Each pass contracts the last index and rotates it to the front.
        for m in [d, c, b, a] {
            rotate_contract_last(self.n, &t, m, &mut out);
            core::mem::swap(&mut t, &mut out);
        }
        Tensor4 { n: self.n, data: t }
    }

    /// Number of entries with magnitude above `tol`.
    pub fn count_nonzero(&self, tol: f64) -> usize {
        self.data.iter().filter(|v| v.abs() > tol).count()
    }
}

/// `out[l', i, j, k] = Σ_l t[i, j, k, l] m[l, l']`.
fn rotate_contract_last(n: usize, t: &[f64], m: &DMatrix<f64>, out: &mut [f64]) {
    let n3 = n * n * n;
    for x in out.iter_mut() {
        *x = 0.0;
    }
    for ijk in 0..n3 {
        let row = &t[ijk * n..(ijk + 1) * n];
        for (l, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for lp in 0..n {
                out[lp * n3 + ijk] += v * m[(l, lp)];
            }
        }
    }
}

/// Core energy, one-body matrix and two-body tensor over `n_orb` spatial orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSet {
    pub n_orb: usize,
    pub core: f64,
    pub h: DMatrix<f64>,
    pub g: Tensor4,
}

/// Absolute tolerance used when checking the two-body permutational symmetries.
pub const TWO_BODY_SYMMETRY_TOL: f64 = 1e-10;

impl IntegralSet {
    pub fn zeros(n_orb: usize) -> Self {
        IntegralSet {
            n_orb,
            core: 0.0,
            h: DMatrix::zeros(n_orb, n_orb),
            g: Tensor4::zeros(n_orb),
        }
    }

    /// Builds an integral set and checks its symmetries.
    pub fn new(core: f64, h: DMatrix<f64>, g: Tensor4) -> Result<Self> {
        let set = IntegralSet {
            n_orb: h.nrows(),
            core,
            h,
            g,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_orb;
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.h.ncols(),
            });
        }
        if self.g.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.g.dim(),
            });
        }
        let scale = self.h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for p in 0..n {
            for q in 0..p {
                if (self.h[(p, q)] - self.h[(q, p)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "one-body matrix not symmetric at ({p}, {q})"
                    )));
                }
            }
        }
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let v = self.g.get(p, q, r, s);
                        let images = [
                            self.g.get(q, p, s, r),
                            self.g.get(r, s, p, q),
                            self.g.get(r, q, p, s),
                            self.g.get(p, s, r, q),
                        ];
                        if images.iter().any(|w| (w - v).abs() > TWO_BODY_SYMMETRY_TOL) {
                            return Err(Error::InvalidArgument(alloc::format!(
                                "two-body tensor breaks real-orbital symmetry at ({p}, {q}, {r}, {s})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Chemists'-notation accessor `(pq|rs)`.
    #[inline]
    pub fn chemist(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.g.get(p, r, q, s)
    }

    /// Nonzero two-body entries `(p, q, r, s, g_pqrs)`, in storage order.
    pub fn nonzero_two_body(&self) -> Vec<(usize, usize, usize, usize, f64)> {
        let n = self.n_orb;
        let mut out = Vec::new();
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let v = self.g.get(p, q, r, s);
                        if v != 0.0 {
                            out.push((p, q, r, s, v));
                        }
                    }
                }
            }
        }
        out
    }

    /// Same Hamiltonian with `shift` added to the constant term.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        out.core += shift;
        out
    }

    pub fn max_abs_diff(&self, other: &IntegralSet) -> f64 {
        let dh = self
            .h
            .iter()
            .zip(other.h.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        dh.max(self.g.max_abs_diff(&other.g))
            .max((self.core - other.core).abs())
    }
}

/// One-dimensional Hubbard chain or ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubbardSpec {
    pub sites: usize,
    pub t: f64,
    pub u: f64,
    pub periodic: bool,
}

impl HubbardSpec {
    pub fn new(sites: usize, t: f64, u: f64, periodic: bool) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "Hubbard model needs at least 2 sites, got {sites}"
            )));
        }
        Ok(HubbardSpec {
            sites,
            t,
            u,
            periodic,
        })
    }
}

/// Hubbard Hamiltonian in the site basis: `h_ij = -t` on bonds, `g_iiii = U`.
///
/// For two sites the periodic closure coincides with the single bond and is
/// not counted twice.
pub fn hubbard_ring(spec: &HubbardSpec) -> IntegralSet {
    let n = spec.sites;
    let mut h = DMatrix::zeros(n, n);
    let bonds = if spec.periodic && n > 2 { n } else { n - 1 };
    for i in 0..bonds {
        let j = (i + 1) % n;
        h[(i, j)] = -spec.t;
        h[(j, i)] = -spec.t;
    }
    let mut g = Tensor4::zeros(n);
    for i in 0..n {
        g.set(i, i, i, i, spec.u);
    }
    IntegralSet {
        n_orb: n,
        core: 0.0,
        h,
        g,
    }
}

/// Largest entry of `|ΦᵀΦ − I|`.
pub fn orthogonality_defect(phi: &DMatrix<f64>) -> f64 {
    let n = phi.ncols();
    let m = phi.transpose() * phi;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - target).abs());
        }
    }
    worst
}

/// Integrals in the rotated basis: `h̃ = Φᵀ h Φ`, `g̃_pqrs = g_ijkl Φ_ip Φ_jq Φ_kr Φ_ls`.
pub fn rotate_integrals(integrals: &IntegralSet, phi: &DMatrix<f64>) -> Result<IntegralSet> {
    let n = integrals.n_orb;
    if phi.nrows() != n || phi.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: phi.nrows(),
        });
    }
    let deviation = orthogonality_defect(phi);
    if !(deviation <= 1e-10) {
        return Err(Error::NotOrthogonal { deviation });
    }
    Ok(rotate_unchecked(integrals, phi))
}

pub(crate) fn rotate_unchecked(integrals: &IntegralSet, phi: &DMatrix<f64>) -> IntegralSet {
    IntegralSet {
        n_orb: integrals.n_orb,
        core: integrals.core,
        h: phi.transpose() * &integrals.h * phi,
        g: integrals.g.transform(phi, phi, phi, phi),
    }
}
