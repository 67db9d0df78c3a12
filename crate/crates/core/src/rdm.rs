//! Spin-resolved reduced density matrices.
//!
//! `one[σ][(p, q)] = ⟨c†_pσ c_qσ⟩` and
//! `two[2σ + σ'][p, q, r, s] = ⟨c†_pσ c†_qσ' c_sσ' c_rσ⟩`, the ordering that
//! contracts directly against [`IntegralSet`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::Spin;
use crate::integrals::{IntegralSet, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct RdmSet {
    pub n_orb: usize,
    pub one: [DMatrix<f64>; 2],
    /// Indexed by `2 * σ.index() + σ'.index()`.
    pub two: [Tensor4; 4],
}

impl RdmSet {
    pub fn zeros(n_orb: usize) -> Self {
        RdmSet {
            n_orb,
            one: [DMatrix::zeros(n_orb, n_orb), DMatrix::zeros(n_orb, n_orb)],
            two: [
                Tensor4::zeros(n_orb),
                Tensor4::zeros(n_orb),
                Tensor4::zeros(n_orb),
                Tensor4::zeros(n_orb),
            ],
        }
    }

    pub fn one_body(&self, spin: Spin) -> &DMatrix<f64> {
        &self.one[spin.index()]
    }

    pub fn two_body(&self, s1: Spin, s2: Spin) -> &Tensor4 {
        &self.two[2 * s1.index() + s2.index()]
    }

    /// `Σ_σ Γ^σ`.
    pub fn spin_summed_one(&self) -> DMatrix<f64> {
        &self.one[0] + &self.one[1]
    }

    /// `Σ_σσ' Γ^σσ'`.
    pub fn spin_summed_two(&self) -> Tensor4 {
        let mut out = self.two[0].clone();
        for t in &self.two[1..] {
            for (o, v) in out.as_mut_slice().iter_mut().zip(t.as_slice()) {
                *o += v;
            }
        }
        out
    }

    /// `core + Σ h Γ1 + ½ Σ g Γ2`.
    pub fn energy(&self, integrals: &IntegralSet) -> f64 {
        contract(integrals, &self.spin_summed_one(), &self.spin_summed_two())
    }

    pub fn check_dims(&self, n_orb: usize) -> Result<()> {
        if self.n_orb != n_orb {
            return Err(Error::DimensionMismatch {
                expected: n_orb,
                got: self.n_orb,
            });
        }
        Ok(())
    }

    /// In-place `self = a·self + b·other`.
    pub fn axpby(&mut self, a: f64, b: f64, other: &RdmSet) {
        for (x, y) in self.one.iter_mut().zip(&other.one) {
            *x = &*x * a + y * b;
        }
        for (x, y) in self.two.iter_mut().zip(&other.two) {
            for (u, v) in x.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *u = a * *u + b * v;
            }
        }
    }

    /// Largest elementwise difference over every block.
    pub fn max_abs_diff(&self, other: &RdmSet) -> f64 {
        let mut worst = 0.0f64;
        for (x, y) in self.one.iter().zip(&other.one) {
            worst = worst.max((x - y).abs().max());
        }
        for (x, y) in self.two.iter().zip(&other.two) {
            worst = worst.max(x.max_abs_diff(y));
        }
        worst
    }
}

/// `core + Σ h_pq D_pq + ½ Σ g_pqrs P_pqrs` for spin-summed densities.
pub fn contract(integrals: &IntegralSet, one: &DMatrix<f64>, two: &Tensor4) -> f64 {
    let e1: f64 = integrals.h.iter().zip(one.iter()).map(|(a, b)| a * b).sum();
    let e2: f64 = integrals
        .g
        .as_slice()
        .iter()
        .zip(two.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    integrals.core + e1 + 0.5 * e2
}
