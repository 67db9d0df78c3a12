//! Active-space restriction.
//!
//! Orbitals are split into inactive-occupied (always doubly occupied),
//! active, and inactive-virtual (always empty). The variational state lives on
//! the active orbitals only; its energy is evaluated either through an
//! effective active-space [`IntegralSet`] or by contracting the block-sparse
//! full-space RDMs directly. Indices `P, Q, …` run over inactive-occupied
//! orbitals, `t, u, v, w` over active ones.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{Sector, Spin};
use crate::integrals::{IntegralSet, Tensor4};
use crate::rdm::RdmSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSpaceSpec {
    pub inactive_occupied: Vec<usize>,
    pub active: Vec<usize>,
    pub inactive_virtual: Vec<usize>,
}

impl ActiveSpaceSpec {
    /// Every orbital active.
    pub fn full(n_orb: usize) -> Self {
        ActiveSpaceSpec {
            inactive_occupied: Vec::new(),
            active: (0..n_orb).collect(),
            inactive_virtual: Vec::new(),
        }
    }

    /// `n_core` lowest orbitals inactive-occupied, the next `n_active` active.
    pub fn window(n_orb: usize, n_core: usize, n_active: usize) -> Self {
        ActiveSpaceSpec {
            inactive_occupied: (0..n_core).collect(),
            active: (n_core..n_core + n_active).collect(),
            inactive_virtual: (n_core + n_active..n_orb).collect(),
        }
    }

    pub fn n_orb(&self) -> usize {
        self.inactive_occupied.len() + self.active.len() + self.inactive_virtual.len()
    }
}

/// Checks that the spec partitions the orbitals and returns the active sector.
pub fn validate_spec(spec: &ActiveSpaceSpec, sector: &Sector) -> Result<Sector> {
    validate_counts(spec, sector.n_orb, sector.n_up, sector.n_down)
}

/// As [`validate_spec`], from raw counts; only the active sector has to be
/// representable as a [`Sector`].
pub fn validate_counts(
    spec: &ActiveSpaceSpec,
    n_orb: usize,
    n_up: usize,
    n_down: usize,
) -> Result<Sector> {
    let mut seen = vec![false; n_orb];
    for &o in spec
        .inactive_occupied
        .iter()
        .chain(&spec.active)
        .chain(&spec.inactive_virtual)
    {
        if o >= n_orb {
            return Err(Error::IndexOutOfRange { index: o, size: n_orb });
        }
        if seen[o] {
            return Err(Error::InvalidArgument(alloc::format!(
                "orbital {o} listed twice in the active-space partition"
            )));
        }
        seen[o] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidArgument(alloc::format!(
            "orbital {missing} missing from the active-space partition"
        )));
    }
    let core = spec.inactive_occupied.len();
    if n_up < core || n_down < core {
        return Err(Error::InvalidArgument(alloc::format!(
            "{core} inactive-occupied orbitals need {core} electrons of each spin, sector has {n_up} up and {n_down} down"
        )));
    }
    Sector::new(spec.active.len(), n_up - core, n_down - core)
}

/// Integrals over the active orbitals whose active-space expectation value
/// equals the full-space energy with the inactive orbitals pinned:
///
/// ```text
/// core' = core + 2 Σ_P h_PP + Σ_PQ (2 g_PQPQ − g_PQQP)
/// h'_tv = h_tv + Σ_P (2 g_tPvP − g_tPPv)
/// g'    = g restricted to active indices
/// ```
pub fn effective_active_integrals(integrals: &IntegralSet, spec: &ActiveSpaceSpec) -> IntegralSet {
    let g = &integrals.g;
    let core_orbs = &spec.inactive_occupied;
    let act = &spec.active;
    let mut core = integrals.core;
    for &p in core_orbs {
        core += 2.0 * integrals.h[(p, p)];
        for &q in core_orbs {
            core += 2.0 * g.get(p, q, p, q) - g.get(p, q, q, p);
        }
    }
    let na = act.len();
    let h = DMatrix::from_fn(na, na, |t, v| {
        let (ft, fv) = (act[t], act[v]);
        integrals.h[(ft, fv)]
            + core_orbs
                .iter()
                .map(|&p| 2.0 * g.get(ft, p, fv, p) - g.get(ft, p, p, fv))
                .sum::<f64>()
    });
    let g_act = Tensor4::from_fn(na, |t, u, v, w| g.get(act[t], act[u], act[v], act[w]));
    IntegralSet {
        n_orb: na,
        core,
        h,
        g: g_act,
    }
}

/// Spin-summed active-space densities `D_tv` and `D_tuvw`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveRdms {
    pub d1: DMatrix<f64>,
    pub d2: Tensor4,
}

impl ActiveRdms {
    pub fn from_rdms(rdms: &RdmSet) -> Self {
        ActiveRdms {
            d1: rdms.spin_summed_one(),
            d2: rdms.spin_summed_two(),
        }
    }
}

/// Full-space energy by direct contraction of the block-structured RDMs:
/// inactive one- and two-body blocks, the active blocks, and the four
/// inactive–active cross blocks (two direct, two exchange).
pub fn active_energy_from_rdms(
    integrals: &IntegralSet,
    spec: &ActiveSpaceSpec,
    rdms: &ActiveRdms,
) -> Result<f64> {
    let na = spec.active.len();
    if rdms.d1.nrows() != na || rdms.d2.dim() != na {
        return Err(Error::DimensionMismatch {
            expected: na,
            got: rdms.d1.nrows(),
        });
    }
    let g = &integrals.g;
    let h = &integrals.h;
    let core_orbs = &spec.inactive_occupied;
    let act = &spec.active;
    // Inactive-inactive blocks: Γ_PP = 2, Γ_PQRS = 4 δ_PR δ_QS − 2 δ_PS δ_QR.
    let mut e = integrals.core;
    for &p in core_orbs {
        e += 2.0 * h[(p, p)];
        for &q in core_orbs {
            e += 0.5 * (4.0 * g.get(p, q, p, q) - 2.0 * g.get(p, q, q, p));
        }
    }
    for t in 0..na {
        for v in 0..na {
            let d = rdms.d1[(t, v)];
            e += h[(act[t], act[v])] * d;
            // Γ_tQvQ = Γ_QtQv = 2 D_tv; Γ_tQQv = Γ_QtvQ = −D_tv.
            let mut cross = 0.0;
            for &q in core_orbs {
                let (ft, fv) = (act[t], act[v]);
                cross += 2.0 * g.get(ft, q, fv, q) + 2.0 * g.get(q, ft, q, fv)
                    - g.get(ft, q, q, fv)
                    - g.get(q, ft, fv, q);
            }
            e += 0.5 * cross * d;
        }
    }
    for t in 0..na {
        for u in 0..na {
            for v in 0..na {
                for w in 0..na {
                    e += 0.5 * g.get(act[t], act[u], act[v], act[w]) * rdms.d2.get(t, u, v, w);
                }
            }
        }
    }
    Ok(e)
}

/// Spin-resolved full-space RDMs of the state with inactive-occupied orbitals
/// doubly occupied, inactive-virtual orbitals empty, and the given active RDMs.
pub fn embed_rdms(spec: &ActiveSpaceSpec, active: &RdmSet) -> Result<RdmSet> {
    let na = spec.active.len();
    active.check_dims(na)?;
    let n = spec.n_orb();
    let act = &spec.active;
    let core_orbs = &spec.inactive_occupied;
    let mut full = RdmSet::zeros(n);
    for s in Spin::BOTH {
        let si = s.index();
        for &p in core_orbs {
            full.one[si][(p, p)] = 1.0;
        }
        for t in 0..na {
            for v in 0..na {
                full.one[si][(act[t], act[v])] = active.one[si][(t, v)];
            }
        }
    }
    for s1 in Spin::BOTH {
        for s2 in Spin::BOTH {
            let same = s1 == s2;
            let idx = 2 * s1.index() + s2.index();
            let (d1, d2) = (&active.one[s1.index()], &active.one[s2.index()]);
            let t4 = &mut full.two[idx];
            for &p in core_orbs {
                for &q in core_orbs {
                    t4.add(p, q, p, q, 1.0);
                    if same {
                        t4.add(p, q, q, p, -1.0);
                    }
                }
            }
            for t in 0..na {
                for v in 0..na {
                    let (ft, fv) = (act[t], act[v]);
                    for &q in core_orbs {
                        t4.add(ft, q, fv, q, d1[(t, v)]);
                        t4.add(q, ft, q, fv, d2[(t, v)]);
                        if same {
                            t4.add(ft, q, q, fv, -d1[(t, v)]);
                            t4.add(q, ft, fv, q, -d1[(t, v)]);
                        }
                    }
                }
            }
            let a2 = &active.two[idx];
            for t in 0..na {
                for u in 0..na {
                    for v in 0..na {
                        for w in 0..na {
                            t4.set(act[t], act[u], act[v], act[w], a2.get(t, u, v, w));
                        }
                    }
                }
            }
        }
    }
    Ok(full)
}
