//! Occupation-number configurations over spin-orbitals, fixed-(N_up, N_down)
//! sectors and fermionic ladder-operator action under the Jordan–Wigner
//! ordering.
//!
//! Mode ordering is frozen: spatial orbital `p` with spin up is mode `p`,
//! with spin down is mode `n_orb + p`. The Jordan–Wigner sign of a ladder
//! operator on mode `i` is the parity of the occupied modes `< i`.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Largest number of spin-orbitals a [`Configuration`] can hold.
pub const MAX_MODES: usize = 64;

/// Default upper bound on the number of configurations [`SectorBasis`] will enumerate.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    pub fn flip(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    /// 0 for up, 1 for down.
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

/// Spin-orbital (mode) index of spatial orbital `orb` with spin `spin`.
#[inline]
pub fn mode(n_orb: usize, orb: usize, spin: Spin) -> usize {
    match spin {
        Spin::Up => orb,
        Spin::Down => n_orb + orb,
    }
}

/// Occupation bitstring; bit `i` is the occupancy of mode `i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Configuration(pub u64);

impl Configuration {
    pub fn from_modes(modes: &[usize]) -> Self {
        let mut bits = 0u64;
        for &m in modes {
            assert!(m < MAX_MODES, "mode {m} out of range");
            bits |= 1 << m;
        }
        Configuration(bits)
    }

    /// Parses a string of `0`/`1` characters, mode 0 first.
    pub fn from_bitstring(s: &str) -> Option<Self> {
        let mut bits = 0u64;
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '1' if i < MAX_MODES => bits |= 1 << i,
                '0' => {}
                _ => return None,
            }
        }
        Some(Configuration(bits))
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_occupied(self, mode: usize) -> bool {
        (self.0 >> mode) & 1 == 1
    }

    #[inline]
    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// Electrons of the given spin in a system with `n_orb` spatial orbitals.
    #[inline]
    pub fn count_spin(self, n_orb: usize, spin: Spin) -> u32 {
        let mask = spin_mask(n_orb, spin);
        (self.0 & mask).count_ones()
    }

    /// Occupied modes in ascending order.
    pub fn occupied(self) -> OccupiedIter {
        OccupiedIter(self.0)
    }

    /// `+1.0` / `-1.0` encoding (occupied → +1) of the first `n_modes` modes.
    pub fn signed_encoding(self, n_modes: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(n_modes) {
            *o = if self.is_occupied(i) { 1.0 } else { -1.0 };
        }
    }

    pub fn to_bitstring(self, n_modes: usize) -> alloc::string::String {
        (0..n_modes)
            .map(|i| if self.is_occupied(i) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({:#b})", self.0)
    }
}

pub struct OccupiedIter(u64);

impl Iterator for OccupiedIter {
    type Item = usize;
    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            let i = self.0.trailing_zeros() as usize;
            self.0 &= self.0 - 1;
            Some(i)
        }
    }
}

/// Bit mask of all modes belonging to one spin species.
#[inline]
pub fn spin_mask(n_orb: usize, spin: Spin) -> u64 {
    let block = low_mask(n_orb);
    match spin {
        Spin::Up => block,
        Spin::Down => block << n_orb,
    }
}

#[inline]
fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Jordan–Wigner sign for a ladder operator on `mode`: parity of occupied modes below it.
#[inline]
pub fn jw_sign(bits: u64, mode: usize) -> f64 {
    if (bits & low_mask(mode)).count_ones() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Fixed particle-number sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sector {
    pub n_orb: usize,
    pub n_up: usize,
    pub n_down: usize,
}

impl Sector {
    pub fn new(n_orb: usize, n_up: usize, n_down: usize) -> Result<Self> {
        if 2 * n_orb > MAX_MODES {
            return Err(Error::Capacity {
                what: "spin-orbitals",
                requested: 2 * n_orb,
                limit: MAX_MODES,
            });
        }
        if n_up > n_orb || n_down > n_orb {
            return Err(Error::InvalidArgument(alloc::format!(
                "sector ({n_up}, {n_down}) does not fit in {n_orb} orbitals"
            )));
        }
        Ok(Sector { n_orb, n_up, n_down })
    }

    pub fn n_modes(&self) -> usize {
        2 * self.n_orb
    }

    pub fn n_electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn n_spin(&self, spin: Spin) -> usize {
        match spin {
            Spin::Up => self.n_up,
            Spin::Down => self.n_down,
        }
    }

    /// Number of configurations, `C(n_orb, n_up) * C(n_orb, n_down)`.
    pub fn dimension(&self) -> u128 {
        binomial(self.n_orb, self.n_up) as u128 * binomial(self.n_orb, self.n_down) as u128
    }

    pub fn contains(&self, c: Configuration) -> bool {
        let all = spin_mask(self.n_orb, Spin::Up) | spin_mask(self.n_orb, Spin::Down);
        c.bits() & !all == 0
            && c.count_spin(self.n_orb, Spin::Up) as usize == self.n_up
            && c.count_spin(self.n_orb, Spin::Down) as usize == self.n_down
    }

    /// Lowest `n_up` up orbitals and lowest `n_down` down orbitals occupied.
    pub fn reference(&self) -> Configuration {
        Configuration(low_mask(self.n_up) | (low_mask(self.n_down) << self.n_orb))
    }
}

/// Binomial coefficient for the small arguments used here (n ≤ 64).
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// All `n`-bit words with `k` bits set, ascending.
fn combinations(n: usize, k: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(binomial(n, k) as usize);
    if k == 0 {
        out.push(0);
        return out;
    }
    let limit = if n >= 64 { u64::MAX } else { 1u64 << n };
    let mut v = low_mask(k);
    loop {
        out.push(v);
        // Gosper's hack: next word with the same popcount.
        let t = v | (v - 1);
        let next = (t.wrapping_add(1)) | (((!t & t.wrapping_add(1)) - 1) >> (v.trailing_zeros() + 1));
        if next >= limit || next <= v {
            break;
        }
        v = next;
    }
    out
}

/// Ordered basis of a sector together with its reverse lookup.
///
/// Order is ascending by the integer value of the bitstring, i.e. down-spin
/// string major, up-spin string minor. A configuration's position is its
/// canonical dense index.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    sector: Sector,
    configs: Vec<Configuration>,
    binom: Vec<u64>,
    n_up_strings: usize,
}

impl SectorBasis {
    pub fn new(sector: Sector) -> Result<Self> {
        Self::with_limit(sector, DEFAULT_ENUMERATION_LIMIT)
    }

    pub fn with_limit(sector: Sector, limit: usize) -> Result<Self> {
        let dim = sector.dimension();
        if dim > limit as u128 {
            return Err(Error::Capacity {
                what: "sector configurations",
                requested: usize::try_from(dim).unwrap_or(usize::MAX),
                limit,
            });
        }
        let n = sector.n_orb;
        let ups = combinations(n, sector.n_up);
        let downs = combinations(n, sector.n_down);
        let mut configs = Vec::with_capacity(dim as usize);
        for &d in &downs {
            for &u in &ups {
                configs.push(Configuration(u | (d << n)));
            }
        }
        let width = n + 1;
        let mut binom = alloc::vec![0u64; width * width];
        for a in 0..width {
            for b in 0..width {
                binom[a * width + b] = binomial(a, b);
            }
        }
        Ok(SectorBasis {
            sector,
            configs,
            binom,
            n_up_strings: ups.len(),
        })
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    #[inline]
    fn rank(&self, mut word: u64) -> usize {
        let width = self.sector.n_orb + 1;
        let mut r = 0u64;
        let mut j = 1;
        while word != 0 {
            let c = word.trailing_zeros() as usize;
            r += self.binom[c * width + j];
            j += 1;
            word &= word - 1;
        }
        r as usize
    }

    /// Dense index of `c`, or `None` if it is outside the sector.
    #[inline]
    pub fn index_of(&self, c: Configuration) -> Option<usize> {
        if !self.sector.contains(c) {
            return None;
        }
        let n = self.sector.n_orb;
        let up = c.bits() & low_mask(n);
        let down = c.bits() >> n;
        Some(self.rank(down) * self.n_up_strings + self.rank(up))
    }
}

/// All configurations of a sector in canonical order.
pub fn enumerate_sector(sector: Sector) -> Result<Vec<Configuration>> {
    Ok(SectorBasis::new(sector)?.configs)
}

/// `c_mode` applied to `c`; `None` if the mode is empty.
#[inline]
pub fn annihilate(c: Configuration, mode: usize) -> Option<(Configuration, f64)> {
    if !c.is_occupied(mode) {
        return None;
    }
    let s = jw_sign(c.bits(), mode);
    Some((Configuration(c.bits() ^ (1 << mode)), s))
}

/// `c†_mode` applied to `c`; `None` if the mode is already occupied.
#[inline]
pub fn create(c: Configuration, mode: usize) -> Option<(Configuration, f64)> {
    if c.is_occupied(mode) {
        return None;
    }
    let s = jw_sign(c.bits(), mode);
    Some((Configuration(c.bits() | (1 << mode)), s))
}

/// Unchecked `c†_p c_q |c⟩`.
#[inline]
pub fn apply_one(c: Configuration, p: usize, q: usize) -> Option<(Configuration, f64)> {
    let (c1, s1) = annihilate(c, q)?;
    let (c2, s2) = create(c1, p)?;
    Some((c2, s1 * s2))
}

/// Unchecked `c†_p c†_q c_s c_r |c⟩`.
#[inline]
pub fn apply_two(
    c: Configuration,
    p: usize,
    q: usize,
    s: usize,
    r: usize,
) -> Option<(Configuration, f64)> {
    let (c1, s1) = annihilate(c, r)?;
    let (c2, s2) = annihilate(c1, s)?;
    let (c3, s3) = create(c2, q)?;
    let (c4, s4) = create(c3, p)?;
    Some((c4, s1 * s2 * s3 * s4))
}

fn check_mode(n_modes: usize, i: usize) -> Result<()> {
    if i >= n_modes || i >= MAX_MODES {
        Err(Error::IndexOutOfRange {
            index: i,
            size: n_modes.min(MAX_MODES),
        })
    } else {
        Ok(())
    }
}

/// `c†_p c_q |config⟩` with range checking against `n_modes`.
pub fn excite_one(
    n_modes: usize,
    config: Configuration,
    p: usize,
    q: usize,
) -> Result<Option<(Configuration, f64)>> {
    check_mode(n_modes, p)?;
    check_mode(n_modes, q)?;
    Ok(apply_one(config, p, q))
}

/// `c†_p c†_q c_s c_r |config⟩` with range checking against `n_modes`.
pub fn excite_two(
    n_modes: usize,
    config: Configuration,
    p: usize,
    q: usize,
    s: usize,
    r: usize,
) -> Result<Option<(Configuration, f64)>> {
    for i in [p, q, s, r] {
        check_mode(n_modes, i)?;
    }
    Ok(apply_two(config, p, q, s, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use std::collections::HashSet;

    /// Dense 2^n × 2^n matrix of `c_i` built from the Jordan–Wigner product
    /// `Z ⊗ … ⊗ Z ⊗ σ⁻`, independent of the bit-twiddling above.
    fn dense_annihilator(n: usize, i: usize) -> Vec<Vec<f64>> {
        let dim = 1 << n;
        let mut m = vec![vec![0.0; dim]; dim];
        for ket in 0..dim {
            if ket >> i & 1 == 1 {
                let mut sign = 1.0;
                for k in 0..i {
                    if ket >> k & 1 == 1 {
                        sign = -sign;
                    }
                }
                m[ket ^ (1 << i)][ket] = sign;
            }
        }
        m
    }

    fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect()
    }

    fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut c = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                if a[i][k] != 0.0 {
                    for j in 0..n {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
        }
        c
    }

    fn dense_two(n: usize, p: usize, q: usize, s: usize, r: usize) -> Vec<Vec<f64>> {
        let cp = transpose(&dense_annihilator(n, p));
        let cq = transpose(&dense_annihilator(n, q));
        let cs = dense_annihilator(n, s);
        let cr = dense_annihilator(n, r);
        matmul(&matmul(&matmul(&cp, &cq), &cs), &cr)
    }

    fn column_action(m: &[Vec<f64>], ket: usize) -> Option<(usize, f64)> {
        let nz: Vec<(usize, f64)> = (0..m.len())
            .filter(|&b| m[b][ket] != 0.0)
            .map(|b| (b, m[b][ket]))
            .collect();
        assert!(nz.len() <= 1);
        nz.first().copied()
    }

    #[test]
    fn sector_counts() {
        assert_eq!(enumerate_sector(Sector::new(2, 1, 1).unwrap()).unwrap().len(), 4);
        assert_eq!(enumerate_sector(Sector::new(4, 2, 2).unwrap()).unwrap().len(), 36);
        assert_eq!(
            enumerate_sector(Sector::new(12, 6, 6).unwrap()).unwrap().len(),
            853_776
        );
    }

    #[test]
    fn enumeration_limit_is_enforced() {
        let err = SectorBasis::with_limit(Sector::new(4, 2, 2).unwrap(), 10).unwrap_err();
        assert!(matches!(err, Error::Capacity { requested: 36, .. }));
    }

    #[test]
    fn sector_rejects_overfilling() {
        assert!(Sector::new(3, 4, 0).is_err());
        assert!(Sector::new(40, 1, 1).is_err());
    }

    #[test]
    fn basis_is_sorted_unique_and_indexable() {
        let basis = SectorBasis::new(Sector::new(5, 2, 3).unwrap()).unwrap();
        let configs = basis.configs();
        assert!(configs.windows(2).all(|w| w[0] < w[1]));
        let set: HashSet<_> = configs.iter().collect();
        assert_eq!(set.len(), configs.len());
        for (i, &c) in configs.iter().enumerate() {
            assert!(basis.sector().contains(c));
            assert_eq!(basis.index_of(c), Some(i));
        }
        assert_eq!(basis.index_of(Configuration(0b1)), None);
    }

    #[test]
    fn number_operator_is_diagonal() {
        let c = Configuration::from_bitstring("1011").unwrap();
        for p in c.occupied() {
            assert_eq!(excite_one(4, c, p, p).unwrap(), Some((c, 1.0)));
        }
    }

    #[test]
    fn hop_sign_counts_intermediate_modes() {
        let c = Configuration::from_bitstring("1100").unwrap();
        let (out, sign) = excite_one(4, c, 2, 0).unwrap().unwrap();
        assert_eq!(out, Configuration::from_bitstring("0110").unwrap());
        assert_eq!(sign, -1.0);
        assert_eq!(excite_one(4, c, 2, 3).unwrap(), None);
    }

    #[test]
    fn out_of_range_indices_error() {
        let c = Configuration::from_bitstring("1100").unwrap();
        assert!(matches!(
            excite_one(4, c, 4, 0),
            Err(Error::IndexOutOfRange { index: 4, .. })
        ));
        assert!(excite_two(4, c, 0, 1, 2, 7).is_err());
    }

    #[test]
    fn pair_number_operator() {
        let c = Configuration::from_bitstring("0110").unwrap();
        assert_eq!(excite_two(4, c, 1, 2, 2, 1).unwrap(), Some((c, 1.0)));
        assert_eq!(excite_two(4, c, 1, 2, 2, 0).unwrap(), None);
    }

    #[test]
    fn double_excitation_matches_dense_operator() {
        let c = Configuration::from_bitstring("1010").unwrap();
        let m = dense_two(4, 1, 3, 2, 0);
        let expected = column_action(&m, c.bits() as usize);
        let got = excite_two(4, c, 1, 3, 2, 0)
            .unwrap()
            .map(|(o, s)| (o.bits() as usize, s));
        assert_eq!(got, expected);
        assert!(got.is_some());
    }

    #[test]
    fn every_two_body_string_matches_dense_oracle_for_six_modes() {
        let n = 6;
        for p in 0..n {
            for q in 0..n {
                for s in 0..n {
                    for r in 0..n {
                        let m = dense_two(n, p, q, s, r);
                        for ket in 0..(1usize << n) {
                            let expected = column_action(&m, ket);
                            let got = apply_two(Configuration(ket as u64), p, q, s, r)
                                .map(|(o, sg)| (o.bits() as usize, sg));
                            assert_eq!(got, expected, "p={p} q={q} s={s} r={r} ket={ket:b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reference_configuration() {
        let s = Sector::new(4, 2, 1).unwrap();
        assert_eq!(s.reference(), Configuration::from_modes(&[0, 1, 4]));
        assert!(s.contains(s.reference()));
    }

    proptest! {
        #[test]
        fn hop_and_back_is_identity(bits in 0u64..(1 << 10), p in 0usize..10, q in 0usize..10) {
            let c = Configuration(bits);
            if let Some((c1, s1)) = apply_one(c, p, q) {
                let (c2, s2) = apply_one(c1, q, p).expect("reverse hop must exist");
                prop_assert_eq!(c2, c);
                prop_assert_eq!(s1 * s2, 1.0);
            }
        }

        #[test]
        fn two_body_is_composition_of_ladders(bits in 0u64..(1 << 8), p in 0usize..8, q in 0usize..8, s in 0usize..8, r in 0usize..8) {
            let c = Configuration(bits);
            let manual = annihilate(c, r)
                .and_then(|(c1, a)| annihilate(c1, s).map(|(c2, b)| (c2, a * b)))
                .and_then(|(c2, a)| create(c2, q).map(|(c3, b)| (c3, a * b)))
                .and_then(|(c3, a)| create(c3, p).map(|(c4, b)| (c4, a * b)));
            prop_assert_eq!(apply_two(c, p, q, s, r), manual);
        }
    }
}
