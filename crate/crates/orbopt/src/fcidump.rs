//! FCIDUMP integral files.
//!
//! A Fortran namelist header (`&FCI NORB=…, NELEC=…, MS2=…, ORBSYM=…, ISYM=…
//! &END`) is followed by records `value i j k l` with one-based orbital
//! indices: `(ij|kl)` when all four are positive, `h_ij` when `k = l = 0`,
//! and the core energy when all are zero. Records with only `i` set carry
//! orbital energies and are ignored. Real orbitals are assumed, so every
//! record stands for its whole eightfold symmetry class.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use orbopt_core::fock::Sector;
use orbopt_core::integrals::{IntegralSet, Tensor4};

/// Largest disagreement tolerated between records of one symmetry class.
pub const CONFLICT_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum FcidumpError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("header: {0}")]
    Header(String),
    #[error("integrals: {0}")]
    Integrals(#[from] orbopt_core::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcidumpHeader {
    pub norb: usize,
    pub nelec: usize,
    pub ms2: i64,
    pub orbsym: Vec<i64>,
    pub isym: i64,
}

impl FcidumpHeader {
    pub fn new(norb: usize, nelec: usize, ms2: i64) -> Self {
        FcidumpHeader {
            norb,
            nelec,
            ms2,
            orbsym: vec![1; norb],
            isym: 1,
        }
    }

    /// Particle sector implied by `NELEC` and `MS2`.
    pub fn sector(&self) -> Result<Sector, FcidumpError> {
        let n = self.nelec as i64;
        if (n + self.ms2) % 2 != 0 || self.ms2.abs() > n {
            return Err(FcidumpError::Header(format!(
                "NELEC={} and MS2={} are inconsistent",
                self.nelec, self.ms2
            )));
        }
        let up = ((n + self.ms2) / 2) as usize;
        let down = ((n - self.ms2) / 2) as usize;
        Sector::new(self.norb, up, down).map_err(FcidumpError::Integrals)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fcidump {
    pub header: FcidumpHeader,
    pub integrals: IntegralSet,
}

fn parse_err(line: usize, message: impl Into<String>) -> FcidumpError {
    FcidumpError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(text: &str) -> Result<FcidumpHeader, FcidumpError> {
    let mut values: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for raw in text.split([',', ' ', '\t', '\n', '\r']) {
        let tok = raw.trim();
        if tok.is_empty() || tok.eq_ignore_ascii_case("&FCI") {
            continue;
        }
        if let Some((key, value)) = tok.split_once('=') {
            let key = key.trim().to_ascii_uppercase();
            let entry = values.entry(key.clone()).or_default();
            if !value.trim().is_empty() {
                entry.push(value.trim().to_string());
            }
            current = Some(key);
        } else if let Some(key) = &current {
            values.entry(key.clone()).or_default().push(tok.to_string());
        } else {
            return Err(FcidumpError::Header(format!("unexpected token `{tok}`")));
        }
    }
    let int = |key: &str| -> Result<Option<i64>, FcidumpError> {
        match values.get(key).map(|v| v.as_slice()) {
            None => Ok(None),
            Some([v]) => v
                .parse::<i64>()
                .map(Some)
                .map_err(|_| FcidumpError::Header(format!("{key}={v} is not an integer"))),
            Some(other) => Err(FcidumpError::Header(format!(
                "{key} expects one value, found {}",
                other.len()
            ))),
        }
    };
    let norb = int("NORB")?.ok_or_else(|| FcidumpError::Header("missing NORB".into()))?;
    let nelec = int("NELEC")?.ok_or_else(|| FcidumpError::Header("missing NELEC".into()))?;
    if norb <= 0 || nelec < 0 {
        return Err(FcidumpError::Header(format!("NORB={norb}, NELEC={nelec}")));
    }
    let orbsym = match values.get("ORBSYM") {
        Some(list) => list
            .iter()
            .map(|v| {
                v.parse::<i64>()
                    .map_err(|_| FcidumpError::Header(format!("ORBSYM entry `{v}`")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![1; norb as usize],
    };
    if orbsym.len() != norb as usize {
        return Err(FcidumpError::Header(format!(
            "ORBSYM has {} entries for NORB={norb}",
            orbsym.len()
        )));
    }
    Ok(FcidumpHeader {
        norb: norb as usize,
        nelec: nelec as usize,
        ms2: int("MS2")?.unwrap_or(0),
        orbsym,
        isym: int("ISYM")?.unwrap_or(1),
    })
}

/// Canonical representative of the eightfold class of `(ij|kl)`.
fn canonical(i: usize, j: usize, k: usize, l: usize) -> (usize, usize, usize, usize) {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    let (k, l) = if k >= l { (k, l) } else { (l, k) };
    if (i, j) >= (k, l) {
        (i, j, k, l)
    } else {
        (k, l, i, j)
    }
}

fn insert_checked<K: Ord + Copy + std::fmt::Debug>(
    map: &mut BTreeMap<K, f64>,
    key: K,
    value: f64,
    line: usize,
) -> Result<(), FcidumpError> {
    if let Some(&old) = map.get(&key) {
        if (old - value).abs() > CONFLICT_TOL {
            return Err(parse_err(
                line,
                format!("record {key:?} repeats with {value} after {old}"),
            ));
        }
        return Ok(());
    }
    map.insert(key, value);
    Ok(())
}

pub fn parse(text: &str) -> Result<Fcidump, FcidumpError> {
    let upper = text.to_ascii_uppercase();
    let end = ["&END", "/"]
        .iter()
        .filter_map(|m| upper.find(m).map(|p| (p, m.len())))
        .min()
        .ok_or_else(|| FcidumpError::Header("missing &END terminator".into()))?;
    if !upper.trim_start().starts_with("&FCI") {
        return Err(FcidumpError::Header("file does not start with &FCI".into()));
    }
    let header = parse_header(&text[..end.0])?;
    let body_start = end.0 + end.1;
    let first_line = text[..body_start].lines().count();
    let n = header.norb;
    let mut two: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    let mut one: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut core: Option<f64> = None;
    for (offset, raw) in text[body_start..].lines().enumerate() {
        let line = first_line + offset;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(parse_err(line, format!("expected 5 fields, found {}", fields.len())));
        }
        let value: f64 = fields[0]
            .replace(['D', 'd'], "e")
            .parse()
            .map_err(|_| parse_err(line, format!("bad value `{}`", fields[0])))?;
        if !value.is_finite() {
            return Err(parse_err(line, "non-finite value"));
        }
        let mut idx = [0usize; 4];
        for (slot, f) in idx.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .map_err(|_| parse_err(line, format!("bad index `{f}`")))?;
            if *slot > n {
                return Err(parse_err(line, format!("index {slot} exceeds NORB={n}")));
            }
        }
        match idx {
            [0, 0, 0, 0] => {
                if let Some(old) = core {
                    if (old - value).abs() > CONFLICT_TOL {
                        return Err(parse_err(line, "core energy repeats with a different value"));
                    }
                }
                core = Some(value);
            }
            [i, 0, 0, 0] if i > 0 => {}
            [i, j, 0, 0] if i > 0 && j > 0 => {
                let key = if i >= j { (i - 1, j - 1) } else { (j - 1, i - 1) };
                insert_checked(&mut one, key, value, line)?;
            }
            [i, j, k, l] if i > 0 && j > 0 && k > 0 && l > 0 => {
                insert_checked(&mut two, canonical(i - 1, j - 1, k - 1, l - 1), value, line)?;
            }
            _ => return Err(parse_err(line, format!("index pattern {idx:?}"))),
        }
    }
    let mut h = DMatrix::zeros(n, n);
    for (&(i, j), &v) in &one {
        h[(i, j)] = v;
        h[(j, i)] = v;
    }
    let mut g = Tensor4::zeros(n);
    for (&(i, j, k, l), &v) in &two {
        for (a, b, c, d) in [
            (i, j, k, l),
            (j, i, k, l),
            (i, j, l, k),
            (j, i, l, k),
            (k, l, i, j),
            (l, k, i, j),
            (k, l, j, i),
            (l, k, j, i),
        ] {
            // (ab|cd) is the physicist element g[a, c, b, d].
            g.set(a, c, b, d, v);
        }
    }
    let integrals = IntegralSet::new(core.unwrap_or(0.0), h, g)?;
    Ok(Fcidump { header, integrals })
}

pub fn read(path: &Path) -> Result<Fcidump, FcidumpError> {
    let text = std::fs::read_to_string(path).map_err(|source| FcidumpError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes with one record per symmetry class; zero elements are omitted.
pub fn write_string(dump: &Fcidump) -> String {
    let h = &dump.header;
    let ints = &dump.integrals;
    let n = ints.n_orb;
    let mut out = String::new();
    let orbsym: Vec<String> = h.orbsym.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(
        out,
        " &FCI NORB={},NELEC={},MS2={},\n  ORBSYM={},\n  ISYM={},\n &END",
        n,
        h.nelec,
        h.ms2,
        orbsym.join(","),
        h.isym
    );
    for i in 0..n {
        for j in 0..=i {
            for k in 0..n {
                for l in 0..=k {
                    if (i, j) < (k, l) {
                        continue;
                    }
                    let v = ints.g.get(i, k, j, l);
                    if v != 0.0 {
                        let _ = writeln!(out, "{} {} {} {} {}", format_f64(v), i + 1, j + 1, k + 1, l + 1);
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = ints.h[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{} {} {} 0 0", format_f64(v), i + 1, j + 1);
            }
        }
    }
    let _ = writeln!(out, "{} 0 0 0 0", format_f64(ints.core));
    out
}

pub fn write(path: &Path, dump: &Fcidump) -> Result<(), FcidumpError> {
    std::fs::write(path, write_string(dump)).map_err(|source| FcidumpError::Io {
        path: path.display().to_string(),
        source,
    })
}
