//! Variational amplitude families.
//!
//! Every family is evaluated in the log domain: [`Ansatz::log_amplitude`]
//! returns `ln|ψ| + i·arg ψ`, with a real part of `−∞` marking a node.
//! Parameters are always a flat `&[f64]`; complex RBM parameters are stored
//! as interleaved `(re, im)` pairs, and the derivative with respect to the
//! imaginary slot is `i` times that of the real slot.
//!
//! Networks see the configuration through the `±1` encoding `x_i = 2 n_i − 1`
//! over all `2·n_orb` modes. Layouts (row-major matrices, in order):
//!
//! * FFN: `W1 (M×D)`, `b1 (M)`, `w2 (M)`, `b2`, then an optional output scale.
//! * RBM: complex `a (D)`, `b (M)`, `W (M×D)`.
//! * SlaterNNJastrow: `Ξ (D×N)`, `W (M×D)`, `b (M)`, `w (M)`.
//! * NNBackflow: per row `r < D`: `W_r (M×D)`, `b_r (M)`, `V_r (N×M)`, `c_r (N)`.
//!
//! Here `D = 2·n_orb`, `N` is the electron count and `M = α·D`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fock::{Configuration, Sector, SectorBasis};

/// Uniform evaluation interface over amplitude families.
pub trait Ansatz {
    /// Number of real parameter slots.
    fn n_params(&self) -> usize;

    /// `ln ψ(n)`; the real part is `−∞` where the amplitude vanishes.
    fn log_amplitude(&self, params: &[f64], config: Configuration) -> Complex64;

    /// Writes `O_k = ∂ ln ψ / ∂θ_k` into `out` and returns `ln ψ(n)`.
    fn log_derivatives(
        &self,
        params: &[f64],
        config: Configuration,
        out: &mut [Complex64],
    ) -> Result<Complex64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ffn,
    Rbm,
    SlaterNnJastrow,
    NnBackflow,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Ffn,
        Family::Rbm,
        Family::SlaterNnJastrow,
        Family::NnBackflow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Ffn => "ffn",
            Family::Rbm => "rbm",
            Family::SlaterNnJastrow => "slater-nn-jastrow",
            Family::NnBackflow => "nn-backflow",
        }
    }

    pub fn from_name(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn is_complex(self) -> bool {
        matches!(self, Family::Rbm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnsatzConfig {
    pub family: Family,
    pub alpha: usize,
    pub sector: Sector,
    /// Standard deviation of the initial weights.
    pub param_scale: f64,
    pub seed: u64,
    /// FFN only: multiply the tanh output by a trainable scale.
    pub output_scale: bool,
}

impl AnsatzConfig {
    pub fn new(family: Family, alpha: usize, sector: Sector) -> Self {
        AnsatzConfig {
            family,
            alpha,
            sector,
            param_scale: 0.01,
            seed: 0,
            output_scale: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1 {
            return Err(Error::InvalidArgument("alpha must be at least 1".into()));
        }
        if !(self.param_scale >= 0.0 && self.param_scale.is_finite()) {
            return Err(Error::InvalidArgument(
                "parameter scale must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.sector.n_modes()
    }

    pub fn hidden(&self) -> usize {
        self.alpha * self.n_modes()
    }
}

/// Number of real parameter slots for a configuration.
pub fn param_count(cfg: &AnsatzConfig) -> usize {
    let d = cfg.n_modes();
    let m = cfg.hidden();
    let n = cfg.sector.n_electrons();
    match cfg.family {
        Family::Ffn => m * d + 2 * m + 1 + usize::from(cfg.output_scale),
        Family::Rbm => 2 * (d + m + m * d),
        Family::SlaterNnJastrow => d * n + m * d + 2 * m,
        Family::NnBackflow => d * (m * d + m + n * m + n),
    }
}

/// Concrete network for one [`AnsatzConfig`].
#[derive(Debug, Clone)]
pub struct Network {
    cfg: AnsatzConfig,
    d: usize,
    m: usize,
    n: usize,
}

impl Network {
    pub fn new(cfg: AnsatzConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Network {
            d: cfg.n_modes(),
            m: cfg.hidden(),
            n: cfg.sector.n_electrons(),
            cfg,
        })
    }

    pub fn config(&self) -> &AnsatzConfig {
        &self.cfg
    }

    fn check(&self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
    }

    fn encode(&self, config: Configuration) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        config.signed_encoding(self.d, &mut x);
        x
    }

    fn occupied_rows(&self, config: Configuration) -> Vec<usize> {
        config.occupied().collect()
    }
}

impl Ansatz for Network {
    fn n_params(&self) -> usize {
        param_count(&self.cfg)
    }

    fn log_amplitude(&self, params: &[f64], config: Configuration) -> Complex64 {
        self.check(params);
        let x = self.encode(config);
        match self.cfg.family {
            Family::Ffn => ffn_forward(self, params, &x).log,
            Family::Rbm => rbm_log(self, params, &x),
            Family::SlaterNnJastrow => {
                let rows = self.occupied_rows(config);
                let a = DMatrix::from_fn(self.n, self.n, |i, c| params[rows[i] * self.n + c]);
                log_det(&a) + jastrow_forward(self, &params[self.d * self.n..], &x).0
            }
            Family::NnBackflow => {
                let rows = self.occupied_rows(config);
                let mut a = DMatrix::zeros(self.n, self.n);
                for (i, &r) in rows.iter().enumerate() {
                    let out = backflow_row(self, params, r, &x);
                    for c in 0..self.n {
                        a[(i, c)] = out.row[c];
                    }
                }
                log_det(&a)
            }
        }
    }

    fn log_derivatives(
        &self,
        params: &[f64],
        config: Configuration,
        out: &mut [Complex64],
    ) -> Result<Complex64> {
        self.check(params);
        assert_eq!(out.len(), params.len(), "derivative buffer length");
        let x = self.encode(config);
        for o in out.iter_mut() {
            *o = Complex64::new(0.0, 0.0);
        }
        let (d, m, n) = (self.d, self.m, self.n);
        match self.cfg.family {
            Family::Ffn => {
                let f = ffn_forward(self, params, &x);
                if f.tanh == 0.0 {
                    return Err(Error::Node(config.bits()));
                }
                // d ln tanh(o) / do = (1 − t²) / t
                let g = (1.0 - f.tanh * f.tanh) / f.tanh;
                let (w1, rest) = out.split_at_mut(m * d);
                let (b1, rest) = rest.split_at_mut(m);
                let (w2, rest) = rest.split_at_mut(m);
                let w2p = &params[m * d + m..m * d + 2 * m];
                for j in 0..m {
                    w2[j] = Complex64::from(g * f.hidden[j]);
                    if f.hidden[j] > 0.0 {
                        let delta = g * w2p[j];
                        b1[j] = Complex64::from(delta);
                        for i in 0..d {
                            w1[j * d + i] = Complex64::from(delta * x[i]);
                        }
                    }
                }
                rest[0] = Complex64::from(g);
                if self.cfg.output_scale {
                    rest[1] = Complex64::from(1.0 / params[m * d + 2 * m + 1]);
                }
                Ok(f.log)
            }
            Family::Rbm => {
                let log = rbm_log(self, params, &x);
                let c = |k: usize| Complex64::new(params[2 * k], params[2 * k + 1]);
                let mut set = |k: usize, v: Complex64| {
                    out[2 * k] = v;
                    out[2 * k + 1] = v * Complex64::i();
                };
                for i in 0..d {
                    set(i, Complex64::from(x[i]));
                }
                for j in 0..m {
                    let mut theta = c(d + j);
                    for i in 0..d {
                        theta += c(d + m + j * d + i) * x[i];
                    }
                    let t = theta.tanh();
                    set(d + j, t);
                    for i in 0..d {
                        set(d + m + j * d + i, t * x[i]);
                    }
                }
                Ok(log)
            }
            Family::SlaterNnJastrow => {
                let rows = self.occupied_rows(config);
                let a = DMatrix::from_fn(n, n, |i, c| params[rows[i] * n + c]);
                let (ld, inv) = log_det_inverse(&a).ok_or(Error::Node(config.bits()))?;
                for (i, &r) in rows.iter().enumerate() {
                    for c in 0..n {
                        out[r * n + c] = Complex64::from(inv[(c, i)]);
                    }
                }
                let jp = &params[d * n..];
                let (j, hidden) = jastrow_forward(self, jp, &x);
                let jo = &mut out[d * n..];
                let wout = &jp[m * d + m..];
                for k in 0..m {
                    jo[m * d + m + k] = Complex64::from(hidden[k]);
                    let delta = wout[k] * (1.0 - hidden[k] * hidden[k]);
                    jo[m * d + k] = Complex64::from(delta);
                    for i in 0..d {
                        jo[k * d + i] = Complex64::from(delta * x[i]);
                    }
                }
                Ok(ld + j)
            }
            Family::NnBackflow => {
                let rows = self.occupied_rows(config);
                let outs: Vec<RowOutput> =
                    rows.iter().map(|&r| backflow_row(self, params, r, &x)).collect();
                let a = DMatrix::from_fn(n, n, |i, c| outs[i].row[c]);
                let (ld, inv) = log_det_inverse(&a).ok_or(Error::Node(config.bits()))?;
                let per_row = m * d + m + n * m + n;
                for (i, (&r, o)) in rows.iter().zip(&outs).enumerate() {
                    let base = r * per_row;
                    let p = &params[base..base + per_row];
                    let v = &p[m * d + m..m * d + m + n * m];
                    let dst = &mut out[base..base + per_row];
                    let mut dh = vec![0.0; m];
                    for c in 0..n {
                        let gc = inv[(c, i)];
                        dst[m * d + m + n * m + c] = Complex64::from(gc);
                        for k in 0..m {
                            dst[m * d + m + c * m + k] = Complex64::from(gc * o.hidden[k]);
                            dh[k] += gc * v[c * m + k];
                        }
                    }
                    for k in 0..m {
                        let delta = dh[k] * (1.0 - o.hidden[k] * o.hidden[k]);
                        dst[m * d + k] = Complex64::from(delta);
                        for l in 0..d {
                            dst[k * d + l] = Complex64::from(delta * x[l]);
                        }
                    }
                }
                Ok(ld)
            }
        }
    }
}

struct FfnOutput {
    hidden: Vec<f64>,
    tanh: f64,
    log: Complex64,
}

fn ffn_forward(net: &Network, params: &[f64], x: &[f64]) -> FfnOutput {
    let (d, m) = (net.d, net.m);
    let w1 = &params[..m * d];
    let b1 = &params[m * d..m * d + m];
    let w2 = &params[m * d + m..m * d + 2 * m];
    let b2 = params[m * d + 2 * m];
    let scale = if net.cfg.output_scale {
        params[m * d + 2 * m + 1]
    } else {
        1.0
    };
    let hidden: Vec<f64> = (0..m)
        .map(|j| {
            let pre = b1[j] + (0..d).map(|i| w1[j * d + i] * x[i]).sum::<f64>();
            pre.max(0.0)
        })
        .collect();
    let o = b2 + hidden.iter().zip(w2).map(|(h, w)| h * w).sum::<f64>();
    let t = o.tanh();
    FfnOutput {
        hidden,
        tanh: t,
        log: real_log(scale * t),
    }
}

/// `ln cosh z` without overflow for large `|Re z|`.
fn ln_cosh(z: Complex64) -> Complex64 {
    let z = if z.re < 0.0 { -z } else { z };
    z + (Complex64::new(1.0, 0.0) + (-2.0 * z).exp()).ln() - core::f64::consts::LN_2
}

fn rbm_log(net: &Network, params: &[f64], x: &[f64]) -> Complex64 {
    let (d, m) = (net.d, net.m);
    let c = |k: usize| Complex64::new(params[2 * k], params[2 * k + 1]);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        acc += c(i) * x[i];
    }
    for j in 0..m {
        let mut theta = c(d + j);
        for i in 0..d {
            theta += c(d + m + j * d + i) * x[i];
        }
        acc += ln_cosh(theta);
    }
    acc
}

/// Jastrow exponent `J = w · tanh(W x + b)` and the hidden activations.
fn jastrow_forward(net: &Network, jp: &[f64], x: &[f64]) -> (Complex64, Vec<f64>) {
    let (d, m) = (net.d, net.m);
    let w = &jp[..m * d];
    let b = &jp[m * d..m * d + m];
    let wout = &jp[m * d + m..m * d + 2 * m];
    let hidden: Vec<f64> = (0..m)
        .map(|k| (b[k] + (0..d).map(|i| w[k * d + i] * x[i]).sum::<f64>()).tanh())
        .collect();
    let j = hidden.iter().zip(wout).map(|(h, w)| h * w).sum::<f64>();
    (Complex64::from(j), hidden)
}

struct RowOutput {
    hidden: Vec<f64>,
    row: Vec<f64>,
}

fn backflow_row(net: &Network, params: &[f64], r: usize, x: &[f64]) -> RowOutput {
    let (d, m, n) = (net.d, net.m, net.n);
    let per_row = m * d + m + n * m + n;
    let p = &params[r * per_row..(r + 1) * per_row];
    let w = &p[..m * d];
    let b = &p[m * d..m * d + m];
    let v = &p[m * d + m..m * d + m + n * m];
    let c = &p[m * d + m + n * m..];
    let hidden: Vec<f64> = (0..m)
        .map(|k| (b[k] + (0..d).map(|i| w[k * d + i] * x[i]).sum::<f64>()).tanh())
        .collect();
    let row = (0..n)
        .map(|col| c[col] + (0..m).map(|k| v[col * m + k] * hidden[k]).sum::<f64>())
        .collect();
    RowOutput { hidden, row }
}

/// `ln` of a real number as modulus plus phase `0` or `π`.
pub fn real_log(v: f64) -> Complex64 {
    if v == 0.0 || !v.is_finite() {
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    let phase = if v < 0.0 { core::f64::consts::PI } else { 0.0 };
    Complex64::new(v.abs().ln(), phase)
}

fn log_det(a: &DMatrix<f64>) -> Complex64 {
    if a.nrows() == 0 {
        return Complex64::new(0.0, 0.0);
    }
    real_log(a.clone().lu().determinant())
}

fn log_det_inverse(a: &DMatrix<f64>) -> Option<(Complex64, DMatrix<f64>)> {
    if a.nrows() == 0 {
        return Some((Complex64::new(0.0, 0.0), DMatrix::zeros(0, 0)));
    }
    let lu = a.clone().lu();
    let det = lu.determinant();
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = lu.try_inverse()?;
    Some((real_log(det), inv))
}

/// Initial parameters: i.i.d. normal weights of width `param_scale` drawn from
/// `ChaCha8Rng(seed)`; determinant families start from the identity-occupied
/// orbital pattern of the sector's reference configuration.
pub fn init_params(cfg: &AnsatzConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.param_scale)
        .map_err(|_| Error::InvalidArgument("invalid parameter scale".into()))?;
    let mut params: Vec<f64> = (0..param_count(cfg))
        .map(|_| normal.sample(&mut rng))
        .collect();
    let (d, m, n) = (cfg.n_modes(), cfg.hidden(), cfg.sector.n_electrons());
    let reference: Vec<usize> = cfg.sector.reference().occupied().collect();
    match cfg.family {
        Family::Ffn => {
            if cfg.output_scale {
                params[m * d + 2 * m + 1] = 1.0;
            }
        }
        Family::Rbm => {}
        Family::SlaterNnJastrow => {
            for (col, &r) in reference.iter().enumerate() {
                params[r * n + col] += 1.0;
            }
        }
        Family::NnBackflow => {
            let per_row = m * d + m + n * m + n;
            for (col, &r) in reference.iter().enumerate() {
                params[r * per_row + m * d + m + n * m + col] += 1.0;
            }
        }
    }
    Ok(params)
}

/// Amplitudes given explicitly on a sector basis; carries no parameters.
#[derive(Debug, Clone)]
pub struct TableAnsatz {
    basis: SectorBasis,
    log_values: Vec<Complex64>,
}

impl TableAnsatz {
    pub fn from_real(basis: SectorBasis, values: &[f64]) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: values.len(),
            });
        }
        Ok(TableAnsatz {
            log_values: values.iter().map(|&v| real_log(v)).collect(),
            basis,
        })
    }

    pub fn from_complex(basis: SectorBasis, values: &[Complex64]) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: values.len(),
            });
        }
        Ok(TableAnsatz {
            log_values: values
                .iter()
                .map(|v| {
                    if v.norm() == 0.0 {
                        Complex64::new(f64::NEG_INFINITY, 0.0)
                    } else {
                        v.ln()
                    }
                })
                .collect(),
            basis,
        })
    }
}

impl Ansatz for TableAnsatz {
    fn n_params(&self) -> usize {
        0
    }

    fn log_amplitude(&self, _params: &[f64], config: Configuration) -> Complex64 {
        match self.basis.index_of(config) {
            Some(i) => self.log_values[i],
            None => Complex64::new(f64::NEG_INFINITY, 0.0),
        }
    }

    fn log_derivatives(
        &self,
        params: &[f64],
        config: Configuration,
        _out: &mut [Complex64],
    ) -> Result<Complex64> {
        let v = self.log_amplitude(params, config);
        if v.re == f64::NEG_INFINITY {
            return Err(Error::Node(config.bits()));
        }
        Ok(v)
    }
}

impl<A: Ansatz + ?Sized> Ansatz for &A {
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn log_amplitude(&self, params: &[f64], config: Configuration) -> Complex64 {
        (**self).log_amplitude(params, config)
    }
    fn log_derivatives(
        &self,
        params: &[f64],
        config: Configuration,
        out: &mut [Complex64],
    ) -> Result<Complex64> {
        (**self).log_derivatives(params, config, out)
    }
}
