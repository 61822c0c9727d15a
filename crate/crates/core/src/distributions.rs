//! Log-densities, moments and the Gaussian sampler used by the class
//! tracker.
//!
//! Densities are only exposed in log space: at embedding widths of a few
//! dozen dimensions the raw Wishart and normal-inverse-Wishart normalisers
//! under- or overflow `f64`.

use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use crate::matrix::{cholesky, CholFactor, SymMatrix};
use crate::{Error, Result, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean and covariance of a multivariate normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch { expected: cov.dim(), found: mean.len() });
        }
        if !mean.iter().all(|v| v.is_finite()) || !cov.is_finite() {
            return Err(Error::NonFinite("gaussian parameters"));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Scale matrix `psi` and degrees of freedom `dof` of an inverse Wishart.
#[derive(Debug, Clone, PartialEq)]
pub struct InvWishartParams {
    pub scale: SymMatrix,
    pub dof: f64,
}

/// Location, shape matrix and degrees of freedom of a multivariate t.
#[derive(Debug, Clone, PartialEq)]
pub struct MvtParams {
    pub mean: Vec<f64>,
    pub shape: SymMatrix,
    pub dof: f64,
}

/// Normal-inverse-Wishart parameters: location `mean`, mean precision
/// count `kappa`, scale `scale` and covariance degrees of freedom `dof`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwParams {
    pub mean: Vec<f64>,
    pub kappa: f64,
    pub scale: SymMatrix,
    pub dof: f64,
}

fn residual(x: &[f64], mean: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch { expected: mean.len(), found: x.len() });
    }
    Ok(x.iter().zip(mean).map(|(a, b)| a - b).collect())
}

/// `ln N(x; mu, Sigma) = -1/2 [d ln 2pi + ln|Sigma| + (x-mu)^T Sigma^-1 (x-mu)]`
pub fn mvn_logpdf(x: &[f64], p: &GaussianParams) -> Result<f64> {
    let f = cholesky(&p.cov)?;
    mvn_logpdf_factored(x, &p.mean, &f)
}

fn mvn_logpdf_factored(x: &[f64], mean: &[f64], f: &CholFactor) -> Result<f64> {
    let r = residual(x, mean)?;
    let q = f.quad_form(&r)?;
    Ok(-0.5 * (mean.len() as f64 * LN_2PI + f.logdet() + q))
}

/// A Gaussian with its covariance already factored, for repeated draws.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: Vec<f64>,
    chol: CholFactor,
}

impl MvnSampler {
    pub fn new(p: &GaussianParams) -> Result<Self> {
        Ok(Self { mean: p.mean.clone(), chol: cholesky(&p.cov)? })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `mu + L z` with `z` i.i.d. standard normal.
    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let mut z = alloc::vec![0.0; self.dim()];
        rng.fill_standard_normal(&mut z);
        let mut x = self.chol.mul_lower(&z).expect("dimension checked");
        x.iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        x
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        mvn_logpdf_factored(x, &self.mean, &self.chol)
    }
}

/// One draw from `N(mu, Sigma)`. Factor once with [`MvnSampler`] when
/// drawing repeatedly from the same distribution.
pub fn mvn_sample(p: &GaussianParams, rng: &mut Rng) -> Result<Vec<f64>> {
    Ok(MvnSampler::new(p)?.sample(rng))
}

/// `ln Gamma_d(a)`, via `Gamma_d(a) = pi^{(d-1)/2} Gamma(a) Gamma_{d-1}(a - 1/2)`.
pub fn multigamma_ln(a: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("multivariate gamma needs d >= 1"));
    }
    if !(a > (d as f64 - 1.0) / 2.0) {
        return Err(Error::Domain("multivariate gamma needs a > (d-1)/2"));
    }
    // Unrolled recurrence: d(d-1)/4 ln(pi) + sum_j ln Gamma(a - j/2)
    let df = d as f64;
    let mut s = df * (df - 1.0) / 4.0 * libm::log(PI);
    for j in 0..d {
        s += libm::lgamma(a - j as f64 / 2.0);
    }
    Ok(s)
}

fn check_square(x: &SymMatrix, y: &SymMatrix) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: y.dim(), found: x.dim() });
    }
    Ok(())
}

/// Log-density of the Wishart `W_d(V, nu)` at `x`.
pub fn wishart_logpdf(x: &SymMatrix, v: &SymMatrix, nu: f64) -> Result<f64> {
    check_square(x, v)?;
    let d = x.dim() as f64;
    if !(nu >= d) {
        return Err(Error::Domain("wishart needs nu >= d"));
    }
    let fx = cholesky(x)?;
    let fv = cholesky(v)?;
    let tr = fv.trace_solve(x)?;
    Ok((nu - d - 1.0) / 2.0 * fx.logdet()
        - 0.5 * tr
        - nu * d / 2.0 * LN_2
        - nu / 2.0 * fv.logdet()
        - multigamma_ln(nu / 2.0, x.dim())?)
}

/// Log-density of the inverse Wishart `W^-1_d(Psi, nu)` at `x`.
pub fn invwishart_logpdf(x: &SymMatrix, p: &InvWishartParams) -> Result<f64> {
    check_square(x, &p.scale)?;
    let d = x.dim() as f64;
    let nu = p.dof;
    if !(nu > d - 1.0) {
        return Err(Error::Domain("inverse wishart needs nu > d - 1"));
    }
    let fx = cholesky(x)?;
    let fpsi = cholesky(&p.scale)?;
    // tr(Psi x^-1) = tr(x^-1 Psi)
    let tr = fx.trace_solve(&p.scale)?;
    Ok(nu / 2.0 * fpsi.logdet()
        - nu * d / 2.0 * LN_2
        - multigamma_ln(nu / 2.0, x.dim())?
        - (nu + d + 1.0) / 2.0 * fx.logdet()
        - 0.5 * tr)
}

/// `E[X] = Psi / (nu - d - 1)`, defined for `nu > d + 1`.
pub fn invwishart_mean(p: &InvWishartParams) -> Result<SymMatrix> {
    let d = p.scale.dim() as f64;
    if !(p.dof > d + 1.0) {
        return Err(Error::Domain("inverse wishart mean needs nu > d + 1"));
    }
    Ok(p.scale.scaled(1.0 / (p.dof - d - 1.0)))
}

/// Log-density of the multivariate t with the normalised exponent
/// `-(nu + d)/2`:
///
/// `ln Gamma((nu+d)/2) - ln Gamma(nu/2) - d/2 ln(nu pi) - 1/2 ln|Sigma|
///  - (nu+d)/2 ln(1 + q/nu)`
pub fn mvt_logpdf(x: &[f64], p: &MvtParams) -> Result<f64> {
    if !(p.dof > 0.0) {
        return Err(Error::Domain("student-t needs nu > 0"));
    }
    let f = cholesky(&p.shape)?;
    let r = residual(x, &p.mean)?;
    let q = f.quad_form(&r)?;
    let d = p.mean.len() as f64;
    let nu = p.dof;
    Ok(libm::lgamma((nu + d) / 2.0)
        - libm::lgamma(nu / 2.0)
        - d / 2.0 * libm::log(nu * PI)
        - 0.5 * f.logdet()
        - (nu + d) / 2.0 * libm::log1p(q / nu))
}

/// Joint log-density of `(mu, Sigma)` under `NIW(mu', kappa, Sigma', nu)`.
pub fn niw_logpdf(mu: &[f64], sigma: &SymMatrix, p: &NiwParams) -> Result<f64> {
    check_square(sigma, &p.scale)?;
    let dn = sigma.dim();
    let d = dn as f64;
    let nu = p.dof;
    if !(p.kappa > 0.0) {
        return Err(Error::Domain("NIW needs kappa > 0"));
    }
    if !(nu > d - 1.0) {
        return Err(Error::Domain("NIW needs nu > d - 1"));
    }
    let fs = cholesky(sigma)?;
    let fscale = cholesky(&p.scale)?;
    let r = residual(mu, &p.mean)?;
    let q = fs.quad_form(&r)?;
    let tr = fs.trace_solve(&p.scale)?;
    Ok(nu / 2.0 * fscale.logdet() - ((nu + d) / 2.0 + 1.0) * fs.logdet()
        - nu * d / 2.0 * LN_2
        - multigamma_ln(nu / 2.0, dn)?
        - d / 2.0 * libm::log(2.0 * PI / p.kappa)
        - 0.5 * tr
        - p.kappa / 2.0 * q)
}
