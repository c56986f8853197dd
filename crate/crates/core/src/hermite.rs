//! Hermite functions, the Mehler kernel of `e^{-tH(λ)}` with `H(λ) = -Δ + λ²|x|²`,
//! and the Hermite–Bergman weight.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{check_dim, Error, Flagged, Result, Warning};
use crate::numerics::SampledField;

pub type MultiIndex = Vec<usize>;

/// Largest argument modulus for which the complex recurrence is documented as stable.
pub const COMPLEX_RANGE: f64 = 20.0;
/// Largest total degree for which the complex recurrence is documented as stable.
pub const COMPLEX_MAX_DEGREE: usize = 200;
/// `|λ|t` beyond which `sinh` and `cosh` are treated as overflowing.
pub const OVERFLOW_THRESHOLD: f64 = 300.0;

pub fn degree(alpha: &[usize]) -> usize {
    alpha.iter().sum()
}

/// All multi-indices of length `n` with `|α| ≤ max_degree`, graded lexicographic order
/// (by degree, then lexicographically decreasing within a degree).
pub fn multi_indices(n: usize, max_degree: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut level = Vec::new();
        compositions(n, d, &mut Vec::new(), &mut level);
        out.extend(level);
    }
    out
}

fn compositions(n: usize, d: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if n == 0 {
        if d == 0 {
            out.push(prefix.clone());
        }
        return;
    }
    if n == 1 {
        prefix.push(d);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=d).rev() {
        prefix.push(first);
        compositions(n - 1, d - first, prefix, out);
        prefix.pop();
    }
}

/// `φ_0(s), …, φ_m(s)` by the normalised three-term recurrence.
pub fn hermite_1d(m: usize, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(PI.powf(-0.25) * (-0.5 * s * s).exp());
    if m >= 1 {
        out.push(2f64.sqrt() * s * out[0]);
    }
    for j in 1..m {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * s * out[j] - (jf / (jf + 1.0)).sqrt() * out[j - 1];
        out.push(next);
    }
    out
}

/// Complex-argument version of [`hermite_1d`].
pub fn hermite_1d_complex(m: usize, s: C64) -> Vec<C64> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(PI.powf(-0.25) * (-0.5 * s * s).exp());
    if m >= 1 {
        out.push(2f64.sqrt() * s * out[0]);
    }
    for j in 1..m {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * s * out[j] - (jf / (jf + 1.0)).sqrt() * out[j - 1];
        out.push(next);
    }
    out
}

/// `Φ_α(x) = ∏ φ_{α_i}(x_i)`.
pub fn hermite_eval(alpha: &[usize], x: &[f64]) -> Result<f64> {
    check_dim(alpha.len(), x.len())?;
    Ok(alpha
        .iter()
        .zip(x)
        .map(|(&a, &xi)| hermite_1d(a, xi)[a])
        .product())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be nonzero, got {lambda}")));
    }
    Ok(())
}

/// `Φ_α^λ(x) = |λ|^{n/4} Φ_α(√|λ| x)`.
pub fn hermite_eval_scaled(alpha: &[usize], lambda: f64, x: &[f64]) -> Result<f64> {
    check_lambda(lambda)?;
    let l = lambda.abs();
    let xs: Vec<f64> = x.iter().map(|v| v * l.sqrt()).collect();
    Ok(l.powf(alpha.len() as f64 / 4.0) * hermite_eval(alpha, &xs)?)
}

/// Entire extension of `Φ_α`; a range warning is attached outside `|z_i| ≤ 20`, `|α| ≤ 200`.
pub fn hermite_eval_complex(alpha: &[usize], z: &[C64]) -> Result<Flagged<C64>> {
    check_dim(alpha.len(), z.len())?;
    let value = alpha
        .iter()
        .zip(z)
        .map(|(&a, &zi)| hermite_1d_complex(a, zi)[a])
        .product();
    let mut out = Flagged::clean(value);
    let zmax = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if zmax > COMPLEX_RANGE || degree(alpha) > COMPLEX_MAX_DEGREE {
        out.warnings.push(Warning::Range {
            detail: format!("|z| = {zmax}, |alpha| = {}", degree(alpha)),
        });
    }
    Ok(out)
}

/// Entire extension of `Φ_α^λ`.
pub fn hermite_eval_scaled_complex(alpha: &[usize], lambda: f64, z: &[C64]) -> Result<Flagged<C64>> {
    check_lambda(lambda)?;
    let l = lambda.abs();
    let zs: Vec<C64> = z.iter().map(|v| v * l.sqrt()).collect();
    let mut r = hermite_eval_complex(alpha, &zs)?;
    r.value *= l.powf(alpha.len() as f64 / 4.0);
    Ok(r)
}

/// Finite expansion `Σ c_α Φ_α^λ` in the scaled Hermite basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteCoeffs {
    pub n: usize,
    pub lambda: f64,
    pub terms: BTreeMap<MultiIndex, C64>,
}

impl HermiteCoeffs {
    pub fn new(n: usize, lambda: f64) -> Result<HermiteCoeffs> {
        check_lambda(lambda)?;
        Ok(HermiteCoeffs {
            n,
            lambda,
            terms: BTreeMap::new(),
        })
    }

    pub fn with(mut self, alpha: MultiIndex, c: C64) -> Result<HermiteCoeffs> {
        check_dim(self.n, alpha.len())?;
        *self.terms.entry(alpha).or_insert(C64::new(0.0, 0.0)) += c;
        Ok(self)
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().map(|a| degree(a)).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<C64> {
        self.eval_complex(&x.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>())
    }

    pub fn eval_complex(&self, z: &[C64]) -> Result<C64> {
        check_dim(self.n, z.len())?;
        let l = self.lambda.abs();
        let m = self.max_degree();
        let tables: Vec<Vec<C64>> = z.iter().map(|&zi| hermite_1d_complex(m, zi * l.sqrt())).collect();
        let scale = l.powf(self.n as f64 / 4.0);
        Ok(self
            .terms
            .iter()
            .map(|(alpha, c)| {
                let p: C64 = alpha.iter().enumerate().map(|(i, &a)| tables[i][a]).product();
                c * p * scale
            })
            .sum())
    }

    /// `e^{-tH(λ)}` applied termwise: `c_α ↦ e^{-(2|α|+n)|λ|t} c_α`.
    pub fn evolve(&self, t: f64) -> HermiteCoeffs {
        let l = self.lambda.abs();
        let n = self.n as f64;
        let terms = self
            .terms
            .iter()
            .map(|(a, c)| (a.clone(), c * (-(2.0 * degree(a) as f64 + n) * l * t).exp()))
            .collect();
        HermiteCoeffs {
            n: self.n,
            lambda: self.lambda,
            terms,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Projections `⟨f, Φ_α^λ⟩` for `|α| ≤ max_degree`, by quadrature on the field's grid.
pub fn hermite_coefficients(f: &SampledField, lambda: f64, max_degree: usize) -> Result<HermiteCoeffs> {
    check_lambda(lambda)?;
    let g = f.grid();
    let n = g.dim();
    let l = lambda.abs();
    let w = g.weights();
    let axis_tables: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            g.axis_coords(i)
                .iter()
                .map(|&x| hermite_1d(max_degree, x * l.sqrt()))
                .collect()
        })
        .collect();
    let scale = l.powf(n as f64 / 4.0);
    let mut out = HermiteCoeffs::new(n, lambda)?;
    for alpha in multi_indices(n, max_degree) {
        let mut acc = C64::new(0.0, 0.0);
        for flat in 0..g.len() {
            let idx = g.multi_index(flat);
            let phi: f64 = (0..n).map(|i| axis_tables[i][idx[i]][alpha[i]]).product();
            acc += f.values()[flat] * (phi * scale * w[flat]);
        }
        out.terms.insert(alpha, acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteParams {
    lambda: f64,
    t: f64,
}

impl HermiteParams {
    pub fn new(lambda: f64, t: f64) -> Result<HermiteParams> {
        check_lambda(lambda)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
        }
        Ok(HermiteParams { lambda, t })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    fn lt(&self) -> Result<f64> {
        let v = self.lambda.abs() * self.t;
        if v > OVERFLOW_THRESHOLD {
            return Err(Error::Overflow {
                value: v,
                threshold: OVERFLOW_THRESHOLD,
            });
        }
        Ok(v)
    }
}

/// Normalising constant of the Mehler kernel in dimension `n`: `(|λ|/4π)^{n/2}`.
///
/// This is the value for which `∫ K_t^λ(x,u) Φ_α^λ(u) du = e^{-(2|α|+n)|λ|t} Φ_α^λ(x)`.
pub fn mehler_constant(lambda: f64, n: usize) -> f64 {
    (lambda.abs() / (4.0 * PI)).powf(n as f64 / 2.0)
}

/// Closed-form Mehler kernel, even in `λ`.
pub fn mehler_kernel(p: &HermiteParams, x: &[f64], u: &[f64]) -> Result<f64> {
    check_dim(x.len(), u.len())?;
    let z: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    let w: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
    Ok(mehler_kernel_complex(p, &z, &w)?.re)
}

/// Entire extension of the Mehler kernel in both arguments.
pub fn mehler_kernel_complex(p: &HermiteParams, z: &[C64], u: &[C64]) -> Result<C64> {
    check_dim(z.len(), u.len())?;
    let n = z.len();
    let lt = p.lt()?;
    let l = p.lambda.abs();
    let (s, c) = (lt.sinh(), lt.cosh());
    let pre = mehler_constant(p.lambda, n) * (s * c).powf(-(n as f64) / 2.0);
    let mut plus = C64::new(0.0, 0.0);
    let mut minus = C64::new(0.0, 0.0);
    for (a, b) in z.iter().zip(u) {
        plus += (a + b) * (a + b);
        minus += (a - b) * (a - b);
    }
    let expo = -(l / 4.0) * (lt.tanh() * plus + (c / s) * minus);
    Ok(pre * expo.exp())
}

/// Truncated eigen-expansion `Σ_{|α| ≤ N} e^{-(2|α|+n)|λ|t} Φ_α^λ(x) Φ_α^λ(u)`.
pub fn mehler_series(p: &HermiteParams, x: &[f64], u: &[f64], max_degree: usize) -> Result<f64> {
    check_dim(x.len(), u.len())?;
    let l = p.lambda.abs();
    let n = x.len();
    let tx: Vec<Vec<f64>> = x.iter().map(|&v| hermite_1d(max_degree, v * l.sqrt())).collect();
    let tu: Vec<Vec<f64>> = u.iter().map(|&v| hermite_1d(max_degree, v * l.sqrt())).collect();
    let scale = l.powf(n as f64 / 2.0);
    let mut sum = 0.0;
    for alpha in multi_indices(n, max_degree) {
        let a: f64 = (0..n).map(|i| tx[i][alpha[i]] * tu[i][alpha[i]]).product();
        sum += (-(2.0 * degree(&alpha) as f64 + n as f64) * l * p.t).exp() * a;
    }
    Ok(sum * scale)
}

/// Relative boundary magnitude above which quadrature inputs are flagged.
pub const DECAY_LIMIT: f64 = 1e-10;

/// `∫ K_t^λ(x, u) f(u) du` at a real or complex point `x`.
pub fn hermite_semigroup_apply(p: &HermiteParams, f: &SampledField, x: &[C64]) -> Result<Flagged<C64>> {
    let g = f.grid();
    check_dim(g.dim(), x.len())?;
    let n = x.len();
    let lt = p.lt()?;
    let l = p.lambda.abs();
    let pre = mehler_constant(p.lambda, n) * (lt.sinh() * lt.cosh()).powf(-(n as f64) / 2.0);
    let (a, b) = (l / 4.0 * lt.tanh(), l / 4.0 / lt.tanh());
    // The kernel factorises over coordinates, so contract axis by axis.
    let factors: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            let w = g.axis_weights(i);
            g.axis_coords(i)
                .iter()
                .zip(&w)
                .map(|(&u, &wi)| {
                    let s = x[i] + u;
                    let d = x[i] - u;
                    (-(a * s * s + b * d * d)).exp() * wi
                })
                .collect()
        })
        .collect();
    let value = crate::numerics::contract(f.values(), g.points(), &factors) * pre;
    let mut out = Flagged::clean(value);
    let ratio = f.boundary_ratio();
    if ratio > DECAY_LIMIT {
        out.warnings.push(Warning::Truncation { ratio });
    }
    Ok(out)
}

/// How `λ < 0` enters the Hermite–Bergman weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSign {
    /// The displayed formula as written.
    Verbatim,
    /// `λ` replaced by `|λ|` throughout.
    Absolute,
}

/// `U_t^λ(x,y) = c (sinh 4λt)^{-n/2} e^{λ tanh(2λt) x²} e^{-λ coth(2λt) y²}` with the
/// Mehler constant `c`.
pub fn hermite_bergman_weight(p: &HermiteParams, x: &[f64], y: &[f64], sign: LambdaSign) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    p.lt()?;
    let n = x.len();
    let lambda = match sign {
        LambdaSign::Verbatim => p.lambda,
        LambdaSign::Absolute => p.lambda.abs(),
    };
    let s4 = (4.0 * lambda * p.t).sinh();
    let pow = if s4 > 0.0 {
        s4.powf(-(n as f64) / 2.0)
    } else if n % 2 == 0 {
        let m = s4.abs().powf(-(n as f64) / 2.0);
        if (n / 2) % 2 == 0 {
            m
        } else {
            -m
        }
    } else {
        return Err(Error::InvalidParameter(format!(
            "(sinh 4λt)^(-n/2) is not real for λ = {lambda}, n = {n}"
        )));
    };
    let x2: f64 = x.iter().map(|v| v * v).sum();
    let y2: f64 = y.iter().map(|v| v * v).sum();
    let tt = (2.0 * lambda * p.t).tanh();
    Ok(mehler_constant(p.lambda, n) * pow * (lambda * tt * x2 - lambda / tt * y2).exp())
}

/// `(∫ |F(x+iy)|² U_t^λ(x,y) dx dy)^{1/2}` for a field sampled over `(x, y) ∈ ℝ^{2n}`.
pub fn hermite_bergman_norm(f: &SampledField, p: &HermiteParams, sign: LambdaSign) -> Result<Flagged<f64>> {
    let g = f.grid();
    if g.dim() % 2 != 0 {
        return Err(Error::InvalidInput("field must live on R^{2n}".into()));
    }
    let n = g.dim() / 2;
    let w = g.weights();
    let mut sum = 0.0;
    let mut integrand = Vec::with_capacity(g.len());
    for flat in 0..g.len() {
        let c = g.coords_of(flat);
        let u = hermite_bergman_weight(p, &c[..n], &c[n..], sign)?;
        let v = f.values()[flat].norm_sqr() * u;
        integrand.push(C64::new(v, 0.0));
        sum += v * w[flat];
    }
    let mut out = Flagged::clean(sum.sqrt());
    let ratio = SampledField::new(g.clone(), integrand)?.boundary_ratio();
    if ratio > DECAY_LIMIT {
        out.warnings.push(Warning::Truncation { ratio });
    }
    Ok(out)
}
