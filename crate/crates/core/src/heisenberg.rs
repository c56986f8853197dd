//! The Heisenberg group and its complexification, the Schrödinger representation,
//! the heat kernel, the twisted kernel `p_t^λ`, twisted convolution and the twisted
//! Bergman weight.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{check_dim, Error, Flagged, Result, Warning};
use crate::hermite::DECAY_LIMIT;
use crate::numerics::{contract, SampledField};

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn dot<T: Copy + std::ops::Mul<Output = T> + std::iter::Sum>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| p * q).sum()
}

/// Time and central frequency of a heat-type kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatParams {
    t: f64,
    lambda: f64,
}

impl HeatParams {
    pub fn new(t: f64, lambda: f64) -> Result<HeatParams> {
        if !(t > 0.0) || !t.is_finite() || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("need finite t > 0, got t = {t}, lambda = {lambda}")));
        }
        Ok(HeatParams { t, lambda })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// A point `(x, u, ξ)` of `ℝⁿ × ℝⁿ × ℝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub xi: f64,
}

/// A point `(z, w, ζ)` of the complexified group.
#[derive(Debug, Clone, PartialEq)]
pub struct CGroupPoint {
    pub z: Vec<C64>,
    pub w: Vec<C64>,
    pub zeta: C64,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, u: Vec<f64>, xi: f64) -> Result<GroupPoint> {
        check_dim(x.len(), u.len())?;
        Ok(GroupPoint { x, u, xi })
    }

    pub fn identity(n: usize) -> GroupPoint {
        GroupPoint {
            x: vec![0.0; n],
            u: vec![0.0; n],
            xi: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn inverse(&self) -> GroupPoint {
        GroupPoint {
            x: self.x.iter().map(|v| -v).collect(),
            u: self.u.iter().map(|v| -v).collect(),
            xi: -self.xi,
        }
    }

    pub fn complexify(&self) -> CGroupPoint {
        CGroupPoint {
            z: self.x.iter().map(|&v| real(v)).collect(),
            w: self.u.iter().map(|&v| real(v)).collect(),
            zeta: real(self.xi),
        }
    }
}

impl CGroupPoint {
    pub fn new(z: Vec<C64>, w: Vec<C64>, zeta: C64) -> Result<CGroupPoint> {
        check_dim(z.len(), w.len())?;
        Ok(CGroupPoint { z, w, zeta })
    }

    pub fn identity(n: usize) -> CGroupPoint {
        GroupPoint::identity(n).complexify()
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn inverse(&self) -> CGroupPoint {
        CGroupPoint {
            z: self.z.iter().map(|v| -v).collect(),
            w: self.w.iter().map(|v| -v).collect(),
            zeta: -self.zeta,
        }
    }

    pub fn real_part(&self) -> GroupPoint {
        GroupPoint {
            x: self.z.iter().map(|v| v.re).collect(),
            u: self.w.iter().map(|v| v.re).collect(),
            xi: self.zeta.re,
        }
    }
}

/// `(x,u,ξ)(x',u',ξ') = (x+x', u+u', ξ+ξ'+½(u·x' − x·u'))`.
pub fn group_mul(a: &GroupPoint, b: &GroupPoint) -> Result<GroupPoint> {
    check_dim(a.n(), b.n())?;
    Ok(GroupPoint {
        x: a.x.iter().zip(&b.x).map(|(p, q)| p + q).collect(),
        u: a.u.iter().zip(&b.u).map(|(p, q)| p + q).collect(),
        xi: a.xi + b.xi + 0.5 * (dot(&a.u, &b.x) - dot(&a.x, &b.u)),
    })
}

/// Holomorphic extension of [`group_mul`].
pub fn cgroup_mul(a: &CGroupPoint, b: &CGroupPoint) -> Result<CGroupPoint> {
    check_dim(a.n(), b.n())?;
    Ok(CGroupPoint {
        z: a.z.iter().zip(&b.z).map(|(p, q)| p + q).collect(),
        w: a.w.iter().zip(&b.w).map(|(p, q)| p + q).collect(),
        zeta: a.zeta + b.zeta + 0.5 * (dot(&a.w, &b.z) - dot(&a.z, &b.w)),
    })
}

pub fn group_inv(a: &GroupPoint) -> GroupPoint {
    a.inverse()
}

/// `π_λ(x,u,ξ)φ(v) = e^{iλξ} e^{iλ(x·v + ½x·u)} φ(v+u)` on a sampled `φ`.
///
/// The translation is spectral; samples pushed out of the box are zero-filled with a warning.
pub fn schrodinger_apply(lambda: f64, g: &GroupPoint, phi: &SampledField) -> Result<Flagged<SampledField>> {
    if lambda == 0.0 {
        return Err(Error::InvalidParameter("lambda must be nonzero".into()));
    }
    check_dim(g.n(), phi.grid().dim())?;
    let shifted = phi.shifted(&g.u)?;
    let xu = dot(&g.x, &g.u);
    let grid = phi.grid().clone();
    let mut values = shifted.value.into_values();
    for (flat, v) in values.iter_mut().enumerate() {
        let vpos = grid.coords_of(flat);
        let phase = lambda * (g.xi + dot(&g.x, &vpos) + 0.5 * xu);
        *v *= C64::from_polar(1.0, phase);
    }
    Ok(Flagged {
        value: SampledField::new(grid, values)?,
        warnings: shifted.warnings,
    })
}

/// Normalising constant of `p_t^λ`: `(4π)^{-n}`.
pub fn p_constant(n: usize) -> f64 {
    (4.0 * PI).powi(-(n as i32))
}

/// `ln(λ / sinh(λt))`, continuous through `λ = 0` where it equals `-ln t`.
fn log_lam_over_sinh(lambda: f64, t: f64) -> f64 {
    let a = lambda.abs();
    let x = a * t;
    if x < 1e-4 {
        let x2 = x * x;
        return -t.ln() + (1.0 - x2 / 6.0 + 7.0 * x2 * x2 / 360.0).ln();
    }
    if x > 20.0 {
        return a.ln() - x + 2f64.ln() - (-(-2.0 * x).exp()).ln_1p();
    }
    (a / x.sinh()).ln()
}

/// `λ coth(λt)`, continuous through `λ = 0` where it equals `1/t`.
fn lam_coth(lambda: f64, t: f64) -> f64 {
    let a = lambda.abs();
    let x = a * t;
    if x < 1e-4 {
        let x2 = x * x;
        return (1.0 + x2 / 3.0 - x2 * x2 / 45.0) / t;
    }
    a / x.tanh()
}

/// Prefactor and Gaussian rate of `p_t^λ`: `p = pre · e^{-rate (x² + u²)}`.
/// At `λ = 0` this is the Euclidean heat kernel `(4πt)^{-n} e^{-r²/4t}`.
pub fn p_coefficients(lambda: f64, t: f64, n: usize) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let v = lambda.abs() * t;
    if v > crate::hermite::OVERFLOW_THRESHOLD {
        return Err(Error::Overflow {
            value: v,
            threshold: crate::hermite::OVERFLOW_THRESHOLD,
        });
    }
    let pre = p_constant(n) * (n as f64 * log_lam_over_sinh(lambda, t)).exp();
    Ok((pre, 0.25 * lam_coth(lambda, t)))
}

/// `p_t^λ(x,u) = (4π)^{-n} λⁿ (sinh λt)^{-n} e^{-¼λ coth(λt)(x²+u²)}`.
pub fn p_kernel(lambda: f64, t: f64, x: &[f64], u: &[f64]) -> Result<f64> {
    if lambda == 0.0 {
        return Err(Error::InvalidParameter("lambda must be nonzero; use p_kernel_euclidean".into()));
    }
    check_dim(x.len(), u.len())?;
    let (pre, b) = p_coefficients(lambda, t, x.len())?;
    Ok(pre * (-b * (dot(x, x) + dot(u, u))).exp())
}

/// Entire extension of [`p_kernel`] (squares are bilinear, not Hermitian).
pub fn p_kernel_complex(lambda: f64, t: f64, z: &[C64], w: &[C64]) -> Result<C64> {
    if lambda == 0.0 {
        return Err(Error::InvalidParameter("lambda must be nonzero".into()));
    }
    check_dim(z.len(), w.len())?;
    let (pre, b) = p_coefficients(lambda, t, z.len())?;
    Ok(pre * (-b * (dot(z, z) + dot(w, w))).exp())
}

/// The `λ → 0` limit `(4πt)^{-n} e^{-(x²+u²)/4t}`.
pub fn p_kernel_euclidean(t: f64, x: &[f64], u: &[f64]) -> Result<f64> {
    check_dim(x.len(), u.len())?;
    let (pre, b) = p_coefficients(0.0, t, x.len())?;
    Ok(pre * (-b * (dot(x, x) + dot(u, u))).exp())
}

/// Normalising constant of the heat kernel's λ-integral: `(2π)^{-1}(4π)^{-n}`.
pub fn heat_constant(n: usize) -> f64 {
    p_constant(n) / (2.0 * PI)
}

/// Quadrature controls for the λ-integral defining the heat kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatQuadrature {
    /// Minimum number of λ-nodes on `[-Λ, Λ]`.
    pub nodes: usize,
    /// Fixed cutoff `Λ`; chosen from the integrand's decay when `None`.
    pub cutoff: Option<f64>,
    /// Reject points outside `|Im z|, |Im w| ≤ 3`, `|Im ζ| ≤ min(1, tΛ/2)`.
    pub restrict_domain: bool,
}

impl Default for HeatQuadrature {
    fn default() -> Self {
        HeatQuadrature {
            nodes: 2048,
            cutoff: None,
            restrict_domain: true,
        }
    }
}

/// Default cutoff for real points: `√(ln 10¹⁴ / t) + 4`.
pub fn default_cutoff(t: f64) -> f64 {
    (1e14f64.ln() / t).sqrt() + 4.0
}

/// Log-modulus bound of the heat kernel's λ-integrand.
fn log_integrand_bound(lambda: f64, t: f64, n: usize, im_zeta: f64, re_s: f64) -> f64 {
    -t * lambda * lambda + lambda.abs() * im_zeta + n as f64 * log_lam_over_sinh(lambda, t)
        - 0.25 * lam_coth(lambda, t) * re_s
}

/// Cutoff `Λ` and node count for a heat-kernel evaluation at `p`.
pub fn heat_quadrature_plan(t: f64, p: &CGroupPoint, q: &HeatQuadrature) -> Result<(f64, usize)> {
    let n = p.n();
    let s: C64 = dot(&p.z, &p.z) + dot(&p.w, &p.w);
    let im_zeta = p.zeta.im.abs();
    let base = default_cutoff(t);
    let cutoff = match q.cutoff {
        Some(c) => c,
        None => {
            let mut peak = f64::NEG_INFINITY;
            let mut lam = 0.0;
            let step = 0.05 / t.sqrt();
            while lam < 10.0 * base {
                peak = peak.max(log_integrand_bound(lam, t, n, im_zeta, s.re));
                lam += step;
            }
            let mut c = base;
            while log_integrand_bound(c, t, n, im_zeta, s.re) > peak - 1e14f64.ln() - 4.0 {
                c += step;
                if c > 10.0 * base {
                    return Err(Error::Truncation {
                        ratio: (log_integrand_bound(c, t, n, im_zeta, s.re) - peak).exp(),
                        limit: 1e-14,
                    });
                }
            }
            c
        }
    };
    // The rectangle rule in λ periodises in ξ with period 2π/h.
    let zw: f64 = p.z.iter().chain(&p.w).map(|v| v.norm_sqr()).sum();
    let extent = p.zeta.re.abs() + 0.25 * zw + 25.0 * t + 1.0;
    let needed = (2.0 * cutoff * 2.0 * extent / (2.0 * PI)).ceil() as usize;
    let mut nodes = q.nodes.max(needed);
    nodes += nodes % 2;
    Ok((cutoff, nodes))
}

/// `k_t(z,w,ζ) = c ∫ e^{-iλζ} e^{-tλ²} (λ/sinh λt)ⁿ e^{-¼λ coth(λt)(z²+w²)} dλ`, `c = (2π)^{-1}(4π)^{-n}`.
pub fn heat_kernel(t: f64, p: &CGroupPoint) -> Result<C64> {
    heat_kernel_with(t, p, &HeatQuadrature::default())
}

pub fn heat_kernel_real(t: f64, g: &GroupPoint) -> Result<f64> {
    Ok(heat_kernel(t, &g.complexify())?.re)
}

pub fn heat_kernel_with(t: f64, p: &CGroupPoint, q: &HeatQuadrature) -> Result<C64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let n = p.n();
    let (cutoff, nodes) = heat_quadrature_plan(t, p, q)?;
    if q.restrict_domain {
        let im_zw = p.z.iter().chain(&p.w).map(|v| v.im.abs()).fold(0.0, f64::max);
        if im_zw > 3.0 || p.zeta.im.abs() > (t * cutoff / 2.0).min(1.0) {
            return Err(Error::InvalidInput(format!(
                "point outside the certified complex domain (|Im z|,|Im w| = {im_zw}, |Im ζ| = {})",
                p.zeta.im.abs()
            )));
        }
    }
    let s: C64 = dot(&p.z, &p.z) + dot(&p.w, &p.w);
    let h = 2.0 * cutoff / nodes as f64;
    let mut sum = C64::new(0.0, 0.0);
    for l in 0..=nodes / 2 {
        let lam = l as f64 * h;
        let log_mag = -t * lam * lam + n as f64 * log_lam_over_sinh(lam, t);
        let e = (real(log_mag) - 0.25 * lam_coth(lam, t) * s).exp();
        let weight = if l == 0 {
            1.0
        } else if l == nodes / 2 {
            1.0 // endpoint halves of the two symmetric ends
        } else {
            2.0
        };
        sum += e * (lam * p.zeta).cos() * weight;
    }
    Ok(sum * h * heat_constant(n))
}

/// Plain twisted convolution `∫ f(x',u') k(z−x', w−u') e^{-i(λ/2)(w·x' − z·u')} dx'du'`
/// against an arbitrary kernel, at real or complex points `(z, w)`.
pub fn twisted_convolution(
    lambda: f64,
    f: &SampledField,
    kernel: &dyn Fn(&[C64], &[C64]) -> C64,
    points: &[(Vec<C64>, Vec<C64>)],
) -> Result<Vec<C64>> {
    let g = f.grid();
    if g.dim() % 2 != 0 {
        return Err(Error::InvalidInput("twisted convolution needs a field on R^{2n}".into()));
    }
    let n = g.dim() / 2;
    let w = g.weights();
    let coords: Vec<Vec<f64>> = (0..g.len()).map(|i| g.coords_of(i)).collect();
    let mut out = Vec::with_capacity(points.len());
    let mut dz = vec![C64::new(0.0, 0.0); n];
    let mut dw = vec![C64::new(0.0, 0.0); n];
    for (z, wp) in points {
        check_dim(n, z.len())?;
        check_dim(n, wp.len())?;
        let mut acc = C64::new(0.0, 0.0);
        for (flat, c) in coords.iter().enumerate() {
            let (xp, up) = c.split_at(n);
            let mut phase = C64::new(0.0, 0.0);
            for i in 0..n {
                dz[i] = z[i] - xp[i];
                dw[i] = wp[i] - up[i];
                phase += wp[i] * xp[i] - z[i] * up[i];
            }
            acc += f.values()[flat] * kernel(&dz, &dw) * (-I * (lambda / 2.0) * phase).exp() * w[flat];
        }
        out.push(acc);
    }
    Ok(out)
}

/// `f *_λ p_t^λ` at real or complex points, exploiting the factorisation of the kernel
/// and the phase over coordinates. `λ = 0` gives ordinary convolution with the
/// Euclidean heat kernel.
pub fn twisted_heat_convolution(
    lambda: f64,
    t: f64,
    f: &SampledField,
    points: &[(Vec<C64>, Vec<C64>)],
) -> Result<Vec<Flagged<C64>>> {
    let g = f.grid();
    if g.dim() % 2 != 0 {
        return Err(Error::InvalidInput("twisted convolution needs a field on R^{2n}".into()));
    }
    let n = g.dim() / 2;
    let (pre, b) = p_coefficients(lambda, t, n)?;
    let coords: Vec<Vec<f64>> = (0..2 * n).map(|i| g.axis_coords(i)).collect();
    let weights: Vec<Vec<f64>> = (0..2 * n).map(|i| g.axis_weights(i)).collect();
    let field_edge = f.boundary_ratio();
    let mut out = Vec::with_capacity(points.len());
    for (z, w) in points {
        check_dim(n, z.len())?;
        check_dim(n, w.len())?;
        let mut factors = Vec::with_capacity(2 * n);
        let mut kernel_edge: f64 = 0.0;
        for axis in 0..2 * n {
            let (centre, partner, sign) = if axis < n {
                (z[axis], w[axis], -1.0)
            } else {
                (w[axis - n], z[axis - n], 1.0)
            };
            let fac: Vec<C64> = coords[axis]
                .iter()
                .zip(&weights[axis])
                .map(|(&y, &wt)| {
                    let d = centre - y;
                    (-b * d * d + I * (sign * lambda / 2.0) * partner * y).exp() * wt
                })
                .collect();
            if !g.is_periodic(axis) {
                let peak = fac.iter().map(|v| v.norm()).fold(0.0, f64::max);
                if peak > 0.0 {
                    let edge = fac[0].norm().max(fac[fac.len() - 1].norm());
                    kernel_edge = kernel_edge.max(edge / peak);
                }
            }
            factors.push(fac);
        }
        let mut r = Flagged::clean(contract(f.values(), g.points(), &factors) * pre);
        if kernel_edge > DECAY_LIMIT && field_edge > DECAY_LIMIT {
            r.warnings.push(Warning::Truncation {
                ratio: kernel_edge.max(field_edge),
            });
        }
        out.push(r);
    }
    Ok(out)
}

/// `W_t^λ(x+iy, u+iv) = e^{λ(u·y − v·x)} p_{2t}^λ(2y, 2v)`.
pub fn twisted_bergman_weight(lambda: f64, t: f64, z: &[C64], w: &[C64]) -> Result<f64> {
    if lambda == 0.0 {
        return Err(Error::InvalidParameter("lambda must be nonzero".into()));
    }
    check_dim(z.len(), w.len())?;
    let y: Vec<f64> = z.iter().map(|v| 2.0 * v.im).collect();
    let v: Vec<f64> = w.iter().map(|v| 2.0 * v.im).collect();
    let phase: f64 = z
        .iter()
        .zip(w)
        .map(|(zi, wi)| wi.re * zi.im - wi.im * zi.re)
        .sum();
    Ok((lambda * phase).exp() * p_kernel(lambda, 2.0 * t, &y, &v)?)
}

/// `amp · e^{-β(|x−x₀|² + |u−u₀|²)}` on `ℝ^{2n}`, a family with closed-form twisted
/// heat convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian2n {
    pub amp: C64,
    pub beta: f64,
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
}

impl Gaussian2n {
    pub fn n(&self) -> usize {
        self.x0.len()
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> C64 {
        let r: f64 = x
            .iter()
            .zip(&self.x0)
            .chain(u.iter().zip(&self.u0))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.amp * (-self.beta * r).exp()
    }

    /// Entire extension of `self *_λ p_t^λ` (ordinary heat convolution when `λ = 0`).
    pub fn twisted_heat(&self, lambda: f64, t: f64, z: &[C64], w: &[C64]) -> Result<C64> {
        let n = self.n();
        check_dim(n, z.len())?;
        check_dim(n, w.len())?;
        let (pre, b) = p_coefficients(lambda, t, n)?;
        let a = self.beta + b;
        let mut log = C64::new(0.0, 0.0);
        for i in 0..n {
            let lx = 2.0 * self.beta * self.x0[i] + 2.0 * b * z[i] - I * (lambda / 2.0) * w[i];
            let lu = 2.0 * self.beta * self.u0[i] + 2.0 * b * w[i] + I * (lambda / 2.0) * z[i];
            log += (lx * lx + lu * lu) / (4.0 * a)
                - self.beta * (self.x0[i] * self.x0[i] + self.u0[i] * self.u0[i])
                - b * (z[i] * z[i] + w[i] * w[i]);
        }
        Ok(self.amp * pre * (PI / a).powi(n as i32) * log.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate, Grid};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn group_law_examples() {
        let a = GroupPoint::new(vec![1.0], vec![0.0], 0.0).unwrap();
        let b = GroupPoint::new(vec![0.0], vec![1.0], 0.0).unwrap();
        let p = group_mul(&a, &b).unwrap();
        assert_eq!(p, GroupPoint::new(vec![1.0], vec![1.0], -0.5).unwrap());
        let g = GroupPoint::new(vec![0.3, -1.2], vec![2.0, 0.5], 0.7).unwrap();
        assert_eq!(group_mul(&g, &GroupPoint::identity(2)).unwrap(), g);
        assert_eq!(group_mul(&g, &group_inv(&g)).unwrap(), GroupPoint::identity(2));
        assert!(group_mul(&g, &a).is_err());
    }

    #[test]
    fn complex_law_restricts_to_real_law() {
        let a = GroupPoint::new(vec![0.3], vec![-0.4], 0.2).unwrap();
        let b = GroupPoint::new(vec![1.1], vec![0.6], -0.9).unwrap();
        let r = cgroup_mul(&a.complexify(), &b.complexify()).unwrap();
        assert_eq!(r.real_part(), group_mul(&a, &b).unwrap());
    }

    #[test]
    fn schrodinger_identity_and_unitarity() {
        let grid = Grid::cube(1, -12.0, 12.0, 512, false).unwrap();
        let phi = SampledField::from_real_fn(grid, |v| (-(v[0] - 0.3) * (v[0] - 0.3)).exp());
        let id = schrodinger_apply(4.0 * PI, &GroupPoint::identity(1), &phi).unwrap();
        assert_eq!(id.value, phi);
        let g = GroupPoint::new(vec![0.7], vec![-1.3], 0.25).unwrap();
        let r = schrodinger_apply(4.0 * PI, &g, &phi).unwrap();
        assert!(r.is_clean());
        assert_relative_eq!(r.value.l2_norm(), phi.l2_norm(), epsilon = 1e-10);
        assert!(schrodinger_apply(0.0, &g, &phi).is_err());
    }

    #[test]
    fn p_kernel_even_in_lambda_and_real_restriction() {
        let a = p_kernel(4.0 * PI, 0.1, &[0.3], &[-0.1]).unwrap();
        let b = p_kernel(-4.0 * PI, 0.1, &[0.3], &[-0.1]).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-15);
        let z = p_kernel_complex(4.0 * PI, 0.1, &[c(0.3, 0.0)], &[c(-0.1, 0.0)]).unwrap();
        assert_relative_eq!(z.re, a, epsilon = 1e-15);
        assert_eq!(z.im, 0.0);
        let (zz, ww) = (c(0.2, 0.1), c(-0.3, 0.2));
        let p = p_kernel_complex(4.0 * PI, 0.1, &[zz], &[ww]).unwrap();
        let q = p_kernel_complex(4.0 * PI, 0.1, &[zz.conj()], &[ww.conj()]).unwrap();
        assert!((p.conj() - q).norm() < 1e-15 * p.norm());
        // direct evaluation of the displayed expression
        let l = 4.0 * PI;
        let direct = l / (4.0 * PI) / (l * 0.1).sinh() * (-(l / 4.0) / (l * 0.1).tanh() * (zz * zz + ww * ww)).exp();
        assert!((p - direct).norm() < 1e-14 * direct.norm());
    }

    #[test]
    fn p_kernel_small_lambda_limit() {
        let e = p_kernel_euclidean(0.1, &[0.3], &[0.2]).unwrap();
        let s = p_kernel(1e-7, 0.1, &[0.3], &[0.2]).unwrap();
        assert_relative_eq!(e, s, epsilon = 1e-12);
        assert!(p_kernel(0.0, 0.1, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn heat_kernel_is_real_and_even_on_real_points() {
        let g = GroupPoint::new(vec![0.2], vec![-0.3], 0.05).unwrap();
        let a = heat_kernel(0.1, &g.complexify()).unwrap();
        let b = heat_kernel(0.1, &g.inverse().complexify()).unwrap();
        assert!(a.im.abs() < 1e-15 * a.re.abs());
        assert_relative_eq!(a.re, b.re, epsilon = 1e-14);
    }

    #[test]
    fn heat_kernel_at_identity_against_refined_quadrature() {
        let p = CGroupPoint::identity(1);
        let a = heat_kernel(0.25, &p).unwrap();
        let q = HeatQuadrature {
            nodes: 8192,
            cutoff: Some(2.0 * default_cutoff(0.25)),
            restrict_domain: true,
        };
        let b = heat_kernel_with(0.25, &p, &q).unwrap();
        assert!(a.re > 0.0);
        assert!((a - b).norm() < 1e-8 * b.norm());
    }

    #[test]
    fn heat_kernel_domain_restriction() {
        let p = CGroupPoint::new(vec![c(0.0, 4.0)], vec![c(0.0, 0.0)], c(0.0, 0.0)).unwrap();
        assert!(heat_kernel(0.1, &p).is_err());
    }

    #[test]
    fn twisted_convolution_with_zero_phase_is_plain_convolution() {
        // Gaussians: (e^{-|x|²} * e^{-|x|²})(x) = (π/2)^{n} e^{-|x|²/2} in 2n = 2 dims.
        let grid = Grid::cube(2, -8.0, 8.0, 128, false).unwrap();
        let f = SampledField::from_real_fn(grid, |v| (-(v[0] * v[0] + v[1] * v[1])).exp());
        let k = |a: &[C64], b: &[C64]| (-(a[0] * a[0] + b[0] * b[0])).exp();
        let pts = vec![(vec![c(0.4, 0.0)], vec![c(-0.2, 0.0)])];
        let r = twisted_convolution(0.0, &f, &k, &pts).unwrap();
        let want = PI / 2.0 * (-(0.16 + 0.04) / 2.0f64).exp();
        assert!((r[0] - want).norm() < 1e-8);
    }

    #[test]
    fn narrow_input_reproduces_kernel() {
        let width = 0.01;
        let grid = Grid::cube(2, -0.1, 0.1, 200, false).unwrap();
        let norm = 1.0 / (PI * width * width);
        let f = SampledField::from_real_fn(grid, |v| norm * (-(v[0] * v[0] + v[1] * v[1]) / (width * width)).exp());
        let mass = integrate(&f).unwrap().re;
        let z = vec![c(0.3, 0.0)];
        let w = vec![c(-0.2, 0.0)];
        let r = twisted_heat_convolution(4.0 * PI, 0.1, &f, &[(z, w)]).unwrap();
        let want = p_kernel(4.0 * PI, 0.1, &[0.3], &[-0.2]).unwrap() * mass;
        assert!((r[0].value - want).norm() < 1e-3 * want);
    }

    #[test]
    fn separable_and_generic_convolutions_agree() {
        let grid = Grid::cube(2, -5.0, 5.0, 96, false).unwrap();
        let f = SampledField::from_real_fn(grid, |v| (-(v[0] * v[0] + v[1] * v[1]) / 2.0).exp());
        let (lambda, t) = (1.0, 0.1);
        let k = |a: &[C64], b: &[C64]| p_kernel_complex(lambda, t, a, b).unwrap();
        let pts = vec![
            (vec![c(0.0, 0.0)], vec![c(0.0, 0.0)]),
            (vec![c(0.3, 0.2)], vec![c(-0.4, 0.1)]),
        ];
        let a = twisted_convolution(lambda, &f, &k, &pts).unwrap();
        let b = twisted_heat_convolution(lambda, t, &f, &pts).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q.value).norm() < 1e-12 * p.norm());
        }
    }

    #[test]
    fn gaussian_closed_form_matches_quadrature() {
        let g = Gaussian2n {
            amp: c(0.7, -0.2),
            beta: 0.5,
            x0: vec![0.3],
            u0: vec![-0.4],
        };
        for &lambda in &[0.0, 1.0, -4.0 * PI] {
            let t = 0.1;
            let eval = |pts: usize| {
                let grid = Grid::cube(2, -9.0, 9.0, pts, false).unwrap();
                let f = SampledField::from_fn(grid, |v| g.eval(&v[..1], &v[1..]));
                let pts = vec![(vec![c(0.1, 0.15)], vec![c(0.2, -0.1)])];
                twisted_heat_convolution(lambda, t, &f, &pts).unwrap()[0].value
            };
            let q = eval(192);
            let exact = g.twisted_heat(lambda, t, &[c(0.1, 0.15)], &[c(0.2, -0.1)]).unwrap();
            assert!((q - exact).norm() < 1e-9 * exact.norm(), "lambda {lambda}");
        }
    }

    #[test]
    fn bergman_weight_examples() {
        let (l, t) = (4.0 * PI, 0.1);
        let z = [c(0.3, 0.0)];
        let w = [c(-0.5, 0.0)];
        let want = p_constant(1) * l / (2.0 * l * t).sinh();
        assert_relative_eq!(twisted_bergman_weight(l, t, &z, &w).unwrap(), want, epsilon = 1e-14);
        let z = [c(0.3, 0.2)];
        let w = [c(-0.5, 0.1)];
        let a = twisted_bergman_weight(l, t, &z, &w).unwrap();
        let b = twisted_bergman_weight(l, t, &[-z[0]], &[-w[0]]).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-14);
        let pf = p_kernel(l, 2.0 * t, &[0.4], &[0.2]).unwrap();
        let neg = twisted_bergman_weight(-l, t, &z, &w).unwrap();
        assert_relative_eq!((a / pf) * (neg / pf), 1.0, epsilon = 1e-12);
        assert!(twisted_bergman_weight(0.0, t, &z, &w).is_err());
    }

    #[test]
    fn schrodinger_is_a_homomorphism() {
        let grid = Grid::cube(1, -16.0, 16.0, 1024, false).unwrap();
        let phi = SampledField::from_real_fn(grid, |v| (-(v[0] - 0.3) * (v[0] - 0.3)).exp());
        let a = GroupPoint::new(vec![0.4], vec![0.9], -0.3).unwrap();
        let b = GroupPoint::new(vec![-1.1], vec![0.35], 0.8).unwrap();
        let l = 4.0 * PI;
        let lhs = schrodinger_apply(l, &a, &schrodinger_apply(l, &b, &phi).unwrap().value).unwrap();
        let rhs = schrodinger_apply(l, &group_mul(&a, &b).unwrap(), &phi).unwrap();
        for (p, q) in lhs.value.values().iter().zip(rhs.value.values()) {
            assert!((p - q).norm() < 1e-8);
        }
    }

    fn semigroup_residual(lambda: f64, t: f64, s: f64) -> f64 {
        let grid = Grid::cube(2, -3.0, 3.0, 256, false).unwrap();
        let f = SampledField::from_real_fn(grid, |v| p_kernel(lambda, s, &v[..1], &v[1..]).unwrap());
        let pts: Vec<(Vec<C64>, Vec<C64>)> = (0..20)
            .map(|i| {
                let a = 0.37 * i as f64;
                (vec![c(0.4 * a.cos(), 0.0)], vec![c(0.3 * (1.7 * a).sin(), 0.0)])
            })
            .collect();
        let r = twisted_heat_convolution(lambda, t, &f, &pts).unwrap();
        pts.iter()
            .zip(&r)
            .map(|((z, w), v)| {
                let want = p_kernel(lambda, t + s, &[z[0].re], &[w[0].re]).unwrap();
                (v.value - want).norm() / want
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn twisted_semigroup_pins_constant() {
        for &l in &[4.0 * PI, -4.0 * PI] {
            for &(t, s) in &[(0.05, 0.05), (0.05, 0.1), (0.1, 0.1)] {
                let e = semigroup_residual(l, t, s);
                assert!(e < 1e-6, "lambda {l} t {t} s {s}: {e}");
            }
        }
    }

    #[test]
    fn partial_fourier_relation() {
        // e^{-tλ²} at λ = 8π, t = 0.1 is ~1e-28, below what sampled k_t values can resolve,
        // so the higher frequencies are checked at a shorter time.
        for &(t, lambdas) in &[(0.1, &[4.0 * PI, -4.0 * PI][..]), (0.025, &[4.0 * PI, -4.0 * PI, 8.0 * PI, -8.0 * PI][..])] {
            let (x, u) = (0.2, -0.3);
            let h = 0.005;
            let ks: Vec<(f64, f64)> = (-1200..=1200)
                .map(|i| {
                    let xi = i as f64 * h;
                    let g = GroupPoint::new(vec![x], vec![u], xi).unwrap();
                    (xi, heat_kernel_real(t, &g).unwrap())
                })
                .collect();
            for &l in lambdas {
                let ft: C64 = ks.iter().map(|&(xi, k)| k * C64::from_polar(h, l * xi)).sum();
                let want = (-t * l * l).exp() * p_kernel(l, t, &[x], &[u]).unwrap();
                assert!((ft - want).norm() < 1e-6 * want, "t {t} lambda {l}: {ft} vs {want}");
            }
        }
    }

    #[test]
    fn heat_kernel_cauchy_riemann() {
        let t = 0.1;
        let h = 1e-4;
        for i in 0..10 {
            let a = i as f64;
            let p = CGroupPoint::new(
                vec![c(0.3 * a.cos(), 0.2 * a.sin())],
                vec![c(-0.2 + 0.05 * a, 0.1 * (2.0 * a).cos())],
                c(0.1 * (0.5 * a).sin(), 0.05 * a.cos()),
            )
            .unwrap();
            let k = |q: &CGroupPoint| heat_kernel(t, q).unwrap();
            for coord in 0..3 {
                let bump = |d: C64| {
                    let mut q = p.clone();
                    match coord {
                        0 => q.z[0] += d,
                        1 => q.w[0] += d,
                        _ => q.zeta += d,
                    }
                    k(&q)
                };
                let dx = (bump(c(h, 0.0)) - bump(c(-h, 0.0))) / (2.0 * h);
                let dy = (bump(c(0.0, h)) - bump(c(0.0, -h))) / (2.0 * h);
                let dzbar = 0.5 * (dx + I * dy);
                assert!(dzbar.norm() < 1e-6 * dx.norm().max(1.0), "point {i} coord {coord}: {dzbar}");
            }
        }
    }

    #[test]
    fn twisted_convolution_refinement_oracle() {
        let eval = |pts: usize| {
            let grid = Grid::cube(2, -8.0, 8.0, pts, false).unwrap();
            let f = SampledField::from_real_fn(grid, |v| (-(v[0] * v[0] + v[1] * v[1]) / 2.0).exp());
            twisted_heat_convolution(1.0, 0.1, &f, &[(vec![c(0.0, 0.0)], vec![c(0.0, 0.0)])]).unwrap()[0].value
        };
        let a = eval(128);
        let b = eval(256);
        assert!((a - b).norm() < 1e-8 * b.norm());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point(n: usize) -> impl Strategy<Value = GroupPoint> {
            (
                proptest::collection::vec(-5.0..5.0f64, n),
                proptest::collection::vec(-5.0..5.0f64, n),
                -5.0..5.0f64,
            )
                .prop_map(|(x, u, xi)| GroupPoint { x, u, xi })
        }

        proptest! {
            #[test]
            fn associativity(a in point(2), b in point(2), c in point(2)) {
                let l = group_mul(&group_mul(&a, &b).unwrap(), &c).unwrap();
                let r = group_mul(&a, &group_mul(&b, &c).unwrap()).unwrap();
                for (p, q) in l.x.iter().chain(&l.u).chain([&l.xi]).zip(r.x.iter().chain(&r.u).chain([&r.xi])) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }

            #[test]
            fn inverse_is_two_sided(a in point(1)) {
                let e = group_mul(&group_inv(&a), &a).unwrap();
                prop_assert_eq!(e, GroupPoint::identity(1));
            }

            #[test]
            fn p_kernel_even(l in 0.1..40.0f64, t in 0.01..1.0f64, x in -2.0..2.0f64, u in -2.0..2.0f64) {
                let a = p_kernel(l, t, &[x], &[u]).unwrap();
                let b = p_kernel(-l, t, &[x], &[u]).unwrap();
                prop_assert!((a - b).abs() <= 1e-14 * a.abs());
            }
        }
    }
}
