//! Heat kernel transforms `T_t` on `ℍ` and `T_t^Γ` on `Γ\ℍ`.
//!
//! Four routes are provided: direct quadrature against `k_t`, the lattice kernel
//! `K_t^Γ` (summed over the centre by Poisson summation), the sector formula
//! `F ∗ k_t = e^{−t(4πk)²} e^{4πikξ} G ∗_{−4πk} p_t^{−4πk}`, and the Hermite-semigroup
//! series for Weil–Brezin images.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{check_dim, Error, Flagged, Result, Warning};
use crate::heisenberg::{
    cgroup_mul, heat_kernel, p_coefficients, twisted_heat_convolution, CGroupPoint, Gaussian2n, GroupPoint,
};
use crate::hermite::{hermite_coefficients, hermite_semigroup_apply, HermiteParams, DECAY_LIMIT};
use crate::nilmanifold::{
    quasi_periodic_factor, unfold_cell, weil_brezin_complex, DecayingFunction, EntireFunction, GaussianDecay,
    HeisenbergDecay, HermiteFunction, LatticeParams, ManifoldFunction, SectorFunction, MAX_RADIUS,
};
use crate::numerics::{for_each_in_box, lattice_sum_auto, radius_for, tail_estimate, Grid, LatticeSum, SampledField};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Largest `|Im z|, |Im w|` at which transforms are evaluated.
pub const IM_LIMIT: f64 = 3.0;

/// Frozen value of the constant `c_λ` in the Hermite-route formula.
///
/// Obtained by matching against the convolution route; it does not depend on `λ` or `n`
/// with the normalisations used here (see `hermite_route_constant_is_frozen`).
pub const HERMITE_ROUTE_CONSTANT: f64 = 1.0;

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rejects points outside `|Im z|, |Im w| ≤ IM_LIMIT`.
pub fn check_domain(z: &[C64], w: &[C64]) -> Result<()> {
    let im = sup(z.iter().chain(w).map(|v| v.im));
    if im > IM_LIMIT {
        return Err(Error::InvalidInput(format!(
            "imaginary part {im} outside the certified domain |Im| <= {IM_LIMIT}"
        )));
    }
    Ok(())
}

/// `T_t f(p) = ∫_ℍ f(h) k̃_t(h^{−1}p) dh` by tensor quadrature on the sampled box.
pub fn heat_transform_full(f: &SampledField, t: f64, p: &CGroupPoint) -> Result<Flagged<C64>> {
    let g = f.grid();
    let n = p.n();
    check_dim(2 * n + 1, g.dim())?;
    check_domain(&p.z, &p.w)?;
    let w = g.weights();
    let peak = f.max_abs();
    let mut acc = C64::new(0.0, 0.0);
    for (flat, v) in f.values().iter().enumerate() {
        if v.norm() <= 1e-17 * peak {
            continue;
        }
        let c = g.coords_of(flat);
        let h = GroupPoint {
            x: c[..n].to_vec(),
            u: c[n..2 * n].to_vec(),
            xi: c[2 * n],
        };
        let q = cgroup_mul(&h.inverse().complexify(), p)?;
        acc += v * heat_kernel(t, &q)? * w[flat];
    }
    let mut out = Flagged::clean(acc);
    let ratio = f.boundary_ratio();
    if ratio > DECAY_LIMIT {
        out.warnings.push(Warning::Truncation { ratio });
    }
    Ok(out)
}

/// `F(x,u,ξ) = g(x,u) e^{−βξ²}`: a Gaussian on `ℍ` whose transform reduces to a single
/// integral over the central frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HeisenbergGaussian {
    pub planar: Gaussian2n,
    pub beta: f64,
}

impl HeisenbergGaussian {
    pub fn new(planar: Gaussian2n, beta: f64) -> Result<HeisenbergGaussian> {
        if !(beta > 0.0) || !(planar.beta > 0.0) {
            return Err(Error::InvalidParameter("Gaussian rates must be positive".into()));
        }
        Ok(HeisenbergGaussian { planar, beta })
    }

    pub fn n(&self) -> usize {
        self.planar.n()
    }

    pub fn eval(&self, h: &GroupPoint) -> C64 {
        self.planar.eval(&h.x, &h.u) * (-self.beta * h.xi * h.xi).exp()
    }

    /// Certificate for [`crate::nilmanifold::average`], from `|x−x₀|² ≥ ½|x|² − |x₀|²`
    /// and `βξ² ≥ 2|ξ| − 1/β`.
    pub fn decay(&self) -> HeisenbergDecay {
        let c2: f64 = self.planar.x0.iter().chain(&self.planar.u0).map(|v| v * v).sum();
        HeisenbergDecay {
            amp: self.planar.amp.norm() * (self.planar.beta * c2 + 1.0 / self.beta).exp(),
            rate_xu: self.planar.beta / 2.0,
            rate_xi: 2.0,
        }
    }

    fn integrand(&self, t: f64, p: &CGroupPoint, mu: f64) -> Result<C64> {
        let spec = (PI / self.beta).sqrt() * (-mu * mu / (4.0 * self.beta)).exp();
        let conv = self.planar.twisted_heat(-mu, t, &p.z, &p.w)?;
        Ok(spec * (-t * mu * mu + I * mu * p.zeta).exp() * conv)
    }

    /// `T_t F(p) = (2π)^{-1} ∫ φ̂(μ) e^{iμζ} e^{−tμ²} (g ∗_{−μ} p_t^{−μ})(z,w) dμ`
    /// with `φ̂(μ) = √(π/β) e^{−μ²/4β}`.
    pub fn transform(&self, t: f64, p: &CGroupPoint) -> Result<C64> {
        Ok(self.transform_with_mass(t, p)?.0)
    }

    /// [`HeisenbergGaussian::transform`] together with `(2π)^{-1}∫|integrand| dμ`, the scale
    /// of its round-off.
    pub fn transform_with_mass(&self, t: f64, p: &CGroupPoint) -> Result<(C64, f64)> {
        check_dim(self.n(), p.n())?;
        check_domain(&p.z, &p.w)?;
        let step = 0.25 / (t + 0.25 / self.beta).sqrt();
        let mut peak: f64 = 0.0;
        let mut cutoff = 0.0;
        let mut quiet = 0;
        let mut mu = 0.0;
        while quiet < 8 {
            let m = self.integrand(t, p, mu)?.norm().max(self.integrand(t, p, -mu)?.norm());
            peak = peak.max(m);
            if m < 1e-18 * peak {
                quiet += 1;
            } else {
                quiet = 0;
                cutoff = mu;
            }
            mu += step;
            if mu > 1e4 {
                return Err(Error::NonConvergence { tail: m, radius: 0 });
            }
        }
        let cutoff = cutoff + step;
        let mut nodes = 256;
        let (mut prev, _) = self.trapezoid(t, p, cutoff, nodes)?;
        loop {
            nodes *= 2;
            let (next, mass) = self.trapezoid(t, p, cutoff, nodes)?;
            // Cancellation can leave a value far below the integrand's mass; converge
            // relative to the mass.
            if (next - prev).norm() <= 1e-13 * mass.max(1e-300) {
                return Ok((next, mass));
            }
            if nodes > 1 << 18 {
                return Err(Error::NonConvergence {
                    tail: (next - prev).norm(),
                    radius: nodes,
                });
            }
            prev = next;
        }
    }

    /// Trapezoid value and `∫|integrand|`.
    fn trapezoid(&self, t: f64, p: &CGroupPoint, cutoff: f64, nodes: usize) -> Result<(C64, f64)> {
        let h = 2.0 * cutoff / nodes as f64;
        let mut acc = C64::new(0.0, 0.0);
        let mut mass = 0.0;
        for j in 0..=nodes {
            let mu = -cutoff + j as f64 * h;
            let wt = if j == 0 || j == nodes { 0.5 } else { 1.0 };
            let v = self.integrand(t, p, mu)? * wt;
            acc += v;
            mass += v.norm();
        }
        let s = h / (2.0 * PI);
        Ok((acc * s, mass * s))
    }
}

/// `Σ_{γ∈Γ} T_t F(γp)` for a Gaussian `F` on `ℍ`, summed directly over lattice translates.
///
/// Central translates are summed outward from the peak until three consecutive terms fall
/// below `tol·10⁻³` (or below the round-off scale of their own μ-integral); planar shells
/// are added until two consecutive shells fall below `tol·10⁻²` by the same rule.
pub fn periodized_transform(f: &HeisenbergGaussian, t: f64, p: &CGroupPoint, tol: f64) -> Result<C64> {
    let n = f.n();
    check_dim(n, p.n())?;
    let column = |ab: &[i64]| -> Result<(C64, f64)> {
        let (a, b) = ab.split_at(n);
        let shift = |c: i64| -> Result<CGroupPoint> {
            let g = CGroupPoint::new(
                a.iter().map(|&v| C64::new(v as f64, 0.0)).collect(),
                b.iter().map(|&v| C64::new(v as f64, 0.0)).collect(),
                C64::new(c as f64 / 2.0, 0.0),
            )?;
            cgroup_mul(&g, p)
        };
        let centre = shift(0)?.zeta.re;
        let c0 = (-2.0 * centre).round() as i64;
        let (mut acc, mut mass) = f.transform_with_mass(t, &shift(c0)?)?;
        for dir in [1i64, -1] {
            let mut quiet = 0;
            let mut c = c0 + dir;
            while quiet < 3 {
                let (v, m) = f.transform_with_mass(t, &shift(c)?)?;
                acc += v;
                mass = mass.max(m);
                quiet = if v.norm() < (1e-3 * tol).max(1e-12 * m) { quiet + 1 } else { 0 };
                c += dir;
                if (c - c0).abs() > 100_000 {
                    return Err(Error::NonConvergence { tail: v.norm(), radius: (c - c0).unsigned_abs() as usize });
                }
            }
        }
        Ok((acc, mass))
    };
    let mut total = C64::new(0.0, 0.0);
    let mut quiet = 0;
    let mut r = 0usize;
    while quiet < 2 {
        let mut shell = C64::new(0.0, 0.0);
        let mut mag = 0.0;
        let mut scale: f64 = 0.0;
        let mut err = None;
        for_each_in_box(2 * n, r as i64, |ab| {
            if err.is_some() || ab.iter().all(|v| v.unsigned_abs() < r as u64) {
                return;
            }
            match column(ab) {
                Ok((v, m)) => {
                    shell += v;
                    mag += v.norm();
                    scale = scale.max(m);
                }
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += shell;
        quiet = if mag < (1e-2 * tol).max(1e-11 * scale) { quiet + 1 } else { 0 };
        r += 1;
        if r > MAX_RADIUS {
            return Err(Error::NonConvergence { tail: mag, radius: r });
        }
    }
    Ok(total)
}

/// One central frequency `λ_m = 4πm` of the lattice kernel.
#[derive(Debug, Clone, Copy)]
struct Mode {
    lambda: f64,
    amp: f64,
    rate: f64,
}

/// Modes of `Σ_c k_t(X, Y, Z + c/2) = 2 Σ_m e^{−tλ_m²} p_t^{λ_m}(X,Y) e^{−iλ_m Z}` that
/// matter at tolerance `tol`, given the imaginary data of the evaluation point.
fn central_modes(t: f64, n: usize, im_sq: f64, g0: f64, g1: f64, s: f64, tol: f64) -> Result<Vec<Mode>> {
    let mode = |m: i64| -> Result<Mode> {
        let lambda = 4.0 * PI * m as f64;
        let (pre, rate) = p_coefficients(lambda, t, n)?;
        Ok(Mode {
            lambda,
            amp: 2.0 * pre * (-t * lambda * lambda).exp(),
            rate,
        })
    };
    // sup over r of amp e^{rate·im_sq + |λ|(g0 + g1 r) − rate (r − s)²}
    let size = |md: &Mode| {
        let l = md.lambda.abs();
        md.amp * (md.rate * im_sq + l * (g0 + g1 * s) + l * l * g1 * g1 / (4.0 * md.rate)).exp()
    };
    let mut modes = vec![mode(0)?];
    let mut m = 1;
    loop {
        let md = mode(m)?;
        if size(&md) < 1e-3 * tol {
            break;
        }
        modes.push(md);
        modes.push(mode(-m)?);
        m += 1;
        if m > 1000 {
            return Err(Error::NonConvergence { tail: size(&md), radius: m as usize });
        }
    }
    Ok(modes)
}

fn modes_bound(modes: &[Mode], im_sq: f64, g0: f64, g1: f64, s: f64) -> impl Fn(usize) -> f64 + '_ {
    move |r| {
        let d = (r as f64 - s).max(0.0);
        modes
            .iter()
            .map(|md| {
                let l = md.lambda.abs();
                md.amp * (md.rate * im_sq + l * (g0 + g1 * r as f64) - md.rate * d * d).exp()
            })
            .sum()
    }
}

/// Planar and central offsets of `h^{−1}γp` for `γ = (a, b, ·)`: returns `(X, Y, Z)` with
/// the central coordinate taken at `c = 0`.
fn lattice_offsets(x: &[f64], u: &[f64], xi: f64, a: &[i64], b: &[i64], p: &CGroupPoint) -> (Vec<C64>, Vec<C64>, C64) {
    let n = x.len();
    let mut bx = Vec::with_capacity(n);
    let mut by = Vec::with_capacity(n);
    let mut zc = p.zeta - xi;
    for i in 0..n {
        let (ai, bi) = (a[i] as f64, b[i] as f64);
        let z = p.z[i] + ai;
        let w = p.w[i] + bi;
        bx.push(z - x[i]);
        by.push(w - u[i]);
        zc += 0.5 * (bi * p.z[i] - ai * p.w[i]) + 0.5 * (x[i] * w - u[i] * z);
    }
    (bx, by, zc)
}

/// `K_t^Γ(Γg, Γp) = Σ_{γ∈Γ} k̃_t(g^{−1}γp)`.
///
/// The central translates are summed in closed form by Poisson summation, leaving a
/// certified planar lattice sum over `(a, b) ∈ ℤ^{2n}`.
pub fn manifold_kernel(t: f64, g: &GroupPoint, p: &CGroupPoint, tol: f64) -> Result<LatticeSum> {
    let n = g.n();
    check_dim(n, p.n())?;
    check_domain(&p.z, &p.w)?;
    let s = sup((0..n).flat_map(|i| [p.z[i].re - g.x[i], p.w[i].re - g.u[i]]));
    let (im_sq, g0, g1) = imaginary_growth(p, sup(g.x.iter().chain(&g.u).copied()));
    let modes = central_modes(t, n, im_sq, g0, g1, s, tol)?;
    let bound = modes_bound(&modes, im_sq, g0, g1, s);
    lattice_sum_auto(
        2 * n,
        |ab| {
            let (a, b) = ab.split_at(n);
            let (bx, by, zc) = lattice_offsets(&g.x, &g.u, g.xi, a, b, p);
            let r2 = cdot(&bx, &bx) + cdot(&by, &by);
            modes
                .iter()
                .map(|md| md.amp * (-md.rate * r2 - I * md.lambda * zc).exp())
                .sum()
        },
        &bound,
        tol,
        MAX_RADIUS,
    )
}

/// `(Σ|Im z|² + Σ|Im w|², g0, g1)` with `|Im Z| ≤ g0 + g1·r` on the shell `|(a,b)|_∞ = r`,
/// for planar base points bounded by `base` in sup norm.
fn imaginary_growth(p: &CGroupPoint, base: f64) -> (f64, f64, f64) {
    let n = p.n() as f64;
    let im_sq: f64 = p.z.iter().chain(&p.w).map(|v| v.im * v.im).sum();
    let iz = sup(p.z.iter().map(|v| v.im));
    let iw = sup(p.w.iter().map(|v| v.im));
    let g0 = p.zeta.im.abs() + 0.5 * n * base * (iz + iw);
    let g1 = 0.5 * n * (iz + iw);
    (im_sq, g0, g1)
}

/// `(T_t^Γ F)(Γp) = ∫_{Γ\ℍ} F(Γh) K_t^Γ(Γh, Γp) d(Γh)` by the rectangle rule on the
/// fundamental domain.
///
/// The central integral is carried out per kernel mode: `K` depends on `ξ` only through
/// `e^{iλ_m ξ}`, so each node column contributes its discrete central Fourier coefficients.
pub fn heat_transform_manifold(f: &ManifoldFunction, t: f64, p: &CGroupPoint, tol: f64) -> Result<LatticeSum> {
    let n = f.n();
    check_dim(n, p.n())?;
    check_domain(&p.z, &p.w)?;
    let grid = f.field().grid();
    let s = sup((0..n).flat_map(|i| {
        [
            p.z[i].re,
            p.z[i].re - 1.0,
            p.w[i].re,
            p.w[i].re - 1.0,
        ]
    }));
    let (im_sq, g0, g1) = imaginary_growth(p, 1.0);
    let mass: f64 = f
        .field()
        .values()
        .iter()
        .zip(grid.weights())
        .map(|(v, w)| v.norm() * w)
        .sum();
    let inner_tol = tol / mass.max(1e-300);
    let modes = central_modes(t, n, im_sq, g0, g1, s, inner_tol)?;
    let bound = modes_bound(&modes, im_sq, g0, g1, s);
    let radius = radius_for(2 * n, &bound, inner_tol, MAX_RADIUS)?;
    let tail = tail_estimate(2 * n, &bound, radius) * mass;

    let pxi = grid.points()[2 * n];
    let xi_nodes = grid.axis_coords(2 * n);
    let xi_w = grid.axis_weights(2 * n);
    let xu_cols = grid.len() / pxi;
    let xu_w: f64 = (0..2 * n).map(|i| grid.spacing(i)).product();
    let mut value = C64::new(0.0, 0.0);
    for col in 0..xu_cols {
        let c = grid.coords_of(col * pxi);
        let (x, u) = (&c[..n], &c[n..2 * n]);
        let vals = &f.field().values()[col * pxi..(col + 1) * pxi];
        let coeffs: Vec<C64> = modes
            .iter()
            .map(|md| {
                vals.iter()
                    .zip(&xi_nodes)
                    .zip(&xi_w)
                    .map(|((v, &xi), &w)| v * C64::from_polar(w, md.lambda * xi))
                    .sum()
            })
            .collect();
        if coeffs.iter().all(|c| c.norm() == 0.0) {
            continue;
        }
        let mut acc = C64::new(0.0, 0.0);
        for_each_in_box(2 * n, radius as i64, |ab| {
            let (a, b) = ab.split_at(n);
            let (bx, by, zc) = lattice_offsets(x, u, 0.0, a, b, p);
            let r2 = cdot(&bx, &bx) + cdot(&by, &by);
            for (md, cm) in modes.iter().zip(&coeffs) {
                acc += cm * md.amp * (-md.rate * r2 - I * md.lambda * zc).exp();
            }
        });
        value += acc * xu_w;
    }
    Ok(LatticeSum { value, tail, radius })
}

/// The sector formula's three factors at one point `(z, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorTransform {
    /// `G ∗_{−4πk} p_t^{−4πk}(z, w)`.
    pub convolution: C64,
    /// `e^{−t(4πk)²}`.
    pub damping: f64,
    /// Frequency `4πk` of the central character `e^{4πikζ}`.
    pub frequency: f64,
}

impl SectorTransform {
    /// `(F ∗ k_t)^∼(z, w, ζ)` for `F = e^{4πikξ} G`.
    pub fn full(&self, zeta: C64) -> C64 {
        self.undamped(zeta) * self.damping
    }

    /// `e^{4πikζ} G ∗_{−4πk} p_t^{−4πk}(z, w)`, the value without the damping factor.
    pub fn undamped(&self, zeta: C64) -> C64 {
        (I * self.frequency * zeta).exp() * self.convolution
    }
}

/// Cells of unfolding needed so that the kernel factor beyond the box is below `e^{−40}`.
fn unfold_radius(rate: f64, lambda: f64, im: f64) -> usize {
    let mut r = 1usize;
    while rate * (r * r) as f64 - 0.5 * lambda.abs() * im * (r as f64 + 2.0) < 40.0 {
        r += 1;
    }
    r
}

/// `G ∗_λ p_t^λ` for a field on the cell in sector `k`, `λ = −4πk`, at arbitrary points.
///
/// Points are first moved into the cell by the sector law; the field is then unfolded far
/// enough that the Gaussian kernel is negligible outside the unfolded box.
fn cell_heat_transform(field: &SampledField, k: i64, t: f64, points: &[(Vec<C64>, Vec<C64>)]) -> Result<Vec<Flagged<C64>>> {
    let n = field.grid().dim() / 2;
    let lambda = -4.0 * PI * k as f64;
    let (_, rate) = p_coefficients(lambda, t, n)?;
    let mut reduced = Vec::with_capacity(points.len());
    let mut factors = Vec::with_capacity(points.len());
    let mut im: f64 = 0.0;
    for (z, w) in points {
        check_dim(n, z.len())?;
        check_dim(n, w.len())?;
        check_domain(z, w)?;
        let m: Vec<i64> = z.iter().map(|v| v.re.floor() as i64).collect();
        let nn: Vec<i64> = w.iter().map(|v| v.re.floor() as i64).collect();
        let zr: Vec<C64> = z.iter().zip(&m).map(|(v, &mi)| v - mi as f64).collect();
        let wr: Vec<C64> = w.iter().zip(&nn).map(|(v, &ni)| v - ni as f64).collect();
        factors.push(quasi_periodic_factor(k, &zr, &wr, &m, &nn));
        im = im.max(sup(zr.iter().chain(&wr).map(|v| v.im)));
        reduced.push((zr, wr));
    }
    let radius = unfold_radius(rate, lambda, im);
    let big = unfold_cell(field, k, radius)?;
    let mut out = twisted_heat_convolution(lambda, t, &big, &reduced)?;
    for (o, fac) in out.iter_mut().zip(factors) {
        o.value *= fac;
        // The unfolded field never decays at its edge, so the generic check always fires;
        // the unfolding radius already bounds the kernel there by e^{-40}.
        o.warnings.clear();
    }
    Ok(out)
}

/// Sector formula for `F = e^{4πikξ} G` with `G` given on the cell.
pub fn sector_heat_transform(
    s: &SectorFunction,
    t: f64,
    points: &[(Vec<C64>, Vec<C64>)],
) -> Result<Vec<Flagged<SectorTransform>>> {
    let k = s.params().k();
    let frequency = s.params().lambda();
    let damping = (-t * frequency * frequency).exp();
    Ok(cell_heat_transform(s.field(), k, t, points)?
        .into_iter()
        .map(|c| Flagged {
            value: SectorTransform {
                convolution: c.value,
                damping,
                frequency,
            },
            warnings: c.warnings,
        })
        .collect())
}

/// The `k = 0` sector: ordinary convolution of a periodic `G` with `(4πt)^{-n} e^{−r²/4t}`.
pub fn torus_heat_transform(field: &SampledField, t: f64, points: &[(Vec<C64>, Vec<C64>)]) -> Result<Vec<Flagged<C64>>> {
    cell_heat_transform(field, 0, t, points)
}

fn shifted_field(f: &SampledField, a: &[f64]) -> Result<SampledField> {
    let g = f.grid();
    let lo: Vec<f64> = g.lo().iter().zip(a).map(|(l, s)| l + s).collect();
    let hi: Vec<f64> = g.hi().iter().zip(a).map(|(h, s)| h + s).collect();
    let periodic: Vec<bool> = (0..g.dim()).map(|i| g.is_periodic(i)).collect();
    SampledField::new(Grid::new(lo, hi, g.points().to_vec(), periodic)?, f.values().to_vec())
}

/// `c_λ e^{−tλ² + iλζ} e^{iλ(a·z + ½z·w)} Σ_m e^{iλz·m} τ_{−a}(e^{−tH(λ)} τ_a f)(w+m)`
/// with `λ = 4πk`, `a = j/2k`, the semigroup applied through the Mehler kernel.
pub fn sector_transform_via_hermite(
    params: LatticeParams,
    j: &[i64],
    f: &SampledField,
    t: f64,
    p: &CGroupPoint,
    tol: f64,
) -> Result<LatticeSum> {
    params.check_index(j)?;
    let n = params.n();
    check_dim(n, f.grid().dim())?;
    check_dim(n, p.n())?;
    check_domain(&p.z, &p.w)?;
    let lambda = params.lambda();
    let a = params.shift(j);
    let hp = HermiteParams::new(lambda, t)?;
    let moved = shifted_field(f, &a)?;
    let g = moved.grid();
    let reach = sup((0..n).flat_map(|i| [g.lo()[i], g.hi()[i]]));
    let l1: f64 = moved.values().iter().zip(g.weights()).map(|(v, w)| v.norm() * w).sum();
    let lt = lambda.abs() * t;
    let c = lambda.abs() / 4.0 * (lt.tanh() + 1.0 / lt.tanh());
    let pre = crate::hermite::mehler_constant(lambda, n) * (lt.sinh() * lt.cosh()).powf(-(n as f64) / 2.0);
    let im_w: f64 = p.w.iter().map(|v| v.im * v.im).sum();
    let amp = pre * l1 * (c * im_w).exp();
    let s = sup((0..n).map(|i| p.w[i].re + a[i]));
    let linear = lambda.abs() * p.z.iter().map(|v| v.im.abs()).sum::<f64>();
    let bound = move |r: usize| {
        let d = (r as f64 - s - reach).max(0.0);
        amp * (linear * r as f64 - c * d * d).exp()
    };
    let az: C64 = a.iter().zip(&p.z).map(|(ai, zi)| zi * *ai).sum();
    let outer = -t * lambda * lambda + I * lambda * (p.zeta + az + 0.5 * cdot(&p.z, &p.w));
    let scale = outer.exp() * HERMITE_ROUTE_CONSTANT;
    let mut arg = vec![C64::new(0.0, 0.0); n];
    let mut err = None;
    let mut r = lattice_sum_auto(
        n,
        |m| {
            let mut phase = C64::new(0.0, 0.0);
            for i in 0..n {
                arg[i] = p.w[i] + m[i] as f64 + a[i];
                phase += p.z[i] * m[i] as f64;
            }
            match hermite_semigroup_apply(&hp, &moved, &arg) {
                Ok(v) => (I * lambda * phase).exp() * v.value,
                Err(e) => {
                    err = Some(e);
                    C64::new(0.0, 0.0)
                }
            }
        },
        &bound,
        tol / scale.norm(),
        MAX_RADIUS,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    r.value *= scale;
    r.tail *= scale.norm();
    Ok(r)
}

/// `τ_{−a} e^{−tH(λ)} τ_a f` as an entire function, through the scaled-Hermite expansion of
/// `τ_a f` (`λ = 4πk`, `a = j/2k`).
#[derive(Debug, Clone, PartialEq)]
pub struct EvolvedShift {
    inner: HermiteFunction,
    a: Vec<f64>,
}

impl EvolvedShift {
    pub fn new(params: LatticeParams, j: &[i64], f: &SampledField, t: f64, max_degree: usize) -> Result<EvolvedShift> {
        params.check_index(j)?;
        check_dim(params.n(), f.grid().dim())?;
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
        }
        let a = params.shift(j);
        let moved = shifted_field(f, &a)?;
        let coeffs = hermite_coefficients(&moved, params.lambda(), max_degree)?.evolve(t);
        Ok(EvolvedShift {
            inner: HermiteFunction::new(coeffs)?,
            a,
        })
    }

    /// The evolved expansion of `τ_a f` (before shifting back).
    pub fn evolved(&self) -> &HermiteFunction {
        &self.inner
    }

    fn moved(&self, x: &[C64]) -> Vec<C64> {
        x.iter().zip(&self.a).map(|(v, a)| v + a).collect()
    }
}

impl DecayingFunction for EvolvedShift {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn eval(&self, x: &[f64]) -> C64 {
        let y: Vec<f64> = x.iter().zip(&self.a).map(|(v, a)| v + a).collect();
        self.inner.eval(&y)
    }

    fn decay(&self) -> GaussianDecay {
        let mut d = self.inner.decay();
        d.centre = d.centre.iter().zip(&self.a).map(|(c, a)| c - a).collect();
        d
    }
}

impl EntireFunction for EvolvedShift {
    fn eval_complex(&self, z: &[C64]) -> C64 {
        self.inner.eval_complex(&self.moved(z))
    }
}

/// `c_λ e^{−tλ²} Ṽ_{k,j}(τ_{−a} e^{−tH(λ)} τ_a f)(p)`, the other side of the commutative
/// diagram relating the Weil–Brezin transforms and the two heat semigroups.
pub fn sector_transform_via_diagram(
    params: LatticeParams,
    j: &[i64],
    h: &EvolvedShift,
    t: f64,
    p: &CGroupPoint,
    tol: f64,
) -> Result<LatticeSum> {
    check_domain(&p.z, &p.w)?;
    let lambda = params.lambda();
    let scale = (-t * lambda * lambda).exp() * HERMITE_ROUTE_CONSTANT;
    let mut r = weil_brezin_complex(params, j, h, p, tol / scale)?;
    r.value *= scale;
    r.tail *= scale;
    Ok(r)
}

/// Undamped sector image `Ṽ_{k,j}h(z, w, 0)` on all pairs of `zs × ws` (value
/// `[iz * ws.len() + iw]`), sharing the samples `h(w + m)` across every `z`.
pub fn diagram_image_table(
    params: LatticeParams,
    j: &[i64],
    h: &EvolvedShift,
    zs: &[Vec<C64>],
    ws: &[Vec<C64>],
    tol: f64,
) -> Result<Vec<C64>> {
    params.check_index(j)?;
    let n = params.n();
    let lambda = params.lambda();
    let a = params.shift(j);
    let decay = h.decay();
    let im_z = zs
        .iter()
        .map(|z| z.iter().map(|v| v.im.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut out = vec![C64::new(0.0, 0.0); zs.len() * ws.len()];
    for (iw, w) in ws.iter().enumerate() {
        check_dim(n, w.len())?;
        let re_w: Vec<f64> = w.iter().map(|v| v.re).collect();
        let im_w = sup(w.iter().map(|v| v.im));
        let bound = decay.lattice_bound(1.0, &re_w, im_w, lambda.abs() * im_z);
        let radius = radius_for(n, &bound, tol, MAX_RADIUS)?;
        let mut terms: Vec<(Vec<i64>, C64)> = Vec::new();
        let mut arg = vec![C64::new(0.0, 0.0); n];
        for_each_in_box(n, radius as i64, |m| {
            for i in 0..n {
                arg[i] = w[i] + m[i] as f64;
            }
            terms.push((m.to_vec(), h.eval_complex(&arg)));
        });
        for (iz, z) in zs.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (m, hv) in &terms {
                let zm: C64 = z.iter().zip(m).map(|(zi, &mi)| zi * mi as f64).sum();
                acc += (I * lambda * zm).exp() * hv;
            }
            let az: C64 = a.iter().zip(z).map(|(ai, zi)| zi * *ai).sum();
            out[iz * ws.len() + iw] = acc * (I * lambda * (az + 0.5 * cdot(z, w))).exp();
        }
    }
    Ok(out)
}

/// Input of a transform evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformInput {
    /// A decaying function sampled on a box in `ℍ`.
    Full(SampledField),
    /// A function on `Γ\ℍ`.
    Manifold(ManifoldFunction),
    /// `e^{4πikξ} G` given by its sector field `G`.
    Sector(SectorFunction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformRequest {
    pub t: f64,
    pub input: TransformInput,
    pub eval_points: Vec<CGroupPoint>,
}

impl TransformRequest {
    pub fn new(t: f64, input: TransformInput, eval_points: Vec<CGroupPoint>) -> Result<TransformRequest> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
        }
        for p in &eval_points {
            check_domain(&p.z, &p.w)?;
        }
        Ok(TransformRequest { t, input, eval_points })
    }

    /// Evaluates the transform at every requested point.
    pub fn evaluate(&self, tol: f64) -> Result<Vec<Flagged<C64>>> {
        match &self.input {
            TransformInput::Full(f) => self
                .eval_points
                .iter()
                .map(|p| heat_transform_full(f, self.t, p))
                .collect(),
            TransformInput::Manifold(f) => self
                .eval_points
                .iter()
                .map(|p| heat_transform_manifold(f, self.t, p, tol).map(|s| Flagged::clean(s.value)))
                .collect(),
            TransformInput::Sector(s) => {
                let pts: Vec<(Vec<C64>, Vec<C64>)> =
                    self.eval_points.iter().map(|p| (p.z.clone(), p.w.clone())).collect();
                let vals = sector_heat_transform(s, self.t, &pts)?;
                Ok(vals
                    .into_iter()
                    .zip(&self.eval_points)
                    .map(|(v, p)| Flagged {
                        value: v.value.full(p.zeta),
                        warnings: v.warnings,
                    })
                    .collect())
            }
        }
    }
}
