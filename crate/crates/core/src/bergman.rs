//! Weighted Bergman norms on the sector images, the finite symmetry group `𝐅_k` and the
//! inversion of the sector heat transform.
//!
//! Samples live on the real cell `[0,1)^{2n}` (optionally translated) times a box of
//! imaginary parts. The twisted norm integrates `|G|² W_t^{−4πk}`; the torus norm uses
//! `(2πt)^{−n} e^{−(y²+v²)/2t}`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{check_dim, Error, Flagged, Result, Warning};
use crate::heat_transform::{sector_heat_transform, HERMITE_ROUTE_CONSTANT};
use crate::heisenberg::{p_coefficients, Gaussian2n};
use crate::hermite::{degree, hermite_coefficients, HermiteCoeffs};
use crate::nilmanifold::{LatticeParams, SectorFunction};
use crate::numerics::{Grid, SampledField};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Relative quasi-periodicity residual accepted by the twisted norm and the inversion.
pub const QUASI_PERIODIC_TOL: f64 = 1e-6;

/// Boundary-to-peak ratio of the integrand above which a truncation warning is raised.
pub const TRUNCATION_LIMIT: f64 = 1e-10;

/// Relative level the integrand must reach at the edge of the default imaginary box.
pub const BOX_LEVEL: f64 = 1e-14;

/// Default conditioning cap on `e^{(2|α|+n)|λ|t}` in the inversion.
pub const CONDITIONING_CAP: f64 = 1e8;

/// Real cell times imaginary box. Real axes are `x` then `u`, imaginary axes `y` then `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct BergmanGrid {
    real: Grid,
    imag: Grid,
    slice: bool,
}

impl BergmanGrid {
    /// `real_points` nodes per real axis on `origin + [0,1)^{2n}`, and `im_points ≥ 2`
    /// nodes per imaginary axis on `[−radius, radius]` (endpoints included).
    pub fn new(n: usize, real_points: usize, origin: Vec<f64>, radius: f64, im_points: usize) -> Result<BergmanGrid> {
        let real = real_cell(n, real_points, origin)?;
        if !(radius > 0.0) || im_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "imaginary box needs radius > 0 and at least 2 points, got {radius} and {im_points}"
            )));
        }
        let h = 2.0 * radius / (im_points - 1) as f64;
        let imag = Grid::cube(2 * n, -radius, radius + h, im_points, false)?;
        Ok(BergmanGrid { real, imag, slice: false })
    }

    /// Real points only (`y = v = 0`); enough for Fourier extraction, not for norms.
    pub fn real_slice(n: usize, real_points: usize, origin: Vec<f64>) -> Result<BergmanGrid> {
        let real = real_cell(n, real_points, origin)?;
        let imag = Grid::cube(2 * n, 0.0, 1.0, 1, false)?;
        Ok(BergmanGrid { real, imag, slice: true })
    }

    pub fn n(&self) -> usize {
        self.real.dim() / 2
    }

    pub fn real(&self) -> &Grid {
        &self.real
    }

    pub fn imag(&self) -> &Grid {
        &self.imag
    }

    pub fn is_slice(&self) -> bool {
        self.slice
    }

    pub fn len(&self) -> usize {
        self.real.len() * self.imag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(z, w)` at real node `ir` and imaginary node `ii`.
    pub fn node(&self, ir: usize, ii: usize) -> (Vec<C64>, Vec<C64>) {
        let n = self.n();
        let r = self.real.coords_of(ir);
        let m = self.imag.coords_of(ii);
        let z = (0..n).map(|i| C64::new(r[i], m[i])).collect();
        let w = (0..n).map(|i| C64::new(r[n + i], m[n + i])).collect();
        (z, w)
    }

    /// All nodes in storage order `ir * imag.len() + ii`.
    pub fn nodes(&self) -> Vec<(Vec<C64>, Vec<C64>)> {
        let ni = self.imag.len();
        (0..self.len()).map(|f| self.node(f / ni, f % ni)).collect()
    }

    /// Imaginary half-width for sector `k ≠ 0`: where `e^{−ρr²}` reaches [`BOX_LEVEL`],
    /// `ρ = |λ|(coth 2|λ|t − 1)` being the Gaussian rate of the weighted ground-state
    /// profile. The Gaussian growth of `|G|²` cancels the weight's own rate `|λ| coth 2|λ|t`
    /// exactly, so only this slower rate is left.
    pub fn twisted_radius(k: i64, t: f64) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidParameter("twisted radius needs k != 0".into()));
        }
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
        }
        let l = 4.0 * PI * (k as f64).abs();
        let rho = l * (1.0 / (2.0 * l * t).tanh() - 1.0);
        Ok((-BOX_LEVEL.ln() / rho).sqrt())
    }

    /// Imaginary half-width for the torus sector with frequencies `|m|_∞ ≤ max_freq`:
    /// the mode `e^{2πim·z}` puts the integrand's centre at `|y| = 4π|m|t`.
    pub fn torus_radius(t: f64, max_freq: usize) -> f64 {
        4.0 * PI * max_freq as f64 * t + (-2.0 * t * BOX_LEVEL.ln()).sqrt()
    }
}

fn real_cell(n: usize, points: usize, origin: Vec<f64>) -> Result<Grid> {
    check_dim(2 * n, origin.len())?;
    if n == 0 || points == 0 {
        return Err(Error::InvalidParameter("empty real cell".into()));
    }
    let hi = origin.iter().map(|o| o + 1.0).collect();
    Grid::new(origin, hi, vec![points; 2 * n], vec![true; 2 * n])
}

/// Samples of an entire function `G(z, w)` on a [`BergmanGrid`], tagged with the sector
/// `k` (`0` for the torus) and the time `t` fixing the weight.
///
/// Values are stored weighted, `ψ = G·√W`: `G` itself grows like `e^{c|Im|²}` and overflows
/// long before the weighted integrand has decayed.
#[derive(Debug, Clone, PartialEq)]
pub struct BergmanSample {
    k: i64,
    t: f64,
    grid: BergmanGrid,
    weighted: Vec<C64>,
    residual: f64,
}

/// Nodes at which the quasi-periodicity law is spot-checked.
fn residual_probes(grid: &BergmanGrid) -> Vec<usize> {
    // Spread over the real nodes; half sit at the imaginary node nearest 0, where the weight
    // peaks, the rest stride through the imaginary box.
    let (nr, ni) = (grid.real.len(), grid.imag.len());
    let centre = (0..ni)
        .min_by(|&a, &b| {
            let na: f64 = grid.imag.coords_of(a).iter().map(|v| v * v).sum();
            let nb: f64 = grid.imag.coords_of(b).iter().map(|v| v * v).sum();
            na.total_cmp(&nb)
        })
        .unwrap_or(0);
    let count = grid.len().min(16);
    (0..count)
        .map(|i| {
            let ir = ((i * nr) / count + nr / (2 * count)).min(nr - 1);
            let ii = if i % 2 == 0 { centre } else { (i * 7 + centre) % ni };
            ir * ni + ii
        })
        .collect()
}

/// `(z, w)` translated by the unit vector on axis `axis` of `ℤ^{2n}`.
fn unit_shift(z: &[C64], w: &[C64], axis: usize) -> (Vec<C64>, Vec<C64>) {
    let n = z.len();
    let mut zs = z.to_vec();
    let mut ws = w.to_vec();
    if axis < n {
        zs[axis] += 1.0;
    } else {
        ws[axis - n] += 1.0;
    }
    (zs, ws)
}

fn unit_shift_indices(n: usize, axis: usize) -> (Vec<i64>, Vec<i64>) {
    let mut m = vec![0; n];
    let mut nn = vec![0; n];
    if axis < n {
        m[axis] = 1;
    } else {
        nn[axis - n] = 1;
    }
    (m, nn)
}

/// `ln W` for the weight of sector `k`: the twisted weight `W_t^{−4πk}` when `k ≠ 0`,
/// `(2πt)^{−n} e^{−(y²+v²)/2t}` when `k = 0`.
pub fn log_weight(k: i64, t: f64, z: &[C64], w: &[C64]) -> Result<f64> {
    check_dim(z.len(), w.len())?;
    let n = z.len();
    let im2: f64 = z.iter().chain(w).map(|v| v.im * v.im).sum();
    if k == 0 {
        return Ok(-(n as f64) * (2.0 * PI * t).ln() - im2 / (2.0 * t));
    }
    let lambda = -4.0 * PI * k as f64;
    let (pre, b) = p_coefficients(lambda, 2.0 * t, n)?;
    let phase: f64 = z.iter().zip(w).map(|(zi, wi)| wi.re * zi.im - wi.im * zi.re).sum();
    Ok(lambda * phase + pre.ln() - 4.0 * b * im2)
}

/// `ln` of the sector-law factor `e^{2πik(w·m − z·n)}` (complex).
fn log_law_factor(k: i64, z: &[C64], w: &[C64], m: &[i64], nn: &[i64]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..z.len() {
        s += w[i] * m[i] as f64 - z[i] * nn[i] as f64;
    }
    2.0 * PI * k as f64 * I * s
}

impl BergmanSample {
    fn check_t(t: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
        }
        Ok(())
    }

    /// Builds the sample from `f(z, w, s) = G(z, w)·e^{s}`, called with `s = ½ ln W(z,w)`.
    ///
    /// The quasi-periodicity residual is measured at up to 16 nodes against every unit
    /// shift, in the weighted form `|ψ(γp) − e^{ln q + ½(ln W(γp) − ln W(p))} ψ(p)|`.
    pub fn from_scaled_fn(
        k: i64,
        t: f64,
        grid: BergmanGrid,
        mut f: impl FnMut(&[C64], &[C64], f64) -> Result<C64>,
    ) -> Result<BergmanSample> {
        BergmanSample::check_t(t)?;
        let n = grid.n();
        let ni = grid.imag.len();
        let mut weighted = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            let (z, w) = grid.node(flat / ni, flat % ni);
            weighted.push(f(&z, &w, 0.5 * log_weight(k, t, &z, &w)?)?);
        }
        let mut residual: f64 = 0.0;
        for p in residual_probes(&grid) {
            let (z, w) = grid.node(p / ni, p % ni);
            let base_log = log_weight(k, t, &z, &w)?;
            for axis in 0..2 * n {
                let (zs, ws) = unit_shift(&z, &w, axis);
                let shifted_log = log_weight(k, t, &zs, &ws)?;
                let lhs = f(&zs, &ws, 0.5 * shifted_log)?;
                let (m, nn) = unit_shift_indices(n, axis);
                let factor = (log_law_factor(k, &z, &w, &m, &nn) + 0.5 * (shifted_log - base_log)).exp();
                residual = residual.max((lhs - factor * weighted[p]).norm());
            }
        }
        Ok(BergmanSample {
            k,
            t,
            grid,
            weighted,
            residual,
        })
    }

    /// Samples `g` directly; only suitable while `G` stays representable on the box.
    pub fn from_fn(k: i64, t: f64, grid: BergmanGrid, g: impl Fn(&[C64], &[C64]) -> C64) -> Result<BergmanSample> {
        BergmanSample::from_scaled_fn(k, t, grid, |z, w, s| Ok(g(z, w) * s.exp()))
    }

    /// As [`BergmanSample::from_fn`], with `G` supplied by one batched evaluation at the
    /// nodes followed by the probe points.
    pub fn from_batch(
        k: i64,
        t: f64,
        grid: BergmanGrid,
        batch: impl FnOnce(&[(Vec<C64>, Vec<C64>)]) -> Result<Vec<C64>>,
    ) -> Result<BergmanSample> {
        let n = grid.n();
        let mut pts = grid.nodes();
        for p in residual_probes(&grid) {
            let (z, w) = pts[p].clone();
            for axis in 0..2 * n {
                pts.push(unit_shift(&z, &w, axis));
            }
        }
        let values = batch(&pts)?;
        if values.len() != pts.len() {
            return Err(Error::InvalidInput(format!(
                "batch returned {} values for {} points",
                values.len(),
                pts.len()
            )));
        }
        // `from_scaled_fn` asks for the nodes first, then the probes, in `pts` order.
        let mut cursor = 0usize;
        BergmanSample::from_scaled_fn(k, t, grid, |_, _, s| {
            let v = values[cursor];
            cursor += 1;
            Ok(v * s.exp())
        })
    }

    /// Undamped sector transform `G ∗_{−4πk} p_t^{−4πk}` of `s` on the grid.
    pub fn from_sector(s: &SectorFunction, t: f64, grid: BergmanGrid) -> Result<BergmanSample> {
        check_dim(s.params().n(), grid.n())?;
        BergmanSample::from_batch(s.params().k(), t, grid, |pts| {
            Ok(sector_heat_transform(s, t, pts)?.into_iter().map(|v| v.value.convolution).collect())
        })
    }

    /// Heat extension `Σ_m ĉ_m e^{−4π²|m|²t} e^{2πi m·(z,w)}` of a periodic field on the
    /// unit cell, computed from its discrete Fourier coefficients.
    pub fn torus_from_field(field: &SampledField, t: f64, grid: BergmanGrid) -> Result<BergmanSample> {
        let g = field.grid();
        let d = g.dim();
        check_dim(2 * grid.n(), d)?;
        if (0..d).any(|i| g.lo()[i] != 0.0 || g.hi()[i] != 1.0 || !g.is_periodic(i)) {
            return Err(Error::InvalidInput("torus field must live on the periodic cell [0,1)^{2n}".into()));
        }
        let modes = spectrum(field);
        BergmanSample::from_scaled_fn(0, t, grid, |z, w, s| {
            let mut acc = C64::new(0.0, 0.0);
            for (m, c) in &modes {
                let mut arg = C64::new(0.0, 0.0);
                let mut sq = 0.0;
                for (i, &mi) in m.iter().enumerate() {
                    let v = if i < z.len() { z[i] } else { w[i - z.len()] };
                    arg += v * mi as f64;
                    sq += (mi * mi) as f64;
                }
                acc += c * (2.0 * PI * I * arg - 4.0 * PI * PI * sq * t + s).exp();
            }
            Ok(acc)
        })
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &BergmanGrid {
        &self.grid
    }

    /// Stored values `ψ = G·√W`, in node order `ir * imag.len() + ii`.
    pub fn weighted_values(&self) -> &[C64] {
        &self.weighted
    }

    /// `G` at node `flat` (may overflow far out in the imaginary box).
    pub fn value(&self, flat: usize) -> Result<C64> {
        let ni = self.grid.imag.len();
        let (z, w) = self.grid.node(flat / ni, flat % ni);
        Ok(self.weighted[flat] * (-0.5 * log_weight(self.k, self.t, &z, &w)?).exp())
    }

    /// Largest weighted quasi-periodicity defect measured when the sample was built.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `max |ψ|`.
    pub fn max_abs(&self) -> f64 {
        self.weighted.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> BergmanSample {
        BergmanSample {
            weighted: self.weighted.iter().map(|v| v * s).collect(),
            residual: self.residual * s.norm(),
            ..self.clone()
        }
    }

    /// Pointwise sum; the residual bound adds.
    pub fn add(&self, other: &BergmanSample) -> Result<BergmanSample> {
        if self.grid != other.grid || self.k != other.k || self.t != other.t {
            return Err(Error::InvalidInput("samples differ in grid, sector or time".into()));
        }
        Ok(BergmanSample {
            weighted: self.weighted.iter().zip(&other.weighted).map(|(a, b)| a + b).collect(),
            residual: self.residual + other.residual,
            ..self.clone()
        })
    }

    fn with_values(&self, weighted: Vec<C64>) -> BergmanSample {
        BergmanSample { weighted, ..self.clone() }
    }

    fn check_quasi_periodic(&self) -> Result<()> {
        let scale = self.max_abs();
        if self.residual > QUASI_PERIODIC_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "quasi-periodicity residual {:e} exceeds {:e} of the peak {:e}",
                self.residual, QUASI_PERIODIC_TOL, scale
            )));
        }
        Ok(())
    }
}

/// Nonzero discrete Fourier coefficients `(m, ĉ_m)` of a field on the unit cell.
fn spectrum(field: &SampledField) -> Vec<(Vec<i64>, C64)> {
    let g = field.grid();
    let d = g.dim();
    let peak = field.max_abs();
    let mut out = Vec::new();
    let half: Vec<i64> = g.points().iter().map(|&p| ((p - 1) / 2) as i64).collect();
    let counts: Vec<usize> = half.iter().map(|&h| (2 * h + 1) as usize).collect();
    let total: usize = counts.iter().product();
    let inv = 1.0 / g.len() as f64;
    for flat in 0..total {
        let mut rem = flat;
        let mut m = vec![0i64; d];
        for i in (0..d).rev() {
            m[i] = (rem % counts[i]) as i64 - half[i];
            rem /= counts[i];
        }
        let mut c = C64::new(0.0, 0.0);
        for node in 0..g.len() {
            let x = g.coords_of(node);
            let ph: f64 = x.iter().zip(&m).map(|(xi, &mi)| xi * mi as f64).sum();
            c += field.values()[node] * C64::from_polar(1.0, -2.0 * PI * ph);
        }
        c *= inv;
        if c.norm() > 1e-15 * peak {
            out.push((m, c));
        }
    }
    out
}

/// `∫ F conj(G) W` over the real cell and the imaginary box, with the truncation check
/// applied to `|ψ_F|² + |ψ_G|²`.
fn weighted_integral(f: &BergmanSample, g: &BergmanSample) -> Result<Flagged<C64>> {
    if f.grid != g.grid || f.k != g.k || f.t != g.t {
        return Err(Error::InvalidInput("samples differ in grid, sector or time".into()));
    }
    if f.grid.slice {
        return Err(Error::InvalidInput("norms need an imaginary box, not a real slice".into()));
    }
    let grid = &f.grid;
    let wr = grid.real.weights();
    let wi = grid.imag.weights();
    let ni = grid.imag.len();
    let q = grid.imag.points();
    let on_face: Vec<bool> = (0..ni)
        .map(|ii| {
            grid.imag
                .multi_index(ii)
                .iter()
                .zip(q)
                .any(|(&j, &p)| j == 0 || j + 1 == p)
        })
        .collect();
    let mut acc = C64::new(0.0, 0.0);
    let (mut peak, mut edge) = (0.0f64, 0.0f64);
    for ir in 0..grid.real.len() {
        for ii in 0..ni {
            let flat = ir * ni + ii;
            let (a, b) = (f.weighted[flat], g.weighted[flat]);
            acc += a * b.conj() * (wr[ir] * wi[ii]);
            let density = a.norm_sqr() + b.norm_sqr();
            peak = peak.max(density);
            if on_face[ii] {
                edge = edge.max(density);
            }
        }
    }
    let mut out = Flagged::clean(acc);
    if peak > 0.0 && edge / peak > TRUNCATION_LIMIT {
        out.warnings.push(Warning::Truncation { ratio: edge / peak });
    }
    Ok(out)
}

/// Weighted inner product `∫∫ F conj(G) W` with the torus or twisted weight of the samples.
pub fn bergman_inner(f: &BergmanSample, g: &BergmanSample) -> Result<Flagged<C64>> {
    if f.k != 0 {
        f.check_quasi_periodic()?;
        g.check_quasi_periodic()?;
    }
    weighted_integral(f, g)
}

/// `(∫_{ℝ^{2n}} ∫_{[0,1)^{2n}} |F|² (2πt)^{−n} e^{−(y²+v²)/2t})^{1/2}` for `k = 0`.
pub fn torus_bergman_norm(f: &BergmanSample) -> Result<Flagged<f64>> {
    if f.k != 0 {
        return Err(Error::InvalidInput(format!("torus norm needs k = 0, got k = {}", f.k)));
    }
    let r = weighted_integral(f, f)?;
    Ok(Flagged {
        value: r.value.re.max(0.0).sqrt(),
        warnings: r.warnings,
    })
}

/// `(∫_{ℝ^{2n}} ∫_{[0,1)^{2n}} |G|² W_t^{−4πk})^{1/2}` for `k ≠ 0`.
pub fn twisted_bergman_norm(g: &BergmanSample) -> Result<Flagged<f64>> {
    if g.k == 0 {
        return Err(Error::InvalidInput("twisted norm needs k != 0".into()));
    }
    g.check_quasi_periodic()?;
    let r = weighted_integral(g, g)?;
    Ok(Flagged {
        value: r.value.re.max(0.0).sqrt(),
        warnings: r.warnings,
    })
}

/// An element of `𝐅_k = (ℤ/2kℤ)ⁿ`, stored reduced into `0..2|k|`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FiniteGroupElement {
    k: i64,
    x: Vec<i64>,
}

impl FiniteGroupElement {
    pub fn new(k: i64, x: Vec<i64>) -> Result<FiniteGroupElement> {
        if k == 0 {
            return Err(Error::InvalidParameter("F_k needs k != 0".into()));
        }
        let m = 2 * k.abs();
        Ok(FiniteGroupElement {
            k,
            x: x.into_iter().map(|v| v.rem_euclid(m)).collect(),
        })
    }

    pub fn zero(k: i64, n: usize) -> Result<FiniteGroupElement> {
        FiniteGroupElement::new(k, vec![0; n])
    }

    /// Every element, lexicographic.
    pub fn all(params: LatticeParams) -> Vec<FiniteGroupElement> {
        params
            .index_set()
            .into_iter()
            .map(|x| FiniteGroupElement { k: params.k(), x })
            .collect()
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    pub fn x(&self) -> &[i64] {
        &self.x
    }

    pub fn add(&self, other: &FiniteGroupElement) -> Result<FiniteGroupElement> {
        if self.k != other.k {
            return Err(Error::InvalidInput(format!("elements of F_{} and F_{}", self.k, other.k)));
        }
        check_dim(self.x.len(), other.x.len())?;
        FiniteGroupElement::new(self.k, self.x.iter().zip(&other.x).map(|(a, b)| a + b).collect())
    }

    /// `χ_j(s) = e^{(πi/k) s·j}`, the eigenvalue of `Π̃_k(s)` on `ℬ_{t,j}`.
    pub fn character(&self, j: &[i64]) -> C64 {
        let sj: i64 = self.x.iter().zip(j).map(|(a, b)| a * b).sum();
        C64::from_polar(1.0, PI * sj as f64 / self.k as f64)
    }
}

/// Index of the node reached from `ir` by moving the `x`-coordinates by `steps` nodes, and
/// the number of whole cells crossed on each `x` axis.
fn shifted_real_node(grid: &Grid, n: usize, ir: usize, steps: &[i64]) -> (usize, Vec<i64>) {
    let mut idx = grid.multi_index(ir);
    let mut wraps = vec![0i64; n];
    for i in 0..n {
        let p = grid.points()[i] as i64;
        let total = idx[i] as i64 + steps[i];
        wraps[i] = total.div_euclid(p);
        idx[i] = total.rem_euclid(p) as usize;
    }
    let strides = grid.strides();
    (idx.iter().zip(&strides).map(|(a, b)| a * b).sum(), wraps)
}

/// Grid steps realising `x ↦ x + s/2k`; the real resolution must be a multiple of `2k`.
fn group_steps(g: &BergmanSample, s: &FiniteGroupElement) -> Result<Vec<i64>> {
    let n = g.grid.n();
    check_dim(n, s.x.len())?;
    if g.k != s.k {
        return Err(Error::InvalidInput(format!("element of F_{} acting on sector {}", s.k, g.k)));
    }
    let m = 2 * g.k;
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let p = g.grid.real.points()[i] as i64;
        if p % m.abs() != 0 {
            return Err(Error::InvalidInput(format!(
                "real resolution {p} is not a multiple of 2|k| = {}",
                m.abs()
            )));
        }
        steps.push(s.x[i] * p / m);
    }
    Ok(steps)
}

/// `(Π̃_k(s)G)(z,w) = e^{−iπ s·w} G(z + s/2k, w)`, realised as a node shift.
///
/// On weighted values the action is `ψ ↦ e^{−iπ s·u} e^{2πik c·u} ψ(x + s/2k − c, …)`,
/// `c ∈ ℤⁿ` the cells crossed: the moduli of `e^{−iπ s·w}` and of the sector-law factor
/// cancel exactly against the change of `√W`.
pub fn finite_group_act(s: &FiniteGroupElement, g: &BergmanSample) -> Result<BergmanSample> {
    let n = g.grid.n();
    let steps = group_steps(g, s)?;
    let ni = g.grid.imag.len();
    let k = g.k as f64;
    let mut out = vec![C64::new(0.0, 0.0); g.weighted.len()];
    for ir in 0..g.grid.real.len() {
        let (target, wraps) = shifted_real_node(&g.grid.real, n, ir, &steps);
        let u = &g.grid.real.coords_of(ir)[n..];
        let mut phase = 0.0;
        for i in 0..n {
            phase += -PI * s.x[i] as f64 * u[i] + 2.0 * PI * k * wraps[i] as f64 * u[i];
        }
        let rot = C64::from_polar(1.0, phase);
        for ii in 0..ni {
            out[ir * ni + ii] = rot * g.weighted[target * ni + ii];
        }
    }
    Ok(g.with_values(out))
}

/// `max √W(z,w)·|e^{−iπw_i}|·|G(z + e_i/2k, w) − e^{πi(w_i + j_i/k)} G(z,w)|` over nodes and
/// generators, i.e. `max |Π̃(e_i)ψ − e^{πi j_i/k} ψ|` on weighted values.
pub fn sector_membership_residual(g: &BergmanSample, j: &[i64]) -> Result<f64> {
    let params = LatticeParams::new(g.grid.n(), g.k)?;
    params.check_index(j)?;
    let n = params.n();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 1;
        let acted = finite_group_act(&FiniteGroupElement::new(g.k, e)?, g)?;
        let chi = C64::from_polar(1.0, PI * j[i] as f64 / g.k as f64);
        for (a, b) in acted.weighted.iter().zip(&g.weighted) {
            worst = worst.max((a - chi * b).norm());
        }
    }
    Ok(worst)
}

/// `(2k)^{−n} Σ_{s ∈ 𝐅_k} conj(χ_j(s)) Π̃_k(s) G`, the component of `G` in `ℬ_{t,j}`.
pub fn project_sector_j(g: &BergmanSample, j: &[i64]) -> Result<BergmanSample> {
    let params = LatticeParams::new(g.grid.n(), g.k)?;
    params.check_index(j)?;
    let elements = FiniteGroupElement::all(params);
    let norm = 1.0 / elements.len() as f64;
    let mut values = vec![C64::new(0.0, 0.0); g.weighted.len()];
    for s in &elements {
        let acted = finite_group_act(s, g)?;
        let c = s.character(j).conj() * norm;
        for (v, a) in values.iter_mut().zip(&acted.weighted) {
            *v += c * a;
        }
    }
    Ok(g.with_values(values))
}

/// Index of the imaginary node with `y = v = 0`.
fn real_node_index(grid: &BergmanGrid) -> Result<usize> {
    (0..grid.imag.len())
        .find(|&ii| grid.imag.coords_of(ii).iter().all(|c| c.abs() < 1e-12))
        .ok_or_else(|| Error::InvalidInput("the imaginary box has no node at y = v = 0".into()))
}

fn check_membership(f: &BergmanSample, j: &[i64]) -> Result<()> {
    let r = sector_membership_residual(f, j)?;
    let scale = f.max_abs();
    if r > QUASI_PERIODIC_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "sector residual {r:e} for j = {j:?} exceeds {:e} of the peak {scale:e}",
            QUASI_PERIODIC_TOL
        )));
    }
    Ok(())
}

/// `C_m(u) = ∫_{[0,1/2k)ⁿ} G̃(x, u) e^{−iλm·x} dx` on the real `u`-nodes of the cell, where
/// `G̃(z,w) = e^{−iλa·z} e^{−i(λ/2)z·w} F(z,w)`, `λ = 4πk`, `a = j/2k`.
///
/// `G̃` is `1/2k`-periodic in `x`, so the integral is `(2k)^{−n}` times the mean over all
/// `x`-nodes of `[0,1)ⁿ`.
pub fn fourier_mode(f: &BergmanSample, j: &[i64], m: &[i64]) -> Result<SampledField> {
    let params = LatticeParams::new(f.grid.n(), f.k)?;
    params.check_index(j)?;
    let n = params.n();
    check_dim(n, m.len())?;
    check_membership(f, j)?;
    mode_unchecked(f, params, j, m)
}

fn mode_unchecked(f: &BergmanSample, params: LatticeParams, j: &[i64], m: &[i64]) -> Result<SampledField> {
    let n = params.n();
    let real = &f.grid.real;
    let p = real.points()[0];
    let modulus = params.modulus();
    if m.iter().any(|&mi| (mi.unsigned_abs() as usize) * modulus > p / 2) {
        return Err(Error::Aliasing {
            index: m.iter().map(|v| v.abs()).max().unwrap_or(0) * modulus as i64,
            limit: p / 2,
        });
    }
    let lambda = params.lambda();
    let a = params.shift(j);
    let ii0 = real_node_index(&f.grid)?;
    let ni = f.grid.imag.len();
    let origin = real.lo();
    let u_grid = Grid::new(origin[n..].to_vec(), real.hi()[n..].to_vec(), vec![p; n], vec![true; n])?;
    let x_count = p.pow(n as u32);
    let mut out = vec![C64::new(0.0, 0.0); u_grid.len()];
    for ir in 0..real.len() {
        let c = real.coords_of(ir);
        let (x, u) = c.split_at(n);
        let mut phase = 0.0;
        for i in 0..n {
            phase -= lambda * (a[i] * x[i] + 0.5 * x[i] * u[i] + m[i] as f64 * x[i]);
        }
        let iu = real.multi_index(ir)[n..]
            .iter()
            .fold(0usize, |acc, &v| acc * p + v);
        out[iu] += C64::from_polar(1.0, phase) * f.value(ir * ni + ii0)?;
    }
    let scale = 1.0 / (x_count as f64 * (modulus as f64).powi(n as i32));
    for v in &mut out {
        *v *= scale;
    }
    SampledField::new(u_grid, out)
}

/// `C_0` on real `u ∈ origin + [−reach, 1 + reach)ⁿ`, assembled from `C_0(u + m) = C_m(u)`.
pub fn extract_c0(f: &BergmanSample, j: &[i64], reach: usize) -> Result<SampledField> {
    let n = f.grid.n();
    let p = f.grid.real.points()[0];
    if f.grid.real.points().iter().any(|&q| q != p) {
        return Err(Error::InvalidInput("extraction needs equal resolution on every real axis".into()));
    }
    let lo: Vec<f64> = f.grid.real.lo()[n..].iter().map(|o| o - reach as f64).collect();
    let hi: Vec<f64> = f.grid.real.lo()[n..].iter().map(|o| o + 1.0 + reach as f64).collect();
    let span = p * (2 * reach + 1);
    let big = Grid::new(lo, hi, vec![span; n], vec![false; n])?;
    let mut values = vec![C64::new(0.0, 0.0); big.len()];
    let r = reach as i64;
    let big_strides = big.strides();
    let params = LatticeParams::new(n, f.k)?;
    params.check_index(j)?;
    check_membership(f, j)?;
    let mut modes = Vec::new();
    crate::numerics::for_each_in_box(n, r, |m| modes.push(m.to_vec()));
    for m in modes {
        let cm = mode_unchecked(f, params, j, &m)?;
        for (iu, v) in cm.values().iter().enumerate() {
            let idx = cm.grid().multi_index(iu);
            let flat: usize = (0..n)
                .map(|i| (idx[i] + ((m[i] + r) as usize) * p) * big_strides[i])
                .sum();
            values[flat] = *v;
        }
    }
    SampledField::new(big, values)
}

/// Options of [`invert_sector_transform`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    /// Hermite truncation `|α| ≤ N`; `None` takes the largest `N` allowed by `cap`.
    pub max_degree: Option<usize>,
    /// Bound on the amplification `e^{(2|α|+n)|λ|t}`.
    pub cap: f64,
    /// Unit cells on each side of the sampled cell used to assemble `C_0`.
    pub reach: usize,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            max_degree: None,
            cap: CONDITIONING_CAP,
            reach: 3,
        }
    }
}

/// Largest `N` with `e^{(2N+n)|λ|t} ≤ cap`, if any.
pub fn admissible_degree(n: usize, lambda: f64, t: f64, cap: f64) -> Option<usize> {
    let budget = cap.ln() / (lambda.abs() * t) - n as f64;
    if budget < 0.0 {
        None
    } else {
        Some((budget / 2.0).floor() as usize)
    }
}

/// Hermite coefficients (in `Φ_α^{4πk}`) of `τ_a f` for `F = G ∗_{−4πk} p_t^{−4πk}`,
/// `G = V_{k,j} f`.
///
/// `C_0(w) = (2k)^{−n} c_λ (e^{−tH(λ)} τ_a f)(w + a)`; the semigroup is undone on the
/// expansion of `C_0(· − a)`.
pub fn invert_sector_coefficients(f: &BergmanSample, j: &[i64], opts: InversionOptions) -> Result<HermiteCoeffs> {
    let params = LatticeParams::new(f.grid.n(), f.k)?;
    params.check_index(j)?;
    let n = params.n();
    let lambda = params.lambda();
    let rate = lambda.abs() * f.t;
    let max_degree = match opts.max_degree {
        Some(d) => d,
        None => admissible_degree(n, lambda, f.t, opts.cap).ok_or(Error::IllPosed {
            alpha: vec![0; n],
            amplification: (n as f64 * rate).exp(),
            cap: opts.cap,
        })?,
    };
    let amplification = ((2 * max_degree + n) as f64 * rate).exp();
    if amplification > opts.cap {
        let mut alpha = vec![0; n];
        alpha[0] = max_degree;
        return Err(Error::IllPosed {
            alpha,
            amplification,
            cap: opts.cap,
        });
    }
    let c0 = extract_c0(f, j, opts.reach)?;
    let a = params.shift(j);
    let norm = (params.modulus() as f64).powi(n as i32) / HERMITE_ROUTE_CONSTANT;
    let grid = c0.grid();
    let lo: Vec<f64> = grid.lo().iter().zip(&a).map(|(l, s)| l + s).collect();
    let hi: Vec<f64> = grid.hi().iter().zip(&a).map(|(h, s)| h + s).collect();
    let moved = Grid::new(lo, hi, grid.points().to_vec(), vec![false; n])?;
    let g = SampledField::new(moved, c0.values().iter().map(|v| v * norm).collect())?;
    let mut coeffs = hermite_coefficients(&g, lambda, max_degree)?;
    for (alpha, c) in coeffs.terms.iter_mut() {
        *c *= ((2 * degree(alpha) + n) as f64 * rate).exp();
    }
    Ok(coeffs)
}

/// Recovers `f` with `F = (V_{k,j} f) ∗_{−4πk} p_t^{−4πk}` (undamped), sampled on the real
/// `C_0` grid: `f(y) = (τ_a f)(y + a)`.
pub fn invert_sector_transform(f: &BergmanSample, j: &[i64], opts: InversionOptions) -> Result<SampledField> {
    let params = LatticeParams::new(f.grid.n(), f.k)?;
    let coeffs = invert_sector_coefficients(f, j, opts)?;
    let a = params.shift(j);
    let n = params.n();
    let p = f.grid.real.points()[0];
    let r = opts.reach as f64;
    let lo: Vec<f64> = f.grid.real.lo()[n..].iter().map(|o| o - r).collect();
    let hi: Vec<f64> = f.grid.real.lo()[n..].iter().map(|o| o + 1.0 + r).collect();
    let grid = Grid::new(lo, hi, vec![p * (2 * opts.reach + 1); n], vec![false; n])?;
    let mut values = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        let y: Vec<f64> = grid.coords_of(flat).iter().zip(&a).map(|(v, s)| v + s).collect();
        values.push(coeffs.eval(&y)?);
    }
    SampledField::new(grid, values)
}

/// Entire extension of `A_λ(g) ∗_λ p_t^λ` for a planar Gaussian `g`, `λ = −4πk`:
/// `Σ_{a,b} e^{i(λ/2)(w·a − z·b)} (g ∗_λ p_t^λ)(z + a, w + b)`.
pub fn averaged_gaussian_image(k: i64, g: &Gaussian2n, t: f64, z: &[C64], w: &[C64]) -> Result<C64> {
    averaged_gaussian_image_scaled(k, g, t, z, w, 0.0)
}

/// [`averaged_gaussian_image`] times `e^{log_scale}`, without forming either factor.
///
/// Each summand is `e^{Q(a,b)}` with `Q` quadratic and separable over coordinates, so the
/// sum is a product of planar lattice sums. Each is taken around the maximiser of `Re Q`
/// over a box where `Re Q` has dropped by at least 60.
pub fn averaged_gaussian_image_scaled(
    k: i64,
    g: &Gaussian2n,
    t: f64,
    z: &[C64],
    w: &[C64],
    log_scale: f64,
) -> Result<C64> {
    let n = g.n();
    check_dim(n, z.len())?;
    check_dim(n, w.len())?;
    let lambda = -4.0 * PI * k as f64;
    let (pre, b) = p_coefficients(lambda, t, n)?;
    let big_a = g.beta + b;
    let mut log_total = pre.ln() + n as f64 * (PI / big_a).ln() + log_scale;
    let mut product = g.amp;
    for i in 0..n {
        let (x0, u0) = (g.x0[i], g.u0[i]);
        let q = |al: f64, be: f64| -> C64 {
            let zz = z[i] + al;
            let ww = w[i] + be;
            let lx = 2.0 * g.beta * x0 + 2.0 * b * zz - I * (lambda / 2.0) * ww;
            let lu = 2.0 * g.beta * u0 + 2.0 * b * ww + I * (lambda / 2.0) * zz;
            (lx * lx + lu * lu) / (4.0 * big_a) - g.beta * (x0 * x0 + u0 * u0) - b * (zz * zz + ww * ww)
                + I * (lambda / 2.0) * (w[i] * al - z[i] * be)
        };
        let q0 = q(0.0, 0.0);
        let (qa, qma, qb, qmb) = (q(1.0, 0.0), q(-1.0, 0.0), q(0.0, 1.0), q(0.0, -1.0));
        let caa = (qa + qma - 2.0 * q0) / 2.0;
        let cbb = (qb + qmb - 2.0 * q0) / 2.0;
        let ca = (qa - qma) / 2.0;
        let cb = (qb - qmb) / 2.0;
        let cab = q(1.0, 1.0) - q0 - ca - cb - caa - cbb;
        // Re Q = r0 + la·α + lb·β + haa·α² + hbb·β² + hab·αβ.
        let (haa, hbb, hab, la, lb) = (caa.re, cbb.re, cab.re, ca.re, cb.re);
        let det = 4.0 * haa * hbb - hab * hab;
        let mu = {
            let tr = -(haa + hbb);
            let disc = ((haa - hbb).powi(2) + hab * hab).sqrt();
            0.5 * (tr - disc)
        };
        if !(haa < 0.0 && det > 0.0 && mu > 1e-12) {
            return Err(Error::NonConvergence { tail: f64::INFINITY, radius: 0 });
        }
        let pa = (-2.0 * hbb * la + hab * lb) / det;
        let pb = (-2.0 * haa * lb + hab * la) / det;
        let peak = q0.re + la * pa + lb * pb + haa * pa * pa + hbb * pb * pb + hab * pa * pb;
        let r = (60.0 / mu).sqrt().ceil() as i64 + 1;
        let (ca0, cb0) = (pa.round() as i64, pb.round() as i64);
        let mut s = C64::new(0.0, 0.0);
        for al in ca0 - r..=ca0 + r {
            for be in cb0 - r..=cb0 + r {
                let (af, bf) = (al as f64, be as f64);
                let e = q0 + ca * af + cb * bf + caa * af * af + cbb * bf * bf + cab * af * bf;
                s += (e - peak).exp();
            }
        }
        log_total += peak;
        product *= s;
    }
    Ok(product * log_total.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat_transform::{torus_heat_transform, EvolvedShift};
    use crate::heisenberg::GroupPoint;
    use crate::hermite::hermite_eval_scaled;
    use crate::nilmanifold::{EntireFunction, cell_grid, twisted_average, weil_brezin_j, GaussianMixture, GaussianTerm, HermiteFunction};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn gaussian(beta: f64, x0: f64, u0: f64, amp: C64) -> Gaussian2n {
        Gaussian2n {
            amp,
            beta,
            x0: vec![x0],
            u0: vec![u0],
        }
    }

    fn twisted_grid(k: i64, t: f64, real: usize, im: usize, origin: Vec<f64>) -> BergmanGrid {
        let r = BergmanGrid::twisted_radius(k, t).unwrap();
        BergmanGrid::new(1, real, origin, r, im).unwrap()
    }

    fn gaussian_sample(k: i64, t: f64, g: &Gaussian2n, grid: BergmanGrid) -> BergmanSample {
        BergmanSample::from_scaled_fn(k, t, grid, |z, w, s| averaged_gaussian_image_scaled(k, g, t, z, w, s)).unwrap()
    }

    fn max_diff(a: &BergmanSample, b: &BergmanSample) -> f64 {
        a.weighted_values()
            .iter()
            .zip(b.weighted_values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn cell_norm(k: i64, g: &Gaussian2n) -> f64 {
        let params = LatticeParams::new(1, k).unwrap();
        let mix = GaussianMixture::new(
            2,
            vec![GaussianTerm {
                coeff: g.amp,
                beta: g.beta,
                centre: vec![g.x0[0], g.u0[0]],
                freq: vec![0.0, 0.0],
            }],
        )
        .unwrap();
        twisted_average(params, &mix, 32, 1e-15).unwrap().field().l2_norm()
    }

    /// `V_{k,j} f` on the cell for `f = Φ_α^λ` combinations given by `coeffs`.
    fn weil_brezin_sector(params: LatticeParams, j: &[i64], f: &HermiteFunction, points: usize) -> SectorFunction {
        SectorFunction::from_fn(params, points, |x, u| {
            weil_brezin_j(params, j, f, &GroupPoint::new(x.to_vec(), u.to_vec(), 0.0).unwrap(), 1e-16)
                .unwrap()
                .value
        })
        .unwrap()
    }

    #[test]
    fn averaged_gaussian_image_matches_convolution_route() {
        let params = LatticeParams::new(1, 1).unwrap();
        let t = 0.1;
        let g = gaussian(2.0, 0.2, -0.3, c(1.0, 0.2));
        let mix = GaussianMixture::new(
            2,
            vec![GaussianTerm {
                coeff: g.amp,
                beta: g.beta,
                centre: vec![0.2, -0.3],
                freq: vec![0.0, 0.0],
            }],
        )
        .unwrap();
        let s = twisted_average(params, &mix, 32, 1e-14).unwrap();
        let pts = vec![(vec![c(0.3, 0.0)], vec![c(0.6, 0.0)]), (vec![c(0.8, 0.25)], vec![c(1.7, -0.2)])];
        let conv = sector_heat_transform(&s, t, &pts).unwrap();
        for ((z, w), v) in pts.iter().zip(&conv) {
            let closed = averaged_gaussian_image(1, &g, t, z, w).unwrap();
            assert!((closed - v.value.convolution).norm() < 1e-8 * closed.norm());
        }
    }

    #[test]
    fn torus_norm_of_constant_is_one_and_homogeneous() {
        let t = 0.1;
        let grid = BergmanGrid::new(1, 4, vec![0.0; 2], BergmanGrid::torus_radius(t, 0), 41).unwrap();
        let one = BergmanSample::from_fn(0, t, grid, |_, _| c(1.0, 0.0)).unwrap();
        let n = torus_bergman_norm(&one).unwrap();
        assert!(n.is_clean());
        assert_relative_eq!(n.value, 1.0, max_relative = 1e-12);
        let two = torus_bergman_norm(&one.scale(c(2.0, 0.0))).unwrap().value;
        assert_relative_eq!(two, 2.0 * n.value, max_relative = 1e-14);
        assert!(twisted_bergman_norm(&one).is_err());
    }

    #[test]
    fn torus_extension_matches_convolution_and_is_isometric() {
        let t = 0.1;
        let inputs: Vec<Box<dyn Fn(&[f64]) -> f64>> = vec![
            Box::new(|_| 1.0),
            Box::new(|v| (2.0 * PI * v[0]).cos()),
            Box::new(|v| (2.0 * PI * v[0]).cos() * (2.0 * PI * v[1]).cos()),
        ];
        let grid = BergmanGrid::new(1, 8, vec![0.0; 2], BergmanGrid::torus_radius(t, 1), 49).unwrap();
        let mut ratios = Vec::new();
        for f in &inputs {
            let field = SampledField::from_real_fn(cell_grid(1, 16).unwrap(), |v| f(v));
            let sample = BergmanSample::torus_from_field(&field, t, grid.clone()).unwrap();
            let spectral = BergmanSample::torus_from_field(
                &field,
                t,
                BergmanGrid::new(1, 1, vec![0.3, 0.7], 0.4, 2).unwrap(),
            )
            .unwrap();
            // Imaginary corner (0.4, −0.4) of a one-node real grid.
            let ni = spectral.grid().imag().len();
            let corner = (0..ni)
                .find(|&ii| {
                    let q = spectral.grid().imag().coords_of(ii);
                    q[0] > 0.0 && q[1] < 0.0
                })
                .unwrap();
            let want = torus_heat_transform(&field, t, &[(vec![c(0.3, 0.4)], vec![c(0.7, -0.4)])]).unwrap()[0].value;
            assert!((spectral.value(corner).unwrap() - want).norm() < 1e-10 * want.norm().max(1.0));
            let n = torus_bergman_norm(&sample).unwrap();
            assert!(n.is_clean(), "{:?}", n.warnings);
            ratios.push(n.value / field.l2_norm());
        }
        for r in &ratios {
            assert_relative_eq!(*r, ratios[0], max_relative = 1e-8);
        }
        assert_relative_eq!(ratios[0], 1.0, max_relative = 1e-8);
    }

    #[test]
    fn twisted_norm_examples() {
        let t = 0.1;
        let grid = twisted_grid(1, t, 12, 23, vec![0.0, 0.0]);
        let zero = BergmanSample::from_fn(1, t, grid.clone(), |_, _| c(0.0, 0.0)).unwrap();
        assert_eq!(twisted_bergman_norm(&zero).unwrap().value, 0.0);
        let g = gaussian(2.0, 0.2, -0.3, c(1.0, 0.3));
        let base = twisted_bergman_norm(&gaussian_sample(1, t, &g, grid)).unwrap();
        assert!(base.is_clean());
        let moved = twisted_bergman_norm(&gaussian_sample(1, t, &g, twisted_grid(1, t, 12, 23, vec![0.3, 0.7]))).unwrap();
        assert_relative_eq!(base.value, moved.value, max_relative = 1e-8);
        // Isometry up to a fixed constant.
        let h = gaussian(3.0, -0.4, 0.1, c(0.5, -1.0));
        let other = twisted_bergman_norm(&gaussian_sample(1, t, &h, twisted_grid(1, t, 12, 23, vec![0.0, 0.0]))).unwrap();
        let (r1, r2) = (base.value / cell_norm(1, &g), other.value / cell_norm(1, &h));
        assert_relative_eq!(r1, r2, max_relative = 1e-8);
        assert_relative_eq!(r1, 0.5, max_relative = 1e-8);
    }

    #[test]
    fn twisted_norm_rejects_non_quasi_periodic_input() {
        let t = 0.1;
        let grid = twisted_grid(1, t, 8, 9, vec![0.0, 0.0]);
        let bad = BergmanSample::from_fn(1, t, grid, |z, _| (-(z[0] - 0.5) * (z[0] - 0.5)).exp()).unwrap();
        assert!(matches!(twisted_bergman_norm(&bad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn truncated_box_is_flagged() {
        let t = 0.1;
        let g = gaussian(2.0, 0.2, -0.3, c(1.0, 0.0));
        let grid = BergmanGrid::new(1, 8, vec![0.0, 0.0], 3.0, 13).unwrap();
        let n = twisted_bergman_norm(&gaussian_sample(1, t, &g, grid)).unwrap();
        assert!(matches!(n.warnings[..], [Warning::Truncation { .. }]));
    }

    #[test]
    fn group_action_examples() {
        let t = 0.1;
        let k = 2;
        let grid = BergmanGrid::new(1, 8, vec![0.0, 0.0], 2.0, 5).unwrap();
        let g = gaussian(2.5, 0.1, 0.3, c(1.0, 0.5));
        let sample = gaussian_sample(k, t, &g, grid.clone());
        let zero = FiniteGroupElement::zero(k, 1).unwrap();
        assert_eq!(finite_group_act(&zero, &sample).unwrap(), sample);
        let params = LatticeParams::new(1, k).unwrap();
        let all = FiniteGroupElement::all(params);
        for s1 in &all {
            // Direct oracle: evaluate e^{−iπs·w} G(z + s/2k, w) at every node.
            let shift = s1.x()[0] as f64 / (2 * k) as f64;
            let direct = BergmanSample::from_scaled_fn(k, t, grid.clone(), |z, w, sc| {
                let zs = vec![z[0] + shift];
                let lg = log_weight(k, t, &zs, w)?;
                let phase = -I * PI * s1.x()[0] as f64 * w[0];
                Ok(averaged_gaussian_image_scaled(k, &g, t, &zs, w, sc - 0.5 * lg + 0.5 * lg)? * phase.exp())
            })
            .unwrap();
            let acted = finite_group_act(s1, &sample).unwrap();
            assert!(max_diff(&acted, &direct) < 1e-10 * sample.max_abs());
            for s2 in &all {
                let two = finite_group_act(s1, &finite_group_act(s2, &sample).unwrap()).unwrap();
                let one = finite_group_act(&s1.add(s2).unwrap(), &sample).unwrap();
                assert!(max_diff(&two, &one) < 1e-12 * sample.max_abs());
            }
        }
        let odd = BergmanGrid::new(1, 6, vec![0.0, 0.0], 2.0, 5).unwrap();
        let s = FiniteGroupElement::new(k, vec![1]).unwrap();
        assert!(finite_group_act(&s, &gaussian_sample(k, t, &g, odd)).is_err());
        assert_eq!(FiniteGroupElement::new(k, vec![-1]).unwrap().x(), &[3]);
    }

    #[test]
    fn group_action_is_unitary() {
        let t = 0.1;
        let grid = twisted_grid(1, t, 12, 23, vec![0.0, 0.0]);
        let g = gaussian(1.5, 0.3, 0.1, c(0.2, 1.0));
        let sample = gaussian_sample(1, t, &g, grid);
        let base = twisted_bergman_norm(&sample).unwrap().value;
        for s in FiniteGroupElement::all(LatticeParams::new(1, 1).unwrap()) {
            let n = twisted_bergman_norm(&finite_group_act(&s, &sample).unwrap()).unwrap().value;
            assert_relative_eq!(n, base, max_relative = 1e-6);
        }
    }

    #[test]
    fn projections_resolve_identity_and_are_orthogonal() {
        let t = 0.1;
        let grid = twisted_grid(1, t, 12, 23, vec![0.0, 0.0]);
        let g = gaussian(2.0, 0.2, -0.3, c(1.0, 0.3));
        let sample = gaussian_sample(1, t, &g, grid);
        let params = LatticeParams::new(1, 1).unwrap();
        let parts: Vec<BergmanSample> = params
            .index_set()
            .iter()
            .map(|j| project_sector_j(&sample, j).unwrap())
            .collect();
        let total = parts.iter().skip(1).fold(parts[0].clone(), |acc, p| acc.add(p).unwrap());
        assert!(max_diff(&total, &sample) < 1e-8 * sample.max_abs());
        for (j, p) in params.index_set().iter().zip(&parts) {
            assert!(sector_membership_residual(p, j).unwrap() < 1e-10 * sample.max_abs());
            let again = project_sector_j(p, j).unwrap();
            assert!(max_diff(&again, p) < 1e-8 * sample.max_abs());
        }
        let cross = bergman_inner(&parts[0], &parts[1]).unwrap().value.norm();
        let n0 = twisted_bergman_norm(&parts[0]).unwrap().value;
        let n1 = twisted_bergman_norm(&parts[1]).unwrap().value;
        assert!(n0 > 1e-3 && n1 > 1e-3);
        assert!(cross < 1e-8 * n0 * n1);
    }

    #[test]
    fn membership_residual_identifies_the_weil_brezin_index() {
        let t = 0.1;
        let params = LatticeParams::new(1, 1).unwrap();
        let f = HermiteFunction::basis(vec![0], 1.0).unwrap();
        let zero = BergmanSample::from_fn(1, t, BergmanGrid::real_slice(1, 8, vec![0.0; 2]).unwrap(), |_, _| {
            c(0.0, 0.0)
        })
        .unwrap();
        for j0 in params.index_set() {
            assert_eq!(sector_membership_residual(&zero, &j0).unwrap(), 0.0);
            let s = weil_brezin_sector(params, &j0, &f, 32);
            let sample = BergmanSample::from_sector(&s, t, BergmanGrid::real_slice(1, 16, vec![0.0; 2]).unwrap()).unwrap();
            let scale = sample.max_abs();
            for j in params.index_set() {
                let r = sector_membership_residual(&sample, &j).unwrap();
                if j == j0 {
                    assert!(r < 1e-8 * scale, "{r}");
                } else {
                    assert!(r > 0.1 * scale);
                }
                let rotated = sector_membership_residual(&sample.scale(C64::from_polar(1.0, 0.7)), &j).unwrap();
                assert_relative_eq!(rotated, r, max_relative = 1e-12, epsilon = 1e-12 * scale);
            }
        }
    }

    #[test]
    fn extracted_mode_matches_evolved_function_and_shift_relation() {
        let t = 0.1;
        let params = LatticeParams::new(1, 1).unwrap();
        let j = [1];
        let f = HermiteFunction::basis(vec![0], 1.0).unwrap();
        let s = weil_brezin_sector(params, &j, &f, 40);
        let base = BergmanSample::from_sector(&s, t, BergmanGrid::real_slice(1, 20, vec![0.0, 0.0]).unwrap()).unwrap();
        let moved = BergmanSample::from_sector(&s, t, BergmanGrid::real_slice(1, 20, vec![0.0, 1.0]).unwrap()).unwrap();
        let c1 = fourier_mode(&base, &j, &[1]).unwrap();
        let c0_moved = fourier_mode(&moved, &j, &[0]).unwrap();
        assert_eq!(c1.values().len(), 20);
        let scale = c1.max_abs();
        for (a, b) in c1.values().iter().zip(c0_moved.values()) {
            assert!((a - b).norm() < 1e-6 * scale);
        }
        // C_0(w) = (2k)^{−n} c_λ (e^{−tH} τ_a f)(w + a).
        let grid = Grid::cube(1, -12.0, 12.0, 768, false).unwrap();
        let sampled = SampledField::from_fn(grid, |v| f.eval_complex(&[C64::from(v[0])]));
        let evolved = EvolvedShift::new(params, &j, &sampled, t, 40).unwrap();
        let c0 = extract_c0(&base, &j, 2).unwrap();
        for (iu, v) in c0.values().iter().enumerate() {
            let u = c0.grid().coords_of(iu);
            let want = evolved.eval_complex(&[C64::from(u[0])]) * (0.5 * HERMITE_ROUTE_CONSTANT);
            assert!((v - want).norm() < 1e-8, "{u:?} {v} {want}");
        }
        let zero = BergmanSample::from_fn(1, t, BergmanGrid::real_slice(1, 20, vec![0.0; 2]).unwrap(), |_, _| {
            c(0.0, 0.0)
        })
        .unwrap();
        assert_eq!(extract_c0(&zero, &j, 1).unwrap().max_abs(), 0.0);
        assert!(extract_c0(&base, &[0], 1).is_err());
    }

    fn round_trip(coeffs: &[(usize, f64)], opts: InversionOptions) -> Result<f64> {
        let t = 0.1;
        let params = LatticeParams::new(1, 1).unwrap();
        let lambda = params.lambda();
        let mut hc = HermiteCoeffs::new(1, lambda).unwrap();
        for &(a, v) in coeffs {
            hc = hc.with(vec![a], c(v, 0.0)).unwrap();
        }
        let f = HermiteFunction::new(hc).unwrap();
        let s = weil_brezin_sector(params, &[0], &f, 32);
        let sample = BergmanSample::from_sector(&s, t, BergmanGrid::real_slice(1, 32, vec![0.0, 0.0]).unwrap())?;
        let rec = invert_sector_transform(&sample, &[0], opts)?;
        let want = SampledField::from_fn(rec.grid().clone(), |y| {
            coeffs
                .iter()
                .map(|&(a, v)| v * hermite_eval_scaled(&[a], lambda, y).unwrap())
                .sum::<f64>()
                .into()
        });
        let diff = SampledField::new(
            rec.grid().clone(),
            rec.values().iter().zip(want.values()).map(|(a, b)| a - b).collect(),
        )?;
        Ok(diff.l2_norm() / want.l2_norm())
    }

    #[test]
    fn inversion_round_trip() {
        let opts = InversionOptions::default();
        assert!(round_trip(&[(0, 1.0)], opts).unwrap() < 1e-6);
        assert!(round_trip(&[(0, 1.0), (2, 0.5)], opts).unwrap() < 1e-6);
        let zero = BergmanSample::from_fn(1, 0.1, BergmanGrid::real_slice(1, 16, vec![0.0; 2]).unwrap(), |_, _| {
            c(0.0, 0.0)
        })
        .unwrap();
        assert_eq!(invert_sector_transform(&zero, &[0], opts).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn inversion_beyond_the_cap_is_ill_posed_and_degrades() {
        let lambda = 4.0 * PI;
        assert_eq!(admissible_degree(1, lambda, 0.1, CONDITIONING_CAP), Some(6));
        let opts = InversionOptions {
            max_degree: Some(7),
            ..InversionOptions::default()
        };
        match round_trip(&[(0, 1.0)], opts) {
            Err(Error::IllPosed { alpha, .. }) => assert_eq!(alpha, vec![7]),
            other => panic!("{other:?}"),
        }
        let mut last = 0.0;
        for n in [8, 10, 12, 14, 16] {
            let r = round_trip(
                &[(0, 1.0)],
                InversionOptions {
                    max_degree: Some(n),
                    cap: f64::INFINITY,
                    reach: 3,
                },
            )
            .unwrap();
            assert!(r > last, "N = {n}: {r} after {last}");
            last = r;
        }
    }
}
