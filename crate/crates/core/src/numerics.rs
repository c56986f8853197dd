//! Grids, tensor quadrature, truncated lattice sums and Fourier coefficients.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{check_dim, Error, Flagged, Result, Warning};

/// Uniform tensor grid. Axis `i` carries the nodes `lo[i] + j*h[i]`, `j < points[i]`,
/// with `h[i] = (hi[i] - lo[i]) / points[i]`.
///
/// Periodic axes integrate with the rectangle rule over one period; the other axes
/// use the trapezoid rule with halved end weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points: Vec<usize>,
    periodic: Vec<bool>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points: Vec<usize>, periodic: Vec<bool>) -> Result<Grid> {
        let d = lo.len();
        check_dim(d, hi.len())?;
        check_dim(d, points.len())?;
        check_dim(d, periodic.len())?;
        for i in 0..d {
            if !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "axis {i}: need lo < hi, got [{}, {}]",
                    lo[i], hi[i]
                )));
            }
            if points[i] == 0 {
                return Err(Error::InvalidInput(format!("axis {i}: empty grid")));
            }
        }
        Ok(Grid {
            lo,
            hi,
            points,
            periodic,
        })
    }

    /// Same box `[lo, hi)` and resolution on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, points: usize, periodic: bool) -> Result<Grid> {
        Grid::new(vec![lo; dim], vec![hi; dim], vec![points; dim], vec![periodic; dim])
    }

    /// A zero-dimensional grid holding a single value.
    pub fn point() -> Grid {
        Grid {
            lo: vec![],
            hi: vec![],
            points: vec![],
            periodic: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.points[axis] as f64
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.hi[i] - self.lo[i]).product()
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        (0..self.points[axis]).map(|j| self.lo[axis] + j as f64 * h).collect()
    }

    pub fn axis_weights(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        let n = self.points[axis];
        let mut w = vec![h; n];
        if !self.periodic[axis] && n > 1 {
            w[0] *= 0.5;
            w[n - 1] *= 0.5;
        }
        w
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.points[i + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0; d];
        for i in (0..d).rev() {
            idx[i] = flat % self.points[i];
            flat /= self.points[i];
        }
        idx
    }

    pub fn coords_of(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(i, &j)| self.lo[i] + j as f64 * self.spacing(i))
            .collect()
    }

    /// Tensor quadrature weights for every node.
    pub fn weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = (0..self.dim()).map(|i| self.axis_weights(i)).collect();
        (0..self.len())
            .map(|flat| {
                self.multi_index(flat)
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| per_axis[i][j])
                    .product()
            })
            .collect()
    }

    fn remove_axes(&self, axes: &[usize]) -> Grid {
        let keep: Vec<usize> = (0..self.dim()).filter(|i| !axes.contains(i)).collect();
        Grid {
            lo: keep.iter().map(|&i| self.lo[i]).collect(),
            hi: keep.iter().map(|&i| self.hi[i]).collect(),
            points: keep.iter().map(|&i| self.points[i]).collect(),
            periodic: keep.iter().map(|&i| self.periodic[i]).collect(),
        }
    }
}

/// Complex samples on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: Grid,
    values: Vec<C64>,
}

impl SampledField {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<SampledField> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(SampledField { grid, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> C64) -> SampledField {
        let values = (0..grid.len()).map(|i| f(&grid.coords_of(i))).collect();
        SampledField { grid, values }
    }

    pub fn from_real_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> SampledField {
        SampledField::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> SampledField {
        SampledField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> SampledField {
        self.map(|v| v * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest modulus on the faces of non-periodic axes relative to the overall maximum.
    pub fn boundary_ratio(&self) -> f64 {
        let peak = self.max_abs();
        if peak == 0.0 {
            return 0.0;
        }
        let mut edge: f64 = 0.0;
        for flat in 0..self.grid.len() {
            let idx = self.grid.multi_index(flat);
            let on_face = (0..self.grid.dim()).any(|i| {
                !self.grid.periodic[i] && (idx[i] == 0 || idx[i] + 1 == self.grid.points[i])
            });
            if on_face {
                edge = edge.max(self.values[flat].norm());
            }
        }
        edge / peak
    }

    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.weights();
        self.values
            .iter()
            .zip(&w)
            .map(|(v, w)| v.norm_sqr() * w)
            .sum::<f64>()
            .sqrt()
    }

    /// `∫ f conj(g)` on a shared grid.
    pub fn inner(&self, other: &SampledField) -> Result<C64> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput("inner product of fields on different grids".into()));
        }
        let w = self.grid.weights();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(&w)
            .map(|((a, b), w)| a * b.conj() * *w)
            .sum())
    }

    /// Trigonometric interpolant, treating every axis as one period of length `hi - lo`.
    pub fn interpolant(&self) -> Interpolant {
        Interpolant::new(self)
    }

    /// Samples of `x ↦ f(x + delta)` on the same grid.
    ///
    /// Shifts are spectral (exact for band-limited samples); nodes whose shifted
    /// position leaves a non-periodic box are zero-filled and reported.
    pub fn shifted(&self, delta: &[f64]) -> Result<Flagged<SampledField>> {
        check_dim(self.grid.dim(), delta.len())?;
        let mut values = self.values.clone();
        let mut planner = FftPlanner::<f64>::new();
        let strides = self.grid.strides();
        for axis in 0..self.grid.dim() {
            if delta[axis] == 0.0 {
                continue;
            }
            let n = self.grid.points[axis];
            let period = self.grid.hi[axis] - self.grid.lo[axis];
            let fwd = planner.plan_fft_forward(n);
            let inv = planner.plan_fft_inverse(n);
            let phase: Vec<C64> = (0..n)
                .map(|k| {
                    let kk = signed_freq(k, n);
                    if n % 2 == 0 && k == n / 2 {
                        C64::new((PI * n as f64 * delta[axis] / period).cos(), 0.0)
                    } else {
                        C64::from_polar(1.0, 2.0 * PI * kk as f64 * delta[axis] / period)
                    }
                })
                .collect();
            let mut line = vec![C64::new(0.0, 0.0); n];
            for start in line_starts(&self.grid, axis) {
                for j in 0..n {
                    line[j] = values[start + j * strides[axis]];
                }
                fwd.process(&mut line);
                for j in 0..n {
                    line[j] *= phase[j] / n as f64;
                }
                inv.process(&mut line);
                for j in 0..n {
                    values[start + j * strides[axis]] = line[j];
                }
            }
        }
        let mut lost = 0.0;
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        for flat in 0..self.grid.len() {
            let x = self.grid.coords_of(flat);
            let outside = (0..self.grid.dim()).any(|i| {
                if self.grid.periodic[i] {
                    return false;
                }
                let y = x[i] + delta[i];
                y < self.grid.lo[i] || y >= self.grid.hi[i]
            });
            if outside {
                lost += values[flat].norm_sqr();
                values[flat] = C64::new(0.0, 0.0);
            }
        }
        let mut out = Flagged::clean(SampledField {
            grid: self.grid.clone(),
            values,
        });
        if total > 0.0 && lost / total > 1e-12 {
            out.warnings.push(Warning::Resampled {
                lost_fraction: lost / total,
            });
        }
        Ok(out)
    }
}

fn signed_freq(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn line_starts(grid: &Grid, axis: usize) -> Vec<usize> {
    let strides = grid.strides();
    (0..grid.len())
        .filter(|&flat| (flat / strides[axis]) % grid.points[axis] == 0)
        .collect()
}

/// Tensor trigonometric interpolant of a sampled field.
#[derive(Debug, Clone)]
pub struct Interpolant {
    grid: Grid,
    coeffs: Vec<C64>,
}

impl Interpolant {
    fn new(f: &SampledField) -> Interpolant {
        let grid = f.grid.clone();
        let mut coeffs = f.values.clone();
        let strides = grid.strides();
        let mut planner = FftPlanner::<f64>::new();
        for axis in 0..grid.dim() {
            let n = grid.points[axis];
            let fwd = planner.plan_fft_forward(n);
            let mut line = vec![C64::new(0.0, 0.0); n];
            for start in line_starts(&grid, axis) {
                for j in 0..n {
                    line[j] = coeffs[start + j * strides[axis]];
                }
                fwd.process(&mut line);
                for j in 0..n {
                    coeffs[start + j * strides[axis]] = line[j] / n as f64;
                }
            }
        }
        Interpolant { grid, coeffs }
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        let d = self.grid.dim();
        let basis: Vec<Vec<C64>> = (0..d)
            .map(|axis| {
                let n = self.grid.points[axis];
                let period = self.grid.hi[axis] - self.grid.lo[axis];
                let s = (x[axis] - self.grid.lo[axis]) / period;
                (0..n)
                    .map(|k| {
                        if n % 2 == 0 && k == n / 2 {
                            C64::new((PI * n as f64 * s).cos(), 0.0)
                        } else {
                            C64::from_polar(1.0, 2.0 * PI * signed_freq(k, n) as f64 * s)
                        }
                    })
                    .collect()
            })
            .collect();
        contract(&self.coeffs, self.grid.points(), &basis)
    }
}

/// Full contraction `Σ_idx values[idx] ∏_i factors[i][idx_i]` of a row-major tensor.
pub fn contract(values: &[C64], shape: &[usize], factors: &[Vec<C64>]) -> C64 {
    let d = shape.len();
    if d == 0 {
        return values[0];
    }
    // Contract the last axis first; each pass shrinks the tensor.
    let mut cur: Vec<C64> = values.to_vec();
    for axis in (0..d).rev() {
        let n = shape[axis];
        let rows = cur.len() / n;
        let f = &factors[axis];
        let mut next = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &cur[r * n..(r + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += row[j] * f[j];
            }
            next.push(acc);
        }
        cur = next;
    }
    cur[0]
}

/// Tensor trapezoid / rectangle approximation of `∫ f`.
pub fn integrate(f: &SampledField) -> Result<C64> {
    if f.grid.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    let w = f.grid.weights();
    Ok(f.values.iter().zip(&w).map(|(v, w)| v * *w).sum())
}

/// Normalised Fourier coefficient over the periodic `axes`:
/// `(1/vol) ∫ f(x) e^{-2πi m·x/period} dx`, returned as a field over the remaining axes.
pub fn fourier_coefficient(f: &SampledField, axes: &[usize], m: &[i64]) -> Result<SampledField> {
    check_dim(axes.len(), m.len())?;
    let g = &f.grid;
    for (&axis, &mi) in axes.iter().zip(m) {
        if axis >= g.dim() {
            return Err(Error::InvalidInput(format!("axis {axis} out of range")));
        }
        if !g.periodic[axis] {
            return Err(Error::InvalidInput(format!("axis {axis} is not periodic")));
        }
        let limit = g.points[axis] / 2;
        if mi.unsigned_abs() as usize > limit {
            return Err(Error::Aliasing { index: mi, limit });
        }
    }
    let out_grid = g.remove_axes(axes);
    let mut out = vec![C64::new(0.0, 0.0); out_grid.len().max(1)];
    let keep: Vec<usize> = (0..g.dim()).filter(|i| !axes.contains(i)).collect();
    let out_strides = out_grid.strides();
    let count: f64 = axes.iter().map(|&a| g.points[a] as f64).product();
    for flat in 0..g.len() {
        let idx = g.multi_index(flat);
        let mut phase = 0.0;
        for (&axis, &mi) in axes.iter().zip(m) {
            let period = g.hi[axis] - g.lo[axis];
            let x = g.lo[axis] + idx[axis] as f64 * g.spacing(axis);
            phase -= 2.0 * PI * mi as f64 * x / period;
        }
        let o: usize = keep.iter().enumerate().map(|(k, &i)| idx[i] * out_strides[k]).sum();
        out[o] += f.values[flat] * C64::from_polar(1.0, phase);
    }
    for v in &mut out {
        *v /= count;
    }
    SampledField::new(out_grid, out)
}

/// Scalar variant of [`fourier_coefficient`] when every axis is transformed.
pub fn fourier_coefficient_scalar(f: &SampledField, m: &[i64]) -> Result<C64> {
    let axes: Vec<usize> = (0..f.grid.dim()).collect();
    Ok(fourier_coefficient(f, &axes, m)?.values[0])
}

/// Number of points of `ℤ^dim` with sup-norm exactly `r`.
pub fn shell_count(dim: usize, r: usize) -> f64 {
    if r == 0 {
        return 1.0;
    }
    let a = (2 * r + 1) as f64;
    let b = (2 * r - 1) as f64;
    a.powi(dim as i32) - b.powi(dim as i32)
}

/// Bound `amp·e^{-rate·r²}` on the sup-norm shell `r`.
pub fn gaussian_bound(amp: f64, rate: f64) -> impl Fn(usize) -> f64 {
    move |r| amp * (-rate * (r * r) as f64).exp()
}

/// Bound `amp·e^{-rate·max(r - shift, 0)²}` for terms centred away from the origin.
pub fn shifted_gaussian_bound(amp: f64, rate: f64, shift: f64) -> impl Fn(usize) -> f64 {
    move |r| {
        let s = (r as f64 - shift).max(0.0);
        amp * (-rate * s * s).exp()
    }
}

/// Sum of `count(r)·bound(r)` over `r > radius`.
pub fn tail_estimate(dim: usize, bound: &dyn Fn(usize) -> f64, radius: usize) -> f64 {
    let mut tail = 0.0;
    let mut r = radius + 1;
    let mut small = 0;
    while r < radius + 100_000 {
        let t = shell_count(dim, r) * bound(r);
        if !t.is_finite() {
            return f64::INFINITY;
        }
        tail += t;
        if t <= 1e-300 || t < 1e-18 * tail {
            small += 1;
            if small > 8 {
                break;
            }
        } else {
            small = 0;
        }
        r += 1;
    }
    tail
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSum {
    pub value: C64,
    pub tail: f64,
    pub radius: usize,
}

/// Sums `term(γ)` over `γ ∈ ℤ^dim` with `‖γ‖_∞ ≤ radius`.
///
/// `bound(r)` must dominate `|term(γ)|` on the shell `‖γ‖_∞ = r`; the tail beyond the
/// radius is estimated from it and must stay below `tol`.
pub fn lattice_sum(
    dim: usize,
    mut term: impl FnMut(&[i64]) -> C64,
    bound: &dyn Fn(usize) -> f64,
    radius: f64,
    tol: f64,
) -> Result<LatticeSum> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius {radius}")));
    }
    let r = radius.floor() as usize;
    let tail = tail_estimate(dim, bound, r);
    if !(tail < tol) {
        return Err(Error::NonConvergence { tail, radius: r });
    }
    let mut value = C64::new(0.0, 0.0);
    for_each_in_box(dim, r as i64, |g| value += term(g));
    Ok(LatticeSum {
        value,
        tail,
        radius: r,
    })
}

/// Smallest radius (up to `max_radius`) whose tail estimate is below `tol`.
pub fn radius_for(dim: usize, bound: &dyn Fn(usize) -> f64, tol: f64, max_radius: usize) -> Result<usize> {
    // Skip radii whose next shell alone already exceeds the tolerance, then confirm.
    let mut r = 0;
    while r < max_radius && !(shell_count(dim, r + 1) * bound(r + 1) < tol) {
        r += 1;
    }
    loop {
        let tail = tail_estimate(dim, bound, r);
        if tail < tol {
            return Ok(r);
        }
        if r >= max_radius {
            return Err(Error::NonConvergence { tail, radius: r });
        }
        r += 1;
    }
}

/// [`lattice_sum`] with the radius chosen from the bound.
pub fn lattice_sum_auto(
    dim: usize,
    term: impl FnMut(&[i64]) -> C64,
    bound: &dyn Fn(usize) -> f64,
    tol: f64,
    max_radius: usize,
) -> Result<LatticeSum> {
    let r = radius_for(dim, bound, tol, max_radius)?;
    lattice_sum(dim, term, bound, r as f64, tol)
}

/// Visits every `γ ∈ ℤ^dim` with `‖γ‖_∞ ≤ r`.
pub fn for_each_in_box(dim: usize, r: i64, mut f: impl FnMut(&[i64])) {
    let mut g = vec![-r; dim];
    if dim == 0 {
        f(&g);
        return;
    }
    loop {
        f(&g);
        let mut i = dim;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if g[i] < r {
                g[i] += 1;
                for gj in g.iter_mut().skip(i + 1) {
                    *gj = -r;
                }
                break;
            }
        }
    }
}

/// Nodes and weights of the trapezoid rule with `n` intervals on `[a, b]`.
pub fn trapezoid(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / n as f64;
    let x: Vec<f64> = (0..=n).map(|j| a + j as f64 * h).collect();
    let mut w = vec![h; n + 1];
    w[0] *= 0.5;
    w[n] *= 0.5;
    (x, w)
}

/// Box half-width where a Gaussian `e^{-rate·r²}` has fallen to `rel` of its peak.
pub fn gaussian_radius(rate: f64, rel: f64) -> f64 {
    (-rel.ln() / rate).sqrt()
}
