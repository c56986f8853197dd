//! The standard lattice `Γ = ℤⁿ × ℤⁿ × ½ℤ`, averaging, central Fourier sectors,
//! the invariant distributions `ν_j`, matrix coefficients and the Weil–Brezin transforms.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{check_dim, Error, Result};
use crate::heisenberg::{group_mul, GroupPoint};
use crate::hermite::HermiteCoeffs;
use crate::numerics::{
    contract, for_each_in_box, fourier_coefficient, lattice_sum_auto, shell_count, Grid, Interpolant, LatticeSum,
    SampledField,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Largest lattice radius any sum in this module may reach.
pub const MAX_RADIUS: usize = 400;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(f64::abs).fold(0.0, f64::max)
}

/// Dimension `n` and central index `k ≠ 0`; `λ = 4πk`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeParams {
    n: usize,
    k: i64,
}

impl LatticeParams {
    pub fn new(n: usize, k: i64) -> Result<LatticeParams> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be nonzero".into()));
        }
        Ok(LatticeParams { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        4.0 * PI * self.k as f64
    }

    /// `2|k|`, the order of each cyclic factor of `A_k`.
    pub fn modulus(&self) -> usize {
        2 * self.k.unsigned_abs() as usize
    }

    /// `A_k = {0, …, 2k−1}ⁿ`, lexicographic.
    pub fn index_set(&self) -> Vec<Vec<i64>> {
        let m = self.modulus();
        (0..m.pow(self.n as u32))
            .map(|mut flat| {
                let mut j = vec![0; self.n];
                for slot in j.iter_mut().rev() {
                    *slot = (flat % m) as i64;
                    flat /= m;
                }
                j
            })
            .collect()
    }

    /// `a = j / 2k`.
    pub fn shift(&self, j: &[i64]) -> Vec<f64> {
        j.iter().map(|&v| v as f64 / (2 * self.k) as f64).collect()
    }

    pub fn check_index(&self, j: &[i64]) -> Result<()> {
        check_dim(self.n, j.len())?;
        let m = self.modulus() as i64;
        if j.iter().any(|&v| v < 0 || v >= m) {
            return Err(Error::InvalidInput(format!("index {j:?} outside A_k for k = {}", self.k)));
        }
        Ok(())
    }
}

/// Certificate `|f(x + iy)| ≤ amp · e^{-rate |x − centre|² + im_growth |y|²}`, with `f = 0`
/// outside the sup-norm ball of radius `support` around `centre` when given.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDecay {
    pub amp: f64,
    pub rate: f64,
    pub centre: Vec<f64>,
    pub im_growth: f64,
    pub support: Option<f64>,
}

impl GaussianDecay {
    pub fn gaussian(amp: f64, rate: f64, centre: Vec<f64>) -> GaussianDecay {
        GaussianDecay {
            amp,
            rate,
            centre,
            im_growth: 0.0,
            support: None,
        }
    }

    /// Bound on `|e^{linear·|m|_∞} f(scale·m + offset + i·im)|` over the shell `|m|_∞ = r`.
    pub fn lattice_bound(&self, scale: f64, offset: &[f64], im: f64, linear: f64) -> impl Fn(usize) -> f64 {
        let s = sup(offset.iter().zip(&self.centre).map(|(o, c)| o - c));
        let amp = self.amp * (self.im_growth * im * im * offset.len() as f64).exp();
        let (rate, support) = (self.rate, self.support);
        move |r| {
            let d = (scale * r as f64 - s).max(0.0);
            if let Some(radius) = support {
                if d > radius {
                    return 0.0;
                }
            }
            amp * (linear * r as f64 - rate * d * d).exp()
        }
    }

    fn check_summable(&self, linear: bool) -> Result<()> {
        if self.support.is_none() && !(self.rate > 0.0) && (linear || self.rate < 0.0 || self.rate.is_nan()) {
            return Err(Error::InvalidInput(format!(
                "growth certificate with rate {} does not make the series converge",
                self.rate
            )));
        }
        Ok(())
    }
}

/// A function on `ℝⁿ` with a decay certificate.
pub trait DecayingFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> C64;
    fn decay(&self) -> GaussianDecay;
}

/// A decaying function with an entire extension to `ℂⁿ`; `decay().im_growth` bounds the
/// growth in imaginary directions.
pub trait EntireFunction: DecayingFunction {
    fn eval_complex(&self, z: &[C64]) -> C64;
}

/// One term `c · e^{-β|x − x₀|²} · e^{2πi ω·x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTerm {
    pub coeff: C64,
    pub beta: f64,
    pub centre: Vec<f64>,
    pub freq: Vec<f64>,
}

/// Finite sum of modulated Gaussians; closed under Fourier transform and affine change of variable.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    n: usize,
    terms: Vec<GaussianTerm>,
}

impl GaussianMixture {
    pub fn new(n: usize, terms: Vec<GaussianTerm>) -> Result<GaussianMixture> {
        for t in &terms {
            check_dim(n, t.centre.len())?;
            check_dim(n, t.freq.len())?;
            if !(t.beta > 0.0) {
                return Err(Error::InvalidInput(format!("Gaussian rate must be positive, got {}", t.beta)));
            }
        }
        Ok(GaussianMixture { n, terms })
    }

    /// `e^{-β|x − x₀|²}`.
    pub fn single(beta: f64, centre: Vec<f64>) -> GaussianMixture {
        let n = centre.len();
        GaussianMixture {
            n,
            terms: vec![GaussianTerm {
                coeff: C64::new(1.0, 0.0),
                beta,
                centre,
                freq: vec![0.0; n],
            }],
        }
    }

    pub fn terms(&self) -> &[GaussianTerm] {
        &self.terms
    }

    /// `f̂(η) = ∫ f(x) e^{-2πi x·η} dx`.
    pub fn fourier(&self) -> GaussianMixture {
        let n = self.n;
        let terms = self
            .terms
            .iter()
            .map(|t| GaussianTerm {
                coeff: t.coeff
                    * (PI / t.beta).powf(n as f64 / 2.0)
                    * C64::from_polar(1.0, 2.0 * PI * dot(&t.freq, &t.centre)),
                beta: PI * PI / t.beta,
                centre: t.freq.clone(),
                freq: t.centre.iter().map(|v| -v).collect(),
            })
            .collect();
        GaussianMixture { n, terms }
    }

    /// `s ↦ f(scale·s + shift)` for `scale ≠ 0`.
    pub fn affine(&self, scale: f64, shift: &[f64]) -> Result<GaussianMixture> {
        check_dim(self.n, shift.len())?;
        if scale == 0.0 {
            return Err(Error::InvalidParameter("scale must be nonzero".into()));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| GaussianTerm {
                coeff: t.coeff * C64::from_polar(1.0, 2.0 * PI * dot(&t.freq, shift)),
                beta: t.beta * scale * scale,
                centre: t.centre.iter().zip(shift).map(|(c, b)| (c - b) / scale).collect(),
                freq: t.freq.iter().map(|w| w * scale).collect(),
            })
            .collect();
        Ok(GaussianMixture { n: self.n, terms })
    }
}

impl DecayingFunction for GaussianMixture {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> C64 {
        self.terms
            .iter()
            .map(|t| {
                let r: f64 = x.iter().zip(&t.centre).map(|(a, b)| (a - b) * (a - b)).sum();
                t.coeff * C64::from_polar((-t.beta * r).exp(), 2.0 * PI * dot(&t.freq, x))
            })
            .sum()
    }

    /// Uses `|x − x₀|² ≥ ½|x|² − |x₀|²` and `2π|ω|y ≤ y² + π²|ω|²`.
    fn decay(&self) -> GaussianDecay {
        let mut amp = 0.0;
        let mut rate = f64::INFINITY;
        let mut growth: f64 = 0.0;
        for t in &self.terms {
            let c2 = dot(&t.centre, &t.centre);
            let w2 = dot(&t.freq, &t.freq);
            amp += t.coeff.norm() * (t.beta * c2 + PI * PI * w2 * self.n as f64).exp();
            rate = rate.min(t.beta / 2.0);
            growth = growth.max(t.beta + 1.0);
        }
        GaussianDecay {
            amp,
            rate: if rate.is_finite() { rate } else { 1.0 },
            centre: vec![0.0; self.n],
            im_growth: growth,
            support: None,
        }
    }
}

impl EntireFunction for GaussianMixture {
    fn eval_complex(&self, z: &[C64]) -> C64 {
        self.terms
            .iter()
            .map(|t| {
                let mut r = C64::new(0.0, 0.0);
                let mut ph = C64::new(0.0, 0.0);
                for i in 0..self.n {
                    let d = z[i] - t.centre[i];
                    r += d * d;
                    ph += t.freq[i] * z[i];
                }
                t.coeff * (-t.beta * r + 2.0 * PI * I * ph).exp()
            })
            .sum()
    }
}

/// A finite scaled-Hermite expansion with a sampled decay certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteFunction {
    coeffs: HermiteCoeffs,
    decay: GaussianDecay,
}

impl HermiteFunction {
    /// Certifies `|f(x)| ≤ amp·e^{-|λ||x|²/4}` by sampling `f(x)e^{|λ||x|²/4}` (times a safety factor 2).
    pub fn new(coeffs: HermiteCoeffs) -> Result<HermiteFunction> {
        let n = coeffs.n;
        let l = coeffs.lambda.abs();
        let rate = l / 4.0;
        let m = coeffs.max_degree() as f64;
        let radius = 3.0 * ((2.0 * m + n as f64 + 10.0) / l).sqrt();
        let per_axis = if n == 1 { 801 } else { 121 };
        let grid = Grid::cube(n, -radius, radius, per_axis, false)?;
        let mut amp: f64 = 0.0;
        for flat in 0..grid.len() {
            let x = grid.coords_of(flat);
            let v = coeffs.eval(&x)?.norm() * (rate * dot(&x, &x)).exp();
            amp = amp.max(v);
        }
        Ok(HermiteFunction {
            coeffs,
            decay: GaussianDecay {
                amp: 2.0 * amp,
                rate,
                centre: vec![0.0; n],
                im_growth: l,
                support: None,
            },
        })
    }

    /// The single basis function `Φ_α^λ`.
    pub fn basis(alpha: Vec<usize>, lambda: f64) -> Result<HermiteFunction> {
        let n = alpha.len();
        HermiteFunction::new(HermiteCoeffs::new(n, lambda)?.with(alpha, C64::new(1.0, 0.0))?)
    }

    pub fn coeffs(&self) -> &HermiteCoeffs {
        &self.coeffs
    }
}

impl DecayingFunction for HermiteFunction {
    fn dim(&self) -> usize {
        self.coeffs.n
    }

    fn eval(&self, x: &[f64]) -> C64 {
        self.coeffs.eval(x).unwrap_or(C64::new(f64::NAN, f64::NAN))
    }

    fn decay(&self) -> GaussianDecay {
        self.decay.clone()
    }
}

impl EntireFunction for HermiteFunction {
    fn eval_complex(&self, z: &[C64]) -> C64 {
        self.coeffs.eval_complex(z).unwrap_or(C64::new(f64::NAN, f64::NAN))
    }
}

/// A closure on `ℝⁿ` with a caller-supplied certificate.
pub struct FnFunction<F> {
    pub dim: usize,
    pub f: F,
    pub decay: GaussianDecay,
}

impl<F: Fn(&[f64]) -> C64 + Sync> DecayingFunction for FnFunction<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> C64 {
        (self.f)(x)
    }

    fn decay(&self) -> GaussianDecay {
        self.decay.clone()
    }
}

/// A sampled function, interpolated trigonometrically inside its box and zero outside.
pub struct FieldFunction {
    field: SampledField,
    interp: Interpolant,
}

impl FieldFunction {
    pub fn new(field: SampledField) -> FieldFunction {
        let interp = field.interpolant();
        FieldFunction { field, interp }
    }

    pub fn field(&self) -> &SampledField {
        &self.field
    }
}

impl DecayingFunction for FieldFunction {
    fn dim(&self) -> usize {
        self.field.grid().dim()
    }

    fn eval(&self, x: &[f64]) -> C64 {
        let g = self.field.grid();
        let inside = (0..g.dim()).all(|i| x[i] >= g.lo()[i] && x[i] < g.hi()[i]);
        if inside {
            self.interp.eval(x)
        } else {
            C64::new(0.0, 0.0)
        }
    }

    fn decay(&self) -> GaussianDecay {
        let g = self.field.grid();
        let centre: Vec<f64> = (0..g.dim()).map(|i| 0.5 * (g.lo()[i] + g.hi()[i])).collect();
        let radius = (0..g.dim()).map(|i| 0.5 * (g.hi()[i] - g.lo()[i])).fold(0.0, f64::max);
        GaussianDecay {
            amp: self.field.max_abs(),
            rate: 0.0,
            centre,
            im_growth: 0.0,
            support: Some(radius),
        }
    }
}

/// `G` sampled on the cell `[0,1)ⁿ × [0,1)ⁿ`, obeying `G(x+m, u+n) = e^{2πik(u·m − x·n)} G(x,u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorFunction {
    params: LatticeParams,
    field: SampledField,
}

/// The cell `[0,1)^{2n}` with `points` nodes per axis, integrated by the rectangle rule.
pub fn cell_grid(n: usize, points: usize) -> Result<Grid> {
    Grid::cube(2 * n, 0.0, 1.0, points, true)
}

/// The fundamental domain `[0,1)ⁿ × [0,1)ⁿ × [0,½)`.
pub fn manifold_grid(n: usize, points_xu: usize, points_xi: usize) -> Result<Grid> {
    let mut hi = vec![1.0; 2 * n];
    hi.push(0.5);
    let mut pts = vec![points_xu; 2 * n];
    pts.push(points_xi);
    Grid::new(vec![0.0; 2 * n + 1], hi, pts, vec![true; 2 * n + 1])
}

/// `e^{2πik(u·m − x·n)}`, the factor relating `G(x+m, u+n)` to `G(x, u)`.
pub fn quasi_periodic_factor(k: i64, x: &[C64], u: &[C64], m: &[i64], nn: &[i64]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..x.len() {
        s += u[i] * m[i] as f64 - x[i] * nn[i] as f64;
    }
    (2.0 * PI * k as f64 * I * s).exp()
}

/// `max |G(z+m, w+n) − e^{2πik(w·m − z·n)} G(z,w)|` over the sample points and unit shifts.
pub fn quasi_periodicity_residual(
    k: i64,
    g: &dyn Fn(&[C64], &[C64]) -> C64,
    samples: &[(Vec<C64>, Vec<C64>)],
) -> f64 {
    let mut worst: f64 = 0.0;
    for (z, w) in samples {
        let n = z.len();
        let base = g(z, w);
        for axis in 0..2 * n {
            let mut m = vec![0; n];
            let mut nn = vec![0; n];
            if axis < n {
                m[axis] = 1;
            } else {
                nn[axis - n] = 1;
            }
            let zs: Vec<C64> = z.iter().zip(&m).map(|(a, &b)| a + b as f64).collect();
            let ws: Vec<C64> = w.iter().zip(&nn).map(|(a, &b)| a + b as f64).collect();
            let lhs = g(&zs, &ws);
            let rhs = quasi_periodic_factor(k, z, w, &m, &nn) * base;
            worst = worst.max((lhs - rhs).norm());
        }
    }
    worst
}

impl SectorFunction {
    pub fn new(params: LatticeParams, field: SampledField) -> Result<SectorFunction> {
        let g = field.grid();
        check_dim(2 * params.n(), g.dim())?;
        let ok = (0..g.dim()).all(|i| g.lo()[i] == 0.0 && g.hi()[i] == 1.0 && g.is_periodic(i));
        if !ok {
            return Err(Error::InvalidInput("sector functions live on the periodic cell [0,1)^{2n}".into()));
        }
        Ok(SectorFunction { params, field })
    }

    /// Samples `(x,u) ↦ g(x,u)` on the cell; `g` should obey the sector law.
    pub fn from_fn(params: LatticeParams, points: usize, g: impl Fn(&[f64], &[f64]) -> C64) -> Result<SectorFunction> {
        let n = params.n();
        let field = SampledField::from_fn(cell_grid(n, points)?, |v| g(&v[..n], &v[n..]));
        SectorFunction::new(params, field)
    }

    pub fn params(&self) -> LatticeParams {
        self.params
    }

    pub fn field(&self) -> &SampledField {
        &self.field
    }

    /// Quasi-periodic extension to the box `[−R, 1+R)^{2n}` (non-periodic grid, same spacing).
    pub fn unfold(&self, radius: usize) -> Result<SampledField> {
        unfold_cell(&self.field, self.params.k(), radius)
    }
}

/// Extends a field on the periodic cell `[0,1)^{2n}` to `[−R, 1+R)^{2n}` by the sector-`k`
/// law; `k = 0` is plain periodic tiling.
pub fn unfold_cell(field: &SampledField, k: i64, radius: usize) -> Result<SampledField> {
    let g = field.grid();
    let d = g.dim();
    if d % 2 != 0 || (0..d).any(|i| g.lo()[i] != 0.0 || g.hi()[i] != 1.0 || !g.is_periodic(i)) {
        return Err(Error::InvalidInput("unfolding needs a field on the periodic cell [0,1)^{2n}".into()));
    }
    let n = d / 2;
    let r = radius as f64;
    let pts: Vec<usize> = g.points().iter().map(|p| p * (2 * radius + 1)).collect();
    let big = Grid::new(vec![-r; d], vec![1.0 + r; d], pts, vec![false; d])?;
    let strides = g.strides();
    let k = k as f64;
    let mut values = Vec::with_capacity(big.len());
    for flat in 0..big.len() {
        let idx = big.multi_index(flat);
        let mut cell_flat = 0;
        let mut lat = vec![0i64; d];
        let mut local = vec![0.0; d];
        for i in 0..d {
            let p = g.points()[i];
            let shifted = idx[i] as i64 - (radius * p) as i64;
            let cell = shifted.div_euclid(p as i64);
            let j = shifted.rem_euclid(p as i64) as usize;
            lat[i] = cell;
            local[i] = j as f64 / p as f64;
            cell_flat += j * strides[i];
        }
        let (x, u) = local.split_at(n);
        let (m, nn) = lat.split_at(n);
        let s: f64 = (0..n).map(|i| u[i] * m[i] as f64 - x[i] * nn[i] as f64).sum();
        values.push(C64::from_polar(1.0, 2.0 * PI * k * s) * field.values()[cell_flat]);
    }
    SampledField::new(big, values)
}

/// A function on `Γ\ℍ`, sampled on the fundamental domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldFunction {
    n: usize,
    field: SampledField,
}

impl ManifoldFunction {
    pub fn new(n: usize, field: SampledField) -> Result<ManifoldFunction> {
        let g = field.grid();
        check_dim(2 * n + 1, g.dim())?;
        let want = manifold_grid(n, 1, 1)?;
        let ok = (0..g.dim()).all(|i| g.lo()[i] == want.lo()[i] && g.hi()[i] == want.hi()[i] && g.is_periodic(i));
        if !ok {
            return Err(Error::InvalidInput("manifold functions live on [0,1)^{2n} x [0,1/2)".into()));
        }
        Ok(ManifoldFunction { n, field })
    }

    pub fn from_fn(
        n: usize,
        points_xu: usize,
        points_xi: usize,
        f: impl Fn(&GroupPoint) -> C64,
    ) -> Result<ManifoldFunction> {
        let grid = manifold_grid(n, points_xu, points_xi)?;
        let field = SampledField::from_fn(grid, |v| {
            f(&GroupPoint {
                x: v[..n].to_vec(),
                u: v[n..2 * n].to_vec(),
                xi: v[2 * n],
            })
        });
        ManifoldFunction::new(n, field)
    }

    /// `e^{4πikξ} G(x,u)` on `points_xi` central nodes.
    pub fn from_sector(s: &SectorFunction, points_xi: usize) -> Result<ManifoldFunction> {
        let n = s.params().n();
        let k = s.params().k() as f64;
        let cg = s.field().grid();
        let grid = manifold_grid(n, cg.points()[0], points_xi)?;
        if cg.points().iter().any(|&p| p != cg.points()[0]) {
            return Err(Error::InvalidInput("sector field must have equal resolution on every axis".into()));
        }
        let mut values = Vec::with_capacity(grid.len());
        for &g in s.field().values() {
            for l in 0..points_xi {
                let xi = 0.5 * l as f64 / points_xi as f64;
                values.push(g * C64::from_polar(1.0, 4.0 * PI * k * xi));
            }
        }
        ManifoldFunction::new(n, SampledField::new(grid, values)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self) -> &SampledField {
        &self.field
    }
}

/// `L²` norm over the fundamental domain with Lebesgue measure.
pub fn manifold_norm(f: &ManifoldFunction) -> f64 {
    f.field.l2_norm()
}

pub fn manifold_inner(f: &ManifoldFunction, g: &ManifoldFunction) -> Result<C64> {
    f.field.inner(&g.field)
}

/// `F^k(x,u) = 2 ∫_0^{1/2} F(x,u,ξ) e^{-4πikξ} dξ`, on the cell grid.
pub fn sector_project(f: &ManifoldFunction, k: i64) -> Result<SampledField> {
    fourier_coefficient(&f.field, &[2 * f.n], &[k])
}

/// `γ·g` for `γ = (a, b, c/2)`.
pub fn lattice_act(a: &[i64], b: &[i64], c: i64, g: &GroupPoint) -> Result<GroupPoint> {
    let gamma = GroupPoint::new(
        a.iter().map(|&v| v as f64).collect(),
        b.iter().map(|&v| v as f64).collect(),
        c as f64 / 2.0,
    )?;
    group_mul(&gamma, g)
}

/// Certificate `|F(x,u,ξ)| ≤ amp · e^{-rate_xu (|x|² + |u|²) − rate_xi |ξ|}` for a function on `ℍ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeisenbergDecay {
    pub amp: f64,
    pub rate_xu: f64,
    pub rate_xi: f64,
}

impl HeisenbergDecay {
    /// `sup_κ Σ_c e^{-rate_xi |c/2 + κ|}`: nodes spaced by ½ on either side of the peak.
    fn central_mass(&self) -> f64 {
        1.0 + 2.0 / (1.0 - (-self.rate_xi / 2.0).exp())
    }
}

/// `A(F)(Γg) = Σ_{γ∈Γ} F(γg)` with a certified tail below `tol`.
///
/// Planar translates `(a, b)` form the outer sum; for each, the central translates `c`
/// are summed with their own certified tail.
pub fn average(
    f: &dyn Fn(&GroupPoint) -> C64,
    decay: &HeisenbergDecay,
    g: &GroupPoint,
    tol: f64,
) -> Result<LatticeSum> {
    let n = g.n();
    if !(decay.rate_xi > 0.0) || !(decay.rate_xu > 0.0) {
        return Err(Error::InvalidInput("averaging needs positive decay rates".into()));
    }
    let d = sup(g.x.iter().chain(&g.u).copied());
    let mass = decay.central_mass();
    let planar = move |s: usize| decay.amp * mass * (-decay.rate_xu * (s as f64 - d).max(0.0).powi(2)).exp();
    let outer_radius = crate::numerics::radius_for(2 * n, &planar, tol / 2.0, MAX_RADIUS)?;
    let outer_tail = crate::numerics::tail_estimate(2 * n, &planar, outer_radius);
    let count = (2 * outer_radius + 1).pow(2 * n as u32) as f64;
    let inner_tol = tol / (2.0 * count);
    let mut value = C64::new(0.0, 0.0);
    let mut tail = outer_tail;
    let mut radius = outer_radius;
    let mut err = None;
    for_each_in_box(2 * n, outer_radius as i64, |ab| {
        if err.is_some() {
            return;
        }
        let (a, b) = ab.split_at(n);
        let base = match lattice_act(a, b, 0, g) {
            Ok(p) => p,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        let r2: f64 = base.x.iter().chain(&base.u).map(|v| v * v).sum();
        let amp = decay.amp * (-decay.rate_xu * r2).exp();
        let kappa = base.xi.abs();
        let rate = decay.rate_xi;
        let bound = move |c: usize| amp * (-rate * (c as f64 / 2.0 - kappa).max(0.0)).exp();
        let mut p = base.clone();
        match lattice_sum_auto(
            1,
            |c| {
                p.xi = base.xi + c[0] as f64 / 2.0;
                f(&p)
            },
            &bound,
            inner_tol,
            100 * MAX_RADIUS,
        ) {
            Ok(s) => {
                value += s.value;
                tail += s.tail;
                radius = radius.max(s.radius);
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(LatticeSum { value, tail, radius })
}

/// `Σ_{a,b} e^{i(λ/2)(u·a − x·b)} f(x+a, u+b)` for arbitrary `λ` (`λ = 0` is plain periodisation).
pub fn twisted_average_at(lambda: f64, f: &dyn DecayingFunction, x: &[f64], u: &[f64], tol: f64) -> Result<LatticeSum> {
    let n = x.len();
    check_dim(n, u.len())?;
    check_dim(2 * n, f.dim())?;
    let decay = f.decay();
    decay.check_summable(false)?;
    let offset: Vec<f64> = x.iter().chain(u).copied().collect();
    let bound = decay.lattice_bound(1.0, &offset, 0.0, 0.0);
    let mut arg = vec![0.0; 2 * n];
    lattice_sum_auto(
        2 * n,
        |ab| {
            let (a, b) = ab.split_at(n);
            let mut phase = 0.0;
            for i in 0..n {
                arg[i] = x[i] + a[i] as f64;
                arg[n + i] = u[i] + b[i] as f64;
                phase += u[i] * a[i] as f64 - x[i] * b[i] as f64;
            }
            C64::from_polar(1.0, 0.5 * lambda * phase) * f.eval(&arg)
        },
        &bound,
        tol,
        MAX_RADIUS,
    )
}

/// Twisted average landing in sector `k`.
///
/// With the phase `e^{i(λ/2)(u·a − x·b)}` the sector law `G(x+m,u+n) = e^{2πik(u·m−x·n)}G`
/// holds for `λ = −4πk`, which is the frequency used here.
pub fn twisted_average(params: LatticeParams, f: &dyn DecayingFunction, points: usize, tol: f64) -> Result<SectorFunction> {
    let n = params.n();
    let grid = cell_grid(n, points)?;
    let lambda = -params.lambda();
    let mut values = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        let c = grid.coords_of(flat);
        values.push(twisted_average_at(lambda, f, &c[..n], &c[n..], tol)?.value);
    }
    SectorFunction::new(params, SampledField::new(grid, values)?)
}

/// Which side of the Poisson duality evaluates `(ν_j, f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingForm {
    /// `Σ_m f̂(2km + j)`.
    FourierSide,
    /// `(2k)^{-n} Σ_m e^{-(πi/k) m·j} f(m/2k)`.
    PoissonSide,
}

/// `f̂(η) = ∫ f(x) e^{-2πi x·η} dx` by quadrature on the field's grid.
pub fn fourier_transform_at(f: &SampledField, eta: &[f64]) -> Result<C64> {
    let g = f.grid();
    check_dim(g.dim(), eta.len())?;
    let factors: Vec<Vec<C64>> = (0..g.dim())
        .map(|i| {
            g.axis_coords(i)
                .iter()
                .zip(g.axis_weights(i))
                .map(|(&x, w)| C64::from_polar(w, -2.0 * PI * x * eta[i]))
                .collect()
        })
        .collect();
    Ok(contract(f.values(), g.points(), &factors))
}

/// `(ν_j, f)` for a field sampled on a box.
///
/// The Fourier side sums shells of frequencies until two consecutive shells fall below
/// `tol` and fails if the grid's Nyquist frequency is reached first; the Poisson side
/// is a finite sum since the sampled `f` vanishes outside its box.
pub fn nu_pair(params: LatticeParams, j: &[i64], f: &SampledField, form: PairingForm, tol: f64) -> Result<LatticeSum> {
    params.check_index(j)?;
    let n = params.n();
    check_dim(n, f.grid().dim())?;
    let k2 = (2 * params.k()) as f64;
    match form {
        PairingForm::FourierSide => {
            let nyquist = (0..n).map(|i| 0.5 / f.grid().spacing(i)).fold(f64::INFINITY, f64::min);
            let mut value = C64::new(0.0, 0.0);
            let mut quiet = 0;
            let mut last = 0.0;
            for r in 0..=MAX_RADIUS {
                let mut shell = 0.0;
                let mut reached = false;
                let mut err = None;
                for_each_in_box(n, r as i64, |m| {
                    if m.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0) != r {
                        return;
                    }
                    let eta: Vec<f64> = m.iter().zip(j).map(|(&mi, &ji)| k2 * mi as f64 + ji as f64).collect();
                    if sup(eta.iter().copied()) >= nyquist {
                        reached = true;
                    }
                    match fourier_transform_at(f, &eta) {
                        Ok(v) => {
                            shell += v.norm();
                            value += v;
                        }
                        Err(e) => err = Some(e),
                    }
                });
                if let Some(e) = err {
                    return Err(e);
                }
                if shell < tol {
                    quiet += 1;
                } else {
                    quiet = 0;
                }
                last = shell;
                if quiet >= 2 {
                    return Ok(LatticeSum {
                        value,
                        tail: last,
                        radius: r,
                    });
                }
                if reached {
                    return Err(Error::NonConvergence { tail: shell, radius: r });
                }
            }
            Err(Error::NonConvergence {
                tail: last,
                radius: MAX_RADIUS,
            })
        }
        PairingForm::PoissonSide => {
            let g = f.grid();
            let interp = f.interpolant();
            let mut radius = 0;
            let mut lo = vec![0i64; n];
            let mut hi = vec![0i64; n];
            for i in 0..n {
                lo[i] = (g.lo()[i] * k2).ceil() as i64;
                hi[i] = ((g.hi()[i] - g.spacing(i)) * k2).floor() as i64;
                radius = radius.max(lo[i].unsigned_abs() as usize).max(hi[i].unsigned_abs() as usize);
            }
            let mut value = C64::new(0.0, 0.0);
            let jf: Vec<f64> = j.iter().map(|&v| v as f64).collect();
            for_each_in_box(n, radius as i64, |m| {
                if (0..n).any(|i| m[i] < lo[i] || m[i] > hi[i]) {
                    return;
                }
                let x: Vec<f64> = m.iter().map(|&v| v as f64 / k2).collect();
                let phase = -PI / params.k() as f64 * dot(&m.iter().map(|&v| v as f64).collect::<Vec<_>>(), &jf);
                value += C64::from_polar(1.0, phase) * sample_at(f, &interp, &x);
            });
            Ok(LatticeSum {
                value: value * k2.powi(-(n as i32)),
                tail: 0.0,
                radius,
            })
        }
    }
}

/// Exact node value when `x` is a grid node, interpolated otherwise.
fn sample_at(f: &SampledField, interp: &Interpolant, x: &[f64]) -> C64 {
    let g = f.grid();
    let mut flat = 0;
    let strides = g.strides();
    for i in 0..g.dim() {
        let pos = (x[i] - g.lo()[i]) / g.spacing(i);
        let idx = pos.round();
        if (pos - idx).abs() > 1e-9 || idx < 0.0 || idx as usize >= g.points()[i] {
            return interp.eval(x);
        }
        flat += idx as usize * strides[i];
    }
    f.values()[flat]
}

/// `(2k)^{-n} Σ_m e^{-(πi/k) m·j} f(m/2k)` for a function with a decay certificate.
pub fn nu_pair_poisson(params: LatticeParams, j: &[i64], f: &dyn DecayingFunction, tol: f64) -> Result<LatticeSum> {
    params.check_index(j)?;
    let n = params.n();
    check_dim(n, f.dim())?;
    let decay = f.decay();
    decay.check_summable(false)?;
    let k2 = (2 * params.k()) as f64;
    let scale = k2.powi(-(n as i32));
    let bound = decay.lattice_bound(1.0 / k2.abs(), &vec![0.0; n], 0.0, 0.0);
    let scaled = |r: usize| bound(r) * scale.abs();
    let mut x = vec![0.0; n];
    let mut r = lattice_sum_auto(
        n,
        |m| {
            let mut s = 0.0;
            for i in 0..n {
                x[i] = m[i] as f64 / k2;
                s += (m[i] * j[i]) as f64;
            }
            C64::from_polar(1.0, -PI / params.k() as f64 * s) * f.eval(&x)
        },
        &scaled,
        tol / scale.abs(),
        MAX_RADIUS,
    )?;
    r.value *= scale;
    r.tail *= scale.abs();
    Ok(r)
}

/// `(ν_j, ρ_k(g) f) = (2k)^{-n} e^{4πikξ} e^{2πik x·u} Σ_m e^{-(πi/k)m·j} e^{2πi x·m} f(m/2k + u)`.
pub fn matrix_coefficient(
    params: LatticeParams,
    j: &[i64],
    f: &dyn DecayingFunction,
    g: &GroupPoint,
    tol: f64,
) -> Result<LatticeSum> {
    params.check_index(j)?;
    let n = params.n();
    check_dim(n, f.dim())?;
    check_dim(n, g.n())?;
    let decay = f.decay();
    decay.check_summable(false)?;
    let k = params.k() as f64;
    let k2 = 2.0 * k;
    let scale = k2.abs().powi(-(n as i32));
    let bound = decay.lattice_bound(1.0 / k2.abs(), &g.u, 0.0, 0.0);
    let scaled = |r: usize| bound(r) * scale;
    let mut arg = vec![0.0; n];
    let mut r = lattice_sum_auto(
        n,
        |m| {
            let mut phase = 0.0;
            for i in 0..n {
                let mi = m[i] as f64;
                arg[i] = mi / k2 + g.u[i];
                phase += -PI / k * mi * j[i] as f64 + 2.0 * PI * g.x[i] * mi;
            }
            C64::from_polar(1.0, phase) * f.eval(&arg)
        },
        &scaled,
        tol / scale,
        MAX_RADIUS,
    )?;
    let outer = 4.0 * PI * k * g.xi + 2.0 * PI * k * dot(&g.x, &g.u);
    r.value *= C64::from_polar(scale, outer);
    r.tail *= scale;
    Ok(r)
}

/// [`matrix_coefficient`] sampled on the fundamental domain.
///
/// For each `u` node the coefficients `e^{-(πi/k)m·j} f(m/2k + u)` are computed once and
/// reused for every `x` and `ξ` node.
pub fn matrix_coefficient_field(
    params: LatticeParams,
    j: &[i64],
    f: &dyn DecayingFunction,
    points_xu: usize,
    points_xi: usize,
    tol: f64,
) -> Result<ManifoldFunction> {
    params.check_index(j)?;
    let n = params.n();
    check_dim(n, f.dim())?;
    let decay = f.decay();
    decay.check_summable(false)?;
    let grid = manifold_grid(n, points_xu, points_xi)?;
    let cell = Grid::cube(n, 0.0, 1.0, points_xu, true)?;
    let k = params.k() as f64;
    let k2 = 2.0 * k;
    let scale = k2.abs().powi(-(n as i32));
    let per_half = cell.len();
    let mut values = vec![C64::new(0.0, 0.0); grid.len()];
    for ui in 0..per_half {
        let u = cell.coords_of(ui);
        let bound = decay.lattice_bound(1.0 / k2.abs(), &u, 0.0, 0.0);
        let scaled = |r: usize| bound(r) * scale;
        let radius = crate::numerics::radius_for(n, &scaled, tol, MAX_RADIUS)?;
        let mut terms: Vec<(Vec<f64>, C64)> = Vec::new();
        let mut arg = vec![0.0; n];
        for_each_in_box(n, radius as i64, |m| {
            let mut phase = 0.0;
            for i in 0..n {
                arg[i] = m[i] as f64 / k2 + u[i];
                phase -= PI / k * (m[i] * j[i]) as f64;
            }
            terms.push((m.iter().map(|&v| v as f64).collect(), C64::from_polar(1.0, phase) * f.eval(&arg)));
        });
        for xi_flat in 0..per_half {
            let x = cell.coords_of(xi_flat);
            let sum: C64 = terms
                .iter()
                .map(|(m, cm)| cm * C64::from_polar(1.0, 2.0 * PI * dot(&x, m)))
                .sum();
            let base = sum * C64::from_polar(scale, 2.0 * PI * k * dot(&x, &u));
            let offset = (xi_flat * per_half + ui) * points_xi;
            for l in 0..points_xi {
                let xi = 0.5 * l as f64 / points_xi as f64;
                values[offset + l] = base * C64::from_polar(1.0, 4.0 * PI * k * xi);
            }
        }
    }
    ManifoldFunction::new(n, SampledField::new(grid, values)?)
}

/// `V_k f(x,u,ξ) = e^{4πikξ} e^{2πik x·u} Σ_m e^{4πik m·x} f(u+m)`.
pub fn weil_brezin(params: LatticeParams, f: &dyn DecayingFunction, g: &GroupPoint, tol: f64) -> Result<LatticeSum> {
    weil_brezin_j(params, &vec![0; params.n()], f, g, tol)
}

/// `V_{k,j} f = e^{2πi j·x} V_k f`.
pub fn weil_brezin_j(
    params: LatticeParams,
    j: &[i64],
    f: &dyn DecayingFunction,
    g: &GroupPoint,
    tol: f64,
) -> Result<LatticeSum> {
    params.check_index(j)?;
    let n = params.n();
    check_dim(n, f.dim())?;
    check_dim(n, g.n())?;
    let decay = f.decay();
    decay.check_summable(false)?;
    let k = params.k() as f64;
    let bound = decay.lattice_bound(1.0, &g.u, 0.0, 0.0);
    let mut arg = vec![0.0; n];
    let mut r = lattice_sum_auto(
        n,
        |m| {
            let mut phase = 0.0;
            for i in 0..n {
                arg[i] = g.u[i] + m[i] as f64;
                phase += 4.0 * PI * k * m[i] as f64 * g.x[i];
            }
            C64::from_polar(1.0, phase) * f.eval(&arg)
        },
        &bound,
        tol,
        MAX_RADIUS,
    )?;
    let jx: f64 = j.iter().zip(&g.x).map(|(&a, b)| a as f64 * b).sum();
    let outer = 4.0 * PI * k * g.xi + 2.0 * PI * k * dot(&g.x, &g.u) + 2.0 * PI * jx;
    r.value *= C64::from_polar(1.0, outer);
    Ok(r)
}

/// `Ṽ_{k,j}F(z,w,ζ) = e^{iλζ} e^{iλa·z} e^{i(λ/2)z·w} Σ_m e^{iλz·m} F(w+m)` with `a = j/2k`.
pub fn weil_brezin_complex(
    params: LatticeParams,
    j: &[i64],
    f: &dyn EntireFunction,
    p: &crate::heisenberg::CGroupPoint,
    tol: f64,
) -> Result<LatticeSum> {
    params.check_index(j)?;
    let n = params.n();
    check_dim(n, f.dim())?;
    check_dim(n, p.n())?;
    let decay = f.decay();
    decay.check_summable(true)?;
    let lambda = params.lambda();
    let a = params.shift(j);
    let re_w: Vec<f64> = p.w.iter().map(|v| v.re).collect();
    let im_w = sup(p.w.iter().map(|v| v.im));
    let linear = lambda.abs() * p.z.iter().map(|v| v.im.abs()).sum::<f64>();
    let bound = decay.lattice_bound(1.0, &re_w, im_w, linear);
    let mut arg = vec![C64::new(0.0, 0.0); n];
    let mut r = lattice_sum_auto(
        n,
        |m| {
            let mut phase = C64::new(0.0, 0.0);
            for i in 0..n {
                arg[i] = p.w[i] + m[i] as f64;
                phase += p.z[i] * m[i] as f64;
            }
            (I * lambda * phase).exp() * f.eval_complex(&arg)
        },
        &bound,
        tol,
        MAX_RADIUS,
    )?;
    let az: C64 = a.iter().zip(&p.z).map(|(ai, zi)| zi * *ai).sum();
    let outer = I * lambda * (p.zeta + az + 0.5 * cdot(&p.z, &p.w));
    r.value *= outer.exp();
    Ok(r)
}

/// Number of lattice points in the sup-norm shell of radius `r` (re-exported for bounds).
pub fn lattice_shell(dim: usize, r: usize) -> f64 {
    shell_count(dim, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg::{heat_kernel_real, CGroupPoint};
    use crate::numerics::integrate;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn std_gaussian() -> GaussianMixture {
        GaussianMixture::single(PI, vec![0.0])
    }

    #[test]
    fn lattice_params_index_set() {
        let p = LatticeParams::new(2, 1).unwrap();
        assert_eq!(p.index_set(), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(LatticeParams::new(1, 2).unwrap().index_set().len(), 4);
        assert_eq!(LatticeParams::new(1, -2).unwrap().index_set().len(), 4);
        assert!(LatticeParams::new(1, 0).is_err());
        assert_eq!(p.shift(&[1, 0]), vec![0.5, 0.0]);
        assert!(p.check_index(&[2, 0]).is_err());
    }

    #[test]
    fn gaussian_mixture_fourier_matches_quadrature() {
        let f = GaussianMixture::new(
            1,
            vec![GaussianTerm {
                coeff: c(0.8, 0.3),
                beta: 1.7,
                centre: vec![0.4],
                freq: vec![-0.6],
            }],
        )
        .unwrap();
        let grid = Grid::cube(1, -12.0, 12.0, 512, false).unwrap();
        let field = SampledField::from_fn(grid, |x| f.eval(x));
        let fh = f.fourier();
        for &eta in &[0.0, 0.7, -1.3] {
            let q = fourier_transform_at(&field, &[eta]).unwrap();
            assert!((q - fh.eval(&[eta])).norm() < 1e-12);
        }
        let g = f.affine(2.0, &[0.3]).unwrap();
        for &s in &[0.0, 0.2, -0.5] {
            assert!((g.eval(&[s]) - f.eval(&[2.0 * s + 0.3])).norm() < 1e-14);
        }
        let z = [c(0.3, 0.2)];
        assert!((f.eval_complex(&[c(0.3, 0.0)]) - f.eval(&[0.3])).norm() < 1e-14);
        let d = f.decay();
        let bound = d.amp * (-d.rate * 0.09 + d.im_growth * 0.04).exp();
        assert!(f.eval_complex(&z).norm() <= bound);
    }

    #[test]
    fn hermite_function_certificate_holds() {
        let h = HermiteFunction::basis(vec![3], 4.0 * PI).unwrap();
        let d = h.decay();
        for i in -200..200 {
            let x = i as f64 * 0.02;
            assert!(h.eval(&[x]).norm() <= d.amp * (-d.rate * x * x).exp());
        }
    }

    #[test]
    fn nu_pair_reference_value() {
        let want: f64 = (-50..=50).map(|m| (-4.0 * PI * (m * m) as f64).exp()).sum();
        assert_relative_eq!(want, 1.0000070, epsilon = 1e-7);
        let params = LatticeParams::new(1, 1).unwrap();
        let grid = Grid::cube(1, -8.0, 8.0, 512, false).unwrap();
        let f = SampledField::from_real_fn(grid, |x| (-PI * x[0] * x[0]).exp());
        let a = nu_pair(params, &[0], &f, PairingForm::FourierSide, 1e-15).unwrap();
        let b = nu_pair(params, &[0], &f, PairingForm::PoissonSide, 1e-15).unwrap();
        assert!((a.value - want).norm() < 1e-12);
        assert!((a.value - b.value).norm() < 1e-10);
        let half: f64 = 0.5 * (-50..=50).map(|m| (-PI * (m * m) as f64 / 4.0).exp()).sum::<f64>();
        assert!((b.value - half).norm() < 1e-12);
        let p = nu_pair_poisson(params, &[0], &std_gaussian(), 1e-15).unwrap();
        assert!((p.value - want).norm() < 1e-12);
    }

    #[test]
    fn nu_pair_fourier_side_reports_nyquist() {
        let params = LatticeParams::new(1, 1).unwrap();
        // a narrow spike has a wide spectrum that the coarse grid cannot resolve
        let grid = Grid::cube(1, -4.0, 4.0, 32, false).unwrap();
        let f = SampledField::from_real_fn(grid, |x| (-40.0 * x[0] * x[0]).exp());
        assert!(matches!(
            nu_pair(params, &[0], &f, PairingForm::FourierSide, 1e-14),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn nu_pair_translation_eigenrelation() {
        for k in [1, 2] {
            let params = LatticeParams::new(1, k).unwrap();
            for j in params.index_set() {
                let base = GaussianMixture::single(2.0, vec![0.15]);
                let x0 = 1.0 / (2 * k) as f64;
                let moved = base.affine(1.0, &[x0]).unwrap();
                let a = nu_pair_poisson(params, &j, &base, 1e-15).unwrap().value;
                let b = nu_pair_poisson(params, &j, &moved, 1e-15).unwrap().value;
                let eig = C64::from_polar(1.0, PI / k as f64 * j[0] as f64);
                assert!((b - eig * a).norm() < 1e-12, "k {k} j {j:?}");
            }
        }
    }

    #[test]
    fn matrix_coefficient_reference_and_xi_factor() {
        let params = LatticeParams::new(1, 1).unwrap();
        let phi0 = HermiteFunction::basis(vec![0], 1.0).unwrap();
        let v = matrix_coefficient(params, &[0], &phi0, &GroupPoint::identity(1), 1e-14).unwrap();
        let want = 0.5 * PI.powf(-0.25) * (-60..=60).map(|m| (-((m * m) as f64) / 8.0).exp()).sum::<f64>();
        assert!((v.value - want).norm() < 1e-12);
        assert!((v.value.re - 1.88).abs() < 0.01);
        let g = GroupPoint::new(vec![0.3], vec![-0.2], 0.0).unwrap();
        let g2 = GroupPoint::new(vec![0.3], vec![-0.2], 0.17).unwrap();
        let a = matrix_coefficient(params, &[1], &phi0, &g, 1e-14).unwrap().value;
        let b = matrix_coefficient(params, &[1], &phi0, &g2, 1e-14).unwrap().value;
        assert!((b - C64::from_polar(1.0, 4.0 * PI * 0.17) * a).norm() < 1e-13);
    }

    #[test]
    fn matrix_coefficient_equals_pairing_of_translate() {
        for k in [1i64, 2] {
            let params = LatticeParams::new(1, k).unwrap();
            let lambda = params.lambda();
            let grid = Grid::cube(1, -16.0, 16.0, 2048, false).unwrap();
            let f = GaussianMixture::single(1.3, vec![0.2]);
            let phi = SampledField::from_fn(grid, |x| f.eval(x));
            for i in 0..10 {
                let s = i as f64;
                let g = GroupPoint::new(vec![0.9 * (1.3 * s).sin()], vec![0.7 * (0.7 * s).cos()], 0.3 * s.sin()).unwrap();
                let moved = crate::heisenberg::schrodinger_apply(lambda, &g, &phi).unwrap().value;
                for j in params.index_set() {
                    let a = nu_pair(params, &j, &moved, PairingForm::PoissonSide, 1e-14).unwrap().value;
                    let b = matrix_coefficient(params, &j, &f, &g, 1e-14).unwrap().value;
                    assert!((a - b).norm() < 1e-8, "k {k} j {j:?} point {i}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn matrix_coefficient_is_weil_brezin_of_fourier_samples() {
        for k in [1i64, 2] {
            let params = LatticeParams::new(1, k).unwrap();
            let f = GaussianMixture::new(
                1,
                vec![GaussianTerm {
                    coeff: c(1.0, 0.5),
                    beta: 2.0,
                    centre: vec![0.3],
                    freq: vec![0.25],
                }],
            )
            .unwrap();
            let fh = f.fourier();
            for j in params.index_set() {
                let gj = fh.affine((2 * k) as f64, &[j[0] as f64]).unwrap();
                for i in 0..20 {
                    let s = i as f64;
                    let (x, u, xi) = ((1.7 * s).sin(), (0.9 * s).cos() * 1.3, 0.4 * (2.1 * s).sin());
                    let lhs = matrix_coefficient(params, &j, &f, &GroupPoint::new(vec![x], vec![u], xi).unwrap(), 1e-15)
                        .unwrap()
                        .value;
                    let rhs = weil_brezin_j(params, &j, &gj, &GroupPoint::new(vec![u], vec![-x], xi).unwrap(), 1e-15)
                        .unwrap()
                        .value;
                    assert!((lhs - rhs).norm() < 1e-6 * lhs.norm().max(1e-3), "k {k} j {j:?}: {lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn weil_brezin_is_gamma_invariant() {
        let params = LatticeParams::new(1, 1).unwrap();
        let f = HermiteFunction::basis(vec![1], 1.0).unwrap();
        let g = GroupPoint::new(vec![0.31], vec![-0.42], 0.13).unwrap();
        let v0 = weil_brezin(params, &f, &GroupPoint::identity(1), 1e-14).unwrap().value;
        let direct: f64 = (-40..=40).map(|m| f.eval(&[m as f64]).re).sum();
        assert!((v0 - direct).norm() < 1e-12);
        for j in params.index_set() {
            let base = weil_brezin_j(params, &j, &f, &g, 1e-14).unwrap().value;
            for (a, b, cc) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                let moved = lattice_act(&[a], &[b], cc, &g).unwrap();
                let v = weil_brezin_j(params, &j, &f, &moved, 1e-14).unwrap().value;
                assert!((v - base).norm() < 1e-8, "j {j:?} generator ({a},{b},{cc})");
            }
        }
    }

    #[test]
    fn weil_brezin_complex_restricts_and_has_central_period() {
        let params = LatticeParams::new(1, 1).unwrap();
        let f = HermiteFunction::basis(vec![2], 4.0 * PI).unwrap();
        let g = GroupPoint::new(vec![0.2], vec![0.6], -0.1).unwrap();
        for j in params.index_set() {
            let real = weil_brezin_j(params, &j, &f, &g, 1e-14).unwrap().value;
            let cplx = weil_brezin_complex(params, &j, &f, &g.complexify(), 1e-14).unwrap().value;
            assert!((real - cplx).norm() < 1e-10);
        }
        let p = CGroupPoint::new(vec![c(0.2, 0.2)], vec![c(0.6, -0.1)], c(0.1, 0.05)).unwrap();
        let mut q = p.clone();
        q.zeta += 0.5;
        let a = weil_brezin_complex(params, &[1], &f, &p, 1e-14).unwrap();
        let b = weil_brezin_complex(params, &[1], &f, &q, 1e-14).unwrap();
        assert!((a.value - b.value).norm() < 1e-10 * a.value.norm());
        let loose = weil_brezin_complex(params, &[1], &f, &p, 1e-7).unwrap();
        assert!((a.value - loose.value).norm() < 1e-6 * a.value.norm());
        assert!(loose.radius <= a.radius);
    }

    #[test]
    fn average_examples() {
        let bump = |g: &GroupPoint| {
            let r = g.x[0] * g.x[0] + g.u[0] * g.u[0] + g.xi * g.xi;
            if r < 0.0625 {
                C64::new((-1.0 / (0.0625 - r)).exp(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        };
        let decay = HeisenbergDecay {
            amp: 1.0,
            rate_xu: 100.0,
            rate_xi: 100.0,
        };
        let v = average(&bump, &decay, &GroupPoint::identity(1), 1e-12).unwrap();
        assert_eq!(v.value, bump(&GroupPoint::identity(1)));

        let gauss = |g: &GroupPoint| C64::new((-(g.x[0] * g.x[0] + g.u[0] * g.u[0]) - 2.0 * g.xi * g.xi).exp(), 0.0);
        let decay = HeisenbergDecay {
            amp: 1.0,
            rate_xu: 1.0,
            rate_xi: 0.0,
        };
        // ξ-decay is Gaussian; the linear certificate must still dominate it
        let decay = HeisenbergDecay { rate_xi: 1.0, amp: (0.125f64).exp(), ..decay };
        let g = GroupPoint::new(vec![0.3], vec![0.6], 0.2).unwrap();
        let base = average(&gauss, &decay, &g, 1e-12).unwrap().value;
        for (a, b, cc) in [(1, 0, 0), (0, -1, 0), (2, 1, 3), (0, 0, -1)] {
            let moved = lattice_act(&[a], &[b], cc, &g).unwrap();
            let v = average(&gauss, &decay, &moved, 1e-12).unwrap().value;
            assert!((v - base).norm() < 1e-10);
        }
    }

    #[test]
    fn average_of_heat_kernel_radius_doubling() {
        let t = 0.1;
        let k0 = heat_kernel_real(t, &GroupPoint::identity(1)).unwrap();
        let decay = HeisenbergDecay {
            amp: 2.0 * k0,
            rate_xu: 1.0 / (5.0 * t),
            rate_xi: 1.0 / (5.0 * t),
        };
        let f = |g: &GroupPoint| C64::new(heat_kernel_real(t, g).unwrap(), 0.0);
        let id = GroupPoint::identity(1);
        let a = average(&f, &decay, &id, 1e-6).unwrap();
        // Doubled central radius; planar shifts beyond 6 are below e^{-72} by the envelope.
        let r = 2 * a.radius as i64;
        let mut b = C64::new(0.0, 0.0);
        for aa in -6..=6i64 {
            for bb in -6..=6i64 {
                for cc in -r..=r {
                    b += f(&lattice_act(&[aa], &[bb], cc, &id).unwrap());
                }
            }
        }
        assert!((a.value - b).norm() < 1e-6 * b.norm());
    }

    #[test]
    fn heat_kernel_envelope_holds_on_samples() {
        let t = 0.1;
        let k0 = heat_kernel_real(t, &GroupPoint::identity(1)).unwrap();
        for i in 0..60 {
            let s = i as f64;
            let g = GroupPoint::new(vec![1.5 * (0.7 * s).sin()], vec![1.5 * (1.1 * s).cos()], 0.1 * s).unwrap();
            let k = heat_kernel_real(t, &g).unwrap().abs();
            let env = 2.0 * k0 * (-(g.x[0] * g.x[0] + g.u[0] * g.u[0]) / (5.0 * t) - g.xi.abs() / (5.0 * t)).exp();
            assert!(k <= env, "{g:?}: {k} > {env}");
        }
    }

    #[test]
    fn twisted_average_examples() {
        let params = LatticeParams::new(1, 1).unwrap();
        let f = GaussianMixture::single(PI, vec![0.0, 0.0]);
        let v = twisted_average_at(-params.lambda(), &f, &[0.0], &[0.0], 1e-15).unwrap();
        let theta: f64 = (-30..=30).map(|m| (-PI * (m * m) as f64).exp()).sum();
        assert!((v.value - theta * theta).norm() < 1e-12);
        assert!((theta * theta - 1.1803).abs() < 1e-4);
        // a bump inside the open cell is its own average
        let bump = FnFunction {
            dim: 2,
            f: |x: &[f64]| {
                let r = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
                C64::new(if r < 0.16 { (-1.0 / (0.16 - r)).exp() } else { 0.0 }, 0.0)
            },
            decay: GaussianDecay {
                amp: 1.0,
                rate: 0.0,
                centre: vec![0.5, 0.5],
                im_growth: 0.0,
                support: Some(0.4),
            },
        };
        let v = twisted_average_at(-params.lambda(), &bump, &[0.3], &[0.6], 1e-15).unwrap();
        assert_eq!(v.value, bump.eval(&[0.3, 0.6]));
        // plain periodisation at λ = 0
        let p = twisted_average_at(0.0, &f, &[0.25], &[0.5], 1e-15).unwrap();
        let th = |s: f64| (-30..=30).map(|m| (-PI * (s + m as f64).powi(2)).exp()).sum::<f64>();
        assert!((p.value - th(0.25) * th(0.5)).norm() < 1e-12);
    }

    #[test]
    fn twisted_average_obeys_sector_law() {
        for k in [1i64, -1, 2] {
            let f = GaussianMixture::new(
                2,
                vec![GaussianTerm {
                    coeff: c(1.0, 0.0),
                    beta: 1.5,
                    centre: vec![0.2, -0.1],
                    freq: vec![0.3, 0.0],
                }],
            )
            .unwrap();
            let lambda = -4.0 * PI * k as f64;
            let g = |z: &[C64], w: &[C64]| twisted_average_at(lambda, &f, &[z[0].re], &[w[0].re], 1e-15).unwrap().value;
            let samples: Vec<(Vec<C64>, Vec<C64>)> =
                (0..5).map(|i| (vec![c(0.13 * i as f64, 0.0)], vec![c(0.7 - 0.11 * i as f64, 0.0)])).collect();
            assert!(quasi_periodicity_residual(k, &g, &samples) < 1e-12, "k {k}");
        }
    }

    #[test]
    fn unfold_matches_direct_average() {
        let params = LatticeParams::new(1, 1).unwrap();
        let f = GaussianMixture::single(1.0, vec![0.3, 0.1]);
        let s = twisted_average(params, &f, 8, 1e-15).unwrap();
        let big = s.unfold(1).unwrap();
        for flat in (0..big.grid().len()).step_by(37) {
            let p = big.grid().coords_of(flat);
            let d = twisted_average_at(-params.lambda(), &f, &p[..1], &p[1..], 1e-15).unwrap().value;
            assert!((big.values()[flat] - d).norm() < 1e-12);
        }
    }

    #[test]
    fn sector_projection_examples() {
        let g = |x: f64, u: f64| c((2.0 * PI * x).cos(), (2.0 * PI * u).sin());
        let f = ManifoldFunction::from_fn(1, 8, 8, |p| C64::from_polar(1.0, 4.0 * PI * p.xi) * g(p.x[0], p.u[0])).unwrap();
        let s1 = sector_project(&f, 1).unwrap();
        for (flat, v) in s1.values().iter().enumerate() {
            let p = s1.grid().coords_of(flat);
            assert!((v - g(p[0], p[1])).norm() < 1e-13);
        }
        for k in [0, -1, 2] {
            assert!(sector_project(&f, k).unwrap().max_abs() < 1e-13);
        }
        assert!(matches!(sector_project(&f, 5), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn sector_parseval_and_resynthesis() {
        let coef = [(0i64, c(1.0, 0.0)), (1, c(0.5, -0.2)), (-2, c(0.0, 0.3))];
        let f = ManifoldFunction::from_fn(1, 8, 16, |p| {
            coef.iter()
                .map(|&(k, a)| a * C64::from_polar(1.0, 4.0 * PI * k as f64 * p.xi) * (1.0 + 0.3 * (2.0 * PI * p.x[0]).cos()))
                .sum()
        })
        .unwrap();
        let mut total = 0.0;
        let mut rebuilt = vec![C64::new(0.0, 0.0); f.field().grid().len()];
        for k in -7..=7 {
            let s = sector_project(&f, k).unwrap();
            total += 0.5 * s.l2_norm().powi(2);
            for (flat, slot) in rebuilt.iter_mut().enumerate() {
                let p = f.field().grid().coords_of(flat);
                *slot += s.values()[flat / 16] * C64::from_polar(1.0, 4.0 * PI * k as f64 * p[2]);
            }
        }
        assert_relative_eq!(total, manifold_norm(&f).powi(2), epsilon = 1e-10);
        for (a, b) in rebuilt.iter().zip(f.field().values()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn manifold_norm_examples() {
        let one = ManifoldFunction::from_fn(1, 4, 4, |_| c(1.0, 0.0)).unwrap();
        assert_relative_eq!(manifold_norm(&one).powi(2), 0.5, epsilon = 1e-14);
        let a = ManifoldFunction::from_fn(1, 4, 8, |p| C64::from_polar(1.0, 4.0 * PI * p.xi)).unwrap();
        let b = ManifoldFunction::from_fn(1, 4, 8, |p| C64::from_polar(1.0, 8.0 * PI * p.xi)).unwrap();
        assert!(manifold_inner(&a, &b).unwrap().norm() < 1e-14);
        assert_relative_eq!(integrate(one.field()).unwrap().re, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lemma_norm_ratio_is_constant() {
        for k in [1i64, 2] {
            let params = LatticeParams::new(1, k).unwrap();
            let want = (0.5 * (2.0 * k as f64).powi(-1)).sqrt();
            for alpha in 0..4 {
                let f = HermiteFunction::basis(vec![alpha], 1.0).unwrap();
                for j in params.index_set() {
                    let field = matrix_coefficient_field(params, &j, &f, 32 * k as usize, 4 * k as usize, 1e-15).unwrap();
                    let r = manifold_norm(&field);
                    assert!((r - want).abs() < 1e-10 * want, "k {k}: {r} vs {want}");
                }
            }
        }
    }

    #[test]
    fn matrix_coefficient_field_matches_pointwise() {
        let params = LatticeParams::new(1, 2).unwrap();
        let f = HermiteFunction::basis(vec![2], 1.0).unwrap();
        let field = matrix_coefficient_field(params, &[3], &f, 8, 4, 1e-15).unwrap();
        let g = field.field().grid();
        for flat in (0..g.len()).step_by(7) {
            let p = g.coords_of(flat);
            let pt = GroupPoint::new(vec![p[0]], vec![p[1]], p[2]).unwrap();
            let v = matrix_coefficient(params, &[3], &f, &pt, 1e-15).unwrap().value;
            assert!((field.field().values()[flat] - v).norm() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn poisson_duality(beta in 0.5..4.0f64, x0 in -0.5..0.5f64, w in -0.5..0.5f64, k in 1i64..3) {
                let params = LatticeParams::new(1, k).unwrap();
                let f = GaussianMixture::new(1, vec![GaussianTerm { coeff: C64::new(1.0, 0.0), beta, centre: vec![x0], freq: vec![w] }]).unwrap();
                let h = 1.0 / (2 * k) as f64 / 16.0;
                let grid = Grid::new(vec![-256.0 * h * 2.0], vec![256.0 * h * 2.0], vec![1024], vec![false]).unwrap();
                let field = SampledField::from_fn(grid, |x| f.eval(x));
                for j in params.index_set() {
                    let a = nu_pair(params, &j, &field, PairingForm::FourierSide, 1e-13).unwrap().value;
                    let b = nu_pair(params, &j, &field, PairingForm::PoissonSide, 1e-13).unwrap().value;
                    prop_assert!((a - b).norm() < 1e-10, "{} vs {}", a, b);
                }
            }

            #[test]
            fn average_reindexing(x in 0.0..1.0f64, u in 0.0..1.0f64, xi in 0.0..0.5f64, a in -2i64..3, b in -2i64..3, cc in -3i64..4) {
                let gauss = |g: &GroupPoint| C64::new((-(g.x[0] * g.x[0] + g.u[0] * g.u[0]) - g.xi.abs()).exp(), 0.0);
                let decay = HeisenbergDecay { amp: 1.0, rate_xu: 1.0, rate_xi: 1.0 };
                let g = GroupPoint::new(vec![x], vec![u], xi).unwrap();
                let base = average(&gauss, &decay, &g, 1e-12).unwrap().value;
                let moved = average(&gauss, &decay, &lattice_act(&[a], &[b], cc, &g).unwrap(), 1e-12).unwrap().value;
                prop_assert!((base - moved).norm() < 1e-10);
            }
        }
    }
}
