//! Splitting a sampled nilmanifold function into its `(k, j)` components.

use std::f64::consts::PI;

use nilheat::nilmanifold::{sector_project, LatticeParams, ManifoldFunction};
use nilheat::numerics::SampledField;
use nilheat::{Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct SectorRow {
    pub k: i64,
    /// `None` for `k = 0`, or when the grid cannot resolve the `j`-splitting of sector `k`.
    pub j: Option<Vec<i64>>,
    /// `L²(M)` norm of the component.
    pub norm: f64,
}

/// `e^{iπ s·x} F(x, u + s/2k)` on the cell grid, continued past `u = 1` by the
/// quasi-periodicity `F(x, u + m) = e^{−2πik x·m} F(x, u)`.
///
/// Matrix coefficients of `ν_j` are eigenfunctions with eigenvalue `e^{πi s·j/k}`: they
/// are Weil-Brezin transforms with `x` and `u` exchanged, so the finite group acts along `u`.
fn act(f: &SampledField, k: i64, s: &[i64]) -> SampledField {
    let g = f.grid();
    let n = g.dim() / 2;
    let p = g.points()[0] as i64;
    let step = p / (2 * k.abs());
    let strides = g.strides();
    let mut out = Vec::with_capacity(g.len());
    for flat in 0..g.len() {
        let idx = g.multi_index(flat);
        let c = g.coords_of(flat);
        let mut src = 0;
        let mut phase = 0.0;
        for i in 0..n {
            src += idx[i] * strides[i];
            let moved = idx[n + i] as i64 + s[i] * step * k.signum();
            let wraps = moved.div_euclid(p);
            src += moved.rem_euclid(p) as usize * strides[n + i];
            phase += PI * s[i] as f64 * c[i] - 2.0 * PI * k as f64 * wraps as f64 * c[i];
        }
        out.push(f.values()[src] * C64::from_polar(1.0, phase));
    }
    SampledField::new(g.clone(), out).expect("same grid")
}

/// `(2|k|)^{−n} Σ_s conj(χ_j(s)) Π̃(s) F` with `χ_j(s) = e^{πi s·j/k}`.
fn project_j(f: &SampledField, params: LatticeParams, j: &[i64]) -> SampledField {
    let k = params.k();
    let size = params.index_set().len() as f64;
    let mut acc = vec![C64::new(0.0, 0.0); f.values().len()];
    for s in params.index_set() {
        let chi: f64 = s.iter().zip(j).map(|(a, b)| (a * b) as f64).sum::<f64>() * PI / k as f64;
        let moved = act(f, k, &s);
        let w = C64::from_polar(1.0 / size, -chi);
        for (a, v) in acc.iter_mut().zip(moved.values()) {
            *a += w * v;
        }
    }
    SampledField::new(f.grid().clone(), acc).expect("same grid")
}

/// One row per resolvable central frequency `k` and, for `k ≠ 0`, per `j ∈ (ℤ/2kℤ)ⁿ`.
/// The squared norms sum to `‖F‖²`.
pub fn decompose(f: &ManifoldFunction) -> Result<Vec<SectorRow>> {
    let n = f.n();
    let g = f.field().grid();
    let kmax = ((g.points()[2 * n] - 1) / 2) as i64;
    let p = g.points()[0] as i64;
    let mut rows = Vec::new();
    for k in -kmax..=kmax {
        let fk = sector_project(f, k)?;
        // The central factor e^{4πikξ} has mean square 1 over [0, ½) of length ½.
        let scale = 0.5f64.sqrt();
        if k == 0 || p % (2 * k.abs()) != 0 {
            rows.push(SectorRow {
                k,
                j: None,
                norm: scale * fk.l2_norm(),
            });
            continue;
        }
        let params = LatticeParams::new(n, k)?;
        for j in params.index_set() {
            let part = project_j(&fk, params, &j);
            rows.push(SectorRow {
                k,
                j: Some(j),
                norm: scale * part.l2_norm(),
            });
        }
    }
    Ok(rows)
}

pub fn format_rows(rows: &[SectorRow], n: usize) -> String {
    let mut out = String::from("k,");
    out.push_str(&(1..=n).map(|i| format!("j{i}")).collect::<Vec<_>>().join(","));
    out.push_str(",norm\n");
    for r in rows {
        let js = match &r.j {
            Some(j) => j.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            None => vec!["*"; n].join(","),
        };
        out.push_str(&format!("{},{},{:e}\n", r.k, js, r.norm));
    }
    out
}
