//! Kernel tables for `dump-kernel`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nilheat::heat_transform::{manifold_kernel, HERMITE_ROUTE_CONSTANT};
use nilheat::heisenberg::{heat_constant, heat_kernel, p_constant, p_kernel, twisted_bergman_weight, CGroupPoint, GroupPoint};
use nilheat::hermite::{hermite_bergman_weight, mehler_constant, mehler_kernel, mehler_series, HermiteParams, LambdaSign};
use nilheat::{Result, C64};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kernel {
    /// Heat kernel `k_t(x, u, 0)`.
    Heat,
    /// Twisted heat kernel `p_t^λ(x, u)`, `λ = 4πk`.
    P,
    /// Mehler kernel, closed form and 80-term eigen-series.
    Mehler,
    /// Twisted Bergman weight `W_t^{−4πk}(iy, iv)`.
    #[value(name = "weight-W")]
    WeightW,
    /// Hermite-Bergman weight `U_t^{4πk}(x, y)`.
    #[value(name = "weight-U")]
    WeightU,
    /// Nilmanifold heat kernel `K_t^Γ((x, u, 0), e)`.
    #[value(name = "manifold-K")]
    ManifoldK,
}

/// Normalisation constants that do not depend on the sign of `λ`.
fn constants_line(cfg: &RunConfig, lambda: f64) -> String {
    format!(
        "# t={} c_n={:e} twisted_c_n={:e} mehler_c={:e} c_lambda={}",
        cfg.t,
        heat_constant(1),
        p_constant(1),
        mehler_constant(lambda.abs(), 1),
        HERMITE_ROUTE_CONSTANT
    )
}

/// Tabulates `which` on `cfg.grid` points per axis over `[-radius, radius]²` (n = 1).
pub fn dump_kernel(which: Kernel, cfg: &RunConfig) -> Result<String> {
    let lambda = 4.0 * PI * cfg.k as f64;
    let m = cfg.grid;
    let axis: Vec<f64> = (0..m)
        .map(|i| if m == 1 { 0.0 } else { -cfg.radius + 2.0 * cfg.radius * i as f64 / (m - 1) as f64 })
        .collect();
    let mut out = constants_line(cfg, lambda);
    out.push('\n');
    let header = match which {
        Kernel::Heat | Kernel::ManifoldK => "x,u,re,im",
        Kernel::P => "x,u,value",
        Kernel::Mehler => "x,y,closed,series",
        Kernel::WeightW => "y,v,value",
        Kernel::WeightU => "x,y,value",
    };
    out.push_str(header);
    out.push('\n');
    let hp = HermiteParams::new(lambda, cfg.t)?;
    let origin = CGroupPoint::identity(1);
    for &a in &axis {
        for &b in &axis {
            let row = match which {
                Kernel::Heat => {
                    let v = heat_kernel(cfg.t, &GroupPoint::new(vec![a], vec![b], 0.0)?.complexify())?;
                    format!("{a},{b},{},{}", v.re, v.im)
                }
                Kernel::P => format!("{a},{b},{}", p_kernel(lambda, cfg.t, &[a], &[b])?),
                Kernel::Mehler => format!(
                    "{a},{b},{},{}",
                    mehler_kernel(&hp, &[a], &[b])?,
                    mehler_series(&hp, &[a], &[b], 80)?
                ),
                Kernel::WeightW => {
                    let z = [C64::new(0.0, a)];
                    let w = [C64::new(0.0, b)];
                    format!("{a},{b},{}", twisted_bergman_weight(-lambda, cfg.t, &z, &w)?)
                }
                Kernel::WeightU => format!("{a},{b},{}", hermite_bergman_weight(&hp, &[a], &[b], LambdaSign::Verbatim)?),
                Kernel::ManifoldK => {
                    let g = GroupPoint::new(vec![a], vec![b], 0.0)?;
                    let v = manifold_kernel(cfg.t, &g, &origin, cfg.tol)?.value;
                    format!("{a},{b},{},{}", v.re, v.im)
                }
            };
            let _ = writeln!(out, "{row}");
        }
    }
    Ok(out)
}
