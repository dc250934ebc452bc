//! Reference value estimates for small problems: a first-order
//! Lax–Friedrichs solver of the terminal-value HJ equation on a dense grid,
//! and a reachable-zonotope evaluation of the single-player trimmed game.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bounds::AxisSpec;
use crate::cost::{ConvexCost, CostKind};
use crate::error::{Error, Result};
use crate::ltv::LtvSystem;
use crate::zonotope::{frank_wolfe_weighted, Zonotope};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfOptions {
    pub cfl: f64,
    /// Largest number of grid nodes accepted.
    pub max_nodes: usize,
}

impl Default for LfOptions {
    fn default() -> Self {
        LfOptions {
            cfl: 0.5,
            max_nodes: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub axes: Vec<AxisSpec>,
    /// Values in row-major order (first axis slowest).
    pub values: Vec<f64>,
    pub t: f64,
    pub time_steps: usize,
    pub max_dt: f64,
    pub cfl: f64,
}

impl ValueGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.axes)
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn node_point(&self, flat: usize) -> DVector<f64> {
        node_point(&self.axes, flat)
    }

    /// Multilinear interpolation; points outside the box are clamped.
    pub fn interpolate(&self, x: &DVector<f64>) -> f64 {
        let st = self.strides();
        let n = self.axes.len();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for d in 0..n {
            let ax = &self.axes[d];
            if ax.count <= 1 {
                continue;
            }
            let u = ((x[d] - ax.min) / ax.spacing()).clamp(0.0, (ax.count - 1) as f64);
            let i = (u.floor() as usize).min(ax.count - 2);
            base[d] = i;
            frac[d] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = 0;
            for d in 0..n {
                let hi = corner >> d & 1 == 1;
                if self.axes[d].count <= 1 {
                    if hi {
                        w = 0.0;
                    }
                    continue;
                }
                w *= if hi { frac[d] } else { 1.0 - frac[d] };
                idx += (base[d] + usize::from(hi)) * st[d];
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc
    }
}

fn strides(axes: &[AxisSpec]) -> Vec<usize> {
    let mut st = vec![1usize; axes.len()];
    for d in (0..axes.len().saturating_sub(1)).rev() {
        st[d] = st[d + 1] * axes[d + 1].count;
    }
    st
}

fn node_point(axes: &[AxisSpec], mut flat: usize) -> DVector<f64> {
    let mut coords = vec![0.0; axes.len()];
    for (d, ax) in axes.iter().enumerate().rev() {
        coords[d] = ax.node(flat % ax.count);
        flat /= ax.count;
    }
    DVector::from_vec(coords)
}

/// Hamiltonian data frozen at one time, in flat arrays.
struct FrozenH {
    n: usize,
    a: Vec<f64>,
    bu: Zonotope,
    neg_ed: Zonotope,
}

impl FrozenH {
    fn new(sys: &LtvSystem, s: f64) -> Result<Self> {
        let (a, bu_ed) = (sys.a_matrix(s)?, sys.mapped_control_sets(s)?);
        let n = sys.n();
        Ok(FrozenH {
            n,
            a: (0..n * n).map(|k| a[(k / n, k % n)]).collect(),
            bu: bu_ed.0,
            neg_ed: bu_ed.1,
        })
    }

    fn support(z: &Zonotope, p: &[f64]) -> f64 {
        let n = p.len();
        let mut v: f64 = (0..n).map(|i| p[i] * z.center[i]).sum();
        for g in z.generators.column_iter() {
            v += (0..n).map(|i| p[i] * g[i]).sum::<f64>().abs();
        }
        v
    }

    /// `⟨−p, A x⟩ + σ_{BU}(−p) − σ_{ED}(p)`, with `σ_{ED}(p) = σ_{−ED}(−p)`.
    fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        let n = self.n;
        let mut ax = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| self.a[i * n + j] * x[j]).sum();
            ax -= p[i] * row;
        }
        let neg_p: Vec<f64> = p.iter().map(|v| -v).collect();
        ax + Self::support(&self.bu, &neg_p) - Self::support(&self.neg_ed, &neg_p)
    }

    /// Per-axis bounds on `|∂H/∂p_i|` over the box.
    fn dissipation(&self, axes: &[AxisSpec]) -> Vec<f64> {
        let n = self.n;
        let reach: Vec<f64> = axes.iter().map(|a| a.min.abs().max(a.max.abs())).collect();
        (0..n)
            .map(|i| {
                let mut alpha: f64 = (0..n).map(|j| self.a[i * n + j].abs() * reach[j]).sum();
                for z in [&self.bu, &self.neg_ed] {
                    alpha += z.center[i].abs();
                    alpha += z.generators.row(i).iter().map(|v| v.abs()).sum::<f64>();
                }
                alpha
            })
            .collect()
    }
}

/// Integrates `−∂_t v + H(t, x, ∇v) = 0`, `v(T) = g`, from `T` back to
/// `t_target` with the Lax–Friedrichs flux and forward Euler in reversed
/// time. Boundary derivatives use linear extrapolation.
pub fn lf_solve(
    sys: &LtvSystem,
    cost: &ConvexCost,
    axes: &[AxisSpec],
    t_target: f64,
    opts: LfOptions,
) -> Result<ValueGrid> {
    let n = sys.n();
    if n > 3 || axes.len() != n || cost.dim() != n {
        return Err(Error::Invalid("grid solver needs n <= 3 with one axis per state".into()));
    }
    if axes.iter().any(|a| a.count < 2 || a.max <= a.min) {
        return Err(Error::Invalid("every grid axis needs at least two nodes on a proper interval".into()));
    }
    if !(sys.t0..=sys.t_final).contains(&t_target) {
        return Err(Error::TimeOutOfRange {
            t: t_target,
            t0: sys.t0,
            t_final: sys.t_final,
        });
    }
    let total: usize = axes.iter().map(|a| a.count).product();
    if total > opts.max_nodes {
        return Err(Error::MemoryBudget {
            nodes: total,
            budget: opts.max_nodes,
        });
    }
    let st = strides(axes);
    let dx: Vec<f64> = axes.iter().map(|a| a.spacing()).collect();
    let points: Vec<Vec<f64>> = (0..total).map(|k| node_point(axes, k).as_slice().to_vec()).collect();
    let mut v: Vec<f64> = points.iter().map(|p| cost.eval(&DVector::from_column_slice(p))).collect();

    let horizon = sys.t_final - t_target;
    let mut tau = 0.0;
    let mut time_steps = 0;
    let mut max_dt: f64 = 0.0;
    while tau < horizon - 1e-14 * (1.0 + horizon) {
        let s = sys.t_final - tau;
        let h = FrozenH::new(sys, s)?;
        let alpha = h.dissipation(axes);
        let rate: f64 = alpha.iter().zip(&dx).map(|(a, d)| a / d).sum();
        let mut dt = if rate > 0.0 { opts.cfl / rate } else { horizon - tau };
        dt = dt.min(horizon - tau);
        max_dt = max_dt.max(dt);
        let prev = &v;
        let next: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|k| {
                let mut pm = [0.0; 3];
                let mut pp = [0.0; 3];
                let mut rem = k;
                for d in 0..n {
                    let i = rem / st[d];
                    rem %= st[d];
                    let c = axes[d].count;
                    let fwd = |j: usize| (prev[k + (j + 1 - i) * st[d]] - prev[k - (i - j) * st[d]]) / dx[d];
                    // one-sided slopes; ghost nodes extrapolate linearly
                    let minus = if i > 0 { fwd(i - 1) } else { fwd(0) };
                    let plus = if i + 1 < c { fwd(i) } else { fwd(i - 1) };
                    pm[d] = minus;
                    pp[d] = plus;
                }
                let avg: Vec<f64> = (0..n).map(|d| 0.5 * (pm[d] + pp[d])).collect();
                let mut flux = h.eval(&points[k], &avg);
                for d in 0..n {
                    flux -= 0.5 * alpha[d] * (pp[d] - pm[d]);
                }
                prev[k] - dt * flux
            })
            .collect();
        v = next;
        tau += dt;
        time_steps += 1;
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("grid solver produced non-finite values".into()));
    }
    Ok(ValueGrid {
        axes: axes.to_vec(),
        values: v,
        t: t_target,
        time_steps,
        max_dt,
        cfl: opts.cfl,
    })
}

/// `|v_h − v_2h|` at every coarse node, for a coarse grid whose nodes are
/// every other fine node.
pub fn richardson_differences(fine: &ValueGrid, coarse: &ValueGrid) -> Result<Vec<f64>> {
    if fine.axes.len() != coarse.axes.len()
        || fine
            .axes
            .iter()
            .zip(&coarse.axes)
            .any(|(f, c)| f.count != 2 * c.count - 1 || f.min != c.min || f.max != c.max)
    {
        return Err(Error::Invalid("coarse grid must hold every other node of the fine grid".into()));
    }
    let st_f = fine.strides();
    let st_c = coarse.strides();
    Ok((0..coarse.len())
        .map(|k| {
            let mut rem = k;
            let mut idx = 0;
            for d in 0..st_c.len() {
                let i = rem / st_c[d];
                rem %= st_c[d];
                idx += 2 * i * st_f[d];
            }
            (fine.values[idx] - coarse.values[k]).abs()
        })
        .collect())
}

/// A fine-grid solution with a per-node error estimate from three nested
/// grids (`h`, `2h`, `4h`) on a padded box.
#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonGrid {
    /// Fine solution restricted to the requested axes.
    pub values: ValueGrid,
    /// Error estimate per node of `values`.
    pub eps: Vec<f64>,
    /// Observed order from the max differences, clamped to `[0.25, 1]`.
    pub order: f64,
    /// The padded axes the three solves ran on.
    pub padded_axes: Vec<AxisSpec>,
}

/// Distance that information travels into the box along each axis over
/// `[t, T]`, from the same per-axis speed bounds the dissipation uses. The
/// bound depends on the padded box, so it is iterated a few times.
pub fn auto_padding(sys: &LtvSystem, axes: &[AxisSpec], t: f64) -> Result<Vec<f64>> {
    let horizon = sys.t_final - t;
    let mut pad = vec![0.0; axes.len()];
    let times: Vec<f64> = (0..=20).map(|j| t + horizon * j as f64 / 20.0).collect();
    for _ in 0..4 {
        let boxed: Vec<AxisSpec> = axes
            .iter()
            .zip(&pad)
            .map(|(a, p)| AxisSpec {
                min: a.min - p,
                max: a.max + p,
                count: a.count,
            })
            .collect();
        let mut speed = vec![0.0f64; axes.len()];
        for &s in &times {
            for (sp, a) in speed.iter_mut().zip(FrozenH::new(sys, s)?.dissipation(&boxed)) {
                *sp = sp.max(a);
            }
        }
        pad = speed.iter().map(|v| v * horizon).collect();
    }
    Ok(pad)
}

/// Solves on `h`, `2h` and `4h` grids over the axes widened by `pad` (rounded
/// up to whole `4h` cells) and returns the fine values on the requested axes
/// with `ε = |v_h − v_2h| / (2^p − 1)`, taken as the largest difference at
/// the corners of the enclosing coarse cell.
pub fn richardson_solve(
    sys: &LtvSystem,
    cost: &ConvexCost,
    axes: &[AxisSpec],
    pad: &[f64],
    t: f64,
    opts: LfOptions,
) -> Result<RichardsonGrid> {
    if pad.len() != axes.len() || pad.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Invalid("padding needs one non-negative value per axis".into()));
    }
    if axes.iter().any(|a| a.count < 5 || (a.count - 1) % 4 != 0) {
        return Err(Error::Invalid("Richardson axes need count - 1 divisible by 4".into()));
    }
    // padding in fine cells, a multiple of 4
    let cells: Vec<usize> = axes
        .iter()
        .zip(pad)
        .map(|(a, p)| 4 * (p / (4.0 * a.spacing()) - 1e-9).ceil().max(0.0) as usize)
        .collect();
    let padded: Vec<AxisSpec> = axes
        .iter()
        .zip(&cells)
        .map(|(a, &c)| {
            let h = a.spacing();
            AxisSpec {
                min: a.min - c as f64 * h,
                max: a.max + c as f64 * h,
                count: a.count + 2 * c,
            }
        })
        .collect();
    let level = |f: usize| -> Vec<AxisSpec> {
        padded
            .iter()
            .map(|a| AxisSpec {
                count: (a.count - 1) / f + 1,
                ..*a
            })
            .collect()
    };
    let fine = lf_solve(sys, cost, &padded, t, opts)?;
    let coarse = lf_solve(sys, cost, &level(2), t, opts)?;
    let coarsest = lf_solve(sys, cost, &level(4), t, opts)?;
    let d1 = richardson_differences(&fine, &coarse)?;
    let d2 = richardson_differences(&coarse, &coarsest)?;

    let n = axes.len();
    let st_f = fine.strides();
    let st_c = coarse.strides();
    let st_cc = coarsest.strides();
    let inner: usize = axes.iter().map(|a| a.count).product();
    let inner_st = strides(axes);
    let multi = |mut k: usize, st: &[usize]| -> Vec<usize> {
        st.iter()
            .map(|s| {
                let i = k / s;
                k %= s;
                i
            })
            .collect()
    };
    // max differences over the requested box, per level
    let (mut m1, mut m2) = (0.0f64, 0.0f64);
    for (k, d) in d1.iter().enumerate() {
        let idx = multi(k, &st_c);
        if (0..n).all(|a| 2 * idx[a] >= cells[a] && 2 * idx[a] < cells[a] + axes[a].count) {
            m1 = m1.max(*d);
        }
    }
    for (k, d) in d2.iter().enumerate() {
        let idx = multi(k, &st_cc);
        if (0..n).all(|a| 4 * idx[a] >= cells[a] && 4 * idx[a] < cells[a] + axes[a].count) {
            m2 = m2.max(*d);
        }
    }
    let order = if m1 > 0.0 && m2 > 0.0 { (m2 / m1).log2().clamp(0.25, 1.0) } else { 1.0 };
    let factor = 1.0 / (2f64.powf(order) - 1.0);

    let mut values = Vec::with_capacity(inner);
    let mut eps = Vec::with_capacity(inner);
    for k in 0..inner {
        let idx = multi(k, &inner_st);
        let f: Vec<usize> = idx.iter().zip(&cells).map(|(i, c)| i + c).collect();
        values.push(fine.values[f.iter().zip(&st_f).map(|(i, s)| i * s).sum::<usize>()]);
        let mut e = 0.0f64;
        for corner in 0..(1usize << n) {
            let c: usize = (0..n)
                .map(|a| (f[a] + (corner >> a & 1)) / 2 * st_c[a])
                .sum();
            e = e.max(d1[c]);
        }
        eps.push(factor * e);
    }
    Ok(RichardsonGrid {
        values: ValueGrid {
            axes: axes.to_vec(),
            values,
            t,
            time_steps: fine.time_steps,
            max_dt: fine.max_dt,
            cfl: fine.cfl,
        },
        eps,
        order,
        padded_axes: padded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachOracleValue {
    /// Feasible value, an upper estimate of the discrete minimum.
    pub value: f64,
    /// Certified lower end of the bracket on the discrete minimum.
    pub lower: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `Φ(T, s_j)` on `s_j = t + j Δs`, integrated backward from `T` with RK4
/// substeps.
fn transition_samples(sys: &LtvSystem, t: f64, steps: usize, substeps: usize) -> Result<Vec<DMatrix<f64>>> {
    let n = sys.n();
    let ds = (sys.t_final - t) / steps as f64;
    let mut out = vec![DMatrix::identity(n, n); steps + 1];
    let mut y = DMatrix::<f64>::identity(n, n);
    let h = -ds / substeps as f64;
    for j in (0..steps).rev() {
        let s_end = t + (j + 1) as f64 * ds;
        for k in 0..substeps {
            let s = s_end + k as f64 * h;
            let a1 = sys.a_matrix(s)?;
            let a2 = sys.a_matrix(s + 0.5 * h)?;
            let a4 = sys.a_matrix(s + h)?;
            let k1 = -(&y * &a1);
            let k2 = -((&y + &k1 * (0.5 * h)) * &a2);
            let k3 = -((&y + &k2 * (0.5 * h)) * &a2);
            let k4 = -((&y + &k3 * h) * &a4);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        out[j] = y.clone();
    }
    Ok(out)
}

/// Value of the single-player trimmed game from `(t, x)`: the minimum of
/// `g` over `Φ(T,t) x ⊕ Σ_j Φ(T,s_j) W(s_j) Δs` (left Riemann sum), found by
/// Frank–Wolfe over the zonotope. Only norm costs are supported.
pub fn trimmed_reach_oracle(
    sys: &LtvSystem,
    cost: &ConvexCost,
    t: f64,
    x: &DVector<f64>,
    steps: usize,
) -> Result<ReachOracleValue> {
    if steps == 0 {
        return Err(Error::Invalid("steps must be at least 1".into()));
    }
    if !(sys.t0..=sys.t_final).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            t0: sys.t0,
            t_final: sys.t_final,
        });
    }
    let (metric, target) = match cost.kind() {
        CostKind::EuclideanNorm { center } => (DMatrix::identity(center.len(), center.len()), center.clone()),
        CostKind::WeightedNorm { p, center } => (p.clone(), center.clone()),
        CostKind::PolyhedralMax { .. } => {
            return Err(Error::Unsupported("the reach oracle handles norm costs only".into()));
        }
    };
    let n = sys.n();
    let ds = (sys.t_final - t) / steps as f64;
    let phis = transition_samples(sys, t, steps, 4)?;
    let mut center = &phis[0] * x;
    let mut gens: Vec<DVector<f64>> = Vec::new();
    for (j, phi) in phis.iter().take(steps).enumerate() {
        let w = sys.trimmed_set(t + j as f64 * ds)?;
        center += phi * &w.center * ds;
        for g in w.generators.column_iter() {
            let mapped = phi * g * ds;
            if mapped.amax() > 0.0 {
                gens.push(mapped);
            }
        }
    }
    let zono = Zonotope::new(
        center,
        if gens.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&gens)
        },
    );
    let res = frank_wolfe_weighted(&zono, &metric, &target, 1e-14, 200_000);
    let (lo, hi) = res.distance_bracket();
    Ok(ReachOracleValue {
        value: hi,
        lower: lo,
        iterations: res.iterations,
        converged: res.converged,
    })
}
