//! Backward integration of the characteristic system.
//!
//! Every tuple `(k, i)` starts at `(x̄_ik, p_ik, γ_k − ⟨p_ik, x̄_ik⟩)` at the
//! final time and is integrated towards `t0` on a shared grid:
//!
//! * `ξ̇ = A(s)ξ + ω(s)` with `ω(s)` maximising `⟨−λ(s), ·⟩` over `W(s)`,
//! * `λ̇ = −A(s)ᵀλ`,
//! * `q̇ = σ_{B(s)U}(−λ) − σ_{E(s)D}(λ)`,
//! * `Φ̇ = −Φ A(s)` for the transition matrix `Φ(T, s)`.
//!
//! `ξ` is advanced with classic RK4 with one input value per stage. `λ`, `q`
//! and `Φ` use the exact discrete adjoint of that RK4 map, and the stage
//! inputs are chosen against the stage cotangents. With this pairing
//! `⟨λ, ξ⟩ + q` is conserved up to rounding and `λ = Φᵀ p` holds at every
//! node, which makes the bounds tight along the stored characteristics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cost::{terminal_offset, ConvexCost, LevelData};
use crate::error::{Error, Result};
use crate::ltv::{LtvSystem, Snapshot};

/// Descending sample times `T = s_0 > s_1 > … > s_N = t0`. Interior nodes
/// are `T − j h`; the last interval may be shorter than `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_final: f64,
    pub step: f64,
    nodes: Vec<f64>,
}

/// Where a query time falls on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeLookup {
    pub index: usize,
    pub time: f64,
    /// The query was between nodes and moved down to `time`.
    pub snapped: bool,
}

impl TimeGrid {
    pub fn new(t0: f64, t_final: f64, step: f64) -> Result<Self> {
        if !(t0.is_finite() && t_final.is_finite() && step.is_finite()) || t_final <= t0 || step <= 0.0 {
            return Err(Error::Invalid(format!(
                "time grid needs t0 < T and step > 0 (got t0 = {t0}, T = {t_final}, step = {step})"
            )));
        }
        let span = t_final - t0;
        let eps = 1e-9 * step;
        let full = ((span + eps) / step).floor() as usize;
        let mut nodes: Vec<f64> = (0..=full).map(|j| t_final - j as f64 * step).collect();
        let last = *nodes.last().unwrap();
        if last - t0 <= eps {
            *nodes.last_mut().unwrap() = t0;
        } else {
            nodes.push(t0);
        }
        Ok(TimeGrid {
            t0,
            t_final,
            step,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nearest node at or below `t`.
    pub fn locate(&self, t: f64) -> Result<NodeLookup> {
        let tol = 1e-12 * (1.0 + self.t_final.abs());
        if !t.is_finite() || t < self.t0 - tol || t > self.t_final + tol {
            return Err(Error::TimeOutOfRange {
                t,
                t0: self.t0,
                t_final: self.t_final,
            });
        }
        // nodes are descending: first index with node <= t + tol
        let index = self.nodes.partition_point(|&s| s > t + tol).min(self.nodes.len() - 1);
        let time = self.nodes[index];
        Ok(NodeLookup {
            index,
            time,
            snapped: (time - t).abs() > tol,
        })
    }
}

/// One classic RK4 step of `ẏ = f(s, y)` with a signed step `h`.
pub fn rk4_step<F>(f: F, s: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let eval = |t: f64, v: &DVector<f64>| -> Result<DVector<f64>> {
        let d = f(t, v);
        if d.iter().all(|x| x.is_finite()) {
            Ok(d)
        } else {
            Err(Error::NonFiniteDerivative { time: t })
        }
    };
    let k1 = eval(s, y)?;
    let k2 = eval(s + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = eval(s + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = eval(s + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Plant data at the three RK4 stage times of one step, plus the step's
/// homogeneous propagator `P` and its inverse.
#[derive(Debug, Clone)]
pub struct StepData {
    pub h: f64,
    /// Snapshots at `s`, `s + h/2` and `s + h`.
    pub stages: [Snapshot; 3],
    pub prop: DMatrix<f64>,
    pub prop_inv: DMatrix<f64>,
}

impl StepData {
    pub fn new(sys: &LtvSystem, s: f64, h: f64) -> Result<Self> {
        let stages = [sys.snapshot(s)?, sys.snapshot(s + 0.5 * h)?, sys.snapshot(s + h)?];
        let n = sys.n();
        let id = DMatrix::<f64>::identity(n, n);
        let (a1, a2, a4) = (&stages[0].a, &stages[1].a, &stages[2].a);
        let k1 = a1.clone();
        let k2 = a2 * (&id + &k1 * (0.5 * h));
        let k3 = a2 * (&id + &k2 * (0.5 * h));
        let k4 = a4 * (&id + &k3 * h);
        let prop = &id + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let prop_inv = prop
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Invalid(format!("RK4 propagator is singular at s = {s}; reduce the step")))?;
        Ok(StepData {
            h,
            stages,
            prop,
            prop_inv,
        })
    }

    /// Cotangents of the four stage inputs for the output cotangent `lam`.
    pub fn stage_cotangents(&self, lam: &DVector<f64>) -> [DVector<f64>; 4] {
        let h = self.h;
        let a2t = self.stages[1].a.transpose();
        let a4t = self.stages[2].a.transpose();
        let k4 = lam * (h / 6.0);
        let k3 = lam * (h / 3.0) + &a4t * &k4 * h;
        let k2 = lam * (h / 3.0) + &a2t * &k3 * (0.5 * h);
        let k1 = lam * (h / 6.0) + &a2t * &k2 * (0.5 * h);
        [k1, k2, k3, k4]
    }

    fn stage_set(&self, j: usize) -> &Snapshot {
        match j {
            0 => &self.stages[0],
            1 | 2 => &self.stages[1],
            _ => &self.stages[2],
        }
    }

    /// RK4 step of `ξ̇ = Aξ + ω` with the given per-stage inputs.
    pub fn advance_state(&self, xi: &DVector<f64>, w: &[DVector<f64>; 4]) -> DVector<f64> {
        let h = self.h;
        let (a1, a2, a4) = (&self.stages[0].a, &self.stages[1].a, &self.stages[2].a);
        let k1 = a1 * xi + &w[0];
        let k2 = a2 * (xi + &k1 * (0.5 * h)) + &w[1];
        let k3 = a2 * (xi + &k2 * (0.5 * h)) + &w[2];
        let k4 = a4 * (xi + &k3 * h) + &w[3];
        xi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    /// One backward step of `(ξ, λ, q)`.
    pub fn characteristic_step(
        &self,
        xi: &DVector<f64>,
        lam: &DVector<f64>,
        q: f64,
    ) -> (DVector<f64>, DVector<f64>, f64) {
        let lam_next = self.prop_inv.tr_mul(lam);
        let cot = self.stage_cotangents(&lam_next);
        let inputs: [DVector<f64>; 4] = std::array::from_fn(|j| self.stage_set(j).w.support_argmax(&cot[j]));
        let mut dq = 0.0;
        for (j, c) in cot.iter().enumerate() {
            let snap = self.stage_set(j);
            dq += snap.bu.support(c) - snap.neg_ed.support(c);
        }
        let xi_next = self.advance_state(xi, &inputs);
        (xi_next, lam_next, q - dq)
    }
}

/// Trajectory of one tuple on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub level: usize,
    pub index: usize,
    pub xi: Vec<DVector<f64>>,
    pub lambda: Vec<DVector<f64>>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicBundle {
    pub grid: TimeGrid,
    pub levels: LevelData,
    pub lipschitz: f64,
    /// `Φ(T, s_m)` per node.
    pub phi: Vec<DMatrix<f64>>,
    pub tuples: Vec<Trajectory>,
    pub seed: u64,
    pub config_hash: [u8; 32],
}

impl CharacteristicBundle {
    pub fn dim(&self) -> usize {
        self.phi[0].nrows()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.levels.levels.iter().map(|l| l.gamma).collect()
    }

    /// Tuple indices grouped by level.
    pub fn level_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for l in &self.levels.levels {
            out.push(start..start + l.points.len());
            start += l.points.len();
        }
        out
    }
}

/// Runs the backward integration for every tuple of the level data.
pub fn precompute(
    sys: &LtvSystem,
    cost: &ConvexCost,
    gammas: &[f64],
    counts: &[usize],
    grid: &TimeGrid,
    seed: u64,
) -> Result<CharacteristicBundle> {
    if cost.dim() != sys.n() {
        return Err(Error::Invalid(format!(
            "cost dimension {} does not match the state dimension {}",
            cost.dim(),
            sys.n()
        )));
    }
    if (grid.t0 - sys.t0).abs() > 1e-12 || (grid.t_final - sys.t_final).abs() > 1e-12 {
        return Err(Error::Invalid("time grid and system horizon differ".into()));
    }
    let report = sys.check_assumptions(grid.nodes());
    if let Some(bad) = report.first_failure() {
        // rerun the failing construction for a structured error
        sys.trimmed_set(bad.time)?;
        return Err(Error::Invalid(bad.message.clone().unwrap_or_default()));
    }
    let levels = LevelData::build(cost, gammas, counts, seed)?;
    let nodes = grid.nodes();
    let steps: Vec<StepData> = (0..nodes.len() - 1)
        .into_par_iter()
        .map(|m| StepData::new(sys, nodes[m], nodes[m + 1] - nodes[m]))
        .collect::<Result<_>>()?;

    let n = sys.n();
    let mut phi = Vec::with_capacity(nodes.len());
    phi.push(DMatrix::identity(n, n));
    for st in &steps {
        let next = phi.last().unwrap() * &st.prop_inv;
        phi.push(next);
    }

    let index = levels.tuple_index();
    let tuples: Vec<Trajectory> = index
        .par_iter()
        .map(|&(k, i)| {
            let lvl = &levels.levels[k];
            let xbar = lvl.points[i].clone();
            let p = lvl.subgradients[i].clone();
            let q0 = terminal_offset(&p, &xbar, lvl.gamma);
            let mut xi = Vec::with_capacity(nodes.len());
            let mut lambda = Vec::with_capacity(nodes.len());
            let mut q = Vec::with_capacity(nodes.len());
            xi.push(xbar);
            lambda.push(p);
            q.push(q0);
            for (m, st) in steps.iter().enumerate() {
                let (x1, l1, q1) = st.characteristic_step(&xi[m], &lambda[m], q[m]);
                if !(x1.iter().all(|v| v.is_finite()) && l1.iter().all(|v| v.is_finite()) && q1.is_finite()) {
                    return Err(Error::NonFinite {
                        level: k,
                        index: i,
                        node: m + 1,
                    });
                }
                xi.push(x1);
                lambda.push(l1);
                q.push(q1);
            }
            Ok(Trajectory {
                level: k,
                index: i,
                xi,
                lambda,
                q,
            })
        })
        .collect::<Result<_>>()?;

    Ok(CharacteristicBundle {
        grid: grid.clone(),
        levels,
        lipschitz: cost.lipschitz(),
        phi,
        tuples,
        seed,
        config_hash: [0; 32],
    })
}
