//! Evaluation of the upper and lower value bounds from a bundle.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::characteristics::{CharacteristicBundle, NodeLookup};
use crate::cost::upper_over_hulls;
use crate::error::{Error, Result};

/// Allowed excess of the lower over the upper bound before it is reported.
pub const SANDWICH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperDiagnostics {
    /// Level attaining the minimum.
    pub level: usize,
    pub converged: bool,
    pub iterations: usize,
    pub pruned_levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInterval {
    pub lower: f64,
    pub upper: f64,
    pub k_upper: usize,
    /// `(k, i)` of the maximising hyperplane.
    pub argmax_lower: (usize, usize),
    pub node: usize,
    pub time: f64,
    pub snapped: bool,
    pub qp_converged: bool,
    pub qp_iterations: usize,
}

impl BoundInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_point(bundle: &CharacteristicBundle, x: &DVector<f64>) -> Result<()> {
    if x.len() != bundle.dim() {
        return Err(Error::Invalid(format!(
            "point has dimension {} but the bundle has dimension {}",
            x.len(),
            bundle.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("point has non-finite coordinates".into()));
    }
    Ok(())
}

fn upper_at(bundle: &CharacteristicBundle, node: usize, x: &DVector<f64>) -> (f64, UpperDiagnostics) {
    let hulls: Vec<(f64, Vec<DVector<f64>>)> = bundle
        .level_ranges()
        .into_iter()
        .zip(&bundle.levels.levels)
        .map(|(range, lvl)| (lvl.gamma, bundle.tuples[range].iter().map(|tr| tr.xi[node].clone()).collect()))
        .collect();
    let eval = upper_over_hulls(
        hulls.iter().map(|(g, v)| (*g, v.as_slice())),
        bundle.lipschitz,
        &bundle.phi[node],
        x,
    );
    (
        eval.value,
        UpperDiagnostics {
            level: eval.level.unwrap_or(0),
            converged: eval.converged,
            iterations: eval.iterations,
            pruned_levels: eval.pruned,
        },
    )
}

fn lower_at(bundle: &CharacteristicBundle, node: usize, x: &DVector<f64>) -> (f64, (usize, usize)) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = (0, 0);
    for tr in &bundle.tuples {
        let v = tr.lambda[node].dot(x) + tr.q[node];
        if v > best {
            best = v;
            arg = (tr.level, tr.index);
        }
    }
    (best, arg)
}

/// `v̄(t, x) = min_k [L ‖Φ(T,t)(x − ξ*_k(t,x))‖ + γ_k]`.
pub fn upper_bound(bundle: &CharacteristicBundle, t: f64, x: &DVector<f64>) -> Result<(f64, UpperDiagnostics, NodeLookup)> {
    check_point(bundle, x)?;
    let at = bundle.grid.locate(t)?;
    let (v, d) = upper_at(bundle, at.index, x);
    Ok((v, d, at))
}

/// `v̲(t, x) = max_{k,i} ⟨λ_ik(t), x⟩ + q_ik(t)`.
pub fn lower_bound(bundle: &CharacteristicBundle, t: f64, x: &DVector<f64>) -> Result<(f64, (usize, usize), NodeLookup)> {
    check_point(bundle, x)?;
    let at = bundle.grid.locate(t)?;
    let (v, arg) = lower_at(bundle, at.index, x);
    Ok((v, arg, at))
}

pub fn bound_interval(bundle: &CharacteristicBundle, t: f64, x: &DVector<f64>) -> Result<BoundInterval> {
    check_point(bundle, x)?;
    let at = bundle.grid.locate(t)?;
    let (upper, diag) = upper_at(bundle, at.index, x);
    let (lower, arg) = lower_at(bundle, at.index, x);
    if lower > upper + SANDWICH_TOL {
        return Err(Error::SandwichViolation {
            t: at.time,
            lower,
            upper,
        });
    }
    Ok(BoundInterval {
        lower,
        upper,
        k_upper: diag.level,
        argmax_lower: arg,
        node: at.index,
        time: at.time,
        snapped: at.snapped,
        qp_converged: diag.converged,
        qp_iterations: diag.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn node(&self, i: usize) -> f64 {
        if self.count <= 1 {
            self.min
        } else if i + 1 == self.count {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.node(i)).collect()
    }

    pub fn spacing(&self) -> f64 {
        if self.count <= 1 {
            0.0
        } else {
            (self.max - self.min) / (self.count - 1) as f64
        }
    }
}

/// Query points: a tensor grid (first axis slowest) or an explicit list.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Axes(Vec<AxisSpec>),
    Points(Vec<Vec<f64>>),
}

impl GridSpec {
    /// Line through the origin along `axis` with the other coordinates 0.
    pub fn axis_slice(dim: usize, axis: usize, min: f64, max: f64, count: usize) -> GridSpec {
        let spec = AxisSpec { min, max, count };
        GridSpec::Points(
            spec.nodes()
                .into_iter()
                .map(|v| {
                    let mut p = vec![0.0; dim];
                    p[axis] = v;
                    p
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            GridSpec::Axes(a) => Some(a.len()),
            GridSpec::Points(p) => p.first().map(|v| v.len()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GridSpec::Axes(a) => a.iter().map(|s| s.count).product(),
            GridSpec::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        match self {
            GridSpec::Points(p) => p.iter().map(|v| DVector::from_column_slice(v)).collect(),
            GridSpec::Axes(axes) => {
                let total = self.len();
                (0..total)
                    .map(|mut flat| {
                        let mut coords = vec![0.0; axes.len()];
                        for (d, ax) in axes.iter().enumerate().rev() {
                            coords[d] = ax.node(flat % ax.count);
                            flat /= ax.count;
                        }
                        DVector::from_vec(coords)
                    })
                    .collect()
            }
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `"min:max:count,min:max:count,..."`.
    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .split(',')
            .map(|part| {
                let f: Vec<&str> = part.trim().split(':').collect();
                if f.len() != 3 {
                    return Err(Error::Invalid(format!("grid axis `{part}` is not min:max:count")));
                }
                let bad = |_| Error::Invalid(format!("grid axis `{part}` is not min:max:count"));
                let min: f64 = f[0].trim().parse().map_err(bad)?;
                let max: f64 = f[1].trim().parse().map_err(bad)?;
                let count: usize = f[2].trim().parse().map_err(|_| Error::Invalid(format!("bad count in `{part}`")))?;
                if count == 0 || !(min.is_finite() && max.is_finite()) || max < min {
                    return Err(Error::Invalid(format!("grid axis `{part}` needs min <= max and count >= 1")));
                }
                Ok(AxisSpec { min, max, count })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridSpec::Axes(axes))
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Axes(axes) => {
                let parts: Vec<String> = axes.iter().map(|a| format!("{}:{}:{}", a.min, a.max, a.count)).collect();
                write!(f, "{}", parts.join(","))
            }
            GridSpec::Points(p) => write!(f, "{} explicit points", p.len()),
        }
    }
}

/// One evaluated grid point. Failures are kept per point.
#[derive(Debug, Clone)]
pub struct GridEntry {
    pub point: DVector<f64>,
    pub result: std::result::Result<BoundInterval, String>,
}

/// Bounds at every grid point, in grid order.
pub fn grid_eval(bundle: &CharacteristicBundle, t: f64, spec: &GridSpec) -> Result<Vec<GridEntry>> {
    if let Some(d) = spec.dim() {
        if d != bundle.dim() {
            return Err(Error::Invalid(format!(
                "grid has dimension {d} but the bundle has dimension {}",
                bundle.dim()
            )));
        }
    }
    bundle.grid.locate(t)?;
    Ok(spec
        .points()
        .into_par_iter()
        .map(|point| {
            let result = bound_interval(bundle, t, &point).map_err(|e| e.to_string());
            GridEntry { point, result }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::precompute;
    use crate::cost::{terminal_lower, terminal_upper};
    use crate::presets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_bundle() -> CharacteristicBundle {
        let (sys, cost, gammas, counts, grid) = presets::example_problem_small();
        precompute(&sys, &cost, &gammas, &counts, &grid, 0).unwrap()
    }

    #[test]
    fn grid_spec_parsing_and_order() {
        let g: GridSpec = "0:1:3, -1:1:2".parse().unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].as_slice(), &[0.0, -1.0]);
        assert_eq!(pts[1].as_slice(), &[0.0, 1.0]);
        assert_eq!(pts[2].as_slice(), &[0.5, -1.0]);
        assert!("0:1".parse::<GridSpec>().is_err());
        assert!("1:0:3".parse::<GridSpec>().is_err());
        assert_eq!(g.to_string(), "0:1:3,-1:1:2");
    }

    #[test]
    fn terminal_consistency() {
        let b = small_bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.5..1.5));
            let (u, _, _) = upper_bound(&b, b.grid.t_final, &x).unwrap();
            let (l, _, _) = lower_bound(&b, b.grid.t_final, &x).unwrap();
            assert_eq!(u, terminal_upper(&b.levels, b.lipschitz, &x));
            assert_eq!(l, terminal_lower(&b.levels, &x));
        }
    }

    #[test]
    fn tight_on_characteristics() {
        let b = small_bundle();
        for (m, &t) in b.grid.nodes().iter().enumerate().step_by(7) {
            for tr in &b.tuples {
                let gamma = b.levels.levels[tr.level].gamma;
                let iv = bound_interval(&b, t, &tr.xi[m]).unwrap();
                assert!((iv.upper - gamma).abs() <= 1e-6 && (iv.lower - gamma).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn more_characteristics_tighten() {
        let (sys, cost, gammas, _, grid) = presets::example_problem_small();
        let small = precompute(&sys, &cost, &gammas, &[4, 6, 6], &grid, 0).unwrap();
        // sub-bundle with the first three tuples of every level
        let mut sub = small.clone();
        let ranges = sub.level_ranges();
        let mut tuples = Vec::new();
        for (lvl, r) in sub.levels.levels.iter_mut().zip(&ranges) {
            let idx: Vec<usize> = (r.start..r.end.min(r.start + 3)).collect();
            lvl.points = idx.iter().map(|&j| small.tuples[j].xi[0].clone()).collect();
            lvl.subgradients = idx.iter().map(|&j| small.tuples[j].lambda[0].clone()).collect();
            tuples.extend(idx.iter().map(|&j| small.tuples[j].clone()));
        }
        sub.tuples = tuples;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let full = bound_interval(&small, 0.0, &x).unwrap();
            let part = bound_interval(&sub, 0.0, &x).unwrap();
            assert!(full.upper <= part.upper + 1e-12);
            assert!(full.lower >= part.lower - 1e-12);
        }
    }

    #[test]
    fn upper_is_lipschitz() {
        let b = small_bundle();
        let node = b.grid.locate(0.0).unwrap().index;
        let norm = b.phi[node].clone().svd(false, false).singular_values.max();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let ux = upper_bound(&b, 0.0, &x).unwrap().0;
            let uy = upper_bound(&b, 0.0, &y).unwrap().0;
            assert!((ux - uy).abs() <= b.lipschitz * norm * (&x - &y).norm() + 1e-9);
        }
    }

    #[test]
    fn grid_matches_pointwise_calls() {
        let b = small_bundle();
        let spec = GridSpec::Axes(vec![AxisSpec { min: -1.0, max: 1.0, count: 5 }; 3]);
        let table = grid_eval(&b, 0.0, &spec).unwrap();
        assert_eq!(table.len(), 125);
        for e in &table {
            let single = bound_interval(&b, 0.0, &e.point).unwrap();
            assert_eq!(e.result.as_ref().unwrap(), &single);
        }
        let one = grid_eval(&b, 0.0, &GridSpec::Points(vec![vec![0.1, 0.2, 0.3]])).unwrap();
        let direct = bound_interval(&b, 0.0, &DVector::from_vec(vec![0.1, 0.2, 0.3])).unwrap();
        assert_eq!(one[0].result.as_ref().unwrap(), &direct);
    }

    #[test]
    fn off_grid_time_is_flagged() {
        let b = small_bundle();
        let x = DVector::from_vec(vec![0.2, 0.0, 0.0]);
        let node_t = b.grid.nodes()[3];
        let iv = bound_interval(&b, node_t + 0.3 * b.grid.step, &x).unwrap();
        assert!(iv.snapped);
        assert_eq!(iv.time, node_t);
        assert!(bound_interval(&b, -1.0, &x).is_err());
        assert!(bound_interval(&b, 0.0, &DVector::zeros(2)).is_err());
    }
}
