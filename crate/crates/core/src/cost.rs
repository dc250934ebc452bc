//! Convex Lipschitz terminal costs, their level sets and subgradients, and
//! the terminal bounds built from sampled level data.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, VertexHull, DEFAULT_QP_TOL};

/// Config-file form of a cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    EuclideanNorm {
        center: Vec<f64>,
    },
    /// `‖P(x − center)‖` with `P` given row by row.
    WeightedNorm {
        p: Vec<Vec<f64>>,
        center: Vec<f64>,
    },
    /// `max_i ⟨a_i, x⟩ + b_i`.
    PolyhedralMax {
        pieces: Vec<AffinePiece>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    EuclideanNorm { center: DVector<f64> },
    WeightedNorm { p: DMatrix<f64>, center: DVector<f64> },
    PolyhedralMax { a: DMatrix<f64>, b: DVector<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCost {
    kind: CostKind,
    lipschitz: f64,
    min_value: f64,
    minimizer: DVector<f64>,
}

/// Level points returned by [`ConvexCost::sample_level_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSample {
    pub points: Vec<DVector<f64>>,
    /// Set when the level is the minimum of the cost; `points` then holds the
    /// single minimiser although `requested` points were asked for.
    pub degenerate: bool,
    pub requested: usize,
}

const LEVEL_TOL: f64 = 1e-12;

impl ConvexCost {
    pub fn euclidean(center: DVector<f64>) -> Self {
        ConvexCost {
            lipschitz: 1.0,
            min_value: 0.0,
            minimizer: center.clone(),
            kind: CostKind::EuclideanNorm { center },
        }
    }

    pub fn weighted(p: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        if p.ncols() != center.len() {
            return Err(Error::Invalid("weighted norm: P has the wrong number of columns".into()));
        }
        let sv = p.clone().svd(false, false).singular_values;
        let smax = sv.max();
        if p.nrows() < p.ncols() || sv.min() <= 1e-12 * smax.max(1e-300) {
            return Err(Error::Invalid("weighted norm: P must have full column rank".into()));
        }
        Ok(ConvexCost {
            lipschitz: smax,
            min_value: 0.0,
            minimizer: center.clone(),
            kind: CostKind::WeightedNorm { p, center },
        })
    }

    pub fn polyhedral(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != b.len() {
            return Err(Error::Invalid("polyhedral cost needs one offset per piece".into()));
        }
        let (minimizer, min_value) = polyhedral_minimum(&a, &b).ok_or_else(|| {
            Error::Invalid("polyhedral cost is unbounded below; its minimum must be attained".into())
        })?;
        let lipschitz = a.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        Ok(ConvexCost {
            kind: CostKind::PolyhedralMax { a, b },
            lipschitz,
            min_value,
            minimizer,
        })
    }

    pub fn from_spec(spec: &CostSpec) -> Result<Self> {
        match spec {
            CostSpec::EuclideanNorm { center } => Ok(ConvexCost::euclidean(DVector::from_column_slice(center))),
            CostSpec::WeightedNorm { p, center } => {
                let n = center.len();
                if p.iter().any(|r| r.len() != n) {
                    return Err(Error::Invalid("weighted norm: every row of P needs one entry per state".into()));
                }
                let rows = p.len();
                let m = DMatrix::from_fn(rows, n, |i, j| p[i][j]);
                ConvexCost::weighted(m, DVector::from_column_slice(center))
            }
            CostSpec::PolyhedralMax { pieces } => {
                let n = pieces.first().map(|p| p.a.len()).unwrap_or(0);
                if n == 0 || pieces.iter().any(|p| p.a.len() != n) {
                    return Err(Error::Invalid("polyhedral cost: pieces must share a positive dimension".into()));
                }
                let a = DMatrix::from_fn(pieces.len(), n, |i, j| pieces[i].a[j]);
                let b = DVector::from_iterator(pieces.len(), pieces.iter().map(|p| p.b));
                ConvexCost::polyhedral(a, b)
            }
        }
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.minimizer.len()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn minimizer(&self) -> &DVector<f64> {
        &self.minimizer
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            CostKind::EuclideanNorm { center } => (x - center).norm(),
            CostKind::WeightedNorm { p, center } => (p * (x - center)).norm(),
            CostKind::PolyhedralMax { a, b } => (a * x + b).max(),
        }
    }

    /// An element of the subdifferential at `x`. At the kink of a norm the
    /// seed picks a point of the (weighted) unit ball; seed 0 gives zero.
    pub fn subgradient(&self, x: &DVector<f64>, seed: u64) -> DVector<f64> {
        match &self.kind {
            CostKind::EuclideanNorm { center } => {
                let r = x - center;
                let nr = r.norm();
                if nr > 0.0 {
                    r / nr
                } else {
                    ball_point(x.len(), seed)
                }
            }
            CostKind::WeightedNorm { p, center } => {
                let r = p * (x - center);
                let nr = r.norm();
                if nr > 0.0 {
                    p.transpose() * (r / nr)
                } else {
                    p.transpose() * ball_point(p.nrows(), seed)
                }
            }
            CostKind::PolyhedralMax { a, b } => {
                let vals = a * x + b;
                let top = vals.max();
                let i = active_pieces(&vals, top)[0];
                a.row(i).transpose()
            }
        }
    }

    /// Subgradients at the minimiser. The first is always zero; the rest
    /// spread over the subdifferential.
    pub fn minimizer_subgradients(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let n = self.dim();
        let mut out = vec![DVector::zeros(n)];
        if count <= 1 {
            out.truncate(count);
            return out;
        }
        match &self.kind {
            CostKind::EuclideanNorm { .. } => out.extend(sphere_directions(n, count - 1, seed)),
            CostKind::WeightedNorm { p, .. } => out.extend(
                sphere_directions(n, count - 1, seed)
                    .into_iter()
                    .map(|u| {
                        let pu = p * u;
                        p.transpose() * (&pu / pu.norm())
                    }),
            ),
            CostKind::PolyhedralMax { a, b } => {
                let vals = a * &self.minimizer + b;
                let active = active_pieces(&vals, vals.max());
                for &i in &active {
                    if out.len() < count {
                        out.push(a.row(i).transpose());
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                while out.len() < count {
                    let w: Vec<f64> = active.iter().map(|_| rng.random_range(0.0..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    let mut g = DVector::zeros(n);
                    for (wi, &i) in w.iter().zip(&active) {
                        g += a.row(i).transpose() * (wi / total);
                    }
                    out.push(g);
                }
            }
        }
        out
    }

    fn is_minimum_level(&self, gamma: f64) -> bool {
        (gamma - self.min_value).abs() <= LEVEL_TOL * (1.0 + self.min_value.abs())
    }

    pub fn sample_level_set(&self, gamma: f64, count: usize, seed: u64) -> Result<LevelSample> {
        if count == 0 {
            return Err(Error::Invalid("level sample count must be at least 1".into()));
        }
        if !gamma.is_finite() || gamma < self.min_value - LEVEL_TOL * (1.0 + self.min_value.abs()) {
            return Err(Error::LevelInfeasible {
                gamma,
                minimum: self.min_value,
            });
        }
        if self.is_minimum_level(gamma) {
            if count > 1 {
                log::warn!("level {gamma} is the minimum of the cost; {count} requested points collapse to one");
            }
            return Ok(LevelSample {
                points: vec![self.minimizer.clone()],
                degenerate: true,
                requested: count,
            });
        }
        let n = self.dim();
        let points = match &self.kind {
            CostKind::EuclideanNorm { center } => sphere_directions(n, count, seed)
                .into_iter()
                .map(|u| center + u * gamma)
                .collect(),
            CostKind::WeightedNorm { p, center } => sphere_directions(n, count, seed)
                .into_iter()
                .map(|u| {
                    let s = gamma / (p * &u).norm();
                    center + u * s
                })
                .collect(),
            CostKind::PolyhedralMax { a, b } => {
                let base = a * &self.minimizer + b;
                let ray = |u: &DVector<f64>| -> Option<DVector<f64>> {
                    let slopes = a * u;
                    let t = (0..a.nrows())
                        .filter(|&i| slopes[i] > 1e-14)
                        .map(|i| (gamma - base[i]) / slopes[i])
                        .fold(f64::INFINITY, f64::min);
                    t.is_finite().then(|| &self.minimizer + u * t)
                };
                let mut pts: Vec<DVector<f64>> = sphere_directions(n, count, seed).iter().filter_map(ray).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                let mut attempts = 0;
                while pts.len() < count {
                    attempts += 1;
                    if attempts > 1000 * count {
                        return Err(Error::Invalid(format!("could not sample {count} points on level {gamma}")));
                    }
                    if let Some(p) = ray(&gaussian_direction(n, &mut rng)) {
                        pts.push(p);
                    }
                }
                pts
            }
        };
        Ok(LevelSample {
            points,
            degenerate: false,
            requested: count,
        })
    }
}

fn active_pieces(vals: &DVector<f64>, top: f64) -> Vec<usize> {
    let tol = 1e-12 * (1.0 + top.abs());
    (0..vals.len()).filter(|&i| vals[i] >= top - tol).collect()
}

/// Minimum of `max_i ⟨a_i, x⟩ + b_i` by vertex enumeration of the epigraph
/// inside the span of the slopes. `None` when unbounded below.
fn polyhedral_minimum(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let n = a.ncols();
    let k = a.nrows();
    let (basis, _) = geometry::orthonormal_split(&a.transpose(), 1e-12);
    let r = basis.ncols();
    let reduced = a * &basis;
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut subset: Vec<usize> = (0..=r).collect();
    if r + 1 > k {
        return None;
    }
    // bounded below iff 0 lies in the hull of the slopes
    if r > 0 {
        let rows: Vec<DVector<f64>> = (0..k).map(|i| reduced.row(i).transpose()).collect();
        let hull = VertexHull::new(rows.iter());
        let sol = geometry::qp_simplex(&hull, &DMatrix::identity(r, r), &DVector::zeros(r), DEFAULT_QP_TOL);
        let scale = rows.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if sol.distance > 1e-9 * scale {
            return None;
        }
    }
    loop {
        let mut sys = DMatrix::zeros(r + 1, r + 1);
        let mut rhs = DVector::zeros(r + 1);
        for (row, &i) in subset.iter().enumerate() {
            for c in 0..r {
                sys[(row, c)] = reduced[(i, c)];
            }
            sys[(row, r)] = -1.0;
            rhs[row] = -b[i];
        }
        if let Some(sol) = sys.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                let y = sol.rows(0, r).into_owned();
                let t = sol[r];
                let vals = &reduced * &y + b;
                if vals.iter().all(|&v| v <= t + 1e-10 * (1.0 + t.abs())) {
                    let value = vals.max();
                    if best.as_ref().is_none_or(|(_, bv)| value < *bv) {
                        best = Some((&basis * y, value));
                    }
                }
            }
        }
        // next (r+1)-subset in lexicographic order
        let mut i = r + 1;
        loop {
            if i == 0 {
                return best.map(|(x, v)| (if x.len() == n { x } else { DVector::zeros(n) }, v));
            }
            i -= 1;
            if subset[i] < k - (r + 1 - i) {
                subset[i] += 1;
                for j in i + 1..=r {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn gaussian_direction(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let nr = g.norm();
        if nr > 1e-12 {
            return g / nr;
        }
    }
}

/// Point of the closed unit ball chosen by `seed`; seed 0 is the origin.
pub fn ball_point(n: usize, seed: u64) -> DVector<f64> {
    if seed == 0 {
        return DVector::zeros(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = gaussian_direction(n, &mut rng);
    let radius: f64 = rng.random_range(0.0f64..1.0).powf(1.0 / n as f64);
    dir * radius
}

/// Deterministic unit directions: ±1 in ℝ¹, equally spaced angles with a
/// seeded phase in ℝ², the Fibonacci lattice in ℝ³, seeded Gaussian
/// directions above.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    match n {
        1 => (0..count)
            .map(|i| DVector::from_element(1, if i % 2 == 0 { -1.0 } else { 1.0 }))
            .collect(),
        2 => {
            let phase: f64 = if seed == 0 {
                0.0
            } else {
                ChaCha8Rng::seed_from_u64(seed).random_range(0.0..1.0)
            };
            (0..count)
                .map(|i| {
                    let th = std::f64::consts::TAU * (i as f64 + phase) / count as f64;
                    DVector::from_vec(vec![th.cos(), th.sin()])
                })
                .collect()
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            // seeded levels get a uniformly random rotation of the lattice
            let rot = if seed == 0 {
                DMatrix::identity(3, 3)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let q = gaussian_direction(4, &mut rng);
                let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        1.0 - 2.0 * (y * y + z * z),
                        2.0 * (x * y - z * w),
                        2.0 * (x * z + y * w),
                        2.0 * (x * y + z * w),
                        1.0 - 2.0 * (x * x + z * z),
                        2.0 * (y * z - x * w),
                        2.0 * (x * z - y * w),
                        2.0 * (y * z + x * w),
                        1.0 - 2.0 * (x * x + y * y),
                    ],
                )
            };
            (0..count)
                .map(|i| {
                    let y = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                    let rad = (1.0 - y * y).max(0.0).sqrt();
                    let th = golden * i as f64;
                    let u = &rot * DVector::from_vec(vec![rad * th.cos(), y, rad * th.sin()]);
                    let nu = u.norm();
                    u / nu
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| gaussian_direction(n, &mut rng)).collect()
        }
    }
}

/// One level γ with its sampled points and subgradients, one entry per
/// characteristic tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub gamma: f64,
    pub requested: usize,
    /// The level is the minimum of the cost: every point is the minimiser
    /// and the subgradients differ.
    pub degenerate: bool,
    pub points: Vec<DVector<f64>>,
    pub subgradients: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelData {
    pub levels: Vec<Level>,
}

fn level_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

impl LevelData {
    pub fn build(cost: &ConvexCost, gammas: &[f64], counts: &[usize], seed: u64) -> Result<Self> {
        if gammas.is_empty() || gammas.len() != counts.len() {
            return Err(Error::Invalid("levels and counts must be non-empty and of equal length".into()));
        }
        if gammas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("levels must be strictly increasing".into()));
        }
        let mut levels = Vec::with_capacity(gammas.len());
        for (k, (&gamma, &count)) in gammas.iter().zip(counts).enumerate() {
            let s = level_seed(seed, k);
            let sample = cost.sample_level_set(gamma, count, s)?;
            let (points, subgradients) = if sample.degenerate {
                (
                    vec![sample.points[0].clone(); count],
                    cost.minimizer_subgradients(count, s),
                )
            } else {
                let subs = sample.points.iter().map(|p| cost.subgradient(p, 0)).collect();
                (sample.points, subs)
            };
            levels.push(Level {
                gamma: if sample.degenerate { cost.min_value() } else { gamma },
                requested: count,
                degenerate: sample.degenerate,
                points,
                subgradients,
            });
        }
        Ok(LevelData { levels })
    }

    pub fn num_tuples(&self) -> usize {
        self.levels.iter().map(|l| l.points.len()).sum()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].points[0].len()
    }

    /// `(k, i)` pairs in storage order.
    pub fn tuple_index(&self) -> Vec<(usize, usize)> {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(k, l)| (0..l.points.len()).map(move |i| (k, i)))
            .collect()
    }
}

/// Offset of the supporting hyperplane through `(x̄, γ)` with normal `p`.
pub fn terminal_offset(p: &DVector<f64>, xbar: &DVector<f64>, gamma: f64) -> f64 {
    gamma - p.dot(xbar)
}

/// `min_k [L d(x; Φ, conv V_k) + γ_k]`, skipping levels that cannot improve
/// the running minimum. Returns the value, the minimising level and whether
/// every solved QP converged.
pub fn upper_over_hulls<'a, I>(hulls: I, lipschitz: f64, phi: &DMatrix<f64>, x: &DVector<f64>) -> UpperEval
where
    I: IntoIterator<Item = (f64, &'a [DVector<f64>])>,
{
    let mut out = UpperEval {
        value: f64::INFINITY,
        level: None,
        converged: true,
        iterations: 0,
        pruned: 0,
    };
    for (k, (gamma, vertices)) in hulls.into_iter().enumerate() {
        if gamma >= out.value {
            out.pruned += 1;
            continue;
        }
        let hull = VertexHull::new(vertices.iter());
        let sol = geometry::qp_simplex(&hull, phi, x, DEFAULT_QP_TOL);
        out.iterations += sol.iterations;
        out.converged &= sol.converged;
        let value = lipschitz * sol.distance + gamma;
        if value < out.value {
            out.value = value;
            out.level = Some(k);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperEval {
    pub value: f64,
    pub level: Option<usize>,
    pub converged: bool,
    pub iterations: usize,
    pub pruned: usize,
}

/// `ḡ(x) = min_k [L d(x; conv{x̄_ik}) + γ_k]`.
pub fn terminal_upper(data: &LevelData, lipschitz: f64, x: &DVector<f64>) -> f64 {
    let id = DMatrix::identity(x.len(), x.len());
    upper_over_hulls(
        data.levels.iter().map(|l| (l.gamma, l.points.as_slice())),
        lipschitz,
        &id,
        x,
    )
    .value
}

/// `g̲(x) = max_{k,i} ⟨p_ik, x⟩ − ⟨p_ik, x̄_ik⟩ + γ_k`.
pub fn terminal_lower(data: &LevelData, x: &DVector<f64>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for l in &data.levels {
        for (p, xb) in l.subgradients.iter().zip(&l.points) {
            best = best.max(p.dot(x) + terminal_offset(p, xb, l.gamma));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-r..r))
    }

    fn polyhedral_abs() -> ConvexCost {
        ConvexCost::polyhedral(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn evaluation() {
        let g = ConvexCost::euclidean(DVector::zeros(3));
        assert_eq!(g.eval(&v(&[1.0, 2.0, 2.0])), 3.0);
        assert_eq!(g.lipschitz(), 1.0);
        assert_eq!(polyhedral_abs().eval(&v(&[0.3, 7.0])), 0.3);
        let wn = ConvexCost::weighted(DMatrix::from_diagonal(&v(&[2.0, 0.5])), DVector::zeros(2)).unwrap();
        assert_eq!(wn.lipschitz(), 2.0);
        assert_eq!(wn.eval(&v(&[1.0, 2.0])), 5f64.sqrt());
    }

    #[test]
    fn subgradients() {
        let g = ConvexCost::euclidean(DVector::zeros(3));
        let s = g.subgradient(&v(&[0.0, 3.0, 4.0]), 0);
        assert!((s - v(&[0.0, 0.6, 0.8])).amax() < 1e-15);
        for seed in 0..20 {
            assert!(g.subgradient(&DVector::zeros(3), seed).norm() <= 1.0);
        }
        assert_eq!(g.subgradient(&DVector::zeros(3), 0), DVector::zeros(3));
        let pm = ConvexCost::polyhedral(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        );
        // unbounded below: rejected
        assert!(pm.is_err());
        let pm = ConvexCost::polyhedral(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, -1.0, 0.0]),
            DVector::from_vec(vec![0.0, -1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(pm.subgradient(&v(&[1.0, 0.0]), 0), v(&[1.0, 0.0]));
    }

    #[test]
    fn level_sets() {
        let g = ConvexCost::euclidean(DVector::zeros(3));
        let s = g.sample_level_set(0.0, 85, 1).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.points, vec![DVector::zeros(3)]);
        let s = g.sample_level_set(0.3, 84, 1).unwrap();
        assert_eq!(s.points.len(), 84);
        assert!(s.points.iter().all(|p| (p.norm() - 0.3).abs() <= 1e-10));
        let g1 = ConvexCost::euclidean(DVector::zeros(1));
        let mut pts: Vec<f64> = g1.sample_level_set(1.0, 2, 0).unwrap().points.iter().map(|p| p[0]).collect();
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts, vec![-1.0, 1.0]);
        assert!(matches!(g.sample_level_set(-0.1, 3, 0), Err(Error::LevelInfeasible { .. })));
        let pm = polyhedral_abs();
        let s = pm.sample_level_set(0.7, 10, 3).unwrap();
        assert!(s.points.iter().all(|p| (pm.eval(p) - 0.7).abs() <= 1e-10));
        let wn = ConvexCost::weighted(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]), v(&[1.0, -1.0])).unwrap();
        let s = wn.sample_level_set(0.5, 16, 3).unwrap();
        assert!(s.points.iter().all(|p| (wn.eval(p) - 0.5).abs() <= 1e-10));
    }

    #[test]
    fn polyhedral_minimum_is_found() {
        // max(x1, -x1, x2 - 1, -x2 - 1) has minimum 0 on a segment
        let pm = ConvexCost::polyhedral(
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            DVector::from_vec(vec![0.0, 0.0, -1.0, -1.0]),
        )
        .unwrap();
        assert!(pm.min_value().abs() < 1e-12);
        assert!(pm.eval(pm.minimizer()).abs() < 1e-12);
        let pm = ConvexCost::polyhedral(
            DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.0]),
            DVector::from_vec(vec![-1.0, 0.0, 0.2]),
        )
        .unwrap();
        assert!((pm.min_value() - 0.2).abs() < 1e-12);
    }

    fn check_level_data(cost: &ConvexCost, data: &LevelData, rng: &mut ChaCha8Rng) {
        let n = cost.dim();
        for l in &data.levels {
            for (x, p) in l.points.iter().zip(&l.subgradients) {
                assert!((cost.eval(x) - l.gamma).abs() <= 1e-10);
                assert!(p.norm() <= cost.lipschitz() + 1e-12);
                for _ in 0..100 {
                    let y = rand_vec(rng, n, 3.0);
                    assert!(cost.eval(&y) >= l.gamma + p.dot(&(&y - x)) - 1e-10);
                }
                assert!((terminal_upper(data, cost.lipschitz(), x) - l.gamma).abs() <= 1e-10);
                assert!((terminal_lower(data, x) - l.gamma).abs() <= 1e-10);
            }
        }
        for _ in 0..300 {
            let x = rand_vec(rng, n, 2.0);
            let lo = terminal_lower(data, &x);
            let g = cost.eval(&x);
            let hi = terminal_upper(data, cost.lipschitz(), &x);
            assert!(lo <= g + 1e-10 && g <= hi + 1e-10, "{lo} {g} {hi}");
        }
    }

    #[test]
    fn level_data_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ConvexCost::euclidean(DVector::zeros(3));
        let data = LevelData::build(&g, &[0.0, 0.3, 0.6], &[10, 12, 12], 0).unwrap();
        assert_eq!(data.num_tuples(), 34);
        check_level_data(&g, &data, &mut rng);
        let wn = ConvexCost::weighted(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]), v(&[0.5, 0.0])).unwrap();
        let data = LevelData::build(&wn, &[0.0, 1.0, 2.0], &[5, 16, 16], 3).unwrap();
        check_level_data(&wn, &data, &mut rng);
        let pm = polyhedral_abs();
        let data = LevelData::build(&pm, &[0.0, 0.5], &[3, 6], 3).unwrap();
        check_level_data(&pm, &data, &mut rng);
    }

    #[test]
    fn one_dimensional_terminal_bounds() {
        let g = ConvexCost::euclidean(DVector::zeros(1));
        let data = LevelData::build(&g, &[1.0], &[2], 0).unwrap();
        assert_eq!(terminal_upper(&data, 1.0, &v(&[0.0])), 1.0);
        assert_eq!(terminal_lower(&data, &v(&[3.0])), 3.0);
        let ext = LevelData::build(&ConvexCost::euclidean(DVector::zeros(3)), &[1.0], &[84], 0).unwrap();
        assert!(terminal_upper(&ext, 1.0, &v(&[2.0, 0.0, 0.0])) >= 2.0);
    }

    #[test]
    fn terminal_lower_is_midpoint_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = ConvexCost::euclidean(DVector::zeros(3));
        let data = LevelData::build(&g, &[0.0, 0.5], &[8, 20], 0).unwrap();
        for _ in 0..200 {
            let a = rand_vec(&mut rng, 3, 2.0);
            let b = rand_vec(&mut rng, 3, 2.0);
            let mid = (&a + &b) * 0.5;
            let lhs = terminal_lower(&data, &mid);
            assert!(lhs <= 0.5 * (terminal_lower(&data, &a) + terminal_lower(&data, &b)) + 1e-12);
        }
    }

    #[test]
    fn convex_and_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let costs = [
            ConvexCost::euclidean(v(&[0.1, 0.2])),
            ConvexCost::weighted(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]), v(&[0.5, 0.0])).unwrap(),
            polyhedral_abs(),
        ];
        for g in &costs {
            for _ in 0..200 {
                let x = rand_vec(&mut rng, 2, 3.0);
                let y = rand_vec(&mut rng, 2, 3.0);
                let k: f64 = rng.random_range(0.0..1.0);
                let z = &x * k + &y * (1.0 - k);
                assert!(g.eval(&z) <= k * g.eval(&x) + (1.0 - k) * g.eval(&y) + 1e-12);
                assert!((g.eval(&x) - g.eval(&y)).abs() <= g.lipschitz() * (&x - &y).norm() + 1e-12);
            }
        }
    }
}
