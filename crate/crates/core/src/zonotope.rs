//! Zonotopes `{c + G θ | θ ∈ [-1, 1]^K}` with closed-form support functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Center plus an ordered list of generators (the columns of `generators`).
///
/// Zero generators are kept; they contribute nothing to support values.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub center: DVector<f64>,
    pub generators: DMatrix<f64>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Self {
        assert_eq!(
            center.len(),
            generators.nrows(),
            "generator dimension does not match center"
        );
        Zonotope { center, generators }
    }

    pub fn point(center: DVector<f64>) -> Self {
        let n = center.len();
        Zonotope::new(center, DMatrix::zeros(n, 0))
    }

    /// Axis-aligned box `center ± half_widths`.
    pub fn aligned_box(center: DVector<f64>, half_widths: &[f64]) -> Self {
        let n = center.len();
        assert_eq!(n, half_widths.len());
        let generators = DMatrix::from_diagonal(&DVector::from_column_slice(half_widths));
        Zonotope::new(center, generators)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn generator(&self, i: usize) -> DVector<f64> {
        self.generators.column(i).into_owned()
    }

    /// `max_{z ∈ Z} ⟨p, z⟩ = ⟨p, c⟩ + Σ |⟨p, g_i⟩|`.
    pub fn support(&self, p: &DVector<f64>) -> f64 {
        let mut value = p.dot(&self.center);
        for g in self.generators.column_iter() {
            value += g.dot(p).abs();
        }
        value
    }

    /// A maximiser of `⟨p, ·⟩` over the zonotope, `c + Σ sgn(⟨p, g_i⟩) g_i`
    /// with `sgn(0) = 0`.
    pub fn support_argmax(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut out = self.center.clone();
        for g in self.generators.column_iter() {
            let s = g.dot(p);
            if s > 0.0 {
                out += g;
            } else if s < 0.0 {
                out -= g;
            }
        }
        out
    }

    /// Image under the linear map `x ↦ M x`.
    pub fn linear_map(&self, m: &DMatrix<f64>) -> Zonotope {
        Zonotope::new(m * &self.center, m * &self.generators)
    }

    pub fn scale(&self, factor: f64) -> Zonotope {
        Zonotope::new(&self.center * factor, &self.generators * factor)
    }

    pub fn minkowski_sum(&self, other: &Zonotope) -> Zonotope {
        assert_eq!(self.dim(), other.dim());
        let n = self.dim();
        let k1 = self.num_generators();
        let k2 = other.num_generators();
        let mut generators = DMatrix::zeros(n, k1 + k2);
        generators.columns_mut(0, k1).copy_from(&self.generators);
        generators.columns_mut(k1, k2).copy_from(&other.generators);
        Zonotope::new(&self.center + &other.center, generators)
    }

    /// Point `c + G θ` for the given coefficients.
    pub fn point_at(&self, theta: &[f64]) -> DVector<f64> {
        assert_eq!(theta.len(), self.num_generators());
        &self.center + &self.generators * DVector::from_column_slice(theta)
    }

    /// Vertex candidates `c + G s` for every sign vector `s`. Exponential in
    /// the generator count; meant for small zonotopes and test oracles.
    pub fn sign_vertices(&self) -> Vec<DVector<f64>> {
        let k = self.num_generators();
        assert!(k <= 20, "too many generators for vertex enumeration");
        (0..1usize << k)
            .map(|mask| {
                let theta: Vec<f64> = (0..k)
                    .map(|i| if mask & (1 << i) != 0 { 1.0 } else { -1.0 })
                    .collect();
                self.point_at(&theta)
            })
            .collect()
    }

    /// Membership test. Linearly independent generators are handled exactly
    /// through a least-squares solve of `G θ = x - c`; otherwise the distance
    /// to the zonotope is minimised with Frank–Wolfe.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let offset = x - &self.center;
        let nonzero: Vec<usize> = (0..self.num_generators())
            .filter(|&i| self.generators.column(i).norm() > 0.0)
            .collect();
        if nonzero.is_empty() {
            return offset.norm() <= tol;
        }
        let g = self.generators.select_columns(nonzero.iter());
        let svd = g.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd.rank(smax * 1e-12);
        if rank == nonzero.len() {
            if let Ok(theta) = svd.solve(&offset, smax * 1e-12) {
                let residual = (&g * &theta - &offset).norm();
                return residual <= tol && theta.iter().all(|v| v.abs() <= 1.0 + tol);
            }
        }
        let report = self.nearest_point(x, tol * tol, 100_000);
        report.lower_bound_sq <= tol * tol
    }

    /// Frank–Wolfe minimisation of `½‖z - x‖²` over the zonotope.
    pub fn nearest_point(&self, x: &DVector<f64>, gap_tol: f64, max_iter: usize) -> NearestPoint {
        let identity = DMatrix::identity(self.dim(), self.dim());
        frank_wolfe_weighted(self, &identity, x, gap_tol, max_iter)
    }
}

/// Result of a Frank–Wolfe run over a zonotope, with a certified bracket on
/// the optimal value of `½‖M(z - x)‖²`.
#[derive(Debug, Clone)]
pub struct NearestPoint {
    pub point: DVector<f64>,
    /// `½‖M(point - x)‖²`, an upper bound on the optimum.
    pub objective: f64,
    /// `objective - gap`, a lower bound on the optimum.
    pub lower_bound_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl NearestPoint {
    /// Bracket `[lo, hi]` on `min ‖M(z - x)‖` over the zonotope.
    pub fn distance_bracket(&self) -> (f64, f64) {
        (
            (2.0 * self.lower_bound_sq.max(0.0)).sqrt(),
            (2.0 * self.objective).sqrt(),
        )
    }
}

/// Frank–Wolfe with exact line search for `min_{z ∈ Z} ½‖M(z - x)‖²`.
///
/// The linear minimisation oracle over a zonotope is `support_argmax` in the
/// negative gradient direction. Stops once the duality gap drops below
/// `gap_tol`.
pub fn frank_wolfe_weighted(
    zono: &Zonotope,
    m: &DMatrix<f64>,
    x: &DVector<f64>,
    gap_tol: f64,
    max_iter: usize,
) -> NearestPoint {
    let mtm = m.transpose() * m;
    let mut z = zono.center.clone();
    let mut best_lower = f64::NEG_INFINITY;
    let mut objective = 0.5 * (m * (&z - x)).norm_squared();
    for it in 0..max_iter {
        let grad = &mtm * (&z - x);
        let s = zono.support_argmax(&(-&grad));
        let dir = &s - &z;
        let gap = -grad.dot(&dir);
        best_lower = best_lower.max(objective - gap.max(0.0));
        if gap <= gap_tol || objective <= 0.0 {
            return NearestPoint {
                point: z,
                objective,
                lower_bound_sq: best_lower.max(0.0),
                iterations: it,
                converged: true,
            };
        }
        let curvature = (m * &dir).norm_squared();
        let step = if curvature > 0.0 {
            (gap / curvature).clamp(0.0, 1.0)
        } else {
            1.0
        };
        z += dir * step;
        objective = 0.5 * (m * (&z - x)).norm_squared();
    }
    NearestPoint {
        point: z,
        objective,
        lower_bound_sq: best_lower.max(0.0),
        iterations: max_iter,
        converged: false,
    }
}

/// Serialisable form used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZonotopeSpec {
    pub center: Vec<f64>,
    /// Generator vectors, one per entry.
    pub generators: Vec<Vec<f64>>,
}

impl ZonotopeSpec {
    pub fn to_zonotope(&self) -> Result<Zonotope, String> {
        let n = self.center.len();
        let mut g = DMatrix::zeros(n, self.generators.len());
        for (j, col) in self.generators.iter().enumerate() {
            if col.len() != n {
                return Err(format!(
                    "generator {j} has length {} but the center has length {n}",
                    col.len()
                ));
            }
            for (i, v) in col.iter().enumerate() {
                g[(i, j)] = *v;
            }
        }
        Ok(Zonotope::new(DVector::from_column_slice(&self.center), g))
    }

    pub fn unit_box(n: usize) -> Self {
        ZonotopeSpec {
            center: vec![0.0; n],
            generators: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }
}
