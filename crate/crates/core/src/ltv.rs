//! The linear time-varying game plant `ξ̇ = A(s)ξ + B(s)u + E(s)d` and the
//! trimmed control set `W(s) = B(s)U ⊖ (−E(s)D)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exprs::{self, Expr};
use crate::zonotope::Zonotope;

/// Angular tolerance (on `|sin θ|`) for treating two generators as parallel.
pub const PARALLEL_TOL: f64 = 1e-9;
/// Allowed excess of a matched scale over 1.
pub const KAPPA_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LtvSystem {
    n: usize,
    m: usize,
    l: usize,
    a: Vec<Vec<Expr>>,
    b: Vec<Vec<Expr>>,
    e: Vec<Vec<Expr>>,
    pub u_set: Zonotope,
    pub d_set: Zonotope,
    pub t0: f64,
    pub t_final: f64,
}

fn check_shape(name: &str, mat: &[Vec<Expr>], rows: usize, cols: usize) -> Result<()> {
    if mat.len() != rows || mat.iter().any(|r| r.len() != cols) {
        return Err(Error::Invalid(format!("{name} must be {rows}x{cols}")));
    }
    Ok(())
}

fn eval_matrix(name: &'static str, mat: &[Vec<Expr>], cols: usize, s: f64) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(mat.len(), cols);
    for (i, row) in mat.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            out[(i, j)] = e.eval(s).map_err(|source| Error::Expr {
                matrix: name,
                row: i,
                col: j,
                source,
            })?;
        }
    }
    Ok(out)
}

impl LtvSystem {
    pub fn new(
        a: Vec<Vec<Expr>>,
        b: Vec<Vec<Expr>>,
        e: Vec<Vec<Expr>>,
        u_set: Zonotope,
        d_set: Zonotope,
        t0: f64,
        t_final: f64,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Invalid("state dimension must be positive".into()));
        }
        let m = u_set.dim();
        let l = d_set.dim();
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, m)?;
        check_shape("E", &e, n, l)?;
        if !(t0.is_finite() && t_final.is_finite()) || t0 < 0.0 || t_final <= t0 {
            return Err(Error::Invalid(format!(
                "horizon must satisfy 0 <= t0 < T (got t0 = {t0}, T = {t_final})"
            )));
        }
        Ok(LtvSystem {
            n,
            m,
            l,
            a,
            b,
            e,
            u_set,
            d_set,
            t0,
            t_final,
        })
    }

    /// Build from expression strings.
    pub fn parse(
        a: &[Vec<String>],
        b: &[Vec<String>],
        e: &[Vec<String>],
        u_set: Zonotope,
        d_set: Zonotope,
        t0: f64,
        t_final: f64,
    ) -> Result<Self> {
        let conv = |name: &'static str, rows: &[Vec<String>]| -> Result<Vec<Vec<Expr>>> {
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(j, s)| {
                            exprs::parse(s).map_err(|source| Error::Expr {
                                matrix: name,
                                row: i,
                                col: j,
                                source,
                            })
                        })
                        .collect()
                })
                .collect()
        };
        LtvSystem::new(conv("A", a)?, conv("B", b)?, conv("E", e)?, u_set, d_set, t0, t_final)
    }

    /// Time-invariant system from numeric matrices.
    pub fn constant(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        e: &DMatrix<f64>,
        u_set: Zonotope,
        d_set: Zonotope,
        t0: f64,
        t_final: f64,
    ) -> Result<Self> {
        let conv = |m: &DMatrix<f64>| -> Vec<Vec<Expr>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| Expr::constant(m[(i, j)])).collect())
                .collect()
        };
        LtvSystem::new(conv(a), conv(b), conv(e), u_set, d_set, t0, t_final)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn entries(&self) -> (&[Vec<Expr>], &[Vec<Expr>], &[Vec<Expr>]) {
        (&self.a, &self.b, &self.e)
    }

    pub fn a_matrix(&self, s: f64) -> Result<DMatrix<f64>> {
        eval_matrix("A", &self.a, self.n, s)
    }

    pub fn eval_matrices(&self, s: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        Ok((
            eval_matrix("A", &self.a, self.n, s)?,
            eval_matrix("B", &self.b, self.m, s)?,
            eval_matrix("E", &self.e, self.l, s)?,
        ))
    }

    /// `(B(s)U, −E(s)D)`.
    pub fn mapped_control_sets(&self, s: f64) -> Result<(Zonotope, Zonotope)> {
        let b = eval_matrix("B", &self.b, self.m, s)?;
        let e = eval_matrix("E", &self.e, self.l, s)?;
        Ok((self.u_set.linear_map(&b), self.d_set.linear_map(&(-e))))
    }

    pub fn trimmed_set(&self, s: f64) -> Result<Zonotope> {
        let (bu, neg_ed) = self.mapped_control_sets(s)?;
        trim(&bu, &neg_ed).map_err(|(generator, reason)| Error::Alignment {
            time: s,
            generator,
            reason,
        })
    }

    /// All the per-time data needed by the integrators.
    pub fn snapshot(&self, s: f64) -> Result<Snapshot> {
        let (a, b, e) = self.eval_matrices(s)?;
        let bu = self.u_set.linear_map(&b);
        let neg_ed = self.d_set.linear_map(&(-e));
        let w = trim(&bu, &neg_ed).map_err(|(generator, reason)| Error::Alignment {
            time: s,
            generator,
            reason,
        })?;
        Ok(Snapshot { a, bu, neg_ed, w })
    }

    pub fn check_assumptions(&self, time_samples: &[f64]) -> AlignmentReport {
        let records = time_samples
            .iter()
            .map(|&s| match self.mapped_control_sets(s) {
                Err(err) => AlignmentRecord {
                    time: s,
                    aligned: false,
                    kappas: Vec::new(),
                    w_nonempty: false,
                    message: Some(err.to_string()),
                },
                Ok((bu, neg_ed)) => match match_generators(&bu, &neg_ed) {
                    Ok(kappas) => AlignmentRecord {
                        time: s,
                        aligned: true,
                        kappas,
                        w_nonempty: true,
                        message: None,
                    },
                    Err((generator, reason)) => AlignmentRecord {
                        time: s,
                        aligned: false,
                        kappas: Vec::new(),
                        w_nonempty: false,
                        message: Some(format!("generator {generator} of -E(s)D {reason}")),
                    },
                },
            })
            .collect();
        AlignmentReport { records }
    }

    /// `H(s,x,p) = max_u min_d ⟨−p, A x + B u + E d⟩`, evaluated as
    /// `⟨−p, A x⟩ + σ_{BU}(−p) − σ_{ED}(p)`.
    pub fn hamiltonian(&self, s: f64, x: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        let (a, b, e) = self.eval_matrices(s)?;
        let bu = self.u_set.linear_map(&b);
        let ed = self.d_set.linear_map(&e);
        let neg_p = -p;
        Ok(neg_p.dot(&(&a * x)) + bu.support(&neg_p) - ed.support(p))
    }

    /// `max_{ω ∈ W(s)} ⟨−p, A x + ω⟩`.
    pub fn trimmed_hamiltonian(&self, s: f64, x: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        let a = self.a_matrix(s)?;
        let w = self.trimmed_set(s)?;
        let neg_p = -p;
        Ok(neg_p.dot(&(&a * x)) + w.support(&neg_p))
    }
}

/// Matrices and sets of the plant frozen at one time instant.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub a: DMatrix<f64>,
    pub bu: Zonotope,
    pub neg_ed: Zonotope,
    pub w: Zonotope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRecord {
    pub time: f64,
    pub aligned: bool,
    /// One scale per generator of `B(s)U`: the fraction of its length used
    /// up by matched generators of `−E(s)D`.
    pub kappas: Vec<f64>,
    /// Certified non-emptiness of `W(s)`. Only established when aligned.
    pub w_nonempty: bool,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub records: Vec<AlignmentRecord>,
}

impl AlignmentReport {
    pub fn passed(&self) -> bool {
        !self.records.is_empty()
            && self.records.iter().all(|r| {
                r.aligned && r.w_nonempty && r.kappas.iter().all(|&k| 1.0 - k >= -KAPPA_TOL)
            })
    }

    pub fn first_failure(&self) -> Option<&AlignmentRecord> {
        self.records.iter().find(|r| !r.aligned)
    }
}

fn sin_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    let (ua, ub) = (a / na, b / nb);
    // norm of the rejection keeps precision near parallel vectors
    (&ua - &ub * ua.dot(&ub)).norm()
}

/// Matches every generator of `neg_ed` to a class of parallel generators of
/// `bu` and returns the per-generator scale of `bu`.
fn match_generators(bu: &Zonotope, neg_ed: &Zonotope) -> std::result::Result<Vec<f64>, (usize, String)> {
    // direction classes: representative, member generators, total length, used length
    struct Class {
        dir: DVector<f64>,
        members: Vec<usize>,
        total: f64,
        used: f64,
    }
    let mut classes: Vec<Class> = Vec::new();
    let mut class_of = vec![None; bu.num_generators()];
    for i in 0..bu.num_generators() {
        let g = bu.generator(i);
        let len = g.norm();
        if len == 0.0 {
            continue;
        }
        match classes.iter().position(|c| sin_angle(&c.dir, &g) <= PARALLEL_TOL) {
            Some(ci) => {
                classes[ci].members.push(i);
                classes[ci].total += len;
                class_of[i] = Some(ci);
            }
            None => {
                class_of[i] = Some(classes.len());
                classes.push(Class {
                    dir: g,
                    members: vec![i],
                    total: len,
                    used: 0.0,
                });
            }
        }
    }
    for j in 0..neg_ed.num_generators() {
        let g = neg_ed.generator(j);
        let len = g.norm();
        if len == 0.0 {
            continue;
        }
        let Some(ci) = classes.iter().position(|c| sin_angle(&c.dir, &g) <= PARALLEL_TOL) else {
            return Err((j, "is not parallel to any generator of B(s)U".into()));
        };
        classes[ci].used += len;
        let kappa = classes[ci].used / classes[ci].total;
        if kappa > 1.0 + KAPPA_TOL {
            return Err((
                j,
                format!("exceeds the matching generators of B(s)U (kappa = {kappa})"),
            ));
        }
    }
    Ok(class_of
        .iter()
        .map(|c| c.map_or(0.0, |ci| classes[ci].used / classes[ci].total))
        .collect())
}

/// Minkowski difference of aligned zonotopes.
fn trim(bu: &Zonotope, neg_ed: &Zonotope) -> std::result::Result<Zonotope, (usize, String)> {
    let kappas = match_generators(bu, neg_ed)?;
    let mut generators = bu.generators.clone();
    for (i, k) in kappas.iter().enumerate() {
        let scale = (1.0 - k).max(0.0);
        generators.column_mut(i).scale_mut(scale);
    }
    Ok(Zonotope::new(&bu.center - &neg_ed.center, generators))
}
