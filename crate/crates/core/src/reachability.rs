//! Certified backward-reachable-set membership from the value bounds.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bounds::{bound_interval, BoundInterval, GridSpec};
use crate::characteristics::CharacteristicBundle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReachLabel {
    /// `v̄ ≤ γ`: player I can force the state into `{g ≤ γ}`.
    ReachInner,
    /// `v̲ > γ`: player II can keep the state out of `{g ≤ γ}`.
    AvoidInner,
    Unknown,
}

impl ReachLabel {
    pub fn code(self) -> i8 {
        match self {
            ReachLabel::ReachInner => 1,
            ReachLabel::AvoidInner => -1,
            ReachLabel::Unknown => 0,
        }
    }

    pub fn from_code(code: i8) -> Option<Self> {
        match code {
            1 => Some(ReachLabel::ReachInner),
            -1 => Some(ReachLabel::AvoidInner),
            0 => Some(ReachLabel::Unknown),
            _ => None,
        }
    }

    pub fn from_interval(iv: &BoundInterval, gamma: f64) -> Self {
        if iv.upper <= gamma {
            ReachLabel::ReachInner
        } else if iv.lower > gamma {
            ReachLabel::AvoidInner
        } else {
            ReachLabel::Unknown
        }
    }
}

pub fn classify(bundle: &CharacteristicBundle, t: f64, x: &DVector<f64>, gamma: f64) -> Result<ReachLabel> {
    if !gamma.is_finite() {
        return Err(Error::Invalid("gamma must be finite".into()));
    }
    Ok(ReachLabel::from_interval(&bound_interval(bundle, t, x)?, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReachSummary {
    pub reach: usize,
    pub avoid: usize,
    pub unknown: usize,
}

impl ReachSummary {
    pub fn total(&self) -> usize {
        self.reach + self.avoid + self.unknown
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        let n = self.total().max(1) as f64;
        (self.reach as f64 / n, self.avoid as f64 / n, self.unknown as f64 / n)
    }

    pub fn tally(labels: &[ReachLabel]) -> Self {
        let mut s = ReachSummary::default();
        for l in labels {
            match l {
                ReachLabel::ReachInner => s.reach += 1,
                ReachLabel::AvoidInner => s.avoid += 1,
                ReachLabel::Unknown => s.unknown += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ReachTable {
    pub points: Vec<DVector<f64>>,
    pub labels: Vec<ReachLabel>,
    pub summary: ReachSummary,
}

pub fn classify_grid(bundle: &CharacteristicBundle, t: f64, spec: &GridSpec, gamma: f64) -> Result<ReachTable> {
    let points = spec.points();
    let labels = points
        .par_iter()
        .map(|x| classify(bundle, t, x, gamma))
        .collect::<Result<Vec<_>>>()?;
    let summary = ReachSummary::tally(&labels);
    Ok(ReachTable {
        points,
        labels,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::AxisSpec;
    use crate::characteristics::precompute;
    use crate::presets;

    fn bundle() -> CharacteristicBundle {
        let (sys, cost, gammas, counts, grid) = presets::example_problem_small();
        precompute(&sys, &cost, &gammas, &counts, &grid, 0).unwrap()
    }

    #[test]
    fn labels_follow_intervals() {
        let iv = |lower, upper| BoundInterval {
            lower,
            upper,
            k_upper: 0,
            argmax_lower: (0, 0),
            node: 0,
            time: 0.0,
            snapped: false,
            qp_converged: true,
            qp_iterations: 0,
        };
        assert_eq!(ReachLabel::from_interval(&iv(0.1, 0.3), 0.3), ReachLabel::ReachInner);
        assert_eq!(ReachLabel::from_interval(&iv(0.4, 0.5), 0.3), ReachLabel::AvoidInner);
        // ties on the lower bound stay undecided
        assert_eq!(ReachLabel::from_interval(&iv(0.3, 0.5), 0.3), ReachLabel::Unknown);
        for l in [ReachLabel::ReachInner, ReachLabel::AvoidInner, ReachLabel::Unknown] {
            assert_eq!(ReachLabel::from_code(l.code()), Some(l));
        }
    }

    #[test]
    fn characteristic_points_are_reachable() {
        let b = bundle();
        let m = b.grid.locate(0.0).unwrap().index;
        for tr in &b.tuples {
            let gamma = b.levels.levels[tr.level].gamma;
            let x = &tr.xi[m];
            assert_eq!(classify(&b, 0.0, x, gamma + 1e-9).unwrap(), ReachLabel::ReachInner);
        }
    }

    #[test]
    fn grid_monotone_in_gamma() {
        let b = bundle();
        let spec = GridSpec::Axes(vec![AxisSpec { min: -1.0, max: 1.0, count: 7 }; 3]);
        let lo = classify_grid(&b, 0.0, &spec, 0.3).unwrap();
        let hi = classify_grid(&b, 0.0, &spec, 0.6).unwrap();
        for (a, c) in lo.labels.iter().zip(&hi.labels) {
            if *a == ReachLabel::ReachInner {
                assert_eq!(*c, ReachLabel::ReachInner);
            }
            if *c == ReachLabel::AvoidInner {
                assert_eq!(*a, ReachLabel::AvoidInner);
            }
        }
        assert_eq!(ReachSummary::tally(&lo.labels), lo.summary);
        assert_eq!(lo.summary.total(), 343);
        let huge = classify_grid(&b, 0.0, &spec, 1e6).unwrap();
        assert_eq!(huge.summary.reach, 343);
        let none = classify_grid(&b, 0.0, &spec, -1.0).unwrap();
        assert_eq!(none.summary.reach, 0);
    }
}
