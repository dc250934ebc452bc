//! Built-in problem setups.

use crate::characteristics::TimeGrid;
use crate::config::{Entry, GridConfig, OracleConfig, OutputConfig, RunConfig, SystemConfig};
use crate::cost::{ConvexCost, CostSpec};
use crate::ltv::LtvSystem;
use crate::zonotope::ZonotopeSpec;

fn rows(m: &[&[&str]]) -> Vec<Vec<Entry>> {
    m.iter().map(|r| r.iter().map(|&s| Entry::from(s)).collect()).collect()
}

fn example_matrices(disturbance_scale: &str) -> SystemConfig {
    SystemConfig {
        a: rows(&[
            &["0", "1", "0"],
            &["-(sqrt(4+2*cos(2*t))^2)", "0", "1"],
            &["0", "0", "0"],
        ]),
        b: rows(&[&["0", "0"], &["1", "0"], &["0", "1"]]),
        e: vec![
            vec![Entry::from("0")],
            vec![Entry::Expr(format!("{disturbance_scale}*(0.5+0.5*sin(pi/2*t))"))],
            vec![Entry::from("0")],
        ],
        u: ZonotopeSpec::unit_box(2),
        d: ZonotopeSpec::unit_box(1),
    }
}

/// The three-state oscillator with a time-varying disturbance gain
/// `k_d(t) = 0.5 + 0.5 sin(πt/2)` on `[0, 1.5]`, cost `‖x‖`, five levels.
pub fn example_config() -> RunConfig {
    let mut sys = example_matrices("1");
    sys.e[1][0] = Entry::from("0.5+0.5*sin(pi/2*t)");
    RunConfig {
        system: sys,
        cost: CostSpec::EuclideanNorm { center: vec![0.0; 3] },
        levels: vec![0.0, 0.3, 0.6, 0.9, 1.2],
        counts: vec![85, 84, 84, 84, 84],
        grid: GridConfig {
            t0: 0.0,
            t_final: 1.5,
            step: 0.0083,
        },
        seed: 0,
        output: OutputConfig::default(),
        oracle: OracleConfig {
            grid: Some("-1:1:61,-1:1:61,-1:1:61".into()),
            ..OracleConfig::default()
        },
    }
}

pub fn example_system() -> LtvSystem {
    example_config().build_system().expect("preset system is valid")
}

/// The example system with the disturbance gain multiplied by `factor`.
pub fn example_system_with_disturbance_scale(factor: f64) -> LtvSystem {
    let mut cfg = example_config();
    cfg.system = example_matrices(&format!("{factor:?}"));
    cfg.build_system().expect("scaled system parses")
}

/// A reduced version of the example for quick tests.
pub fn example_problem_small() -> (LtvSystem, ConvexCost, Vec<f64>, Vec<usize>, TimeGrid) {
    let cfg = example_config();
    let p = cfg.build().expect("preset is valid");
    (p.system, p.cost, vec![0.0, 0.3, 0.6], vec![9, 12, 12], p.grid)
}

/// Double integrator `ẋ1 = x2`, `ẋ2 = u + 0.5 d` with `|u|, |d| ≤ 1`, cost
/// `‖x‖` on `[0, 1]`.
pub fn double_integrator_config() -> RunConfig {
    RunConfig {
        system: SystemConfig {
            a: rows(&[&["0", "1"], &["0", "0"]]),
            b: rows(&[&["0"], &["1"]]),
            e: rows(&[&["0"], &["0.5"]]),
            u: ZonotopeSpec::unit_box(1),
            d: ZonotopeSpec::unit_box(1),
        },
        cost: CostSpec::EuclideanNorm { center: vec![0.0; 2] },
        levels: (0..=12).map(|k| 0.25 * k as f64).collect(),
        counts: vec![64; 13],
        grid: GridConfig {
            t0: 0.0,
            t_final: 1.0,
            step: 0.005,
        },
        seed: 0,
        output: OutputConfig::default(),
        oracle: OracleConfig {
            grid: Some("-2:2:201,-2:2:201".into()),
            ..OracleConfig::default()
        },
    }
}
