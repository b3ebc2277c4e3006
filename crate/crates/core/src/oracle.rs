//! Property checks on the propagator against closed forms, shared by the
//! `oracle-check` subcommand and the test suites.

use std::f64::consts::PI;

use serde::Serialize;

use crate::dynamics::{build_problem, fidelity, propagate, rabi_oracle, ModelId, Protocol};
use crate::error::Result;
use crate::landscape::{generate_landscape, MeshSpec};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(OracleCheck::passed)
    }
}

/// Runs every check with `samples` random cases each (landscape symmetry
/// uses a fixed set of meshes and times).
pub fn run_oracle_suite(samples: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = SplitMix64::new(seed);
    let checks = vec![
        constant_control(samples, &mut rng)?,
        unitarity(samples, &mut rng)?,
        zero_control(samples, &mut rng)?,
        landscape_symmetry()?,
    ];
    Ok(OracleReport { checks })
}

fn constant_control(samples: usize, rng: &mut SplitMix64) -> Result<OracleCheck> {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let delta = rng.uniform(0.2, 2.0);
        let eps = rng.uniform(-5.0, 5.0);
        let t = rng.uniform(0.01, 50.0);
        let segments = 1 + rng.below(4);
        let problem = build_problem(ModelId::Lz, delta, 0.0, 0.0)?;
        let f = fidelity(&problem, &Protocol::new(vec![eps; segments], t))?;
        worst = worst.max((f - rabi_oracle(delta, eps, t)).abs());
    }
    Ok(OracleCheck {
        name: "constant control matches Rabi formula",
        cases: samples,
        max_error: worst,
        tolerance: 1e-10,
    })
}

fn unitarity(samples: usize, rng: &mut SplitMix64) -> Result<OracleCheck> {
    let mut worst = 0.0f64;
    for i in 0..samples {
        let model = if i % 2 == 0 {
            ModelId::Lz
        } else {
            ModelId::GeneralizedLz3
        };
        let problem = build_problem(
            model,
            rng.uniform(0.2, 2.0),
            rng.uniform(0.2, 2.0),
            rng.uniform(0.2, 2.0),
        )?;
        let amps = (0..1 + rng.below(4)).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let u = propagate(&problem, &Protocol::new(amps, rng.uniform(0.01, 50.0)))?;
        worst = worst.max(u.unitarity_defect());
    }
    Ok(OracleCheck {
        name: "propagator is unitary",
        cases: samples,
        max_error: worst,
        tolerance: 1e-12,
    })
}

fn zero_control(samples: usize, rng: &mut SplitMix64) -> Result<OracleCheck> {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let delta = rng.uniform(0.2, 2.0);
        let t = rng.uniform(0.01, 50.0);
        let problem = build_problem(ModelId::Lz, delta, 0.0, 0.0)?;
        let f = fidelity(&problem, &Protocol::new(vec![0.0; 2], t))?;
        worst = worst.max((f - (0.5 * delta * t).sin().powi(2)).abs());
    }
    Ok(OracleCheck {
        name: "zero control gives sin^2(delta T / 2)",
        cases: samples,
        max_error: worst,
        tolerance: 1e-10,
    })
}

/// Transpose and point-reflection symmetry of two-segment LZ landscapes.
fn landscape_symmetry() -> Result<OracleCheck> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (delta, count) in [(1.0, 21), (0.7, 30), (1.5, 17)] {
        let mesh = MeshSpec::uniform(2, -5.0, 5.0, count)?;
        let problem = build_problem(ModelId::Lz, delta, 0.0, 0.0)?;
        for t in [0.3, 1.0, PI / delta, 4.7, 9.9] {
            let l = generate_landscape(&problem, t, &mesh)?;
            for j in 0..mesh.pixel_count() {
                let idx = mesh.unravel(j);
                let transposed = mesh.ravel(&[idx[1], idx[0]]);
                worst = worst
                    .max((l.pixels[j] - l.pixels[transposed]).abs())
                    .max((l.pixels[j] - l.pixels[mesh.mirrored(j)]).abs());
            }
            cases += 1;
        }
    }
    Ok(OracleCheck {
        name: "LZ landscape transpose and rotation symmetry",
        cases,
        max_error: worst,
        tolerance: 1e-10,
    })
}
