//! Fidelity landscapes over a uniform control mesh, and datasets of them
//! indexed by total evolution time.

mod file;
mod split;

pub use file::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use split::{read_split_manifest, split_dataset, write_split_manifest, FourWaySplit};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_fidelity, segment_propagator, ControlProblem};
use crate::error::{MctError, Result};
use crate::linalg::ComplexMatrix;

/// One control axis: `count` uniformly spaced points from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn point(&self, m: usize) -> f64 {
        self.min + m as f64 * (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|m| self.point(m)).collect()
    }
}

/// Per-segment axes of the control mesh; one axis per piecewise segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub axes: Vec<Axis>,
}

impl MeshSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        let mesh = Self { axes };
        mesh.validate()?;
        Ok(mesh)
    }

    /// `n_ts` identical axes.
    pub fn uniform(n_ts: usize, min: f64, max: f64, count: usize) -> Result<Self> {
        Self::new(vec![Axis::new(min, max, count); n_ts])
    }

    /// 100 points on [-5, 5] for both segments.
    pub fn default_two_segment() -> Self {
        Self::uniform(2, -5.0, 5.0, 100).expect("static mesh is valid")
    }

    /// 100 x 100 points on [-5, 5] for the first two segments and the 11
    /// integers -5..=5 for the third.
    pub fn default_three_segment() -> Self {
        Self::new(vec![
            Axis::new(-5.0, 5.0, 100),
            Axis::new(-5.0, 5.0, 100),
            Axis::new(-5.0, 5.0, 11),
        ])
        .expect("static mesh is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(MctError::param("mesh needs at least one axis"));
        }
        for (k, a) in self.axes.iter().enumerate() {
            if a.count < 2 {
                return Err(MctError::param(format!("mesh axis {k} needs at least 2 points")));
            }
            if !a.min.is_finite() || !a.max.is_finite() || !(a.max > a.min) {
                return Err(MctError::param(format!(
                    "mesh axis {k} needs finite min < max, got [{}, {}]",
                    a.min, a.max
                )));
            }
        }
        Ok(())
    }

    pub fn n_segments(&self) -> usize {
        self.axes.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Per-axis grid indices of flattened pixel `j` (last axis fastest).
    pub fn unravel(&self, mut j: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = j % a.count;
            j /= a.count;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    /// Control amplitudes of flattened pixel `j`.
    pub fn point(&self, j: usize) -> Vec<f64> {
        self.unravel(j)
            .iter()
            .zip(&self.axes)
            .map(|(&m, a)| a.point(m))
            .collect()
    }

    /// Index of the pixel whose grid indices are all mirrored
    /// (`m -> count - 1 - m` on every axis).
    pub fn mirrored(&self, j: usize) -> usize {
        let idx: Vec<usize> = self
            .unravel(j)
            .iter()
            .zip(&self.axes)
            .map(|(&m, a)| a.count - 1 - m)
            .collect();
        self.ravel(&idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub total_time: f64,
    pub mesh: MeshSpec,
    pub pixels: Vec<f64>,
}

impl Landscape {
    pub fn max_pixel(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates the fidelity at every mesh point for total time `total_time`.
///
/// Segment propagators are computed once per axis value and the state is
/// pushed through the segments axis by axis, so cost is dominated by one
/// small matrix-vector product per pixel.
pub fn generate_landscape(problem: &ControlProblem, total_time: f64, mesh: &MeshSpec) -> Result<Landscape> {
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(MctError::param(format!(
            "total time must be positive, got {total_time}"
        )));
    }
    mesh.validate()?;
    let dt = total_time / mesh.n_segments() as f64;

    let mut per_axis: Vec<Vec<ComplexMatrix>> = Vec::with_capacity(mesh.n_segments());
    for (k, axis) in mesh.axes.iter().enumerate() {
        let mut props = Vec::with_capacity(axis.count);
        for m in 0..axis.count {
            let eps = axis.point(m);
            let u = segment_propagator(&problem.hamiltonian(eps), dt).map_err(|e| {
                MctError::Numeric(format!(
                    "propagator failed at T={total_time}, axis {k} index {m} (eps={eps}): {e}"
                ))
            })?;
            props.push(u);
        }
        per_axis.push(props);
    }

    // States after all but the last segment, in flattened prefix order.
    let mut states: Vec<Vec<Complex64>> = vec![problem.initial_state.clone()];
    for props in &per_axis[..per_axis.len() - 1] {
        states = states
            .iter()
            .flat_map(|psi| props.iter().map(move |u| u.mul_vec(psi)))
            .collect();
    }
    // ⟨f|U for each value of the last axis.
    let rows: Vec<Vec<Complex64>> = per_axis[per_axis.len() - 1]
        .iter()
        .map(|u| {
            let n = u.dim();
            (0..n)
                .map(|c| (0..n).map(|r| problem.target_state[r].conj() * u.get(r, c)).sum())
                .collect()
        })
        .collect();

    let mut pixels = Vec::with_capacity(mesh.pixel_count());
    for psi in &states {
        for row in &rows {
            let amp: Complex64 = row.iter().zip(psi).map(|(a, b)| a * b).sum();
            let f = clamp_fidelity(amp.norm_sqr()).map_err(|e| {
                let j = pixels.len();
                MctError::Numeric(format!("pixel {j} at eps={:?}, T={total_time}: {e}", mesh.point(j)))
            })?;
            pixels.push(f);
        }
    }
    Ok(Landscape {
        total_time,
        mesh: mesh.clone(),
        pixels,
    })
}

/// `t_start, t_start + t_step, ...` up to `t_end` (half-step tolerance).
/// Each time is computed as `t_start + i * t_step` so no error accumulates.
pub fn time_grid(t_start: f64, t_end: f64, t_step: f64) -> Result<Vec<f64>> {
    if !(t_step > 0.0) || !t_step.is_finite() {
        return Err(MctError::param(format!("time step must be positive, got {t_step}")));
    }
    if !(t_start > 0.0) || !(t_end >= t_start) || !t_end.is_finite() {
        return Err(MctError::param(format!(
            "time range needs 0 < t_start <= t_end, got [{t_start}, {t_end}]"
        )));
    }
    let n = ((t_end - t_start) / t_step + 0.5).floor() as usize + 1;
    // Round to 12 significant decimals so 0.01 * 3 prints as 0.03.
    Ok((0..n).map(|i| round_time(t_start + i as f64 * t_step)).collect())
}

fn round_time(t: f64) -> f64 {
    let scale = 1e12;
    (t * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeDataset {
    pub problem: ControlProblem,
    pub mesh: MeshSpec,
    pub times: Vec<f64>,
    pub landscapes: Vec<Landscape>,
    pub seed: u64,
}

impl LandscapeDataset {
    pub fn from_landscapes(
        problem: ControlProblem,
        mesh: MeshSpec,
        landscapes: Vec<Landscape>,
        seed: u64,
    ) -> Result<Self> {
        if landscapes.is_empty() {
            return Err(MctError::param("dataset needs at least one landscape"));
        }
        let times: Vec<f64> = landscapes.iter().map(|l| l.total_time).collect();
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MctError::param("landscape times must be strictly increasing"));
        }
        for l in &landscapes {
            if l.mesh != mesh || l.pixels.len() != mesh.pixel_count() {
                return Err(MctError::param("all landscapes must share the dataset mesh"));
            }
        }
        Ok(Self {
            problem,
            mesh,
            times,
            landscapes,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.landscapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landscapes.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.mesh.pixel_count()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&Landscape> {
        indices.iter().map(|&i| &self.landscapes[i]).collect()
    }
}

/// One landscape per time in [`time_grid`]`(t_start, t_end, t_step)`,
/// generated in parallel and merged in time order.
pub fn generate_dataset(
    problem: &ControlProblem,
    t_start: f64,
    t_end: f64,
    t_step: f64,
    mesh: &MeshSpec,
) -> Result<LandscapeDataset> {
    let times = time_grid(t_start, t_end, t_step)?;
    let landscapes = times
        .par_iter()
        .map(|&t| generate_landscape(problem, t, mesh))
        .collect::<Result<Vec<_>>>()?;
    LandscapeDataset::from_landscapes(problem.clone(), mesh.clone(), landscapes, 0)
}

/// Time of the landscape holding the dataset-wide maximum pixel; ties go
/// to the earliest time.
pub fn empirical_mct(dataset: &LandscapeDataset) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for l in &dataset.landscapes {
        let m = l.max_pixel();
        if best.is_none_or(|(b, _)| m > b) {
            best = Some((m, l.total_time));
        }
    }
    best.map(|(_, t)| t)
        .ok_or_else(|| MctError::param("empirical MCT of an empty dataset"))
}
