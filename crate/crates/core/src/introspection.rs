//! Post-hoc analyses of trained members: first-layer weight importance,
//! pixel masks, feature trajectories over T and the long-time period study.

use std::fmt::Write as _;

use ndarray::Array2;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{extract_features, NetworkParams};
use crate::clustering::{kmeans_assign, ClusterModel};
use crate::dynamics::{fidelity, ControlProblem, ModelId, Protocol};
use crate::error::{check_len, MctError, Result};
use crate::landscape::{Landscape, LandscapeDataset, MeshSpec};

/// How the normalized first-layer weights are reduced over hidden nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeAggregation {
    /// Mean over nodes, then mean over architectures. Values in [0, 1].
    #[default]
    Mean,
    /// Sum over nodes, then mean over architectures.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    /// Per-pixel importance aggregated over the ensemble.
    pub mean: Vec<f64>,
    /// Per-architecture node-reduced maps, in ensemble order.
    pub per_architecture: Vec<Vec<f64>>,
    pub aggregation: NodeAggregation,
}

/// `|w| / max |w|` over the L1 weights (`input_dim x n_hidden`).
/// An all-zero matrix stays zero.
pub fn normalized_input_weights(params: &NetworkParams) -> Array2<f64> {
    let w = params.input_weights();
    let max = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return Array2::zeros(w.raw_dim());
    }
    w.mapv(|x| x.abs() / max)
}

pub fn weight_importance(members: &[&NetworkParams], aggregation: NodeAggregation) -> Result<ImportanceMap> {
    let first = members
        .first()
        .ok_or_else(|| MctError::param("weight importance needs at least one member"))?;
    let dim = first.spec.input_dim;
    let mut per_architecture = Vec::with_capacity(members.len());
    for m in members {
        check_len("member input_dim", dim, m.spec.input_dim)?;
        let norm = normalized_input_weights(m);
        let sums = norm.sum_axis(ndarray::Axis(1));
        let map: Vec<f64> = match aggregation {
            NodeAggregation::Mean => sums.iter().map(|s| s / m.spec.n_hidden as f64).collect(),
            NodeAggregation::Sum => sums.to_vec(),
        };
        per_architecture.push(map);
    }
    let n = members.len() as f64;
    let mut mean = vec![0.0; dim];
    for map in &per_architecture {
        for (a, v) in mean.iter_mut().zip(map) {
            *a += v;
        }
    }
    for a in &mut mean {
        *a /= n;
    }
    Ok(ImportanceMap {
        mean,
        per_architecture,
        aggregation,
    })
}

/// Pixels whose importance is at least `threshold`.
pub fn select_pixels(map: &ImportanceMap, threshold: f64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MctError::param(format!("threshold must be in [0, 1], got {threshold}")));
    }
    Ok(map.mean.iter().map(|&v| v >= threshold).collect())
}

/// Jaccard overlap between a mask and its image under the 180° grid
/// rotation. An empty mask scores 1.
pub fn rotation_jaccard(mask: &[bool], mesh: &MeshSpec) -> Result<f64> {
    check_len("pixel mask", mesh.pixel_count(), mask.len())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (j, &a) in mask.iter().enumerate() {
        let b = mask[mesh.mirrored(j)];
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn eps_header(n: usize) -> String {
    (1..=n).map(|i| format!("eps{i}")).collect::<Vec<_>>().join(",")
}

/// Landscape pixels in flattening order with their mask bit.
pub fn overlay_mask(landscape: &Landscape, mask: &[bool]) -> Result<String> {
    let mesh = &landscape.mesh;
    check_len("pixel mask", mesh.pixel_count(), mask.len())?;
    let mut s = format!("{},fidelity,selected\n", eps_header(mesh.n_segments()));
    for (j, (&f, &m)) in landscape.pixels.iter().zip(mask).enumerate() {
        for e in mesh.point(j) {
            write!(s, "{e},").unwrap();
        }
        writeln!(s, "{f},{}", u8::from(m)).unwrap();
    }
    Ok(s)
}

/// `pixel_index,eps1,..,importance`.
pub fn importance_csv(map: &ImportanceMap, mesh: &MeshSpec) -> Result<String> {
    check_len("importance map", mesh.pixel_count(), map.mean.len())?;
    let mut s = format!("pixel_index,{},importance\n", eps_header(mesh.n_segments()));
    for (j, v) in map.mean.iter().enumerate() {
        write!(s, "{j},").unwrap();
        for e in mesh.point(j) {
            write!(s, "{e},").unwrap();
        }
        writeln!(s, "{v}").unwrap();
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub total_time: f64,
    pub features: Vec<f64>,
    pub cluster: usize,
}

/// Features and cluster of every landscape, sorted by total time.
pub fn feature_trajectories(
    member: &NetworkParams,
    model: &ClusterModel,
    dataset: &LandscapeDataset,
) -> Result<Vec<TrajectoryRow>> {
    check_len("member input_dim", dataset.pixel_count(), member.spec.input_dim)?;
    let mut rows = dataset
        .landscapes
        .iter()
        .map(|l| {
            let features = extract_features(member, &l.pixels)?;
            let cluster = kmeans_assign(model, &features)?;
            Ok(TrajectoryRow {
                total_time: l.total_time,
                features,
                cluster,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.total_time.total_cmp(&b.total_time));
    Ok(rows)
}

pub fn trajectories_csv(rows: &[TrajectoryRow]) -> String {
    let width = rows.first().map_or(0, |r| r.features.len());
    let mut s = String::from("total_time");
    for i in 0..width {
        write!(s, ",f{i}").unwrap();
    }
    s.push_str(",cluster\n");
    for r in rows {
        write!(s, "{}", r.total_time).unwrap();
        for f in &r.features {
            write!(s, ",{f}").unwrap();
        }
        writeln!(s, ",{}", r.cluster).unwrap();
    }
    s
}

/// Time of the single split that best separates the two most common
/// clusters along the (sorted) trajectory: the first time of the later
/// side. Rows from other clusters count as disagreements. Ties go to the
/// earliest split.
pub fn transition_time(rows: &[TrajectoryRow]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(MctError::Analysis("trajectory too short for a transition".into()));
    }
    let k = rows.iter().map(|r| r.cluster).max().unwrap() + 1;
    let mut counts = vec![0usize; k];
    for r in rows {
        counts[r.cluster] += 1;
    }
    let mut by_count: Vec<usize> = (0..k).collect();
    by_count.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    if by_count.len() < 2 || counts[by_count[1]] == 0 {
        return Err(MctError::Analysis("trajectory stays in one cluster".into()));
    }
    let (a, b) = (by_count[0], by_count[1]);
    let mut best = (0usize, 0usize);
    for (early, late) in [(a, b), (b, a)] {
        let mut score = rows.iter().filter(|r| r.cluster == late).count();
        for s in 1..rows.len() {
            let r = &rows[s - 1];
            score += usize::from(r.cluster == early);
            score -= usize::from(r.cluster == late);
            if score > best.0 || (score == best.0 && s < best.1) {
                best = (score, s);
            }
        }
    }
    Ok(rows[best.1].total_time)
}

/// Fidelity with every control amplitude at zero, for each total time.
pub fn center_fidelity_curve(problem: &ControlProblem, times: &[f64]) -> Result<Vec<f64>> {
    if problem.model_id != ModelId::Lz {
        return Err(MctError::param("center fidelity curve is defined for the LZ model"));
    }
    times
        .iter()
        .map(|&t| fidelity(problem, &Protocol::new(vec![0.0], t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub period: f64,
    pub method: String,
    pub samples: usize,
}

const MIN_OSCILLATIONS: f64 = 3.0;
const ZERO_PAD: usize = 16;

/// Period of the dominant oscillation: DFT of the mean-removed series,
/// zero-padded to at least 16x its length, with the peak bin refined by a
/// parabola through its neighbours.
pub fn estimate_period(t: &[f64], y: &[f64]) -> Result<PeriodEstimate> {
    check_len("period series", t.len(), y.len())?;
    let n = t.len();
    if n < 4 {
        return Err(MctError::param("period estimate needs at least 4 samples"));
    }
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0)) {
        return Err(MctError::param("period estimate needs uniformly spaced times"));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if y.iter().all(|v| (v - mean).abs() <= 1e-12 * scale) {
        return Err(MctError::Analysis("series is flat; no dominant frequency".into()));
    }

    let len = (n * ZERO_PAD).next_power_of_two();
    let mut buf: Vec<Complex64> = y.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2 + 1].iter().map(|c| c.norm()).collect();

    let k = (1..len / 2)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]).then(b.cmp(&a)))
        .unwrap();
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    let freq = (k as f64 + shift) / (len as f64 * dt);
    if !(freq > 0.0) {
        return Err(MctError::Analysis("no non-zero dominant frequency".into()));
    }
    let period = 1.0 / freq;
    let span = t[n - 1] - t[0];
    if span / period < MIN_OSCILLATIONS {
        return Err(MctError::Analysis(format!(
            "only {:.2} oscillations of period {period:.4} in a span of {span:.4}; need at least {MIN_OSCILLATIONS}",
            span / period
        )));
    }
    Ok(PeriodEstimate {
        period,
        method: "dft-zero-padded-quadratic-peak".into(),
        samples: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodComparison {
    pub delta: f64,
    pub tau_accuracy: f64,
    pub two_tau_fidelity: f64,
    pub ratio: f64,
}

/// Periods of the accuracy curve and of the zero-control fidelity over
/// the same grid, and `tau_accuracy / (2 tau_fidelity)`.
pub fn compare_periods(problem: &ControlProblem, t_aux: &[f64], accuracy: &[f64]) -> Result<PeriodComparison> {
    let tau_accuracy = estimate_period(t_aux, accuracy)?.period;
    let f = center_fidelity_curve(problem, t_aux)?;
    let two_tau_fidelity = 2.0 * estimate_period(t_aux, &f)?.period;
    Ok(PeriodComparison {
        delta: problem.delta,
        tau_accuracy,
        two_tau_fidelity,
        ratio: tau_accuracy / two_tau_fidelity,
    })
}

pub fn periods_csv(rows: &[PeriodComparison]) -> String {
    let mut s = String::from("delta,tau_accuracy,two_tau_fidelity,ratio\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.delta, r.tau_accuracy, r.two_tau_fidelity, r.ratio).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{init_network, ArchitectureSpec};
    use crate::dynamics::build_problem;
    use crate::landscape::{generate_dataset, generate_landscape};
    use std::f64::consts::{PI, TAU};

    fn lz(delta: f64) -> ControlProblem {
        build_problem(ModelId::Lz, delta, 0.0, 0.0).unwrap()
    }

    fn member(dim: usize, seed: u64) -> NetworkParams {
        init_network(ArchitectureSpec::new(dim, 6, 2).unwrap(), seed).unwrap()
    }

    #[test]
    fn uniform_weights_give_ones() {
        let mut m = member(9, 1);
        m.layers[0].weights.fill(-0.3);
        let map = weight_importance(&[&m], NodeAggregation::Mean).unwrap();
        assert!(map.mean.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dominant_pixel_wins_and_scaling_is_irrelevant() {
        let mut m = member(9, 2);
        m.layers[0].weights.row_mut(4).mapv_inplace(|_| 10.0);
        let map = weight_importance(&[&m], NodeAggregation::Mean).unwrap();
        let argmax = map.mean.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 4);

        let other = member(9, 3);
        let mut scaled = other.clone();
        scaled.layers[0].weights.mapv_inplace(|x| x * 7.5);
        let a = weight_importance(&[&m, &other], NodeAggregation::Mean).unwrap();
        let b = weight_importance(&[&m, &scaled], NodeAggregation::Mean).unwrap();
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_matrix_peaks_at_one() {
        for seed in 0..5 {
            let w = normalized_input_weights(&member(12, seed));
            assert_eq!(w.iter().cloned().fold(0.0, f64::max), 1.0);
            assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn sum_reading_scales_by_node_count() {
        let m = member(9, 4);
        let mean = weight_importance(&[&m], NodeAggregation::Mean).unwrap();
        let sum = weight_importance(&[&m], NodeAggregation::Sum).unwrap();
        for (a, b) in mean.mean.iter().zip(&sum.mean) {
            assert!((a * 6.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn input_dim_mismatch() {
        let (a, b) = (member(9, 1), member(10, 1));
        assert!(matches!(
            weight_importance(&[&a, &b], NodeAggregation::Mean),
            Err(MctError::Shape { .. })
        ));
    }

    #[test]
    fn thresholds() {
        let map = weight_importance(&[&member(25, 6), &member(25, 7)], NodeAggregation::Mean).unwrap();
        assert!(select_pixels(&map, 0.0).unwrap().iter().all(|&b| b));
        let top = map.mean.iter().cloned().fold(0.0, f64::max);
        if top < 1.0 {
            assert!(select_pixels(&map, (top + 1.0) / 2.0).unwrap().iter().all(|&b| !b));
        }
        assert!(select_pixels(&map, 1.01).is_err());
        assert!(select_pixels(&map, -0.1).is_err());
        let hi = select_pixels(&map, 0.7).unwrap();
        let lo = select_pixels(&map, 0.5).unwrap();
        assert!(hi.iter().zip(&lo).all(|(h, l)| !h || *l));
    }

    #[test]
    fn overlay_columns() {
        let mesh = MeshSpec::uniform(2, -1.0, 1.0, 3).unwrap();
        let l = generate_landscape(&lz(1.0), 2.0, &mesh).unwrap();
        let csv = overlay_mask(&l, &[false; 9]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "eps1,eps2,fidelity,selected");
        assert_eq!(lines.len(), 10);
        assert!(lines[1..].iter().all(|r| r.ends_with(",0")));
        assert!(lines[2].starts_with("-1,0,"));
        let full = overlay_mask(&l, &[true; 9]).unwrap();
        assert!(full.lines().skip(1).all(|r| r.ends_with(",1")));
        assert!(overlay_mask(&l, &[true; 8]).is_err());
    }

    #[test]
    fn jaccard_of_symmetric_and_lopsided_masks() {
        let mesh = MeshSpec::uniform(2, -1.0, 1.0, 3).unwrap();
        let mut mask = vec![false; 9];
        mask[0] = true;
        mask[8] = true;
        assert_eq!(rotation_jaccard(&mask, &mesh).unwrap(), 1.0);
        mask[8] = false;
        assert_eq!(rotation_jaccard(&mask, &mesh).unwrap(), 0.0);
    }

    #[test]
    fn trajectories_are_sorted_and_complete() {
        let mesh = MeshSpec::uniform(2, -2.0, 2.0, 4).unwrap();
        let ds = generate_dataset(&lz(1.0), 0.5, 6.0, 0.5, &mesh).unwrap();
        let m = member(16, 9);
        let model = ClusterModel {
            k: 2,
            centroids: vec![vec![0.0, 0.0], vec![0.5, 0.5]],
            inertia: 0.0,
            seed: 0,
        };
        let rows = feature_trajectories(&m, &model, &ds).unwrap();
        assert_eq!(rows.len(), ds.len());
        assert!(rows.windows(2).all(|w| w[0].total_time < w[1].total_time));
        assert!(rows.iter().all(|r| r.cluster < 2));

        let mut reversed = ds.clone();
        reversed.landscapes.reverse();
        reversed.times.reverse();
        assert_eq!(feature_trajectories(&m, &model, &reversed).unwrap(), rows);
        let csv = trajectories_csv(&rows);
        assert!(csv.starts_with("total_time,f0,f1,cluster\n"));
    }

    #[test]
    fn transition_finds_clean_step() {
        let rows: Vec<TrajectoryRow> = (0..20)
            .map(|i| TrajectoryRow {
                total_time: i as f64,
                features: vec![],
                cluster: usize::from(i >= 7),
            })
            .collect();
        assert_eq!(transition_time(&rows).unwrap(), 7.0);
        let mut noisy = rows.clone();
        noisy[2].cluster = 1;
        noisy[15].cluster = 0;
        assert_eq!(transition_time(&noisy).unwrap(), 7.0);
        let flipped: Vec<TrajectoryRow> = rows
            .iter()
            .map(|r| TrajectoryRow {
                cluster: 1 - r.cluster,
                ..r.clone()
            })
            .collect();
        assert_eq!(transition_time(&flipped).unwrap(), 7.0);
    }

    #[test]
    fn center_fidelity_is_rabi_at_zero_field() {
        for delta in [0.5, 1.0, 1.7] {
            let t: Vec<f64> = (1..=400).map(|i| i as f64 * 0.05).collect();
            let f = center_fidelity_curve(&lz(delta), &t).unwrap();
            for (ti, fi) in t.iter().zip(&f) {
                assert!((fi - (delta * ti / 2.0).sin().powi(2)).abs() < 1e-10);
            }
        }
        let f = center_fidelity_curve(&lz(1.0), &[PI, TAU]).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-10 && f[1].abs() < 1e-10);
        let glz = build_problem(ModelId::GeneralizedLz3, 1.0, 1.0, 1.0).unwrap();
        assert!(center_fidelity_curve(&glz, &[1.0]).is_err());
    }

    #[test]
    fn period_of_canonical_signals() {
        let t: Vec<f64> = (0..=5000).map(|i| i as f64 * 0.01).collect();
        let sin2: Vec<f64> = t.iter().map(|x| (x / 2.0).sin().powi(2)).collect();
        let p = estimate_period(&t, &sin2).unwrap();
        assert!((p.period / TAU - 1.0).abs() < 0.01, "{}", p.period);
        assert_eq!(p.samples, 5001);
        let cos: Vec<f64> = t.iter().map(|x| x.cos()).collect();
        assert!((estimate_period(&t, &cos).unwrap().period / TAU - 1.0).abs() < 0.01);
        assert!(matches!(
            estimate_period(&t, &vec![0.3; t.len()]),
            Err(MctError::Analysis(_))
        ));
    }

    #[test]
    fn too_few_oscillations_is_an_analysis_error() {
        let t: Vec<f64> = (1..=1200).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|x| (x / 2.0).sin().powi(2)).collect();
        assert!(matches!(estimate_period(&t, &y), Err(MctError::Analysis(_))));
    }

    #[test]
    fn slow_fidelity_period_and_plumbing() {
        // delta = 0.5: fidelity period 4 pi, so the baseline is 8 pi.
        let delta = 0.5;
        let t: Vec<f64> = (1..=9980).map(|i| i as f64 * 0.01).collect();
        let acc: Vec<f64> = t.iter().map(|x| (x * delta / 2.0).cos()).collect();
        let c = compare_periods(&lz(delta), &t, &acc).unwrap();
        assert!(
            (c.two_tau_fidelity / (8.0 * PI) - 1.0).abs() < 0.01,
            "{}",
            c.two_tau_fidelity
        );
        assert!((c.ratio - 1.0).abs() < 0.01);
        let csv = periods_csv(&[c]);
        assert!(csv.starts_with("delta,tau_accuracy,two_tau_fidelity,ratio\n0.5,"));
    }
}
