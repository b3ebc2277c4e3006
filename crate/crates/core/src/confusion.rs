//! Confusion sweep: label samples by a trial boundary `t_aux`, score the
//! agreement with unsupervised clusters, average over the ensemble and
//! read the MCT estimate `T'` off the peak.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, MctError, Result};

/// 0 where `time < t_aux`, else 1.
pub fn auxiliary_labels(times: &[f64], t_aux: f64) -> Vec<u8> {
    times.iter().map(|&t| u8::from(t >= t_aux)).collect()
}

fn check_binary(labels: &[u8]) -> Result<()> {
    if labels.iter().any(|&l| l > 1) {
        return Err(MctError::param("confusion sweep needs binary cluster labels (k = 2)"));
    }
    Ok(())
}

/// Fraction of agreements under the better of the two identifications
/// of cluster indices with labels.
pub fn permuted_accuracy(cluster_labels: &[u8], aux_labels: &[u8]) -> Result<f64> {
    check_len("auxiliary labels", cluster_labels.len(), aux_labels.len())?;
    if cluster_labels.is_empty() {
        return Err(MctError::param("permuted_accuracy needs at least one sample"));
    }
    check_binary(cluster_labels)?;
    let agree = cluster_labels.iter().zip(aux_labels).filter(|(c, a)| c == a).count();
    let n = cluster_labels.len();
    Ok(agree.max(n - agree) as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub t_aux: Vec<f64>,
    pub accuracy: Vec<f64>,
    /// Pointwise standard deviation across members; empty for a single member.
    pub accuracy_std: Vec<f64>,
    pub n_members: usize,
}

impl AccuracyCurve {
    pub fn len(&self) -> usize {
        self.t_aux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_aux.is_empty()
    }

    pub fn total_variation(&self) -> f64 {
        self.accuracy.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// `t_aux,accuracy_mean,accuracy_std,n_members` with one header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_aux,accuracy_mean,accuracy_std,n_members\n");
        for i in 0..self.len() {
            let std = self.accuracy_std.get(i).copied().unwrap_or(0.0);
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.t_aux[i], self.accuracy[i], std, self.n_members
            ));
        }
        s
    }
}

/// Accuracy at each grid point. Runs in `O((n + g) log n)` by counting
/// cluster-1 members on each side of the boundary.
pub fn sweep(cluster_labels: &[u8], times: &[f64], t_aux_grid: &[f64]) -> Result<AccuracyCurve> {
    check_len("sample times", cluster_labels.len(), times.len())?;
    if cluster_labels.is_empty() || t_aux_grid.is_empty() {
        return Err(MctError::param("sweep needs samples and a non-empty grid"));
    }
    check_binary(cluster_labels)?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
    let sorted_t: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    // ones_before[m] = cluster-1 count among the m earliest samples.
    let mut ones_before = Vec::with_capacity(order.len() + 1);
    ones_before.push(0usize);
    for &i in &order {
        ones_before.push(ones_before.last().unwrap() + cluster_labels[i] as usize);
    }
    let n = times.len();
    let total_ones = ones_before[n];
    let accuracy = t_aux_grid
        .iter()
        .map(|&t_aux| {
            let below = sorted_t.partition_point(|&t| t < t_aux);
            // Agreement under identity map: zeros below plus ones at/above.
            let zeros_below = below - ones_before[below];
            let ones_above = total_ones - ones_before[below];
            let agree = zeros_below + ones_above;
            agree.max(n - agree) as f64 / n as f64
        })
        .collect();
    Ok(AccuracyCurve {
        t_aux: t_aux_grid.to_vec(),
        accuracy,
        accuracy_std: Vec::new(),
        n_members: 1,
    })
}

/// Pointwise mean and (population) standard deviation over members.
pub fn ensemble_average(curves: &[AccuracyCurve]) -> Result<AccuracyCurve> {
    let first = curves
        .first()
        .ok_or_else(|| MctError::param("no accuracy curves to average"))?;
    for c in curves {
        if c.t_aux != first.t_aux {
            return Err(MctError::Shape {
                context: "accuracy curve grid",
                expected: first.len(),
                actual: c.len(),
            });
        }
    }
    let m = curves.len() as f64;
    let mut mean = vec![0.0; first.len()];
    for c in curves {
        for (acc, v) in mean.iter_mut().zip(&c.accuracy) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let std = (0..first.len())
        .map(|i| (curves.iter().map(|c| (c.accuracy[i] - mean[i]).powi(2)).sum::<f64>() / m).sqrt())
        .collect();
    Ok(AccuracyCurve {
        t_aux: first.t_aux.clone(),
        accuracy: mean,
        accuracy_std: std,
        n_members: curves.iter().map(|c| c.n_members).sum(),
    })
}

/// Centered moving average with an odd window; the window shrinks near
/// the ends so the output keeps the grid.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(MctError::param(format!(
            "moving-average window must be odd, got {window}"
        )));
    }
    let h = window / 2;
    Ok((0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchWindow {
    /// Drop this fraction of grid points at each end.
    Trim(f64),
    Range {
        t_lo: f64,
        t_hi: f64,
    },
}

impl Default for SearchWindow {
    fn default() -> Self {
        SearchWindow::Trim(0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctPrediction {
    pub t_prime: f64,
    pub window: [f64; 2],
    pub curve: AccuracyCurve,
}

/// Indices of the grid inside the window.
fn window_indices(t_aux: &[f64], window: SearchWindow) -> Result<std::ops::Range<usize>> {
    let n = t_aux.len();
    let range = match window {
        SearchWindow::Trim(f) => {
            if !(0.0..0.5).contains(&f) {
                return Err(MctError::param(format!("trim fraction must be in [0, 0.5), got {f}")));
            }
            let cut = (f * n as f64).ceil() as usize;
            cut..n.saturating_sub(cut)
        }
        SearchWindow::Range { t_lo, t_hi } => {
            let lo = t_aux.partition_point(|&t| t < t_lo);
            let hi = t_aux.partition_point(|&t| t <= t_hi);
            lo..hi.max(lo)
        }
    };
    if range.is_empty() {
        return Err(MctError::param("search window does not intersect the t_aux grid"));
    }
    Ok(range)
}

/// Grid argmax of the accuracy inside the window; ties go to the smallest
/// `t_aux`. With `smoothing` the argmax is taken on the moving average
/// while the reported curve stays unsmoothed.
pub fn predict_mct(curve: &AccuracyCurve, window: SearchWindow, smoothing: Option<usize>) -> Result<MctPrediction> {
    if curve.t_aux.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MctError::param("t_aux grid must be strictly increasing"));
    }
    let range = window_indices(&curve.t_aux, window)?;
    let scored = match smoothing {
        Some(w) => moving_average(&curve.accuracy, w)?,
        None => curve.accuracy.clone(),
    };
    let mut best = range.start;
    for i in range.clone() {
        if scored[i] > scored[best] {
            best = i;
        }
    }
    Ok(MctPrediction {
        t_prime: curve.t_aux[best],
        window: [curve.t_aux[range.start], curve.t_aux[range.end - 1]],
        curve: curve.clone(),
    })
}
