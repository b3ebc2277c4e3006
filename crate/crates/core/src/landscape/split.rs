//! Four-way holdout split: autoencoder training, k-means training,
//! autoencoder validation and performance sets.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MctError, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourWaySplit {
    pub ae_train: Vec<usize>,
    pub km_train: Vec<usize>,
    pub ae_val: Vec<usize>,
    pub perf: Vec<usize>,
    pub seed: u64,
}

impl FourWaySplit {
    pub fn len(&self) -> usize {
        self.ae_train.len() + self.km_train.len() + self.ae_val.len() + self.perf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sizes(&self) -> (usize, usize, usize, usize) {
        (
            self.ae_train.len(),
            self.km_train.len(),
            self.ae_val.len(),
            self.perf.len(),
        )
    }

    fn parts(&self) -> [(&'static str, &Vec<usize>); 4] {
        [
            ("ae_train", &self.ae_train),
            ("km_train", &self.km_train),
            ("ae_val", &self.ae_val),
            ("perf", &self.perf),
        ]
    }
}

/// Shuffles `0..n` with the seeded generator and cuts it into
/// `ceil(0.7 n)` training and the rest validation; each half is split in
/// two with the odd element going to the autoencoder side.
pub fn split_dataset(n: usize, seed: u64) -> Result<FourWaySplit> {
    if n < 4 {
        return Err(MctError::param(format!("need at least 4 landscapes to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut idx);

    let n_train = (7 * n).div_ceil(10);
    let n_val = n - n_train;
    let ae_train = n_train.div_ceil(2);
    let ae_val = n_val.div_ceil(2);

    let (train, val) = idx.split_at(n_train);
    let (a, k) = train.split_at(ae_train);
    let (v, p) = val.split_at(ae_val);
    Ok(FourWaySplit {
        ae_train: a.to_vec(),
        km_train: k.to_vec(),
        ae_val: v.to_vec(),
        perf: p.to_vec(),
        seed,
    })
}

/// Plain-text manifest: a header line, `seed`, `n`, then one line per
/// part with its name followed by space-separated indices.
pub fn write_split_manifest(split: &FourWaySplit, path: &Path) -> Result<()> {
    let mut out = String::from("# mct split manifest v1\n");
    writeln!(out, "seed {}", split.seed).unwrap();
    writeln!(out, "n {}", split.len()).unwrap();
    for (name, part) in split.parts() {
        out.push_str(name);
        for i in part.iter() {
            write!(out, " {i}").unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| MctError::io(path, e))
}

pub fn read_split_manifest(path: &Path) -> Result<FourWaySplit> {
    let text = std::fs::read_to_string(path).map_err(|e| MctError::io(path, e))?;
    parse_split_manifest(&text)
}

pub(crate) fn parse_split_manifest(text: &str) -> Result<FourWaySplit> {
    let bad = |msg: String| MctError::Format {
        offset: 0,
        message: msg,
    };
    let mut seed = None;
    let mut n = None;
    let mut parts: [Option<Vec<usize>>; 4] = Default::default();
    let names = ["ae_train", "km_train", "ae_val", "perf"];
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap();
        let values: std::result::Result<Vec<u64>, _> = tokens.map(str::parse::<u64>).collect();
        let values = values.map_err(|e| bad(format!("bad number on line {line:?}: {e}")))?;
        match key {
            "seed" => seed = values.first().copied(),
            "n" => n = values.first().map(|&v| v as usize),
            k => {
                let slot = names
                    .iter()
                    .position(|&name| name == k)
                    .ok_or_else(|| bad(format!("unknown manifest key {k:?}")))?;
                parts[slot] = Some(values.into_iter().map(|v| v as usize).collect());
            }
        }
    }
    let seed = seed.ok_or_else(|| bad("missing seed".into()))?;
    let [a, k, v, p] = parts;
    let split = FourWaySplit {
        ae_train: a.ok_or_else(|| bad("missing ae_train".into()))?,
        km_train: k.ok_or_else(|| bad("missing km_train".into()))?,
        ae_val: v.ok_or_else(|| bad("missing ae_val".into()))?,
        perf: p.ok_or_else(|| bad("missing perf".into()))?,
        seed,
    };
    let n = n.unwrap_or(split.len());
    let mut seen = vec![false; n];
    for (_, part) in split.parts() {
        for &i in part {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(bad(format!("index {i} out of range or repeated")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(bad("split does not cover every index".into()));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_sizes_for_1000_samples() {
        assert_eq!(split_dataset(1000, 1).unwrap().sizes(), (350, 350, 150, 150));
    }

    #[test]
    fn small_sizes_follow_rounding_rule() {
        let s = split_dataset(10, 5).unwrap();
        assert_eq!(s.sizes(), (4, 3, 2, 1));
    }

    #[test]
    fn too_small() {
        assert!(split_dataset(3, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(split_dataset(200, 9).unwrap(), split_dataset(200, 9).unwrap());
        assert_ne!(split_dataset(200, 9).unwrap(), split_dataset(200, 10).unwrap());
    }

    #[test]
    fn manifest_roundtrip() {
        let s = split_dataset(37, 123).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.txt");
        write_split_manifest(&s, &path).unwrap();
        assert_eq!(read_split_manifest(&path).unwrap(), s);
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let text = "seed 1\nn 4\nae_train 0 1\nkm_train 1\nae_val 2\nperf 3\n";
        assert!(parse_split_manifest(text).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_and_complete(n in 4usize..500, seed in any::<u64>()) {
            let s = split_dataset(n, seed).unwrap();
            let mut all: Vec<usize> = s.ae_train.iter()
                .chain(&s.km_train).chain(&s.ae_val).chain(&s.perf).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let n_train = s.ae_train.len() + s.km_train.len();
            prop_assert_eq!(n_train, (7 * n).div_ceil(10));
            prop_assert!(s.ae_train.len() - s.km_train.len() <= 1);
            prop_assert!(s.ae_val.len() - s.perf.len() <= 1);
        }
    }
}
