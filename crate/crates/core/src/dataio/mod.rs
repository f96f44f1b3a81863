//! Observational datasets `(s, x, a, y)`, CSV I/O, bootstrap resampling and
//! the semi-synthetic generators.

mod csvio;
pub mod ihdp;
pub mod nyc;

pub use csvio::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use ihdp::{
    bundled_standin, default_surrogate_config, fit_ihdp_surrogates, generate_ihdp_surrogate,
    standin_source, IhdpSurrogates,
};
pub use nyc::{
    counterfactual_mean_outcome, generate_nyc, read_ground_truth, write_ground_truth,
    ExamRateSource, GeneratorSpec, GroundTruth,
};

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::contract;
use crate::Result;

/// One observed record.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub s: u8,
    pub x: Vec<f64>,
    pub a: f64,
    pub y: f64,
}

/// Ordered records stored column-wise. Both groups are always present.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    s: Vec<u8>,
    x: Array2<f64>,
    a: Vec<f64>,
    y: Vec<f64>,
    group_counts: [usize; 2],
}

impl Dataset {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let d = samples
            .first()
            .map(|r| r.x.len())
            .ok_or_else(|| contract("dataset needs at least one sample"))?;
        let mut x = Array2::zeros((samples.len(), d));
        for (i, r) in samples.iter().enumerate() {
            if r.x.len() != d {
                return Err(contract(format!(
                    "sample {i} has {} covariates, expected {d}",
                    r.x.len()
                )));
            }
            x.row_mut(i).assign(&ArrayView1::from(&r.x));
        }
        Self::from_columns(
            samples.iter().map(|r| r.s).collect(),
            x,
            samples.iter().map(|r| r.a).collect(),
            samples.iter().map(|r| r.y).collect(),
        )
    }

    pub fn from_columns(s: Vec<u8>, x: Array2<f64>, a: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = s.len();
        if n == 0 {
            return Err(contract("dataset needs at least one sample"));
        }
        if x.nrows() != n || a.len() != n || y.len() != n {
            return Err(contract("column lengths differ"));
        }
        let mut group_counts = [0usize; 2];
        for (i, &si) in s.iter().enumerate() {
            if si > 1 {
                return Err(contract(format!("row {i}: group label {si} not in {{0,1}}")));
            }
            group_counts[si as usize] += 1;
        }
        if group_counts.contains(&0) {
            return Err(contract(format!(
                "both groups must be present, counts {group_counts:?}"
            )));
        }
        let finite = x.iter().chain(&a).chain(&y).all(|v| v.is_finite());
        if !finite {
            return Err(contract("dataset contains non-finite values"));
        }
        Ok(Self {
            s,
            x,
            a,
            y,
            group_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Covariate dimension.
    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn s(&self) -> &[u8] {
        &self.s
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn group_counts(&self) -> [usize; 2] {
        self.group_counts
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            s: self.s[i],
            x: self.x.row(i).to_vec(),
            a: self.a[i],
            y: self.y[i],
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len()).map(|i| self.sample(i))
    }

    /// Policy-net inputs, one row `[s, x...]` per record. With `drop_s` the
    /// group column is zeroed.
    pub fn policy_inputs(&self, drop_s: bool) -> Array2<f64> {
        let mut m = Array2::zeros((self.len(), self.d() + 1));
        if !drop_s {
            for (i, &s) in self.s.iter().enumerate() {
                m[[i, 0]] = f64::from(s);
            }
        }
        m.slice_mut(s![.., 1..]).assign(&self.x);
        m
    }

    /// Outcome-model inputs `[a, s, x...]` with the given per-row actions.
    pub fn outcome_inputs(&self, actions: &[f64]) -> Result<Array2<f64>> {
        if actions.len() != self.len() {
            return Err(contract(format!(
                "{} actions for {} rows",
                actions.len(),
                self.len()
            )));
        }
        let mut m = Array2::zeros((self.len(), self.d() + 2));
        for i in 0..self.len() {
            m[[i, 0]] = actions[i];
            m[[i, 1]] = f64::from(self.s[i]);
        }
        m.slice_mut(s![.., 2..]).assign(&self.x);
        Ok(m)
    }

    /// Records at `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(contract(format!("row {bad} out of range")));
        }
        Self::from_columns(
            rows.iter().map(|&r| self.s[r]).collect(),
            self.x.select(Axis(0), rows),
            rows.iter().map(|&r| self.a[r]).collect(),
            rows.iter().map(|&r| self.y[r]).collect(),
        )
    }

    /// Same records with the action and outcome columns replaced.
    pub fn with_actions_outcomes(&self, a: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::from_columns(self.s.clone(), self.x.clone(), a, y)
    }

    /// Row indices belonging to group `s`.
    pub fn group_rows(&self, s: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.s[i] == s).collect()
    }
}

/// `m` rows drawn uniformly with replacement.
///
/// Fails only if the draw misses one of the groups entirely.
pub fn bootstrap(dataset: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(contract("bootstrap size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..dataset.len())).collect();
    dataset.select(&rows)
}

/// Deterministic holdout split: returns `(train_rows, test_rows)`.
pub fn split_rows(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let test = rows[..n_test].to_vec();
    let train = rows[n_test..].to_vec();
    (train, test)
}
