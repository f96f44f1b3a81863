//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Keys are dotted paths into the
//! experiment, generator and training settings; anything not listed in
//! [`KEYS`] is rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dataio::{ExamRateSource, GeneratorSpec};
use crate::nnet::TrainConfig;
use crate::pipeline::{ConstraintKind, DataSource, EpsilonGrid, ExperimentConfig, Phase1Config, Phase2Config};
use crate::{Error, Result};

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "seed",
    "constraint",
    "faithful",
    "epsilons",
    "epsilon_count",
    "seeds",
    "const_levels",
    "jobs",
    "data.source",
    "data.path",
    "data.truth",
    "gen.seed",
    "gen.n",
    "gen.action_noise_mean",
    "gen.action_noise_sd",
    "gen.outcome_noise_mean",
    "gen.outcome_noise_sd",
    "gen.exam_rate",
    "gen.group_rate",
    "gen.action_coef_shift",
    "phase1.dir",
    "phase1.holdout",
    "phase1.depth",
    "phase1.anchor_weight",
    "phase1.outcome.epochs",
    "phase1.outcome.lr",
    "phase1.outcome.hidden",
    "phase1.outcome.batch",
    "phase1.outcome.seed",
    "phase1.baseline.epochs",
    "phase1.baseline.lr",
    "phase1.baseline.hidden",
    "phase1.baseline.batch",
    "phase1.baseline.seed",
    "phase2.steps",
    "phase2.lr",
    "phase2.hidden",
    "phase2.depth",
    "phase2.batch",
    "phase2.grid_points",
    "phase2.ipw_clamp",
    "phase2.density_floor",
    "lagrangian.lambda0",
    "lagrangian.penalty_mu0",
    "lagrangian.growth",
    "lagrangian.update_period",
    "clip.bins",
    "clip.eta",
    "clip.min_rows",
    "clip.floor_width",
    "clip.use_s",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(cfg_err(format!("{origin}:{}: unknown key `{k}`", i + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(cfg_err(format!("{origin}:{}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| cfg_err(format!("bad value `{v}` for `{key}`")))
            })
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|_| cfg_err(format!("bad value `{s}` in `{key}`"))))
                    .collect()
            })
            .transpose()
    }

    /// Sorted `key=value` lines; hashed into run metadata.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_or("seed", 0)
    }

    pub fn faithful(&self) -> Result<bool> {
        self.get_or("faithful", false)
    }

    pub fn kind(&self) -> Result<ConstraintKind> {
        self.raw("constraint")
            .ok_or_else(|| cfg_err("missing required key `constraint`"))?
            .parse()
    }

    pub fn generator(&self) -> Result<GeneratorSpec> {
        let d = GeneratorSpec::default();
        let exam_rate = match self.raw("gen.exam_rate").unwrap_or("structural") {
            "structural" => ExamRateSource::Structural,
            "uniform" => ExamRateSource::Uniform,
            other => return Err(cfg_err(format!("bad value `{other}` for `gen.exam_rate`"))),
        };
        let spec = GeneratorSpec {
            seed: self.get_or("gen.seed", self.seed()?)?,
            n: self.get_or("gen.n", d.n)?,
            action_noise_mean: self.get_or("gen.action_noise_mean", d.action_noise_mean)?,
            action_noise_sd: self.get_or("gen.action_noise_sd", d.action_noise_sd)?,
            outcome_noise_mean: self.get_or("gen.outcome_noise_mean", d.outcome_noise_mean)?,
            outcome_noise_sd: self.get_or("gen.outcome_noise_sd", d.outcome_noise_sd)?,
            exam_rate,
            group_rate: self.get_or("gen.group_rate", d.group_rate)?,
            action_coef_shift: self.get_or("gen.action_coef_shift", d.action_coef_shift)?,
            ..d
        };
        spec.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(spec)
    }

    pub fn source(&self) -> Result<DataSource> {
        let path = self.raw("data.path").map(PathBuf::from);
        match self.raw("data.source").unwrap_or("nyc") {
            "nyc" => Ok(DataSource::Nyc(self.generator()?)),
            "ihdp" => Ok(DataSource::Ihdp {
                spec: self.generator()?,
                source: path,
            }),
            "file" => Ok(DataSource::File(
                path.ok_or_else(|| cfg_err("`data.source = file` needs `data.path`"))?,
            )),
            other => Err(cfg_err(format!(
                "bad value `{other}` for `data.source` (nyc, ihdp or file)"
            ))),
        }
    }

    /// Ground-truth sidecar for file-backed data.
    pub fn truth_path(&self) -> Option<PathBuf> {
        self.raw("data.truth").map(PathBuf::from)
    }

    pub fn phase1_dir(&self) -> Option<PathBuf> {
        self.raw("phase1.dir").map(PathBuf::from)
    }

    fn train(&self, prefix: &str, base: TrainConfig, seed: u64) -> Result<TrainConfig> {
        let key = |k: &str| format!("{prefix}.{k}");
        let batch: Option<usize> = self.get(&key("batch"))?;
        Ok(TrainConfig {
            epochs: self.get_or(&key("epochs"), base.epochs)?,
            lr: self.get_or(&key("lr"), base.lr)?,
            hidden: self.get_or(&key("hidden"), base.hidden)?,
            batch_size: match batch {
                Some(0) => None,
                Some(b) => Some(b),
                None => base.batch_size,
            },
            seed: self.get_or(&key("seed"), seed)?,
        })
    }

    pub fn phase1(&self, kind: ConstraintKind, faithful: bool) -> Result<Phase1Config> {
        let base = if faithful { Phase1Config::faithful(kind) } else { Phase1Config::desk(kind) };
        let seed = self.seed()?;
        let cfg = Phase1Config {
            holdout: self.get_or("phase1.holdout", base.holdout)?,
            outcome: self.train("phase1.outcome", base.outcome.clone(), seed)?,
            baseline: self.train("phase1.baseline", base.baseline.clone(), seed)?,
            structured_depth: self.get_or("phase1.depth", base.structured_depth)?,
            anchor_weight: self.get_or("phase1.anchor_weight", base.anchor_weight)?,
        };
        cfg.outcome.validate().map_err(|e| cfg_err(e.to_string()))?;
        cfg.baseline.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn phase2(&self, kind: ConstraintKind, faithful: bool) -> Result<Phase2Config> {
        let mut c = if faithful { Phase2Config::faithful(kind) } else { Phase2Config::desk(kind) };
        c.steps = self.get_or("phase2.steps", c.steps)?;
        c.lr = self.get_or("phase2.lr", c.lr)?;
        c.hidden = self.get_or("phase2.hidden", c.hidden)?;
        c.depth = self.get_or("phase2.depth", c.depth)?;
        if let Some(b) = self.get::<usize>("phase2.batch")? {
            c.batch_size = (b > 0).then_some(b);
        }
        c.grid_points = self.get_or("phase2.grid_points", c.grid_points)?;
        match self.raw("phase2.ipw_clamp") {
            None => {}
            Some("none") => c.ipw.clamp = None,
            Some(_) => c.ipw.clamp = Some(self.get::<f64>("phase2.ipw_clamp")?.expect("present")),
        }
        c.ipw.density_floor = self.get_or("phase2.density_floor", c.ipw.density_floor)?;
        let l = &mut c.lagrangian;
        l.lambda0 = self.get_or("lagrangian.lambda0", l.lambda0)?;
        l.penalty_mu0 = self.get_or("lagrangian.penalty_mu0", l.penalty_mu0)?;
        l.growth = self.get_or("lagrangian.growth", l.growth)?;
        l.update_period = self.get_or("lagrangian.update_period", l.update_period)?;
        let k = &mut c.clip;
        k.bins = self.get_or("clip.bins", k.bins)?;
        k.eta = self.get_or("clip.eta", k.eta)?;
        k.min_rows = self.get_or("clip.min_rows", k.min_rows)?;
        k.floor_width = self.get_or("clip.floor_width", k.floor_width)?;
        k.use_s = self.get_or("clip.use_s", k.use_s)?;
        c.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(c)
    }

    pub fn experiment(&self, jobs: Option<usize>) -> Result<ExperimentConfig> {
        let kind = self.kind()?;
        let faithful = self.faithful()?;
        let seed = self.seed()?;
        let epsilons = match self.raw("epsilons") {
            None | Some("auto") => EpsilonGrid::Auto {
                count: self.get_or("epsilon_count", 5)?,
            },
            Some(_) => EpsilonGrid::List(self.list("epsilons")?.expect("present")),
        };
        let cfg = ExperimentConfig {
            kind,
            epsilons,
            seeds: self
                .list("seeds")?
                .unwrap_or_else(|| (0..3).map(|k| seed.wrapping_add(k)).collect()),
            source: self.source()?,
            phase1: self.phase1(kind, faithful)?,
            phase2: self.phase2(kind, faithful)?,
            const_levels: self.list("const_levels")?.unwrap_or_else(|| vec![0.25, 0.5, 0.75]),
            jobs: jobs.unwrap_or(self.get_or("jobs", 1)?).max(1),
        };
        cfg.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(cfg)
    }
}
