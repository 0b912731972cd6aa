//! `key=value` overrides shared by all subcommands.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use raypose::bench::{CityConfig, Method, NoiseSweepConfig, ScalabilityConfig};
use raypose::pipeline::MergeConfig;

#[derive(Debug, Clone)]
pub struct Settings {
    pub merge: MergeConfig,
    pub noise: NoiseSweepConfig,
    pub scalability: ScalabilityConfig,
    pub city: CityConfig,
    pub stability_trials: usize,
    pub refine: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            merge: MergeConfig::default(),
            noise: NoiseSweepConfig::default(),
            scalability: ScalabilityConfig::default(),
            city: CityConfig::default(),
            stability_trials: 100_000,
            refine: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "angular_inlier_threshold",
    "max_iterations",
    "confidence",
    "min_inliers",
    "sample_size",
    "use_prosac",
    "min_inlier_ratio",
    "max_group_size",
    "refine",
    "focal_px",
    "trials",
    "noise_px",
    "n_points",
    "levels",
    "n_values",
    "methods",
    "n_subsets",
    "cameras_per_subset",
    "points_per_subset",
    "overlap_fraction",
    "observations_per_point",
];

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("invalid value {v:?} for {key}"))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String> {
    v.split(',').map(|item| value(key, item)).collect()
}

impl Settings {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "angular_inlier_threshold" | "threshold" => self.merge.robust.angular_inlier_threshold = value(key, v)?,
            "max_iterations" => self.merge.robust.max_iterations = value(key, v)?,
            "confidence" => self.merge.robust.confidence = value(key, v)?,
            "min_inliers" => self.merge.robust.min_inliers = value(key, v)?,
            "sample_size" => self.merge.robust.sample_size = value(key, v)?,
            "use_prosac" => self.merge.robust.use_prosac = value(key, v)?,
            "min_inlier_ratio" => self.merge.min_inlier_ratio = value(key, v)?,
            "max_group_size" => self.merge.max_group_size = value(key, v)?,
            "refine" => self.refine = value(key, v)?,
            "focal_px" => {
                let f = value(key, v)?;
                self.noise.focal_px = f;
                self.scalability.focal_px = f;
                self.city.focal_px = f;
            }
            "trials" => {
                let n = value(key, v)?;
                self.noise.trials_per_level = n;
                self.scalability.trials = n;
                self.stability_trials = n;
            }
            "noise_px" => {
                let s = value(key, v)?;
                self.scalability.noise_px = s;
                self.city.noise_px = s;
            }
            "n_points" => self.noise.n_points = value(key, v)?,
            "levels" => self.noise.levels = list(key, v)?,
            "n_values" => self.scalability.n_values = list(key, v)?,
            "methods" => {
                self.noise.methods = v
                    .split(',')
                    .map(|m| Method::parse(m.trim()).map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?
            }
            "n_subsets" => self.city.n_subsets = value(key, v)?,
            "cameras_per_subset" => self.city.cameras_per_subset = value(key, v)?,
            "points_per_subset" => self.city.points_per_subset = value(key, v)?,
            "overlap_fraction" => self.city.overlap_fraction = value(key, v)?,
            "observations_per_point" => self.city.observations_per_point = value(key, v)?,
            _ => return Err(format!("unknown config key {key:?} (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn set_pair(&mut self, pair: &str) -> Result<(), String> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {pair:?}"))?;
        self.set(k.trim(), v)
    }

    /// One `key=value` per line; blank lines and `#` comments are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.merge.seed = seed;
        self.noise.seed = seed;
        self.scalability.seed = seed;
        self.city.seed = seed;
        self
    }
}
