//! Effective configuration: defaults, then the config file, then flags.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use tagmap_core::evaluation::EvalConfig;
use tagmap_core::grounding::LlmProviderConfig;
use tagmap_core::{ConstructionParams, LocalizationParams};

use crate::error::{usage, Classify, CliResult};

/// Everything a subcommand can be configured with. The config file uses
/// this schema; missing sections and fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub construction: ConstructionParams,
    pub localization: LocalizationParams,
    pub evaluation: EvalConfig,
    pub provider: LlmProviderConfig,
    /// Worker threads for build and eval; `null` uses every core.
    pub jobs: Option<usize>,
}

/// Flags overriding individual configuration values.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Discard frames whose mean depth is below this (m).
    #[arg(long, global = true, help_heading = "Construction")]
    pub depth_mean_threshold: Option<f64>,
    /// Discard frames whose median depth is below this (m).
    #[arg(long, global = true, help_heading = "Construction")]
    pub depth_median_threshold: Option<f64>,
    /// Border crops (%) of the extra tagging ensemble members, comma separated.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1.., help_heading = "Construction")]
    pub crop_percentages: Option<Vec<f64>>,

    #[arg(long, global = true, help_heading = "Localization")]
    pub voxel_size: Option<f64>,
    #[arg(long, global = true, help_heading = "Localization")]
    pub dbscan_eps: Option<f64>,
    #[arg(long, global = true, help_heading = "Localization")]
    pub dbscan_min_points: Option<usize>,
    /// Normalized vote thresholds, comma separated and increasing.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1.., help_heading = "Localization")]
    pub vote_thresholds: Option<Vec<f64>>,
    #[arg(long, global = true, help_heading = "Localization")]
    pub near_plane: Option<f64>,
    /// Use at most this many viewpoints per tag.
    #[arg(long, global = true, help_heading = "Localization")]
    pub max_views: Option<usize>,

    /// Navigation grid spacing (m).
    #[arg(long, global = true, help_heading = "Evaluation")]
    pub grid_resolution: Option<f64>,
    /// Object distance thresholds (m), comma separated.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1.., help_heading = "Evaluation")]
    pub object_thresholds: Option<Vec<f64>>,
    /// Region distance thresholds (m), comma separated.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1.., help_heading = "Evaluation")]
    pub region_thresholds: Option<Vec<f64>>,

    /// Chat-completions base URL.
    #[arg(long, global = true, help_heading = "Provider")]
    pub endpoint: Option<String>,
    #[arg(long, global = true, help_heading = "Provider")]
    pub model: Option<String>,
    /// Environment variable holding the API token.
    #[arg(long, global = true, help_heading = "Provider")]
    pub token_env: Option<String>,
    /// Tool-calling rounds per user turn.
    #[arg(long, global = true, help_heading = "Provider")]
    pub max_rounds: Option<usize>,
    #[arg(long, global = true, help_heading = "Provider")]
    pub temperature: Option<f64>,
}

fn set<T>(slot: &mut T, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Defaults, overlaid by `file` when given, overlaid by `flags`.
    pub fn resolve(file: Option<&Path>, flags: &Overrides, jobs: Option<usize>) -> CliResult<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).io(format!("reading {}", path.display()))?;
                Self::from_json(&text).usage(format!("config file {}", path.display()))?
            }
            None => Self::default(),
        };
        cfg.apply(flags);
        if jobs.is_some() {
            cfg.jobs = jobs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        let c = &mut self.construction;
        set(&mut c.depth_mean_threshold, &o.depth_mean_threshold);
        set(&mut c.depth_median_threshold, &o.depth_median_threshold);
        set(&mut c.crop_percentages, &o.crop_percentages);

        let l = &mut self.localization;
        set(&mut l.voxel_size, &o.voxel_size);
        set(&mut l.dbscan_eps, &o.dbscan_eps);
        set(&mut l.dbscan_min_points, &o.dbscan_min_points);
        set(&mut l.normalized_vote_thresholds, &o.vote_thresholds);
        set(&mut l.near_plane, &o.near_plane);
        if o.max_views.is_some() {
            l.max_views = o.max_views;
        }

        let e = &mut self.evaluation;
        set(&mut e.grid.resolution, &o.grid_resolution);
        set(&mut e.object_thresholds, &o.object_thresholds);
        set(&mut e.region_thresholds, &o.region_thresholds);

        let p = &mut self.provider;
        set(&mut p.endpoint, &o.endpoint);
        set(&mut p.model, &o.model);
        set(&mut p.token_env, &o.token_env);
        set(&mut p.max_rounds, &o.max_rounds);
        set(&mut p.temperature, &o.temperature);
    }

    pub fn validate(&self) -> CliResult<()> {
        self.construction.validate().usage("construction parameters")?;
        self.localization.validate().usage("localization parameters")?;
        self.evaluation.validate().usage("evaluation parameters")?;
        self.provider.validate().usage("provider configuration")?;
        if self.jobs == Some(0) {
            return Err(usage("--jobs must be at least 1"));
        }
        Ok(())
    }

    /// Worker count: the configured value or every available core.
    pub fn workers(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"localization": {"voxel_size": 0.1, "dbscan_eps": 0.3}, "jobs": 3}"#).unwrap();
        let flags = Overrides { voxel_size: Some(0.25), ..Default::default() };
        let cfg = CliConfig::resolve(Some(&path), &flags, None).unwrap();
        assert_eq!(cfg.localization.voxel_size, 0.25);
        assert_eq!(cfg.localization.dbscan_eps, 0.3);
        assert_eq!(cfg.localization.dbscan_min_points, 5);
        assert_eq!(cfg.jobs, Some(3));
        assert_eq!(CliConfig::resolve(Some(&path), &flags, Some(1)).unwrap().jobs, Some(1));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        use crate::error::Kind;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"localisation": {}}"#).unwrap();
        let err = CliConfig::resolve(Some(&path), &Overrides::default(), None).unwrap_err();
        assert_eq!(err.kind, Kind::Usage);
        let flags = Overrides { vote_thresholds: Some(vec![0.5, 0.25]), ..Default::default() };
        assert_eq!(CliConfig::resolve(None, &flags, None).unwrap_err().kind, Kind::Usage);
        let missing = dir.path().join("nope.json");
        assert_eq!(CliConfig::resolve(Some(&missing), &Overrides::default(), None).unwrap_err().kind, Kind::Io);
    }

    #[test]
    fn serialized_defaults_round_trip() {
        let cfg = CliConfig::default();
        assert_eq!(CliConfig::from_json(&cfg.to_json_pretty()).unwrap(), cfg);
    }
}
