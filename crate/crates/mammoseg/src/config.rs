//! Flat `key = value` pipeline configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use mammoseg_core::breast::{ExtractParams, ThresholdMethod};
use mammoseg_core::classify::MlpParams;
use mammoseg_core::levelset::{Advection, Schedule, SkewMode, SpeedParams};
use mammoseg_core::roi::MeanMode;

use crate::error::{PipelineError, Result};

/// Which classifiers `train` and `evaluate` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierChoice {
    Knn,
    Mlp,
    Both,
}

impl ClassifierChoice {
    pub fn knn(self) -> bool {
        matches!(self, Self::Knn | Self::Both)
    }

    pub fn mlp(self) -> bool {
        matches!(self, Self::Mlp | Self::Both)
    }
}

impl FromStr for ClassifierChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "knn" => Ok(Self::Knn),
            "mlp" => Ok(Self::Mlp),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown classifier `{other}`")),
        }
    }
}

impl std::fmt::Display for ClassifierChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Knn => "knn",
            Self::Mlp => "mlp",
            Self::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub extract: ExtractParams,
    pub speed: SpeedParams,
    pub schedule: Schedule,
    pub glcm_levels: usize,
    pub moy_mode: MeanMode,
    /// ROI boxes narrower or shorter than this are grown around their centre.
    pub roi_min_size: usize,
    pub classifier: ClassifierChoice,
    pub knn_k: usize,
    pub mlp: MlpParams,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            extract: ExtractParams::default(),
            speed: SpeedParams::default(),
            schedule: Schedule::default(),
            glcm_levels: 16,
            moy_mode: MeanMode::IndexWeighted,
            roi_min_size: 8,
            classifier: ClassifierChoice::Both,
            knn_k: 7,
            mlp: MlpParams::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{key}: cannot parse `{value}`: {e}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("{key}: expected a boolean, got `{value}`")),
    }
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 27] = [
        "alpha",
        "band_width",
        "beta",
        "classifier",
        "convergence_threshold",
        "enhance",
        "epsilon",
        "glcm_levels",
        "knn_k",
        "max_iterations",
        "mlp_epochs",
        "mlp_hidden",
        "mlp_learning_rate",
        "moy_mode",
        "nu",
        "nu_direction",
        "out_dir",
        "reinit_period",
        "roi_min_size",
        "seed",
        "seed_fraction",
        "skew_mode",
        "speed_floor",
        "t0_quantile",
        "theta",
        "threshold",
        "time_step",
    ];

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "enhance" => self.extract.enhance = parse_bool(key, value)?,
            "threshold" => self.extract.method = parse::<ThresholdMethod>(key, value)?,
            "epsilon" => self.speed.epsilon = parse(key, value)?,
            "beta" => self.speed.beta = parse(key, value)?,
            "nu" => self.speed.nu = parse(key, value)?,
            "theta" => self.speed.theta = parse(key, value)?,
            "alpha" => self.speed.alpha = parse(key, value)?,
            "speed_floor" => self.speed.speed_floor = parse(key, value)?,
            "nu_direction" => self.speed.advection = parse::<Advection>(key, value)?,
            "skew_mode" => self.speed.skew = parse::<SkewMode>(key, value)?,
            "max_iterations" => self.schedule.max_iterations = parse(key, value)?,
            "reinit_period" => self.schedule.reinit_period = parse(key, value)?,
            "convergence_threshold" => self.schedule.convergence_threshold = parse(key, value)?,
            "band_width" => self.schedule.band_width = parse(key, value)?,
            "time_step" => self.schedule.time_step = parse(key, value)?,
            "seed_fraction" => self.schedule.seed_fraction = parse(key, value)?,
            "t0_quantile" => self.schedule.t0_quantile = parse(key, value)?,
            "glcm_levels" => self.glcm_levels = parse(key, value)?,
            "moy_mode" => self.moy_mode = parse::<MeanMode>(key, value)?,
            "roi_min_size" => self.roi_min_size = parse(key, value)?,
            "classifier" => self.classifier = parse(key, value)?,
            "knn_k" => self.knn_k = parse(key, value)?,
            "mlp_hidden" => self.mlp.hidden = parse(key, value)?,
            "mlp_learning_rate" => self.mlp.learning_rate = parse(key, value)?,
            "mlp_epochs" => self.mlp.epochs = parse(key, value)?,
            "seed" => self.mlp.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PipelineError::Config { line: n + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.contains(&k) {
                return Err(err(format!("duplicate key `{k}`")));
            }
            seen.push(k);
            cfg.set(k, v).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| PipelineError::Config { line: 0, message };
        self.speed.validate().map_err(|e| bad(e.to_string()))?;
        self.schedule.validate().map_err(|e| bad(e.to_string()))?;
        // |grad g| never exceeds 1 for g in (0, 1], so this bound holds for every image
        let p = &self.speed;
        let worst = 0.5 / (4.0 * p.epsilon + p.nu + p.beta + p.theta);
        if self.schedule.time_step > worst {
            return Err(bad(format!("time_step {} exceeds the stability bound {worst}", self.schedule.time_step)));
        }
        if self.glcm_levels < 2 {
            return Err(bad("glcm_levels must be at least 2".into()));
        }
        if self.roi_min_size < 2 {
            return Err(bad("roi_min_size must be at least 2".into()));
        }
        if self.knn_k == 0 {
            return Err(bad("knn_k must be positive".into()));
        }
        if self.mlp.hidden == 0 || self.mlp.epochs == 0 || !(self.mlp.learning_rate > 0.0) {
            return Err(bad("mlp_hidden, mlp_epochs and mlp_learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Every resolved setting as `(key, value)`, sorted by key.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let s = &self.speed;
        let sc = &self.schedule;
        let mut out: Vec<(&'static str, String)> = vec![
            ("alpha", format!("{:?}", s.alpha)),
            ("band_width", format!("{:?}", sc.band_width)),
            ("beta", format!("{:?}", s.beta)),
            ("classifier", self.classifier.to_string()),
            ("convergence_threshold", format!("{:?}", sc.convergence_threshold)),
            ("enhance", self.extract.enhance.to_string()),
            ("epsilon", format!("{:?}", s.epsilon)),
            ("glcm_levels", self.glcm_levels.to_string()),
            ("knn_k", self.knn_k.to_string()),
            ("max_iterations", sc.max_iterations.to_string()),
            ("mlp_epochs", self.mlp.epochs.to_string()),
            ("mlp_hidden", self.mlp.hidden.to_string()),
            ("mlp_learning_rate", format!("{:?}", self.mlp.learning_rate)),
            ("moy_mode", self.moy_mode.to_string()),
            ("nu", format!("{:?}", s.nu)),
            ("nu_direction", s.advection.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("reinit_period", sc.reinit_period.to_string()),
            ("roi_min_size", self.roi_min_size.to_string()),
            ("seed", self.mlp.seed.to_string()),
            ("seed_fraction", format!("{:?}", sc.seed_fraction)),
            ("skew_mode", s.skew.to_string()),
            ("speed_floor", format!("{:?}", s.speed_floor)),
            ("t0_quantile", format!("{:?}", sc.t0_quantile)),
            ("theta", format!("{:?}", s.theta)),
            ("threshold", self.extract.method.to_string()),
            ("time_step", format!("{:?}", sc.time_step)),
        ];
        out.sort_by_key(|(k, _)| *k);
        out
    }

    pub fn to_text(&self) -> String {
        self.echo().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_echo_all_keys() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let keys: Vec<_> = cfg.echo().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, PipelineConfig::KEYS);
    }

    #[test]
    fn echo_round_trips() {
        let text = "threshold = max-entropy\nnu = 0.25 # comment\n\nseed=7\nclassifier = knn\n";
        let cfg = PipelineConfig::parse_str(text).unwrap();
        assert_eq!(cfg.extract.method, ThresholdMethod::MaxEntropy);
        assert_eq!(cfg.speed.nu, 0.25);
        assert_eq!(cfg.mlp.seed, 7);
        assert_eq!(PipelineConfig::parse_str(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["bogus = 1", "nu = 2", "nu = 0.1\nnu = 0.2", "time_step = 1", "glcm_levels = 1", "threshold = mean", "just words"] {
            assert!(PipelineConfig::parse_str(text).is_err(), "{text}");
        }
        match PipelineConfig::parse_str("\n\nbogus = 1") {
            Err(PipelineError::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
