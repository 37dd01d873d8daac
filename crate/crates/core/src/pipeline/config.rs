//! Training configuration and its flat `key = value` file format.
//!
//! One setting per line, `#` starts a comment, unknown keys are rejected.
//! Every key of [`TrainConfig`] can appear; missing keys keep their current
//! value, so a file is applied on top of defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DppMode {
    Exact,
    Greedy,
    Off,
}

impl fmt::Display for DppMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DppMode::Exact => "exact",
            DppMode::Greedy => "greedy",
            DppMode::Off => "off",
        })
    }
}

impl FromStr for DppMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(DppMode::Exact),
            "greedy" => Ok(DppMode::Greedy),
            "off" => Ok(DppMode::Off),
            other => Err(format!("expected exact|greedy|off, got `{other}`")),
        }
    }
}

/// Quantity watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopOn {
    ValAccuracy,
    Loss,
}

impl fmt::Display for StopOn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopOn::ValAccuracy => "val_acc",
            StopOn::Loss => "loss",
        })
    }
}

impl FromStr for StopOn {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "val_acc" => Ok(StopOn::ValAccuracy),
            "loss" => Ok(StopOn::Loss),
            other => Err(format!("expected val_acc|loss, got `{other}`")),
        }
    }
}

/// Ablation variants: which of the three components are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// filter + DPP + weights
    Full,
    /// none of them
    WithoutAll,
    /// filter only
    WithAlpha,
    /// DPP only
    WithDpp,
    /// weights only
    WithWeights,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Full,
        Preset::WithoutAll,
        Preset::WithAlpha,
        Preset::WithDpp,
        Preset::WithWeights,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::WithoutAll => "wo-all",
            Preset::WithAlpha => "with-alpha",
            Preset::WithDpp => "with-dpp",
            Preset::WithWeights => "with-w",
        }
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub walk_steps: usize,
    /// Hop radius of the seed positives.
    pub khop: usize,
    /// Soft margin on `p⁺/p⁻`.
    pub alpha: f64,
    pub tau: f64,
    pub tau_w: f64,
    pub m_negatives: usize,
    /// Uniform pre-sample of filtered negatives the DPP runs over.
    pub pool_size: usize,
    /// `None` means "as many as there are positives".
    pub mixup_count: Option<usize>,
    pub mixup_beta: f64,
    pub head_pool: usize,
    pub head_steps: usize,
    pub head_lr: f64,
    pub head_l2: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub refresh_interval: usize,
    pub eval_interval: usize,
    pub stop_on: StopOn,
    pub dpp_mode: DppMode,
    pub filter_on: bool,
    pub weights_on: bool,
    pub positives_in_loss: bool,
    /// Backpropagate into the negatives as well, re-encoding them with the
    /// current parameters in every minibatch. Off by default.
    pub negative_gradients: bool,
    pub eval_walks: usize,
    pub probe_runs: usize,
    pub probe_steps: usize,
    pub probe_lr: f64,
    pub probe_l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Full-scale profile.
    fn default() -> Self {
        Self {
            walk_steps: 25,
            khop: 1,
            alpha: 0.9,
            tau: 1.0,
            tau_w: 1.0,
            m_negatives: 64,
            pool_size: 256,
            mixup_count: None,
            mixup_beta: 1.0,
            head_pool: 512,
            head_steps: 50,
            head_lr: 1.0,
            head_l2: 1e-3,
            dropout: 0.7,
            hidden_dim: 512,
            embed_dim: 512,
            lr: 1e-3,
            epochs: 2000,
            batch_size: 256,
            patience: 20,
            refresh_interval: 5,
            eval_interval: 1,
            stop_on: StopOn::ValAccuracy,
            dpp_mode: DppMode::Exact,
            filter_on: true,
            weights_on: true,
            positives_in_loss: false,
            negative_gradients: false,
            eval_walks: 4,
            probe_runs: 50,
            probe_steps: 300,
            probe_lr: 0.01,
            probe_l2: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale profile: 300 epochs and 10 probe runs.
    pub fn desk() -> Self {
        Self {
            epochs: 300,
            probe_runs: 10,
            ..Self::default()
        }
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let (filter, dpp, weights) = match preset {
            Preset::Full => (true, true, true),
            Preset::WithoutAll => (false, false, false),
            Preset::WithAlpha => (true, false, false),
            Preset::WithDpp => (false, true, false),
            Preset::WithWeights => (false, false, true),
        };
        self.filter_on = filter;
        self.weights_on = weights;
        self.dpp_mode = match (dpp, self.dpp_mode) {
            (false, _) => DppMode::Off,
            (true, DppMode::Off) => DppMode::Exact,
            (true, mode) => mode,
        };
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.apply_preset(preset);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("walk_steps", self.walk_steps),
            ("m_negatives", self.m_negatives),
            ("pool_size", self.pool_size),
            ("head_pool", self.head_pool),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
            ("batch_size", self.batch_size),
            ("refresh_interval", self.refresh_interval),
            ("eval_interval", self.eval_interval),
            ("eval_walks", self.eval_walks),
            ("probe_runs", self.probe_runs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Param(format!("{name} must be >= 1")));
            }
        }
        let reals = [
            ("alpha", self.alpha),
            ("tau", self.tau),
            ("tau_w", self.tau_w),
            ("mixup_beta", self.mixup_beta),
            ("lr", self.lr),
            ("head_lr", self.head_lr),
            ("probe_lr", self.probe_lr),
        ];
        for (name, v) in reals {
            // alpha may be +inf (filter that never fires)
            if !(v > 0.0) || (name != "alpha" && !v.is_finite()) {
                return Err(Error::Param(format!("{name} = {v} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Param(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.head_l2 < 0.0 || self.probe_l2 < 0.0 {
            return Err(Error::Param("l2 penalties must be >= 0".into()));
        }
        Ok(())
    }

    /// `(key, value)` pairs in canonical order; the file format and the
    /// config hash both use this.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("walk_steps", self.walk_steps.to_string()),
            ("khop", self.khop.to_string()),
            ("alpha", self.alpha.to_string()),
            ("tau", self.tau.to_string()),
            ("tau_w", self.tau_w.to_string()),
            ("m_negatives", self.m_negatives.to_string()),
            ("pool_size", self.pool_size.to_string()),
            (
                "mixup_count",
                self.mixup_count.map_or("auto".into(), |c| c.to_string()),
            ),
            ("mixup_beta", self.mixup_beta.to_string()),
            ("head_pool", self.head_pool.to_string()),
            ("head_steps", self.head_steps.to_string()),
            ("head_lr", self.head_lr.to_string()),
            ("head_l2", self.head_l2.to_string()),
            ("dropout", self.dropout.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("patience", self.patience.to_string()),
            ("refresh_interval", self.refresh_interval.to_string()),
            ("eval_interval", self.eval_interval.to_string()),
            ("stop_on", self.stop_on.to_string()),
            ("dpp_mode", self.dpp_mode.to_string()),
            ("filter_on", self.filter_on.to_string()),
            ("weights_on", self.weights_on.to_string()),
            ("positives_in_loss", self.positives_in_loss.to_string()),
            ("negative_gradients", self.negative_gradients.to_string()),
            ("eval_walks", self.eval_walks.to_string()),
            ("probe_runs", self.probe_runs.to_string()),
            ("probe_steps", self.probe_steps.to_string()),
            ("probe_lr", self.probe_lr.to_string()),
            ("probe_l2", self.probe_l2.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn to_file_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_file_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: FromStr>(v: &str) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("invalid value `{v}`: {e}"))
        }
        match key {
            "walk_steps" => self.walk_steps = p(value)?,
            "khop" => self.khop = p(value)?,
            "alpha" => self.alpha = p(value)?,
            "tau" => self.tau = p(value)?,
            "tau_w" => self.tau_w = p(value)?,
            "m_negatives" => self.m_negatives = p(value)?,
            "pool_size" => self.pool_size = p(value)?,
            "mixup_count" => {
                self.mixup_count = if value == "auto" { None } else { Some(p(value)?) }
            }
            "mixup_beta" => self.mixup_beta = p(value)?,
            "head_pool" => self.head_pool = p(value)?,
            "head_steps" => self.head_steps = p(value)?,
            "head_lr" => self.head_lr = p(value)?,
            "head_l2" => self.head_l2 = p(value)?,
            "dropout" => self.dropout = p(value)?,
            "hidden_dim" => self.hidden_dim = p(value)?,
            "embed_dim" => self.embed_dim = p(value)?,
            "lr" => self.lr = p(value)?,
            "epochs" => self.epochs = p(value)?,
            "batch_size" => self.batch_size = p(value)?,
            "patience" => self.patience = p(value)?,
            "refresh_interval" => self.refresh_interval = p(value)?,
            "eval_interval" => self.eval_interval = p(value)?,
            "stop_on" => self.stop_on = p(value)?,
            "dpp_mode" => self.dpp_mode = p(value)?,
            "filter_on" => self.filter_on = p(value)?,
            "weights_on" => self.weights_on = p(value)?,
            "positives_in_loss" => self.positives_in_loss = p(value)?,
            "negative_gradients" => self.negative_gradients = p(value)?,
            "eval_walks" => self.eval_walks = p(value)?,
            "probe_runs" => self.probe_runs = p(value)?,
            "probe_steps" => self.probe_steps = p(value)?,
            "probe_lr" => self.probe_lr = p(value)?,
            "probe_l2" => self.probe_l2 = p(value)?,
            "seed" => self.seed = p(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Applies a config file on top of `self`. Returns the keys it set.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<Vec<String>> {
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |key: &str, msg: String| Error::Config {
                file: origin.to_path_buf(),
                line: i + 1,
                key: key.to_string(),
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line, "expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(err(key, "duplicate key".into()));
            }
            self.set(key, value).map_err(|m| err(key, m))?;
            seen.push(key.to_string());
        }
        Ok(seen)
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<Vec<String>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        self.apply_text(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut cfg = TrainConfig::desk().with_preset(Preset::WithDpp);
        cfg.mixup_count = Some(3);
        cfg.alpha = f64::INFINITY;
        cfg.seed = 99;
        let mut back = TrainConfig::default();
        back.apply_text(&cfg.to_file_string(), Path::new("mem")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(TrainConfig::default().hash(), cfg.hash());
    }

    #[test]
    fn errors_name_key_and_line() {
        let mut cfg = TrainConfig::default();
        let err = cfg
            .apply_text("# header\nalpha = 0.5\nbogus = 1\n", Path::new("c.conf"))
            .unwrap_err();
        match err {
            Error::Config { line, key, .. } => {
                assert_eq!(line, 3);
                assert_eq!(key, "bogus");
            }
            other => panic!("{other:?}"),
        }
        let err = cfg.apply_text("tau = fast\n", Path::new("c.conf")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        assert!(cfg.apply_text("no equals sign\n", Path::new("c")).is_err());
        assert!(cfg.apply_text("tau = 1\ntau = 2\n", Path::new("c")).is_err());
    }

    #[test]
    fn presets_toggle_components() {
        let c = TrainConfig::default().with_preset(Preset::WithoutAll);
        assert!(!c.filter_on && !c.weights_on && c.dpp_mode == DppMode::Off);
        let c = c.with_preset(Preset::Full);
        assert!(c.filter_on && c.weights_on && c.dpp_mode == DppMode::Exact);
        let mut g = TrainConfig::default();
        g.dpp_mode = DppMode::Greedy;
        assert_eq!(g.with_preset(Preset::WithDpp).dpp_mode, DppMode::Greedy);
        assert_eq!("with-w".parse::<Preset>().unwrap(), Preset::WithWeights);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig::default();
        c.alpha = f64::INFINITY;
        assert!(c.validate().is_ok());
        c.tau = 0.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            dropout: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
