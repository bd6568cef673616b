use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::CorpusFormat;
use crate::generator::{Conditioning, ExternalKind, GeneratorConfig};
use crate::latent::{LatentConfig, TrainOptions};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Hred,
    HredVae,
    HredLaed,
    Diktnet,
}

impl Variant {
    pub fn conditioning(self) -> Conditioning {
        match self {
            Variant::Hred => Conditioning::None,
            Variant::HredVae => Conditioning::VaeConcat,
            Variant::HredLaed | Variant::Diktnet => Conditioning::CodeConcat,
        }
    }

    pub fn external(self) -> ExternalKind {
        match self {
            Variant::Diktnet => ExternalKind::Stub,
            _ => ExternalKind::None,
        }
    }

    pub fn needs_stage1(self) -> bool {
        self != Variant::Hred
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Hred => "HRED",
            Variant::HredVae => "HRED_VAE",
            Variant::HredLaed => "HRED_LAED",
            Variant::Diktnet => "DIKTNET",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace(['+', '-'], "_").as_str() {
            "HRED" => Ok(Variant::Hred),
            "HRED_VAE" => Ok(Variant::HredVae),
            "HRED_LAED" => Ok(Variant::HredLaed),
            "DIKTNET" => Ok(Variant::Diktnet),
            _ => Err(Error::Config(format!("unknown model variant `{s}`"))),
        }
    }
}

/// Everything needed to run both stages and the experiment grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub transfer_path: Option<PathBuf>,
    pub transfer_format: CorpusFormat,
    pub main_path: Option<PathBuf>,
    pub main_format: CorpusFormat,
    /// Separate evaluation corpus; without it the target dialogues not drawn
    /// as seed data are used.
    pub eval_path: Option<PathBuf>,
    pub eval_format: CorpusFormat,
    pub min_freq: usize,
    pub target_domain: String,
    pub ratios: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    /// Overrides the built-in transfer exclusion list.
    pub exclude: Option<Vec<String>>,
    pub eval_max_dialogues: Option<usize>,
    pub heldout_fraction: f64,
    pub latent: LatentConfig,
    pub laed_joint: bool,
    pub generator: GeneratorConfig,
    /// `None` follows the variant.
    pub conditioning: Option<Conditioning>,
    pub external: Option<ExternalKind>,
    /// `None` means equal to the dialogue encoder size.
    pub dec_hidden: Option<usize>,
    pub optimizer: String,
    pub lr: f64,
    pub clip: f64,
    pub stage1_epochs: usize,
    pub stage1_batch: usize,
    pub stage2_epochs: usize,
    pub stage2_batch: usize,
    pub patience: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            transfer_path: None,
            transfer_format: CorpusFormat::MetaLwoz,
            main_path: None,
            main_format: CorpusFormat::Smd,
            eval_path: None,
            eval_format: CorpusFormat::Smd,
            min_freq: 1,
            target_domain: "navigate".into(),
            ratios: vec![0.01, 0.03, 0.05, 0.10],
            runs: 10,
            seed: crate::seed::DEFAULT_SEED,
            variants: vec![Variant::Diktnet],
            exclude: None,
            eval_max_dialogues: None,
            heldout_fraction: 0.05,
            latent: LatentConfig::default(),
            laed_joint: true,
            generator: GeneratorConfig::default(),
            conditioning: None,
            external: None,
            dec_hidden: None,
            optimizer: "adam".into(),
            lr: 1e-3,
            clip: 5.0,
            stage1_epochs: 5,
            stage1_batch: 32,
            stage2_epochs: 20,
            stage2_batch: 16,
            patience: 3,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got `{value}`"))),
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn path_in(base: Option<&Path>, value: &str) -> PathBuf {
    let p = PathBuf::from(value.trim());
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

/// Every key accepted in a config file.
pub const KEYS: &[&str] = &[
    "data.transfer",
    "data.transfer_format",
    "data.main",
    "data.main_format",
    "data.eval",
    "data.eval_format",
    "data.min_freq",
    "experiment.target_domain",
    "experiment.ratios",
    "experiment.runs",
    "experiment.seed",
    "experiment.variants",
    "model.variant",
    "experiment.exclude",
    "experiment.eval_max_dialogues",
    "experiment.heldout_fraction",
    "latent.m",
    "latent.k",
    "latent.tau_start",
    "latent.tau_end",
    "latent.anneal_steps",
    "latent.hard",
    "latent.embed",
    "latent.hidden",
    "latent.vae_dim",
    "laed.joint",
    "generator.embed",
    "generator.utt_hidden",
    "generator.dlg_hidden",
    "generator.dec_hidden",
    "generator.conditioning",
    "generator.external",
    "generator.external_dim",
    "generator.external_path",
    "generator.max_decode_len",
    "generator.copy",
    "optimizer.name",
    "optimizer.lr",
    "optimizer.clip",
    "stage1.epochs",
    "stage1.batch_size",
    "stage2.epochs",
    "stage2.batch_size",
    "stage2.patience",
];

impl ExperimentConfig {
    /// Reads `key=value` lines; `#` starts a comment. Relative paths resolve
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text, path.parent())
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set_in(k.trim(), v.trim(), base)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_in(key, value, None)
    }

    fn set_in(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let g = &mut self.generator;
        let l = &mut self.latent;
        match key.to_ascii_lowercase().as_str() {
            "data.transfer" => self.transfer_path = Some(path_in(base, value)),
            "data.transfer_format" => self.transfer_format = parse(key, value)?,
            "data.main" => self.main_path = Some(path_in(base, value)),
            "data.main_format" => self.main_format = parse(key, value)?,
            "data.eval" => self.eval_path = Some(path_in(base, value)),
            "data.eval_format" => self.eval_format = parse(key, value)?,
            "data.min_freq" => self.min_freq = parse(key, value)?,
            "experiment.target_domain" => self.target_domain = value.trim().to_string(),
            "experiment.ratios" => {
                self.ratios = list(value).iter().map(|r| parse(key, r)).collect::<Result<_>>()?;
            }
            "experiment.runs" => self.runs = parse(key, value)?,
            "experiment.seed" => self.seed = parse(key, value)?,
            "experiment.variants" | "model.variant" => {
                self.variants = list(value).iter().map(|v| v.parse()).collect::<Result<_>>()?;
            }
            "experiment.exclude" => self.exclude = Some(list(value)),
            "experiment.eval_max_dialogues" => self.eval_max_dialogues = Some(parse(key, value)?),
            "experiment.heldout_fraction" => self.heldout_fraction = parse(key, value)?,
            "latent.m" => l.m = parse(key, value)?,
            "latent.k" => l.k = parse(key, value)?,
            "latent.tau_start" => l.tau_start = parse(key, value)?,
            "latent.tau_end" => l.tau_end = parse(key, value)?,
            "latent.anneal_steps" => l.anneal_steps = parse(key, value)?,
            "latent.hard" => l.hard = parse_bool(key, value)?,
            "latent.embed" => l.embed = parse(key, value)?,
            "latent.hidden" => l.hidden = parse(key, value)?,
            "latent.vae_dim" => l.vae_dim = parse(key, value)?,
            "laed.joint" => self.laed_joint = parse_bool(key, value)?,
            "generator.embed" => g.embed = parse(key, value)?,
            "generator.utt_hidden" => g.utt_hidden = parse(key, value)?,
            "generator.dlg_hidden" => g.dlg_hidden = parse(key, value)?,
            "generator.dec_hidden" => self.dec_hidden = Some(parse(key, value)?),
            "generator.conditioning" => {
                self.conditioning = match value.trim() {
                    "auto" => None,
                    v => Some(v.parse()?),
                }
            }
            "generator.external" => {
                self.external = match value.trim() {
                    "auto" => None,
                    v => Some(v.parse()?),
                }
            }
            "generator.external_dim" => g.external_dim = parse(key, value)?,
            "generator.external_path" => g.external_path = Some(path_in(base, value)),
            "generator.max_decode_len" => g.max_decode_len = parse(key, value)?,
            "generator.copy" => g.copy = parse_bool(key, value)?,
            "optimizer.name" => self.optimizer = value.trim().to_ascii_lowercase(),
            "optimizer.lr" => self.lr = parse(key, value)?,
            "optimizer.clip" => self.clip = parse(key, value)?,
            "stage1.epochs" => self.stage1_epochs = parse(key, value)?,
            "stage1.batch_size" => self.stage1_batch = parse(key, value)?,
            "stage2.epochs" => self.stage2_epochs = parse(key, value)?,
            "stage2.batch_size" => self.stage2_batch = parse(key, value)?,
            "stage2.patience" => self.patience = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::Config(format!("experiment.ratios must lie in (0, 1], got {:?}", self.ratios)));
        }
        if self.runs == 0 {
            return Err(Error::Config("experiment.runs must be >= 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("experiment.variants is empty".into()));
        }
        if self.min_freq == 0 {
            return Err(Error::Config("data.min_freq must be >= 1".into()));
        }
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return Err(Error::Config("experiment.heldout_fraction must lie in (0, 1)".into()));
        }
        if self.stage1_batch == 0 || self.stage2_batch == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("optimizer.lr must be > 0".into()));
        }
        if self.optimizer != "adam" {
            return Err(Error::Config(format!("unsupported optimizer `{}` (only adam)", self.optimizer)));
        }
        self.latent.validate()?;
        for v in &self.variants {
            self.generator_config(*v).validate()?;
        }
        Ok(())
    }

    /// Generator settings for `variant`, with variant-driven defaults filled in.
    pub fn generator_config(&self, variant: Variant) -> GeneratorConfig {
        let mut g = self.generator.clone();
        g.conditioning = self.conditioning.unwrap_or(variant.conditioning());
        g.external = self.external.unwrap_or(variant.external());
        g.dec_hidden = self.dec_hidden.unwrap_or(g.dlg_hidden);
        g
    }

    pub fn stage1_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.stage1_epochs,
            batch_size: self.stage1_batch,
            optimizer: self.optimizer.clone(),
            lr: self.lr,
            clip: self.clip,
            joint: self.laed_joint,
        }
    }

    pub fn needs_stage1(&self) -> bool {
        self.variants.iter().any(|v| v.needs_stage1())
    }

    pub fn needs_vae(&self) -> bool {
        self.variants.contains(&Variant::HredVae)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.ratios, vec![0.01, 0.03, 0.05, 0.10]);
        assert_eq!(c.runs, 10);
        assert_eq!(c.lr, 0.001);
        assert_eq!((c.latent.m, c.latent.k), (10, 5));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn file_values_and_errors() {
        let mut c = ExperimentConfig::default();
        c.apply_text(
            "# comment\nlatent.M=3\noptimizer.lr = 0.01\nexperiment.ratios=0.01, 0.1\nexperiment.variants=HRED,hred_laed\ndata.main=x.json\n",
            Some(Path::new("/base")),
        )
        .unwrap();
        assert_eq!(c.latent.m, 3);
        assert_eq!(c.lr, 0.01);
        assert_eq!(c.ratios, vec![0.01, 0.1]);
        assert_eq!(c.variants, vec![Variant::Hred, Variant::HredLaed]);
        assert_eq!(c.main_path, Some(PathBuf::from("/base/x.json")));
        assert!(c.apply_text("latent.bogus=1", None).is_err());
        assert!(c.apply_text("no equals sign", None).is_err());
        assert!(c.apply_text("latent.m=abc", None).is_err());
    }

    #[test]
    fn later_values_override() {
        let mut c = ExperimentConfig::default();
        c.apply_text("experiment.seed=5", None).unwrap();
        c.set("experiment.seed", "9").unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let sample = |k: &str| match k {
            "experiment.ratios" => "0.5",
            "experiment.variants" | "model.variant" => "HRED",
            "experiment.exclude" | "experiment.target_domain" | "optimizer.name" => "adam",
            "data.transfer_format" | "data.main_format" | "data.eval_format" => "smd",
            "generator.conditioning" => "none",
            "generator.external" => "none",
            "experiment.heldout_fraction" | "latent.tau_start" | "latent.tau_end" | "optimizer.lr" | "optimizer.clip" => "0.5",
            "latent.hard" | "laed.joint" | "generator.copy" => "true",
            "data.transfer" | "data.main" | "data.eval" | "generator.external_path" => "p",
            _ => "3",
        };
        for k in KEYS {
            let mut c = ExperimentConfig::default();
            c.set(k, sample(k)).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn variant_defaults() {
        let c = ExperimentConfig::default();
        let g = c.generator_config(Variant::Diktnet);
        assert_eq!(g.conditioning, Conditioning::CodeConcat);
        assert_eq!(g.external, ExternalKind::Stub);
        assert_eq!(c.generator_config(Variant::Hred).dec_hidden, g.dlg_hidden);
        assert_eq!("hred+laed".parse::<Variant>().unwrap(), Variant::HredLaed);
    }
}
