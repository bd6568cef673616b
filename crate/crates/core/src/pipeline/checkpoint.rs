use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::Variant;
use crate::corpus::Vocab;
use crate::generator::{Conditioning, ExternalEncoder, ExternalKind, GeneratorConfig, GeneratorModel, Stage1};
use crate::latent::{LaedModel, LatentConfig, LatentModel, LatentVariant};
use crate::nn::ParamStore;
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST: &str = "manifest.txt";
pub const WEIGHTS: &str = "weights.safetensors";
pub const POLICY_WEIGHTS: &str = "policy.safetensors";
pub const VOCAB: &str = "vocab.txt";
pub const CODES: &str = "codes.txt";
pub const STAGE1_DIR: &str = "stage1";

/// Ordered `key=value` lines describing a checkpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    fn require(&self, key: &str, dir: &Path) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::bad_checkpoint(dir, format!("manifest lacks `{key}`")))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, dir: &Path) -> Result<T> {
        self.require(key, dir)?
            .parse()
            .map_err(|_| Error::bad_checkpoint(dir, format!("manifest value for `{key}` is malformed")))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::bad_checkpoint(dir, format!("{MANIFEST}: {e}")))?;
        let mut m = Manifest::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::bad_checkpoint(dir, format!("bad manifest line `{line}`")))?;
            m.push(k, v);
        }
        if m.get("format_version") != Some(FORMAT_VERSION) {
            return Err(Error::bad_checkpoint(dir, "unsupported or missing format_version"));
        }
        Ok(m)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(MANIFEST), self.to_text().as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Short sha256 over weight files, in the spirit of a git object id.
fn content_version(files: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for f in files {
        h.update(std::fs::read(f).map_err(|e| Error::io(f, e))?);
    }
    Ok(h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
}

fn check_content(dir: &Path, manifest: &Manifest, files: &[PathBuf]) -> Result<()> {
    let want = manifest.require("content_version", dir)?;
    let got = content_version(files).map_err(|e| Error::bad_checkpoint(dir, e.to_string()))?;
    if want != got {
        return Err(Error::bad_checkpoint(dir, format!("weights have content version {got}, manifest says {want}")));
    }
    Ok(())
}

fn load_store(dir: &Path, file: &str) -> Result<ParamStore> {
    ParamStore::load(&dir.join(file), 0)
}

fn load_vocab(dir: &Path, manifest: &Manifest) -> Result<Vocab> {
    let vocab = Vocab::load(&dir.join(VOCAB)).map_err(|e| Error::bad_checkpoint(dir, e.to_string()))?;
    if manifest.require("vocab_hash", dir)? != vocab.hash() {
        return Err(Error::bad_checkpoint(dir, "vocab.txt does not match the manifest vocab_hash"));
    }
    Ok(vocab)
}

fn push_latent_config(m: &mut Manifest, c: &LatentConfig) {
    m.push("latent.m", c.m);
    m.push("latent.k", c.k);
    m.push("latent.tau_start", c.tau_start);
    m.push("latent.tau_end", c.tau_end);
    m.push("latent.anneal_steps", c.anneal_steps);
    m.push("latent.hard", c.hard);
    m.push("latent.embed", c.embed);
    m.push("latent.hidden", c.hidden);
    m.push("latent.vae_dim", c.vae_dim);
}

fn read_latent_config(m: &Manifest, dir: &Path) -> Result<LatentConfig> {
    Ok(LatentConfig {
        m: m.parsed("latent.m", dir)?,
        k: m.parsed("latent.k", dir)?,
        tau_start: m.parsed("latent.tau_start", dir)?,
        tau_end: m.parsed("latent.tau_end", dir)?,
        anneal_steps: m.parsed("latent.anneal_steps", dir)?,
        hard: m.parsed("latent.hard", dir)?,
        embed: m.parsed("latent.embed", dir)?,
        hidden: m.parsed("latent.hidden", dir)?,
        vae_dim: m.parsed("latent.vae_dim", dir)?,
    })
}

/// Saves a DI-VAE, DI-VST or VAE model. `extra` entries are appended to the
/// manifest; `codes` becomes the code inventory file.
pub fn save_latent(dir: &Path, model: &LatentModel, vocab: &Vocab, extra: &[(String, String)], codes: Option<&str>) -> Result<()> {
    create_dir(dir)?;
    let weights = dir.join(WEIGHTS);
    model.store().save(&weights)?;
    vocab.save(&dir.join(VOCAB))?;
    let mut m = Manifest::default();
    m.push("format_version", FORMAT_VERSION);
    m.push("stage", format!("stage1-{}", model.variant().tag()));
    m.push("variant", model.variant().tag());
    push_latent_config(&mut m, model.config());
    m.push("vocab_size", vocab.len());
    m.push("vocab_hash", vocab.hash());
    m.push("content_version", content_version(&[weights])?);
    for (k, v) in extra {
        m.push(k.clone(), v);
    }
    if let Some(c) = codes {
        write_file(&dir.join(CODES), c.as_bytes())?;
    }
    m.write(dir)
}

pub fn load_latent(dir: &Path) -> Result<(LatentModel, Vocab, Manifest)> {
    let m = Manifest::read(dir)?;
    check_content(dir, &m, &[dir.join(WEIGHTS)])?;
    let variant = LatentVariant::from_tag(m.require("variant", dir)?)?;
    let config = read_latent_config(&m, dir)?;
    let vocab = load_vocab(dir, &m)?;
    let model = LatentModel::from_store(load_store(dir, WEIGHTS)?, variant, &config, vocab.len())
        .map_err(|e| Error::bad_checkpoint(dir, e.to_string()))?;
    Ok((model, vocab, m))
}

pub fn save_laed(dir: &Path, model: &LaedModel, vocab: &Vocab, extra: &[(String, String)], codes: Option<&str>) -> Result<()> {
    create_dir(dir)?;
    let weights = dir.join(WEIGHTS);
    let policy = dir.join(POLICY_WEIGHTS);
    model.vst().store().save(&weights)?;
    model.policy_store().save(&policy)?;
    vocab.save(&dir.join(VOCAB))?;
    let mut m = Manifest::default();
    m.push("format_version", FORMAT_VERSION);
    m.push("stage", "stage1-laed");
    m.push("variant", "laed");
    push_latent_config(&mut m, model.config());
    m.push("vocab_size", vocab.len());
    m.push("vocab_hash", vocab.hash());
    m.push("content_version", content_version(&[weights, policy])?);
    for (k, v) in extra {
        m.push(k.clone(), v);
    }
    if let Some(c) = codes {
        write_file(&dir.join(CODES), c.as_bytes())?;
    }
    m.write(dir)
}

pub fn load_laed(dir: &Path) -> Result<(LaedModel, Vocab, Manifest)> {
    let m = Manifest::read(dir)?;
    check_content(dir, &m, &[dir.join(WEIGHTS), dir.join(POLICY_WEIGHTS)])?;
    let config = read_latent_config(&m, dir)?;
    let vocab = load_vocab(dir, &m)?;
    let vst = LatentModel::from_store(load_store(dir, WEIGHTS)?, LatentVariant::DiVst, &config, vocab.len())
        .map_err(|e| Error::bad_checkpoint(dir, e.to_string()))?;
    let model = LaedModel::from_parts(vst, load_store(dir, POLICY_WEIGHTS)?)
        .map_err(|e| Error::bad_checkpoint(dir, e.to_string()))?;
    Ok((model, vocab, m))
}

/// Where the stage-1 checkpoints of one experiment live.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stage1Paths {
    pub di_vae: Option<PathBuf>,
    pub laed: Option<PathBuf>,
    pub vae: Option<PathBuf>,
}

impl Stage1Paths {
    /// Conventional layout under one root directory.
    pub fn under(root: &Path) -> Self {
        let existing = |name: &str| {
            let p = root.join(name);
            p.join(MANIFEST).exists().then_some(p)
        };
        Stage1Paths {
            di_vae: existing("di-vae"),
            laed: existing("laed"),
            vae: existing("vae"),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.di_vae.is_none() && self.laed.is_none() && self.vae.is_none()
    }

    pub fn load(&self) -> Result<Stage1> {
        let mut vocab: Option<(Vocab, PathBuf)> = None;
        let mut check = |v: Vocab, dir: &Path| -> Result<()> {
            match &vocab {
                Some((existing, first)) if existing.hash() != v.hash() => Err(Error::bad_checkpoint(
                    dir,
                    format!("vocabulary differs from {}", first.display()),
                )),
                Some(_) => Ok(()),
                None => {
                    vocab = Some((v, dir.to_path_buf()));
                    Ok(())
                }
            }
        };
        let di_vae = match &self.di_vae {
            Some(d) => {
                let (m, v, _) = load_latent(d)?;
                check(v, d)?;
                Some(m)
            }
            None => None,
        };
        let laed = match &self.laed {
            Some(d) => {
                let (m, v, _) = load_laed(d)?;
                check(v, d)?;
                Some(m)
            }
            None => None,
        };
        let vae = match &self.vae {
            Some(d) => {
                let (m, v, _) = load_latent(d)?;
                check(v, d)?;
                Some(m)
            }
            None => None,
        };
        let vocab = vocab.map(|(v, _)| v).ok_or_else(|| Error::MissingStage1("any".into()))?;
        Ok(Stage1 { vocab, di_vae, laed, vae })
    }
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    create_dir(to)?;
    let entries = std::fs::read_dir(from).map_err(|e| Error::io(from, e))?;
    let mut names: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    names.sort();
    for p in names {
        if p.is_file() {
            let name = p.file_name().unwrap_or_default();
            std::fs::copy(&p, to.join(name)).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

/// A generator with everything needed to run it.
#[derive(Debug)]
pub struct LoadedGenerator {
    pub model: GeneratorModel,
    pub variant: Variant,
    pub stage1: Option<Stage1>,
    pub external: ExternalEncoder,
    pub manifest: Manifest,
}

/// Saves a generator and copies its stage-1 checkpoints into `dir/stage1/`
/// so the directory is self-contained.
pub fn save_generator(
    dir: &Path,
    model: &GeneratorModel,
    variant: Variant,
    stage1: &Stage1Paths,
    extra: &[(String, String)],
) -> Result<()> {
    create_dir(dir)?;
    let weights = dir.join(WEIGHTS);
    model.store().save(&weights)?;
    model.vocab().save(&dir.join(VOCAB))?;
    let c = model.config();
    let mut m = Manifest::default();
    m.push("format_version", FORMAT_VERSION);
    m.push("stage", "stage2");
    m.push("variant", variant);
    m.push("generator.embed", c.embed);
    m.push("generator.utt_hidden", c.utt_hidden);
    m.push("generator.dlg_hidden", c.dlg_hidden);
    m.push("generator.dec_hidden", c.dec_hidden);
    m.push("generator.conditioning", c.conditioning);
    m.push("generator.external", c.external);
    m.push("generator.external_dim", c.external_dim);
    m.push(
        "generator.external_path",
        c.external_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
    );
    m.push("generator.max_decode_len", c.max_decode_len);
    m.push("generator.copy", c.copy);
    m.push("latent_width", model.latent_width());
    m.push("vocab_size", model.vocab().len());
    m.push("vocab_hash", model.vocab().hash());
    m.push("content_version", content_version(&[weights])?);
    for (k, v) in extra {
        m.push(k.clone(), v);
    }
    let s1 = dir.join(STAGE1_DIR);
    for (name, src) in [("di-vae", &stage1.di_vae), ("laed", &stage1.laed), ("vae", &stage1.vae)] {
        if let Some(src) = src {
            copy_dir(src, &s1.join(name))?;
        }
    }
    m.write(dir)
}

pub fn load_generator(dir: &Path) -> Result<LoadedGenerator> {
    let m = Manifest::read(dir)?;
    if m.get("stage") != Some("stage2") {
        return Err(Error::bad_checkpoint(dir, "not a stage-2 generator checkpoint"));
    }
    check_content(dir, &m, &[dir.join(WEIGHTS)])?;
    let bad = |e: Error| Error::bad_checkpoint(dir, e.to_string());
    let path = m.require("generator.external_path", dir)?;
    let config = GeneratorConfig {
        embed: m.parsed("generator.embed", dir)?,
        utt_hidden: m.parsed("generator.utt_hidden", dir)?,
        dlg_hidden: m.parsed("generator.dlg_hidden", dir)?,
        dec_hidden: m.parsed("generator.dec_hidden", dir)?,
        conditioning: m.require("generator.conditioning", dir)?.parse::<Conditioning>().map_err(bad)?,
        external: m.require("generator.external", dir)?.parse::<ExternalKind>().map_err(bad)?,
        external_dim: m.parsed("generator.external_dim", dir)?,
        external_path: (!path.is_empty()).then(|| PathBuf::from(path)),
        max_decode_len: m.parsed("generator.max_decode_len", dir)?,
        copy: m.parsed("generator.copy", dir)?,
    };
    let variant: Variant = m.require("variant", dir)?.parse().map_err(bad)?;
    let vocab = load_vocab(dir, &m)?;
    let model = GeneratorModel::from_store(load_store(dir, WEIGHTS)?, &config, vocab, m.parsed("latent_width", dir)?)
        .map_err(bad)?;
    let paths = Stage1Paths::under(&dir.join(STAGE1_DIR));
    let stage1 = if paths.is_empty() { None } else { Some(paths.load()?) };
    if config.conditioning.needs_latent() && stage1.is_none() {
        return Err(Error::bad_checkpoint(dir, "conditioned generator without stage-1 checkpoints"));
    }
    let external = ExternalEncoder::from_config(&config)?;
    Ok(LoadedGenerator {
        model,
        variant,
        stage1,
        external,
        manifest: m,
    })
}
