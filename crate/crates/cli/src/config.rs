//! Run configuration: flags override environment, environment overrides the
//! config file, the config file overrides defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::Deserialize;

use nkg_core::eval::ReportFormat;
use nkg_core::normalize::{
    EmbeddingProvider, HashedNgram, RemoteEmbedder, SynonymLexicon, VectorFile, DEFAULT_REMOTE_TIMEOUT,
    DEFAULT_THRESHOLD,
};
use nkg_core::reason::RetrievalMode;

pub const ENV_EMBED_URL: &str = "NKG_EMBED_URL";
pub const ENV_THRESHOLD: &str = "NKG_THRESHOLD";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSpec {
    Hashed,
    File(PathBuf),
    Remote(String),
}

fn check_url(url: &str) -> anyhow::Result<()> {
    let rest = url
        .strip_prefix("http://")
        .or_else(|| url.strip_prefix("https://"))
        .with_context(|| format!("embedding URL `{url}` must start with http:// or https://"))?;
    let host = rest.split(['/', '?', '#']).next().unwrap_or_default();
    if host.is_empty() || host.contains(char::is_whitespace) {
        bail!("embedding URL `{url}` has no valid host");
    }
    Ok(())
}

impl FromStr for EmbedderSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        if s == "hashed" {
            Ok(EmbedderSpec::Hashed)
        } else if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                bail!("`file:` embedder needs a path");
            }
            Ok(EmbedderSpec::File(path.into()))
        } else if let Some(url) = s.strip_prefix("remote:") {
            check_url(url)?;
            Ok(EmbedderSpec::Remote(url.trim_end_matches('/').to_owned()))
        } else {
            bail!("unknown embedder `{s}` (expected hashed, file:PATH or remote:URL)")
        }
    }
}

/// Options as read from a TOML config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threshold: Option<f64>,
    pub embedder: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub mode: Option<String>,
    pub format: Option<String>,
    pub remote_timeout_secs: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Options given on the command line.
#[derive(Debug, Default, Clone)]
pub struct FlagConfig {
    pub threshold: Option<f64>,
    pub embedder: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub mode: Option<String>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub threshold: f64,
    pub embedder: EmbedderSpec,
    pub lexicon_path: Option<PathBuf>,
    /// `None` lets the command pick a mode from the graph.
    pub mode: Option<RetrievalMode>,
    pub output_format: ReportFormat,
    pub remote_timeout: Duration,
}

impl Config {
    pub fn resolve(
        flags: &FlagConfig,
        env: impl Fn(&str) -> Option<String>,
        file: &FileConfig,
    ) -> anyhow::Result<Config> {
        let threshold = match (flags.threshold, env(ENV_THRESHOLD), file.threshold) {
            (Some(t), _, _) => t,
            (None, Some(raw), _) => raw
                .trim()
                .parse()
                .with_context(|| format!("{ENV_THRESHOLD}=`{raw}` is not a number"))?,
            (None, None, Some(t)) => t,
            (None, None, None) => DEFAULT_THRESHOLD,
        };
        if !(0.0..=1.0).contains(&threshold) {
            bail!("threshold {threshold} is outside [0, 1]");
        }

        let embedder = match (&flags.embedder, env(ENV_EMBED_URL), &file.embedder) {
            (Some(spec), _, _) => spec.parse()?,
            (None, Some(url), _) => format!("remote:{url}").parse()?,
            (None, None, Some(spec)) => spec.parse()?,
            (None, None, None) => EmbedderSpec::Hashed,
        };

        let mode = flags
            .mode
            .as_ref()
            .or(file.mode.as_ref())
            .map(|m| m.parse::<RetrievalMode>().map_err(anyhow::Error::msg))
            .transpose()?;
        let output_format = flags
            .format
            .as_ref()
            .or(file.format.as_ref())
            .map(|f| f.parse::<ReportFormat>().map_err(anyhow::Error::msg))
            .transpose()?
            .unwrap_or(ReportFormat::Json);
        let remote_timeout = match file.remote_timeout_secs {
            Some(s) if s > 0.0 && s.is_finite() => Duration::from_secs_f64(s),
            Some(s) => bail!("remote_timeout_secs must be positive, got {s}"),
            None => DEFAULT_REMOTE_TIMEOUT,
        };

        Ok(Config {
            threshold,
            embedder,
            lexicon_path: flags.lexicon.clone().or_else(|| file.lexicon.clone()),
            mode,
            output_format,
            remote_timeout,
        })
    }

    pub fn provider(&self) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
        Ok(match &self.embedder {
            EmbedderSpec::Hashed => Box::new(HashedNgram::default()),
            EmbedderSpec::File(path) => Box::new(VectorFile::load(path)?),
            EmbedderSpec::Remote(url) => Box::new(RemoteEmbedder::new(url.clone(), self.remote_timeout)),
        })
    }

    pub fn lexicon(&self) -> anyhow::Result<SynonymLexicon> {
        match &self.lexicon_path {
            Some(path) => Ok(SynonymLexicon::load(path)?),
            None => Ok(SynonymLexicon::default_lexicon()),
        }
    }
}
