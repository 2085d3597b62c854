use crate::args::{BetaFormArg, BiasArgs, Cli, Format, OrderingArg};
use crate::error::{CliError, Result};
use bellcheck::herald::{StreamParams, WindowConfig};
use bellcheck::pvalue::{BetaForm, BiasParams};
use bellcheck::report::RunInfo;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Contents of a `--config` TOML file. Every key is optional.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub format: Option<Format>,
    pub chunk: Option<usize>,
    pub f: Option<f64>,
    pub tau: Option<f64>,
    pub beta_form: Option<BetaFormArg>,
    pub ordering: Option<OrderingArg>,
    pub windows: Option<WindowConfig>,
    pub stream: Option<StreamParams>,
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Flags merged over the config file, plus the run identity.
pub struct Settings {
    pub file: FileConfig,
    pub seed: u64,
    pub reps: Option<usize>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub run: RunInfo,
}

impl Settings {
    pub fn resolve(cli: &Cli) -> Result<Self> {
        let file: FileConfig = match &cli.global.config {
            Some(path) => read_toml(path)?,
            None => FileConfig::default(),
        };
        let g = &cli.global;
        let seed = g.seed.or(file.seed).unwrap_or(0);
        let reps = g.reps.or(file.reps);
        let format = g.format.or(file.format).unwrap_or(Format::Json);
        if file.chunk == Some(0) {
            return Err(CliError::invalid("chunk must be at least 1"));
        }
        let config_hash = config_hash(cli, &file)?;
        Ok(Settings {
            seed,
            reps,
            format,
            out: g.out.clone(),
            run: RunInfo {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash,
                seed,
            },
            file,
        })
    }

    pub fn bias(&self, args: &BiasArgs) -> Result<(BiasParams, BetaForm)> {
        let f = args.f.or(self.file.f).unwrap_or(0.0);
        let tau = args.tau.or(self.file.tau).unwrap_or(0.0);
        let form = args.beta_form.or(self.file.beta_form).map_or(BetaForm::Lemma, Into::into);
        Ok((BiasParams::new(f, tau)?, form))
    }

    pub fn windows(&self, path: Option<&Path>) -> Result<WindowConfig> {
        let w = match path {
            Some(p) => read_toml(p)?,
            None => self.file.windows.unwrap_or_default(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn stream(&self, path: Option<&Path>) -> Result<StreamParams> {
        let s: StreamParams = match path {
            Some(p) => read_toml(p)?,
            None => self.file.stream.unwrap_or_default(),
        };
        s.validate()?;
        Ok(s)
    }
}

/// SHA-256 of the canonical JSON of the parsed flags and config file.
/// The output path is left out so that moving a report keeps its hash.
fn config_hash(cli: &Cli, file: &FileConfig) -> Result<String> {
    let canonical = serde_json::json!({ "args": cli, "config": file });
    let bytes = serde_json::to_vec(&canonical).map_err(|e| CliError::invalid(e.to_string()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}
