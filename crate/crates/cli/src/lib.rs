//! Config-driven experiment runner for the `young-taylor` crate.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use run::{run, Manifest, MANIFEST_FILE};

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "YOUNG_TAYLOR_OUT";

/// Output directory: `--out`, then `$YOUNG_TAYLOR_OUT`, then the config's `out`, then `./out`.
pub fn resolve_out_dir(
    cli: Option<&Path>,
    env: Option<&str>,
    config: &ExperimentConfig,
    base: &Path,
) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    match &config.out {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => base.join(p),
        None => PathBuf::from("out"),
    }
}

/// Directory that relative paths inside a config file resolve against.
pub fn config_base(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
