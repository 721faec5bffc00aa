//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use young_taylor::jets::{JetSystem, Monomial, VectorField};
use young_taylor::paths::{sample_fbm, FbmSpec, PathGrid};
use young_taylor::taylor::BoundParams;
use young_taylor::young::PicardOptions;
use young_taylor::Word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    Expand,
    Bound,
    Magnus,
    McL2,
    Compare,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::Expand => "expand",
            Experiment::Bound => "bound",
            Experiment::Magnus => "magnus",
            Experiment::McL2 => "mc-l2",
            Experiment::Compare => "compare",
        }
    }
}

/// One vector field, in any of the supported encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSpec {
    Zero(usize),
    Constant(Vec<f64>),
    Linear(Vec<Vec<f64>>),
    Affine {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    /// Prefix expressions, one per component (`x1` is the first coordinate).
    Expr(Vec<String>),
    Polynomial(Vec<Vec<Monomial>>),
}

impl FieldSpec {
    pub fn build(&self) -> young_taylor::Result<VectorField> {
        Ok(match self {
            FieldSpec::Zero(n) => VectorField::zero(*n),
            FieldSpec::Constant(c) => VectorField::constant(c.clone()),
            FieldSpec::Linear(rows) => VectorField::linear(rows.clone())?,
            FieldSpec::Affine { a, b } => VectorField::affine(a.clone(), b.clone())?,
            FieldSpec::Expr(src) => {
                let refs: Vec<&str> = src.iter().map(String::as_str).collect();
                VectorField::parse(&refs)?
            }
            FieldSpec::Polynomial(c) => VectorField::polynomial(c.clone())?,
        })
    }

    fn is_zero(&self) -> bool {
        match self {
            FieldSpec::Zero(_) => true,
            FieldSpec::Constant(c) => c.iter().all(|v| *v == 0.0),
            FieldSpec::Linear(rows) => rows.iter().flatten().all(|v| *v == 0.0),
            FieldSpec::Affine { a, b } => a.iter().flatten().chain(b).all(|v| *v == 0.0),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// `fields[0]` is the drift, `fields[i]` multiplies `dyⁱ`.
    pub fields: Vec<FieldSpec>,
    pub x0: Vec<f64>,
    /// Analyticity radius `C`; absent means entire fields.
    #[serde(default)]
    pub radius: Option<f64>,
}

impl SystemConfig {
    pub fn drive_count(&self) -> usize {
        self.fields.len().saturating_sub(1)
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(f64::INFINITY)
    }

    pub fn has_drift(&self) -> bool {
        self.fields.first().is_some_and(|f| !f.is_zero())
    }

    pub fn build(&self, max_word_len: usize) -> Result<JetSystem> {
        let fields = self
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| f.build().with_context(|| format!("field {i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(JetSystem::new(
            fields,
            self.x0.clone(),
            self.radius(),
            max_word_len,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `yⁱ_t = a t`.
    Linear,
    /// `yⁱ_t = a t²`.
    Quadratic,
    /// `yⁱ_t = a sin(i t)`.
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathSource {
    Fbm(FbmSpec),
    File {
        file: PathBuf,
        beta_hint: f64,
    },
    Builtin {
        family: Family,
        drivers: usize,
        horizon: f64,
        grid_size: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl PathSource {
    pub fn seed(&self) -> Option<u64> {
        match self {
            PathSource::Fbm(spec) => Some(spec.seed),
            _ => None,
        }
    }

    /// Loads or samples the path; relative files resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<PathGrid> {
        Ok(match self {
            PathSource::Fbm(spec) => sample_fbm(spec)?,
            PathSource::File { file, beta_hint } => {
                let p = if file.is_absolute() {
                    file.clone()
                } else {
                    base.join(file)
                };
                let f = std::fs::File::open(&p)
                    .with_context(|| format!("opening path file {}", p.display()))?;
                PathGrid::read_csv(std::io::BufReader::new(f), *beta_hint)?
            }
            PathSource::Builtin {
                family,
                drivers,
                horizon,
                grid_size,
                amplitude,
            } => {
                let a = *amplitude;
                let d = *drivers;
                let family = *family;
                PathGrid::from_fn(*horizon, *grid_size, d, 1.0, move |t| {
                    (1..=d)
                        .map(|i| match family {
                            Family::Linear => a * t,
                            Family::Quadratic => a * t * t,
                            Family::Sine => a * (i as f64 * t).sin(),
                        })
                        .collect()
                })?
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailChoice {
    None,
    #[default]
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    /// Fixes γ instead of searching `gamma_grid`.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Fixes the growth constant `M` instead of fitting it.
    #[serde(default)]
    pub m: Option<f64>,
    #[serde(default = "default_r")]
    pub r: f64,
    /// Largest truncation order reported.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Number of expansion levels computed.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub picard: PicardOptions,
    /// Whether the clock letter counts in the bounds; defaults to "drift is nonzero".
    #[serde(default)]
    pub clock: Option<bool>,
    #[serde(default)]
    pub tail: TailChoice,
    /// Evaluation time for `bound`; defaults to the horizon.
    #[serde(default)]
    pub t: Option<f64>,
    /// Grid stride between `compare` rows.
    #[serde(default)]
    pub stride: Option<usize>,
    /// Also run the inductive construction in `expand`.
    #[serde(default)]
    pub inductive: bool,
}

fn default_gamma_grid() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
}

fn default_r() -> f64 {
    2.0
}

fn default_n_max() -> usize {
    8
}

fn default_k_max() -> usize {
    8
}

impl Default for Params {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnusConfig {
    /// Row-major drift generator `A_0`.
    #[serde(default)]
    pub drift: Option<Vec<Vec<f64>>>,
    pub generators: Vec<Vec<Vec<f64>>>,
    pub k_max: usize,
    #[serde(default = "default_trust")]
    pub trust_radius: f64,
    /// Also solve the matrix equation with Picard and report the distance.
    #[serde(default)]
    pub check_picard: bool,
}

fn default_trust() -> f64 {
    young_taylor::magnus::DEFAULT_TRUST_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub replicates: usize,
    pub fbm: FbmSpec,
    /// Words as `"1:2"` strings.
    pub words: Vec<String>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.99
}

impl McSection {
    pub fn to_config(&self) -> Result<young_taylor::stochastic::McConfig> {
        let words = self
            .words
            .iter()
            .map(|w| w.parse::<Word>())
            .collect::<young_taylor::Result<Vec<_>>>()?;
        let cfg = young_taylor::stochastic::McConfig {
            replicates: self.replicates,
            fbm: self.fbm.clone(),
            words,
            confidence: self.confidence,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub path: Option<PathSource>,
    /// Multiplies every driver (not the clock) after loading.
    #[serde(default = "one")]
    pub driver_scale: f64,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub magnus: Option<MagnusConfig>,
    #[serde(default)]
    pub mc: Option<McSection>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!(
                "config parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            )
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn system(&self) -> Result<&SystemConfig> {
        self.system.as_ref().with_context(|| {
            format!(
                "experiment `{}` needs a `system` section",
                self.experiment.name()
            )
        })
    }

    pub fn path_source(&self) -> Result<&PathSource> {
        self.path.as_ref().with_context(|| {
            format!(
                "experiment `{}` needs a `path` section",
                self.experiment.name()
            )
        })
    }

    pub fn alpha(&self) -> Result<f64> {
        self.params
            .alpha
            .with_context(|| format!("experiment `{}` needs params.alpha", self.experiment.name()))
    }

    /// Whether the bounds include the clock letter.
    pub fn clock(&self) -> Result<bool> {
        Ok(self.params.clock.unwrap_or(self.system()?.has_drift()))
    }

    /// Bound parameters with a placeholder growth pair, for validation.
    pub fn bound_params(&self, gamma: f64, m: f64) -> Result<BoundParams> {
        let sys = self.system()?;
        let p = BoundParams::new(
            self.alpha()?,
            gamma,
            m,
            self.params.r,
            sys.radius(),
            sys.drive_count(),
        )
        .context("invalid bound parameters")?;
        Ok(p.with_clock(self.clock()?))
    }

    /// Checks every invariant that does not need the experiment to run.
    pub fn validate(&self, base: &Path) -> Result<()> {
        ensure!(
            self.driver_scale.is_finite(),
            "driver_scale must be finite, got {}",
            self.driver_scale
        );
        let p = &self.params;
        ensure!(p.k_max >= 1, "params.k_max must be at least 1");
        ensure!(p.n_max >= 1, "params.n_max must be at least 1");
        match self.experiment {
            Experiment::Solve | Experiment::Expand | Experiment::Bound | Experiment::Compare => {
                let sys = self.system()?;
                sys.build(p.k_max.max(1))?;
                if let Some(PathSource::Fbm(spec)) = &self.path {
                    spec.validate()?;
                }
                if let Some(PathSource::File { file, .. }) = &self.path {
                    let f = if file.is_absolute() {
                        file.clone()
                    } else {
                        base.join(file)
                    };
                    ensure!(f.exists(), "path file {} does not exist", f.display());
                }
                self.path_source()?;
                if matches!(
                    self.experiment,
                    Experiment::Expand | Experiment::Bound | Experiment::Compare
                ) {
                    ensure!(
                        p.n_max <= p.k_max,
                        "params.n_max ({}) must not exceed params.k_max ({})",
                        p.n_max,
                        p.k_max
                    );
                }
                if matches!(self.experiment, Experiment::Bound | Experiment::Compare) {
                    let gamma = p.gamma.or(p.gamma_grid.first().copied()).unwrap_or(0.0);
                    self.bound_params(gamma, p.m.unwrap_or(1.0))?;
                    ensure!(
                        !p.gamma_grid.is_empty(),
                        "params.gamma_grid must be nonempty"
                    );
                }
            }
            Experiment::Magnus => {
                let m = self
                    .magnus
                    .as_ref()
                    .context("experiment `magnus` needs a `magnus` section")?;
                young_taylor::magnus::MatrixLieSetup::from_rows(
                    m.drift.clone(),
                    m.generators.clone(),
                )?;
                ensure!(m.k_max >= 1, "magnus.k_max must be at least 1");
                ensure!(m.trust_radius > 0.0, "magnus.trust_radius must be positive");
                self.path_source()?;
            }
            Experiment::McL2 => {
                self.mc
                    .as_ref()
                    .context("experiment `mc-l2` needs an `mc` section")?
                    .to_config()?;
            }
        }
        Ok(())
    }

    /// The tail mode requested for `detect_tc`.
    pub fn wants_tail(&self) -> bool {
        self.params.tail == TailChoice::Bound
    }
}
