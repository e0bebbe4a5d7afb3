//! Shared command-line options and their translation into library types.

use clap::{Args, ValueEnum};
use gridless_doa::pipeline::{BetaSpec, DeltaSpec, EstimatorConfig};
use gridless_doa::prune::LassoForm;
use gridless_doa::simulate::{GeometrySpec, NoiseKind};
use gridless_doa::{DoaError, Result};
use std::path::PathBuf;

#[derive(Debug, Clone, Default, Args)]
#[group(multiple = false)]
pub struct GeometryArgs {
    /// CSV of sensor positions `x,y` in wavelengths.
    #[arg(long, value_name = "CSV")]
    pub geometry: Option<PathBuf>,
    /// Uniform circular array.
    #[arg(long, value_name = "M,RADIUS")]
    pub uca: Option<String>,
    /// Uniform linear array along x, centred on the origin.
    #[arg(long, value_name = "M,SPACING")]
    pub ula: Option<String>,
    /// Random planar array inside a disc.
    #[arg(long, value_name = "M,MIN_SPACING,MAX_RADIUS[,SEED]")]
    pub rpa: Option<String>,
}

impl GeometryArgs {
    pub fn spec(&self) -> Result<Option<GeometrySpec>> {
        if let Some(path) = &self.geometry {
            return Ok(Some(GeometrySpec::Csv { path: path.clone() }));
        }
        if let Some(s) = &self.uca {
            let v = parse_list(s, "--uca")?;
            expect_len(&v, 2, 2, "--uca")?;
            return Ok(Some(GeometrySpec::Uca {
                m: count(v[0], "--uca")?,
                radius: v[1],
            }));
        }
        if let Some(s) = &self.ula {
            let v = parse_list(s, "--ula")?;
            expect_len(&v, 2, 2, "--ula")?;
            return Ok(Some(GeometrySpec::Ula {
                m: count(v[0], "--ula")?,
                spacing: v[1],
            }));
        }
        if let Some(s) = &self.rpa {
            let v = parse_list(s, "--rpa")?;
            expect_len(&v, 3, 4, "--rpa")?;
            return Ok(Some(GeometrySpec::Rpa {
                m: count(v[0], "--rpa")?,
                min_spacing: v[1],
                max_radius: v[2],
                seed: v
                    .get(3)
                    .map_or(Ok(0), |&s| count(s, "--rpa").map(|s| s as u64))?,
            }));
        }
        Ok(None)
    }

    pub fn require(&self) -> Result<GeometrySpec> {
        self.spec()?.ok_or_else(|| {
            DoaError::InvalidArgument(
                "an array is required: --geometry, --uca, --ula or --rpa".into(),
            )
        })
    }
}

/// Comma-separated reals.
pub fn parse_list(s: &str, flag: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| DoaError::Parse(format!("{flag}: `{t}` is not a number")))
        })
        .collect()
}

fn expect_len(v: &[f64], lo: usize, hi: usize, flag: &str) -> Result<()> {
    if v.len() < lo || v.len() > hi {
        return Err(DoaError::Parse(format!(
            "{flag}: expected {lo} to {hi} values, got {}",
            v.len()
        )));
    }
    Ok(())
}

fn count(v: f64, flag: &str) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(DoaError::Parse(format!("{flag}: `{v}` is not a count")));
    }
    Ok(v as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Sqrt,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    White,
    OneOverF,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::White => NoiseKind::White,
            NoiseArg::OneOverF => NoiseKind::OneOverF,
        }
    }
}

/// Estimator options other than the noise bound.
#[derive(Debug, Clone, Default, Args)]
pub struct TuningArgs {
    /// TOML file with estimator settings; flags override it.
    #[arg(long, value_name = "TOML")]
    pub config: Option<PathBuf>,
    /// Fourier-series truncation level.
    #[arg(long, value_name = "DB", allow_negative_numbers = true)]
    pub gamma_db: Option<f64>,
    /// DFT length, overriding the one derived from the array radius.
    #[arg(long = "P", value_name = "P")]
    pub p: Option<usize>,
    /// Fixed LASSO weight.
    #[arg(long, conflicts_with = "beta_mult")]
    pub beta: Option<f64>,
    /// Multiplier of the automatic LASSO weight.
    #[arg(long)]
    pub beta_mult: Option<f64>,
    #[arg(long, value_enum)]
    pub lasso_form: Option<FormArg>,
    /// Random fill angles added to the pruning dictionary.
    #[arg(long)]
    pub n_fill: Option<usize>,
    /// Minimum distance of a fill angle from any candidate, degrees.
    #[arg(long)]
    pub fill_exclusion_deg: Option<f64>,
    /// Relative magnitude below which LASSO coefficients are dropped.
    #[arg(long)]
    pub support_thresh: Option<f64>,
    /// Maximum distance of a kept root from the unit circle.
    #[arg(long)]
    pub circle_tol: Option<f64>,
    /// Roots closer than this are merged, degrees.
    #[arg(long)]
    pub cluster_tol_deg: Option<f64>,
    /// Report every unit-circle root without pruning.
    #[arg(long)]
    pub no_prune: bool,
}

impl TuningArgs {
    /// Configuration file (or defaults) with flag overrides applied.
    pub fn config(&self) -> Result<EstimatorConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                toml::from_str(&text)
                    .map_err(|e| DoaError::Parse(format!("{}: {e}", path.display())))?
            }
            None => EstimatorConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    /// Overrides the fields given on the command line.
    pub fn apply(&self, cfg: &mut EstimatorConfig) {
        if let Some(v) = self.gamma_db {
            cfg.gamma_db = v;
        }
        if self.p.is_some() {
            cfg.p_override = self.p;
        }
        if let Some(v) = self.beta {
            cfg.beta = BetaSpec::Fixed { value: v };
        }
        if let Some(v) = self.beta_mult {
            cfg.beta = BetaSpec::Auto { multiplier: v };
        }
        if let Some(f) = self.lasso_form {
            cfg.lasso_form = match f {
                FormArg::Sqrt => LassoForm::SquareRoot,
                FormArg::Squared => LassoForm::Squared,
            };
        }
        if let Some(v) = self.n_fill {
            cfg.n_fill = v;
        }
        if let Some(v) = self.fill_exclusion_deg {
            cfg.fill_exclusion_deg = v;
        }
        if let Some(v) = self.support_thresh {
            cfg.support_thresh = v;
        }
        if let Some(v) = self.circle_tol {
            cfg.circle_tol = v;
        }
        if let Some(v) = self.cluster_tol_deg {
            cfg.cluster_tol_deg = v;
        }
        if self.no_prune {
            cfg.prune = false;
        }
    }
}

/// Noise bound of a single estimate.
#[derive(Debug, Clone, Default, Args)]
pub struct DeltaArgs {
    /// Noise-norm bound used as given.
    #[arg(long, conflicts_with = "delta_mult")]
    pub delta: Option<f64>,
    /// Bound as a multiple of `sigma_n sqrt(M)`.
    #[arg(long)]
    pub delta_mult: Option<f64>,
    /// Per-sensor noise standard deviation of a measured snapshot.
    #[arg(long)]
    pub sigma_n: Option<f64>,
}

impl DeltaArgs {
    /// Resolves the bound from flags, a known noise level, or the config file.
    pub fn apply(
        &self,
        cfg: &mut EstimatorConfig,
        known_sigma: Option<f64>,
        from_file: bool,
    ) -> Result<()> {
        if let Some(v) = self.delta {
            cfg.delta = DeltaSpec::Fixed { value: v };
            return Ok(());
        }
        match self.sigma_n.or(known_sigma) {
            Some(sigma_n) => {
                cfg.delta = DeltaSpec::NoiseScaled {
                    multiplier: self.delta_mult.unwrap_or(1.0),
                    sigma_n,
                };
                Ok(())
            }
            None if self.delta_mult.is_some() => Err(DoaError::InvalidArgument(
                "--delta-mult needs a noise level from --sigma-n or a scenario".into(),
            )),
            None if from_file => Ok(()),
            None => Err(DoaError::InvalidArgument(
                "no noise bound: give --delta, --sigma-n, a scenario, or a config file".into(),
            )),
        }
    }
}
