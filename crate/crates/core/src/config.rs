//! TOML experiment configuration.
//!
//! ```toml
//! [family]
//! kind = "singular"          # constant | singular | algebraic | custom
//! chi = 0.5
//!
//! [model]
//! d = 1.0
//! n_dim = 2
//! lengths = [8.0, 8.0]
//! cells = [64, 64]
//!
//! [initial]
//! kind = "gaussian-bump"     # constant | gaussian-bump | file
//! amplitude = 2.0
//! width = 0.5
//! baseline_u = 1.0
//! baseline_v = 1.0
//!
//! [run]
//! horizon = 50.0
//! sample_every = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, State};
use crate::motility::{CustomTable, ModelParams, MotilityFamily};
use crate::stepper::StepControl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Constant,
    Singular,
    #[serde(alias = "algebraic_ks", alias = "algebraic-ks")]
    Algebraic,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<f64>,
    /// Custom tables: signal abscissae and sampled `gamma`, `phi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
}

impl FamilySpec {
    pub fn singular(chi: f64) -> Self {
        Self {
            kind: FamilyKind::Singular,
            chi: Some(chi),
            sigma: None,
            lambda: None,
            alpha: None,
            gamma0: None,
            phi0: None,
            v: None,
            gamma: None,
            phi: None,
        }
    }

    pub fn to_family(&self) -> Result<MotilityFamily> {
        let mut missing = Vec::new();
        let mut need = |name: &str, x: Option<f64>| {
            if x.is_none() {
                missing.push(format!(
                    "family.{name} is required for kind = {:?}",
                    self.kind
                ));
            }
            x.unwrap_or(f64::NAN)
        };
        let fam = match self.kind {
            FamilyKind::Constant => MotilityFamily::Constant {
                gamma0: need("gamma0", self.gamma0),
                phi0: need("phi0", self.phi0),
            },
            FamilyKind::Singular => MotilityFamily::Singular {
                chi: need("chi", self.chi),
            },
            FamilyKind::Algebraic => MotilityFamily::AlgebraicKs {
                sigma: need("sigma", self.sigma),
                lambda: need("lambda", self.lambda),
                alpha: need("alpha", self.alpha),
            },
            FamilyKind::Custom => match (&self.v, &self.gamma, &self.phi) {
                (Some(v), Some(g), Some(p)) => MotilityFamily::Custom(
                    CustomTable::new(v.clone(), g.clone(), p.clone())
                        .map_err(|e| Error::Config(vec![format!("family table: {e}")]))?,
                ),
                _ => {
                    return Err(Error::Config(vec![
                        "family.v, family.gamma and family.phi are required for kind = custom"
                            .into(),
                    ]))
                }
            },
        };
        if !missing.is_empty() {
            return Err(Error::Config(missing));
        }
        fam.validate()?;
        Ok(fam)
    }

    /// Sets a named scalar parameter; used by sweeps.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        let slot = match name {
            "chi" => &mut self.chi,
            "sigma" => &mut self.sigma,
            "lambda" => &mut self.lambda,
            "alpha" => &mut self.alpha,
            "gamma0" => &mut self.gamma0,
            "phi0" => &mut self.phi0,
            _ => return false,
        };
        *slot = Some(value);
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: f64,
    pub n_dim: usize,
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Constant,
    #[serde(alias = "gaussian_bump", alias = "bump")]
    GaussianBump,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub width: f64,
    pub baseline_u: f64,
    pub baseline_v: f64,
    /// Bump centre; the domain centre when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Snapshot-format CSV for `kind = "file"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Relative multiplicative perturbation of `u0`, uniform in `[-noise, noise]`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            kind: InitialKind::GaussianBump,
            amplitude: 1.0,
            width: 0.5,
            baseline_u: 1.0,
            baseline_v: 1.0,
            center: None,
            path: None,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon: f64,
    pub sample_every: f64,
    #[serde(default = "default_lp_exponents")]
    pub lp_exponents: Vec<f64>,
}

fn default_lp_exponents() -> Vec<f64> {
    vec![2.0, 4.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentSpec {
    pub p: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSpec {
    pub v_min: f64,
    pub v_max: f64,
    pub grid_points: usize,
    /// Lower bound of the signal used by the closed-form threshold of the
    /// algebraic family; `v_min` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self {
            v_min: 1e-3,
            v_max: 1e6,
            grid_points: 2048,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Snapshot cadence in model time; no snapshots when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots_every: Option<f64>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshots_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub step: StepControl,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<ExponentSpec>,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let mut cfg = parse_config_str(&text)?;
    // relative initial-data paths resolve against the config file
    if let (Some(p), Some(base)) = (cfg.initial.path.as_mut(), path.parent()) {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses without touching the filesystem; call [`ExperimentConfig::validate`] afterwards.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
}

impl ExperimentConfig {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn family(&self) -> Result<MotilityFamily> {
        self.family.to_family()
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            d: self.model.d,
            n_dim: self.model.n_dim,
            domain_lengths: self.model.lengths.clone(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(&self.model.cells, &self.model.lengths)
    }

    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut absorb = |r: Result<()>| match r {
            Ok(()) => {}
            Err(Error::Config(v)) => errs.extend(v),
            Err(e) => errs.push(e.to_string()),
        };
        let fam = self.family();
        absorb(fam.as_ref().map(|_| ()).map_err(Clone::clone));
        absorb(self.model_params().validate());
        if !(1..=2).contains(&self.model.lengths.len()) {
            absorb(Err(Error::Config(vec![
                "model.lengths must have one or two entries (simulation is 1D or 2D)".into(),
            ])));
        } else if self.model.cells.len() != self.model.lengths.len() {
            absorb(Err(Error::Config(vec![
                "model.cells must have as many entries as model.lengths".into(),
            ])));
        } else if let Err(e) = self.grid() {
            absorb(Err(Error::Config(vec![format!("model.cells: {e}")])));
        }
        absorb(self.step.validate());

        let mut run_errs = Vec::new();
        if !(self.run.horizon > 0.0 && self.run.horizon.is_finite()) {
            run_errs.push(format!(
                "run.horizon must be positive, got {}",
                self.run.horizon
            ));
        }
        if !(self.run.sample_every > 0.0) {
            run_errs.push(format!(
                "run.sample_every must be positive, got {}",
                self.run.sample_every
            ));
        }
        if self.run.lp_exponents.iter().any(|&p| !(p >= 1.0)) {
            run_errs.push("run.lp_exponents must all be >= 1".into());
        }
        if let Some(e) = &self.exponents {
            match (e.p, e.q) {
                (Some(p), Some(q)) => {
                    if !(p > 1.0 && p <= 4.0) {
                        run_errs.push(format!("exponents.p must lie in (1, 4], got {p}"));
                    }
                    if !(q > 0.0 && q <= 2.0) {
                        run_errs.push(format!("exponents.q must lie in (0, 2], got {q}"));
                    }
                }
                (None, None) => {}
                _ => run_errs.push("exponents.p and exponents.q must be given together".into()),
            }
        }
        let a = &self.audit;
        if !(a.v_min > 0.0 && a.v_max > a.v_min && a.v_max.is_finite()) {
            run_errs.push("audit range must satisfy 0 < v_min < v_max".into());
        }
        if a.grid_points < crate::hypothesis::MIN_GRID_POINTS {
            run_errs.push(format!(
                "audit.grid_points must be at least {}",
                crate::hypothesis::MIN_GRID_POINTS
            ));
        }
        if let Some(eta) = a.eta {
            if !(eta > 0.0) {
                run_errs.push("audit.eta must be positive".into());
            }
        }
        if let Some(s) = self.output.snapshots_every {
            if !(s > 0.0) {
                run_errs.push("output.snapshots_every must be positive".into());
            }
        }
        absorb(if run_errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(run_errs))
        });

        let ini = &self.initial;
        let mut ini_errs = Vec::new();
        if ini.kind != InitialKind::File {
            if !(ini.baseline_u >= 0.0) || !(ini.baseline_v >= 0.0) {
                ini_errs
                    .push("initial.baseline_u and initial.baseline_v must be nonnegative".into());
            }
            if !(ini.amplitude >= 0.0) {
                ini_errs.push("initial.amplitude must be nonnegative".into());
            }
            if ini.kind == InitialKind::GaussianBump && !(ini.width > 0.0) {
                ini_errs.push("initial.width must be positive".into());
            }
        } else if ini.path.is_none() {
            ini_errs.push("initial.path is required for kind = file".into());
        }
        if !(0.0..1.0).contains(&ini.noise) {
            ini_errs.push("initial.noise must lie in [0, 1)".into());
        }
        if let Some(c) = &ini.center {
            if c.len() != self.model.lengths.len() {
                ini_errs.push("initial.center must have one entry per axis".into());
            }
        }
        absorb(if ini_errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(ini_errs))
        });

        if errs.is_empty() {
            // data-level checks need a valid grid and family
            let state = self.initial_state()?;
            let fam = fam.expect("validated above");
            let mut data_errs = Vec::new();
            if state.u.min() < 0.0 || state.v.min() < 0.0 {
                data_errs.push("initial data must be nonnegative".to_string());
            }
            if state.u.values().iter().all(|&x| x == 0.0)
                || state.v.values().iter().all(|&x| x == 0.0)
            {
                data_errs.push("initial u0 and v0 must not vanish identically".to_string());
            }
            if fam.is_singular_at_zero() && state.v.min() <= 0.0 {
                data_errs.push(
                    "initial v0 has a zero cell but the motility family is singular at v = 0"
                        .to_string(),
                );
            }
            if !data_errs.is_empty() {
                return Err(Error::Config(data_errs));
            }
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Builds the initial state described by `[initial]`.
    pub fn initial_state(&self) -> Result<State> {
        let grid = self.grid()?;
        let ini = &self.initial;
        let (mut u, v) = match ini.kind {
            InitialKind::Constant => (grid.constant(ini.baseline_u), grid.constant(ini.baseline_v)),
            InitialKind::GaussianBump => {
                let center: Vec<f64> = ini
                    .center
                    .clone()
                    .unwrap_or_else(|| grid.lengths().iter().map(|l| 0.5 * l).collect());
                let two_w2 = 2.0 * ini.width * ini.width;
                let u = grid.field_from_fn(|x| {
                    let r2: f64 = (0..grid.dim()).map(|k| (x[k] - center[k]).powi(2)).sum();
                    ini.baseline_u + ini.amplitude * (-r2 / two_w2).exp()
                });
                (u, grid.constant(ini.baseline_v))
            }
            InitialKind::File => {
                let path = ini.path.as_ref().ok_or_else(|| {
                    Error::Config(vec!["initial.path is required for kind = file".into()])
                })?;
                read_snapshot(path, &grid)?
            }
        };
        if ini.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(ini.seed);
            for x in u.values_mut() {
                *x *= 1.0 + ini.noise * rng.gen_range(-1.0..=1.0);
            }
        }
        State::new(u, v, 0.0)
    }
}

/// Reads `u` and `v` columns of a snapshot CSV (`x[,y],u,v`) onto `grid`.
pub fn read_snapshot(path: &Path, grid: &Grid) -> Result<(ScalarField, ScalarField)> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Config(vec![format!(
            "cannot read initial data {}: {e}",
            path.display()
        )])
    })?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(iu), Some(iv)) = (col("u"), col("v")) else {
        return Err(Error::Config(vec![format!(
            "initial data {} lacks u and v columns",
            path.display()
        )]));
    };
    let mut u = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(grid.len());
    for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |i: usize| -> Result<f64> {
            fields.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
                Error::Config(vec![format!(
                    "initial data line {}: bad number",
                    lineno + 2
                )])
            })
        };
        u.push(parse(iu)?);
        v.push(parse(iv)?);
    }
    if u.len() != grid.len() {
        return Err(Error::Config(vec![format!(
            "initial data has {} rows, grid has {} cells",
            u.len(),
            grid.len()
        )]));
    }
    Ok((ScalarField::new(*grid, u)?, ScalarField::new(*grid, v)?))
}
