//! Run configuration: TOML file plus command-line overrides.

use std::path::PathBuf;

use clap::ValueEnum;
use qtm_core::excitations::ExcitationSpec;
use qtm_core::nlie::NlieOptions;
use qtm_core::{validate_params, ModelParams, RawParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Dressed,
    Contour,
    SolveNlie,
    Excite,
    Spectrum,
    CftCheck,
    BetheCheck,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub quad_order: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub gl_nodes: usize,
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub root_tol: f64,
    /// Samples per unit parameter when tracing the Fermi curve.
    pub fermi_density: f64,
    /// Real spectral parameter at which bethe-check compares eigenvalues.
    pub xi: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        let o = NlieOptions::default();
        Numerics {
            quad_order: 64,
            tol: o.tol,
            max_iter: o.max_iter,
            gl_nodes: o.gl_nodes,
            kappa: o.kappa,
            radius: None,
            root_tol: o.root_tol,
            fermi_density: 20.0,
            xi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    /// Command run at each grid point (solve-nlie when absent).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub temperatures: Vec<f64>,
    pub trotter_ns: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputCfg {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default = "default_model")]
    pub model: RawParams,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub output: OutputCfg,
    #[serde(default)]
    pub excitations: Vec<ExcitationSpec>,
}

fn default_model() -> RawParams {
    RawParams { j: 1.0, zeta: 1.3, h: 2.0, t: 0.1, trotter_n: None, m: None, c_d: None }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            model: default_model(),
            numerics: Numerics::default(),
            sweep: Sweep::default(),
            output: OutputCfg::default(),
            excitations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub temperature: Option<f64>,
    pub trotter_n: Option<i64>,
    pub quad_order: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn emit(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(t) = o.temperature {
            self.model.t = t;
        }
        if let Some(n) = o.trotter_n {
            self.model.trotter_n = Some(n);
        }
        if let Some(q) = o.quad_order {
            self.numerics.quad_order = q;
        }
        if let Some(t) = o.tol {
            self.numerics.tol = t;
        }
        if let Some(p) = &o.out {
            self.output.path = Some(p.clone());
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(validate_params(&self.model)?)
    }

    pub fn options(&self) -> NlieOptions {
        NlieOptions {
            tol: self.numerics.tol,
            max_iter: self.numerics.max_iter,
            gl_nodes: self.numerics.gl_nodes,
            kappa: self.numerics.kappa,
            radius: self.numerics.radius,
            root_tol: self.numerics.root_tol,
            ..NlieOptions::default()
        }
    }

    /// Excitation specs to run; the empty configuration when none are listed.
    pub fn specs(&self) -> Vec<ExcitationSpec> {
        if self.excitations.is_empty() {
            vec![ExcitationSpec::empty()]
        } else {
            self.excitations.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        if self.numerics.quad_order < 4 {
            return Err(CliError::Validation("numerics.quad_order must be at least 4".into()));
        }
        if !(self.numerics.tol > 0.0) {
            return Err(CliError::Validation("numerics.tol must be positive".into()));
        }
        for spec in &self.excitations {
            spec.validate()?;
        }
        for &t in &self.sweep.temperatures {
            validate_params(&RawParams { t, ..self.model.clone() })?;
        }
        for &n in &self.sweep.trotter_ns {
            validate_params(&RawParams { trotter_n: Some(n), ..self.model.clone() })?;
        }
        if self.sweep.command == Some(Command::Sweep) {
            return Err(CliError::Validation("sweep.command cannot be sweep".into()));
        }
        Ok(())
    }
}
