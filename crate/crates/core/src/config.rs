//! JSON problem files.
//!
//! ```json
//! {
//!   "mesh": {"kind": "rectangle", "bounds": [0, 1, 0, 1], "nx": 16, "ny": 16},
//!   "coefficients": {"drift": ["1", "0"], "c": "1", "f": "..."},
//!   "exact": {"u": "sin(pi*x)*sin(pi*y)", "grad": ["...", "..."]},
//!   "rho": {"mode": "construct", "rings": 48, "extension": "zero"}
//! }
//! ```
//!
//! Every section except `mesh` and `coefficients` is optional.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{Form, ProblemSpec};
use crate::coeff::{CoefficientSet, Expr};
use crate::error::{Error, Result};
use crate::estimates::Sign;
use crate::linalg::SolverSettings;
use crate::mesh::{build_disk_mesh, build_rect_mesh, Enclosure, Point, TriMesh};
use crate::quadrature::Quadrature;
use crate::transform::{construct_rho, supply_rho, Extension, RhoOptions, RhoTransform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeshConfig {
    Rectangle { bounds: [f64; 4], nx: usize, ny: usize },
    Disk { center: Point, radius: f64, rings: usize },
    /// Plain-text mesh file, relative to the config file.
    File { path: PathBuf },
}

impl MeshConfig {
    pub fn build(&self, base: &Path) -> Result<TriMesh> {
        match self {
            MeshConfig::Rectangle { bounds, nx, ny } => build_rect_mesh(*bounds, *nx, *ny),
            MeshConfig::Disk { center, radius, rings } => build_disk_mesh(*center, *radius, *rings),
            MeshConfig::File { path } => {
                let p = base.join(path);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Config(format!("cannot read mesh {}: {e}", p.display())))?;
                TriMesh::from_text(&text)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSolution {
    pub u: Expr,
    pub grad: Option<[Expr; 2]>,
}

fn default_rings() -> usize {
    48
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum RhoConfig {
    Construct {
        #[serde(default = "default_rings")]
        rings: usize,
        #[serde(default)]
        extension: Extension,
        x1: Option<Point>,
    },
    Supplied {
        rho: Expr,
        grad: [Expr; 2],
    },
}

impl Default for RhoConfig {
    fn default() -> Self {
        RhoConfig::Construct { rings: default_rings(), extension: Extension::Zero, x1: None }
    }
}

fn default_thetas() -> Vec<f64> {
    vec![1.0, 2.0, f64::INFINITY]
}

fn default_levels() -> usize {
    4
}

fn default_two_star() -> f64 {
    1.5
}

/// Settings for the `verify` command. `thetas` accepts numbers and the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_thetas", deserialize_with = "exponents")]
    pub thetas: Vec<f64>,
    pub k4_hat: Option<f64>,
    pub sign: Option<Sign>,
    #[serde(default)]
    pub sources: Vec<Expr>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_two_star")]
    pub two_star: f64,
    pub truncation_levels: Option<Vec<f64>>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            thetas: default_thetas(),
            k4_hat: None,
            sign: None,
            sources: vec![],
            levels: default_levels(),
            two_star: default_two_star(),
            truncation_levels: None,
        }
    }
}

fn exponents<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Exp {
        Num(f64),
        Text(String),
    }
    Vec::<Exp>::deserialize(d)?
        .into_iter()
        .map(|e| match e {
            Exp::Num(v) => Ok(v),
            Exp::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Exp::Text(s) => Err(serde::de::Error::custom(format!("bad exponent `{s}`"))),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mesh: MeshConfig,
    pub coefficients: CoefficientSet,
    #[serde(default)]
    pub form: Form,
    #[serde(default)]
    pub quadrature: Quadrature,
    pub truncation_level: Option<f64>,
    #[serde(default)]
    pub solver: SolverSettings,
    pub enclosure: Option<Enclosure>,
    pub exact: Option<ExactSolution>,
    #[serde(default)]
    pub rho: RhoConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// Maps a serde error to a config error with its line and column.
pub fn json_error(e: serde_json::Error) -> Error {
    Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ProblemConfig = serde_json::from_str(text).map_err(json_error)?;
        c.coefficients.validate().map_err(Error::Config)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_json(&text)?, base))
    }

    pub fn spec(&self, base: &Path) -> Result<ProblemSpec> {
        let mesh = Arc::new(self.mesh.build(base)?);
        let mut s = ProblemSpec::new(mesh, self.coefficients.clone());
        s.form = self.form;
        s.quadrature = self.quadrature;
        s.truncation_level = self.truncation_level;
        s.solver = self.solver;
        if let Some(enc) = self.enclosure {
            s.enclosure = Enclosure::new(enc.x0, enc.r, &s.mesh)?;
        }
        s.validate()?;
        Ok(s)
    }

    /// Builds the weight for a divergence-form spec.
    pub fn transform(&self, spec: &ProblemSpec) -> Result<RhoTransform> {
        match &self.rho {
            RhoConfig::Construct { rings, extension, x1 } => {
                let mut o = RhoOptions::new(spec.enclosure);
                o.rings = *rings;
                o.extension = *extension;
                o.x1 = *x1;
                o.quadrature = spec.quadrature;
                construct_rho(&spec.coeffs, spec.mesh.clone(), &o)
            }
            RhoConfig::Supplied { rho, grad } => {
                supply_rho(rho.clone(), grad.clone(), &spec.coeffs, spec.mesh.clone(), spec.quadrature)
            }
        }
    }
}
