//! TOML run configuration.
//!
//! ```toml
//! gammas = [0.5, 1.0, 2.0]
//! epsilon0 = 0.5
//! kernel = { family = "gaussian" }
//! Q = { family = "power", p = 2.0 }
//! omega = { name = "O3" }
//! omega1 = { name = "O1" }
//! grid = { x_max = 12.0, n = 1201, scheme = "uniform-simpson" }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::nonlinearity::{make_omega, q_from_family, OmegaClass, OmegaName, OmegaSpec, QSpec};
use crate::quadrature::{Grid, Scheme};
use crate::{nonlinear, quasilinear, StopCriteria};

pub const DEFAULT_GAMMAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const DEFAULT_LIMIT_TOL: f64 = 0.05;
pub const DEFAULT_OUTPUT: &str = "out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QConfig {
    pub family: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaConfig {
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_max: Option<f64>,
    pub n: Option<usize>,
    pub scheme: Option<Scheme>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    /// Nonlinear solves.
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Quasilinear `f`, scaled by `1 + γ·x_max`.
    pub quasilinear_tol: Option<f64>,
    pub quasilinear_max_iter: Option<usize>,
    /// `ψ` and `H`.
    pub linear_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugConfig {
    #[serde(default)]
    pub chi_both_readings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kernel: KernelConfig,
    #[serde(rename = "Q")]
    q: Option<QConfig>,
    omega: Option<OmegaConfig>,
    omega1: Option<OmegaConfig>,
    omega2: Option<OmegaConfig>,
    grid: Option<GridConfig>,
    gammas: Option<Vec<f64>>,
    stop: Option<StopConfig>,
    epsilon0: Option<f64>,
    limit_tol: Option<f64>,
    output: Option<PathBuf>,
    debug: Option<DebugConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedGrid {
    pub x_max: f64,
    pub n: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedStop {
    pub nonlinear: StopCriteria,
    pub quasilinear: StopCriteria,
    pub linear: StopCriteria,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kernel: KernelFamily,
    #[serde(rename = "Q")]
    pub q: Option<QConfig>,
    pub omega1: Option<OmegaName>,
    pub omega2: Option<OmegaName>,
    pub grid: ResolvedGrid,
    pub gammas: Vec<f64>,
    pub stop: ResolvedStop,
    pub epsilon0: f64,
    pub limit_tol: f64,
    pub output: PathBuf,
    pub chi_both_readings: bool,
}

fn range_error(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(range_error(name, format!("must be positive and finite, got {v}")))
    }
}

fn kernel_family(k: &KernelConfig) -> Result<KernelFamily> {
    let family = match k.family.as_str() {
        "gaussian" => KernelFamily::Gaussian,
        "quartic" => KernelFamily::Quartic,
        "exponential" => KernelFamily::Exponential {
            amplitude: positive("kernel.amplitude", k.amplitude.unwrap_or(0.5))?,
        },
        other => return Err(Error::UnknownCatalogEntry(other.to_string())),
    };
    if k.amplitude.is_some() && !matches!(family, KernelFamily::Exponential { .. }) {
        return Err(range_error(
            "kernel.amplitude",
            format!("not a parameter of `{}`", k.family),
        ));
    }
    Ok(family)
}

/// Default `(x_max, n)` per kernel family.
pub fn default_grid(family: KernelFamily) -> (f64, usize) {
    match family {
        KernelFamily::Gaussian => (12.0, 1201),
        KernelFamily::Quartic => (40.0, 2001),
        KernelFamily::Exponential { .. } => (40.0, 2001),
    }
}

fn omega_name(cfg: &OmegaConfig, key: &'static str, want: Option<OmegaClass>) -> Result<OmegaName> {
    let name: OmegaName = cfg.name.parse()?;
    if let Some(class) = want {
        if name.class() != class {
            return Err(range_error(
                key,
                format!("`{}` belongs to the other perturbation class", cfg.name),
            ));
        }
    }
    Ok(name)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        RunConfig::resolve(raw)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn resolve(raw: RawConfig) -> Result<RunConfig> {
        let kernel = kernel_family(&raw.kernel)?;
        if let Some(q) = &raw.q {
            q_from_family(&q.family, q.p)?;
        }
        let mut omega1 = raw
            .omega1
            .as_ref()
            .map(|o| omega_name(o, "omega1", Some(OmegaClass::Omega1)))
            .transpose()?;
        let mut omega2 = raw
            .omega2
            .as_ref()
            .map(|o| omega_name(o, "omega2", Some(OmegaClass::Omega2)))
            .transpose()?;
        if let Some(o) = &raw.omega {
            let name = omega_name(o, "omega", None)?;
            let slot = match name.class() {
                OmegaClass::Omega1 => &mut omega1,
                OmegaClass::Omega2 => &mut omega2,
            };
            if slot.is_some_and(|s| s != name) {
                return Err(range_error(
                    "omega",
                    "conflicts with an explicit omega1/omega2 entry".to_string(),
                ));
            }
            *slot = Some(name);
        }

        let (dx, dn) = default_grid(kernel);
        let g = raw.grid.unwrap_or_default();
        let grid = ResolvedGrid {
            x_max: positive("grid.x_max", g.x_max.unwrap_or(dx))?,
            n: g.n.unwrap_or(dn),
            scheme: g.scheme.unwrap_or(Scheme::UniformSimpson),
        };
        Grid::build(grid.x_max, grid.n, grid.scheme)?;

        let gammas = raw.gammas.unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
        if gammas.is_empty() {
            return Err(range_error("gammas", "at least one slope is required".to_string()));
        }
        for &g in &gammas {
            positive("gammas", g)?;
        }

        let s = raw.stop.unwrap_or_default();
        let stop = ResolvedStop {
            nonlinear: StopCriteria::new(
                positive("stop.tol", s.tol.unwrap_or(nonlinear::DEFAULT_TOL))?,
                s.max_iter.unwrap_or(nonlinear::DEFAULT_MAX_ITER),
            ),
            quasilinear: StopCriteria::new(
                positive(
                    "stop.quasilinear_tol",
                    s.quasilinear_tol.unwrap_or(quasilinear::DEFAULT_TOL),
                )?,
                s.quasilinear_max_iter.unwrap_or(quasilinear::DEFAULT_MAX_ITER),
            ),
            linear: StopCriteria::new(
                positive(
                    "stop.linear_tol",
                    s.linear_tol.unwrap_or(quasilinear::DEFAULT_LINEAR_TOL),
                )?,
                s.quasilinear_max_iter.unwrap_or(quasilinear::DEFAULT_MAX_ITER),
            ),
        };
        let epsilon0 = raw.epsilon0.unwrap_or(crate::constants::DEFAULT_EPSILON0);
        if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
            return Err(range_error("epsilon0", format!("must lie in (0, 1), got {epsilon0}")));
        }
        Ok(RunConfig {
            kernel,
            q: raw.q,
            omega1,
            omega2,
            grid,
            gammas,
            stop,
            epsilon0,
            limit_tol: positive("limit_tol", raw.limit_tol.unwrap_or(DEFAULT_LIMIT_TOL))?,
            output: raw.output.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
            chi_both_readings: raw.debug.is_some_and(|d| d.chi_both_readings),
        })
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec::new(self.kernel)
    }

    pub fn q_spec(&self) -> Result<Option<QSpec>> {
        self.q.as_ref().map(|q| q_from_family(&q.family, q.p)).transpose()
    }

    pub fn omega1_spec(&self) -> Option<OmegaSpec> {
        self.omega1.map(make_omega)
    }

    pub fn omega2_spec(&self) -> Option<OmegaSpec> {
        self.omega2.map(make_omega)
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::build(self.grid.x_max, self.grid.n, self.grid.scheme)?))
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kernel = { family = "gaussian" }
Q = { family = "power", p = 2.0 }
omega = { name = "O3" }
"#;

    #[test]
    fn minimal_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.grid.x_max, 12.0);
        assert_eq!(c.grid.n, 1201);
        assert_eq!(c.epsilon0, 0.5);
        assert_eq!(c.omega2, Some(OmegaName::O3));
        assert_eq!(c.omega1, None);
        assert_eq!(c.gammas, DEFAULT_GAMMAS.to_vec());
    }

    #[test]
    fn quartic_defaults() {
        let c = RunConfig::from_toml_str("kernel = { family = \"quartic\" }").unwrap();
        assert_eq!((c.grid.x_max, c.grid.n), (40.0, 2001));
    }

    #[test]
    fn rejects_bad_exponents() {
        let e = RunConfig::from_toml_str(&MINIMAL.replace("p = 2.0", "p = 1.0")).unwrap_err();
        assert!(e.to_string().contains("p must exceed 1"), "{e}");
        let sqrt = MINIMAL.replace("\"power\", p = 2.0", "\"sqrt\", p = 1.4");
        assert!(RunConfig::from_toml_str(&sqrt).is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let e = RunConfig::from_toml_str(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = RunConfig::from_toml_str("kernel = { family = \"gaussian\", width = 2 }").unwrap_err();
        assert!(e.to_string().contains("width"), "{e}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let e = RunConfig::from_toml_str("kernel = { family = \n").unwrap_err();
        assert!(e.to_string().contains("line"), "{e}");
    }

    #[test]
    fn range_violations_name_the_field() {
        let e = RunConfig::from_toml_str(&format!("epsilon0 = 1.5\n{MINIMAL}")).unwrap_err();
        assert!(e.to_string().contains("epsilon0"), "{e}");
        let e = RunConfig::from_toml_str(&format!("gammas = [1.0, -2.0]\n{MINIMAL}")).unwrap_err();
        assert!(e.to_string().contains("gammas"), "{e}");
        let e = RunConfig::from_toml_str(&format!("{MINIMAL}grid = {{ n = 1200 }}\n")).unwrap_err();
        assert!(e.to_string().contains("odd"), "{e}");
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("O3", "O9")).is_err());
        assert!(RunConfig::from_toml_str(&format!("{MINIMAL}omega1 = {{ name = \"O4\" }}\n")).is_err());
    }

    #[test]
    fn hash_is_stable_and_ignores_output() {
        let a = RunConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.epsilon0 = 0.25;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
