//! Scenario files: one TOML document per run, with dotted-key overrides applied before parsing.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use wiener_core::fields::{FieldFamily, MatrixSpec};
use wiener_core::geometry::{BoundingBox, GridDomain, Shape};
use wiener_core::solver::SolverOptions;
use wiener_core::wiener::WienerConfig;
use wiener_core::Error;

/// Default resolution budget: `2^24` cells.
pub const CELL_BUDGET: usize = 1 << 24;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridSpec {
    Bounds { lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize> },
    Centered {
        center: Vec<f64>,
        half_width: Vec<f64>,
        h: f64,
        /// Odd cell counts put a node on the center, even ones a cell corner.
        #[serde(default = "yes")]
        node_at_center: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub d: Shape,
    pub omega: Shape,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySpec {
    pub obstacle: Shape,
    /// Analytic value printed next to the computed capacity.
    #[serde(default)]
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSpec {
    pub radii: Vec<f64>,
    #[serde(default)]
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSpec {
    pub radii: Vec<f64>,
    #[serde(default)]
    pub theta_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSpec {
    /// Random boundary data sets for the maximum principle.
    #[serde(default = "five")]
    pub mp_trials: usize,
    /// Ball radius for the Poincaré ratio.
    #[serde(default)]
    pub poincare_radius: Option<f64>,
}

fn five() -> usize {
    5
}

impl Default for ValidateSpec {
    fn default() -> Self {
        Self {
            mp_trials: five(),
            poincare_radius: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Binary dumps of masks and fields next to the reports.
    #[serde(default)]
    pub dump_grids: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: GridSpec,
    pub domain: DomainSpec,
    pub field: FieldFamily,
    #[serde(default = "structure")]
    pub matrices: Vec<MatrixSpec>,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub wiener: WienerConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub capacity: Option<CapacitySpec>,
    #[serde(default)]
    pub distance: Option<DistanceSpec>,
    #[serde(default)]
    pub cone: Option<ConeSpec>,
    #[serde(default)]
    pub validate: ValidateSpec,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "budget")]
    pub cell_budget: usize,
}

fn structure() -> Vec<MatrixSpec> {
    vec![MatrixSpec::Structure { scale: 1.0 }]
}

fn budget() -> usize {
    CELL_BUDGET
}

/// Sets `key` (dotted path) to `value`, parsed as a TOML value or taken as a string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .with_context(|| format!("override {spec:?} is not key=value"))?;
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override {key:?}: {p:?} is not a table"),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Scenario {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, Error> {
        let mut doc: toml::Table = text.parse().map_err(|e| Error::Config(format!("scenario: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o).map_err(|e| Error::Config(e.to_string()))?;
        }
        let s: Scenario = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("scenario: {e}")))?;
        s.field.validate()?;
        s.wiener.validate()?;
        Ok(s)
    }

    pub fn bbox(&self) -> Result<BoundingBox, Error> {
        let b = match &self.grid {
            GridSpec::Bounds { lo, hi, cells } => {
                check_budget(cells.iter().product(), self.cell_budget)?;
                BoundingBox::new(lo, hi, cells)?
            }
            GridSpec::Centered { center, half_width, h, node_at_center } => {
                let est: f64 = half_width.iter().map(|w| 2.0 * w / h + 1.0).product();
                check_budget(est as usize, self.cell_budget)?;
                BoundingBox::around(center, half_width, *h, *node_at_center)?
            }
        };
        if b.dim() != self.field.dim() {
            return Err(Error::Config(format!(
                "grid is {}-dimensional but the field family acts in dimension {}",
                b.dim(),
                self.field.dim()
            )));
        }
        Ok(b)
    }

    pub fn domain(&self) -> Result<GridDomain, Error> {
        GridDomain::from_shapes(self.bbox()?, &self.domain.d, &self.domain.omega)
    }
}

fn check_budget(cells: usize, budget: usize) -> Result<(), Error> {
    if cells > budget {
        return Err(Error::Config(format!("{cells} cells exceed the budget of {budget}")));
    }
    Ok(())
}
