//! Experiment reports: output tables plus reference checks.

use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::table::Table;

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Printed in the published tables or text.
    Published,
    /// Computed independently of the code path under test.
    Derived,
    /// Holds by construction (closed form or identity).
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Relation {
    Close { expected: f64, tol: f64 },
    Range { lo: f64, hi: f64 },
    AtMost { bound: f64 },
    AtLeast { bound: f64 },
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(flatten)]
    pub relation: Relation,
    pub actual: f64,
    pub pass: bool,
    pub origin: Origin,
    pub location: String,
}

impl Check {
    fn build(name: &str, relation: Relation, actual: f64, origin: Origin, location: &str) -> Self {
        let pass = match relation {
            Relation::Close { expected, tol } => (actual - expected).abs() <= tol,
            Relation::Range { lo, hi } => actual >= lo && actual <= hi,
            Relation::AtMost { bound } => actual <= bound,
            Relation::AtLeast { bound } => actual >= bound,
            Relation::Holds => actual == 1.0,
        };
        Check {
            name: name.to_string(),
            relation,
            actual,
            pass,
            origin,
            location: location.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub id: String,
    pub parameters: Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
    pub table_names: Vec<String>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub pass: bool,
    /// Kept out of the serialized report so output files stay byte-stable.
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl ExperimentReport {
    pub fn new(id: &str, parameters: Value) -> Self {
        ExperimentReport {
            id: id.to_string(),
            parameters,
            tables: Vec::new(),
            table_names: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            pass: true,
            wall_clock: Duration::ZERO,
        }
    }

    pub fn table(&mut self, t: Table) {
        self.table_names.push(t.name.clone());
        self.tables.push(t);
    }

    fn add(&mut self, c: Check) {
        self.pass &= c.pass;
        self.checks.push(c);
    }

    pub fn close(
        &mut self,
        name: &str,
        expected: f64,
        actual: f64,
        tol: f64,
        origin: Origin,
        location: &str,
    ) {
        self.add(Check::build(
            name,
            Relation::Close { expected, tol },
            actual,
            origin,
            location,
        ));
    }

    pub fn range(
        &mut self,
        name: &str,
        lo: f64,
        hi: f64,
        actual: f64,
        origin: Origin,
        location: &str,
    ) {
        self.add(Check::build(
            name,
            Relation::Range { lo, hi },
            actual,
            origin,
            location,
        ));
    }

    pub fn at_most(&mut self, name: &str, bound: f64, actual: f64, origin: Origin, location: &str) {
        self.add(Check::build(
            name,
            Relation::AtMost { bound },
            actual,
            origin,
            location,
        ));
    }

    pub fn at_least(
        &mut self,
        name: &str,
        bound: f64,
        actual: f64,
        origin: Origin,
        location: &str,
    ) {
        self.add(Check::build(
            name,
            Relation::AtLeast { bound },
            actual,
            origin,
            location,
        ));
    }

    pub fn holds(&mut self, name: &str, ok: bool, origin: Origin, location: &str) {
        let actual = if ok { 1.0 } else { 0.0 };
        self.add(Check::build(
            name,
            Relation::Holds,
            actual,
            origin,
            location,
        ));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn published_count(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.origin == Origin::Published)
            .count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Writes every table (CSV + JSON) and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for t in &self.tables {
            t.write_pair(dir)?;
        }
        let path = dir.join("report.json");
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
