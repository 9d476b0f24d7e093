use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fractalconfig::patterns::fixtures::{degenerate_system, repaired_system, showcase_system};
use fractalconfig::patterns::{CutoffSpec, MatrixSystem, PatternSpec, PolynomialPhase};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const COMMANDS: &[&str] = &[
    "measure.build",
    "measure.certify",
    "fourier.table",
    "fourier.certify",
    "patterns.check",
    "osc.eval",
    "osc.certify",
    "forms.direct",
    "forms.dual",
    "forms.invert",
    "bounds.holder",
    "bounds.fiber",
    "bounds.main",
    "reg.decompose",
    "reg.bohr",
    "reg.dio",
    "pipeline.split",
    "pipeline.positivity",
    "search.pattern",
];

/// One replayable run: the command, its input files, parameters and seed.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub params: Map<String, Value>,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in config.inputs.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = config.out.as_mut() {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let command = self
            .command
            .as_deref()
            .ok_or_else(|| anyhow!("no command given"))?;
        if !COMMANDS.contains(&command) {
            bail!("unknown command '{command}'");
        }
        for (name, path) in &self.inputs {
            if !path.is_file() {
                bail!("input '{name}' does not exist: {}", path.display());
            }
        }
        Ok(())
    }

    /// Parameters decoded into a command's strict schema.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(Value::Object(self.params.clone())).map_err(|e| {
            anyhow!(
                "invalid params for {}: {e}",
                self.command.as_deref().unwrap_or("?")
            )
        })
    }

    /// `key=value` with the value read as JSON, falling back to a plain string.
    pub fn set_param(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("expected KEY=VALUE, got '{assignment}'"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.params.insert(key.to_string(), value);
        Ok(())
    }

    pub fn set_input(&mut self, assignment: &str) -> Result<()> {
        let (key, path) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("expected NAME=PATH, got '{assignment}'"))?;
        self.inputs.insert(key.to_string(), PathBuf::from(path));
        Ok(())
    }

    pub fn input(&self, name: &str) -> Result<&Path> {
        self.inputs
            .get(name)
            .map(PathBuf::as_path)
            .ok_or_else(|| anyhow!("missing input '{name}'"))
    }

    /// The block written into every report.
    pub fn replay_block(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// A pattern: a named fixture or explicit matrices, phase terms and cutoff.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpecParams {
    pub fixture: Option<String>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub matrices: Option<Vec<Vec<f64>>>,
    /// Monomials `(exponents, coefficient)`; `|y|²` when absent.
    pub q: Option<Vec<(Vec<u32>, f64)>>,
    pub support: Option<f64>,
}

impl SpecParams {
    pub fn fixture(name: &str) -> Self {
        Self {
            fixture: Some(name.into()),
            ..Default::default()
        }
    }

    pub fn build(&self) -> Result<PatternSpec> {
        let (system, default_support) = match self.fixture.as_deref() {
            Some("toy") => (MatrixSystem::new(1, 1, vec![vec![1.0], vec![2.0]])?, 0.125),
            Some("showcase") => (showcase_system(), 0.25),
            Some("degenerate") => (degenerate_system(), 0.25),
            Some("repaired") => (repaired_system(), 0.25),
            Some("parabola") => (MatrixSystem::new(1, 1, vec![vec![1.0], vec![0.0]])?, 0.25),
            Some(other) => bail!("unknown fixture '{other}'"),
            None => {
                let (n, m) = (
                    self.n.ok_or_else(|| anyhow!("spec needs n"))?,
                    self.m.ok_or_else(|| anyhow!("spec needs m"))?,
                );
                let matrices = self
                    .matrices
                    .clone()
                    .ok_or_else(|| anyhow!("spec needs matrices"))?;
                (MatrixSystem::new(n, m, matrices)?, 0.25)
            }
        };
        if self.fixture.is_some()
            && (self.n.is_some() || self.m.is_some() || self.matrices.is_some())
        {
            bail!("a fixture cannot be combined with explicit matrices");
        }
        let m = system.m;
        let q = match &self.q {
            None => PolynomialPhase::squared_norm(m),
            Some(terms) => PolynomialPhase::new(m, terms.iter().cloned().collect())?,
        };
        let cutoff = CutoffSpec::new(m, self.support.unwrap_or(default_support));
        Ok(PatternSpec::new(system, q, cutoff)?)
    }
}
