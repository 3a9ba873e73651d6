//! TOML experiment documents and `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::game::QuadraticGame;
use crate::graph::{DiGraph, WeightMatrix};
use crate::harness::{AlgoSetup, DeltaSetup, ExperimentSpec, GameSetup, GraphSetup, Reference, Topology};
use crate::oracle::SmoothingSchedule;
use crate::seeker::{Mode, StepSchedule};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    pub game: GameSection,
    pub graph: GraphSection,
    pub algo: AlgoSection,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, n: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![*v; n]),
            ScalarOrList::List(v) if v.len() == n => Ok(v.clone()),
            ScalarOrList::List(v) => Err(Error::Config(format!(
                "{field}: expected {n} entries, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// `quadratic` or `hvac-scaled` (`xr_i = 2 i`, other constants fixed).
    #[serde(rename = "type")]
    pub kind: String,
    pub n: usize,
    pub a: Option<ScalarOrList>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub xr: Option<Vec<f64>>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `ring`, `ring-chords`, `two-successor-cycle`, `complete` or `custom`.
    pub builtin: String,
    pub chords: Option<usize>,
    /// Custom edges as 1-based `[from, to]` pairs.
    pub edges: Option<Vec<[usize; 2]>>,
    /// Custom edge list in the `n <N>` / `<from> <to>` text format.
    pub file: Option<PathBuf>,
    /// `auto` or a path to an N x N CSV.
    #[serde(default = "auto")]
    pub weights: String,
}

fn auto() -> String {
    "auto".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoSection {
    pub iters: usize,
    pub stepsize: StepSchedule,
    pub smoothing: SmoothingSchedule,
    pub delta: ScalarOrList,
    #[serde(default = "gradient_free")]
    pub mode: Mode,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default)]
    pub record_estimates: bool,
}

fn gradient_free() -> Mode {
    Mode::GradientFree
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// `oracle` or a path to a CSV holding x* (one row, or one value per line).
    #[serde(default = "oracle")]
    pub reference: String,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn oracle() -> String {
    "oracle".into()
}

/// A parsed document plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedDocument {
    pub doc: RunDocument,
    pub base_dir: PathBuf,
}

/// Applies `key=value` overrides to a TOML table. Keys are dotted paths;
/// values are TOML literals, and anything that does not parse as one is
/// taken as a bare string.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
        let value = match format!("v = {raw}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let parts: Vec<&str> = key.trim().split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("bad override key {key:?}")));
        }
        let mut cur = &mut *table;
        for p in &parts[..parts.len() - 1] {
            let entry = cur
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
        }
        cur.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

pub fn parse_document(text: &str, overrides: &[String]) -> Result<RunDocument> {
    let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
    apply_overrides(&mut table, overrides)?;
    RunDocument::deserialize(table).map_err(|e| Error::Config(format!("{e}")))
}

pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedDocument> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let doc = parse_document(&text, overrides)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedDocument { doc, base_dir })
}

impl LoadedDocument {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn existing(&self, p: &Path, what: &str) -> Result<PathBuf> {
        let full = self.resolve(p);
        if full.is_file() {
            Ok(full)
        } else {
            Err(Error::Config(format!("{what}: file {} does not exist", full.display())))
        }
    }

    pub fn game(&self) -> Result<GameSetup> {
        let g = &self.doc.game;
        match g.kind.as_str() {
            "quadratic" => {
                let a = g
                    .a
                    .as_ref()
                    .ok_or_else(|| Error::Config("game.a is required".into()))?
                    .expand(g.n, "game.a")?;
                let xr = g.xr.clone().ok_or_else(|| Error::Config("game.xr is required".into()))?;
                if xr.len() != g.n {
                    return Err(Error::Config(format!("game.xr: expected {} entries, got {}", g.n, xr.len())));
                }
                let b = g.b.ok_or_else(|| Error::Config("game.b is required".into()))?;
                let c = g.c.ok_or_else(|| Error::Config("game.c is required".into()))?;
                Ok(GameSetup::Quadratic {
                    game: QuadraticGame::new(a, b, c, xr)?,
                    lo: g.lo,
                    hi: g.hi,
                })
            }
            "hvac-scaled" => {
                if g.a.is_some() || g.b.is_some() || g.c.is_some() || g.xr.is_some() {
                    return Err(Error::Config("game type hvac-scaled fixes a, b, c and xr".into()));
                }
                Ok(GameSetup::ScaledHvac {
                    n: g.n,
                    lo: g.lo,
                    hi: g.hi,
                })
            }
            other => Err(Error::Config(format!("unsupported game type {other:?}"))),
        }
    }

    pub fn topology(&self) -> Result<Topology> {
        let g = &self.doc.graph;
        let custom_only = g.edges.is_some() || g.file.is_some();
        if g.builtin != "custom" && custom_only {
            return Err(Error::Config("graph.edges and graph.file need builtin = \"custom\"".into()));
        }
        if g.builtin != "ring-chords" && g.chords.is_some() {
            return Err(Error::Config("graph.chords needs builtin = \"ring-chords\"".into()));
        }
        Ok(match g.builtin.as_str() {
            "ring" => Topology::Ring,
            "ring-chords" => Topology::RingChords(
                g.chords
                    .ok_or_else(|| Error::Config("graph.chords is required for ring-chords".into()))?,
            ),
            "two-successor-cycle" => Topology::TwoSuccessorCycle,
            "complete" => Topology::Complete,
            "custom" => {
                let graph = match (&g.edges, &g.file) {
                    (Some(edges), None) => {
                        if edges.iter().any(|[a, b]| *a == 0 || *b == 0) {
                            return Err(Error::Config("graph.edges are 1-based".into()));
                        }
                        DiGraph::new(self.doc.game.n, edges.iter().map(|[a, b]| (a - 1, b - 1)))?
                    }
                    (None, Some(file)) => {
                        let path = self.existing(file, "graph.file")?;
                        DiGraph::read_text(std::io::BufReader::new(fs::File::open(path)?))?
                    }
                    _ => {
                        return Err(Error::Config(
                            "custom graphs need exactly one of graph.edges or graph.file".into(),
                        ))
                    }
                };
                Topology::Custom(graph)
            }
            other => return Err(Error::Config(format!("unknown graph.builtin {other:?}"))),
        })
    }

    pub fn graph(&self) -> Result<GraphSetup> {
        let topology = self.topology()?;
        let weights = match self.doc.graph.weights.as_str() {
            "auto" => None,
            path => {
                let p = self.existing(Path::new(path), "graph.weights")?;
                Some(WeightMatrix::read_csv(fs::File::open(p)?)?)
            }
        };
        Ok(GraphSetup { topology, weights })
    }

    pub fn algo(&self) -> AlgoSetup {
        let a = &self.doc.algo;
        AlgoSetup {
            iters: a.iters,
            schedule: a.stepsize,
            smoothing: a.smoothing,
            delta: match &a.delta {
                ScalarOrList::Scalar(d) => DeltaSetup::Uniform(*d),
                ScalarOrList::List(v) => DeltaSetup::PerPlayer(v.clone()),
            },
            mode: a.mode,
            record_stride: a.record_stride,
            record_estimates: a.record_estimates,
        }
    }

    pub fn reference(&self) -> Result<Reference> {
        match self.doc.experiment.reference.as_str() {
            "oracle" => Ok(Reference::Oracle),
            path => {
                let p = self.existing(Path::new(path), "experiment.reference")?;
                let mut rdr = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .trim(csv::Trim::All)
                    .flexible(true)
                    .from_path(p)?;
                let mut values = Vec::new();
                for rec in rdr.records() {
                    for cell in rec?.iter().filter(|c| !c.is_empty()) {
                        values.push(cell.parse::<f64>().map_err(|_| {
                            Error::Config(format!("experiment.reference: bad number {cell:?}"))
                        })?);
                    }
                }
                Ok(Reference::Given(values))
            }
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.doc.experiment.output)
    }

    /// The experiment this document describes.
    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            game: self.game()?,
            graph: self.graph()?,
            algo: self.algo(),
            seeds: self.doc.experiment.seeds.clone(),
            reference: self.reference()?,
        })
    }
}
