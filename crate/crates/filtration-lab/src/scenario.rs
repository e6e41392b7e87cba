//! Scenario files: the on-disk JSON schema and its validated loading.
//!
//! A scenario file describes one finite filtered space (outcomes, weights,
//! named filtrations), named processes with value tables per (time, block),
//! optionally a default model, and a list of verification tasks. Numbers may
//! be written as strings ("3/5", "0.25", "-2") or as bare JSON numbers; the
//! arithmetic backend is chosen per file: exact rationals when every number
//! in the scenario data is a string, floats otherwise.
//!
//! Value tables index blocks in canonical order: blocks of a partition are
//! sorted by their smallest outcome index.

use crate::credit::{DefaultModel, Theta};
use crate::error::Error;
use crate::num::{Rat, Scalar};
use crate::process::AdaptedProcess;
use crate::space::{FiniteProbSpace, Filtration, Partition};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// A number as written in a scenario file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum NumberRepr {
    Text(String),
    Float(f64),
}

impl NumberRepr {
    fn is_text(&self) -> bool {
        matches!(self, NumberRepr::Text(_))
    }
}

/// A default time as written in a file: a grid time or "inf".
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ThetaRepr {
    Time(usize),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FiltrationSpec {
    /// Watches one coordinate of the outcome labels (segments separated by
    /// '|'); character `i` of the coordinate path is revealed at `times[i]`
    /// (default `1..=len`).
    Coordinate {
        coordinate: usize,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        times: Option<Vec<usize>>,
    },
    /// Join of previously defined (non-join) filtrations.
    Join { join: Vec<String> },
    /// Explicit partitions per time, blocks given by outcome labels.
    Explicit { partitions: Vec<Vec<Vec<String>>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub filtration: String,
    pub dim: usize,
    /// `values[t][block][component]`, blocks in canonical order.
    pub values: Vec<Vec<Vec<NumberRepr>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefaultModelSpec {
    pub market_process: String,
    pub theta: Vec<ThetaRepr>,
    /// `joint[outcome][theta index]`.
    pub joint: Vec<Vec<NumberRepr>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Theorem34 {
        x: String,
        y: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tol: Option<NumberRepr>,
    },
    Theorem42 {
        drivers: Vec<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        d_cap: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tol: Option<NumberRepr>,
    },
    Multiplicity {
        filtration: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        expect: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tol: Option<NumberRepr>,
    },
    Prp {
        drivers: Vec<String>,
        filtration: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        expect: Option<bool>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tol: Option<NumberRepr>,
    },
    MinimalMeasure {
        x: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tol: Option<NumberRepr>,
    },
    Kusuoka {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        tol: Option<NumberRepr>,
    },
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Theorem34 { .. } => "theorem34",
            TaskSpec::Theorem42 { .. } => "theorem42",
            TaskSpec::Multiplicity { .. } => "multiplicity",
            TaskSpec::Prp { .. } => "prp",
            TaskSpec::MinimalMeasure { .. } => "minimal_measure",
            TaskSpec::Kusuoka { .. } => "kusuoka",
        }
    }

    pub fn tol(&self) -> Option<&NumberRepr> {
        match self {
            TaskSpec::Theorem34 { tol, .. }
            | TaskSpec::Theorem42 { tol, .. }
            | TaskSpec::Multiplicity { tol, .. }
            | TaskSpec::Prp { tol, .. }
            | TaskSpec::MinimalMeasure { tol, .. }
            | TaskSpec::Kusuoka { tol } => tol.as_ref(),
        }
    }
}

/// The parsed (but not yet validated) scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema: u32,
    pub horizon: usize,
    pub outcomes: Vec<String>,
    pub weights: Vec<NumberRepr>,
    pub filtrations: BTreeMap<String, FiltrationSpec>,
    #[serde(default)]
    pub processes: BTreeMap<String, ProcessSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub default_model: Option<DefaultModelSpec>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

impl ScenarioFile {
    /// True when every number in the scenario data is written as a string:
    /// the file then runs on exact rationals.
    pub fn is_rational(&self) -> bool {
        let weights_ok = self.weights.iter().all(NumberRepr::is_text);
        let processes_ok = self.processes.values().all(|p| {
            p.values
                .iter()
                .all(|slice| slice.iter().all(|v| v.iter().all(NumberRepr::is_text)))
        });
        let joint_ok = self
            .default_model
            .as_ref()
            .map(|dm| dm.joint.iter().all(|row| row.iter().all(NumberRepr::is_text)))
            .unwrap_or(true);
        weights_ok && processes_ok && joint_ok
    }
}

/// Parses "p/q", "-3", "0.25" into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rat> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let n: i64 = num.trim().parse().ok()?;
        let d: i64 = den.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Rat::from_ratio(n, d));
    }
    if let Some((int_part, frac_part)) = text.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let negative = int_part.trim_start().starts_with('-');
        let int: i64 = if int_part.is_empty() || int_part == "-" {
            0
        } else {
            int_part.parse().ok()?
        };
        let frac: i64 = frac_part.parse().ok()?;
        let scale = 10i64.checked_pow(frac_part.len() as u32)?;
        let frac_signed = if negative { -frac } else { frac };
        return Some(Rat::from_int(int) + Rat::from_ratio(frac_signed, scale));
    }
    let n: i64 = text.parse().ok()?;
    Some(Rat::from_int(n))
}

/// Parses a file number into the active backend.
pub fn parse_number<S: Scalar>(repr: &NumberRepr, field: &str) -> Result<S, Error<S>> {
    match repr {
        NumberRepr::Float(x) => S::from_f64_exact(*x)
            .ok_or_else(|| Error::validation(field, format!("non-finite number {x}"))),
        NumberRepr::Text(text) => {
            let rat = parse_rational(text)
                .ok_or_else(|| Error::validation(field, format!("cannot parse number {text:?}")))?;
            Ok(S::from_rat(&rat))
        }
    }
}

/// A fully validated scenario over one arithmetic backend.
#[derive(Debug)]
pub struct LoadedScenario<S: Scalar> {
    pub space: FiniteProbSpace<S>,
    pub filtrations: BTreeMap<String, Arc<Filtration>>,
    pub processes: BTreeMap<String, AdaptedProcess<S>>,
    pub default_model: Option<DefaultModel<S>>,
    pub tasks: Vec<TaskSpec>,
    pub tol: S,
}

/// A loaded scenario in whichever backend the file selected.
#[derive(Debug)]
pub enum Loaded {
    Rational(LoadedScenario<Rat>),
    Float(LoadedScenario<f64>),
}

impl Loaded {
    pub fn mode(&self) -> &'static str {
        match self {
            Loaded::Rational(_) => Rat::mode_name(),
            Loaded::Float(_) => f64::mode_name(),
        }
    }
}

/// Load failure: either the bytes do not parse, or the parsed scenario
/// violates a structural invariant. Both map to exit code 2 in the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadError {
    Parse(String),
    Validation(String),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Parse(m) => write!(f, "parse error: {m}"),
            LoadError::Validation(m) => write!(f, "validation error: {m}"),
        }
    }
}

fn to_load_error<S: Scalar>(e: Error<S>) -> LoadError {
    match e {
        Error::Parse(m) => LoadError::Parse(m),
        other => LoadError::Validation(other.to_string()),
    }
}

/// Parses and validates scenario bytes, selecting the arithmetic backend.
/// `tol_override` (CLI flag or environment) replaces the backend default.
pub fn load_scenario(bytes: &[u8], tol_override: Option<f64>) -> Result<Loaded, LoadError> {
    let file: ScenarioFile = serde_json::from_slice(bytes)
        .map_err(|e| LoadError::Parse(e.to_string()))?;
    if file.schema != 1 {
        return Err(LoadError::Validation(format!(
            "unsupported schema version {}",
            file.schema
        )));
    }
    if file.is_rational() {
        let tol = match tol_override {
            Some(x) => Rat::from_f64_exact(x)
                .ok_or_else(|| LoadError::Validation(format!("bad tolerance {x}")))?,
            None => Rat::default_tol(),
        };
        load_typed::<Rat>(&file, tol)
            .map(Loaded::Rational)
            .map_err(to_load_error)
    } else {
        let tol = tol_override.unwrap_or_else(f64::default_tol);
        load_typed::<f64>(&file, tol)
            .map(Loaded::Float)
            .map_err(to_load_error)
    }
}

/// Validates a parsed file over a fixed backend.
pub fn load_typed<S: Scalar>(file: &ScenarioFile, tol: S) -> Result<LoadedScenario<S>, Error<S>> {
    let n = file.outcomes.len();
    if n == 0 {
        return Err(Error::validation("outcomes", "no outcomes"));
    }
    let mut label_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, label) in file.outcomes.iter().enumerate() {
        if label_index.insert(label.as_str(), i).is_some() {
            return Err(Error::validation(
                format!("outcomes[{i}]"),
                format!("duplicate outcome label {label:?}"),
            ));
        }
    }

    let weights = file
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| parse_number::<S>(w, &format!("weights[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let space = FiniteProbSpace::new(file.outcomes.clone(), weights, &tol)?;

    // Coordinate paths, when any filtration needs them.
    let coordinate_paths: Vec<Vec<&str>> = file
        .outcomes
        .iter()
        .map(|label| label.split('|').collect())
        .collect();

    // First pass: non-join filtrations.
    let mut filtrations: BTreeMap<String, Arc<Filtration>> = BTreeMap::new();
    for (name, spec) in &file.filtrations {
        match spec {
            FiltrationSpec::Coordinate { coordinate, times } => {
                let filtration =
                    build_coordinate_filtration::<S>(name, *coordinate, times.as_deref(), file.horizon, &coordinate_paths)?;
                filtrations.insert(name.clone(), Arc::new(filtration));
            }
            FiltrationSpec::Explicit { partitions } => {
                if partitions.len() != file.horizon + 1 {
                    return Err(Error::validation(
                        format!("filtrations.{name}.partitions"),
                        format!(
                            "expected {} partitions (t = 0..={}), got {}",
                            file.horizon + 1,
                            file.horizon,
                            partitions.len()
                        ),
                    ));
                }
                let mut parts = Vec::with_capacity(partitions.len());
                for (t, blocks) in partitions.iter().enumerate() {
                    let resolved: Vec<Vec<usize>> = blocks
                        .iter()
                        .map(|block| {
                            block
                                .iter()
                                .map(|label| {
                                    label_index.get(label.as_str()).copied().ok_or_else(|| {
                                        Error::validation(
                                            format!("filtrations.{name}.partitions[{t}]"),
                                            format!("unknown outcome label {label:?}"),
                                        )
                                    })
                                })
                                .collect::<Result<Vec<_>, _>>()
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    parts.push(Partition::new::<S>(resolved, n).map_err(|e| {
                        Error::validation(
                            format!("filtrations.{name}.partitions[{t}]"),
                            e.to_string(),
                        )
                    })?);
                }
                let filtration = Filtration::new::<S>(parts).map_err(|e| match e {
                    Error::Validation { field, message } => Error::Validation {
                        field: format!("filtrations.{name}.{field}"),
                        message,
                    },
                    other => other,
                })?;
                filtrations.insert(name.clone(), Arc::new(filtration));
            }
            FiltrationSpec::Join { .. } => {}
        }
    }
    // Second pass: joins of already-built filtrations.
    for (name, spec) in &file.filtrations {
        if let FiltrationSpec::Join { join } = spec {
            if join.is_empty() {
                return Err(Error::validation(
                    format!("filtrations.{name}.join"),
                    "empty join list",
                ));
            }
            let mut acc: Option<Filtration> = None;
            for member in join {
                let f = filtrations.get(member).ok_or_else(|| {
                    Error::validation(
                        format!("filtrations.{name}.join"),
                        format!("unknown or join-typed filtration {member:?}"),
                    )
                })?;
                acc = Some(match acc {
                    None => f.as_ref().clone(),
                    Some(a) => crate::space::join(&a, f)?,
                });
            }
            filtrations.insert(name.clone(), Arc::new(acc.expect("nonempty join")));
        }
    }

    // Processes.
    let mut processes: BTreeMap<String, AdaptedProcess<S>> = BTreeMap::new();
    for (name, spec) in &file.processes {
        let filtration = filtrations.get(&spec.filtration).ok_or_else(|| {
            Error::validation(
                format!("processes.{name}.filtration"),
                format!("unknown filtration {:?}", spec.filtration),
            )
        })?;
        let mut values: Vec<Vec<Vec<S>>> = Vec::with_capacity(spec.values.len());
        for (t, slice) in spec.values.iter().enumerate() {
            let mut blocks = Vec::with_capacity(slice.len());
            for (b, comps) in slice.iter().enumerate() {
                let parsed: Vec<S> = comps
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        parse_number::<S>(v, &format!("processes.{name}.values[{t}][{b}][{k}]"))
                    })
                    .collect::<Result<_, _>>()?;
                blocks.push(parsed);
            }
            values.push(blocks);
        }
        let process = AdaptedProcess::new(filtration.clone(), spec.dim, values).map_err(|e| {
            match e {
                Error::Validation { field, message } => Error::Validation {
                    field: format!("processes.{name}.{field}"),
                    message,
                },
                other => other,
            }
        })?;
        processes.insert(name.clone(), process);
    }

    // Default model.
    let default_model = match &file.default_model {
        None => None,
        Some(spec) => {
            let driver = processes.get(&spec.market_process).ok_or_else(|| {
                Error::validation(
                    "default_model.market_process",
                    format!("unknown process {:?}", spec.market_process),
                )
            })?;
            let theta_grid: Vec<Theta> = spec
                .theta
                .iter()
                .enumerate()
                .map(|(k, t)| match t {
                    ThetaRepr::Time(s) => Ok(Theta::At(*s)),
                    ThetaRepr::Text(text) if text == "inf" => Ok(Theta::Never),
                    ThetaRepr::Text(text) => Err(Error::validation(
                        format!("default_model.theta[{k}]"),
                        format!("expected a grid time or \"inf\", got {text:?}"),
                    )),
                })
                .collect::<Result<_, _>>()?;
            let joint: Vec<Vec<S>> = spec
                .joint
                .iter()
                .enumerate()
                .map(|(o, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(k, v)| {
                            parse_number::<S>(v, &format!("default_model.joint[{o}][{k}]"))
                        })
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            Some(DefaultModel::new(
                space.clone(),
                driver.clone(),
                theta_grid,
                joint,
                &tol,
            )?)
        }
    };

    Ok(LoadedScenario {
        space,
        filtrations,
        processes,
        default_model,
        tasks: file.tasks.clone(),
        tol,
    })
}

fn build_coordinate_filtration<S: Scalar>(
    name: &str,
    coordinate: usize,
    times: Option<&[usize]>,
    horizon: usize,
    coordinate_paths: &[Vec<&str>],
) -> Result<Filtration, Error<S>> {
    let field = format!("filtrations.{name}");
    let paths: Vec<&str> = coordinate_paths
        .iter()
        .map(|segments| {
            segments.get(coordinate).copied().ok_or_else(|| {
                Error::validation(
                    field.clone(),
                    format!("an outcome label has no coordinate {coordinate}"),
                )
            })
        })
        .collect::<Result<_, _>>()?;
    let len = paths[0].chars().count();
    if paths.iter().any(|p| p.chars().count() != len) {
        return Err(Error::validation(
            field.clone(),
            "coordinate paths have different lengths",
        ));
    }
    let times: Vec<usize> = match times {
        Some(ts) => ts.to_vec(),
        None => (1..=len).collect(),
    };
    if times.len() != len {
        return Err(Error::validation(
            format!("{field}.times"),
            format!("{} reveal times for paths of length {len}", times.len()),
        ));
    }
    if !times.windows(2).all(|w| w[0] < w[1])
        || times.iter().any(|&t| t == 0 || t > horizon)
    {
        return Err(Error::validation(
            format!("{field}.times"),
            "reveal times must be strictly increasing within 1..=horizon",
        ));
    }
    let n = paths.len();
    let mut partitions = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let revealed = times.iter().filter(|&&rt| rt <= t).count();
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (o, path) in paths.iter().enumerate() {
            let key: String = path.chars().take(revealed).collect();
            groups.entry(key).or_default().push(o);
        }
        partitions.push(Partition::new::<S>(groups.into_values().collect(), n)?);
    }
    Filtration::new::<S>(partitions)
}
