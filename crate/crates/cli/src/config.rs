//! Line-oriented `key = value` experiment configs.
//!
//! ```text
//! # comment
//! command = match
//! metric.name = walker.log
//! points.list = 0.2, 0.8, -0.1 ; -0.3, 1.6, 0.4
//! level = 2
//! expect.verdict = homothety-not-isometry
//! ```

use std::collections::BTreeMap;
use std::fmt;

use hcg_core::zoo::{zoo_metric, Param, Params, ZooMetric};
use hcg_core::Point;

pub const LEVEL_CAP: usize = 2;
pub const VARIABLE_LEVEL_CAP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    Analyze,
    Match,
    Vsi,
    Classify,
    Slice,
    Singer,
    Variable,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Analyze,
        Command::Match,
        Command::Vsi,
        Command::Classify,
        Command::Slice,
        Command::Singer,
        Command::Variable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Match => "match",
            Command::Vsi => "vsi",
            Command::Classify => "classify",
            Command::Slice => "slice",
            Command::Singer => "singer",
            Command::Variable => "variable",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        Self::ALL.iter().copied().find(|c| c.name() == s)
    }

    /// Default for `tol`.
    pub fn default_tol(self) -> f64 {
        match self {
            Command::Vsi => hcg_core::lab::VSI_TOL,
            Command::Classify => 1e-9,
            Command::Slice => 1e-3,
            Command::Analyze | Command::Match | Command::Singer | Command::Variable => hcg_core::model::SUCCESS_TOL,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A diagnostic pointing into the config text.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, column: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            column,
            key: key.map(str::to_string),
            message: message.into(),
        }
    }

    fn general(key: &str, message: impl Into<String>) -> Self {
        ConfigError::at(0, 0, Some(key), message)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}, column {}: ", self.line, self.column)?;
        }
        if let Some(k) = &self.key {
            write!(f, "`{k}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
    value_col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableScale {
    Fixed,
    Free,
}

/// A validated experiment with every default filled in.
#[derive(Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub metric_name: String,
    pub metric_params: Params,
    pub metric: ZooMetric,
    pub points: Vec<Point>,
    pub level: usize,
    pub tol: f64,
    pub match_starts: usize,
    pub match_max_iterations: usize,
    pub variable_levels: usize,
    pub variable_scale: VariableScale,
    pub slice_pairs: Vec<(f64, f64)>,
    pub slice_invariant: hcg_core::WeylInvariant,
    pub singer_depth: usize,
    pub expect_verdict: Option<String>,
    pub report_timing: bool,
}

impl fmt::Debug for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExperimentConfig")
            .field("command", &self.command)
            .field("metric", &self.metric_name)
            .field("params", &self.metric_params)
            .field("points", &self.points.len())
            .field("level", &self.level)
            .field("tol", &self.tol)
            .finish_non_exhaustive()
    }
}

impl ExperimentConfig {
    /// Applies command-line `--tol` and `--k` on top of the file.
    pub fn with_overrides(mut self, tol: Option<f64>, level: Option<usize>) -> Result<Self, ConfigError> {
        if let Some(t) = tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(ConfigError::general("--tol", "tolerance must be positive"));
            }
            self.tol = t;
        }
        if let Some(k) = level {
            if k > LEVEL_CAP {
                return Err(ConfigError::general("--k", "level cap 2 in v1"));
            }
            self.level = k;
        }
        Ok(self)
    }
}

/// Coordinate names used by `points.grid.<axis>`.
pub fn axis_names(metric: &ZooMetric) -> Vec<&'static str> {
    if metric.walker.is_some() {
        vec!["x", "y", "xt"]
    } else {
        vec!["x", "u", "v"]
    }
}

const SCALAR_KEYS: &[&str] = &[
    "command",
    "metric.name",
    "points.list",
    "level",
    "tol",
    "match.starts",
    "match.max_iterations",
    "variable.levels",
    "variable.scale",
    "slice.pairs",
    "slice.invariant",
    "singer.depth",
    "expect.verdict",
    "report.timing",
];

fn parse_lines(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut out: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            let col = content.len() - content.trim_start().len() + 1;
            return Err(ConfigError::at(line, col, None, "expected `key = value`"));
        };
        let key = content[..eq].trim();
        let key_col = content.len() - content.trim_start().len() + 1;
        if key.is_empty() {
            return Err(ConfigError::at(line, key_col, None, "missing key before `=`"));
        }
        if let Some(bad) = key.chars().position(|c| !(c.is_ascii_alphanumeric() || c == '.' || c == '_')) {
            return Err(ConfigError::at(line, key_col + bad, Some(key), "keys may contain only letters, digits, `.` and `_`"));
        }
        let after = &content[eq + 1..];
        let value = after.trim();
        let value_col = eq + 2 + (after.len() - after.trim_start().len());
        if value.is_empty() {
            return Err(ConfigError::at(line, value_col, Some(key), "missing value"));
        }
        let known = SCALAR_KEYS.contains(&key) || key.starts_with("metric.") || key.starts_with("points.grid.");
        if !known {
            return Err(ConfigError::at(line, key_col, Some(key), "unknown key"));
        }
        if let Some(prev) = out.get(key) {
            return Err(ConfigError::at(
                line,
                key_col,
                Some(key),
                format!("duplicate key (first set on line {})", prev.line),
            ));
        }
        out.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
                value_col,
            },
        );
    }
    Ok(out)
}

fn value_error(key: &str, e: &Entry, message: impl Into<String>) -> ConfigError {
    ConfigError::at(e.line, e.value_col, Some(key), message)
}

fn parse_f64(key: &str, e: &Entry, s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| value_error(key, e, format!("`{}` is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(value_error(key, e, "number must be finite"));
    }
    Ok(v)
}

fn parse_usize(key: &str, e: &Entry) -> Result<usize, ConfigError> {
    e.value
        .parse()
        .map_err(|_| value_error(key, e, format!("`{}` is not a nonnegative integer", e.value)))
}

fn parse_bool(key: &str, e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(value_error(key, e, format!("`{other}` is not `true` or `false`"))),
    }
}

/// `a, b, c ; d, e, f`
fn parse_point_list(key: &str, e: &Entry, dim: usize) -> Result<Vec<Point>, ConfigError> {
    e.value
        .split(';')
        .map(|chunk| {
            let coords: Vec<f64> = chunk.split(',').map(|s| parse_f64(key, e, s)).collect::<Result<_, _>>()?;
            if coords.len() != dim {
                return Err(value_error(
                    key,
                    e,
                    format!("point `{}` has {} coordinates, expected {dim}", chunk.trim(), coords.len()),
                ));
            }
            Ok(Point::new(coords))
        })
        .collect()
}

/// `start:stop:count`
fn parse_axis(key: &str, e: &Entry) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = e.value.split(':').collect();
    if parts.len() != 3 {
        return Err(value_error(key, e, "grid axis must be `start:stop:count`"));
    }
    let start = parse_f64(key, e, parts[0])?;
    let stop = parse_f64(key, e, parts[1])?;
    let count: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| value_error(key, e, format!("grid count `{}` is not a positive integer", parts[2].trim())))?;
    match count {
        0 => Err(value_error(key, e, "grid count must be at least 1")),
        1 => Ok(vec![start]),
        n => Ok((0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect()),
    }
}

fn parse_pairs(key: &str, e: &Entry) -> Result<Vec<(f64, f64)>, ConfigError> {
    e.value
        .split(';')
        .map(|chunk| {
            let v: Vec<f64> = chunk.split(',').map(|s| parse_f64(key, e, s)).collect::<Result<_, _>>()?;
            match v.as_slice() {
                [c, d] if *c > 0.0 && *d > 0.0 => Ok((*c, *d)),
                [_, _] => Err(value_error(key, e, "levels must be positive")),
                _ => Err(value_error(key, e, format!("`{}` is not a pair `c, d`", chunk.trim()))),
            }
        })
        .collect()
}

pub const DEFAULT_SLICE_PAIRS: &[(f64, f64)] = &[(1.0, 2.0), (0.5, 1.5), (2.0, 3.0), (0.3, 0.9), (1.2, 2.5)];

/// Parses and validates a config. `command_override` (from the command line)
/// must agree with a `command` key when both are present.
pub fn validate_config(text: &str, command_override: Option<Command>) -> Result<ExperimentConfig, ConfigError> {
    let entries = parse_lines(text)?;
    let get = |k: &str| entries.get(k);

    let command = match (get("command"), command_override) {
        (Some(e), over) => {
            let c = Command::parse(&e.value).ok_or_else(|| {
                value_error(
                    "command",
                    e,
                    format!(
                        "unknown command `{}`; available: {}",
                        e.value,
                        Command::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
                    ),
                )
            })?;
            if let Some(o) = over {
                if o != c {
                    return Err(value_error("command", e, format!("config says `{c}` but `{o}` was requested")));
                }
            }
            c
        }
        (None, Some(o)) => o,
        (None, None) => return Err(ConfigError::general("command", "missing command")),
    };

    let name_entry = get("metric.name").ok_or_else(|| ConfigError::general("metric.name", "missing metric name"))?;
    let mut params = Params::new();
    for (k, e) in entries.range("metric.".to_string()..) {
        let Some(p) = k.strip_prefix("metric.") else { break };
        if p == "name" {
            continue;
        }
        let v = match e.value.parse::<f64>() {
            Ok(x) if x.is_finite() => Param::Num(x),
            _ => Param::Word(e.value.clone()),
        };
        params.insert(p.to_string(), v);
    }
    let metric = zoo_metric(&name_entry.value, &params).map_err(|err| {
        let key = match &err {
            hcg_core::Error::InvalidArgument(m) if m.starts_with("unknown metric") => "metric.name",
            _ => "metric",
        };
        value_error(key, name_entry, err.to_string())
    })?;
    let dim = metric.metric.dim();
    let axes = axis_names(&metric);

    let mut points = Vec::new();
    if let Some(e) = get("points.list") {
        points.extend(parse_point_list("points.list", e, dim)?);
    }
    let grid_keys: Vec<&String> = entries.keys().filter(|k| k.starts_with("points.grid.")).collect();
    if !grid_keys.is_empty() {
        for k in &grid_keys {
            let axis = &k["points.grid.".len()..];
            if !axes.contains(&axis) {
                return Err(value_error(
                    k,
                    &entries[*k],
                    format!("unknown axis `{axis}`; axes of {}: {}", name_entry.value, axes.join(", ")),
                ));
            }
        }
        let mut values = Vec::with_capacity(dim);
        for axis in &axes {
            let key = format!("points.grid.{axis}");
            let e = entries
                .get(&key)
                .ok_or_else(|| ConfigError::general(&key, "grid is missing this axis"))?;
            values.push(parse_axis(&key, e)?);
        }
        // first axis varies slowest
        let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
        for vals in &values {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        points.extend(grid.into_iter().map(Point::new));
    }
    if points.is_empty() {
        return Err(ConfigError::general("points", "no points given (use points.list or points.grid.<axis>)"));
    }
    for (i, p) in points.iter().enumerate() {
        if !metric.metric.contains(p) {
            let key = if get("points.list").is_some() { "points.list" } else { "points.grid" };
            return Err(ConfigError::general(
                key,
                format!("point {i} {:?} lies outside the domain of {}", p.coords(), name_entry.value),
            ));
        }
    }
    let min_points = match command {
        Command::Match | Command::Variable => 2,
        _ => 1,
    };
    if points.len() < min_points {
        return Err(ConfigError::general("points", format!("`{command}` needs at least {min_points} points")));
    }

    let level = match get("level") {
        Some(e) => {
            let k = parse_usize("level", e)?;
            if k > LEVEL_CAP {
                return Err(value_error("level", e, "level cap 2 in v1"));
            }
            k
        }
        None => LEVEL_CAP,
    };
    let tol = match get("tol") {
        Some(e) => {
            let t = parse_f64("tol", e, &e.value)?;
            if t <= 0.0 {
                return Err(value_error("tol", e, "tolerance must be positive"));
            }
            t
        }
        None => command.default_tol(),
    };
    let defaults = hcg_core::model::SearchOptions::default();
    let match_starts = match get("match.starts") {
        Some(e) => parse_usize("match.starts", e)?.max(1),
        None => defaults.starts,
    };
    let match_max_iterations = match get("match.max_iterations") {
        Some(e) => parse_usize("match.max_iterations", e)?.max(1),
        None => defaults.max_iterations,
    };
    let variable_levels = match get("variable.levels") {
        Some(e) => {
            let k = parse_usize("variable.levels", e)?;
            if k > VARIABLE_LEVEL_CAP {
                return Err(value_error("variable.levels", e, format!("at most {VARIABLE_LEVEL_CAP}")));
            }
            k
        }
        None => 3,
    };
    let variable_scale = match get("variable.scale") {
        Some(e) => match e.value.as_str() {
            "fixed" => VariableScale::Fixed,
            "free" => VariableScale::Free,
            other => return Err(value_error("variable.scale", e, format!("`{other}` is not `fixed` or `free`"))),
        },
        None => VariableScale::Fixed,
    };
    let slice_pairs = match get("slice.pairs") {
        Some(e) => parse_pairs("slice.pairs", e)?,
        None => DEFAULT_SLICE_PAIRS.to_vec(),
    };
    let slice_invariant = match get("slice.invariant") {
        Some(e) => hcg_core::WeylInvariant::from_name(&e.value).ok_or_else(|| {
            value_error(
                "slice.invariant",
                e,
                format!(
                    "unknown invariant `{}`; available: {}",
                    e.value,
                    hcg_core::WeylInvariant::ALL.iter().map(|w| w.name()).collect::<Vec<_>>().join(", ")
                ),
            )
        })?,
        None => hcg_core::WeylInvariant::Tau,
    };
    let singer_depth = match get("singer.depth") {
        Some(e) => {
            let d = parse_usize("singer.depth", e)?;
            if d > 4 {
                return Err(value_error("singer.depth", e, "at most 4"));
            }
            d
        }
        None => 3,
    };
    let expect_verdict = get("expect.verdict").map(|e| e.value.clone());
    let report_timing = match get("report.timing") {
        Some(e) => parse_bool("report.timing", e)?,
        None => false,
    };

    Ok(ExperimentConfig {
        command,
        metric_name: name_entry.value.clone(),
        metric_params: params,
        metric,
        points,
        level,
        tol,
        match_starts,
        match_max_iterations,
        variable_levels,
        variable_scale,
        slice_pairs,
        slice_invariant,
        singer_depth,
        expect_verdict,
        report_timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "command = vsi\nmetric.name = walker.log\npoints.list = 0, 1, 0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = validate_config(MINIMAL, None).unwrap();
        assert_eq!(c.command, Command::Vsi);
        assert_eq!(c.level, 2);
        assert_eq!(c.tol, 1e-10);
        assert_eq!(c.match_starts, 64);
        assert!(!c.report_timing);
        assert_eq!(c.points.len(), 1);
    }

    #[test]
    fn unknown_metric_lists_names() {
        let e = validate_config("command = vsi\nmetric.name = walker.cos\npoints.list = 0,1,0\n", None).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("metric.name"));
        assert!(e.to_string().contains("walker.exp") && e.to_string().contains("warped.sphere"), "{e}");
        assert_eq!((e.line, e.column), (2, 15));
    }

    #[test]
    fn level_above_cap_is_rejected() {
        let e = validate_config(&format!("{MINIMAL}level = 3\n"), None).unwrap_err();
        assert!(e.to_string().contains("level cap 2 in v1"));
        assert_eq!(e.line, 4);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = validate_config("command = vsi\n  metric.name walker.log\n", None).unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
        let e = validate_config("command = vsi\nbogus.key = 1\n", None).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("bogus.key"));
        assert_eq!(e.line, 2);
    }

    #[test]
    fn grids_expand_in_axis_order() {
        let text = "command = vsi\nmetric.name = walker.log\npoints.grid.x = 0:1:2\npoints.grid.y = 1:2:3\npoints.grid.xt = 0:0:1\n";
        let c = validate_config(text, None).unwrap();
        assert_eq!(c.points.len(), 6);
        assert_eq!(c.points[1].coords(), &[0.0, 1.5, 0.0]);
        assert_eq!(c.points[3].coords(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn malformed_grid_names_its_key() {
        let text = "command = vsi\nmetric.name = walker.log\npoints.grid.x = 0:1\npoints.grid.y = 1:2:3\npoints.grid.xt = 0:0:1\n";
        let e = validate_config(text, None).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("points.grid.x"));
    }

    #[test]
    fn out_of_domain_point_is_rejected() {
        let e = validate_config("command = vsi\nmetric.name = walker.log\npoints.list = 0, -1, 0\n", None).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("points.list"));
        assert!(e.to_string().contains("outside the domain"));
    }

    #[test]
    fn conflicting_command_is_rejected() {
        assert!(validate_config(MINIMAL, Some(Command::Match)).is_err());
        assert!(validate_config(MINIMAL, Some(Command::Vsi)).is_ok());
    }
}
