//! Run configuration: TOML file, command-line overrides and defaults, merged
//! with precedence flags > file > defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use hypwalk::{Element, Family, Group, StepMeasure};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Contents of the TOML config file. The group is written as
/// `kind = "free"`, `rank = 2`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub group: Option<Family>,
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<bool>,
    /// `(word, probability)` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<(String, f64)>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

/// Command parameters. Every field is optional in the file and on the
/// command line; unset fields take per-command defaults.
#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Number of steps N.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Cylinder depth D.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Obstacle scale M.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Number of chain stages.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Tube width around geodesics.
    #[arg(long, global = true)]
    pub width: Option<usize>,
    /// Truncation radius for restricted hitting probabilities.
    #[arg(long, global = true)]
    pub trunc_r: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo paths (0 disables sampling).
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Points x at which kernels are evaluated (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub x: Option<Vec<String>>,
    /// Interior point y for Martin kernels.
    #[arg(long, global = true)]
    pub y: Option<String>,
    /// Periodic pattern of the ray, as a word.
    #[arg(long, global = true)]
    pub ray: Option<String>,
    #[arg(long, global = true)]
    pub ray_len: Option<usize>,
    /// Further ray patterns for the phi quantity (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub rays: Option<Vec<String>>,
    /// Grid points for Lipschitz scans.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    #[arg(long, global = true)]
    pub spacing: Option<f64>,
    /// Also run the scan on the refined grid.
    #[arg(long, global = true)]
    pub refine: Option<bool>,
    /// entropy, escape or phi.
    #[arg(long, global = true)]
    pub quantity: Option<String>,
    /// Segment start for kink scans (comma separated simplex coordinates).
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub b: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Centre of the stability neighbourhood.
    #[arg(long, global = true, value_delimiter = ',')]
    pub centre: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    #[arg(long, global = true)]
    pub probes: Option<usize>,
    /// Lower bound on every simplex coordinate.
    #[arg(long, global = true)]
    pub floor: Option<f64>,
}

/// Fully resolved parameters. This is what the digest covers.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Resolved {
    pub n: usize,
    pub depth: usize,
    pub m: Option<usize>,
    pub k: usize,
    pub width: usize,
    pub trunc_r: usize,
    pub tol: f64,
    pub seed: Option<u64>,
    pub paths: usize,
    pub x: Option<Vec<String>>,
    pub y: Option<String>,
    pub ray: Option<String>,
    pub ray_len: Option<usize>,
    pub rays: Option<Vec<String>>,
    pub points: usize,
    pub spacing: f64,
    pub refine: bool,
    pub quantity: String,
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub steps: usize,
    pub centre: Option<Vec<f64>>,
    pub radius: f64,
    pub probes: usize,
    pub floor: f64,
}

/// Per-command defaults for the fields that have one.
pub struct Defaults {
    pub n: usize,
    pub depth: usize,
}

impl Defaults {
    pub fn for_command(command: &str) -> Self {
        match command {
            "walk" | "entropy" | "escape" => Defaults { n: 40, depth: 5 },
            "lipschitz-scan" | "kink-scan" | "stability" => Defaults { n: 40, depth: 3 },
            _ => Defaults { n: 40, depth: 4 },
        }
    }
}

/// Takes the flag value, else the file value, else the default, and logs
/// which one won.
fn pick<T: Clone + std::fmt::Debug>(field: &str, flag: &Option<T>, file: &Option<T>, default: Option<T>) -> Option<T> {
    let (value, source) = match (flag, file) {
        (Some(v), _) => (Some(v.clone()), "flag"),
        (None, Some(v)) => (Some(v.clone()), "file"),
        (None, None) => (default, "default"),
    };
    if let Some(v) = &value {
        log::info!("params.{field} = {v:?} ({source})");
    }
    value
}

pub fn resolve(command: &str, flags: &Params, file: &Params) -> Resolved {
    let d = Defaults::for_command(command);
    macro_rules! get {
        ($f:ident, $default:expr) => {
            pick(stringify!($f), &flags.$f, &file.$f, Some($default)).unwrap()
        };
        ($f:ident) => {
            pick(stringify!($f), &flags.$f, &file.$f, None)
        };
    }
    Resolved {
        n: get!(n, d.n),
        depth: get!(depth, d.depth),
        m: get!(m),
        k: get!(k, 6),
        width: get!(width, 2),
        trunc_r: get!(trunc_r, 8),
        tol: get!(tol, 1e-10),
        seed: get!(seed),
        paths: get!(paths, 0),
        x: get!(x),
        y: get!(y),
        ray: get!(ray),
        ray_len: get!(ray_len),
        rays: get!(rays),
        points: get!(points, 200),
        spacing: get!(spacing, 0.04),
        refine: get!(refine, false),
        quantity: get!(quantity, "entropy".to_string()),
        a: get!(a),
        b: get!(b),
        steps: get!(steps, 40),
        centre: get!(centre),
        radius: get!(radius, 0.05),
        probes: get!(probes, 4),
        floor: get!(floor, hypwalk::lab::SIMPLEX_FLOOR),
    }
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation("config", format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::validation("config", e.message().to_string()))
}

/// `integer`, `free:<rank>` or `free-product:<m>,<n>`.
pub fn parse_group(spec: &str) -> Result<Family, CliError> {
    let bad = || CliError::validation("group", format!("cannot parse group spec {spec:?}"));
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind.trim() {
        "integer" => Ok(Family::Integer),
        "free" => Ok(Family::Free { rank: rest.trim().parse().map_err(|_| bad())? }),
        "free-product" => {
            let (m, n) = rest.split_once(',').ok_or_else(bad)?;
            Ok(Family::FreeProduct {
                m: m.trim().parse().map_err(|_| bad())?,
                n: n.trim().parse().map_err(|_| bad())?,
            })
        }
        _ => Err(bad()),
    }
}

/// `uniform` or `word:p,word:p,...`.
pub fn parse_measure(spec: &str) -> Result<MeasureSpec, CliError> {
    if spec.trim() == "uniform" {
        return Ok(MeasureSpec { uniform: Some(true), entries: None });
    }
    let entries = spec
        .split(',')
        .enumerate()
        .map(|(i, item)| {
            let (w, p) = item
                .rsplit_once(':')
                .ok_or_else(|| CliError::validation(format!("measure.entries[{i}]"), format!("expected word:p, got {item:?}")))?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| CliError::validation(format!("measure.entries[{i}].p"), format!("not a number: {p:?}")))?;
            Ok((w.trim().to_string(), p))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(MeasureSpec { uniform: None, entries: Some(entries) })
}

pub fn build_group(family: Family) -> Result<Group, CliError> {
    Group::new(family).map_err(|e| CliError::validation("group", e.to_string()))
}

/// Builds the step measure, naming the offending entry on failure.
pub fn build_measure(g: &Group, spec: &MeasureSpec) -> Result<StepMeasure, CliError> {
    match (spec.uniform, &spec.entries) {
        (Some(true), None) => Ok(StepMeasure::uniform(g.clone())),
        (_, Some(entries)) if spec.uniform != Some(true) => {
            if entries.is_empty() {
                return Err(CliError::validation("measure.entries", "empty support"));
            }
            let mut pairs: Vec<(Element, f64)> = Vec::with_capacity(entries.len());
            for (i, (w, p)) in entries.iter().enumerate() {
                let x = g
                    .parse(w)
                    .map_err(|e| CliError::validation(format!("measure.entries[{i}].word"), e.to_string()))?;
                if !(p.is_finite() && *p > 0.0) {
                    return Err(CliError::validation(format!("measure.entries[{i}].p"), format!("probability must be positive, got {p}")));
                }
                pairs.push((x, *p));
            }
            StepMeasure::new(g.clone(), pairs).map_err(|e| CliError::validation("measure.entries", e.to_string()))
        }
        _ => Err(CliError::validation("measure", "give exactly one of uniform = true or entries")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_specs() {
        assert_eq!(parse_group("integer").unwrap(), Family::Integer);
        assert_eq!(parse_group("free:3").unwrap(), Family::Free { rank: 3 });
        assert_eq!(parse_group("free-product:2,3").unwrap(), Family::FreeProduct { m: 2, n: 3 });
        assert!(parse_group("free").is_err());
        assert!(parse_group("surface:2").is_err());
    }

    #[test]
    fn measure_specs_split_at_the_last_colon() {
        let m = parse_measure("-1:0.3,1:0.7").unwrap();
        assert_eq!(m.entries.unwrap(), vec![("-1".to_string(), 0.3), ("1".to_string(), 0.7)]);
        assert_eq!(parse_measure("uniform").unwrap().uniform, Some(true));
        let err = parse_measure("a:0.5,b").unwrap_err();
        assert_eq!(err, CliError::validation("measure.entries[1]", "expected word:p, got \"b\""));
    }

    #[test]
    fn flags_beat_file_beats_default() {
        let flags = Params { n: Some(7), ..Params::default() };
        let file = Params { n: Some(9), depth: Some(2), ..Params::default() };
        let r = resolve("walk", &flags, &file);
        assert_eq!((r.n, r.depth, r.k), (7, 2, 6));
        let r = resolve("walk", &Params::default(), &Params::default());
        assert_eq!((r.n, r.depth), (40, 5));
    }

    #[test]
    fn both_measure_forms_is_an_error() {
        let g = Group::new(Family::Free { rank: 2 }).unwrap();
        let spec = MeasureSpec {
            uniform: Some(true),
            entries: Some(vec![("a".into(), 1.0)]),
        };
        assert!(matches!(build_measure(&g, &spec), Err(CliError::Validation { .. })));
    }
}
