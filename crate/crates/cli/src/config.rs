//! Run configuration: JSON ingestion, defaults and validation.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wsobolev::grid::sample_field;
use wsobolev::pde::{Dualization, SolverSettings};
use wsobolev::weights::{Ball, FitConfig};
use wsobolev::{Grid, GridFunction, PotentialExpr, WeightSpec};

use crate::error::CliError;
use crate::expr::Expr;

/// A scalar field given either as an expression or as a grid binary dump.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Expr(Expr),
    File(PathBuf),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSource {
    Expr(String),
    File(FileRef),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRef {
    file: PathBuf,
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RawSource::deserialize(d)? {
            RawSource::Expr(s) => Expr::parse(&s)
                .map(Source::Expr)
                .map_err(|e| serde::de::Error::custom(format!("expression `{s}`: {e}"))),
            RawSource::File(f) => Ok(Source::File(f.file)),
        }
    }
}

impl Serialize for Source {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Source::Expr(e) => s.serialize_str(e.source()),
            Source::File(p) => {
                use serde::ser::SerializeMap;
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("file", p)?;
                m.end()
            }
        }
    }
}

impl Source {
    fn expr(s: &str) -> Self {
        Source::Expr(Expr::parse(s).expect("built-in expression"))
    }

    /// Samples the field on `grid`; files must hold a field on exactly this grid.
    pub fn realize(&self, grid: &Grid, field: &str) -> Result<GridFunction, CliError> {
        match self {
            Source::Expr(e) => Ok(sample_field(grid, |x| e.eval(x))),
            Source::File(path) => {
                let f = File::open(path).map_err(|e| CliError::io(path, e))?;
                let u = GridFunction::read_binary(BufReader::new(f))
                    .map_err(|e| CliError::field(field, format!("{}: {e}", path.display())))?;
                if u.grid() != grid {
                    return Err(CliError::field(
                        field,
                        format!("{} holds a field on {:?}, expected {:?}", path.display(), u.grid(), grid),
                    ));
                }
                Ok(u)
            }
        }
    }

    fn check(&mut self, dim: usize, base: &Path, field: &str) -> Result<(), CliError> {
        match self {
            Source::Expr(e) if e.min_dim() > dim => Err(CliError::field(
                field,
                format!("expression `{}` uses y but the weight is {dim}-dimensional", e.source()),
            )),
            Source::File(p) if p.is_relative() => {
                *p = base.join(&*p);
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "R", default = "default_half_width")]
    pub half_width: f64,
    /// Nodes per axis; defaults to 601 in 1D and 121 in 2D.
    #[serde(default)]
    pub n: Option<usize>,
}

fn default_half_width() -> f64 {
    6.0
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            half_width: default_half_width(),
            n: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSection {
    pub eps: f64,
    /// Defaults to `1/p`.
    pub eps0: Option<f64>,
    pub eps1: f64,
    /// Poincaré radius; defaults to `D' + 1`.
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[serde(rename = "C4")]
    pub c4: f64,
    /// Half-width of the sample box for the hypothesis fits.
    pub sample_half_width: f64,
    pub n_samples: usize,
    pub fit: FitConfig,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        ConstantsSection {
            eps: 1.0,
            eps0: None,
            eps1: 1.0,
            l: None,
            c4: 1.0,
            sample_half_width: 4.0,
            n_samples: 1000,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproximateSection {
    pub f: Source,
    pub eps_schedule: Vec<f64>,
    pub tolerance: f64,
    pub hedberg_pairs: usize,
}

impl Default for ApproximateSection {
    fn default() -> Self {
        ApproximateSection {
            f: Source::expr("max(1 - r, 0)"),
            eps_schedule: vec![0.4, 0.2, 0.1, 0.05],
            tolerance: 1e-2,
            hedberg_pairs: wsobolev::sobolev::DEFAULT_HEDBERG_PAIRS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub u0: Source,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tau: f64,
    pub dualization: Dualization,
    pub solver: SolverSettings,
    /// Also dump every state in the grid binary format.
    pub dump_states: bool,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        EvolutionSection {
            u0: Source::expr("x"),
            horizon: 0.5,
            tau: 1e-3,
            dualization: Dualization::Weighted,
            solver: SolverSettings::default(),
            dump_states: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarySection {
    pub f: Source,
    pub solver: SolverSettings,
}

impl Default for StationarySection {
    fn default() -> Self {
        StationarySection {
            f: Source::expr("x"),
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    weight: WeightSpec,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    balls: Option<Vec<Ball>>,
    #[serde(default)]
    constants: ConstantsSection,
    #[serde(default)]
    approximate: ApproximateSection,
    #[serde(default)]
    evolution: EvolutionSection,
    #[serde(default)]
    stationary: StationarySection,
}

fn default_p() -> f64 {
    2.0
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub weight: WeightSpec,
    pub p: f64,
    pub grid: Grid,
    pub seed: u64,
    pub balls: Vec<Ball>,
    pub constants: ConstantsSection,
    pub approximate: ApproximateSection,
    pub evolution: EvolutionSection,
    pub stationary: StationarySection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub seed: Option<u64>,
}

pub fn load_config(path: &Path, overrides: Overrides) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base, overrides)
}

/// Parses and validates configuration text; relative file references resolve against `base`.
pub fn parse_config(text: &str, base: &Path, overrides: Overrides) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "config".to_string() } else { path };
        CliError::field(field, e.into_inner().to_string())
    })?;
    validate(raw, base, overrides)
}

fn core_field(prefix: &str) -> impl Fn(wsobolev::Error) -> CliError + '_ {
    move |e| match e {
        wsobolev::Error::InvalidParameter { name, reason } => {
            CliError::field(format!("{prefix}.{name}"), reason)
        }
        other => CliError::field(prefix, other.to_string()),
    }
}

fn validate_terms(name: &str, expr: &PotentialExpr, dim: usize) -> Result<(), CliError> {
    for (i, t) in expr.terms.iter().enumerate() {
        PotentialExpr::new(vec![t.clone()])
            .validate(dim)
            .map_err(core_field(&format!("weight.{name}[{i}]")))?;
    }
    Ok(())
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::field(field, format!("must be positive, got {v}")))
    }
}

fn validate(raw: RawConfig, base: &Path, overrides: Overrides) -> Result<RunConfig, CliError> {
    let RawConfig {
        weight,
        p,
        grid,
        seed,
        balls,
        mut constants,
        mut approximate,
        mut evolution,
        mut stationary,
    } = raw;
    let dim = weight.dim;
    if dim != 1 && dim != 2 {
        return Err(CliError::field("weight.dim", format!("must be 1 or 2, got {dim}")));
    }
    validate_terms("W", &weight.potential_w, dim)?;
    validate_terms("V", &weight.potential_v, dim)?;
    weight.validate().map_err(core_field("weight"))?;

    if !(p.is_finite() && p >= 1.0) {
        return Err(CliError::field("p", format!("must be >= 1, got {p}")));
    }

    let n = overrides
        .grid_n
        .or(grid.n)
        .unwrap_or(if dim == 1 { 601 } else { 121 });
    positive("grid.R", grid.half_width)?;
    let grid = Grid::new(dim, grid.half_width, n).map_err(|e| match e {
        wsobolev::Error::InvalidParameter { reason, .. } => CliError::field("grid.n", reason),
        other => CliError::field("grid", other.to_string()),
    })?;

    let balls = match balls {
        Some(b) => b,
        None => default_balls(dim),
    };
    for (i, b) in balls.iter().enumerate() {
        if b.center.len() != dim || b.center.iter().any(|c| !c.is_finite()) {
            return Err(CliError::field(
                format!("balls[{i}].center"),
                format!("must have {dim} finite components"),
            ));
        }
        positive(&format!("balls[{i}].radius"), b.radius)?;
    }

    positive("constants.eps", constants.eps)?;
    let eps0 = constants.eps0.unwrap_or(1.0 / p);
    positive("constants.eps0", eps0)?;
    constants.eps0 = Some(eps0);
    positive("constants.eps1", constants.eps1)?;
    if let Some(l) = constants.l {
        positive("constants.L", l)?;
    }
    positive("constants.C4", constants.c4)?;
    positive("constants.sample_half_width", constants.sample_half_width)?;
    if constants.n_samples < 100 {
        return Err(CliError::field(
            "constants.n_samples",
            format!("need at least 100, got {}", constants.n_samples),
        ));
    }
    let fit = constants.fit;
    positive("constants.fit.delta_step", fit.delta_step)?;
    positive("constants.fit.delta_max", fit.delta_max)?;
    positive("constants.fit.c1_step", fit.c1_step)?;
    if !(fit.c1_max >= 1.0) {
        return Err(CliError::field("constants.fit.c1_max", "must be >= 1"));
    }
    positive("constants.fit.cap", fit.cap)?;
    positive("constants.fit.stability_tol", fit.stability_tol)?;

    let sched = &approximate.eps_schedule;
    if sched.is_empty() || sched.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(CliError::field("approximate.eps_schedule", "must be non-empty and positive"));
    }
    if sched.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CliError::field("approximate.eps_schedule", "must be strictly decreasing"));
    }
    positive("approximate.tolerance", approximate.tolerance)?;
    approximate.f.check(dim, base, "approximate.f")?;

    evolution.u0.check(dim, base, "evolution.u0")?;
    positive("evolution.T", evolution.horizon)?;
    positive("evolution.tau", evolution.tau)?;
    evolution.solver.validate().map_err(core_field("evolution.solver"))?;

    stationary.f.check(dim, base, "stationary.f")?;
    stationary.solver.validate().map_err(core_field("stationary.solver"))?;

    Ok(RunConfig {
        weight,
        p,
        grid,
        seed: overrides.seed.unwrap_or(seed),
        balls,
        constants,
        approximate,
        evolution,
        stationary,
    })
}

/// Radii 0.25, 0.5 and 1 about the origin and the points at distance 1 on each axis.
fn default_balls(dim: usize) -> Vec<Ball> {
    let mut centres = vec![vec![0.0; dim]];
    for a in 0..dim {
        for s in [-1.0, 1.0] {
            let mut c = vec![0.0; dim];
            c[a] = s;
            centres.push(c);
        }
    }
    let mut balls = Vec::new();
    for c in &centres {
        for r in [0.25, 0.5, 1.0] {
            balls.push(Ball::new(c, r));
        }
    }
    balls
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        parse_config(text, Path::new("/cfg"), Overrides::default())
    }

    fn field_of(r: Result<RunConfig, CliError>) -> String {
        match r {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    const GAUSSIAN: &str = r#"{"weight": {"beta": 1, "q": 2, "dim": 1}}"#;

    #[test]
    fn minimal_gaussian_gets_defaults() {
        let c = parse(GAUSSIAN).unwrap();
        assert_eq!(c.weight, WeightSpec::gaussian(1));
        assert_eq!(c.p, 2.0);
        assert_eq!(c.constants.eps0, Some(0.5));
        assert_eq!(c.constants.eps1, 1.0);
        assert_eq!(c.evolution.solver, SolverSettings::default());
        assert_eq!(c.stationary.solver, SolverSettings::default());
        assert_eq!(c.grid, Grid::new(1, 6.0, 601).unwrap());
        assert_eq!(c.seed, 0);
        assert_eq!(c.balls.len(), 9);
    }

    #[test]
    fn eps0_follows_p() {
        let c = parse(r#"{"weight": {"beta": 1, "q": 1.5, "dim": 2}, "p": 3}"#).unwrap();
        assert_eq!(c.constants.eps0, Some(1.0 / 3.0));
        assert_eq!(c.grid.nodes_per_axis(), 121);
        assert_eq!(c.balls.len(), 15);
    }

    #[test]
    fn q_equal_to_one_names_q() {
        let r = parse(r#"{"weight": {"beta": 1, "q": 1, "dim": 1}}"#);
        assert_eq!(field_of(r), "weight.q");
    }

    #[test]
    fn unknown_term_kind_names_the_term() {
        let r = parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1, "W": [{"kind": "cubic", "c": 1}]}}"#);
        let err = r.unwrap_err();
        let CliError::Config { field, reason } = &err else { panic!("{err:?}") };
        assert!(field.starts_with("weight.W"), "{field}");
        assert!(reason.contains("cubic"), "{reason}");
    }

    #[test]
    fn bad_term_parameter_names_its_index() {
        let r = parse(
            r#"{"weight": {"beta": 1, "q": 2, "dim": 1,
                "V": [{"kind": "constant", "c": 1}, {"kind": "power_abs", "c": 1, "s": 0.5}]}}"#,
        );
        assert_eq!(field_of(r), "weight.V[1].s");
    }

    #[test]
    fn unknown_fields_and_bad_values_are_named() {
        assert_eq!(field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "pp": 2}"#)), "pp");
        assert_eq!(field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 3}}"#)), "weight.dim");
        assert_eq!(
            field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "grid": {"n": 100}}"#)),
            "grid.n"
        );
        assert_eq!(
            field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "evolution": {"solver": {"tol": -1}}}"#)),
            "evolution.solver.tol"
        );
        assert_eq!(
            field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "evolution": {"u0": "sin(y)"}}"#)),
            "evolution.u0"
        );
        assert_eq!(
            field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "evolution": {"u0": "x +"}}"#)),
            "evolution.u0"
        );
        assert_eq!(
            field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "approximate": {"eps_schedule": [0.1, 0.2]}}"#)),
            "approximate.eps_schedule"
        );
        assert_eq!(field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "p": 0.5}"#)), "p");
        assert_eq!(field_of(parse(r#"{"weight": {"q": 2, "dim": 1}}"#)), "weight");
        assert_eq!(
            field_of(parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "balls": [{"center": [0, 0], "radius": 1}]}"#)),
            "balls[0].center"
        );
    }

    #[test]
    fn overrides_take_precedence() {
        let c = parse_config(GAUSSIAN, Path::new("."), Overrides { grid_n: Some(101), seed: Some(9) }).unwrap();
        assert_eq!(c.grid.nodes_per_axis(), 101);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn relative_files_resolve_against_the_config_directory() {
        let c = parse(r#"{"weight": {"beta": 1, "q": 2, "dim": 1}, "evolution": {"u0": {"file": "u0.bin"}}}"#)
            .unwrap();
        assert_eq!(c.evolution.u0, Source::File(PathBuf::from("/cfg/u0.bin")));
    }
}
