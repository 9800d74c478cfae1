//! Scenario files.
//!
//! A scenario is a TOML document. `include = ["a.toml", ...]` pulls in other
//! files (resolved next to the including file); included tables are merged
//! depth-first and the including file wins on conflicts. Every physical
//! quantity is a string with an explicit unit, e.g. `"3 ns"` or `"2.2 km"`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};

use super::bundled;
use super::{AnalysisParams, ArmSpec, Artifact, Calibration, Filters, RotationSpec, Scenario, SpatialFilterSpec};
use crate::fiber::{Attenuation, FiberSpec};
use crate::link::{DetectorSpec, SourceSpec};
use crate::polarization::Rotation;
use crate::qkd::SecurityParams;
use crate::units::{self, Dimension};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("cannot read {file}: {message}")]
    Read { file: String, message: String },
    #[error("{file}: {message}")]
    Syntax { file: String, message: String },
    #[error("include cycle through {0}")]
    IncludeCycle(String),
    #[error("unknown bundled scenario {0:?}")]
    UnknownBundled(String),
}

fn field(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { path: path.into(), message: message.into() }
}

/// Recursively merges `over` into `base`; tables merge, everything else is
/// replaced.
pub fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

trait Reader {
    fn read(&self, path: &Path) -> Result<String, ConfigError>;
}

struct Files;

impl Reader for Files {
    fn read(&self, path: &Path) -> Result<String, ConfigError> {
        fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { file: path.display().to_string(), message: e.to_string() })
    }
}

struct Bundled;

impl Reader for Bundled {
    fn read(&self, path: &Path) -> Result<String, ConfigError> {
        let name = path.to_string_lossy();
        bundled::source(&name).map(str::to_owned).ok_or_else(|| ConfigError::UnknownBundled(name.into_owned()))
    }
}

fn load_table(reader: &dyn Reader, path: &Path, stack: &mut Vec<PathBuf>) -> Result<Table, ConfigError> {
    if stack.iter().any(|p| p == path) {
        return Err(ConfigError::IncludeCycle(path.display().to_string()));
    }
    let text = reader.read(path)?;
    let mut table: Table = toml::from_str(&text)
        .map_err(|e| ConfigError::Syntax { file: path.display().to_string(), message: e.to_string() })?;
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(field("include", format!("expected file name, found {other}"))),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => return Err(field("include", format!("expected an array of file names, found {other}"))),
    };
    stack.push(path.to_path_buf());
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut merged = Table::new();
    for inc in includes {
        merge(&mut merged, load_table(reader, &dir.join(inc), stack)?);
    }
    stack.pop();
    merge(&mut merged, table);
    Ok(merged)
}

/// Reads a scenario file from disk, following includes.
pub fn load_file(path: impl AsRef<Path>) -> Result<Scenario, ConfigError> {
    let table = load_table(&Files, path.as_ref(), &mut Vec::new())?;
    let fallback = path.as_ref().file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_scenario(&table, &fallback)
}

/// Loads one of the scenarios shipped with the crate, by name with or
/// without the `.toml` suffix.
pub fn load_bundled(name: &str) -> Result<Scenario, ConfigError> {
    let stem = name.strip_suffix(".toml").unwrap_or(name);
    let file = format!("{stem}.toml");
    let table = load_table(&Bundled, Path::new(&file), &mut Vec::new())?;
    parse_scenario(&table, stem)
}

/// Parses an already merged document, e.g. a string built in a test.
pub fn parse_str(text: &str) -> Result<Scenario, ConfigError> {
    let table: Table =
        toml::from_str(text).map_err(|e| ConfigError::Syntax { file: "<string>".into(), message: e.to_string() })?;
    if table.contains_key("include") {
        return Err(field("include", "includes need a file context"));
    }
    parse_scenario(&table, "scenario")
}

/// Typed view of one table with its dotted path for diagnostics.
struct Section<'a> {
    table: &'a Table,
    path: String,
}

impl<'a> Section<'a> {
    fn root(table: &'a Table) -> Self {
        Section { table, path: String::new() }
    }

    fn at(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_owned()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn allow(&self, keys: &[&str]) -> Result<(), ConfigError> {
        match self.table.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(field(self.at(k), format!("unknown key (expected one of {})", keys.join(", ")))),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.get(key)
    }

    fn section(&self, key: &str) -> Result<Option<Section<'a>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section { table: t, path: self.at(key) })),
            Some(other) => Err(field(self.at(key), format!("expected a table, found {}", other.type_str()))),
        }
    }

    fn require_section(&self, key: &str) -> Result<Section<'a>, ConfigError> {
        self.section(key)?.ok_or_else(|| field(self.at(key), "missing section"))
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(field(self.at(key), format!("expected a string, found {}", other.type_str()))),
        }
    }

    fn quantity(&self, key: &str, dim: Dimension) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => units::parse(s, dim).map(Some).map_err(|e| field(self.at(key), e.to_string())),
            Some(other) => Err(field(self.at(key), format!("expected a quantity with unit, found {other}"))),
        }
    }

    fn require_quantity(&self, key: &str, dim: Dimension) -> Result<f64, ConfigError> {
        self.quantity(key, dim)?.ok_or_else(|| field(self.at(key), "missing"))
    }

    /// Dimensionless number; integers are accepted.
    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => {
                as_number(v).map(Some).ok_or_else(|| field(self.at(key), format!("expected a number, found {v}")))
            }
        }
    }

    fn integer(&self, key: &str) -> Result<Option<i64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(other) => Err(field(self.at(key), format!("expected an integer, found {other}"))),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(field(self.at(key), format!("expected true or false, found {other}"))),
        }
    }

    fn array(&self, key: &str) -> Result<Option<&'a Vec<Value>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(other) => Err(field(self.at(key), format!("expected an array, found {}", other.type_str()))),
        }
    }
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn parse_fiber(label: &str, s: &Section) -> Result<FiberSpec, ConfigError> {
    s.allow(&["core_radius", "core_index", "cladding_index", "attenuation"])?;
    let core_radius = s.require_quantity("core_radius", Dimension::MicroLength)?;
    let core_index = s.number("core_index")?.ok_or_else(|| field(s.at("core_index"), "missing"))?;
    let cladding_index = s.number("cladding_index")?.ok_or_else(|| field(s.at("cladding_index"), "missing"))?;
    let mut attenuation = Vec::new();
    for (i, row) in s.array("attenuation")?.map(Vec::as_slice).unwrap_or_default().iter().enumerate() {
        let path = format!("{}[{i}]", s.at("attenuation"));
        let Value::Table(t) = row else {
            return Err(field(path, "expected {wavelength, loss}"));
        };
        let row = Section { table: t, path };
        row.allow(&["wavelength", "loss"])?;
        attenuation.push(Attenuation {
            wavelength: row.require_quantity("wavelength", Dimension::Wavelength)?,
            loss: row.require_quantity("loss", Dimension::Attenuation)?,
        });
    }
    FiberSpec::new(label, core_radius, core_index, cladding_index, attenuation)
        .map_err(|e| field(&s.path, e.to_string()))
}

/// Renders a fiber as a `[fibers.<label>]` section.
pub fn fiber_to_toml(spec: &FiberSpec) -> String {
    let mut out = format!(
        "[fibers.{}]\ncore_radius = \"{} um\"\ncore_index = {}\ncladding_index = {}\nattenuation = [\n",
        spec.label, spec.core_radius, spec.core_index, spec.cladding_index
    );
    for a in &spec.attenuation {
        out.push_str(&format!("    {{ wavelength = \"{} nm\", loss = \"{} dB/km\" }},\n", a.wavelength, a.loss));
    }
    out.push_str("]\n");
    out
}

fn parse_rotation(v: &Value, path: &str) -> Result<RotationSpec, ConfigError> {
    match v {
        Value::String(s) if s == "identity" => Ok(RotationSpec::Identity),
        Value::String(s) if s == "random" => Ok(RotationSpec::Random),
        Value::Table(t) => {
            let s = Section { table: t, path: path.to_owned() };
            s.allow(&["axis", "angle"])?;
            let axis = s.array("axis")?.ok_or_else(|| field(s.at("axis"), "missing"))?;
            let axis: Vec<f64> = axis.iter().filter_map(as_number).collect();
            let axis: [f64; 3] = axis.try_into().map_err(|_| field(s.at("axis"), "expected three numbers"))?;
            if axis.iter().all(|&c| c == 0.0) {
                return Err(field(s.at("axis"), "axis must be nonzero"));
            }
            let angle = s.require_quantity("angle", Dimension::Angle)?;
            Ok(RotationSpec::Fixed(Rotation::about(axis, angle)))
        }
        other => Err(field(path, format!("expected \"identity\", \"random\" or {{axis, angle}}, found {other}"))),
    }
}

fn parse_arm(s: &Section, fibers: &BTreeMap<String, FiberSpec>) -> Result<ArmSpec, ConfigError> {
    s.allow(&["length", "fiber", "launch", "rotations", "drift_rate", "extra_loss"])?;
    let length = s.require_quantity("length", Dimension::Length)?;
    let label = s.string("fiber")?.ok_or_else(|| field(s.at("fiber"), "missing"))?;
    let fiber =
        fibers.get(label).cloned().ok_or_else(|| field(s.at("fiber"), format!("no [fibers.{label}] section")))?;
    let launch = match s.array("launch")? {
        None => [1.0, 0.0],
        Some(a) => {
            let v: Vec<f64> = a.iter().filter_map(as_number).collect();
            v.try_into().map_err(|_| field(s.at("launch"), "expected [LP01 fraction, LP11 fraction]"))?
        }
    };
    let rotations = match s.array("rotations")? {
        None => [RotationSpec::Identity, RotationSpec::Identity],
        Some(a) if a.len() == 2 => {
            let path = s.at("rotations");
            [parse_rotation(&a[0], &format!("{path}[0]"))?, parse_rotation(&a[1], &format!("{path}[1]"))?]
        }
        Some(_) => return Err(field(s.at("rotations"), "expected one entry per mode (LP01, LP11)")),
    };
    let arm = ArmSpec {
        length,
        fiber,
        launch,
        rotations,
        drift_rate: s.quantity("drift_rate", Dimension::DriftRate)?.unwrap_or(0.0),
        extra_loss: s.quantity("extra_loss", Dimension::Loss)?.unwrap_or(0.0),
    };
    arm.to_config(Rotation::identity(), Rotation::identity()).validate().map_err(|e| field(&s.path, e.to_string()))?;
    Ok(arm)
}

const TOP_KEYS: &[&str] = &[
    "name",
    "seed",
    "duration",
    "drift_step",
    "outputs",
    "fibers",
    "source",
    "arms",
    "detectors",
    "spatial_filter",
    "filters",
    "analysis",
    "security",
    "reference",
    "calibration",
];

fn parse_scenario(table: &Table, fallback_name: &str) -> Result<Scenario, ConfigError> {
    let root = Section::root(table);
    root.allow(TOP_KEYS)?;

    let mut fibers = BTreeMap::new();
    if let Some(fs) = root.section("fibers")? {
        for (label, v) in fs.table {
            let Value::Table(t) = v else {
                return Err(field(fs.at(label), "expected a table"));
            };
            fibers.insert(label.clone(), parse_fiber(label, &Section { table: t, path: fs.at(label) })?);
        }
    }

    let src = root.require_section("source")?;
    src.allow(&["pair_rate", "visibility", "wavelength"])?;
    let source = SourceSpec {
        pair_rate: src.require_quantity("pair_rate", Dimension::Rate)?,
        intrinsic_visibility: src.number("visibility")?.unwrap_or(1.0),
        emission_wavelength: src.quantity("wavelength", Dimension::Wavelength)?.unwrap_or(810.0),
    };
    source.validate().map_err(|e| field("source", e.to_string()))?;

    let arms = root.require_section("arms")?;
    arms.allow(&["a", "b"])?;
    let arm_a = parse_arm(&arms.require_section("a")?, &fibers)?;
    let arm_b = parse_arm(&arms.require_section("b")?, &fibers)?;

    let mut detectors = DetectorSpec::default();
    if let Some(d) = root.section("detectors")? {
        d.allow(&["efficiency", "dark_rate", "jitter", "dead_time"])?;
        if let Some(v) = d.number("efficiency")? {
            detectors.efficiency = v;
        }
        if let Some(v) = d.quantity("dark_rate", Dimension::Rate)? {
            detectors.dark_rate = v;
        }
        if let Some(v) = d.quantity("jitter", Dimension::Time)? {
            detectors.jitter_sigma = v;
        }
        if let Some(v) = d.quantity("dead_time", Dimension::Time)? {
            detectors.dead_time = v * 1e-3;
        }
        detectors.validate().map_err(|e| field("detectors", e.to_string()))?;
    }

    let spatial_filter = match root.section("spatial_filter")? {
        None => None,
        Some(s) => {
            s.allow(&["fiber", "lateral_offset", "leakage", "insertion_loss"])?;
            let label = s.string("fiber")?.ok_or_else(|| field(s.at("fiber"), "missing"))?;
            let fiber = fibers
                .get(label)
                .cloned()
                .ok_or_else(|| field(s.at("fiber"), format!("no [fibers.{label}] section")))?;
            let lateral_offset = match s.get("lateral_offset") {
                Some(Value::String(v)) if v == "calibrated" => None,
                _ => Some(s.require_quantity("lateral_offset", Dimension::MicroLength)?),
            };
            let leakage = s.number("leakage")?.unwrap_or(0.02);
            if !(leakage > 0.0 && leakage < 1.0) {
                return Err(field(s.at("leakage"), "must lie in (0, 1)"));
            }
            Some(SpatialFilterSpec {
                fiber,
                lateral_offset,
                leakage,
                insertion_loss: s.quantity("insertion_loss", Dimension::Loss)?.unwrap_or(0.0),
            })
        }
    };

    let mut filters = Filters::default();
    if let Some(f) = root.section("filters")? {
        f.allow(&["temporal", "spatial"])?;
        filters.temporal = match f.get("temporal") {
            None => None,
            Some(Value::String(s)) if s == "none" => None,
            Some(_) => Some(f.require_quantity("temporal", Dimension::Time)?),
        };
        filters.spatial = f.boolean("spatial")?.unwrap_or(false);
        if matches!(filters.temporal, Some(w) if !(w >= 1.0)) {
            return Err(field(f.at("temporal"), "window must be at least 1 ps"));
        }
    }
    if filters.spatial && spatial_filter.is_none() {
        return Err(field("filters.spatial", "spatial filtering needs a [spatial_filter] section"));
    }

    let mut analysis = AnalysisParams::default();
    if let Some(a) = root.section("analysis")? {
        a.allow(&[
            "bin_width",
            "half_range",
            "offset_search",
            "unfiltered_window",
            "peak_sigma",
            "merge_gap",
            "segment",
            "ensemble",
        ])?;
        let ps = |key: &str, into: &mut i64| -> Result<(), ConfigError> {
            if let Some(v) = a.quantity(key, Dimension::Time)? {
                *into = v.round() as i64;
            }
            Ok(())
        };
        ps("bin_width", &mut analysis.bin_width)?;
        ps("half_range", &mut analysis.half_range)?;
        ps("offset_search", &mut analysis.offset_search)?;
        ps("unfiltered_window", &mut analysis.unfiltered_window)?;
        if let Some(v) = a.number("peak_sigma")? {
            analysis.peak_sigma = v;
        }
        if let Some(v) = a.integer("merge_gap")? {
            analysis.merge_gap = usize::try_from(v).map_err(|_| field(a.at("merge_gap"), "must be ≥ 0"))?;
        }
        if let Some(v) = a.quantity("segment", Dimension::Duration)? {
            analysis.segment = v;
        }
        if let Some(v) = a.integer("ensemble")? {
            analysis.ensemble = usize::try_from(v).map_err(|_| field(a.at("ensemble"), "must be ≥ 0"))?;
        }
        if analysis.bin_width <= 0 {
            return Err(field(a.at("bin_width"), "must be positive"));
        }
        if analysis.half_range <= 0 || analysis.half_range % analysis.bin_width != 0 {
            return Err(field(a.at("half_range"), "must be a positive multiple of the bin width"));
        }
        if analysis.unfiltered_window <= 0 {
            return Err(field(a.at("unfiltered_window"), "must be positive"));
        }
        if !(analysis.segment > 0.0) {
            return Err(field(a.at("segment"), "must be positive"));
        }
    }

    let mut security = SecurityParams::default();
    if let Some(s) = root.section("security")? {
        s.allow(&["ec_inefficiency", "sifting_factor", "min_sifted"])?;
        if let Some(v) = s.number("ec_inefficiency")? {
            security.ec_inefficiency = v;
        }
        if let Some(v) = s.number("sifting_factor")? {
            security.sifting_factor = v;
        }
        if let Some(v) = s.integer("min_sifted")? {
            security.min_sifted = usize::try_from(v).map_err(|_| field(s.at("min_sifted"), "must be ≥ 0"))?;
        }
        security.validate().map_err(|e| field("security", e.to_string()))?;
    }

    let mut calibration = Calibration::default();
    if let Some(c) = root.section("calibration")? {
        c.allow(&["cutoff_length", "mean_qber"])?;
        calibration.cutoff_length = c.quantity("cutoff_length", Dimension::Length)?;
        calibration.mean_qber = c.number("mean_qber")?;
    }

    let (mut reference_pair_rate, mut reference_local_rate) = (None, None);
    if let Some(r) = root.section("reference")? {
        r.allow(&["pair_rate", "local_coincidences"])?;
        reference_pair_rate = r.quantity("pair_rate", Dimension::Rate)?;
        reference_local_rate = r.quantity("local_coincidences", Dimension::Rate)?;
    }

    let duration = root.require_quantity("duration", Dimension::Duration)?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(field("duration", "must be positive"));
    }
    let drift_step = root.quantity("drift_step", Dimension::Duration)?.unwrap_or(0.1);
    if !(drift_step > 0.0) {
        return Err(field("drift_step", "must be positive"));
    }
    let seed = match root.integer("seed")? {
        None => 1,
        Some(s) => u64::try_from(s).map_err(|_| field("seed", "must be ≥ 0"))?,
    };
    let mut outputs = Vec::new();
    for (i, v) in root.array("outputs")?.map(Vec::as_slice).unwrap_or_default().iter().enumerate() {
        let name = v.as_str().unwrap_or_default();
        outputs.push(
            Artifact::from_name(name).ok_or_else(|| field(format!("outputs[{i}]"), format!("unknown artifact {v}")))?,
        );
    }

    Ok(Scenario {
        name: root.string("name")?.unwrap_or(fallback_name).to_owned(),
        seed,
        duration,
        drift_step,
        source,
        arm_a,
        arm_b,
        detectors,
        spatial_filter,
        filters,
        analysis,
        security,
        reference_pair_rate,
        reference_local_rate,
        calibration,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        duration = "1 s"
        [fibers.smf]
        core_radius = "2.3 um"
        core_index = 1.4582
        cladding_index = 1.4533
        attenuation = [{ wavelength = "810 nm", loss = "3.5 dB/km" }]
        [source]
        pair_rate = "1000 /s"
        [arms.a]
        length = "2 m"
        fiber = "smf"
        [arms.b]
        length = "2 m"
        fiber = "smf"
    "#;

    fn err_path(text: &str) -> String {
        match parse_str(text) {
            Err(ConfigError::Field { path, .. }) => path,
            other => panic!("expected a field error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_document() {
        let s = parse_str(MINIMAL).unwrap();
        assert_eq!(s.duration, 1.0);
        assert!((s.arm_a.length - 0.002).abs() < 1e-15);
        assert_eq!(s.filters, Filters::default());
    }

    #[test]
    fn field_paths_in_errors() {
        assert_eq!(err_path(&MINIMAL.replace("\"1 s\"", "\"0 s\"")), "duration");
        assert_eq!(err_path(&MINIMAL.replace("\"1 s\"", "1.0")), "duration");
        assert_eq!(err_path(&MINIMAL.replacen("\"2 m\"", "\"2\"", 1)), "arms.a.length");
        assert_eq!(err_path(&MINIMAL.replacen("fiber = \"smf\"", "fiber = \"mmf\"", 1)), "arms.a.fiber");
        assert_eq!(err_path(&format!("{MINIMAL}\nlenght = \"1 km\"")), "arms.b.lenght");
        assert_eq!(err_path(&format!("{MINIMAL}\n[filters]\nspatial = true")), "filters.spatial");
    }

    #[test]
    fn merge_is_deep() {
        let mut base: Table = toml::from_str("[a]\nx = 1\ny = 2\n[b]\nz = 3").unwrap();
        merge(&mut base, toml::from_str("[a]\ny = 5").unwrap());
        assert_eq!(base["a"]["x"].as_integer(), Some(1));
        assert_eq!(base["a"]["y"].as_integer(), Some(5));
        assert_eq!(base["b"]["z"].as_integer(), Some(3));
    }

    #[test]
    fn include_cycle_detected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.toml"), "include = [\"y.toml\"]").unwrap();
        fs::write(dir.path().join("y.toml"), "include = [\"x.toml\"]").unwrap();
        assert!(matches!(load_file(dir.path().join("x.toml")), Err(ConfigError::IncludeCycle(_))));
    }

    #[test]
    fn fiber_section_round_trips() {
        let s = parse_str(MINIMAL).unwrap();
        let text = fiber_to_toml(&s.arm_a.fiber);
        let table: Table = toml::from_str(&text).unwrap();
        let fibers = Section::root(&table).require_section("fibers").unwrap();
        let sec = fibers.require_section("smf").unwrap();
        assert_eq!(parse_fiber("smf", &sec).unwrap(), s.arm_a.fiber);
    }
}
