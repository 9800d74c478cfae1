//! Tab-separated outputs, one header line followed by one line per row.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{DriftSegment, EnsemblePoint, ScenarioResult, SweepPoint, Table1Row};
use super::{Artifact, ScenarioError};
use crate::coincidence::{Coincidence, CoincidenceHistogram, PeakSet};
use crate::tagfile::{records_from_tags, write_tags, TagFileHeader};
use crate::Party;

pub const TABLE1_COLUMNS: [&str; 8] =
    ["scheme", "d_a_km", "d_b_km", "loss_db", "filtering", "visibility_pct", "coinc_per_s", "secure_per_s"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn histogram(h: &CoincidenceHistogram) -> Self {
        let mut t = Table::new(&["delay_ps", "count"]);
        for (i, c) in h.counts.iter().enumerate() {
            t.push(vec![h.center(i).to_string(), c.to_string()]);
        }
        t
    }

    pub fn peaks(p: &PeakSet) -> Self {
        let mut t = Table::new(&["center_ps", "weight", "modes"]);
        for peak in &p.peaks {
            let modes = peak.labels.iter().fold(String::new(), |mut s, l| {
                if !s.is_empty() {
                    s.push(',');
                }
                let _ = write!(s, "{l}");
                s
            });
            t.push(vec![
                format!("{:.1}", peak.center),
                format!("{:.1}", peak.weight),
                if modes.is_empty() { "-".into() } else { modes },
            ]);
        }
        t
    }

    pub fn coincidences(c: &[Coincidence]) -> Self {
        let mut t = Table::new(&["time_a_ps", "time_b_ps", "channel_a", "channel_b"]);
        for x in c {
            t.push(vec![x.time_a.to_string(), x.time_b.to_string(), x.channel_a.to_string(), x.channel_b.to_string()]);
        }
        t
    }

    pub fn table1(rows: &[Table1Row]) -> Self {
        let mut t = Table::new(&TABLE1_COLUMNS);
        for r in rows {
            t.push(vec![
                r.scheme.into(),
                format!("{:.1}", r.length_a),
                format!("{:.1}", r.length_b),
                format!("{:.1}", r.loss_db),
                r.filtering.into(),
                format!("{:.2}", 100.0 * r.visibility),
                format!("{:.0}", r.coincidence_rate),
                format!("{:.0}", r.secure_rate),
            ]);
        }
        t
    }

    pub fn sweep(points: &[SweepPoint]) -> Self {
        let mut t = Table::new(&["length_km", "visibility_pct", "qber", "coinc_per_s", "secure_per_s"]);
        for p in points {
            t.push(vec![
                format!("{}", p.length),
                format!("{:.2}", 100.0 * p.visibility),
                format!("{:.5}", p.qber),
                format!("{:.1}", p.coincidence_rate),
                format!("{:.1}", p.secure_rate),
            ]);
        }
        t
    }

    pub fn drift(segments: &[DriftSegment]) -> Self {
        let mut t = Table::new(&["t_s", "coincidences", "qber", "expected_qber", "secure_per_s"]);
        for s in segments {
            t.push(vec![
                format!("{}", s.start),
                s.coincidences.to_string(),
                format!("{:.5}", s.qber),
                format!("{:.5}", s.expected_qber),
                format!("{:.1}", s.secure_rate),
            ]);
        }
        t
    }

    pub fn ensemble(points: &[EnsemblePoint]) -> Self {
        let mut t = Table::new(&["t_s", "mean_qber", "step_error"]);
        for p in points {
            t.push(vec![format!("{}", p.start), format!("{:.6}", p.mean_qber), format!("{:.6}", p.step_error)]);
        }
        t
    }
}

/// Writes the artifacts listed in the scenario into `dir` and returns their
/// paths.
pub fn write_bundle(result: &ScenarioResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ScenarioError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let name = &result.scenario.name;
    let mut written = Vec::new();
    for artifact in &result.scenario.outputs {
        let mut tsv = |table: Table| -> Result<(), ScenarioError> {
            let path = dir.join(format!("{name}.{}.tsv", artifact.name()));
            table.write(&path)?;
            written.push(path);
            Ok(())
        };
        match artifact {
            Artifact::Histogram => tsv(Table::histogram(&result.analysis.histogram))?,
            Artifact::Peaks => tsv(Table::peaks(&result.analysis.peaks))?,
            Artifact::Coincidences => tsv(Table::coincidences(&result.analysis.coincidences))?,
            Artifact::TableRow => tsv(Table::table1(&[Table1Row::from_result(result)]))?,
            Artifact::Tags => {
                for party in [Party::A, Party::B] {
                    let tags = result.run.tags(party);
                    let path = dir.join(format!("{name}.{party}.qtag"));
                    let header = TagFileHeader { resolution: 1, party, record_count: tags.len() as u64 };
                    write_tags(&path, &header, &records_from_tags(tags, 1)?)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}
