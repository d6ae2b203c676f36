use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::attacks::{AttackKind, AttackRecord};
use crate::error::{Error, Result};
use crate::experiment::write_atomic;
use crate::purifier::Arm;

/// How a missing value is written in every report format.
pub const ABSENT: &str = "absent";

/// A report value, or an explicit marker that it was not computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Value(f64),
    Absent,
}

impl Cell {
    pub fn value(self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(v),
            Cell::Absent => None,
        }
    }

    fn text(self) -> String {
        match self {
            Cell::Value(v) => v.to_string(),
            Cell::Absent => ABSENT.into(),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Value(v) => s.serialize_f64(*v),
            Cell::Absent => s.serialize_str(ABSENT),
        }
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Cell::Value(v)),
            Raw::Text(t) if t == ABSENT => Ok(Cell::Absent),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or {ABSENT:?}, got {t:?}"
            ))),
        }
    }
}

/// Column holding an attack's headline number.
pub fn attack_column(kind: AttackKind) -> String {
    if kind.reports_auc() {
        format!("{}_auc", kind.name())
    } else {
        kind.name().to_string()
    }
}

/// One number for one `(seed, arm)` cell of the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub seed: u64,
    pub arm: Arm,
    pub column: String,
    pub value: f64,
}

impl Measurement {
    pub fn new(seed: u64, arm: Arm, column: impl Into<String>, value: f64) -> Self {
        Self {
            seed,
            arm,
            column: column.into(),
            value,
        }
    }

    /// The record's headline number; `None` for records that carry none
    /// (an attack that was not run).
    pub fn from_record(r: &AttackRecord) -> Option<Self> {
        let kind: AttackKind = r.attack.parse().ok()?;
        let v = if kind.reports_auc() {
            r.auc
        } else {
            r.accuracy
        }?;
        Some(Self::new(r.seed, r.target_arm, attack_column(kind), v))
    }
}

/// The shape of the table: which seeds, arms and columns must appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSpec {
    pub experiment: String,
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub seed: u64,
    pub arm: Arm,
    pub cells: BTreeMap<String, Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment: String,
    pub dataset: String,
    pub columns: Vec<String>,
    /// One row per seed and arm.
    pub rows: Vec<ReportRow>,
    /// Per arm, the mean over seeds of each column's present values.
    pub means: Vec<ReportRow>,
}

/// Lays the measurements out on the spec's grid. A grid cell with no
/// measurement is [`Cell::Absent`]; a measurement outside the grid, or two
/// for the same cell, is an error.
pub fn assemble_report(spec: &ReportSpec, measurements: &[Measurement]) -> Result<EvalReport> {
    let mut grid: BTreeMap<(u64, Arm, &str), f64> = BTreeMap::new();
    for m in measurements {
        if !spec.seeds.contains(&m.seed)
            || !spec.arms.contains(&m.arm)
            || !spec.columns.contains(&m.column)
        {
            return Err(Error::Config(format!(
                "measurement {} for seed {} arm {} is outside the report",
                m.column,
                m.seed,
                m.arm.name()
            )));
        }
        if grid
            .insert((m.seed, m.arm, m.column.as_str()), m.value)
            .is_some()
        {
            return Err(Error::Config(format!(
                "two values for {} at seed {} arm {}",
                m.column,
                m.seed,
                m.arm.name()
            )));
        }
    }
    let row = |seed: u64, arm: Arm| ReportRow {
        seed,
        arm,
        cells: spec
            .columns
            .iter()
            .map(|c| {
                let v = grid.get(&(seed, arm, c.as_str())).copied();
                (c.clone(), v.map_or(Cell::Absent, Cell::Value))
            })
            .collect(),
    };
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        for &arm in &spec.arms {
            rows.push(row(seed, arm));
        }
    }
    let means = spec
        .arms
        .iter()
        .map(|&arm| ReportRow {
            seed: 0,
            arm,
            cells: spec
                .columns
                .iter()
                .map(|c| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.arm == arm)
                        .filter_map(|r| r.cells[c].value())
                        .collect();
                    let cell = if vals.is_empty() {
                        Cell::Absent
                    } else {
                        Cell::Value(vals.iter().sum::<f64>() / vals.len() as f64)
                    };
                    (c.clone(), cell)
                })
                .collect(),
        })
        .collect();
    Ok(EvalReport {
        experiment: spec.experiment.clone(),
        dataset: spec.dataset.clone(),
        columns: spec.columns.clone(),
        rows,
        means,
    })
}

impl EvalReport {
    pub fn cell(&self, seed: u64, arm: Arm, column: &str) -> Cell {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.arm == arm)
            .and_then(|r| r.cells.get(column).copied())
            .unwrap_or(Cell::Absent)
    }

    pub fn mean(&self, arm: Arm, column: &str) -> Cell {
        self.means
            .iter()
            .find(|r| r.arm == arm)
            .and_then(|r| r.cells.get(column).copied())
            .unwrap_or(Cell::Absent)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    /// One line per seed and arm, columns in spec order.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["seed".to_string(), "arm".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut line = vec![r.seed.to_string(), r.arm.name().to_string()];
            line.extend(self.columns.iter().map(|c| r.cells[c].text()));
            w.write_record(&line)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("report.json"), &self.to_json()?)?;
        write_atomic(&dir.join("report.csv"), &self.to_csv()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(arms: Vec<Arm>, columns: &[&str]) -> ReportSpec {
        ReportSpec {
            experiment: "t".into(),
            dataset: "d".into(),
            seeds: vec![1],
            arms,
            columns: columns.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn two_arms_by_five_attacks() {
        let cols = ["nsh", "mlleaks", "adaptive", "blindmi", "gap"];
        let s = spec(vec![Arm::None, Arm::Full], &cols);
        let ms: Vec<Measurement> = [Arm::None, Arm::Full]
            .iter()
            .flat_map(|&a| cols.iter().map(move |c| Measurement::new(1, a, *c, 0.5)))
            .collect();
        let r = assemble_report(&s, &ms).unwrap();
        let cells: usize = r.rows.iter().map(|row| row.cells.len()).sum();
        assert_eq!(cells, 10);
        assert!(r
            .rows
            .iter()
            .all(|row| row.cells.values().all(|c| *c == Cell::Value(0.5))));
    }

    #[test]
    fn missing_cells_are_marked() {
        let s = spec(Arm::ALL.to_vec(), &["gap", "inversion_error"]);
        let r = assemble_report(&s, &[Measurement::new(1, Arm::Full, "gap", 0.51)]).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.cell(1, Arm::Full, "gap"), Cell::Value(0.51));
        assert_eq!(r.cell(1, Arm::None, "gap"), Cell::Absent);
        assert_eq!(r.mean(Arm::Reformer, "inversion_error"), Cell::Absent);
        let json = String::from_utf8(r.to_json().unwrap()).unwrap();
        assert!(json.contains("\"absent\""));
        let csv = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().next(), Some("seed,arm,gap,inversion_error"));
        assert!(csv.contains("1,full,0.51,absent"));
        let back: EvalReport = serde_json::from_slice(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn stray_or_duplicate_measurements_are_rejected() {
        let s = spec(vec![Arm::None], &["gap"]);
        assert!(assemble_report(&s, &[Measurement::new(2, Arm::None, "gap", 0.5)]).is_err());
        assert!(assemble_report(&s, &[Measurement::new(1, Arm::None, "nsh", 0.5)]).is_err());
        let twice = [
            Measurement::new(1, Arm::None, "gap", 0.5),
            Measurement::new(1, Arm::None, "gap", 0.6),
        ];
        assert!(assemble_report(&s, &twice).is_err());
    }

    #[test]
    fn records_map_to_headline_columns() {
        let rec = AttackRecord {
            attack: "transfer".into(),
            target_arm: Arm::Full,
            accuracy: Some(0.6),
            auc: Some(0.49),
            threshold: Some(0.3),
            seed: 4,
            wall_clock: 1.0,
            note: None,
        };
        assert_eq!(
            Measurement::from_record(&rec),
            Some(Measurement::new(4, Arm::Full, "transfer_auc", 0.49))
        );
        assert_eq!(
            Measurement::from_record(&crate::attacks::boundary_attack(Arm::None, 1)),
            None
        );
    }
}
