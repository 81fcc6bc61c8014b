//! CSV ingestion and emission of count series and trajectories.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Dataset;
use crate::ode::Trajectory;

/// How the counts in an input file are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Individual counts; divided by 1000 on load.
    Raw,
    #[default]
    Thousands,
}

impl Units {
    pub fn to_thousands(self) -> f64 {
        match self {
            Units::Raw => 1e-3,
            Units::Thousands => 1.0,
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Units::Raw => "raw",
            Units::Thousands => "thousands",
        })
    }
}

impl FromStr for Units {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" | "counts" => Ok(Units::Raw),
            "thousands" | "k" => Ok(Units::Thousands),
            other => Err(Error::Config(format!("unknown units {other:?}; expected raw or thousands"))),
        }
    }
}

const DAY_COLUMNS: [&str; 3] = ["day", "times", "time"];
const COUNT_COLUMNS: [&str; 2] = ["count", "I"];

/// Reads a `day,count` CSV. `#` lines are comments. A trajectory file
/// written by [`write_trajectory_csv`] (`times,S,I`) is also accepted; its
/// `I` column is the count.
pub fn load_dataset(path: &Path, units: Units) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, path, units)
}

pub fn parse_dataset(text: &str, path: &Path, units: Units) -> Result<Dataset> {
    let parse_error = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| parse_error(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let header_line = headers.position().map_or(1, |p| p.line());
    if headers.iter().all(str::is_empty) {
        return Err(parse_error(header_line, "missing header `day,count`".into()));
    }
    let find = |candidates: &[&str]| headers.iter().position(|h| candidates.iter().any(|c| h == *c));
    let day_col = find(&DAY_COLUMNS).ok_or_else(|| parse_error(header_line, "missing column `day`".into()))?;
    let count_col = find(&COUNT_COLUMNS).ok_or_else(|| parse_error(header_line, "missing column `count`".into()))?;

    let scale = units.to_thousands();
    let mut times: Vec<f64> = Vec::new();
    let mut observations = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| parse_error(line, format!("missing {name} value")))?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(line, format!("non-numeric {name} {raw:?}")))
        };
        let day = cell(day_col, "day")?;
        let count = cell(count_col, "count")?;
        if count < 0.0 {
            return Err(parse_error(line, format!("negative count {count}")));
        }
        if let Some(&prev) = times.last() {
            if day == prev {
                return Err(parse_error(line, format!("duplicate day {day}")));
            }
            if day < prev {
                return Err(parse_error(line, format!("days not sorted: {day} after {prev}")));
            }
        }
        times.push(day);
        observations.push(count * scale);
    }
    if times.is_empty() {
        return Err(parse_error(header_line, "no observations".into()));
    }
    let label = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(times, observations, label)
}

/// Writes `day,count` rows preceded by `#` comment lines.
pub fn write_dataset_csv(path: &Path, dataset: &Dataset, comments: &[String]) -> Result<()> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["day", "count"]).map_err(csv_io)?;
    for (t, y) in dataset.times().iter().zip(dataset.observations()) {
        writer.write_record([t.to_string(), y.to_string()]).map_err(csv_io)?;
    }
    out.push_str(&String::from_utf8(writer.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf8"));
    fs::write(path, out)?;
    Ok(())
}

/// Writes `times,<state names>` with full-precision values.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory, state_names: &[&str]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_io)?;
    let mut header = vec!["times"];
    header.extend_from_slice(state_names);
    writer.write_record(&header).map_err(csv_io)?;
    for (t, state) in trajectory.times.iter().zip(&trajectory.states) {
        let mut row = vec![t.to_string()];
        row.extend(state.iter().map(f64::to_string));
        writer.write_record(&row).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(e.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, units: Units) -> Result<Dataset> {
        parse_dataset(text, Path::new("data.csv"), units)
    }

    fn line_of(err: Error) -> u64 {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn raw_counts_become_thousands() {
        let d = parse("day,count\n0,2272.6\n1,15871.7\n", Units::Raw).unwrap();
        assert_eq!(d.observations()[0], 2272.6 * 1e-3);
        assert!((d.observations()[0] - 2.2726).abs() < 1e-12);
        assert_eq!(d.label(), "data");
    }

    #[test]
    fn comments_crlf_and_whitespace() {
        let d = parse("# source: synthetic\r\nday, count\r\n0, 1.5\r\n# mid comment\r\n1 ,2\r\n", Units::Thousands).unwrap();
        assert_eq!(d.times(), &[0.0, 1.0]);
        assert_eq!(d.observations(), &[1.5, 2.0]);
    }

    #[test]
    fn empty_data_section() {
        let err = parse("# nothing\nday,count\n", Units::Raw).unwrap_err();
        assert!(err.to_string().contains("no observations"), "{err}");
    }

    #[test]
    fn unsorted_days_name_the_line() {
        let err = parse("day,count\n0,1\n2,3\n1,4\n5,1\n", Units::Raw).unwrap_err();
        assert!(err.to_string().contains("not sorted"), "{err}");
        assert_eq!(line_of(err), 4);
    }

    #[test]
    fn duplicate_days_rejected() {
        let err = parse("day,count\n0,1\n1,3\n1,4\n", Units::Raw).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        assert_eq!(line_of(err), 4);
    }

    #[test]
    fn non_numeric_cell() {
        let err = parse("# c\nday,count\n0,1\n1,abc\n", Units::Raw).unwrap_err();
        assert!(err.to_string().contains("data.csv:4"), "{err}");
        assert!(err.to_string().contains("abc"));
    }

    #[test]
    fn negative_count() {
        assert_eq!(line_of(parse("day,count\n0,-1\n", Units::Raw).unwrap_err()), 2);
    }

    #[test]
    fn missing_columns() {
        let err = parse("day,value\n0,1\n", Units::Raw).unwrap_err();
        assert!(err.to_string().contains("missing column `count`"), "{err}");
        let err = parse("day,count\n0\n", Units::Raw).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn trajectory_header_is_accepted() {
        let d = parse("times,S,I\n0,150,2\n1,140,9\n", Units::Thousands).unwrap();
        assert_eq!(d.observations(), &[2.0, 9.0]);
    }

    #[test]
    fn units_parse() {
        assert_eq!("RAW".parse::<Units>().unwrap(), Units::Raw);
        assert_eq!("thousands".parse::<Units>().unwrap(), Units::Thousands);
        assert!("millions".parse::<Units>().is_err());
    }

    #[test]
    fn dataset_write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let d = Dataset::new(vec![0.0, 1.0, 2.5], vec![0.1 + 0.2, 1e-7, 123.456789012345], "x").unwrap();
        write_dataset_csv(&path, &d, &["synthetic".into()]).unwrap();
        let back = load_dataset(&path, Units::Thousands).unwrap();
        assert_eq!(back.times(), d.times());
        assert_eq!(back.observations(), d.observations());
        assert!(fs::read_to_string(&path).unwrap().starts_with("# synthetic\n"));
    }
}
