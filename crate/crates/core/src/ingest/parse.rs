use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{Dataset, IngestError, TrajectoryPoint, VehicleId, VehicleTrack};
use crate::units::{frame_time, LengthUnit};

/// Rejected-row diagnostics kept verbatim; the rest are only counted.
const MAX_REJECTED_DETAILS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    /// Comma when the line contains one, otherwise runs of whitespace.
    #[default]
    Auto,
    Comma,
    Whitespace,
}

/// Zero-based column positions of the fields the pipeline reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub vehicle_id: usize,
    pub frame: usize,
    pub local_y: usize,
    pub length: usize,
    pub lane_id: usize,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub vehicle_class: Option<usize>,
    #[serde(default)]
    pub speed: Option<usize>,
    #[serde(default)]
    pub accel: Option<usize>,
    #[serde(default)]
    pub preceding: Option<usize>,
    #[serde(default)]
    pub space_headway: Option<usize>,
    /// Epoch milliseconds; used to verify the 100 ms frame interval.
    #[serde(default)]
    pub global_time: Option<usize>,
    #[serde(default)]
    pub delimiter: Delimiter,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self::ngsim()
    }
}

impl ColumnSchema {
    /// Public NGSIM column order: Vehicle_ID, Frame_ID, Total_Frames,
    /// Global_Time, Local_X, Local_Y, v_Length, v_Width, v_Class, v_Vel,
    /// v_Acc, Lane_ID, Preceding, Following, Space_Headway, Time_Headway.
    pub fn ngsim() -> Self {
        Self {
            vehicle_id: 0,
            frame: 1,
            local_y: 5,
            length: 6,
            lane_id: 11,
            width: Some(7),
            vehicle_class: Some(8),
            speed: Some(9),
            accel: Some(10),
            preceding: Some(12),
            space_headway: Some(14),
            global_time: Some(3),
            delimiter: Delimiter::Auto,
        }
    }

    fn named_columns(&self) -> Vec<(&'static str, usize)> {
        let mut cols = vec![
            ("vehicle_id", self.vehicle_id),
            ("frame", self.frame),
            ("local_y", self.local_y),
            ("length", self.length),
            ("lane_id", self.lane_id),
        ];
        let optional = [
            ("width", self.width),
            ("vehicle_class", self.vehicle_class),
            ("speed", self.speed),
            ("accel", self.accel),
            ("preceding", self.preceding),
            ("space_headway", self.space_headway),
            ("global_time", self.global_time),
        ];
        cols.extend(optional.into_iter().filter_map(|(n, c)| c.map(|c| (n, c))));
        cols
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let cols = self.named_columns();
        for (i, (name, col)) in cols.iter().enumerate() {
            if let Some((other, _)) = cols[..i].iter().find(|(_, c)| c == col) {
                return Err(IngestError::Schema(format!(
                    "fields `{other}` and `{name}` both map to column {col}"
                )));
            }
        }
        Ok(())
    }

    fn min_columns(&self) -> usize {
        self.named_columns().iter().map(|(_, c)| c + 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// One-based line number in the source.
    pub line: usize,
    pub reason: String,
}

/// Row accounting for one parse.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rows_rejected: usize,
    pub header_skipped: bool,
    /// The first rejected rows, with reasons.
    pub rejected: Vec<RejectedRow>,
}

impl IngestReport {
    fn reject(&mut self, line: usize, reason: String) {
        self.rows_rejected += 1;
        if self.rejected.len() < MAX_REJECTED_DETAILS {
            self.rejected.push(RejectedRow { line, reason });
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedDataset {
    pub dataset: Dataset,
    pub report: IngestReport,
}

struct RawRow {
    line: usize,
    point: TrajectoryPoint,
    length: f64,
    width: f64,
    class: Option<i64>,
    global_time_ms: Option<f64>,
}

struct FieldError {
    reason: String,
}

fn field<'a>(fields: &[&'a str], col: usize, name: &str) -> Result<&'a str, FieldError> {
    fields.get(col).copied().ok_or_else(|| FieldError {
        reason: format!("missing field `{name}` (column {col})"),
    })
}

fn number(fields: &[&str], col: usize, name: &str) -> Result<f64, FieldError> {
    let raw = field(fields, col, name)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(FieldError {
            reason: format!("field `{name}` (column {col}): invalid number `{raw}`"),
        }),
    }
}

fn integer(fields: &[&str], col: usize, name: &str) -> Result<i64, FieldError> {
    let raw = field(fields, col, name)?;
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(FieldError {
            reason: format!("field `{name}` (column {col}): invalid integer `{raw}`"),
        }),
    }
}

fn split_fields<'a>(line: &'a str, delimiter: Delimiter, out: &mut Vec<&'a str>) {
    out.clear();
    let comma = match delimiter {
        Delimiter::Comma => true,
        Delimiter::Whitespace => false,
        Delimiter::Auto => line.contains(','),
    };
    if comma {
        out.extend(line.split(',').map(str::trim));
    } else {
        out.extend(line.split_ascii_whitespace());
    }
}

fn parse_row(fields: &[&str], line: usize, schema: &ColumnSchema, scale: f64) -> Result<RawRow, FieldError> {
    let bad = |reason: String| FieldError { reason };
    let vehicle_id = integer(fields, schema.vehicle_id, "vehicle_id")?;
    if vehicle_id < 0 {
        return Err(bad(format!("negative vehicle id {vehicle_id}")));
    }
    let frame = integer(fields, schema.frame, "frame")?;
    let y = number(fields, schema.local_y, "local_y")? * scale;
    let length = number(fields, schema.length, "length")? * scale;
    if !(length > 0.0) {
        return Err(bad(format!("vehicle length must be positive, got {length}")));
    }
    let lane = integer(fields, schema.lane_id, "lane_id")?;
    if lane < 1 || lane > u32::MAX as i64 {
        return Err(bad(format!("lane id must be >= 1, got {lane}")));
    }
    let width = match schema.width {
        Some(c) => number(fields, c, "width")? * scale,
        None => 0.0,
    };
    let class = schema.vehicle_class.map(|c| integer(fields, c, "vehicle_class")).transpose()?;
    let speed = match schema.speed {
        Some(c) => {
            let v = number(fields, c, "speed")? * scale;
            if v < 0.0 {
                return Err(bad(format!("negative speed {v}")));
            }
            v
        }
        None => 0.0,
    };
    let accel = match schema.accel {
        Some(c) => number(fields, c, "accel")? * scale,
        None => 0.0,
    };
    let preceding_id = match schema.preceding {
        Some(c) => match integer(fields, c, "preceding")? {
            id if id > 0 => Some(id as VehicleId),
            _ => None,
        },
        None => None,
    };
    let space_headway = match schema.space_headway {
        Some(c) => {
            let h = number(fields, c, "space_headway")? * scale;
            if h < 0.0 {
                return Err(bad(format!("negative space headway {h}")));
            }
            // NGSIM writes 0 when there is no preceding vehicle.
            preceding_id.map(|_| h)
        }
        None => None,
    };
    let global_time_ms = schema.global_time.map(|c| number(fields, c, "global_time")).transpose()?;
    Ok(RawRow {
        line,
        point: TrajectoryPoint {
            vehicle_id: vehicle_id as VehicleId,
            frame,
            t: frame_time(frame),
            y,
            lane_id: lane as u32,
            speed,
            accel,
            preceding_id,
            space_headway,
        },
        length,
        width,
        class,
        global_time_ms,
    })
}

fn looks_like_header(fields: &[&str], schema: &ColumnSchema) -> bool {
    fields
        .get(schema.vehicle_id)
        .is_some_and(|f| f.parse::<f64>().is_err() && f.chars().any(|c| c.is_ascii_alphabetic()))
}

/// Parses a delimited trajectory file into SI-unit tracks.
///
/// Malformed rows are skipped and reported in [`IngestReport`]; they never
/// abort the parse. Duplicate `(vehicle, frame)` samples, a frame interval
/// other than 100 ms, and an input with no usable rows are hard errors.
pub fn parse_trajectory_file<R: BufRead>(
    mut source: R,
    schema: &ColumnSchema,
    units: LengthUnit,
) -> Result<ParsedDataset, IngestError> {
    schema.validate()?;
    let scale = units.to_meters();
    let min_cols = schema.min_columns();
    let mut report = IngestReport::default();
    let mut by_vehicle: BTreeMap<VehicleId, Vec<RawRow>> = BTreeMap::new();
    let mut first_data_line = true;
    let mut first_rejection: Option<RejectedRow> = None;

    let mut buf = String::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        if source.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = buf.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = Vec::with_capacity(24);
        split_fields(line, schema.delimiter, &mut fields);
        if first_data_line {
            first_data_line = false;
            if looks_like_header(&fields, schema) {
                report.header_skipped = true;
                continue;
            }
        }
        report.rows_read += 1;
        let parsed = if fields.len() < min_cols {
            Err(FieldError {
                reason: format!("expected at least {min_cols} columns, found {}", fields.len()),
            })
        } else {
            parse_row(&fields, line_no, schema, scale)
        };
        match parsed {
            Ok(row) => by_vehicle.entry(row.point.vehicle_id).or_default().push(row),
            Err(e) => {
                if first_rejection.is_none() {
                    first_rejection = Some(RejectedRow { line: line_no, reason: e.reason.clone() });
                }
                report.reject(line_no, e.reason);
            }
        }
    }

    if report.rows_read == 0 {
        return Err(IngestError::Empty);
    }
    if by_vehicle.is_empty() {
        let first = first_rejection.expect("rows were read but none accepted");
        return Err(IngestError::NoValidRows { line: first.line, reason: first.reason });
    }

    let mut tracks = BTreeMap::new();
    for (vehicle_id, mut rows) in by_vehicle {
        rows.sort_by_key(|r| r.point.frame);
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.point.frame == b.point.frame {
                let (first_line, second_line) = (a.line.min(b.line), a.line.max(b.line));
                return Err(IngestError::DuplicateFrame {
                    vehicle_id,
                    frame: a.point.frame,
                    first_line,
                    second_line,
                });
            }
            if let (Some(ta), Some(tb)) = (a.global_time_ms, b.global_time_ms) {
                let frames = b.point.frame - a.point.frame;
                let elapsed_ms = tb - ta;
                if (elapsed_ms - 100.0 * frames as f64).abs() > 1.0 {
                    return Err(IngestError::FrameInterval { vehicle_id, line: b.line, elapsed_ms, frames });
                }
            }
        }
        report.rows_accepted += rows.len();
        let (length, width, class) = (rows[0].length, rows[0].width, rows[0].class);
        let points = rows.into_iter().map(|r| r.point).collect();
        let mut track = VehicleTrack::new(vehicle_id, length, width, points)?;
        track.reported_class = class;
        tracks.insert(vehicle_id, track);
    }

    let mut dataset = Dataset::new(tracks.into_values());
    dataset.has_speed = schema.speed.is_some();
    dataset.has_accel = schema.accel.is_some();
    Ok(ParsedDataset { dataset, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ngsim_row(id: u64, frame: i64, y_ft: f64, lane: u32, speed: &str) -> String {
        format!(
            "{id} {frame} 100 {gt} 10.0 {y_ft} 14.5 6.0 2 {speed} 0.0 {lane} 0 0 0.0 0.0\n",
            gt = 1_113_433_000_000i64 + frame * 100
        )
    }

    #[test]
    fn converts_feet_to_meters() {
        let text = ngsim_row(1, 101, 328.084, 2, "30.0") + &ngsim_row(1, 102, 330.0, 2, "30.0");
        let parsed = parse_trajectory_file(text.as_bytes(), &ColumnSchema::ngsim(), LengthUnit::Feet).unwrap();
        let track = parsed.dataset.track(1).unwrap();
        let p = track.points()[0];
        assert!((p.y - 100.000).abs() < 5e-4);
        assert!((p.speed - 30.0 * 0.3048).abs() < 1e-12);
        assert!((track.length - 14.5 * 0.3048).abs() < 1e-12);
        assert!((p.t - 10.1).abs() < 1e-9);
        assert!((track.points()[1].t - 10.2).abs() < 1e-9);
    }

    #[test]
    fn malformed_row_is_rejected_and_parse_continues() {
        let text = ngsim_row(1, 1, 0.0, 1, "10") + &ngsim_row(1, 2, 1.0, 1, "abc") + &ngsim_row(1, 3, 2.0, 1, "10");
        let parsed = parse_trajectory_file(text.as_bytes(), &ColumnSchema::ngsim(), LengthUnit::Feet).unwrap();
        assert_eq!(parsed.report.rows_read, 3);
        assert_eq!(parsed.report.rows_accepted, 2);
        assert_eq!(parsed.report.rows_rejected, 1);
        assert_eq!(parsed.report.rejected[0].line, 2);
        assert!(parsed.report.rejected[0].reason.contains("speed"));
        assert_eq!(parsed.dataset.point_count(), 2);
    }

    #[test]
    fn duplicate_frame_lists_both_lines() {
        let text = ngsim_row(4, 7, 0.0, 1, "1") + &ngsim_row(5, 7, 0.0, 1, "1") + &ngsim_row(4, 7, 1.0, 1, "1");
        match parse_trajectory_file(text.as_bytes(), &ColumnSchema::ngsim(), LengthUnit::Feet) {
            Err(IngestError::DuplicateFrame { vehicle_id: 4, frame: 7, first_line: 1, second_line: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_trajectory_file("\n  \n".as_bytes(), &ColumnSchema::ngsim(), LengthUnit::Feet),
            Err(IngestError::Empty)
        ));
    }

    #[test]
    fn all_rows_bad_reports_first_offending_line() {
        let text = "1 2 3\n4 5 6\n";
        match parse_trajectory_file(text.as_bytes(), &ColumnSchema::ngsim(), LengthUnit::Feet) {
            Err(IngestError::NoValidRows { line: 1, reason }) => assert!(reason.contains("columns")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_and_commas() {
        let text = "Vehicle_ID,Frame_ID,Total_Frames,Global_Time,Local_X,Local_Y,v_Length,v_Width,v_Class,v_Vel,v_Acc,Lane_ID,Preceding,Following,Space_Headway,Time_Headway\n\
                    3,10,5,1000,1.0,50.0,15.0,6.0,2,20.0,0.5,4,9,0,40.0,2.0\n";
        let parsed = parse_trajectory_file(text.as_bytes(), &ColumnSchema::ngsim(), LengthUnit::Feet).unwrap();
        assert!(parsed.report.header_skipped);
        let p = parsed.dataset.track(3).unwrap().points()[0];
        assert_eq!(p.preceding_id, Some(9));
        assert!((p.space_headway.unwrap() - 40.0 * 0.3048).abs() < 1e-12);
        assert_eq!(p.lane_id, 4);
    }

    #[test]
    fn wrong_frame_interval_is_rejected() {
        let text = "1 1 2 0 0 0 15 6 2 10 0 1 0 0 0 0\n1 2 2 40 0 1 15 6 2 10 0 1 0 0 0 0\n";
        assert!(matches!(
            parse_trajectory_file(text.as_bytes(), &ColumnSchema::ngsim(), LengthUnit::Feet),
            Err(IngestError::FrameInterval { vehicle_id: 1, frames: 1, .. })
        ));
    }

    #[test]
    fn schema_with_colliding_columns_is_invalid() {
        let mut schema = ColumnSchema::ngsim();
        schema.speed = Some(schema.local_y);
        assert!(matches!(schema.validate(), Err(IngestError::Schema(_))));
    }

    #[test]
    fn missing_speed_column_marks_dataset() {
        let schema = ColumnSchema {
            vehicle_id: 0,
            frame: 1,
            local_y: 2,
            length: 3,
            lane_id: 4,
            width: None,
            vehicle_class: None,
            speed: None,
            accel: None,
            preceding: None,
            space_headway: None,
            global_time: None,
            delimiter: Delimiter::Whitespace,
        };
        let parsed = parse_trajectory_file("1 1 0.0 4.5 1\n1 2 1.0 4.5 1\n".as_bytes(), &schema, LengthUnit::Meters).unwrap();
        assert!(!parsed.dataset.has_speed);
        assert!(!parsed.dataset.has_accel);
    }
}
