//! Parser for University of Wyoming upper-air soundings (TEXT:LIST output).
//!
//! The data table is fixed width, seven characters per column:
//!
//! ```text
//! -----------------------------------------------------------------------------
//!    PRES   HGHT   TEMP   DWPT   RELH   MIXR   DRCT   SKNT   THTA   THTE   THTV
//!     hPa     m      C      C      %    g/kg    deg   knot     K      K      K
//! -----------------------------------------------------------------------------
//!  1000.0    111   12.0   10.5     91   8.05    150     10  286.3  309.1  287.7
//! ```
//!
//! Only PRES, HGHT, TEMP and MIXR are kept. Rows missing any of them are
//! skipped and counted; upper levels routinely lack humidity. Column spans are
//! taken from the header itself, so blank cells never shift later fields the
//! way a whitespace split would.

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::GeoPoint;

const COLUMN_WIDTH: usize = 7;
const KELVIN_OFFSET: f64 = 273.15;
const RULE: &str = "-----------------------------------------------------------------------------";

#[derive(Debug, Error)]
pub enum SoundingError {
    #[error("no header: column-header block (PRES HGHT TEMP ... MIXR) not found")]
    NoHeader,
    #[error("header lacks required column {0}")]
    MissingColumn(&'static str),
    #[error("no parseable data rows")]
    NoData,
    #[error("line {line}: cannot parse {column} value {value:?}")]
    BadField {
        line: usize,
        column: &'static str,
        value: String,
    },
    #[error("line {line}: {reason}")]
    InvalidLevel { line: usize, reason: String },
    #[error("heights not strictly increasing at level {index} ({height_m} m)")]
    NonMonotonic { index: usize, height_m: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One retained radiosonde level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundingLevel {
    pub pressure_hpa: f64,
    pub height_m_asl: f64,
    pub temperature_k: f64,
    /// Water vapour mixing ratio, g/kg.
    pub mixing_ratio_g_kg: f64,
}

impl SoundingLevel {
    fn check(&self) -> Result<(), String> {
        let all_finite = [
            self.pressure_hpa,
            self.height_m_asl,
            self.temperature_k,
            self.mixing_ratio_g_kg,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err("non-finite value".into());
        }
        if self.pressure_hpa <= 0.0 {
            return Err(format!("pressure must be positive, got {} hPa", self.pressure_hpa));
        }
        if self.temperature_k <= 0.0 {
            return Err(format!("temperature must be positive, got {} K", self.temperature_k));
        }
        if self.mixing_ratio_g_kg < 0.0 {
            return Err(format!(
                "mixing ratio must be non-negative, got {} g/kg",
                self.mixing_ratio_g_kg
            ));
        }
        Ok(())
    }
}

/// A radiosonde profile with levels strictly increasing in height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sounding {
    /// Station identifier; empty when neither the file nor the caller gave one.
    pub station_id: String,
    pub launch_time: Option<DateTime<Utc>>,
    pub station_location: Option<GeoPoint>,
    pub station_elevation_m: Option<f64>,
    /// Data rows dropped because a required field was blank.
    pub skipped_rows: usize,
    levels: Vec<SoundingLevel>,
}

impl Sounding {
    pub fn new(station_id: impl Into<String>, levels: Vec<SoundingLevel>) -> Result<Self, SoundingError> {
        for (i, level) in levels.iter().enumerate() {
            level
                .check()
                .map_err(|reason| SoundingError::InvalidLevel { line: i + 1, reason })?;
        }
        check_monotonic(&levels)?;
        Ok(Sounding {
            station_id: station_id.into(),
            launch_time: None,
            station_location: None,
            station_elevation_m: None,
            skipped_rows: 0,
            levels,
        })
    }

    pub fn levels(&self) -> &[SoundingLevel] {
        &self.levels
    }

    /// Ground elevation of the launch site: the reported station elevation,
    /// else the location's elevation, else the lowest level.
    pub fn surface_elevation_m(&self) -> Option<f64> {
        self.station_elevation_m
            .or_else(|| self.station_location.and_then(|p| p.elevation_m_asl()))
            .or_else(|| self.levels.first().map(|l| l.height_m_asl))
    }
}

fn check_monotonic(levels: &[SoundingLevel]) -> Result<(), SoundingError> {
    for (i, w) in levels.windows(2).enumerate() {
        if w[1].height_m_asl <= w[0].height_m_asl {
            return Err(SoundingError::NonMonotonic {
                index: i + 1,
                height_m: w[1].height_m_asl,
            });
        }
    }
    Ok(())
}

struct Columns {
    pres: (usize, usize),
    hght: (usize, usize),
    temp: (usize, usize),
    mixr: (usize, usize),
}

fn locate_columns(header: &str) -> Option<Result<Columns, SoundingError>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in header.char_indices().chain(std::iter::once((header.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push((&header[s..i], i));
                start = None;
            }
            _ => {}
        }
    }
    let names: Vec<&str> = spans.iter().map(|(n, _)| *n).collect();
    if !(names.contains(&"PRES") && names.contains(&"HGHT")) {
        return None;
    }
    let find = |name: &'static str| {
        spans
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, end)| (end.saturating_sub(COLUMN_WIDTH), end))
            .ok_or(SoundingError::MissingColumn(name))
    };
    Some((|| {
        Ok(Columns {
            pres: find("PRES")?,
            hght: find("HGHT")?,
            temp: find("TEMP")?,
            mixr: find("MIXR")?,
        })
    })())
}

fn is_rule(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && t.chars().all(|c| c == '-')
}

fn cell(line: &str, (start, end): (usize, usize)) -> &str {
    let end = end.min(line.len());
    if start >= end {
        return "";
    }
    line.get(start..end).unwrap_or("").trim()
}

fn field(line: &str, span: (usize, usize), column: &'static str, line_no: usize) -> Result<Option<f64>, SoundingError> {
    let raw = cell(line, span);
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|_| SoundingError::BadField {
        line: line_no,
        column,
        value: raw.to_string(),
    })
}

fn strip_tags(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_tag = false;
    for c in line.chars() {
        match c {
            '<' => in_tag = true,
            '>' => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out
}

/// Title line: `16045 LIPI Rivolto Observations at 12Z 14 Feb 2020`.
fn parse_title(line: &str) -> Option<(Option<String>, Option<DateTime<Utc>>)> {
    let text = strip_tags(line);
    let (head, tail) = text.split_once("Observations at")?;
    let mut tokens = head.split_whitespace();
    let number = tokens.next();
    let ident = tokens
        .next()
        .filter(|t| t.chars().all(|c| c.is_ascii_alphanumeric()) && t.chars().any(|c| c.is_ascii_alphabetic()));
    let id = ident.or(number).map(str::to_string);
    let time = NaiveDateTime::parse_from_str(&format!("{} 00", tail.trim()), "%HZ %d %b %Y %M")
        .ok()
        .map(|t| Utc.from_utc_datetime(&t));
    Some((id, time))
}

#[derive(Default)]
struct StationInfo {
    id: Option<String>,
    time: Option<DateTime<Utc>>,
    lat: Option<f64>,
    lon: Option<f64>,
    elevation: Option<f64>,
}

fn parse_station_info(lines: &[&str]) -> StationInfo {
    let mut info = StationInfo::default();
    for line in lines {
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match key.trim() {
            "Station identifier" => info.id = Some(value.to_string()),
            "Station latitude" => info.lat = value.parse().ok(),
            "Station longitude" => info.lon = value.parse().ok(),
            "Station elevation" => info.elevation = value.parse().ok(),
            // yymmdd/hhmm
            "Observation time" => {
                info.time = NaiveDateTime::parse_from_str(value, "%y%m%d/%H%M")
                    .ok()
                    .map(|t| Utc.from_utc_datetime(&t))
            }
            _ => {}
        }
    }
    info
}

/// Parse a Wyoming TEXT:LIST sounding, with or without its HTML wrapper.
pub fn parse_wyoming_sounding(text: &str) -> Result<Sounding, SoundingError> {
    let lines: Vec<&str> = text.lines().collect();
    let (header_idx, columns) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| locate_columns(l).map(|c| (i, c)))
        .ok_or(SoundingError::NoHeader)?;
    let columns = columns?;

    let title = lines[..header_idx].iter().rev().find_map(|l| parse_title(l));

    // Units line and closing rule.
    let mut i = header_idx + 1;
    while i < lines.len() && i <= header_idx + 2 && !looks_like_data(lines[i]) {
        i += 1;
    }

    let mut levels = Vec::new();
    let mut skipped = 0;
    while i < lines.len() {
        let line = lines[i];
        if is_rule(line) || line.trim_start().starts_with('<') || line.trim().is_empty() {
            break;
        }
        let line_no = i + 1;
        let values = (
            field(line, columns.pres, "PRES", line_no)?,
            field(line, columns.hght, "HGHT", line_no)?,
            field(line, columns.temp, "TEMP", line_no)?,
            field(line, columns.mixr, "MIXR", line_no)?,
        );
        match values {
            (Some(p), Some(h), Some(t), Some(r)) => {
                let level = SoundingLevel {
                    pressure_hpa: p,
                    height_m_asl: h,
                    temperature_k: t + KELVIN_OFFSET,
                    mixing_ratio_g_kg: r,
                };
                level
                    .check()
                    .map_err(|reason| SoundingError::InvalidLevel { line: line_no, reason })?;
                levels.push(level);
            }
            _ => skipped += 1,
        }
        i += 1;
    }
    if levels.is_empty() {
        return Err(SoundingError::NoData);
    }
    check_monotonic(&levels)?;

    let info = parse_station_info(&lines[i..]);
    let (title_id, title_time) = title.unwrap_or((None, None));
    let station_location = match (info.lat, info.lon) {
        (Some(lat), Some(lon)) => GeoPoint::new(lat, lon).ok().map(|p| match info.elevation {
            Some(e) => p.with_elevation(e),
            None => p,
        }),
        _ => None,
    };
    if skipped > 0 {
        log::debug!("skipped {skipped} sounding rows with blank required fields");
    }
    Ok(Sounding {
        station_id: info.id.or(title_id).unwrap_or_default(),
        launch_time: title_time.or(info.time),
        station_location,
        station_elevation_m: info.elevation,
        skipped_rows: skipped,
        levels,
    })
}

fn looks_like_data(line: &str) -> bool {
    line.trim_start()
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '.')
        && !is_rule(line)
}

/// Render a sounding back into the fixed-width layout. Only the retained
/// columns are filled; the others are left blank.
pub fn write_wyoming_sounding(s: &Sounding) -> String {
    let mut out = String::new();
    let id = if s.station_id.is_empty() { "UNKNOWN" } else { s.station_id.as_str() };
    match s.launch_time {
        Some(t) => out.push_str(&format!("{id} Observations at {}\n", t.format("%HZ %d %b %Y"))),
        None => out.push_str(&format!("{id} Observations\n")),
    }
    out.push_str(RULE);
    out.push('\n');
    out.push_str("   PRES   HGHT   TEMP   DWPT   RELH   MIXR   DRCT   SKNT   THTA   THTE   THTV\n");
    out.push_str("    hPa     m      C      C      %    g/kg    deg   knot     K      K      K \n");
    out.push_str(RULE);
    out.push('\n');
    for l in &s.levels {
        out.push_str(&format!(
            "{:7.1}{:7.0}{:7.1}{:14}{:7.2}\n",
            l.pressure_hpa,
            l.height_m_asl,
            l.temperature_k - KELVIN_OFFSET,
            "",
            l.mixing_ratio_g_kg
        ));
    }
    out.push_str("\nStation information and sounding indices\n");
    if !s.station_id.is_empty() {
        out.push_str(&format!("{:>43}: {}\n", "Station identifier", s.station_id));
    }
    if let Some(p) = s.station_location {
        out.push_str(&format!("{:>43}: {}\n", "Station latitude", p.latitude_deg()));
        out.push_str(&format!("{:>43}: {}\n", "Station longitude", p.longitude_deg()));
    }
    if let Some(e) = s.station_elevation_m {
        out.push_str(&format!("{:>43}: {}\n", "Station elevation", e));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "\
-----------------------------------------------------------------------------
   PRES   HGHT   TEMP   DWPT   RELH   MIXR   DRCT   SKNT   THTA   THTE   THTV
    hPa     m      C      C      %    g/kg    deg   knot     K      K      K
-----------------------------------------------------------------------------
";

    #[test]
    fn decodes_a_single_row_by_hand() {
        let text = format!(
            "{HEADER} 1000.0    111   12.0   10.5     91   8.05    150     10  286.3  309.1  287.7\n"
        );
        let s = parse_wyoming_sounding(&text).unwrap();
        assert_eq!(s.levels().len(), 1);
        let l = s.levels()[0];
        assert_eq!(l.pressure_hpa, 1000.0);
        assert_eq!(l.height_m_asl, 111.0);
        assert_eq!(l.temperature_k, 12.0 + 273.15);
        assert!((l.temperature_k - 285.15).abs() < 1e-12);
        assert_eq!(l.mixing_ratio_g_kg, 8.05);
        assert_eq!(s.skipped_rows, 0);
    }

    #[test]
    fn blank_mixing_ratio_row_is_skipped() {
        let text = format!(
            "{HEADER} 1000.0    111   12.0   10.5     91   8.05    150     10  286.3  309.1  287.7
  925.0    795    7.4                         200     15  287.6
  850.0   1523    2.2   -4.8     60   3.20    240     20  289.5  299.0  290.1
"
        );
        let s = parse_wyoming_sounding(&text).unwrap();
        assert_eq!(s.levels().len(), 2);
        assert_eq!(s.skipped_rows, 1);
        assert_eq!(s.levels()[1].height_m_asl, 1523.0);
    }

    #[test]
    fn short_below_ground_row_is_skipped() {
        let text = format!(
            "{HEADER} 1000.0    160\n  974.0    386    6.4    0.9     68   4.20    100      3  281.7  292.4  282.4\n"
        );
        let s = parse_wyoming_sounding(&text).unwrap();
        assert_eq!(s.levels().len(), 1);
        assert_eq!(s.skipped_rows, 1);
    }

    #[test]
    fn empty_file_has_no_header() {
        assert!(matches!(parse_wyoming_sounding(""), Err(SoundingError::NoHeader)));
        let err = parse_wyoming_sounding("").unwrap_err();
        assert!(err.to_string().starts_with("no header"));
    }

    #[test]
    fn header_without_rows() {
        assert!(matches!(parse_wyoming_sounding(HEADER), Err(SoundingError::NoData)));
    }

    #[test]
    fn descending_heights_rejected() {
        let text = format!(
            "{HEADER} 1000.0    500   12.0   10.5     91   8.05\n  990.0    400   11.0   10.5     91   8.05\n"
        );
        assert!(matches!(
            parse_wyoming_sounding(&text),
            Err(SoundingError::NonMonotonic { index: 1, .. })
        ));
    }

    #[test]
    fn garbage_cell_reports_line() {
        let text = format!("{HEADER} 1000.0    1x1   12.0   10.5     91   8.05\n");
        match parse_wyoming_sounding(&text) {
            Err(SoundingError::BadField { line: 5, column: "HGHT", .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn title_and_station_block() {
        let text = format!(
            "<H2>16045 LIPI Rivolto Observations at 12Z 14 Feb 2020</H2>\n<PRE>\n{HEADER} 1012.4     74    7.9    1.5     64   4.60\n</PRE><PRE>\n                         Station identifier: LIPI\n                           Station latitude: 45.98\n                          Station longitude: 13.05\n                          Station elevation: 74.0\n"
        );
        let s = parse_wyoming_sounding(&text).unwrap();
        assert_eq!(s.station_id, "LIPI");
        assert_eq!(s.launch_time.unwrap().to_rfc3339(), "2020-02-14T12:00:00+00:00");
        assert_eq!(s.station_elevation_m, Some(74.0));
        assert_eq!(s.station_location.unwrap().latitude_deg(), 45.98);
    }

    #[test]
    fn writer_round_trips() {
        let text = format!(
            "{HEADER} 1000.0    111   12.0   10.5     91   8.05\n  950.3    560    9.9    1.0     50   4.44\n  900.0   1010   -0.3    1.0     50   0.00\n"
        );
        let s = parse_wyoming_sounding(&text).unwrap();
        let again = parse_wyoming_sounding(&write_wyoming_sounding(&s)).unwrap();
        assert_eq!(s.levels(), again.levels());
    }

    #[test]
    fn constructor_validates() {
        let l = |h: f64| SoundingLevel {
            pressure_hpa: 1000.0,
            height_m_asl: h,
            temperature_k: 280.0,
            mixing_ratio_g_kg: 5.0,
        };
        assert!(Sounding::new("X", vec![l(0.0), l(100.0)]).is_ok());
        assert!(Sounding::new("X", vec![l(100.0), l(100.0)]).is_err());
        let mut bad = l(0.0);
        bad.mixing_ratio_g_kg = -1.0;
        assert!(Sounding::new("X", vec![bad]).is_err());
    }
}
