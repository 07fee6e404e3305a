//! Time-tag stream produced by the simulator and consumed by the analysis
//! pipeline, plus its on-disk format.
//!
//! The file is UTF-8 text: `#`-prefixed header lines carrying the full run
//! configuration as key=value pairs plus the seed, followed by one record
//! per line, `timestamp_ns,detector,pass_index`, with detector in {L, R} and
//! pass_index a positive integer or `-` for events of unknown origin (dark
//! counts). Timestamps are integer nanoseconds and non-decreasing.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{InterferometerParams, McError, Mode, SimConfig};

const MAGIC: &str = "# wvr-timetags v1";

/// Which photodiode of the knife-edge pair fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Detector {
    Left,
    Right,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::Left => "L",
            Detector::Right => "R",
        })
    }
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeTagRecord {
    /// Nanoseconds since the start of the acquisition.
    pub timestamp_ns: u64,
    pub detector: Detector,
    /// Pass on which the photon exited the dark port; `None` for dark counts.
    pub pass_index: Option<u32>,
}

/// Ordered stream of detection events together with the configuration that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagSet {
    pub metadata: SimConfig,
    pub records: Vec<TimeTagRecord>,
}

impl TimeTagSet {
    /// Total number of detection events, dark counts included.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Detection events attributable to signal photons (pass index known).
    pub fn photon_count(&self) -> usize {
        self.records.iter().filter(|r| r.pass_index.is_some()).count()
    }
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

/// Serializes a float so that parsing the text recovers the value exactly.
fn fmt_f64(v: f64) -> String {
    // Rust's shortest round-trip formatting; mark integral values explicitly
    // so the file stays self-describing.
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn write_timetags<W: Write>(tags: &TimeTagSet, dest: W) -> io::Result<()> {
    let mut w = BufWriter::new(dest);
    let m = &tags.metadata;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "# mode={}", m.mode)?;
    writeln!(w, "# seed={}", m.seed)?;
    writeln!(w, "# pulse_rate_hz={}", fmt_f64(m.source.pulse_rate_hz))?;
    writeln!(
        w,
        "# mean_photons_per_pulse={}",
        fmt_f64(m.source.mean_photons_per_pulse)
    )?;
    writeln!(
        w,
        "# acquisition_time_s={}",
        fmt_f64(m.source.acquisition_time_s)
    )?;
    writeln!(w, "# wavelength_m={}", fmt_f64(m.source.wavelength_m))?;
    writeln!(
        w,
        "# drive_frequency_hz={}",
        fmt_f64(m.drive.drive_frequency_hz)
    )?;
    writeln!(
        w,
        "# tilt_amplitude_peak_rad={}",
        fmt_f64(m.drive.tilt_amplitude_peak_rad)
    )?;
    writeln!(w, "# phi_rad={}", fmt_f64(m.interferometer.phi))?;
    writeln!(w, "# gamma={}", fmt_f64(m.interferometer.gamma))?;
    writeln!(w, "# max_passes={}", m.interferometer.max_passes)?;
    writeln!(
        w,
        "# beam_sigma_m={}",
        fmt_f64(m.interferometer.beam_sigma_m)
    )?;
    writeln!(
        w,
        "# loop_length_m={}",
        fmt_f64(m.interferometer.loop_length_m)
    )?;
    match m.interferometer.tilt_to_kick {
        Some(v) => writeln!(w, "# tilt_to_kick={}", fmt_f64(v))?,
        None => writeln!(w, "# tilt_to_kick=auto")?,
    }
    writeln!(w, "# parity_flip={}", m.interferometer.parity_flip)?;
    writeln!(
        w,
        "# conventional_lens_focal_m={}",
        fmt_f64(m.interferometer.conventional_lens_focal_m)
    )?;
    writeln!(
        w,
        "# knife_edge_position_m={}",
        fmt_f64(m.detector.knife_edge_position_m)
    )?;
    writeln!(
        w,
        "# dead_zone_width_m={}",
        fmt_f64(m.detector.dead_zone_width_m)
    )?;
    writeln!(w, "# efficiency={}", fmt_f64(m.detector.efficiency))?;
    writeln!(
        w,
        "# dark_count_rate_hz={}",
        fmt_f64(m.detector.dark_count_rate_hz)
    )?;
    writeln!(
        w,
        "# detector_sigma_m={}",
        fmt_f64(m.detector.detector_sigma_m)
    )?;
    writeln!(w, "# records={}", tags.records.len())?;
    for rec in &tags.records {
        match rec.pass_index {
            Some(p) => writeln!(w, "{},{},{}", rec.timestamp_ns, rec.detector, p)?,
            None => writeln!(w, "{},{},-", rec.timestamp_ns, rec.detector)?,
        }
    }
    w.flush()
}

pub fn write_timetags_file<P: AsRef<Path>>(tags: &TimeTagSet, path: P) -> io::Result<()> {
    write_timetags(tags, File::create(path)?)
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
#[error("time-tag format error at line {line}: {msg}")]
pub struct FormatError {
    pub line: usize,
    pub msg: String,
}

impl FormatError {
    fn new(line: usize, msg: impl Into<String>) -> Self {
        Self {
            line,
            msg: msg.into(),
        }
    }
}

struct HeaderMap {
    entries: Vec<(String, String, usize)>,
}

impl HeaderMap {
    fn take(&mut self, key: &str) -> Option<String> {
        let idx = self.entries.iter().position(|(k, _, _)| k == key)?;
        Some(self.entries.remove(idx).1)
    }

    fn required(&mut self, key: &str) -> Result<String, FormatError> {
        self.take(key)
            .ok_or_else(|| FormatError::new(0, format!("missing header key `{key}`")))
    }

    fn required_f64(&mut self, key: &str) -> Result<f64, FormatError> {
        let v = self.required(key)?;
        v.parse()
            .map_err(|_| FormatError::new(0, format!("header `{key}`: bad float `{v}`")))
    }
}

pub fn read_timetags<R: Read>(source: R) -> Result<TimeTagSet, FormatError> {
    let reader = BufReader::new(source);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| FormatError::new(1, "empty input"))?;
    let first = first.map_err(|e| FormatError::new(1, e.to_string()))?;
    if first != MAGIC {
        return Err(FormatError::new(1, format!("expected `{MAGIC}`")));
    }

    let mut headers = HeaderMap {
        entries: Vec::new(),
    };
    let mut records = Vec::new();
    let mut declared_records: Option<usize> = None;
    let mut last_ts: Option<u64> = None;

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| FormatError::new(line_no, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| FormatError::new(line_no, "header line without `=`"))?;
            if key == "records" {
                declared_records = Some(value.parse().map_err(|_| {
                    FormatError::new(line_no, format!("bad record count `{value}`"))
                })?);
            } else {
                headers
                    .entries
                    .push((key.to_string(), value.to_string(), line_no));
            }
            continue;
        }

        let mut parts = line.split(',');
        let (ts, det, pass) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => {
                return Err(FormatError::new(
                    line_no,
                    "expected `timestamp_ns,detector,pass_index`",
                ))
            }
        };
        let timestamp_ns: u64 = ts
            .parse()
            .map_err(|_| FormatError::new(line_no, format!("bad timestamp `{ts}`")))?;
        if let Some(prev) = last_ts {
            if timestamp_ns < prev {
                return Err(FormatError::new(
                    line_no,
                    format!("timestamps not monotone: {timestamp_ns} after {prev}"),
                ));
            }
        }
        last_ts = Some(timestamp_ns);
        let detector = match det {
            "L" => Detector::Left,
            "R" => Detector::Right,
            other => {
                return Err(FormatError::new(
                    line_no,
                    format!("detector must be L or R, got `{other}`"),
                ))
            }
        };
        let pass_index = if pass == "-" {
            None
        } else {
            let p: u32 = pass
                .parse()
                .map_err(|_| FormatError::new(line_no, format!("bad pass index `{pass}`")))?;
            if p == 0 {
                return Err(FormatError::new(line_no, "pass index must be >= 1"));
            }
            Some(p)
        };
        records.push(TimeTagRecord {
            timestamp_ns,
            detector,
            pass_index,
        });
    }

    if let Some(n) = declared_records {
        if n != records.len() {
            return Err(FormatError::new(
                0,
                format!("header declared {n} records, found {}", records.len()),
            ));
        }
    }

    let mode: Mode = headers
        .required("mode")?
        .parse()
        .map_err(|e: McError| FormatError::new(0, e.to_string()))?;
    let seed: u64 = {
        let v = headers.required("seed")?;
        v.parse()
            .map_err(|_| FormatError::new(0, format!("bad seed `{v}`")))?
    };
    let tilt_to_kick = match headers.required("tilt_to_kick")?.as_str() {
        "auto" => None,
        v => Some(v.parse().map_err(|_| {
            FormatError::new(0, format!("header `tilt_to_kick`: bad float `{v}`"))
        })?),
    };
    let parity_flip = match headers.required("parity_flip")?.as_str() {
        "true" => true,
        "false" => false,
        v => {
            return Err(FormatError::new(
                0,
                format!("header `parity_flip`: expected true/false, got `{v}`"),
            ))
        }
    };

    let metadata = SimConfig {
        mode,
        seed,
        source: super::SourceParams {
            pulse_rate_hz: headers.required_f64("pulse_rate_hz")?,
            mean_photons_per_pulse: headers.required_f64("mean_photons_per_pulse")?,
            acquisition_time_s: headers.required_f64("acquisition_time_s")?,
            wavelength_m: headers.required_f64("wavelength_m")?,
        },
        drive: super::MirrorDrive {
            drive_frequency_hz: headers.required_f64("drive_frequency_hz")?,
            tilt_amplitude_peak_rad: headers.required_f64("tilt_amplitude_peak_rad")?,
        },
        interferometer: InterferometerParams {
            phi: headers.required_f64("phi_rad")?,
            gamma: headers.required_f64("gamma")?,
            max_passes: {
                let v = headers.required("max_passes")?;
                v.parse()
                    .map_err(|_| FormatError::new(0, format!("bad max_passes `{v}`")))?
            },
            beam_sigma_m: headers.required_f64("beam_sigma_m")?,
            loop_length_m: headers.required_f64("loop_length_m")?,
            tilt_to_kick,
            parity_flip,
            conventional_lens_focal_m: headers.required_f64("conventional_lens_focal_m")?,
        },
        detector: super::DetectorModel {
            knife_edge_position_m: headers.required_f64("knife_edge_position_m")?,
            dead_zone_width_m: headers.required_f64("dead_zone_width_m")?,
            efficiency: headers.required_f64("efficiency")?,
            dark_count_rate_hz: headers.required_f64("dark_count_rate_hz")?,
            detector_sigma_m: headers.required_f64("detector_sigma_m")?,
        },
    };

    if let Some((key, _, line_no)) = headers.entries.first() {
        return Err(FormatError::new(
            *line_no,
            format!("unknown header key `{key}`"),
        ));
    }

    Ok(TimeTagSet { metadata, records })
}

pub fn read_timetags_file<P: AsRef<Path>>(path: P) -> Result<TimeTagSet, FormatError> {
    let file = File::open(&path).map_err(|e| FormatError::new(0, e.to_string()))?;
    read_timetags(file)
}
