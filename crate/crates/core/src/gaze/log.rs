//! Gaze session log: one frame per line as seven whitespace-separated numbers
//! `t vhx vhy vhz vgx vgy vgz`. Blank lines and `#` comments are ignored.

use super::GazeFrame;
use crate::geometry::Vec3;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GazeLogError {
    #[error("line {line}: expected 7 numbers, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: {value:?} is not a number")]
    BadNumber { line: usize, value: String },
}

pub fn format_frame(f: &GazeFrame) -> String {
    format!("{} {} {} {} {} {} {}", f.t, f.v_h.x, f.v_h.y, f.v_h.z, f.v_g.x, f.v_g.y, f.v_g.z)
}

pub fn write_log(frames: &[GazeFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        let _ = writeln!(out, "{}", format_frame(f));
    }
    out
}

pub fn parse_log(text: &str) -> Result<Vec<GazeFrame>, GazeLogError> {
    let mut frames = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(GazeLogError::FieldCount { line: i + 1, found: fields.len() });
        }
        let mut v = [0.0; 7];
        for (slot, s) in v.iter_mut().zip(&fields) {
            *slot = s.parse().map_err(|_| GazeLogError::BadNumber { line: i + 1, value: s.to_string() })?;
        }
        frames.push(GazeFrame { t: v[0], v_h: Vec3::new(v[1], v[2], v[3]), v_g: Vec3::new(v[4], v[5], v[6]) });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::{simulate_gaze, HeadPose, MonitorPlane};

    #[test]
    fn log_round_trip_is_bit_exact() {
        let m = MonitorPlane::desk(640, 480, 0.0008);
        let h = HeadPose::centered(&m, 0.6);
        let frames = simulate_gaze((100.0, 100.0), &m, &h, 1.5, 25, 77).unwrap();
        let text = write_log(&frames);
        let back = parse_log(&text).unwrap();
        assert_eq!(back, frames);
        assert_eq!(write_log(&back), text);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        assert_eq!(parse_log("# hdr\n0 1 0 0 1 0\n"), Err(GazeLogError::FieldCount { line: 2, found: 6 }));
        assert!(matches!(parse_log("0 1 0 0 1 0 zz"), Err(GazeLogError::BadNumber { line: 1, .. })));
    }
}
