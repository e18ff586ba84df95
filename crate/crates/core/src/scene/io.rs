//! Scene JSON files and binary depth grids.

use super::{Scene, SceneError};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const SCENE_FORMAT_VERSION: u32 = 1;
pub const DEPTH_MAGIC: [u8; 8] = *b"HODEPTH\0";

#[derive(Debug, Error)]
pub enum FileError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("not a depth file (bad magic)")]
    BadMagic,
    #[error("depth file truncated: expected {expected} bytes of samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Invalid(#[from] SceneError),
}

impl From<serde_json::Error> for FileError {
    fn from(e: serde_json::Error) -> Self {
        FileError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    format_version: u32,
    #[serde(flatten)]
    scene: Scene,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Reads `format_version` from a JSON document and checks it.
pub fn check_version(text: &str, expected: u32) -> Result<(), FileError> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.format_version != expected {
        return Err(FileError::Version { found: probe.format_version, expected });
    }
    Ok(())
}

pub fn scene_to_json(scene: &Scene) -> String {
    serde_json::to_string_pretty(&SceneFile { format_version: SCENE_FORMAT_VERSION, scene: scene.clone() })
        .expect("scene serializes")
}

pub fn scene_from_json(text: &str) -> Result<Scene, FileError> {
    check_version(text, SCENE_FORMAT_VERSION)?;
    let file: SceneFile = serde_json::from_str(text)?;
    file.scene.validate()?;
    Ok(file.scene)
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<(), FileError> {
    std::fs::write(path, scene_to_json(scene))?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<Scene, FileError> {
    scene_from_json(&std::fs::read_to_string(path)?)
}

/// Writes a depth grid: 8-byte magic, u32 LE width, u32 LE height, then
/// row-major f32 LE samples.
pub fn write_depth<W: Write>(mut out: W, width: u32, height: u32, depth: &[f64]) -> Result<(), FileError> {
    assert_eq!(depth.len(), width as usize * height as usize, "depth grid size mismatch");
    out.write_all(&DEPTH_MAGIC)?;
    out.write_all(&width.to_le_bytes())?;
    out.write_all(&height.to_le_bytes())?;
    let mut buf = Vec::with_capacity(depth.len() * 4);
    for d in depth {
        buf.extend_from_slice(&(*d as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_depth<R: Read>(mut input: R) -> Result<(u32, u32, Vec<f32>), FileError> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(|_| FileError::BadMagic)?;
    if header[..8] != DEPTH_MAGIC {
        return Err(FileError::BadMagic);
    }
    let width = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    let height = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes"));
    let expected = width as usize * height as usize * 4;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != expected {
        return Err(FileError::Truncated { expected, found: body.len() });
    }
    let samples = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((width, height, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{default_catalog, generate_scene};

    #[test]
    fn scene_round_trip() {
        let scene = generate_scene(4, 6, &default_catalog()).unwrap();
        let text = scene_to_json(&scene);
        assert!(text.contains("\"format_version\": 1"));
        assert_eq!(scene_from_json(&text).unwrap(), scene);
    }

    #[test]
    fn version_mismatch_and_line_numbers() {
        let scene = generate_scene(4, 2, &default_catalog()).unwrap();
        let text = scene_to_json(&scene).replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(scene_from_json(&text), Err(FileError::Version { found: 9, .. })));
        let broken = scene_to_json(&scene).replacen("\"seed\"", "\"seed\" ::", 1);
        match scene_from_json(&broken) {
            Err(FileError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn depth_round_trip() {
        let depth: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
        let mut buf = Vec::new();
        write_depth(&mut buf, 4, 3, &depth).unwrap();
        assert_eq!(buf.len(), 16 + 48);
        let (w, h, back) = read_depth(buf.as_slice()).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, depth.iter().map(|d| *d as f32).collect::<Vec<_>>());
        assert!(matches!(read_depth(&buf[..20]), Err(FileError::Truncated { .. })));
        assert!(matches!(read_depth(&b"NOTDEPTH\0\0\0\0\0\0\0\0"[..]), Err(FileError::BadMagic)));
    }
}
