use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::StlError;

/// One global state: named entities with planar positions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub entities: BTreeMap<String, [f64; 2]>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, pos: [f64; 2]) -> Self {
        self.entities.insert(name.into(), pos);
        self
    }

    pub fn position(&self, name: &str) -> Result<[f64; 2], StlError> {
        self.entities
            .get(name)
            .copied()
            .ok_or_else(|| StlError::MissingEntity(name.to_string()))
    }
}

/// Time-indexed sequence of frames `s_0 .. s_T`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    frames: Vec<Frame>,
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    t: usize,
    entities: BTreeMap<String, [f64; 2]>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_frames(frames: Vec<Frame>) -> Self {
        Trajectory { frames }
    }

    pub fn push(&mut self, frame: Frame) {
        self.frames.push(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// The prefix `s_0 .. s_t`, exactly `t + 1` frames.
    pub fn prefix(&self, t: usize) -> &[Frame] {
        &self.frames[..=t]
    }

    /// Reads a JSON Lines trace. Each line carries `t` and `entities`; other
    /// fields are ignored so episode records can be monitored directly.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, StlError> {
        let mut frames = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| StlError::Trace { line: lineno + 1, msg: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TraceLine = serde_json::from_str(&line)
                .map_err(|e| StlError::Trace { line: lineno + 1, msg: e.to_string() })?;
            if rec.t != frames.len() {
                return Err(StlError::Trace {
                    line: lineno + 1,
                    msg: format!("expected t = {}, found {}", frames.len(), rec.t),
                });
            }
            frames.push(Frame { entities: rec.entities });
        }
        Ok(Trajectory { frames })
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for (t, f) in self.frames.iter().enumerate() {
            let line = TraceLine { t, entities: f.entities.clone() };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl std::ops::Deref for Trajectory {
    type Target = [Frame];

    fn deref(&self) -> &[Frame] {
        &self.frames
    }
}
