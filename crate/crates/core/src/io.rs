//! Versioned JSON documents and the JSONL trajectory format.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::world::{parse_action, EpisodeMode, Outcome, StepRecord, Trajectory};
use crate::{Error, Result};

pub const TRAJ_SCHEMA: &str = "eccl-traj/v1";

/// Reject a document whose `schema` field is missing or different.
pub fn check_schema(v: &Value, expected: &str) -> Result<()> {
    let found = v.get("schema").and_then(Value::as_str).unwrap_or("<missing>");
    if found != expected {
        return Err(Error::Schema { expected: expected.to_string(), found: found.to_string() });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    world_id: String,
    mode: EpisodeMode,
    seed: u64,
    initial_observation: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    i: usize,
    action: String,
    obs: String,
    outcome: Outcome,
}

pub fn trajectory_to_jsonl(traj: &Trajectory) -> String {
    let header = Header {
        schema: TRAJ_SCHEMA.to_string(),
        world_id: traj.world_id.clone(),
        mode: traj.mode,
        seed: traj.seed,
        initial_observation: traj.initial_observation.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for s in &traj.steps {
        let line = Line { i: s.index, action: s.action_text.clone(), obs: s.observation.clone(), outcome: s.outcome };
        out.push_str(&serde_json::to_string(&line).expect("line serializes"));
        out.push('\n');
    }
    out
}

pub fn trajectory_from_jsonl(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(Error::Empty("trajectory file"))?;
    let v: Value = serde_json::from_str(first).map_err(|e| Error::Line { line: 1, msg: e.to_string() })?;
    check_schema(&v, TRAJ_SCHEMA)?;
    let h: Header = serde_json::from_value(v).map_err(|e| Error::Line { line: 1, msg: e.to_string() })?;
    let mut traj = Trajectory::new(h.world_id, h.mode, h.seed, h.initial_observation);
    for (n, raw) in lines {
        let line: Line = serde_json::from_str(raw).map_err(|e| Error::Line { line: n + 1, msg: e.to_string() })?;
        if line.i != traj.steps.len() + 1 {
            return Err(Error::Line { line: n + 1, msg: format!("expected step {}, found {}", traj.steps.len() + 1, line.i) });
        }
        traj.steps.push(StepRecord {
            index: line.i,
            action: parse_action(&line.action).ok(),
            action_text: line.action,
            observation: line.obs,
            outcome: line.outcome,
        });
    }
    Ok(traj)
}

pub fn persist_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    write_atomic(path, trajectory_to_jsonl(traj).as_bytes())
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    trajectory_from_jsonl(&fs::read_to_string(path)?)
}

/// Serialize `value` with a leading `schema` field.
pub fn versioned_json<T: Serialize>(schema: &str, value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("value serializes");
    let mut obj = serde_json::Map::new();
    obj.insert("schema".into(), Value::String(schema.into()));
    if let Value::Object(m) = &mut v {
        obj.extend(std::mem::take(m));
    } else {
        obj.insert("value".into(), v);
    }
    serde_json::to_string_pretty(&Value::Object(obj)).expect("json")
}

pub fn from_versioned_json<T: for<'de> Deserialize<'de>>(schema: &str, text: &str) -> Result<T> {
    let mut v: Value = serde_json::from_str(text)?;
    check_schema(&v, schema)?;
    if let Value::Object(m) = &mut v {
        m.remove("schema");
        if m.len() == 1 {
            if let Some(inner) = m.remove("value") {
                return Ok(serde_json::from_value(inner)?);
            }
        }
    }
    Ok(serde_json::from_value(v)?)
}

/// Write via a sibling temp file so readers never see a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
