//! JSON-lines cache files.
//!
//! First line is a header `{"version":1,"frame":"sim",...}`, then one trace per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExecutionTrace, ParamBounds, TraceCache, TraceError};

pub const FORMAT_VERSION: u32 = 1;
pub const FRAME: &str = "sim";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    frame: String,
    #[serde(default)]
    bounds: ParamBounds,
}

/// Serializes a cache to JSON-lines text.
pub fn cache_to_string(cache: &TraceCache) -> String {
    let header = Header {
        version: FORMAT_VERSION,
        frame: FRAME.to_string(),
        bounds: *cache.bounds(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for t in cache.traces() {
        out.push_str(&serde_json::to_string(t).expect("trace serializes"));
        out.push('\n');
    }
    out
}

pub fn cache_from_str(text: &str) -> Result<TraceCache, TraceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| TraceError::Store("empty cache file (missing header)".into()))?;
    let header: Header = serde_json::from_str(first)
        .map_err(|e| TraceError::Store(format!("line 1: bad header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(TraceError::Store(format!(
            "unsupported cache version {} (expected {FORMAT_VERSION})",
            header.version
        )));
    }
    if header.frame != FRAME {
        return Err(TraceError::Store(format!(
            "unsupported coordinate frame '{}' (expected '{FRAME}')",
            header.frame
        )));
    }
    let traces = lines
        .map(|(i, line)| {
            serde_json::from_str::<ExecutionTrace>(line)
                .map_err(|e| TraceError::Store(format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    TraceCache::from_stored(traces, header.bounds)
}

pub fn cache_save(cache: &TraceCache, path: &Path) -> Result<(), TraceError> {
    let mut file = fs::File::create(path)
        .map_err(|e| TraceError::Store(format!("{}: {e}", path.display())))?;
    file.write_all(cache_to_string(cache).as_bytes())
        .map_err(|e| TraceError::Store(format!("{}: {e}", path.display())))
}

pub fn cache_load(path: &Path) -> Result<TraceCache, TraceError> {
    let text = fs::read_to_string(path)
        .map_err(|e| TraceError::Store(format!("{}: {e}", path.display())))?;
    cache_from_str(&text)
}
