//! JSON-lines traces of the equilibrium search.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use qpnet::{Action, EquilibriumTrace, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iterate: Vec<f64>,
    pub depth: usize,
    pub action: String,
    /// Branch index per node (0-based branch, node order as in the file).
    pub region_choices: Vec<Option<usize>>,
}

pub fn action_name(a: Action) -> &'static str {
    match a {
        Action::Checked => "checked",
        Action::GraphBuilt => "graph_built",
        Action::NashSolved => "nash_solved",
        Action::Restarted => "restarted",
    }
}

impl From<&TraceEvent> for TraceRecord {
    fn from(e: &TraceEvent) -> Self {
        TraceRecord {
            iterate: e.iterate.clone(),
            depth: e.depth,
            action: action_name(e.action).to_string(),
            region_choices: e.region_choices.clone(),
        }
    }
}

pub fn write_jsonl<W: Write>(trace: &EquilibriumTrace, mut out: W) -> io::Result<()> {
    for e in &trace.events {
        let line = serde_json::to_string(&TraceRecord::from(e)).map_err(io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn to_jsonl(trace: &EquilibriumTrace) -> String {
    let mut buf = Vec::new();
    write_jsonl(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}
