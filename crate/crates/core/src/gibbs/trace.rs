use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coords, ModelState};

/// One retained sweep. Serialized labels are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    #[serde(rename = "C", with = "one_based")]
    pub clusters: Vec<usize>,
    #[serde(rename = "G", with = "one_based")]
    pub components: Vec<usize>,
    #[serde(rename = "p")]
    pub choice_probs: Vec<Vec<f64>>,
    #[serde(rename = "nu")]
    pub mixing: Vec<Vec<f64>>,
    #[serde(rename = "Z")]
    pub similarity: Vec<f64>,
    #[serde(rename = "Xbar")]
    pub coords: Vec<Coords>,
    #[serde(rename = "theta")]
    pub shrinkage: Vec<Vec<f64>>,
    pub log_joint: f64,
}

impl TraceRecord {
    pub fn from_state(iteration: usize, state: &ModelState, log_joint: f64) -> Self {
        TraceRecord {
            iteration,
            clusters: state.clusters.clone(),
            components: state.components.clone(),
            choice_probs: state.choice_probs.clone(),
            mixing: state.mixing.clone(),
            similarity: state.similarity.clone(),
            coords: state.coords.clone(),
            shrinkage: state.shrinkage.clone(),
            log_joint,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.choice_probs.len()
    }

    /// Reads a newline-delimited trace.
    pub fn read_jsonl(reader: impl std::io::BufRead) -> Result<Vec<TraceRecord>> {
        let mut out = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("trace", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: "trace".into(),
                line: n as u64 + 1,
                message: e.to_string(),
            })?;
            out.push(rec);
        }
        Ok(out)
    }
}

mod one_based {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(labels: &[usize], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(labels.iter().map(|&c| c + 1))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        raw.into_iter()
            .map(|c| {
                c.checked_sub(1)
                    .ok_or_else(|| D::Error::custom("labels start at 1"))
            })
            .collect()
    }
}

/// Receives retained sweeps and per-sweep log densities from a chain.
pub trait TraceSink {
    fn record(&mut self, record: TraceRecord) -> Result<()>;

    fn log_joint(&mut self, _iteration: usize, _value: f64) -> Result<()> {
        Ok(())
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: TraceRecord) -> Result<()> {
        self.push(record);
        Ok(())
    }
}

/// Calls a closure on every retained sweep.
pub struct FnSink<F>(pub F);

impl<F: FnMut(TraceRecord) -> Result<()>> TraceSink for FnSink<F> {
    fn record(&mut self, record: TraceRecord) -> Result<()> {
        (self.0)(record)
    }
}

/// Writes retained sweeps as JSON lines and, optionally, every sweep's log
/// density as CSV.
pub struct JsonlSink<W: Write, L: Write> {
    trace: W,
    log_joint: Option<L>,
}

impl<W: Write, L: Write> JsonlSink<W, L> {
    pub fn new(trace: W, log_joint: Option<L>) -> Result<Self> {
        let mut sink = JsonlSink { trace, log_joint };
        if let Some(w) = sink.log_joint.as_mut() {
            writeln!(w, "iteration,log_joint").map_err(|e| Error::io("log_joint.csv", e))?;
        }
        Ok(sink)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.trace
            .flush()
            .map_err(|e| Error::io("trace.jsonl", e))?;
        if let Some(w) = self.log_joint.as_mut() {
            w.flush().map_err(|e| Error::io("log_joint.csv", e))?;
        }
        Ok(())
    }
}

impl<W: Write, L: Write> TraceSink for JsonlSink<W, L> {
    fn record(&mut self, record: TraceRecord) -> Result<()> {
        serde_json::to_writer(&mut self.trace, &record)?;
        writeln!(self.trace).map_err(|e| Error::io("trace.jsonl", e))
    }

    fn log_joint(&mut self, iteration: usize, value: f64) -> Result<()> {
        match self.log_joint.as_mut() {
            Some(w) => {
                writeln!(w, "{iteration},{value}").map_err(|e| Error::io("log_joint.csv", e))
            }
            None => Ok(()),
        }
    }
}
