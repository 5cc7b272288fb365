//! Run trace: one structured record per event, serialized as NDJSON.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Slot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub slot: Slot,
    pub party: String,
    pub kind: String,
    pub detail: Value,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn push(&mut self, slot: Slot, party: impl ToString, kind: &str, detail: Value) {
        debug_assert!(self.events.last().is_none_or(|e| e.slot <= slot));
        self.events.push(Event { slot, party: party.to_string(), kind: kind.to_string(), detail });
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = (usize, &'a Event)> + 'a {
        self.events.iter().enumerate().filter(move |(_, e)| e.kind == kind)
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<Self, serde_json::Error> {
        let mut events = Vec::new();
        for line in r.lines() {
            let line = line.map_err(serde_json::Error::io)?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line)?);
        }
        Ok(Trace { events })
    }

    pub fn from_ndjson(s: &str) -> Result<Self, serde_json::Error> {
        Self::read_ndjson(s.as_bytes())
    }
}
