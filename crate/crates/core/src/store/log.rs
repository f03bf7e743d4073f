use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{io_err, read_json, EventBody, Phase, RunManifest, SimEvent, StoreError, EVENTS_FILE, MANIFEST_FILE, SCHEMA_VERSION};

/// Append-only, totally ordered event log. Events are kept in memory and,
/// when backed by a file, streamed to it as JSON Lines.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<SimEvent>,
    writer: Option<BufWriter<File>>,
    written: usize,
    closed: bool,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates a new log file; refuses to overwrite an existing one.
    pub fn create(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().write(true).create_new(true).open(path).map_err(io_err(path))?;
        Ok(EventLog { writer: Some(BufWriter::new(file)), ..Self::default() })
    }

    pub fn append(&mut self, round: u32, phase: Phase, body: EventBody) -> Result<u64, StoreError> {
        if self.closed {
            return Err(StoreError::RunClosed);
        }
        if !body.legal_in(phase) {
            return Err(StoreError::IllegalPhase { kind: body.kind(), phase });
        }
        let seq = self.events.len() as u64 + 1;
        self.events.push(SimEvent { seq, schema_version: SCHEMA_VERSION, round, phase, body });
        Ok(seq)
    }

    pub fn append_all(
        &mut self,
        round: u32,
        phase: Phase,
        bodies: impl IntoIterator<Item = EventBody>,
    ) -> Result<(), StoreError> {
        for b in bodies {
            self.append(round, phase, b)?;
        }
        Ok(())
    }

    /// Writes pending events to the backing file; called at phase barriers.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        if let Some(w) = self.writer.as_mut() {
            let map = |source| StoreError::Io { path: EVENTS_FILE.into(), source };
            for ev in &self.events[self.written..] {
                serde_json::to_writer(&mut *w, ev).map_err(|e| map(e.into()))?;
                w.write_all(b"\n").map_err(map)?;
            }
            w.flush().map_err(map)?;
        }
        self.written = self.events.len();
        Ok(())
    }

    /// Flushes and closes the log; later appends fail with `RunClosed`.
    pub fn finalize(&mut self) -> Result<(), StoreError> {
        if self.closed {
            return Ok(());
        }
        self.flush()?;
        self.writer = None;
        self.closed = true;
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<SimEvent> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Reads and validates an event log file.
pub fn load_events(path: &Path) -> Result<Vec<SimEvent>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out: Vec<SimEvent> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let expected = out.last().map_or(1, |e| e.seq + 1);
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| StoreError::CorruptLine { seq: expected, line: i + 1, message: e.to_string() })?;
        if let Some(v) = value.get("schema_version").and_then(|v| v.as_u64()) {
            if v != u64::from(SCHEMA_VERSION) {
                return Err(StoreError::SchemaVersionMismatch { found: v as u32, expected: SCHEMA_VERSION });
            }
        }
        let ev: SimEvent = serde_json::from_value(value)
            .map_err(|e| StoreError::CorruptLine { seq: expected, line: i + 1, message: e.to_string() })?;
        if ev.seq != expected {
            return Err(StoreError::OutOfOrder { previous: expected.wrapping_sub(1), found: ev.seq });
        }
        if !ev.body.legal_in(ev.phase) {
            return Err(StoreError::IllegalPhase { kind: ev.body.kind(), phase: ev.phase });
        }
        out.push(ev);
    }
    Ok(out)
}

/// Loads a run directory's manifest and its full event sequence.
pub fn load_run(dir: &Path) -> Result<(RunManifest, Vec<SimEvent>), StoreError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(StoreError::MissingManifest(dir.to_path_buf()));
    }
    let manifest: RunManifest = read_json(&manifest_path)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(StoreError::SchemaVersionMismatch { found: manifest.schema_version, expected: SCHEMA_VERSION });
    }
    let events_path = dir.join(EVENTS_FILE);
    if !events_path.is_file() {
        return Err(StoreError::MissingEvents(dir.to_path_buf()));
    }
    Ok((manifest, load_events(&events_path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::AgentId;
    use std::fs;

    fn warn(i: usize) -> EventBody {
        EventBody::Warning { message: format!("w{i}") }
    }

    #[test]
    fn append_assigns_dense_seq_and_closes() {
        let mut log = EventLog::in_memory();
        assert_eq!(log.append(0, Phase::Persona, warn(0)).unwrap(), 1);
        assert_eq!(log.append(1, Phase::Invite, warn(1)).unwrap(), 2);
        log.finalize().unwrap();
        assert!(matches!(log.append(1, Phase::Invite, warn(2)), Err(StoreError::RunClosed)));
    }

    #[test]
    fn illegal_phase_rejected() {
        let mut log = EventLog::in_memory();
        let ev = EventBody::Invite { from: AgentId::new("a"), to: None };
        assert!(matches!(log.append(1, Phase::Survey, ev), Err(StoreError::IllegalPhase { .. })));
        assert!(log.is_empty());
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(EVENTS_FILE);
        let mut log = EventLog::create(&path).unwrap();
        for i in 0..10_000 {
            log.append(0, Phase::Persona, warn(i)).unwrap();
            if i % 1000 == 0 {
                log.flush().unwrap();
            }
        }
        log.finalize().unwrap();
        let back = load_events(&path).unwrap();
        assert_eq!(back.len(), 10_000);
        assert_eq!(back.as_slice(), log.events());
        assert!(EventLog::create(&path).is_err());

        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let cut = &lines[7][..lines[7].len() / 2];
        lines[7] = cut;
        fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(load_events(&path), Err(StoreError::CorruptLine { seq: 8, line: 8, .. })));
    }

    #[test]
    fn schema_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(EVENTS_FILE);
        fs::write(
            &path,
            r#"{"seq":1,"schema_version":99,"round":0,"phase":"Persona","kind":"Warning","payload":{"message":"x"}}"#,
        )
        .unwrap();
        assert!(matches!(
            load_events(&path),
            Err(StoreError::SchemaVersionMismatch { found: 99, expected: SCHEMA_VERSION })
        ));
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_run(dir.path()), Err(StoreError::MissingManifest(_))));
    }
}
