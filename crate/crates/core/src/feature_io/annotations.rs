use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FormatError;

/// One annotated event: `[start_sec, end_sec]` with its caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start_sec: f64,
    pub end_sec: f64,
    #[serde(default)]
    pub caption: String,
}

impl Event {
    pub fn new(start_sec: f64, end_sec: f64, caption: impl Into<String>) -> Self {
        Self {
            start_sec,
            end_sec,
            caption: caption.into(),
        }
    }
}

/// Ground-truth events for one video, sorted by start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub video_id: String,
    pub duration_sec: f64,
    pub events: Vec<Event>,
}

impl EventSet {
    /// Validates timestamps and sorts events by `(start, end)`.
    pub fn new(video_id: impl Into<String>, duration_sec: f64, events: Vec<Event>) -> Result<Self, FormatError> {
        let mut set = Self {
            video_id: video_id.into(),
            duration_sec,
            events,
        };
        set.validate()?;
        set.events
            .sort_by(|a, b| a.start_sec.total_cmp(&b.start_sec).then(a.end_sec.total_cmp(&b.end_sec)));
        Ok(set)
    }

    fn validate(&self) -> Result<(), FormatError> {
        let bad = |event: usize, message: String| FormatError::InvalidTimestamp {
            video_id: self.video_id.clone(),
            event,
            message,
        };
        let d = self.duration_sec;
        if !(d.is_finite() && d > 0.0) {
            return Err(FormatError::InvalidMetadata(format!(
                "video {:?}: duration_sec must be positive and finite, got {d}",
                self.video_id
            )));
        }
        if self.events.is_empty() {
            return Err(FormatError::InvalidMetadata(format!(
                "video {:?} has no events",
                self.video_id
            )));
        }
        for (n, e) in self.events.iter().enumerate() {
            if !(e.start_sec.is_finite() && e.end_sec.is_finite()) {
                return Err(bad(n, "non-finite timestamp".into()));
            }
            if e.start_sec < 0.0 {
                return Err(bad(n, format!("start {} is negative", e.start_sec)));
            }
            if e.start_sec >= e.end_sec {
                return Err(bad(n, format!("start {} >= end {}", e.start_sec, e.end_sec)));
            }
            if e.end_sec > d {
                return Err(bad(n, format!("end {} exceeds duration {d}", e.end_sec)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Parses annotation JSON Lines; blank lines are skipped.
pub fn parse_annotations(text: &str) -> Result<Vec<EventSet>, FormatError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: EventSet = serde_json::from_str(line).map_err(|e| FormatError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.video_id.clone()) {
            return Err(FormatError::MalformedRecord {
                line: line_no,
                message: format!("duplicate video_id {:?}", raw.video_id),
            });
        }
        out.push(EventSet::new(raw.video_id, raw.duration_sec, raw.events)?);
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<EventSet>, FormatError> {
    parse_annotations(&std::fs::read_to_string(path)?)
}

pub fn write_annotations(sets: &[EventSet], path: impl AsRef<Path>) -> Result<(), FormatError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for set in sets {
        serde_json::to_writer(&mut w, set).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_events() {
        let text = r#"{"video_id":"a","duration_sec":320,"events":[{"start_sec":10,"end_sec":30,"caption":"x"},{"start_sec":40,"end_sec":90,"caption":"y"}]}"#;
        let sets = parse_annotations(text).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].len(), 2);
        assert_eq!(sets[0].duration_sec, 320.0);
    }

    #[test]
    fn degenerate_interval() {
        let text = r#"{"video_id":"a","duration_sec":320,"events":[{"start_sec":10,"end_sec":10,"caption":"x"}]}"#;
        assert!(matches!(parse_annotations(text), Err(FormatError::InvalidTimestamp { .. })));
    }

    #[test]
    fn end_past_duration() {
        let text = r#"{"video_id":"a","duration_sec":20,"events":[{"start_sec":10,"end_sec":21}]}"#;
        assert!(matches!(parse_annotations(text), Err(FormatError::InvalidTimestamp { .. })));
    }

    #[test]
    fn events_are_sorted() {
        let text = "\n{\"video_id\":\"a\",\"duration_sec\":100,\"events\":[{\"start_sec\":50,\"end_sec\":60},{\"start_sec\":5,\"end_sec\":8},{\"start_sec\":20,\"end_sec\":30}]}\n\n";
        let sets = parse_annotations(text).unwrap();
        let starts: Vec<f64> = sets[0].events.iter().map(|e| e.start_sec).collect();
        assert_eq!(starts, vec![5.0, 20.0, 50.0]);
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_annotations("{\"video_id\":1}"),
            Err(FormatError::MalformedRecord { line: 1, .. })
        ));
        let dup = "{\"video_id\":\"a\",\"duration_sec\":5,\"events\":[{\"start_sec\":0,\"end_sec\":1}]}\n";
        assert!(matches!(
            parse_annotations(&dup.repeat(2)),
            Err(FormatError::MalformedRecord { line: 2, .. })
        ));
        assert!(parse_annotations("{\"video_id\":\"a\",\"duration_sec\":5,\"events\":[]}").is_err());
    }
}
