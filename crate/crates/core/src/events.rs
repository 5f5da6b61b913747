//! Relational event records, histories and CSV ingestion.
//!
//! A history is a time-ordered list of directed `sender -> receiver` events
//! over densely indexed actors. External actor labels are mapped to ids in
//! order of first appearance, so any history produced by [`parse_events`] is
//! canonical and survives a write/parse round trip unchanged.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Jitter added per position inside a group of equal timestamps.
pub const TIE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActorId(pub usize);

impl ActorId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationalEvent {
    pub sender: ActorId,
    pub receiver: ActorId,
    pub time: f64,
}

impl RelationalEvent {
    pub fn new(sender: usize, receiver: usize, time: f64) -> Self {
        Self {
            sender: ActorId(sender),
            receiver: ActorId(receiver),
            time,
        }
    }
}

/// Bijection between external actor labels and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    labels: Vec<String>,
    index: HashMap<String, ActorId>,
}

impl SymbolTable {
    /// Labels `"0"`, `"1"`, ... for `n` actors.
    pub fn numeric(n: usize) -> Self {
        let mut table = Self::default();
        for i in 0..n {
            table.intern(&i.to_string());
        }
        table
    }

    pub fn intern(&mut self, label: &str) -> ActorId {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = ActorId(self.labels.len());
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<ActorId> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: ActorId) -> &str {
        &self.labels[id.0]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A validated relational event history with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHistory {
    events: Vec<RelationalEvent>,
    symbols: SymbolTable,
}

impl EventHistory {
    /// Builds a history from already-indexed events.
    ///
    /// Events must be in nondecreasing time order; equal timestamps are
    /// separated by the deterministic tie-breaking jitter.
    pub fn new(symbols: SymbolTable, mut events: Vec<RelationalEvent>) -> Result<Self, DataError> {
        let n = symbols.len();
        let mut prev = f64::NEG_INFINITY;
        for (index, e) in events.iter().enumerate() {
            if !e.time.is_finite() {
                return Err(DataError::NonFiniteTime);
            }
            if e.time < 0.0 {
                return Err(DataError::NegativeTime {
                    row: index + 1,
                    time: e.time,
                });
            }
            for id in [e.sender, e.receiver] {
                if id.0 >= n {
                    return Err(DataError::ActorOutOfRange {
                        id: id.0,
                        n_actors: n,
                    });
                }
            }
            if e.sender == e.receiver {
                return Err(DataError::SelfLoop {
                    row: index + 1,
                    actor: symbols.label(e.sender).to_string(),
                });
            }
            if e.time < prev {
                return Err(DataError::TimeRegression {
                    index,
                    time: e.time,
                    clock: prev,
                });
            }
            prev = e.time;
        }
        break_ties(&mut events);
        Ok(Self { events, symbols })
    }

    /// Builds a history from labelled rows: stable sort by time, tie-break,
    /// and assign ids in order of first appearance.
    pub fn from_rows(rows: &[RawRow]) -> Result<Self, DataError> {
        let mut order: Vec<&RawRow> = rows.iter().collect();
        order.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut symbols = SymbolTable::default();
        let mut events = Vec::with_capacity(rows.len());
        for r in order {
            if r.sender == r.receiver {
                return Err(DataError::SelfLoop {
                    row: r.row,
                    actor: r.sender.clone(),
                });
            }
            if r.time < 0.0 {
                return Err(DataError::NegativeTime {
                    row: r.row,
                    time: r.time,
                });
            }
            let s = symbols.intern(&r.sender);
            let t = symbols.intern(&r.receiver);
            events.push(RelationalEvent {
                sender: s,
                receiver: t,
                time: r.time,
            });
        }
        Self::new(symbols, events)
    }

    pub fn events(&self) -> &[RelationalEvent] {
        &self.events
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn n_actors(&self) -> usize {
        self.symbols.len()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }
}

/// Adds `k * TIE_EPSILON` to the k-th member of each group of equal times,
/// then bumps any value that still fails to exceed its predecessor.
fn break_ties(events: &mut [RelationalEvent]) {
    let mut start = 0;
    while start < events.len() {
        let t0 = events[start].time;
        let mut end = start + 1;
        while end < events.len() && events[end].time == t0 {
            end += 1;
        }
        for (k, e) in events[start..end].iter_mut().enumerate() {
            e.time = t0 + k as f64 * TIE_EPSILON;
        }
        start = end;
    }
    for i in 1..events.len() {
        if events[i].time <= events[i - 1].time {
            events[i].time = events[i - 1].time + TIE_EPSILON;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFormat {
    #[default]
    Seconds,
    Iso8601,
}

impl std::str::FromStr for TimeFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seconds" => Ok(Self::Seconds),
            "iso8601" => Ok(Self::Iso8601),
            other => Err(format!("unknown time format `{other}`")),
        }
    }
}

/// One CSV row before validation. `row` is the 1-based data row number.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub sender: String,
    pub receiver: String,
    pub time: f64,
    pub row: usize,
}

fn parse_datetime(s: &str) -> Option<f64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let utc = dt.and_utc();
            return Some(utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() as f64)
}

/// Reads `sender,receiver,time` rows without semantic validation beyond
/// the time column. Datetimes become seconds since the earliest row.
pub fn parse_rows<R: Read>(reader: R, format: TimeFormat) -> Result<Vec<RawRow>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let (mut si, mut ri, mut ti) = (None, None, None);
    for (pos, h) in headers.iter().enumerate() {
        match h {
            "sender" => si = Some(pos),
            "receiver" => ri = Some(pos),
            "time" => ti = Some(pos),
            other => return Err(DataError::UnknownColumn(other.to_string())),
        }
    }
    let si = si.ok_or(DataError::MissingColumn("sender"))?;
    let ri = ri.ok_or(DataError::MissingColumn("receiver"))?;
    let ti = ti.ok_or(DataError::MissingColumn("time"))?;

    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| DataError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let field = |i: usize, name: &str| {
            rec.get(i)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| DataError::MalformedRow {
                    row,
                    message: format!("empty {name}"),
                })
        };
        let sender = field(si, "sender")?.to_string();
        let receiver = field(ri, "receiver")?.to_string();
        let raw_time = field(ti, "time")?;
        let time = match format {
            TimeFormat::Seconds => {
                raw_time
                    .parse::<f64>()
                    .map_err(|_| DataError::MalformedRow {
                        row,
                        message: format!("invalid time `{raw_time}`"),
                    })?
            }
            TimeFormat::Iso8601 => {
                parse_datetime(raw_time).ok_or_else(|| DataError::MalformedRow {
                    row,
                    message: format!("invalid datetime `{raw_time}`"),
                })?
            }
        };
        if !time.is_finite() {
            return Err(DataError::MalformedRow {
                row,
                message: "non-finite time".into(),
            });
        }
        if format == TimeFormat::Seconds && time < 0.0 {
            return Err(DataError::NegativeTime { row, time });
        }
        rows.push(RawRow {
            sender,
            receiver,
            time,
            row,
        });
    }
    if format == TimeFormat::Iso8601 {
        let t0 = rows.iter().map(|r| r.time).fold(f64::INFINITY, f64::min);
        for r in &mut rows {
            r.time -= t0;
        }
    }
    Ok(rows)
}

/// Parses and validates an event CSV into a history sorted by time.
pub fn parse_events<R: Read>(reader: R, format: TimeFormat) -> Result<EventHistory, DataError> {
    let rows = parse_rows(reader, format)?;
    EventHistory::from_rows(&rows)
}

/// Writes the history as `sender,receiver,time` with shortest round-trip floats.
pub fn write_events<W: Write>(history: &EventHistory, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sender", "receiver", "time"])?;
    for e in history.events() {
        w.write_record([
            history.symbols().label(e.sender),
            history.symbols().label(e.receiver),
            &format!("{}", e.time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessPolicy {
    pub drop_self_loops: bool,
    pub drop_multi_recipient: bool,
}

impl Default for PreprocessPolicy {
    fn default() -> Self {
        Self {
            drop_self_loops: true,
            drop_multi_recipient: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_in: usize,
    pub dropped_self_loops: usize,
    pub dropped_multi_recipient: usize,
    pub rows_out: usize,
}

/// Email clean-up: a `(sender, timestamp)` group with more than one distinct
/// receiver is a multi-recipient message and every row of it is dropped
/// (self-addressed copies count as recipients). Remaining self-loops are
/// dropped afterwards.
pub fn preprocess_email(
    rows: &[RawRow],
    policy: PreprocessPolicy,
) -> Result<(EventHistory, PreprocessReport), DataError> {
    let mut receivers: HashMap<(&str, u64), Vec<&str>> = HashMap::new();
    for r in rows {
        let entry = receivers
            .entry((r.sender.as_str(), r.time.to_bits()))
            .or_default();
        if !entry.contains(&r.receiver.as_str()) {
            entry.push(r.receiver.as_str());
        }
    }
    let mut report = PreprocessReport {
        rows_in: rows.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(rows.len());
    for r in rows {
        if policy.drop_multi_recipient
            && receivers[&(r.sender.as_str(), r.time.to_bits())].len() > 1
        {
            report.dropped_multi_recipient += 1;
            continue;
        }
        if policy.drop_self_loops && r.sender == r.receiver {
            report.dropped_self_loops += 1;
            continue;
        }
        kept.push(r.clone());
    }
    report.rows_out = kept.len();
    let history = EventHistory::from_rows(&kept)?;
    Ok((history, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(spec: &[(&str, &str, f64)]) -> Vec<RawRow> {
        spec.iter()
            .enumerate()
            .map(|(k, &(s, r, t))| RawRow {
                sender: s.into(),
                receiver: r.into(),
                time: t,
                row: k + 1,
            })
            .collect()
    }

    #[test]
    fn parses_single_event() {
        let h = parse_events(
            "sender,receiver,time\na,b,0.5".as_bytes(),
            TimeFormat::Seconds,
        )
        .unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.n_actors(), 2);
        assert_eq!(h.events()[0].time, 0.5);
        assert_eq!(h.symbols().label(h.events()[0].sender), "a");
    }

    #[test]
    fn rejects_self_loop() {
        let err = parse_events(
            "sender,receiver,time\na,a,1.0".as_bytes(),
            TimeFormat::Seconds,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::SelfLoop { .. }), "{err}");
    }

    #[test]
    fn reports_bad_rows_and_columns() {
        let err = parse_events(
            "sender,receiver,time\na,b,1\nc,d,x".as_bytes(),
            TimeFormat::Seconds,
        )
        .unwrap_err();
        assert!(
            matches!(err, DataError::MalformedRow { row: 2, .. }),
            "{err}"
        );
        let err = parse_events(
            "sender,receiver,time\na,b,-1".as_bytes(),
            TimeFormat::Seconds,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::NegativeTime { row: 1, .. }));
        let err = parse_events(
            "sender,receiver,when\na,b,1".as_bytes(),
            TimeFormat::Seconds,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::UnknownColumn(ref c) if c == "when"));
    }

    #[test]
    fn iso_times_span_nine_months() {
        let text = "sender,receiver,time\n\
                    a,b,2010-01-02 08:00:00\n\
                    b,c,2010-05-15T12:30:00\n\
                    c,a,2010-09-30 23:59:59\n";
        let h = parse_events(text.as_bytes(), TimeFormat::Iso8601).unwrap();
        assert_eq!(h.events()[0].time, 0.0);
        let end = h.end_time();
        assert!(end > 2.2e7 && end < 2.4e7, "{end}");
    }

    #[test]
    fn ties_are_jittered_in_row_order() {
        let h = EventHistory::from_rows(&rows(&[
            ("a", "b", 1.0),
            ("c", "d", 1.0),
            ("b", "a", 1.0),
            ("a", "c", 0.5),
        ]))
        .unwrap();
        let times: Vec<f64> = h.events().iter().map(|e| e.time).collect();
        assert_eq!(
            times,
            vec![0.5, 1.0, 1.0 + TIE_EPSILON, 1.0 + 2.0 * TIE_EPSILON]
        );
        // stable: (a,b) then (c,d) then (b,a)
        assert_eq!(h.symbols().label(h.events()[2].sender), "c");
    }

    #[test]
    fn preprocess_drops_multi_recipient_groups() {
        let (h, rep) = preprocess_email(
            &rows(&[("a", "b", 5.0), ("a", "c", 5.0)]),
            PreprocessPolicy::default(),
        )
        .unwrap();
        assert!(h.is_empty());
        assert_eq!(rep.dropped_multi_recipient, 2);

        let (h, rep) = preprocess_email(
            &rows(&[("a", "b", 5.0), ("a", "b", 9.0)]),
            PreprocessPolicy::default(),
        )
        .unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(rep.rows_out, 2);

        let (h, rep) = preprocess_email(
            &rows(&[("a", "a", 2.0), ("b", "c", 3.0)]),
            PreprocessPolicy::default(),
        )
        .unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.events()[0].time, 3.0);
        assert_eq!(
            rep,
            PreprocessReport {
                rows_in: 2,
                dropped_self_loops: 1,
                dropped_multi_recipient: 0,
                rows_out: 1
            }
        );
    }

    fn arb_rows() -> impl Strategy<Value = Vec<RawRow>> {
        prop::collection::vec((0u8..6, 0u8..6, 0u32..20), 0..60).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(k, (s, r, t))| RawRow {
                    sender: format!("u{s}"),
                    receiver: format!("u{r}"),
                    time: t as f64,
                    row: k + 1,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn preprocess_output_is_clean(raw in arb_rows()) {
            let (h, rep) = preprocess_email(&raw, PreprocessPolicy::default()).unwrap();
            prop_assert_eq!(rep.rows_in, rep.rows_out + rep.dropped_self_loops + rep.dropped_multi_recipient);
            prop_assert_eq!(h.len(), rep.rows_out);
            // no self-loops survive, and each surviving (sender, raw time) has one receiver
            let mut seen: HashMap<(String, u64), String> = HashMap::new();
            let kept: Vec<&RawRow> = raw.iter().filter(|r| {
                r.sender != r.receiver
                    && raw.iter().filter(|o| o.sender == r.sender && o.time == r.time)
                        .all(|o| o.receiver == r.receiver)
            }).collect();
            prop_assert_eq!(kept.len(), h.len());
            for r in kept {
                let prev = seen.insert((r.sender.clone(), r.time.to_bits()), r.receiver.clone());
                if let Some(p) = prev { prop_assert_eq!(p, r.receiver.clone()); }
            }
            for e in h.events() { prop_assert_ne!(e.sender, e.receiver); }
        }

        #[test]
        fn write_then_parse_is_identity(
            raw in prop::collection::vec((0u8..8, 1u8..8, 0.0f64..1e6), 1..50)
        ) {
            let rows: Vec<RawRow> = raw.iter().enumerate().map(|(k, &(s, d, t))| RawRow {
                sender: format!("n{s}"),
                receiver: format!("n{}", (s + d) % 8),
                time: t,
                row: k + 1,
            }).filter(|r| r.sender != r.receiver).collect();
            let h = EventHistory::from_rows(&rows).unwrap();
            let mut buf = Vec::new();
            write_events(&h, &mut buf).unwrap();
            let back = parse_events(buf.as_slice(), TimeFormat::Seconds).unwrap();
            prop_assert_eq!(back, h);
        }
    }
}
