//! Event streams and time surfaces.
//!
//! Event files are plain text, one event per line: `t x y p` with `t` in
//! seconds, integer pixel coordinates and polarity `0`/`1`. Gzip-compressed
//! files are detected by their magic bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Out-of-order events are accepted when they trail the stream by at most this much.
pub const TIMESTAMP_JITTER: f64 = 1e-6;

/// Default temporal window of a time surface, seconds.
pub const DEFAULT_TEMPORAL_WINDOW: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub x: u32,
    pub y: u32,
    /// `+1` or `-1`.
    pub p: i8,
}

/// Parses an event stream, checking pixel bounds against a `width x height` sensor.
pub fn parse_event_stream<R: BufRead>(reader: R, width: u32, height: u32) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    let mut latest = f64::NEG_INFINITY;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let event = parse_line(trimmed, line_no, width, height)?;
        if event.t < latest - TIMESTAMP_JITTER {
            return Err(Error::OutOfOrder {
                line: line_no,
                t: event.t,
                latest,
            });
        }
        latest = latest.max(event.t);
        events.push(event);
    }
    Ok(events)
}

fn parse_line(line: &str, line_no: usize, width: u32, height: u32) -> Result<Event> {
    let bad = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(bad(format!("expected 4 fields `t x y p`, found {}", fields.len())));
    }
    let t: f64 = fields[0]
        .parse()
        .map_err(|_| bad(format!("bad timestamp `{}`", fields[0])))?;
    if !t.is_finite() {
        return Err(bad(format!("bad timestamp `{}`", fields[0])));
    }
    let x: i64 = fields[1]
        .parse()
        .map_err(|_| bad(format!("bad x coordinate `{}`", fields[1])))?;
    let y: i64 = fields[2]
        .parse()
        .map_err(|_| bad(format!("bad y coordinate `{}`", fields[2])))?;
    let p = match fields[3] {
        "1" | "+1" => 1,
        "0" | "-1" => -1,
        other => return Err(bad(format!("bad polarity `{other}`"))),
    };
    if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
        return Err(Error::Bounds {
            line: line_no,
            x,
            y,
            width,
            height,
        });
    }
    Ok(Event {
        t,
        x: x as u32,
        y: y as u32,
        p,
    })
}

/// Opens an event file, transparently decompressing gzip.
pub fn read_event_file(path: &Path, width: u32, height: u32) -> Result<Vec<Event>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    drop(file);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let tag = |e: Error| match e {
        Error::Parse { line, message } => Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        },
        Error::Bounds { .. } | Error::OutOfOrder { .. } => Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        other => other,
    };
    if n == 2 && magic == [0x1f, 0x8b] {
        parse_event_stream(BufReader::new(MultiGzDecoder::new(file)), width, height).map_err(tag)
    } else {
        parse_event_stream(BufReader::new(file), width, height).map_err(tag)
    }
}

pub fn write_events<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{} {} {} {}", e.t, e.x, e.y, if e.p > 0 { 1 } else { 0 })?;
    }
    Ok(())
}

/// Which polarities feed a time surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PolarityFilter {
    #[default]
    Both,
    Positive,
    Negative,
}

impl PolarityFilter {
    fn accepts(self, p: i8) -> bool {
        match self {
            PolarityFilter::Both => true,
            PolarityFilter::Positive => p > 0,
            PolarityFilter::Negative => p < 0,
        }
    }
}

/// Per-pixel map of the latest event timestamp (the surface of active events).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSurface {
    width: u32,
    height: u32,
    t_ref: f64,
    window: f64,
    stamps: Vec<f64>,
    polarity: Vec<i8>,
}

impl TimeSurface {
    /// Marker for a pixel that has not fired inside the window.
    pub const UNFIRED: f64 = f64::NEG_INFINITY;

    pub fn new(width: u32, height: u32, t_ref: f64, window: f64) -> Self {
        let len = width as usize * height as usize;
        Self {
            width,
            height,
            t_ref,
            window,
            stamps: vec![Self::UNFIRED; len],
            polarity: vec![0; len],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Latest timestamp at `(x, y)`, or `None` if the pixel never fired.
    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let t = self.stamps[self.index(x, y)];
        (t != Self::UNFIRED).then_some(t)
    }

    pub fn polarity(&self, x: u32, y: u32) -> Option<i8> {
        self.get(x, y).map(|_| self.polarity[self.index(x, y)])
    }

    /// Whether `t` falls in `(t_ref - window, t_ref]`.
    pub fn in_window(&self, t: f64) -> bool {
        t <= self.t_ref && t > self.t_ref - self.window
    }

    /// Applies one event; events outside the window or the sensor are ignored.
    /// Returns whether the surface changed.
    pub fn insert(&mut self, e: &Event) -> bool {
        if e.x >= self.width || e.y >= self.height || !self.in_window(e.t) {
            return false;
        }
        let i = self.index(e.x, e.y);
        if e.t >= self.stamps[i] {
            self.stamps[i] = e.t;
            self.polarity[i] = e.p;
            true
        } else {
            false
        }
    }

    /// Sets a pixel timestamp directly (used by the simulator).
    pub fn set(&mut self, x: u32, y: u32, t: f64, p: i8) {
        let i = self.index(x, y);
        self.stamps[i] = t;
        self.polarity[i] = p;
    }

    pub fn fired_count(&self) -> usize {
        self.stamps.iter().filter(|&&t| t != Self::UNFIRED).count()
    }

    pub fn is_empty(&self) -> bool {
        self.fired_count() == 0
    }

    /// Fired pixels as `(x, y, t)` in row-major order.
    pub fn fired(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let w = self.width as usize;
        self.stamps
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != Self::UNFIRED)
            .map(move |(i, &t)| ((i % w) as u32, (i / w) as u32, t))
    }

    /// One event per fired pixel, sorted by time then pixel index.
    pub fn to_events(&self) -> Vec<Event> {
        let mut events: Vec<(usize, Event)> = self
            .fired()
            .map(|(x, y, t)| {
                let i = self.index(x, y);
                let p = if self.polarity[i] < 0 { -1 } else { 1 };
                (i, Event { t, x, y, p })
            })
            .collect();
        events.sort_by(|a, b| a.1.t.total_cmp(&b.1.t).then(a.0.cmp(&b.0)));
        events.into_iter().map(|(_, e)| e).collect()
    }
}

/// Builds the surface at `t_ref` from every event in `(t_ref - window, t_ref]`.
pub fn build_time_surface(
    events: &[Event],
    width: u32,
    height: u32,
    t_ref: f64,
    temporal_window: f64,
) -> TimeSurface {
    build_time_surface_filtered(events, width, height, t_ref, temporal_window, PolarityFilter::Both)
}

pub fn build_time_surface_filtered(
    events: &[Event],
    width: u32,
    height: u32,
    t_ref: f64,
    temporal_window: f64,
    filter: PolarityFilter,
) -> TimeSurface {
    let mut ts = TimeSurface::new(width, height, t_ref, temporal_window);
    for e in events.iter().filter(|e| filter.accepts(e.p)) {
        ts.insert(e);
    }
    ts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_a_line() {
        let ev = parse_event_stream("0.001 120 84 1\n".as_bytes(), 240, 180).unwrap();
        assert_eq!(
            ev,
            vec![Event {
                t: 0.001,
                x: 120,
                y: 84,
                p: 1
            }]
        );
        let ev = parse_event_stream("0.5 1 2 0".as_bytes(), 240, 180).unwrap();
        assert_eq!(ev[0].p, -1);
    }

    #[test]
    fn missing_field_is_a_parse_error() {
        let err = parse_event_stream("0.001 120 84".as_bytes(), 240, 180).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_event_stream("0.0 1 1 1\n0.1 1 x 1".as_bytes(), 240, 180).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn empty_input_and_bounds() {
        assert!(parse_event_stream("".as_bytes(), 10, 10).unwrap().is_empty());
        let err = parse_event_stream("0.1 10 0 1".as_bytes(), 10, 10).unwrap_err();
        assert!(matches!(err, Error::Bounds { line: 1, .. }));
    }

    #[test]
    fn jitter_budget() {
        let ok = "1.0 0 0 1\n0.9999995 1 0 1\n";
        assert_eq!(parse_event_stream(ok.as_bytes(), 4, 4).unwrap().len(), 2);
        let bad = "1.0 0 0 1\n0.99 1 0 1\n";
        assert!(matches!(
            parse_event_stream(bad.as_bytes(), 4, 4),
            Err(Error::OutOfOrder { line: 2, .. })
        ));
    }

    #[test]
    fn gzip_files_are_accepted() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.txt.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::fast());
        enc.write_all(b"0.001 3 4 1\n0.002 5 6 0\n").unwrap();
        enc.finish().unwrap();
        let ev = read_event_file(&path, 10, 10).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[1].x, ev[1].y, ev[1].p), (5, 6, -1));
    }

    fn ev(t: f64, x: u32, y: u32) -> Event {
        Event { t, x, y, p: 1 }
    }

    #[test]
    fn surface_examples() {
        let ts = build_time_surface(&[ev(1.0, 5, 5)], 10, 10, 1.0, 0.04);
        assert_eq!(ts.get(5, 5), Some(1.0));
        assert_eq!(ts.fired_count(), 1);
        assert_eq!(ts.get(0, 0), None);

        let ts = build_time_surface(&[ev(0.99, 5, 5), ev(1.0, 5, 5)], 10, 10, 1.0, 0.04);
        assert_eq!(ts.get(5, 5), Some(1.0));

        let ts = build_time_surface(&[ev(0.95, 5, 5)], 10, 10, 1.0, 0.04);
        assert_eq!(ts.get(5, 5), None);
    }

    #[test]
    fn unfired_is_distinct_from_zero() {
        let ts = build_time_surface(&[ev(0.0, 1, 1)], 4, 4, 0.0, 0.04);
        assert_eq!(ts.get(1, 1), Some(0.0));
        assert_eq!(ts.get(2, 2), None);
    }

    #[test]
    fn polarity_filter() {
        let events = [
            Event { t: 0.5, x: 1, y: 1, p: 1 },
            Event { t: 0.6, x: 1, y: 1, p: -1 },
        ];
        let pos = build_time_surface_filtered(&events, 4, 4, 0.6, 0.2, PolarityFilter::Positive);
        assert_eq!(pos.get(1, 1), Some(0.5));
        let both = build_time_surface(&events, 4, 4, 0.6, 0.2);
        assert_eq!(both.polarity(1, 1), Some(-1));
    }

    proptest! {
        #[test]
        fn rebuild_is_bit_identical_and_monotone(
            raw in proptest::collection::vec((0.0..1.0f64, 0u32..8, 0u32..8), 0..60),
            extra in (0.7..1.0f64, 0u32..8, 0u32..8),
        ) {
            let mut events: Vec<Event> = raw.iter().map(|&(t, x, y)| ev(t, x, y)).collect();
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
            let a = build_time_surface(&events, 8, 8, 1.0, 0.3);
            let b = build_time_surface(&events, 8, 8, 1.0, 0.3);
            prop_assert_eq!(&a.stamps.iter().map(|t| t.to_bits()).collect::<Vec<_>>(),
                            &b.stamps.iter().map(|t| t.to_bits()).collect::<Vec<_>>());
            let mut c = a.clone();
            c.insert(&ev(extra.0, extra.1, extra.2));
            for (before, after) in a.stamps.iter().zip(&c.stamps) {
                prop_assert!(after >= before);
            }
        }

        #[test]
        fn event_text_round_trip(
            raw in proptest::collection::vec((0.0..10.0f64, 0u32..64, 0u32..48, any::<bool>()), 0..30)
        ) {
            let mut events: Vec<Event> = raw
                .iter()
                .map(|&(t, x, y, p)| Event { t, x, y, p: if p { 1 } else { -1 } })
                .collect();
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
            let mut buf = Vec::new();
            write_events(&mut buf, &events).unwrap();
            let back = parse_event_stream(buf.as_slice(), 64, 48).unwrap();
            prop_assert_eq!(back, events);
        }
    }
}
