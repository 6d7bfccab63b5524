use std::io::{self, Write};

use serde::Serialize;

use super::trajectory::TrajectoryEvent;

pub const CSV_HEADER: &str = "t,x1,x2,x3,k1,k2,k3";

/// Shortest round-trip decimal form; exponent notation outside
/// `[1e-4, 1e15)` so that tiny momenta do not print hundreds of zeros.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes `# `-prefixed preamble lines, the header, and one row per event.
pub fn write_events_csv<W: Write + ?Sized>(
    out: &mut W,
    preamble: &[String],
    events: &[TrajectoryEvent],
) -> io::Result<()> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{CSV_HEADER}")?;
    for e in events {
        let cells = [e.t, e.x.x, e.x.y, e.x.z, e.k.x, e.k.y, e.k.z].map(format_f64);
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EventRow {
    t: f64,
    x1: f64,
    x2: f64,
    x3: f64,
    k1: f64,
    k2: f64,
    k3: f64,
}

#[derive(Serialize)]
struct EventsDocument<'a, M: Serialize> {
    meta: &'a M,
    events: Vec<EventRow>,
}

/// Writes `{"meta": …, "events": [{"t", "x1", …, "k3"}, …]}`.
pub fn write_events_json<W: Write + ?Sized, M: Serialize>(
    out: &mut W,
    meta: &M,
    events: &[TrajectoryEvent],
) -> io::Result<()> {
    let doc = EventsDocument {
        meta,
        events: events
            .iter()
            .map(|e| EventRow {
                t: e.t,
                x1: e.x.x,
                x2: e.x.y,
                x3: e.x.z,
                k1: e.k.x,
                k2: e.k.y,
                k3: e.k.z,
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut *out, &doc)?;
    writeln!(out)
}
