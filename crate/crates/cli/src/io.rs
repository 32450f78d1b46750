//! CSV formats read and written by the command-line tool.
//!
//! * series: `series_id,time,count`, one row per observation, rows of a
//!   series contiguous and in time order;
//! * events: `time,event,size` with `0,start,<i0>` first, one `birth` or
//!   `death` row per event carrying the size just after it, and
//!   `<horizon>,end,<size>` last;
//! * doses: `id,dose,time,n0,nt`, one single-interval culture per row.

use std::io::{Read, Write};

use bdproc_core::inference::{GlmRecord, ObservationSet, ObservedSeries};
use bdproc_core::simulate::{Event, EventHistory, EventKind};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
struct SeriesRow {
    series_id: String,
    time: f64,
    count: u64,
}

#[derive(Debug, Deserialize)]
struct EventRow {
    time: f64,
    event: String,
    size: u64,
}

#[derive(Debug, Deserialize)]
struct DoseRow {
    #[allow(dead_code)]
    id: String,
    dose: f64,
    time: f64,
    n0: u64,
    nt: u64,
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-4, 1e16)` so tiny boundary estimates stay readable.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn rows<T: for<'de> Deserialize<'de>>(input: impl Read, what: &str) -> Result<Vec<T>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (k, row) in reader.deserialize().enumerate() {
        out.push(row.map_err(|e| CliError::input(format!("{what} row {}: {e}", k + 1)))?);
    }
    if out.is_empty() {
        return Err(CliError::input(format!("{what} file has no data rows")));
    }
    Ok(out)
}

/// Series keyed by id, in order of first appearance.
pub fn read_series(input: impl Read) -> Result<(Vec<String>, ObservationSet), CliError> {
    let rows: Vec<SeriesRow> = rows(input, "series")?;
    let mut ids: Vec<String> = Vec::new();
    let mut groups: Vec<(Vec<f64>, Vec<u64>)> = Vec::new();
    for row in rows {
        if ids.last() != Some(&row.series_id) {
            if ids.contains(&row.series_id) {
                return Err(CliError::input(format!(
                    "rows of series {} are not contiguous",
                    row.series_id
                )));
            }
            ids.push(row.series_id.clone());
            groups.push((Vec::new(), Vec::new()));
        }
        let g = groups.last_mut().unwrap();
        g.0.push(row.time);
        g.1.push(row.count);
    }
    let series = ids
        .iter()
        .zip(groups)
        .map(|(id, (t, n))| {
            ObservedSeries::new(t, n).map_err(|e| CliError::input(format!("series {id}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((ids, ObservationSet::new(series)?))
}

pub fn write_series(
    out: &mut dyn Write,
    ids: &[String],
    data: &ObservationSet,
) -> std::io::Result<()> {
    writeln!(out, "series_id,time,count")?;
    for (id, s) in ids.iter().zip(data.series()) {
        for (t, n) in s.times().iter().zip(s.counts()) {
            writeln!(out, "{id},{},{n}", num(*t))?;
        }
    }
    Ok(())
}

pub fn read_events(input: impl Read) -> Result<EventHistory, CliError> {
    let rows: Vec<EventRow> = rows(input, "event")?;
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    if rows.len() < 2 || first.event != "start" || first.time != 0.0 || last.event != "end" {
        return Err(CliError::input(
            "event file must begin with `0,start,<size>` and finish with `<horizon>,end,<size>`",
        ));
    }
    let mut events = Vec::with_capacity(rows.len() - 2);
    let mut size = first.size;
    for row in &rows[1..rows.len() - 1] {
        let kind = match row.event.as_str() {
            "birth" => EventKind::Birth,
            "death" => EventKind::Death,
            other => {
                return Err(CliError::input(format!(
                    "unknown event kind `{other}` at time {}",
                    row.time
                )))
            }
        };
        size = match kind {
            EventKind::Birth => size + 1,
            EventKind::Death => size
                .checked_sub(1)
                .ok_or_else(|| CliError::input("death in an extinct population"))?,
        };
        if row.size != size {
            return Err(CliError::input(format!(
                "size after the event at {} should be {size}, file says {}",
                row.time, row.size
            )));
        }
        events.push(Event {
            time: row.time,
            kind,
        });
    }
    if last.size != size {
        return Err(CliError::input(format!(
            "final size should be {size}, file says {}",
            last.size
        )));
    }
    Ok(EventHistory::new(first.size, events, last.time)?)
}

pub fn write_events(out: &mut dyn Write, h: &EventHistory) -> std::io::Result<()> {
    writeln!(out, "time,event,size")?;
    writeln!(out, "0,start,{}", h.initial())?;
    let mut size = h.initial();
    for e in h.events() {
        let name = match e.kind {
            EventKind::Birth => {
                size += 1;
                "birth"
            }
            EventKind::Death => {
                size -= 1;
                "death"
            }
        };
        writeln!(out, "{},{name},{size}", num(e.time))?;
    }
    writeln!(out, "{},end,{size}", num(h.horizon()))
}

pub fn read_doses(input: impl Read) -> Result<Vec<GlmRecord>, CliError> {
    let rows: Vec<DoseRow> = rows(input, "dose")?;
    Ok(rows
        .into_iter()
        .map(|r| GlmRecord {
            dose: r.dose,
            time: r.time,
            n0: r.n0,
            nt: r.nt,
        })
        .collect())
}
