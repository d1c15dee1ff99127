//! Rectifies raw events into fixed-width windows and emits day strings.
//!
//! A day is split into half-open windows `[s*w, (s+1)*w)` minutes; each
//! window records the most frequent event location, or `"nowhere"` when no
//! event fell inside it. At the default 20-minute width a day is exactly 72
//! tokens.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{FixedOffset, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use crate::data_model::{EventKind, EventRecord};
use crate::error::{Error, Result};

pub const NOWHERE: &str = "nowhere";
pub const BED: &str = "bed";
pub const DEFAULT_WINDOW_MINUTES: u32 = 20;

/// A participant-day as an ordered list of window tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayString {
    pub participant_id: String,
    pub date: NaiveDate,
    pub tokens: Vec<String>,
}

pub fn slots_per_day(window_minutes: u32) -> Result<usize> {
    if window_minutes == 0 || 1440 % window_minutes != 0 {
        return Err(Error::Config {
            field: "window_minutes".into(),
            message: format!("{window_minutes} does not divide 1440"),
        });
    }
    Ok((1440 / window_minutes) as usize)
}

/// Rectifies one participant-day of events into a [`DayString`].
///
/// Per window the most frequent location wins; ties go to the token whose
/// first event in the window is earliest. `bed_enter` counts as location
/// `"bed"`, `bed_leave` carries no location information and is ignored.
pub fn window_day(
    participant_id: &str,
    date: NaiveDate,
    events: &[EventRecord],
    offset: FixedOffset,
    window_minutes: u32,
) -> Result<DayString> {
    let slots = slots_per_day(window_minutes)?;
    // (count, first occurrence order) per token, per slot
    let mut tallies: Vec<BTreeMap<&str, (usize, usize)>> = vec![BTreeMap::new(); slots];

    for (order, ev) in events.iter().enumerate() {
        if ev.participant_id != participant_id {
            return Err(Error::Contract(format!(
                "event for `{}` in day of `{}`",
                ev.participant_id, participant_id
            )));
        }
        let local = ev.timestamp.with_timezone(&offset);
        if local.date_naive() != date {
            return Err(Error::Contract(format!(
                "event on {} in day {}",
                local.date_naive(),
                date
            )));
        }
        let token = match ev.kind {
            EventKind::LocationEntry => ev.location.as_deref().unwrap_or(NOWHERE),
            EventKind::BedEnter => BED,
            EventKind::BedLeave => continue,
        };
        let minute = local.time().hour() * 60 + local.time().minute();
        let slot = (minute / window_minutes) as usize;
        let entry = tallies[slot].entry(token).or_insert((0, order));
        entry.0 += 1;
    }

    let tokens = tallies
        .iter()
        .map(|slot| {
            slot.iter()
                .max_by(|a, b| {
                    // higher count wins; on ties, earlier first occurrence
                    a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1))
                })
                .map(|(tok, _)| tok.to_string())
                .unwrap_or_else(|| NOWHERE.to_string())
        })
        .collect();

    Ok(DayString {
        participant_id: participant_id.to_string(),
        date,
        tokens,
    })
}

/// Tokens joined by single spaces; word count equals the slot count.
pub fn day_to_text(day: &DayString) -> String {
    day.tokens.join(" ")
}

pub fn text_to_day(participant_id: &str, date: NaiveDate, text: &str) -> DayString {
    DayString {
        participant_id: participant_id.to_string(),
        date,
        tokens: text.split_whitespace().map(str::to_string).collect(),
    }
}

/// Splits a participant's sorted events into per-date groups and windows
/// each. Dates with no events produce no day string.
pub fn events_to_day_strings(
    participant_id: &str,
    events: &[EventRecord],
    offset: FixedOffset,
    window_minutes: u32,
) -> Result<Vec<DayString>> {
    let mut by_date: BTreeMap<NaiveDate, Vec<EventRecord>> = BTreeMap::new();
    for ev in events {
        by_date.entry(ev.date(offset)).or_default().push(ev.clone());
    }
    by_date
        .into_iter()
        .map(|(date, evs)| window_day(participant_id, date, &evs, offset, window_minutes))
        .collect()
}

/// CSV row for the day-string file contract.
#[derive(Serialize, Deserialize)]
struct DayRow {
    participant_id: String,
    date: NaiveDate,
    tokens: String,
}

pub fn write_day_strings(path: &Path, days: &[DayString]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for day in days {
        wtr.serialize(DayRow {
            participant_id: day.participant_id.clone(),
            date: day.date,
            tokens: day_to_text(day),
        })
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_day_strings(path: &Path) -> Result<Vec<DayString>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: DayRow = row.map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        out.push(text_to_day(&row.participant_id, row.date, &row.tokens));
    }
    Ok(out)
}

/// Distinct tokens across a day collection, `"nowhere"` always included,
/// sorted for a stable feature order.
pub fn vocabulary(days: &[DayString]) -> Vec<String> {
    let mut vocab: std::collections::BTreeSet<String> =
        days.iter().flat_map(|d| d.tokens.iter().cloned()).collect();
    vocab.insert(NOWHERE.to_string());
    vocab.into_iter().collect()
}
