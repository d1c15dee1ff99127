//! Core domain types and ingestion of raw event files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a single sensor firing reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LocationEntry,
    BedEnter,
    BedLeave,
}

/// One sensor firing for one participant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub participant_id: String,
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
    /// Present iff `kind == LocationEntry`.
    pub location: Option<String>,
}

/// Wire format for one JSONL event line.
#[derive(Debug, Serialize, Deserialize)]
struct EventLine {
    participant: String,
    ts: String,
    kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    location: Option<String>,
}

impl EventRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        match self.kind {
            EventKind::LocationEntry => match &self.location {
                None => return Err("location required for location_entry".into()),
                Some(loc) => {
                    if loc.is_empty() {
                        return Err("location token is empty".into());
                    }
                    if loc.chars().any(|c| c.is_uppercase()) {
                        return Err(format!("location token `{loc}` is not lowercase"));
                    }
                }
            },
            EventKind::BedEnter | EventKind::BedLeave => {
                if self.location.is_some() {
                    return Err("location forbidden for bed events".into());
                }
            }
        }
        if self.timestamp.timestamp_subsec_nanos() != 0 {
            return Err("timestamp is not second-aligned".into());
        }
        Ok(())
    }

    /// Calendar date of the event under a fixed day-boundary offset.
    pub fn date(&self, offset: FixedOffset) -> NaiveDate {
        self.timestamp.with_timezone(&offset).date_naive()
    }
}

/// A malformed input line, kept rather than silently dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    pub line: usize,
    pub message: String,
}

/// Result of parsing an event stream: well-formed records in file order,
/// plus every malformed line with its line number.
#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<EventRecord>,
    pub malformed: Vec<MalformedLine>,
}

/// Parses JSONL events. Malformed lines are collected, not dropped.
pub fn parse_events<R: BufRead>(reader: R) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_event_line(&line) {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.malformed.push(MalformedLine {
                line: lineno,
                message,
            }),
        }
    }
    Ok(out)
}

fn parse_event_line(line: &str) -> std::result::Result<EventRecord, String> {
    let raw: EventLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let ts = DateTime::parse_from_rfc3339(&raw.ts)
        .map_err(|e| format!("bad timestamp `{}`: {e}", raw.ts))?
        .with_timezone(&Utc);
    let rec = EventRecord {
        participant_id: raw.participant,
        timestamp: ts,
        kind: raw.kind,
        location: raw.location,
    };
    rec.validate()?;
    Ok(rec)
}

/// Serializes records as JSONL, the inverse of [`parse_events`] on
/// well-formed input.
pub fn write_events<W: Write>(mut w: W, records: &[EventRecord]) -> Result<()> {
    for rec in records {
        let line = EventLine {
            participant: rec.participant_id.clone(),
            ts: rec.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            kind: rec.kind,
            location: rec.location.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io("<stream>", e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io("<stream>", e))?;
    }
    Ok(())
}

/// Parses an events file, failing if any line is malformed.
pub fn load_events_strict(path: &Path) -> Result<Vec<EventRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let outcome = parse_events(std::io::BufReader::new(file))?;
    if let Some(first) = outcome.malformed.first() {
        return Err(Error::MalformedLines {
            path: path.to_path_buf(),
            count: outcome.malformed.len(),
            first_line: first.line,
            first_message: first.message.clone(),
        });
    }
    Ok(outcome.records)
}

/// Clinical features for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    pub age: f64,
    pub lives_alone: bool,
    pub mmse: f64,
    pub adas_cog: f64,
    pub hads_depression: f64,
    pub hads_anxiety: f64,
    pub mmse_prior: f64,
    pub adas_cog_prior: f64,
    pub assessment_date: NaiveDate,
    pub prior_assessment_date: NaiveDate,
}

impl ParticipantProfile {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=30.0).contains(&self.mmse) {
            return Err(Error::InvalidArgument(format!(
                "mmse {} out of range [0,30] for {}",
                self.mmse, self.participant_id
            )));
        }
        if self.adas_cog < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "adas_cog {} negative for {}",
                self.adas_cog, self.participant_id
            )));
        }
        if self.prior_assessment_date >= self.assessment_date {
            return Err(Error::InvalidArgument(format!(
                "prior_assessment_date not before assessment_date for {}",
                self.participant_id
            )));
        }
        Ok(())
    }
}

/// Loads the profiles CSV (header defined by the file contract).
pub fn load_profiles(path: &Path) -> Result<BTreeMap<String, ParticipantProfile>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = BTreeMap::new();
    for row in rdr.deserialize() {
        let profile: ParticipantProfile = row.map_err(|e| csv_err(path, e))?;
        profile.validate()?;
        out.insert(profile.participant_id.clone(), profile);
    }
    Ok(out)
}

pub fn write_profiles(path: &Path, profiles: &BTreeMap<String, ParticipantProfile>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for profile in profiles.values() {
        wtr.serialize(profile).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Events and profiles for a set of participants.
#[derive(Debug, Clone)]
pub struct Cohort {
    /// Events grouped per participant, sorted by timestamp within each.
    pub events: BTreeMap<String, Vec<EventRecord>>,
    pub profiles: BTreeMap<String, ParticipantProfile>,
    pub date_range: (NaiveDate, NaiveDate),
}

impl Cohort {
    /// Groups a flat event list by participant and sorts within each.
    pub fn from_parts(
        records: Vec<EventRecord>,
        profiles: BTreeMap<String, ParticipantProfile>,
        offset: FixedOffset,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument("no events in cohort".into()));
        }
        let mut events: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
        for rec in records {
            events.entry(rec.participant_id.clone()).or_default().push(rec);
        }
        for list in events.values_mut() {
            list.sort_by_key(|r| r.timestamp);
        }
        let mut min_date = NaiveDate::MAX;
        let mut max_date = NaiveDate::MIN;
        for list in events.values() {
            for rec in list {
                let d = rec.date(offset);
                min_date = min_date.min(d);
                max_date = max_date.max(d);
            }
        }
        Ok(Cohort {
            events,
            profiles,
            date_range: (min_date, max_date),
        })
    }
}

/// Per-participant completeness summary.
#[derive(Debug, Clone, Serialize)]
pub struct ParticipantValidation {
    pub participant_id: String,
    /// Days in the cohort date range with at least one event.
    pub days_with_events: usize,
    /// Days in the cohort date range without any event.
    pub gap_days: usize,
    pub has_profile: bool,
    pub profile_complete: bool,
    pub has_events: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub participants: Vec<ParticipantValidation>,
}

impl ValidationReport {
    /// Participants with a complete profile and at least `min_days` recorded days.
    pub fn complete_subset(&self, min_days: usize) -> Vec<String> {
        self.participants
            .iter()
            .filter(|p| p.profile_complete && p.days_with_events >= min_days)
            .map(|p| p.participant_id.clone())
            .collect()
    }
}

/// Summarizes per-participant completeness. Deterministic and independent of
/// input event order (events are grouped and dates deduplicated).
pub fn validate_cohort(cohort: &Cohort, offset: FixedOffset) -> ValidationReport {
    let (start, end) = cohort.date_range;
    let total_days = (end - start).num_days() as usize + 1;
    let mut ids: BTreeSet<&String> = cohort.events.keys().collect();
    ids.extend(cohort.profiles.keys());

    let participants = ids
        .into_iter()
        .map(|id| {
            let dates: BTreeSet<NaiveDate> = cohort
                .events
                .get(id)
                .map(|evs| evs.iter().map(|e| e.date(offset)).collect())
                .unwrap_or_default();
            let profile = cohort.profiles.get(id);
            // All profile fields are required by the CSV schema, so a parsed
            // profile is complete iff it validates.
            let profile_complete = profile.map(|p| p.validate().is_ok()).unwrap_or(false);
            ParticipantValidation {
                participant_id: id.clone(),
                days_with_events: dates.len(),
                gap_days: total_days - dates.len(),
                has_profile: profile.is_some(),
                profile_complete,
                has_events: !dates.is_empty(),
            }
        })
        .collect();
    ValidationReport { participants }
}

/// Day boundary offset used when none is configured.
pub fn utc_offset() -> FixedOffset {
    FixedOffset::east_opt(0).unwrap()
}
