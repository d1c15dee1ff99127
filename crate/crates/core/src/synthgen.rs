//! Synthetic cohort generation from behavioral archetypes.
//!
//! Each archetype is an hour-of-day modulated Markov chain over locations
//! plus night-behavior and clinical priors. Generated cohorts carry a
//! ground-truth sidecar (participant -> archetype) that the pipeline never
//! reads, so archetype recovery can be evaluated leak-free.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{EventKind, EventRecord, ParticipantProfile};
use crate::error::{Error, Result};
use crate::hashutil::Fnv1a;

pub const LOCATIONS: [&str; 5] = ["lounge", "kitchen", "hallway", "bedroom", "bathroom"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClinicalPrior {
    pub age_mean: f64,
    pub age_sd: f64,
    pub mmse_mean: f64,
    pub mmse_sd: f64,
    pub adas_mean: f64,
    pub adas_sd: f64,
    pub hads_depression_mean: f64,
    pub hads_anxiety_mean: f64,
    /// Mean annual change added back to derive the prior-year score.
    pub mmse_annual_drift: f64,
    pub adas_annual_drift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub name: String,
    /// Distribution over [`LOCATIONS`] for the first location after waking.
    pub initial: Vec<f64>,
    /// Per hour of day, the distribution over next locations when a
    /// transition fires during that hour.
    pub hourly: Vec<Vec<f64>>,
    pub dwell_minutes_mean: f64,
    pub dwell_minutes_sd: f64,
    /// PIR re-fire interval while dwelling in a room, minutes.
    pub retrigger_minutes: f64,
    pub bed_entry_hour_mean: f64,
    pub bed_entry_hour_sd: f64,
    pub wake_hour_mean: f64,
    pub wake_hour_sd: f64,
    pub night_rise_prob: f64,
    pub clinical: ClinicalPrior,
}

impl ArchetypeSpec {
    pub fn validate(&self) -> Result<()> {
        let check_dist = |dist: &[f64], what: &str| -> Result<()> {
            if dist.len() != LOCATIONS.len() {
                return Err(Error::InvalidArgument(format!(
                    "{}: {what} has {} entries, expected {}",
                    self.name,
                    dist.len(),
                    LOCATIONS.len()
                )));
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{}: {what} is not a distribution (sum {sum})",
                    self.name
                )));
            }
            Ok(())
        };
        check_dist(&self.initial, "initial")?;
        if self.hourly.len() != 24 {
            return Err(Error::InvalidArgument(format!(
                "{}: hourly must have 24 rows",
                self.name
            )));
        }
        for (h, row) in self.hourly.iter().enumerate() {
            check_dist(row, &format!("hourly[{h}]"))?;
        }
        if self.dwell_minutes_sd < 0.0
            || self.bed_entry_hour_sd < 0.0
            || self.wake_hour_sd < 0.0
            || self.clinical.age_sd < 0.0
            || self.clinical.mmse_sd < 0.0
            || self.clinical.adas_sd < 0.0
        {
            return Err(Error::InvalidArgument(format!(
                "{}: negative standard deviation",
                self.name
            )));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    mean + sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn sample_dist(rng: &mut ChaCha8Rng, dist: &[f64]) -> usize {
    let mut target: f64 = rng.gen();
    for (i, &p) in dist.iter().enumerate() {
        target -= p;
        if target <= 0.0 {
            return i;
        }
    }
    dist.len() - 1
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub events: Vec<EventRecord>,
    pub profiles: BTreeMap<String, ParticipantProfile>,
    /// (participant_id, archetype name), the leak-free evaluation sidecar.
    pub ground_truth: Vec<(String, String)>,
}

/// Generates a deterministic synthetic cohort: `participants_per_archetype`
/// participants per archetype, each with `days` simulated days of events
/// starting at `start_date`, plus a clinical profile drawn from the
/// archetype prior.
pub fn generate_cohort(
    archetypes: &[ArchetypeSpec],
    participants_per_archetype: usize,
    days: u32,
    start_date: NaiveDate,
    seed: u64,
) -> Result<SyntheticCohort> {
    if archetypes.is_empty() {
        return Err(Error::InvalidArgument("need at least one archetype".into()));
    }
    if days == 0 {
        return Err(Error::InvalidArgument("days must be >= 1".into()));
    }
    for spec in archetypes {
        spec.validate()?;
    }

    let mut events = Vec::new();
    let mut profiles = BTreeMap::new();
    let mut ground_truth = Vec::new();
    let mut participant_index = 0usize;

    for spec in archetypes {
        for _ in 0..participants_per_archetype {
            let id = format!("p{participant_index:03}");
            let mut h = Fnv1a::new();
            h.update_u64(seed).update_u64(participant_index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(h.finish());

            for d in 0..days {
                let date = start_date + chrono::Duration::days(d as i64);
                simulate_day(spec, &id, date, &mut rng, &mut events);
            }
            profiles.insert(id.clone(), draw_profile(spec, &id, start_date, days, &mut rng));
            ground_truth.push((id, spec.name.clone()));
            participant_index += 1;
        }
    }
    events.sort_by(|a, b| {
        a.participant_id
            .cmp(&b.participant_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    Ok(SyntheticCohort {
        events,
        profiles,
        ground_truth,
    })
}

fn push_event(
    events: &mut Vec<EventRecord>,
    id: &str,
    date: NaiveDate,
    minute_of_day: f64,
    kind: EventKind,
    location: Option<&str>,
) {
    let secs = ((minute_of_day * 60.0) as i64).clamp(0, 86_399) as u32;
    let naive: NaiveDateTime = date
        .and_hms_opt(secs / 3600, (secs % 3600) / 60, secs % 60)
        .unwrap();
    events.push(EventRecord {
        participant_id: id.to_string(),
        timestamp: naive.and_utc(),
        kind,
        location: location.map(str::to_string),
    });
}

fn simulate_day(
    spec: &ArchetypeSpec,
    id: &str,
    date: NaiveDate,
    rng: &mut ChaCha8Rng,
    events: &mut Vec<EventRecord>,
) {
    let wake = normal(rng, spec.wake_hour_mean, spec.wake_hour_sd).clamp(4.0, 11.0) * 60.0;
    let bed = normal(rng, spec.bed_entry_hour_mean, spec.bed_entry_hour_sd)
        .clamp(18.0, 23.8)
        * 60.0;

    // optional night rise before waking
    if rng.gen::<f64>() < spec.night_rise_prob {
        let rise = rng.gen_range(60.0..(wake - 60.0).max(61.0));
        push_event(events, id, date, rise, EventKind::BedLeave, None);
        push_event(
            events,
            id,
            date,
            rise + 1.0,
            EventKind::LocationEntry,
            Some("bathroom"),
        );
        push_event(events, id, date, rise + 9.0, EventKind::BedEnter, None);
    }

    push_event(events, id, date, wake, EventKind::BedLeave, None);

    let mut t = wake;
    let mut loc = sample_dist(rng, &spec.initial);
    push_event(
        events,
        id,
        date,
        t,
        EventKind::LocationEntry,
        Some(LOCATIONS[loc]),
    );
    while t < bed {
        let dwell = normal(rng, spec.dwell_minutes_mean, spec.dwell_minutes_sd).max(2.0);
        let dwell_end = (t + dwell).min(bed);
        // PIR re-fires while the participant stays in the room
        let mut fire = t + spec.retrigger_minutes;
        while fire < dwell_end {
            push_event(
                events,
                id,
                date,
                fire,
                EventKind::LocationEntry,
                Some(LOCATIONS[loc]),
            );
            fire += spec.retrigger_minutes;
        }
        t = dwell_end;
        if t >= bed {
            break;
        }
        let hour = ((t / 60.0) as usize).min(23);
        loc = sample_dist(rng, &spec.hourly[hour]);
        push_event(
            events,
            id,
            date,
            t,
            EventKind::LocationEntry,
            Some(LOCATIONS[loc]),
        );
    }
    push_event(events, id, date, bed, EventKind::BedEnter, None);
}

fn draw_profile(
    spec: &ArchetypeSpec,
    id: &str,
    start_date: NaiveDate,
    days: u32,
    rng: &mut ChaCha8Rng,
) -> ParticipantProfile {
    let c = &spec.clinical;
    let mmse = normal(rng, c.mmse_mean, c.mmse_sd).clamp(0.0, 30.0);
    let adas = normal(rng, c.adas_mean, c.adas_sd).max(0.0);
    let assessment_date = start_date + chrono::Duration::days(days as i64);
    ParticipantProfile {
        participant_id: id.to_string(),
        age: normal(rng, c.age_mean, c.age_sd).clamp(55.0, 100.0),
        lives_alone: rng.gen::<f64>() < 0.5,
        mmse,
        adas_cog: adas,
        hads_depression: normal(rng, c.hads_depression_mean, 2.0).clamp(0.0, 21.0),
        hads_anxiety: normal(rng, c.hads_anxiety_mean, 2.0).clamp(0.0, 21.0),
        mmse_prior: (mmse - c.mmse_annual_drift + normal(rng, 0.0, 0.5)).clamp(0.0, 30.0),
        adas_cog_prior: (adas - c.adas_annual_drift + normal(rng, 0.0, 0.5)).max(0.0),
        assessment_date,
        prior_assessment_date: assessment_date - chrono::Duration::days(365),
    }
}

/// Helper for building hourly rows: the same distribution all day except for
/// listed hour ranges.
fn hourly(base: [f64; 5], overrides: &[(std::ops::Range<usize>, [f64; 5])]) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = (0..24).map(|_| base.to_vec()).collect();
    for (range, dist) in overrides {
        for h in range.clone() {
            rows[h] = dist.to_vec();
        }
    }
    rows
}

/// The five-archetype fixture used by the shipped pipeline configuration and
/// the separation tests. Archetypes are deliberately well separated in both
/// daily structure and clinical priors.
pub fn default_archetypes() -> Vec<ArchetypeSpec> {
    // location order: lounge, kitchen, hallway, bedroom, bathroom
    vec![
        ArchetypeSpec {
            name: "lounge_sitter".into(),
            initial: vec![0.7, 0.2, 0.0, 0.0, 0.1],
            hourly: hourly(
                [0.75, 0.10, 0.05, 0.05, 0.05],
                &[(11..13, [0.2, 0.7, 0.0, 0.0, 0.1])],
            ),
            dwell_minutes_mean: 80.0,
            dwell_minutes_sd: 15.0,
            retrigger_minutes: 4.0,
            bed_entry_hour_mean: 22.0,
            bed_entry_hour_sd: 0.4,
            wake_hour_mean: 8.5,
            wake_hour_sd: 0.4,
            night_rise_prob: 0.1,
            clinical: ClinicalPrior {
                age_mean: 74.0,
                age_sd: 3.0,
                mmse_mean: 26.0,
                mmse_sd: 1.5,
                adas_mean: 18.0,
                adas_sd: 3.0,
                hads_depression_mean: 4.0,
                hads_anxiety_mean: 4.0,
                mmse_annual_drift: -0.5,
                adas_annual_drift: 1.0,
            },
        },
        ArchetypeSpec {
            name: "kitchen_router".into(),
            initial: vec![0.1, 0.8, 0.1, 0.0, 0.0],
            hourly: hourly(
                [0.15, 0.60, 0.15, 0.00, 0.10],
                &[(14..17, [0.55, 0.2, 0.15, 0.0, 0.1])],
            ),
            dwell_minutes_mean: 45.0,
            dwell_minutes_sd: 10.0,
            retrigger_minutes: 4.0,
            bed_entry_hour_mean: 21.0,
            bed_entry_hour_sd: 0.4,
            wake_hour_mean: 6.0,
            wake_hour_sd: 0.4,
            night_rise_prob: 0.15,
            clinical: ClinicalPrior {
                age_mean: 70.0,
                age_sd: 3.0,
                mmse_mean: 27.5,
                mmse_sd: 1.2,
                adas_mean: 14.0,
                adas_sd: 3.0,
                hads_depression_mean: 3.0,
                hads_anxiety_mean: 5.0,
                mmse_annual_drift: -0.3,
                adas_annual_drift: 0.5,
            },
        },
        ArchetypeSpec {
            name: "restless_pacer".into(),
            initial: vec![0.2, 0.1, 0.4, 0.1, 0.2],
            hourly: hourly([0.20, 0.15, 0.35, 0.10, 0.20], &[]),
            dwell_minutes_mean: 12.0,
            dwell_minutes_sd: 5.0,
            retrigger_minutes: 3.0,
            bed_entry_hour_mean: 23.2,
            bed_entry_hour_sd: 0.3,
            wake_hour_mean: 6.5,
            wake_hour_sd: 0.6,
            night_rise_prob: 0.85,
            clinical: ClinicalPrior {
                age_mean: 80.0,
                age_sd: 4.0,
                mmse_mean: 17.0,
                mmse_sd: 2.5,
                adas_mean: 42.0,
                adas_sd: 5.0,
                hads_depression_mean: 9.0,
                hads_anxiety_mean: 11.0,
                mmse_annual_drift: -2.5,
                adas_annual_drift: 5.0,
            },
        },
        ArchetypeSpec {
            name: "bedroom_rester".into(),
            initial: vec![0.1, 0.1, 0.05, 0.65, 0.1],
            hourly: hourly(
                [0.10, 0.10, 0.05, 0.65, 0.10],
                &[(12..14, [0.15, 0.5, 0.05, 0.2, 0.1])],
            ),
            dwell_minutes_mean: 95.0,
            dwell_minutes_sd: 20.0,
            retrigger_minutes: 6.0,
            bed_entry_hour_mean: 20.2,
            bed_entry_hour_sd: 0.4,
            wake_hour_mean: 9.5,
            wake_hour_sd: 0.5,
            night_rise_prob: 0.3,
            clinical: ClinicalPrior {
                age_mean: 84.0,
                age_sd: 3.0,
                mmse_mean: 12.0,
                mmse_sd: 2.5,
                adas_mean: 55.0,
                adas_sd: 6.0,
                hads_depression_mean: 12.0,
                hads_anxiety_mean: 8.0,
                mmse_annual_drift: -3.0,
                adas_annual_drift: 7.0,
            },
        },
        ArchetypeSpec {
            name: "morning_mover".into(),
            initial: vec![0.15, 0.35, 0.15, 0.05, 0.30],
            hourly: hourly(
                [0.30, 0.30, 0.10, 0.05, 0.25],
                &[(17..21, [0.65, 0.15, 0.05, 0.05, 0.10])],
            ),
            dwell_minutes_mean: 25.0,
            dwell_minutes_sd: 8.0,
            retrigger_minutes: 3.5,
            bed_entry_hour_mean: 22.8,
            bed_entry_hour_sd: 0.3,
            wake_hour_mean: 5.5,
            wake_hour_sd: 0.3,
            night_rise_prob: 0.05,
            clinical: ClinicalPrior {
                age_mean: 67.0,
                age_sd: 2.5,
                mmse_mean: 29.0,
                mmse_sd: 0.8,
                adas_mean: 9.0,
                adas_sd: 2.0,
                hads_depression_mean: 2.0,
                hads_anxiety_mean: 3.0,
                mmse_annual_drift: -0.1,
                adas_annual_drift: 0.2,
            },
        },
    ]
}

pub fn write_ground_truth(path: &Path, truth: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    w.write_record(["participant_id", "archetype"])
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for (id, arch) in truth {
        w.write_record([id, arch])
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}
