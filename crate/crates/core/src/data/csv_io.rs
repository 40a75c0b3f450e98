//! CSV corpus ingestion and emission.
//!
//! Schema (header row required):
//! `subject_id,gender,activity,acc_x,acc_y,acc_z,gyr_x,gyr_y,gyr_z`
//! with one row per time sample. Consecutive rows with the same
//! (subject_id, activity) form one recording; a change in either starts a
//! new [`SignalStream`].

use super::{Activity, Gender, SignalStream, N_CHANNELS};
use crate::error::{Error, Result};
use std::path::Path;

/// Column-name mapping for [`load_csv`]. Defaults to the documented
/// schema; override fields to ingest files with different headers.
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub subject_id: String,
    pub gender: String,
    pub activity: String,
    pub channels: [String; N_CHANNELS],
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            subject_id: "subject_id".into(),
            gender: "gender".into(),
            activity: "activity".into(),
            channels: [
                "acc_x".into(),
                "acc_y".into(),
                "acc_z".into(),
                "gyr_x".into(),
                "gyr_y".into(),
                "gyr_z".into(),
            ],
        }
    }
}

/// Loads a corpus CSV into one stream per (subject, activity, recording)
/// group. The file format carries no sample rate, so it is supplied here.
pub fn load_csv(path: &Path, schema: &CsvSchema, sample_rate_hz: f64) -> Result<Vec<SignalStream>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;

    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema { column: name.to_string() })
    };
    let subject_col = col(&schema.subject_id)?;
    let gender_col = col(&schema.gender)?;
    let activity_col = col(&schema.activity)?;
    let mut channel_cols = [0usize; N_CHANNELS];
    for (i, name) in schema.channels.iter().enumerate() {
        channel_cols[i] = col(name)?;
    }

    let mut streams: Vec<SignalStream> = Vec::new();
    let mut current: Option<SignalStream> = None;

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or(Error::Parse {
                row: line,
                message: format!("row has {} fields, expected at least {}", record.len(), idx + 1),
            })
        };

        let subject_id = field(subject_col)?.to_string();
        let gender_raw: u8 = field(gender_col)?.trim().parse().map_err(|_| Error::Parse {
            row: line,
            message: format!("gender '{}' is not 0 or 1", field(gender_col).unwrap_or("")),
        })?;
        let gender = Gender::from_label(gender_raw)
            .map_err(|e| Error::Parse { row: line, message: e.to_string() })?;
        let activity_raw: u8 = field(activity_col)?.trim().parse().map_err(|_| Error::Parse {
            row: line,
            message: format!("activity '{}' is not an integer in 0..4", field(activity_col).unwrap_or("")),
        })?;
        let activity = Activity::new(activity_raw)
            .map_err(|e| Error::Parse { row: line, message: e.to_string() })?;

        let mut sample = [0.0f64; N_CHANNELS];
        for (i, &c) in channel_cols.iter().enumerate() {
            let raw = field(c)?;
            sample[i] = raw.trim().parse().map_err(|_| Error::Parse {
                row: line,
                message: format!("non-numeric sample '{raw}' in column '{}'", schema.channels[i]),
            })?;
        }

        let start_new = match &current {
            None => true,
            Some(s) => s.subject_id != subject_id || s.activity != activity,
        };
        if start_new {
            if let Some(done) = current.take() {
                streams.push(done);
            }
            current = Some(SignalStream {
                subject_id,
                gender,
                activity,
                sample_rate_hz,
                channels: std::array::from_fn(|_| Vec::new()),
            });
        } else if let Some(s) = &current {
            if s.gender != gender {
                return Err(Error::Integrity(format!(
                    "row {line}: subject {} changes gender mid-recording",
                    s.subject_id
                )));
            }
        }
        let stream = current.as_mut().expect("stream initialized above");
        for (i, v) in sample.into_iter().enumerate() {
            stream.channels[i].push(v);
        }
    }
    if let Some(done) = current.take() {
        streams.push(done);
    }
    for s in &streams {
        s.validate()?;
    }
    Ok(streams)
}

/// Writes streams to a corpus CSV in the documented schema, one row per
/// sample, streams in input order. Values are emitted in shortest
/// round-trip form so the file reloads bit-exactly.
pub fn write_corpus_csv(streams: &[SignalStream], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    writer.write_record([
        "subject_id", "gender", "activity", "acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z",
    ])?;
    for stream in streams {
        stream.validate()?;
        for t in 0..stream.len() {
            let mut record: Vec<String> = Vec::with_capacity(3 + N_CHANNELS);
            record.push(stream.subject_id.clone());
            record.push(stream.gender.label().to_string());
            record.push(stream.activity.label().to_string());
            for c in 0..N_CHANNELS {
                record.push(format!("{}", stream.channels[c][t]));
            }
            writer.write_record(&record)?;
        }
    }
    writer.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
