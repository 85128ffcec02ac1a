//! WebVTT-compatible transcript cues.
//!
//! Accepts an optional `WEBVTT` header, optional cue identifiers, `NOTE`
//! blocks, and cue settings trailing the timing line (ignored). Timestamps
//! may be `MM:SS.mmm` or `HH:MM:SS.mmm`.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cue {
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    cues: Vec<Cue>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("transcript is empty")]
    Empty,
    #[error("line {line}: malformed timestamp `{value}`")]
    BadTimestamp { line: usize, value: String },
    #[error("line {line}: expected `start --> end` timing line")]
    MissingTiming { line: usize },
    #[error("line {line}: cue ends before it starts")]
    EndBeforeStart { line: usize },
    #[error("line {line}: cue has no text")]
    EmptyCue { line: usize },
}

impl Transcript {
    /// Builds a transcript from cues, enforcing the same invariants as the parser.
    pub fn from_cues(mut cues: Vec<Cue>) -> Result<Self, TranscriptError> {
        if cues.is_empty() {
            return Err(TranscriptError::Empty);
        }
        for (i, cue) in cues.iter().enumerate() {
            if cue.end_ms < cue.start_ms {
                return Err(TranscriptError::EndBeforeStart { line: i + 1 });
            }
            if cue.text.trim().is_empty() {
                return Err(TranscriptError::EmptyCue { line: i + 1 });
            }
        }
        cues.sort_by_key(|c| c.start_ms);
        Ok(Self { cues })
    }

    pub fn cues(&self) -> &[Cue] {
        &self.cues
    }

    pub fn len(&self) -> usize {
        self.cues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    /// Renders cues as `[start --> end] text` lines, the form embedded in prompts.
    pub fn timestamped_lines(&self) -> String {
        let mut out = String::new();
        for cue in &self.cues {
            let _ = writeln!(
                out,
                "[{} --> {}] {}",
                format_timestamp(cue.start_ms),
                format_timestamp(cue.end_ms),
                cue.text.replace('\n', " ")
            );
        }
        out
    }

    /// Serializes back into WebVTT.
    pub fn to_webvtt(&self) -> String {
        let mut out = String::from("WEBVTT\n");
        for cue in &self.cues {
            let _ = write!(
                out,
                "\n{} --> {}\n{}\n",
                format_timestamp(cue.start_ms),
                format_timestamp(cue.end_ms),
                cue.text
            );
        }
        out
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.timestamped_lines())
    }
}

pub fn parse_transcript(text: &str) -> Result<Transcript, TranscriptError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let lines: Vec<&str> = text.lines().collect();
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(TranscriptError::Empty);
    }

    let mut cues = Vec::new();
    let mut i = 0;
    // header block
    if lines
        .iter()
        .position(|l| !l.trim().is_empty())
        .is_some_and(|p| lines[p].trim_start().starts_with("WEBVTT"))
    {
        while i < lines.len() && lines[i].trim().is_empty() {
            i += 1;
        }
        while i < lines.len() && !lines[i].trim().is_empty() {
            i += 1;
        }
    }

    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let block_start = i;
        let mut block_end = i;
        while block_end < lines.len() && !lines[block_end].trim().is_empty() {
            block_end += 1;
        }
        let block = &lines[block_start..block_end];
        i = block_end;

        let first = block[0].trim();
        if first == "NOTE" || first.starts_with("NOTE ") || first == "STYLE" || first == "REGION" {
            continue;
        }

        let timing_idx = if block[0].contains("-->") {
            0
        } else if block.len() > 1 && block[1].contains("-->") {
            1
        } else {
            return Err(TranscriptError::MissingTiming {
                line: block_start + 1,
            });
        };
        let line_no = block_start + timing_idx + 1;
        let (start_ms, end_ms) = parse_timing(block[timing_idx], line_no)?;
        if end_ms < start_ms {
            return Err(TranscriptError::EndBeforeStart { line: line_no });
        }
        let text = block[timing_idx + 1..].join("\n");
        if text.trim().is_empty() {
            return Err(TranscriptError::EmptyCue { line: line_no });
        }
        cues.push(Cue {
            start_ms,
            end_ms,
            text,
        });
    }

    if cues.is_empty() {
        return Err(TranscriptError::Empty);
    }
    cues.sort_by_key(|c| c.start_ms);
    Ok(Transcript { cues })
}

fn parse_timing(line: &str, line_no: usize) -> Result<(u64, u64), TranscriptError> {
    let (start, rest) = line
        .split_once("-->")
        .ok_or(TranscriptError::MissingTiming { line: line_no })?;
    let end = rest.split_whitespace().next().unwrap_or("");
    Ok((
        parse_timestamp(start.trim(), line_no)?,
        parse_timestamp(end, line_no)?,
    ))
}

fn parse_timestamp(value: &str, line: usize) -> Result<u64, TranscriptError> {
    let bad = || TranscriptError::BadTimestamp {
        line,
        value: value.to_string(),
    };
    let (clock, millis) = value.split_once('.').ok_or_else(bad)?;
    if millis.len() != 3 || !millis.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let parts: Vec<&str> = clock.split(':').collect();
    let field = |s: &str| -> Result<u64, TranscriptError> {
        if s.len() < 2 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        s.parse().map_err(|_| bad())
    };
    let (hours, minutes, seconds) = match parts.as_slice() {
        [m, s] => (0, field(m)?, field(s)?),
        [h, m, s] => {
            let minutes = field(m)?;
            if minutes > 59 {
                return Err(bad());
            }
            (field(h)?, minutes, field(s)?)
        }
        _ => return Err(bad()),
    };
    if seconds > 59 {
        return Err(bad());
    }
    let millis: u64 = millis.parse().map_err(|_| bad())?;
    Ok(((hours * 60 + minutes) * 60 + seconds) * 1000 + millis)
}

pub fn format_timestamp(ms: u64) -> String {
    let millis = ms % 1000;
    let total_secs = ms / 1000;
    let secs = total_secs % 60;
    let total_mins = total_secs / 60;
    if total_mins >= 60 {
        format!(
            "{:02}:{:02}:{:02}.{:03}",
            total_mins / 60,
            total_mins % 60,
            secs,
            millis
        )
    } else {
        format!("{:02}:{:02}.{:03}", total_mins, secs, millis)
    }
}
