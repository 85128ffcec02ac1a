//! Minimal RIFF/WAVE reading and writing.
//!
//! Test fixtures carry their transcription in a `txt ` chunk, which the stub
//! speech-to-text backend reads back verbatim.

/// Splits a RIFF/WAVE file into `(tag, payload)` chunks.
pub fn chunks(bytes: &[u8]) -> Option<Vec<([u8; 4], &[u8])>> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let mut out = Vec::new();
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let tag: [u8; 4] = bytes[pos..pos + 4].try_into().ok()?;
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        let start = pos + 8;
        let end = start.checked_add(len)?;
        if end > bytes.len() {
            return None;
        }
        out.push((tag, &bytes[start..end]));
        pos = end + (len & 1);
    }
    Some(out)
}

pub fn is_wav(bytes: &[u8]) -> bool {
    chunks(bytes).is_some()
}

/// Embedded `txt ` chunk, if any.
pub fn embedded_text(bytes: &[u8]) -> Option<String> {
    chunks(bytes)?
        .into_iter()
        .find(|(tag, _)| tag == b"txt ")
        .and_then(|(_, body)| String::from_utf8(body.to_vec()).ok())
}

/// Playback length computed from the `fmt ` byte rate and the `data` size.
pub fn duration_ms(bytes: &[u8]) -> Option<u64> {
    let chunks = chunks(bytes)?;
    let fmt = chunks.iter().find(|(t, _)| t == b"fmt ")?.1;
    let data = chunks.iter().find(|(t, _)| t == b"data")?.1;
    if fmt.len() < 12 {
        return None;
    }
    let byte_rate = u32::from_le_bytes(fmt[8..12].try_into().ok()?) as u64;
    if byte_rate == 0 {
        return None;
    }
    Some(data.len() as u64 * 1000 / byte_rate)
}

/// An 8 kHz mono 16-bit WAV with no samples plus the given extra chunks.
pub fn build(extra: &[([u8; 4], &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    let mut push = |tag: &[u8; 4], payload: &[u8]| {
        body.extend_from_slice(tag);
        body.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        body.extend_from_slice(payload);
        if payload.len() % 2 == 1 {
            body.push(0);
        }
    };
    let sample_rate: u32 = 8_000;
    let mut fmt = Vec::with_capacity(16);
    fmt.extend_from_slice(&1u16.to_le_bytes()); // PCM
    fmt.extend_from_slice(&1u16.to_le_bytes()); // mono
    fmt.extend_from_slice(&sample_rate.to_le_bytes());
    fmt.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    fmt.extend_from_slice(&2u16.to_le_bytes());
    fmt.extend_from_slice(&16u16.to_le_bytes());
    push(b"fmt ", &fmt);
    for (tag, payload) in extra {
        push(tag, payload);
    }
    push(b"data", &[]);

    let mut out = Vec::with_capacity(body.len() + 12);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((body.len() + 4) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(&body);
    out
}

/// A recording fixture that the stub transcribes to `text`.
pub fn text_fixture(text: &str) -> Vec<u8> {
    build(&[(*b"txt ", text.as_bytes())])
}

/// Recognizes common container signatures (WAV, Ogg, WebM/Matroska, FLAC, MP3).
pub fn looks_like_audio(bytes: &[u8]) -> bool {
    is_wav(bytes)
        || bytes.starts_with(b"OggS")
        || bytes.starts_with(&[0x1A, 0x45, 0xDF, 0xA3])
        || bytes.starts_with(b"fLaC")
        || bytes.starts_with(b"ID3")
        || (bytes.len() > 1 && bytes[0] == 0xFF && bytes[1] & 0xE0 == 0xE0)
}
