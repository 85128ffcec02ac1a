use sha2::{Digest, Sha256};

use super::{wav, ChatRequest, Provider, ProviderError, Purpose, Role, SpeechClip};
use crate::scheduler::ActiveAction;

/// Words per second the stub speaks at; matches the scheduler default so
/// audio-matched durations line up exactly.
pub const STUB_SPEECH_WPS: f64 = 2.5;

const OPENERS: [&str; 6] = [
    "Good question!",
    "Hmm, let me think.",
    "Oh, I was wondering about that too.",
    "Nice one.",
    "Okay, so",
    "Right,",
];

const REMARKS: [&str; 8] = [
    "The key idea is to compare neighbouring items and swap them when they are out of order.",
    "I wrote this down in my notes: it helps to trace the loop on a tiny list first.",
    "The tutorial shows that each pass pushes the largest remaining item to the end.",
    "Counting the comparisons in the nested loops is what gives the running time.",
    "I think printing the list after every step makes the behaviour easy to see.",
    "We could try a small example together and check the indices carefully.",
    "Stacks and queues differ mainly in which end you remove items from.",
    "Keep going, you are on the right track with this part of the video.",
];

const SPOKEN: [&str; 6] = [
    "could you explain the last example again",
    "how does the inner loop work",
    "i am not sure why the index goes out of range",
    "what is the time complexity here",
    "can you check my code",
    "thanks that makes sense",
];

const HOBBIES: [&str; 6] = [
    "I like solving puzzles after class.",
    "I usually study with a cup of tea next to my keyboard.",
    "I am practising for coding interviews this semester.",
    "I enjoy drawing diagrams to understand algorithms.",
    "I play chess on weekends.",
    "I keep a journal of every bug I fix.",
];

/// Deterministic offline backend. Every output is a pure function of the
/// seed and the request content.
#[derive(Debug, Clone)]
pub struct StubProvider {
    seed: u64,
    voices: Vec<String>,
}

impl StubProvider {
    pub fn new(seed: u64, voices: Vec<String>) -> Self {
        Self { seed, voices }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn hash(&self, parts: &[&[u8]]) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for part in parts {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part);
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
    }

    fn reply(&self, request: &ChatRequest) -> String {
        let name = persona_slot(&request.system_prompt, "Your name is ").unwrap_or("A classmate");
        let last = request.last_user().expect("validated");
        let image_digest = last.image.as_deref().map(|img| crate::rng::short_digest(img, 8));
        let h = self.hash(&[
            name.as_bytes(),
            last.text.as_bytes(),
            image_digest.as_deref().unwrap_or("").as_bytes(),
        ]);
        let action = pick_action(&last.text, h);
        let echo = echo_line(&last.text);
        let mut text = format!(
            "<{action}> {opener} About \"{echo}\": {remark}",
            opener = OPENERS[(h % OPENERS.len() as u64) as usize],
            remark = REMARKS[((h >> 8) % REMARKS.len() as u64) as usize],
        );
        if let Some(digest) = image_digest {
            text.push_str(&format!(" Looking at the highlighted frame [{digest}] helps."));
        }
        text.push_str(&format!(
            " [ref {}]",
            crate::rng::short_digest(last.text.as_bytes(), 8)
        ));
        text
    }

    fn summarize(request: &ChatRequest) -> String {
        let joined = request
            .messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        joined.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    fn notes(request: &ChatRequest) -> String {
        let last = request.last_user().expect("validated");
        last.text
            .lines()
            .filter_map(|line| {
                let rest = line.strip_prefix('[')?;
                let (_, text) = rest.split_once("] ")?;
                Some(format!("- {}", text.trim()))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn profile(&self, request: &ChatRequest) -> String {
        let prompt = &request.system_prompt;
        let name = persona_slot(prompt, "Your name is ").unwrap_or("a classmate");
        let tone = persona_slot(prompt, "Your tone is ").unwrap_or("friendly");
        let style = persona_slot(prompt, "Your interaction style is ").unwrap_or("collaborative");
        let trait_ = persona_slot(prompt, "Your characteristic is ").unwrap_or("curious");
        let h = self.hash(&[
            name.as_bytes(),
            tone.as_bytes(),
            style.as_bytes(),
            trait_.as_bytes(),
        ]);
        format!(
            "Hi, I'm {name}! People say I'm {tone} and {trait_}, and I like to study in a {style} way. {hobby}",
            hobby = HOBBIES[(h % HOBBIES.len() as u64) as usize]
        )
    }
}

impl Provider for StubProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        request.validate()?;
        Ok(match request.purpose {
            Purpose::Reply => self.reply(request),
            Purpose::Summarize => Self::summarize(request),
            Purpose::Notes => Self::notes(request),
            Purpose::Profile => self.profile(request),
        })
    }

    fn transcribe(&self, audio: &[u8], _mime: &str) -> Result<String, ProviderError> {
        if audio.is_empty() {
            return Err(ProviderError::InvalidRequest("audio is empty".into()));
        }
        if let Some(text) = wav::embedded_text(audio) {
            return Ok(text);
        }
        if !wav::looks_like_audio(audio) {
            return Err(ProviderError::Undecodable("unrecognized audio container".into()));
        }
        let h = self.hash(&[audio]);
        Ok(SPOKEN[(h % SPOKEN.len() as u64) as usize].to_string())
    }

    fn synthesize(&self, text: &str, voice_id: &str) -> Result<SpeechClip, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("nothing to synthesize".into()));
        }
        if !self.voices.iter().any(|v| v == voice_id) {
            return Err(ProviderError::UnknownVoice(voice_id.to_string()));
        }
        let words = text.split_whitespace().count() as f64;
        let duration_ms = (words / STUB_SPEECH_WPS * 1000.0).round() as u64;
        let bytes = wav::build(&[(*b"txt ", text.as_bytes()), (*b"voic", voice_id.as_bytes())]);
        Ok(SpeechClip {
            bytes,
            mime: "audio/wav".into(),
            duration_ms,
            voice_id: voice_id.to_string(),
        })
    }

    fn voices(&self) -> Vec<String> {
        self.voices.clone()
    }
}

/// Reads the value following `label` up to the next sentence end.
fn persona_slot<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    let start = prompt.find(label)? + label.len();
    let rest = &prompt[start..];
    let end = rest.find(". ").or_else(|| rest.find('.')).unwrap_or(rest.len());
    Some(rest[..end].trim())
}

fn pick_action(text: &str, h: u64) -> ActiveAction {
    let lower = text.to_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| lower.contains(w));
    if has(&["why", "how", "explain", "what is", "what's"]) {
        ActiveAction::Explaining
    } else if has(&["hello", "hi ", "hey", "welcome"]) || lower.trim() == "hi" {
        ActiveAction::Welcoming
    } else if has(&["stuck", "progress", "idle", "hard", "confus"]) {
        ActiveAction::Encouraging
    } else if has(&["review", "def ", "print(", "return"]) {
        ActiveAction::Explaining
    } else if has(&["great", "awesome", "cool", "!"]) {
        ActiveAction::Exciting
    } else {
        ActiveAction::ALL[(h % ActiveAction::ALL.len() as u64) as usize]
    }
}

fn echo_line(text: &str) -> String {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
    let mut out: String = first.chars().take(80).collect();
    if first.chars().count() > 80 {
        out.push_str("...");
    }
    out.replace('"', "'")
}
