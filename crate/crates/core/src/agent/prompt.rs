use super::Persona;
use crate::transcript::Transcript;

const PREAMBLE: &str = "Act as if you're a student enrolled in an online Python course focused on data structures and algorithms. You're currently engaged in watching a video tutorial on the subject. Your responsibilities include responding to queries from your peers, participating in discussion groups, and interacting with other students via chat. During these discussions, you should proactively engage with the material presented in the tutorial, contribute to the conversation by discussing the content, and initiate new topics that are relevant to the tutorial's subject matter. Your identity in this scenario is defined by the following attributes.";

const ACTION_INSTRUCTION: &str = "When responding to a user's prompt, select the most appropriate action from the following list: \u{201c}asking\u{201d}, \u{201c}chatting\u{201d}, \u{201c}encouraging\u{201d}, \u{201c}exciting\u{201d}, \u{201c}explaining\u{201d}, \u{201c}welcoming\u{201d}, put the selected action in a <> and append it at the beginning of your response. Ensure your responses are clear and to the point.";

const TRANSCRIPT_LEAD: &str = "The transcript of the video you are watching is provided below for reference:";

/// Fills the co-learner system prompt with the persona and the timestamped transcript.
pub fn assemble_system_prompt(persona: &Persona, transcript: &Transcript) -> String {
    format!(
        "{PREAMBLE} Your name is {name}. Your tone is {tone}. Your interaction style is {style}. Your characteristic is {characteristic}. {ACTION_INSTRUCTION} {TRANSCRIPT_LEAD}\n{lines}",
        name = persona.name,
        tone = persona.tone,
        style = persona.interaction_style,
        characteristic = persona.characteristic,
        lines = transcript.timestamped_lines(),
    )
}

pub const SUMMARY_PROMPT: &str = "Progressively summarize the lines of conversation provided, adding onto the previous summary and returning a new summary. Keep it short and factual.";

pub const NOTES_PROMPT: &str = "Write concise study notes for the tutorial below, one bullet point per transcript segment, in your own words.";

pub const PROFILE_PROMPT: &str = "Write a short first-person self-introduction for your classmates. Mention your name, how you like to study, and one personal detail.";
