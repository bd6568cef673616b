//! Seeded synthetic corpora standing in for the real datasets in tests, the
//! acceptance suite and the bundled demo data.
//!
//! Three dialogue styles (navigate, schedule, weather) share one act structure
//! (greet, then requests and small talk in random order, then goodbye) but use
//! disjoint words. Only request turns are answered with the KB value.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Dialogue, KbAttribute, KbRecord, Speaker, Turn};
use crate::seed;

#[derive(Debug)]
pub struct Style {
    pub domain: &'static str,
    pub slot: &'static str,
    pub user_greet: &'static [&'static str],
    pub request: &'static [&'static str],
    pub chat: &'static [&'static str],
    pub user_bye: &'static [&'static str],
    pub sys_greet: &'static [&'static str],
    /// `{}` marks the KB value.
    pub inform: &'static [&'static str],
    pub chat_reply: &'static [&'static str],
    pub sys_bye: &'static [&'static str],
}

pub const NAVIGATE: Style = Style {
    domain: "navigate",
    slot: "destination",
    user_greet: &["hello navigator", "hi car", "hey gps"],
    request: &[
        "where is my destination",
        "give me directions please",
        "route me there",
        "find this address",
        "how do i get there",
        "show me driving route",
        "which street leads there",
        "navigate me there please",
    ],
    chat: &[
        "traffic looks heavy",
        "i love driving",
        "nice highway views",
        "my engine runs smoothly",
        "road trips rock",
        "gas prices climbed again",
    ],
    user_bye: &["goodbye navigator", "bye car", "done driving"],
    sys_greet: &["navigator ready", "where to driver"],
    inform: &["head toward {}", "destination {} reached via highway", "drive straight to {}", "{} lies onward"],
    chat_reply: &["watch mirrors", "keep both hands steady", "roads reward patience"],
    sys_bye: &["arrive safely", "drive carefully"],
};

pub const SCHEDULE: Style = Style {
    domain: "schedule",
    slot: "event",
    user_greet: &["good morning assistant", "greetings calendar", "hiya planner"],
    request: &[
        "when does our meeting start",
        "what time works for us",
        "check our calendar kindly",
        "book us an appointment",
        "list upcoming events",
        "can we reschedule",
        "what slot remains open",
        "set our reminder",
    ],
    chat: &[
        "busy week ahead",
        "mondays feel long",
        "coffee keeps us going",
        "weekends pass quickly",
        "deadlines stress everyone",
        "lunch breaks help",
    ],
    user_bye: &["thanks planner", "see ya calendar", "that covers everything"],
    sys_greet: &["planner online", "calendar assistant listening"],
    inform: &["appointment confirmed with {}", "meeting set alongside {}", "{} holds that slot", "schedule shows {}"],
    chat_reply: &["remain organized", "breaks matter", "plan wisely"],
    sys_bye: &["productive day awaits", "calendar updated"],
};

pub const WEATHER: Style = Style {
    domain: "weather",
    slot: "condition",
    user_greet: &["howdy forecaster", "yo weatherbot", "salutations meteorologist"],
    request: &[
        "will it rain today",
        "tell forecast tomorrow",
        "any storms coming",
        "temperature outside now",
        "humidity level currently",
        "should umbrella come along",
        "wind speed report",
        "sunshine expected later",
    ],
    chat: &[
        "clouds look pretty",
        "winter feels endless",
        "summer heat exhausts",
        "rainbows cheer folks",
        "snow makes kids happy",
        "thunder scares dogs",
    ],
    user_bye: &["later weatherbot", "farewell forecaster", "cheers meteorologist"],
    sys_greet: &["weatherbot awake", "forecaster standing by"],
    inform: &["expect {} conditions", "radar indicates {}", "{} arrives soon", "forecast says {}"],
    chat_reply: &["dress warmly", "nature surprises", "skies change fast"],
    sys_bye: &["stay dry", "enjoy sunshine"],
};

pub const STYLES: [&Style; 3] = [&NAVIGATE, &SCHEDULE, &WEATHER];

/// Transfer-corpus domains, including the ones excluded for each SMD target.
pub const TRANSFER_DOMAINS: [&str; 8] = [
    "WEATHER_CHECK",
    "STORE_DETAILS",
    "UPDATE_CALENDAR",
    "APPOINTMENT_REMINDER",
    "BUS_SCHEDULE_BOT",
    "PIZZA_ORDERING",
    "MOVIE_LISTINGS",
    "BANK_BOT",
];

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

/// A pronounceable three-syllable pseudo-word, used as a KB value that is
/// almost surely out of vocabulary.
pub fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    (0..3)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), NUCLEI.choose(rng).unwrap()))
        .collect::<String>()
        + "x"
}

fn pick(rng: &mut ChaCha8Rng, options: &[&str]) -> String {
    options.choose(rng).unwrap().to_string()
}

fn inform(rng: &mut ChaCha8Rng, style: &Style, value: &str) -> String {
    pick(rng, style.inform).replace("{}", value)
}

/// Number of request/small-talk exchanges between greeting and goodbye.
pub const MIDDLE_EXCHANGES: usize = 3;

/// One dialogue in a single style, user first, with a one-row KB.
pub fn styled_dialogue(rng: &mut ChaCha8Rng, style: &Style, id: String) -> Dialogue {
    let value = pseudo_word(rng);
    let mut turns = vec![
        Turn::new(Speaker::User, pick(rng, style.user_greet)),
        Turn::new(Speaker::System, pick(rng, style.sys_greet)),
    ];
    for _ in 0..MIDDLE_EXCHANGES {
        if rng.random_bool(0.5) {
            turns.push(Turn::new(Speaker::User, pick(rng, style.request)));
            turns.push(Turn::new(Speaker::System, inform(rng, style, &value)));
        } else {
            turns.push(Turn::new(Speaker::User, pick(rng, style.chat)));
            turns.push(Turn::new(Speaker::System, pick(rng, style.chat_reply)));
        }
    }
    turns.push(Turn::new(Speaker::User, pick(rng, style.user_bye)));
    turns.push(Turn::new(Speaker::System, pick(rng, style.sys_bye)));
    Dialogue {
        id,
        domain: style.domain.to_string(),
        turns,
        kb: vec![KbRecord {
            attributes: vec![KbAttribute::new(style.slot, value)],
        }],
    }
}

/// The in-domain corpus: `per_domain[i]` dialogues of `STYLES[i]`.
pub fn multi_domain_corpus(per_domain: [usize; 3], seed: u64) -> Corpus {
    let mut rng = seed::rng(seed, "synth-main");
    let mut dialogues = Vec::new();
    for (style, &n) in STYLES.iter().zip(&per_domain) {
        for i in 0..n {
            dialogues.push(styled_dialogue(&mut rng, style, format!("{}-{i:04}", style.domain)));
        }
    }
    Corpus::new("synthetic-main", dialogues)
}

// A line of `list`, in a style drawn independently for this utterance.
fn say(turns: &mut Vec<Turn>, rng: &mut ChaCha8Rng, speaker: Speaker, list: fn(&Style) -> &'static [&'static str]) {
    let style = *STYLES.choose(rng).unwrap();
    turns.push(Turn::new(speaker, pick(rng, list(style))));
}

/// The transfer corpus: bot greets first, no KB, and every utterance draws
/// its style independently, so each act is seen in every vocabulary.
pub fn transfer_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = seed::rng(seed, "synth-transfer");
    let dialogues = (0..n)
        .map(|i| {
            let value = pseudo_word(&mut rng);
            let mut turns = Vec::new();
            say(&mut turns, &mut rng, Speaker::System, |s| s.sys_greet);
            for _ in 0..MIDDLE_EXCHANGES {
                if rng.random_bool(0.5) {
                    say(&mut turns, &mut rng, Speaker::User, |s| s.request);
                    let st = *STYLES.choose(&mut rng).unwrap();
                    turns.push(Turn::new(Speaker::System, inform(&mut rng, st, &value)));
                } else {
                    say(&mut turns, &mut rng, Speaker::User, |s| s.chat);
                    say(&mut turns, &mut rng, Speaker::System, |s| s.chat_reply);
                }
            }
            say(&mut turns, &mut rng, Speaker::User, |s| s.user_bye);
            say(&mut turns, &mut rng, Speaker::System, |s| s.sys_bye);
            Dialogue {
                id: format!("transfer-{i:05}"),
                domain: TRANSFER_DOMAINS[i % TRANSFER_DOMAINS.len()].to_string(),
                turns,
                kb: vec![],
            }
        })
        .collect();
    Corpus::new("synthetic-transfer", dialogues)
}

/// Four sentence templates sharing filler words; returns each utterance with
/// its template index.
pub fn template_utterances(n: usize, seed: u64) -> Vec<(String, usize)> {
    const FILLERS: [&str; 8] = ["red", "blue", "green", "small", "large", "old", "new", "bright"];
    const NOUNS: [&str; 6] = ["car", "house", "boat", "lamp", "chair", "phone"];
    let mut rng = seed::rng(seed, "synth-templates");
    (0..n)
        .map(|i| {
            let label = i % 4;
            let a = pick(&mut rng, &FILLERS);
            let b = pick(&mut rng, &NOUNS);
            let text = match label {
                0 => format!("please show me the {a} {b}"),
                1 => format!("how much does the {a} {b} cost"),
                2 => format!("i want to sell my {a} {b} today"),
                _ => format!("{a} {b} broke yesterday sadly"),
            };
            (text, label)
        })
        .collect()
}

/// Copy-task dialogues: the KB holds two values and the user asks for one;
/// the answer must reproduce that value verbatim.
pub fn copy_task_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = seed::rng(seed, "synth-copy");
    let dialogues = (0..n)
        .map(|i| {
            let (code, name) = (pseudo_word(&mut rng), pseudo_word(&mut rng));
            let ask_code = rng.random_bool(0.5);
            let (q, a) = if ask_code {
                ("what is the code", format!("the code is {code} ."))
            } else {
                ("who is the contact", format!("the contact is {name} ."))
            };
            Dialogue {
                id: format!("copy-{i:05}"),
                domain: "copy".into(),
                turns: vec![Turn::new(Speaker::User, q), Turn::new(Speaker::System, a)],
                kb: vec![KbRecord {
                    attributes: vec![KbAttribute::new("code", code), KbAttribute::new("contact", name)],
                }],
            }
        })
        .collect();
    Corpus::new("synthetic-copy", dialogues)
}
