//! Small curated English lexicon backing the offline parser rules.

const VERBS: &[&str] = &[
    "accelerate", "applaud", "approach", "bang", "bark", "beat", "beep", "blow", "breathe",
    "buzz", "caw", "chant", "chatter", "cheer", "chime", "chirp", "chuckle", "clang", "clap",
    "click", "cluck", "cough", "crackle", "crash", "creak", "crow", "cry", "drill", "drip",
    "drum", "fall", "flap", "flow", "flush", "giggle", "growl", "hammer", "hiss", "honk",
    "hoot", "howl", "hum", "idle", "jingle", "knock", "laugh", "meow", "moo", "neigh", "play",
    "pour", "purr", "quack", "race", "rattle", "rev", "ring", "rise", "roar", "rumble", "run",
    "rustle", "scream", "screech", "shout", "sing", "sizzle", "slam", "snore", "sob", "speak",
    "splash", "squeak", "squeal", "strum", "sweep", "talk", "tap", "thump", "tick", "trickle",
    "type", "wail", "whisper", "whistle", "yell", "yelp",
];

/// Verbs that double their final consonant before "-ing".
const DOUBLING: &[&str] = &["drip", "drum", "flap", "hum", "rev", "run", "slam", "sob", "clap", "tap"];

const AUXILIARIES: &[&str] = &["is", "are", "was", "were", "be", "being"];

pub const DETERMINERS: &[&str] = &["a", "an", "the", "some", "another", "several"];

/// Adverbial phrases dropped in the terse gerund style.
const ADVERBIALS: &[&[&str]] = &[
    &["in", "the", "background"],
    &["in", "the", "foreground"],
    &["in", "the", "distance"],
    &["at", "the", "same", "time"],
    &["over", "and", "over"],
    &["afterwards"],
    &["afterward"],
    &["repeatedly"],
    &["continuously"],
    &["loudly"],
    &["quietly"],
    &["softly"],
    &["nearby"],
    &["finally"],
];

/// Nouns naming an event, rewritten as a short clause.
const NOMINALS: &[(&str, &str)] = &[
    ("laughter", "Someone laughs"),
    ("applause", "People clap"),
    ("speech", "Someone speaks"),
    ("singing", "Someone sings"),
];

const PLURAL_NOUNS: &[&str] = &["people", "children", "men", "women", "geese", "mice", "crowds"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbForm {
    Base,
    Third,
    Gerund,
}

pub fn third_person(base: &str) -> String {
    let b = base.as_bytes();
    if ["s", "sh", "ch", "x", "z", "o"].iter().any(|e| base.ends_with(e)) {
        format!("{base}es")
    } else if base.ends_with('y') && b.len() > 1 && !b"aeiou".contains(&b[b.len() - 2]) {
        format!("{}ies", &base[..base.len() - 1])
    } else {
        format!("{base}s")
    }
}

pub fn gerund(base: &str) -> String {
    if DOUBLING.contains(&base) {
        format!("{base}{}ing", &base[base.len() - 1..])
    } else if base.ends_with("ie") {
        format!("{}ying", &base[..base.len() - 2])
    } else if base.ends_with('e') && !base.ends_with("ee") && base.len() > 2 {
        format!("{}ing", &base[..base.len() - 1])
    } else {
        format!("{base}ing")
    }
}

/// Base form and inflection of a known verb form.
pub fn verb(word: &str) -> Option<(&'static str, VerbForm)> {
    let w = word.to_lowercase();
    VERBS.iter().find_map(|&base| {
        if w == base {
            Some((base, VerbForm::Base))
        } else if w == third_person(base) {
            Some((base, VerbForm::Third))
        } else if w == gerund(base) {
            Some((base, VerbForm::Gerund))
        } else {
            None
        }
    })
}

pub fn is_auxiliary(word: &str) -> bool {
    AUXILIARIES.contains(&word.to_lowercase().as_str())
}

pub fn is_determiner(word: &str) -> bool {
    DETERMINERS.contains(&word.to_lowercase().as_str())
}

pub fn nominal(phrase: &str) -> Option<&'static str> {
    let p = phrase.to_lowercase();
    NOMINALS.iter().find(|(n, _)| *n == p).map(|(_, c)| *c)
}

/// Whether a noun phrase reads as plural.
pub fn is_plural_subject(subject: &[String]) -> bool {
    let Some(head) = subject.last().map(|h| h.to_lowercase()) else {
        return false;
    };
    if matches!(subject.first().map(|s| s.to_lowercase()).as_deref(), Some("a" | "an")) {
        return false;
    }
    PLURAL_NOUNS.contains(&head.as_str()) || (head.ends_with('s') && !head.ends_with("ss"))
}

/// Removes adverbial phrases from a token sequence.
pub fn strip_adverbials(tokens: &[String]) -> Vec<String> {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < tokens.len() {
        for phrase in ADVERBIALS {
            if lower[i..].len() >= phrase.len() && lower[i..i + phrase.len()] == **phrase {
                i += phrase.len();
                continue 'outer;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

/// Reduces a phrase to content words with verbs in base form, for
/// lexicon lookups.
pub fn content_stems(phrase: &str) -> Vec<String> {
    super::similarity::words(phrase)
        .into_iter()
        .filter(|w| !is_determiner(w) && !is_auxiliary(w))
        .map(|w| match verb(&w) {
            Some((base, _)) => base.to_string(),
            None => w,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inflections() {
        assert_eq!(third_person("buzz"), "buzzes");
        assert_eq!(third_person("cry"), "cries");
        assert_eq!(third_person("play"), "plays");
        assert_eq!(gerund("run"), "running");
        assert_eq!(gerund("rev"), "revving");
        assert_eq!(gerund("whistle"), "whistling");
        assert_eq!(gerund("flush"), "flushing");
        assert_eq!(verb("Honks"), Some(("honk", VerbForm::Third)));
        assert_eq!(verb("chirping"), Some(("chirp", VerbForm::Gerund)));
        assert_eq!(verb("tone"), None);
    }

    #[test]
    fn adverbials_and_stems() {
        let t: Vec<String> = "barking in the background".split(' ').map(String::from).collect();
        assert_eq!(strip_adverbials(&t), vec!["barking"]);
        assert_eq!(content_stems("A cat is hissing"), vec!["cat", "hiss"]);
    }

    #[test]
    fn plurality() {
        let v = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        assert!(is_plural_subject(&v("People")));
        assert!(is_plural_subject(&v("Birds")));
        assert!(!is_plural_subject(&v("a bus")));
        assert!(!is_plural_subject(&v("a woman")));
        assert!(!is_plural_subject(&v("glass")));
    }
}
