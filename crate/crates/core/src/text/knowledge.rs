//! Curated acoustic descriptions for common sources, used offline.

use super::lexicon::content_stems;

struct Entry {
    keys: &'static [&'static str],
    text: &'static str,
}

const ENTRIES: &[Entry] = &[
    Entry {
        keys: &["cat", "hiss"],
        text: "A cat hissing is a sharp, breathy burst of noise concentrated in the frequency range of 2-4 kHz, with a moderate to high amplitude, a harsh airy timbre, a short duration of a few tenths of a second, a sudden attack and a gradual release, and a noisy spectrum without a clear pitch.",
    },
    Entry {
        keys: &["cat", "meow"],
        text: "A cat meowing is a tonal call with a fundamental between 400 Hz and 1 kHz and clear harmonics above it, a moderate amplitude, a nasal whining timbre, a duration of about half a second to a second, a soft attack and a falling decay, and an arched pitch envelope.",
    },
    Entry {
        keys: &["dog", "bark"],
        text: "A dog barking is a loud, abrupt call with most energy between 500 Hz and 2 kHz, a rough throaty timbre, bursts of 0.1 to 0.3 seconds, a very fast attack and quick decay, and a repeating envelope of separate barks with broadband harmonic content.",
    },
    Entry {
        keys: &["children", "yell"],
        text: "Children yelling are loud high-pitched voices with a fundamental between 300 and 600 Hz and strong harmonics up to 4 kHz, a strained bright timbre, calls lasting one to two seconds, quick attacks, and an irregular overlapping envelope.",
    },
    Entry {
        keys: &["child", "cry"],
        text: "A child crying is a wailing voice with a fundamental near 400 to 600 Hz and rich harmonics, a loud amplitude, a tense piercing timbre, sobs of about a second, a sharp attack and uneven decay, and a rhythmic envelope that rises and breaks between breaths.",
    },
    Entry {
        keys: &["man", "speak"],
        text: "A man speaking has a voice fundamental between 85 and 180 Hz with formants up to 3 kHz, a moderate conversational amplitude, a warm low timbre, words of a few hundred milliseconds, soft attacks and decays at syllable edges, and a fluctuating envelope following speech rhythm.",
    },
    Entry {
        keys: &["man", "talk"],
        text: "A man talking has a voice fundamental between 85 and 180 Hz with formants up to 3 kHz, a moderate conversational amplitude, a warm low timbre, words of a few hundred milliseconds, soft attacks and decays at syllable edges, and a fluctuating envelope following speech rhythm.",
    },
    Entry {
        keys: &["woman", "speak"],
        text: "A woman speaking has a voice fundamental between 165 and 255 Hz with formants up to 3.5 kHz, a moderate amplitude, a clear bright timbre, syllables of a few hundred milliseconds, soft attacks and decays, and a fluctuating envelope that follows the phrasing.",
    },
    Entry {
        keys: &["woman", "talk"],
        text: "A woman talking has a voice fundamental between 165 and 255 Hz with formants up to 3.5 kHz, a moderate amplitude, a clear bright timbre, syllables of a few hundred milliseconds, soft attacks and decays, and a fluctuating envelope that follows the phrasing.",
    },
    Entry {
        keys: &["laugh"],
        text: "Laughter is a sequence of short voiced bursts with a fundamental between 200 and 500 Hz, a loud amplitude, a breathy bright timbre, pulses of about 0.2 seconds, quick attacks and decays, and a rhythmic envelope that gradually fades.",
    },
    Entry {
        keys: &["car", "horn"],
        text: "A car horn honking is a loud steady tone pair between 300 and 500 Hz with strong harmonics up to 3 kHz, a brassy blaring timbre, blasts of half a second to two seconds, an instant attack and abrupt release, and a flat envelope while held.",
    },
    Entry {
        keys: &["water"],
        text: "Running water is a continuous broadband noise spread from 200 Hz to 8 kHz, a soft to moderate amplitude, a bubbling hissing timbre, a long duration, no distinct attack or decay, and a steady envelope with small random fluctuations in its spectrum.",
    },
    Entry {
        keys: &["music"],
        text: "Music playing combines pitched notes from about 60 Hz to 5 kHz with harmonic overtones, a moderate amplitude, a timbre set by the instruments, a duration of many seconds, note attacks and decays on the beat, and an envelope that follows the rhythm.",
    },
    Entry {
        keys: &["engine"],
        text: "An engine revving is a loud low rumble with a firing frequency between 30 and 200 Hz and harmonics above, a rough mechanical timbre, swells lasting one to three seconds, a rising attack and falling decay as the throttle changes, and a pitch envelope that sweeps up and down.",
    },
    Entry {
        keys: &["motor"],
        text: "A motor running is a steady low hum between 50 and 300 Hz with mechanical harmonics, a moderate amplitude, a buzzing metallic timbre, a long duration, a smooth attack and decay, and a flat envelope with slight periodic fluctuation.",
    },
    Entry {
        keys: &["crowd", "cheer"],
        text: "A crowd cheering is a dense wash of many voices spanning 200 Hz to 4 kHz, a loud amplitude, a roaring diffuse timbre, a duration of several seconds, a swelling attack and slow decay, and a broadband spectrum with no single pitch.",
    },
    Entry {
        keys: &["shout"],
        text: "People shouting produce loud strained voices with fundamentals between 200 and 500 Hz and strong harmonics, a harsh timbre, calls of one to two seconds, abrupt attacks, and an irregular envelope with overlapping bursts.",
    },
    Entry {
        keys: &["whistle"],
        text: "Whistling is a nearly pure tone between 1 and 3 kHz, a moderate amplitude, a clear airy timbre, notes of a fraction of a second to a few seconds, a soft attack and decay, and a narrow spectral peak that glides in pitch.",
    },
    Entry {
        keys: &["bee", "buzz"],
        text: "A bee buzzing is a steady drone with a wingbeat fundamental near 200 to 250 Hz and many harmonics, a soft amplitude, a fuzzy buzzing timbre, a duration of several seconds, gentle attacks and decays, and a wavering envelope as the insect moves.",
    },
    Entry {
        keys: &["bird", "chirp"],
        text: "Birds chirping make short tonal calls between 2 and 8 kHz, a moderate amplitude, a bright pure timbre, notes of 50 to 200 ms, rapid attacks and decays, and a sparse repeating envelope with fast frequency sweeps.",
    },
    Entry {
        keys: &["flap"],
        text: "Wings flapping are soft broadband thumps mostly below 1 kHz, a low amplitude, a papery fluttering timbre, beats of about 0.1 seconds, quick attacks and decays, and a rhythmic envelope that follows the wingbeat.",
    },
    Entry {
        keys: &["toilet", "flush"],
        text: "A toilet flushing is a rushing broadband noise from 100 Hz to 6 kHz, a loud amplitude, a gurgling watery timbre, a duration of three to six seconds, a sudden attack and a long gradual decay, and an envelope that peaks early and tails off.",
    },
    Entry {
        keys: &["bang"],
        text: "A loud bang is an impulsive broadband burst spanning 50 Hz to 5 kHz, a very high amplitude, a sharp explosive timbre, a duration under half a second, an instant attack and fast decay with some reverberant tail, and a flat spectrum.",
    },
    Entry {
        keys: &["alarm", "ring"],
        text: "An alarm ringing is a piercing repetitive tone between 1 and 4 kHz, a loud steady amplitude, a harsh buzzy timbre, rings lasting several seconds, abrupt attacks and releases, and a pulsed envelope with strong odd harmonics.",
    },
];

/// Curated description for a source phrase, if one of the entries covers
/// it. The entry with the most matching keys wins.
pub fn lookup(phrase: &str) -> Option<&'static str> {
    let stems = content_stems(phrase);
    ENTRIES
        .iter()
        .filter(|e| e.keys.iter().all(|k| stems.iter().any(|s| s == k || s.strip_suffix('s') == Some(k))))
        .max_by_key(|e| e.keys.len())
        .map(|e| e.text)
}

/// Description used when no curated entry applies.
pub fn generic(phrase: &str) -> String {
    let subject = phrase.trim().trim_end_matches('.').to_lowercase();
    format!(
        "The sound of {subject} has a frequency range and amplitude typical of its source, a timbre \
         shaped by how it is produced, a duration of roughly one to a few seconds, a natural attack \
         and decay, a dynamic envelope that varies over time, and spectral content spread across \
         several bands."
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        assert!(lookup("Cat hissing").unwrap().contains("2-4 kHz"));
        assert!(lookup("A cat hisses").unwrap().contains("2-4 kHz"));
        assert!(lookup("Dog barking").unwrap().starts_with("A dog barking"));
        assert!(lookup("Birds chirping").is_some());
        assert!(lookup("A violin solo").is_none());
    }
}
