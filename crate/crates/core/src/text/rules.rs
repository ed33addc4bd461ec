//! Rule-based source parsing used by the offline LLM stand-in.
//!
//! A caption is split into clauses at sentence boundaries and connectives
//! ("while", "and", "followed by", commas, ...). The first clause fixes the
//! output style: if it is a bare "subject + -ing" phrase every source is
//! rendered that way ("Dog barking"), otherwise clauses keep their finite
//! wording ("A man speaks").

use super::lexicon::{self, VerbForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Connective {
    Start,
    And,
    FollowedBy,
    Other,
}

const CONNECTIVES: &[(&[&str], Connective)] = &[
    (&["followed", "by"], Connective::FollowedBy),
    (&["and", "then"], Connective::FollowedBy),
    (&["while"], Connective::Other),
    (&["whilst"], Connective::Other),
    (&["whereas"], Connective::Other),
    (&["then"], Connective::FollowedBy),
    (&["and"], Connective::And),
    (&[","], Connective::Other),
];

#[derive(Debug, Clone)]
struct Clause {
    connective: Connective,
    tokens: Vec<String>,
}

#[derive(Debug, Clone)]
struct Analysis {
    subject: Vec<String>,
    aux: Option<String>,
    verb: Option<(usize, &'static str, VerbForm)>,
}

fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in sentence.split_whitespace() {
        let (word, comma) = match raw.strip_suffix(',') {
            Some(w) => (w, true),
            None => (raw, false),
        };
        let word = word.trim_matches(|c: char| c == '"' || c == ';' || c == ':');
        if !word.is_empty() {
            out.push(word.to_string());
        }
        if comma {
            out.push(",".to_string());
        }
    }
    out
}

/// Protects fixed expressions containing a connective word.
fn protect(sentence: &str) -> String {
    sentence
        .replace("over and over", "repeatedly")
        .replace("Over and over", "Repeatedly")
}

fn split_clauses(text: &str) -> Vec<Clause> {
    let mut clauses = Vec::new();
    for sentence in text.split(['.', '!', '?', ';', '\n']) {
        let tokens = tokenize(&protect(sentence));
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        let mut current = Clause { connective: Connective::Start, tokens: Vec::new() };
        let mut i = 0;
        'scan: while i < tokens.len() {
            for (pattern, kind) in CONNECTIVES {
                let n = pattern.len();
                if lower.len() >= i + n && lower[i..i + n] == **pattern {
                    let mut next = Clause { connective: *kind, tokens: Vec::new() };
                    // ", and" / ", while": the word decides the kind.
                    if current.tokens.is_empty() && current.connective == Connective::Other {
                        next.connective = *kind;
                        current = next;
                    } else {
                        clauses.push(std::mem::replace(&mut current, next));
                    }
                    i += n;
                    continue 'scan;
                }
            }
            current.tokens.push(tokens[i].clone());
            i += 1;
        }
        clauses.push(current);
    }
    clauses.retain(|c| !c.tokens.is_empty());
    if let Some(first) = clauses.first_mut() {
        first.connective = Connective::Start;
    }
    clauses
}

fn analyze(tokens: &[String]) -> Analysis {
    for (i, tok) in tokens.iter().enumerate() {
        let subject = &tokens[..i];
        let has_head = subject.iter().any(|t| !lexicon::is_determiner(t));
        if lexicon::is_auxiliary(tok) && has_head {
            if let Some(next) = tokens.get(i + 1) {
                if let Some((base, VerbForm::Gerund)) = lexicon::verb(next) {
                    return Analysis {
                        subject: subject.to_vec(),
                        aux: Some(tok.clone()),
                        verb: Some((i + 1, base, VerbForm::Gerund)),
                    };
                }
            }
        }
        if let Some((base, form)) = lexicon::verb(tok) {
            let accept = match form {
                VerbForm::Gerund | VerbForm::Third => has_head || i == 0,
                VerbForm::Base => has_head && lexicon::is_plural_subject(subject),
            };
            if accept {
                return Analysis {
                    subject: subject.to_vec(),
                    aux: None,
                    verb: Some((i, base, form)),
                };
            }
        }
    }
    Analysis { subject: tokens.to_vec(), aux: None, verb: None }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn join(tokens: &[String]) -> String {
    tokens.join(" ")
}

fn without_article(subject: &[String]) -> &[String] {
    match subject.first() {
        Some(first) if lexicon::is_determiner(first) => &subject[1..],
        _ => subject,
    }
}

fn aux_for(subject: &[String]) -> &'static str {
    if lexicon::is_plural_subject(subject) {
        "are"
    } else {
        "is"
    }
}

/// Parses a caption into source phrases, in order and without duplicates
/// removed (the caller collapses those).
pub fn parse_caption(caption: &str) -> Vec<String> {
    let clauses = split_clauses(caption);
    let analyses: Vec<Analysis> = clauses.iter().map(|c| analyze(&c.tokens)).collect();
    let gerund_style = matches!(
        analyses.first(),
        Some(Analysis { aux: None, verb: Some((i, _, VerbForm::Gerund)), .. }) if *i > 0
    );

    let mut out = Vec::new();
    let mut previous_subject: Option<Vec<String>> = None;
    for (clause, a) in clauses.iter().zip(&analyses) {
        let tokens = &clause.tokens;
        let Some((vi, base, form)) = a.verb else {
            let phrase = join(tokens);
            let stripped = join(without_article(tokens));
            if let Some(rewrite) = lexicon::nominal(&stripped) {
                out.push(rewrite.to_string());
            } else if gerund_style {
                out.push(capitalize(&stripped));
            } else {
                out.push(capitalize(&phrase));
            }
            previous_subject = None;
            continue;
        };
        let mut subject = a.subject.clone();
        if subject.is_empty() {
            match (&previous_subject, clause.connective) {
                (Some(prev), Connective::And) => subject = prev.clone(),
                _ => {
                    out.push(format!("A {} sound", lexicon::gerund(base)));
                    continue;
                }
            }
        }
        let rest = &tokens[vi + 1..];
        let phrase = if gerund_style {
            let mut parts = without_article(&subject).to_vec();
            parts.push(lexicon::gerund(base));
            parts.extend(lexicon::strip_adverbials(rest));
            join(&parts)
        } else {
            let mut parts = subject.clone();
            match (a.aux.as_ref(), form) {
                (Some(aux), _) => parts.push(aux.clone()),
                (None, VerbForm::Gerund) => parts.push(aux_for(&subject).to_string()),
                _ => {}
            }
            parts.push(tokens[vi].clone());
            parts.extend(rest.iter().cloned());
            join(&parts)
        };
        out.push(capitalize(&phrase));
        previous_subject = Some(subject);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &str) -> Vec<String> {
        parse_caption(c)
    }

    #[test]
    fn gerund_style_drops_articles_and_adverbials() {
        assert_eq!(
            p("Children yelling while a dog is barking in the background and a car horn honks afterwards"),
            vec!["Children yelling", "Dog barking", "Car horn honking"]
        );
    }

    #[test]
    fn finite_style_keeps_wording() {
        assert_eq!(p("A man speaks while a vehicle engine revs."), vec!["A man speaks", "A vehicle engine revs"]);
        assert_eq!(
            p("A stream of water is running while music plays in the background."),
            vec!["A stream of water is running", "Music plays in the background"]
        );
    }

    #[test]
    fn special_clauses() {
        assert_eq!(p("A man speaks followed by whistling."), vec!["A man speaks", "A whistling sound"]);
        assert_eq!(p("A loud bang followed by laughter."), vec!["A loud bang", "Someone laughs"]);
        assert_eq!(
            p("A toilet flushes followed by a woman speaking."),
            vec!["A toilet flushes", "A woman is speaking"]
        );
        assert_eq!(
            p("Birds chirping and flapping their wings."),
            vec!["Birds chirping", "Birds flapping their wings"]
        );
    }

    #[test]
    fn noun_phrase_captions() {
        assert_eq!(p("A low steady tone and a rising chirp."), vec!["A low steady tone", "A rising chirp"]);
        assert_eq!(
            p("A buzzing harmonic hum, a pulsing beep and a shrill whistle."),
            vec!["A buzzing harmonic hum", "A pulsing beep", "A shrill whistle"]
        );
    }

    #[test]
    fn own_output_is_a_fixed_point() {
        for caption in [
            "Children yelling. Dog barking. Car horn honking.",
            "A man speaks. A whistling sound.",
            "A toilet flushes. A woman is speaking.",
            "A low steady tone. A rising chirp.",
        ] {
            let once = p(caption);
            let again = p(&(once.join(". ") + "."));
            assert_eq!(once, again, "{caption}");
        }
    }
}
