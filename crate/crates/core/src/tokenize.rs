//! Lowercasing tokenizer with two modes.
//!
//! Forum and Article text is split on whitespace with punctuation detached
//! into single-character tokens. Tweet and Chat text additionally keeps
//! `#hashtags`, `@mentions` and URLs whole. The scrubbing placeholder
//! [`NAME_PLACEHOLDER`] is always a single token so scrubbed text re-tokenizes
//! to the scrubbed token list.

use crate::corpus::Domain;

/// Token substituted for scrubbed first names.
pub const NAME_PLACEHOLDER: &str = "<name>";

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];
const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '"', '\''];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Tokenize `text` for the given domain. Output tokens are lowercase.
pub fn tokenize(text: &str, domain: Domain) -> Vec<String> {
    let social = domain.is_social();
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        if social && URL_PREFIXES.iter().any(|p| chunk.starts_with(p)) {
            let url = chunk.trim_end_matches(URL_TRAILING);
            if url.len() > 0 && !URL_PREFIXES.contains(&url) {
                tokens.push(url.to_string());
                split_chunk(&chunk[url.len()..], social, &mut tokens);
                continue;
            }
        }
        split_chunk(chunk, social, &mut tokens);
    }
    tokens
}

fn split_chunk(chunk: &str, social: bool, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let placeholder: Vec<char> = NAME_PLACEHOLDER.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '<' && chars[i..].starts_with(&placeholder) {
            out.push(NAME_PLACEHOLDER.to_string());
            i += placeholder.len();
            continue;
        }
        if social
            && (c == '#' || c == '@')
            && chars.get(i + 1).copied().is_some_and(is_word_char)
            && (i == 0 || !is_word_char(chars[i - 1]))
        {
            let end = word_end(&chars, i + 1);
            out.push(chars[i..end].iter().collect());
            i = end;
            continue;
        }
        if is_word_char(c) {
            let end = word_end(&chars, i);
            out.push(chars[i..end].iter().collect());
            i = end;
            continue;
        }
        out.push(c.to_string());
        i += 1;
    }
}

/// End of a word run starting at `start`; apostrophes between word characters
/// stay inside the word.
fn word_end(chars: &[char], start: usize) -> usize {
    let mut j = start;
    while j < chars.len() {
        if is_word_char(chars[j]) {
            j += 1;
        } else if is_apostrophe(chars[j])
            && j > start
            && chars.get(j + 1).copied().is_some_and(is_word_char)
        {
            j += 1;
        } else {
            break;
        }
    }
    j
}
