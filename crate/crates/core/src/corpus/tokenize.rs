const SPLIT_MARKS: [char; 5] = ['.', ',', '!', '?', '\''];

/// Lowercases `text`, splits on whitespace, and emits each of `. , ! ? '` as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars().flat_map(char::to_lowercase) {
            if SPLIT_MARKS.contains(&ch) {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(ch.to_string());
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

/// Joins tokens back into display text, attaching punctuation to the preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = false;
    for tok in tokens {
        let tok = tok.as_ref();
        let is_mark = tok.len() == 1 && tok.chars().all(|c| SPLIT_MARKS.contains(&c));
        if !out.is_empty() && !is_mark && !glue_next {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = tok == "'";
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize("Hello, world!"), ["hello", ",", "world", "!"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("don't"), ["don", "'", "t"]);
    }

    #[test]
    fn whitespace_and_case() {
        assert_eq!(tokenize("  How ARE\tyou?\n"), ["how", "are", "you", "?"]);
        assert_eq!(tokenize("..."), [".", ".", "."]);
    }

    #[test]
    fn detokenize_reattaches_marks() {
        let toks = tokenize("I don't know, really.");
        assert_eq!(detokenize(&toks), "i don't know, really.");
    }
}
