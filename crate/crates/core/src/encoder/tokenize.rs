pub const MAX_CAPTION_TOKENS: usize = 40;
pub const MAX_QUESTION_TOKENS: usize = 20;
pub const MAX_ANSWER_TOKENS: usize = 20;
/// Joins question and answer inside a history node.
pub const SEPARATOR: &str = "|";

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Pronouns whose `'s` means "is"; elsewhere it is a possessive and dropped.
const IS_STEMS: [&str; 12] = [
    "it", "he", "she", "that", "what", "there", "here", "who", "where", "how", "when", "why",
];

/// Lowercases, expands contractions, spells digits as words, splits
/// punctuation into single-character tokens and keeps the first `max_len`.
pub fn tokenize(text: &str, max_len: usize) -> Vec<String> {
    let lower = text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    let chars: Vec<char> = lower.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() && out.len() < max_len {
        let c = chars[i];
        if c.is_alphanumeric() {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric()
                    || (chars[i] == '\''
                        && i + 1 < chars.len()
                        && chars[i + 1].is_alphanumeric()))
            {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            for piece in expand_contraction(&word) {
                spell_digits(&piece, &mut out);
            }
        } else {
            if !c.is_whitespace() && c != '\'' {
                out.push(c.to_string());
            }
            i += 1;
        }
    }
    out.truncate(max_len);
    out
}

fn expand_contraction(word: &str) -> Vec<String> {
    if !word.contains('\'') {
        return vec![word.to_string()];
    }
    let fixed: &[&str] = match word {
        "can't" => &["can", "not"],
        "won't" => &["will", "not"],
        "shan't" => &["shall", "not"],
        "ain't" => &["is", "not"],
        "let's" => &["let", "us"],
        _ => &[],
    };
    if !fixed.is_empty() {
        return fixed.iter().map(|s| s.to_string()).collect();
    }
    const SUFFIXES: [(&str, &str); 6] = [
        ("n't", "not"),
        ("'re", "are"),
        ("'m", "am"),
        ("'ll", "will"),
        ("'ve", "have"),
        ("'d", "would"),
    ];
    let strip = |s: &str| s.replace('\'', "");
    for (suffix, expansion) in SUFFIXES {
        if let Some(stem) = word.strip_suffix(suffix) {
            if !stem.is_empty() {
                return vec![strip(stem), expansion.to_string()];
            }
        }
    }
    if let Some(stem) = word.strip_suffix("'s") {
        let stem = strip(stem);
        if IS_STEMS.contains(&stem.as_str()) {
            return vec![stem, "is".to_string()];
        }
        return vec![stem];
    }
    vec![strip(word)]
}

fn spell_digits(word: &str, out: &mut Vec<String>) {
    let mut rest = word;
    while !rest.is_empty() {
        let digits = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        if digits > 0 {
            spell_number(&rest[..digits], out);
            rest = &rest[digits..];
        } else {
            let end = rest.find(|c: char| c.is_ascii_digit()).unwrap_or(rest.len());
            out.push(rest[..end].to_string());
            rest = &rest[end..];
        }
    }
}

fn spell_number(digits: &str, out: &mut Vec<String>) {
    let bytes = digits.as_bytes();
    if bytes.len() <= 2 && !(bytes.len() == 2 && bytes[0] == b'0') {
        let n: usize = digits.parse().expect("ascii digits");
        if n < 20 {
            out.push(ONES[n].to_string());
        } else {
            out.push(TENS[n / 10].to_string());
            if n % 10 != 0 {
                out.push(ONES[n % 10].to_string());
            }
        }
    } else {
        out.extend(bytes.iter().map(|b| ONES[(b - b'0') as usize].to_string()));
    }
}
