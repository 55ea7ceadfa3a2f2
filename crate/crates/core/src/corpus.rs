//! Dataset ingestion, tokenization and n-gram extraction.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde_json::Value;

use crate::error::{Error, Result};

/// Character inserted between instruction and response for
/// [`ContentSide::Both`]. The tokenizer treats it as a hard segment break so
/// no n-gram window spans it.
pub const CONTENT_BOUNDARY: char = '\u{1E}';

/// Highest n-gram order supported.
pub const MAX_ORDER: usize = 3;

/// One instruction/response pair. `id` is the record's position in the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub id: usize,
    pub instruction: String,
    pub response: String,
}

/// A loaded instance together with the exact input line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRecord {
    pub instance: TrainingInstance,
    pub raw: String,
}

/// Normalized text unit: non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    /// Returns `None` for empty surfaces or surfaces containing whitespace.
    pub fn new(surface: impl Into<String>) -> Option<Self> {
        let surface = surface.into();
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(surface))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Contiguous token sequence of length 1..=3. The order is the length, so
/// equality and hashing cover (order, tokens).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NGram(Vec<Token>);

impl NGram {
    pub fn new(tokens: Vec<Token>) -> Option<Self> {
        (1..=MAX_ORDER)
            .contains(&tokens.len())
            .then_some(NGram(tokens))
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t.as_str())?;
        }
        Ok(())
    }
}

/// Set of n-gram orders, a non-empty subset of {1, 2, 3}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NGramOrders(u8);

impl NGramOrders {
    pub const ALL: NGramOrders = NGramOrders(0b111);
    pub const UNIGRAMS: NGramOrders = NGramOrders(0b001);

    pub fn new(orders: &[usize]) -> Result<Self> {
        let mut mask = 0u8;
        for &n in orders {
            if !(1..=MAX_ORDER).contains(&n) {
                return Err(Error::Config(format!(
                    "n-gram order {n} outside 1..={MAX_ORDER}"
                )));
            }
            mask |= 1 << (n - 1);
        }
        if mask == 0 {
            return Err(Error::Config(
                "at least one n-gram order is required".into(),
            ));
        }
        Ok(NGramOrders(mask))
    }

    pub fn contains(self, n: usize) -> bool {
        (1..=MAX_ORDER).contains(&n) && self.0 & (1 << (n - 1)) != 0
    }

    /// Orders in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (1..=MAX_ORDER).filter(move |&n| self.contains(n))
    }
}

impl Default for NGramOrders {
    fn default() -> Self {
        NGramOrders::ALL
    }
}

impl FromStr for NGramOrders {
    type Err = Error;

    /// Parses a comma-separated list such as `1,2,3`.
    fn from_str(s: &str) -> Result<Self> {
        let orders = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| Error::Config(format!("invalid n-gram order {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        NGramOrders::new(&orders)
    }
}

impl fmt::Display for NGramOrders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Which text of an instance feeds the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ContentSide {
    #[default]
    Instruction,
    Response,
    Both,
}

impl FromStr for ContentSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "instruction" => Ok(ContentSide::Instruction),
            "response" => Ok(ContentSide::Response),
            "both" => Ok(ContentSide::Both),
            other => Err(Error::Config(format!("unknown content side {other:?}"))),
        }
    }
}

/// How non-alphanumeric characters are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Punctuation {
    /// Every punctuation or symbol character becomes its own token.
    Split,
    /// Punctuation and symbols are discarded.
    Drop,
    /// Only whitespace separates tokens.
    Attach,
}

/// Tokenization policy. The default lowercases, splits on whitespace and
/// emits each punctuation character as a separate token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenizerPolicy {
    pub lowercase: bool,
    pub punctuation: Punctuation,
}

impl TokenizerPolicy {
    pub const DEFAULT: TokenizerPolicy = TokenizerPolicy {
        lowercase: true,
        punctuation: Punctuation::Split,
    };
    pub const WORDS: TokenizerPolicy = TokenizerPolicy {
        lowercase: true,
        punctuation: Punctuation::Drop,
    };
    pub const WHITESPACE: TokenizerPolicy = TokenizerPolicy {
        lowercase: true,
        punctuation: Punctuation::Attach,
    };
}

impl Default for TokenizerPolicy {
    fn default() -> Self {
        TokenizerPolicy::DEFAULT
    }
}

impl FromStr for TokenizerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(TokenizerPolicy::DEFAULT),
            "words" => Ok(TokenizerPolicy::WORDS),
            "whitespace" => Ok(TokenizerPolicy::WHITESPACE),
            other => Err(Error::Config(format!("unknown tokenizer policy {other:?}"))),
        }
    }
}

fn push_word(out: &mut Vec<Token>, word: &mut String, lowercase: bool) {
    if word.is_empty() {
        return;
    }
    let surface = if lowercase {
        word.to_lowercase()
    } else {
        word.clone()
    };
    word.clear();
    out.push(Token(surface));
}

/// Splits `text` into segments at [`CONTENT_BOUNDARY`] and tokenizes each.
/// Segments that produce no tokens are dropped.
pub fn tokenize_segments(text: &str, policy: TokenizerPolicy) -> Vec<Vec<Token>> {
    text.split(CONTENT_BOUNDARY)
        .map(|segment| tokenize_segment(segment, policy))
        .filter(|s| !s.is_empty())
        .collect()
}

fn tokenize_segment(text: &str, policy: TokenizerPolicy) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() || c == CONTENT_BOUNDARY {
            push_word(&mut out, &mut word, policy.lowercase);
        } else if c.is_alphanumeric() || policy.punctuation == Punctuation::Attach {
            word.push(c);
        } else {
            push_word(&mut out, &mut word, policy.lowercase);
            if policy.punctuation == Punctuation::Split {
                word.push(c);
                push_word(&mut out, &mut word, policy.lowercase);
            }
        }
    }
    push_word(&mut out, &mut word, policy.lowercase);
    out
}

/// Tokenizes `text` into a flat sequence. Segment boundaries are dropped; use
/// [`tokenize_segments`] when windows must not cross them.
pub fn tokenize(text: &str, policy: TokenizerPolicy) -> Vec<Token> {
    tokenize_segments(text, policy)
        .into_iter()
        .flatten()
        .collect()
}

/// Counts every contiguous window of each requested order. Entries are kept
/// in first-occurrence order (orders ascending, then window start).
pub fn extract_ngrams(tokens: &[Token], orders: NGramOrders) -> IndexMap<NGram, usize> {
    let mut counts = IndexMap::new();
    for n in orders.iter() {
        for window in tokens.windows(n) {
            *counts.entry(NGram(window.to_vec())).or_insert(0) += 1;
        }
    }
    counts
}

/// Text of `instance` for the requested side.
pub fn select_content(instance: &TrainingInstance, side: ContentSide) -> String {
    match side {
        ContentSide::Instruction => instance.instruction.clone(),
        ContentSide::Response => instance.response.clone(),
        ContentSide::Both => {
            let mut s =
                String::with_capacity(instance.instruction.len() + instance.response.len() + 1);
            s.push_str(&instance.instruction);
            s.push(CONTENT_BOUNDARY);
            s.push_str(&instance.response);
            s
        }
    }
}

/// N-gram counts of the selected content with no window crossing the
/// instruction/response boundary.
pub fn content_ngrams(
    instance: &TrainingInstance,
    side: ContentSide,
    orders: NGramOrders,
    policy: TokenizerPolicy,
) -> IndexMap<NGram, usize> {
    let mut counts = IndexMap::new();
    for segment in tokenize_segments(&select_content(instance, side), policy) {
        for (g, c) in extract_ngrams(&segment, orders) {
            *counts.entry(g).or_insert(0) += c;
        }
    }
    counts
}

fn string_field<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    line: usize,
) -> Result<Option<&'a str>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(Error::Parse {
            line,
            message: format!("field {key:?} must be a string"),
        }),
    }
}

/// Reads line-delimited JSON records with `instruction` and `response`
/// (alias `output`) string fields. Blank lines are skipped; ids follow the
/// order of the non-blank records.
pub fn load_records<R: Read>(source: R) -> Result<Vec<SourceRecord>> {
    let mut reader = BufReader::new(source);
    let mut records = Vec::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::Parse {
                line: line_no + 1,
                message: format!("read failed: {e}"),
            })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let text = std::str::from_utf8(&buf).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("invalid UTF-8: {e}"),
        })?;
        let raw = text.strip_suffix('\n').unwrap_or(text);
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("malformed record: {e}"),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "record is not a JSON object".into(),
        })?;
        let instruction =
            string_field(obj, "instruction", line_no)?.ok_or_else(|| Error::Parse {
                line: line_no,
                message: "missing field \"instruction\"".into(),
            })?;
        if instruction.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty instruction".into(),
            });
        }
        let response = match string_field(obj, "response", line_no)? {
            Some(r) => r,
            None => string_field(obj, "output", line_no)?.ok_or_else(|| Error::Parse {
                line: line_no,
                message: "missing field \"response\" (or \"output\")".into(),
            })?,
        };
        records.push(SourceRecord {
            instance: TrainingInstance {
                id: records.len(),
                instruction: instruction.to_owned(),
                response: response.to_owned(),
            },
            raw: raw.to_owned(),
        });
    }
    Ok(records)
}

pub fn load_dataset<R: Read>(source: R) -> Result<Vec<TrainingInstance>> {
    Ok(load_records(source)?
        .into_iter()
        .map(|r| r.instance)
        .collect())
}

pub fn load_records_from_path(path: &Path) -> Result<Vec<SourceRecord>> {
    let file = File::open(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })?;
    load_records(file)
}

pub fn load_dataset_from_path(path: &Path) -> Result<Vec<TrainingInstance>> {
    Ok(load_records_from_path(path)?
        .into_iter()
        .map(|r| r.instance)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token::new(*w).unwrap()).collect()
    }

    fn gram(words: &[&str]) -> NGram {
        NGram::new(toks(words)).unwrap()
    }

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(Token::as_str).collect()
    }

    #[test]
    fn tokenize_default_policy() {
        let p = TokenizerPolicy::DEFAULT;
        assert_eq!(
            surfaces(&tokenize("Hello, world!", p)),
            ["hello", ",", "world", "!"]
        );
        assert!(tokenize("", p).is_empty());
        assert_eq!(surfaces(&tokenize("A  A", p)), ["a", "a"]);
        assert_eq!(
            surfaces(&tokenize("Ünïcode\tTEXT\n", p)),
            ["ünïcode", "text"]
        );
    }

    #[test]
    fn tokenize_alternate_policies() {
        assert_eq!(
            surfaces(&tokenize("Don't stop.", TokenizerPolicy::WORDS)),
            ["don", "t", "stop"]
        );
        assert_eq!(
            surfaces(&tokenize("Don't stop.", TokenizerPolicy::WHITESPACE)),
            ["don't", "stop."]
        );
        let keep_case = TokenizerPolicy {
            lowercase: false,
            ..TokenizerPolicy::DEFAULT
        };
        assert_eq!(surfaces(&tokenize("Ab c", keep_case)), ["Ab", "c"]);
    }

    #[test]
    fn token_rejects_whitespace_and_empty() {
        assert!(Token::new("").is_none());
        assert!(Token::new("a b").is_none());
        assert!(Token::new("ab").is_some());
    }

    #[test]
    fn extract_counts_windows() {
        let counts = extract_ngrams(&toks(&["a", "b", "a"]), NGramOrders::new(&[1, 2]).unwrap());
        assert_eq!(counts.len(), 4);
        assert_eq!(counts[&gram(&["a"])], 2);
        assert_eq!(counts[&gram(&["b"])], 1);
        assert_eq!(counts[&gram(&["a", "b"])], 1);
        assert_eq!(counts[&gram(&["b", "a"])], 1);

        let none = extract_ngrams(&toks(&["a"]), NGramOrders::new(&[2, 3]).unwrap());
        assert!(none.is_empty());

        let tri = extract_ngrams(&toks(&["a", "b", "c"]), NGramOrders::new(&[3]).unwrap());
        assert_eq!(tri.len(), 1);
        assert_eq!(tri[&gram(&["a", "b", "c"])], 1);
    }

    #[test]
    fn orders_parse_and_validate() {
        assert_eq!("1,2,3".parse::<NGramOrders>().unwrap(), NGramOrders::ALL);
        assert_eq!(
            "2".parse::<NGramOrders>()
                .unwrap()
                .iter()
                .collect::<Vec<_>>(),
            [2]
        );
        assert!("4".parse::<NGramOrders>().is_err());
        assert!("".parse::<NGramOrders>().is_err());
        assert!(NGramOrders::new(&[0]).is_err());
    }

    #[test]
    fn content_sides() {
        let inst = TrainingInstance {
            id: 0,
            instruction: "x".into(),
            response: "y".into(),
        };
        assert_eq!(select_content(&inst, ContentSide::Instruction), "x");
        assert_eq!(select_content(&inst, ContentSide::Response), "y");

        let both = content_ngrams(
            &inst,
            ContentSide::Both,
            NGramOrders::ALL,
            TokenizerPolicy::DEFAULT,
        );
        assert_eq!(both.len(), 2);
        assert!(both.contains_key(&gram(&["x"])));
        assert!(both.contains_key(&gram(&["y"])));
        assert!(!both.contains_key(&gram(&["x", "y"])));
    }

    #[test]
    fn both_side_keeps_windows_inside_each_text() {
        let inst = TrainingInstance {
            id: 0,
            instruction: "a b".into(),
            response: "c d".into(),
        };
        let grams = content_ngrams(
            &inst,
            ContentSide::Both,
            NGramOrders::ALL,
            TokenizerPolicy::DEFAULT,
        );
        let mut keys: Vec<String> = grams.keys().map(|g| g.to_string()).collect();
        keys.sort();
        assert_eq!(keys, ["a", "a b", "b", "c", "c d", "d"]);
    }

    #[test]
    fn load_basic_records() {
        let data = "{\"instruction\":\"a\",\"response\":\"b\"}\n{\"instruction\":\"c\",\"response\":\"d\"}\n";
        let inst = load_dataset(data.as_bytes()).unwrap();
        assert_eq!(inst.iter().map(|i| i.id).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(inst[1].instruction, "c");
        assert_eq!(inst[1].response, "d");
    }

    #[test]
    fn load_empty_file() {
        assert!(load_dataset(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn load_accepts_output_alias_and_empty_response() {
        let data =
            "{\"instruction\":\"a\",\"output\":\"b\"}\n\n{\"instruction\":\"c\",\"response\":\"\"}";
        let recs = load_records(data.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].instance.response, "b");
        assert_eq!(recs[1].instance.id, 1);
        assert_eq!(recs[1].raw, "{\"instruction\":\"c\",\"response\":\"\"}");
    }

    #[test]
    fn load_errors_name_the_line() {
        let missing = "{\"response\":\"b\"}\n";
        match load_dataset(missing.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }

        let second_bad = "{\"instruction\":\"a\",\"response\":\"b\"}\nnot json\n";
        assert!(matches!(
            load_dataset(second_bad.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));

        let empty_instr = "{\"instruction\":\"  \",\"response\":\"b\"}\n";
        assert!(matches!(
            load_dataset(empty_instr.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));

        let no_response = "{\"instruction\":\"a\"}\n";
        assert!(matches!(
            load_dataset(no_response.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));

        let mut bytes = b"{\"instruction\":\"a\",\"response\":\"b\"}\n".to_vec();
        bytes.extend_from_slice(b"{\"instruction\":\"\xff\",\"response\":\"b\"}\n");
        assert!(matches!(
            load_dataset(bytes.as_slice()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn load_missing_file_is_read_error() {
        let err = load_dataset_from_path(Path::new("/nonexistent/graphfilter.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Read { .. }));
    }
}
