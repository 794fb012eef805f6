use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{ErrorPolicy, IngestError, RecordError, RecordErrorKind};
use crate::exec::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefKind {
    Original,
    Retweet,
    Reply,
    Quote,
    Mention,
}

impl RefKind {
    pub const ALL: [RefKind; 5] = [
        RefKind::Original,
        RefKind::Retweet,
        RefKind::Reply,
        RefKind::Quote,
        RefKind::Mention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RefKind::Original => "original",
            RefKind::Retweet => "retweet",
            RefKind::Reply => "reply",
            RefKind::Quote => "quote",
            RefKind::Mention => "mention",
        }
    }

    /// Parses a kind label. Unknown labels return `None`.
    pub fn parse(s: &str) -> Option<RefKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Some(RefKind::Original),
            "retweet" | "retweeted" => Some(RefKind::Retweet),
            "reply" | "replied_to" => Some(RefKind::Reply),
            "quote" | "quoted" => Some(RefKind::Quote),
            "mention" => Some(RefKind::Mention),
            _ => None,
        }
    }
}

impl fmt::Display for RefKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One social post.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TweetRecord {
    pub id: String,
    pub author_id: Option<String>,
    /// UTC epoch milliseconds.
    pub created_at: i64,
    pub text: String,
    pub ref_kind: RefKind,
    pub ref_id: Option<String>,
    pub like_count: u64,
    pub view_count: u64,
    pub place: Option<String>,
}

impl TweetRecord {
    pub fn original(id: impl Into<String>, author_id: Option<&str>, created_at: i64, text: impl Into<String>) -> Self {
        TweetRecord {
            id: id.into(),
            author_id: author_id.map(str::to_owned),
            created_at,
            text: text.into(),
            ref_kind: RefKind::Original,
            ref_id: None,
            like_count: 0,
            view_count: 0,
            place: None,
        }
    }

    pub fn referencing(
        id: impl Into<String>,
        author_id: Option<&str>,
        created_at: i64,
        text: impl Into<String>,
        kind: RefKind,
        ref_id: impl Into<String>,
    ) -> Self {
        TweetRecord {
            ref_kind: kind,
            ref_id: Some(ref_id.into()),
            ..TweetRecord::original(id, author_id, created_at, text)
        }
    }

    /// Checks the single-record invariants (uniqueness is a corpus property).
    pub fn validate(&self) -> Result<(), RecordErrorKind> {
        if self.id.is_empty() {
            return Err(RecordErrorKind::EmptyId);
        }
        if self.created_at < 0 {
            return Err(RecordErrorKind::InvalidTimestamp(self.created_at.to_string()));
        }
        match (self.ref_kind, &self.ref_id) {
            (RefKind::Original, Some(r)) => Err(RecordErrorKind::OriginalWithReference(r.clone())),
            (RefKind::Original, None) => Ok(()),
            (kind, None) => Err(RecordErrorKind::DanglingReferenceKind(kind)),
            (_, Some(_)) => Ok(()),
        }
    }
}

/// Parser output. Bad records are listed in `errors` under [`ErrorPolicy::Skip`].
#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub records: Vec<TweetRecord>,
    pub errors: Vec<RecordError>,
    /// Records whose `ref_kind` label was unknown and was mapped to `mention`.
    pub unknown_kind_warnings: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Token {
    Str(String),
    Num(u64),
}

impl Token {
    fn into_opt(self) -> Option<String> {
        let s = match self {
            Token::Str(s) => s,
            Token::Num(n) => n.to_string(),
        };
        let t = s.trim();
        (!t.is_empty()).then(|| t.to_owned())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTime {
    Millis(i64),
    Text(String),
}

#[derive(Deserialize)]
struct RawRecord {
    id: Token,
    #[serde(default)]
    author_id: Option<Token>,
    created_at: RawTime,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    ref_kind: Option<String>,
    #[serde(default)]
    ref_id: Option<Token>,
    #[serde(default)]
    like_count: Option<u64>,
    #[serde(default)]
    view_count: Option<u64>,
    #[serde(default)]
    place: Option<String>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    author_id: Option<&'a str>,
    created_at: i64,
    text: &'a str,
    ref_kind: RefKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    ref_id: Option<&'a str>,
    like_count: u64,
    view_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    place: Option<&'a str>,
}

/// Normalizes a timestamp to UTC epoch milliseconds.
pub(crate) fn parse_timestamp(raw: &str) -> Result<i64, RecordErrorKind> {
    let s = raw.trim();
    let bad = || RecordErrorKind::InvalidTimestamp(raw.to_owned());
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        return s.parse::<i64>().map_err(|_| bad());
    }
    let ms = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.timestamp_millis()
    } else if let Some(dt) = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
    {
        dt.and_utc().timestamp_millis()
    } else if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        d.and_hms_opt(0, 0, 0).ok_or_else(bad)?.and_utc().timestamp_millis()
    } else {
        return Err(bad());
    };
    if ms < 0 {
        return Err(bad());
    }
    Ok(ms)
}

fn parse_line(line: &str) -> Result<(TweetRecord, bool), RecordErrorKind> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| RecordErrorKind::Malformed(e.to_string()))?;
    let created_at = match raw.created_at {
        RawTime::Millis(ms) if ms >= 0 => ms,
        RawTime::Millis(ms) => return Err(RecordErrorKind::InvalidTimestamp(ms.to_string())),
        RawTime::Text(s) => parse_timestamp(&s)?,
    };
    let ref_id = raw.ref_id.and_then(Token::into_opt);
    let mut unknown_kind = false;
    let ref_kind = match raw.ref_kind.as_deref().map(str::trim) {
        None | Some("") if ref_id.is_none() => RefKind::Original,
        None | Some("") => return Err(RecordErrorKind::Malformed("ref_id given without ref_kind".into())),
        Some(label) => RefKind::parse(label).unwrap_or_else(|| {
            unknown_kind = true;
            RefKind::Mention
        }),
    };
    let record = TweetRecord {
        id: raw.id.into_opt().ok_or(RecordErrorKind::EmptyId)?,
        author_id: raw.author_id.and_then(Token::into_opt),
        created_at,
        text: raw.text.unwrap_or_default(),
        ref_kind,
        ref_id,
        like_count: raw.like_count.unwrap_or(0),
        view_count: raw.view_count.unwrap_or(0),
        place: raw.place.filter(|p| !p.trim().is_empty()),
    };
    record.validate()?;
    Ok((record, unknown_kind))
}

/// Parses a line-delimited corpus with the default execution mode.
pub fn parse_corpus<R: BufRead>(source: R, policy: ErrorPolicy) -> Result<ParsedCorpus, IngestError> {
    parse_corpus_with(Exec::default(), source, policy)
}

/// Parses a line-delimited corpus. Blank lines are ignored; input order is
/// preserved. Lines are decoded in parallel, then ids are checked for
/// uniqueness in line order.
pub fn parse_corpus_with<R: BufRead>(exec: Exec, source: R, policy: ErrorPolicy) -> Result<ParsedCorpus, IngestError> {
    let mut lines = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    let parsed = exec.map(&lines, |(no, line)| {
        parse_line(line).map_err(|kind| RecordError { line: *no, kind })
    });

    let mut out = ParsedCorpus::default();
    let mut seen = HashSet::with_capacity(parsed.len());
    for (result, (no, _)) in parsed.into_iter().zip(&lines) {
        let result = result.and_then(|(rec, warned)| {
            if seen.insert(rec.id.clone()) {
                Ok((rec, warned))
            } else {
                Err(RecordError {
                    line: *no,
                    kind: RecordErrorKind::DuplicateId(rec.id),
                })
            }
        });
        match result {
            Ok((rec, warned)) => {
                out.unknown_kind_warnings += usize::from(warned);
                out.records.push(rec);
            }
            Err(e) if policy == ErrorPolicy::Abort => return Err(e.into()),
            Err(e) => out.errors.push(e),
        }
    }
    Ok(out)
}

/// Writes records in the ingest format, one JSON object per line.
pub fn write_corpus<W: Write>(mut out: W, records: &[TweetRecord]) -> std::io::Result<()> {
    for r in records {
        let row = OutRecord {
            id: &r.id,
            author_id: r.author_id.as_deref(),
            created_at: r.created_at,
            text: &r.text,
            ref_kind: r.ref_kind,
            ref_id: r.ref_id.as_deref(),
            like_count: r.like_count,
            view_count: r.view_count,
            place: r.place.as_deref(),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> ParsedCorpus {
        parse_corpus(s.as_bytes(), ErrorPolicy::Skip).unwrap()
    }

    #[test]
    fn empty_stream() {
        let p = parse("");
        assert!(p.records.is_empty() && p.errors.is_empty());
    }

    #[test]
    fn one_original() {
        let p = parse(r#"{"id":"t0","author_id":"a","created_at":0,"text":"hi","ref_kind":"original"}"#);
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].ref_kind, RefKind::Original);
        assert_eq!(p.records[0].ref_id, None);
    }

    #[test]
    fn retweet_without_ref_is_dangling() {
        let p = parse(
            "{\"id\":\"t0\",\"created_at\":0,\"text\":\"\"}\n{\"id\":\"t1\",\"created_at\":5,\"text\":\"\",\"ref_kind\":\"retweet\"}",
        );
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.errors.len(), 1);
        assert_eq!(p.errors[0].line, 2);
        assert_eq!(p.errors[0].kind, RecordErrorKind::DanglingReferenceKind(RefKind::Retweet));
        assert!(p.errors[0].to_string().contains("dangling reference kind"));
    }

    #[test]
    fn abort_policy_stops() {
        let src = "not json\n{\"id\":\"t1\",\"created_at\":5}";
        let err = parse_corpus(src.as_bytes(), ErrorPolicy::Abort).unwrap_err();
        match err {
            IngestError::Record(RecordError { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_numeric_tokens() {
        let p = parse(
            "{\"id\":123,\"created_at\":1}\n{\"id\":\"123\",\"created_at\":2}\n{\"id\":7,\"created_at\":3,\"ref_kind\":\"retweet\",\"ref_id\":123}",
        );
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[1].ref_id.as_deref(), Some("123"));
        assert_eq!(p.errors[0].kind, RecordErrorKind::DuplicateId("123".into()));
    }

    #[test]
    fn unknown_kind_maps_to_mention() {
        let p = parse(r#"{"id":"x","created_at":0,"ref_kind":"boost","ref_id":"y"}"#);
        assert_eq!(p.records[0].ref_kind, RefKind::Mention);
        assert_eq!(p.unknown_kind_warnings, 1);
    }

    #[test]
    fn original_with_reference_rejected() {
        let p = parse(r#"{"id":"x","created_at":0,"ref_kind":"original","ref_id":"y"}"#);
        assert!(matches!(p.errors[0].kind, RecordErrorKind::OriginalWithReference(_)));
    }

    #[test]
    fn timestamps_normalize() {
        assert_eq!(parse_timestamp("1700000000000").unwrap(), 1_700_000_000_000);
        assert_eq!(parse_timestamp("1970-01-01T00:01:00Z").unwrap(), 60_000);
        assert_eq!(parse_timestamp("1970-01-01T01:00:00+01:00").unwrap(), 0);
        assert_eq!(parse_timestamp("1970-01-01 00:00:01.5").unwrap(), 1_500);
        assert_eq!(parse_timestamp("1970-01-02").unwrap(), 86_400_000);
        assert!(parse_timestamp("1969-12-31T23:59:59Z").is_err());
        assert!(parse_timestamp("yesterday").is_err());
        let p = parse(r#"{"id":"x","created_at":-4}"#);
        assert!(matches!(p.errors[0].kind, RecordErrorKind::InvalidTimestamp(_)));
    }

    fn arb_record() -> impl Strategy<Value = TweetRecord> {
        (
            "[a-z0-9]{1,8}",
            proptest::option::of("[a-z0-9]{1,6}"),
            0i64..4_000_000_000_000,
            "\\PC{0,40}",
            0usize..5,
            "[a-z0-9]{1,8}",
            any::<u32>(),
            any::<u32>(),
            proptest::option::of("[A-Za-z ]{0,10}[A-Za-z]"),
        )
            .prop_map(|(id, author, ts, text, k, rid, likes, views, place)| {
                let kind = RefKind::ALL[k];
                TweetRecord {
                    id,
                    author_id: author,
                    created_at: ts,
                    text,
                    ref_kind: kind,
                    ref_id: (kind != RefKind::Original).then_some(rid),
                    like_count: likes as u64,
                    view_count: views as u64,
                    place: place.filter(|p| !p.trim().is_empty()),
                }
            })
    }

    proptest! {
        #[test]
        fn serialize_round_trip(mut recs in proptest::collection::vec(arb_record(), 0..20)) {
            let mut seen = HashSet::new();
            recs.retain(|r| seen.insert(r.id.clone()));
            let mut buf = Vec::new();
            write_corpus(&mut buf, &recs).unwrap();
            let back = parse_corpus(buf.as_slice(), ErrorPolicy::Abort).unwrap();
            prop_assert_eq!(back.records, recs);
        }
    }
}
