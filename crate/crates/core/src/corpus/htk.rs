//! HTK label files: `start end name` with times in 100 ns units.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phonoset::{normalize_symbol, PhoneAlignment, PhoneSpan, CMUBET, SILENCE};

/// 10 ms in HTK's 100 ns time units.
pub const HTK_UNITS_PER_FRAME: u64 = 100_000;

/// Pause symbols used by common label sets, read as silence.
const SILENCE_ALIASES: [&str; 4] = ["pau", "sp", "h#", "ssil"];

fn phone_of(token: &str) -> String {
    let core = match (token.find('-'), token.find('+')) {
        (Some(a), Some(b)) if a < b => &token[a + 1..b],
        _ => token,
    };
    let sym = normalize_symbol(core);
    if SILENCE_ALIASES.contains(&sym.as_str()) {
        SILENCE.to_string()
    } else {
        sym
    }
}

/// Parses label text; `name` labels errors. Returns the alignment and any warnings.
pub fn parse_htk_str(text: &str, name: &str) -> Result<(PhoneAlignment, Vec<String>)> {
    let mut spans: Vec<PhoneSpan> = Vec::new();
    let mut warnings = Vec::new();
    let mut prev_end: Option<u64> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line == "." || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::parse(name, line_no, "expected `start end label`"));
        }
        let parse_time = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::parse(name, line_no, format!("bad time `{s}`")))
        };
        let (start, end) = (parse_time(toks[0])?, parse_time(toks[1])?);
        if end < start {
            return Err(Error::parse(name, line_no, format!("end {end} precedes start {start}")));
        }
        match prev_end {
            None if start != 0 => {
                return Err(Error::parse(name, line_no, "first label must start at 0"));
            }
            Some(p) if start < p => {
                return Err(Error::parse(name, line_no, format!("overlaps previous label ending at {p}")));
            }
            Some(p) if start > p => {
                return Err(Error::parse(name, line_no, format!("gap after previous label ending at {p}")));
            }
            _ => {}
        }
        prev_end = Some(end);
        let phone = phone_of(toks[2]);
        if phone != SILENCE && !CMUBET.contains(&phone.as_str()) {
            return Err(Error::parse(name, line_no, format!("unknown phoneme `{}`", toks[2])));
        }
        let (fs, fe) = (
            (start / HTK_UNITS_PER_FRAME) as usize,
            (end / HTK_UNITS_PER_FRAME) as usize,
        );
        if fe <= fs {
            warnings.push(format!("{name}:{line_no}: dropped `{phone}` shorter than one frame"));
            continue;
        }
        // A dropped sub-frame label leaves its frame to the next span.
        let fs = spans.last().map_or(0, |s| s.end);
        spans.push(PhoneSpan::new(phone, fs, fe));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let align = PhoneAlignment::new(spans).map_err(|e| Error::parse(name, 0, e.to_string()))?;
    Ok((align, warnings))
}

pub fn parse_htk_labels(path: &Path) -> Result<PhoneAlignment> {
    let text = crate::error::read_text(path)?;
    Ok(parse_htk_str(&text, &path.display().to_string())?.0)
}

pub fn write_htk_labels(align: &PhoneAlignment, path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in align.entries() {
        writeln!(
            out,
            "{} {} {}",
            e.start as u64 * HTK_UNITS_PER_FRAME,
            e.end as u64 * HTK_UNITS_PER_FRAME,
            e.phone
        )
        .expect("string write");
    }
    crate::error::write_bytes(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PhoneAlignment> {
        parse_htk_str(text, "t.lab").map(|r| r.0)
    }

    #[test]
    fn converts_units_to_frames() {
        let a = parse("0 1000000 sil\n1000000 1500000 AA1\n").unwrap();
        assert_eq!(a.entries()[0], PhoneSpan::new("sil", 0, 10));
        assert_eq!(a.entries()[1], PhoneSpan::new("aa", 10, 15));
    }

    #[test]
    fn full_context_tokens() {
        let a = parse("0 500000 x^sil-ey+t=k@1_1\n").unwrap();
        assert_eq!(a.entries()[0].phone, "ey");
        assert_eq!(parse("0 500000 pau\n").unwrap().entries()[0].phone, "sil");
    }

    #[test]
    fn rejects_bad_order() {
        let err = parse("500 400 aa\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse("0 500000 aa\n400000 900000 iy\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("0 500000 aa\n600000 900000 iy\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse("0 500000 qq\n").is_err());
    }

    #[test]
    fn drops_sub_frame_labels() {
        let (a, w) = parse_htk_str("0 1000000 sil\n1000000 1050000 t\n1050000 2000000 aa\n", "t").unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(a.entries().len(), 2);
        assert_eq!(a.entries()[1], PhoneSpan::new("aa", 10, 20));
    }

    #[test]
    fn write_then_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.lab");
        let a = PhoneAlignment::new(vec![PhoneSpan::new("sil", 0, 4), PhoneSpan::new("m", 4, 9)]).unwrap();
        write_htk_labels(&a, &p).unwrap();
        assert_eq!(parse_htk_labels(&p).unwrap(), a);
    }
}
