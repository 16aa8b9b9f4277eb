use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

use super::{Mode, Value, Warning};

const MAX_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bencode: {kind} at byte {offset}")]
pub struct DecodeError {
    pub kind: DecodeErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("unexpected byte 0x{0:02x}")]
    UnexpectedByte(u8),
    #[error("invalid integer")]
    InvalidInteger,
    #[error("integer has a leading zero")]
    LeadingZero,
    #[error("negative zero")]
    NegativeZero,
    #[error("integer out of 64-bit range")]
    IntegerOverflow,
    #[error("invalid string length")]
    InvalidLength,
    #[error("dictionary keys not sorted")]
    UnsortedKeys,
    #[error("duplicate dictionary key")]
    DuplicateKey,
    #[error("nesting too deep")]
    TooDeep,
    #[error("trailing bytes after value")]
    TrailingBytes,
    #[error("top-level value is not a dictionary")]
    NotADict,
}

/// A decoded document plus anything lenient mode had to tolerate.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub value: Value,
    pub warnings: Vec<Warning>,
}

/// A top-level dictionary with the source byte span of each value.
#[derive(Debug, Clone)]
pub struct RawDict {
    pub entries: BTreeMap<Vec<u8>, Value>,
    pub spans: BTreeMap<Vec<u8>, Range<usize>>,
    pub warnings: Vec<Warning>,
}

impl RawDict {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key.as_bytes())
    }

    pub fn span(&self, key: &str) -> Option<Range<usize>> {
        self.spans.get(key.as_bytes()).cloned()
    }
}

/// Strict decode of a complete document.
pub fn decode(bytes: &[u8]) -> Result<Value, DecodeError> {
    decode_with(bytes, Mode::Strict).map(|d| d.value)
}

pub fn decode_with(bytes: &[u8], mode: Mode) -> Result<Decoded, DecodeError> {
    let mut p = Parser::new(bytes, mode);
    let value = p.value(0)?;
    p.finish()?;
    Ok(Decoded {
        value,
        warnings: p.warnings,
    })
}

/// Decodes a document whose root is a dictionary, keeping each value's span.
pub fn top_level_dict(bytes: &[u8], mode: Mode) -> Result<RawDict, DecodeError> {
    let mut p = Parser::new(bytes, mode);
    if p.peek()? != b'd' {
        return Err(p.err(DecodeErrorKind::NotADict));
    }
    let mut spans = BTreeMap::new();
    let entries = p.dict(0, Some(&mut spans))?;
    p.finish()?;
    Ok(RawDict {
        entries,
        spans,
        warnings: p.warnings,
    })
}

struct Parser<'a> {
    buf: &'a [u8],
    pos: usize,
    mode: Mode,
    warnings: Vec<Warning>,
}

impl<'a> Parser<'a> {
    fn new(buf: &'a [u8], mode: Mode) -> Self {
        Self {
            buf,
            pos: 0,
            mode,
            warnings: Vec::new(),
        }
    }

    fn err(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError { kind, offset: self.pos }
    }

    fn err_at(kind: DecodeErrorKind, offset: usize) -> DecodeError {
        DecodeError { kind, offset }
    }

    fn peek(&self) -> Result<u8, DecodeError> {
        self.buf
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err(DecodeErrorKind::UnexpectedEof))
    }

    fn finish(&self) -> Result<(), DecodeError> {
        if self.pos != self.buf.len() {
            return Err(self.err(DecodeErrorKind::TrailingBytes));
        }
        Ok(())
    }

    // Either rejects or records a non-canonical construct depending on mode.
    fn tolerate(&mut self, kind: DecodeErrorKind, offset: usize) -> Result<(), DecodeError> {
        let warning = match (&kind, self.mode) {
            (_, Mode::Strict) => return Err(Self::err_at(kind, offset)),
            (DecodeErrorKind::UnsortedKeys, _) => Warning::UnsortedKey { offset },
            (DecodeErrorKind::DuplicateKey, _) => Warning::DuplicateKey { offset },
            (DecodeErrorKind::LeadingZero, _) => Warning::LeadingZero { offset },
            (DecodeErrorKind::NegativeZero, _) => Warning::NegativeZero { offset },
            _ => return Err(Self::err_at(kind, offset)),
        };
        self.warnings.push(warning);
        Ok(())
    }

    fn value(&mut self, depth: usize) -> Result<Value, DecodeError> {
        if depth > MAX_DEPTH {
            return Err(self.err(DecodeErrorKind::TooDeep));
        }
        match self.peek()? {
            b'i' => self.int().map(Value::Int),
            b'0'..=b'9' => self.byte_string().map(|b| Value::Bytes(b.to_vec())),
            b'l' => {
                self.pos += 1;
                let mut items = Vec::new();
                while self.peek()? != b'e' {
                    items.push(self.value(depth + 1)?);
                }
                self.pos += 1;
                Ok(Value::List(items))
            }
            b'd' => self.dict(depth, None).map(Value::Dict),
            other => Err(self.err(DecodeErrorKind::UnexpectedByte(other))),
        }
    }

    fn dict(
        &mut self,
        depth: usize,
        mut spans: Option<&mut BTreeMap<Vec<u8>, Range<usize>>>,
    ) -> Result<BTreeMap<Vec<u8>, Value>, DecodeError> {
        self.pos += 1;
        let mut map = BTreeMap::new();
        let mut prev: Option<&'a [u8]> = None;
        while self.peek()? != b'e' {
            let key_at = self.pos;
            let key = match self.peek()? {
                b'0'..=b'9' => self.byte_string()?,
                other => return Err(self.err(DecodeErrorKind::UnexpectedByte(other))),
            };
            if let Some(p) = prev {
                if key == p {
                    self.tolerate(DecodeErrorKind::DuplicateKey, key_at)?;
                } else if key < p {
                    self.tolerate(DecodeErrorKind::UnsortedKeys, key_at)?;
                }
            }
            prev = Some(key);
            let start = self.pos;
            let value = self.value(depth + 1)?;
            let end = self.pos;
            // first occurrence wins for duplicates
            if let Entry::Vacant(slot) = map.entry(key.to_vec()) {
                slot.insert(value);
                if let Some(spans) = spans.as_deref_mut() {
                    spans.insert(key.to_vec(), start..end);
                }
            }
        }
        self.pos += 1;
        Ok(map)
    }

    fn int(&mut self) -> Result<i64, DecodeError> {
        let start = self.pos;
        self.pos += 1;
        let end = self.buf[self.pos..]
            .iter()
            .position(|&b| b == b'e')
            .map(|i| self.pos + i)
            .ok_or_else(|| Self::err_at(DecodeErrorKind::UnexpectedEof, self.buf.len()))?;
        let digits = &self.buf[self.pos..end];
        let (negative, body) = match digits.split_first() {
            Some((b'-', rest)) => (true, rest),
            _ => (false, digits),
        };
        if body.is_empty() || !body.iter().all(u8::is_ascii_digit) {
            return Err(Self::err_at(DecodeErrorKind::InvalidInteger, start));
        }
        if body.len() > 1 && body[0] == b'0' {
            self.tolerate(DecodeErrorKind::LeadingZero, start)?;
        }
        if negative && body.iter().all(|&b| b == b'0') {
            self.tolerate(DecodeErrorKind::NegativeZero, start)?;
        }
        // digits are ASCII, checked above
        let text = std::str::from_utf8(digits).expect("ascii digits");
        let n = text
            .parse::<i64>()
            .map_err(|_| Self::err_at(DecodeErrorKind::IntegerOverflow, start))?;
        self.pos = end + 1;
        Ok(n)
    }

    fn byte_string(&mut self) -> Result<&'a [u8], DecodeError> {
        let start = self.pos;
        let colon = self.buf[self.pos..]
            .iter()
            .position(|&b| b == b':')
            .map(|i| self.pos + i)
            .ok_or_else(|| Self::err_at(DecodeErrorKind::UnexpectedEof, self.buf.len()))?;
        let digits = &self.buf[self.pos..colon];
        if digits.is_empty() || !digits.iter().all(u8::is_ascii_digit) {
            return Err(Self::err_at(DecodeErrorKind::InvalidLength, start));
        }
        if digits.len() > 1 && digits[0] == b'0' {
            self.tolerate(DecodeErrorKind::LeadingZero, start)?;
        }
        let len: usize = std::str::from_utf8(digits)
            .expect("ascii digits")
            .parse()
            .map_err(|_| Self::err_at(DecodeErrorKind::InvalidLength, start))?;
        let body_start = colon + 1;
        let body_end = body_start
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Self::err_at(DecodeErrorKind::UnexpectedEof, self.buf.len()))?;
        self.pos = body_end;
        Ok(&self.buf[body_start..body_end])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(pairs: &[(&str, Value)]) -> Value {
        Value::Dict(pairs.iter().map(|(k, v)| (k.as_bytes().to_vec(), v.clone())).collect())
    }

    #[test]
    fn scalars() {
        assert_eq!(decode(b"4:spam").unwrap(), Value::from("spam"));
        assert_eq!(decode(b"i42e").unwrap(), Value::Int(42));
        assert_eq!(decode(b"i-7e").unwrap(), Value::Int(-7));
        assert_eq!(decode(b"0:").unwrap(), Value::bytes(vec![]));
        assert_eq!(decode(b"d1:ai1ee").unwrap(), dict(&[("a", Value::Int(1))]));
        assert_eq!(decode(b"le").unwrap(), Value::List(vec![]));
    }

    #[test]
    fn rejects_trailing_bytes() {
        let err = decode(b"i1ei2e").unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::TrailingBytes);
        assert_eq!(err.offset, 3);
    }

    #[test]
    fn truncation() {
        for input in [&b"i42"[..], b"5:abc", b"l", b"d1:a", b"", b"4"] {
            let err = decode(input).unwrap_err();
            assert_eq!(err.kind, DecodeErrorKind::UnexpectedEof, "{input:?}");
        }
    }

    #[test]
    fn bad_integers() {
        assert_eq!(decode(b"ie").unwrap_err().kind, DecodeErrorKind::InvalidInteger);
        assert_eq!(decode(b"i-e").unwrap_err().kind, DecodeErrorKind::InvalidInteger);
        assert_eq!(decode(b"i1x2e").unwrap_err().kind, DecodeErrorKind::InvalidInteger);
        assert_eq!(decode(b"i03e").unwrap_err().kind, DecodeErrorKind::LeadingZero);
        assert_eq!(decode(b"i-0e").unwrap_err().kind, DecodeErrorKind::NegativeZero);
        assert_eq!(
            decode(b"i9223372036854775808e").unwrap_err().kind,
            DecodeErrorKind::IntegerOverflow
        );
        assert_eq!(decode(b"i-9223372036854775808e").unwrap(), Value::Int(i64::MIN));
    }

    #[test]
    fn lenient_accepts_leading_zero_with_warning() {
        let d = decode_with(b"i007e", Mode::Lenient).unwrap();
        assert_eq!(d.value, Value::Int(7));
        assert_eq!(d.warnings, vec![Warning::LeadingZero { offset: 0 }]);
    }

    #[test]
    fn unsorted_keys() {
        let input = b"d1:bi1e1:ai2ee";
        assert_eq!(decode(input).unwrap_err().kind, DecodeErrorKind::UnsortedKeys);
        let d = decode_with(input, Mode::Lenient).unwrap();
        assert_eq!(d.value, dict(&[("a", Value::Int(2)), ("b", Value::Int(1))]));
        assert_eq!(d.warnings, vec![Warning::UnsortedKey { offset: 7 }]);
    }

    #[test]
    fn duplicate_keys() {
        let input = b"d1:ai1e1:ai2ee";
        assert_eq!(decode(input).unwrap_err().kind, DecodeErrorKind::DuplicateKey);
        let d = decode_with(input, Mode::Lenient).unwrap();
        assert_eq!(d.value, dict(&[("a", Value::Int(1))]));
    }

    #[test]
    fn non_string_key() {
        assert_eq!(
            decode(b"di1ei2ee").unwrap_err().kind,
            DecodeErrorKind::UnexpectedByte(b'i')
        );
    }

    #[test]
    fn depth_limit() {
        let mut deep = vec![b'l'; MAX_DEPTH + 10];
        deep.extend(vec![b'e'; MAX_DEPTH + 10]);
        assert_eq!(decode(&deep).unwrap_err().kind, DecodeErrorKind::TooDeep);
    }

    #[test]
    fn spans_cover_source_bytes() {
        let input = b"d8:announce3:url4:infod1:xi1eee";
        let raw = top_level_dict(input, Mode::Strict).unwrap();
        assert_eq!(&input[raw.span("info").unwrap()], b"d1:xi1ee");
        assert_eq!(&input[raw.span("announce").unwrap()], b"3:url");
        assert_eq!(
            top_level_dict(b"le", Mode::Strict).unwrap_err().kind,
            DecodeErrorKind::NotADict
        );
    }
}
