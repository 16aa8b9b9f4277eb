//! Bencode wire format and `.torrent` metainfo.
//!
//! Values decode in one of two modes. [`Mode::Strict`] accepts only canonical
//! documents (sorted unique dictionary keys, no leading zeros). [`Mode::Lenient`]
//! tolerates the non-canonical files found in the wild and reports what it
//! tolerated as [`Warning`]s; byte spans of the source are never rewritten, so
//! the infohash of a lenient file is still taken over the original bytes.

mod decode;
mod encode;
mod metainfo;

use std::collections::BTreeMap;
use std::fmt;

pub use decode::{decode, decode_with, top_level_dict, DecodeError, DecodeErrorKind, Decoded, RawDict};
pub use encode::{encode, encode_into};
pub use metainfo::{infohash, parse_metainfo, InfoHash, MetainfoError, TorrentMeta};

/// Decoding strictness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Strict,
    #[default]
    Lenient,
}

/// Non-canonical input accepted in lenient mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    UnsortedKey { offset: usize },
    DuplicateKey { offset: usize },
    LeadingZero { offset: usize },
    NegativeZero { offset: usize },
}

/// A bencoded value. Dictionary keys are raw bytes kept in ascending order.
#[derive(Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bytes(Vec<u8>),
    List(Vec<Value>),
    Dict(BTreeMap<Vec<u8>, Value>),
}

impl Value {
    pub fn bytes(b: impl Into<Vec<u8>>) -> Self {
        Value::Bytes(b.into())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        self.as_bytes().and_then(|b| std::str::from_utf8(b).ok())
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_dict(&self) -> Option<&BTreeMap<Vec<u8>, Value>> {
        match self {
            Value::Dict(d) => Some(d),
            _ => None,
        }
    }

    /// Dictionary lookup; `None` for non-dictionaries.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.as_dict().and_then(|d| d.get(key.as_bytes()))
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bytes(b) => match std::str::from_utf8(b) {
                Ok(s) => write!(f, "{s:?}"),
                Err(_) => write!(f, "<{} bytes>", b.len()),
            },
            Value::List(l) => f.debug_list().entries(l).finish(),
            Value::Dict(d) => f
                .debug_map()
                .entries(d.iter().map(|(k, v)| (String::from_utf8_lossy(k), v)))
                .finish(),
        }
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Bytes(s.as_bytes().to_vec())
    }
}

impl From<Vec<Value>> for Value {
    fn from(l: Vec<Value>) -> Self {
        Value::List(l)
    }
}
