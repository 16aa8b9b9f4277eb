use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha1::{Digest, Sha1};
use thiserror::Error;

use super::{top_level_dict, DecodeError, Mode, Value};

/// SHA-1 digest of a bencoded `info` dictionary.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InfoHash(pub [u8; 20]);

impl InfoHash {
    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for InfoHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for InfoHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InfoHash({})", self.to_hex())
    }
}

impl FromStr for InfoHash {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 20];
        hex::decode_to_slice(s, &mut out)?;
        Ok(InfoHash(out))
    }
}

impl Serialize for InfoHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for InfoHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Digest of an exact info-dictionary byte span.
pub fn infohash(info_span: &[u8]) -> InfoHash {
    InfoHash(Sha1::digest(info_span).into())
}

#[derive(Debug, Error)]
pub enum MetainfoError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid field `{0}`")]
    InvalidField(&'static str),
    #[error("piece math inconsistent: {pieces} piece hashes for {total_size} bytes at {piece_length} bytes/piece")]
    InconsistentPieces {
        pieces: u64,
        total_size: u64,
        piece_length: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorrentMeta {
    pub infohash: InfoHash,
    #[serde(with = "lossy_bytes")]
    pub name: Vec<u8>,
    pub piece_count: u64,
    pub piece_length: u64,
    pub total_size: u64,
    pub announce_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub announce_list: Option<Vec<String>>,
    /// Paths of the files in a multi-file torrent, `/`-joined. Empty for single-file torrents.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
}

impl TorrentMeta {
    pub fn name_lossy(&self) -> String {
        String::from_utf8_lossy(&self.name).into_owned()
    }
}

/// Parses `.torrent` bytes. Decoding is lenient; the infohash is taken over the
/// `info` value's original bytes.
pub fn parse_metainfo(bytes: &[u8]) -> Result<TorrentMeta, MetainfoError> {
    let raw = top_level_dict(bytes, Mode::Lenient)?;
    for w in &raw.warnings {
        log::debug!("non-canonical metainfo: {w:?}");
    }
    let announce_url = raw
        .get("announce")
        .ok_or(MetainfoError::MissingField("announce"))?
        .as_str()
        .ok_or(MetainfoError::InvalidField("announce"))?
        .to_owned();
    let info = raw.get("info").ok_or(MetainfoError::MissingField("info"))?;
    if info.as_dict().is_none() {
        return Err(MetainfoError::InvalidField("info"));
    }
    let span = raw.span("info").expect("span recorded for every entry");

    let name = info
        .get("name")
        .ok_or(MetainfoError::MissingField("name"))?
        .as_bytes()
        .ok_or(MetainfoError::InvalidField("name"))?
        .to_vec();
    let piece_length = positive(info.get("piece length"), "piece length")?;
    let mut file_names = Vec::new();
    let total_size = match (info.get("length"), info.get("files")) {
        (Some(len), _) => positive(Some(len), "length")?,
        (None, Some(files)) => {
            let files = files.as_list().ok_or(MetainfoError::InvalidField("files"))?;
            let mut total = 0u64;
            for f in files {
                let path: Vec<String> = f
                    .get("path")
                    .and_then(Value::as_list)
                    .ok_or(MetainfoError::InvalidField("files"))?
                    .iter()
                    .map(|c| String::from_utf8_lossy(c.as_bytes().unwrap_or_default()).into_owned())
                    .collect();
                file_names.push(path.join("/"));
                let len = f
                    .get("length")
                    .and_then(Value::as_int)
                    .filter(|&n| n >= 0)
                    .ok_or(MetainfoError::InvalidField("files"))?;
                total = total
                    .checked_add(len as u64)
                    .ok_or(MetainfoError::InvalidField("files"))?;
            }
            if total == 0 {
                return Err(MetainfoError::InvalidField("files"));
            }
            total
        }
        (None, None) => return Err(MetainfoError::MissingField("length")),
    };
    let pieces = info
        .get("pieces")
        .ok_or(MetainfoError::MissingField("pieces"))?
        .as_bytes()
        .ok_or(MetainfoError::InvalidField("pieces"))?;
    if pieces.len() % 20 != 0 {
        return Err(MetainfoError::InvalidField("pieces"));
    }
    let piece_count = (pieces.len() / 20) as u64;
    if piece_count != total_size.div_ceil(piece_length) {
        return Err(MetainfoError::InconsistentPieces {
            pieces: piece_count,
            total_size,
            piece_length,
        });
    }

    let announce_list = raw.get("announce-list").and_then(Value::as_list).map(|tiers| {
        tiers
            .iter()
            .filter_map(Value::as_list)
            .flatten()
            .filter_map(Value::as_str)
            .map(str::to_owned)
            .collect::<Vec<_>>()
    });

    Ok(TorrentMeta {
        infohash: infohash(&bytes[span]),
        name,
        piece_count,
        piece_length,
        total_size,
        announce_url,
        announce_list,
        files: file_names,
    })
}

fn positive(v: Option<&Value>, field: &'static str) -> Result<u64, MetainfoError> {
    let n = v
        .ok_or(MetainfoError::MissingField(field))?
        .as_int()
        .ok_or(MetainfoError::InvalidField(field))?;
    if n <= 0 {
        return Err(MetainfoError::InvalidField(field));
    }
    Ok(n as u64)
}

mod lossy_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}
