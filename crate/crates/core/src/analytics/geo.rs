use std::collections::HashMap;
use std::io::Read;
use std::net::IpAddr;
use std::path::Path;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IspType {
    Hosting,
    Commercial,
    Unknown,
}

impl IspType {
    pub fn as_str(self) -> &'static str {
        match self {
            IspType::Hosting => "hosting",
            IspType::Commercial => "commercial",
            IspType::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IspInfo {
    pub prefix: Option<IpNet>,
    pub isp_name: String,
    pub isp_type: IspType,
    pub country: String,
    pub city: String,
}

impl IspInfo {
    pub fn unknown() -> Self {
        Self {
            prefix: None,
            isp_name: String::new(),
            isp_type: IspType::Unknown,
            country: String::new(),
            city: String::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("geo database i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("geo database row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Longest-prefix-match table loaded from `cidr,isp_name,isp_type,country,city` rows.
#[derive(Debug, Clone, Default)]
pub struct GeoDb {
    // one map per prefix length, keyed by network address
    v4: Vec<HashMap<IpAddr, IspInfo>>,
    v6: Vec<HashMap<IpAddr, IspInfo>>,
    len: usize,
}

impl GeoDb {
    pub fn load(path: &Path) -> Result<Self, GeoError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// A leading header row whose first field is `cidr` is skipped. Lines
    /// starting with `#` are comments.
    pub fn from_reader<R: Read>(r: R) -> Result<Self, GeoError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(r);
        let mut db = GeoDb {
            v4: vec![HashMap::new(); 33],
            v6: vec![HashMap::new(); 129],
            len: 0,
        };
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| GeoError::Row {
                row,
                message: e.to_string(),
            })?;
            if row == 1 && rec.get(0) == Some("cidr") {
                continue;
            }
            let err = |message: String| GeoError::Row { row, message };
            if rec.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", rec.len())));
            }
            let net: IpNet = rec[0]
                .parse()
                .map_err(|e| err(format!("bad cidr `{}`: {e}", &rec[0])))?;
            let net = net.trunc();
            let isp_type = match rec[2].to_ascii_lowercase().as_str() {
                "hosting" => IspType::Hosting,
                "commercial" => IspType::Commercial,
                other => return Err(err(format!("bad isp_type `{other}`"))),
            };
            let info = IspInfo {
                prefix: Some(net),
                isp_name: rec[1].to_owned(),
                isp_type,
                country: rec[3].to_owned(),
                city: rec[4].to_owned(),
            };
            let table = match net {
                IpNet::V4(_) => &mut db.v4,
                IpNet::V6(_) => &mut db.v6,
            };
            if table[net.prefix_len() as usize].insert(net.network(), info).is_some() {
                return Err(err(format!("duplicate prefix {net}")));
            }
            db.len += 1;
        }
        Ok(db)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The most specific covering prefix, or an unknown record.
    pub fn lookup(&self, ip: IpAddr) -> IspInfo {
        let (table, max) = match ip {
            IpAddr::V4(_) => (&self.v4, 32u8),
            IpAddr::V6(_) => (&self.v6, 128u8),
        };
        if table.is_empty() {
            return IspInfo::unknown();
        }
        for len in (0..=max).rev() {
            let map = &table[len as usize];
            if map.is_empty() {
                continue;
            }
            let net = IpNet::new(ip, len).expect("length within range").trunc();
            if let Some(info) = map.get(&net.network()) {
                return info.clone();
            }
        }
        IspInfo::unknown()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DB: &str = "cidr,isp_name,isp_type,country,city\n\
        10.0.0.0/8,SimHost,hosting,FR,Roubaix\n\
        10.1.0.0/16,SimCable,commercial,ES,Madrid\n\
        2001:db8::/32,V6Net,commercial,DE,Berlin\n";

    #[test]
    fn longest_prefix_wins() {
        let db = GeoDb::from_reader(DB.as_bytes()).unwrap();
        assert_eq!(db.len(), 3);
        let a = db.lookup("10.2.3.4".parse().unwrap());
        assert_eq!((a.isp_name.as_str(), a.isp_type), ("SimHost", IspType::Hosting));
        let b = db.lookup("10.1.2.3".parse().unwrap());
        assert_eq!((b.isp_name.as_str(), b.isp_type), ("SimCable", IspType::Commercial));
        assert_eq!(db.lookup("2001:db8::1".parse().unwrap()).city, "Berlin");
    }

    #[test]
    fn uncovered_is_unknown() {
        let db = GeoDb::from_reader(DB.as_bytes()).unwrap();
        assert_eq!(db.lookup("192.0.2.1".parse().unwrap()).isp_type, IspType::Unknown);
        assert_eq!(
            GeoDb::default().lookup("10.0.0.1".parse().unwrap()).isp_type,
            IspType::Unknown
        );
    }

    #[test]
    fn malformed_rows() {
        for bad in [
            "10.0.0.0/33,a,hosting,b,c\n",
            "10.0.0.0/8,a,isp,b,c\n",
            "10.0.0.0/8,a,hosting\n",
        ] {
            assert!(
                matches!(GeoDb::from_reader(bad.as_bytes()), Err(GeoError::Row { row: 1, .. })),
                "{bad}"
            );
        }
        let dup = "10.0.0.0/8,a,hosting,b,c\n10.0.0.0/8,d,hosting,e,f\n";
        assert!(GeoDb::from_reader(dup.as_bytes()).is_err());
    }
}
