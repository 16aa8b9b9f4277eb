use std::collections::BTreeMap;
use std::path::Path;

use chrono::DateTime;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::UnixTime;

/// One announced torrent from a portal feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedItem {
    pub portal_id: String,
    pub title: String,
    pub category: String,
    pub subcategory: String,
    pub username: String,
    pub content_size: u64,
    pub torrent_url: String,
    pub published_at: UnixTime,
    #[serde(default)]
    pub description: String,
}

impl FeedItem {
    pub fn key(&self) -> ItemKey {
        ItemKey {
            portal_id: self.portal_id.clone(),
            torrent_url: self.torrent_url.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemKey {
    pub portal_id: String,
    pub torrent_url: String,
}

/// Names the feed elements that carry each field for one portal.
///
/// A field is either an element name (`"torrent:uploader"`) or an element name
/// and attribute (`"enclosure@url"`). Names are matched as written in the
/// document, prefix included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortalProfile {
    pub portal_id: String,
    pub feed_url: String,
    pub item: String,
    pub title: String,
    pub link: String,
    pub category: String,
    pub subcategory: Option<String>,
    /// Splits a combined "Video > Movies" category when no subcategory element exists.
    pub category_separator: Option<String>,
    pub size: String,
    pub username: String,
    pub published: String,
    pub description: Option<String>,
    pub poll_interval_s: i64,
}

impl Default for PortalProfile {
    fn default() -> Self {
        Self {
            portal_id: String::new(),
            feed_url: String::new(),
            item: "item".into(),
            title: "title".into(),
            link: "link".into(),
            category: "category".into(),
            subcategory: None,
            category_separator: None,
            size: "size".into(),
            username: "username".into(),
            published: "pubDate".into(),
            description: Some("description".into()),
            poll_interval_s: 60,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("reading profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid profile: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("profile has no portal_id")]
    MissingId,
    #[error("unknown portal profile `{0}`")]
    Unknown(String),
}

impl PortalProfile {
    pub fn from_toml(text: &str) -> Result<Self, ProfileError> {
        let p: PortalProfile = toml::from_str(text)?;
        if p.portal_id.trim().is_empty() {
            return Err(ProfileError::MissingId);
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }
}

/// Profiles keyed by portal id.
#[derive(Debug, Default, Clone)]
pub struct ProfileRegistry(BTreeMap<String, PortalProfile>);

impl ProfileRegistry {
    pub fn insert(&mut self, p: PortalProfile) {
        self.0.insert(p.portal_id.clone(), p);
    }

    pub fn get(&self, portal_id: &str) -> Result<&PortalProfile, ProfileError> {
        self.0
            .get(portal_id)
            .ok_or_else(|| ProfileError::Unknown(portal_id.to_owned()))
    }
}

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("malformed feed XML: {0}")]
    Xml(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedItem {
    /// Zero-based position of the `<item>` in the document.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedFeed {
    pub items: Vec<FeedItem>,
    pub skipped: Vec<SkippedItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    Link,
    Category,
    Subcategory,
    Size,
    Username,
    Published,
    Description,
}

struct Selector {
    element: String,
    attribute: Option<String>,
    field: Field,
}

fn selectors(p: &PortalProfile) -> Vec<Selector> {
    let mut specs = vec![
        (p.title.as_str(), Field::Title),
        (p.link.as_str(), Field::Link),
        (p.category.as_str(), Field::Category),
        (p.size.as_str(), Field::Size),
        (p.username.as_str(), Field::Username),
        (p.published.as_str(), Field::Published),
    ];
    if let Some(s) = &p.subcategory {
        specs.push((s, Field::Subcategory));
    }
    if let Some(s) = &p.description {
        specs.push((s, Field::Description));
    }
    specs
        .into_iter()
        .map(|(spec, field)| match spec.split_once('@') {
            Some((el, attr)) => Selector {
                element: el.to_owned(),
                attribute: Some(attr.to_owned()),
                field,
            },
            None => Selector {
                element: spec.to_owned(),
                attribute: None,
                field,
            },
        })
        .collect()
}

/// Parses an RSS 2.0 document into feed items. Items lacking a title, link,
/// username or publication date are skipped and reported.
pub fn parse_feed(xml: &[u8], profile: &PortalProfile) -> Result<ParsedFeed, FeedError> {
    let selectors = selectors(profile);
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut out = ParsedFeed::default();

    let mut item: Option<BTreeMap<u8, String>> = None;
    let mut item_index = 0usize;
    // element name and the field whose text is being collected
    let mut capture: Option<(String, Field)> = None;
    let xml_err = |e: quick_xml::Error| FeedError::Xml(e.to_string());

    loop {
        let event = reader.read_event_into(&mut buf).map_err(xml_err)?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if name == profile.item && item.is_none() {
                    if !is_empty {
                        item = Some(BTreeMap::new());
                    } else {
                        finish_item(BTreeMap::new(), item_index, profile, &mut out);
                        item_index += 1;
                    }
                    continue;
                }
                let Some(fields) = item.as_mut() else { continue };
                for sel in selectors.iter().filter(|s| s.element == name) {
                    match &sel.attribute {
                        Some(attr) => {
                            if let Some(v) = attribute(e, attr).map_err(xml_err)? {
                                fields.entry(sel.field as u8).or_insert(v);
                            }
                        }
                        None if !is_empty && capture.is_none() => {
                            capture = Some((name.clone(), sel.field));
                        }
                        None => {}
                    }
                }
            }
            Event::Text(t) => {
                if let (Some((_, field)), Some(fields)) = (&capture, item.as_mut()) {
                    let text = t.unescape().map_err(xml_err)?;
                    fields.entry(*field as u8).or_default().push_str(&text);
                }
            }
            Event::CData(c) => {
                if let (Some((_, field)), Some(fields)) = (&capture, item.as_mut()) {
                    let text = String::from_utf8_lossy(&c.into_inner()).into_owned();
                    fields.entry(*field as u8).or_default().push_str(&text);
                }
            }
            Event::End(e) => {
                let name = e.name();
                if capture.as_ref().is_some_and(|(n, _)| n.as_bytes() == name.as_ref()) {
                    capture = None;
                } else if name.as_ref() == profile.item.as_bytes() {
                    if let Some(fields) = item.take() {
                        finish_item(fields, item_index, profile, &mut out);
                        item_index += 1;
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if item.is_some() {
        return Err(FeedError::Xml("unterminated item".into()));
    }
    Ok(out)
}

fn attribute(e: &BytesStart<'_>, attr: &str) -> Result<Option<String>, quick_xml::Error> {
    match e.try_get_attribute(attr)? {
        Some(a) => Ok(Some(a.unescape_value()?.into_owned())),
        None => Ok(None),
    }
}

fn finish_item(mut fields: BTreeMap<u8, String>, index: usize, profile: &PortalProfile, out: &mut ParsedFeed) {
    let mut take = |f: Field| {
        fields
            .remove(&(f as u8))
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
    };
    let title = take(Field::Title);
    let link = take(Field::Link);
    let username = take(Field::Username);
    let published = take(Field::Published);
    let mut category = take(Field::Category).unwrap_or_default();
    let mut subcategory = take(Field::Subcategory).unwrap_or_default();
    let size = take(Field::Size);
    let description = take(Field::Description).unwrap_or_default();

    let missing: Vec<&str> = [
        ("title", title.is_none()),
        ("link", link.is_none()),
        ("username", username.is_none()),
        ("published", published.is_none()),
    ]
    .into_iter()
    .filter_map(|(n, m)| m.then_some(n))
    .collect();
    let skip = |reason: String, out: &mut ParsedFeed| {
        log::warn!("feed {}: skipping item {index}: {reason}", profile.portal_id);
        out.skipped.push(SkippedItem { index, reason });
    };
    if !missing.is_empty() {
        return skip(format!("missing {}", missing.join(", ")), out);
    }
    let published = published.unwrap();
    let Some(published_at) = parse_date(&published) else {
        return skip(format!("unparseable date {published:?}"), out);
    };
    let content_size = match size.as_deref().map(parse_size) {
        None => 0,
        Some(Some(n)) => n,
        Some(None) => return skip(format!("unparseable size {:?}", size.unwrap()), out),
    };
    if subcategory.is_empty() {
        if let Some(sep) = profile.category_separator.as_deref() {
            if let Some((c, s)) = category.split_once(sep) {
                (category, subcategory) = (c.trim().to_owned(), s.trim().to_owned());
            }
        }
    }
    out.items.push(FeedItem {
        portal_id: profile.portal_id.clone(),
        title: title.unwrap(),
        category,
        subcategory,
        username: username.unwrap(),
        content_size,
        torrent_url: link.unwrap(),
        published_at,
        description,
    });
}

fn parse_date(s: &str) -> Option<UnixTime> {
    DateTime::parse_from_rfc2822(s)
        .or_else(|_| DateTime::parse_from_rfc3339(s))
        .map(|d| d.timestamp())
        .ok()
        .or_else(|| s.parse::<i64>().ok())
}

/// Accepts plain byte counts and `<number> <unit>` forms such as `700 MB` or `1.4 GiB`.
pub fn parse_size(s: &str) -> Option<u64> {
    let s = s.trim();
    if let Ok(n) = s.parse::<u64>() {
        return Some(n);
    }
    let split = s.find(|c: char| !(c.is_ascii_digit() || c == '.'))?;
    let (num, unit) = s.split_at(split);
    let n: f64 = num.parse().ok()?;
    let mult: f64 = match unit.trim().to_ascii_lowercase().as_str() {
        "b" => 1.0,
        "kb" => 1e3,
        "mb" => 1e6,
        "gb" => 1e9,
        "tb" => 1e12,
        "kib" => 1024.0,
        "mib" => 1024.0 * 1024.0,
        "gib" => 1024.0 * 1024.0 * 1024.0,
        "tib" => 1024.0_f64.powi(4),
        _ => return None,
    };
    Some((n * mult).round() as u64)
}

/// Renders items as an RSS 2.0 document using the profile's element names.
/// Attribute-mapped fields are written as empty elements carrying the attribute.
pub fn render_feed(profile: &PortalProfile, items: &[FeedItem]) -> String {
    use quick_xml::escape::escape;
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<rss version=\"2.0\">\n<channel>\n");
    out.push_str(&format!("<title>{}</title>\n", escape(profile.portal_id.as_str())));
    for item in items {
        out.push_str(&format!("<{}>\n", profile.item));
        let date = DateTime::from_timestamp(item.published_at, 0)
            .map(|d| d.to_rfc2822())
            .unwrap_or_default();
        let mut fields = vec![
            (profile.title.as_str(), item.title.clone()),
            (profile.link.as_str(), item.torrent_url.clone()),
            (profile.size.as_str(), item.content_size.to_string()),
            (profile.username.as_str(), item.username.clone()),
            (profile.published.as_str(), date),
        ];
        match (&profile.subcategory, &profile.category_separator) {
            (Some(sub), _) => {
                fields.push((profile.category.as_str(), item.category.clone()));
                fields.push((sub.as_str(), item.subcategory.clone()));
            }
            (None, Some(sep)) if !item.subcategory.is_empty() => fields.push((
                profile.category.as_str(),
                format!("{}{sep}{}", item.category, item.subcategory),
            )),
            _ => fields.push((profile.category.as_str(), item.category.clone())),
        }
        if let Some(d) = &profile.description {
            fields.push((d.as_str(), item.description.clone()));
        }
        for (spec, value) in fields {
            match spec.split_once('@') {
                Some((el, attr)) => out.push_str(&format!("  <{el} {attr}=\"{}\"/>\n", escape(value.as_str()))),
                None => out.push_str(&format!("  <{spec}>{}</{spec}>\n", escape(value.as_str()))),
            }
        }
        out.push_str(&format!("</{}>\n", profile.item));
    }
    out.push_str("</channel>\n</rss>\n");
    out
}
