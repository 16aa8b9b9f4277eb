use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrlChannel {
    /// Embedded in the content's file name.
    Filename,
    /// In the portal's description text.
    Description,
    /// Name of a file bundled in the torrent.
    BundledFile,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PromotedUrl {
    pub domain: String,
    pub channel: UrlChannel,
}

// Public suffixes recognised as the last labels of a domain. Multi-label
// entries are matched before their final label alone.
const SUFFIXES: &[&str] = &[
    "co.uk", "org.uk", "com.ar", "com.br", "com.mx", "com.au", "co.in", "co.nz", "com.es", "com.pl", "com", "net",
    "org", "info", "biz", "tv", "to", "me", "ws", "cc", "eu", "es", "fr", "de", "uk", "it", "nl", "be", "se", "pl",
    "cz", "ru", "ro", "pt", "gr", "us", "ca", "in", "io", "li", "la", "nu", "ag", "am", "ch", "at", "dk", "fi", "no",
    "hu", "sk", "ar", "br", "mx", "cl", "co", "tk", "xyz", "club", "online", "site",
];

// File extensions that may follow a domain inside a file name.
const EXTENSIONS: &[&str] = &[
    "avi", "mkv", "mp4", "m4v", "mpg", "mpeg", "wmv", "mov", "flv", "mp3", "flac", "ogg", "wav", "m4a", "txt", "nfo",
    "url", "htm", "html", "pdf", "rar", "zip", "7z", "iso", "exe", "jpg", "jpeg", "png", "gif", "srt", "sub", "epub",
    "cbr", "torrent",
];

fn is_label(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 63
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
        && !s.starts_with('-')
        && !s.ends_with('-')
}

/// Finds a registrable domain (one label plus a known suffix) in a dotted
/// token. The suffix must end the token or be followed by a single file
/// extension.
fn domain_in(token: &str) -> Option<String> {
    let token = token.trim_matches(|c: char| c == '.' || c == '-').to_ascii_lowercase();
    let labels: Vec<&str> = token.split('.').collect();
    if labels.len() < 2 || !labels.iter().all(|l| is_label(l)) {
        return None;
    }
    let n = labels.len();
    let ends: &[usize] = if n >= 3 && EXTENSIONS.contains(&labels[n - 1]) {
        &[n, n - 1]
    } else {
        &[n]
    };
    for &end in ends {
        for suffix_len in [2usize, 1] {
            if end < suffix_len + 1 {
                continue;
            }
            let suffix = labels[end - suffix_len..end].join(".");
            if SUFFIXES.contains(&suffix.as_str()) {
                let name = labels[end - suffix_len - 1];
                if name == "www" || !name.bytes().any(|b| b.is_ascii_alphabetic()) {
                    return None;
                }
                return Some(format!("{name}.{suffix}"));
            }
        }
    }
    None
}

fn scan(text: &str, channel: UrlChannel, split_hyphens: bool, out: &mut BTreeSet<PromotedUrl>) {
    let is_sep = |c: char| !(c.is_ascii_alphanumeric() || c == '.' || (c == '-' && !split_hyphens));
    for token in text.split(is_sep) {
        if let Some(domain) = domain_in(token) {
            out.insert(PromotedUrl { domain, channel });
        }
    }
}

/// Domains promoted through a torrent's name, its portal description, or the
/// names of files it bundles. In file names a hyphen separates tokens, since
/// publishers append their site to the title with one.
pub fn extract_urls(name: &str, description: &str, bundled_filenames: &[String]) -> BTreeSet<PromotedUrl> {
    let mut out = BTreeSet::new();
    scan(name, UrlChannel::Filename, true, &mut out);
    scan(description, UrlChannel::Description, false, &mut out);
    for f in bundled_filenames {
        let base = f.rsplit('/').next().unwrap_or(f);
        scan(base, UrlChannel::BundledFile, true, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domains(s: &BTreeSet<PromotedUrl>) -> Vec<&str> {
        s.iter().map(|u| u.domain.as_str()).collect()
    }

    #[test]
    fn filename_with_extension() {
        let got = extract_urls("movie-divxatope.com.avi", "", &[]);
        assert_eq!(domains(&got), vec!["divxatope.com"]);
        assert_eq!(got.iter().next().unwrap().channel, UrlChannel::Filename);
    }

    #[test]
    fn description_with_www() {
        let got = extract_urls("", "Visit www.ultratorrents.com for more", &[]);
        assert_eq!(domains(&got), vec!["ultratorrents.com"]);
        let got = extract_urls("", "see https://WWW.Some-Site.net/path?x=1", &[]);
        assert_eq!(domains(&got), vec!["some-site.net"]);
    }

    #[test]
    fn bundled_text_file() {
        let got = extract_urls("x", "", &["Extras/Downloaded from bitsnoop.co.uk.txt".into()]);
        assert_eq!(domains(&got), vec!["bitsnoop.co.uk"]);
        assert_eq!(got.iter().next().unwrap().channel, UrlChannel::BundledFile);
    }

    #[test]
    fn no_domains() {
        assert!(extract_urls("Some.Movie.2010.DVDRip.XviD.avi", "great quality, seed please", &[]).is_empty());
        assert!(extract_urls("track 01.mp3", "v1.2 release", &["a/b.nfo".into()]).is_empty());
    }

    #[test]
    fn deduplicated_per_channel() {
        let got = extract_urls("a-site.com b-site.com", "site.com and SITE.COM", &[]);
        assert_eq!(got.len(), 2);
    }
}
