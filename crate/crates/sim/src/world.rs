use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use seedscope_core::analytics::BusinessClass;
use seedscope_core::bencode::{self, Value};
use seedscope_core::ingest::FeedItem;
use seedscope_core::time::{Seconds, UnixTime, HOUR, MINUTE};
use seedscope_core::tracker::AnnounceResult;
use seedscope_core::InfoHash;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, IspKind, Role, RoleBehavior, WorldConfig};
use crate::isp::IpAllocator;
use crate::truth::{GroundTruth, TruthPublisher, TruthTorrent};

/// Re-announce interval the simulated tracker advertises.
pub const TRACKER_INTERVAL: u32 = 1800;

// independent random streams
const STREAM_PUBLISHERS: u64 = 1;
const STREAM_PUBLISHER: u64 = 1 << 32;
const STREAM_TORRENT: u64 = 2 << 32;
pub(crate) const STREAM_ANNOUNCE: u64 = 3 << 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("unknown infohash {0}")]
    UnknownInfohash(InfoHash),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerKind {
    Publisher,
    CoSeeder,
    Downloader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimPeer {
    pub kind: PeerKind,
    pub ip: Ipv4Addr,
    pub port: u16,
    pub arrive: UnixTime,
    pub depart: UnixTime,
    /// From this instant the peer holds every piece.
    pub complete_at: Option<UnixTime>,
    pub nat: bool,
}

impl SimPeer {
    pub fn endpoint(&self) -> SocketAddr {
        SocketAddr::new(IpAddr::V4(self.ip), self.port)
    }

    pub fn present_at(&self, t: UnixTime) -> bool {
        self.arrive <= t && t < self.depart
    }

    pub fn is_seed_at(&self, t: UnixTime) -> bool {
        self.complete_at.is_some_and(|c| c <= t)
    }

    /// Pieces held at `t`. Leechers progress linearly towards completion;
    /// leechers that never complete stall below a full copy.
    pub fn pieces_have(&self, t: UnixTime, piece_count: u64) -> u64 {
        if self.is_seed_at(t) {
            return piece_count;
        }
        let (until, reach) = match self.complete_at {
            Some(c) => (c, 1.0),
            None => (self.depart, 0.9),
        };
        let span = (until - self.arrive).max(1) as f64;
        let frac = ((t - self.arrive) as f64 / span).clamp(0.0, 1.0) * reach;
        ((frac * piece_count as f64) as u64).min(piece_count.saturating_sub(1))
    }
}

/// How the swarm looked when the torrent was listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Plain,
    /// The swarm existed before the listing.
    Prepublished,
    /// A second machine seeds from the start.
    CoSeeded,
    /// The publisher starts seeding after the listing.
    LateStart,
}

#[derive(Debug, Clone)]
pub struct SimPublisher {
    pub username: String,
    pub role: Role,
    pub ips: Vec<Ipv4Addr>,
    pub nat: bool,
    pub business_class: Option<BusinessClass>,
    /// Site promoted in names or descriptions.
    pub site: Option<String>,
    pub removed_at: Option<UnixTime>,
    /// Shared by the usernames of one fake entity.
    pub entity: usize,
    pub torrents: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SimTorrent {
    pub index: usize,
    pub infohash: InfoHash,
    pub publisher: usize,
    pub publisher_ip: Ipv4Addr,
    pub nat: bool,
    pub shape: Shape,
    pub item: FeedItem,
    pub metainfo: Vec<u8>,
    pub piece_count: u64,
    /// Sorted by arrival.
    pub peers: Vec<SimPeer>,
}

impl SimTorrent {
    pub fn publisher_peer(&self) -> &SimPeer {
        self.peers
            .iter()
            .find(|p| p.kind == PeerKind::Publisher)
            .expect("every swarm has its publisher")
    }

    pub fn birth(&self) -> UnixTime {
        self.peers.first().map_or(self.item.published_at, |p| p.arrive)
    }

    /// Last departure; the swarm is empty from then on.
    pub fn end(&self) -> UnixTime {
        self.peers
            .iter()
            .map(|p| p.depart)
            .max()
            .unwrap_or(self.item.published_at)
    }

    pub fn present(&self, t: UnixTime) -> impl Iterator<Item = &SimPeer> {
        let upto = self.peers.partition_point(|p| p.arrive <= t);
        self.peers[..upto].iter().filter(move |p| p.depart > t)
    }

    pub fn state_at(&self, t: UnixTime) -> SwarmState {
        let mut s = SwarmState::default();
        for p in self.present(t) {
            s.population += 1;
            if p.is_seed_at(t) {
                s.seeders += 1;
            }
            if p.kind == PeerKind::Publisher {
                s.publisher_present = true;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SwarmState {
    pub population: usize,
    pub seeders: usize,
    pub publisher_present: bool,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub publishers: Vec<SimPublisher>,
    pub torrents: Vec<SimTorrent>,
    pub by_infohash: BTreeMap<InfoHash, usize>,
    /// Torrent indices in listing order.
    pub listing: Vec<usize>,
    pub now: UnixTime,
}

impl World {
    pub fn torrent(&self, infohash: &InfoHash) -> Option<&SimTorrent> {
        self.by_infohash.get(infohash).map(|&i| &self.torrents[i])
    }

    /// Moves the virtual clock forward. Peer presence is a function of time,
    /// so arrivals, departures and publisher sessions follow by construction.
    pub fn advance(&mut self, dt: Seconds) {
        assert!(dt > 0, "advance needs a positive step");
        self.now += dt;
    }

    /// The last instant anything happens in the world.
    pub fn horizon(&self) -> UnixTime {
        self.torrents
            .iter()
            .map(|t| t.end().max(t.item.published_at))
            .max()
            .unwrap_or(self.config.start)
    }

    /// Feed items listed at or before `t`, newest first, at most `limit`.
    pub fn feed_at(&self, t: UnixTime, limit: usize) -> Vec<FeedItem> {
        let upto = self
            .listing
            .partition_point(|&i| self.torrents[i].item.published_at <= t);
        self.listing[..upto]
            .iter()
            .rev()
            .take(limit)
            .map(|&i| self.torrents[i].item.clone())
            .collect()
    }
}

/// The tracker's answer about `infohash` at `now`: a uniform sample without
/// replacement of `min(w, population)` present peers with exact counts.
/// A swarm that died answers with zero peers.
pub fn sim_announce<R: Rng + ?Sized>(
    world: &World,
    infohash: InfoHash,
    now: UnixTime,
    w: usize,
    rng: &mut R,
) -> Result<AnnounceResult, SimError> {
    let t = world.torrent(&infohash).ok_or(SimError::UnknownInfohash(infohash))?;
    let present: Vec<&SimPeer> = t.present(now).collect();
    let seeders = present.iter().filter(|p| p.is_seed_at(now)).count() as u32;
    let picked = index::sample(rng, present.len(), w.min(present.len()));
    Ok(AnnounceResult {
        seeders,
        leechers: present.len() as u32 - seeders,
        interval_s: TRACKER_INTERVAL,
        peers: picked.into_iter().map(|i| present[i].endpoint()).collect(),
        received_at: now,
        vantage_id: String::new(),
    })
}

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const ADJECTIVES: [&str; 16] = [
    "silent", "amber", "rapid", "hollow", "crimson", "lunar", "rusty", "velvet", "frozen", "golden", "wild", "quiet",
    "iron", "neon", "misty", "brave",
];
const NOUNS: [&str; 16] = [
    "falcon", "harbor", "river", "tiger", "comet", "forest", "signal", "meadow", "canyon", "engine", "lantern",
    "orchard", "pilot", "summit", "voyage", "willow",
];

fn word_pair(n: usize) -> (&'static str, &'static str) {
    (ADJECTIVES[n % 16], NOUNS[(n / 16 + n * 7) % 16])
}

fn subcategories(category: &str) -> &'static [&'static str] {
    match category {
        "Video" => &["Movies", "TV shows", "Music videos"],
        "Audio" => &["Albums", "Singles"],
        "Software" => &["Windows", "Games", "Mac"],
        "Books" => &["Ebooks", "Comics"],
        _ => &["Other"],
    }
}

fn extension(category: &str) -> &'static str {
    match category {
        "Video" => "avi",
        "Audio" => "mp3",
        "Software" => "iso",
        "Books" => "pdf",
        _ => "zip",
    }
}

/// Builds the world and its ground truth. A pure function of `config`.
pub fn generate_world(config: &WorldConfig) -> Result<(World, GroundTruth), ConfigError> {
    config.validate()?;
    let seed = config.rng_seed;
    let mut rng = stream(seed, STREAM_PUBLISHERS);
    let mut alloc = IpAllocator::default();
    let hosting = IpAllocator::of_kind(IspKind::Hosting);
    let commercial = IpAllocator::of_kind(IspKind::Commercial);

    // publishers and how many torrents each lists
    let mut publishers = Vec::new();
    let mut counts = Vec::new();
    let honest = config.honest_counts();
    let n_top = config.top_hosting + config.top_commercial;
    let (mut hp_left, mut ci_left) = (config.top_hosting, config.top_commercial);
    let mix = &config.business_class_mix;
    let mut class_left = [mix.bt_portal, mix.other_web, mix.altruistic];
    for (rank, &count) in honest.iter().enumerate() {
        let role = if rank < n_top {
            // alternate so both top groups get comparable ranks
            if hp_left > 0 && (rank % 2 == 0 || ci_left == 0) {
                hp_left -= 1;
                Role::TopHosting
            } else {
                ci_left -= 1;
                Role::TopCommercial
            }
        } else {
            Role::Regular
        };
        let class = (0..3).map(|k| (rank + k) % 3).find(|&k| class_left[k] > 0).map(|k| {
            class_left[k] -= 1;
            [
                BusinessClass::BtPortal,
                BusinessClass::OtherWeb,
                BusinessClass::Altruistic,
            ][k]
        });
        let b = config.roles.get(role);
        let pool = match b.isp {
            IspKind::Hosting => &hosting,
            IspKind::Commercial => &commercial,
        };
        let isp = pool[rng.gen_range(0..pool.len())];
        let ips = (0..b.ips).map(|_| alloc.take(isp)).collect();
        let nat = role == Role::Regular && rng.gen_bool(config.nat_fraction);
        let (a, n) = word_pair(rank);
        let site = match class {
            Some(BusinessClass::BtPortal | BusinessClass::OtherWeb) => Some(format!("{n}{a}{rank}.com")),
            _ => None,
        };
        publishers.push(SimPublisher {
            username: format!("{a}{n}{rank}"),
            role,
            ips,
            nat,
            business_class: class,
            site,
            removed_at: None,
            entity: publishers.len(),
            torrents: Vec::new(),
        });
        counts.push(count as usize);
    }
    let fake = &config.fake_publisher_spec;
    let mut fake_removals = Vec::new();
    for f in 0..fake.count {
        let isp = hosting[rng.gen_range(0..hosting.len())];
        let ip = alloc.take(isp);
        let entity = publishers.len();
        for u in 0..fake.usernames_per_ip {
            let (a, n) = word_pair(7 * f + 3 * u + 5);
            fake_removals.push(rng.gen_bool(fake.removed_fraction));
            publishers.push(SimPublisher {
                username: format!("{n}{f}_{a}{u}"),
                role: Role::Fake,
                ips: vec![ip],
                nat: false,
                business_class: None,
                site: None,
                removed_at: None,
                entity,
                torrents: Vec::new(),
            });
            counts.push(fake.torrents_per_username);
        }
    }

    // listing times
    let timeline = config.timeline_length.0;
    let mut listings: Vec<(UnixTime, usize, usize)> = Vec::new();
    for (pi, p) in publishers.iter().enumerate() {
        let mut r = stream(seed, STREAM_PUBLISHER + pi as u64);
        let b = config.roles.get(p.role);
        let window = b.active_window.map_or(timeline, |w| w.0.min(timeline)).max(1);
        let offset = if window < timeline {
            r.gen_range(0..=timeline - window)
        } else {
            0
        };
        let n = counts[pi];
        let slot = window as f64 / n as f64;
        for j in 0..n {
            let at = config.start + offset + ((j as f64 + r.gen::<f64>()) * slot) as i64;
            listings.push((at, pi, j));
        }
    }
    listings.sort();

    let mut torrents = Vec::with_capacity(listings.len());
    for (index, &(published_at, pi, j)) in listings.iter().enumerate() {
        let t = make_torrent(
            config,
            &publishers[pi],
            pi,
            j,
            index,
            published_at,
            &mut alloc,
            &commercial,
        );
        publishers[pi].torrents.push(index);
        torrents.push(t);
    }
    for (p, &removed) in publishers
        .iter_mut()
        .filter(|p| p.role == Role::Fake)
        .zip(&fake_removals)
    {
        if removed {
            let first = p.torrents.iter().map(|&i| torrents[i].item.published_at).min();
            p.removed_at = first.map(|f| f + fake.removal_after.0);
        }
    }

    let by_infohash = torrents.iter().map(|t| (t.infohash, t.index)).collect();
    let listing = (0..torrents.len()).collect();
    let world = World {
        config: config.clone(),
        publishers,
        torrents,
        by_infohash,
        listing,
        now: config.start,
    };
    let truth = ground_truth(&world);
    Ok((world, truth))
}

#[allow(clippy::too_many_arguments)]
fn make_torrent(
    config: &WorldConfig,
    publisher: &SimPublisher,
    pi: usize,
    j: usize,
    index: usize,
    published_at: UnixTime,
    alloc: &mut IpAllocator,
    commercial: &[usize],
) -> SimTorrent {
    let mut r = stream(config.rng_seed, STREAM_TORRENT + index as u64);
    let b = config.roles.get(publisher.role);
    let is_fake = publisher.role == Role::Fake;

    // listing metadata
    let total: f64 = config.category_mix.values().sum();
    let mut pick = r.gen::<f64>() * total;
    let mut category = config.category_mix.keys().next().expect("validated").clone();
    for (c, w) in &config.category_mix {
        if pick < *w {
            category = c.clone();
            break;
        }
        pick -= w;
    }
    let subs = subcategories(&category);
    let subcategory = subs[r.gen_range(0..subs.len())].to_owned();
    let (a, n) = word_pair(r.gen_range(0..256));
    let year = r.gen_range(1990..2011);
    let title = format!("{} {} {year} part {}", capitalize(a), capitalize(n), j + 1);
    let stem = title.replace(' ', ".");
    let ext = extension(&category);
    let (name, description, extra_file) = match (publisher.business_class, &publisher.site) {
        (Some(BusinessClass::BtPortal), Some(site)) => (format!("{stem}-{site}.{ext}"), String::new(), None),
        (Some(BusinessClass::OtherWeb), Some(site)) => (
            format!("{stem}.{ext}"),
            format!("Uploaded by the {site} crew, more at www.{site}"),
            Some(format!("Visit {site}.txt")),
        ),
        _ => (format!("{stem}.{ext}"), String::new(), None),
    };
    let size: u64 = 10f64.powf(r.gen_range(7.0..9.6)) as u64;
    let piece_length = (size / 128).next_power_of_two().max(1 << 14);
    let piece_count = size.div_ceil(piece_length);
    let mut pieces = vec![0u8; piece_count as usize * 20];
    r.fill(&mut pieces[..]);
    let mut info = BTreeMap::new();
    info.insert(b"piece length".to_vec(), Value::Int(piece_length as i64));
    info.insert(b"pieces".to_vec(), Value::Bytes(pieces));
    match &extra_file {
        None => {
            info.insert(b"name".to_vec(), Value::bytes(name.as_bytes()));
            info.insert(b"length".to_vec(), Value::Int(size as i64));
        }
        Some(extra) => {
            let file = |len: u64, path: &str| {
                let mut f = BTreeMap::new();
                f.insert(b"length".to_vec(), Value::Int(len as i64));
                f.insert(b"path".to_vec(), Value::List(vec![Value::bytes(path.as_bytes())]));
                Value::Dict(f)
            };
            info.insert(b"name".to_vec(), Value::bytes(stem.as_bytes()));
            info.insert(
                b"files".to_vec(),
                Value::List(vec![file(size - 64, &name), file(64, extra)]),
            );
        }
    }
    let info = Value::Dict(info);
    let infohash = bencode::infohash(&bencode::encode(&info));
    let mut top = BTreeMap::new();
    top.insert(b"announce".to_vec(), Value::bytes(config.portal.tracker_url.as_bytes()));
    top.insert(b"info".to_vec(), info);
    let metainfo = bencode::encode(&Value::Dict(top));

    let item = FeedItem {
        portal_id: config.portal.portal_id.clone(),
        title,
        category,
        subcategory,
        username: publisher.username.clone(),
        content_size: size,
        torrent_url: format!("{}{index}.torrent", config.portal.torrent_base_url),
        published_at,
        description,
    };

    // swarm schedule
    let shape = if is_fake {
        Shape::Plain
    } else {
        let u: f64 = r.gen();
        let (pre, co, late) = (
            config.prepublished_fraction,
            config.co_seeded_fraction,
            config.late_start_fraction,
        );
        if u < pre {
            Shape::Prepublished
        } else if u < pre + co {
            Shape::CoSeeded
        } else if u < pre + co + late {
            Shape::LateStart
        } else {
            Shape::Plain
        }
    };
    let publisher_ip = publisher.ips[j % publisher.ips.len()];
    let seed_time = jittered(&mut r, b.seed_time.0, b.seed_jitter);
    let start = match shape {
        Shape::Prepublished => published_at - r.gen_range(12 * HOUR..36 * HOUR),
        Shape::LateStart => published_at + r.gen_range(5 * MINUTE..20 * MINUTE),
        _ => published_at,
    };
    let end = match shape {
        Shape::Prepublished => published_at + seed_time,
        _ => start + seed_time,
    };
    let mut peers = vec![SimPeer {
        kind: PeerKind::Publisher,
        ip: publisher_ip,
        port: 6881 + (pi % 1000) as u16,
        arrive: start,
        depart: end,
        complete_at: Some(start),
        nat: publisher.nat,
    }];
    if shape == Shape::CoSeeded {
        let isp = commercial[r.gen_range(0..commercial.len())];
        let stay = jittered(&mut r, seed_time * 3 / 4, 0.3);
        peers.push(SimPeer {
            kind: PeerKind::CoSeeder,
            ip: alloc.take(isp),
            port: r.gen_range(1024..=65535),
            arrive: start,
            depart: start + stay,
            complete_at: Some(start),
            nat: false,
        });
    }
    downloaders(
        config,
        b,
        is_fake,
        shape,
        published_at,
        start,
        &mut peers,
        &mut r,
        alloc,
        commercial,
    );
    peers.sort_by_key(|p| (p.arrive, p.kind != PeerKind::Publisher));

    SimTorrent {
        index,
        infohash,
        publisher: pi,
        publisher_ip,
        nat: publisher.nat,
        shape,
        item,
        metainfo,
        piece_count,
        peers,
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
        .unwrap_or_default()
}

fn jittered(r: &mut ChaCha8Rng, mean: Seconds, jitter: f64) -> Seconds {
    let f = if jitter > 0.0 {
        r.gen_range(1.0 - jitter..1.0 + jitter)
    } else {
        1.0
    };
    ((mean as f64 * f) as Seconds).max(MINUTE)
}

/// Poisson arrivals by thinning. The rate is `popularity` per hour, decaying
/// from the listing; a prepublished swarm runs at three times that rate,
/// flat before the listing and decaying after it. Arrivals stop once the
/// swarm has emptied or is at the population cap.
#[allow(clippy::too_many_arguments)]
fn downloaders(
    config: &WorldConfig,
    b: &RoleBehavior,
    is_fake: bool,
    shape: Shape,
    listed: UnixTime,
    start: UnixTime,
    peers: &mut Vec<SimPeer>,
    r: &mut ChaCha8Rng,
    alloc: &mut IpAllocator,
    commercial: &[usize],
) {
    let boost = if shape == Shape::Prepublished { 3.0 } else { 1.0 };
    let peak = b.popularity * boost / HOUR as f64;
    if peak <= 0.0 {
        return;
    }
    let decay = b.arrival_decay.0 as f64;
    let rate = |t: UnixTime| {
        if t < listed {
            peak
        } else {
            peak * (-((t - listed) as f64) / decay).exp()
        }
    };
    let stop_at = listed + (decay * 1000f64.ln()) as i64;
    let gap = Exp::new(peak).expect("positive rate");
    let s = &config.peer_session_distribution;
    let session = Exp::new(1.0 / s.mean.0 as f64).expect("positive mean");
    let mut departures: BinaryHeap<Reverse<UnixTime>> = peers.iter().map(|p| Reverse(p.depart)).collect();
    let mut t = start as f64;
    loop {
        t += gap.sample(r);
        let at = t as UnixTime;
        if at >= stop_at {
            break;
        }
        if r.gen::<f64>() * peak >= rate(at) {
            continue;
        }
        while departures.peek().is_some_and(|Reverse(d)| *d <= at) {
            departures.pop();
        }
        if departures.is_empty() {
            // nobody left to download from
            break;
        }
        if departures.len() >= config.swarm_population_cap {
            continue;
        }
        let stay = (session.sample(r) as Seconds).max(s.floor.0).max(1);
        let complete_at = (!is_fake && r.gen_bool(s.complete_fraction))
            .then(|| at + (stay as f64 * r.gen_range(0.2..0.8)) as Seconds);
        let isp = commercial[r.gen_range(0..commercial.len())];
        peers.push(SimPeer {
            kind: PeerKind::Downloader,
            ip: alloc.take(isp),
            port: r.gen_range(1024..=65535),
            arrive: at,
            depart: at + stay,
            complete_at,
            nat: r.gen_bool(s.nat_fraction),
        });
        departures.push(Reverse(at + stay));
    }
}

fn ground_truth(world: &World) -> GroundTruth {
    let publishers = world
        .publishers
        .iter()
        .map(|p| TruthPublisher {
            username: p.username.clone(),
            role: p.role,
            ips: p.ips.clone(),
            nat: p.nat,
            business_class: p.business_class,
            site: p.site.clone(),
            removed_at: p.removed_at,
            torrents: p.torrents.len(),
        })
        .collect();
    let torrents = world
        .torrents
        .iter()
        .map(|t| {
            let p = t.publisher_peer();
            let mut downloaders: Vec<Ipv4Addr> = t
                .peers
                .iter()
                .filter(|p| p.kind != PeerKind::Publisher)
                .map(|p| p.ip)
                .collect();
            downloaders.sort();
            downloaders.dedup();
            TruthTorrent {
                infohash: t.infohash,
                username: world.publishers[t.publisher].username.clone(),
                publisher_ip: t.publisher_ip,
                nat: t.nat,
                published_at: t.item.published_at,
                birth: t.birth(),
                end: t.end(),
                shape: t.shape,
                category: t.item.category.clone(),
                sessions: vec![(p.arrive, p.depart)],
                downloaders,
            }
        })
        .collect();
    GroundTruth { publishers, torrents }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            publisher_count: 12,
            timeline_length: crate::config::Span(2 * 86_400),
            ..WorldConfig::default()
        }
    }

    #[test]
    fn explicit_counts_give_torrent_totals() {
        let mut c = small();
        c.content_count_distribution = crate::config::ContentCounts {
            zipf_exponent: None,
            zipf_scale: 1.0,
            counts: Some(vec![5, 4, 3, 2, 2, 1, 1, 1, 1, 1, 1, 1]),
        };
        let (w, _) = generate_world(&c).unwrap();
        let got: Vec<usize> = w.publishers.iter().map(|p| p.torrents.len()).collect();
        assert_eq!(got, vec![5, 4, 3, 2, 2, 1, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn announce_clamps_to_population() {
        let (w, _) = generate_world(&small()).unwrap();
        let t = &w.torrents[0];
        let at = t.item.published_at + 1;
        let pop = t.present(at).count();
        let mut r = stream(9, 0);
        let res = sim_announce(&w, t.infohash, at, 50, &mut r).unwrap();
        assert_eq!(res.peers.len(), pop.min(50));
        assert_eq!((res.seeders + res.leechers) as usize, pop);
    }

    #[test]
    fn unknown_infohash() {
        let (w, _) = generate_world(&small()).unwrap();
        let mut r = stream(9, 0);
        assert_eq!(
            sim_announce(&w, InfoHash([0; 20]), w.now, 50, &mut r),
            Err(SimError::UnknownInfohash(InfoHash([0; 20])))
        );
    }

    #[test]
    fn departed_peers_are_not_sampled() {
        let (mut w, _) = generate_world(&small()).unwrap();
        let t = w.torrents[0].clone();
        let p = t.peers.last().unwrap().clone();
        w.now = p.depart - 1;
        w.advance(1);
        let mut r = stream(9, 0);
        let res = sim_announce(&w, t.infohash, w.now, 10_000, &mut r).unwrap();
        assert!(!res.peers.contains(&p.endpoint()));
    }

    #[test]
    fn population_never_exceeds_cap() {
        let mut c = small();
        c.swarm_population_cap = 5;
        c.roles.regular.popularity = 60.0;
        let (w, _) = generate_world(&c).unwrap();
        for t in &w.torrents {
            for p in &t.peers {
                assert!(t.present(p.arrive).count() <= 5);
            }
        }
    }

    #[test]
    fn leecher_progress() {
        let p = SimPeer {
            kind: PeerKind::Downloader,
            ip: Ipv4Addr::LOCALHOST,
            port: 1,
            arrive: 0,
            depart: 100,
            complete_at: Some(80),
            nat: false,
        };
        assert_eq!(p.pieces_have(0, 8), 0);
        assert_eq!(p.pieces_have(40, 8), 4);
        assert_eq!(p.pieces_have(79, 8), 7);
        assert_eq!(p.pieces_have(80, 8), 8);
        let stuck = SimPeer { complete_at: None, ..p };
        assert_eq!(stuck.pieces_have(99, 8), 7);
    }
}
