//! Tracking, link and play-by-play CSV ingestion.
//!
//! Tracking: `timestamp,player_id,team,x,y[,speed]`. Rows must be grouped by
//! non-decreasing timestamp; a repeated `(timestamp, player)` row replaces the
//! earlier one. Missing speeds are derived as displacement over elapsed time
//! since the player's previous sample, and are 0 at a player's first sample.
//!
//! Links: `timestamp,player_a,player_b`. Events:
//! `timestamp,event_type,score_a,score_b,major_player,secondary_player`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{link_distance, FeatureConfig};
use crate::model::{Link, NodeEntry, NodeState, NodeUniverse, Position, TimestampedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtDims {
    pub width: f64,
    pub height: f64,
}

impl Default for CourtDims {
    /// NBA court in feet.
    fn default() -> Self {
        CourtDims {
            width: 94.0,
            height: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    Provided,
    #[default]
    Proximity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkInducerConfig {
    pub mode: LinkMode,
    /// Court units; used in proximity mode.
    pub proximity_radius: f64,
    pub cross_team_only: bool,
}

impl Default for LinkInducerConfig {
    fn default() -> Self {
        LinkInducerConfig {
            mode: LinkMode::Proximity,
            proximity_radius: 10.0,
            cross_team_only: false,
        }
    }
}

impl LinkInducerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == LinkMode::Proximity
            && !(self.proximity_radius.is_finite() && self.proximity_radius > 0.0)
        {
            return Err(Error::InvalidFrame(format!(
                "proximity_radius must be > 0, got {}",
                self.proximity_radius
            )));
        }
        Ok(())
    }
}

/// Per-dataset ingestion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub name: Option<String>,
    /// `None` means the units are unknown and tracking cannot be validated.
    pub court: Option<CourtDims>,
    /// Allowed excursion outside the court, in court units.
    pub bounds_tolerance: f64,
    pub links: LinkInducerConfig,
    pub features: FeatureConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            name: None,
            court: Some(CourtDims::default()),
            bounds_tolerance: 5.0,
            links: LinkInducerConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

/// Parsed tracking data: the node universe and one frame per timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingData {
    pub universe: NodeUniverse,
    pub frames: Vec<TimestampedGraph>,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    x: f64,
    y: f64,
    speed: Option<f64>,
}

fn malformed(line: u64, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn parse_f64(field: Option<&str>, name: &str, line: u64) -> Result<f64> {
    let raw = field.map(str::trim).unwrap_or("");
    let v: f64 = raw
        .parse()
        .map_err(|_| malformed(line, format!("{name} `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("{name} is not finite")));
    }
    Ok(v)
}

fn reader<R: Read>(stream: R, has_headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(stream)
}

/// Parse a tracking CSV into frames. Links are left empty; see
/// [`attach_links`] and [`induce_links`].
pub fn parse_tracking<R: Read>(stream: R, cfg: &DatasetConfig) -> Result<TrackingData> {
    let court = cfg.court.ok_or(Error::UnknownUnits)?;
    let mut rdr = reader(stream, true);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_speed = match names.as_slice() {
        ["timestamp", "player_id", "team", "x", "y"] => false,
        ["timestamp", "player_id", "team", "x", "y", "speed"] => true,
        _ => {
            return Err(malformed(
                1,
                "header must be `timestamp,player_id,team,x,y[,speed]`",
            ))
        }
    };

    let tol = cfg.bounds_tolerance.max(0.0);
    let mut teams: HashMap<String, String> = HashMap::new();
    let mut groups: Vec<(f64, BTreeMap<String, Sample>)> = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 5 {
            return Err(malformed(line, "expected at least 5 fields"));
        }
        let t = parse_f64(record.get(0), "timestamp", line)?;
        let player = record[1].to_string();
        let team = record[2].to_string();
        if player.is_empty() {
            return Err(malformed(line, "empty player_id"));
        }
        let x = parse_f64(record.get(3), "x", line)?;
        let y = parse_f64(record.get(4), "y", line)?;
        if x < -tol || x > court.width + tol || y < -tol || y > court.height + tol {
            return Err(malformed(
                line,
                format!("position ({x}, {y}) outside the court"),
            ));
        }
        let speed = match record.get(5).filter(|s| has_speed && !s.is_empty()) {
            Some(s) => {
                let v = parse_f64(Some(s), "speed", line)?;
                if v < 0.0 {
                    return Err(malformed(line, "negative speed"));
                }
                Some(v)
            }
            None => None,
        };
        match teams.get(&player) {
            Some(known) if *known != team => {
                return Err(malformed(line, format!("player {player} changes team")))
            }
            Some(_) => {}
            None => {
                teams.insert(player.clone(), team);
            }
        }
        match groups.last_mut() {
            Some((gt, rows)) if *gt == t => {
                rows.insert(player, Sample { x, y, speed });
            }
            Some((gt, _)) if t < *gt => return Err(Error::NonMonotoneTimestamps { line }),
            _ => groups.push((t, BTreeMap::from([(player, Sample { x, y, speed })]))),
        }
    }

    if groups.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut entries: Vec<NodeEntry> = teams
        .into_iter()
        .map(|(id, class)| NodeEntry { id, class })
        .collect();
    entries.sort_by(|a, b| (&a.class, &a.id).cmp(&(&b.class, &b.id)));
    let universe = NodeUniverse::new(entries)?;

    let mut last: HashMap<u32, (f64, Position)> = HashMap::new();
    let mut frames = Vec::with_capacity(groups.len());
    for (t, rows) in groups {
        let mut nodes = Vec::with_capacity(rows.len());
        for (player, s) in rows {
            let ordinal = universe.ordinal(&player).expect("universe built from rows");
            let pos = Position::new(s.x, s.y);
            let speed = s.speed.unwrap_or_else(|| match last.get(&ordinal) {
                Some(&(pt, pp)) => link_distance(pp, pos) / (t - pt),
                None => 0.0,
            });
            last.insert(ordinal, (t, pos));
            nodes.push(NodeState {
                ordinal,
                position: pos,
                speed,
            });
        }
        frames.push(TimestampedGraph::new(t, nodes, Vec::new())?);
    }
    Ok(TrackingData { universe, frames })
}

/// Attach links from a `timestamp,player_a,player_b` CSV. Every link must
/// name a frame timestamp and two players present in that frame.
pub fn attach_links<R: Read>(data: &mut TrackingData, stream: R) -> Result<()> {
    let mut rdr = reader(stream, false);
    let mut by_frame: BTreeMap<usize, Vec<Link>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    let mut first = true;
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if std::mem::take(&mut first) && record.get(0) == Some("timestamp") {
            continue;
        }
        if record.len() < 3 {
            return Err(malformed(line, "expected timestamp,player_a,player_b"));
        }
        let t = parse_f64(record.get(0), "timestamp", line)?;
        let ord = |i: usize| {
            data.universe
                .ordinal(&record[i])
                .ok_or_else(|| malformed(line, format!("unknown player `{}`", &record[i])))
        };
        let (a, b) = (ord(1)?, ord(2)?);
        let link = Link::new(a, b).ok_or_else(|| malformed(line, "self-link"))?;
        let idx = data
            .frames
            .binary_search_by(|f| f.timestamp().total_cmp(&t))
            .map_err(|_| malformed(line, format!("no frame at timestamp {t}")))?;
        let frame = &data.frames[idx];
        if !frame.contains(a) || !frame.contains(b) {
            return Err(malformed(line, "link endpoint absent from its frame"));
        }
        by_frame.entry(idx).or_default().push(link);
    }
    for (idx, links) in by_frame {
        let mut all = data.frames[idx].links().to_vec();
        all.extend(links);
        data.frames[idx] = data.frames[idx].with_links(all)?;
    }
    Ok(())
}

/// Recompute links from positions. In proximity mode, `(a, b)` is linked iff
/// their distance is at most the radius (and, with `cross_team_only`, their
/// teams differ). In provided mode frames are returned unchanged.
pub fn induce_links(
    frames: &[TimestampedGraph],
    universe: &NodeUniverse,
    cfg: &LinkInducerConfig,
) -> Result<Vec<TimestampedGraph>> {
    cfg.validate()?;
    if cfg.mode == LinkMode::Provided {
        return Ok(frames.to_vec());
    }
    let class = |o: u32| universe.entry(o).map(|e| e.class.as_str());
    frames
        .iter()
        .map(|f| {
            let nodes = f.nodes();
            let mut links = Vec::new();
            for (i, a) in nodes.iter().enumerate() {
                for b in &nodes[i + 1..] {
                    if cfg.cross_team_only && class(a.ordinal) == class(b.ordinal) {
                        continue;
                    }
                    if link_distance(a.position, b.position) <= cfg.proximity_radius {
                        links.extend(Link::new(a.ordinal, b.ordinal));
                    }
                }
            }
            f.with_links(links)
        })
        .collect()
}

/// Parse tracking (and links, in provided mode) then apply the configured inducer.
pub fn load_dataset<R1: Read, R2: Read>(
    tracking: R1,
    links: Option<R2>,
    cfg: &DatasetConfig,
) -> Result<TrackingData> {
    cfg.links.validate()?;
    let mut data = parse_tracking(tracking, cfg)?;
    match cfg.links.mode {
        LinkMode::Provided => {
            if let Some(l) = links {
                attach_links(&mut data, l)?;
            }
        }
        LinkMode::Proximity => {
            data.frames = induce_links(&data.frames, &data.universe, &cfg.links)?;
        }
    }
    Ok(data)
}

/// Write frames back as a tracking CSV with an explicit speed column.
pub fn write_tracking<W: Write>(out: W, data: &TrackingData) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "player_id", "team", "x", "y", "speed"])?;
    for f in &data.frames {
        for n in f.nodes() {
            let e = data
                .universe
                .entry(n.ordinal)
                .ok_or(Error::UniverseMismatch)?;
            w.write_record([
                f.timestamp().to_string(),
                e.id.clone(),
                e.class.clone(),
                n.position.x.to_string(),
                n.position.y.to_string(),
                n.speed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_links<W: Write>(out: W, data: &TrackingData) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "player_a", "player_b"])?;
    for f in &data.frames {
        for l in f.links() {
            let id = |o| {
                data.universe
                    .entry(o)
                    .map(|e| e.id.clone())
                    .ok_or(Error::UniverseMismatch)
            };
            w.write_record([f.timestamp().to_string(), id(l.a())?, id(l.b())?])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One play-by-play event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: f64,
    pub event_type: String,
    pub score_a: u32,
    pub score_b: u32,
    pub major_player: Option<String>,
    pub secondary_player: Option<String>,
}

/// Parse a play-by-play CSV; the header row is optional. Events come back
/// sorted by timestamp (stable), with per-team scores checked to never drop.
pub fn parse_events<R: Read>(stream: R) -> Result<Vec<EventRecord>> {
    let mut rdr = reader(stream, false);
    let mut events: Vec<(u64, EventRecord)> = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut first = true;
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if std::mem::take(&mut first) && record.get(0) == Some("timestamp") {
            continue;
        }
        if record.len() < 4 {
            return Err(malformed(
                line,
                "expected at least timestamp,event_type,score_a,score_b",
            ));
        }
        let score = |i: usize, name: &str| {
            record[i].parse::<u32>().map_err(|_| {
                malformed(
                    line,
                    format!("{name} `{}` is not a non-negative integer", &record[i]),
                )
            })
        };
        let opt = |i: usize| record.get(i).filter(|s| !s.is_empty()).map(str::to_string);
        let event_type = record[1].to_string();
        if event_type.is_empty() {
            return Err(malformed(line, "empty event_type"));
        }
        events.push((
            line,
            EventRecord {
                timestamp: parse_f64(record.get(0), "timestamp", line)?,
                event_type,
                score_a: score(2, "score_a")?,
                score_b: score(3, "score_b")?,
                major_player: opt(4),
                secondary_player: opt(5),
            },
        ));
    }
    events.sort_by(|a, b| a.1.timestamp.total_cmp(&b.1.timestamp));
    for w in events.windows(2) {
        let (prev, (line, next)) = (&w[0].1, &w[1]);
        if next.score_a < prev.score_a || next.score_b < prev.score_b {
            return Err(Error::ScoreRegression { line: *line });
        }
    }
    Ok(events.into_iter().map(|(_, e)| e).collect())
}
