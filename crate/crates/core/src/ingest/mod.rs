//! Access logs to listing instances.
//!
//! Log CSV columns (header required):
//! `session_id,timestamp,area_id,item_id,position,event`, with an ISO-8601
//! UTC timestamp, a 0-based position and `event` one of `view` or `reserve`.

mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::model::{banded_adjacency, ListingInstance};

pub use synthetic::{generate_synthetic, planted_clusters, Profile};

pub const LOG_HEADER: [&str; 6] = ["session_id", "timestamp", "area_id", "item_id", "position", "event"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    View,
    Reserve,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEvent {
    pub session_id: String,
    pub timestamp: DateTime<Utc>,
    pub area_id: String,
    pub item_id: String,
    pub position: usize,
    pub event: EventKind,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<LogEvent>,
    pub malformed: usize,
}

fn parse_record(rec: &csv::StringRecord) -> Option<LogEvent> {
    if rec.len() != LOG_HEADER.len() {
        return None;
    }
    let timestamp = DateTime::parse_from_rfc3339(rec[1].trim()).ok()?.with_timezone(&Utc);
    let event = match rec[5].trim() {
        "view" => EventKind::View,
        "reserve" => EventKind::Reserve,
        _ => return None,
    };
    let session_id = rec[0].trim();
    let item_id = rec[3].trim();
    if session_id.is_empty() || item_id.is_empty() {
        return None;
    }
    Some(LogEvent {
        session_id: session_id.to_owned(),
        timestamp,
        area_id: rec[2].trim().to_owned(),
        item_id: item_id.to_owned(),
        position: rec[4].trim().parse().ok()?,
        event,
    })
}

/// Parses a log, counting malformed rows instead of failing on them. More
/// than half the rows malformed is a format error.
pub fn parse_log(input: impl Read) -> Result<ParsedLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Ok(ParsedLog::default()),
        Some(h) => h.map_err(csv_error)?,
    };
    if header.iter().map(str::trim).ne(LOG_HEADER) {
        return Err(Error::Format(format!(
            "expected header {}, found {:?}",
            LOG_HEADER.join(","),
            header.iter().collect::<Vec<_>>()
        )));
    }

    let mut out = ParsedLog::default();
    let mut rows = 0usize;
    for rec in records {
        rows += 1;
        match rec {
            Ok(rec) => match parse_record(&rec) {
                Some(ev) => out.events.push(ev),
                None => out.malformed += 1,
            },
            Err(e) if e.is_io_error() => return Err(csv_error(e)),
            Err(_) => out.malformed += 1,
        }
    }
    if out.malformed * 2 > rows {
        return Err(Error::Format(format!(
            "{} of {rows} log rows are malformed",
            out.malformed
        )));
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{other:?}")),
        }
    } else {
        Error::Csv(e)
    }
}

/// Maps item ids onto row indices `0..n`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemUniverse {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl ItemUniverse {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (k, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), k).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate item id {id:?}")));
            }
        }
        Ok(Self { ids, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimationConfig {
    /// Pseudo-reservations added to every rate.
    pub smoothing_alpha: f64,
    /// Pseudo-views added to every rate.
    pub smoothing_beta: f64,
    /// Distinct viewing sessions an item needs to enter an instance.
    pub min_sessions: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            smoothing_alpha: 1.0,
            smoothing_beta: 20.0,
            min_sessions: 10,
        }
    }
}

fn rate(reserves: f64, views: f64, cfg: &EstimationConfig) -> f64 {
    let den = views + cfg.smoothing_beta;
    if den > 0.0 {
        (reserves + cfg.smoothing_alpha) / den
    } else {
        0.0
    }
}

/// Smoothed conversion rate per (item, position).
///
/// Observed cells use `(reserves + α) / (views + β)`. Cells never viewed are
/// imputed as `item rate × position rate / global rate`, each rate smoothed
/// the same way. Events for unknown items or positions `>= n` are ignored.
pub fn estimate_sales(events: &[LogEvent], universe: &ItemUniverse, cfg: &EstimationConfig) -> SquareMatrix<f64> {
    let n = universe.len();
    let mut views = SquareMatrix::<f64>::zeros(n);
    let mut reserves = SquareMatrix::<f64>::zeros(n);
    for ev in events {
        let Some(i) = universe.get(&ev.item_id) else { continue };
        if ev.position >= n {
            continue;
        }
        match ev.event {
            EventKind::View => views[(i, ev.position)] += 1.0,
            EventKind::Reserve => reserves[(i, ev.position)] += 1.0,
        }
    }

    let row_sum = |m: &SquareMatrix<f64>, i: usize| m.row(i).iter().sum::<f64>();
    let col_sum = |m: &SquareMatrix<f64>, j: usize| (0..n).map(|i| m[(i, j)]).sum::<f64>();
    let item_rate: Vec<f64> = (0..n)
        .map(|i| rate(row_sum(&reserves, i), row_sum(&views, i), cfg))
        .collect();
    let pos_rate: Vec<f64> = (0..n)
        .map(|j| rate(col_sum(&reserves, j), col_sum(&views, j), cfg))
        .collect();
    let global = rate(reserves.as_slice().iter().sum(), views.as_slice().iter().sum(), cfg);

    SquareMatrix::from_fn(n, |i, j| {
        if views[(i, j)] > 0.0 {
            rate(reserves[(i, j)], views[(i, j)], cfg)
        } else if global > 0.0 {
            item_rate[i] * pos_rate[j] / global
        } else {
            0.0
        }
    })
}

/// Number of sessions in which both items occur, for every pair of distinct items.
pub(crate) fn count_co_occurrence<'a>(
    n: usize,
    sessions: impl IntoIterator<Item = &'a BTreeSet<usize>>,
) -> SquareMatrix<f64> {
    let mut f = SquareMatrix::zeros(n);
    for items in sessions {
        let items: Vec<usize> = items.iter().copied().collect();
        for (a, &i) in items.iter().enumerate() {
            for &k in &items[a + 1..] {
                f[(i, k)] += 1.0;
                f[(k, i)] += 1.0;
            }
        }
    }
    f
}

/// Co-browse counts: `f[i][i']` is the number of distinct sessions that viewed both items.
pub fn cobrowse_similarity(events: &[LogEvent], universe: &ItemUniverse) -> SquareMatrix<f64> {
    let mut sessions: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for ev in events.iter().filter(|e| e.event == EventKind::View) {
        if let Some(i) = universe.get(&ev.item_id) {
            sessions.entry(ev.session_id.as_str()).or_default().insert(i);
        }
    }
    count_co_occurrence(universe.len(), sessions.values())
}

/// Shifts and scales the included cells to mean 0 and population standard
/// deviation 1. With `exclude_diagonal` the diagonal neither enters the
/// statistics nor survives: it is set to 0.
pub fn znormalize(m: &SquareMatrix<f64>, exclude_diagonal: bool) -> Result<SquareMatrix<f64>> {
    let n = m.n();
    let included = |i: usize, j: usize| !(exclude_diagonal && i == j);
    let values: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| included(i, j))
        .map(|(i, j)| m[(i, j)])
        .collect();
    let Some(&first) = values.first() else {
        return Err(Error::DegenerateInput("no cells to normalize".into()));
    };
    if values.iter().all(|&v| v == first) {
        return Err(Error::DegenerateInput(
            "all cells are equal; standard deviation is 0".into(),
        ));
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count).sqrt();
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::DegenerateInput(format!("standard deviation is {std}")));
    }
    Ok(SquareMatrix::from_fn(n, |i, j| {
        if included(i, j) {
            (m[(i, j)] - mean) / std
        } else {
            0.0
        }
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestSummary {
    pub area_events: usize,
    pub universe: ItemUniverse,
}

/// Builds an instance for one area from the `n` most-viewed items (ties by
/// id) that reach `cfg.min_sessions` distinct viewing sessions. Sales and
/// similarity are normalized independently.
pub fn instance_from_log(
    events: &[LogEvent],
    area: &str,
    n: usize,
    cfg: &EstimationConfig,
    band: usize,
    w: f64,
) -> Result<(ListingInstance, IngestSummary)> {
    let area_events: Vec<LogEvent> = events.iter().filter(|e| e.area_id == area).cloned().collect();

    let mut views: BTreeMap<&str, usize> = BTreeMap::new();
    let mut sessions: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for ev in area_events.iter().filter(|e| e.event == EventKind::View) {
        *views.entry(&ev.item_id).or_default() += 1;
        sessions.entry(&ev.item_id).or_default().insert(&ev.session_id);
    }
    let mut ranked: Vec<(&str, usize)> = views
        .into_iter()
        .filter(|(id, _)| sessions[id].len() >= cfg.min_sessions)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(n);
    if ranked.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "area {area:?} has {} eligible items; at least 2 are needed",
            ranked.len()
        )));
    }

    let universe = ItemUniverse::new(ranked.iter().map(|(id, _)| id.to_string()).collect())?;
    let sales = znormalize(&estimate_sales(&area_events, &universe, cfg), false)?;
    let similarity = znormalize(&cobrowse_similarity(&area_events, &universe), true)?;
    let adjacency = banded_adjacency(universe.len(), band)?;
    let inst = ListingInstance::new(sales, similarity, adjacency, w);
    Ok((
        inst,
        IngestSummary {
            area_events: area_events.len(),
            universe,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "session_id,timestamp,area_id,item_id,position,event\n";

    fn ev(session: &str, item: &str, position: usize, event: EventKind) -> LogEvent {
        LogEvent {
            session_id: session.into(),
            timestamp: DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z")
                .unwrap()
                .with_timezone(&Utc),
            area_id: "a".into(),
            item_id: item.into(),
            position,
            event,
        }
    }

    fn universe(ids: &[&str]) -> ItemUniverse {
        ItemUniverse::new(ids.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn parse_empty_and_valid() {
        let p = parse_log("".as_bytes()).unwrap();
        assert!(p.events.is_empty());
        assert_eq!(p.malformed, 0);

        let text = format!("{HEADER}s1,2024-05-01T10:00:00Z,tokyo,h1,3,view\n");
        let p = parse_log(text.as_bytes()).unwrap();
        assert_eq!(p.events.len(), 1);
        let e = &p.events[0];
        assert_eq!(
            (
                e.session_id.as_str(),
                e.area_id.as_str(),
                e.item_id.as_str(),
                e.position,
                e.event
            ),
            ("s1", "tokyo", "h1", 3, EventKind::View)
        );
        assert_eq!(e.timestamp.to_rfc3339(), "2024-05-01T10:00:00+00:00");
    }

    #[test]
    fn parse_counts_malformed() {
        let text = format!(
            "{HEADER}s1,2024-05-01T10:00:00Z,tokyo,h1,0,view\n\
             s1,not-a-time,tokyo,h2,1,view\n\
             s2,2024-05-01T11:00:00Z,tokyo,h2,1,reserve\n"
        );
        let p = parse_log(text.as_bytes()).unwrap();
        assert_eq!(p.events.len(), 2);
        assert_eq!(p.malformed, 1);
    }

    #[test]
    fn parse_rejects_mostly_malformed_and_bad_header() {
        let text = format!("{HEADER}x\ny,z\ns1,2024-05-01T10:00:00Z,t,h,0,view\n");
        assert!(matches!(parse_log(text.as_bytes()), Err(Error::Format(_))));
        assert!(matches!(parse_log("a,b\n".as_bytes()), Err(Error::Format(_))));
        let bad_event = format!("{HEADER}s1,2024-05-01T10:00:00Z,t,h,0,click\n");
        assert!(parse_log(bad_event.as_bytes()).is_err());
        let negative = format!("{HEADER}s1,2024-05-01T10:00:00Z,t,h,-1,view\n");
        assert!(parse_log(negative.as_bytes()).is_err());
    }

    #[test]
    fn sales_single_cell() {
        let mut events: Vec<LogEvent> = (0..10).map(|k| ev(&format!("s{k}"), "h", 0, EventKind::View)).collect();
        events.push(ev("s0", "h", 0, EventKind::Reserve));
        let s = estimate_sales(&events, &universe(&["h"]), &EstimationConfig::default());
        assert!((s[(0, 0)] - 2.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn sales_without_events_is_prior() {
        let s = estimate_sales(&[], &universe(&["a", "b", "c"]), &EstimationConfig::default());
        assert!(s.as_slice().iter().all(|&v| (v - 1.0 / 20.0).abs() < 1e-15));
    }

    #[test]
    fn sales_imputation_by_hand() {
        // a: 4 views at 0, 1 reserve at 0. b: 2 views at 0, 6 views at 1, 2 reserves at 1.
        let mut events = Vec::new();
        events.extend((0..4).map(|_| ev("s", "a", 0, EventKind::View)));
        events.push(ev("s", "a", 0, EventKind::Reserve));
        events.extend((0..2).map(|_| ev("s", "b", 0, EventKind::View)));
        events.extend((0..6).map(|_| ev("s", "b", 1, EventKind::View)));
        events.extend((0..2).map(|_| ev("s", "b", 1, EventKind::Reserve)));
        let cfg = EstimationConfig {
            smoothing_alpha: 1.0,
            smoothing_beta: 20.0,
            min_sessions: 1,
        };
        let s = estimate_sales(&events, &universe(&["a", "b"]), &cfg);
        let item_a = (1.0 + 1.0) / (4.0 + 20.0);
        let pos_1 = (2.0 + 1.0) / (6.0 + 20.0);
        let global = (3.0 + 1.0) / (12.0 + 20.0);
        let expect = item_a * pos_1 / global;
        assert!((s[(0, 1)] - expect).abs() < 1e-15);
        assert!(s[(0, 1)] > 0.0);
        assert!((s[(0, 0)] - 2.0 / 24.0).abs() < 1e-15);
        assert!((s[(1, 0)] - 1.0 / 22.0).abs() < 1e-15);
        assert!((s[(1, 1)] - 3.0 / 26.0).abs() < 1e-15);
    }

    #[test]
    fn cobrowse_examples() {
        let u = universe(&["a", "b", "c"]);
        let events = vec![
            ev("s", "a", 0, EventKind::View),
            ev("s", "b", 1, EventKind::View),
            ev("s", "c", 2, EventKind::View),
        ];
        let f = cobrowse_similarity(&events, &u);
        assert_eq!(
            f.to_rows(),
            vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]
        );

        let apart = vec![ev("s1", "a", 0, EventKind::View), ev("s2", "b", 0, EventKind::View)];
        assert!(cobrowse_similarity(&apart, &u).as_slice().iter().all(|&v| v == 0.0));

        let repeat = vec![
            ev("s", "a", 0, EventKind::View),
            ev("s", "a", 0, EventKind::View),
            ev("s", "b", 1, EventKind::View),
        ];
        assert_eq!(cobrowse_similarity(&repeat, &u)[(0, 1)], 1.0);
    }

    #[test]
    fn znormalize_examples() {
        let m = SquareMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let z = znormalize(&m, false).unwrap();
        let expect = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (got, want) in z.as_slice().iter().zip(expect) {
            assert!((got - want).abs() < 1e-3);
        }
        let again = znormalize(&z, false).unwrap();
        for (a, b) in again.as_slice().iter().zip(z.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = SquareMatrix::from_rows(vec![vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        assert!(matches!(znormalize(&flat, false), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn znormalize_excluding_diagonal() {
        let m = SquareMatrix::from_rows(vec![vec![9.0, 1.0, 2.0], vec![1.0, 9.0, 3.0], vec![2.0, 3.0, 9.0]]).unwrap();
        let z = znormalize(&m, true).unwrap();
        assert!((0..3).all(|i| z[(i, i)] == 0.0));
        let off: Vec<f64> = (0..3)
            .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|c| z[c])
            .collect();
        let mean = off.iter().sum::<f64>() / 6.0;
        let var = off.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
    }
}
