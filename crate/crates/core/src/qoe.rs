//! Parametric satisfaction model.
//!
//! A viewer's satisfaction with a representation is modelled as
//! `1 - (m + n / (rate + o))`, with one `(m, n, o)` triple per video type,
//! display resolution and encoded resolution. The model is inverted to turn
//! evenly spaced satisfaction levels into a grid of candidate encoding rates.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Encoding rate in kbps.
pub type Kbps = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "224p")]
    P224,
    #[serde(rename = "360p")]
    P360,
    #[serde(rename = "720p")]
    P720,
    #[serde(rename = "1080p")]
    P1080,
}

impl Resolution {
    pub const ALL: [Resolution; 4] = [Resolution::P224, Resolution::P360, Resolution::P720, Resolution::P1080];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Frame size in pixels.
    pub fn dimensions(self) -> (u32, u32) {
        match self {
            Resolution::P224 => (400, 224),
            Resolution::P360 => (640, 360),
            Resolution::P720 => (1280, 720),
            Resolution::P1080 => (1920, 1080),
        }
    }

    /// This resolution and its immediate neighbours, clipped at both ends.
    pub fn neighbourhood(self) -> impl Iterator<Item = Resolution> {
        let i = self.index();
        (i.saturating_sub(1)..=(i + 1).min(3)).filter_map(Resolution::from_index)
    }

    pub fn is_adjacent(self, other: Resolution) -> bool {
        self.index().abs_diff(other.index()) <= 1
    }

    pub fn label(self) -> &'static str {
        match self {
            Resolution::P224 => "224p",
            Resolution::P360 => "360p",
            Resolution::P720 => "720p",
            Resolution::P1080 => "1080p",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_end_matches('p') {
            "224" => Ok(Resolution::P224),
            "360" => Ok(Resolution::P360),
            "720" => Ok(Resolution::P720),
            "1080" => Ok(Resolution::P1080),
            _ => Err(Error::InvalidConfig(format!("unknown resolution `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoType {
    Documentary,
    Sport,
    Cartoon,
    Movie,
}

impl VideoType {
    pub const ALL: [VideoType; 4] = [VideoType::Documentary, VideoType::Sport, VideoType::Cartoon, VideoType::Movie];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            VideoType::Documentary => "documentary",
            VideoType::Sport => "sport",
            VideoType::Cartoon => "cartoon",
            VideoType::Movie => "movie",
        }
    }
}

impl fmt::Display for VideoType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for VideoType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "documentary" => Ok(VideoType::Documentary),
            "sport" => Ok(VideoType::Sport),
            "cartoon" => Ok(VideoType::Cartoon),
            "movie" => Ok(VideoType::Movie),
            _ => Err(Error::InvalidConfig(format!("unknown video type `{s}`"))),
        }
    }
}

/// Coefficients of one satisfaction curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SatParams<T> {
    pub m: T,
    pub n: T,
    pub o: T,
}

impl<T: Scalar> SatParams<T> {
    pub fn new(m: T, n: T, o: T) -> Self {
        Self { m, n, o }
    }

    /// Supremum of the unclamped curve as the rate grows.
    pub fn asymptote(&self) -> T {
        T::one() - self.m
    }

    /// Unclamped curve value. Undefined at `rate == -o`.
    pub fn raw(&self, rate: T) -> T {
        T::one() - (self.m + self.n / (rate + self.o))
    }
}

/// Satisfaction score in `[0, 1]` for a representation encoded at `rate` kbps.
///
/// Below the pole (`rate + o < 0`) the fitted curve has no meaning; those
/// rates score 0, which is the limit of the valid branch at the pole.
pub fn satisfaction<T: Scalar>(params: &SatParams<T>, rate: T) -> Result<T> {
    if !(rate > T::zero()) {
        return Err(Error::InvalidRate(rate.to_f64().unwrap_or(f64::NAN)));
    }
    let denom = rate + params.o;
    let scale = T::one().max(params.o.abs());
    if denom.abs() <= T::epsilon() * scale {
        return Err(Error::Singularity {
            rate: rate.to_f64().unwrap_or(f64::NAN),
            offset: params.o.to_f64().unwrap_or(f64::NAN),
        });
    }
    if denom < T::zero() && params.n > T::zero() {
        return Ok(T::zero());
    }
    Ok(params.raw(rate).max(T::zero()).min(T::one()))
}

/// Rate at which the unclamped curve reaches `target`.
pub fn invert_satisfaction<T: Scalar>(params: &SatParams<T>, target: T) -> Result<T> {
    let asymptote = params.asymptote();
    if !(params.n > T::zero()) || !(target > T::zero()) || target >= asymptote {
        return Err(Error::UnreachableTarget {
            target: target.to_f64().unwrap_or(f64::NAN),
            asymptote: asymptote.to_f64().unwrap_or(f64::NAN),
        });
    }
    let rate = params.n / (asymptote - target) - params.o;
    if !(rate > T::zero()) {
        return Err(Error::TargetBelowCurve { target: target.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(rate)
}

/// Rounds a positive rate to integer kbps, halves upward.
pub fn round_kbps(rate: f64) -> Kbps {
    (rate + 0.5).floor().max(1.0) as Kbps
}

#[derive(Deserialize)]
struct TableFile {
    #[allow(dead_code)]
    version: Option<u32>,
    rows: Vec<TableRow>,
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    video: VideoType,
    display: Resolution,
    encoded: Resolution,
    m: f64,
    n: f64,
    o: f64,
}

const BUILTIN_TABLE: &str = include_str!("../data/satisfaction_v1.json");

/// Satisfaction coefficients keyed by (video, display, encoded resolution).
#[derive(Clone, Debug, PartialEq)]
pub struct SatisfactionTable<T> {
    rows: BTreeMap<(VideoType, Resolution, Resolution), SatParams<T>>,
}

impl<T: Scalar> SatisfactionTable<T> {
    /// The fitted coefficients shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json_str(BUILTIN_TABLE).expect("embedded satisfaction table is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        let mut rows = BTreeMap::new();
        for row in file.rows {
            if !row.display.is_adjacent(row.encoded) {
                return Err(Error::InvalidTable(format!(
                    "{} row {} -> {} is not an adjacent pair",
                    row.video, row.display, row.encoded
                )));
            }
            let params = SatParams::new(T::lit(row.m), T::lit(row.n), T::lit(row.o));
            if rows.insert((row.video, row.display, row.encoded), params).is_some() {
                return Err(Error::InvalidTable(format!(
                    "duplicate row {} {} -> {}",
                    row.video, row.display, row.encoded
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let rows: Vec<TableRow> = self
            .rows
            .iter()
            .map(|(&(video, display, encoded), p)| TableRow {
                video,
                display,
                encoded,
                m: p.m.to_f64().unwrap_or(f64::NAN),
                n: p.n.to_f64().unwrap_or(f64::NAN),
                o: p.o.to_f64().unwrap_or(f64::NAN),
            })
            .collect();
        serde_json::json!({ "version": 1, "rows": rows }).to_string()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, video: VideoType, display: Resolution, encoded: Resolution) -> Option<&SatParams<T>> {
        self.rows.get(&(video, display, encoded))
    }

    pub fn params(&self, video: VideoType, display: Resolution, encoded: Resolution) -> Result<&SatParams<T>> {
        self.get(video, display, encoded).ok_or(Error::MissingParams { video, display, encoded })
    }

    /// Satisfaction of a `display` viewer for `video` encoded at (`encoded`, `rate`).
    pub fn score(&self, video: VideoType, display: Resolution, encoded: Resolution, rate: Kbps) -> Result<T> {
        satisfaction(self.params(video, display, encoded)?, T::lit(rate as f64))
    }

    pub fn rows(&self) -> impl Iterator<Item = ((VideoType, Resolution, Resolution), &SatParams<T>)> {
        self.rows.iter().map(|(k, v)| (*k, v))
    }

    /// True when every video has all ten adjacent (display, encoded) rows.
    pub fn is_complete(&self) -> bool {
        VideoType::ALL.iter().all(|&v| {
            Resolution::ALL
                .iter()
                .all(|&d| d.neighbourhood().all(|e| self.rows.contains_key(&(v, d, e))))
        })
    }
}

/// Admissible encoding range per (video, resolution).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateBounds {
    bounds: BTreeMap<(VideoType, Resolution), (Kbps, Kbps)>,
}

/// Published minimum and maximum encoding rates, columns 224p..1080p.
const PUBLISHED_BOUNDS: [(VideoType, [(Kbps, Kbps); 4]); 4] = [
    (VideoType::Movie, [(51, 1961), (67, 2973), (832, 9378), (1888, 24803)]),
    (VideoType::Sport, [(183, 1766), (429, 3190), (1106, 11517), (1976, 19471)]),
    (VideoType::Documentary, [(116, 1488), (231, 2861), (523, 10607), (1022, 10945)]),
    (VideoType::Cartoon, [(52, 1418), (64, 2006), (451, 5321), (835, 13133)]),
];

impl RateBounds {
    /// Reference encoding ranges that accompany the builtin coefficients.
    pub fn published() -> Self {
        let mut bounds = BTreeMap::new();
        for (video, row) in PUBLISHED_BOUNDS {
            for (res, pair) in Resolution::ALL.into_iter().zip(row) {
                bounds.insert((video, res), pair);
            }
        }
        Self { bounds }
    }

    pub fn insert(&mut self, video: VideoType, resolution: Resolution, min: Kbps, max: Kbps) {
        self.bounds.insert((video, resolution), (min, max));
    }

    pub fn get(&self, video: VideoType, resolution: Resolution) -> Option<(Kbps, Kbps)> {
        self.bounds.get(&(video, resolution)).copied()
    }

    pub fn admits(&self, video: VideoType, resolution: Resolution, rate: Kbps) -> bool {
        self.get(video, resolution).is_some_and(|(lo, hi)| lo <= rate && rate <= hi)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((VideoType, Resolution), (Kbps, Kbps))> + '_ {
        self.bounds.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }
}

/// Levels closer than this to the asymptote count as unreachable.
const ASYMPTOTE_MARGIN: f64 = 1e-6;
/// Back-off from the asymptote when no reference maximum exists.
const ASYMPTOTE_EPSILON: f64 = 1e-4;

fn near_asymptote<T: Scalar>(params: &SatParams<T>, target: f64) -> bool {
    target >= params.asymptote().to_f64().unwrap_or(f64::NAN) - ASYMPTOTE_MARGIN
}

fn upper_rate<T: Scalar>(
    params: &SatParams<T>,
    target: f64,
    reference: Option<(Kbps, Kbps)>,
) -> Result<Kbps> {
    if near_asymptote(params, target) {
        if let Some((_, max)) = reference {
            return Ok(max);
        }
        let backed_off = params.asymptote().to_f64().unwrap_or(f64::NAN) - ASYMPTOTE_EPSILON;
        return invert_satisfaction(params, T::lit(backed_off)).map(|r| round_kbps(r.to_f64().unwrap_or(f64::NAN)));
    }
    invert_satisfaction(params, T::lit(target)).map(|r| round_kbps(r.to_f64().unwrap_or(f64::NAN)))
}

/// Rates at satisfaction `lo` and `hi` on the matched-resolution curves.
///
/// Where `hi` sits at or past a curve's asymptote the maximum comes from
/// `reference` (or from backing off the asymptote when it has no entry).
pub fn derive_rate_bounds_with<T: Scalar>(
    table: &SatisfactionTable<T>,
    lo: f64,
    hi: f64,
    reference: &RateBounds,
) -> Result<RateBounds> {
    let mut out = RateBounds::default();
    for video in VideoType::ALL {
        for res in Resolution::ALL {
            let params = table.params(video, res, res)?;
            let min = round_kbps(invert_satisfaction(params, T::lit(lo))?.to_f64().unwrap_or(f64::NAN));
            let max = upper_rate(params, hi, reference.get(video, res))?;
            out.insert(video, res, min, max);
        }
    }
    Ok(out)
}

/// Encoding range per (video, resolution) from satisfaction 0.6 to 1.0.
pub fn derive_rate_bounds<T: Scalar>(table: &SatisfactionTable<T>) -> Result<RateBounds> {
    derive_rate_bounds_with(table, 0.6, 1.0, &RateBounds::published())
}

/// Satisfaction levels sampled to build the candidate rate grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub sat_lo: f64,
    pub sat_hi: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { sat_lo: 0.6, sat_hi: 1.0, step: 0.025 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sat_lo > 0.0 && self.sat_lo < self.sat_hi && self.sat_hi <= 1.0 && self.step > 0.0) {
            return Err(Error::InvalidConfig(format!("bad grid {self:?}")));
        }
        Ok(())
    }

    pub fn levels(&self) -> Vec<f64> {
        let count = ((self.sat_hi - self.sat_lo) / self.step + 1e-9).floor() as usize;
        let mut levels: Vec<f64> = (0..=count).map(|i| self.sat_lo + i as f64 * self.step).collect();
        if let Some(last) = levels.last_mut()
            && (*last - self.sat_hi).abs() < 1e-9 {
                *last = self.sat_hi;
            }
        levels
    }
}

/// Candidate rates per (video, resolution), ascending.
pub type CandidateRates = BTreeMap<(VideoType, Resolution), Vec<Kbps>>;

/// One rate per grid level for a single (video, resolution), before dedup.
pub fn grid_levels<T: Scalar>(
    table: &SatisfactionTable<T>,
    bounds: &RateBounds,
    video: VideoType,
    resolution: Resolution,
    spec: &GridSpec,
) -> Result<Vec<Kbps>> {
    spec.validate()?;
    let params = table.params(video, resolution, resolution)?;
    let cap = bounds.get(video, resolution);
    let mut rates = Vec::new();
    for level in spec.levels() {
        let rate = match upper_rate(params, level, cap) {
            Ok(rate) => rate,
            Err(Error::TargetBelowCurve { .. }) => continue,
            Err(e) => return Err(e),
        };
        rates.push(match cap {
            Some((_, max)) => rate.min(max),
            None => rate,
        });
    }
    if rates.is_empty() {
        return Err(Error::EmptyGrid { video, resolution });
    }
    Ok(rates)
}

/// Candidate encoding rates obtained by inverting evenly spaced satisfaction levels.
pub fn derive_rate_grid<T: Scalar>(table: &SatisfactionTable<T>, spec: &GridSpec) -> Result<CandidateRates> {
    let bounds = derive_rate_bounds_with(table, spec.sat_lo, spec.sat_hi, &RateBounds::published())?;
    let mut grid = CandidateRates::new();
    for video in VideoType::ALL {
        for res in Resolution::ALL {
            let mut rates = grid_levels(table, &bounds, video, res, spec)?;
            rates.sort_unstable();
            rates.dedup();
            grid.insert((video, res), rates);
        }
    }
    Ok(grid)
}
