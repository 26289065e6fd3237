//! Representation sets: candidate universes, optimized ladders and the
//! vendor-recommended ladders used as baselines.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qoe::{CandidateRates, Kbps, RateBounds, Resolution, VideoType};

/// One encoded version of a video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Representation {
    pub video: VideoType,
    pub resolution: Resolution,
    #[serde(rename = "rate_kbps")]
    pub rate: Kbps,
}

impl Representation {
    pub fn new(video: VideoType, resolution: Resolution, rate: Kbps) -> Self {
        Self { video, resolution, rate }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}kbps", self.video, self.resolution, self.rate)
    }
}

/// A ladder: sorted, duplicate-free list of representations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentationSet {
    pub label: String,
    #[serde(rename = "representations")]
    reps: Vec<Representation>,
}

impl RepresentationSet {
    pub fn new(label: impl Into<String>, reps: impl IntoIterator<Item = Representation>) -> Result<Self> {
        let mut reps: Vec<Representation> = reps.into_iter().collect();
        if let Some(bad) = reps.iter().find(|r| r.rate == 0) {
            return Err(Error::InvalidConfig(format!("zero rate in {bad}")));
        }
        reps.sort_unstable();
        reps.dedup();
        Ok(Self { label: label.into(), reps })
    }

    pub fn empty(label: impl Into<String>) -> Self {
        Self { label: label.into(), reps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Representation> {
        self.reps.iter()
    }

    pub fn as_slice(&self) -> &[Representation] {
        &self.reps
    }

    pub fn contains(&self, rep: &Representation) -> bool {
        self.reps.binary_search(rep).is_ok()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["video", "resolution", "rate_kbps"])?;
        for rep in &self.reps {
            w.write_record([rep.video.label(), rep.resolution.label(), &rep.rate.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(label: impl Into<String>, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["video", "resolution", "rate_kbps"] {
            return Err(Error::Parse { row: 1, message: format!("unexpected header {header:?}") });
        }
        let mut reps = Vec::new();
        for (i, record) in r.records().enumerate() {
            let row = i + 2;
            let record = record?;
            let parse_err = |message: String| Error::Parse { row, message };
            let video: VideoType = record[0].parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let resolution: Resolution = record[1].parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let rate: Kbps = record[2].trim().parse().map_err(|e| parse_err(format!("rate: {e}")))?;
            reps.push(Representation::new(video, resolution, rate));
        }
        Self::new(label, reps)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::read_csv(label, std::fs::File::open(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RepresentationSet = serde_json::from_str(text)?;
        Self::new(raw.label, raw.reps)
    }

    /// Number of representations per (video, resolution).
    pub fn counts(&self) -> BTreeMap<(VideoType, Resolution), usize> {
        let mut out = BTreeMap::new();
        for rep in &self.reps {
            *out.entry((rep.video, rep.resolution)).or_insert(0) += 1;
        }
        out
    }
}

impl<'a> IntoIterator for &'a RepresentationSet {
    type Item = &'a Representation;
    type IntoIter = std::slice::Iter<'a, Representation>;

    fn into_iter(self) -> Self::IntoIter {
        self.reps.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vendor {
    Apple,
    Microsoft,
    Netflix,
}

impl Vendor {
    pub const ALL: [Vendor; 3] = [Vendor::Apple, Vendor::Microsoft, Vendor::Netflix];

    pub fn label(self) -> &'static str {
        match self {
            Vendor::Apple => "apple",
            Vendor::Microsoft => "microsoft",
            Vendor::Netflix => "netflix",
        }
    }

    /// Per-video ladder, as (resolution, kbps).
    pub fn ladder(self) -> &'static [(Resolution, Kbps)] {
        use Resolution::*;
        match self {
            Vendor::Apple => &[
                (P224, 150),
                (P224, 200),
                (P224, 400),
                (P360, 600),
                (P360, 1200),
                (P720, 1800),
                (P720, 2500),
                (P720, 4500),
                (P1080, 4500),
                (P1080, 6500),
            ],
            Vendor::Microsoft => &[
                (P224, 350),
                (P224, 400),
                (P224, 900),
                (P360, 1250),
                (P720, 1400),
                (P720, 2100),
                (P720, 3000),
                (P720, 3450),
                (P1080, 5000),
                (P1080, 6000),
            ],
            Vendor::Netflix => &[
                (P224, 150),
                (P224, 250),
                (P224, 350),
                (P224, 500),
                (P224, 650),
                (P224, 750),
                (P224, 1000),
                (P224, 1400),
                (P224, 1500),
                (P224, 1600),
                (P224, 1750),
                (P360, 250),
                (P360, 350),
                (P360, 500),
                (P360, 650),
                (P360, 750),
                (P360, 1000),
                (P360, 1400),
                (P360, 1500),
                (P360, 1600),
                (P360, 1750),
                (P720, 1000),
                (P720, 1400),
                (P720, 1500),
                (P720, 1600),
                (P720, 1750),
                (P720, 2350),
                (P720, 3600),
                (P1080, 1500),
                (P1080, 1600),
                (P1080, 1750),
                (P1080, 2350),
                (P1080, 3600),
            ],
        }
    }
}

impl fmt::Display for Vendor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Vendor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "apple" => Ok(Vendor::Apple),
            "microsoft" => Ok(Vendor::Microsoft),
            "netflix" => Ok(Vendor::Netflix),
            other => Err(Error::InvalidConfig(format!("unknown vendor `{other}`"))),
        }
    }
}

/// A vendor ladder replicated across all four video types.
pub fn builtin_recommendation(vendor: Vendor) -> RepresentationSet {
    let reps = VideoType::ALL
        .into_iter()
        .flat_map(|video| vendor.ladder().iter().map(move |&(res, rate)| Representation::new(video, res, rate)));
    RepresentationSet::new(vendor.label(), reps).expect("vendor ladders have positive rates")
}

/// Candidate rates per (video, resolution). Rates not produced by the
/// satisfaction grid are flagged external and exempt from rate bounds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidateUniverse {
    rates: BTreeMap<(VideoType, Resolution), BTreeMap<Kbps, bool>>,
}

impl CandidateUniverse {
    pub fn from_grid(grid: &CandidateRates) -> Self {
        let rates = grid
            .iter()
            .map(|(&key, list)| (key, list.iter().map(|&r| (r, false)).collect()))
            .collect();
        Self { rates }
    }

    /// Universe consisting only of externally supplied triples.
    pub fn from_external(reps: impl IntoIterator<Item = Representation>) -> Self {
        let mut out = Self::default();
        for rep in reps {
            out.insert(rep, true);
        }
        out
    }

    pub fn insert(&mut self, rep: Representation, external: bool) {
        let entry = self.rates.entry((rep.video, rep.resolution)).or_default();
        entry.entry(rep.rate).and_modify(|e| *e = *e && external).or_insert(external);
    }

    pub fn contains(&self, rep: &Representation) -> bool {
        self.rates.get(&(rep.video, rep.resolution)).is_some_and(|m| m.contains_key(&rep.rate))
    }

    pub fn is_external(&self, rep: &Representation) -> bool {
        self.rates
            .get(&(rep.video, rep.resolution))
            .and_then(|m| m.get(&rep.rate))
            .copied()
            .unwrap_or(false)
    }

    pub fn rates(&self, video: VideoType, resolution: Resolution) -> Vec<Kbps> {
        self.rates.get(&(video, resolution)).map(|m| m.keys().copied().collect()).unwrap_or_default()
    }

    /// All triples in (video, resolution, rate) order, with their external flag.
    pub fn triples(&self) -> impl Iterator<Item = (Representation, bool)> + '_ {
        self.rates.iter().flat_map(|(&(video, res), m)| {
            m.iter().map(move |(&rate, &external)| (Representation::new(video, res, rate), external))
        })
    }

    pub fn len(&self) -> usize {
        self.rates.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when every non-external rate lies within its bounds.
    pub fn respects(&self, bounds: &RateBounds) -> bool {
        self.triples().all(|(rep, external)| external || bounds.admits(rep.video, rep.resolution, rep.rate))
    }
}

/// Union of a universe with the triples of a set; new rates are external.
pub fn augment_universe(universe: &CandidateUniverse, set: &RepresentationSet) -> CandidateUniverse {
    let mut out = universe.clone();
    for rep in set {
        if !out.contains(rep) {
            out.insert(*rep, true);
        }
    }
    out
}
