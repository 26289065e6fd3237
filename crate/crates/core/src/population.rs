//! User populations: synthetic scenarios and trace-driven throughput models.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qoe::{Resolution, VideoType};

/// Header of the session trace CSV.
pub const TRACE_HEADER: [&str; 4] = ["user_id", "chunk_index", "bytes_received", "download_seconds"];
/// Chunks with a smaller index are warm-up and dropped.
pub const WARMUP_CHUNKS: u32 = 5;
pub const DEFAULT_CHUNK_SECONDS: f64 = 2.0;
/// Users whose 75th percentile exceeds this are dropped from trace populations.
pub const MAX_P75_KBPS: f64 = 8000.0;

/// Throughput of a user: a fixed capacity or an empirical sample of chunk rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ThroughputModel {
    Scalar {
        capacity_kbps: f64,
    },
    Empirical {
        /// Sorted ascending.
        samples_kbps: Vec<f64>,
    },
}

impl ThroughputModel {
    pub fn scalar(capacity_kbps: f64) -> Result<Self> {
        if !(capacity_kbps > 0.0) || !capacity_kbps.is_finite() {
            return Err(Error::InvalidConfig(format!("capacity must be positive, got {capacity_kbps}")));
        }
        Ok(Self::Scalar { capacity_kbps })
    }

    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("empty throughput sample".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-positive throughput sample {bad}")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self::Empirical { samples_kbps: samples })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ThroughputModel::Scalar { .. } => "scalar",
            ThroughputModel::Empirical { .. } => "empirical",
        }
    }

    /// Smallest capacity the user ever sees.
    pub fn min_capacity(&self) -> f64 {
        match self {
            ThroughputModel::Scalar { capacity_kbps } => *capacity_kbps,
            ThroughputModel::Empirical { samples_kbps } => samples_kbps[0],
        }
    }

    pub fn max_capacity(&self) -> f64 {
        match self {
            ThroughputModel::Scalar { capacity_kbps } => *capacity_kbps,
            ThroughputModel::Empirical { samples_kbps } => samples_kbps[samples_kbps.len() - 1],
        }
    }

    /// Nearest-rank percentile, `q` in (0, 1].
    pub fn percentile(&self, q: f64) -> f64 {
        match self {
            ThroughputModel::Scalar { capacity_kbps } => *capacity_kbps,
            ThroughputModel::Empirical { samples_kbps } => nearest_rank(samples_kbps, q),
        }
    }
}

/// `ceil(q * n)`-th order statistic of sorted `samples`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Fraction of time the throughput is at least `rate`.
pub fn survival_fraction(model: &ThroughputModel, rate: f64) -> f64 {
    match model {
        ThroughputModel::Scalar { capacity_kbps } => {
            if *capacity_kbps >= rate {
                1.0
            } else {
                0.0
            }
        }
        ThroughputModel::Empirical { samples_kbps } => {
            let below = samples_kbps.partition_point(|&s| s < rate);
            (samples_kbps.len() - below) as f64 / samples_kbps.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: u32,
    pub video: VideoType,
    pub display: Resolution,
    pub throughput: ThroughputModel,
}

/// Display class from the 75th percentile of the download rate.
pub fn classify_display(model: &ThroughputModel) -> Resolution {
    let p75 = model.percentile(0.75);
    if p75 < 1575.0 {
        Resolution::P224
    } else if p75 < 2400.0 {
        Resolution::P360
    } else if p75 < 4500.0 {
        Resolution::P720
    } else {
        Resolution::P1080
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkType {
    pub name: String,
    pub bw_min_kbps: f64,
    pub bw_max_kbps: f64,
    pub attach_prob: f64,
}

impl NetworkType {
    fn new(name: &str, min_mbps: f64, max_mbps: f64, attach_prob: f64) -> Self {
        Self { name: name.into(), bw_min_kbps: min_mbps * 1000.0, bw_max_kbps: max_mbps * 1000.0, attach_prob }
    }
}

/// Access network mix used for synthetic populations.
pub fn default_networks() -> Vec<NetworkType> {
    vec![
        NetworkType::new("wifi-high-load", 0.15, 0.8, 0.3),
        NetworkType::new("3g", 0.4, 4.0, 0.2),
        NetworkType::new("adsl-slow", 0.3, 3.0, 0.1),
        NetworkType::new("adsl-fast", 0.7, 10.0, 0.3),
        NetworkType::new("ftth", 1.5, 25.0, 0.1),
    ]
}

/// How synthetic users' throughput is represented.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum SyntheticThroughput {
    /// A single capacity drawn uniformly from the network range.
    #[default]
    Scalar,
    /// `samples` draws of `capacity * LogNormal(-spread^2/2, spread)` around a
    /// uniformly drawn capacity.
    Empirical { samples: usize, spread: f64 },
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub user_count: usize,
    pub video_mix: BTreeMap<VideoType, f64>,
    pub device_mix: BTreeMap<Resolution, f64>,
    pub networks: Vec<NetworkType>,
    pub seed: u64,
    pub throughput: SyntheticThroughput,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            user_count: 100,
            video_mix: VideoType::ALL.iter().map(|&v| (v, 0.25)).collect(),
            device_mix: Resolution::ALL.iter().map(|&r| (r, 0.25)).collect(),
            networks: default_networks(),
            seed: 1,
            throughput: SyntheticThroughput::Scalar,
        }
    }
}

impl ScenarioConfig {
    /// Documentary and movie at 10% each, sport at `x`, cartoon at `0.8 - x`.
    pub fn with_sport_ratio(mut self, x: f64) -> Self {
        self.video_mix = BTreeMap::from([
            (VideoType::Documentary, 0.1),
            (VideoType::Movie, 0.1),
            (VideoType::Sport, x),
            (VideoType::Cartoon, 0.8 - x),
        ]);
        self
    }

    /// 1080p displays at share `y`, the other three resolutions splitting the rest.
    pub fn with_hdtv_ratio(mut self, y: f64) -> Self {
        let rest = (1.0 - y) / 3.0;
        self.device_mix = BTreeMap::from([
            (Resolution::P224, rest),
            (Resolution::P360, rest),
            (Resolution::P720, rest),
            (Resolution::P1080, y),
        ]);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_mix("video_mix", self.video_mix.values().copied())?;
        check_mix("device_mix", self.device_mix.values().copied())?;
        check_mix("network attach probabilities", self.networks.iter().map(|n| n.attach_prob))?;
        for net in &self.networks {
            if !(net.bw_min_kbps > 0.0 && net.bw_min_kbps < net.bw_max_kbps) {
                return Err(Error::InvalidConfig(format!("network {} has an empty bandwidth range", net.name)));
            }
        }
        if let SyntheticThroughput::Empirical { samples, spread } = self.throughput
            && (samples == 0 || !(spread >= 0.0)) {
                return Err(Error::InvalidConfig("empirical throughput needs samples > 0, spread >= 0".into()));
            }
        Ok(())
    }
}

fn check_mix(name: &str, probs: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("{name} has probability {p} outside [0, 1]")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Index drawn from a categorical distribution; zero-weight entries are never picked.
fn draw<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Synthetic population, a pure function of `cfg` (including its seed).
pub fn generate_synthetic(cfg: &ScenarioConfig) -> Result<Vec<UserProfile>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let videos: Vec<(VideoType, f64)> = cfg.video_mix.iter().map(|(k, v)| (*k, *v)).collect();
    let devices: Vec<(Resolution, f64)> = cfg.device_mix.iter().map(|(k, v)| (*k, *v)).collect();
    let video_p: Vec<f64> = videos.iter().map(|x| x.1).collect();
    let device_p: Vec<f64> = devices.iter().map(|x| x.1).collect();
    let net_p: Vec<f64> = cfg.networks.iter().map(|n| n.attach_prob).collect();

    let mut users = Vec::with_capacity(cfg.user_count);
    for id in 0..cfg.user_count {
        let video = videos[draw(&mut rng, &video_p)].0;
        let display = devices[draw(&mut rng, &device_p)].0;
        let net = &cfg.networks[draw(&mut rng, &net_p)];
        let u: f64 = rng.random();
        let capacity = net.bw_min_kbps + u * (net.bw_max_kbps - net.bw_min_kbps);
        let throughput = match cfg.throughput {
            SyntheticThroughput::Scalar => ThroughputModel::scalar(capacity)?,
            SyntheticThroughput::Empirical { samples, spread } => {
                let noise = LogNormal::new(-spread * spread / 2.0, spread)
                    .map_err(|e| Error::InvalidConfig(format!("spread: {e}")))?;
                let draws = (0..samples).map(|_| (capacity * noise.sample(&mut rng)).max(1.0)).collect();
                ThroughputModel::empirical(draws)?
            }
        };
        users.push(UserProfile { id: id as u32, video, display, throughput });
    }
    Ok(users)
}

/// Per-user chunk download rates after warm-up trimming.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionTrace {
    pub user: String,
    pub rates_kbps: Vec<f64>,
    pub sessions: usize,
    pub chunk_seconds: f64,
}

impl SessionTrace {
    pub fn from_rates(user: impl Into<String>, rates_kbps: Vec<f64>) -> Self {
        Self { user: user.into(), rates_kbps, sessions: 1, chunk_seconds: DEFAULT_CHUNK_SECONDS }
    }

    pub fn model(&self) -> Result<ThroughputModel> {
        ThroughputModel::empirical(self.rates_kbps.clone())
    }
}

#[derive(Clone, Debug, Default)]
pub struct IngestReport {
    pub traces: BTreeMap<String, SessionTrace>,
    /// Rows with zero duration or zero bytes.
    pub rejected_rows: usize,
    pub warmup_rows: usize,
}

/// Reads `user_id,chunk_index,bytes_received,download_seconds` rows.
///
/// A user's session restarts whenever the chunk index fails to increase.
pub fn ingest_sessions<R: Read>(reader: R) -> Result<IngestReport> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Parse { row: 1, message: format!("expected header {}", TRACE_HEADER.join(",")) });
    }
    let mut report = IngestReport::default();
    let mut last_index: BTreeMap<String, u32> = BTreeMap::new();
    for (i, record) in r.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if record.len() != 4 {
            return Err(Error::Parse { row, message: format!("expected 4 fields, got {}", record.len()) });
        }
        let err = |what: &str, e: &dyn std::fmt::Display| Error::Parse { row, message: format!("{what}: {e}") };
        let user = record[0].to_string();
        let chunk: u32 = record[1].parse().map_err(|e| err("chunk_index", &e))?;
        let bytes: f64 = record[2].parse().map_err(|e| err("bytes_received", &e))?;
        let seconds: f64 = record[3].parse().map_err(|e| err("download_seconds", &e))?;
        if !bytes.is_finite() || !seconds.is_finite() || bytes < 0.0 || seconds < 0.0 {
            return Err(Error::Parse { row, message: "negative or non-finite value".into() });
        }

        let trace = report.traces.entry(user.clone()).or_insert_with(|| SessionTrace {
            user: user.clone(),
            rates_kbps: Vec::new(),
            sessions: 0,
            chunk_seconds: DEFAULT_CHUNK_SECONDS,
        });
        match last_index.insert(user, chunk) {
            Some(prev) if chunk > prev => {}
            _ => trace.sessions += 1,
        }
        if chunk < WARMUP_CHUNKS {
            report.warmup_rows += 1;
            continue;
        }
        if seconds == 0.0 || bytes == 0.0 {
            report.rejected_rows += 1;
            continue;
        }
        trace.rates_kbps.push(bytes * 8.0 / seconds / 1000.0);
    }
    report.traces.retain(|_, t| !t.rates_kbps.is_empty());
    Ok(report)
}

/// Keeps users with p75 at most 8 Mbps, then the `requested` ones with the
/// most sessions (ties by ascending user id).
pub fn filter_population<'a>(
    traces: impl IntoIterator<Item = &'a SessionTrace>,
    requested: usize,
) -> Result<Vec<&'a SessionTrace>> {
    let mut eligible: Vec<&SessionTrace> = traces
        .into_iter()
        .filter(|t| {
            let mut sorted = t.rates_kbps.clone();
            sorted.sort_by(f64::total_cmp);
            !sorted.is_empty() && nearest_rank(&sorted, 0.75) <= MAX_P75_KBPS
        })
        .collect();
    if eligible.len() < requested {
        return Err(Error::Shortfall { requested, available: eligible.len() });
    }
    eligible.sort_by(|a, b| b.sessions.cmp(&a.sessions).then_with(|| a.user.cmp(&b.user)));
    eligible.truncate(requested);
    Ok(eligible)
}

/// Profiles for trace users: empirical throughput, display from p75, video
/// drawn from `video_mix`.
pub fn profiles_from_traces(
    traces: &[&SessionTrace],
    video_mix: &BTreeMap<VideoType, f64>,
    seed: u64,
) -> Result<Vec<UserProfile>> {
    check_mix("video_mix", video_mix.values().copied())?;
    let videos: Vec<(VideoType, f64)> = video_mix.iter().map(|(k, v)| (*k, *v)).collect();
    let probs: Vec<f64> = videos.iter().map(|x| x.1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    traces
        .iter()
        .enumerate()
        .map(|(i, trace)| {
            let throughput = trace.model()?;
            Ok(UserProfile {
                id: i as u32,
                video: videos[draw(&mut rng, &probs)].0,
                display: classify_display(&throughput),
                throughput,
            })
        })
        .collect()
}

/// Writes `user_id,video,display,model_kind,capacity_kbps,sample_count,p75_kbps`.
pub fn write_population_csv<W: Write>(users: &[UserProfile], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "video", "display", "model_kind", "capacity_kbps", "sample_count", "p75_kbps"])?;
    for u in users {
        let (capacity, count) = match &u.throughput {
            ThroughputModel::Scalar { capacity_kbps } => (format!("{capacity_kbps:.3}"), 1),
            ThroughputModel::Empirical { samples_kbps } => (String::new(), samples_kbps.len()),
        };
        w.write_record([
            u.id.to_string(),
            u.video.to_string(),
            u.display.to_string(),
            u.throughput.kind().to_string(),
            capacity,
            count.to_string(),
            format!("{:.3}", u.throughput.percentile(0.75)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
