//! Video content: quality ladders, per-chunk sizes and Zipf popularity.
//!
//! Bitrates are stored in bps and rounded to whole bits so that sums of
//! delivery costs are exact in `f64` regardless of summation order.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-video representation set, uniform across all chunks of the video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityLadder {
    pub video_id: u32,
    pub bitrates_bps: Vec<f64>,
    pub chunk_duration_s: f64,
    pub chunk_count: u32,
}

impl QualityLadder {
    pub fn new(
        video_id: u32,
        bitrates_bps: Vec<f64>,
        chunk_duration_s: f64,
        chunk_count: u32,
    ) -> Result<Self> {
        let ladder = Self {
            video_id,
            bitrates_bps,
            chunk_duration_s,
            chunk_count,
        };
        ladder.validate()?;
        Ok(ladder)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bitrates_bps.is_empty() {
            return Err(Error::Validation(format!(
                "video {} has an empty ladder",
                self.video_id
            )));
        }
        if self
            .bitrates_bps
            .iter()
            .any(|b| !(b.is_finite() && *b > 0.0))
        {
            return Err(Error::Validation(format!(
                "video {} has a non-positive bitrate",
                self.video_id
            )));
        }
        if self.bitrates_bps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "video {} bitrates are not strictly ascending",
                self.video_id
            )));
        }
        if !(self.chunk_duration_s.is_finite() && self.chunk_duration_s > 0.0) {
            return Err(Error::Validation(format!(
                "video {} chunk duration must be positive",
                self.video_id
            )));
        }
        if self.chunk_count == 0 {
            return Err(Error::Validation(format!(
                "video {} has no chunks",
                self.video_id
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.bitrates_bps.len()
    }

    pub fn bitrate(&self, quality: usize) -> f64 {
        self.bitrates_bps[quality]
    }

    /// Average chunk size `q * tau`, the only size the AP can derive from a manifest.
    pub fn nominal_size_bits(&self, quality: usize) -> f64 {
        self.bitrates_bps[quality] * self.chunk_duration_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkSpec {
    pub video_id: u32,
    pub chunk_index: u32,
    pub quality_index: usize,
    pub size_bits: f64,
    pub nominal_size_bits: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Geometric,
    Linear,
}

/// A set of videos. Trace catalogs carry actual per-chunk sizes; synthetic
/// catalogs use nominal sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    ladders: Vec<QualityLadder>,
    // Per video, row-major `[chunk][quality]`; `None` means nominal sizes.
    sizes: Vec<Option<Vec<f64>>>,
}

impl Catalog {
    pub fn from_ladders(ladders: Vec<QualityLadder>) -> Result<Self> {
        for (i, l) in ladders.iter().enumerate() {
            l.validate()?;
            if l.video_id as usize != i {
                return Err(Error::Validation(format!(
                    "video ids must be dense and ordered; found {} at position {i}",
                    l.video_id
                )));
            }
        }
        let sizes = vec![None; ladders.len()];
        Ok(Self { ladders, sizes })
    }

    pub fn video_count(&self) -> usize {
        self.ladders.len()
    }

    pub fn ladder(&self, video_id: u32) -> &QualityLadder {
        &self.ladders[video_id as usize]
    }

    pub fn ladders(&self) -> &[QualityLadder] {
        &self.ladders
    }

    /// Actual size `s_{j,k,m}` of a chunk.
    pub fn size_bits(&self, video_id: u32, chunk_index: u32, quality: usize) -> f64 {
        let ladder = self.ladder(video_id);
        match &self.sizes[video_id as usize] {
            Some(sizes) => sizes[chunk_index as usize * ladder.levels() + quality],
            None => ladder.nominal_size_bits(quality),
        }
    }

    pub fn total_bits(&self) -> f64 {
        self.chunks().map(|c| c.size_bits).sum()
    }

    /// All chunk specs in (video, chunk, quality) order.
    pub fn chunks(&self) -> impl Iterator<Item = ChunkSpec> + '_ {
        self.ladders.iter().flat_map(move |l| {
            (0..l.chunk_count).flat_map(move |k| {
                (0..l.levels()).map(move |m| ChunkSpec {
                    video_id: l.video_id,
                    chunk_index: k,
                    quality_index: m,
                    size_bits: self.size_bits(l.video_id, k, m),
                    nominal_size_bits: l.nominal_size_bits(m),
                })
            })
        })
    }

    /// Serialize in the trace text format accepted by [`load_trace_catalog`].
    pub fn to_trace_string(&self) -> String {
        let mut out = String::from("# video_id,chunk_index,quality_index,size_bits\n");
        for l in &self.ladders {
            let rates: Vec<String> = l.bitrates_bps.iter().map(|b| b.to_string()).collect();
            let _ = writeln!(
                out,
                "ladder {} {} {}",
                l.video_id,
                rates.join(","),
                l.chunk_duration_s
            );
        }
        for c in self.chunks() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.video_id, c.chunk_index, c.quality_index, c.size_bits
            );
        }
        out
    }
}

/// Bitrate ladder with `levels` entries between `min_bps` and `max_bps`, endpoints exact.
pub fn ladder_bitrates(
    levels: usize,
    min_bps: f64,
    max_bps: f64,
    spacing: Spacing,
) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::Config(format!(
            "ladder needs at least 2 levels, got {levels}"
        )));
    }
    if !(min_bps > 0.0 && min_bps < max_bps && max_bps.is_finite()) {
        return Err(Error::Config(format!(
            "invalid bitrate range [{min_bps}, {max_bps}]"
        )));
    }
    let steps = (levels - 1) as f64;
    let mut rates: Vec<f64> = (0..levels)
        .map(|i| {
            let f = i as f64 / steps;
            let raw = match spacing {
                Spacing::Geometric => min_bps * (max_bps / min_bps).powf(f),
                Spacing::Linear => min_bps + (max_bps - min_bps) * f,
            };
            raw.round()
        })
        .collect();
    rates[0] = min_bps.round();
    rates[levels - 1] = max_bps.round();
    if rates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "{levels} levels do not fit in [{min_bps}, {max_bps}] at whole-bps resolution"
        )));
    }
    Ok(rates)
}

pub fn make_synthetic_catalog(
    video_count: usize,
    levels: usize,
    min_bps: f64,
    max_bps: f64,
    chunk_duration_s: f64,
    chunk_count: u32,
    spacing: Spacing,
) -> Result<Catalog> {
    if video_count == 0 {
        return Err(Error::Config("video_count must be at least 1".into()));
    }
    let rates = ladder_bitrates(levels, min_bps, max_bps, spacing)?;
    let ladders = (0..video_count as u32)
        .map(|v| QualityLadder::new(v, rates.clone(), chunk_duration_s, chunk_count))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Config(e.to_string()))?;
    Catalog::from_ladders(ladders)
}

pub fn load_trace_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let text = std::fs::read_to_string(path)?;
    parse_trace_catalog(&text)
}

pub fn parse_trace_catalog(text: &str) -> Result<Catalog> {
    struct Header {
        rates: Vec<f64>,
        duration: f64,
    }
    let mut headers: Vec<Option<Header>> = Vec::new();
    let mut rows: Vec<(usize, u32, u32, usize, f64)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if let Some(rest) = line.strip_prefix("ladder") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(perr(
                    "expected `ladder <video_id> <b0,b1,...> <chunk_duration_s>`".into(),
                ));
            }
            let vid: usize = parts[0]
                .parse()
                .map_err(|_| perr(format!("bad video id `{}`", parts[0])))?;
            let rates = parts[1]
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| perr(format!("bad bitrate list `{}`", parts[1])))?;
            let duration: f64 = parts[2]
                .parse()
                .map_err(|_| perr(format!("bad chunk duration `{}`", parts[2])))?;
            if headers.len() <= vid {
                headers.resize_with(vid + 1, || None);
            }
            if headers[vid].is_some() {
                return Err(perr(format!("duplicate ladder for video {vid}")));
            }
            headers[vid] = Some(Header { rates, duration });
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(perr(format!(
                "expected 4 comma-separated fields, got {}",
                fields.len()
            )));
        }
        let vid: u32 = fields[0]
            .parse()
            .map_err(|_| perr(format!("bad video id `{}`", fields[0])))?;
        let chunk: u32 = fields[1]
            .parse()
            .map_err(|_| perr(format!("bad chunk index `{}`", fields[1])))?;
        let quality: usize = fields[2]
            .parse()
            .map_err(|_| perr(format!("bad quality index `{}`", fields[2])))?;
        let size: f64 = fields[3]
            .parse()
            .map_err(|_| perr(format!("bad size `{}`", fields[3])))?;
        if !(size.is_finite() && size > 0.0) {
            return Err(Error::Validation(format!(
                "line {line_no}: chunk size must be positive, got {size}"
            )));
        }
        rows.push((line_no, vid, chunk, quality, size));
    }

    let mut ladders = Vec::with_capacity(headers.len());
    for (vid, h) in headers.iter().enumerate() {
        let h = h
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("missing ladder header for video {vid}")))?;
        let chunk_count = rows
            .iter()
            .filter(|r| r.1 as usize == vid)
            .map(|r| r.2 + 1)
            .max()
            .unwrap_or(0);
        ladders.push(QualityLadder::new(
            vid as u32,
            h.rates.clone(),
            h.duration,
            chunk_count,
        )?);
    }

    let mut sizes: Vec<Vec<f64>> = ladders
        .iter()
        .map(|l| vec![f64::NAN; l.chunk_count as usize * l.levels()])
        .collect();
    for (line_no, vid, chunk, quality, size) in rows {
        let ladder = ladders.get(vid as usize).ok_or_else(|| {
            Error::Validation(format!("line {line_no}: video {vid} has no ladder header"))
        })?;
        if quality >= ladder.levels() {
            return Err(Error::Validation(format!(
                "line {line_no}: quality {quality} outside ladder of {} levels",
                ladder.levels()
            )));
        }
        let slot = &mut sizes[vid as usize][chunk as usize * ladder.levels() + quality];
        if !slot.is_nan() {
            return Err(Error::Validation(format!(
                "line {line_no}: duplicate record for ({vid},{chunk},{quality})"
            )));
        }
        *slot = size;
    }
    for (vid, s) in sizes.iter().enumerate() {
        if let Some(pos) = s.iter().position(|x| x.is_nan()) {
            let levels = ladders[vid].levels();
            return Err(Error::Validation(format!(
                "missing record for ({vid},{},{})",
                pos / levels,
                pos % levels
            )));
        }
    }

    Ok(Catalog {
        ladders,
        sizes: sizes.into_iter().map(Some).collect(),
    })
}

/// Zipf popularity over videos; video `id` has rank `id + 1`.
#[derive(Debug, Clone)]
pub struct PopularityModel {
    exponent: f64,
    cdf: Vec<f64>,
}

impl PopularityModel {
    pub fn new(exponent: f64, video_count: usize) -> Result<Self> {
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::Config(format!(
                "zipf exponent must be positive, got {exponent}"
            )));
        }
        if video_count == 0 {
            return Err(Error::Config("popularity needs at least one video".into()));
        }
        let weights: Vec<f64> = (1..=video_count)
            .map(|r| (r as f64).powf(-exponent))
            .collect();
        let norm: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / norm;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { exponent, cdf })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn video_count(&self) -> usize {
        self.cdf.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|c| {
                let p = c - prev;
                prev = *c;
                p
            })
            .collect()
    }

    pub fn sample_video<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        self.cdf
            .partition_point(|c| *c <= u)
            .min(self.cdf.len() - 1) as u32
    }
}
