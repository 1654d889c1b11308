//! RFI concentration tagging, spectral margin and Sun-transit excision.
//!
//! Single-pulse detections are tallied per 954 Hz segment in tumbling
//! four-hour windows aligned to absolute MJD. A segment whose tally reaches
//! the threshold is tagged for its window and, with look-forward, for the
//! following window too. Candidates with a pulse within the margin of an
//! active tag are dropped.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::first_level::{PulseDetection, PulsePairCandidate};
use crate::geometry::{self, GeometryError, InstrumentConfig, RaTable};
use crate::math;

pub const DEFAULT_WINDOW_HOURS: f64 = 4.0;

/// Tag probability per AWGN segment-window used for the default threshold.
pub const DEFAULT_TAG_PROBABILITY: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RfiError {
    #[error("sun ephemeris: {0}")]
    Ephemeris(#[from] GeometryError),
    #[error("RA half-width must be positive")]
    BadHalfWidth,
    #[error("window length must be positive")]
    BadWindow,
}

/// Tumbling window id for an MJD.
pub fn window_id(mjd: f64, window_hours: f64) -> i64 {
    math::floor(mjd * 24.0 / window_hours) as i64
}

pub fn window_bounds(id: i64, window_hours: f64) -> (f64, f64) {
    let d = window_hours / 24.0;
    (id as f64 * d, (id + 1) as f64 * d)
}

/// Pulse tallies keyed by `(window id, segment)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentCounts {
    pub window_hours: f64,
    pub counts: BTreeMap<(i64, u64), u32>,
}

impl SegmentCounts {
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, window: i64, segment: u64) -> u32 {
        self.counts.get(&(window, segment)).copied().unwrap_or(0)
    }
}

pub fn accumulate_segment_counts<'a>(
    pulses: impl IntoIterator<Item = &'a PulseDetection>,
    window_hours: f64,
) -> Result<SegmentCounts, RfiError> {
    if !(window_hours.is_finite() && window_hours > 0.0) {
        return Err(RfiError::BadWindow);
    }
    let mut counts = BTreeMap::new();
    for p in pulses {
        *counts.entry((window_id(p.mjd, window_hours), p.segment_index)).or_insert(0) += 1;
    }
    Ok(SegmentCounts { window_hours, counts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentTag {
    pub segment_index: u64,
    /// Validity interval `[start, end)`.
    pub window_start_mjd: f64,
    pub window_end_mjd: f64,
    pub trigger_count: u32,
}

impl SegmentTag {
    pub fn active_at(&self, mjd: f64) -> bool {
        mjd >= self.window_start_mjd && mjd < self.window_end_mjd
    }
}

pub fn tag_rfi_segments(counts: &SegmentCounts, threshold: u32, look_forward: bool) -> Vec<SegmentTag> {
    counts
        .counts
        .iter()
        .filter(|(_, &c)| c >= threshold)
        .map(|(&(w, seg), &c)| {
            let (start, end) = window_bounds(w, counts.window_hours);
            let extra = if look_forward { counts.window_hours / 24.0 } else { 0.0 };
            SegmentTag {
                segment_index: seg,
                window_start_mjd: start,
                window_end_mjd: end + extra,
                trigger_count: c,
            }
        })
        .collect()
}

/// Expected AWGN pulses per segment per window.
pub fn awgn_segment_mean(config: &InstrumentConfig, window_hours: f64) -> f64 {
    let bins = config.rfi_segment_hz / config.fft_bin_hz;
    let windows = window_hours * 3600.0 / config.trigger_period_s * config.windows_per_trigger as f64;
    bins * windows * math::exp(-2.0 * config.snr_threshold_linear())
}

/// Smallest count whose AWGN exceedance probability is at most `prob`.
pub fn default_threshold(config: &InstrumentConfig, window_hours: f64, prob: f64) -> u32 {
    math::poisson_quantile_upper(awgn_segment_mean(config, window_hours), prob) as u32
}

/// Tags grouped by the tumbling windows they overlap, for fast lookup.
#[derive(Debug, Clone, Default)]
pub struct TagIndex {
    window_hours: f64,
    by_window: BTreeMap<i64, Vec<SegmentTag>>,
}

impl TagIndex {
    pub fn new(tags: &[SegmentTag], window_hours: f64) -> Self {
        let mut by_window: BTreeMap<i64, Vec<SegmentTag>> = BTreeMap::new();
        for t in tags {
            let first = window_id(t.window_start_mjd, window_hours);
            let last = window_id(t.window_end_mjd, window_hours);
            for w in first..=last {
                by_window.entry(w).or_default().push(*t);
            }
        }
        for v in by_window.values_mut() {
            v.sort_by_key(|t| t.segment_index);
        }
        Self { window_hours, by_window }
    }

    /// Smallest segment distance from `segment` to a tag active at `mjd`.
    pub fn margin(&self, segment: u64, mjd: f64) -> Option<u64> {
        let tags = self.by_window.get(&window_id(mjd, self.window_hours))?;
        tags.iter()
            .filter(|t| t.active_at(mjd))
            .map(|t| t.segment_index.abs_diff(segment))
            .min()
    }
}

/// Minimum margin over both pulses; `None` when no tag is active.
pub fn spectral_margin(candidate: &PulsePairCandidate, tags: &TagIndex) -> Option<u64> {
    candidate
        .pulses
        .iter()
        .filter_map(|p| tags.margin(p.segment_index, p.mjd))
        .min()
}

/// A candidate survives when no tag is active or every tag is more than
/// `limit` segments away.
pub fn margin_kept(margin: Option<u64>, limit: u32) -> bool {
    margin.is_none_or(|m| m > limit as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcisionKind {
    Sun,
    Manual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcisionRegion {
    pub kind: ExcisionKind,
    pub ra_center_hr_by_mjd: RaTable,
    pub ra_halfwidth_hr: f64,
    pub mjd_min: f64,
}

impl ExcisionRegion {
    pub fn sun(table: RaTable) -> Self {
        Self {
            kind: ExcisionKind::Sun,
            ra_center_hr_by_mjd: table,
            ra_halfwidth_hr: 1.0,
            mjd_min: 60_540.0,
        }
    }

    pub fn contains(&self, mjd: f64, beam_ra_hr: f64) -> Result<bool, RfiError> {
        if !(self.ra_halfwidth_hr > 0.0) {
            return Err(RfiError::BadHalfWidth);
        }
        if mjd <= self.mjd_min {
            return Ok(false);
        }
        let center = self.ra_center_hr_by_mjd.ra_at(mjd)?;
        Ok(geometry::ra_distance_hr(beam_ra_hr, center) < self.ra_halfwidth_hr)
    }

    /// The region as linear rows over each ephemeris interval past `mjd_min`.
    pub fn mask(&self) -> Vec<MaskRow> {
        let rows = self.ra_center_hr_by_mjd.rows();
        let mut out = Vec::new();
        for pair in rows.windows(2) {
            let (m0, r0) = pair[0];
            let (m1, r1) = pair[1];
            if m1 <= self.mjd_min {
                continue;
            }
            let slope = geometry::ra_difference_hr(r1, r0) / (m1 - m0);
            let start = m0.max(self.mjd_min);
            let c0 = r0 + slope * (start - m0);
            let c1 = r0 + slope * (m1 - m0);
            out.push(MaskRow {
                mjd_start: start,
                mjd_end: m1,
                ra_lo_start: c0 - self.ra_halfwidth_hr,
                ra_hi_start: c0 + self.ra_halfwidth_hr,
                ra_lo_end: c1 - self.ra_halfwidth_hr,
                ra_hi_end: c1 + self.ra_halfwidth_hr,
            });
        }
        out
    }
}

/// One linear piece of an (MJD, RA) excision region. RA limits are not
/// wrapped; membership is tested on the 24 h circle. The start edge is
/// open, the end edge closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskRow {
    pub mjd_start: f64,
    pub mjd_end: f64,
    pub ra_lo_start: f64,
    pub ra_hi_start: f64,
    pub ra_lo_end: f64,
    pub ra_hi_end: f64,
}

impl MaskRow {
    pub fn contains(&self, mjd: f64, ra_hr: f64) -> bool {
        if !(mjd > self.mjd_start && mjd <= self.mjd_end) {
            return false;
        }
        let t = (mjd - self.mjd_start) / (self.mjd_end - self.mjd_start);
        let lo = self.ra_lo_start + t * (self.ra_lo_end - self.ra_lo_start);
        let hi = self.ra_hi_start + t * (self.ra_hi_end - self.ra_hi_start);
        let center = 0.5 * (lo + hi);
        geometry::ra_distance_hr(ra_hr, geometry::wrap_ra(center)) < 0.5 * (hi - lo)
    }
}

pub fn mask_contains(mask: &[MaskRow], mjd: f64, ra_hr: f64) -> bool {
    mask.iter().any(|r| r.contains(mjd, ra_hr))
}

/// Drop candidates whose pointing lies in the region; returns the kept
/// candidates and the exported mask.
pub fn excise_sun(
    candidates: Vec<PulsePairCandidate>,
    region: &ExcisionRegion,
) -> Result<(Vec<PulsePairCandidate>, Vec<MaskRow>), RfiError> {
    let mut kept = Vec::with_capacity(candidates.len());
    for c in candidates {
        if !region.contains(c.mjd(), c.beam_ra_hr)? {
            kept.push(c);
        }
    }
    Ok((kept, region.mask()))
}

/// Outcome of concentration tagging plus margin filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RfiOutcome {
    pub threshold: u32,
    pub counts: SegmentCounts,
    pub tags: Vec<SegmentTag>,
    pub kept: Vec<PulsePairCandidate>,
    pub removed: usize,
}

/// Tag from `pulses`, then filter `candidates` by spectral margin, filling
/// each kept candidate's margin field.
pub fn excise_rfi(
    pulses: &[PulseDetection],
    candidates: Vec<PulsePairCandidate>,
    threshold: u32,
    look_forward: bool,
    config: &InstrumentConfig,
) -> Result<RfiOutcome, RfiError> {
    let counts = accumulate_segment_counts(pulses, DEFAULT_WINDOW_HOURS)?;
    let tags = tag_rfi_segments(&counts, threshold, look_forward);
    let index = TagIndex::new(&tags, DEFAULT_WINDOW_HOURS);
    let total = candidates.len();
    let kept: Vec<PulsePairCandidate> = candidates
        .into_iter()
        .filter_map(|mut c| {
            let m = spectral_margin(&c, &index);
            c.assoc.rfi_spectral_margin_segments = m;
            margin_kept(m, config.rfi_margin_segments).then_some(c)
        })
        .collect();
    let removed = total - kept.len();
    Ok(RfiOutcome {
        threshold,
        counts,
        tags,
        kept,
        removed,
    })
}
