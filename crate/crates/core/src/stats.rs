//! RA-bin hypothesis filtering, the sorted heap, per-event Cohen's d and
//! direction-of-interest detection.
//!
//! Each candidate is tested against the RA bin holding its beam centre and
//! that bin's two alias partners. A pass under hypothesis `k` adds one
//! event to bin `k`. Events are ranked by ascending `|Δ_ΔfΔ_EWφ|`; at rank
//! `n` the event's bin `k` has cumulative count `C_k(n)` and
//!
//! ```text
//! d = (C_k(n) − n·p_k) / sqrt(n·p_k·(1 − p_k))
//! ```

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::first_level::PulsePairCandidate;
use crate::geometry::{self, InstrumentConfig, PhaseModel};
use crate::math::{self, PI};
use crate::sim::SkyPointing;

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const PLANCK: f64 = 6.626_070_15e-34;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("total exposure is zero")]
    ZeroExposure,
    #[error("RA bin {bin} holds events but has zero probability")]
    UnobservedBin { bin: u32 },
    #[error("probabilities must lie in (0, 1] with pr_t·pr_b_given_t <= pr_b")]
    ProbabilityBounds,
    #[error("temperature must be positive")]
    BadTemperature,
    #[error("h·ν/k·T = {0:.3e} is not small; the photon-count approximation needs < 1e-3")]
    NotThermal(f64),
}

/// Per-bin exposure and binomial event probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureModel {
    pub exposure_seconds: Vec<f64>,
    pub p: Vec<f64>,
}

impl ExposureModel {
    pub fn from_exposure(exposure_seconds: Vec<f64>) -> Result<Self, StatsError> {
        let total: f64 = exposure_seconds.iter().sum();
        if !(total > 0.0) {
            return Err(StatsError::ZeroExposure);
        }
        let p = exposure_seconds.iter().map(|e| e / total).collect();
        Ok(Self { exposure_seconds, p })
    }

    pub fn bins(&self) -> usize {
        self.p.len()
    }

    /// Bins with non-zero probability.
    pub fn observed_bins(&self) -> usize {
        self.p.iter().filter(|&&p| p > 0.0).count()
    }

    /// Probability of an event under the beam-bin plus alias-partner
    /// hypothesis scheme: `p'_k ∝ e_k + e_{k−a} + e_{k+a}`.
    pub fn hypothesis_convolved(&self, alias: u32) -> Result<Self, StatsError> {
        let n = self.bins();
        let a = alias as usize % n;
        let conv = (0..n)
            .map(|k| {
                let mut e = self.exposure_seconds[k];
                if a != 0 {
                    e += self.exposure_seconds[(k + a) % n] + self.exposure_seconds[(k + n - a) % n];
                }
                e
            })
            .collect();
        Self::from_exposure(conv)
    }
}

/// Beam-centre exposure per RA bin over every trigger not excluded by
/// `masked(mjd, beam_ra)`.
pub fn build_exposure<I, F>(pointings: I, masked: F, config: &InstrumentConfig) -> Result<ExposureModel, StatsError>
where
    I: IntoIterator<Item = SkyPointing>,
    F: Fn(f64, f64) -> bool,
{
    let per_trigger = config.windows_per_trigger as f64 * config.integration_s;
    let mut exposure = vec![0.0; config.ra_bins_per_day as usize];
    for p in pointings {
        if masked(p.mjd, p.beam_ra_hr) {
            continue;
        }
        let k = geometry::ra_bin_of(p.beam_ra_hr, config).expect("beam RA in [0, 24)");
        exposure[k as usize] += per_trigger;
    }
    ExposureModel::from_exposure(exposure)
}

/// Acceptance windows on `|Δ_EWφ|` (each pulse) and `|Δ_ΔfΔ_EWφ|`, both closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFilter {
    pub ew: (f64, f64),
    pub ddf: (f64, f64),
}

impl PhaseFilter {
    pub fn from_config(config: &InstrumentConfig) -> Self {
        Self {
            ew: (0.0, config.ew_phase_filter_rad),
            ddf: (0.0, config.ddf_phase_filter_rad),
        }
    }

    /// Complement of the default pair window with an open per-pulse window.
    pub fn modified(config: &InstrumentConfig) -> Self {
        Self {
            ew: (0.0, PI),
            ddf: (config.ddf_phase_filter_rad, PI),
        }
    }

    pub fn accepts(&self, d_ew: [f64; 2], ddf: f64) -> bool {
        let inside = |w: (f64, f64), x: f64| x.abs() >= w.0 && x.abs() <= w.1;
        inside(self.ew, d_ew[0]) && inside(self.ew, d_ew[1]) && inside(self.ddf, ddf)
    }

    /// Whether every pair accepted by `other` is also accepted here.
    pub fn contains(&self, other: &PhaseFilter) -> bool {
        self.ew.0 <= other.ew.0 && self.ew.1 >= other.ew.1 && self.ddf.0 <= other.ddf.0 && self.ddf.1 >= other.ddf.1
    }
}

/// Second-level settings a diagnostic variant may override.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOverrides {
    pub tau_inst_s: f64,
    pub filter: PhaseFilter,
}

impl FilterOverrides {
    pub fn from_config(config: &InstrumentConfig) -> Self {
        Self {
            tau_inst_s: config.tau_inst_s,
            filter: PhaseFilter::from_config(config),
        }
    }
}

/// A candidate that passed under one RA-bin hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredCandidate {
    pub candidate_id: u64,
    pub bin: u32,
    /// Hypothesis offset from the beam bin: 0 or ±alias.
    pub offset: i32,
    pub d_ew_phi: [f64; 2],
    pub d_df_d_ew_phi: f64,
    pub mjd: f64,
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub window_index: u32,
}

/// Phase residuals of `c` under the hypothesis that the source sits at
/// the centre of `bin`.
pub fn phase_residuals(c: &PulsePairCandidate, bin: u32, model: &PhaseModel, config: &InstrumentConfig) -> ([f64; 2], f64) {
    let h = geometry::hour_angle_rad(c.beam_ra_hr, geometry::bin_center(bin, config));
    let d = [0, 1].map(|i| {
        let p = &c.pulses[i];
        geometry::wrap(p.raw_ew_phase() - model.ew_phase(p.freq_hz, h))
    });
    (d, geometry::wrap(d[1] - d[0]))
}

/// Hypothesis bins for a beam bin: itself, then `+alias`, then `−alias`.
pub fn hypothesis_bins(beam_bin: u32, alias: u32, n_bins: u32) -> [(u32, i32); 3] {
    let a = alias % n_bins;
    [
        (beam_bin, 0),
        ((beam_bin + a) % n_bins, alias as i32),
        ((beam_bin + n_bins - a) % n_bins, -(alias as i32)),
    ]
}

/// Evaluate one candidate under one hypothesis bin.
pub fn evaluate_hypothesis(
    c: &PulsePairCandidate,
    bin: u32,
    offset: i32,
    model: &PhaseModel,
    filter: &PhaseFilter,
    config: &InstrumentConfig,
) -> Option<FilteredCandidate> {
    let (d, ddf) = phase_residuals(c, bin, model, config);
    filter.accepts(d, ddf).then_some(FilteredCandidate {
        candidate_id: c.id,
        bin,
        offset,
        d_ew_phi: d,
        d_df_d_ew_phi: ddf,
        mjd: c.mjd(),
        f1_hz: c.pulses[0].freq_hz,
        f2_hz: c.pulses[1].freq_hz,
        window_index: c.window_index(),
    })
}

/// Run every candidate through its beam-bin and alias hypotheses.
pub fn apply_phase_filters(
    candidates: &[PulsePairCandidate],
    config: &InstrumentConfig,
    overrides: &FilterOverrides,
    alias: u32,
) -> Vec<FilteredCandidate> {
    let model = PhaseModel::from_config(config).with_tau(overrides.tau_inst_s);
    let n_bins = config.ra_bins_per_day;
    let mut out = Vec::new();
    for c in candidates {
        let beam = geometry::ra_bin_of(c.beam_ra_hr, config).expect("beam RA in [0, 24)");
        for (bin, offset) in hypothesis_bins(beam, alias, n_bins) {
            if let Some(f) = evaluate_hypothesis(c, bin, offset, &model, &overrides.filter, config) {
                out.push(f);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeapRecord {
    /// 1-based.
    pub rank: u64,
    pub abs_ddf_phase: f64,
    pub bin: u32,
    pub offset: i32,
    pub cumulative_count: u64,
    pub cohens_d: f64,
    pub candidate_id: u64,
    pub mjd: f64,
    pub f1_hz: f64,
}

fn heap_order(a: &FilteredCandidate, b: &FilteredCandidate) -> Ordering {
    a.d_df_d_ew_phi
        .abs()
        .total_cmp(&b.d_df_d_ew_phi.abs())
        .then(a.mjd.total_cmp(&b.mjd))
        .then(a.f1_hz.total_cmp(&b.f1_hz))
        .then(a.f2_hz.total_cmp(&b.f2_hz))
        .then(a.window_index.cmp(&b.window_index))
        .then(a.bin.cmp(&b.bin))
        .then(a.candidate_id.cmp(&b.candidate_id))
}

/// Sort by ascending `|Δ_ΔfΔ_EWφ|` (ties by MJD, then frequency) and rank.
/// Counts and d are filled by [`cohens_d_stream`].
pub fn build_sorted_heap(mut filtered: Vec<FilteredCandidate>) -> Vec<HeapRecord> {
    filtered.sort_by(heap_order);
    filtered
        .into_iter()
        .enumerate()
        .map(|(i, f)| HeapRecord {
            rank: i as u64 + 1,
            abs_ddf_phase: f.d_df_d_ew_phi.abs(),
            bin: f.bin,
            offset: f.offset,
            cumulative_count: 0,
            cohens_d: 0.0,
            candidate_id: f.candidate_id,
            mjd: f.mjd,
            f1_hz: f.f1_hz,
        })
        .collect()
}

/// Binomial standardized deviation of `count` successes in `n` trials at `p`.
#[inline]
pub fn cohens_d(count: u64, n: u64, p: f64) -> f64 {
    let n = n as f64;
    let var = n * p * (1.0 - p);
    if var <= 0.0 {
        return 0.0;
    }
    (count as f64 - n * p) / math::sqrt(var)
}

/// Fill cumulative counts and d in rank order.
pub fn cohens_d_stream(heap: &mut [HeapRecord], exposure: &ExposureModel) -> Result<(), StatsError> {
    let mut counts = vec![0u64; exposure.bins()];
    for (i, r) in heap.iter_mut().enumerate() {
        let k = r.bin as usize;
        let p = exposure.p[k];
        if p <= 0.0 {
            return Err(StatsError::UnobservedBin { bin: r.bin });
        }
        counts[k] += 1;
        r.cumulative_count = counts[k];
        r.cohens_d = cohens_d(counts[k], i as u64 + 1, p);
    }
    Ok(())
}

/// Independent recomputation: each `C_k(n)` found by binary search in the
/// bin's list of ranks.
pub fn cohens_d_from_scratch(heap: &[HeapRecord], exposure: &ExposureModel) -> Result<Vec<f64>, StatsError> {
    let mut ranks: Vec<Vec<u64>> = vec![Vec::new(); exposure.bins()];
    for r in heap {
        ranks[r.bin as usize].push(r.rank);
    }
    heap.iter()
        .map(|r| {
            let p = exposure.p[r.bin as usize];
            if p <= 0.0 {
                return Err(StatsError::UnobservedBin { bin: r.bin });
            }
            let c = ranks[r.bin as usize].partition_point(|&x| x <= r.rank) as u64;
            Ok(cohens_d(c, r.rank, p))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinSummary {
    pub bin: u32,
    pub center_ra_hr: f64,
    pub count: u64,
    pub max_d: f64,
    pub median_d: f64,
    /// Events with d > −2.0.
    pub count_d_above_minus2: u64,
    /// d of the bin's full count at the end of the heap.
    pub final_d: f64,
    pub p: f64,
}

pub fn bin_summaries(heap: &[HeapRecord], exposure: &ExposureModel, config: &InstrumentConfig) -> Vec<BinSummary> {
    let n_bins = exposure.bins();
    let mut ds: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for r in heap {
        ds[r.bin as usize].push(r.cohens_d);
    }
    let n = heap.len() as u64;
    ds.into_iter()
        .enumerate()
        .map(|(k, d)| BinSummary {
            bin: k as u32,
            center_ra_hr: geometry::bin_center(k as u32, config),
            count: d.len() as u64,
            max_d: d.iter().copied().fold(f64::NAN, f64::max),
            median_d: math::median(&d).unwrap_or(f64::NAN),
            count_d_above_minus2: d.iter().filter(|&&x| x > -2.0).count() as u64,
            final_d: cohens_d(d.len() as u64, n, exposure.p[k]),
            p: exposure.p[k],
        })
        .collect()
}

/// Mean events per observed bin.
pub fn mean_count_per_bin(heap_len: usize, observed_bins: usize) -> f64 {
    heap_len as f64 / observed_bins as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoiParams {
    pub m_min: u32,
    pub median_d_min: f64,
    pub low_d_fraction_max: f64,
    /// Family-wise null false-alarm target that raises the per-bin minimum
    /// count above `m_min` when heap density demands it; `None` keeps
    /// the fixed `m_min`.
    pub family_false_alarm: Option<f64>,
    pub merge_adjacent: bool,
    pub alias: u32,
    /// Scale the count and median-d bars by the heap's cluster dispersion.
    pub cluster_correction: bool,
}

impl Default for DoiParams {
    fn default() -> Self {
        Self {
            m_min: 8,
            median_d_min: 3.0,
            low_d_fraction_max: 0.1,
            family_false_alarm: Some(0.01),
            merge_adjacent: false,
            alias: 16,
            cluster_correction: true,
        }
    }
}

impl DoiParams {
    /// Minimum event count for bin probability `p` in a heap of `n` events
    /// whose counts are overdispersed by `dispersion`.
    pub fn min_count(&self, n: u64, p: f64, observed_bins: usize, dispersion: f64) -> u32 {
        let Some(alpha) = self.family_false_alarm else {
            return self.m_min;
        };
        let per_bin = alpha / observed_bins.max(1) as f64;
        let q = math::poisson_quantile_upper(n as f64 * p / dispersion, per_bin) as f64;
        (math::ceil(q * dispersion) as u32).max(self.m_min)
    }

    /// Dispersion in force for `heap`: 1 unless correction is on.
    pub fn dispersion_for(&self, heap: &[HeapRecord]) -> f64 {
        if self.cluster_correction {
            cluster_dispersion(heap)
        } else {
            1.0
        }
    }
}

/// Variance-to-mean ratio of bin counts when events arrive in clusters:
/// `Σ n² / Σ n` over the (trigger, bin) groups of the heap. Pairs from one
/// trigger share pulses and pointing, so they pass or fail together.
pub fn cluster_dispersion(heap: &[HeapRecord]) -> f64 {
    if heap.is_empty() {
        return 1.0;
    }
    let mut keys: Vec<(u64, u32)> = heap.iter().map(|r| (r.mjd.to_bits(), r.bin)).collect();
    keys.sort_unstable();
    let mut sq = 0u64;
    let mut run = 0u64;
    for (i, k) in keys.iter().enumerate() {
        run += 1;
        if i + 1 == keys.len() || keys[i + 1] != *k {
            sq += run * run;
            run = 0;
        }
    }
    (sq as f64 / heap.len() as f64).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    PhaseCoherent,
    RfiLike,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoiReport {
    pub central_bin: u32,
    pub center_ra_hr: f64,
    pub total_count: u64,
    /// Counts at `k − 1` and `k + 1`.
    pub adjacent_counts: [u64; 2],
    /// DOI bins grouped into this report (contiguous run).
    pub member_bins: Vec<u32>,
    /// Counts at `k − alias` and `k + alias`.
    pub alias_counts: [u64; 2],
    pub alias_max_d: [f64; 2],
    pub median_d: f64,
    pub max_d: f64,
    pub fraction_d_above_3: f64,
    pub fraction_d_below_0: f64,
    pub min_count_required: u32,
    /// Cluster dispersion the bars were scaled by.
    pub dispersion: f64,
    /// Set when a stronger DOI sits one alias offset away.
    pub alias_of: Option<u32>,
    pub classification: Option<Classification>,
}

struct BinEvents {
    d: Vec<f64>,
}

impl BinEvents {
    fn stats(&self) -> (f64, f64, f64, f64) {
        let n = self.d.len() as f64;
        let median = math::median(&self.d).unwrap_or(f64::NAN);
        let max = self.d.iter().copied().fold(f64::NAN, f64::max);
        let above3 = self.d.iter().filter(|&&x| x > 3.0).count() as f64 / n;
        let below0 = self.d.iter().filter(|&&x| x < 0.0).count() as f64 / n;
        (median, max, above3, below0)
    }
}

/// Automated direction-of-interest rule over a filled heap.
pub fn detect_dois(
    heap: &[HeapRecord],
    exposure: &ExposureModel,
    params: &DoiParams,
    config: &InstrumentConfig,
) -> Vec<DoiReport> {
    let n_bins = exposure.bins();
    let n = heap.len() as u64;
    let observed = exposure.observed_bins();
    let dispersion = params.dispersion_for(heap);
    let median_min = params.median_d_min * math::sqrt(dispersion);
    let mut events: Vec<BinEvents> = (0..n_bins).map(|_| BinEvents { d: Vec::new() }).collect();
    for r in heap {
        events[r.bin as usize].d.push(r.cohens_d);
    }
    let at = |k: i64| -> usize { k.rem_euclid(n_bins as i64) as usize };

    let mut is_doi = vec![false; n_bins];
    let mut required = vec![0u32; n_bins];
    for k in 0..n_bins {
        let members: Vec<usize> = if params.merge_adjacent {
            vec![at(k as i64 - 1), k, at(k as i64 + 1)]
        } else {
            vec![k]
        };
        let d: Vec<f64> = members.iter().flat_map(|&m| events[m].d.iter().copied()).collect();
        let p: f64 = members.iter().map(|&m| exposure.p[m]).sum();
        required[k] = params.min_count(n, p, observed, dispersion);
        if events[k].d.is_empty() || (d.len() as u32) < required[k] {
            continue;
        }
        let (median, _, _, below0) = BinEvents { d }.stats();
        is_doi[k] = median >= median_min && below0 <= params.low_d_fraction_max;
    }

    // group circular runs of DOI bins
    let mut reports = Vec::new();
    let mut seen = vec![false; n_bins];
    for k in 0..n_bins {
        if !is_doi[k] || seen[k] {
            continue;
        }
        let mut start = k as i64;
        while is_doi[at(start - 1)] && at(start - 1) != k {
            start -= 1;
        }
        let mut members = Vec::new();
        let mut j = start;
        while is_doi[at(j)] && !seen[at(j)] {
            seen[at(j)] = true;
            members.push(at(j) as u32);
            j += 1;
        }
        let central = *members
            .iter()
            .max_by(|&&a, &&b| {
                let (ea, eb) = (&events[a as usize], &events[b as usize]);
                ea.d.len()
                    .cmp(&eb.d.len())
                    .then(ea.stats().0.total_cmp(&eb.stats().0))
                    .then(b.cmp(&a))
            })
            .expect("non-empty run");
        let c = central as i64;
        let ev = &events[central as usize];
        let (median, max, above3, below0) = ev.stats();
        let mut total = ev.d.len() as u64;
        if params.merge_adjacent {
            total += (events[at(c - 1)].d.len() + events[at(c + 1)].d.len()) as u64;
        }
        let a = params.alias as i64;
        let alias_bins = [at(c - a), at(c + a)];
        reports.push(DoiReport {
            central_bin: central,
            center_ra_hr: geometry::bin_center(central, config),
            total_count: total,
            adjacent_counts: [events[at(c - 1)].d.len() as u64, events[at(c + 1)].d.len() as u64],
            member_bins: members,
            alias_counts: alias_bins.map(|b| events[b].d.len() as u64),
            alias_max_d: alias_bins.map(|b| events[b].d.iter().copied().fold(f64::NAN, f64::max)),
            median_d: median,
            max_d: max,
            fraction_d_above_3: above3,
            fraction_d_below_0: below0,
            min_count_required: required[central as usize],
            dispersion,
            alias_of: None,
            classification: None,
        });
    }

    // mark reports shadowed by a stronger report one alias away
    let strength: Vec<(u32, u64, f64)> = reports.iter().map(|r| (r.central_bin, r.total_count, r.median_d)).collect();
    for r in reports.iter_mut() {
        for &(bin, count, median) in &strength {
            let dist = {
                let diff = (bin as i64 - r.central_bin as i64).rem_euclid(n_bins as i64);
                diff.min(n_bins as i64 - diff)
            };
            let near_alias = (dist - params.alias as i64).abs() <= 1;
            let stronger = count > r.total_count || (count == r.total_count && median > r.median_d);
            if near_alias && stronger {
                r.alias_of = Some(bin);
            }
        }
    }
    reports
}

/// Output of one second-level pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub overrides: FilterOverrides,
    /// Hypothesis-convolved probabilities used for d.
    pub exposure: ExposureModel,
    pub heap: Vec<HeapRecord>,
    pub dois: Vec<DoiReport>,
}

impl Analysis {
    pub fn counts(&self) -> Vec<u64> {
        bin_counts(&self.heap, self.exposure.bins())
    }

    /// Final-count z per bin.
    pub fn final_z(&self) -> Vec<f64> {
        let n = self.heap.len() as u64;
        self.counts()
            .iter()
            .zip(&self.exposure.p)
            .map(|(&c, &p)| cohens_d(c, n, p))
            .collect()
    }
}

/// Filter, rank, score and search for DOIs in one pass.
pub fn analyze(
    candidates: &[PulsePairCandidate],
    beam_exposure: &ExposureModel,
    config: &InstrumentConfig,
    overrides: &FilterOverrides,
    params: &DoiParams,
) -> Result<Analysis, StatsError> {
    let exposure = beam_exposure.hypothesis_convolved(params.alias)?;
    let filtered = apply_phase_filters(candidates, config, overrides, params.alias);
    let mut heap = build_sorted_heap(filtered);
    cohens_d_stream(&mut heap, &exposure)?;
    let dois = detect_dois(&heap, &exposure, params, config);
    Ok(Analysis {
        overrides: *overrides,
        exposure,
        heap,
        dois,
    })
}

/// Final-count z of bin `k` in a heap of `n` events.
pub fn final_strength(counts: &[u64], n: u64, exposure: &ExposureModel, k: u32) -> f64 {
    cohens_d(counts[k as usize], n, exposure.p[k as usize])
}

/// Per-bin event counts.
pub fn bin_counts(heap: &[HeapRecord], n_bins: usize) -> Vec<u64> {
    let mut c = vec![0u64; n_bins];
    for r in heap {
        c[r.bin as usize] += 1;
    }
    c
}

/// `Pr(T | B) = Pr(T)·Pr(B | T) / Pr(B)`.
pub fn bayes_update(pr_t: f64, pr_b_given_t: f64, pr_b: f64) -> Result<f64, StatsError> {
    let in_unit = |x: f64| x > 0.0 && x <= 1.0;
    if !(in_unit(pr_t) && in_unit(pr_b_given_t) && in_unit(pr_b)) {
        return Err(StatsError::ProbabilityBounds);
    }
    let joint = pr_t * pr_b_given_t;
    if joint > pr_b * (1.0 + 1e-12) {
        return Err(StatsError::ProbabilityBounds);
    }
    Ok((joint / pr_b).min(1.0))
}

/// Thermal photons per 3.7 Hz × 0.27 s cell: `k·T / (h·ν)`.
pub fn photon_count(antenna_temp_k: f64, freq_hz: f64) -> Result<f64, StatsError> {
    if !(antenna_temp_k.is_finite() && antenna_temp_k > 0.0) {
        return Err(StatsError::BadTemperature);
    }
    let ratio = PLANCK * freq_hz / (BOLTZMANN * antenna_temp_k);
    if !(ratio > 0.0 && ratio < 1e-3) {
        return Err(StatsError::NotThermal(ratio));
    }
    Ok(1.0 / ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filtered(ddf: f64, mjd: f64, f1: f64, bin: u32) -> FilteredCandidate {
        FilteredCandidate {
            candidate_id: 0,
            bin,
            offset: 0,
            d_ew_phi: [0.0, ddf],
            d_df_d_ew_phi: ddf,
            mjd,
            f1_hz: f1,
            f2_hz: f1 + 10.0,
            window_index: 0,
        }
    }

    fn uniform(n: usize) -> ExposureModel {
        ExposureModel::from_exposure(vec![1.0; n]).unwrap()
    }

    #[test]
    fn filter_examples() {
        let f = PhaseFilter::from_config(&InstrumentConfig::default());
        let d = [0.05, 0.03];
        let ddf = geometry::wrap(d[1] - d[0]);
        assert!((ddf + 0.02).abs() < 1e-15);
        assert!(f.accepts(d, ddf));
        assert!(!f.accepts([0.20, 0.0], -0.20));
        assert!(PhaseFilter::modified(&InstrumentConfig::default()).ddf.0 == 0.8);
    }

    #[test]
    fn heap_order_and_ties() {
        let heap = build_sorted_heap(vec![
            filtered(0.5, 1.0, 1.0, 0),
            filtered(-0.1, 1.0, 1.0, 0),
            filtered(0.3, 1.0, 1.0, 0),
        ]);
        let v: Vec<f64> = heap.iter().map(|r| r.abs_ddf_phase).collect();
        assert_eq!(v, vec![0.1, 0.3, 0.5]);
        assert_eq!(heap.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        let tied = build_sorted_heap(vec![filtered(0.2, 3.0, 1.0, 0), filtered(-0.2, 2.0, 5.0, 1)]);
        assert_eq!(tied[0].mjd, 2.0);
    }

    #[test]
    fn cohens_d_examples() {
        let p = 1.0 / 3200.0;
        let first = cohens_d(1, 1, p);
        // (1 − p)/sqrt(p(1 − p)) = sqrt((1 − p)/p) = sqrt(3199)
        assert!((first - 3199f64.sqrt()).abs() < 1e-9);
        assert!((first - 56.56).abs() < 0.01);
        let d = cohens_d(16, 13_718, p);
        let oracle = (16.0 - 13_718.0 / 3200.0) / (13_718.0 * p * (1.0 - p)).sqrt();
        assert!((d - oracle).abs() < 1e-12);
        assert!((d - 5.66).abs() < 0.01, "{d}");
        assert_eq!(cohens_d(4, 3200 * 4, p), 0.0);
    }

    #[test]
    fn stream_matches_scratch_and_flags_unobserved() {
        let mut exp = vec![1.0; 8];
        exp[3] = 0.0;
        let model = ExposureModel::from_exposure(exp).unwrap();
        let mut heap = build_sorted_heap(
            (0..40)
                .map(|i| filtered(i as f64 * 0.01, i as f64, 0.0, [0, 1, 2, 4, 5, 6, 7][i % 7]))
                .collect(),
        );
        cohens_d_stream(&mut heap, &model).unwrap();
        let scratch = cohens_d_from_scratch(&heap, &model).unwrap();
        assert_eq!(heap.iter().map(|r| r.cohens_d).collect::<Vec<_>>(), scratch);
        let mut bad = build_sorted_heap(vec![filtered(0.1, 0.0, 0.0, 3)]);
        assert_eq!(
            cohens_d_stream(&mut bad, &model),
            Err(StatsError::UnobservedBin { bin: 3 })
        );
    }

    #[test]
    fn exposure_uniform_and_convolved() {
        let cfg = InstrumentConfig::default();
        let m = uniform(3200);
        assert!(m.p.iter().all(|&p| (p - 1.0 / 3200.0).abs() < 1e-18));
        let c = m.hypothesis_convolved(16).unwrap();
        assert!((c.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            ExposureModel::from_exposure(vec![0.0; 4]),
            Err(StatsError::ZeroExposure)
        ));
        let pointings = (0..3200u64).map(|k| SkyPointing {
            index: k,
            mjd: 60_500.0,
            beam_ra_hr: geometry::bin_center(k as u32, &cfg),
            dec_deg: cfg.dec_deg,
        });
        let e = build_exposure(pointings, |_, ra| ra < 1.0, &cfg).unwrap();
        assert_eq!(e.exposure_seconds[0], 0.0);
        assert!((e.exposure_seconds[200] - 0.54).abs() < 1e-12);
    }

    #[test]
    fn doi_rules() {
        let cfg = InstrumentConfig::default();
        let model = uniform(3200);
        let params = DoiParams::default();

        // a lone top-of-heap outlier is not a DOI
        let mut heap = build_sorted_heap(vec![filtered(0.0, 0.0, 0.0, 100)]);
        cohens_d_stream(&mut heap, &model).unwrap();
        assert!(heap[0].cohens_d > 56.0);
        assert!(detect_dois(&heap, &model, &params, &cfg).is_empty());

        // 20 early events in bin 500 over a spread background
        let mut v: Vec<FilteredCandidate> = (0..20).map(|i| filtered(0.001 * i as f64, i as f64, 0.0, 500)).collect();
        v.extend((0..6400).map(|i| filtered(0.1 + i as f64 * 1e-4, i as f64, 0.0, (i * 7 % 3200) as u32)));
        let mut heap = build_sorted_heap(v);
        cohens_d_stream(&mut heap, &model).unwrap();
        let dois = detect_dois(&heap, &model, &params, &cfg);
        assert_eq!(dois.len(), 1);
        assert_eq!(dois[0].central_bin, 500);
        assert_eq!(dois[0].total_count, 22);
        assert!(dois[0].median_d >= 3.0);
    }

    #[test]
    fn min_count_tracks_density() {
        let p = DoiParams::default();
        assert_eq!(p.min_count(100, 1.0 / 3200.0, 3200, 1.0), 8);
        assert!(p.min_count(6880, 1.0 / 3200.0, 3200, 1.0) > 8);
        let fixed = DoiParams {
            family_false_alarm: None,
            ..p
        };
        assert_eq!(fixed.min_count(6880, 1.0 / 3200.0, 3200, 1.0), 8);
    }

    #[test]
    fn cluster_dispersion_of_groups() {
        let rec = |mjd: f64, bin: u32| HeapRecord {
            rank: 0,
            abs_ddf_phase: 0.0,
            bin,
            offset: 0,
            cumulative_count: 0,
            cohens_d: 0.0,
            candidate_id: 0,
            mjd,
            f1_hz: 0.0,
        };
        let singles: Vec<_> = (0..10).map(|i| rec(i as f64, 3)).collect();
        assert_eq!(cluster_dispersion(&singles), 1.0);
        // groups of 3, 1: (9 + 1) / 4
        let mixed = vec![rec(1.0, 2), rec(1.0, 2), rec(1.0, 2), rec(1.0, 5)];
        assert_eq!(cluster_dispersion(&mixed), 2.5);
        assert_eq!(cluster_dispersion(&[]), 1.0);
        // a dispersed heap needs a proportionally larger count
        let p = DoiParams::default();
        assert!(p.min_count(300_000, 1.0 / 800.0, 800, 17.7) > p.min_count(300_000, 1.0 / 800.0, 800, 1.0) + 100);
    }

    #[test]
    fn bayes_examples() {
        assert_eq!(bayes_update(0.5, 1.0, 0.5).unwrap(), 1.0);
        assert!((bayes_update(0.01, 0.9, 0.5).unwrap() - 0.018).abs() < 1e-15);
        assert!((bayes_update(0.3, 0.4, 0.4).unwrap() - 0.3).abs() < 1e-15);
        assert!(bayes_update(0.9, 0.9, 0.5).is_err());
        assert!(bayes_update(0.0, 0.9, 0.5).is_err());
    }

    #[test]
    fn photon_examples() {
        let n = photon_count(290.0, 1.425e9).unwrap();
        assert!((n - 4240.43).abs() < 0.01, "{n}");
        assert!((photon_count(580.0, 1.425e9).unwrap() - 2.0 * n).abs() < 1e-6);
        assert!((photon_count(290.0, 2.85e9).unwrap() - 2120.22).abs() < 0.01);
        assert!(photon_count(0.001, 1.425e9).is_err());
        assert!(photon_count(-1.0, 1.425e9).is_err());
    }

    #[test]
    fn mean_count_scale() {
        assert!((mean_count_per_bin(13_718, 3200) - 4.287).abs() < 0.001);
    }
}
