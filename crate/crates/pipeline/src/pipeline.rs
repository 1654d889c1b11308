//! Stage functions shared by the CLI and the tests.
//!
//! Each stage has an in-memory form and a directory form that reads and
//! writes the delimited-text files of the previous and next stage.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pulsepair_core::diagnostics::{self, ModifiedComparison, TestVariant};
use pulsepair_core::first_level::{self, FrameProducts, PulseDetection, PulsePairCandidate, WindowVisibility};
use pulsepair_core::geometry::{self, InstrumentConfig, RaTable};
use pulsepair_core::rfi::{self, ExcisionRegion, MaskRow, SegmentCounts, SegmentTag};
use pulsepair_core::sim::{self, Scenario, Simulator, SkyPointing, TriggerFrame};
use pulsepair_core::stats::{self, Analysis, BinSummary, Classification, ExposureModel, FilterOverrides};
use rayon::prelude::*;

use crate::formats::{self, ExposureRow, FrameWriter};
use crate::manifest::{RunManifest, StageRecord};
use crate::settings::{self, RunConfig, ScenarioFile};

pub const CONFIG_FILE: &str = "config.toml";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const SUN_EPHEMERIS_FILE: &str = "sun_ephemeris.tsv";
pub const FRAMES_FILE: &str = "frames.bin";
pub const POINTINGS_FILE: &str = "pointings.tsv";
pub const PULSES_FILE: &str = "pulses.tsv";
pub const CANDIDATES_FILE: &str = "candidates.tsv";
pub const VISIBILITY_FILE: &str = "visibility.tsv";
pub const EXCISED_FILE: &str = "candidates_excised.tsv";
pub const SEGMENT_COUNTS_FILE: &str = "segment_counts.tsv";
pub const TAGS_FILE: &str = "rfi_tags.tsv";
pub const SUN_MASK_FILE: &str = "sun_mask.tsv";
pub const EXPOSURE_FILE: &str = "exposure.tsv";
pub const VARIANTS_DIR: &str = "variants";
pub const COMPARISON_FILE: &str = "comparison.tsv";
pub const HIGH_VISIBILITY_FILE: &str = "high_visibility.tsv";

/// Frames processed per parallel batch; output order never depends on it.
const CHUNK: u64 = 512;

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FirstLevelOutput {
    pub pointings: Vec<SkyPointing>,
    pub pulses: Vec<PulseDetection>,
    pub candidates: Vec<PulsePairCandidate>,
    pub visibilities: Vec<WindowVisibility>,
}

impl FirstLevelOutput {
    fn absorb(&mut self, pointing: SkyPointing, p: FrameProducts) {
        self.pointings.push(pointing);
        self.pulses.extend(p.pulses);
        self.candidates.extend(p.candidates);
        self.visibilities.extend(p.visibilities);
    }

    /// Order candidates by MJD and number them.
    fn finish(mut self) -> Self {
        self.candidates
            .sort_by(|a, b| a.mjd().total_cmp(&b.mjd()).then(a.frame_index.cmp(&b.frame_index)));
        for (i, c) in self.candidates.iter_mut().enumerate() {
            c.id = i as u64;
        }
        self
    }

    fn record_counts(&self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("triggers".into(), self.pointings.len() as u64),
            ("pulses".into(), self.pulses.len() as u64),
            ("candidates".into(), self.candidates.len() as u64),
            ("visibilities".into(), self.visibilities.len() as u64),
        ])
    }
}

fn pointing_of(f: &TriggerFrame, config: &InstrumentConfig) -> SkyPointing {
    SkyPointing {
        index: f.index,
        mjd: f.mjd,
        beam_ra_hr: f.beam_ra_hr,
        dec_deg: config.dec_deg,
    }
}

/// Synthesize and process every trigger of a scenario without keeping frames.
pub fn first_level_from_simulator(sim: &Simulator, pool: &rayon::ThreadPool) -> Result<FirstLevelOutput> {
    let cfg = sim.config();
    let total = sim.frame_count();
    let mut out = FirstLevelOutput::default();
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        let batch: Vec<(SkyPointing, FrameProducts)> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let frame = sim.frame(i)?;
                    let products = first_level::process_frame(&frame, cfg)?;
                    Ok((pointing_of(&frame, cfg), products))
                })
                .collect::<Result<_>>()
        })?;
        for (p, prod) in batch {
            out.absorb(p, prod);
        }
        start = end;
    }
    Ok(out.finish())
}

/// Process a stream of frames, in parallel batches.
pub fn first_level_from_frames<I>(frames: I, config: &InstrumentConfig, pool: &rayon::ThreadPool) -> Result<FirstLevelOutput>
where
    I: Iterator<Item = Result<TriggerFrame>>,
{
    let mut out = FirstLevelOutput::default();
    let mut frames = frames.peekable();
    while frames.peek().is_some() {
        let chunk: Vec<TriggerFrame> = frames.by_ref().take(CHUNK as usize).collect::<Result<_>>()?;
        let batch: Vec<FrameProducts> = pool.install(|| {
            chunk
                .par_iter()
                .map(|f| first_level::process_frame(f, config))
                .collect::<Result<_, _>>()
        })?;
        for (f, prod) in chunk.iter().zip(batch) {
            out.absorb(pointing_of(f, config), prod);
        }
    }
    Ok(out.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcisionOutput {
    pub threshold: u32,
    pub counts: SegmentCounts,
    pub tags: Vec<SegmentTag>,
    pub mask: Vec<MaskRow>,
    pub kept: Vec<PulsePairCandidate>,
    pub removed_rfi: usize,
    pub removed_sun: usize,
    /// Beam-centre exposure with Sun-excised triggers removed.
    pub exposure: ExposureModel,
}

/// Sun excision, then RFI tagging and margin filtering, then the exposure
/// model over the surviving triggers.
pub fn excise(
    pointings: &[SkyPointing],
    pulses: &[PulseDetection],
    candidates: Vec<PulsePairCandidate>,
    run: &RunConfig,
    sun: Option<&ExcisionRegion>,
) -> Result<ExcisionOutput> {
    let cfg = &run.instrument;
    let before = candidates.len();
    let (after_sun, mask) = match sun {
        Some(region) => rfi::excise_sun(candidates, region)?,
        None => (candidates, Vec::new()),
    };
    let removed_sun = before - after_sun.len();
    let threshold = run.analysis.rfi_threshold_for(cfg);
    let outcome = rfi::excise_rfi(pulses, after_sun, threshold, run.analysis.rfi_look_forward, cfg)?;
    let masked = |mjd: f64, ra: f64| sun.is_some_and(|r| r.contains(mjd, ra).unwrap_or(false));
    let exposure = stats::build_exposure(pointings.iter().copied(), masked, cfg)?;
    Ok(ExcisionOutput {
        threshold: outcome.threshold,
        counts: outcome.counts,
        tags: outcome.tags,
        mask,
        kept: outcome.kept,
        removed_rfi: outcome.removed,
        removed_sun,
        exposure,
    })
}

/// Parse a variant list such as `baseline,phase_noise:1..4,tau_zero`.
pub fn parse_variants(spec: &str, run: &RunConfig) -> Result<Vec<TestVariant>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, arg) = match item.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (item, None),
        };
        match (name, arg) {
            ("baseline", None) => out.push(TestVariant::Baseline),
            ("phase_noise", None) => out.extend(run.analysis.phase_noise_seeds.iter().map(|&seed| TestVariant::PhaseNoise { seed })),
            ("phase_noise", Some(a)) => {
                let seeds: Vec<u64> = match a.split_once("..") {
                    Some((lo, hi)) => {
                        let lo: u64 = lo.parse().with_context(|| format!("bad seed range `{a}`"))?;
                        let hi: u64 = hi.parse().with_context(|| format!("bad seed range `{a}`"))?;
                        (lo..=hi).collect()
                    }
                    None => vec![a.parse().with_context(|| format!("bad seed `{a}`"))?],
                };
                if seeds.contains(&0) {
                    bail!("phase-noise seeds start at 1");
                }
                out.extend(seeds.into_iter().map(|seed| TestVariant::PhaseNoise { seed }));
            }
            ("tau_zero", None) => out.push(TestVariant::TauOverride {
                tau_s: run.analysis.tau_override_s,
            }),
            ("tau", Some(a)) => {
                let ns: f64 = a.parse().with_context(|| format!("bad delay `{a}` (nanoseconds)"))?;
                out.push(TestVariant::TauOverride { tau_s: ns * 1e-9 });
            }
            ("modified_filter", None) => out.push(TestVariant::ModifiedFilter {
                filter: run.analysis.modified_filter(),
            }),
            _ => bail!("unknown variant `{item}` (expected baseline, phase_noise[:a..b], tau_zero, tau:<ns>, modified_filter)"),
        }
    }
    if out.is_empty() {
        bail!("no variants requested");
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|v| seen.insert(v.name()));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: TestVariant,
    pub analysis: Analysis,
    pub comparison: Option<ModifiedComparison>,
}

impl VariantResult {
    pub fn name(&self) -> String {
        self.variant.name()
    }

    /// Central bins of DOIs that are not alias images of another DOI.
    pub fn primary_doi_bins(&self) -> Vec<u32> {
        self.analysis
            .dois
            .iter()
            .filter(|d| d.alias_of.is_none())
            .map(|d| d.central_bin)
            .collect()
    }
}

/// Run one variant against the excised candidates.
pub fn run_variant(
    variant: TestVariant,
    candidates: &[PulsePairCandidate],
    beam_exposure: &ExposureModel,
    run: &RunConfig,
) -> Result<VariantResult> {
    let cfg = &run.instrument;
    let alias = geometry::config_alias_offset(cfg)?.bins;
    let params = run.analysis.doi_params(alias);
    let base = FilterOverrides::from_config(cfg);
    let (analysis, comparison) = match variant {
        TestVariant::Baseline => (stats::analyze(candidates, beam_exposure, cfg, &base, &params)?, None),
        TestVariant::PhaseNoise { seed } => {
            let noisy = diagnostics::phase_noise_variant(candidates, seed)?;
            (stats::analyze(&noisy, beam_exposure, cfg, &base, &params)?, None)
        }
        TestVariant::TauOverride { tau_s } => (
            diagnostics::tau_override_variant(candidates, tau_s, beam_exposure, cfg, &params)?,
            None,
        ),
        TestVariant::ModifiedFilter { filter } => {
            let cmp = diagnostics::modified_filter_variant(candidates, filter, beam_exposure, cfg, &params)?;
            (cmp.modified.clone(), Some(cmp))
        }
    };
    Ok(VariantResult {
        variant,
        analysis,
        comparison,
    })
}

/// Variants are independent; results come back in request order.
pub fn run_variants(
    variants: &[TestVariant],
    candidates: &[PulsePairCandidate],
    beam_exposure: &ExposureModel,
    run: &RunConfig,
    pool: &rayon::ThreadPool,
) -> Result<Vec<VariantResult>> {
    pool.install(|| {
        variants
            .par_iter()
            .map(|&v| run_variant(v, candidates, beam_exposure, run))
            .collect()
    })
}

/// One row of the cross-variant summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variant: String,
    pub tau_inst_s: f64,
    pub ew_window: (f64, f64),
    pub ddf_window: (f64, f64),
    pub candidates: u64,
    pub heap_len: u64,
    pub dois: Vec<u32>,
    pub lost: Vec<u32>,
    pub gained: Vec<u32>,
}

fn near(bins: &[u32], k: u32, n_bins: u32) -> bool {
    bins.iter().any(|&b| {
        let d = (b as i64 - k as i64).rem_euclid(n_bins as i64);
        d.min(n_bins as i64 - d) <= 1
    })
}

/// DOI deltas of each variant against the baseline (or the first variant
/// when no baseline was run). DOIs within one bin count as the same.
pub fn comparison_rows(results: &[VariantResult], n_candidates: usize, n_bins: u32) -> Vec<ComparisonRow> {
    let reference = results
        .iter()
        .find(|r| r.variant == TestVariant::Baseline)
        .or(results.first())
        .map(|r| r.primary_doi_bins())
        .unwrap_or_default();
    results
        .iter()
        .map(|r| {
            let dois = r.primary_doi_bins();
            ComparisonRow {
                variant: r.name(),
                tau_inst_s: r.analysis.overrides.tau_inst_s,
                ew_window: r.analysis.overrides.filter.ew,
                ddf_window: r.analysis.overrides.filter.ddf,
                candidates: n_candidates as u64,
                heap_len: r.analysis.heap.len() as u64,
                lost: reference.iter().copied().filter(|&b| !near(&dois, b, n_bins)).collect(),
                gained: dois.iter().copied().filter(|&b| !near(&reference, b, n_bins)).collect(),
                dois,
            }
        })
        .collect()
}

fn bins_field(b: &[u32]) -> String {
    if b.is_empty() {
        "-".into()
    } else {
        b.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl formats::TsvRecord for ComparisonRow {
    const KIND: &'static str = "comparison";
    const COLUMNS: &'static [&'static str] = &[
        "variant", "tau_inst_s", "ew_lo", "ew_hi", "ddf_lo", "ddf_hi", "candidates", "heap_len", "n_dois", "doi_bins",
        "lost_vs_baseline", "gained_vs_baseline",
    ];

    fn write_row(&self, r: &mut formats::Row) {
        r.put(&self.variant)
            .put(self.tau_inst_s)
            .put(self.ew_window.0)
            .put(self.ew_window.1)
            .put(self.ddf_window.0)
            .put(self.ddf_window.1)
            .put(self.candidates)
            .put(self.heap_len)
            .put(self.dois.len())
            .put(bins_field(&self.dois))
            .put(bins_field(&self.lost))
            .put(bins_field(&self.gained));
    }
}

/// Default-versus-modified strength of one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionRow {
    pub bin: u32,
    pub center_ra_hr: f64,
    pub default_strength: f64,
    pub modified_strength: f64,
    pub classification: Classification,
}

impl formats::TsvRecord for DirectionRow {
    const KIND: &'static str = "directions";
    const COLUMNS: &'static [&'static str] = &["bin", "center_ra_hr", "default_z", "modified_z", "classification"];

    fn write_row(&self, r: &mut formats::Row) {
        r.put(self.bin)
            .put(self.center_ra_hr)
            .put(self.default_strength)
            .put(self.modified_strength)
            .put(match self.classification {
                Classification::PhaseCoherent => "phase_coherent",
                Classification::RfiLike => "rfi_like",
            });
    }
}

// ---------------------------------------------------------------------
// Directory stages

/// Inputs resolved for a stage: the config in force and where it came from.
pub struct StageContext {
    pub run: RunConfig,
    pub config_text: String,
    pub config_base: PathBuf,
    pub workers: usize,
}

impl StageContext {
    /// `--config` wins; otherwise the run directory's copy; otherwise defaults.
    pub fn resolve(config: Option<&Path>, run_dir: Option<&Path>, workers: usize) -> Result<Self> {
        let stored = run_dir.map(|d| d.join(CONFIG_FILE)).filter(|p| p.exists());
        let (run, text, base) = match config.map(Path::to_path_buf).or(stored) {
            Some(path) => {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let run = RunConfig::parse_str(&text, &path)?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (run, text, base)
            }
            None => {
                let run = RunConfig::default();
                let text = run.to_toml();
                (run, text, PathBuf::from("."))
            }
        };
        Ok(Self {
            run,
            config_text: text,
            config_base: base,
            workers,
        })
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        thread_pool(self.workers)
    }

    fn manifest(&self, dir: &Path, scenario_text: Option<&str>) -> Result<RunManifest> {
        if let Some(m) = RunManifest::load(dir)? {
            return Ok(m);
        }
        let cfg = &self.run.instrument;
        let thresholds = BTreeMap::from([
            ("snr_threshold_db".into(), format!("{} dB on both elements against the segment noise floor", cfg.snr_threshold_db)),
            (
                "snr_likelihood".into(),
                format!(
                    "log10 L = (2 theta - s_e - s_w)/ln 10 per pulse; keep pulse >= {}, pair >= {}",
                    cfg.log10_pulse_snr_like_threshold, cfg.log10_pair_snr_like_threshold
                ),
            ),
            (
                "rfi_tag".into(),
                format!(
                    "segment count per 4 h window >= threshold ({}); margin > {} segments",
                    if self.run.analysis.rfi_threshold > 0 {
                        self.run.analysis.rfi_threshold.to_string()
                    } else {
                        format!("poisson quantile at {}", self.run.analysis.rfi_tag_probability)
                    },
                    cfg.rfi_margin_segments
                ),
            ),
            (
                "doi".into(),
                format!(
                    "count >= max({}, family-wise quantile at {}), median d >= {}, fraction d<0 <= {}",
                    self.run.analysis.doi_min_count,
                    self.run.analysis.doi_family_false_alarm,
                    self.run.analysis.doi_median_d_min,
                    self.run.analysis.doi_low_d_fraction_max
                ),
            ),
        ]);
        Ok(RunManifest::new(&self.config_text, scenario_text, sim::duty_cycle(cfg), thresholds))
    }

    pub(crate) fn finish_stage(&self, dir: &Path, scenario_text: Option<&str>, stage: &str, records: BTreeMap<String, u64>, t0: Instant) -> Result<()> {
        let mut m = self.manifest(dir, scenario_text)?;
        m.record_stage(StageRecord {
            stage: stage.into(),
            records,
            elapsed_s: t0.elapsed().as_secs_f64(),
            workers: self.workers,
        });
        m.refresh_outputs(dir)?;
        m.save(dir)
    }

    fn store_config(&self, dir: &Path) -> Result<()> {
        write_if_changed(&dir.join(CONFIG_FILE), &self.config_text)
    }
}

fn write_if_changed(path: &Path, text: &str) -> Result<()> {
    if fs::read_to_string(path).ok().as_deref() == Some(text) {
        return Ok(());
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Load a scenario file and resolve it against the config in force.
pub fn load_scenario(path: &Path, ctx: &StageContext, seed: Option<u64>) -> Result<(Scenario, String)> {
    let mut file = ScenarioFile::load(path)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let scenario = file.to_scenario(&ctx.run.instrument, path, &base)?;
    let mut text = file.to_toml();
    // inline the ephemeris so the stored scenario stands alone
    if let (Some(sun), Some(s)) = (&mut file.sun, &scenario.sun) {
        sun.ephemeris_file.clear();
        sun.ephemeris = s.ra_hr_by_mjd.rows().iter().map(|&(m, r)| [m, r]).collect();
        text = file.to_toml();
    }
    Ok((scenario, text))
}

fn store_scenario(dir: &Path, scenario: &Scenario, text: &str) -> Result<()> {
    write_if_changed(&dir.join(SCENARIO_FILE), text)?;
    if let Some(sun) = &scenario.sun {
        write_if_changed(
            &dir.join(SUN_EPHEMERIS_FILE),
            &settings::format_ephemeris(&sun.ra_hr_by_mjd, 0.0),
        )?;
    }
    Ok(())
}

/// `simulate`: frames and pointings.
pub fn simulate_stage(ctx: &StageContext, scenario_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let t0 = Instant::now();
    let (scenario, text) = load_scenario(scenario_path, ctx, seed)?;
    let sim = sim::generate_run(&scenario)?;
    ensure_dir(out)?;
    ctx.store_config(out)?;
    store_scenario(out, &scenario, &text)?;
    let pool = ctx.pool()?;
    let path = out.join(FRAMES_FILE);
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = FrameWriter::new(BufWriter::new(file))?;
    let total = sim.frame_count();
    let mut start = 0;
    let mut bins = 0u64;
    while start < total {
        let end = (start + CHUNK).min(total);
        let batch: Vec<TriggerFrame> = pool.install(|| (start..end).into_par_iter().map(|i| sim.frame(i)).collect::<Result<_, _>>())?;
        for f in &batch {
            bins += f.windows.iter().map(|w| w.bins.len() as u64).sum::<u64>();
            w.write(f)?;
        }
        start = end;
    }
    w.finish()?;
    let pointings: Vec<SkyPointing> = sim.pointings().collect();
    formats::save(&out.join(POINTINGS_FILE), &pointings)?;
    ctx.finish_stage(
        out,
        Some(&text),
        "simulate",
        BTreeMap::from([("triggers".into(), total), ("materialized_bins".into(), bins)]),
        t0,
    )
}

fn write_first_level(dir: &Path, fl: &FirstLevelOutput) -> Result<()> {
    formats::save(&dir.join(POINTINGS_FILE), &fl.pointings)?;
    formats::save(&dir.join(PULSES_FILE), &fl.pulses)?;
    formats::save(&dir.join(CANDIDATES_FILE), &fl.candidates)?;
    formats::save(&dir.join(VISIBILITY_FILE), &fl.visibilities)?;
    Ok(())
}

/// `detect`: first level from persisted frames or straight from a scenario.
pub fn detect_stage(ctx: &StageContext, input: Option<&Path>, scenario_path: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<FirstLevelOutput> {
    let t0 = Instant::now();
    let pool = ctx.pool()?;
    ensure_dir(out)?;
    let (fl, scenario_text) = match (input, scenario_path) {
        (Some(dir), None) => {
            let frames_path = dir.join(FRAMES_FILE);
            let reader = formats::open_frames(&frames_path)?;
            let fl = first_level_from_frames(reader.map(|r| r.map_err(anyhow::Error::from)), &ctx.run.instrument, &pool)?;
            let text = fs::read_to_string(dir.join(SCENARIO_FILE)).ok();
            if dir != out {
                if let Some(t) = &text {
                    write_if_changed(&out.join(SCENARIO_FILE), t)?;
                }
                let eph = dir.join(SUN_EPHEMERIS_FILE);
                if eph.exists() {
                    fs::copy(&eph, out.join(SUN_EPHEMERIS_FILE))?;
                }
            }
            (fl, text)
        }
        (None, Some(path)) => {
            let (scenario, text) = load_scenario(path, ctx, seed)?;
            let sim = sim::generate_run(&scenario)?;
            store_scenario(out, &scenario, &text)?;
            (first_level_from_simulator(&sim, &pool)?, Some(text))
        }
        (Some(_), Some(_)) => bail!("give either --in (persisted frames) or --scenario, not both"),
        (None, None) => bail!("detect needs --in <run dir with frames.bin> or --scenario <file>"),
    };
    ctx.store_config(out)?;
    write_first_level(out, &fl)?;
    ctx.finish_stage(out, scenario_text.as_deref(), "detect", fl.record_counts(), t0)?;
    Ok(fl)
}

/// The Sun region in force for a run directory.
pub fn sun_region_for(ctx: &StageContext, run_dir: &Path) -> Result<Option<ExcisionRegion>> {
    let stored = run_dir.join(SUN_EPHEMERIS_FILE);
    let table: Option<RaTable> = if stored.exists() {
        Some(settings::load_ephemeris(&stored)?)
    } else {
        None
    };
    Ok(ctx.run.sun_region(table.as_ref(), &ctx.config_base)?)
}

/// `excise`: Sun and RFI excision plus the exposure model.
pub fn excise_stage(ctx: &StageContext, input: &Path, out: &Path) -> Result<ExcisionOutput> {
    let t0 = Instant::now();
    ensure_dir(out)?;
    let pointings: Vec<SkyPointing> = formats::load(&input.join(POINTINGS_FILE))?;
    let pulses: Vec<PulseDetection> = formats::load(&input.join(PULSES_FILE))?;
    let candidates: Vec<PulsePairCandidate> = formats::load(&input.join(CANDIDATES_FILE))?;
    let n_in = candidates.len() as u64;
    let sun = sun_region_for(ctx, input)?;
    let ex = excise(&pointings, &pulses, candidates, &ctx.run, sun.as_ref())?;
    ctx.store_config(out)?;
    if input != out {
        for f in [POINTINGS_FILE, VISIBILITY_FILE, SCENARIO_FILE, SUN_EPHEMERIS_FILE] {
            let src = input.join(f);
            if src.exists() {
                fs::copy(&src, out.join(f))?;
            }
        }
    }
    write_excision(out, &ex, &ctx.run.instrument)?;
    let scenario_text = fs::read_to_string(input.join(SCENARIO_FILE)).ok();
    ctx.finish_stage(
        out,
        scenario_text.as_deref(),
        "excise",
        BTreeMap::from([
            ("candidates_in".into(), n_in),
            ("removed_sun".into(), ex.removed_sun as u64),
            ("removed_rfi".into(), ex.removed_rfi as u64),
            ("kept".into(), ex.kept.len() as u64),
            ("rfi_tags".into(), ex.tags.len() as u64),
            ("rfi_threshold".into(), ex.threshold as u64),
        ]),
        t0,
    )?;
    Ok(ex)
}

fn write_excision(dir: &Path, ex: &ExcisionOutput, cfg: &InstrumentConfig) -> Result<()> {
    formats::save(&dir.join(EXCISED_FILE), &ex.kept)?;
    formats::save(&dir.join(SEGMENT_COUNTS_FILE), &formats::segment_count_rows(&ex.counts))?;
    formats::save(&dir.join(TAGS_FILE), &ex.tags)?;
    formats::save(&dir.join(SUN_MASK_FILE), &ex.mask)?;
    formats::save(&dir.join(EXPOSURE_FILE), &formats::exposure_rows(&ex.exposure, cfg.ra_bin_hr()))?;
    Ok(())
}

/// Excised candidates and beam exposure from a run directory.
pub fn load_second_level_inputs(dir: &Path) -> Result<(Vec<PulsePairCandidate>, ExposureModel)> {
    let candidates = formats::load(&dir.join(EXCISED_FILE))?;
    let rows: Vec<ExposureRow> = formats::load(&dir.join(EXPOSURE_FILE))?;
    Ok((candidates, formats::exposure_from_rows(&rows)?))
}

pub fn variant_dir(root: &Path, name: &str) -> PathBuf {
    root.join(VARIANTS_DIR).join(name)
}

/// Per-variant heap, bin summary, DOI and (for the modified filter)
/// direction files.
pub fn write_variant(root: &Path, r: &VariantResult, cfg: &InstrumentConfig) -> Result<()> {
    let dir = variant_dir(root, &r.name());
    ensure_dir(&dir)?;
    let a = &r.analysis;
    formats::save(&dir.join("heap.tsv"), &a.heap)?;
    let bins: Vec<BinSummary> = stats::bin_summaries(&a.heap, &a.exposure, cfg);
    formats::save(&dir.join("bins.tsv"), &bins)?;
    formats::save(&dir.join("dois.tsv"), &a.dois)?;
    if let Some(cmp) = &r.comparison {
        let rows: Vec<DirectionRow> = cmp
            .directions
            .iter()
            .map(|d| DirectionRow {
                bin: d.bin,
                center_ra_hr: geometry::bin_center(d.bin, cfg),
                default_strength: d.default_strength,
                modified_strength: d.modified_strength,
                classification: d.classification,
            })
            .collect();
        formats::save(&dir.join("directions.tsv"), &rows)?;
    }
    Ok(())
}

/// `analyze`: second level under each requested variant.
pub fn analyze_stage(ctx: &StageContext, input: &Path, out: &Path, variants: &[TestVariant]) -> Result<Vec<VariantResult>> {
    let t0 = Instant::now();
    ensure_dir(out)?;
    let (candidates, exposure) = load_second_level_inputs(input)?;
    let pool = ctx.pool()?;
    let results = run_variants(variants, &candidates, &exposure, &ctx.run, &pool)?;
    ctx.store_config(out)?;
    if input != out {
        for f in [EXCISED_FILE, EXPOSURE_FILE, POINTINGS_FILE, VISIBILITY_FILE, SCENARIO_FILE] {
            let src = input.join(f);
            if src.exists() {
                fs::copy(&src, out.join(f))?;
            }
        }
    }
    for r in &results {
        write_variant(out, r, &ctx.run.instrument)?;
        if let Some(c) = &r.comparison {
            for w in &c.warnings {
                eprintln!("warning: {}: {w}", r.name());
            }
        }
    }
    let rows = comparison_rows(&results, candidates.len(), ctx.run.instrument.ra_bins_per_day);
    formats::save(&out.join(COMPARISON_FILE), &rows)?;
    let mut records = BTreeMap::from([("candidates".into(), candidates.len() as u64)]);
    for r in &results {
        records.insert(format!("{}.heap", r.name()), r.analysis.heap.len() as u64);
        records.insert(format!("{}.dois", r.name()), r.primary_doi_bins().len() as u64);
    }
    let scenario_text = fs::read_to_string(input.join(SCENARIO_FILE)).ok();
    ctx.finish_stage(out, scenario_text.as_deref(), "analyze", records, t0)?;
    Ok(results)
}

/// `diagnose`: every falsification variant plus the high-visibility scan.
pub fn diagnose_stage(ctx: &StageContext, input: &Path, out: &Path) -> Result<Vec<VariantResult>> {
    let variants = parse_variants("baseline,phase_noise,tau_zero,modified_filter", &ctx.run)?;
    let results = analyze_stage(ctx, input, out, &variants)?;
    let t0 = Instant::now();
    let vis: Vec<WindowVisibility> = formats::load(&input.join(VISIBILITY_FILE))?;
    let hits = diagnostics::high_visibility_scan(&vis, ctx.run.analysis.visibility_threshold_db_rel);
    formats::save(&out.join(HIGH_VISIBILITY_FILE), &hits)?;
    let scenario_text = fs::read_to_string(input.join(SCENARIO_FILE)).ok();
    ctx.finish_stage(
        out,
        scenario_text.as_deref(),
        "diagnose",
        BTreeMap::from([
            ("windows".into(), vis.len() as u64),
            ("high_visibility".into(), hits.len() as u64),
        ]),
        t0,
    )?;
    Ok(results)
}

/// Convenience for tests and small runs: scenario to excised candidates in memory.
pub fn run_to_excision(scenario: &Scenario, run: &RunConfig, pool: &rayon::ThreadPool) -> Result<(FirstLevelOutput, ExcisionOutput)> {
    let sim = sim::generate_run(scenario)?;
    let mut fl = first_level_from_simulator(&sim, pool)?;
    let sun = match &scenario.sun {
        Some(s) => run.sun_region(Some(&s.ra_hr_by_mjd), Path::new("."))?,
        None => None,
    };
    let candidates = std::mem::take(&mut fl.candidates);
    let ex = excise(&fl.pointings, &fl.pulses, candidates, run, sun.as_ref())?;
    Ok((fl, ex))
}
