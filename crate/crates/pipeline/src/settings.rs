//! TOML config and scenario files.
//!
//! A config file has two sections: `[instrument]`, one key per measurement
//! setting, and `[analysis]`, the second-level and excision dials. A
//! scenario file describes what the simulator injects. Unknown keys are
//! rejected so a typo never silently falls back to a default.

use std::fmt;
use std::path::{Path, PathBuf};

use pulsepair_core::geometry::{InstrumentConfig, LstReference, RaTable};
use pulsepair_core::math::PI;
use pulsepair_core::rfi::{self, ExcisionKind, ExcisionRegion};
use pulsepair_core::sim::{Materialize, PerElement, RfiSpec, Scenario, SimError, SourceSpec, SunSpec};
use pulsepair_core::stats::{DoiParams, PhaseFilter};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: invalid value for `{key}`: {reason}")]
    Invalid {
        path: PathBuf,
        key: String,
        reason: String,
    },
    #[error("{path}: {source}")]
    Scenario {
        path: PathBuf,
        #[source]
        source: SimError,
    },
}

fn read(path: &Path) -> Result<String, SettingsError> {
    std::fs::read_to_string(path).map_err(|source| SettingsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, SettingsError> {
    toml::from_str(text).map_err(|e| SettingsError::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstrumentSection {
    pub baseline_wavelengths: f64,
    pub ref_frequency_hz: f64,
    pub dec_deg: f64,
    pub element_fwhm_deg: f64,
    pub tau_inst_s: f64,
    pub ra_bins_per_day: u32,
    pub fft_bin_hz: f64,
    pub integration_s: f64,
    pub trigger_period_s: f64,
    pub windows_per_trigger: u32,
    pub rf_ranges_hz: Vec<[f64; 2]>,
    pub delta_f_range_hz: [f64; 2],
    pub snr_threshold_db: f64,
    pub ew_phase_filter_rad: f64,
    pub ddf_phase_filter_rad: f64,
    pub rfi_margin_segments: u32,
    pub rfi_segment_hz: f64,
    pub log10_pulse_snr_like_threshold: f64,
    pub log10_pair_snr_like_threshold: f64,
    pub baseline_azimuth_deg: f64,
    pub wideband_hz: f64,
    pub lst_mjd0: f64,
    pub lst0_hr: f64,
}

impl From<&InstrumentConfig> for InstrumentSection {
    fn from(c: &InstrumentConfig) -> Self {
        Self {
            baseline_wavelengths: c.baseline_wavelengths,
            ref_frequency_hz: c.ref_frequency_hz,
            dec_deg: c.dec_deg,
            element_fwhm_deg: c.element_fwhm_deg,
            tau_inst_s: c.tau_inst_s,
            ra_bins_per_day: c.ra_bins_per_day,
            fft_bin_hz: c.fft_bin_hz,
            integration_s: c.integration_s,
            trigger_period_s: c.trigger_period_s,
            windows_per_trigger: c.windows_per_trigger,
            rf_ranges_hz: c.rf_ranges_hz.iter().map(|&(a, b)| [a, b]).collect(),
            delta_f_range_hz: [c.delta_f_range_hz.0, c.delta_f_range_hz.1],
            snr_threshold_db: c.snr_threshold_db,
            ew_phase_filter_rad: c.ew_phase_filter_rad,
            ddf_phase_filter_rad: c.ddf_phase_filter_rad,
            rfi_margin_segments: c.rfi_margin_segments,
            rfi_segment_hz: c.rfi_segment_hz,
            log10_pulse_snr_like_threshold: c.log10_pulse_snr_like_threshold,
            log10_pair_snr_like_threshold: c.log10_pair_snr_like_threshold,
            baseline_azimuth_deg: c.baseline_azimuth_deg,
            wideband_hz: c.wideband_hz,
            lst_mjd0: c.lst_reference.mjd0,
            lst0_hr: c.lst_reference.lst0_hr,
        }
    }
}

impl Default for InstrumentSection {
    fn default() -> Self {
        Self::from(&InstrumentConfig::default())
    }
}

impl From<&InstrumentSection> for InstrumentConfig {
    fn from(s: &InstrumentSection) -> Self {
        Self {
            baseline_wavelengths: s.baseline_wavelengths,
            ref_frequency_hz: s.ref_frequency_hz,
            dec_deg: s.dec_deg,
            element_fwhm_deg: s.element_fwhm_deg,
            tau_inst_s: s.tau_inst_s,
            ra_bins_per_day: s.ra_bins_per_day,
            fft_bin_hz: s.fft_bin_hz,
            integration_s: s.integration_s,
            trigger_period_s: s.trigger_period_s,
            windows_per_trigger: s.windows_per_trigger,
            rf_ranges_hz: s.rf_ranges_hz.iter().map(|r| (r[0], r[1])).collect(),
            delta_f_range_hz: (s.delta_f_range_hz[0], s.delta_f_range_hz[1]),
            snr_threshold_db: s.snr_threshold_db,
            ew_phase_filter_rad: s.ew_phase_filter_rad,
            ddf_phase_filter_rad: s.ddf_phase_filter_rad,
            rfi_margin_segments: s.rfi_margin_segments,
            rfi_segment_hz: s.rfi_segment_hz,
            log10_pulse_snr_like_threshold: s.log10_pulse_snr_like_threshold,
            log10_pair_snr_like_threshold: s.log10_pair_snr_like_threshold,
            baseline_azimuth_deg: s.baseline_azimuth_deg,
            wideband_hz: s.wideband_hz,
            lst_reference: LstReference {
                mjd0: s.lst_mjd0,
                lst0_hr: s.lst0_hr,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub doi_min_count: u32,
    pub doi_median_d_min: f64,
    pub doi_low_d_fraction_max: f64,
    /// Family-wise null false-alarm target; 0 keeps `doi_min_count` fixed.
    pub doi_family_false_alarm: f64,
    pub doi_merge_adjacent: bool,
    pub doi_cluster_correction: bool,
    pub rfi_look_forward: bool,
    /// Concentration threshold; 0 derives it from `rfi_tag_probability`.
    pub rfi_threshold: u32,
    pub rfi_tag_probability: f64,
    pub sun_excision: bool,
    pub sun_ra_halfwidth_hr: f64,
    pub sun_mjd_min: f64,
    /// Delimited `mjd ra_hr dec_deg` rows; the scenario's Sun table is used when empty.
    pub sun_ephemeris: String,
    pub visibility_threshold_db_rel: f64,
    pub modified_ew_window_rad: [f64; 2],
    pub modified_ddf_window_rad: [f64; 2],
    pub tau_override_s: f64,
    pub phase_noise_seeds: Vec<u64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let d = DoiParams::default();
        Self {
            doi_min_count: d.m_min,
            doi_median_d_min: d.median_d_min,
            doi_low_d_fraction_max: d.low_d_fraction_max,
            doi_family_false_alarm: d.family_false_alarm.unwrap_or(0.0),
            doi_merge_adjacent: d.merge_adjacent,
            doi_cluster_correction: d.cluster_correction,
            rfi_look_forward: true,
            rfi_threshold: 0,
            rfi_tag_probability: rfi::DEFAULT_TAG_PROBABILITY,
            sun_excision: true,
            sun_ra_halfwidth_hr: 1.0,
            sun_mjd_min: 60_540.0,
            sun_ephemeris: String::new(),
            visibility_threshold_db_rel: 144.0,
            modified_ew_window_rad: [0.0, PI],
            modified_ddf_window_rad: [0.80, PI],
            tau_override_s: 0.0,
            phase_noise_seeds: vec![1, 2, 3, 4],
        }
    }
}

impl AnalysisSection {
    pub fn doi_params(&self, alias: u32) -> DoiParams {
        DoiParams {
            m_min: self.doi_min_count,
            median_d_min: self.doi_median_d_min,
            low_d_fraction_max: self.doi_low_d_fraction_max,
            family_false_alarm: (self.doi_family_false_alarm > 0.0).then_some(self.doi_family_false_alarm),
            merge_adjacent: self.doi_merge_adjacent,
            alias,
            cluster_correction: self.doi_cluster_correction,
        }
    }

    pub fn modified_filter(&self) -> PhaseFilter {
        PhaseFilter {
            ew: (self.modified_ew_window_rad[0], self.modified_ew_window_rad[1]),
            ddf: (self.modified_ddf_window_rad[0], self.modified_ddf_window_rad[1]),
        }
    }

    pub fn rfi_threshold_for(&self, config: &InstrumentConfig) -> u32 {
        if self.rfi_threshold > 0 {
            self.rfi_threshold
        } else {
            rfi::default_threshold(config, rfi::DEFAULT_WINDOW_HOURS, self.rfi_tag_probability)
        }
    }

    fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        if !(0.0..1.0).contains(&self.doi_family_false_alarm) {
            return Err(("doi_family_false_alarm", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.doi_low_d_fraction_max) {
            return Err(("doi_low_d_fraction_max", "must lie in [0, 1]"));
        }
        if !(self.rfi_tag_probability > 0.0 && self.rfi_tag_probability < 1.0) {
            return Err(("rfi_tag_probability", "must lie in (0, 1)"));
        }
        if !(self.sun_ra_halfwidth_hr > 0.0) {
            return Err(("sun_ra_halfwidth_hr", "must be positive"));
        }
        for (w, key) in [
            (self.modified_ew_window_rad, "modified_ew_window_rad"),
            (self.modified_ddf_window_rad, "modified_ddf_window_rad"),
        ] {
            if !(w[0] >= 0.0 && w[0] <= w[1] && w[1] <= PI + 1e-12) {
                return Err((key, "needs 0 <= low <= high <= pi"));
            }
        }
        if self.phase_noise_seeds.contains(&0) {
            return Err(("phase_noise_seeds", "seeds start at 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub instrument: InstrumentSection,
    pub analysis: AnalysisSection,
}

/// Validated run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub instrument: InstrumentConfig,
    pub analysis: AnalysisSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            instrument: InstrumentConfig::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(file: &ConfigFile, path: &Path) -> Result<Self, SettingsError> {
        let instrument = InstrumentConfig::from(&file.instrument);
        instrument.validate().map_err(|e| SettingsError::Invalid {
            path: path.to_path_buf(),
            key: format!("instrument.{}", e.key),
            reason: e.reason.to_string(),
        })?;
        file.analysis.validate().map_err(|(key, reason)| SettingsError::Invalid {
            path: path.to_path_buf(),
            key: format!("analysis.{key}"),
            reason: reason.to_string(),
        })?;
        Ok(Self {
            instrument,
            analysis: file.analysis.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let file: ConfigFile = parse(&read(path)?, path)?;
        Self::from_file(&file, path)
    }

    pub fn parse_str(text: &str, path: &Path) -> Result<Self, SettingsError> {
        let file: ConfigFile = parse(text, path)?;
        Self::from_file(&file, path)
    }

    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            instrument: InstrumentSection::from(&self.instrument),
            analysis: self.analysis.clone(),
        };
        toml::to_string(&file).expect("config serializes")
    }

    /// The Sun excision region, if enabled and an ephemeris is available.
    pub fn sun_region(&self, scenario_sun: Option<&RaTable>, base: &Path) -> Result<Option<ExcisionRegion>, SettingsError> {
        if !self.analysis.sun_excision {
            return Ok(None);
        }
        let table = if self.analysis.sun_ephemeris.is_empty() {
            scenario_sun.cloned()
        } else {
            Some(load_ephemeris(&base.join(&self.analysis.sun_ephemeris))?)
        };
        Ok(table.map(|t| ExcisionRegion {
            kind: ExcisionKind::Sun,
            ra_center_hr_by_mjd: t,
            ra_halfwidth_hr: self.analysis.sun_ra_halfwidth_hr,
            mjd_min: self.analysis.sun_mjd_min,
        }))
    }
}

/// Evenly spaced tone pairs: `count` lower tones from `f1_start_hz` in
/// steps of `f1_step_hz`, each paired with a tone `delta_f_hz` above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneGrid {
    pub f1_start_hz: f64,
    pub f1_step_hz: f64,
    pub count: u32,
    pub delta_f_hz: f64,
}

impl ToneGrid {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        (0..self.count)
            .map(|i| {
                let f1 = self.f1_start_hz + i as f64 * self.f1_step_hz;
                (f1, f1 + self.delta_f_hz)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub ra_hr: f64,
    pub dec_deg: Option<f64>,
    #[serde(default)]
    pub tone_pairs: Vec<[f64; 2]>,
    pub tone_grid: Option<ToneGrid>,
    pub snr_db_at_transit: f64,
    pub emission_probability_per_window: f64,
    #[serde(default = "yes")]
    pub phase_coherent: bool,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfiSection {
    pub segment_center_hz: f64,
    pub bandwidth_hz: f64,
    pub burst_rate_per_hour: f64,
    pub burst_snr_db: f64,
    #[serde(default = "one")]
    pub coupling_east: f64,
    #[serde(default = "one")]
    pub coupling_west: f64,
    #[serde(default = "yes")]
    pub correlated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SunSection {
    /// `[mjd, ra_hr]` rows; alternatively `ephemeris_file`.
    #[serde(default)]
    pub ephemeris: Vec<[f64; 2]>,
    #[serde(default)]
    pub ephemeris_file: String,
    pub broadband_power_rise_db: f64,
    pub sidelobe_extent_hr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterializeMode {
    #[default]
    Exceedance,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub mjd_ranges: Vec<[f64; 2]>,
    #[serde(default = "one")]
    pub noise_power: f64,
    #[serde(default)]
    pub materialize: MaterializeMode,
    #[serde(default = "default_materialize_db")]
    pub materialize_threshold_db: f64,
    #[serde(default, rename = "source")]
    pub sources: Vec<SourceSection>,
    #[serde(default, rename = "rfi")]
    pub rfi: Vec<RfiSection>,
    pub sun: Option<SunSection>,
}

fn default_materialize_db() -> f64 {
    8.0
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        parse(&read(path)?, path)
    }

    pub fn parse_str(text: &str, path: &Path) -> Result<Self, SettingsError> {
        parse(text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Build and validate the simulator scenario. Relative ephemeris paths
    /// resolve against `base`.
    pub fn to_scenario(&self, config: &InstrumentConfig, path: &Path, base: &Path) -> Result<Scenario, SettingsError> {
        let invalid = |key: String, reason: &str| SettingsError::Invalid {
            path: path.to_path_buf(),
            key,
            reason: reason.to_string(),
        };
        let mut sources = Vec::with_capacity(self.sources.len());
        for (i, s) in self.sources.iter().enumerate() {
            let mut pairs: Vec<(f64, f64)> = s.tone_pairs.iter().map(|p| (p[0], p[1])).collect();
            if let Some(g) = &s.tone_grid {
                pairs.extend(g.pairs());
            }
            if pairs.is_empty() {
                return Err(invalid(format!("source[{i}].tone_pairs"), "needs tone_pairs or tone_grid"));
            }
            sources.push(SourceSpec {
                ra_hr: s.ra_hr,
                dec_deg: s.dec_deg.unwrap_or(config.dec_deg),
                tone_pairs: pairs,
                snr_db_at_transit: s.snr_db_at_transit,
                emission_probability_per_window: s.emission_probability_per_window,
                phase_coherent: s.phase_coherent,
            });
        }
        let rfi = self
            .rfi
            .iter()
            .map(|r| RfiSpec {
                segment_center_hz: r.segment_center_hz,
                bandwidth_hz: r.bandwidth_hz,
                burst_rate_per_hour: r.burst_rate_per_hour,
                burst_snr_db: r.burst_snr_db,
                element_coupling: PerElement::new(r.coupling_east, r.coupling_west),
                correlated: r.correlated,
            })
            .collect();
        let sun = match &self.sun {
            None => None,
            Some(s) => {
                let table = if !s.ephemeris_file.is_empty() {
                    load_ephemeris(&base.join(&s.ephemeris_file))?
                } else {
                    RaTable::new(s.ephemeris.iter().map(|r| (r[0], r[1])).collect())
                        .map_err(|e| invalid("sun.ephemeris".into(), &e.to_string()))?
                };
                Some(SunSpec {
                    ra_hr_by_mjd: table,
                    broadband_power_rise_db: s.broadband_power_rise_db,
                    sidelobe_extent_hr: s.sidelobe_extent_hr,
                })
            }
        };
        let scenario = Scenario {
            config: config.clone(),
            mjd_ranges: self.mjd_ranges.iter().map(|r| (r[0], r[1])).collect(),
            seed: self.seed,
            sources,
            rfi,
            sun,
            noise_power: self.noise_power,
            materialize: match self.materialize {
                MaterializeMode::Exceedance => Materialize::Exceedance {
                    threshold_db: self.materialize_threshold_db,
                },
                MaterializeMode::Dense => Materialize::Dense,
            },
        };
        scenario.validate().map_err(|source| SettingsError::Scenario {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(scenario)
    }
}

/// Read a delimited `mjd ra_hr [dec_deg]` table; `#` starts a comment.
pub fn load_ephemeris(path: &Path) -> Result<RaTable, SettingsError> {
    parse_ephemeris(&read(path)?, path)
}

pub fn parse_ephemeris(text: &str, path: &Path) -> Result<RaTable, SettingsError> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with("mjd") {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == '\t' || c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        let bad = |what: &str| SettingsError::Invalid {
            path: path.to_path_buf(),
            key: format!("line {}", n + 1),
            reason: what.to_string(),
        };
        if fields.len() < 2 {
            return Err(bad("expected mjd and ra_hr columns"));
        }
        let mjd: f64 = fields[0].parse().map_err(|_| bad("mjd is not a number"))?;
        let ra: f64 = fields[1].parse().map_err(|_| bad("ra_hr is not a number"))?;
        rows.push((mjd, ra));
    }
    RaTable::new(rows).map_err(|e| SettingsError::Invalid {
        path: path.to_path_buf(),
        key: "ephemeris".into(),
        reason: e.to_string(),
    })
}

/// Render an ephemeris as the delimited text `parse_ephemeris` reads.
pub fn format_ephemeris(table: &RaTable, dec_deg: f64) -> String {
    let mut s = String::from("mjd\tra_hr\tdec_deg\n");
    for (m, r) in table.rows() {
        s.push_str(&format!("{m}\t{r}\t{dec_deg}\n"));
    }
    s
}

impl fmt::Display for MaterializeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaterializeMode::Exceedance => "exceedance",
            MaterializeMode::Dense => "dense",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let rc = RunConfig::default();
        let back = RunConfig::parse_str(&rc.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(rc, back);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse_str("[instrument]\ndec_degs = 1.0\n", Path::new("c.toml")).unwrap_err();
        assert!(err.to_string().contains("dec_degs"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let err = RunConfig::parse_str("[instrument]\nintegration_s = 0.5\n", Path::new("c.toml")).unwrap_err();
        assert!(err.to_string().contains("instrument.integration_s"), "{err}");
    }

    #[test]
    fn ephemeris_text() {
        let t = parse_ephemeris("mjd\tra_hr\tdec_deg\n60500 6.0 23.0\n60600 12.5 0.0 # late\n", Path::new("e")).unwrap();
        assert_eq!(t.rows().len(), 2);
        assert!(parse_ephemeris("60500 x\n", Path::new("e")).is_err());
    }
}
