//! Delimited-text records and the binary frame stream.
//!
//! Every text file starts with `# pulsepair <kind> v<version>` followed by a
//! tab-separated column row. Floats are written with `Display`, which is the
//! shortest string that parses back to the same bits, so files round-trip
//! exactly. Optional values are written as `none`.

use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pulsepair_core::first_level::{AssociatedMeasurements, PulseDetection, PulsePairCandidate, WindowVisibility};
use pulsepair_core::rfi::{MaskRow, SegmentCounts, SegmentTag};
use pulsepair_core::sim::{PerElement, SkyPointing, SpectralBin, TriggerFrame, WindowSpectra};
use pulsepair_core::stats::{BinSummary, Classification, DoiReport, ExposureModel, HeapRecord};
use pulsepair_core::Complex;
use thiserror::Error;

pub const TSV_VERSION: u32 = 1;
pub const FRAMES_MAGIC: &[u8; 8] = b"PPFRAMES";
pub const FRAMES_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: expected header `# pulsepair {expected} v{TSV_VERSION}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path}: column row does not match the {kind} schema")]
    Columns { path: PathBuf, kind: &'static str },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: not a pulsepair frame stream")]
    FramesMagic { path: PathBuf },
    #[error("{path}: frame stream version {found} is not supported")]
    FramesVersion { path: PathBuf, found: u32 },
    #[error("{path}: truncated frame stream")]
    FramesTruncated { path: PathBuf },
}

/// Field cursor for one text record.
pub struct Fields<'a> {
    items: std::str::Split<'a, char>,
    col: usize,
}

impl<'a> Fields<'a> {
    fn new(line: &'a str) -> Self {
        Self {
            items: line.split('\t'),
            col: 0,
        }
    }

    pub fn next<T: FromStr>(&mut self) -> Result<T, String> {
        self.col += 1;
        let raw = self.items.next().ok_or_else(|| format!("missing column {}", self.col))?;
        raw.parse().map_err(|_| format!("column {}: cannot parse `{raw}`", self.col))
    }

    pub fn opt<T: FromStr>(&mut self) -> Result<Option<T>, String> {
        self.col += 1;
        let raw = self.items.next().ok_or_else(|| format!("missing column {}", self.col))?;
        if raw == "none" {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|_| format!("column {}: cannot parse `{raw}`", self.col))
    }

    fn finish(mut self) -> Result<(), String> {
        match self.items.next() {
            None => Ok(()),
            Some(_) => Err(format!("more than {} columns", self.col)),
        }
    }
}

/// Builder for one text record.
#[derive(Default)]
pub struct Row(String);

impl Row {
    pub fn put(&mut self, v: impl Display) -> &mut Self {
        if !self.0.is_empty() {
            self.0.push('\t');
        }
        self.0.push_str(&v.to_string());
        self
    }

    pub fn opt(&mut self, v: Option<impl Display>) -> &mut Self {
        match v {
            Some(v) => self.put(v),
            None => self.put("none"),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub trait TsvRecord: Sized {
    const KIND: &'static str;
    const COLUMNS: &'static [&'static str];

    fn write_row(&self, row: &mut Row);

    fn read_row(_fields: &mut Fields<'_>) -> Result<Self, String> {
        Err(format!("{} files are write-only", Self::KIND))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_records<T: TsvRecord, W: Write>(mut out: W, records: &[T]) -> io::Result<()> {
    writeln!(out, "# pulsepair {} v{TSV_VERSION}", T::KIND)?;
    writeln!(out, "{}", T::COLUMNS.join("\t"))?;
    for r in records {
        let mut row = Row::default();
        r.write_row(&mut row);
        writeln!(out, "{}", row.0)?;
    }
    out.flush()
}

pub fn save<T: TsvRecord>(path: &Path, records: &[T]) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_records(BufWriter::new(file), records).map_err(io_err(path))
}

pub fn parse_records<T: TsvRecord, R: BufRead>(input: R, path: &Path) -> Result<Vec<T>, FormatError> {
    let mut lines = input.lines();
    let header = lines.next().transpose().map_err(io_err(path))?.unwrap_or_default();
    if header != format!("# pulsepair {} v{TSV_VERSION}", T::KIND) {
        return Err(FormatError::Header {
            path: path.to_path_buf(),
            expected: T::KIND,
            found: header,
        });
    }
    let columns = lines.next().transpose().map_err(io_err(path))?.unwrap_or_default();
    if columns != T::COLUMNS.join("\t") {
        return Err(FormatError::Columns {
            path: path.to_path_buf(),
            kind: T::KIND,
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let mut f = Fields::new(&line);
        let rec = T::read_row(&mut f).and_then(|r| f.finish().map(|_| r));
        out.push(rec.map_err(|message| FormatError::Record {
            path: path.to_path_buf(),
            line: i + 3,
            message,
        })?);
    }
    Ok(out)
}

pub fn load<T: TsvRecord>(path: &Path) -> Result<Vec<T>, FormatError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_records(BufReader::new(file), path)
}

impl TsvRecord for PulseDetection {
    const KIND: &'static str = "pulses";
    const COLUMNS: &'static [&'static str] = &[
        "mjd", "window", "freq_hz", "bin", "snr_db_e", "snr_db_w", "phi_e", "phi_w", "segment",
    ];

    fn write_row(&self, r: &mut Row) {
        r.put(self.mjd)
            .put(self.window_index)
            .put(self.freq_hz)
            .put(self.bin_index)
            .put(self.snr_db_east)
            .put(self.snr_db_west)
            .put(self.phase_east_rad)
            .put(self.phase_west_rad)
            .put(self.segment_index);
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        Ok(Self {
            mjd: f.next()?,
            window_index: f.next()?,
            freq_hz: f.next()?,
            bin_index: f.next()?,
            snr_db_east: f.next()?,
            snr_db_west: f.next()?,
            phase_east_rad: f.next()?,
            phase_west_rad: f.next()?,
            segment_index: f.next()?,
        })
    }
}

impl TsvRecord for PulsePairCandidate {
    const KIND: &'static str = "candidates";
    const COLUMNS: &'static [&'static str] = &[
        "id", "frame", "beam_ra_hr", "mjd", "window", "f1_hz", "f2_hz", "delta_f_hz", "bin1", "bin2", "snr_e1", "snr_w1",
        "snr_e2", "snr_w2", "phi_e1", "phi_w1", "phi_e2", "phi_w2", "seg1", "seg2", "power954_e", "power954_w",
        "power_wide_e", "power_wide_w", "vis_db_rel", "log10_df_like", "log10_snr_like1", "log10_snr_like2",
        "log10_snr_like_pair", "rfi_margin_segments", "rf_low_hz",
    ];

    fn write_row(&self, r: &mut Row) {
        let [a, b] = &self.pulses;
        let s = &self.assoc;
        r.put(self.id)
            .put(self.frame_index)
            .put(self.beam_ra_hr)
            .put(self.mjd())
            .put(self.window_index())
            .put(a.freq_hz)
            .put(b.freq_hz)
            .put(self.delta_f_hz)
            .put(a.bin_index)
            .put(b.bin_index)
            .put(a.snr_db_east)
            .put(a.snr_db_west)
            .put(b.snr_db_east)
            .put(b.snr_db_west)
            .put(a.phase_east_rad)
            .put(a.phase_west_rad)
            .put(b.phase_east_rad)
            .put(b.phase_west_rad)
            .put(a.segment_index)
            .put(b.segment_index)
            .put(s.east_power_954)
            .put(s.west_power_954)
            .put(s.east_power_wide)
            .put(s.west_power_wide)
            .put(s.visibility_mag_db_rel)
            .put(s.log10_df_likelihood)
            .put(s.log10_snr_likelihood_pulse[0])
            .put(s.log10_snr_likelihood_pulse[1])
            .put(s.log10_snr_likelihood_pair)
            .opt(s.rfi_spectral_margin_segments)
            .put(s.rf_low_freq_hz);
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        let id = f.next()?;
        let frame_index = f.next()?;
        let beam_ra_hr = f.next()?;
        let mjd: f64 = f.next()?;
        let window_index: u32 = f.next()?;
        let freq: [f64; 2] = [f.next()?, f.next()?];
        let delta_f_hz = f.next()?;
        let bins: [u64; 2] = [f.next()?, f.next()?];
        let snr: [f64; 4] = [f.next()?, f.next()?, f.next()?, f.next()?];
        let phi: [f64; 4] = [f.next()?, f.next()?, f.next()?, f.next()?];
        let seg: [u64; 2] = [f.next()?, f.next()?];
        let pulse = |i: usize| PulseDetection {
            mjd,
            window_index,
            freq_hz: freq[i],
            bin_index: bins[i],
            snr_db_east: snr[2 * i],
            snr_db_west: snr[2 * i + 1],
            phase_east_rad: phi[2 * i],
            phase_west_rad: phi[2 * i + 1],
            segment_index: seg[i],
        };
        let pulses = [pulse(0), pulse(1)];
        let assoc = AssociatedMeasurements {
            east_power_954: f.next()?,
            west_power_954: f.next()?,
            east_power_wide: f.next()?,
            west_power_wide: f.next()?,
            visibility_mag_db_rel: f.next()?,
            log10_df_likelihood: f.next()?,
            log10_snr_likelihood_pulse: [f.next()?, f.next()?],
            log10_snr_likelihood_pair: f.next()?,
            rfi_spectral_margin_segments: f.opt()?,
            rf_low_freq_hz: f.next()?,
            mjd,
        };
        Ok(Self {
            id,
            frame_index,
            beam_ra_hr,
            pulses,
            delta_f_hz,
            assoc,
        })
    }
}

impl TsvRecord for WindowVisibility {
    const KIND: &'static str = "visibility";
    const COLUMNS: &'static [&'static str] = &["frame", "window", "mjd", "beam_ra_hr", "re", "im", "mag_db_rel"];

    fn write_row(&self, r: &mut Row) {
        r.put(self.frame_index)
            .put(self.window_index)
            .put(self.mjd)
            .put(self.beam_ra_hr)
            .put(self.visibility.re)
            .put(self.visibility.im)
            .put(self.magnitude_db_rel());
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        let v = Self {
            frame_index: f.next()?,
            window_index: f.next()?,
            mjd: f.next()?,
            beam_ra_hr: f.next()?,
            visibility: Complex::new(f.next()?, f.next()?),
        };
        let _mag: f64 = f.next()?;
        Ok(v)
    }
}

impl TsvRecord for SkyPointing {
    const KIND: &'static str = "pointings";
    const COLUMNS: &'static [&'static str] = &["frame", "mjd", "beam_ra_hr", "dec_deg"];

    fn write_row(&self, r: &mut Row) {
        r.put(self.index).put(self.mjd).put(self.beam_ra_hr).put(self.dec_deg);
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        Ok(Self {
            index: f.next()?,
            mjd: f.next()?,
            beam_ra_hr: f.next()?,
            dec_deg: f.next()?,
        })
    }
}

/// One `(window, segment)` tally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentCountRow {
    pub window_id: i64,
    pub segment: u64,
    pub count: u32,
}

pub fn segment_count_rows(counts: &SegmentCounts) -> Vec<SegmentCountRow> {
    counts
        .counts
        .iter()
        .map(|(&(window_id, segment), &count)| SegmentCountRow {
            window_id,
            segment,
            count,
        })
        .collect()
}

impl TsvRecord for SegmentCountRow {
    const KIND: &'static str = "segment_counts";
    const COLUMNS: &'static [&'static str] = &["window_id", "segment", "count"];

    fn write_row(&self, r: &mut Row) {
        r.put(self.window_id).put(self.segment).put(self.count);
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        Ok(Self {
            window_id: f.next()?,
            segment: f.next()?,
            count: f.next()?,
        })
    }
}

impl TsvRecord for SegmentTag {
    const KIND: &'static str = "rfi_tags";
    const COLUMNS: &'static [&'static str] = &["segment", "valid_from_mjd", "valid_to_mjd", "trigger_count"];

    fn write_row(&self, r: &mut Row) {
        r.put(self.segment_index)
            .put(self.window_start_mjd)
            .put(self.window_end_mjd)
            .put(self.trigger_count);
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        Ok(Self {
            segment_index: f.next()?,
            window_start_mjd: f.next()?,
            window_end_mjd: f.next()?,
            trigger_count: f.next()?,
        })
    }
}

impl TsvRecord for MaskRow {
    const KIND: &'static str = "sun_mask";
    const COLUMNS: &'static [&'static str] = &[
        "mjd_start", "mjd_end", "ra_lo_start", "ra_hi_start", "ra_lo_end", "ra_hi_end",
    ];

    fn write_row(&self, r: &mut Row) {
        r.put(self.mjd_start)
            .put(self.mjd_end)
            .put(self.ra_lo_start)
            .put(self.ra_hi_start)
            .put(self.ra_lo_end)
            .put(self.ra_hi_end);
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        Ok(Self {
            mjd_start: f.next()?,
            mjd_end: f.next()?,
            ra_lo_start: f.next()?,
            ra_hi_start: f.next()?,
            ra_lo_end: f.next()?,
            ra_hi_end: f.next()?,
        })
    }
}

/// Exposure and event probability of one RA bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureRow {
    pub bin: u32,
    pub center_ra_hr: f64,
    pub exposure_s: f64,
    pub p: f64,
}

pub fn exposure_rows(model: &ExposureModel, ra_bin_hr: f64) -> Vec<ExposureRow> {
    model
        .exposure_seconds
        .iter()
        .zip(&model.p)
        .enumerate()
        .map(|(k, (&e, &p))| ExposureRow {
            bin: k as u32,
            center_ra_hr: (k as f64 + 0.5) * ra_bin_hr,
            exposure_s: e,
            p,
        })
        .collect()
}

pub fn exposure_from_rows(rows: &[ExposureRow]) -> Result<ExposureModel, pulsepair_core::stats::StatsError> {
    ExposureModel::from_exposure(rows.iter().map(|r| r.exposure_s).collect())
}

impl TsvRecord for ExposureRow {
    const KIND: &'static str = "exposure";
    const COLUMNS: &'static [&'static str] = &["bin", "center_ra_hr", "exposure_s", "p"];

    fn write_row(&self, r: &mut Row) {
        r.put(self.bin).put(self.center_ra_hr).put(self.exposure_s).put(self.p);
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        Ok(Self {
            bin: f.next()?,
            center_ra_hr: f.next()?,
            exposure_s: f.next()?,
            p: f.next()?,
        })
    }
}

impl TsvRecord for HeapRecord {
    const KIND: &'static str = "heap";
    const COLUMNS: &'static [&'static str] = &[
        "rank", "abs_ddf_phase", "bin", "offset", "cumulative_count", "cohens_d", "candidate_id", "mjd", "f1_hz",
    ];

    fn write_row(&self, r: &mut Row) {
        r.put(self.rank)
            .put(self.abs_ddf_phase)
            .put(self.bin)
            .put(self.offset)
            .put(self.cumulative_count)
            .put(self.cohens_d)
            .put(self.candidate_id)
            .put(self.mjd)
            .put(self.f1_hz);
    }

    fn read_row(f: &mut Fields<'_>) -> Result<Self, String> {
        Ok(Self {
            rank: f.next()?,
            abs_ddf_phase: f.next()?,
            bin: f.next()?,
            offset: f.next()?,
            cumulative_count: f.next()?,
            cohens_d: f.next()?,
            candidate_id: f.next()?,
            mjd: f.next()?,
            f1_hz: f.next()?,
        })
    }
}

impl TsvRecord for BinSummary {
    const KIND: &'static str = "bins";
    const COLUMNS: &'static [&'static str] = &[
        "bin", "center_ra_hr", "count", "max_d", "median_d", "count_d_gt_minus2", "final_d", "p",
    ];

    fn write_row(&self, r: &mut Row) {
        r.put(self.bin)
            .put(self.center_ra_hr)
            .put(self.count)
            .put(self.max_d)
            .put(self.median_d)
            .put(self.count_d_above_minus2)
            .put(self.final_d)
            .put(self.p);
    }
}

fn class_name(c: Option<Classification>) -> &'static str {
    match c {
        None => "unclassified",
        Some(Classification::PhaseCoherent) => "phase_coherent",
        Some(Classification::RfiLike) => "rfi_like",
    }
}

fn join_bins(b: &[u32]) -> String {
    b.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl TsvRecord for DoiReport {
    const KIND: &'static str = "dois";
    const COLUMNS: &'static [&'static str] = &[
        "bin", "center_ra_hr", "count", "count_km1", "count_kp1", "members", "alias_count_minus", "alias_count_plus",
        "alias_max_d_minus", "alias_max_d_plus", "median_d", "max_d", "frac_d_gt_3", "frac_d_lt_0", "min_count",
        "dispersion",
        "alias_of", "classification",
    ];

    fn write_row(&self, r: &mut Row) {
        r.put(self.central_bin)
            .put(self.center_ra_hr)
            .put(self.total_count)
            .put(self.adjacent_counts[0])
            .put(self.adjacent_counts[1])
            .put(join_bins(&self.member_bins))
            .put(self.alias_counts[0])
            .put(self.alias_counts[1])
            .put(self.alias_max_d[0])
            .put(self.alias_max_d[1])
            .put(self.median_d)
            .put(self.max_d)
            .put(self.fraction_d_above_3)
            .put(self.fraction_d_below_0)
            .put(self.min_count_required)
            .put(self.dispersion)
            .opt(self.alias_of)
            .put(class_name(self.classification));
    }
}

// Binary frame stream: magic, u32 version, then frames back to back until
// EOF. All numbers little-endian.

struct Enc<W: Write>(W);

impl<W: Write> Enc<W> {
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn c(&mut self, v: Complex) -> io::Result<()> {
        self.f64(v.re)?;
        self.f64(v.im)
    }
    fn pe(&mut self, v: PerElement<f64>) -> io::Result<()> {
        self.f64(v.east)?;
        self.f64(v.west)
    }
}

pub struct FrameWriter<W: Write> {
    enc: Enc<W>,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        out.write_all(FRAMES_MAGIC)?;
        out.write_all(&FRAMES_VERSION.to_le_bytes())?;
        Ok(Self { enc: Enc(out) })
    }

    pub fn write(&mut self, f: &TriggerFrame) -> io::Result<()> {
        let e = &mut self.enc;
        e.u64(f.index)?;
        e.f64(f.mjd)?;
        e.f64(f.beam_ra_hr)?;
        e.u32(f.windows.len() as u32)?;
        for w in &f.windows {
            e.u32(w.window_index)?;
            e.u64(w.bins.len() as u64)?;
            for b in &w.bins {
                e.u64(b.bin)?;
                e.c(b.east)?;
                e.c(b.west)?;
            }
            match w.floor {
                Some(fl) => {
                    e.u8(1)?;
                    e.pe(fl)?;
                }
                None => e.u8(0)?,
            }
            e.u64(w.segment_power.len() as u64)?;
            for &(s, p) in &w.segment_power {
                e.u64(s)?;
                e.pe(p)?;
            }
            e.pe(w.wideband_power)?;
            e.c(w.wideband_vis)?;
            e.f64(w.wideband_tau_s)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.enc.0.flush()?;
        Ok(self.enc.0)
    }
}

pub struct FrameReader<R: Read> {
    input: R,
    path: PathBuf,
}

impl<R: Read> FrameReader<R> {
    pub fn new(mut input: R, path: &Path) -> Result<Self, FormatError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| FormatError::FramesMagic {
            path: path.to_path_buf(),
        })?;
        if &magic != FRAMES_MAGIC {
            return Err(FormatError::FramesMagic {
                path: path.to_path_buf(),
            });
        }
        let mut v = [0u8; 4];
        input.read_exact(&mut v).map_err(|_| FormatError::FramesTruncated {
            path: path.to_path_buf(),
        })?;
        let found = u32::from_le_bytes(v);
        if found != FRAMES_VERSION {
            return Err(FormatError::FramesVersion {
                path: path.to_path_buf(),
                found,
            });
        }
        Ok(Self {
            input,
            path: path.to_path_buf(),
        })
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut b = [0u8; N];
        self.input.read_exact(&mut b).map_err(|_| FormatError::FramesTruncated {
            path: self.path.clone(),
        })?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn c(&mut self) -> Result<Complex, FormatError> {
        Ok(Complex::new(self.f64()?, self.f64()?))
    }
    fn pe(&mut self) -> Result<PerElement<f64>, FormatError> {
        Ok(PerElement::new(self.f64()?, self.f64()?))
    }

    fn frame(&mut self, first: [u8; 8]) -> Result<TriggerFrame, FormatError> {
        let index = u64::from_le_bytes(first);
        let mjd = self.f64()?;
        let beam_ra_hr = self.f64()?;
        let nw = self.u32()?;
        let mut windows = Vec::with_capacity(nw as usize);
        for _ in 0..nw {
            let window_index = self.u32()?;
            let nb = self.u64()?;
            let mut bins = Vec::with_capacity(nb.min(1 << 20) as usize);
            for _ in 0..nb {
                bins.push(SpectralBin {
                    bin: self.u64()?,
                    east: self.c()?,
                    west: self.c()?,
                });
            }
            let floor = match self.bytes::<1>()?[0] {
                0 => None,
                _ => Some(self.pe()?),
            };
            let ns = self.u64()?;
            let mut segment_power = Vec::with_capacity(ns.min(1 << 20) as usize);
            for _ in 0..ns {
                segment_power.push((self.u64()?, self.pe()?));
            }
            windows.push(WindowSpectra {
                window_index,
                bins,
                floor,
                segment_power,
                wideband_power: self.pe()?,
                wideband_vis: self.c()?,
                wideband_tau_s: self.f64()?,
            });
        }
        Ok(TriggerFrame {
            index,
            mjd,
            beam_ra_hr,
            windows,
        })
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<TriggerFrame, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut first = [0u8; 8];
        let mut got = 0;
        while got < 8 {
            match self.input.read(&mut first[got..]) {
                Ok(0) if got == 0 => return None,
                Ok(0) => {
                    return Some(Err(FormatError::FramesTruncated {
                        path: self.path.clone(),
                    }))
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(source) => {
                    return Some(Err(FormatError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            }
        }
        Some(self.frame(first))
    }
}

pub fn open_frames(path: &Path) -> Result<FrameReader<BufReader<File>>, FormatError> {
    let file = File::open(path).map_err(io_err(path))?;
    FrameReader::new(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_mismatch_is_reported() {
        let text = "# pulsepair heap v1\nframe\tmjd\tbeam_ra_hr\tdec_deg\n";
        let err = parse_records::<SkyPointing, _>(text.as_bytes(), Path::new("p.tsv")).unwrap_err();
        assert!(matches!(err, FormatError::Header { .. }), "{err}");
    }

    #[test]
    fn bad_field_names_line() {
        let text = "# pulsepair pointings v1\nframe\tmjd\tbeam_ra_hr\tdec_deg\n0\t60500\t1.0\t-4.3\n1\tx\t1.0\t-4.3\n";
        let err = parse_records::<SkyPointing, _>(text.as_bytes(), Path::new("p.tsv")).unwrap_err();
        assert!(err.to_string().contains("p.tsv:4"), "{err}");
    }

    #[test]
    fn floats_round_trip_exactly() {
        let p = SkyPointing {
            index: 3,
            mjd: 60_500.123_456_789_012_3,
            beam_ra_hr: 0.1 + 0.2,
            dec_deg: -4.3,
        };
        let mut buf = Vec::new();
        write_records(&mut buf, &[p]).unwrap();
        let back = parse_records::<SkyPointing, _>(&buf[..], Path::new("p")).unwrap();
        assert_eq!(back, vec![p]);
    }

    #[test]
    fn empty_frame_stream() {
        let w = FrameWriter::new(Vec::new()).unwrap();
        let bytes = w.finish().unwrap();
        let r = FrameReader::new(&bytes[..], Path::new("f")).unwrap();
        assert_eq!(r.count(), 0);
        assert!(FrameReader::new(&b"NOTFRAME"[..], Path::new("f")).is_err());
    }
}
