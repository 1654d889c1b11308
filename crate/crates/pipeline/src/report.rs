//! Figure-data files.
//!
//! Each figure class is one delimited-text file under `figures/<variant>/`
//! built from the persisted second-level outputs of that variant.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use pulsepair_core::diagnostics;
use pulsepair_core::first_level::WindowVisibility;
use pulsepair_core::geometry::{self, InstrumentConfig};
use pulsepair_core::stats::{self, DoiReport, ExposureModel, HeapRecord};

use crate::formats::{self, ExposureRow, Row, TSV_VERSION};
use crate::pipeline::{self, StageContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Figure {
    /// Per-event d against bin centre RA, with the hypothesis offset.
    Fig2,
    /// Per-bin count of events with d > −2.0.
    Fig3,
    /// Per-bin max, median and final d.
    Fig4,
    /// Binomial event probability per bin.
    Fig20,
    /// d against heap rank for every DOI bin.
    Fig21,
    /// Histogram of per-event d.
    Fig22,
    /// Pulse-pair count per bin.
    Fig23,
    /// Alias panels: counts and max d within ±2 aliases of each DOI.
    Fig24,
    /// Windows whose visibility exceeds the threshold.
    Fig26,
}

pub const ALL_FIGURES: [Figure; 9] = [
    Figure::Fig2,
    Figure::Fig3,
    Figure::Fig4,
    Figure::Fig20,
    Figure::Fig21,
    Figure::Fig22,
    Figure::Fig23,
    Figure::Fig24,
    Figure::Fig26,
];

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig20 => "fig20",
            Figure::Fig21 => "fig21",
            Figure::Fig22 => "fig22",
            Figure::Fig23 => "fig23",
            Figure::Fig24 => "fig24",
            Figure::Fig26 => "fig26",
        }
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Figure::Fig2 => &["center_ra_hr", "bin", "rank", "cohens_d", "hypothesis_offset"],
            Figure::Fig3 => &["center_ra_hr", "bin", "count_d_gt_minus2"],
            Figure::Fig4 => &["center_ra_hr", "bin", "max_d", "median_d", "final_d"],
            Figure::Fig20 => &["center_ra_hr", "bin", "exposure_s", "p_beam", "p_hypothesis"],
            Figure::Fig21 => &["doi_bin", "bin", "rank", "abs_ddf_phase", "cumulative_count", "cohens_d"],
            Figure::Fig22 => &["d_lo", "d_hi", "count"],
            Figure::Fig23 => &["center_ra_hr", "bin", "count"],
            Figure::Fig24 => &["doi_bin", "offset", "bin", "center_ra_hr", "count", "max_d"],
            Figure::Fig26 => &["mjd", "beam_ra_hr", "frame", "window", "mag_db_rel"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown figure class `{0}` (expected one of fig2, fig3, fig4, fig20, fig21, fig22, fig23, fig24, fig26, all)")]
pub struct UnknownFigure(pub String);

impl FromStr for Figure {
    type Err = UnknownFigure;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_FIGURES
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| UnknownFigure(s.to_string()))
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parse `fig2,fig23` or `all`.
pub fn parse_figures(spec: &str) -> Result<Vec<Figure>, UnknownFigure> {
    let mut out = Vec::new();
    for s in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if s == "all" {
            out.extend(ALL_FIGURES);
        } else {
            out.push(s.parse()?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Everything a figure can draw on.
pub struct FigureInputs<'a> {
    pub config: &'a InstrumentConfig,
    pub heap: &'a [HeapRecord],
    pub beam_exposure: &'a ExposureModel,
    pub exposure: &'a ExposureModel,
    pub dois: &'a [DoiReport],
    pub visibilities: &'a [WindowVisibility],
    pub visibility_threshold_db_rel: f64,
    pub alias: u32,
}

pub const D_HIST_LO: f64 = -6.0;
pub const D_HIST_WIDTH: f64 = 0.25;
pub const D_HIST_BINS: usize = 80;

pub fn figure_rows(fig: Figure, x: &FigureInputs<'_>) -> Vec<Row> {
    let cfg = x.config;
    let n_bins = x.exposure.bins();
    let center = |k: u32| geometry::bin_center(k, cfg);
    let mut rows = Vec::new();
    let mut push = |f: &dyn Fn(&mut Row)| {
        let mut r = Row::default();
        f(&mut r);
        rows.push(r);
    };
    match fig {
        Figure::Fig2 => {
            for h in x.heap {
                push(&|r| {
                    r.put(center(h.bin)).put(h.bin).put(h.rank).put(h.cohens_d).put(h.offset);
                });
            }
        }
        Figure::Fig3 | Figure::Fig4 | Figure::Fig23 => {
            for b in stats::bin_summaries(x.heap, x.exposure, cfg) {
                push(&|r| {
                    r.put(b.center_ra_hr).put(b.bin);
                    match fig {
                        Figure::Fig3 => r.put(b.count_d_above_minus2),
                        Figure::Fig4 => r.put(b.max_d).put(b.median_d).put(b.final_d),
                        _ => r.put(b.count),
                    };
                });
            }
        }
        Figure::Fig20 => {
            for k in 0..n_bins {
                push(&|r| {
                    r.put(center(k as u32))
                        .put(k)
                        .put(x.beam_exposure.exposure_seconds[k])
                        .put(x.beam_exposure.p[k])
                        .put(x.exposure.p[k]);
                });
            }
        }
        Figure::Fig21 => {
            for d in x.dois {
                for h in x.heap.iter().filter(|h| d.member_bins.contains(&h.bin)) {
                    push(&|r| {
                        r.put(d.central_bin)
                            .put(h.bin)
                            .put(h.rank)
                            .put(h.abs_ddf_phase)
                            .put(h.cumulative_count)
                            .put(h.cohens_d);
                    });
                }
            }
        }
        Figure::Fig22 => {
            let mut counts = [0u64; D_HIST_BINS];
            for h in x.heap {
                let i = ((h.cohens_d - D_HIST_LO) / D_HIST_WIDTH).floor();
                let i = i.clamp(0.0, (D_HIST_BINS - 1) as f64) as usize;
                counts[i] += 1;
            }
            for (i, c) in counts.iter().enumerate() {
                let lo = D_HIST_LO + i as f64 * D_HIST_WIDTH;
                push(&|r| {
                    r.put(lo).put(lo + D_HIST_WIDTH).put(c);
                });
            }
        }
        Figure::Fig24 => {
            let counts = stats::bin_counts(x.heap, n_bins);
            let mut max_d = vec![f64::NAN; n_bins];
            for h in x.heap {
                let m = &mut max_d[h.bin as usize];
                *m = m.max(h.cohens_d);
            }
            let reach = 2 * x.alias as i64;
            for d in x.dois {
                for off in -reach..=reach {
                    let k = (d.central_bin as i64 + off).rem_euclid(n_bins as i64) as usize;
                    push(&|r| {
                        r.put(d.central_bin)
                            .put(off)
                            .put(k)
                            .put(center(k as u32))
                            .put(counts[k])
                            .put(max_d[k]);
                    });
                }
            }
        }
        Figure::Fig26 => {
            for v in diagnostics::high_visibility_scan(x.visibilities, x.visibility_threshold_db_rel) {
                push(&|r| {
                    r.put(v.mjd)
                        .put(v.beam_ra_hr)
                        .put(v.frame_index)
                        .put(v.window_index)
                        .put(v.magnitude_db_rel());
                });
            }
        }
    }
    rows
}

/// Trailing comment line for figures that carry a summary number.
pub fn figure_footer(fig: Figure, x: &FigureInputs<'_>) -> Option<String> {
    match fig {
        Figure::Fig23 => Some(format!(
            "# mean_count_per_bin\t{:.2}",
            stats::mean_count_per_bin(x.heap.len(), x.exposure.observed_bins())
        )),
        _ => None,
    }
}

pub fn write_figure(path: &Path, fig: Figure, rows: &[Row], footer: Option<&str>) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# pulsepair {} v{TSV_VERSION}", fig.name())?;
    writeln!(w, "{}", fig.columns().join("\t"))?;
    for r in rows {
        writeln!(w, "{}", r.as_str())?;
    }
    if let Some(f) = footer {
        writeln!(w, "{f}")?;
    }
    w.flush()?;
    Ok(())
}

/// `report`: figure files for one analysed variant. Returns the paths written.
pub fn report_stage(ctx: &StageContext, input: &Path, out: &Path, variant: &str, figures: &[Figure]) -> Result<Vec<PathBuf>> {
    let t0 = std::time::Instant::now();
    let cfg = &ctx.run.instrument;
    let vdir = pipeline::variant_dir(input, variant);
    let heap: Vec<HeapRecord> = formats::load(&vdir.join("heap.tsv"))
        .with_context(|| format!("variant `{variant}` has not been analysed in {}", input.display()))?;
    let rows: Vec<ExposureRow> = formats::load(&input.join(pipeline::EXPOSURE_FILE))?;
    let beam = formats::exposure_from_rows(&rows)?;
    let alias = geometry::config_alias_offset(cfg)?.bins;
    let exposure = beam.hypothesis_convolved(alias)?;
    let params = ctx.run.analysis.doi_params(alias);
    let dois = stats::detect_dois(&heap, &exposure, &params, cfg);
    let visibilities: Vec<WindowVisibility> = if figures.contains(&Figure::Fig26) {
        formats::load(&input.join(pipeline::VISIBILITY_FILE))?
    } else {
        Vec::new()
    };
    let inputs = FigureInputs {
        config: cfg,
        heap: &heap,
        beam_exposure: &beam,
        exposure: &exposure,
        dois: &dois,
        visibilities: &visibilities,
        visibility_threshold_db_rel: ctx.run.analysis.visibility_threshold_db_rel,
        alias,
    };
    let dir = out.join("figures").join(variant);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for &fig in figures {
        let path = dir.join(format!("{}.tsv", fig.name()));
        write_figure(&path, fig, &figure_rows(fig, &inputs), figure_footer(fig, &inputs).as_deref())?;
        written.push(path);
    }
    let scenario_text = fs::read_to_string(input.join(pipeline::SCENARIO_FILE)).ok();
    ctx.finish_stage(
        out,
        scenario_text.as_deref(),
        &format!("report.{variant}"),
        std::collections::BTreeMap::from([("figures".into(), written.len() as u64)]),
        t0,
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_names_parse() {
        assert_eq!(parse_figures("fig23, fig2").unwrap(), vec![Figure::Fig2, Figure::Fig23]);
        assert_eq!(parse_figures("all").unwrap().len(), 9);
        assert_eq!(parse_figures("fig5").unwrap_err(), UnknownFigure("fig5".into()));
    }
}
