//! Config-driven grids of simulation cells.
//!
//! The config is line oriented. `#` starts a comment. Lines before the first
//! section header set defaults; `[series]` and `[cell]` headers open a new
//! block whose keys override the defaults:
//!
//! ```text
//! seed = 20240601
//! samples = 10000000
//! h = cos
//!
//! [series]          # one cell per m, with n = m unless n is listed too
//! law = rademacher
//! m = 20, 40, 80, 160, 320
//!
//! [cell]
//! m = 40
//! n = 10
//! law_x = gaussian
//! law_y = uniform_pm
//! ```
//!
//! Keys: `m`, `n` (lists in a series, single values in a cell), `r`, `law`
//! (sets both laws), `law_x`, `law_y`, `h` (comma list), `samples`, `seed`.
//! Each cell runs with seed `seed + m`, so cells of one series are independent.
//! Every `m = n` series gets a log-log rate-fit row per test function.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;
use serde_json::json;

use vgstein::harness::{csv_slope_row, rate_fit, rate_points, simulate_w, Law, SimConfig, SimResult, CSV_HEADER};
use vgstein::stein::TestFunction;

use crate::{usage, Ctx, OutputArgs, Report};

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    /// Sweep config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads per cell (capped by VGSTEIN_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Settings shared by defaults and blocks; `None` means "inherit".
#[derive(Debug, Clone, Default, PartialEq)]
struct Settings {
    m: Option<Vec<u64>>,
    n: Option<Vec<u64>>,
    r: Option<u32>,
    law_x: Option<String>,
    law_y: Option<String>,
    h: Option<Vec<String>>,
    samples: Option<u64>,
    seed: Option<u64>,
}

impl Settings {
    fn inherit(&self, base: &Settings) -> Settings {
        Settings {
            m: self.m.clone().or_else(|| base.m.clone()),
            n: self.n.clone().or_else(|| base.n.clone()),
            r: self.r.or(base.r),
            law_x: self.law_x.clone().or_else(|| base.law_x.clone()),
            law_y: self.law_y.clone().or_else(|| base.law_y.clone()),
            h: self.h.clone().or_else(|| base.h.clone()),
            samples: self.samples.or(base.samples),
            seed: self.seed.or(base.seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Series,
    Cell,
}

/// One fully resolved grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPlan {
    pub m: u64,
    pub n: u64,
    pub r: u32,
    pub law_x: String,
    pub law_y: String,
    pub h: Vec<String>,
    pub samples: u64,
    pub seed: u64,
    /// Index of the `[series]` block the cell came from.
    pub series: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub cells: Vec<CellPlan>,
    /// Number of `[series]` blocks.
    pub n_series: usize,
}

pub const DEFAULT_SAMPLES: u64 = 1_000_000;

fn parse_list<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> anyhow::Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| usage(format!("line {line}: bad value '{s}' for {key}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> anyhow::Result<T> {
    v.parse::<T>().map_err(|_| usage(format!("line {line}: bad value '{v}' for {key}")))
}

/// Parses a sweep config. Syntax errors are usage errors; domain checks on the
/// values happen per cell in [`run_sweep`].
pub fn parse_config(text: &str) -> anyhow::Result<SweepConfig> {
    let mut defaults = Settings::default();
    let mut blocks: Vec<(BlockKind, usize, Settings)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let kind = match name.trim() {
                "series" => BlockKind::Series,
                "cell" => BlockKind::Cell,
                other => return Err(usage(format!("line {line}: unknown section [{other}]"))),
            };
            blocks.push((kind, line, Settings::default()));
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| usage(format!("line {line}: expected 'key = value' or a [section]")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(usage(format!("line {line}: empty value for {key}")));
        }
        let target = match blocks.last_mut() {
            Some((_, _, s)) => s,
            None => &mut defaults,
        };
        match key {
            "m" => target.m = Some(parse_list(value, line, key)?),
            "n" => target.n = Some(parse_list(value, line, key)?),
            "r" => target.r = Some(parse_one(value, line, key)?),
            "law" => {
                target.law_x = Some(value.to_string());
                target.law_y = Some(value.to_string());
            }
            "law_x" => target.law_x = Some(value.to_string()),
            "law_y" => target.law_y = Some(value.to_string()),
            "h" => target.h = Some(parse_list(value, line, key)?),
            "samples" => target.samples = Some(parse_one(value, line, key)?),
            "seed" => target.seed = Some(parse_one(value, line, key)?),
            other => return Err(usage(format!("line {line}: unknown key '{other}'"))),
        }
    }
    if defaults.m.is_some() || defaults.n.is_some() {
        return Err(usage("m and n belong inside a [series] or [cell] block"));
    }

    let mut cells = Vec::new();
    let mut n_series = 0;
    for (kind, line, block) in blocks {
        let s = block.inherit(&defaults);
        let ms = s.m.clone().ok_or_else(|| usage(format!("block at line {line} has no m")))?;
        let ns = s.n.clone().unwrap_or_else(|| ms.clone());
        let series = match kind {
            BlockKind::Cell => {
                if ms.len() != 1 || ns.len() != 1 {
                    return Err(usage(format!("[cell] at line {line}: m and n must be single values")));
                }
                None
            }
            BlockKind::Series => {
                if ns.len() != ms.len() {
                    return Err(usage(format!("[series] at line {line}: n has {} values, m has {}", ns.len(), ms.len())));
                }
                n_series += 1;
                Some(n_series - 1)
            }
        };
        let seed = s.seed.unwrap_or(0);
        for (&m, &n) in ms.iter().zip(&ns) {
            cells.push(CellPlan {
                m,
                n,
                r: s.r.unwrap_or(1),
                law_x: s.law_x.clone().unwrap_or_else(|| "rademacher".into()),
                law_y: s.law_y.clone().unwrap_or_else(|| "rademacher".into()),
                h: s.h.clone().unwrap_or_else(|| vec!["cos".into()]),
                samples: s.samples.unwrap_or(DEFAULT_SAMPLES),
                seed: seed.wrapping_add(m),
                series,
            });
        }
    }
    Ok(SweepConfig { cells, n_series })
}

fn cell_config(c: &CellPlan, threads: Option<usize>) -> vgstein::Result<SimConfig> {
    let mut cfg = SimConfig::new(c.m, c.n, c.r, Law::parse(&c.law_x)?, Law::parse(&c.law_y)?, c.samples, c.seed);
    cfg.h_suite = c.h.iter().map(|n| TestFunction::by_name(n)).collect::<vgstein::Result<Vec<_>>>()?;
    cfg.threads = threads;
    cfg.validate()?;
    Ok(cfg)
}

/// CSV rows for a cell that could not be run: identifying columns, `NaN`
/// numbers and `pass = error`.
fn error_rows(c: &CellPlan) -> Vec<String> {
    let cols = CSV_HEADER.split(',').count();
    c.h.iter()
        .map(|h| {
            let mut row = vec![
                c.m.to_string(),
                c.n.to_string(),
                c.r.to_string(),
                c.law_x.clone(),
                c.law_y.clone(),
                h.clone(),
                c.samples.to_string(),
            ];
            row.extend(std::iter::repeat_n("NaN".to_string(), cols - row.len() - 1));
            row.push("error".into());
            row.join(",")
        })
        .collect()
}

pub fn run_sweep(a: &SweepArgs, ctx: &Ctx) -> anyhow::Result<Report> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    if a.threads == Some(0) {
        return Err(usage("--threads must be >= 1"));
    }
    let cfg = parse_config(&text)?;
    if cfg.cells.is_empty() {
        return Err(usage(format!("{}: the sweep grid is empty", a.config.display())));
    }
    let threads = ctx.threads(a.threads);

    // validate every cell before running any of them
    let prepared: Vec<vgstein::Result<SimConfig>> = cfg.cells.iter().map(|c| cell_config(c, threads)).collect();

    let mut rows = Vec::new();
    let mut cells_json = Vec::new();
    let mut ok: Vec<(usize, SimResult)> = Vec::new();
    let mut first_error: Option<anyhow::Error> = None;
    let mut n_ok = 0usize;
    for (plan, prep) in cfg.cells.iter().zip(prepared) {
        match prep.and_then(|c| simulate_w(&c)) {
            Ok(res) => {
                n_ok += 1;
                let mut csv = Vec::new();
                vgstein::harness::write_csv(&mut csv, std::slice::from_ref(&res), &[])?;
                let text = String::from_utf8(csv)?;
                rows.extend(text.lines().skip(1).map(str::to_string));
                cells_json.push(serde_json::to_value(&res)?);
                if let Some(s) = plan.series {
                    ok.push((s, res));
                }
            }
            Err(e) => {
                eprintln!("cell m={} n={} {}/{}: {e}", plan.m, plan.n, plan.law_x, plan.law_y);
                rows.extend(error_rows(plan));
                cells_json.push(json!({
                    "m": plan.m, "n": plan.n, "r": plan.r,
                    "law_x": plan.law_x, "law_y": plan.law_y,
                    "n_samples": plan.samples, "seed": plan.seed,
                    "error": e.to_string(),
                }));
                first_error.get_or_insert(e.into());
            }
        }
    }
    if n_ok == 0 {
        let e = first_error.take().expect("a failed cell records its error");
        return Err(e.context("every sweep cell failed"));
    }

    let mut fits = Vec::new();
    for s in 0..cfg.n_series {
        let members: Vec<&CellPlan> = cfg.cells.iter().filter(|c| c.series == Some(s)).collect();
        if members.iter().any(|c| c.m != c.n) {
            continue;
        }
        let results: Vec<SimResult> = ok.iter().filter(|(i, _)| *i == s).map(|(_, r)| r.clone()).collect();
        let first = members[0];
        for h in &first.h {
            let fit = rate_fit(&rate_points(&results, h));
            rows.push(csv_slope_row(first.r, &first.law_x, &first.law_y, h, &fit));
            fits.push(match &fit {
                Ok(f) => json!({ "series": s, "h": h, "law_x": first.law_x, "law_y": first.law_y, "fit": f }),
                Err(e) => json!({ "series": s, "h": h, "law_x": first.law_x, "law_y": first.law_y, "error": e.to_string() }),
            });
        }
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    Ok(Report::json(json!({ "cells": cells_json, "fits": fits }))?.with_csv(csv))
}
