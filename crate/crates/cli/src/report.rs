//! Plots and summary tables from run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::runner::{RunSummary, CURVE_HEADER};
use crate::svg::{Axis, Svg, PALETTE};
use crate::sweep::read_runs;
use crate::{HarnessError, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 600.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 350.0;

/// Mean/min/max of final normalized scores over the seeds of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryGroup {
    pub env: String,
    pub algorithm: String,
    pub mode: String,
    pub fraction: f64,
    pub n_seeds: usize,
    pub mean_final_score: f64,
    pub min_final_score: f64,
    pub max_final_score: f64,
    pub mean_best_score: f64,
    pub mean_final_return: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ReportOutcome {
    pub env_svgs: Vec<PathBuf>,
    pub curve_svgs: Vec<PathBuf>,
    pub summary_csv: PathBuf,
    pub summary_txt: PathBuf,
    pub groups: Vec<SummaryGroup>,
    pub skipped: Vec<(PathBuf, String)>,
}

#[derive(Clone, Debug)]
struct LoadedRun {
    summary: RunSummary,
    /// `(global step, normalized score)` at RL evaluation points.
    scores: Vec<(f64, f64)>,
}

/// Expand inputs: a directory holding `run.csv` is a run; any other
/// directory contributes its immediate subdirectories.
pub fn collect_run_dirs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.join("run.csv").exists() || !p.is_dir() {
            out.push(p.clone());
            continue;
        }
        let mut subs: Vec<PathBuf> = fs::read_dir(p)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subs.sort();
        out.extend(subs);
    }
    Ok(out)
}

fn parse_err(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn load_run(dir: &Path) -> Result<LoadedRun> {
    let run_csv = dir.join("run.csv");
    if !run_csv.exists() {
        return Err(parse_err(dir, "missing run.csv"));
    }
    let mut rows = read_runs(&run_csv)?;
    if rows.len() != 1 {
        return Err(parse_err(&run_csv, format!("expected one row, got {}", rows.len())));
    }
    let summary = rows.remove(0);
    let curve_path = dir.join("curve.csv");
    let mut r = csv::Reader::from_path(&curve_path)?;
    if r.headers()?.iter().ne(CURVE_HEADER.iter().copied()) {
        return Err(parse_err(&curve_path, "unexpected header"));
    }
    let mut scores = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let step: f64 = rec[0].parse().map_err(|_| parse_err(&curve_path, "bad step"))?;
        if &rec[1] == "rl" && !rec[6].is_empty() {
            let s: f64 = rec[6].parse().map_err(|_| parse_err(&curve_path, "bad score"))?;
            scores.push((step, s));
        }
    }
    Ok(LoadedRun { summary, scores })
}

fn curve_svg(run: &LoadedRun) -> String {
    let s = &run.summary;
    let max_step = (s.pretrain_steps + s.rl_steps) as f64;
    let (lo, hi) = run
        .scores
        .iter()
        .fold((0.0f64, 100.0f64), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    let x = Axis::new(0.0, max_step.max(1.0), LEFT, RIGHT, false);
    let y = Axis::new(lo, hi, BOTTOM, TOP, false);
    let mut svg = Svg::new(W, H);
    svg.text(LEFT, 24.0, &format!("{} learning curve", s.run), &[]);
    svg.line(LEFT, BOTTOM, RIGHT, BOTTOM, &[("stroke", "black".into())]);
    svg.line(LEFT, BOTTOM, LEFT, TOP, &[("stroke", "black".into())]);
    svg.text(RIGHT - 40.0, BOTTOM + 30.0, "step", &[]);
    svg.text(8.0, TOP - 10.0, "normalized score", &[]);
    if s.pretrain_steps > 0 {
        let bx = x.map(s.pretrain_steps as f64);
        svg.line(
            bx,
            TOP,
            bx,
            BOTTOM,
            &[
                ("class", "phase-boundary".into()),
                ("data-step", s.pretrain_steps.to_string()),
                ("stroke", "red".into()),
                ("stroke-dasharray", "4 3".into()),
            ],
        );
    }
    let pts: Vec<(f64, f64)> = run.scores.iter().map(|&(st, v)| (x.map(st), y.map(v))).collect();
    svg.polyline(&pts, &[("class", "score".into()), ("stroke", PALETTE[0].into())]);
    svg.finish()
}

fn env_svg(env: &str, groups: &[&SummaryGroup]) -> String {
    let fmin = groups.iter().map(|g| g.fraction).fold(f64::INFINITY, f64::min);
    let fmax = groups.iter().map(|g| g.fraction).fold(f64::NEG_INFINITY, f64::max);
    let lo = groups.iter().map(|g| g.min_final_score).fold(0.0, f64::min);
    let hi = groups.iter().map(|g| g.max_final_score).fold(100.0, f64::max);
    let x = Axis::new(fmin, fmax, LEFT + 20.0, RIGHT - 20.0, true);
    let y = Axis::new(lo, hi, BOTTOM, TOP, false);
    let mut svg = Svg::new(W, H);
    svg.text(LEFT, 24.0, &format!("{env}: final normalized score vs dataset fraction"), &[]);
    svg.line(LEFT, BOTTOM, RIGHT, BOTTOM, &[("stroke", "black".into())]);
    svg.line(LEFT, BOTTOM, LEFT, TOP, &[("stroke", "black".into())]);
    let mut modes: Vec<&str> = groups.iter().map(|g| g.mode.as_str()).collect();
    modes.sort();
    modes.dedup();
    for (k, mode) in modes.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()].to_string();
        let mut cells: Vec<&&SummaryGroup> = groups.iter().filter(|g| g.mode == *mode).collect();
        cells.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
        let pts: Vec<(f64, f64)> = cells.iter().map(|g| (x.map(g.fraction), y.map(g.mean_final_score))).collect();
        svg.polyline(
            &pts,
            &[("class", "mode".into()), ("data-mode", mode.to_string()), ("stroke", color.clone())],
        );
        for g in cells {
            let px = x.map(g.fraction);
            svg.line(
                px,
                y.map(g.min_final_score),
                px,
                y.map(g.max_final_score),
                &[
                    ("class", "whisker".into()),
                    ("data-mode", mode.to_string()),
                    ("data-fraction", g.fraction.to_string()),
                    ("data-min", g.min_final_score.to_string()),
                    ("data-max", g.max_final_score.to_string()),
                    ("data-mean", g.mean_final_score.to_string()),
                    ("stroke", color.clone()),
                ],
            );
            svg.circle(px, y.map(g.mean_final_score), 3.0, &[("fill", color.clone())]);
        }
        svg.text(RIGHT - 60.0, TOP + 16.0 * k as f64, mode, &[("fill", color)]);
    }
    let mut fractions: Vec<f64> = groups.iter().map(|g| g.fraction).collect();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    for f in fractions {
        svg.text(x.map(f) - 10.0, BOTTOM + 16.0, &f.to_string(), &[]);
    }
    svg.finish()
}

pub fn summarize(runs: &[RunSummary]) -> Vec<SummaryGroup> {
    let mut cells: BTreeMap<(String, String, String, u64), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.is_ok() && r.final_score.is_some()) {
        cells
            .entry((r.env.clone(), r.algorithm.clone(), r.mode.clone(), r.fraction.to_bits()))
            .or_default()
            .push(r);
    }
    let mut out: Vec<SummaryGroup> = cells
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            let finals: Vec<f64> = rs.iter().map(|r| r.final_score.unwrap()).collect();
            SummaryGroup {
                env: rs[0].env.clone(),
                algorithm: rs[0].algorithm.clone(),
                mode: rs[0].mode.clone(),
                fraction: rs[0].fraction,
                n_seeds: rs.len(),
                mean_final_score: finals.iter().sum::<f64>() / n,
                min_final_score: finals.iter().cloned().fold(f64::INFINITY, f64::min),
                max_final_score: finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                mean_best_score: rs.iter().filter_map(|r| r.best_score).sum::<f64>() / n,
                mean_final_return: rs.iter().filter_map(|r| r.final_return).sum::<f64>() / n,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.env, &a.algorithm, &a.mode)
            .cmp(&(&b.env, &b.algorithm, &b.mode))
            .then(a.fraction.total_cmp(&b.fraction))
    });
    out
}

const SUMMARY_HEADER: [&str; 10] = [
    "env",
    "algorithm",
    "mode",
    "fraction",
    "n_seeds",
    "mean_final_score",
    "min_final_score",
    "max_final_score",
    "mean_best_score",
    "mean_final_return",
];

fn summary_cells(g: &SummaryGroup) -> [String; 10] {
    [
        g.env.clone(),
        g.algorithm.clone(),
        g.mode.clone(),
        g.fraction.to_string(),
        g.n_seeds.to_string(),
        format!("{:.3}", g.mean_final_score),
        format!("{:.3}", g.min_final_score),
        format!("{:.3}", g.max_final_score),
        format!("{:.3}", g.mean_best_score),
        format!("{:.3}", g.mean_final_return),
    ]
}

fn aligned_table(groups: &[SummaryGroup]) -> String {
    let rows: Vec<Vec<String>> = std::iter::once(SUMMARY_HEADER.iter().map(|s| s.to_string()).collect())
        .chain(groups.iter().map(|g| summary_cells(g).to_vec()))
        .collect();
    let widths: Vec<usize> = (0..SUMMARY_HEADER.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| if c < 3 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

/// Write per-env fraction plots, per-run learning curves and the summary
/// table under `out`. Unreadable runs are listed in `skipped`.
pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<ReportOutcome> {
    let dirs = collect_run_dirs(inputs)?;
    let mut outcome = ReportOutcome::default();
    let mut runs = Vec::new();
    for d in dirs {
        match load_run(&d) {
            Ok(r) if r.summary.is_ok() => runs.push(r),
            Ok(r) => outcome.skipped.push((d, format!("run status {}", r.summary.status))),
            Err(e) => outcome.skipped.push((d, e.to_string())),
        }
    }
    fs::create_dir_all(out.join("curves"))?;
    for r in &runs {
        let path = out.join("curves").join(format!("{}.svg", r.summary.run));
        fs::write(&path, curve_svg(r))?;
        outcome.curve_svgs.push(path);
    }
    let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    outcome.groups = summarize(&summaries);
    let mut envs: Vec<&str> = outcome.groups.iter().map(|g| g.env.as_str()).collect();
    envs.sort();
    envs.dedup();
    for env in envs {
        let gs: Vec<&SummaryGroup> = outcome.groups.iter().filter(|g| g.env == env).collect();
        let path = out.join(format!("{env}_fractions.svg"));
        fs::write(&path, env_svg(env, &gs))?;
        outcome.env_svgs.push(path);
    }
    outcome.summary_csv = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&outcome.summary_csv)?;
    w.write_record(SUMMARY_HEADER)?;
    for g in &outcome.groups {
        w.write_record(summary_cells(g))?;
    }
    w.flush()?;
    outcome.summary_txt = out.join("summary.txt");
    fs::write(&outcome.summary_txt, aligned_table(&outcome.groups))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(mode: &str, fraction: f64, seed: u64, score: f64) -> RunSummary {
        RunSummary {
            run: format!("r{mode}{fraction}{seed}"),
            env: "pointmass".into(),
            algorithm: "td3bc".into(),
            mode: mode.into(),
            fraction,
            seed,
            final_score: Some(score),
            best_score: Some(score + 1.0),
            final_return: Some(-score),
            status: "ok".into(),
            ..Default::default()
        }
    }

    #[test]
    fn summary_groups_by_cell() {
        let runs = vec![
            run("on", 0.1, 0, 10.0),
            run("on", 0.1, 1, 30.0),
            run("off", 0.1, 0, 5.0),
            RunSummary { status: "failed: x".into(), ..run("off", 0.1, 1, 99.0) },
        ];
        let g = summarize(&runs);
        assert_eq!(g.len(), 2);
        let on = g.iter().find(|g| g.mode == "on").unwrap();
        assert_eq!((on.n_seeds, on.mean_final_score, on.min_final_score, on.max_final_score), (2, 20.0, 10.0, 30.0));
        assert_eq!(on.mean_best_score, 21.0);
        let off = g.iter().find(|g| g.mode == "off").unwrap();
        assert_eq!(off.n_seeds, 1);
    }

    #[test]
    fn table_is_aligned() {
        let g = summarize(&[run("on", 0.1, 0, 10.0), run("off", 1.0, 0, 5.5)]);
        let t = aligned_table(&g);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        let pos = |l: &str| l.find("pointmass").unwrap();
        assert_eq!(pos(lines[1]), pos(lines[2]));
    }
}
