//! Run outputs: learning curves, diversity curves, selections and
//! checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CurveRow, DiversityRow, ExperimentReport, RoundOutcome, RoundRecord, RunConfig};
use crate::treebank::Corpus;
use crate::{Error, Result};

pub const CURVES_FILE: &str = "curves.csv";
pub const DIVERSITY_FILE: &str = "diversity.csv";
pub const SELECTIONS_FILE: &str = "selections.jsonl";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const CONFIG_FILE: &str = "config.toml";

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        String::new()
    }
}

pub fn write_curves<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "strategy", "use_dpp", "mean_las", "std_las", "mean_uas", "std_uas"])?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.strategy.to_string(),
            r.use_dpp.to_string(),
            fmt(r.mean_las),
            fmt(r.std_las),
            fmt(r.mean_uas),
            fmt(r.std_uas),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diversity<W: Write>(rows: &[DiversityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "strategy", "use_dpp", "kind", "mean_ibad", "std_ibad", "mean_ibmd", "std_ibmd"])?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.strategy.to_string(),
            r.use_dpp.to_string(),
            r.kind.to_string(),
            fmt(r.mean_ibad),
            fmt(r.std_ibad),
            fmt(r.mean_ibmd),
            fmt(r.std_ibmd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize, W: Write>(items: impl IntoIterator<Item = T>, mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RecordLine<'a> {
    repeat: usize,
    #[serde(flatten)]
    record: &'a RoundRecord,
}

/// Write every output file of an experiment into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), report.config.to_toml()?)?;
    write_curves(&report.curve(), BufWriter::new(File::create(dir.join(CURVES_FILE))?))?;
    write_diversity(&report.diversity(), BufWriter::new(File::create(dir.join(DIVERSITY_FILE))?))?;
    write_jsonl(report.selections(), BufWriter::new(File::create(dir.join(SELECTIONS_FILE))?))?;
    let records = report.runs.iter().flat_map(|t| t.records.iter().map(move |r| RecordLine { repeat: t.repeat, record: r }));
    write_jsonl(records, BufWriter::new(File::create(dir.join(RECORDS_FILE))?))?;
    Ok(())
}

/// Pool state and model weights after a round.
pub fn write_checkpoint(dir: &Path, train: &Corpus, outcome: &RoundOutcome) -> Result<(PathBuf, PathBuf)> {
    let ckpt = dir.join("checkpoints");
    fs::create_dir_all(&ckpt)?;
    let tag = format!("rep{}-round{:03}", outcome.selection.repeat, outcome.record.round);
    let pool = ckpt.join(format!("pool-{tag}.json"));
    let model = ckpt.join(format!("model-{tag}.json"));
    let mut w = BufWriter::new(File::create(&pool)?);
    serde_json::to_writer_pretty(&mut w, &outcome.state.to_checkpoint(train))?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(&model)?);
    outcome.model.write_json(&mut w)?;
    w.flush()?;
    Ok((pool, model))
}

/// One line of a combined curves table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveLine {
    pub round: usize,
    pub strategy: String,
    pub use_dpp: bool,
    pub mean_las: Option<f64>,
    pub std_las: Option<f64>,
    pub mean_uas: Option<f64>,
    pub std_uas: Option<f64>,
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveLine>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Combine the `curves.csv` files found in `dirs` (searched one level deep)
/// into one table sorted by arm and round.
pub fn combine_curves(dirs: &[PathBuf]) -> Result<Vec<CurveLine>> {
    let mut lines = Vec::new();
    for dir in dirs {
        let mut files = vec![dir.join(CURVES_FILE)];
        if dir.is_dir() {
            let mut subs: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path().join(CURVES_FILE))).collect();
            subs.sort();
            files.extend(subs);
        }
        for f in files.into_iter().filter(|f| f.is_file()) {
            lines.extend(read_curves(&f)?);
        }
    }
    if lines.is_empty() {
        return Err(Error::Config("no curves.csv found in the given directories".into()));
    }
    lines.sort_by(|a, b| (a.strategy.as_str(), a.use_dpp, a.round).cmp(&(b.strategy.as_str(), b.use_dpp, b.round)));
    lines.dedup();
    Ok(lines)
}

/// Mean LAS per round (rows) and arm (columns) as a Markdown table.
pub fn las_table(lines: &[CurveLine]) -> String {
    let mut arms: Vec<(String, bool)> = lines.iter().map(|l| (l.strategy.clone(), l.use_dpp)).collect();
    arms.sort();
    arms.dedup();
    let mut rounds: Vec<usize> = lines.iter().map(|l| l.round).collect();
    rounds.sort_unstable();
    rounds.dedup();
    let mut out = String::from("| round |");
    for (s, d) in &arms {
        out.push_str(&format!(" {s}{} |", if *d { "+dpp" } else { "" }));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(arms.len()));
    out.push('\n');
    for r in rounds {
        out.push_str(&format!("| {r} |"));
        for (s, d) in &arms {
            let cell = lines
                .iter()
                .find(|l| l.round == r && &l.strategy == s && l.use_dpp == *d)
                .and_then(|l| l.mean_las.map(|m| format!("{m:.2} ± {:.2}", l.std_las.unwrap_or(0.0))))
                .unwrap_or_default();
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }
    out
}

/// Config file names used by `sweep` for each arm.
pub fn arm_dir(root: &Path, config: &RunConfig) -> PathBuf {
    root.join(format!("{}-{}", config.strategy, if config.use_dpp { "dpp" } else { "nodpp" }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::Strategy;

    fn row(round: usize, las: f64) -> CurveRow {
        CurveRow { round, strategy: Strategy::Amp, use_dpp: true, mean_las: las, std_las: 0.0, mean_uas: las + 1.0, std_uas: 0.5 }
    }

    #[test]
    fn curves_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CURVES_FILE);
        write_curves(&[row(0, 10.0), row(1, 12.5)], File::create(&path).unwrap()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("round,strategy,use_dpp,mean_las,std_las,mean_uas,std_uas\n0,amp,true,10.0000"));
        let lines = combine_curves(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].mean_las, Some(12.5));
        let table = las_table(&lines);
        assert!(table.contains("amp+dpp") && table.contains("12.50 ± 0.00"));
    }
}
