//! Batch summaries and their CSV form.

use std::path::Path;

use super::config::ExperimentConfig;
use super::runner::TrialRecord;
use crate::env::{dsprites_score, EnvId};
use crate::error::{invalid, Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "env",
    "agent",
    "planning_iterations",
    "p_success",
    "p_failure",
    "p_solved",
    "mean_time_s",
    "std_time_s",
    "seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub env: String,
    pub agent: String,
    /// Planning iterations, POMCP simulations or exhaustive horizon.
    pub planning_iterations: usize,
    pub p_success: f64,
    pub p_failure: f64,
    /// dSprites only.
    pub p_solved: Option<f64>,
    pub mean_time_s: f64,
    /// Sample standard deviation.
    pub std_time_s: f64,
    pub seed: u64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(records: &[TrialRecord], cfg: &ExperimentConfig, sweep_value: usize) -> Result<Summary> {
    if records.is_empty() {
        return Err(invalid("cannot summarize an empty batch"));
    }
    let n = records.len() as f64;
    let successes = records.iter().filter(|r| r.success).count() as f64;
    let times: Vec<f64> = records.iter().map(|r| r.wall_seconds).collect();
    let (mean_time_s, std_time_s) = mean_std(&times);
    let p_solved = if cfg.env == EnvId::DSprites {
        let rewards: Vec<f64> = records.iter().map(|r| r.terminal_reward.unwrap_or(-1.0)).collect();
        Some(dsprites_score(&rewards)?)
    } else {
        None
    };
    Ok(Summary {
        env: cfg.env.to_string(),
        agent: cfg.agent.to_string(),
        planning_iterations: sweep_value,
        p_success: successes / n,
        p_failure: (n - successes) / n,
        p_solved,
        mean_time_s,
        std_time_s,
        seed: cfg.seed,
    })
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<W: std::io::Write>(summaries: &[Summary], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in summaries {
        w.write_record([
            s.env.clone(),
            s.agent.clone(),
            s.planning_iterations.to_string(),
            s.p_success.to_string(),
            s.p_failure.to_string(),
            s.p_solved.map(|p| p.to_string()).unwrap_or_default(),
            s.mean_time_s.to_string(),
            s.std_time_s.to_string(),
            s.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(summaries: &[Summary], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(summaries, file).map_err(|e| csv_error(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<Summary>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(invalid(format!("{}: unexpected CSV header", path.display())));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let field = |k: usize| -> Result<&str> {
            row.get(k)
                .ok_or_else(|| invalid(format!("{}: row {} is short", path.display(), i + 2)))
        };
        let num = |k: usize| -> Result<f64> {
            field(k)?
                .parse()
                .map_err(|_| invalid(format!("{}: row {}: bad `{}`", path.display(), i + 2, CSV_HEADER[k])))
        };
        let int = |k: usize| -> Result<u64> {
            field(k)?
                .parse()
                .map_err(|_| invalid(format!("{}: row {}: bad `{}`", path.display(), i + 2, CSV_HEADER[k])))
        };
        out.push(Summary {
            env: field(0)?.to_string(),
            agent: field(1)?.to_string(),
            planning_iterations: int(2)? as usize,
            p_success: num(3)?,
            p_failure: num(4)?,
            p_solved: if field(5)?.is_empty() { None } else { Some(num(5)?) },
            mean_time_s: num(6)?,
            std_time_s: num(7)?,
            seed: int(8)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::{preset, AgentKind};

    fn record(success: bool, t: f64) -> TrialRecord {
        TrialRecord {
            seed: 0,
            success,
            terminal_reward: None,
            steps: 1,
            wall_seconds: t,
            actions: vec![0],
            error: None,
        }
    }

    #[test]
    fn success_ratios_and_times() {
        let cfg = preset("maze_b_efe").unwrap().config();
        let all: Vec<_> = (0..100).map(|_| record(true, 0.5)).collect();
        let s = aggregate(&all, &cfg, 20).unwrap();
        assert_eq!((s.p_success, s.p_failure, s.std_time_s), (1.0, 0.0, 0.0));
        assert_eq!(s.mean_time_s, 0.5);
        let half: Vec<_> = (0..100).map(|i| record(i % 2 == 0, i as f64)).collect();
        assert_eq!(aggregate(&half, &cfg, 20).unwrap().p_success, 0.5);
        assert!(aggregate(&[], &cfg, 20).is_err());
        assert_eq!(mean_std(&[1.0, 2.0, 3.0, 4.0]).1, (5.0f64 / 3.0).sqrt());
    }

    #[test]
    fn dsprites_rows_carry_the_solved_fraction() {
        let cfg = preset("dsprites_g8").unwrap().config();
        let mut rs = vec![record(true, 1.0), record(false, 1.0)];
        rs[0].terminal_reward = Some(1.0);
        rs[1].terminal_reward = Some(-1.0);
        assert_eq!(aggregate(&rs, &cfg, 10).unwrap().p_solved, Some(0.5));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit_csv(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));

        let rows = vec![
            Summary {
                env: "maze_b".into(),
                agent: AgentKind::Btai.to_string(),
                planning_iterations: 20,
                p_success: 0.97,
                p_failure: 0.030000000000000027,
                p_solved: None,
                mean_time_s: 0.1 + 0.2,
                std_time_s: 1e-7,
                seed: 42,
            },
            Summary {
                env: "dsprites".into(),
                agent: "btai".into(),
                planning_iterations: 50,
                p_success: 0.5,
                p_failure: 0.5,
                p_solved: Some(0.8871234567890123),
                mean_time_s: 3.25,
                std_time_s: 0.0,
                seed: 0,
            },
        ];
        emit_csv(&rows[..1], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
        emit_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
    }

    #[test]
    fn unwritable_path_names_the_file() {
        let err = emit_csv(&[], Path::new("/nonexistent/dir/out.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"));
    }
}
