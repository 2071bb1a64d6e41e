//! Files written for a run:
//!
//! | file | content |
//! |------|---------|
//! | `config.toml` | the configuration text exactly as supplied |
//! | `episodes.csv` | one row per training episode |
//! | `metrics.csv` | one row per class plus an `all` row |
//! | `summary.json` | everything else, machine readable |
//!
//! Sweeps write `sweep-alpha.csv` or `sweep-episodes.csv`.

use std::fmt::Write as _;
use std::path::Path;

use super::run::{AlphaRow, EpisodeLog, EpisodeRow, RunSummary};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub const CONFIG_FILE: &str = "config.toml";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ALPHA_SWEEP_FILE: &str = "sweep-alpha.csv";
pub const EPISODE_SWEEP_FILE: &str = "sweep-episodes.csv";

pub const EPISODES_HEADER: &str = "class,episode,init_seed,reward,r1,r2,r3,best_confidence,cumulative_queries";
pub const METRICS_HEADER: &str = "class,attack_acc,knn,feat,density,coverage,queries";

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metrics_row(out: &mut String, label: &str, m: &MetricsReport) {
    writeln!(
        out,
        "{label},{},{},{},{},{},{}",
        m.attack_accuracy,
        opt(m.knn_dist),
        opt(m.feat_dist),
        opt(m.density),
        opt(m.coverage),
        m.queries_used
    )
    .expect("writing to a String");
}

pub fn episodes_csv(logs: &[EpisodeLog]) -> String {
    let mut out = String::with_capacity(64 * (logs.len() + 1));
    out.push_str(EPISODES_HEADER);
    out.push('\n');
    for l in logs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            l.class, l.episode, l.init_seed, l.reward, l.r1, l.r2, l.r3, l.best_confidence, l.cumulative_queries
        )
        .expect("writing to a String");
    }
    out
}

pub fn metrics_csv(summary: &RunSummary) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for c in &summary.classes {
        if let Some(m) = &c.metrics {
            metrics_row(&mut out, &c.class.to_string(), m);
        }
    }
    if let Some(m) = &summary.metrics {
        metrics_row(&mut out, "all", m);
    }
    out
}

pub fn alpha_sweep_csv(rows: &[AlphaRow]) -> String {
    let mut out = String::from("alpha,attack_acc,density,coverage,queries\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.alpha, r.attack_acc, opt(r.density), opt(r.coverage), r.queries)
            .expect("writing to a String");
    }
    out
}

pub fn episode_sweep_csv(rows: &[EpisodeRow]) -> String {
    let mut out = String::from("episodes,attack_acc\n");
    for r in rows {
        writeln!(out, "{},{}", r.episodes, r.attack_acc).expect("writing to a String");
    }
    out
}

/// Writes the run's file set into `dir`, creating it if needed.
pub fn emit_reports(summary: &RunSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, CONFIG_FILE, &summary.config_echo)?;
    write(dir, EPISODES_FILE, &episodes_csv(&summary.episodes))?;
    write(dir, METRICS_FILE, &metrics_csv(summary))?;
    let json = serde_json::to_string_pretty(summary).map_err(|e| Error::Parse {
        what: "run summary".into(),
        message: e.to_string(),
    })?;
    write(dir, SUMMARY_FILE, &json)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Parse {
            what: EPISODES_FILE.into(),
            message: format!("line {line}: bad or missing {name}"),
        })
}

pub fn parse_episodes_csv(text: &str) -> Result<Vec<EpisodeLog>> {
    let mut lines = text.lines();
    if lines.next() != Some(EPISODES_HEADER) {
        return Err(Error::Parse {
            what: EPISODES_FILE.into(),
            message: "unexpected header".into(),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let n = i + 2;
            let mut f = l.split(',');
            let log = EpisodeLog {
                class: parse_field(f.next(), n, "class")?,
                episode: parse_field(f.next(), n, "episode")?,
                init_seed: parse_field(f.next(), n, "init_seed")?,
                reward: parse_field(f.next(), n, "reward")?,
                r1: parse_field(f.next(), n, "r1")?,
                r2: parse_field(f.next(), n, "r2")?,
                r3: parse_field(f.next(), n, "r3")?,
                best_confidence: parse_field(f.next(), n, "best_confidence")?,
                cumulative_queries: parse_field(f.next(), n, "cumulative_queries")?,
            };
            if f.next().is_some() {
                return Err(Error::Parse {
                    what: EPISODES_FILE.into(),
                    message: format!("line {n}: too many fields"),
                });
            }
            Ok(log)
        })
        .collect()
}

/// Reads a directory written by [`emit_reports`] back into a summary and
/// checks the derived files agree with it.
pub fn read_reports(dir: &Path) -> Result<RunSummary> {
    let mut summary: RunSummary = serde_json::from_str(&read(dir, SUMMARY_FILE)?).map_err(|e| Error::Parse {
        what: SUMMARY_FILE.into(),
        message: e.to_string(),
    })?;
    summary.episodes = parse_episodes_csv(&read(dir, EPISODES_FILE)?)?;
    if read(dir, CONFIG_FILE)? != summary.config_echo {
        return Err(Error::Parse {
            what: CONFIG_FILE.into(),
            message: "differs from the summary's config echo".into(),
        });
    }
    if read(dir, METRICS_FILE)? != metrics_csv(&summary) {
        return Err(Error::Parse {
            what: METRICS_FILE.into(),
            message: "differs from the summary's metrics".into(),
        });
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(class: usize, episode: usize) -> EpisodeLog {
        EpisodeLog {
            class,
            episode,
            init_seed: u64::MAX - episode as u64,
            reward: -0.1 * episode as f64 - 1e-17,
            r1: -1.0 / 3.0,
            r2: f64::MIN_POSITIVE,
            r3: -16.11809565095832,
            best_confidence: 0.999_999_999_999_999_9,
            cumulative_queries: 2 * episode as u64 + 2,
        }
    }

    #[test]
    fn episodes_csv_round_trip_is_exact() {
        let logs: Vec<EpisodeLog> = (0..50).map(|i| log(i % 3, i)).collect();
        let text = episodes_csv(&logs);
        assert_eq!(text.lines().count(), 51);
        assert_eq!(parse_episodes_csv(&text).unwrap(), logs);
    }

    #[test]
    fn malformed_episode_rows_are_rejected() {
        assert!(parse_episodes_csv("nope\n").is_err());
        let bad = format!("{EPISODES_HEADER}\n1,2,3\n");
        assert!(matches!(parse_episodes_csv(&bad), Err(Error::Parse { .. })));
        let extra = format!("{EPISODES_HEADER}\n0,0,0,0,0,0,0,0,0,0\n");
        assert!(parse_episodes_csv(&extra).is_err());
    }

    #[test]
    fn unwritable_directory_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        std::fs::write(&file, "x").unwrap();
        let summary: RunSummary = serde_json::from_str(
            r#"{"version":"0","method":"sac","config_echo":"","overrides":[],"classes":[],"metrics":null,
            "queries":{"total":0,"training":0,"evaluation":0,"warm_up":0},"evaluation_queries":0,
            "failures":[],"wall_clock_secs":0.0}"#,
        )
        .unwrap();
        let err = emit_reports(&summary, &file.join("sub")).unwrap_err();
        assert!(err.to_string().contains("occupied"), "{err}");
        assert_eq!(err.exit_code(), 5);
    }
}
