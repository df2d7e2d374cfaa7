use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::run::ResultsBundle;

pub const REGRET_HEADER: &str = "agent,seed,episode,per_episode_regret,cumulative_regret";
pub const DSD_HEADER: &str = "agent,seed,episode,s,a,dsd2";
pub const OCCUPANCY_HEADER: &str = "agent,seed,window_start,window_end,s,a,count";
pub const QTRACE_HEADER: &str = "agent,seed,episode,s,a,q_mean,q_std,q_star";
pub const COMPARE_HEADER: &str =
    "bundle,agent,seed,episode,per_episode_regret,cumulative_regret,mean_cumulative_regret,std_cumulative_regret";

/// `f64` in shortest round-trip decimal form.
fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn regret_csv(bundle: &ResultsBundle) -> String {
    let mut out = format!("{REGRET_HEADER}\n");
    for r in &bundle.runs {
        for (i, (p, c)) in r
            .per_episode_regret
            .iter()
            .zip(&r.cumulative_regret)
            .enumerate()
        {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.agent,
                r.seed,
                i + 1,
                num(*p),
                num(*c)
            );
        }
    }
    out
}

pub fn dsd_csv(bundle: &ResultsBundle) -> String {
    let mut out = format!("{DSD_HEADER}\n");
    for r in &bundle.runs {
        for row in &r.dsd {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.agent,
                r.seed,
                row.episode,
                row.s,
                row.a,
                num(row.dsd2)
            );
        }
    }
    out
}

pub fn occupancy_csv(bundle: &ResultsBundle) -> String {
    let mut out = format!("{OCCUPANCY_HEADER}\n");
    for r in &bundle.runs {
        for row in &r.occupancy {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.agent, r.seed, row.window_start, row.window_end, row.s, row.a, row.count
            );
        }
    }
    out
}

pub fn qtrace_csv(bundle: &ResultsBundle) -> String {
    let mut out = format!("{QTRACE_HEADER}\n");
    for r in &bundle.runs {
        for row in &r.qtrace {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.agent,
                r.seed,
                row.episode,
                row.s,
                row.a,
                num(row.q_mean),
                num(row.q_std),
                num(row.q_star)
            );
        }
    }
    out
}

/// Writes `regret.csv`, the enabled metric tables and `bundle.json` into
/// `dir`. If any write fails, every file this call created is removed.
pub fn write_bundle(bundle: &ResultsBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let m = &bundle.config.metrics;
    let mut files = vec![("regret.csv", regret_csv(bundle))];
    if m.dsd {
        files.push(("dsd.csv", dsd_csv(bundle)));
    }
    if m.occupancy {
        files.push(("occupancy.csv", occupancy_csv(bundle)));
    }
    if m.qtrace {
        files.push(("qtrace.csv", qtrace_csv(bundle)));
    }
    files.push(("bundle.json", serde_json::to_string_pretty(bundle)?));

    let dir_existed = dir.exists();
    let mut written = Vec::new();
    let result = (|| -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in &files {
            let path = dir.join(name);
            fs::write(&path, body).inspect_err(|_| {
                // a failed write may still leave a truncated file behind
                if path.exists() {
                    written.push(path.clone());
                }
            })?;
            written.push(path);
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for path in &written {
                let _ = fs::remove_file(path);
            }
            if !dir_existed {
                let _ = fs::remove_dir(dir);
            }
            Err(e)
        }
    }
}

/// Loads a bundle from a `bundle.json` path or a directory containing one,
/// and checks its aggregates against its runs.
pub fn read_bundle(path: &Path) -> Result<ResultsBundle> {
    let file = if path.is_dir() {
        path.join("bundle.json")
    } else {
        path.to_path_buf()
    };
    let bundle: ResultsBundle = serde_json::from_str(&fs::read_to_string(&file)?)?;
    bundle.check()?;
    Ok(bundle)
}

/// Merges bundles into one regret table with per-episode seed aggregates.
/// Each `(bundle, agent, seed, episode)` gives one row.
pub fn compare_csv(bundles: &[(String, ResultsBundle)]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n");
    for (name, b) in bundles {
        for agg in &b.aggregates {
            for r in b.runs_for(&agg.agent) {
                for (i, (p, c)) in r
                    .per_episode_regret
                    .iter()
                    .zip(&r.cumulative_regret)
                    .enumerate()
                {
                    let _ = writeln!(
                        out,
                        "{name},{},{},{},{},{},{},{}",
                        r.agent,
                        r.seed,
                        i + 1,
                        num(*p),
                        num(*c),
                        num(agg.mean_cumulative_regret[i]),
                        num(agg.std_cumulative_regret[i])
                    );
                }
            }
        }
    }
    out
}

/// A short name for a bundle path, used in the compare table.
pub fn bundle_name(path: &Path) -> Result<String> {
    let base = if path.file_name().is_some_and(|f| f == "bundle.json") {
        path.parent().unwrap_or(path)
    } else {
        path
    };
    let name = base
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| base.display().to_string());
    if name.contains([',', '"', '\n']) {
        return Err(Error::contract(format!(
            "bundle name `{name}` is not CSV-safe"
        )));
    }
    Ok(name)
}
