//! Experiment orchestration: flat-file configs, seeded `(agent, seed)` runs
//! with exact-evaluation regret, optional traces, and CSV/JSON output.

mod config;
mod output;
mod run;

pub use config::{AgentSpec, Budget, DictCap, EnvSpec, ExperimentConfig, MetricsConfig};
pub use output::{
    bundle_name, compare_csv, dsd_csv, occupancy_csv, qtrace_csv, read_bundle, regret_csv,
    write_bundle, COMPARE_HEADER, DSD_HEADER, OCCUPANCY_HEADER, QTRACE_HEADER, REGRET_HEADER,
};
pub use run::{
    run_experiment, run_one, Aggregate, DsdRow, OccupancyRow, QTraceRow, ResultsBundle, RunMetrics,
    BUNDLE_SCHEMA_VERSION,
};

use std::fmt::Write as _;

use crate::error::Result;
use crate::mdp::dp_solve;

/// The optimal value table `V*_h(s)` of the configured environment (first
/// seed for PriorMDP) as CSV, followed by the expected initial value.
pub fn oracle_table(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let env = cfg.env.build(cfg.horizon, cfg.seeds[0])?;
    let (_, values) = dp_solve(&env, None)?;
    let mut out = String::from("h,s,v_star\n");
    for h in 0..env.horizon() {
        for s in 0..env.num_states() {
            let _ = writeln!(out, "{},{},{:?}", h + 1, s, values.v(h, s));
        }
    }
    let _ = writeln!(
        out,
        "# V*_1(s_1) = {:?}",
        values.expected_initial_value(env.init_dist())
    );
    Ok(out)
}
