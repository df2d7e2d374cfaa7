use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, AgentKind};
use crate::error::{Error, Result};
use crate::kernels::{KernelScales, StateAction};
use crate::mdp::{deepsea, priormdp, widenarrow, TabularMdp, WideNarrowParams};

/// RNG stream ids; every stream is keyed by the run seed. Agents draw from
/// stream 0, which is what `Agent::new` seeds.
pub(crate) const STREAM_ENV_NOISE: u64 = 1;
pub(crate) const STREAM_ENV_BUILD: u64 = 2;
pub(crate) const STREAM_METRICS: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Deepsea { n: usize, delta: f64 },
    Widenarrow(WideNarrowParams),
    Priormdp { s: usize, a: usize },
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Deepsea { .. } => "deepsea",
            EnvSpec::Widenarrow(_) => "widenarrow",
            EnvSpec::Priormdp { .. } => "priormdp",
        }
    }

    /// Builds the true environment for one seed. Only PriorMDP depends on it.
    pub fn build(&self, horizon: Option<usize>, seed: u64) -> Result<TabularMdp> {
        match *self {
            EnvSpec::Deepsea { n, delta } => deepsea(n, delta, horizon),
            EnvSpec::Widenarrow(p) => widenarrow(p, horizon),
            EnvSpec::Priormdp { s, a } => {
                priormdp(s, a, horizon, &mut stream_rng(seed, STREAM_ENV_BUILD))
            }
        }
    }

    /// The state count the environment will have.
    pub fn num_states(&self) -> usize {
        match *self {
            EnvSpec::Deepsea { n, .. } => n,
            EnvSpec::Widenarrow(p) => 2 * p.n + 1,
            EnvSpec::Priormdp { s, .. } => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Episodes(usize),
    /// Total environment steps `T`; the run uses `⌊T / H⌋` episodes.
    Timesteps(usize),
}

/// Cap on STEERING's dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictCap {
    Fixed(usize),
    /// `S · ⌈H / Z⌉`, resolved once the horizon is known.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub label: String,
    pub config: AgentConfig,
    pub dict_cap: Option<DictCap>,
}

impl AgentSpec {
    pub fn new(config: AgentConfig) -> Self {
        Self {
            label: config.kind.name().to_string(),
            config,
            dict_cap: None,
        }
    }

    /// The agent configuration with the experiment's kernel scales and the
    /// dictionary cap resolved.
    pub fn resolved(&self, kernel: KernelScales, num_states: usize, horizon: usize) -> AgentConfig {
        let mut cfg = self.config.clone();
        cfg.scales = kernel;
        cfg.dictionary_capacity = match self.dict_cap {
            None => None,
            Some(DictCap::Fixed(n)) => Some(n),
            Some(DictCap::Auto) => Some(num_states * horizon.div_ceil(cfg.batch_size)),
        };
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub dsd: bool,
    pub occupancy: bool,
    pub qtrace: bool,
    /// Episodes per occupancy window; defaults to a tenth of the run.
    pub occupancy_window: Option<usize>,
    pub qtrace_samples: usize,
    /// Pairs traced by the dsd and qtrace metrics; `None` traces every pair.
    pub pairs: Option<Vec<StateAction>>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            dsd: false,
            occupancy: false,
            qtrace: false,
            occupancy_window: None,
            qtrace_samples: 30,
            pairs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub horizon: Option<usize>,
    pub budget: Budget,
    pub seeds: Vec<u64>,
    pub agents: Vec<AgentSpec>,
    pub kernel: KernelScales,
    pub metrics: MetricsConfig,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    /// A minimal config: default seeds 0..5, no metrics, no output directory.
    pub fn new(env: EnvSpec, budget: Budget, agents: Vec<AgentSpec>) -> Self {
        Self {
            env,
            horizon: None,
            budget,
            seeds: (0..5).collect(),
            agents,
            kernel: KernelScales::default(),
            metrics: MetricsConfig::default(),
            out_dir: None,
            workers: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses the flat `key = value` format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if key.is_empty() {
                return Err(Error::config(format!("line {}", lineno + 1), "empty key"));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::config(key, "duplicate key"));
            }
        }
        Parser { entries }.finish()
    }

    /// Applies the command-line overrides.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        episodes: Option<usize>,
        out: Option<PathBuf>,
    ) {
        if let Some(seed) = seed {
            self.seeds = vec![seed];
        }
        if let Some(k) = episodes {
            self.budget = Budget::Episodes(k);
        }
        if let Some(out) = out {
            self.out_dir = Some(out);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let env = self
            .env
            .build(self.horizon, self.seeds.first().copied().unwrap_or(0))?;
        if self.episodes_for(env.horizon()) == 0 {
            return Err(Error::config(
                match self.budget {
                    Budget::Episodes(_) => "episodes",
                    Budget::Timesteps(_) => "timesteps",
                },
                "the run needs at least one episode",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::config(
                "seeds",
                format!("seed {dup} is listed twice"),
            ));
        }
        if self.agents.is_empty() {
            return Err(Error::config("agents", "at least one agent is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            a.resolved(self.kernel, env.num_states(), env.horizon())
                .validate()
                .map_err(|e| prefix(e, &format!("agents.{i}")))?;
            if !labels.insert(a.label.as_str()) {
                return Err(Error::config(
                    format!("agents.{i}.label"),
                    format!("label `{}` is used twice", a.label),
                ));
            }
            if a.label.is_empty() || a.label.contains([',', '"', '\n']) {
                return Err(Error::config(
                    format!("agents.{i}.label"),
                    "labels must be non-empty and CSV-safe",
                ));
            }
        }
        self.kernel.validate()?;
        if self.metrics.qtrace_samples == 0 {
            return Err(Error::config(
                "metrics.qtrace_samples",
                "must be at least 1",
            ));
        }
        if self.metrics.occupancy_window == Some(0) {
            return Err(Error::config(
                "metrics.occupancy_window",
                "must be at least 1",
            ));
        }
        if let Some(pairs) = &self.metrics.pairs {
            if let Some(p) = pairs
                .iter()
                .find(|p| p.state >= env.num_states() || p.action >= env.num_actions())
            {
                return Err(Error::config(
                    "metrics.pairs",
                    format!(
                        "pair ({}, {}) is outside the environment",
                        p.state, p.action
                    ),
                ));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Episode count `K` for a given horizon.
    pub fn episodes_for(&self, horizon: usize) -> usize {
        match self.budget {
            Budget::Episodes(k) => k,
            Budget::Timesteps(t) => t / horizon,
        }
    }
}

fn prefix(err: Error, path: &str) -> Error {
    match err {
        Error::Config { field, message } => Error::Config {
            field: format!("{path}.{field}"),
            message,
        },
        other => other,
    }
}

struct Parser {
    entries: BTreeMap<String, String>,
}

impl Parser {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn flag(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key).as_deref() {
            None => Ok(None),
            Some("true" | "yes" | "on" | "1") => Ok(Some(true)),
            Some("false" | "no" | "off" | "0") => Ok(Some(false)),
            Some(v) => Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
        }
    }

    fn finish(mut self) -> Result<ExperimentConfig> {
        let kind = self
            .take("env.kind")
            .ok_or_else(|| Error::config("env.kind", "missing required key"))?;
        let env = match kind.as_str() {
            "deepsea" => EnvSpec::Deepsea {
                n: self.required("env.N")?,
                delta: self.parse("env.delta")?.unwrap_or(0.01),
            },
            "widenarrow" => {
                let d = WideNarrowParams::default();
                EnvSpec::Widenarrow(WideNarrowParams {
                    n: self.parse("env.N")?.unwrap_or(d.n),
                    w: self.parse("env.W")?.unwrap_or(d.w),
                    mu_h: self.parse("env.mu_h")?.unwrap_or(d.mu_h),
                    mu_l: self.parse("env.mu_l")?.unwrap_or(d.mu_l),
                    sigma: self.parse("env.sigma")?.unwrap_or(d.sigma),
                })
            }
            "priormdp" => EnvSpec::Priormdp {
                s: self.required("env.S")?,
                a: self.required("env.A")?,
            },
            other => {
                return Err(Error::config(
                    "env.kind",
                    format!(
                        "unknown environment `{other}` (expected deepsea, widenarrow or priormdp)"
                    ),
                ))
            }
        };
        let horizon = self.parse("horizon")?;
        let budget = match (self.parse("episodes")?, self.parse("timesteps")?) {
            (Some(k), None) => Budget::Episodes(k),
            (None, Some(t)) => Budget::Timesteps(t),
            (None, None) => {
                return Err(Error::config(
                    "episodes",
                    "one of `episodes` or `timesteps` is required",
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "timesteps",
                    "give `episodes` or `timesteps`, not both",
                ))
            }
        };
        let seeds = match self.take("seeds") {
            None => (0..5).collect(),
            Some(v) => parse_seeds(&v)?,
        };
        let kernel = KernelScales {
            x: self.parse("kernel.x_scale")?.unwrap_or(1.0),
            y: self.parse("kernel.y_scale")?.unwrap_or(1.0),
        };
        let agents = self.agents()?;
        let mut metrics = MetricsConfig {
            dsd: self.flag("metrics.dsd")?.unwrap_or(false),
            occupancy: self.flag("metrics.occupancy")?.unwrap_or(false),
            qtrace: self.flag("metrics.qtrace")?.unwrap_or(false),
            occupancy_window: self.parse("metrics.occupancy_window")?,
            ..Default::default()
        };
        if let Some(m) = self.parse("metrics.qtrace_samples")? {
            metrics.qtrace_samples = m;
        }
        if let Some(v) = self.take("metrics.pairs") {
            metrics.pairs = Some(parse_pairs(&v)?);
        }
        let out_dir = self.take("out_dir").map(PathBuf::from);
        let workers = self.parse("workers")?;
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::config(key.clone(), "unknown key"));
        }
        let cfg = ExperimentConfig {
            env,
            horizon,
            budget,
            seeds,
            agents,
            kernel,
            metrics,
            out_dir,
            workers,
        };
        Ok(cfg)
    }

    fn agents(&mut self) -> Result<Vec<AgentSpec>> {
        let mut indices = std::collections::BTreeSet::new();
        for key in self.entries.keys() {
            if let Some(rest) = key.strip_prefix("agents.") {
                let idx = rest.split('.').next().unwrap_or("");
                let idx: usize = idx.parse().map_err(|_| {
                    Error::config(key.clone(), "agent keys look like agents.<index>.<field>")
                })?;
                indices.insert(idx);
            }
        }
        let mut out = Vec::with_capacity(indices.len());
        for i in indices {
            let p = |f: &str| format!("agents.{i}.{f}");
            let kind_text = self
                .take(&p("kind"))
                .ok_or_else(|| Error::config(p("kind"), "missing required key"))?;
            let kind = AgentKind::parse(&kind_text).ok_or_else(|| {
                Error::config(p("kind"), format!("unknown agent kind `{kind_text}`"))
            })?;
            let mut cfg = AgentConfig::new(kind);
            if let Some(v) = self.parse(&p("lambda"))? {
                cfg.lambda = v;
            }
            if let Some(v) = self.parse(&p("z"))? {
                cfg.batch_size = v;
            }
            if let Some(v) = self.parse(&p("epsilon"))? {
                cfg.epsilon = v;
            }
            if let Some(v) = self.parse(&p("lr"))? {
                cfg.learning_rate = v;
            }
            if let Some(v) = self.parse(&p("unvisited_bonus"))? {
                cfg.unvisited_bonus = v;
            }
            if let Some(v) = self.parse(&p("eta"))? {
                cfg.eta = v;
            }
            if let Some(v) = self.flag(&p("full_posterior"))? {
                cfg.full_posterior_updates = v;
            }
            let dict_cap = match self.take(&p("dict_cap")).as_deref() {
                None | Some("none") => None,
                Some("auto") => Some(DictCap::Auto),
                Some(v) => Some(DictCap::Fixed(v.parse().map_err(|_| {
                    Error::config(
                        p("dict_cap"),
                        format!("expected `auto`, `none` or a count, got `{v}`"),
                    )
                })?)),
            };
            let label = self
                .take(&p("label"))
                .unwrap_or_else(|| kind.name().to_string());
            out.push(AgentSpec {
                label,
                config: cfg,
                dict_cap,
            });
        }
        Ok(out)
    }
}

/// `0,1,2` or a half-open range `0..5`.
fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |v: &str| Error::config("seeds", format!("cannot parse `{v}`"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad(text))?,
            b.trim().parse().map_err(|_| bad(text))?,
        );
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(s)))
        .collect()
}

/// `s:a` pairs separated by commas.
fn parse_pairs(text: &str) -> Result<Vec<StateAction>> {
    text.split(',')
        .map(|item| {
            let bad = || {
                Error::config(
                    "metrics.pairs",
                    format!("expected `state:action`, got `{}`", item.trim()),
                )
            };
            let (s, a) = item.trim().split_once(':').ok_or_else(bad)?;
            Ok(StateAction::new(
                s.trim().parse().map_err(|_| bad())?,
                a.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}
