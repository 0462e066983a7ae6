//! Scenario configuration files (TOML, durations with unit suffixes).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MuPattern;
use crate::time::{serde_dur, Dur, MS, SEC, US};
use crate::weakly_hard::{mu_satisfies_windows, MkRequirement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    /// `rows x cols` bridges, each with one end device.
    Grid {
        rows: usize,
        cols: usize,
        #[serde(default = "default_rate")]
        link_rate: u64,
        #[serde(default, with = "serde_dur")]
        prop_delay: Dur,
        #[serde(default, with = "serde_dur")]
        proc_delay: Dur,
        #[serde(default, with = "serde_dur")]
        proc_jitter: Dur,
    },
    /// Two wired partitions (bridge chains) joined by a logical 5G bridge
    /// (DS-TT on the device side, NW-TT on the backbone side).
    FiveG {
        agv_bridges: usize,
        backbone_bridges: usize,
        devices_per_bridge: usize,
        #[serde(default = "default_rate")]
        link_rate: u64,
        #[serde(default, with = "serde_dur")]
        prop_delay: Dur,
        #[serde(default, with = "serde_dur")]
        proc_delay: Dur,
        /// Physical lower bound of the 5G delay in both directions.
        #[serde(default, with = "serde_dur")]
        wireless_d_min: Dur,
        #[serde(with = "serde_dur")]
        uplink_d_max: Dur,
        #[serde(with = "serde_dur")]
        downlink_d_max: Dur,
    },
}

fn default_rate() -> u64 {
    100_000_000
}

fn default_phase_step() -> Dur {
    US
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Any two distinct end devices.
    #[default]
    Any,
    /// Talker and listener in the same wired partition.
    IntraPartition,
    /// Across the logical 5G bridge, uplink or downlink.
    CrossPartition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamClass {
    pub prefix: String,
    pub count: usize,
    #[serde(with = "serde_dur::vec")]
    pub periods: Vec<Dur>,
    /// `L = factor * T`; mutually exclusive with `latency`.
    #[serde(default)]
    pub latency_factors: Vec<f64>,
    #[serde(default, with = "opt_dur")]
    pub latency: Option<Dur>,
    pub size_bytes: u64,
    pub pcp: u8,
    pub mu_pool: Vec<MuPattern>,
    /// Requirement every pool entry must guarantee.
    #[serde(default)]
    pub requirement: Option<MkRequirement>,
    #[serde(default)]
    pub placement: Placement,
    /// Phases are drawn uniformly from the multiples of `phase_step` below
    /// `min(max_phase, T)`; all phases are 0 when unset.
    #[serde(default, with = "opt_dur")]
    pub max_phase: Option<Dur>,
    #[serde(default = "default_phase_step", with = "serde_dur")]
    pub phase_step: Dur,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SporadicClass {
    pub prefix: String,
    pub count: usize,
    #[serde(with = "serde_dur::vec")]
    pub min_inter_events: Vec<Dur>,
    pub size_bytes: u64,
}

/// Delay injection for the 5G study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiveGStudySpec {
    #[serde(with = "serde_dur")]
    pub unstable_interval: Dur,
    pub burst_len: u32,
    /// Unbounded run: upper end of the affected stream's delays.
    #[serde(with = "serde_dur")]
    pub unbounded_hi: Dur,
    /// Unbounded run: lower end; defaults to the wireless link's d_max.
    #[serde(default, with = "opt_dur")]
    pub unbounded_lo: Option<Dur>,
    /// Stream receiving unbounded delays; defaults to the first wireless
    /// stream with a non-zero mu-pattern.
    #[serde(default)]
    pub unbounded_stream: Option<String>,
    /// Optional histogram CSV for stable 5G delays (both directions).
    #[serde(default)]
    pub histogram: Option<String>,
}

impl Default for FiveGStudySpec {
    fn default() -> Self {
        FiveGStudySpec {
            unstable_interval: 5 * SEC,
            burst_len: 10,
            unbounded_hi: 30 * MS,
            unbounded_lo: None,
            unbounded_stream: None,
            histogram: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_hypercycles")]
    pub hypercycles: u64,
    /// Adds a conformant elevated adversary at every port with a bucket.
    #[serde(default)]
    pub adversaries: bool,
    #[serde(default = "default_pause", with = "serde_dur")]
    pub adversary_max_pause: Dur,
    /// Simulate the sporadic sources.
    #[serde(default = "yes")]
    pub sporadics: bool,
    /// Per-device clock offsets are drawn from `[-max, max]`.
    #[serde(default, with = "opt_dur")]
    pub clock_skew_max: Option<Dur>,
}

fn default_hypercycles() -> u64 {
    10_000
}

fn default_pause() -> Dur {
    50 * US
}

fn yes() -> bool {
    true
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            hypercycles: default_hypercycles(),
            adversaries: false,
            adversary_max_pause: default_pause(),
            sporadics: true,
            clock_skew_max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulabilitySpec {
    /// Sporadic stream counts to sweep.
    pub sporadic_counts: Vec<usize>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(with = "serde_dur")]
    pub sporadic_min_inter_event: Dur,
}

fn default_instances() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub topology: TopologySpec,
    #[serde(default)]
    pub streams: Vec<StreamClass>,
    #[serde(default)]
    pub sporadic: Vec<SporadicClass>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub five_g: Option<FiveGStudySpec>,
    #[serde(default)]
    pub schedulability: Option<SchedulabilitySpec>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match &self.topology {
            TopologySpec::Grid { rows, cols, .. } if rows * cols < 2 => {
                return bad("grid needs at least two bridges".into())
            }
            TopologySpec::FiveG {
                agv_bridges,
                backbone_bridges,
                devices_per_bridge,
                ..
            } if *agv_bridges == 0 || *backbone_bridges == 0 || *devices_per_bridge == 0 => {
                return bad("5G topology needs bridges and devices on both sides".into())
            }
            _ => {}
        }
        for c in &self.streams {
            if c.periods.is_empty() || c.periods.iter().any(|p| *p <= 0) {
                return bad(format!("class {}: periods must be positive and non-empty", c.prefix));
            }
            if c.latency.is_some() == !c.latency_factors.is_empty() {
                return bad(format!("class {}: give exactly one of latency, latency_factors", c.prefix));
            }
            if c.latency_factors.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                return bad(format!("class {}: latency factors must lie in (0, 1]", c.prefix));
            }
            if c.mu_pool.is_empty() {
                return bad(format!("class {}: empty mu pool", c.prefix));
            }
            if let Some(req) = c.requirement {
                MkRequirement::new(req.m, req.k)?;
                if let Some(mu) = c.mu_pool.iter().find(|mu| !mu_satisfies_windows(mu, req)) {
                    return bad(format!(
                        "class {}: pattern {mu} does not guarantee ({},{})",
                        c.prefix, req.m, req.k
                    ));
                }
            }
            if c.phase_step <= 0 {
                return bad(format!("class {}: phase_step must be positive", c.prefix));
            }
            if c.pcp >= 7 {
                return bad(format!("class {}: pcp must be below 7", c.prefix));
            }
        }
        for s in &self.sporadic {
            if s.min_inter_events.is_empty() || s.min_inter_events.iter().any(|p| *p <= 0) {
                return bad(format!("sporadic {}: bad min_inter_events", s.prefix));
            }
        }
        if self.simulation.clock_skew_max.is_some_and(|s| s < 0) {
            return bad("clock_skew_max must be non-negative".into());
        }
        Ok(())
    }
}

mod opt_dur {
    use crate::time::{format_duration, parse_duration, Dur};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Dur>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_str(&format_duration(*d)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Dur>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Int(v)) => Ok(Some(v)),
            Some(Raw::Text(t)) => parse_duration(&t).map(Some).map_err(de::Error::custom),
        }
    }
}

/// 3x4 grid, 24 isochronous streams, periods {200us, 400us}, 100 B frames.
pub fn grid_default() -> ScenarioConfig {
    ScenarioConfig {
        seed: 1,
        topology: TopologySpec::Grid {
            rows: 3,
            cols: 4,
            link_rate: default_rate(),
            prop_delay: 0,
            proc_delay: US,
            proc_jitter: 0,
        },
        streams: vec![StreamClass {
            prefix: "iso".into(),
            count: 24,
            periods: vec![200 * US, 400 * US],
            latency_factors: vec![0.5, 0.75, 1.0],
            latency: None,
            size_bytes: 100,
            pcp: 5,
            mu_pool: vec![MuPattern::never()],
            requirement: None,
            placement: Placement::Any,
            max_phase: None,
            phase_step: US,
        }],
        sporadic: vec![SporadicClass {
            prefix: "spo".into(),
            count: 24,
            min_inter_events: vec![200 * US, 400 * US],
            size_bytes: 100,
        }],
        simulation: SimulationSpec::default(),
        five_g: None,
        schedulability: Some(SchedulabilitySpec {
            sporadic_counts: vec![0, 8, 16, 24, 32, 40, 48],
            instances: 100,
            sporadic_min_inter_event: 200 * US,
        }),
    }
}

/// Two partitions joined by a logical 5G bridge: 20 wired hard streams and
/// 80 wireless streams, half (1,3)-firm.
pub fn five_g_default() -> ScenarioConfig {
    let mk = |s: &str| MuPattern::parse(s).expect("literal pattern");
    ScenarioConfig {
        seed: 1,
        topology: TopologySpec::FiveG {
            agv_bridges: 2,
            backbone_bridges: 3,
            devices_per_bridge: 2,
            link_rate: default_rate(),
            prop_delay: 0,
            proc_delay: US,
            wireless_d_min: 0,
            uplink_d_max: 9_980 * US,
            downlink_d_max: 11_037 * US,
        },
        streams: vec![
            StreamClass {
                prefix: "wired".into(),
                count: 20,
                periods: vec![5 * MS],
                latency_factors: vec![],
                latency: Some(500 * US),
                size_bytes: 100,
                pcp: 6,
                mu_pool: vec![MuPattern::always()],
                requirement: Some(MkRequirement { m: 1, k: 1 }),
                placement: Placement::IntraPartition,
                max_phase: Some(5 * MS),
                phase_step: 250 * US,
            },
            StreamClass {
                prefix: "wl-mk".into(),
                count: 40,
                periods: vec![20 * MS],
                latency_factors: vec![],
                latency: Some(20 * MS),
                size_bytes: 100,
                pcp: 5,
                mu_pool: vec![mk("001"), mk("010"), mk("100")],
                requirement: Some(MkRequirement { m: 1, k: 3 }),
                placement: Placement::CrossPartition,
                max_phase: Some(5 * MS),
                phase_step: 250 * US,
            },
            StreamClass {
                prefix: "wl-be".into(),
                count: 40,
                periods: vec![20 * MS],
                latency_factors: vec![],
                latency: Some(20 * MS),
                size_bytes: 100,
                pcp: 5,
                mu_pool: vec![MuPattern::never()],
                requirement: None,
                placement: Placement::CrossPartition,
                max_phase: Some(5 * MS),
                phase_step: 250 * US,
            },
        ],
        sporadic: vec![],
        simulation: SimulationSpec::default(),
        five_g: Some(FiveGStudySpec::default()),
        schedulability: None,
    }
}
