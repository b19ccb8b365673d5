//! Scenario construction, single runs and parameter sweeps.
//!
//! A scenario is a chain of switches with every producer attached to the
//! first switch and every consumer attached to the last. Each consumer wants
//! every producer's service, so a run completes with `P × C` subscriptions.

mod csv;
mod network;

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rayon::prelude::*;

pub use csv::{series_csv, series_file_name, sweep_csv, SWEEP_CSV_HEADER};
pub use network::{ControllerApp, HostApp, NetEvent, Network, Simulation, Timing};

use crate::error::SimError;
use crate::host_model::{ConsumerApp, ProducerApp};
use crate::sd_codec::{Endpoint, ServiceIdentity};
use crate::sim_engine::{RunMetrics, SimTime};
use crate::topology::{LinkSpec, SwitchId, Topology};

/// Network operation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Plain learning switches, no controller.
    Ethernet,
    /// Controller that answers and steers service discovery.
    SdnOptimized,
    /// Reactive L2 controller that knows nothing about SOME/IP.
    SdnVanilla,
}

impl Mode {
    /// Every mode, in the (lexicographic) order used for sorting output.
    pub const ALL: [Mode; 3] = [Mode::Ethernet, Mode::SdnOptimized, Mode::SdnVanilla];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Ethernet => "ethernet",
            Mode::SdnVanilla => "sdn-vanilla",
            Mode::SdnOptimized => "sdn-optimized",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mode `{0}` (expected ethernet, sdn-vanilla or sdn-optimized)")]
pub struct ParseModeError(String);

impl FromStr for Mode {
    type Err = ParseModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ParseModeError(s.to_owned()))
    }
}

pub const MAX_SWITCHES: usize = 5;
pub const MAX_PRODUCERS: usize = 50;
pub const MAX_CONSUMERS: usize = 50;

/// First service id handed out to producers.
pub const FIRST_SERVICE_ID: u16 = 0x1001;
pub const PRODUCER_PORT: u16 = 30509;
pub const CONSUMER_PORT: u16 = 40000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub switches: usize,
    pub producers: usize,
    /// Consumers in the network; each subscribes to every producer.
    pub consumers: usize,
    pub timing: Timing,
    pub offer_ttl: u32,
    pub find_ttl: u32,
    pub subscribe_ttl: u32,
    /// Simulated-time budget for one run.
    pub limit: SimTime,
}

impl ScenarioConfig {
    pub fn new(mode: Mode, switches: usize, producers: usize, consumers: usize) -> Self {
        Self {
            mode,
            switches,
            producers,
            consumers,
            timing: Timing::default(),
            offer_ttl: 3,
            find_ttl: 3,
            subscribe_ttl: 3,
            limit: SimTime::from_secs(1),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check("switches", self.switches, MAX_SWITCHES)?;
        check("producers", self.producers, MAX_PRODUCERS)?;
        check("consumers", self.consumers, MAX_CONSUMERS)?;
        if self.timing.link_rate_bps == 0 {
            return Err(SimError::InvalidRange {
                field: "link_rate_bps",
                value: 0,
                min: 1,
                max: u64::MAX,
            });
        }
        Ok(())
    }
}

fn check(field: &'static str, value: usize, max: usize) -> Result<(), SimError> {
    if (1..=max).contains(&value) {
        Ok(())
    } else {
        Err(SimError::InvalidRange {
            field,
            value: value as u64,
            min: 1,
            max: max as u64,
        })
    }
}

pub fn producer_address(i: usize) -> Ipv4Addr {
    Ipv4Addr::new(10, 0, 1, (i + 1) as u8)
}

pub fn consumer_address(j: usize) -> Ipv4Addr {
    Ipv4Addr::new(10, 0, 2, (j + 1) as u8)
}

pub fn producer_identity(i: usize) -> ServiceIdentity {
    ServiceIdentity::new(FIRST_SERVICE_ID + i as u16, 1, 1, 0)
}

/// Builds the switch chain and attaches producers to the first switch and
/// consumers to the last. Host ids: producers `0..P`, consumers `P..P+C`.
pub fn build_topology(switches: usize, producers: usize, consumers: usize, link: LinkSpec) -> Result<Topology, SimError> {
    check("switches", switches, MAX_SWITCHES)?;
    check("producers", producers, MAX_PRODUCERS)?;
    check("consumers", consumers, MAX_CONSUMERS)?;
    let mut topo = Topology::new(link);
    let ids: Vec<SwitchId> = (0..switches).map(|_| topo.add_switch()).collect();
    for pair in ids.windows(2) {
        topo.connect(pair[0], pair[1]);
    }
    let (first, last) = (ids[0], ids[switches - 1]);
    for i in 0..producers {
        topo.add_host(producer_address(i), first);
    }
    for j in 0..consumers {
        topo.add_host(consumer_address(j), last);
    }
    Ok(topo)
}

/// Builds the network for `config` without scheduling anything.
pub fn build_network(config: &ScenarioConfig) -> Result<Network, SimError> {
    config.validate()?;
    let link = LinkSpec {
        rate_bps: config.timing.link_rate_bps,
        propagation: config.timing.propagation,
    };
    let topo = build_topology(config.switches, config.producers, config.consumers, link)?;
    let wanted: Vec<ServiceIdentity> = (0..config.producers)
        .map(|i| ServiceIdentity::any(producer_identity(i).service_id))
        .collect();
    let mut hosts = Vec::with_capacity(config.producers + config.consumers);
    for i in 0..config.producers {
        hosts.push(HostApp::Producer(ProducerApp::new(
            producer_identity(i),
            Endpoint::udp(producer_address(i), PRODUCER_PORT),
            config.offer_ttl,
            SimTime::ZERO,
        )));
    }
    for j in 0..config.consumers {
        hosts.push(HostApp::Consumer(ConsumerApp::new(
            wanted.clone(),
            Endpoint::udp(consumer_address(j), CONSUMER_PORT),
            config.find_ttl,
            config.subscribe_ttl,
        )));
    }
    Network::new(config.mode, config.timing, topo, hosts)
}

/// Builds the network and schedules the cold start at t = 0.
pub fn build_simulation(config: &ScenarioConfig) -> Result<Simulation, SimError> {
    let mut sim = Simulation::new(build_network(config)?, config.limit);
    sim.activate_all(SimTime::ZERO)?;
    Ok(sim)
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunMetrics, SimError> {
    build_simulation(config)?.run()
}

/// Parameter grid of a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub modes: Vec<Mode>,
    pub switches: Vec<usize>,
    pub producers: Vec<usize>,
    pub consumers: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let counts = vec![1, 5, 10, 15, 20, 30, 40, 50];
        Self {
            modes: Mode::ALL.to_vec(),
            switches: vec![1, 2, 5],
            producers: counts.clone(),
            consumers: counts,
        }
    }
}

impl SweepGrid {
    /// All configurations in (mode, switches, producers, consumers) order.
    pub fn configs(&self, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &s in &self.switches {
                for &p in &self.producers {
                    for &c in &self.consumers {
                        out.push(ScenarioConfig {
                            mode,
                            switches: s,
                            producers: p,
                            consumers: c,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out.sort_by_key(|c| (c.mode, c.switches, c.producers, c.consumers));
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub mode: Mode,
    pub switches: usize,
    pub producers: usize,
    pub consumers: usize,
    pub metrics: RunMetrics,
}

impl SweepResult {
    pub fn setup_time(&self) -> SimTime {
        self.metrics.setup_time
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub results: Vec<SweepResult>,
    /// Failed configurations with their errors, in grid order.
    pub failures: Vec<(ScenarioConfig, SimError)>,
}

/// Runs every configuration of `grid`, `jobs` at a time (0 = one per core).
/// Results are sorted by (mode, switches, producers, consumers) whatever the
/// degree of parallelism.
pub fn run_sweep(grid: &SweepGrid, base: &ScenarioConfig, jobs: usize) -> Result<SweepOutcome, rayon::ThreadPoolBuildError> {
    let configs = grid.configs(base);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let runs: Vec<(ScenarioConfig, Result<RunMetrics, SimError>)> =
        pool.install(|| configs.into_par_iter().map(|c| {
            let r = run_scenario(&c);
            (c, r)
        }).collect());
    let mut outcome = SweepOutcome {
        results: Vec::new(),
        failures: Vec::new(),
    };
    for (c, r) in runs {
        match r {
            Ok(metrics) => outcome.results.push(SweepResult {
                mode: c.mode,
                switches: c.switches,
                producers: c.producers,
                consumers: c.consumers,
                metrics,
            }),
            Err(e) => {
                log::error!("{} S={} P={} C={}: {e}", c.mode, c.switches, c.producers, c.consumers);
                outcome.failures.push((c, e));
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_order_is_name_order() {
        let mut names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
        names.sort_unstable();
        assert_eq!(names, Mode::ALL.map(Mode::name));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("sdn".parse::<Mode>().is_err());
    }

    #[test]
    fn out_of_range_counts_are_rejected() {
        let bad = [(0, 1, 1), (6, 1, 1), (1, 0, 1), (1, 51, 1), (1, 1, 0), (1, 1, 51)];
        for (s, p, c) in bad {
            let cfg = ScenarioConfig::new(Mode::Ethernet, s, p, c);
            assert!(matches!(cfg.validate(), Err(SimError::InvalidRange { .. })), "{s} {p} {c}");
        }
    }

    #[test]
    fn chain_places_producers_first_and_consumers_last() {
        let topo = build_topology(3, 2, 4, LinkSpec::GIGABIT).unwrap();
        assert_eq!(topo.switch_count(), 3);
        assert_eq!(topo.hosts().len(), 6);
        assert!(topo.hosts()[..2].iter().all(|h| h.attachment.switch == SwitchId(0)));
        assert!(topo.hosts()[2..].iter().all(|h| h.attachment.switch == SwitchId(2)));
        assert!(topo.is_connected());
    }

    #[test]
    fn default_grid_has_192_points_per_mode() {
        let grid = SweepGrid::default();
        let cfgs = grid.configs(&ScenarioConfig::new(Mode::Ethernet, 1, 1, 1));
        assert_eq!(cfgs.len(), 3 * 192);
        assert!(cfgs.windows(2).all(|w| (w[0].mode, w[0].switches, w[0].producers, w[0].consumers)
            < (w[1].mode, w[1].switches, w[1].producers, w[1].consumers)));
    }
}
