use std::collections::BTreeSet;

use sdsim_core::control_plane::{path_is_connected, SubscriptionState};
use sdsim_core::data_plane::FRAME_OVERHEAD_BYTES;
use sdsim_core::host_model::{ConsumerApp, ProducerApp};
use sdsim_core::scenario::{
    build_network, build_simulation, build_topology, producer_identity, ControllerApp, HostApp, Network, Simulation,
};
use sdsim_core::sd_codec::{Endpoint, ServiceIdentity, SD_RECORD_LEN};
use sdsim_core::topology::LinkSpec;
use sdsim_core::{run_scenario, Mode, RunMetrics, ScenarioConfig, SimError, SimTime};

fn run(mode: Mode, s: usize, p: usize, c: usize) -> Simulation {
    let mut sim = build_simulation(&ScenarioConfig::new(mode, s, p, c)).unwrap();
    sim.run().unwrap();
    sim
}

fn assert_conserved(m: &RunMetrics) {
    let c = m.counters;
    assert_eq!(c.frames_sent, c.frames_delivered + c.frames_dropped, "{c:?}");
}

#[test]
fn single_switch_ethernet_matches_hand_derived_delay_chain() {
    // One SD frame is 62 header bytes plus one 32-byte entry, 752 ns at 1 Gb/s.
    // The consumer learns the service from the producer's initial multicast
    // offer, so the critical path is offer, subscribe, ack. Each crosses the
    // host uplink, the 8 µs forwarding delay and the switch egress link; the
    // concurrent find and its unicast answer never contend with those links.
    let frame_ns = ((FRAME_OVERHEAD_BYTES + SD_RECORD_LEN) * 8) as u64;
    assert_eq!(frame_ns, 752);
    let per_message = frame_ns + 8_000 + frame_ns;
    let expected = 3 * per_message;
    assert_eq!(expected, 28_512);

    let m = run_scenario(&ScenarioConfig::new(Mode::Ethernet, 1, 1, 1)).unwrap();
    assert_eq!(m.setup_time, SimTime::from_nanos(expected));
    assert_eq!(m.positive_acks, 1);
    assert_conserved(&m);
}

#[test]
fn every_mode_delivers_p_times_c_acks() {
    for mode in Mode::ALL {
        for (s, p, c) in [(1, 1, 1), (2, 3, 2), (5, 4, 3)] {
            let m = run_scenario(&ScenarioConfig::new(mode, s, p, c)).unwrap();
            assert_eq!(m.positive_acks, (p * c) as u64, "{mode} S{s} P{p} C{c}");
            assert_eq!(m.nacks, 0);
            assert_conserved(&m);
        }
    }
}

#[test]
fn setup_time_orders_ethernet_below_optimized_below_vanilla_over_five_switches() {
    let t = |mode| run_scenario(&ScenarioConfig::new(mode, 5, 1, 1)).unwrap().setup_time;
    let (eth, opt, van) = (t(Mode::Ethernet), t(Mode::SdnOptimized), t(Mode::SdnVanilla));
    assert!(eth < opt && opt < van, "{eth} {opt} {van}");
}

#[test]
fn only_sdn_modes_talk_to_the_controller() {
    let eth = run_scenario(&ScenarioConfig::new(Mode::Ethernet, 2, 2, 2)).unwrap();
    assert_eq!(eth.counters.packet_ins + eth.counters.flow_mods + eth.counters.packet_outs, 0);
    for mode in [Mode::SdnVanilla, Mode::SdnOptimized] {
        let m = run_scenario(&ScenarioConfig::new(mode, 2, 2, 2)).unwrap();
        assert!(m.counters.packet_ins > 0 && m.counters.packet_outs > 0, "{mode}");
    }
}

#[test]
fn repeated_runs_are_identical() {
    for mode in Mode::ALL {
        let once = || {
            let mut sim = build_simulation(&ScenarioConfig::new(mode, 2, 5, 5)).unwrap();
            sim.network.enable_trace();
            let m = sim.run().unwrap();
            (m, sim.network.take_trace())
        };
        let (a, ta) = once();
        let (b, tb) = once();
        assert_eq!(a, b);
        assert!(!ta.is_empty());
        assert_eq!(ta, tb);
    }
}

#[test]
fn subscription_outcome_does_not_depend_on_mode() {
    let outcome = |mode| {
        let sim = run(mode, 2, 3, 4);
        sim.network
            .hosts
            .iter()
            .filter_map(|h| match h {
                HostApp::Consumer(c) => Some(c.subscribed()),
                HostApp::Producer(_) => None,
            })
            .collect::<Vec<_>>()
    };
    let eth = outcome(Mode::Ethernet);
    assert_eq!(eth.len(), 4);
    assert!(eth.iter().all(|s| s.len() == 3));
    assert_eq!(outcome(Mode::SdnVanilla), eth);
    assert_eq!(outcome(Mode::SdnOptimized), eth);
}

fn aware(net: &Network) -> &sdsim_core::control_plane::SomeIpController {
    match net.controller.as_ref() {
        Some(ControllerApp::Aware(c)) => c,
        _ => panic!("not the SD-aware controller"),
    }
}

#[test]
fn registry_holds_exactly_the_offered_instances() {
    let sim = run(Mode::SdnOptimized, 3, 6, 2);
    let registered: BTreeSet<(u16, u16)> = aware(&sim.network).registry().map(|e| e.identity.key()).collect();
    let offered: BTreeSet<(u16, u16)> = (0..6).map(|i| producer_identity(i).key()).collect();
    assert_eq!(registered, offered);
}

#[test]
fn every_active_subscription_has_a_connected_data_path() {
    for (s, p, c) in [(1, 2, 2), (2, 3, 3), (5, 5, 4)] {
        let sim = run(Mode::SdnOptimized, s, p, c);
        let net = &sim.network;
        let ctrl = aware(net);
        let active: Vec<_> = ctrl
            .subscriptions()
            .filter(|r| r.state == SubscriptionState::Active)
            .collect();
        assert_eq!(active.len(), p * c);
        for rec in active {
            assert_eq!(rec.installed_rules.len(), s);
            assert!(path_is_connected(
                &net.topology,
                |sw| net.switches[sw.0].flow_table(),
                rec.flow(),
                rec.provider_attachment,
                rec.subscriber_attachment,
            ));
        }
    }
}

#[test]
fn withdrawing_every_offer_removes_every_dynamic_rule() {
    let mut sim = run(Mode::SdnOptimized, 5, 4, 3);
    assert!(sim.network.switches.iter().all(|sw| sw.flow_table().unwrap().len() > 1));
    let now = sim.now();
    sim.withdraw_all_offers(now).unwrap();
    let m = sim.run_to_quiescence().unwrap();
    assert_eq!(m.counters.remove_nonexistent, 0);
    for sw in &sim.network.switches {
        let ids: Vec<_> = sw.flow_table().unwrap().rules().iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![sdsim_core::control_plane::PUNT_RULE_ID], "{}", sw.id);
    }
    let ctrl = aware(&sim.network);
    assert_eq!(ctrl.registry().count(), 0);
    assert!(ctrl.path_rules().is_empty());
    assert!(ctrl.subscriptions().all(|r| r.state == SubscriptionState::Withdrawn));
}

fn lonely_consumer(mode: Mode) -> Simulation {
    let topo = build_topology(2, 1, 1, LinkSpec::GIGABIT).unwrap();
    let producer = ProducerApp::new(
        producer_identity(0),
        Endpoint::udp(topo.hosts()[0].address, 30509),
        3,
        SimTime::ZERO,
    );
    let consumer = ConsumerApp::new(
        vec![ServiceIdentity::any(0x7777)],
        Endpoint::udp(topo.hosts()[1].address, 40000),
        3,
        3,
    );
    let hosts = vec![HostApp::Producer(producer), HostApp::Consumer(consumer)];
    let net = Network::new(mode, Default::default(), topo, hosts).unwrap();
    let mut sim = Simulation::new(net, SimTime::from_millis(10));
    sim.activate_all(SimTime::ZERO).unwrap();
    sim
}

#[test]
fn query_for_a_service_nobody_offers_times_out() {
    for mode in Mode::ALL {
        match lonely_consumer(mode).run() {
            Err(SimError::Timeout { unfinished, .. }) => assert_eq!(unfinished, 1, "{mode}"),
            other => panic!("{mode}: expected timeout, got {other:?}"),
        }
    }
}

#[test]
fn invalid_configuration_is_rejected_before_running() {
    let err = build_network(&ScenarioConfig::new(Mode::SdnOptimized, 6, 1, 1)).err().unwrap();
    assert!(matches!(err, SimError::InvalidRange { field: "switches", .. }));
}

#[test]
fn setup_time_grows_with_producers() {
    for mode in Mode::ALL {
        let times: Vec<SimTime> = [1, 5, 10, 20]
            .into_iter()
            .map(|p| run_scenario(&ScenarioConfig::new(mode, 2, p, 5)).unwrap().setup_time)
            .collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]), "{mode}: {times:?}");
    }
}
