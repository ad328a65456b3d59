mod common;

use std::collections::BTreeSet;

use smartpacket::routing::FlowKey;
use smartpacket::sim::{parse_scenario, run_scenario, trace_query, MetricsReport, SimError};

fn run_text(text: &str) -> MetricsReport {
    run_scenario(&parse_scenario(text, None).unwrap()).unwrap()
}

fn flow(s: &str) -> FlowKey {
    s.parse().unwrap()
}

const LISTED_TAILS: [[u16; 4]; 3] = [[3, 5, 7, 8], [3, 6, 7, 8], [4, 6, 7, 8]];

#[test]
fn empty_script_all_zero() {
    let r = run_text("topology fig3\nseed 1\nduration 100\n");
    assert_eq!(r.totals, Default::default());
    assert!(r.flows.is_empty() && r.traces.is_empty());
    assert_eq!(r.map_convergence_tick, None);
}

#[test]
fn hundred_packets_follow_listed_paths() {
    for effort in ["minimal", "maximal"] {
        let r = run_text(&format!(
            "topology fig3\nseed 2\nduration 300\nconfig * effort={effort}\n\
             send from 11 to 81 count 100 every 1 at 0 fid 1\n"
        ));
        assert_eq!(r.totals.delivered, 100, "{effort}");
        let traces = trace_query(&r, &flow("11->81#1")).unwrap();
        assert_eq!(traces.len(), 100);
        for t in traces {
            let t = common::trace_raw(&t);
            assert_eq!(&t[..2], &[1, 2]);
            assert!(LISTED_TAILS.iter().any(|p| p[..] == t[2..]), "trace {t:?}");
        }
    }
}

#[test]
fn reduncast_copies_take_distinct_first_regions() {
    let r = run_text(
        "topology fig3\nseed 3\nduration 300\n\
         send from 11 to 81 count 20 every 2 at 0 fid 4 fission 2\n",
    );
    assert_eq!(r.totals.delivered, 20);
    assert_eq!(r.totals.deliveries, 20);
    assert_eq!(r.totals.duplicates, 20);
    for pkt in 0..20u64 {
        let copies: Vec<_> = r.traces.iter().filter(|t| t.packet == pkt).collect();
        assert_eq!(copies.len(), 2);
        let after_c: BTreeSet<_> = copies.iter().map(|t| t.regions[2]).collect();
        assert_eq!(after_c.len(), 2, "packet {pkt}");
    }
}

#[test]
fn courtesy_rbs_equals_trace_minus_destination() {
    let r =
        run_text("topology fig3\nseed 4\nduration 100\nsend from 11 to 81 count 10 at 0 fid 1\n");
    let delivered: Vec<_> = r
        .traces
        .iter()
        .filter(|t| t.outcome == "delivered")
        .collect();
    assert_eq!(delivered.len(), 10);
    for t in delivered {
        let regions = common::trace_raw(&t.regions);
        assert_eq!(t.rbs.as_deref(), Some(&regions[..regions.len() - 1]));
    }
}

#[test]
fn clearing_region_empties_rbs() {
    let r = run_text(
        "topology fig3\nseed 4\nduration 100\nconfig region 2 courtesy=off\n\
         send from 11 to 81 count 5 at 0 fid 1\n",
    );
    for t in r.traces.iter().filter(|t| t.outcome == "delivered") {
        // C clears; A, H and G append after it.
        assert_eq!(t.rbs.as_deref(), Some(&[3, 5, 7][..]));
    }
}

#[test]
fn same_seed_same_bytes_with_loss() {
    let text = "topology fig3\nseed 9\nduration 400\nlink-loss 0.05\nconfig * effort=maximal\n\
                send from 11 to 81 count 200 every 1 at 0 fid 1 fission 2\n\
                send from 31 to 61 count 50 every 3 at 5\n";
    let a = run_text(text).to_json();
    let b = run_text(text).to_json();
    assert_eq!(a, b);
    let other = run_text(&text.replace("seed 9", "seed 10")).to_json();
    assert_ne!(a, other);
}

#[test]
fn loss_rate_within_three_sigma() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pair.topo"),
        "switch 1\nnode 2\nnode 3\nlink 1 2\nlink 1 3\n",
    )
    .unwrap();
    let n = 100_000u64;
    let p = 0.1;
    let text = format!(
        "topology pair.topo\nregions all\nseed 12\nduration {}\nlink-loss {p}\n\
         send from 2 to 3 count {n} every 1 at 0\n",
        n + 10
    );
    let r = run_scenario(&parse_scenario(&text, Some(dir.path())).unwrap()).unwrap();
    assert_eq!(r.totals.sent, n);
    // Two lossy links per packet.
    let q = 1.0 - (1.0 - p) * (1.0 - p);
    let sigma = (n as f64 * q * (1.0 - q)).sqrt();
    let dropped = r.totals.dropped as f64;
    assert!(
        (dropped - n as f64 * q).abs() <= 3.0 * sigma,
        "dropped {dropped}"
    );
}

#[test]
fn reports_round_trip_and_csv_rows() {
    let r = run_text(
        "topology fig3\nseed 5\nduration 100\nsend from 11 to 81 count 3 at 0 fid 1\n\
         send from 31 to 61 count 3 at 0 fid 2\n",
    );
    assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
    assert_eq!(r.to_csv().lines().count(), 3);
    assert!(matches!(
        trace_query(&r, &flow("1->2")),
        Err(SimError::UnknownFlow(_))
    ));
}

#[test]
fn runtime_script_errors_carry_lines() {
    let s = parse_scenario(
        "topology fig3\nseed 1\nduration 10\n\nfail-link 10 80 at 5\n",
        None,
    )
    .unwrap();
    match run_scenario(&s) {
        Err(SimError::Script { line, .. }) => assert_eq!(line, 5),
        other => panic!("unexpected {other:?}"),
    }
    let s = parse_scenario("topology nowhere.topo\nseed 1\nduration 10\n", None).unwrap();
    assert!(matches!(run_scenario(&s), Err(SimError::Load(_))));
}

#[test]
fn narrow_horizon_pulls_maps() {
    let base = "topology fig3\nseed 6\nduration 200\nhorizon neighbors\n\
                send from 11 to 81 count 20 every 1 at 0 fid 1\n";
    let discard = run_text(base);
    let retain = run_text(&format!("{base}pull retain\n"));
    assert_eq!(discard.totals.delivered, 20);
    assert_eq!(retain.totals.delivered, 20);
    assert!(retain.pull_queries > 0);
    assert!(discard.pull_queries > retain.pull_queries);
    let wide = run_text(&base.replace("horizon neighbors\n", ""));
    assert_eq!(wide.pull_queries, 0);
}

#[test]
fn regulator_hub_forwards_clean_traffic() {
    let r = run_text(
        "topology fig3\nseed 7\nduration 300\nalert target 81 rogue 4 ttl 1000 trh 71 at 0\n\
         send from 11 to 81 count 10 every 1 at 20 fid 1\nattack from 4 to 81 rate 1 at 20 until 30\n",
    );
    let clean = r.flow(&flow("11->81#1")).unwrap();
    assert_eq!(clean.delivered, 10);
    assert!(r.switches.diverted > 0);
    assert_eq!(r.totals.blocked, 10);
    let rogue = smartpacket::regions::RegionId::new(4);
    let score = r.region_scores.iter().find(|s| s.region == rogue).unwrap();
    assert!(score.score < 1.0);
}

#[test]
fn gesture_off_loses_in_flight_packets() {
    let text = |fw: u64| {
        format!(
            "topology fig3\nseed 8\nduration 400\nmobility forward={fw} inform=1000\n\
             send from 11 to 81 count 100 every 1 at 0 fid 1\nmove 81 to 5 at 50\n"
        )
    };
    let kept = run_text(&text(500));
    assert_eq!(kept.totals.delivered, 100);
    assert!(kept.switches.gesture_forwards + kept.switches.redirected > 0);
    let lost = run_text(&text(0));
    assert!(lost.totals.delivered < 100);
    assert_eq!(
        lost.totals.sent,
        lost.totals.delivered + lost.totals.dropped
    );
}

#[test]
fn explorer_restores_maps_after_failure() {
    let r = run_text(
        "topology fig3\nseed 9\nduration 200\nexplorer-period 40\nfail-link 30 50 at 10\n\
         send from 11 to 81 count 50 every 2 at 60 fid 1\n",
    );
    assert!(r.explorer_messages > 0);
    assert!(r.map_convergence_tick.is_some());
    assert_eq!(r.totals.delivered, 50);
    for t in trace_query(&r, &flow("11->81#1")).unwrap() {
        let t = common::trace_raw(&t);
        assert!(!t.windows(2).any(|w| w == [3, 5]), "trace {t:?}");
    }
}

#[test]
fn legacy_packets_delivered() {
    let r =
        run_text("topology fig3\nseed 1\nduration 100\nsend from 11 to 81 count 4 at 0 legacy\n");
    // Without an IDs SuperField across the network, every node of R receives it.
    assert_eq!(r.totals.delivered, 4);
    assert!(r.flows.is_empty());
}

#[test]
fn accepted_paths_are_charged() {
    let text = |fee: &str| {
        format!(
            "topology fig3\nseed 2\nduration 100\nconfig * fee={fee}\n\
             send from 11 to 81 count 5 every 1 at 0 fid 1\n"
        )
    };
    let paid = run_text(&text("1.5"));
    let free = run_text(&text("0"));
    assert!(paid.switches.transactions > 0);
    assert_eq!(paid.switches.transactions, free.switches.transactions);
    assert!(paid.switches.fee_millis > 0);
    assert_eq!(free.switches.fee_millis, 0);
}
