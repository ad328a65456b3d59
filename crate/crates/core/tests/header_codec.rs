mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smartpacket::header::{
    decode, encode, parse_hex, HeaderError, IdsSF, QosSmartSF, RbsSF, RegionStackSF,
    SmartPacketHeader,
};

fn stack_sf() -> impl Strategy<Value = RegionStackSF> {
    (
        proptest::option::of(0u8..16),
        proptest::option::of(any::<u8>()),
        proptest::collection::vec(any::<u16>(), 1..12),
    )
        .prop_map(|(ephemeral_fid, intra_region_fid, entries)| RegionStackSF {
            ephemeral_fid,
            intra_region_fid,
            entries,
        })
}

fn ids_sf() -> impl Strategy<Value = IdsSF> {
    (
        proptest::option::of(0u16..4096),
        proptest::option::of(0u16..4096),
        any::<u16>(),
        proptest::option::of(any::<u16>()),
    )
        .prop_map(|(packet_pid, flow_fid, sender_nid, receiver_nid)| IdsSF {
            packet_pid,
            flow_fid,
            sender_nid,
            receiver_nid,
        })
}

fn qos_sf() -> impl Strategy<Value = QosSmartSF> {
    let nib = || proptest::option::of(0u8..16);
    (nib(), nib(), nib(), nib(), proptest::option::of(1u8..16)).prop_map(|(a, b, c, d, f)| {
        QosSmartSF {
            single_hop_latency: a,
            path_latency: b,
            single_hop_loss: c,
            path_loss: d,
            fission_rate: f,
        }
    })
}

fn header() -> impl Strategy<Value = SmartPacketHeader> {
    let smart = (
        stack_sf(),
        ids_sf(),
        proptest::option::of(qos_sf()),
        proptest::option::of(proptest::collection::vec(any::<u16>(), 0..10)),
    )
        .prop_map(|(stack, ids, qos, rbs)| {
            let mut h = SmartPacketHeader::new(stack, ids);
            h.qos = qos;
            h.rbs = rbs.map(|traversed| RbsSF { traversed });
            h
        });
    let legacy = (stack_sf(), proptest::collection::vec(any::<u8>(), 1..32))
        .prop_map(|(stack, bytes)| smartpacket::header::prepend_stack(bytes, stack).unwrap());
    prop_oneof![4 => smart, 1 => legacy]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip(h in header()) {
        let bytes = encode(&h).unwrap();
        prop_assert_eq!(decode(&bytes).unwrap(), h);
    }

    #[test]
    fn legacy_bytes_follow_smart_fields(h in header()) {
        // Every SuperField pads to whole bytes, so the legacy payload starts
        // exactly where the SmartPacket part ends.
        if let Some(legacy) = h.legacy_payload_header.clone() {
            let bytes = encode(&h).unwrap();
            prop_assert!(bytes.ends_with(&legacy));
        }
    }

    #[test]
    fn truncation_is_an_error(h in header(), cut in 1usize..8) {
        let bytes = encode(&h).unwrap();
        if h.legacy_payload_header.is_none() && cut <= bytes.len() {
            prop_assert!(decode(&bytes[..bytes.len() - cut]).is_err());
        }
    }
}

fn base() -> SmartPacketHeader {
    SmartPacketHeader::new(RegionStackSF::new([8]), IdsSF::new(3, Some(81)))
}

fn range_err(h: &SmartPacketHeader) -> bool {
    matches!(encode(h), Err(HeaderError::ValueRange { .. }))
}

#[test]
fn out_of_width_values_rejected() {
    let mut h = base();
    h.ids.as_mut().unwrap().packet_pid = Some(4096);
    assert!(range_err(&h));
    let mut h = base();
    h.ids.as_mut().unwrap().flow_fid = Some(0x1000);
    assert!(range_err(&h));
    let mut h = base();
    h.region_stack.ephemeral_fid = Some(16);
    assert!(range_err(&h));
    for field in 0..5 {
        let mut q = QosSmartSF::default();
        match field {
            0 => q.single_hop_latency = Some(16),
            1 => q.path_latency = Some(16),
            2 => q.single_hop_loss = Some(16),
            3 => q.path_loss = Some(16),
            _ => q.fission_rate = Some(16),
        }
        assert!(range_err(&base().with_qos(q)), "qos field {field}");
    }
    let zero_fission = QosSmartSF {
        fission_rate: Some(0),
        ..Default::default()
    };
    assert!(range_err(&base().with_qos(zero_fission)));
}

#[test]
fn widest_in_range_values_round_trip() {
    let mut h = SmartPacketHeader::new(
        RegionStackSF::new([u16::MAX; 3]),
        IdsSF::new(u16::MAX, Some(u16::MAX)),
    );
    h.region_stack.ephemeral_fid = Some(15);
    h.region_stack.intra_region_fid = Some(255);
    let ids = h.ids.as_mut().unwrap();
    ids.packet_pid = Some(4095);
    ids.flow_fid = Some(4095);
    let h = h.with_qos(QosSmartSF {
        single_hop_latency: Some(15),
        path_latency: Some(15),
        single_hop_loss: Some(15),
        path_loss: Some(15),
        fission_rate: Some(15),
    });
    assert_eq!(decode(&encode(&h).unwrap()).unwrap(), h);
}

#[test]
fn stack_limits() {
    let h = SmartPacketHeader::new(RegionStackSF::new(vec![1; 255]), IdsSF::new(1, None));
    assert_eq!(decode(&encode(&h).unwrap()).unwrap(), h);
    let h = SmartPacketHeader::new(RegionStackSF::new(vec![1; 256]), IdsSF::new(1, None));
    assert!(matches!(encode(&h), Err(HeaderError::StackOverflow { .. })));
    let h = SmartPacketHeader::new(RegionStackSF::new(Vec::<u16>::new()), IdsSF::new(1, None));
    assert_eq!(encode(&h), Err(HeaderError::EmptyStack));
}

#[test]
fn golden_files_decode() {
    let minimal = parse_hex(include_str!("../fixtures/golden_minimal.hex")).unwrap();
    let h = decode(&minimal).unwrap();
    assert_eq!(h.region_stack.entries, vec![8]);
    assert_eq!(h.sender(), Some(3));
    let full = parse_hex(include_str!("../fixtures/golden_full.hex")).unwrap();
    let h = decode(&full).unwrap();
    assert_eq!(h.region_stack.entries, vec![5, 7, 8]);
    assert_eq!(h.receiver(), Some(81));
    assert_eq!(h.rbs.as_ref().unwrap().traversed, vec![1, 2]);
    assert_eq!(encode(&h).unwrap(), full);
}

#[test]
fn bit_flips_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20_000 {
        let h = common::random_header(&mut rng);
        let mut bytes = encode(&h).unwrap();
        let i = rng.gen_range(0..bytes.len());
        bytes[i] ^= 1 << rng.gen_range(0..8);
        if let Ok(back) = decode(&bytes) {
            // Whatever decodes must itself be a valid header.
            assert!(back.validate().is_ok());
        }
    }
}
