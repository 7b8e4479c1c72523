use pace_core::cot::{allocate, default_fixed_bits, AllocatorConfig, BitSource, ObjectInput};
use pace_core::phy::CodeShape;
use pace_core::scene::{BBox, ChannelState};

fn obj(index: u32, category: &str, bbox: BBox, score: u8) -> ObjectInput {
    ObjectInput { index, category: category.into(), bbox, score }
}

#[test]
fn three_object_plan_matches_hand_computation() {
    // 100×100 image; the first and third boxes overlap on a 10×10 square.
    let objects = [
        obj(0, "dog", BBox::new(0, 0, 20, 20), 8),
        obj(1, "cup", BBox::new(50, 50, 30, 10), 4),
        obj(2, "car", BBox::new(10, 10, 20, 20), 0),
    ];
    let channel = ChannelState::new(20.0, 10_000);
    let fixed = default_fixed_bits();
    let cfg = AllocatorConfig { alpha: 0.5, min_region_bits: 256 };
    let plan = allocate(&objects, 100, 100, &channel, BitSource::Fixed(&fixed), &cfg, &CodeShape::default()).unwrap();

    // 10 000 B / 768 B = 13 codewords; headers of 11 + 4·15 bytes need one;
    // four regions may waste one codeword each after the first: 13 − 1 − 4 + 1 = 9.
    assert_eq!(plan.source_pool_bits, 9 * 3072);

    // Fixed lengths 2048·(s + 1): 18432, 10240, 2048; background 2048.
    let refs = [18432.0, 10240.0, 2048.0];
    let imp: Vec<f64> = refs.iter().map(|b| b / 30720.0).collect();
    let bg_imp = 2048.0 / (2048.0 + 30720.0);
    // Union of boxes covers 400 + 300 + 400 − 100 = 1000 px of 10 000.
    let bg_factor = 0.5 * 0.9 + 0.5 * bg_imp;
    let factors = [
        0.5 * 0.04 + 0.5 * imp[0],
        0.5 * 0.03 + 0.5 * imp[1],
        0.5 * 0.04 + 0.5 * imp[2],
    ];
    let sum = bg_factor + factors.iter().sum::<f64>();
    let weights = [bg_factor / sum, factors[0] / sum, factors[1] / sum, factors[2] / sum];

    // Exact shares of 27 648 bits: none under the 256-bit floor here.
    let shares: Vec<f64> = weights.iter().map(|w| w * 27648.0).collect();
    let mut bits: Vec<u64> = shares.iter().map(|s| s.floor() as u64).collect();
    let mut rest = 27648 - bits.iter().sum::<u64>();
    let mut by_remainder: Vec<usize> = (0..4).collect();
    by_remainder.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())));
    for i in by_remainder {
        if rest > 0 {
            bits[i] += 1;
            rest -= 1;
        }
    }

    assert_eq!(plan.background.reference_bits, 2048);
    assert!((plan.background.importance - bg_imp).abs() < 1e-12);
    assert!((plan.background.factor - weights[0]).abs() < 1e-12);
    assert_eq!(plan.background.source_bits, bits[0]);
    for (i, e) in plan.objects.iter().enumerate() {
        assert_eq!(e.reference_bits, refs[i] as u64);
        assert!((e.importance - imp[i]).abs() < 1e-12);
        assert!((e.factor - weights[i + 1]).abs() < 1e-12);
        assert_eq!(e.source_bits, bits[i + 1], "object {i}");
    }
    assert_eq!(plan.total_source_bits(), 27648);
    assert!(plan.projected_wire_bytes <= 10_000);
}

#[test]
fn floor_pins_small_regions_and_rebalances() {
    // A tiny, score-0 object would get under 2000 bits proportionally.
    let objects = [obj(0, "dog", BBox::new(0, 0, 50, 50), 8), obj(1, "ant", BBox::new(90, 90, 2, 2), 0)];
    let channel = ChannelState::new(20.0, 10_000);
    let fixed = default_fixed_bits();
    let cfg = AllocatorConfig { alpha: 0.5, min_region_bits: 4000 };
    let plan = allocate(&objects, 100, 100, &channel, BitSource::Fixed(&fixed), &cfg, &CodeShape::default()).unwrap();
    assert_eq!(plan.objects[1].source_bits, 4000);
    assert_eq!(plan.total_source_bits(), plan.source_pool_bits);
    assert!(plan.objects[0].source_bits > 4000 && plan.background.source_bits > 4000);
}
