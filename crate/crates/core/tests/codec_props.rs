use proptest::prelude::*;
use ttsd_core::delay_codec::*;

fn grid() -> impl Strategy<Value = TokenGrid> {
    (1usize..=16, 0usize..=64, 1u32..=1024).prop_flat_map(|(k, t, v)| {
        prop::collection::vec(0..v, k * t)
            .prop_map(move |values| TokenGrid::new(k, t, v, DEFAULT_FRAME_RATE_HZ, values).unwrap())
    })
}

proptest! {
    #[test]
    fn delay_roundtrip_and_layout(g in grid()) {
        let pad = g.vocab_size();
        let d = apply_delay(&g, pad).unwrap();
        let (k, t) = (g.codebooks(), g.frames());
        prop_assert_eq!(d.width(), t + k - 1);
        prop_assert_eq!(d.pad_count(), k * (k - 1));
        for row in 0..k {
            let r = d.row(row);
            prop_assert!(r[..row].iter().all(|&x| x == pad));
            prop_assert!(r[row + t..].iter().all(|&x| x == pad));
            prop_assert_eq!(&r[row..row + t], g.row(row));
        }
        prop_assert_eq!(revert_delay(&d).unwrap(), g);
    }

    #[test]
    fn binary_roundtrip(g in grid()) {
        prop_assert_eq!(TokenGrid::read_from(&g.to_bytes()[..]).unwrap(), g.clone());
        let d = apply_delay(&g, g.vocab_size()).unwrap();
        prop_assert_eq!(DelayedGrid::read_from(&d.to_bytes()[..]).unwrap(), d);
    }

    #[test]
    fn layer_selection_composes(g in grid(), a in 1usize..=16, b in 1usize..=16) {
        let k = g.codebooks();
        let (m, n) = (a.max(b).min(k), a.min(b).min(k));
        let twice = select_layers(&select_layers(&g, m).unwrap(), n).unwrap();
        prop_assert_eq!(twice, select_layers(&g, n).unwrap());
    }
}

#[test]
fn in_vocab_pad_is_rejected() {
    let g = TokenGrid::from_rows(&[vec![0, 1], vec![2, 3]], 4, 12.5).unwrap();
    assert!(apply_delay(&g, 3).is_err());
}

#[test]
fn corrupted_magic_is_rejected() {
    let g = TokenGrid::from_rows(&[vec![0, 1]], 4, 12.5).unwrap();
    let mut bytes = g.to_bytes();
    bytes[0] ^= 0xff;
    assert!(TokenGrid::read_from(&bytes[..]).is_err());
}

#[test]
fn bitrate_budget() {
    assert_eq!(bits_per_token(1024), 10);
    assert_eq!(bits_per_token(1025), 11);
    let b = frame_accounting(45_000, 16, 1024, 12.5);
    assert_eq!(b.bits_per_second, 2000.0);
    assert_eq!(b.duration_s, 3600.0);
}
