mod common;

use common::{random_buffers, random_video};
use proptest::prelude::*;
use splatfix_core::VideoTensor;
use splatfix_refiner::latent::{
    apply_modality_mask, encode_gpbuffer, Normalization, KEEP_ALL, NUM_MODALITIES,
};
use splatfix_refiner::{decode, encode, Error};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn patchify_round_trip_is_bitwise(
        seed in any::<u64>(),
        gt in 1usize..3, gy in 1usize..3, gx in 1usize..3,
        c in 1usize..4, ps in 1usize..5, pt in 1usize..4,
    ) {
        let v = random_video(gt * pt, gy * ps, gx * ps, c, -3.0, 3.0, seed);
        let lat = encode(&v, ps, pt).unwrap();
        prop_assert_eq!(lat.tokens.rows, gt * gy * gx);
        prop_assert_eq!(lat.tokens.cols, pt * ps * ps * c);
        let back = decode(&lat).unwrap();
        prop_assert_eq!(back.dims(), v.dims());
        prop_assert!(back.data.iter().zip(&v.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn round_trip_at_f32() {
    let v = random_video(8, 32, 32, 3, 0.0, 1.0, 4).cast::<f32>();
    let back = decode(&encode(&v, 8, 4).unwrap()).unwrap();
    assert!(back
        .data
        .iter()
        .zip(&v.data)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn token_count_follows_grid() {
    let v = VideoTensor::<f64>::zeros(8, 32, 32, 3);
    let lat = encode(&v, 8, 4).unwrap();
    assert_eq!(lat.geom.grid(), [2, 4, 4]);
    assert_eq!(lat.tokens.shape(), (32, 768));
}

#[test]
fn constant_video_gives_constant_tokens() {
    let mut v = VideoTensor::<f64>::zeros(4, 16, 16, 3);
    for px in v.data.chunks_exact_mut(3) {
        px.copy_from_slice(&[0.1, 0.2, 0.3]);
    }
    let lat = encode(&v, 8, 4).unwrap();
    for k in 0..lat.tokens.rows {
        for (j, x) in lat.tokens.row(k).iter().enumerate() {
            assert_eq!(*x, [0.1, 0.2, 0.3][j % 3]);
        }
    }
}

#[test]
fn non_divisible_dims_are_rejected() {
    for (f, h, w) in [(6, 32, 32), (8, 30, 32), (8, 32, 20)] {
        let v = VideoTensor::<f64>::zeros(f, h, w, 3);
        assert!(
            matches!(encode(&v, 8, 4), Err(Error::Shape(_))),
            "{f}x{h}x{w}"
        );
    }
}

#[test]
fn gpbuffer_stacks_five_latents() {
    let buf = random_buffers(4, 16, 16, 1);
    let z = encode_gpbuffer(&buf, &Normalization::default(), KEEP_ALL, 8, 4).unwrap();
    let c_lat = 4 * 8 * 8 * 3;
    assert_eq!(z.shape(), (4, NUM_MODALITIES * c_lat));
    assert!(z.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    // the color block is the normalized color latent
    let color = encode(&buf.color.map(|c| 2.0 * c - 1.0), 8, 4).unwrap();
    for k in 0..4 {
        assert_eq!(&z.row(k)[..c_lat], color.tokens.row(k));
    }
}

#[test]
fn all_dropped_is_zero_and_mask_matches_encoding() {
    let buf = random_buffers(4, 16, 16, 2);
    let norm = Normalization::default();
    let z = encode_gpbuffer(&buf, &norm, [false; 5], 8, 4).unwrap();
    assert!(z.data.iter().all(|v| *v == 0.0));
    let keep = [true, false, true, false, true];
    let full = encode_gpbuffer(&buf, &norm, KEEP_ALL, 8, 4).unwrap();
    assert_eq!(
        apply_modality_mask(&full, keep),
        encode_gpbuffer(&buf, &norm, keep, 8, 4).unwrap()
    );
}

#[test]
fn depth_range_maps_to_unit_interval_endpoints() {
    let norm = Normalization {
        near: 0.5,
        far: 10.0,
        cov_floor: 0.3,
    };
    assert_eq!(norm.depth(0.5f64), -1.0);
    assert_eq!(norm.depth(10.0), 1.0);
    assert_eq!(norm.depth(5.25), 0.0);
    assert_eq!(norm.depth(0.0), -1.0);
    assert_eq!(norm.depth(50.0), 1.0);
    let u = norm.uncertainty::<f64>([1.0 / 0.3, -1.0 / 0.3, 0.0]);
    assert!((u[0] - 1.0).abs() < 1e-12 && (u[1] + 1.0).abs() < 1e-12 && u[2] == -1.0);
}

#[test]
fn mismatched_modalities_are_rejected() {
    let mut buf = random_buffers(4, 16, 16, 3);
    buf.depth = VideoTensor::zeros(4, 8, 32, 1);
    assert!(matches!(
        encode_gpbuffer(&buf, &Normalization::default(), KEEP_ALL, 8, 4),
        Err(Error::Shape(_))
    ));
}
