use fedvsr_core::dwt3d::{dwt3d_forward, dwt3d_inverse, high_freq_stack, unstack_high_freq, Band, SubBands};
use fedvsr_core::reference;
use fedvsr_core::{Dims, FedVsrError, VideoTensor};
use proptest::prelude::*;

const INV_2SQRT2: f64 = 0.353_553_390_593_273_8;

fn even_volume() -> impl Strategy<Value = VideoTensor> {
    (1usize..=3, 1usize..=4, 1usize..=4, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(t, h, w, c)| {
        let dims = Dims::new(2 * t, 2 * h, 2 * w, c);
        prop::collection::vec(-2.0f64..2.0, dims.len()).prop_map(move |v| VideoTensor::new(dims, v).unwrap())
    })
}

fn volume_pair() -> impl Strategy<Value = (VideoTensor, VideoTensor)> {
    even_volume().prop_flat_map(|x| {
        let dims = x.dims();
        (
            Just(x),
            prop::collection::vec(-2.0f64..2.0, dims.len()).prop_map(move |v| VideoTensor::new(dims, v).unwrap()),
        )
    })
}

fn max_band_diff(a: &SubBands, b: &SubBands) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|((_, x), (_, y))| x.max_abs_diff(y).unwrap())
        .fold(0.0, f64::max)
}

#[test]
fn constant_cube_lands_in_lll() {
    let x = VideoTensor::filled(Dims::new(2, 2, 2, 1), 0.7);
    let b = dwt3d_forward(&x).unwrap();
    assert!((b.lll().data()[0] - 0.7 * 2f64.powf(1.5)).abs() < 1e-15);
    for band in Band::HIGH {
        assert!(b.get(band).data()[0].abs() < 1e-14);
    }
}

#[test]
fn impulse_signs_follow_the_filter_oracle() {
    // an impulse at an even tap reaches every band with a positive sign; at an
    // odd tap each high-pass axis flips the sign
    for (pos, odd) in [((0, 0, 0), false), ((1, 1, 1), true)] {
        let x = VideoTensor::from_fn(Dims::new(2, 2, 2, 1), |t, y, w, _| {
            if (t, y, w) == pos {
                1.0
            } else {
                0.0
            }
        });
        let b = dwt3d_forward(&x).unwrap();
        for (band, slow) in Band::ALL.iter().zip(reference::dwt3d_bands(&x)) {
            let got = b.get(*band).data()[0];
            let flips = if odd {
                band.highpass_axes().iter().filter(|&&h| h).count()
            } else {
                0
            };
            let want = INV_2SQRT2 * if flips % 2 == 0 { 1.0 } else { -1.0 };
            assert!((got - want).abs() < 1e-15, "{} {got} {want}", band.name());
            assert!((got - slow.data()[0]).abs() < 1e-15);
        }
    }
}

#[test]
fn random_volume_matches_oracle() {
    let x = VideoTensor::from_fn(Dims::new(4, 4, 4, 3), |t, y, w, c| {
        ((t * 131 + y * 71 + w * 37 + c * 11) % 97) as f64 / 97.0 - 0.3
    });
    let b = dwt3d_forward(&x).unwrap();
    for ((_, fast), slow) in b.iter().zip(reference::dwt3d_bands(&x)) {
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12);
    }
}

#[test]
fn band_names_and_order() {
    let names: Vec<&str> = Band::ALL.iter().map(|b| b.name()).collect();
    assert_eq!(names, ["LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"]);
    // first letter is the depth axis
    assert_eq!(Band::Hll.highpass_axes(), [true, false, false]);
    assert_eq!(Band::Llh.highpass_axes(), [false, false, true]);
}

#[test]
fn zero_bands_invert_to_zero_and_constants_survive_lll_only() {
    let d = Dims::new(2, 4, 4, 1);
    let zeros = SubBands::new(std::array::from_fn(|_| VideoTensor::zeros(d))).unwrap();
    assert!(dwt3d_inverse(&zeros).unwrap().data().iter().all(|&v| v == 0.0));

    let c = VideoTensor::filled(Dims::new(4, 8, 8, 1), -1.25);
    let b = dwt3d_forward(&c).unwrap();
    let lll_only = SubBands::new(std::array::from_fn(|i| {
        if i == 0 {
            b.lll().clone()
        } else {
            VideoTensor::zeros(d)
        }
    }))
    .unwrap();
    assert!(dwt3d_inverse(&lll_only).unwrap().max_abs_diff(&c).unwrap() < 1e-15);
}

#[test]
fn stack_shape_order_and_constant_input() {
    let x = VideoTensor::from_fn(Dims::new(2, 2, 2, 1), |t, y, w, _| (t * 4 + y * 2 + w) as f64);
    let b = dwt3d_forward(&x).unwrap();
    let s = high_freq_stack(&b);
    assert_eq!(s.dims(), Dims::new(1, 1, 1, 7));
    for (j, band) in Band::HIGH.iter().enumerate() {
        assert_eq!(s.data()[j], b.get(*band).data()[0]);
    }

    let x = VideoTensor::from_fn(Dims::new(2, 4, 4, 3), |t, y, w, c| ((t + 2 * y + 3 * w) * (c + 1)) as f64 * 0.01);
    let b = dwt3d_forward(&x).unwrap();
    let s = high_freq_stack(&b);
    assert_eq!(s.dims(), Dims::new(1, 2, 2, 21));
    for (j, band) in Band::HIGH.iter().enumerate() {
        for c in 0..3 {
            assert_eq!(s.get(0, 1, 0, j * 3 + c), b.get(*band).get(0, 1, 0, c));
        }
    }
    let back = unstack_high_freq(&s).unwrap();
    assert!(back.lll().data().iter().all(|&v| v == 0.0));

    let c = dwt3d_forward(&VideoTensor::filled(Dims::new(4, 4, 4, 1), 0.3)).unwrap();
    assert!(high_freq_stack(&c).data().iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn odd_dims_are_rejected_with_axis_name() {
    for (dims, axis) in [
        (Dims::new(3, 4, 4, 1), "depth"),
        (Dims::new(2, 5, 4, 1), "height"),
        (Dims::new(2, 4, 7, 1), "width"),
    ] {
        match dwt3d_forward(&VideoTensor::zeros(dims)) {
            Err(FedVsrError::Shape(msg)) => assert!(msg.contains(axis), "{msg}"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perfect_reconstruction(x in even_volume()) {
        let back = dwt3d_inverse(&dwt3d_forward(&x).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&x).unwrap() <= 1e-10);
    }

    #[test]
    fn energy_is_conserved(x in even_volume()) {
        let e = x.sum_squares();
        let b = dwt3d_forward(&x).unwrap();
        prop_assert!((b.energy() - e).abs() <= 1e-9 * e.max(1e-300));
    }

    #[test]
    fn transform_is_linear((x, y) in volume_pair(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let combo = x.zip_map(&y, |p, q| a * p + c * q).unwrap();
        let lhs = dwt3d_forward(&combo).unwrap();
        let (bx, by) = (dwt3d_forward(&x).unwrap(), dwt3d_forward(&y).unwrap());
        let rhs = SubBands::new(std::array::from_fn(|i| {
            let (p, q) = (&bx.clone().into_array()[i], &by.clone().into_array()[i]);
            p.zip_map(q, |u, v| a * u + c * v).unwrap()
        }))
        .unwrap();
        prop_assert!(max_band_diff(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn high_bands_ignore_constant_offsets(x in even_volume(), c in -5.0f64..5.0) {
        let shifted = x.map(|v| v + c);
        let a = high_freq_stack(&dwt3d_forward(&x).unwrap());
        let b = high_freq_stack(&dwt3d_forward(&shifted).unwrap());
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-10);
    }

    #[test]
    fn stack_roundtrip(x in even_volume()) {
        let b = dwt3d_forward(&x).unwrap();
        let back = unstack_high_freq(&high_freq_stack(&b)).unwrap();
        for band in Band::HIGH {
            prop_assert_eq!(back.get(band), b.get(band));
        }
    }
}
