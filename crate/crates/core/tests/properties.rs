use echobp::phantom::diameter_from_pressure;
use echobp::pipeline::{evaluate, pearson_r, Alignment};
use echobp::pressure::{beat_metrics, diameter_waveform, pressure_from_diameter, RHO_BLOOD};
use echobp::pwv::pwv_regression;
use echobp::rf::{RfStream, RfStreamHeader, FORMAT_VERSION};
use echobp::signal::SampledSeries;
use proptest::prelude::*;

fn header() -> impl Strategy<Value = RfStreamHeader> {
    (1u8..4, 1u32..100_000_000, 1u32..5000, 1u32..64, any::<u32>(), 1u32..2_000_000).prop_map(
        |(n_channels, rf_rate_hz, prf_hz, samples_per_frame, element_spacing_um, speed_of_sound_mmps)| RfStreamHeader {
            version: FORMAT_VERSION,
            n_channels,
            rf_rate_hz,
            prf_hz,
            samples_per_frame,
            element_spacing_um,
            speed_of_sound_mmps,
        },
    )
}

fn stream() -> impl Strategy<Value = RfStream> {
    (header(), 0usize..6).prop_flat_map(|(h, ticks)| {
        prop::collection::vec(any::<i16>(), h.tick_len() * ticks).prop_map(move |data| RfStream { header: h, data })
    })
}

/// Smooth pulsatile pressure at 200 Hz with onsets every second.
fn pressure(dbp: f64, pp: f64, seconds: usize) -> SampledSeries {
    let v = (0..seconds * 200)
        .map(|i| {
            let ph = (i as f64 / 200.0).fract();
            dbp + pp * (std::f64::consts::PI * ph).sin().powi(2) * (1.0 - 0.3 * ph)
        })
        .collect();
    SampledSeries::new(v, 200.0, 0.0).unwrap()
}

fn onsets(seconds: usize) -> Vec<f64> {
    (0..seconds).map(|i| i as f64).collect()
}

proptest! {
    #[test]
    fn rf_format_round_trip(s in stream()) {
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        let back = RfStream::read_from(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &s);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn pwv_ignores_time_offset(offset in -1.0f64..1.0, d1 in 1e-3f64..4e-3, d2 in 1e-3f64..4e-3) {
        let x = [0.0, 0.018, 0.036];
        let t = [0.0, d1, d1 + d2];
        let shifted: Vec<f64> = t.iter().map(|v| v + offset).collect();
        let (a, _) = pwv_regression(&x, &t).unwrap();
        let (b, _) = pwv_regression(&x, &shifted).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * a.abs());
    }

    #[test]
    fn pwv_scales_with_spacing(k in 0.1f64..10.0, d1 in 1e-3f64..4e-3, d2 in 1e-3f64..4e-3) {
        let t = [0.0, d1, d1 + d2];
        let (a, _) = pwv_regression(&[0.0, 0.018, 0.036], &t).unwrap();
        let (b, _) = pwv_regression(&[0.0, 0.018 * k, 0.036 * k], &t).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-9 * b.abs());
    }

    #[test]
    fn pressure_diameter_round_trip(
        dbp in 40.0f64..110.0,
        pp in 5.0f64..80.0,
        pwv in 3.0f64..15.0,
        dd in 4.0f64..12.0,
    ) {
        let p = pressure(dbp, pp, 2);
        let d = diameter_from_pressure(&p, pwv, dd, dbp, RHO_BLOOD).unwrap();
        let w = diameter_waveform(&d, dd, 0, vec![0.0, 1.0]).unwrap();
        let back = pressure_from_diameter(&w, pwv, dbp, RHO_BLOOD).unwrap();
        for (a, b) in back.series.values.iter().zip(&p.values) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs());
        }
    }

    #[test]
    fn dbp_input_only_offsets_pressure(dbp in 40.0f64..110.0, shift in -30.0f64..30.0, pwv in 3.0f64..15.0) {
        let d = diameter_from_pressure(&pressure(80.0, 40.0, 3), 8.0, 8.2, 80.0, RHO_BLOOD).unwrap();
        let w = diameter_waveform(&d, 8.2, 0, onsets(3)).unwrap();
        let a = pressure_from_diameter(&w, pwv, dbp, RHO_BLOOD).unwrap();
        let b = pressure_from_diameter(&w, pwv, dbp + shift, RHO_BLOOD).unwrap();
        for (x, y) in a.series.values.iter().zip(&b.series.values) {
            prop_assert!((y - x - shift).abs() < 1e-9);
        }
        let (ba, bb) = (beat_metrics(&a).unwrap(), beat_metrics(&b).unwrap());
        for (x, y) in ba.iter().zip(&bb) {
            prop_assert!((x.pp_mmhg - y.pp_mmhg).abs() < 1e-9);
            prop_assert!((x.ff.unwrap() - y.ff.unwrap()).abs() < 1e-9);
            prop_assert!(y.dbp_mmhg <= y.map_mmhg && y.map_mmhg <= y.sbp_mmhg);
        }
    }

    #[test]
    fn pressure_is_monotone_in_diameter(d1 in 6.0f64..10.0, step in 1e-6f64..1.0, pwv in 3.0f64..15.0) {
        let s = SampledSeries::new(vec![d1, d1 + step], 200.0, 0.0).unwrap();
        let w = diameter_waveform(&s, 6.0, 0, vec![]).unwrap();
        let p = pressure_from_diameter(&w, pwv, 70.0, RHO_BLOOD).unwrap();
        prop_assert!(p.series.values[1] > p.series.values[0]);
    }

    #[test]
    fn evaluate_rmse_is_symmetric(noise in prop::collection::vec(-3.0f64..3.0, 8)) {
        let r = pressure(70.0, 40.0, 8);
        let m = SampledSeries::new(
            r.values.iter().enumerate().map(|(i, v)| v + noise[i / 200]).collect(),
            200.0,
            0.0,
        )
        .unwrap();
        let ab = evaluate(&m, &r, &onsets(8), Alignment::None).unwrap();
        let ba = evaluate(&r, &m, &onsets(8), Alignment::None).unwrap();
        prop_assert!((ab.rmse - ba.rmse).abs() < 1e-12);
        prop_assert!((ab.pearson_r - ba.pearson_r).abs() < 1e-12);
    }

    #[test]
    fn pearson_r_is_affine_invariant(
        a in prop::collection::vec(-100.0f64..100.0, 3..50),
        scale in 0.01f64..100.0,
        offset in -1000.0f64..1000.0,
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.5 + (i as f64).sin()).collect();
        let r = pearson_r(&a, &b);
        prop_assume!(r.is_finite());
        let scaled: Vec<f64> = a.iter().map(|v| v * scale + offset).collect();
        prop_assert!((pearson_r(&scaled, &b) - r).abs() < 1e-9);
        let flipped: Vec<f64> = a.iter().map(|v| -v * scale + offset).collect();
        prop_assert!((pearson_r(&flipped, &b) + r).abs() < 1e-9);
    }
}
