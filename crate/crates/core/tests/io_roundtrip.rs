use proptest::prelude::*;
use srmd3d::features::FeatureAtom;
use srmd3d::io::{
    read_atoms_csv, read_ridges_csv, read_signal_csv, read_tensor_binary, write_atoms_csv, write_ridges_csv,
    write_signal_csv, write_spectrogram_csv, write_tensor_binary,
};
use srmd3d::ridge::RidgeCurve;
use srmd3d::signal::{tones, Signal};
use srmd3d::tfa::{stft, StftGrid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn signal_csv_round_trips_bit_exactly(
        values in prop::collection::vec(-1e6f64..1e6, 2..300),
        fs in prop::sample::select(vec![100.0, 1000.0, 1024.0, 8000.0, 44100.0, 48000.0]),
    ) {
        let x = Signal::new(values, fs).unwrap();
        let mut buf = Vec::new();
        write_signal_csv(&mut buf, &x).unwrap();
        let y = read_signal_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(y.sample_rate(), fs);
        prop_assert_eq!(x.samples(), y.samples());
    }

    #[test]
    fn ridge_csv_round_trips(n in 1usize..50, k in 1usize..4, seed in any::<u32>()) {
        let ridges: Vec<RidgeCurve> = (0..k)
            .map(|j| {
                let s = seed as f64 + j as f64;
                RidgeCurve {
                    time_s: (0..n).map(|i| i as f64 * 0.0125).collect(),
                    if_hz: (0..n).map(|i| (s * 0.37 + i as f64 * 1.3).sin() * 100.0 + 200.0).collect(),
                    cr_hzps: (0..n).map(|i| (s + i as f64).cos() * 400.0).collect(),
                    energy: (0..n).map(|i| (s * 0.1 + i as f64).exp().ln_1p()).collect(),
                }
            })
            .collect();
        let mut buf = Vec::new();
        write_ridges_csv(&mut buf, &ridges).unwrap();
        let back = read_ridges_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, ridges);
    }

    #[test]
    fn atom_csv_round_trips(
        raw in prop::collection::vec((0.0f64..1.0, 0.0f64..512.0, -500.0f64..500.0, any::<bool>(), 0usize..4), 1..100),
        with_clusters in any::<bool>(),
    ) {
        let atoms: Vec<FeatureAtom> = raw
            .iter()
            .map(|&(tau, xi, beta, p, mode_index)| FeatureAtom { tau, xi, beta, phi: p as u8, mode_index })
            .collect();
        let clusters: Vec<i64> = (0..atoms.len() as i64).map(|i| i % 3 - 1).collect();
        let mut buf = Vec::new();
        write_atoms_csv(&mut buf, &atoms, with_clusters.then_some(clusters.as_slice())).unwrap();
        prop_assert_eq!(read_atoms_csv(buf.as_slice()).unwrap(), atoms);
    }

    #[test]
    fn tensor_binary_round_trips(a in 1usize..6, b in 1usize..6, c in 1usize..6, seed in any::<u32>()) {
        let values: Vec<f64> = (0..a * b * c).map(|i| (i as f64 + seed as f64).sqrt()).collect();
        let mut buf = Vec::new();
        write_tensor_binary(&mut buf, (a, b, c), &values).unwrap();
        prop_assert_eq!(buf.len(), 24 + 8 * values.len());
        let (dims, back) = read_tensor_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(dims, (a, b, c));
        prop_assert_eq!(back, values);
    }
}

#[test]
fn nonuniform_time_axis_rejected() {
    let text = "time,value\n0,1\n0.1,2\n0.3,3\n";
    assert!(read_signal_csv(text.as_bytes()).is_err());
}

#[test]
fn start_time_is_kept() {
    let x = Signal::new(vec![1.0, 2.0, 3.0, 4.0], 4.0).unwrap().with_start_time(2.5);
    let mut buf = Vec::new();
    write_signal_csv(&mut buf, &x).unwrap();
    let y = read_signal_csv(buf.as_slice()).unwrap();
    assert_eq!(y.start_time(), 2.5);
    assert_eq!(y.samples(), x.samples());
}

#[test]
fn spectrogram_csv_has_one_row_per_cell() {
    let (x, _) = tones(&[100.0], 1024.0, 0.25).unwrap();
    let grid = StftGrid::gaussian(0.0125f64.powi(2), 1024.0).unwrap();
    let spec = stft(&x, &grid).unwrap();
    let mut buf = Vec::new();
    write_spectrogram_csv(&mut buf, &spec).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "frame,freq,cr,magnitude");
    assert_eq!(text.lines().count(), 1 + spec.n_frames * spec.n_bins);
}
