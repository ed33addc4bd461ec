use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textsep::dsp::{ideal_ratio_mask, IRM_EPSILON, MagnitudeSpectrogram, StftConfig, Waveform, WindowKind};
use textsep::metrics::{decompose, sdr};
use textsep::mixer::{build_mixture_tree, GainPolicy, SourceClip};
use textsep::separator::{Checkpoint, SeparatorConfig, SeparatorModel};

fn small_stft() -> StftConfig {
    StftConfig { window_length: 64, hop_length: 16, window_kind: WindowKind::Hann, fft_length: 64 }
}

fn clip(i: usize, len: usize, rng: &mut ChaCha8Rng) -> SourceClip {
    let amp = rng.gen_range(0.05..1.0);
    SourceClip {
        audio: Waveform::new((0..len).map(|_| amp * rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap(),
        class_label: format!("class {i}"),
        clip_id: format!("c{i}"),
        descriptor: None,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tree_nodes_are_sums_of_children(seed in any::<u64>(), len in 64usize..600) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clips = [0, 1, 2, 3].map(|i| clip(i, len, &mut rng));
        let tree = build_mixture_tree(clips, &GainPolicy::default().with_seed(seed), &small_stft()).unwrap();
        let leaves: Vec<Waveform> = (0..4).map(|i| tree.scaled_leaf(i)).collect();
        for (m, pair) in tree.mid.iter().zip(leaves.chunks(2)) {
            let sum = Waveform::sum(&[&pair[0], &pair[1]]).unwrap();
            prop_assert!(max_abs_diff(m.samples(), sum.samples()) < 1e-12);
        }
        let root = Waveform::sum(&[&tree.mid[0], &tree.mid[1]]).unwrap();
        prop_assert!(max_abs_diff(tree.root.samples(), root.samples()) < 1e-12);
        prop_assert_eq!(tree.root.len(), len);
    }

    #[test]
    fn ratio_masks_partition_each_bin(seed in any::<u64>(), n in 2usize..5, bins in 1usize..20, frames in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mags: Vec<MagnitudeSpectrogram> = (0..n)
            .map(|_| MagnitudeSpectrogram {
                bins: ndarray::Array2::from_shape_fn((bins, frames), |_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..3.0) }),
                config: small_stft(),
                sample_rate: 16_000,
                original_length: 64,
            })
            .collect();
        let masks = ideal_ratio_mask(&mags).unwrap();
        for f in 0..bins {
            for t in 0..frames {
                let vals: Vec<f64> = masks.iter().map(|m| m.bins()[[f, t]]).collect();
                let energy: f64 = mags.iter().map(|m| m.bins[[f, t]]).sum();
                prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
                // Σ m = E / (E + ε); silent bins get 0.
                let want = energy / (energy + IRM_EPSILON);
                prop_assert!((vals.iter().sum::<f64>() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sdr_ignores_estimate_gain(seed in any::<u64>(), gain in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refs: Vec<Waveform> = (0..2).map(|i| clip(i, 256, &mut rng).audio).collect();
        let est: Vec<f64> = refs[0].samples().iter().map(|x| x + 0.2 * rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = est.iter().map(|x| x * gain).collect();
        let a = sdr(&decompose(&Waveform::new(est, 16_000).unwrap(), &refs, 0).unwrap());
        let b = sdr(&decompose(&Waveform::new(scaled, 16_000).unwrap(), &refs, 0).unwrap());
        prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoint_bytes_round_trip(init_seed in any::<u64>()) {
        let model = SeparatorModel::new(SeparatorConfig { init_seed, ..SeparatorConfig::micro() }).unwrap();
        let ckpt = Checkpoint::from_model(model);
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ckpt);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
