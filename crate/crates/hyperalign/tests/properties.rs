//! Property tests for the structural invariants: closure of the dihedral
//! group, mixing envelopes, neighbor-probability normalization, patch
//! center fidelity, and grammar round-trips over generated specs.

use proptest::prelude::*;

use hyperalign::augment::{dihedral_variants, virtual_mix};
use hyperalign::cube::{
    extract_patches, DomainTag, HyperCube, LabelMap, PatchSelection, ValueKind,
};
use hyperalign::datl::{neighbor_probs, FeatureBatch};
use hyperalign::net::{parse_config, render_config, LayerSpec, NetworkSpec};
use hyperalign::tensor::Tensor;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dihedral_set_is_closed_under_composition(
        window in prop::sample::select(vec![1usize, 3, 5]),
        bands in 1usize..4,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let patch: Vec<f64> = (0..window * window * bands)
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        let variants = dihedral_variants(&patch, window, bands).unwrap();
        prop_assert_eq!(variants.len(), 8);
        for v in &variants {
            for w in dihedral_variants(v, window, bands).unwrap() {
                prop_assert!(variants.contains(&w));
            }
        }
    }

    #[test]
    fn mix_stays_inside_the_elementwise_envelope(
        a in prop::collection::vec(0.0f64..1.0, 1..12),
        weight in 0.0f64..=1.0,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
        let mixed = virtual_mix(&a, &b, 1, 1, weight).unwrap();
        for ((m, x), y) in mixed.iter().zip(&a).zip(&b) {
            prop_assert!(*m >= x.min(*y) - 1e-12);
            prop_assert!(*m <= x.max(*y) + 1e-12);
        }
    }

    #[test]
    fn neighbor_probs_form_a_distribution(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..10),
        query in prop::collection::vec(-50.0f64..50.0, 3),
    ) {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let batch = FeatureBatch::new(
            DomainTag::Source,
            Tensor::from_vec(&[n, 3], flat),
            vec![1; n],
        ).unwrap();
        let probs = neighbor_probs(&batch, &query, true).unwrap();
        let sum: f64 = probs.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(probs.iter().all(|p| *p >= 0.0 && p.is_finite()));
    }

    #[test]
    fn patch_centers_reproduce_cube_spectra(
        height in 3usize..8,
        width in 3usize..8,
        bands in 1usize..4,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..height * width * bands)
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        let wavelengths: Vec<f64> = (0..bands).map(|b| 400.0 + 10.0 * b as f64).collect();
        let cube = HyperCube::new(height, width, wavelengths, ValueKind::Reflectance, values).unwrap();
        let labels = LabelMap::new(height, width, vec![1; height * width], vec!["c".into()]).unwrap();
        let window = 3.min(height.min(width));
        let window = if window % 2 == 0 { window - 1 } else { window };
        let set = extract_patches(&cube, &labels, window, PatchSelection::All, DomainTag::Source).unwrap();
        for i in 0..set.len() {
            let (r, c) = set.origin_coords[i];
            prop_assert_eq!(set.center_spectrum(i), cube.spectrum(r, c));
        }
    }

    #[test]
    fn grammar_round_trips_generated_specs(
        bands in 1usize..200,
        convs in prop::collection::vec((2usize..6, 1usize..65), 0..3),
        recurs in prop::collection::vec(1usize..65, 0..3),
        denses in prop::collection::vec(1usize..65, 0..3),
        classes in prop::option::of(1usize..16),
    ) {
        let mut layers = Vec::new();
        for (k, f) in convs {
            layers.push(LayerSpec::Conv { kernel: k, filters: f });
            layers.push(LayerSpec::MaxPool);
        }
        for d in recurs {
            layers.push(LayerSpec::Recurrent { state_dim: d });
        }
        for u in denses {
            layers.push(LayerSpec::Dense { units: u });
        }
        if let Some(c) = classes {
            layers.push(LayerSpec::Softmax { classes: c });
        }
        let spec = NetworkSpec {
            input_bands: bands,
            input_window: 1,
            layers,
            auto_pool: true,
        };
        prop_assume!(spec.validate().is_ok());
        let rendered = render_config(&spec);
        let reparsed = parse_config(&rendered).unwrap();
        prop_assert_eq!(reparsed, spec);
    }
}
