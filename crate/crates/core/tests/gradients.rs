mod common;

use common::{activations, gradient_error, instance, regularizers, worst_gradient_error};
use proptest::prelude::*;
use zae_core::models::Regularizer;

#[test]
fn every_activation_and_regularizer_matches_finite_differences() {
    for act in activations() {
        for reg in regularizers() {
            let err = worst_gradient_error(act, reg, 5, 1e-3);
            assert!(err < 1e-4, "{act} with {reg:?}: relative error {err:e}");
        }
    }
}

#[test]
fn negative_contraction_is_differentiated_too() {
    for act in activations() {
        let reg = Regularizer::Contractive { lambda: -0.4 };
        let err = worst_gradient_error(act, reg, 3, 1e-3);
        assert!(err < 1e-4, "{act}: {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_shapes_match(seed in 0u64..10_000, dim in 1usize..5, hidden in 1usize..5, batch in 1usize..6, which in 0usize..15) {
        let act = activations()[which % 5];
        let reg = regularizers()[which / 5];
        if let Some((m, x)) = instance(act, reg, dim, hidden, batch, seed, 1e-3) {
            let err = gradient_error(&m, &x, reg, seed);
            prop_assert!(err < 1e-4, "{} {:?}: {:e}", act, reg, err);
        }
    }
}
