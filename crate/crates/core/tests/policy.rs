use jointmpc::policy::{particle_weights, shift, update_distribution, CovarianceMode, PolicyParams};
use jointmpc::sampling::ControlBatch;
use jointmpc::PolicyConfig;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const H: usize = 4;
const D: usize = 2;

fn batch_strategy() -> impl Strategy<Value = (Vec<DMatrix<f64>>, Vec<f64>)> {
    (3usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, H * D), n),
            prop::collection::vec(0.0f64..20.0, n),
        )
            .prop_map(|(us, costs)| {
                let us = us.into_iter().map(|v| DMatrix::from_vec(H, D, v)).collect();
                (us, costs)
            })
    })
}

fn policy(mean: f64) -> PolicyParams {
    let mut p = PolicyParams::new(H, D, 1.0, CovarianceMode::PerJointDiagonal);
    p.means.fill(mean);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weights_peak_at_the_cheapest_particle((_us, costs) in batch_strategy(), beta in 0.05f64..10.0) {
        let totals = DVector::from_vec(costs.clone());
        let w = particle_weights(&totals, beta).unwrap();
        let best = totals.argmin().0;
        prop_assert_eq!(w[best], 1.0);
        for (i, wi) in w.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(wi));
            if costs[i] > costs[best] + 1e-9 {
                prop_assert!(*wi < 1.0);
            }
        }
    }

    #[test]
    fn new_mean_is_a_convex_combination((us, costs) in batch_strategy(), m0 in -5.0f64..5.0) {
        let p = policy(m0);
        let batch = ControlBatch { controls: us.clone(), null_count: 0 };
        let cfg = PolicyConfig::default().update_config(D);
        let next = update_distribution(&p, &batch, &DVector::from_vec(costs), &cfg).unwrap();
        for r in 0..H {
            for c in 0..D {
                let lo = us.iter().map(|u| u[(r, c)]).fold(m0, f64::min);
                let hi = us.iter().map(|u| u[(r, c)]).fold(m0, f64::max);
                let v = next.means[(r, c)];
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "{v} outside [{lo}, {hi}]");
                let var = next.variances[(r, c)];
                prop_assert!(var >= cfg.variance_min && var <= cfg.variance_max);
            }
        }
    }

    #[test]
    fn update_ignores_particle_order((us, costs) in batch_strategy(), rotate in 0usize..10) {
        let p = policy(0.3);
        let cfg = PolicyConfig::default().update_config(D);
        let n = us.len();
        let k = rotate % n;
        let mut us_p = us.clone();
        us_p.rotate_left(k);
        let mut costs_p = costs.clone();
        costs_p.rotate_left(k);
        let a = update_distribution(&p, &ControlBatch { controls: us, null_count: 0 }, &DVector::from_vec(costs), &cfg).unwrap();
        let b = update_distribution(&p, &ControlBatch { controls: us_p, null_count: 0 }, &DVector::from_vec(costs_p), &cfg).unwrap();
        prop_assert!((a.means - b.means).abs().max() < 1e-9);
        prop_assert!((a.variances - b.variances).abs().max() < 1e-9);
    }

    #[test]
    fn shift_drops_the_first_step(vals in prop::collection::vec(-2.0f64..2.0, H * D), tail in -1.0f64..1.0) {
        let mut p = policy(0.0);
        p.means = DMatrix::from_vec(H, D, vals);
        p.variances = p.means.map(|v| 0.5 + v.abs());
        let s = shift(&p, &[tail; D], 2.0);
        for r in 0..H - 1 {
            prop_assert_eq!(s.means.row(r), p.means.row(r + 1));
            prop_assert_eq!(s.variances.row(r), p.variances.row(r + 1));
        }
        prop_assert!(s.means.row(H - 1).iter().all(|v| *v == tail));
        prop_assert!(s.variances.row(H - 1).iter().all(|v| *v == 2.0));
    }
}

#[test]
fn quarantined_particles_get_no_weight() {
    let totals = DVector::from_vec(vec![f64::INFINITY, 2.0, 1.0]);
    let w = particle_weights(&totals, 1.0).unwrap();
    assert_eq!(w[0], 0.0);
    assert!(particle_weights(&DVector::from_element(3, f64::INFINITY), 1.0).is_err());
}
