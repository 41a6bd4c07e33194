//! The covariance-matrix model against the truncated Fock-space engine.

use qng_core::fock::{apply_loss, subtract_photon_auto};
use qng_core::gaussian::{antisqueeze_state, photon_probs, ConditionalState, ModelParams};

const RS: [f64; 3] = [0.2, 0.5, 1.0];
const TS: [f64; 4] = [0.8, 0.9, 0.923, 0.99];

#[test]
fn ideal_detection_grid() {
    for r in RS {
        for t in TS {
            let st = ConditionalState::from_params(&ModelParams::pure_ideal(r, t)).unwrap();
            let (g0, g1) = photon_probs(&st).unwrap();
            let p = subtract_photon_auto(r, t).unwrap().probabilities();
            assert!((g0 - p[0]).abs() < 1e-6 && (g1 - p[1]).abs() < 1e-6, "r={r} T={t}: ({g0}, {g1}) vs ({}, {})", p[0], p[1]);
        }
    }
}

#[test]
fn antisqueezed_probabilities_agree() {
    for r in [0.3, 0.8] {
        let st = ConditionalState::from_params(&ModelParams::pure_ideal(r, 0.9)).unwrap();
        let fock = subtract_photon_auto(r, 0.9).unwrap();
        for s in [-0.4, 0.15, 0.5, 1.0] {
            let (g0, g1) = photon_probs(&antisqueeze_state(&st, s)).unwrap();
            let (f0, f1) = fock.antisqueezed_p01(s);
            assert!((g0 - f0).abs() < 1e-6 && (g1 - f1).abs() < 1e-6, "r={r} s={s}");
        }
    }
}

#[test]
fn homodyne_inefficiency_is_a_loss_channel() {
    let (r, t) = (0.5, 0.923);
    let fock = subtract_photon_auto(r, t).unwrap();
    for eta_h in [0.3, 0.8] {
        let params = ModelParams { eta_h, ..ModelParams::pure_ideal(r, t) };
        let (g0, g1) = photon_probs(&ConditionalState::from_params(&params).unwrap()).unwrap();
        let p = apply_loss(&fock, eta_h).unwrap().probabilities();
        assert!((g0 - p[0]).abs() < 1e-6 && (g1 - p[1]).abs() < 1e-6);
    }
}

#[test]
fn reference_conditional_state() {
    let st = ConditionalState::from_params(&ModelParams::reference()).unwrap();
    assert!((st.p0prime - 0.999661).abs() < 2e-6);
    assert!((st.gamma_i.0[0][0] - 0.7992).abs() < 1e-3 && (st.gamma_i.0[1][1] - 1.3027).abs() < 1e-3);
    let d = st.gamma_i.sub(&st.gamma_0);
    assert!(d.min_eigenvalue() >= 0.0);
}
