//! Physicality of the covariance matrices along the model pipeline, checked
//! with an independent linear-algebra library.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use qng_core::gaussian::{beamsplitter_cm, condition_on_click, detection_noise_cm, input_cm, CovMat4, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(m: &CovMat4) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m.0[i][j])
}

/// Smallest eigenvalue of `gamma + i Omega`, via its real symmetric
/// embedding `[[gamma, -Omega], [Omega, gamma]]`.
fn min_eig_with_omega(g: &Matrix4<f64>) -> f64 {
    let mut omega = Matrix4::zeros();
    for k in 0..2 {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    let big = DMatrix::from_fn(8, 8, |i, j| match (i < 4, j < 4) {
        (true, true) => g[(i, j)],
        (true, false) => -omega[(i, j - 4)],
        (false, true) => omega[(i - 4, j)],
        (false, false) => g[(i - 4, j - 4)],
    });
    SymmetricEigen::new(big).eigenvalues.min()
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let vx = rng.random_range(0.05..0.5);
    let vp = rng.random_range(0.25 / vx..(0.25 / vx + 3.0));
    ModelParams {
        vx,
        vp,
        t: rng.random_range(0.5..0.999),
        eta: rng.random_range(0.01..1.0),
        eta_h: rng.random_range(0.1..1.0),
        nth: rng.random_range(0.0..0.5),
        q: rng.random_range(0.0..1.0),
    }
}

#[test]
fn beamsplitter_matches_symplectic_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let p = random_params(&mut rng);
        let g = input_cm(&p).unwrap();
        let (st, sr) = (p.t.sqrt(), (1.0 - p.t).sqrt());
        // a' = sqrt(T) a - sqrt(R) b, b' = sqrt(R) a + sqrt(T) b
        let s = Matrix4::new(st, 0.0, -sr, 0.0, 0.0, st, 0.0, -sr, sr, 0.0, st, 0.0, 0.0, sr, 0.0, st);
        let mut input = Matrix4::identity();
        for i in 0..2 {
            for j in 0..2 {
                input[(i, j)] = g.0[i][j];
            }
        }
        let want = s * input * s.transpose();
        let got = to_na(&beamsplitter_cm(&g, p.t).unwrap());
        assert!((want - got).abs().max() < 1e-14);
    }
}

#[test]
fn pipeline_stays_physical() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let ab = beamsplitter_cm(&input_cm(&p).unwrap(), p.t).unwrap();
        assert!(min_eig_with_omega(&to_na(&ab)) >= -1e-10);
        let noisy = detection_noise_cm(&ab, p.eta_h, p.nth, p.eta).unwrap();
        assert!(min_eig_with_omega(&to_na(&noisy)) >= -1e-10, "{p:?}");
        let st = condition_on_click(&noisy).unwrap();
        assert!(st.p0prime > 0.0 && st.p0prime < 1.0);
        let d = st.gamma_i.sub(&st.gamma_0);
        assert!(d.min_eigenvalue() >= -1e-12, "{p:?}");
    }
}
