use proptest::prelude::*;
use stsmix::data::sample_sphere;
use stsmix::graph::{EdgeWeight, PointSet};
use stsmix::numerics::{Matrix, Rng};
use stsmix::spectral::{band_decompose, band_reject, gft, igft, rmse, spectrum_rows, Band, BandSpec, GraphSpectrum};

/// Seed of the 64-point unit-sphere sample used as a frozen regression case.
const SPHERE_SEED: u64 = 7;

// Independent oracle: the same 64 points fed to numpy (union-symmetrized binary
// 10-NN adjacency, L = D - W, numpy.linalg.eigh), energies of UᵀX.
const ORACLE_LOW_FRACTION: f64 = 0.9596857212515202; // indices [0, 6)
const ORACLE_HIGH_FRACTION: f64 = 0.017601402333632735; // indices [10, 64)
const ORACLE_CUMULATIVE_AT_6: f64 = 0.9719815207200353; // indices [0, 6]
const ORACLE_RMSE_DROP_HIGH: f64 = 0.07659721999662202;
const ORACLE_RMSE_DROP_MID_HIGH: f64 = 0.11592278859723787;

fn sphere() -> Matrix {
    let pts = sample_sphere(&mut Rng::new(SPHERE_SEED), 64);
    Matrix::from_rows(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn spectrum_of(coords: &Matrix, k: usize) -> GraphSpectrum {
    GraphSpectrum::of_points(&PointSet::new(coords.clone()).unwrap(), k, EdgeWeight::Binary).unwrap()
}

#[test]
fn sphere_energy_matches_frozen_oracle() {
    let x = sphere();
    let s = spectrum_of(&x, 10);
    let rows = spectrum_rows(&s, &x).unwrap();
    let total: f64 = rows.iter().map(|r| r.energy).sum();
    let low: f64 = rows[..6].iter().map(|r| r.energy).sum::<f64>() / total;
    let high: f64 = rows[10..].iter().map(|r| r.energy).sum::<f64>() / total;
    assert!((low - ORACLE_LOW_FRACTION).abs() <= 1e-9, "{low}");
    assert!((high - ORACLE_HIGH_FRACTION).abs() <= 1e-9, "{high}");
    assert!((rows[6].cumulative_fraction - ORACLE_CUMULATIVE_AT_6).abs() <= 1e-9);
    assert!(low > 0.5 && low > high);
    assert!((rows.last().unwrap().cumulative_fraction - 1.0).abs() <= 1e-12);
    assert!(rows.windows(2).all(|w| w[0].eigenvalue <= w[1].eigenvalue));
}

#[test]
fn sphere_band_rejection_matches_frozen_oracle() {
    let x = sphere();
    let s = spectrum_of(&x, 10);
    let bands = BandSpec::new(6, 10, 64).unwrap();
    let err = |drop: &[Band]| rmse(&band_reject(&s, &x, drop, &bands).unwrap(), &x);
    assert!(err(&[]) <= 1e-12);
    assert!((err(&[Band::High]) - ORACLE_RMSE_DROP_HIGH).abs() <= 1e-9);
    assert!((err(&[Band::Mid, Band::High]) - ORACLE_RMSE_DROP_MID_HIGH).abs() <= 1e-9);
    // removing everything leaves the zero cloud, whose error is the RMS of unit vectors
    assert!((err(&Band::ALL) - (1.0f64 / 3.0).sqrt()).abs() <= 1e-12);
}

#[test]
fn dropping_low_band_recenters_the_cloud() {
    let mut x = sphere();
    for i in 0..x.rows() {
        x.set(i, 0, x.get(i, 0) + 2.0);
    }
    let s = spectrum_of(&x, 10);
    let bands = BandSpec::new(6, 10, 64).unwrap();
    let y = band_reject(&s, &x, &[Band::Low], &bands).unwrap();
    for c in 0..3 {
        let mean = |m: &Matrix| (0..m.rows()).map(|i| m.get(i, c)).sum::<f64>() / m.rows() as f64;
        assert!(mean(&y).abs() < mean(&x).abs().max(1e-12), "coordinate {c}");
    }
}

fn cloud(n: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_is_orthonormal(pts in prop_oneof![cloud(16), cloud(40)]) {
        let x = Matrix::from_rows(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
        let s = spectrum_of(&x, 6);
        let c = gft(&s, &x).unwrap();
        let back = igft(&s, &c).unwrap();
        prop_assert!(back.max_abs_diff(&x) <= 1e-9);
        let norm = |m: &Matrix| m.data().iter().map(|v| v * v).sum::<f64>();
        prop_assert!((norm(&c) - norm(&x)).abs() <= 1e-9 * norm(&x));
        let n = pts.len();
        let bands = BandSpec::new(n / 4, n / 2, n).unwrap();
        let parts = band_decompose(&s, &x, &bands).unwrap();
        prop_assert!(parts.sum().max_abs_diff(&x) <= 1e-6);
        prop_assert!(s.frequencies()[0].abs() <= 1e-9);
    }
}
