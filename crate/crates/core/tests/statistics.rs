//! Monte-Carlo checks of the noise generators, path diagnostics and the
//! second-moment estimator.

use roughlq::noise::{empirical_char_fn, sample, NoiseModel, NoiseSampler, SamplePath, TimeGrid};
use roughlq::observer::{estimate_second_moments, moments_from_models};
use roughlq::rough::{holder_estimate, p_variation};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn brownian_increments_are_centred_with_linear_variance() {
    let grid = TimeGrid::new(1e-3, 1000).unwrap();
    let model = NoiseModel::fbm(0.5, 1.0).unwrap();
    let path = sample(&model, &grid, 1, 7, 0).unwrap();
    let incs = path.coordinate_increments(0);
    let (m, sd) = mean_sd(&incs);
    let t = m / (sd / (incs.len() as f64).sqrt());
    let crit = StudentsT::new(0.0, 1.0, (incs.len() - 1) as f64).unwrap().inverse_cdf(0.995);
    assert!(t.abs() < crit, "t = {t}");

    let sampler = NoiseSampler::new(&model, grid).unwrap();
    for k in [250usize, 500, 1000] {
        let ends: Vec<f64> = (0..2000).map(|r| sampler.sample(1, 7, r).unwrap().values[k][0]).collect();
        let var = ends.iter().map(|x| x * x).sum::<f64>() / ends.len() as f64;
        let t = k as f64 * 1e-3;
        let se = t * (2.0 / ends.len() as f64).sqrt();
        assert!((var - t).abs() < 3.0 * se, "Var B({t}) = {var}");
    }
}

#[test]
fn fbm_marginals_are_self_similar() {
    let h = 0.35;
    let grid = TimeGrid::new(0.25, 16).unwrap();
    let sampler = NoiseSampler::new(&NoiseModel::fbm(h, 1.0).unwrap(), grid).unwrap();
    let n = 10_000u64;
    let at_one: Vec<f64> = (0..n).map(|r| sampler.sample(1, 21, 2 * r).unwrap().values[4][0]).collect();
    let scale = 4f64.powf(h);
    let at_four: Vec<f64> = (0..n)
        .map(|r| sampler.sample(1, 21, 2 * r + 1).unwrap().values[16][0] / scale)
        .collect();
    let d = ks_two_sample(at_one, at_four);
    let crit = 1.628 * (2.0 / n as f64).sqrt();
    assert!(d < crit, "KS {d} >= {crit}");
}

#[test]
fn symmetric_stable_characteristic_function() {
    let (alpha, gamma) = (1.5, 1.0);
    let grid = TimeGrid::new(1.0, 100_000).unwrap();
    let path = sample(&NoiseModel::stable(alpha, 0.0, gamma, 0.0).unwrap(), &grid, 1, 5, 0).unwrap();
    let x = path.coordinate_increments(0);
    for u in [0.1, 0.5, 1.0] {
        let emp = empirical_char_fn(&x, u);
        let exact = (-(gamma * u).powf(alpha)).exp();
        let cos: Vec<f64> = x.iter().map(|v| (u * v).cos()).collect();
        let sin: Vec<f64> = x.iter().map(|v| (u * v).sin()).collect();
        let se_re = mean_sd(&cos).1 / (x.len() as f64).sqrt();
        let se_im = mean_sd(&sin).1 / (x.len() as f64).sqrt();
        assert!((emp.re - exact).abs() < 5.0 * se_re, "u={u}: re {} vs {exact}", emp.re);
        assert!(emp.im.abs() < 5.0 * se_im, "u={u}: im {}", emp.im);
    }
}

#[test]
fn holder_estimates_track_the_hurst_index() {
    let grid = TimeGrid::new(1.0 / 4096.0, 4096).unwrap();
    for (h, lo, hi) in [(0.35, 0.25, 0.45), (0.5, 0.40, 0.60)] {
        let sampler = NoiseSampler::new(&NoiseModel::FBm { hurst: h, sigma: 1.0 }, grid).unwrap();
        for seed in 0..20 {
            let est = holder_estimate(&sampler.sample(1, seed, 0).unwrap()).unwrap();
            assert!((lo..=hi).contains(&est), "H={h} seed={seed}: {est}");
        }
    }
}

#[test]
fn p_variation_is_nonincreasing_in_p() {
    let grid = TimeGrid::new(1.0 / 300.0, 300).unwrap();
    let sampler = NoiseSampler::new(&NoiseModel::fbm(0.35, 1.0).unwrap(), grid).unwrap();
    for seed in 0..10 {
        let path = sampler.sample(2, seed, 0).unwrap();
        let vals: Vec<f64> = [2.0, 2.5, 3.0, 4.0].iter().map(|&p| p_variation(&path, p).unwrap()).collect();
        assert!(vals.iter().all(|v| v.is_finite()));
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12), "seed {seed}: {vals:?}");
    }
}

#[test]
fn independent_brownian_moments() {
    let m = moments_from_models(
        &NoiseModel::Brownian { sigma: 1.0 },
        &NoiseModel::Brownian { sigma: 1.0 },
        2,
        1,
        1e-2,
        200,
        200,
        17,
    )
    .unwrap();
    let count: f64 = 200.0 * 200.0;
    let (se_diag, se_off) = ((2.0 / count).sqrt(), (1.0 / count).sqrt());
    for i in 0..2 {
        for j in 0..2 {
            let (target, se) = if i == j { (1.0, se_diag) } else { (0.0, se_off) };
            assert!((m.sigma_v[(i, j)] - target).abs() < 3.0 * se, "Sigma_v {:?}", m.sigma_v);
        }
        assert!(m.r_vw[(i, 0)].abs() < 3.0 * se_off, "R_vw {:?}", m.r_vw);
    }
    assert!((m.sigma_w[(0, 0)] - 1.0).abs() < 3.0 * se_diag);
    assert_eq!(m.r_wv, m.r_vw.transpose());
}

#[test]
fn identical_processes_have_cross_moment_equal_to_variance() {
    let grid = TimeGrid::new(1e-2, 100).unwrap();
    let sampler = NoiseSampler::new(&NoiseModel::Brownian { sigma: 1.0 }, grid).unwrap();
    let paths: Vec<SamplePath> = (0..100).map(|r| sampler.sample(2, 3, r).unwrap()).collect();
    let m = estimate_second_moments(&paths, &paths, false).unwrap();
    assert!((&m.r_vw - &m.sigma_v).norm() < 1e-12 * m.sigma_v.norm());
}

#[test]
fn fbm_moment_diagonal_scales_as_dt_power() {
    let (h, dt) = (0.35, 1e-2);
    let grid = TimeGrid::new(dt, 200).unwrap();
    let v = NoiseSampler::new(&NoiseModel::fbm(h, 1.0).unwrap(), grid).unwrap();
    let w = NoiseSampler::new(&NoiseModel::Brownian { sigma: 1.0 }, grid).unwrap();
    let reps = 200u64;
    let vp: Vec<SamplePath> = (0..reps).map(|r| v.sample(2, 8, 2 * r).unwrap()).collect();
    let wp: Vec<SamplePath> = (0..reps).map(|r| w.sample(1, 8, 2 * r + 1).unwrap()).collect();
    let m = estimate_second_moments(&vp, &wp, false).unwrap();
    let target = dt.powf(2.0 * h - 1.0);
    for i in 0..2 {
        // Replications are independent, so their spread gives the error bar.
        let per_rep: Vec<f64> = vp
            .iter()
            .map(|p| p.coordinate_increments(i).iter().map(|x| x * x).sum::<f64>() / (200.0 * dt))
            .collect();
        let se = mean_sd(&per_rep).1 / (reps as f64).sqrt();
        assert!((m.sigma_v[(i, i)] - target).abs() < 5.0 * se, "{} vs {target}", m.sigma_v[(i, i)]);
    }
    assert_eq!(m.sigma_v.shape(), (2, 2));
    assert_eq!(m.r_vw.shape(), (2, 1));
}
