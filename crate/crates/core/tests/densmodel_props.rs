use multiscan::densmodel::{
    density_stat, simulate_alternative_stream, simulate_uniform_stream, sqrt_2_log_lr, DensityAlternative,
    OrderWindow, PointSample,
};
use proptest::prelude::*;

// independent evaluation of the log likelihood ratio
fn oracle(n: usize, m: usize, p: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    if m / n <= p {
        return 0.0;
    }
    let inside = m * (m / (n * p)).ln();
    let outside = if m == n { 0.0 } else { (n - m) * ((n - m) / (n * (1.0 - p))).ln() };
    (2.0 * (inside + outside)).sqrt()
}

proptest! {
    #[test]
    fn depends_only_on_n_m_p(
        n in 3usize..60,
        seed in 0u64..1000,
        start in 0.0f64..0.5,
    ) {
        let base = simulate_uniform_stream(n, seed, 0).unwrap();
        let j = 1 + (seed as usize) % (n - 1);
        let k = n.min(j + 1 + (seed as usize / 7) % (n - j));
        let win = OrderWindow::new(j, k);
        let p = base.points()[k - 1] - base.points()[j - 1];
        // another sample: same counts outside and inside, block moved to `start`
        let lo = start.min(1.0 - p);
        let mut pts = Vec::with_capacity(n);
        for i in 0..j - 1 {
            pts.push(lo * (i as f64 + 0.5) / (j as f64));
        }
        for i in 0..=(k - j) {
            pts.push(lo + p * i as f64 / (k - j) as f64);
        }
        for i in 0..n - k {
            pts.push(lo + p + (1.0 - lo - p) * (i as f64 + 0.5) / ((n - k) as f64));
        }
        let other = PointSample::new(pts).unwrap();
        let p2 = other.points()[k - 1] - other.points()[j - 1];
        let a = density_stat(&base, win).unwrap();
        let b = sqrt_2_log_lr(n, k - j + 1, p2);
        prop_assert!((density_stat(&other, win).unwrap() - b).abs() < 1e-12);
        prop_assert!((a - oracle(n, k - j + 1, p)).abs() <= 1e-9 * (1.0 + a));
        prop_assert!((b - oracle(n, k - j + 1, p2)).abs() <= 1e-9 * (1.0 + b));
    }

    #[test]
    fn increasing_in_m_above_uniform_mass(n in 10usize..500, frac in 0.01f64..0.9) {
        let p = frac * 0.5;
        let m0 = ((p * n as f64).floor() as usize + 1).max(2);
        let mut prev = sqrt_2_log_lr(n, m0, p);
        for m in m0 + 1..=n {
            let next = sqrt_2_log_lr(n, m, p);
            prop_assert!(next > prev, "n={} m={} p={}", n, m, p);
            prev = next;
        }
    }

    #[test]
    fn matches_oracle(n in 2usize..10_000, m_frac in 0.0f64..1.0, p in 1e-6f64..1.0) {
        let m = 2 + ((n - 2) as f64 * m_frac) as usize;
        let v = sqrt_2_log_lr(n, m, p);
        prop_assert!(v >= 0.0);
        prop_assert!((v - oracle(n, m, p)).abs() <= 1e-9 * (1.0 + v));
    }
}

#[test]
fn central_window_tail_is_sub_gaussian() {
    let reps = 20_000u64;
    let win = OrderWindow::new(26, 75);
    let mut exceed = [0usize; 3];
    for r in 0..reps {
        let v = density_stat(&simulate_uniform_stream(100, 13, r).unwrap(), win).unwrap();
        for (i, e) in exceed.iter_mut().enumerate() {
            *e += (v > (i + 1) as f64) as usize;
        }
    }
    for (i, e) in exceed.iter().enumerate() {
        let t = (i + 1) as f64;
        assert!((*e as f64 / reps as f64) <= 1.5 * (-t * t / 2.0).exp(), "t = {t}");
    }
}

#[test]
fn elevated_interval_attracts_points() {
    let alt = DensityAlternative::new(4.0, 0.45, 0.55).unwrap();
    let n = 10_000;
    let sample = simulate_alternative_stream(n, &alt, 3, 0).unwrap();
    let inside = sample.points().iter().filter(|x| (0.45..0.55).contains(*x)).count() as f64 / n as f64;
    assert!((inside - alt.mass_inside()).abs() < 0.015, "fraction inside {inside}");
}
