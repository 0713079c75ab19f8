use mumimo_core::channel::{generate_channels, perturb_csi, substream};
use mumimo_core::SystemDims;
use statrs::distribution::{ContinuousCDF, Normal};

/// Kolmogorov-Smirnov statistic of `xs` against `cdf`.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value at the 1% level.
fn ks_critical(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

fn entries(m_ratio: f64, eves: bool, draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let dims = SystemDims::baseline();
    let mut rng = substream(seed, &[]);
    let (mut re, mut im) = (Vec::new(), Vec::new());
    for _ in 0..draws {
        let set = generate_channels(&dims, m_ratio, 1.0, 1.0, &mut rng).unwrap();
        let mats = if eves { set.eves } else { set.users };
        for h in mats {
            for z in h.as_slice() {
                re.push(z.re);
                im.push(z.im);
            }
        }
    }
    (re, im)
}

#[test]
fn user_entries_are_circular_gaussian() {
    // 2 users x 2 x 4 = 16 entries per draw.
    let (re, im) = entries(0.5, false, 6250, 21);
    assert_eq!(re.len(), 100_000);
    let half = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    for xs in [re, im] {
        let n = xs.len();
        let d = ks_statistic(xs, |x| half.cdf(x));
        assert!(d < ks_critical(n), "D = {d:.5} vs {:.5}", ks_critical(n));
    }
}

#[test]
fn eavesdropper_entries_carry_m_ratio() {
    let m = 2.0;
    let (re, im) = entries(m, true, 6250, 22);
    let dist = Normal::new(0.0, (m / 2.0).sqrt()).unwrap();
    for xs in [re, im] {
        let n = xs.len();
        let d = ks_statistic(xs, |x| dist.cdf(x));
        assert!(d < ks_critical(n), "D = {d:.5}");
    }
}

#[test]
fn ks_rejects_the_wrong_variance() {
    let (re, _) = entries(0.5, false, 6250, 23);
    let wrong = Normal::new(0.0, 1.0).unwrap();
    let n = re.len();
    assert!(ks_statistic(re, |x| wrong.cdf(x)) > ks_critical(n));
}

#[test]
fn csi_error_has_the_requested_variance() {
    let dims = SystemDims::baseline();
    let mut rng = substream(24, &[]);
    let var = 0.05;
    let mut diffs = Vec::new();
    for _ in 0..6250 {
        let set = generate_channels(&dims, 0.5, 1.0, 1.0, &mut rng).unwrap();
        let csi = perturb_csi(&set, var, &mut rng).unwrap();
        for (h, e) in set.users.iter().zip(&csi.users_est) {
            diffs.extend((e - h).as_slice().iter().map(|z| z.re));
        }
    }
    let dist = Normal::new(0.0, (var / 2.0).sqrt()).unwrap();
    let n = diffs.len();
    assert!(ks_statistic(diffs, |x| dist.cdf(x)) < ks_critical(n));
}
