//! Blind phase search with the I/Q compensator applied to every candidate.
//!
//! For each symbol and each test phase `φ_b` the candidate `u = C·P(-φ_b)·x`
//! is sliced and its squared decision distance accumulated over a centered
//! window of `window` symbols; the test phase with the smallest sum wins.
//! Test phases cover `[-π/4, π/4)`; the winning phases are unwrapped across
//! the π/2 symmetry so consecutive estimates never differ by more than π/4.

use std::collections::VecDeque;

use num_complex::Complex;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BpsConfig {
    pub window: usize,
    pub n_test: usize,
}

impl Default for BpsConfig {
    fn default() -> Self {
        Self {
            window: 40,
            n_test: 32,
        }
    }
}

impl BpsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("bps.window", "must be at least 1"));
        }
        if self.n_test < 2 {
            return Err(Error::invalid("bps.n_test", "must be at least 2"));
        }
        Ok(())
    }

    pub fn test_phases<T: Real>(&self) -> Vec<T> {
        let step = T::FRAC_PI_2() / T::lit(self.n_test as f64);
        (0..self.n_test)
            .map(|b| -T::FRAC_PI_4() + step * T::lit(b as f64))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BpsOutput<T> {
    /// Unwrapped phase estimate per symbol.
    pub phase: Vec<T>,
    /// Winning test-phase index per symbol.
    pub index: Vec<usize>,
    /// `P(-phase)·x`, before the compensator.
    pub rotated: Vec<Complex<T>>,
    /// `C·P(-phase)·x`, the final slicer input.
    pub compensated: Vec<Complex<T>>,
    pub labels: Vec<usize>,
}

/// Per-symbol argmin over the centered, edge-truncated window sum of the
/// distance rows. `row(n, out)` fills the distances of symbol `n`; it is called
/// once per symbol in increasing order. Ties go to the lowest index.
pub fn windowed_argmin<T: Real>(
    len: usize,
    n_test: usize,
    window: usize,
    mut row: impl FnMut(usize, &mut [T]),
) -> Vec<usize> {
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    let mut sums = vec![T::zero(); n_test];
    let mut rows: VecDeque<Vec<T>> = VecDeque::with_capacity(window + 1);
    let mut next = 0usize;
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let hi = (n + after).min(len - 1);
        while next <= hi {
            let mut r = vec![T::zero(); n_test];
            row(next, &mut r);
            for (s, d) in sums.iter_mut().zip(&r) {
                *s += *d;
            }
            rows.push_back(r);
            next += 1;
        }
        let lo = n.saturating_sub(before);
        while next - rows.len() < lo {
            let r = rows.pop_front().expect("window is non-empty");
            for (s, d) in sums.iter_mut().zip(&r) {
                *s -= *d;
            }
        }
        // bound the drift of the running sums
        if n % 1024 == 0 {
            sums.iter_mut().for_each(|s| *s = T::zero());
            for r in &rows {
                for (s, d) in sums.iter_mut().zip(r) {
                    *s += *d;
                }
            }
        }
        let mut best = 0;
        for b in 1..n_test {
            if sums[b] < sums[best] {
                best = b;
            }
        }
        out.push(best);
    }
    out
}

/// Removes π/2 jumps so that consecutive values differ by at most π/4.
pub fn unwrap_quadrant<T: Real>(phases: &[T]) -> Vec<T> {
    let q = T::FRAC_PI_2();
    let mut out = Vec::with_capacity(phases.len());
    let mut prev: Option<T> = None;
    for &p in phases {
        let v = match prev {
            None => p,
            Some(last) => p + ((last - p) / q).round() * q,
        };
        out.push(v);
        prev = Some(v);
    }
    out
}

/// BPS with a single compensator for the whole stream.
pub fn bps_estimate<T: Real>(
    x: &[Complex<T>],
    c: &Matrix2<T>,
    cfg: &BpsConfig,
    constellation: &Constellation<T>,
) -> Result<BpsOutput<T>> {
    bps_estimate_with(x, |_| *c, cfg, constellation)
}

/// BPS where symbol `n` uses compensator `c_at(n)`.
pub fn bps_estimate_with<T: Real>(
    x: &[Complex<T>],
    c_at: impl Fn(usize) -> Matrix2<T>,
    cfg: &BpsConfig,
    constellation: &Constellation<T>,
) -> Result<BpsOutput<T>> {
    cfg.validate()?;
    if x.len() < cfg.window {
        return Err(Error::Size {
            what: "BPS input shorter than the window",
            expected: cfg.window,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite("BPS input"));
    }
    let phases: Vec<T> = cfg.test_phases();
    let rotations: Vec<Matrix2<T>> = phases.iter().map(|&p| Matrix2::rotation(-p)).collect();
    let index = windowed_argmin(x.len(), cfg.n_test, cfg.window, |n, out| {
        let c = c_at(n);
        for (d, rot) in out.iter_mut().zip(&rotations) {
            let u = (c * *rot).apply(x[n]);
            *d = (u - constellation.slice_point(u)).norm_sqr();
        }
    });
    let raw: Vec<T> = index.iter().map(|&b| phases[b]).collect();
    let phase = unwrap_quadrant(&raw);
    let mut rotated = Vec::with_capacity(x.len());
    let mut compensated = Vec::with_capacity(x.len());
    let mut labels = Vec::with_capacity(x.len());
    for (n, (&v, &p)) in x.iter().zip(&phase).enumerate() {
        let r = Matrix2::rotation(-p).apply(v);
        let u = c_at(n).apply(r);
        rotated.push(r);
        compensated.push(u);
        labels.push(constellation.slice_finite(u));
    }
    Ok(BpsOutput {
        phase,
        index,
        rotated,
        compensated,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impairments::{build_w, TxImpairments};
    use rand::{Rng, SeedableRng};

    type Cx = Complex<f64>;

    fn symbols(n: usize, seed: u64) -> (Vec<usize>, Vec<Cx>) {
        let c = Constellation::<f64>::qam16();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let l: Vec<usize> = (0..n).map(|_| rng.random_range(0..16)).collect();
        let p = l.iter().map(|&k| c.point(k)).collect();
        (l, p)
    }

    #[test]
    fn phase_grid() {
        let p: Vec<f64> = BpsConfig::default().test_phases();
        assert_eq!(p.len(), 32);
        assert!((p[0] + std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(p[16], 0.0);
        assert!(*p.last().unwrap() < std::f64::consts::FRAC_PI_4);
        assert!(BpsConfig { window: 0, n_test: 4 }.validate().is_err());
        assert!(BpsConfig { window: 4, n_test: 1 }.validate().is_err());
    }

    #[test]
    fn zero_residual_is_transparent() {
        let c = Constellation::qam16();
        let (l, x) = symbols(2000, 1);
        let out = bps_estimate(&x, &Matrix2::identity(), &BpsConfig::default(), &c).unwrap();
        assert!(out.phase.iter().all(|&p| p == 0.0));
        assert_eq!(out.labels, l);
        assert!(bps_estimate(&x[..10], &Matrix2::identity(), &BpsConfig::default(), &c).is_err());
    }

    #[test]
    fn constant_residual_within_quantization() {
        let c = Constellation::qam16();
        let (l, a) = symbols(3000, 2);
        let x: Vec<Cx> = a.iter().map(|&v| Matrix2::rotation(0.1).apply(v)).collect();
        let cfg = BpsConfig { window: 40, n_test: 64 };
        let out = bps_estimate(&x, &Matrix2::identity(), &cfg, &c).unwrap();
        let half_step = std::f64::consts::PI / (2.0 * 64.0);
        assert!(out.phase.iter().all(|&p| (p - 0.1).abs() <= half_step + 1e-12));
        assert_eq!(out.labels, l);
    }

    #[test]
    fn finer_grid_never_hurts_on_constant_phase() {
        let c = Constellation::qam16();
        let (_, a) = symbols(1000, 3);
        for truth in [0.013, -0.2, 0.31] {
            let x: Vec<Cx> = a.iter().map(|&v| Matrix2::rotation(truth).apply(v)).collect();
            let mut last = f64::INFINITY;
            for b in [4, 8, 16, 32, 64] {
                let cfg = BpsConfig { window: 40, n_test: b };
                let out = bps_estimate(&x, &Matrix2::identity(), &cfg, &c).unwrap();
                let mse = out.phase.iter().map(|p| (p - truth).powi(2)).sum::<f64>() / 1000.0;
                assert!(mse <= last + 1e-15, "B={b}: {mse} > {last}");
                last = mse;
            }
        }
    }

    #[test]
    fn compensator_fixes_imbalance_decisions() {
        let c = Constellation::qam16();
        let (l, a) = symbols(4000, 4);
        let w = build_w(&TxImpairments::imbalance(0.2, 20f64.to_radians()));
        let x: Vec<Cx> = a.iter().map(|&v| w.apply(v)).collect();
        let good = bps_estimate(&x, &w.inverse().unwrap(), &BpsConfig::default(), &c).unwrap();
        assert_eq!(good.labels, l);
        let bad = bps_estimate(&x, &Matrix2::identity(), &BpsConfig::default(), &c).unwrap();
        let wrong: Vec<usize> = (0..l.len()).filter(|&i| bad.labels[i] != l[i]).collect();
        assert!(!wrong.is_empty());
        // the errors sit on the outer ring
        assert!(wrong.iter().all(|&i| c.point(l[i]).norm_sqr() > 0.5));
    }

    #[test]
    fn argmin_is_scale_invariant() {
        let c = Constellation::qam16();
        let (_, a) = symbols(500, 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Cx> = a
            .iter()
            .map(|&v| Matrix2::rotation(rng.random_range(-0.3..0.3)).apply(v) + Cx::new(0.05, -0.02))
            .collect();
        let phases: Vec<f64> = BpsConfig::default().test_phases();
        let dist = |n: usize, out: &mut [f64], alpha: f64| {
            for (d, p) in out.iter_mut().zip(&phases) {
                let u = Matrix2::rotation(-p).apply(x[n]);
                *d = alpha * (u - c.slice_point(u)).norm_sqr();
            }
        };
        let base = windowed_argmin(x.len(), 32, 40, |n, o| dist(n, o, 1.0));
        for alpha in [0.5, 2.0, 8.0] {
            assert_eq!(windowed_argmin(x.len(), 32, 40, |n, o| dist(n, o, alpha)), base);
        }
    }

    #[test]
    fn windowed_argmin_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let len = 3000;
        let rows: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..7).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        for window in [1, 2, 5, 40] {
            let got = windowed_argmin(len, 7, window, |n, o| o.copy_from_slice(&rows[n]));
            let before = (window - 1) / 2;
            let after = window - 1 - before;
            for n in 0..len {
                let lo = n.saturating_sub(before);
                let hi = (n + after).min(len - 1);
                let sums: Vec<f64> = (0..7).map(|b| (lo..=hi).map(|k| rows[k][b]).sum()).collect();
                let best = (0..7).fold(0, |m, b| if sums[b] < sums[m] { b } else { m });
                assert_eq!(got[n], best, "window {window} n {n}");
            }
        }
    }

    #[test]
    fn unwrap_examples() {
        let q = std::f64::consts::FRAC_PI_2;
        assert_eq!(unwrap_quadrant(&[0.2; 5]), vec![0.2; 5]);
        // sawtooth wrapping at +π/4
        let truth: Vec<f64> = (0..200).map(|k| -0.7 + 0.01 * k as f64).collect();
        let wrapped: Vec<f64> = truth
            .iter()
            .map(|&t| t - ((t + q / 2.0) / q).floor() * q)
            .collect();
        let un = unwrap_quadrant(&wrapped);
        for (u, t) in un.iter().zip(&truth) {
            assert!((u - t).abs() < 1e-12);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut walk: Vec<f64> = vec![0.0];
        for _ in 0..500 {
            let next = (*walk.last().unwrap() + rng.random_range(-0.3..0.3)).clamp(-0.7, 0.7);
            walk.push(next);
        }
        assert_eq!(unwrap_quadrant(&walk), walk);
        for w in un.windows(2) {
            assert!((w[1] - w[0]).abs() <= std::f64::consts::FRAC_PI_4);
        }
    }
}
