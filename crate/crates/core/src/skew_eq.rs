//! Receiver-side Tx I/Q skew compensation: one baud-rate real LMS equalizer
//! per rail, placed after the compensator and before the final slicer.

use num_complex::Complex;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tap magnitude beyond which a rail equalizer is declared diverged.
pub const RAIL_DIVERGENCE_LIMIT: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RailEqualizer<T> {
    pub taps: Vec<T>,
    pub mu: T,
}

impl<T: Real> RailEqualizer<T> {
    /// Center-spike initialized equalizer of odd length.
    pub fn new(len: usize, mu: T) -> Result<Self> {
        if len % 2 == 0 {
            return Err(Error::invalid("rails.taps", "length must be odd"));
        }
        let mut taps = vec![T::zero(); len];
        taps[len / 2] = T::one();
        Ok(Self { taps, mu })
    }

    pub fn center(&self) -> usize {
        self.taps.len() / 2
    }

    /// Regressor for output `n`: `w[j] = rail[n + center - j]`, zero outside the stream.
    pub fn window(&self, rail: &[T], n: usize) -> Vec<T> {
        let c = self.center() as isize;
        (0..self.taps.len() as isize)
            .map(|j| {
                let k = n as isize + c - j;
                if k >= 0 && (k as usize) < rail.len() {
                    rail[k as usize]
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    #[inline]
    pub fn output(&self, window: &[T]) -> T {
        self.taps.iter().zip(window).map(|(&h, &x)| h * x).sum()
    }

    /// Euclidean distance of the taps from the center spike.
    pub fn distance_from_spike(&self) -> T {
        let c = self.center();
        self.taps
            .iter()
            .enumerate()
            .map(|(j, &h)| {
                let d = if j == c { h - T::one() } else { h };
                d * d
            })
            .sum::<T>()
            .sqrt()
    }
}

/// Center-aligned linear convolution of one rail.
pub fn rail_filter<T: Real>(rail: &[T], eq: &RailEqualizer<T>) -> Result<Vec<T>> {
    if rail.len() < eq.taps.len() {
        return Err(Error::Size {
            what: "rail shorter than the equalizer",
            expected: eq.taps.len(),
            got: rail.len(),
        });
    }
    Ok((0..rail.len()).map(|n| eq.output(&eq.window(rail, n))).collect())
}

/// Real LMS step: `taps += mu · error · window`.
pub fn rail_lms<T: Real>(eq: &mut RailEqualizer<T>, window: &[T], error: T) -> Result<()> {
    for (h, &x) in eq.taps.iter_mut().zip(window) {
        *h += eq.mu * error * x;
    }
    let worst = eq.taps.iter().fold(T::zero(), |m, h| m.max(h.abs()));
    if !(worst <= T::lit(RAIL_DIVERGENCE_LIMIT)) {
        return Err(Error::Diverged {
            what: "rail equalizer",
            magnitude: worst.as_f64(),
        });
    }
    Ok(())
}

/// I and Q rail equalizers run together over a compensated stream.
#[derive(Clone, Debug, PartialEq)]
pub struct RailPair<T> {
    pub i: RailEqualizer<T>,
    pub q: RailEqualizer<T>,
}

#[derive(Clone, Debug)]
pub struct RailOutput<T> {
    pub samples: Vec<Complex<T>>,
    pub labels: Vec<usize>,
    /// Squared error against the reference symbol, per sample.
    pub sq_error: Vec<T>,
}

impl<T: Real> RailPair<T> {
    pub fn new(len: usize, mu: T) -> Result<Self> {
        Ok(Self {
            i: RailEqualizer::new(len, mu)?,
            q: RailEqualizer::new(len, mu)?,
        })
    }

    /// Equalizes `input` sample by sample. Where `adapt(n)` holds, both rails
    /// take an LMS step toward the known symbol if there is one, else toward
    /// the decision.
    pub fn run(
        &mut self,
        input: &[Complex<T>],
        known: &[Option<usize>],
        adapt: impl Fn(usize) -> bool,
        constellation: &Constellation<T>,
    ) -> Result<RailOutput<T>> {
        if known.len() != input.len() {
            return Err(Error::Size {
                what: "known-symbol map",
                expected: input.len(),
                got: known.len(),
            });
        }
        let re: Vec<T> = input.iter().map(|v| v.re).collect();
        let im: Vec<T> = input.iter().map(|v| v.im).collect();
        let mut out = RailOutput {
            samples: Vec::with_capacity(input.len()),
            labels: Vec::with_capacity(input.len()),
            sq_error: Vec::with_capacity(input.len()),
        };
        for n in 0..input.len() {
            let wi = self.i.window(&re, n);
            let wq = self.q.window(&im, n);
            let v = Complex::new(self.i.output(&wi), self.q.output(&wq));
            let label = constellation.slice(v)?;
            let reference = constellation.point(known[n].unwrap_or(label));
            let err = reference - v;
            if adapt(n) {
                rail_lms(&mut self.i, &wi, err.re)?;
                rail_lms(&mut self.q, &wq, err.im)?;
            }
            out.samples.push(v);
            out.labels.push(known[n].map_or(label, |_| constellation.slice_finite(v)));
            out.sq_error.push(err.norm_sqr());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impairments::{build_skew_taps, TxImpairments};
    use rand::{Rng, SeedableRng};

    #[test]
    fn construction() {
        assert!(RailEqualizer::<f64>::new(10, 0.1).is_err());
        let eq = RailEqualizer::<f64>::new(11, 0.1).unwrap();
        assert_eq!(eq.center(), 5);
        assert_eq!(eq.taps.iter().filter(|&&t| t != 0.0).count(), 1);
        assert_eq!(eq.distance_from_spike(), 0.0);
    }

    #[test]
    fn spike_is_identity_and_shift_is_delay() {
        let x: Vec<f64> = (0..20).map(|k| (k as f64 * 0.7).sin()).collect();
        let eq = RailEqualizer::new(5, 0.0).unwrap();
        assert_eq!(rail_filter(&x, &eq).unwrap(), x);
        let delay = RailEqualizer {
            taps: vec![0.0, 0.0, 0.0, 1.0, 0.0],
            mu: 0.0,
        };
        let y = rail_filter(&x, &delay).unwrap();
        assert_eq!(y[0], 0.0);
        assert_eq!(&y[1..], &x[..19]);
        assert!(rail_filter(&x[..3], &eq).is_err());
    }

    #[test]
    fn filter_matches_direct_convolution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eq = RailEqualizer {
            taps: (0..11).map(|_| rng.random_range(-1.0..1.0)).collect(),
            mu: 0.0,
        };
        let y = rail_filter(&x, &eq).unwrap();
        // full convolution, then drop the (L-1)/2 group delay
        let full_len = x.len() + eq.taps.len() - 1;
        let mut full = vec![0.0; full_len];
        for (i, xi) in x.iter().enumerate() {
            for (j, h) in eq.taps.iter().enumerate() {
                full[i + j] += xi * h;
            }
        }
        for n in 0..x.len() {
            assert!((y[n] - full[n + 5]).abs() < 1e-12);
        }
    }

    #[test]
    fn lms_no_ops_and_divergence() {
        let w = vec![0.5, -1.0, 2.0];
        let mut eq = RailEqualizer::new(3, 0.1).unwrap();
        let before = eq.clone();
        rail_lms(&mut eq, &w, 0.0).unwrap();
        assert_eq!(eq, before);
        let mut eq0 = RailEqualizer::new(3, 0.0).unwrap();
        rail_lms(&mut eq0, &w, 3.0).unwrap();
        assert_eq!(eq0, before.clone().tap_mu(0.0));
        let mut wild = RailEqualizer::new(3, 100.0).unwrap();
        assert!(matches!(rail_lms(&mut wild, &w, 1.0), Err(Error::Diverged { .. })));
    }

    impl RailEqualizer<f64> {
        fn tap_mu(mut self, mu: f64) -> Self {
            self.mu = mu;
            self
        }
    }

    /// Q-rail of the Tx skew channel normalized by its center tap.
    fn skewed_q_rail(tau: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let imp = TxImpairments {
            tau_over_t: tau,
            ..TxImpairments::<f64>::default()
        };
        let taps = build_skew_taps(&imp).unwrap();
        let h0 = taps.h0().m[1][1];
        let levels = [-3.0, -1.0, 1.0, 3.0].map(|v: f64| v / 10f64.sqrt());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| levels[rng.random_range(0..4)]).collect();
        let span = taps.half_span as isize;
        let s: Vec<f64> = (0..n as isize)
            .map(|i| {
                (-span..=span)
                    .filter(|k| i - k >= 0 && i - k < n as isize)
                    .map(|k| taps.at(k).m[1][1] * a[(i - k) as usize])
                    .sum::<f64>()
                    / h0
            })
            .collect();
        (a, s)
    }

    fn run_rail(eq: &mut RailEqualizer<f64>, a: &[f64], s: &[f64], adapt: bool) -> Vec<f64> {
        (0..s.len())
            .map(|n| {
                let w = eq.window(s, n);
                let e = a[n] - eq.output(&w);
                if adapt {
                    rail_lms(eq, &w, e).unwrap();
                }
                e * e
            })
            .collect()
    }

    #[test]
    fn adaptation_beats_frozen_spike_tenfold() {
        let (a, s) = skewed_q_rail(0.15, 100_000, 2);
        let mut frozen = RailEqualizer::new(11, 0.0).unwrap();
        let mut adapted = RailEqualizer::new(11, 0.01).unwrap();
        let e_frozen = run_rail(&mut frozen, &a, &s, false);
        let e_adapt = run_rail(&mut adapted, &a, &s, true);
        let tail = |v: &[f64]| v[v.len() - 20_000..].iter().sum::<f64>() / 20_000.0;
        let ratio = tail(&e_frozen) / tail(&e_adapt);
        assert!(ratio >= 10.0, "ratio {ratio}");
    }

    #[test]
    fn mse_falls_during_adaptation() {
        let (a, s) = skewed_q_rail(0.1, 60_000, 3);
        let mut eq = RailEqualizer::new(11, 0.0002).unwrap();
        let e = run_rail(&mut eq, &a, &s, true);
        let means: Vec<f64> = e.chunks(5_000).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        // monotone while above the misadjustment floor, then flat
        let floor = means[means.len() - 4..].iter().cloned().fold(f64::INFINITY, f64::min);
        for w in means.windows(2) {
            if w[0] > 2.0 * floor {
                assert!(w[1] < w[0], "{means:?}");
            } else {
                assert!(w[1] < 2.0 * floor, "{means:?}");
            }
        }
        assert!(means.last().unwrap() < &(means[0] * 0.1));
    }

    #[test]
    fn no_spurious_adaptation_without_skew() {
        let (a, s) = skewed_q_rail(0.0, 20_000, 4);
        let mut eq = RailEqualizer::new(11, 0.01).unwrap();
        run_rail(&mut eq, &a, &s, true);
        assert!(eq.distance_from_spike() < 0.05);
    }

    #[test]
    fn pair_is_transparent_on_clean_symbols() {
        let c = Constellation::<f64>::qam16();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let l: Vec<usize> = (0..1000).map(|_| rng.random_range(0..16)).collect();
        let x: Vec<Complex<f64>> = l.iter().map(|&k| c.point(k)).collect();
        let mut pair = RailPair::new(11, 0.01).unwrap();
        let out = pair.run(&x, &vec![None; x.len()], |_| true, &c).unwrap();
        assert_eq!(out.labels, l);
        assert!(out.sq_error.iter().all(|&e| e < 1e-20));
        assert!(pair.run(&x, &[None], |_| true, &c).is_err());
    }
}
