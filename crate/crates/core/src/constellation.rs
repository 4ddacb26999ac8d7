//! Square QAM constellations with per-axis reflected Gray labelling,
//! a minimum-distance slicer, pilot layout and error counting.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square M-QAM constellation normalized to unit average symbol energy.
///
/// `points[label]` is the point carrying `label`; the upper half of the label
/// bits is the Gray code of the in-phase level, the lower half that of the
/// quadrature level.
#[derive(Clone, Debug)]
pub struct Constellation<T> {
    order: usize,
    bits_per_axis: u32,
    scale: T,
    points: Vec<Complex<T>>,
}

#[inline]
fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl<T: Real> Constellation<T> {
    /// Builds a square QAM of the given order (4, 16, 64, ...).
    pub fn square(order: usize) -> Result<Self> {
        let bits = order.trailing_zeros();
        if order < 4 || !order.is_power_of_two() || bits % 2 != 0 {
            return Err(Error::invalid("order", format!("{order} is not a square QAM order")));
        }
        let bits_per_axis = bits / 2;
        let levels = 1usize << bits_per_axis;
        // mean energy of the integer grid {±1, ±3, ...}^2 is 2(M-1)/3
        let scale = T::lit((2.0 * (order as f64 - 1.0) / 3.0).sqrt()).recip();
        let mut points = vec![Complex::new(T::zero(), T::zero()); order];
        for i in 0..levels {
            for q in 0..levels {
                let label = (gray(i) << bits_per_axis) | gray(q);
                points[label] = Complex::new(
                    Self::level(i, levels) * scale,
                    Self::level(q, levels) * scale,
                );
            }
        }
        Ok(Self {
            order,
            bits_per_axis,
            scale,
            points,
        })
    }

    pub fn qam16() -> Self {
        Self::square(16).expect("16 is a square order")
    }

    fn level(i: usize, levels: usize) -> T {
        T::lit(2.0 * i as f64 - (levels as f64 - 1.0))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis as usize
    }

    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    #[inline]
    pub fn point(&self, label: usize) -> Complex<T> {
        self.points[label]
    }

    /// The four maximum-energy corners in the order (+,+), (-,+), (-,-), (+,-).
    pub fn corner_labels(&self) -> [usize; 4] {
        let levels = 1usize << self.bits_per_axis;
        let hi = gray(levels - 1);
        let lo = gray(0);
        let b = self.bits_per_axis;
        [(hi << b) | hi, (lo << b) | hi, (lo << b) | lo, (hi << b) | lo]
    }

    /// Maps groups of `bits_per_symbol` bits (MSB first) onto labels.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<usize>> {
        let k = self.bits_per_symbol();
        if bits.len() % k != 0 {
            return Err(Error::Size {
                what: "bit sequence length must be a multiple of bits per symbol",
                expected: bits.len().div_ceil(k) * k,
                got: bits.len(),
            });
        }
        Ok(bits
            .chunks_exact(k)
            .map(|g| g.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize))
            .collect())
    }

    pub fn map_bits_to_points(&self, bits: &[u8]) -> Result<Vec<Complex<T>>> {
        Ok(self
            .map_bits(bits)?
            .into_iter()
            .map(|l| self.points[l])
            .collect())
    }

    pub fn demap(&self, labels: &[usize]) -> Vec<u8> {
        let k = self.bits_per_symbol();
        let mut out = Vec::with_capacity(labels.len() * k);
        for &l in labels {
            out.extend((0..k).rev().map(|s| ((l >> s) & 1) as u8));
        }
        out
    }

    /// Nearest constellation point (as a label). Ties go to the smaller label.
    pub fn slice(&self, y: Complex<T>) -> Result<usize> {
        if !(y.re.is_finite() && y.im.is_finite()) {
            return Err(Error::NonFinite("slicer input"));
        }
        Ok(self.slice_finite(y))
    }

    /// Slicer without the finiteness check, for inner loops whose input is
    /// already known to be finite. Non-finite input yields an arbitrary label.
    #[inline]
    pub fn slice_finite(&self, y: Complex<T>) -> usize {
        let gi = self.slice_axis(y.re);
        let gq = self.slice_axis(y.im);
        (gi << self.bits_per_axis) | gq
    }

    /// Returns the Gray code of the nearest level on one axis.
    #[inline]
    fn slice_axis(&self, x: T) -> usize {
        let levels = 1usize << self.bits_per_axis;
        let top = levels - 1;
        let u = (x / self.scale + T::lit(top as f64)) * T::lit(0.5);
        if !(u > T::zero()) {
            return gray(0);
        }
        if u >= T::lit(top as f64) {
            return gray(top);
        }
        let lo = u.floor().to_usize().unwrap_or(0).min(top - 1);
        let d_lo = (x - Self::level(lo, levels) * self.scale).abs();
        let d_hi = (x - Self::level(lo + 1, levels) * self.scale).abs();
        if d_lo < d_hi {
            gray(lo)
        } else if d_hi < d_lo {
            gray(lo + 1)
        } else {
            gray(lo).min(gray(lo + 1))
        }
    }

    #[inline]
    pub fn slice_point(&self, y: Complex<T>) -> Complex<T> {
        self.points[self.slice_finite(y)]
    }
}

/// Periodic pilot layout: every `period`-th symbol is a known corner point,
/// cycling through the four corners in a fixed order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PilotPlan {
    pub period: usize,
}

impl Default for PilotPlan {
    fn default() -> Self {
        Self { period: 100 }
    }
}

impl PilotPlan {
    pub fn new(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::invalid("pilot period", "must be positive"));
        }
        Ok(Self { period })
    }

    pub fn overhead(&self) -> f64 {
        1.0 / self.period as f64
    }

    #[inline]
    pub fn is_pilot(&self, index: usize) -> bool {
        index % self.period == 0
    }

    /// Label of the pilot at stream position `index` (which must be a pilot slot).
    pub fn pilot_label<T: Real>(&self, c: &Constellation<T>, index: usize) -> usize {
        c.corner_labels()[(index / self.period) % 4]
    }

    pub fn pilot_count(&self, total: usize) -> usize {
        total.div_ceil(self.period)
    }

    pub fn payload_count(&self, total: usize) -> usize {
        total - self.pilot_count(total)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorCount {
    pub errors: u64,
    pub total: u64,
}

impl ErrorCount {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.errors as f64 / self.total as f64
        }
    }
}

impl std::ops::AddAssign for ErrorCount {
    fn add_assign(&mut self, o: Self) {
        self.errors += o.errors;
        self.total += o.total;
    }
}

/// Bit errors between two equally long bit sequences.
pub fn count_errors(tx_bits: &[u8], rx_bits: &[u8]) -> Result<ErrorCount> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::Size {
            what: "bit sequences",
            expected: tx_bits.len(),
            got: rx_bits.len(),
        });
    }
    let errors = tx_bits
        .iter()
        .zip(rx_bits)
        .filter(|(a, b)| (*a & 1) != (*b & 1))
        .count();
    Ok(ErrorCount {
        errors: errors as u64,
        total: tx_bits.len() as u64,
    })
}

/// Symbol errors between two equally long label sequences.
pub fn count_symbol_errors(tx: &[usize], rx: &[usize]) -> Result<ErrorCount> {
    if tx.len() != rx.len() {
        return Err(Error::Size {
            what: "symbol sequences",
            expected: tx.len(),
            got: rx.len(),
        });
    }
    let errors = tx.iter().zip(rx).filter(|(a, b)| a != b).count();
    Ok(ErrorCount {
        errors: errors as u64,
        total: tx.len() as u64,
    })
}

/// Bit errors between two label sequences, counted through the Gray labels.
pub fn count_label_bit_errors(
    tx: &[usize],
    rx: &[usize],
    bits_per_symbol: usize,
) -> Result<ErrorCount> {
    let n = count_symbol_errors(tx, rx)?.total;
    let errors = tx
        .iter()
        .zip(rx)
        .map(|(a, b)| (a ^ b).count_ones() as u64)
        .sum();
    Ok(ErrorCount {
        errors,
        total: n * bits_per_symbol as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    type C = Constellation<f64>;

    fn brute_force(c: &C, y: Complex<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (l, p) in c.points().iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = l;
            }
        }
        best
    }

    #[test]
    fn unit_average_energy() {
        for order in [4, 16, 64, 256] {
            let c = C::square(order).unwrap();
            let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((e - 1.0).abs() < 1e-12, "order {order}: {e}");
        }
    }

    #[test]
    fn rejects_non_square_orders() {
        assert!(C::square(8).is_err());
        assert!(C::square(12).is_err());
        assert!(C::square(2).is_err());
    }

    #[test]
    fn labels_are_a_bijection() {
        let c = C::qam16();
        let labels: Vec<usize> = (0..16).collect();
        let bits = c.demap(&labels);
        let back = c.map_bits_to_points(&bits).unwrap();
        let mut seen = std::collections::HashSet::new();
        for p in &back {
            assert!(seen.insert((p.re.to_bits(), p.im.to_bits())));
        }
        assert_eq!(seen.len(), 16);
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = C::qam16();
        let dmin = 2.0 / 10f64.sqrt();
        for a in 0..16 {
            for b in 0..16 {
                let d = (c.point(a) - c.point(b)).norm();
                if (d - dmin).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn corner_point_label() {
        let c = C::qam16();
        let corner = Complex::new(3.0, 3.0) / 10f64.sqrt();
        let label = brute_force(&c, corner);
        let bits = c.demap(&[label]);
        let p = c.map_bits_to_points(&bits).unwrap();
        assert!((p[0] - corner).norm() < 1e-15);
        assert_eq!(c.corner_labels()[0], label);
    }

    #[test]
    fn empty_and_bad_lengths() {
        let c = C::qam16();
        assert!(c.map_bits(&[]).unwrap().is_empty());
        assert!(matches!(c.map_bits(&[1, 0, 1]), Err(Error::Size { .. })));
    }

    #[test]
    fn slicer_examples() {
        let c = C::qam16();
        let s = 10f64.sqrt();
        for l in 0..16 {
            assert_eq!(c.slice(c.point(l)).unwrap(), l);
        }
        // four inner points are equidistant from the origin
        let origin = c.slice(Complex::new(0.0, 0.0)).unwrap();
        let inner: Vec<usize> = (0..16).filter(|&l| c.point(l).norm_sqr() < 0.3).collect();
        assert_eq!(origin, *inner.iter().min().unwrap());
        let y = Complex::new(2.9, 3.1) / s;
        assert_eq!(c.slice(y).unwrap(), brute_force(&c, y));
        assert!((c.slice_point(y) - Complex::new(3.0, 3.0) / s).norm() < 1e-15);
        assert!(c.slice(Complex::new(f64::NAN, 0.0)).is_err());
        assert!(c.slice(Complex::new(0.0, f64::INFINITY)).is_err());
    }

    #[test]
    fn slicer_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for order in [4, 16, 64] {
            let c = C::square(order).unwrap();
            for _ in 0..20_000 {
                let y = Complex::new(rng.random_range(-1.6..1.6), rng.random_range(-1.6..1.6));
                assert_eq!(c.slice_finite(y), brute_force(&c, y));
            }
            // exact decision boundaries
            let step = c.points()[0].re.abs().min(c.points()[1].re.abs());
            for k in -8..=8 {
                for j in -8..=8 {
                    let y = Complex::new(k as f64 * step, j as f64 * step);
                    assert_eq!(c.slice_finite(y), brute_force(&c, y), "{y}");
                }
            }
        }
    }

    #[test]
    fn error_counting() {
        let a = vec![0u8, 1, 1, 0];
        assert_eq!(count_errors(&a, &a).unwrap().rate(), 0.0);
        let b: Vec<u8> = a.iter().map(|x| 1 - x).collect();
        assert_eq!(count_errors(&a, &b).unwrap().rate(), 1.0);
        let tx = vec![0u8; 10_000];
        let mut rx = tx.clone();
        rx[4321] = 1;
        assert_eq!(count_errors(&tx, &rx).unwrap().rate(), 1e-4);
        assert!(count_errors(&tx, &rx[1..]).is_err());
        assert!(count_symbol_errors(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn label_bit_errors_agree_with_demapped_bits() {
        let c = C::qam16();
        let tx = vec![0, 5, 15, 9];
        let rx = vec![1, 5, 0, 9];
        let direct = count_errors(&c.demap(&tx), &c.demap(&rx)).unwrap();
        let via = count_label_bit_errors(&tx, &rx, 4).unwrap();
        assert_eq!(direct.errors, via.errors);
    }

    #[test]
    fn pilot_plan_accounting() {
        let c = C::qam16();
        let plan = PilotPlan::default();
        assert_eq!(plan.overhead(), 0.01);
        for total in [100, 6400, 6401, 217_600] {
            let pilots = (0..total).filter(|&i| plan.is_pilot(i)).count();
            assert_eq!(pilots, plan.pilot_count(total));
            let expect = (1.0 - plan.overhead()) * total as f64;
            assert!((plan.payload_count(total) as f64 - expect).abs() < 1.0);
        }
        let corners = c.corner_labels();
        for k in 0..8 {
            let l = plan.pilot_label(&c, k * 100);
            assert_eq!(l, corners[k % 4]);
            assert!((c.point(l).norm_sqr() - 1.8).abs() < 1e-12);
        }
        assert!(PilotPlan::new(0).is_err());
    }

    proptest! {
        #[test]
        fn noiseless_round_trip(bits in proptest::collection::vec(0u8..2, 0..64).prop_map(|mut v| { v.truncate(v.len() / 4 * 4); v })) {
            let c = C::qam16();
            let pts = c.map_bits_to_points(&bits).unwrap();
            let labels: Vec<usize> = pts.iter().map(|&p| c.slice(p).unwrap()).collect();
            prop_assert_eq!(c.demap(&labels), bits);
        }

        #[test]
        fn slicer_idempotent(re in -2.0..2.0f64, im in -2.0..2.0f64) {
            let c = C::qam16();
            let p = c.slice_point(Complex::new(re, im));
            prop_assert_eq!(c.slice_point(p), p);
        }
    }
}
