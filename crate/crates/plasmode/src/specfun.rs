//! Complex-argument Bessel and Hankel functions of orders 0 and 1.
//!
//! Ascending series inside `|z| <= series_cut`, Hankel's asymptotic expansion
//! outside. Both use the principal branch of `log z` and `sqrt z`.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_4, PI};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest |z| for which accuracy has been validated.
pub const MAX_ABS: f64 = 1.0e3;
/// Largest |Im z| for which accuracy has been validated.
pub const MAX_IMAG: f64 = 50.0;

#[derive(Clone, Copy, Debug)]
pub struct SpecfunConfig {
    /// Switch from ascending series to the asymptotic expansion above this |z|.
    pub series_cut: f64,
    /// Cap on asymptotic terms; the sum also stops at its smallest term.
    pub asymptotic_terms: usize,
}

impl Default for SpecfunConfig {
    fn default() -> Self {
        SpecfunConfig { series_cut: 12.0, asymptotic_terms: 40 }
    }
}

/// H0^(1)(z) together with its z-derivative -H1^(1)(z).
#[derive(Clone, Copy, Debug)]
pub struct HankelEval {
    pub value: C64,
    pub derivative_value: C64,
    pub argument: C64,
}

/// J0, J1, Y0, Y1 at one argument.
#[derive(Clone, Copy, Debug)]
pub struct Bessel01 {
    pub j0: C64,
    pub j1: C64,
    pub y0: C64,
    pub y1: C64,
}

impl Bessel01 {
    pub fn h0(&self) -> C64 {
        self.j0 + C64::i() * self.y0
    }

    pub fn h1(&self) -> C64 {
        self.j1 + C64::i() * self.y1
    }
}

fn check_domain(z: C64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("non-finite Hankel argument {z}")));
    }
    if z.norm() == 0.0 {
        return Err(Error::Domain("H0 has a logarithmic singularity at z = 0".into()));
    }
    if z.im == 0.0 && z.re < 0.0 {
        return Err(Error::Domain(format!("argument {z} lies on the branch cut")));
    }
    if z.norm() > MAX_ABS || z.im.abs() > MAX_IMAG {
        return Err(Error::Domain(format!(
            "argument {z} outside validated region |z| <= {MAX_ABS}, |Im z| <= {MAX_IMAG}"
        )));
    }
    Ok(())
}

pub fn hankel1_0(z: C64) -> Result<HankelEval> {
    hankel1_0_with(z, &SpecfunConfig::default())
}

pub fn hankel1_0_with(z: C64, cfg: &SpecfunConfig) -> Result<HankelEval> {
    check_domain(z)?;
    let (h0, h1) = if z.norm() <= cfg.series_cut && z.im > INTEGRAL_IMAG {
        hankel_by_integral(z)
    } else if z.norm() <= cfg.series_cut {
        let b = series(z);
        (b.h0(), b.h1())
    } else {
        let a = asymptotic(z, cfg.asymptotic_terms);
        (a[0], a[1])
    };
    Ok(HankelEval { value: h0, derivative_value: -h1, argument: z })
}

/// All four order-0/1 Bessel functions, checked against the validated region.
pub fn bessel01(z: C64) -> Result<Bessel01> {
    check_domain(z)?;
    Ok(bessel01_unchecked(z, &SpecfunConfig::default()))
}

/// Kernel fast path: callers guarantee `z` is nonzero and off the cut.
pub(crate) fn bessel01_unchecked(z: C64, cfg: &SpecfunConfig) -> Bessel01 {
    if z.norm() <= cfg.series_cut {
        let mut b = series(z);
        if z.im > INTEGRAL_IMAG {
            // J + iY cancels badly here; take H from the integral instead
            let (h0, h1) = hankel_by_integral(z);
            b.y0 = (h0 - b.j0) / C64::i();
            b.y1 = (h1 - b.j1) / C64::i();
        }
        b
    } else {
        let h = asymptotic(z, cfg.asymptotic_terms);
        let i = C64::i();
        // J = (H1 + H2)/2, Y = (H1 - H2)/(2i)
        Bessel01 {
            j0: 0.5 * (h[0] + h[2]),
            j1: 0.5 * (h[1] + h[3]),
            y0: (h[0] - h[2]) / (2.0 * i),
            y1: (h[1] - h[3]) / (2.0 * i),
        }
    }
}

/// Above this Im z the series loses too many digits to cancellation in J + iY.
const INTEGRAL_IMAG: f64 = 4.0;

/// H0^(1), H1^(1) from -(2i/pi) int_0^inf e^{iz cosh s} ds and
/// -(2/pi) int_0^inf e^{iz cosh s} cosh s ds, by the trapezoid rule (Im z > 0).
fn hankel_by_integral(z: C64) -> (C64, C64) {
    let h = 0.02;
    let mut a0 = C64::new(0.0, 0.0);
    let mut a1 = C64::new(0.0, 0.0);
    let iz = C64::i() * z;
    for k in 0..4000 {
        let s = h * k as f64;
        let ch = s.cosh();
        let e = (iz * ch).exp();
        let w = if k == 0 { 0.5 } else { 1.0 };
        a0 += w * e;
        a1 += w * e * ch;
        if e.norm() * ch < 1e-18 * a0.norm() {
            break;
        }
    }
    (C64::new(0.0, -2.0 / PI) * a0 * h, -2.0 / PI * a1 * h)
}

/// Ascending series for J0, J1, Y0, Y1.
pub fn series(z: C64) -> Bessel01 {
    let t = -0.25 * z * z;
    let half = 0.5 * z;
    let mut term = C64::new(1.0, 0.0); // t^m / (m!)^2
    let mut j0 = term;
    let mut j1s = term; // sum t^m / (m! (m+1)!)
    let mut y0s = C64::new(0.0, 0.0);
    let mut y1s = term; // sum (H_m + H_{m+1}) t^m / (m!(m+1)!), H_0 = 0, H_1 = 1
    let mut hm = 0.0;
    for m in 1..200 {
        let mf = m as f64;
        term *= t / (mf * mf);
        hm += 1.0 / mf;
        let u = term / (mf + 1.0);
        j0 += term;
        j1s += u;
        y0s += term * hm;
        y1s += u * (2.0 * hm + 1.0 / (mf + 1.0));
        if term.norm() * hm < 1e-17 * j0.norm().max(1e-300) && term.norm() < 1e-17 {
            break;
        }
    }
    let j1 = half * j1s;
    let lg = (half).ln() + EULER_GAMMA;
    let y0 = FRAC_2_PI * (lg * j0 - y0s);
    let y1 = FRAC_2_PI * lg * j1 - FRAC_2_PI / z - half * y1s / PI;
    Bessel01 { j0, j1, y0, y1 }
}

/// Hankel asymptotic expansion; returns [H0^(1), H1^(1), H0^(2), H1^(2)].
pub fn asymptotic(z: C64, max_terms: usize) -> [C64; 4] {
    let pref = (C64::new(FRAC_2_PI, 0.0) / z).sqrt();
    let inv = 1.0 / z;
    let i = C64::i();
    let mut out = [C64::new(0.0, 0.0); 4];
    for (nu, slot) in [(0.0f64, 0usize), (1.0, 1)] {
        let mu = 4.0 * nu * nu;
        // sums P_plus = sum i^k a_k / z^k, P_minus = sum (-i)^k a_k / z^k
        let mut ak = C64::new(1.0, 0.0);
        let mut sp = ak;
        let mut sm = ak;
        let mut ipow = C64::new(1.0, 0.0);
        let mut last = f64::INFINITY;
        for k in 1..=max_terms {
            let kf = k as f64;
            let odd = 2.0 * kf - 1.0;
            ak = ak * (mu - odd * odd) / (8.0 * kf) * inv;
            ipow *= i;
            let mag = ak.norm();
            if mag > last {
                break;
            }
            last = mag;
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            sp += ipow * ak;
            sm += ipow * ak * s;
            if mag < 1e-17 {
                break;
            }
        }
        let phase = z - nu * PI / 2.0 - FRAC_PI_4;
        out[slot] = pref * (i * phase).exp() * sp;
        out[slot + 2] = pref * (-i * phase).exp() * sm;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm() / b.norm()
    }

    // H0^(1)(z) = -(2i/pi) int_0^inf exp(i z cosh s) ds, valid for Im z > 0.
    fn hankel_integral(z: C64) -> C64 {
        let (n, smax) = (20000, 12.0);
        let h = smax / n as f64;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..=n {
            let s = h * k as f64;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * (C64::i() * z * s.cosh()).exp();
        }
        -C64::new(0.0, 2.0 / PI) * acc * h
    }

    #[test]
    fn matches_integral_representation() {
        for z in [C64::new(1.0, 0.5), C64::new(3.0, 1.0), C64::new(0.2, 0.05), C64::new(7.0, 2.0)] {
            let h = hankel1_0(z).unwrap().value;
            assert!(rel(h, hankel_integral(z)) < 1e-9, "z={z}");
        }
    }

    #[test]
    fn extended_precision_value() {
        // 40-digit reference for H0^(1)(1 + 0.5i)
        let want = C64::new(0.430_644_626_406_534_4, -0.037_156_936_324_262_79);
        let got = hankel1_0(C64::new(1.0, 0.5)).unwrap().value;
        assert!(rel(got, want) < 1e-9, "{got}");
    }

    #[test]
    fn large_argument_leading_term() {
        let x = 50.0;
        let h = hankel1_0(C64::new(x, 0.0)).unwrap().value;
        let lead = (2.0 / (PI * x)).sqrt() * C64::new(0.0, x - FRAC_PI_4).exp();
        assert!(rel(h, lead) < 0.02);
    }

    #[test]
    fn log_singularity_structure() {
        let mut prev: Option<C64> = None;
        for k in 4..12 {
            let z = C64::new(10f64.powi(-k), 0.0);
            let h = hankel1_0(z).unwrap().value;
            let rest = h - C64::new(0.0, 2.0 / PI) * z.ln();
            assert!(rest.norm() < 2.0);
            if let Some(p) = prev {
                assert!((rest - p).norm() < 1e-6);
            }
            prev = Some(rest);
        }
        assert!(hankel1_0(C64::new(0.0, 0.0)).is_err());
        assert!(hankel1_0(C64::new(-2.0, 0.0)).is_err());
        assert!(hankel1_0(C64::new(10.0, -80.0)).is_err());
    }

    #[test]
    fn series_and_asymptotic_overlap() {
        for k in 0..24 {
            let r = 10.0 + 2.0 * (k % 3) as f64 / 2.0;
            let ang = -1.2 + 2.4 * k as f64 / 23.0;
            let z = C64::from_polar(r, ang);
            let a = asymptotic(z, 40);
            let (h0, h1) = if z.im > INTEGRAL_IMAG {
                hankel_by_integral(z)
            } else {
                let s = series(z);
                (s.h0(), s.h1())
            };
            assert!(rel(h0, a[0]) < 1e-8, "z={z}");
            assert!(rel(h1, a[1]) < 1e-8, "z={z}");
        }
    }

    #[test]
    fn strongly_damped_arguments() {
        // 30-digit references (independent multiprecision evaluation)
        for (z, want) in [
            (C64::new(2.0, 6.0), C64::new(6.443_661_404_362_005e-4, 4.264_182_632_330_765e-4)),
            (C64::new(0.5, 11.0), C64::new(1.981_545_661_022_434e-6, -3.442_954_312_098_503e-6)),
        ] {
            let got = hankel1_0(z).unwrap().value;
            assert!(rel(got, want) < 1e-9, "z={z}: {got}");
        }
    }

    #[test]
    fn wronskian() {
        for z in [C64::new(0.3, 0.1), C64::new(5.0, -0.5), C64::new(20.0, 1.0), C64::new(2.0, 3.0)] {
            let b = bessel01(z).unwrap();
            // J0 Y0' - J0' Y0 = -J0 Y1 + J1 Y0
            let w = -b.j0 * b.y1 + b.j1 * b.y0;
            let want = 2.0 / (PI * z);
            assert!(rel(w, want) < 1e-10, "z={z}");
        }
    }

    #[test]
    fn real_axis_parts_are_real() {
        for x in [0.1, 1.0, 7.5, 11.9, 12.1, 40.0] {
            let b = bessel01(C64::new(x, 0.0)).unwrap();
            for v in [b.j0, b.j1, b.y0, b.y1] {
                assert!(v.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_finite_difference() {
        let mut s: u64 = 0x9e3779b97f4a7c15;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let z = C64::new(0.2 + 40.0 * next(), -3.0 + 6.0 * next());
            let h = 1e-5 * z.norm().max(1.0);
            let fp = hankel1_0(z + h).unwrap().value;
            let fm = hankel1_0(z - h).unwrap().value;
            let fd = (fp - fm) / (2.0 * h);
            let d = hankel1_0(z).unwrap().derivative_value;
            assert!(rel(fd, d) < 1e-6, "z={z}");
        }
    }
}
