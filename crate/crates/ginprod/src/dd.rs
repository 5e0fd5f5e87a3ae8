//! Double-double arithmetic (~106-bit significand) with the transcendental
//! functions the finite-N kernel needs: exp, ln, sin/cos, atan2, and the
//! complex log-gamma via a shifted Stirling series.
//!
//! The contour-integral kernel evaluation cancels alternating terms whose
//! magnitudes exceed the final value by factors up to ~1e20 at N = 100, so
//! node values must carry more than f64 precision end to end. Two-f64
//! arithmetic (Dekker/Bailey style error-free transformations) gives ~31
//! significant digits, enough headroom for every configuration the
//! acceptance grid touches.

use once_cell::sync::Lazy;

/// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    // requires |a| >= |b|
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, f64::mul_add(a, b, -p))
}

pub const DD_EPS: f64 = 1.23e-32; // 2^-106

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const PI: Dd = Dd {
        hi: 3.141592653589793,
        lo: 1.2246467991473532e-16,
    };
    pub const TWO_PI: Dd = Dd {
        hi: 6.283185307179586,
        lo: 2.4492935982947064e-16,
    };
    pub const HALF_LN_TWO_PI: Dd = Dd {
        hi: 0.9189385332046728,
        lo: -3.8782941580672414e-17,
    };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Dd {
        let (s, e) = quick_two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (s1, s2) = quick_two_sum(s1, s2 + t2);
        Dd { hi: s1, lo: s2 }
    }

    #[inline]
    pub fn add_f64(self, o: f64) -> Dd {
        let (s1, s2) = two_sum(self.hi, o);
        let (s1, s2) = quick_two_sum(s1, s2 + self.lo);
        Dd { hi: s1, lo: s2 }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    #[inline]
    pub fn sub_f64(self, o: f64) -> Dd {
        self.add_f64(-o)
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, o.hi);
        let p2 = p2 + self.hi * o.lo + self.lo * o.hi;
        let (s, e) = quick_two_sum(p1, p2);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn mul_f64(self, o: f64) -> Dd {
        let (p1, p2) = two_prod(self.hi, o);
        let (s, e) = quick_two_sum(p1, p2 + self.lo * o);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd { hi: s, lo: e }.add_f64(q3)
    }

    #[inline]
    pub fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let (p1, p2) = two_prod(q1, d);
        let r = self.sub(Dd { hi: p1, lo: p2 });
        let q2 = (r.hi + r.lo) / d;
        let (s, e) = quick_two_sum(q1, q2);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn recip(self) -> Dd {
        Dd::ONE.div(self)
    }

    #[inline]
    pub fn sqr(self) -> Dd {
        let (p1, p2) = two_prod(self.hi, self.hi);
        let p2 = p2 + 2.0 * self.hi * self.lo;
        let (s, e) = quick_two_sum(p1, p2);
        Dd { hi: s, lo: e }
    }

    pub fn sqrt(self) -> Dd {
        if self.hi == 0.0 {
            return Dd::ZERO;
        }
        let y0 = self.hi.sqrt();
        // one Karp refinement: y = y0 + (x - y0^2) / (2 y0)
        let y0d = Dd::from_f64(y0);
        let diff = self.sub(y0d.sqr());
        y0d.add(diff.mul_f64(0.5 / y0))
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            self.neg()
        } else {
            self
        }
    }

    #[inline]
    pub fn lt(self, o: Dd) -> bool {
        self.hi < o.hi || (self.hi == o.hi && self.lo < o.lo)
    }

    /// exp(x) by argument reduction against ln 2 and a Taylor tail.
    pub fn exp(self) -> Dd {
        const LN2_HI: f64 = 0.6931471805599453;
        const LN2_LO: f64 = 2.3190468138462996e-17;
        const LN2_LO2: f64 = 5.707708438416212e-34;
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2_HI).round();
        let r = self
            .sub(Dd::from_f64(LN2_HI).mul_f64(k))
            .sub(Dd::from_f64(LN2_LO).mul_f64(k))
            .sub(Dd::from_f64(LN2_LO2).mul_f64(k));
        // |r| <= ln2/2; Taylor sum of r^n/n!
        let mut term = r;
        let mut sum = Dd::ONE.add(r);
        for n in 2..=26u32 {
            term = term.mul(r).div_f64(n as f64);
            sum = sum.add(term);
            if term.hi.abs() < 1e-35 * sum.hi.abs() {
                break;
            }
        }
        let scale = f64::powi(2.0, k as i32);
        Dd {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    /// Exact scaling by 2^e (limbs assumed to stay in the normal range).
    #[inline]
    pub fn ldexp(self, e: i32) -> Dd {
        let s = f64::powi(2.0, e);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// Natural log for positive values. Reduces to m in [1, 2) so the
    /// Newton correction never evaluates exp outside [-ln 2, 0], then adds
    /// e ln 2 back in double-double.
    pub fn ln(self) -> Dd {
        debug_assert!(self.hi > 0.0, "dd ln of nonpositive value");
        let e = (self.hi.log2().floor()) as i32;
        let m = self.ldexp(-e);
        let y0 = Dd::from_f64(m.hi.ln());
        // y1 = y0 + m e^{-y0} - 1
        let ym = y0.add(m.mul(y0.neg().exp())).sub_f64(1.0);
        let ef = e as f64;
        ym.add(Dd::new(0.6931471805599453, 2.3190468138462996e-17).mul_f64(ef))
            .add_f64(5.707708438416212e-34 * ef)
    }

    /// Simultaneous sin and cos with triple-limb pi/2 reduction; accurate in
    /// the absolute sense for |x| up to ~1e8.
    pub fn sin_cos(self) -> (Dd, Dd) {
        const HPI_HI: f64 = 1.5707963267948966;
        const HPI_LO: f64 = 6.123233995736766e-17;
        const HPI_LO2: f64 = -1.4973849048591698e-33;
        let k = (self.hi / HPI_HI).round();
        let r = self
            .sub(Dd::from_f64(HPI_HI).mul_f64(k))
            .sub(Dd::from_f64(HPI_LO).mul_f64(k))
            .sub(Dd::from_f64(HPI_LO2).mul_f64(k));
        // Taylor series on |r| <= pi/4
        let r2 = r.sqr();
        let mut s = r;
        let mut term = r;
        let mut n = 1.0;
        for _ in 0..16 {
            // (n+1)(n+2) stays far below 2^53, so the product is exact
            term = term.mul(r2).div_f64(-(n + 1.0) * (n + 2.0));
            s = s.add(term);
            n += 2.0;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        let mut c = Dd::ONE;
        let mut term = Dd::ONE;
        let mut n = 0.0;
        for _ in 0..16 {
            term = term.mul(r2).div_f64(-(n + 1.0) * (n + 2.0));
            c = c.add(term);
            n += 2.0;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        match (k as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, s.neg()),
            2 => (s.neg(), c.neg()),
            _ => (c.neg(), s),
        }
    }

    /// atan2(y, x): f64 seed plus one trigonometric correction.
    pub fn atan2(y: Dd, x: Dd) -> Dd {
        let t0 = Dd::from_f64(y.hi.atan2(x.hi));
        let (s, c) = t0.sin_cos();
        // delta = atan((y c - x s) / (x c + y s)), tiny
        let num = y.mul(c).sub(x.mul(s));
        let den = x.mul(c).add(y.mul(s));
        if den.hi == 0.0 {
            return t0;
        }
        t0.add(num.div(den))
    }
}

/// Complex number with double-double components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cdd {
    pub re: Dd,
    pub im: Dd,
}

impl Cdd {
    pub const ZERO: Cdd = Cdd {
        re: Dd::ZERO,
        im: Dd::ZERO,
    };

    #[inline]
    pub fn new(re: Dd, im: Dd) -> Cdd {
        Cdd { re, im }
    }

    #[inline]
    pub fn from_f64(re: f64, im: f64) -> Cdd {
        Cdd {
            re: Dd::from_f64(re),
            im: Dd::from_f64(im),
        }
    }

    #[inline]
    pub fn add(self, o: Cdd) -> Cdd {
        Cdd::new(self.re.add(o.re), self.im.add(o.im))
    }

    #[inline]
    pub fn sub(self, o: Cdd) -> Cdd {
        Cdd::new(self.re.sub(o.re), self.im.sub(o.im))
    }

    #[inline]
    pub fn add_f64(self, re: f64) -> Cdd {
        Cdd::new(self.re.add_f64(re), self.im)
    }

    #[inline]
    pub fn neg(self) -> Cdd {
        Cdd::new(self.re.neg(), self.im.neg())
    }

    #[inline]
    pub fn mul(self, o: Cdd) -> Cdd {
        Cdd::new(
            self.re.mul(o.re).sub(self.im.mul(o.im)),
            self.re.mul(o.im).add(self.im.mul(o.re)),
        )
    }

    #[inline]
    pub fn scale(self, k: Dd) -> Cdd {
        Cdd::new(self.re.mul(k), self.im.mul(k))
    }

    #[inline]
    pub fn scale_f64(self, k: f64) -> Cdd {
        Cdd::new(self.re.mul_f64(k), self.im.mul_f64(k))
    }

    #[inline]
    pub fn conj(self) -> Cdd {
        Cdd::new(self.re, self.im.neg())
    }

    #[inline]
    pub fn norm_sqr(self) -> Dd {
        self.re.sqr().add(self.im.sqr())
    }

    pub fn div(self, o: Cdd) -> Cdd {
        let d = o.norm_sqr();
        let n = self.mul(o.conj());
        Cdd::new(n.re.div(d), n.im.div(d))
    }

    pub fn recip(self) -> Cdd {
        let d = self.norm_sqr();
        Cdd::new(self.re.div(d), self.im.neg().div(d))
    }

    pub fn exp(self) -> Cdd {
        let m = self.re.exp();
        let (s, c) = self.im.sin_cos();
        Cdd::new(m.mul(c), m.mul(s))
    }

    /// Principal log.
    pub fn ln(self) -> Cdd {
        Cdd::new(self.norm_sqr().ln().mul_f64(0.5), Dd::atan2(self.im, self.re))
    }

    pub fn to_c64(self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.f64(), self.im.f64())
    }
}

// B_{2k} / (2k (2k-1)) as double-double, k = 1..18.
const STIRLING_DD: [(f64, f64); 18] = [
    (0.08333333333333333, 4.625929269271485e-18),
    (-0.002777777777777778, 1.0601087908747154e-19),
    (0.0007936507936507937, 6.883823317368282e-22),
    (-0.0005952380952380953, 5.36938218754726e-20),
    (0.0008417508417508417, 3.6870174889237694e-20),
    (-0.0019175269175269176, 1.0675702776872475e-19),
    (0.00641025641025641, 2.2240044563805217e-19),
    (-0.029550653594771242, 4.861760957508855e-19),
    (0.17964437236883057, -6.401600482710946e-19),
    (-1.3924322169059011, 1.5837056989230303e-17),
    (13.402864044168393, -6.154114101993966e-16),
    (-156.84828462600203, 9.391823141715389e-15),
    (2193.1033333333335, -1.3339255626002948e-13),
    (-36108.77125372499, 5.897583353514365e-13),
    (691472.268851313, 2.5585296305158e-11),
    (-15238221.539407415, -8.76774522490625e-10),
    (382900751.39141417, -2.4082684757733585e-08),
    (-10882266035.784391, 3.141830930219749e-07),
];

/// Principal log Γ(z) in double-double precision for Re z > 0:
/// upward recurrence to Re >= 30, then the Stirling asymptotic series.
/// Absolute error stays near 1e-31 · |log Γ| on the right half-plane.
pub fn ln_gamma_cdd(z: Cdd) -> Cdd {
    debug_assert!(z.re.hi > 0.0, "ln_gamma_cdd needs Re z > 0");
    let shift = if z.re.hi >= 30.0 {
        0usize
    } else {
        (30.0 - z.re.hi).ceil() as usize
    };
    let mut correction = Cdd::ZERO;
    for m in 0..shift {
        correction = correction.add(z.add_f64(m as f64).ln());
    }
    let w = z.add_f64(shift as f64);
    let ln_w = w.ln();
    // (w - 1/2) ln w - w + ln(2 pi)/2
    let mut acc = w
        .sub(Cdd::from_f64(0.5, 0.0))
        .mul(ln_w)
        .sub(w)
        .add(Cdd::new(Dd::HALF_LN_TWO_PI, Dd::ZERO));
    let inv_w = w.recip();
    let inv_w2 = inv_w.mul(inv_w);
    let mut pw = inv_w; // w^{1-2k}, k = 1
    for (hi, lo) in STIRLING_DD {
        let term = pw.scale(Dd::new(hi, lo));
        acc = acc.add(term);
        if term.re.hi.abs() + term.im.hi.abs() < 1e-36 * (1.0 + acc.re.hi.abs()) {
            break;
        }
        pw = pw.mul(inv_w2);
    }
    acc.sub(correction)
}

/// Gauss-Legendre nodes and weights on [-1, 1], refined to double-double
/// precision with Newton iterations on the Legendre recurrence.
pub fn gauss_legendre_dd(n: usize) -> (Vec<Dd>, Vec<Dd>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-like initial guess, refined in f64 first.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre_f64(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut xd = Dd::from_f64(x);
        for _ in 0..3 {
            let (p, dp) = legendre_dd(n, xd);
            xd = xd.sub(p.div(dp));
        }
        let (_, dp) = legendre_dd(n, xd);
        let w = Dd::from_f64(2.0)
            .div(Dd::ONE.sub(xd.sqr()).mul(dp.sqr()));
        nodes.push(xd);
        weights.push(w);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_f64(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn legendre_dd(n: usize, x: Dd) -> (Dd, Dd) {
    let mut p0 = Dd::ONE;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = x
            .mul(p1)
            .mul_f64(2.0 * kf - 1.0)
            .sub(p0.mul_f64(kf - 1.0))
            .div_f64(kf);
        p0 = p1;
        p1 = p2;
    }
    let dp = x.mul(p1).sub(p0).mul_f64(n as f64).div(x.sqr().sub(Dd::ONE));
    (p1, dp)
}

pub static GL15_DD: Lazy<(Vec<Dd>, Vec<Dd>)> = Lazy::new(|| gauss_legendre_dd(15));
