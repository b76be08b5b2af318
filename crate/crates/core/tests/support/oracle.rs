//! Independent high-precision evaluation of the phase-flip bound and the key
//! length, written from the defining expressions with a different algebraic
//! grouping than the library.

#![allow(dead_code)]

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

pub type Big = FBig<HalfEven, 2>;

pub const PRECISION: usize = 256;

pub fn big(x: f64) -> Big {
    Big::try_from(x).unwrap().with_precision(PRECISION).value()
}

fn sqrt(x: &Big) -> Big {
    if *x == Big::ZERO {
        return Big::ZERO;
    }
    x.context().sqrt(x.repr()).value()
}

fn to_f64(x: &Big) -> f64 {
    x.to_f64().value()
}

pub struct Rates {
    pub mu: f64,
    pub s_tilde_z: f64,
    /// Left / right detector rates for 00 and αα, and the left rates for
    /// 01 and 10.
    pub l00: f64,
    pub laa: f64,
    pub r00: f64,
    pub raa: f64,
    pub l01: f64,
    pub l10: f64,
}

pub struct Bound {
    pub upper_right: f64,
    pub lower_left_raw: f64,
    pub raw: f64,
}

/// Perfect-square form of the upper bound and the square-minus-cross form of
/// the lower bound, in the symmetric `e^{±μ/2}` scaling.
pub fn phase_flip(r: &Rates) -> Bound {
    let one = big(1.0);
    let two = big(2.0);
    let half_mu = big(r.mu) / &two;
    let h = half_mu.clone().exp(); // e^{μ/2}
    let hi = (-half_mu).exp(); // e^{-μ/2}
    let e = &hi * &hi;
    let k = &one - &e;
    let norm = &one / (&two * (&one + &e));

    let (r00, raa) = (sqrt(&big(r.r00)), sqrt(&big(r.raa)));
    let sq = &hi * &r00 + &h * &raa + &h * &k;
    let upper = &norm * &sq * &sq;

    let (l00, laa) = (sqrt(&big(r.l00)), sqrt(&big(r.laa)));
    let d = &hi * &l00 - &h * &laa;
    let cross = &two * &k * (&hi * &l00 + &h * &laa) * &h;
    let lower_raw = &norm * (&d * &d - cross);
    let lower = if lower_raw < Big::ZERO {
        Big::ZERO
    } else {
        lower_raw.clone()
    };

    let raw = ((&one + &e) * (&upper - &lower) + big(r.l01) + big(r.l10)) / (&two * big(r.s_tilde_z));
    Bound {
        upper_right: to_f64(&upper),
        lower_left_raw: to_f64(&lower_raw),
        raw: to_f64(&raw),
    }
}

/// Binary entropy in bits through natural logarithms.
pub fn entropy(x: f64) -> Big {
    if x == 0.0 || x == 1.0 {
        return Big::ZERO;
    }
    let one = big(1.0);
    let p = big(x);
    let q = &one - &p;
    let ln2 = big(2.0).ln();
    -(&p * p.ln() + &q * q.ln()) / ln2
}

pub fn key_length(n_tilde_z: f64, e_ph: f64, n_v: f64, e_v: f64, f_ec: f64) -> f64 {
    let one = big(1.0);
    let privacy = big(n_tilde_z) * (&one - entropy(e_ph));
    let correction = big(f_ec) * big(n_v) * entropy(e_v);
    to_f64(&(privacy - correction))
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
