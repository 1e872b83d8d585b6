//! Integer-order Bessel functions of the first kind `J_n` and modified
//! functions of the second kind `K_n` for real non-negative arguments.
//!
//! `J_n` uses the ascending series for small arguments and Miller's backward
//! recurrence normalised by `J_0 + 2 Σ J_2k = 1` otherwise. `K_0`, `K_1` come
//! from the logarithmic series for `x ≤ 2` and Steed's continued fraction
//! above; higher orders follow by forward recurrence, which is stable for `K`.

use std::f64::consts::PI;

use crate::constants::EULER_GAMMA;
use crate::error::{Error, Result};

const SERIES_LIMIT_J: f64 = 4.0;
const SERIES_LIMIT_K: f64 = 2.0;
const EPS: f64 = 1e-17;
const MAX_ITER: usize = 10_000;

fn check_order_arg(op: &'static str, x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(op, format!("argument must be >= 0, got {x}")));
    }
    Ok(())
}

/// `J_n(x)` for `x ≥ 0`.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    check_order_arg("bessel_j", x)?;
    if !x.is_finite() {
        return Ok(0.0);
    }
    Ok(j_upto(order, x)[order as usize])
}

/// `J'_n(x) = (J_{n−1}(x) − J_{n+1}(x)) / 2`, with `J'_0 = −J_1`.
pub fn bessel_j_derivative(order: u32, x: f64) -> Result<f64> {
    check_order_arg("bessel_j_derivative", x)?;
    let j = j_upto(order + 1, x);
    let n = order as usize;
    Ok(if n == 0 {
        -j[1]
    } else {
        0.5 * (j[n - 1] - j[n + 1])
    })
}

/// `K_n(x)` for `x > 0`.
///
/// When the true value exceeds the `f64` range (only for extremely small `x`)
/// the result is [`Error::Overflow`] carrying the saturated value.
pub fn bessel_k(order: u32, x: f64) -> Result<f64> {
    let scaled = bessel_k_scaled(order, x)?;
    let v = scaled * (-x).exp();
    if !v.is_finite() {
        return Err(Error::Overflow {
            what: format!("K_{order}({x:e})"),
            saturated: f64::MAX,
        });
    }
    Ok(v)
}

/// Exponentially scaled `eˣ K_n(x)`; free of underflow for large `x`.
pub fn bessel_k_scaled(order: u32, x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::domain(
            "bessel_k",
            format!("argument must be > 0, got {x}"),
        ));
    }
    let v = k_upto_scaled(order, x)[order as usize];
    if !v.is_finite() {
        return Err(Error::Overflow {
            what: format!("K_{order}({x:e})"),
            saturated: f64::MAX,
        });
    }
    Ok(v)
}

/// `K'_n(x) = −(K_{n−1}(x) + K_{n+1}(x)) / 2`, with `K'_0 = −K_1`.
pub fn bessel_k_derivative(order: u32, x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::domain(
            "bessel_k_derivative",
            format!("argument must be > 0, got {x}"),
        ));
    }
    let k = k_upto_scaled(order + 1, x);
    let n = order as usize;
    let scaled = if n == 0 {
        -k[1]
    } else {
        -0.5 * (k[n - 1] + k[n + 1])
    };
    let v = scaled * (-x).exp();
    if !v.is_finite() {
        return Err(Error::Overflow {
            what: format!("K'_{order}({x:e})"),
            saturated: -f64::MAX,
        });
    }
    Ok(v)
}

/// `[J_0, J_1, J_2]` at `x ≥ 0`.
pub(crate) fn j012(x: f64) -> [f64; 3] {
    let v = j_upto(2, x);
    [v[0], v[1], v[2]]
}

/// `[eˣK_0, eˣK_1, eˣK_2]` at `x > 0`.
pub(crate) fn k012_scaled(x: f64) -> [f64; 3] {
    let v = k_upto_scaled(2, x);
    [v[0], v[1], v[2]]
}

fn j_upto(order: u32, x: f64) -> Vec<f64> {
    let n = order as usize;
    if x == 0.0 {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        return v;
    }
    if x <= SERIES_LIMIT_J {
        (0..=order).map(|k| j_series(k, x)).collect()
    } else {
        j_miller(n, x)
    }
}

fn j_series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = -half * half;
    let mut term = 1.0;
    for k in 1..=order {
        term *= half / k as f64;
    }
    let mut sum = term;
    for k in 1..MAX_ITER {
        term *= q / (k as f64 * (k as f64 + order as f64));
        sum += term;
        if term.abs() < EPS * sum.abs() {
            break;
        }
    }
    sum
}

fn j_miller(n: usize, x: f64) -> Vec<f64> {
    let top = (n as f64).max(x.ceil());
    let mut start = (top + 20.0 + 12.0 * top.cbrt()) as usize;
    start += start % 2;

    let mut out = vec![0.0; n + 1];
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next; // J_{k-1}
        next = cur;
        cur = prev;
        let idx = k - 1;
        if idx <= n {
            out[idx] = cur;
        }
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += cur;
    out.iter().map(|v| v / norm).collect()
}

fn k_upto_scaled(order: u32, x: f64) -> Vec<f64> {
    let (k0, k1) = if x <= SERIES_LIMIT_K {
        let (k0, k1) = k01_series(x);
        let e = x.exp();
        (k0 * e, k1 * e)
    } else {
        k01_steed_scaled(x)
    };
    let mut v = Vec::with_capacity(order as usize + 1);
    v.push(k0);
    if order >= 1 {
        v.push(k1);
    }
    for m in 1..order as usize {
        let k = v[m - 1] + 2.0 * m as f64 / x * v[m];
        v.push(k);
    }
    v
}

/// Ascending series for `K_0`, `K_1` (unscaled), valid for small `x`.
fn k01_series(x: f64) -> (f64, f64) {
    let half = 0.5 * x;
    let q = half * half;
    let log_term = half.ln() + EULER_GAMMA;

    // K0 = −(ln(x/2)+γ) I0 + Σ_{k≥1} H_k q^k/(k!)²
    let mut term = 1.0;
    let mut i0 = 1.0;
    let mut hsum = 0.0;
    let mut harmonic = 0.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= q / (kf * kf);
        harmonic += 1.0 / kf;
        i0 += term;
        hsum += harmonic * term;
        if term < EPS * i0 {
            break;
        }
    }
    let k0 = -log_term * i0 + hsum;

    // K1 = 1/x + ln(x/2) I1 − (x/4) Σ (ψ(k+1)+ψ(k+2)) q^k/(k!(k+1)!)
    let mut term = 1.0; // q^k/(k!(k+1)!)
    let mut psi1 = -EULER_GAMMA; // ψ(k+1)
    let mut psi2 = 1.0 - EULER_GAMMA; // ψ(k+2)
    let mut i1 = term;
    let mut psum = (psi1 + psi2) * term;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= q / (kf * (kf + 1.0));
        psi1 += 1.0 / kf;
        psi2 += 1.0 / (kf + 1.0);
        i1 += term;
        psum += (psi1 + psi2) * term;
        if term < EPS * i1 {
            break;
        }
    }
    let i1 = half * i1;
    let k1 = 1.0 / x + half.ln() * i1 - 0.5 * half * psum;
    (k0, k1)
}

/// Steed's continued fraction (Temme's CF2 variant) for `eˣK_0`, `eˣK_1`.
fn k01_steed_scaled(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

#[cfg(test)]
mod tests {
    use super::*;

    // (order, x, J_n(x), K_n(x)) from 30-digit arbitrary-precision evaluation.
    const REFERENCE: &[(u32, f64, f64, f64)] = &[
        (0, 0.001, 0.99999975000001562, 7.0236888005623813),
        (0, 0.1, 0.99750156206604003, 2.4270690247020166),
        (0, 0.5, 0.9384698072408129, 0.92441907122766586),
        (0, 1.0, 0.76519768655796655, 0.42102443824070833),
        (0, 2.0, 0.22389077914123567, 0.11389387274953344),
        (0, 2.405, -9.0558000773044695e-5, 0.06980002817937285),
        (0, 3.5, -0.38012773998726338, 0.019598897170368489),
        (0, 5.0, -0.1775967713143383, 0.0036910983340425943),
        (0, 7.5, 0.2663396578803784, 0.00024917761635611439),
        (0, 10.0, -0.24593576445134834, 1.7780062316167652e-5),
        (0, 15.0, -0.014224472826780773, 9.8195364823964345e-8),
        (0, 20.0, 0.16702466434058315, 5.7412378153365243e-10),
        (0, 30.0, -0.086367983581040211, 2.1324774964630564e-14),
        (0, 42.0, -0.11473949671358282, 1.1086374104875188e-19),
        (0, 50.0, 0.055812327669251815, 3.4101677497894955e-23),
        (1, 0.001, 0.00049999993750000261, 999.99623815608555),
        (1, 0.1, 0.049937526036242, 9.8538447808706056),
        (1, 0.5, 0.24226845767487389, 1.6564411200033009),
        (1, 1.0, 0.44005058574493352, 0.60190723019723457),
        (1, 2.0, 0.57672480775687339, 0.13986588181652243),
        (1, 2.405, 0.51910983397075588, 0.083201096538685534),
        (1, 3.5, 0.13737752736232719, 0.022239392925923834),
        (1, 5.0, -0.32757913759146522, 0.0040446134454521642),
        (1, 7.5, 0.13524842757970551, 0.00026529739012528953),
        (1, 10.0, 0.043472746168861437, 1.8648773453825585e-5),
        (1, 15.0, 0.20510403861352276, 1.0141729369762092e-7),
        (1, 20.0, 0.066833124175850046, 5.8830579695570382e-10),
        (1, 30.0, -0.11875106261662294, 2.1677320018915494e-14),
        (1, 42.0, -0.04599388822188714, 1.1217587191275845e-19),
        (1, 50.0, -0.097511828125175138, 3.4441022267175556e-23),
        (2, 0.001, 1.2499998958333366e-7, 1999999.5000009716),
        (2, 0.1, 0.001248958658799919, 199.50396464211412),
        (2, 0.5, 0.030604023458682641, 7.5501835512408694),
        (2, 1.0, 0.11490348493190048, 1.6248388986351775),
        (2, 2.0, 0.35283402861563772, 0.25375975456605586),
        (2, 2.405, 0.43178272762302329, 0.13899012925104482),
        (2, 3.5, 0.45862918419430748, 0.032307121699467823),
        (2, 5.0, 0.046565116277752216, 0.00530894371222346),
        (2, 7.5, -0.23027341052579026, 0.0003199235870561916),
        (2, 10.0, 0.25463031368512062, 2.1509817006932769e-5),
        (2, 15.0, 0.041571677975250475, 1.117176706503138e-7),
        (2, 20.0, -0.16034135192299815, 6.3295436122922281e-10),
        (2, 30.0, 0.078451246073265349, 2.2769929632558263e-14),
        (2, 42.0, 0.11254931156015962, 1.1620544923507371e-19),
        (2, 50.0, -0.059712800794258821, 3.5479318388581977e-23),
    ];

    #[test]
    fn reference_values() {
        for &(n, x, j_ref, k_ref) in REFERENCE {
            let j = bessel_j(n, x).unwrap();
            // relative where |J| is O(1); absolute near zeros of J
            let j_tol = 1e-10 * j_ref.abs().max(1e-2);
            assert!((j - j_ref).abs() <= j_tol, "J_{n}({x}) = {j}, want {j_ref}");
            let k = bessel_k(n, x).unwrap();
            assert!(
                ((k - k_ref) / k_ref).abs() <= 1e-10,
                "K_{n}({x}) = {k}, want {k_ref}"
            );
        }
    }

    #[test]
    fn named_points() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(2, 0.0).unwrap(), 0.0);
        assert!((bessel_j(1, 1.0).unwrap() - 0.4400505857).abs() < 1e-9);
        assert!((bessel_k(1, 1.0).unwrap() - 0.6019072302).abs() < 1e-9);
    }

    #[test]
    fn domain_and_overflow() {
        assert!(matches!(bessel_k(0, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(bessel_k(1, -1.0), Err(Error::Domain { .. })));
        assert!(matches!(bessel_j(1, -1.0), Err(Error::Domain { .. })));
        match bessel_k(2, 1e-200) {
            Err(Error::Overflow { saturated, .. }) => assert_eq!(saturated, f64::MAX),
            other => panic!("expected saturated overflow, got {other:?}"),
        }
        // K1 at 1e-300 is 1e300, still representable
        assert!(bessel_k(1, 1e-300).unwrap() > 9.9e299);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &x in &[0.3, 1.7, 4.5, 9.0, 25.0] {
            let h = 1e-6;
            for n in 0..3 {
                let fd = (bessel_j(n, x + h).unwrap() - bessel_j(n, x - h).unwrap()) / (2.0 * h);
                assert!((bessel_j_derivative(n, x).unwrap() - fd).abs() < 1e-8);
                let fd = (bessel_k(n, x + h).unwrap() - bessel_k(n, x - h).unwrap()) / (2.0 * h);
                let an = bessel_k_derivative(n, x).unwrap();
                assert!(((an - fd) / an).abs() < 1e-6, "K'_{n}({x})");
            }
        }
    }

    #[test]
    fn branch_boundaries_are_continuous() {
        for (n, xb) in [(0, SERIES_LIMIT_J), (1, SERIES_LIMIT_J), (2, SERIES_LIMIT_J)] {
            let a = bessel_j(n, xb).unwrap();
            let b = bessel_j(n, xb * (1.0 + 1e-12)).unwrap();
            assert!((a - b).abs() < 1e-11);
        }
        for n in 0..3 {
            let a = bessel_k(n, SERIES_LIMIT_K).unwrap();
            let b = bessel_k(n, SERIES_LIMIT_K * (1.0 + 1e-12)).unwrap();
            assert!(((a - b) / a).abs() < 1e-10);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn three_term_recurrence(nu in 1u32..=2, x in 0.1f64..30.0) {
                let jm = bessel_j(nu - 1, x).unwrap();
                let j = bessel_j(nu, x).unwrap();
                let jp = bessel_j(nu + 1, x).unwrap();
                prop_assert!((jm + jp - 2.0 * nu as f64 / x * j).abs() < 1e-8);
            }

            #[test]
            fn k_positive_and_decreasing(nu in 0u32..=2, x in 0.01f64..45.0, dx in 1e-3f64..2.0) {
                let a = bessel_k_scaled(nu, x).unwrap() * (-x).exp();
                let b = bessel_k_scaled(nu, x + dx).unwrap() * (-(x + dx)).exp();
                prop_assert!(a > 0.0 && b > 0.0);
                prop_assert!(b < a);
            }
        }
    }
}
