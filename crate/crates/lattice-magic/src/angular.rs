//! Wigner 3j symbols and Clebsch-Gordan coefficients.
//!
//! All angular momenta are passed doubled (`tj = 2j`) so half-integers stay exact.
//! Phases follow Condon-Shortley.

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn triangle(ta: i32, tb: i32, tc: i32) -> bool {
    ta + tb >= tc && ta + tc >= tb && tb + tc >= ta && (ta + tb + tc) % 2 == 0
}

/// (j1 j2 j3; m1 m2 m3) from the Racah formula; arguments doubled.
pub fn wigner_3j(tj1: i32, tj2: i32, tj3: i32, tm1: i32, tm2: i32, tm3: i32) -> f64 {
    if tm1 + tm2 + tm3 != 0 || !triangle(tj1, tj2, tj3) {
        return 0.0;
    }
    if tm1.abs() > tj1 || tm2.abs() > tj2 || tm3.abs() > tj3 {
        return 0.0;
    }
    if (tj1 + tm1) % 2 != 0 || (tj2 + tm2) % 2 != 0 || (tj3 + tm3) % 2 != 0 {
        return 0.0;
    }
    // Work in integers: every combination below is an even number of halves.
    let h = |x: i32| x / 2;
    let delta = factorial(h(tj1 + tj2 - tj3)) * factorial(h(tj1 - tj2 + tj3)) * factorial(h(-tj1 + tj2 + tj3))
        / factorial(h(tj1 + tj2 + tj3) + 1);
    let norm = factorial(h(tj1 + tm1))
        * factorial(h(tj1 - tm1))
        * factorial(h(tj2 + tm2))
        * factorial(h(tj2 - tm2))
        * factorial(h(tj3 + tm3))
        * factorial(h(tj3 - tm3));

    let k_min = 0.max(h(tj2 - tj3 - tm1)).max(h(tj1 - tj3 + tm2));
    let k_max = h(tj1 + tj2 - tj3).min(h(tj1 - tm1)).min(h(tj2 + tm2));
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(h(tj3 - tj2 + tm1) + k)
            * factorial(h(tj3 - tj1 - tm2) + k)
            * factorial(h(tj1 + tj2 - tj3) - k)
            * factorial(h(tj1 - tm1) - k)
            * factorial(h(tj2 + tm2) - k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    let phase = if h(tj1 - tj2 - tm3).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * (delta * norm).sqrt() * sum
}

/// <j1 m1; j2 m2 | J M>, arguments doubled.
pub fn clebsch_gordan(tj1: i32, tm1: i32, tj2: i32, tm2: i32, tj: i32, tm: i32) -> f64 {
    let phase = if ((tj1 - tj2 + tm) / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * ((tj + 1) as f64).sqrt() * wigner_3j(tj1, tj2, tj, tm1, tm2, -tm)
}

/// (-1)^n for an integer-valued doubled quantity `tn = 2n`.
pub fn parity(tn: i32) -> f64 {
    debug_assert!(tn % 2 == 0);
    if (tn / 2).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        // (1 1 0; 0 0 0) = -1/sqrt(3)
        assert!((wigner_3j(2, 2, 0, 0, 0, 0) + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        // (1/2 1/2 1; 1/2 -1/2 0) = 1/sqrt(6)
        assert!((wigner_3j(1, 1, 2, 1, -1, 0) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        // (2 1 1; 0 0 0) = sqrt(2/15)
        assert!((wigner_3j(4, 2, 2, 0, 0, 0) - (2.0f64 / 15.0).sqrt()).abs() < 1e-15);
        assert_eq!(wigner_3j(2, 2, 2, 0, 0, 0), 0.0);
    }

    #[test]
    fn spin_half_coupling() {
        // |1,0> = (|+-> + |-+>)/sqrt 2 and |0,0> = (|+-> - |-+>)/sqrt 2
        let s = 0.5f64.sqrt();
        assert!((clebsch_gordan(1, 1, 1, -1, 2, 0) - s).abs() < 1e-15);
        assert!((clebsch_gordan(1, -1, 1, 1, 2, 0) - s).abs() < 1e-15);
        assert!((clebsch_gordan(1, 1, 1, -1, 0, 0) - s).abs() < 1e-15);
        assert!((clebsch_gordan(1, -1, 1, 1, 0, 0) + s).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_rows() {
        // sum over m1, m2 of CG^2 for fixed J, M is 1 (j1 = 1/2, j2 = 3/2).
        for tj in [2, 4] {
            for tm in (-tj..=tj).step_by(2) {
                let mut s = 0.0;
                for tm1 in [-1, 1] {
                    let c = clebsch_gordan(1, tm1, 3, tm - tm1, tj, tm);
                    s += c * c;
                }
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }
}
