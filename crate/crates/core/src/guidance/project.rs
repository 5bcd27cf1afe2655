//! Euclidean projections onto the per-node convex sets.

/// Projects `(p, s)` onto the second-order cone `||p|| <= a * s`.
pub(crate) fn project_cone<const D: usize>(p: &mut [f64; D], s: &mut f64, a: f64) {
    let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= a * *s {
        return;
    }
    if a * n <= -*s {
        *p = [0.0; D];
        *s = 0.0;
        return;
    }
    // Nearest point on the boundary ray through direction (a p/n, 1).
    let t = (a * n + *s) / (1.0 + a * a);
    let scale = a * t / n;
    for x in p.iter_mut() {
        *x *= scale;
    }
    *s = t;
}

/// Projects `(u, sigma)` onto `{ ||u|| <= sigma, lo <= sigma <= hi }`.
///
/// If the cone projection already lies in the slab it is the answer;
/// otherwise the violated face of the slab is active and the problem reduces
/// to clipping `u` onto the disc of that radius.
pub(crate) fn project_thrust(u: &mut [f64; 3], sigma: &mut f64, lo: f64, hi: f64) {
    let u_in = *u;
    project_cone(u, sigma, 1.0);
    if *sigma >= lo && *sigma <= hi {
        return;
    }
    let face = if *sigma < lo { lo } else { hi };
    *u = u_in;
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > face {
        let k = face / n;
        for x in u.iter_mut() {
            *x *= k;
        }
    }
    *sigma = face;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn in_thrust_set(u: [f64; 3], s: f64, lo: f64, hi: f64) -> bool {
        let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        n <= s * (1.0 + 1e-12) + 1e-12 && s >= lo - 1e-12 && s <= hi + 1e-12
    }

    #[test]
    fn cone_cases() {
        let mut p = [3.0, 4.0];
        let mut s = 5.0;
        project_cone(&mut p, &mut s, 1.0);
        assert_eq!((p, s), ([3.0, 4.0], 5.0));

        let mut p = [3.0, 4.0];
        let mut s = -6.0;
        project_cone(&mut p, &mut s, 1.0);
        assert_eq!((p, s), ([0.0, 0.0], 0.0));

        let mut p = [2.0, 0.0];
        let mut s = 0.0;
        project_cone(&mut p, &mut s, 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slab_faces() {
        let mut u = [0.0, 0.0, 0.5];
        let mut s = 0.1;
        project_thrust(&mut u, &mut s, 2.0, 8.0);
        assert_eq!((u, s), ([0.0, 0.0, 0.5], 2.0));

        let mut u = [0.0, 0.0, 20.0];
        let mut s = 20.0;
        project_thrust(&mut u, &mut s, 2.0, 8.0);
        assert_eq!((u, s), ([0.0, 0.0, 8.0], 8.0));
    }

    proptest! {
        // Variational characterization: P(y) is the projection onto a closed
        // convex set C iff (y - P(y)) . (q - P(y)) <= 0 for every q in C.
        #[test]
        fn thrust_projection_is_euclidean(
            y in prop::array::uniform4(-10.0f64..10.0),
            qs in prop::collection::vec(prop::array::uniform4(-1.0f64..1.0), 16),
            lo in 0.0f64..3.0,
            width in 0.1f64..6.0,
        ) {
            let hi = lo + width;
            let mut u = [y[0], y[1], y[2]];
            let mut s = y[3];
            project_thrust(&mut u, &mut s, lo, hi);
            prop_assert!(in_thrust_set(u, s, lo, hi));
            let pv = [u[0], u[1], u[2], s];
            for q in qs {
                // Map the sample into C: sigma uniform in [lo, hi], u inside its ball.
                let sq = lo + (q[3] + 1.0) / 2.0 * width;
                let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt().max(1.0);
                let qv = [q[0] / qn * sq, q[1] / qn * sq, q[2] / qn * sq, sq];
                let dot: f64 = (0..4).map(|i| (y[i] - pv[i]) * (qv[i] - pv[i])).sum();
                prop_assert!(dot <= 1e-9, "dot = {dot}");
            }
        }

        #[test]
        fn cone_projection_is_idempotent(p in prop::array::uniform2(-5.0f64..5.0), s in -5.0f64..5.0, a in 0.1f64..4.0) {
            let (mut p1, mut s1) = (p, s);
            project_cone(&mut p1, &mut s1, a);
            let (mut p2, mut s2) = (p1, s1);
            project_cone(&mut p2, &mut s2, a);
            prop_assert!((p1[0] - p2[0]).abs() < 1e-12 && (p1[1] - p2[1]).abs() < 1e-12 && (s1 - s2).abs() < 1e-12);
        }
    }
}
