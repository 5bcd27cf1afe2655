//! Independent reference for the 1-D vertical descent: enumerate three-level
//! thrust profiles (down at `rho1` until `t1`, up at `rho1` until `t2`, full
//! `rho2` after) on a fine grid of `t1`, with `t2` fixed by the terminal
//! velocity condition. Each profile is averaged onto the zero-order-hold
//! nodes, forward simulated, and the cost interpolated at the sign change of
//! the terminal altitude.

pub struct Vertical {
    pub height: f64,
    pub gravity: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub nodes: usize,
    pub dt: f64,
}

impl Vertical {
    pub fn reference() -> Self {
        Vertical {
            height: 100.0,
            gravity: 3.71,
            rho1: 2.0,
            rho2: 8.0,
            nodes: 20,
            dt: 0.6,
        }
    }
}

fn overlap(lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    (hi.min(b) - lo.max(a)).max(0.0)
}

fn profile(p: &Vertical, t1: f64, t2: f64) -> Vec<f64> {
    (0..p.nodes - 1)
        .map(|k| {
            let (lo, hi) = (k as f64 * p.dt, (k + 1) as f64 * p.dt);
            (-p.rho1 * overlap(lo, hi, 0.0, t1) + p.rho1 * overlap(lo, hi, t1, t2)
                + p.rho2 * overlap(lo, hi, t2, f64::INFINITY))
                / p.dt
        })
        .collect()
}

fn altitude(p: &Vertical, accel: &[f64]) -> f64 {
    let (mut r, mut v) = (p.height, 0.0);
    for a in accel {
        let net = a - p.gravity;
        r += v * p.dt + 0.5 * p.dt * p.dt * net;
        v += p.dt * net;
    }
    r
}

/// Minimum fuel (sum of slack times dt), including the final node's slack,
/// which sits at `rho1`.
pub fn min_fuel(p: &Vertical, grid: usize) -> f64 {
    let tf = (p.nodes - 1) as f64 * p.dt;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..grid {
        let t1 = tf * i as f64 / (grid - 1) as f64;
        let t2 = (p.gravity * tf + 2.0 * p.rho1 * t1 - p.rho2 * tf) / (p.rho1 - p.rho2);
        if t2 < t1 || t2 > tf {
            continue;
        }
        let accel = profile(p, t1, t2);
        let r = altitude(p, &accel);
        let cost = accel.iter().map(|a| a.abs().max(p.rho1)).sum::<f64>() * p.dt + p.rho1 * p.dt;
        if let Some((r0, c0)) = prev {
            if r0.signum() != r.signum() {
                let w = r0 / (r0 - r);
                return c0 + w * (cost - c0);
            }
        }
        prev = Some((r, cost));
    }
    panic!("no feasible switch pair on the grid");
}

/// Oracle value for [`Vertical::reference`], frozen from `min_fuel(_, 20000)`.
pub const REFERENCE_MIN_FUEL: f64 = 46.23806;
