use serde::{Deserialize, Serialize};

use super::problem::{norm3, GuidanceProblem, Layout, Vec3};

/// Thresholds applied by the final constraint validation, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationTolerances {
    /// Max-norm of the discrete dynamics defect (m, m/s).
    pub dynamics: f64,
    /// Max-norm of the initial and terminal state error (m, m/s).
    pub boundary: f64,
    /// Thrust-bound deficit (m/s^2).
    pub thrust: f64,
    /// Cone and glide-slope violation.
    pub cone: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        ValidationTolerances {
            dynamics: 1e-6,
            boundary: 1e-4,
            thrust: 1e-6,
            cone: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dynamics_residual_inf: f64,
    pub boundary_error: f64,
    pub thrust_bound_violation: f64,
    pub cone_violation: f64,
    pub glide_slope_violation: Option<f64>,
    pub passed: bool,
}

impl ValidationReport {
    /// Flat encoding used for the `VALIDATE` checkpoint: the five residual
    /// fields (absent glide slope as -1) followed by `passed` as 1 or 0.
    pub fn to_vector(&self) -> Vec<f64> {
        vec![
            self.dynamics_residual_inf,
            self.boundary_error,
            self.thrust_bound_violation,
            self.cone_violation,
            self.glide_slope_violation.unwrap_or(-1.0),
            if self.passed { 1.0 } else { 0.0 },
        ]
    }
}

/// Segments of the validation workset, the per-constraint residual vector
/// that the report is reduced from.
///
/// | range                        | content                                   |
/// |------------------------------|-------------------------------------------|
/// | `dynamics`  (6(N-1))         | per step: abs r defect (3), v defect (3)  |
/// | `boundary`  (12)             | abs error of r0, v0, r_target, v_target   |
/// | `thrust`    (N)              | max(rho1-s, s-rho2, abs(u)-rho2, 0)       |
/// | `cone`      (N)              | max(abs(u)-s, 0)                          |
/// | `glide`     (N, if enabled)  | max(tan(gamma) abs(d_xy) - d_z, 0)        |
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorksetLayout {
    pub n: usize,
    pub glide: bool,
}

impl WorksetLayout {
    pub fn of(problem: &GuidanceProblem) -> Self {
        WorksetLayout {
            n: problem.nodes(),
            glide: problem.glide_slope_angle().is_some(),
        }
    }
    pub fn dynamics(&self) -> std::ops::Range<usize> {
        0..6 * (self.n - 1)
    }
    pub fn boundary(&self) -> std::ops::Range<usize> {
        let s = self.dynamics().end;
        s..s + 12
    }
    pub fn thrust(&self) -> std::ops::Range<usize> {
        let s = self.boundary().end;
        s..s + self.n
    }
    pub fn cone(&self) -> std::ops::Range<usize> {
        let s = self.thrust().end;
        s..s + self.n
    }
    pub fn glide_range(&self) -> std::ops::Range<usize> {
        let s = self.cone().end;
        if self.glide {
            s..s + self.n
        } else {
            s..s
        }
    }
    pub fn len(&self) -> usize {
        self.glide_range().end
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One step of the zero-order-hold dynamics. Shared by trajectory
/// reconstruction and validation so both evaluate the same expression.
#[inline]
pub fn propagate(r: Vec3, v: Vec3, u: Vec3, g: Vec3, dt: f64) -> (Vec3, Vec3) {
    let h = 0.5 * dt * dt;
    let mut rn = [0.0; 3];
    let mut vn = [0.0; 3];
    for i in 0..3 {
        let a = u[i] + g[i];
        rn[i] = r[i] + v[i] * dt + h * a;
        vn[i] = v[i] + dt * a;
    }
    (rn, vn)
}

/// Evaluates every constraint residual of `iterate`.
pub fn validation_workset(iterate: &[f64], problem: &GuidanceProblem) -> Vec<f64> {
    let lay = Layout { n: problem.nodes() };
    let wl = WorksetLayout::of(problem);
    let (g, dt) = (problem.g(), problem.dt());
    let mut ws = vec![0.0; wl.len()];

    let dyn_ws = &mut ws[wl.dynamics()];
    for k in 0..lay.n - 1 {
        let (rp, vp) = propagate(
            lay.get3(iterate, lay.r(k)),
            lay.get3(iterate, lay.v(k)),
            lay.get3(iterate, lay.u(k)),
            g,
            dt,
        );
        let r1 = lay.get3(iterate, lay.r(k + 1));
        let v1 = lay.get3(iterate, lay.v(k + 1));
        for i in 0..3 {
            dyn_ws[6 * k + i] = (r1[i] - rp[i]).abs();
            dyn_ws[6 * k + 3 + i] = (v1[i] - vp[i]).abs();
        }
    }

    let last = lay.n - 1;
    let pairs = [
        (lay.get3(iterate, lay.r(0)), problem.r0()),
        (lay.get3(iterate, lay.v(0)), problem.v0()),
        (lay.get3(iterate, lay.r(last)), problem.r_target()),
        (lay.get3(iterate, lay.v(last)), problem.v_target()),
    ];
    let bnd = &mut ws[wl.boundary()];
    for (j, (got, want)) in pairs.iter().enumerate() {
        for i in 0..3 {
            bnd[3 * j + i] = (got[i] - want[i]).abs();
        }
    }

    let (lo, hi) = (problem.rho1(), problem.rho2());
    let (t0, c0) = (wl.thrust().start, wl.cone().start);
    for k in 0..lay.n {
        let un = norm3(lay.get3(iterate, lay.u(k)));
        let s = iterate[lay.sigma(k)];
        ws[t0 + k] = nan_max(&[lo - s, s - hi, un - hi, 0.0]);
        ws[c0 + k] = nan_max(&[un - s, 0.0]);
    }

    if let Some(angle) = problem.glide_slope_angle() {
        let tan = angle.tan();
        let rt = problem.r_target();
        let g0 = wl.glide_range().start;
        for k in 0..lay.n {
            let r = lay.get3(iterate, lay.r(k));
            let d = [r[0] - rt[0], r[1] - rt[1], r[2] - rt[2]];
            let horiz = (d[0] * d[0] + d[1] * d[1]).sqrt();
            ws[g0 + k] = nan_max(&[tan * horiz - d[2], 0.0]);
        }
    }
    ws
}

/// Max that returns NaN if any element is NaN.
fn nan_max(xs: &[f64]) -> f64 {
    xs.iter().fold(f64::NEG_INFINITY, |m, &x| {
        if m.is_nan() || x.is_nan() {
            f64::NAN
        } else {
            m.max(x)
        }
    })
}

fn block_max(ws: &[f64]) -> f64 {
    if ws.is_empty() {
        0.0
    } else {
        nan_max(ws)
    }
}

/// Reduces a workset to a report. Non-finite residuals fail validation.
pub fn summarize(
    workset: &[f64],
    problem: &GuidanceProblem,
    tol: &ValidationTolerances,
) -> ValidationReport {
    let wl = WorksetLayout::of(problem);
    let dynamics = block_max(&workset[wl.dynamics()]);
    let boundary = block_max(&workset[wl.boundary()]);
    let thrust = block_max(&workset[wl.thrust()]);
    let cone = block_max(&workset[wl.cone()]);
    let glide = wl.glide.then(|| block_max(&workset[wl.glide_range()]));
    // `<=` is false for NaN, so non-finite residuals fail here too.
    let ok = |x: f64, t: f64| x.is_finite() && x <= t;
    let passed = ok(dynamics, tol.dynamics)
        && ok(boundary, tol.boundary)
        && ok(thrust, tol.thrust)
        && ok(cone, tol.cone)
        && glide.is_none_or(|x| ok(x, tol.cone));
    ValidationReport {
        dynamics_residual_inf: dynamics,
        boundary_error: boundary,
        thrust_bound_violation: thrust,
        cone_violation: cone,
        glide_slope_violation: glide,
        passed,
    }
}
