use num_complex::Complex64;

use crate::coordinates::{Geometry, RadialPoint, Rescale};
use crate::numerics::{ode_solve_with, root_find_bracketed, OdeSettings, ToleranceSpec};
use crate::operator::{RadialMode, DEFAULT_ANCHOR};
use crate::spacetime::Spacetime;
use crate::Result;

use super::{
    doubling_windows, forward_admissible, ratios_from_logs, raw_scale, tail_start, SpectralSettings,
    TailUse,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateVerdict {
    NoEigenvalueEvidence,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEvidence {
    pub lambda_star: f64,
    pub window_ratios: Vec<f64>,
    /// `(|u|, |v|)` at the end of the run.
    pub uv_limits: Option<(f64, f64)>,
    /// `max |(|u|^2 - |v|^2) - initial|`, relative to the larger of the
    /// initial and the running `|u|^2 + |v|^2`.
    pub conservation_drift: Option<f64>,
    /// Largest relative change of `(u, v)` over the last doubling window.
    pub plateau_change: Option<f64>,
    pub anchor: f64,
    pub verdict: CandidateVerdict,
}

/// `-Z alpha_s / r_star`; `-Z alpha_s` in rescaled units.
pub fn candidate_eigenvalue(st: &Spacetime, rescale: Rescale) -> Result<f64> {
    st.require_black_hole()?;
    let scale = raw_scale(st, rescale)?;
    Ok(-st.charge_coupling() / scale)
}

/// `(u, v)` along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct UvRun {
    pub xs: Vec<f64>,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub eta: Vec<f64>,
    /// `int 2 (|u|^2 + |v|^2) dx` from the start.
    pub norm_integral: Vec<f64>,
}

/// Variation of constants about the free tail solutions
/// `g = u (1, i) e^{i eta} + v (1, -i) e^{-i eta}`, `eta' = b + lambda`,
/// for real `lambda`, started at `x_a` with `eta(x_a) = 0`.
pub fn integrate_uv(
    mode: &RadialMode,
    lambda: f64,
    x_a: f64,
    g: [Complex64; 2],
    outputs: &[f64],
    settings: &SpectralSettings,
) -> Result<UvRun> {
    let i = Complex64::new(0.0, 1.0);
    let u0 = 0.5 * (g[0] - i * g[1]);
    let v0 = 0.5 * (g[0] + i * g[1]);
    let pa = mode.geometry().point_of_x(x_a)?;
    let y0 = [-pa.log_gap, 0.0, u0.re, u0.im, v0.re, v0.im, 0.0];
    let geometry = mode.geometry();
    let ode = OdeSettings::new(settings.uv_tol).with_max_steps(settings.max_steps);
    let traj = ode_solve_with(
        |_x, y, dy| {
            let p = RadialPoint::from_log_gap(-y[0]);
            let lc = mode.local(p);
            let e = Complex64::from_polar(1.0, -2.0 * y[1]);
            let u = Complex64::new(y[2], y[3]);
            let v = Complex64::new(y[4], y[5]);
            let du = -Complex64::new(lc.kt, lc.mass) * e * v;
            let dv = -Complex64::new(lc.kt, -lc.mass) * e.conj() * u;
            dy[0] = geometry.dt_dx(p);
            dy[1] = lc.b + lambda;
            dy[2] = du.re;
            dy[3] = du.im;
            dy[4] = dv.re;
            dy[5] = dv.im;
            dy[6] = 2.0 * (u.norm_sqr() + v.norm_sqr());
        },
        x_a,
        *outputs.last().unwrap_or(&x_a),
        &y0,
        &ode,
        Some(outputs),
    )?;
    Ok(UvRun {
        xs: traj.xs.clone(),
        u: traj.ys.iter().map(|y| Complex64::new(y[2], y[3])).collect(),
        v: traj.ys.iter().map(|y| Complex64::new(y[4], y[5])).collect(),
        eta: traj.ys.iter().map(|y| y[1]).collect(),
        norm_integral: traj.ys.iter().map(|y| y[6]).collect(),
    })
}

/// Start of the `(u, v)` run: the default anchor, pushed out for `fa > 0`
/// to where `|kt| <= 10` so the admissible solution stays representable.
fn anchor(mode: &RadialMode, settings: &SpectralSettings) -> Result<f64> {
    if mode.big_p() == 0.0 {
        return Ok(DEFAULT_ANCHOR);
    }
    let g = mode.geometry();
    let x_tail = tail_start(mode, TailUse::Scan, settings);
    let excess = |x: f64| -> f64 {
        match g.point_of_x(x) {
            Ok(p) => mode.local(p).kt.abs().ln() - 10f64.ln(),
            Err(_) => f64::NAN,
        }
    };
    if excess(DEFAULT_ANCHOR) <= 0.0 {
        return Ok(DEFAULT_ANCHOR);
    }
    if !(excess(x_tail) < 0.0) {
        return Ok(x_tail);
    }
    let tol = ToleranceSpec {
        rel_tol: 1e-10,
        abs_tol: 0.0,
        max_iterations: 200,
    };
    Ok(root_find_bracketed(excess, DEFAULT_ANCHOR, x_tail, &tol)?)
}

/// Evidence at the candidate eigenvalue from the `(u, v)` system.
pub fn variation_limits(mode: &RadialMode, settings: &SpectralSettings) -> Result<CandidateEvidence> {
    let st = mode.spacetime();
    let lambda = candidate_eigenvalue(st, Rescale::ByInnerRadius)?;
    let extremal = matches!(mode.geometry(), Geometry::Extremal);
    let x = tail_start(mode, TailUse::Scan, settings);
    let windows = doubling_windows(x, 4);
    let x_a = anchor(mode, settings)?;
    let fwd = forward_admissible(mode, Complex64::new(lambda, 0.0), &[], x_a, settings)?;

    if !fwd.explicit {
        // never leaves the WKB regime: report the window growth only
        let far = forward_admissible(mode, Complex64::new(lambda, 0.0), &windows, windows[4], settings)?;
        let logs: Vec<f64> = far.windows.iter().map(|g| g.log_first()).collect();
        return Ok(CandidateEvidence {
            lambda_star: lambda,
            window_ratios: ratios_from_logs(&logs),
            uv_limits: None,
            conservation_drift: None,
            plateau_change: None,
            anchor: x_a,
            verdict: CandidateVerdict::Inconclusive,
        });
    }

    let mut g = fwd.bundle.cols[0];
    let scale = if mode.big_p() == 0.0 { fwd.bundle.log_scale.exp() } else { 1.0 };
    g[0] *= scale;
    g[1] *= scale;
    let mut outputs = vec![x_a];
    outputs.extend_from_slice(&windows);
    let run = integrate_uv(mode, lambda, x_a, g, &outputs, settings)?;

    let q0 = run.u[0].norm_sqr() + run.v[0].norm_sqr();
    let d0 = run.u[0].norm_sqr() - run.v[0].norm_sqr();
    let drift = run
        .u
        .iter()
        .zip(&run.v)
        .map(|(u, v)| (u.norm_sqr() - v.norm_sqr() - d0).abs() / q0.max(u.norm_sqr() + v.norm_sqr()))
        .fold(0.0, f64::max);
    let logs: Vec<f64> = run.norm_integral[1..]
        .windows(2).map(|w| (w[1] - w[0]).ln()).collect();
    let ratios = ratios_from_logs(&logs);
    let n = run.u.len();
    let (u_last, v_last) = (run.u[n - 1], run.v[n - 1]);
    let scale_last = (u_last.norm_sqr() + v_last.norm_sqr()).sqrt();
    let plateau = (run.u[n - 2] - u_last).norm().max((run.v[n - 2] - v_last).norm()) / scale_last;
    let nonzero = scale_last > 0.0 && scale_last.is_finite();
    let verdict = if !extremal && nonzero && ratios.iter().all(|&r| r > 1.5) {
        CandidateVerdict::NoEigenvalueEvidence
    } else {
        CandidateVerdict::Inconclusive
    };
    Ok(CandidateEvidence {
        lambda_star: lambda,
        window_ratios: ratios,
        uv_limits: Some((u_last.norm(), v_last.norm())),
        conservation_drift: Some(drift),
        plateau_change: Some(plateau),
        anchor: x_a,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::CoefficientModel;
    use crate::spacetime::extremal_mass_number;
    use crate::spectral::propagate::{Bundle, Engine, Pos};

    const ALPHA: f64 = 1.0 / 137.036;

    fn cfg_sub() -> Spacetime {
        Spacetime::new(1, 2e18).unwrap()
    }

    #[test]
    fn candidate_values() {
        let l = candidate_eigenvalue(&cfg_sub(), Rescale::ByInnerRadius).unwrap();
        assert!((l + 7.29735e-3).abs() < 1e-8);
        let st = Spacetime::new(1, extremal_mass_number(1, &Default::default())).unwrap();
        let raw = candidate_eigenvalue(&st, Rescale::None).unwrap();
        assert!((raw / -2.019e21 - 1.0).abs() < 1e-3, "{raw}");
        let st2 = Spacetime::new(2, 4e18).unwrap();
        let l2 = candidate_eigenvalue(&st2, Rescale::ByInnerRadius).unwrap();
        assert!((l2 - 2.0 * l).abs() < 1e-15);
        assert!(candidate_eigenvalue(&Spacetime::new(1, 1.0).unwrap(), Rescale::None).is_err());
    }

    #[test]
    fn subextremal_evidence() {
        let m = RadialMode::new(cfg_sub(), -1, 0.0, Some(0.0)).unwrap();
        let ev = variation_limits(&m, &SpectralSettings::default()).unwrap();
        assert_eq!(ev.verdict, CandidateVerdict::NoEigenvalueEvidence);
        assert!(ev.conservation_drift.unwrap() < 1e-8);
        for r in &ev.window_ratios {
            assert!((r - 2.0).abs() < 0.1, "{:?}", ev.window_ratios);
        }
        let (u, v) = ev.uv_limits.unwrap();
        assert!(u > 0.0 && v > 0.0);
        assert!(ev.plateau_change.unwrap() < 1e-8);
    }

    #[test]
    fn extremal_evidence_is_inconclusive() {
        let st = Spacetime::new(1, extremal_mass_number(1, &Default::default())).unwrap();
        let m = RadialMode::new(st, -1, 0.0, Some(0.0)).unwrap();
        let ev = variation_limits(&m, &SpectralSettings::default()).unwrap();
        assert_eq!(ev.verdict, CandidateVerdict::Inconclusive);
        assert!(ev.conservation_drift.unwrap() < 1e-8);
        assert_eq!(ev.window_ratios.len(), 3);
    }

    #[test]
    fn free_model_keeps_uv_constant() {
        let m = RadialMode::new(cfg_sub(), -1, 0.0, Some(0.0))
            .unwrap()
            .with_model(CoefficientModel::FreeComparison);
        let g = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.7)];
        let run = integrate_uv(&m, -ALPHA, 1.0, g, &[2.0, 10.0, 50.0], &SpectralSettings::default()).unwrap();
        for (u, v) in run.u.iter().zip(&run.v) {
            assert_eq!(*u, run.u[0]);
            assert_eq!(*v, run.v[0]);
        }
    }

    #[test]
    fn uv_reconstructs_direct_solution() {
        let s = SpectralSettings::default();
        let m = RadialMode::new(cfg_sub(), -1, 0.0, Some(0.0)).unwrap();
        let lam = 0.013;
        let g = [Complex64::new(0.8, 0.0), Complex64::new(-0.3, 0.2)];
        let run = integrate_uv(&m, lam, 1.0, g, &[3.0], &s).unwrap();
        let eng = Engine::new(&m, Complex64::new(lam, 0.0), &s);
        let (b, _, _) = eng.x_leg(&Bundle::single(g), Pos::at_x(&m, 1.0).unwrap(), 3.0, &[]).unwrap();
        let direct = [b.cols[0][0] * b.log_scale.exp(), b.cols[0][1] * b.log_scale.exp()];
        let e = Complex64::from_polar(1.0, run.eta[0]);
        let i = Complex64::new(0.0, 1.0);
        let g1 = run.u[0] * e + run.v[0] / e;
        let g2 = i * (run.u[0] * e - run.v[0] / e);
        assert!((g1 - direct[0]).norm() < 1e-8 && (g2 - direct[1]).norm() < 1e-8);
    }
}
