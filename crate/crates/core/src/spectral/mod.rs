//! Spectral diagnostics for the radial operator: endpoint classification,
//! deficiency indices, the self-adjointness threshold in `fa`, Weyl
//! sequences, eigenvalue scans, evidence at the candidate eigenvalue and
//! Titchmarsh-Weyl m-function probes.
//!
//! All spectral parameters are in rescaled units (energies times `r_star`).

mod candidate;
mod deficiency;
mod mfunc;
pub mod propagate;
mod scan;
mod weyl;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::coordinates::{Geometry, Rescale};
use crate::numerics::{root_find_bracketed, ToleranceSpec};
use crate::operator::{theta_boundary_data, RadialMode};
use crate::spacetime::Spacetime;
use crate::{Error, Result};

pub use candidate::{
    candidate_eigenvalue, integrate_uv, variation_limits, CandidateEvidence, CandidateVerdict, UvRun,
};
pub use deficiency::{deficiency_indices, DeficiencyReport};
pub use mfunc::m_function;
pub use scan::{classify_infinity_endpoint, eigen_scan, eigen_scan_point, EigenScanReport, ScanPoint};
pub use weyl::{weyl_residual, weyl_residual_report, WeylResidual};

use propagate::{Bundle, Engine, LogGram, Pos};

/// Numerical knobs shared by the propagating diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSettings {
    pub ode_tol: ToleranceSpec,
    /// Tolerance of the variation-of-constants runs.
    pub uv_tol: ToleranceSpec,
    pub max_steps: usize,
    /// Adiabaticity level below which the WKB branch is followed.
    pub eps_adiabatic: f64,
    /// Start radius of the `r^{+p}` series for moderate `p`.
    pub r_start: f64,
    /// Tail start for extremal scans and evidence runs.
    pub extremal_scan_tail: f64,
    /// Tail start for extremal deficiency counts.
    pub extremal_deficiency_tail: f64,
    /// Window length for deficiency counts at `lambda = +-i`.
    pub deficiency_window: f64,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        Self {
            ode_tol: ToleranceSpec {
                rel_tol: 1e-10,
                abs_tol: 1e-13,
                max_iterations: 200,
            },
            uv_tol: ToleranceSpec {
                rel_tol: 1e-12,
                abs_tol: 1e-15,
                max_iterations: 200,
            },
            max_steps: 2_000_000,
            eps_adiabatic: 1e-3,
            r_start: 1e-5,
            extremal_scan_tail: 1e4,
            extremal_deficiency_tail: 100.0,
            deficiency_window: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Zero,
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndpointClass {
    LimitPoint,
    LimitCircle,
}

impl EndpointClass {
    pub fn name(&self) -> &'static str {
        match self {
            EndpointClass::LimitPoint => "limit-point",
            EndpointClass::LimitCircle => "limit-circle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointReport {
    pub endpoint: Endpoint,
    pub classification: EndpointClass,
    /// Local exponent, reported at the zero endpoint only.
    pub exponent_p: Option<f64>,
    /// Square-integrability near the endpoint, one flag per basis solution.
    pub l2_verdicts: Vec<bool>,
}

/// Critical anomalous amplitude and the linear map `p = slope * fa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub fa_crit: f64,
    pub slope: f64,
}

impl ThresholdReport {
    /// `p(fa)`, normalised so that `p_of_fa(fa_crit) == 1.5` exactly.
    pub fn p_of_fa(&self, fa: f64) -> f64 {
        if fa == self.fa_crit {
            1.5
        } else {
            1.5 * (fa / self.fa_crit)
        }
    }
}

/// Which computation a tail start is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailUse {
    Scan,
    Deficiency,
}

/// `p = Z alpha_s^2 fa / (4 pi q)`.
pub fn local_exponent(mode: &RadialMode) -> Result<f64> {
    let st = mode.spacetime();
    st.require_black_hole()?;
    let alpha = st.constants().alpha_s();
    let q = st.q().ok_or_else(|| Error::Domain("no horizon charge radius".into()))?;
    Ok(st.z() * alpha * alpha * mode.fa() / (4.0 * PI * q))
}

/// Limit-point iff `r^{-p}` fails to be weighted-L2, i.e. `p >= 3/2`.
pub fn classify_zero_endpoint(mode: &RadialMode) -> Result<EndpointReport> {
    let p = local_exponent(mode)?;
    // int r^{2 e + 2} dr near 0 converges iff 2 e + 2 > -1
    let verdicts = vec![2.0 * p + 2.0 > -1.0, -2.0 * p + 2.0 > -1.0];
    let classification = if verdicts.iter().all(|&v| v) {
        EndpointClass::LimitCircle
    } else {
        EndpointClass::LimitPoint
    };
    Ok(EndpointReport {
        endpoint: Endpoint::Zero,
        classification,
        exponent_p: Some(p),
        l2_verdicts: verdicts,
    })
}

pub fn esa_threshold(st: &Spacetime) -> Result<ThresholdReport> {
    st.require_black_hole()?;
    let c = st.constants();
    let alpha = c.alpha_s();
    let slope = alpha * alpha / (4.0 * PI * (alpha * c.eps_g()).sqrt());
    Ok(ThresholdReport {
        fa_crit: 1.5 / slope,
        slope,
    })
}

/// Locate the limit-circle / limit-point switch of the zero endpoint by
/// bisection in `fa` on `[0, fa_hi]`.
pub fn bisect_threshold(mode: &RadialMode, fa_hi: f64, tol: &ToleranceSpec) -> Result<f64> {
    let indicator = |fa: f64| -> f64 {
        match mode.with_fa(fa).and_then(|m| classify_zero_endpoint(&m)) {
            Ok(r) if r.classification == EndpointClass::LimitPoint => 1.0,
            Ok(_) => -1.0,
            Err(_) => f64::NAN,
        }
    };
    Ok(root_find_bracketed(indicator, 0.0, fa_hi, tol)?)
}

/// Start of the region where the operator coefficients have reached their
/// limits. Subextremal: `f (|k| + P + 1) < e^{-40}`; extremal: fixed.
pub fn tail_start(mode: &RadialMode, usage: TailUse, settings: &SpectralSettings) -> f64 {
    match mode.geometry() {
        Geometry::Subextremal { rho } => {
            let g = mode.geometry();
            let kappa = g.kappa_hat();
            let size = 1.0 + mode.big_p() + mode.k().unsigned_abs() as f64;
            (2.0 / kappa) * (40.0 + size.ln() + 0.5 * ((rho - 1.0) * g.tail_prefactor()).ln())
        }
        Geometry::Extremal => match usage {
            TailUse::Scan => settings.extremal_scan_tail,
            TailUse::Deficiency => settings.extremal_deficiency_tail,
        },
    }
}

/// Admissible solution carried outward to some `x`.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub bundle: Bundle,
    pub windows: Vec<LogGram>,
    /// False when the run ended still on the adiabatic branch.
    pub explicit: bool,
}

/// Propagate the solution admissible at `r = 0` out to `x_end`, accumulating
/// Gram integrals over consecutive `windows`.
pub(crate) fn forward_admissible(
    mode: &RadialMode,
    lambda: Complex64,
    windows: &[f64],
    x_end: f64,
    settings: &SpectralSettings,
) -> Result<Forward> {
    let eng = Engine::new(mode, lambda, settings);
    let xm = Pos::at_r(mode, 0.5);
    let mut grams = vec![LogGram::zero(); windows.len().saturating_sub(1)];

    let (bundle, pos) = if mode.big_p() == 0.0 {
        let theta = mode.theta().unwrap_or(0.0);
        let b = eng.r_leg(&Bundle::single(theta_boundary_data(theta).as_array()), 0.0, 0.5)?;
        (b, xm)
    } else {
        let p = local_exponent(mode)?;
        if p < 1.5 {
            return Err(Error::Unsupported(format!(
                "p = {p} < 3/2: the zero endpoint is limit-circle and no boundary condition is fixed"
            )));
        }
        if eng.branch(xm.p, 1.0).eps < settings.eps_adiabatic {
            let out = eng.adiabatic_leg(xm, Complex64::new(0.0, 0.0), x_end, windows)?;
            if !out.switched {
                return Ok(Forward {
                    bundle: out.to_bundle(),
                    windows: out.windows,
                    explicit: false,
                });
            }
            // the log amplitude can reach ~1e19; drop it so that window
            // ratios further out keep their O(1) resolution
            let offset = out.log_amp.re;
            for (g, w) in grams.iter_mut().zip(&out.windows) {
                let mut w = *w;
                w.log_factor -= offset;
                g.add(&w);
            }
            let mut b = out.to_bundle();
            b.log_scale -= offset;
            (b, out.pos)
        } else {
            let rs = settings.r_start;
            let mut b = Bundle::single([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
            b.log_scale = p * rs.ln();
            (eng.r_leg(&b, rs, 0.5)?, xm)
        }
    };
    let (bundle, _, g2) = eng.x_leg(&bundle, pos, x_end, windows)?;
    for (g, w) in grams.iter_mut().zip(&g2) {
        g.add(w);
    }
    Ok(Forward {
        bundle,
        windows: grams,
        explicit: true,
    })
}

/// Doubling-window boundaries `X, 2X, ..., 2^count X`.
pub(crate) fn doubling_windows(x: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| x * (1u64 << i) as f64).collect()
}

/// Ratios of consecutive window log-norms, saturated at `exp(700)`.
pub(crate) fn ratios_from_logs(logs: &[f64]) -> Vec<f64> {
    logs.windows(2).map(|w| (w[1] - w[0]).min(700.0).exp()).collect()
}

/// Rescaled view of a spacetime (used by callers needing raw units).
pub(crate) fn raw_scale(st: &Spacetime, rescale: Rescale) -> Result<f64> {
    match rescale {
        Rescale::ByInnerRadius => Ok(1.0),
        Rescale::None => st
            .r_star()
            .ok_or_else(|| Error::Domain("no horizon for this nucleus".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::extremal_mass_number;
    use proptest::prelude::*;

    fn cfg_sub() -> Spacetime {
        Spacetime::new(1, 2e18).unwrap()
    }

    fn extremal() -> Spacetime {
        let a = extremal_mass_number(1, &Default::default());
        Spacetime::new(1, a).unwrap()
    }

    #[test]
    fn exponent_closed_form() {
        let m = RadialMode::new(cfg_sub(), -1, 1.0, None).unwrap();
        let p = local_exponent(&m).unwrap();
        // independent evaluation with the ledger defaults
        let alpha = 1.0 / 137.036;
        let q = (alpha * 1.79e-45f64).sqrt();
        let oracle = alpha * alpha / (4.0 * PI * q);
        assert!((p / oracle - 1.0).abs() < 1e-14);
        assert!((p / 1.1725e18 - 1.0).abs() < 1e-4);
        assert_eq!(local_exponent(&m.with_fa(0.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn exponent_is_z_independent() {
        let p: Vec<f64> = [1u32, 10, 92]
            .iter()
            .map(|&z| {
                let st = Spacetime::new(z, 2e18 * z as f64).unwrap();
                local_exponent(&RadialMode::new(st, -1, 1.0, None).unwrap()).unwrap()
            })
            .collect();
        for v in &p[1..] {
            assert!((v / p[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn naked_sector_is_rejected() {
        assert!(Spacetime::new(1, 1.0)
            .map_err(|_| ())
            .and_then(|st| RadialMode::new(st, -1, 0.0, None).map_err(|_| ()))
            .is_err());
    }

    #[test]
    fn zero_endpoint_examples() {
        let th = esa_threshold(&cfg_sub()).unwrap();
        let m = RadialMode::new(cfg_sub(), -1, 0.0, Some(0.0)).unwrap();
        let lc = classify_zero_endpoint(&m).unwrap();
        assert_eq!(lc.classification, EndpointClass::LimitCircle);
        assert_eq!(lc.l2_verdicts, vec![true, true]);
        let lp = classify_zero_endpoint(&m.with_fa(1.0).unwrap()).unwrap();
        assert_eq!(lp.classification, EndpointClass::LimitPoint);
        assert_eq!(lp.l2_verdicts, vec![true, false]);
        let half = classify_zero_endpoint(&m.with_fa(0.5 * th.fa_crit).unwrap()).unwrap();
        assert_eq!(half.classification, EndpointClass::LimitCircle);
        assert!((half.exponent_p.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn threshold_values() {
        let th = esa_threshold(&cfg_sub()).unwrap();
        let alpha: f64 = 1.0 / 137.036;
        let oracle = 6.0 * PI * 1.79e-45f64.sqrt() / alpha.powf(1.5);
        assert!((th.fa_crit / oracle - 1.0).abs() < 1e-12);
        assert!((th.fa_crit - 1.2793e-18).abs() < 1e-22);
        assert_eq!(th.p_of_fa(th.fa_crit), 1.5);
        let th10 = esa_threshold(&Spacetime::new(10, 2e19).unwrap()).unwrap();
        assert!((th10.fa_crit / th.fa_crit - 1.0).abs() < 1e-12);
        let the = esa_threshold(&extremal()).unwrap();
        assert!((the.fa_crit / th.fa_crit - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bisection_matches_closed_form() {
        let m = RadialMode::new(cfg_sub(), -1, 0.0, None).unwrap();
        let tol = ToleranceSpec {
            rel_tol: 1e-13,
            abs_tol: 0.0,
            max_iterations: 400,
        };
        let fa = bisect_threshold(&m, 1e-17, &tol).unwrap();
        let th = esa_threshold(&cfg_sub()).unwrap();
        assert!((fa / th.fa_crit - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tail_start_scales() {
        let s = SpectralSettings::default();
        let m = RadialMode::new(cfg_sub(), -1, 0.0, Some(0.0)).unwrap();
        let x0 = tail_start(&m, TailUse::Scan, &s);
        let x1 = tail_start(&m.with_fa(1.0).unwrap(), TailUse::Scan, &s);
        assert!(x0 > 7.0 && x0 < 9.0, "{x0}");
        assert!(x1 > 15.0 && x1 < 18.0, "{x1}");
        let g = m.geometry();
        let p = g.point_of_x(x0).unwrap();
        assert!(g.f(p) * 2.0 < (-40.0f64).exp() * 1.01);
    }

    proptest! {
        #[test]
        fn classification_flips_at_threshold(scale in 0.01f64..100.0) {
            let th = esa_threshold(&cfg_sub()).unwrap();
            let m = RadialMode::new(cfg_sub(), 1, scale * th.fa_crit, None).unwrap();
            let r = classify_zero_endpoint(&m).unwrap();
            let lp = r.classification == EndpointClass::LimitPoint;
            prop_assert_eq!(lp, scale >= 1.0);
            prop_assert!(r.l2_verdicts.iter().filter(|&&v| v).count() >= 1);
        }

        #[test]
        fn p_map_is_linear(fa in 0.0f64..10.0) {
            let th = esa_threshold(&cfg_sub()).unwrap();
            let m = RadialMode::new(cfg_sub(), 1, fa, None).unwrap();
            let p = local_exponent(&m).unwrap();
            prop_assert!((th.p_of_fa(fa) - p).abs() <= 1e-12 * p.max(1e-300));
            prop_assert!((th.slope * fa - p).abs() <= 1e-12 * p.max(1e-300));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn herglotz_positivity(lam in -0.04f64..0.04, im in 1e-5f64..1.0, theta in 0.0f64..3.1) {
            let m = RadialMode::new(cfg_sub(), -1, 0.0, Some(theta)).unwrap();
            let v = m_function(&m, Complex64::new(lam, im), &SpectralSettings::default()).unwrap();
            prop_assert!(v.im > 0.0, "{}", v);
        }

        #[test]
        fn wronskian_is_constant(x0 in 0.01f64..5.0, len in 0.1f64..20.0, lam in -0.1f64..0.1) {
            let s = SpectralSettings::default();
            let m = RadialMode::new(cfg_sub(), 2, 0.0, None).unwrap();
            let eng = Engine::new(&m, Complex64::new(lam, 0.0), &s);
            let start = Pos::at_x(&m, x0).unwrap();
            let (b, _, _) = eng.x_leg(&Bundle::identity(), start, x0 + len, &[]).unwrap();
            let t = b.matrix();
            let det = (t[0][0] * t[1][1] - t[0][1] * t[1][0]) * (2.0 * b.log_scale).exp();
            prop_assert!((det - 1.0).norm() < 1e-8, "{}", det);
        }

        #[test]
        fn uv_invariant_is_conserved(
            re1 in -1.0f64..1.0, im1 in -1.0f64..1.0, re2 in -1.0f64..1.0, im2 in -1.0f64..1.0,
            lam in -0.05f64..0.05,
        ) {
            let s = SpectralSettings::default();
            let m = RadialMode::new(cfg_sub(), -1, 0.0, None).unwrap();
            let g = [Complex64::new(re1, im1), Complex64::new(re2, im2)];
            let run = integrate_uv(&m, lam, 0.05, g, &[0.05, 0.5, 2.0, 20.0], &s).unwrap();
            let q0 = run.u[0].norm_sqr() + run.v[0].norm_sqr();
            let d0 = run.u[0].norm_sqr() - run.v[0].norm_sqr();
            for (u, v) in run.u.iter().zip(&run.v) {
                let scale = q0.max(u.norm_sqr() + v.norm_sqr());
                prop_assert!((u.norm_sqr() - v.norm_sqr() - d0).abs() <= 1e-8 * scale);
            }
        }
    }
}
