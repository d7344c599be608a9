use num_complex::Complex64;

use crate::coordinates::Geometry;
use crate::operator::RadialMode;
use crate::{Error, Result};

use super::propagate::{Bundle, Engine, Pos};
use super::{
    candidate_eigenvalue, doubling_windows, forward_admissible, ratios_from_logs, tail_start,
    Endpoint, EndpointClass, EndpointReport, SpectralSettings, TailUse,
};

/// Ratio below which a doubling window counts as decaying.
const L2_RATIO: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub lambda: f64,
    pub window_ratios: Vec<f64>,
    /// Last window ratio minus 2.
    pub mismatch: f64,
    pub l2_tail: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenScanReport {
    pub lambda_grid: Vec<f64>,
    pub mismatch: Vec<f64>,
    pub roots: Vec<f64>,
    pub window_ratios: Vec<Vec<f64>>,
}

impl EigenScanReport {
    pub fn from_points(points: &[ScanPoint]) -> Self {
        Self {
            lambda_grid: points.iter().map(|p| p.lambda).collect(),
            mismatch: points.iter().map(|p| p.mismatch).collect(),
            roots: points.iter().filter(|p| p.l2_tail).map(|p| p.lambda).collect(),
            window_ratios: points.iter().map(|p| p.window_ratios.clone()).collect(),
        }
    }
}

fn check_scan_mode(mode: &RadialMode) -> Result<()> {
    mode.spacetime().require_black_hole()?;
    if mode.big_p() == 0.0 && mode.theta().is_none() {
        return Err(Error::InvalidInput("fa = 0 scans need a theta boundary condition".into()));
    }
    Ok(())
}

/// Doubling-window test of the admissible solution at one real `lambda`.
pub fn eigen_scan_point(mode: &RadialMode, lambda: f64, settings: &SpectralSettings) -> Result<ScanPoint> {
    check_scan_mode(mode)?;
    let x = tail_start(mode, TailUse::Scan, settings);
    let windows = doubling_windows(x, 4);
    let fwd = forward_admissible(mode, Complex64::new(lambda, 0.0), &windows, windows[4], settings)?;
    let logs: Vec<f64> = fwd.windows.iter().map(|g| g.log_first()).collect();
    let ratios = ratios_from_logs(&logs);
    if ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numerics(crate::numerics::NumericsError::NonFinite { x: windows[4] }));
    }
    Ok(ScanPoint {
        lambda,
        mismatch: ratios[ratios.len() - 1] - 2.0,
        l2_tail: ratios.iter().all(|&r| r < L2_RATIO),
        window_ratios: ratios,
    })
}

pub fn eigen_scan(mode: &RadialMode, lambda_grid: &[f64], settings: &SpectralSettings) -> Result<EigenScanReport> {
    if lambda_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("lambda grid must be strictly increasing".into()));
    }
    let points = lambda_grid
        .iter()
        .map(|&l| eigen_scan_point(mode, l, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenScanReport::from_points(&points))
}

/// Weyl alternative at infinity, evidenced at the candidate eigenvalue by
/// the doubling-window norms of a basis of tail solutions.
pub fn classify_infinity_endpoint(mode: &RadialMode, settings: &SpectralSettings) -> Result<EndpointReport> {
    mode.spacetime().require_black_hole()?;
    let lambda = Complex64::new(candidate_eigenvalue(mode.spacetime(), crate::coordinates::Rescale::ByInnerRadius)?, 0.0);
    let x = tail_start(mode, TailUse::Scan, settings);
    let windows = doubling_windows(x, 3);
    let eng = Engine::new(mode, lambda, settings);
    let start = Pos::at_x(mode, x)?;
    let branch = eng.branch(start.p, 1.0);

    let verdicts = if matches!(mode.geometry(), Geometry::Extremal) && branch.eps < settings.eps_adiabatic {
        // both branches are WKB-controlled: one grows, the other is its reciprocal
        let out = eng.adiabatic_leg(start, Complex64::new(0.0, 0.0), windows[3], &windows)?;
        let logs: Vec<f64> = out.windows.iter().map(|g| g.log_first()).collect();
        let grows = logs.windows(2).all(|w| w[1] > w[0]);
        vec![!grows, grows]
    } else {
        let (_, _, grams) = eng.x_leg(&Bundle::identity(), start, windows[3], &windows)?;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        [[one, zero], [zero, one]]
            .iter()
            .map(|&v| {
                let logs: Vec<f64> = grams.iter().map(|g| g.log_norm(v)).collect();
                ratios_from_logs(&logs).iter().all(|&r| r < L2_RATIO)
            })
            .collect()
    };
    let classification = if verdicts.iter().all(|&v| v) {
        EndpointClass::LimitCircle
    } else {
        EndpointClass::LimitPoint
    };
    Ok(EndpointReport {
        endpoint: Endpoint::Infinity,
        classification,
        exponent_p: None,
        l2_verdicts: verdicts,
    })
}
