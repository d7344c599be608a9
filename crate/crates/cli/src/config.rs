//! Run configuration: the on-disk JSON schema and its fully resolved form.

use std::path::Path;

use rwn_dirac::coordinates::Rescale;
use rwn_dirac::numerics::ToleranceSpec;
use rwn_dirac::spacetime::{extremal_mass_number, ConstantsLedger, Spacetime};
use rwn_dirac::spectral::SpectralSettings;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Mass number: a positive number or the string `"extremal"`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MassSpec {
    Value(f64),
    Sentinel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleSpec {
    InnerRadius,
    None,
}

impl RescaleSpec {
    pub fn to_core(self) -> Rescale {
        match self {
            RescaleSpec::InnerRadius => Rescale::ByInnerRadius,
            RescaleSpec::None => Rescale::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TolSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iterations: usize,
}

impl From<ToleranceSpec> for TolSpec {
    fn from(t: ToleranceSpec) -> Self {
        Self {
            rel_tol: t.rel_tol,
            abs_tol: t.abs_tol,
            max_iterations: t.max_iterations,
        }
    }
}

impl From<TolSpec> for ToleranceSpec {
    fn from(t: TolSpec) -> Self {
        ToleranceSpec {
            rel_tol: t.rel_tol,
            abs_tol: t.abs_tol,
            max_iterations: t.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    ode: Option<TolSpec>,
    uv: Option<TolSpec>,
    max_steps: Option<usize>,
    eps_adiabatic: Option<f64>,
    threshold: Option<TolSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub ode: TolSpec,
    pub uv: TolSpec,
    pub max_steps: usize,
    pub eps_adiabatic: f64,
    pub threshold: TolSpec,
}

impl Tolerances {
    pub fn settings(&self) -> SpectralSettings {
        SpectralSettings {
            ode_tol: self.ode.into(),
            uv_tol: self.uv.into(),
            max_steps: self.max_steps,
            eps_adiabatic: self.eps_adiabatic,
            ..SpectralSettings::default()
        }
    }
}

/// `points` samples between `min` and `max`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexLine {
    pub re_min: f64,
    pub re_max: f64,
    pub points: usize,
    pub im: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrids {
    coords: Option<Range>,
    coeffs: Option<Range>,
    eigenscan: Option<Range>,
    weyl_n: Option<Vec<u32>>,
    weyl_lambda: Option<f64>,
    mfunc: Option<ComplexLine>,
    threshold_fa_hi: Option<f64>,
}

/// Log-spaced coordinate grids, linear spectral grids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grids {
    pub coords: Range,
    pub coeffs: Range,
    pub eigenscan: Range,
    pub weyl_n: Vec<u32>,
    pub weyl_lambda: f64,
    pub mfunc: ComplexLine,
    pub threshold_fa_hi: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "Z")]
    z: Option<u32>,
    #[serde(rename = "A")]
    a: Option<MassSpec>,
    k: Option<i32>,
    fa: Option<f64>,
    theta: Option<f64>,
    rescale: Option<RescaleSpec>,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    grids: RawGrids,
}

/// Fully resolved configuration, echoed verbatim into every envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(rename = "Z")]
    pub z: u32,
    #[serde(rename = "A")]
    pub a: MassSpec,
    /// Numeric mass number after resolving the sentinel.
    pub mass_number: f64,
    pub k: i32,
    pub fa: f64,
    pub theta: f64,
    pub rescale: RescaleSpec,
    pub tolerances: Tolerances,
    pub grids: Grids,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_range(name: &str, r: &Range, log: bool) -> Result<(), CliError> {
    if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max {
        return Err(invalid(format!("grids.{name}: need finite min <= max")));
    }
    if log && !(r.min > 0.0) {
        return Err(invalid(format!("grids.{name}: log grid needs min > 0")));
    }
    if r.points == 0 || (r.points == 1 && r.min != r.max) {
        return Err(invalid(format!("grids.{name}: points must be >= 2 for a proper range")));
    }
    Ok(())
}

fn check_tol(name: &str, t: &TolSpec) -> Result<(), CliError> {
    ToleranceSpec::from(*t)
        .validate()
        .map_err(|e| invalid(format!("tolerances.{name}: {e}")))
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn defaults() -> Self {
        Self::resolve(serde_json::from_str("{}").expect("empty object parses"))
            .expect("defaults are valid")
    }

    fn resolve(raw: RawConfig) -> Result<Self, CliError> {
        let constants = ConstantsLedger::default();
        let z = raw.z.unwrap_or(1);
        if z == 0 {
            return Err(invalid("Z must be a positive integer"));
        }
        let a = raw.a.unwrap_or(MassSpec::Value(2e18));
        let mass_number = match &a {
            MassSpec::Value(v) if *v > 0.0 && v.is_finite() => *v,
            MassSpec::Value(v) => return Err(invalid(format!("A must be positive, got {v}"))),
            MassSpec::Sentinel(s) if s == "extremal" => extremal_mass_number(z, &constants),
            MassSpec::Sentinel(s) => {
                return Err(invalid(format!("A must be a number or \"extremal\", got \"{s}\"")))
            }
        };
        let k = raw.k.unwrap_or(-1);
        if k == 0 {
            return Err(invalid("k must be nonzero"));
        }
        let fa = raw.fa.unwrap_or(0.0);
        if !(fa >= 0.0 && fa.is_finite()) {
            return Err(invalid(format!("fa must be finite and >= 0, got {fa}")));
        }
        let theta = raw.theta.unwrap_or(0.0);
        if !(0.0..std::f64::consts::PI).contains(&theta) {
            return Err(invalid(format!("theta must lie in [0, pi), got {theta}")));
        }
        let rescale = raw.rescale.unwrap_or(RescaleSpec::InnerRadius);

        let base = SpectralSettings::default();
        let t = raw.tolerances;
        let tolerances = Tolerances {
            ode: t.ode.unwrap_or(base.ode_tol.into()),
            uv: t.uv.unwrap_or(base.uv_tol.into()),
            max_steps: t.max_steps.unwrap_or(base.max_steps),
            eps_adiabatic: t.eps_adiabatic.unwrap_or(base.eps_adiabatic),
            threshold: t.threshold.unwrap_or(TolSpec {
                rel_tol: 1e-12,
                abs_tol: 0.0,
                max_iterations: 400,
            }),
        };
        check_tol("ode", &tolerances.ode)?;
        check_tol("uv", &tolerances.uv)?;
        check_tol("threshold", &tolerances.threshold)?;
        if tolerances.max_steps == 0 {
            return Err(invalid("tolerances.max_steps must be positive"));
        }
        if !(tolerances.eps_adiabatic > 0.0 && tolerances.eps_adiabatic < 1.0) {
            return Err(invalid("tolerances.eps_adiabatic must lie in (0, 1)"));
        }

        // coordinate grids are in the units of the chosen rescaling
        let unit = match rescale {
            RescaleSpec::InnerRadius => 1.0,
            RescaleSpec::None => Spacetime::new(z, mass_number)
                .ok()
                .and_then(|st| st.r_star())
                .unwrap_or(1.0),
        };
        let w0 = z as f64 * constants.alpha_s();
        let g = raw.grids;
        let x_range = Range {
            min: 1e-6 * unit,
            max: 1e3 * unit,
            points: 40,
        };
        let grids = Grids {
            coords: g.coords.unwrap_or(x_range),
            coeffs: g.coeffs.unwrap_or(x_range),
            eigenscan: g.eigenscan.unwrap_or(Range {
                min: -3.0 * w0,
                max: 3.0 * w0,
                points: 101,
            }),
            weyl_n: g.weyl_n.unwrap_or_else(|| vec![4, 16, 64, 256]),
            weyl_lambda: g.weyl_lambda.unwrap_or(0.0),
            mfunc: g.mfunc.unwrap_or(ComplexLine {
                re_min: -1.0,
                re_max: 1.0,
                points: 21,
                im: 0.5,
            }),
            threshold_fa_hi: g.threshold_fa_hi.unwrap_or(1e-17),
        };
        check_range("coords", &grids.coords, true)?;
        check_range("coeffs", &grids.coeffs, true)?;
        check_range("eigenscan", &grids.eigenscan, false)?;
        if grids.weyl_n.is_empty() || grids.weyl_n.contains(&0) {
            return Err(invalid("grids.weyl_n must be a non-empty list of positive integers"));
        }
        if !grids.weyl_lambda.is_finite() {
            return Err(invalid("grids.weyl_lambda must be finite"));
        }
        let m = &grids.mfunc;
        check_range(
            "mfunc",
            &Range {
                min: m.re_min,
                max: m.re_max,
                points: m.points,
            },
            false,
        )?;
        if !(m.im.is_finite() && m.im != 0.0) {
            return Err(invalid("grids.mfunc.im must be finite and nonzero"));
        }
        if !(grids.threshold_fa_hi > 0.0 && grids.threshold_fa_hi.is_finite()) {
            return Err(invalid("grids.threshold_fa_hi must be positive"));
        }

        Ok(Self {
            z,
            a,
            mass_number,
            k,
            fa,
            theta,
            rescale,
            tolerances,
            grids,
        })
    }

    pub fn constants(&self) -> ConstantsLedger {
        ConstantsLedger::default()
    }

    pub fn spacetime(&self) -> Result<Spacetime, CliError> {
        Spacetime::new(self.z, self.mass_number).map_err(|e| invalid(e.to_string()))
    }
}

/// Sample points of a range in grid order.
pub fn linear_points(r: &Range) -> Vec<f64> {
    if r.points == 1 {
        return vec![r.min];
    }
    rwn_dirac::numerics::linear_grid(r.min, r.max, r.points)
}

pub fn log_points(r: &Range) -> Vec<f64> {
    if r.points == 1 {
        return vec![r.min];
    }
    let mut g = rwn_dirac::numerics::log_grid(r.min, r.max, r.points);
    g[0] = r.min;
    g[r.points - 1] = r.max;
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.z, 1);
        assert_eq!(c.mass_number, 2e18);
        assert_eq!(c.grids.weyl_n, vec![4, 16, 64, 256]);
        assert_eq!(c, RunConfig::defaults());
    }

    #[test]
    fn extremal_sentinel_resolves() {
        let c = RunConfig::from_json(r#"{"Z": 1, "A": "extremal"}"#).unwrap();
        let expected = extremal_mass_number(1, &ConstantsLedger::default());
        assert_eq!(c.mass_number, expected);
    }

    #[test]
    fn schema_violations_are_rejected() {
        for bad in [
            r#"{"A": "heavy"}"#,
            r#"{"A": -1}"#,
            r#"{"k": 0}"#,
            r#"{"theta": 4.0}"#,
            r#"{"fa": -1e-3}"#,
            r#"{"unknown": 1}"#,
            r#"{"grids": {"coords": {"min": 0, "max": 1, "points": 5}}}"#,
            r#"{"tolerances": {"ode": {"rel_tol": 0, "abs_tol": 0, "max_iterations": 5}}}"#,
            r#"{"rescale": "sideways"}"#,
            "not json",
        ] {
            assert!(matches!(RunConfig::from_json(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn raw_units_scale_the_default_coordinate_grid() {
        let c = RunConfig::from_json(r#"{"rescale": "none"}"#).unwrap();
        let r_star = c.spacetime().unwrap().r_star().unwrap();
        assert_eq!(c.grids.coords.max, 1e3 * r_star);
    }
}
