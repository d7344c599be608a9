//! Dimensionless RWN spacetime: constants, metric function, horizons and
//! the naked / subextremal / extremal classification.

use crate::{Error, Result};

/// Dimensionless physical constants.
///
/// Only `alpha_s`, `eps_g` and `mass_ratio` are primitive; the two mixed
/// gravitational couplings are derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsLedger {
    alpha_s: f64,
    eps_g: f64,
    mass_ratio: f64,
    eps_pe: f64,
    eps_pp: f64,
}

impl Default for ConstantsLedger {
    fn default() -> Self {
        Self::new(1.0 / 137.036, 1.79e-45, 1836.0).expect("default constants are valid")
    }
}

impl ConstantsLedger {
    pub fn new(alpha_s: f64, eps_g: f64, mass_ratio: f64) -> Result<Self> {
        for (name, v) in [("alpha_s", alpha_s), ("eps_g", eps_g), ("mass_ratio", mass_ratio)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let eps_pe = mass_ratio * eps_g;
        Ok(Self {
            alpha_s,
            eps_g,
            mass_ratio,
            eps_pe,
            eps_pp: mass_ratio * eps_pe,
        })
    }

    /// Fine structure constant.
    pub fn alpha_s(&self) -> f64 {
        self.alpha_s
    }

    /// G m_e^2 / (hbar c).
    pub fn eps_g(&self) -> f64 {
        self.eps_g
    }

    /// m_p / m_e.
    pub fn mass_ratio(&self) -> f64 {
        self.mass_ratio
    }

    /// G m_p m_e / (hbar c).
    pub fn eps_pe(&self) -> f64 {
        self.eps_pe
    }

    /// G m_p^2 / (hbar c).
    pub fn eps_pp(&self) -> f64 {
        self.eps_pp
    }
}

/// Nuclear charge and mass number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nucleus {
    z: u32,
    a: f64,
}

impl Nucleus {
    pub fn new(z: u32, a: f64) -> Result<Self> {
        if z < 1 {
            return Err(Error::InvalidInput("Z must be at least 1".into()));
        }
        if !(a >= 1.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "A must be finite and at least 1, got {a}"
            )));
        }
        Ok(Self { z, a })
    }

    pub fn z(&self) -> u32 {
        self.z
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sector {
    Naked,
    Subextremal,
    Extremal,
}

impl Sector {
    pub fn name(&self) -> &'static str {
        match self {
            Sector::Naked => "naked",
            Sector::Subextremal => "subextremal",
            Sector::Extremal => "extremal",
        }
    }

    pub fn is_black_hole(&self) -> bool {
        !matches!(self, Sector::Naked)
    }
}

impl std::fmt::Display for Sector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Discriminant below which a configuration is treated as extremal.
pub const EXTREMAL_TOLERANCE: f64 = 1e-12;

/// Z^2 alpha / (A^2 eps_pp), i.e. Q^2 / (G M^2).
fn charge_mass_ratio(nucleus: &Nucleus, constants: &ConstantsLedger) -> f64 {
    let za = nucleus.z as f64 / nucleus.a;
    za * za * constants.alpha_s / constants.eps_pp
}

fn discriminant(nucleus: &Nucleus, constants: &ConstantsLedger) -> f64 {
    1.0 - charge_mass_ratio(nucleus, constants)
}

pub fn classify_sector(nucleus: &Nucleus, constants: &ConstantsLedger) -> Sector {
    let d = discriminant(nucleus, constants);
    if d.abs() < EXTREMAL_TOLERANCE {
        Sector::Extremal
    } else if d > 0.0 {
        Sector::Subextremal
    } else {
        Sector::Naked
    }
}

/// G M m_e > Z e^2.
pub fn hyper_heavy(nucleus: &Nucleus, constants: &ConstantsLedger) -> bool {
    nucleus.a * constants.eps_pe > nucleus.z as f64 * constants.alpha_s
}

/// Mass number at which a nucleus of charge `z` is extremal.
pub fn extremal_mass_number(z: u32, constants: &ConstantsLedger) -> f64 {
    z as f64 * (constants.alpha_s / constants.eps_pp).sqrt()
}

/// One RWN configuration with all derived length scales, in Compton units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacetime {
    nucleus: Nucleus,
    constants: ConstantsLedger,
    mu: f64,
    sector: Sector,
    r_minus: Option<f64>,
    r_plus: Option<f64>,
    q: Option<f64>,
    kappa: Option<f64>,
}

pub fn build_spacetime(nucleus: Nucleus, constants: ConstantsLedger) -> Spacetime {
    let mu = nucleus.a * constants.eps_pe;
    let sector = classify_sector(&nucleus, &constants);
    let s = charge_mass_ratio(&nucleus, &constants);
    let (r_minus, r_plus, q, kappa) = match sector {
        Sector::Naked => (None, None, None, None),
        Sector::Extremal => (Some(mu), Some(mu), Some(mu * s.sqrt()), None),
        Sector::Subextremal => {
            let root = (1.0 - s).sqrt();
            let r_plus = mu * (1.0 + root);
            // mu (1 - root) without cancellation
            let r_minus = mu * s / (1.0 + root);
            let kappa = (r_plus - r_minus) / (r_minus * r_minus);
            (Some(r_minus), Some(r_plus), Some(mu * s.sqrt()), Some(kappa))
        }
    };
    Spacetime {
        nucleus,
        constants,
        mu,
        sector,
        r_minus,
        r_plus,
        q,
        kappa,
    }
}

impl Spacetime {
    pub fn new(z: u32, a: f64) -> Result<Self> {
        Ok(build_spacetime(Nucleus::new(z, a)?, ConstantsLedger::default()))
    }

    pub fn nucleus(&self) -> &Nucleus {
        &self.nucleus
    }

    pub fn constants(&self) -> &ConstantsLedger {
        &self.constants
    }

    pub fn z(&self) -> f64 {
        self.nucleus.z as f64
    }

    /// G M m_e / (hbar c).
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn r_minus(&self) -> Option<f64> {
        self.r_minus
    }

    pub fn r_plus(&self) -> Option<f64> {
        self.r_plus
    }

    /// Double horizon radius (extremal only).
    pub fn r0(&self) -> Option<f64> {
        match self.sector {
            Sector::Extremal => self.r_minus,
            _ => None,
        }
    }

    /// sqrt(r_+ r_-).
    pub fn q(&self) -> Option<f64> {
        self.q
    }

    /// (r_+ - r_-) / r_-^2 (subextremal only).
    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    /// Inner horizon r_- or the double horizon r_0.
    pub fn r_star(&self) -> Option<f64> {
        self.r_minus
    }

    /// r_+ / r_- (1 in the extremal case).
    pub fn rho(&self) -> Option<f64> {
        match self.sector {
            Sector::Naked => None,
            Sector::Extremal => Some(1.0),
            Sector::Subextremal => Some(self.r_plus? / self.r_minus?),
        }
    }

    /// Z alpha_s.
    pub fn charge_coupling(&self) -> f64 {
        self.z() * self.constants.alpha_s
    }

    pub fn require_black_hole(&self) -> Result<()> {
        if self.sector.is_black_hole() {
            Ok(())
        } else {
            Err(Error::Domain(
                "operation requires a black-hole sector, got naked".into(),
            ))
        }
    }

    /// Factored metric function (r - r_+)(r - r_-)/r^2, black-hole sectors.
    pub fn f_squared_factored(&self, r: f64) -> Result<f64> {
        self.require_black_hole()?;
        check_radius(r)?;
        let (rm, rp) = (self.r_minus.unwrap(), self.r_plus.unwrap());
        Ok((r - rp) * (r - rm) / (r * r))
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("radius must be positive, got {r}")))
    }
}

/// 1 - 2 mu / r + Z^2 alpha_s eps_g / r^2.
pub fn f_squared(st: &Spacetime, r: f64) -> Result<f64> {
    check_radius(r)?;
    let z = st.z();
    let qq = z * z * st.constants.alpha_s * st.constants.eps_g;
    let u = 1.0 / r;
    Ok(1.0 - 2.0 * st.mu * u + qq * u * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_sub() -> Spacetime {
        Spacetime::new(1, 2.0e18).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn derived_constants_are_exact() {
        let c = ConstantsLedger::default();
        assert_eq!(c.eps_pe(), 1836.0 * c.eps_g());
        assert_eq!(c.eps_pp(), 1836.0 * c.eps_pe());
        assert!(ConstantsLedger::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn nucleus_validation() {
        assert!(Nucleus::new(0, 1.0).is_err());
        assert!(Nucleus::new(1, 0.5).is_err());
        assert!(Nucleus::new(92, 238.0).is_ok());
    }

    #[test]
    fn sectors() {
        let c = ConstantsLedger::default();
        assert_eq!(classify_sector(&Nucleus::new(1, 1.0).unwrap(), &c), Sector::Naked);
        assert_eq!(classify_sector(&Nucleus::new(92, 238.0).unwrap(), &c), Sector::Naked);
        assert_eq!(
            classify_sector(&Nucleus::new(1, 1e40).unwrap(), &c),
            Sector::Subextremal
        );
        let a_ext = extremal_mass_number(1, &c);
        assert_eq!(
            classify_sector(&Nucleus::new(1, a_ext).unwrap(), &c),
            Sector::Extremal
        );
    }

    #[test]
    fn extremal_mass_number_values() {
        let c = ConstantsLedger::default();
        let a1 = extremal_mass_number(1, &c);
        assert!((a1 - 1.099726e18).abs() < 1e13, "{a1}");
        assert!(rel(extremal_mass_number(10, &c), 10.0 * a1) < 1e-15);
        let st = build_spacetime(Nucleus::new(1, a1).unwrap(), c);
        assert_eq!(st.sector(), Sector::Extremal);
        // oracle: r0 = A eps_pe with A from A^2 eps_pp = alpha
        assert!((st.r0().unwrap() - 3.6142e-24).abs() < 1e-28);
        assert!(rel(st.r0().unwrap(), st.q().unwrap()) < 1e-12);
    }

    #[test]
    fn cfg_sub_horizons() {
        let st = cfg_sub();
        assert_eq!(st.sector(), Sector::Subextremal);
        let (rm, rp) = (st.r_minus().unwrap(), st.r_plus().unwrap());
        assert!((rm - 1.0829e-24).abs() < 1e-28, "{rm}");
        assert!((rp - 1.2063e-23).abs() < 1e-27, "{rp}");
        assert!((st.rho().unwrap() - 11.140).abs() < 1e-3);
        assert!(rel(st.q().unwrap().powi(2), rm * rp) < 1e-15);
        assert!(st.kappa().unwrap() > 0.0);
        assert!(rel(st.kappa().unwrap() * rm, st.rho().unwrap() - 1.0) < 1e-14);
    }

    #[test]
    fn q_is_charge_scale() {
        let c = ConstantsLedger::default();
        for (z, a) in [(1u32, 2e18), (3, 1e19), (92, 1e30)] {
            let st = build_spacetime(Nucleus::new(z, a).unwrap(), c);
            let expect = z as f64 * (c.alpha_s() * c.eps_g()).sqrt();
            assert!(rel(st.q().unwrap(), expect) < 1e-12);
        }
    }

    #[test]
    fn f_squared_values() {
        let st = cfg_sub();
        let rm = st.r_minus().unwrap();
        let v = f_squared(&st, rm / 2.0).unwrap();
        assert!((v - 21.28).abs() < 0.01, "{v}");
        assert!((f_squared(&st, 1e10).unwrap() - 1.0).abs() < 1e-9);
        assert!(f_squared(&st, 0.0).is_err());
        assert!(f_squared(&st, -1.0).is_err());

        let ext = Spacetime::new(1, extremal_mass_number(1, &ConstantsLedger::default())).unwrap();
        let r0 = ext.r0().unwrap();
        assert!(f_squared(&ext, r0).unwrap().abs() < 1e-11);
    }

    #[test]
    fn factored_form_agrees() {
        for st in [cfg_sub(), Spacetime::new(1, 1e19).unwrap(), Spacetime::new(26, 1e20).unwrap()] {
            let rm = st.r_minus().unwrap();
            let n = 200;
            for i in 0..n {
                let frac = i as f64 / (n - 1) as f64;
                let lo = (1e-6f64).ln();
                let hi = (1.0 - 1e-6f64).ln();
                let r = rm * (lo + (hi - lo) * frac).exp();
                let direct = f_squared(&st, r).unwrap();
                let factored = st.f_squared_factored(r).unwrap();
                assert!(
                    (direct - factored).abs() <= 1e-12 * direct.abs().max(1.0),
                    "r/r_-={} {direct} {factored}",
                    r / rm
                );
            }
        }
    }

    #[test]
    fn hyper_heavy_cases() {
        let c = ConstantsLedger::default();
        assert!(!hyper_heavy(&Nucleus::new(1, 1.0).unwrap(), &c));
        assert!(hyper_heavy(&Nucleus::new(1, 1e40).unwrap(), &c));
        let a_edge = c.alpha_s() / c.eps_pe();
        let edge = Nucleus::new(1, a_edge).unwrap();
        assert_eq!(hyper_heavy(&edge, &c), a_edge * c.eps_pe() > c.alpha_s());
        assert!(!hyper_heavy(&Nucleus::new(1, a_edge * (1.0 - 1e-15)).unwrap(), &c));
    }

    #[test]
    fn naked_has_no_horizons() {
        let st = Spacetime::new(1, 1.0).unwrap();
        assert!(st.r_minus().is_none() && st.q().is_none() && st.r_star().is_none());
        assert!(st.require_black_hole().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hyper_heavy_implies_black_hole(z in 1u32..120, la in 0.0f64..45.0) {
                let a = 10f64.powf(la).max(z as f64);
                let c = ConstantsLedger::default();
                let n = Nucleus::new(z, a).unwrap();
                if hyper_heavy(&n, &c) {
                    prop_assert!(classify_sector(&n, &c).is_black_hole());
                }
            }

            #[test]
            fn horizon_identities(z in 1u32..100, factor in 1.0001f64..1e6) {
                let c = ConstantsLedger::default();
                let a = extremal_mass_number(z, &c) * factor;
                let st = build_spacetime(Nucleus::new(z, a).unwrap(), c);
                prop_assert_eq!(st.sector(), Sector::Subextremal);
                let (rm, rp, q) = (st.r_minus().unwrap(), st.r_plus().unwrap(), st.q().unwrap());
                prop_assert!(rm <= rp);
                prop_assert!(((q * q - rm * rp) / (rm * rp)).abs() < 1e-15 * 4.0);
                prop_assert!(((q - z as f64 * (c.alpha_s() * c.eps_g()).sqrt()) / q).abs() < 1e-12);
            }
        }
    }
}
