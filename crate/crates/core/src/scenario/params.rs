use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infection::InfectionParams;
use crate::interventions::{check_probability, QuarantinePolicy, TestingParams, VaccinationParams};
use crate::mobility::ExtendedRules;
use crate::num::Scalar;
use crate::transmission::TransmissionParams;
use crate::world::{Compliance, LocationType, MaskType, BUILTIN_LOCATION_TYPES};

/// Mask protection per mask type (indexed by [`MaskType::index`]) and
/// compliance per built-in location type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskParams<T> {
    pub transmit: [T; 3],
    pub receive: [T; 3],
    /// Home, School, Work, SocialEvent, BasicShop.
    pub compliance: [T; 5],
    pub owned: MaskType,
}

impl<T: Scalar> Default for MaskParams<T> {
    fn default() -> Self {
        MaskParams {
            transmit: [T::lit(0.25); 3],
            receive: [T::lit(0.25); 3],
            compliance: [0.0, -0.1, -0.1, -0.3, -0.2].map(T::lit),
            owned: MaskType::Surgical,
        }
    }
}

impl<T: Scalar> MaskParams<T> {
    /// Compliance per built-in location type; medical venues get 0.
    pub fn compliance_array(&self) -> Compliance<T> {
        let mut c = [T::zero(); BUILTIN_LOCATION_TYPES];
        c[..5].copy_from_slice(&self.compliance);
        c
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.transmit.iter().chain(&self.receive) {
            check_probability("mask protection", *p)?;
        }
        if self.compliance.iter().any(|c| !(*c >= -T::one() && *c <= T::one())) {
            return Err(Error::param("mask compliance", "values must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// Trip retention for the four restricted activities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retention<T> {
    pub school: T,
    pub work: T,
    pub shop: T,
    pub event: T,
}

/// Parameters of the lockdown timeline and initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams<T> {
    /// Ratio of true to detected infections at the start.
    pub dark_figure: T,
    /// Relative contact reduction during lockdown; the exposure multiplier
    /// is `1 - lockdown_reduction`.
    pub lockdown_reduction: T,
    pub post_lockdown_reduction: T,
    pub baseline_retention: Retention<T>,
    pub lockdown_retention: Retention<T>,
    /// Fraction of agents joining the Easter gatherings.
    pub easter_fraction: T,
    /// Location types under a mask mandate for the whole horizon.
    pub mask_mandate: Vec<LocationType>,
    /// Days of reports counted as currently active cases.
    pub active_window_days: i64,
}

impl<T: Scalar> Default for PolicyParams<T> {
    fn default() -> Self {
        PolicyParams {
            dark_figure: T::lit(4.171),
            lockdown_reduction: T::lit(0.2725),
            post_lockdown_reduction: T::lit(0.5),
            baseline_retention: Retention {
                school: T::lit(0.5),
                work: T::lit(0.75),
                shop: T::lit(0.8),
                event: T::lit(0.8),
            },
            lockdown_retention: Retention {
                school: T::zero(),
                work: T::lit(0.7),
                shop: T::lit(0.5),
                event: T::lit(0.5),
            },
            easter_fraction: T::lit(0.2),
            mask_mandate: vec![
                LocationType::School,
                LocationType::Work,
                LocationType::SocialEvent,
                LocationType::BasicShop,
            ],
            active_window_days: 14,
        }
    }
}

/// Every model parameter, grouped by concern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct ParameterSet<T: Scalar> {
    pub transmission: TransmissionParams<T>,
    pub infection: InfectionParams<T>,
    pub masks: MaskParams<T>,
    pub vaccination: VaccinationParams<T>,
    pub quarantine: QuarantinePolicy<T>,
    pub testing: TestingParams<T>,
    pub mobility: ExtendedRules,
    pub policy: PolicyParams<T>,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        ParameterSet {
            transmission: TransmissionParams::default(),
            infection: InfectionParams::default(),
            masks: MaskParams::default(),
            vaccination: VaccinationParams::default(),
            quarantine: QuarantinePolicy::default(),
            testing: TestingParams::default(),
            mobility: ExtendedRules::default(),
            policy: PolicyParams::default(),
        }
    }
}

/// Names accepted by [`ParameterSet::set`] and [`ParameterSet::get`].
pub const NAMED_PARAMETERS: [&str; 12] = [
    "lambda",
    "d",
    "r_l",
    "p_s",
    "mu_ns",
    "q_d",
    "q_e",
    "p_f",
    "r_e",
    "sensitivity",
    "specificity",
    "r_post",
];

impl<T: Scalar> ParameterSet<T> {
    fn slot(&mut self, name: &str) -> Result<&mut T> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "lambda" => &mut self.transmission.lambda,
            "d" | "dark_figure" => &mut self.policy.dark_figure,
            "r_l" | "lockdown_reduction" => &mut self.policy.lockdown_reduction,
            "p_s" => &mut self.testing.p_symptomatic,
            "mu_ns" => &mut self.testing.nonsymptomatic_ratio,
            "q_d" | "quarantine_length" => &mut self.quarantine.length,
            "q_e" | "quarantine_efficiency" => &mut self.quarantine.efficiency,
            "p_f" => &mut self.vaccination.protection,
            "r_e" | "easter_fraction" => &mut self.policy.easter_fraction,
            "sensitivity" => &mut self.testing.test.sensitivity,
            "specificity" => &mut self.testing.test.specificity,
            "r_post" | "post_lockdown_reduction" => &mut self.policy.post_lockdown_reduction,
            _ => return Err(Error::param(name, "unknown parameter name")),
        })
    }

    pub fn get(&self, name: &str) -> Result<T> {
        let mut copy = self.clone();
        copy.slot(name).map(|v| *v)
    }

    /// Sets a named scalar parameter; the result is validated.
    pub fn set(&mut self, name: &str, value: T) -> Result<()> {
        *self.slot(name)? = value;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.transmission.validate()?;
        self.infection.course.validate()?;
        self.masks.validate()?;
        check_probability("p_f", self.vaccination.protection)?;
        self.quarantine.validate()?;
        self.testing.validate()?;
        let p = &self.policy;
        if !(p.dark_figure >= T::one()) {
            return Err(Error::param("d", "dark figure must be >= 1"));
        }
        check_probability("r_l", p.lockdown_reduction)?;
        check_probability("r_post", p.post_lockdown_reduction)?;
        check_probability("r_e", p.easter_fraction)?;
        for r in [&p.baseline_retention, &p.lockdown_retention] {
            for v in [r.school, r.work, r.shop, r.event] {
                check_probability("retention", v)?;
            }
        }
        if p.active_window_days < 1 {
            return Err(Error::param("active_window_days", "must be >= 1"));
        }
        Ok(())
    }
}
