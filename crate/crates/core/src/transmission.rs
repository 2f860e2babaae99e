//! Location-scoped transmission: aggregated shed per age group, exposure,
//! individual infection rate and the exponential transmission draw.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infection::{draw_infection, Infection, InfectionParams};
use crate::interventions::VaccinationParams;
use crate::num::Scalar;
use crate::rng::{AgentStream, RandomSource, RngKey};
use crate::scenario::MaskParams;
use crate::world::{Agent, AgentId, Location, LocationType, PerAge, NUM_AGE_GROUPS};

/// Daily contact rates `c(j, i)` of a receiver in group `j` with group `i`,
/// already scaled to the average stay at the location type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactMatrix<T> {
    pub rows: [[T; NUM_AGE_GROUPS]; NUM_AGE_GROUPS],
}

impl<T: Scalar> ContactMatrix<T> {
    pub fn zeros() -> Self {
        ContactMatrix {
            rows: [[T::zero(); NUM_AGE_GROUPS]; NUM_AGE_GROUPS],
        }
    }

    pub fn uniform(v: T) -> Self {
        ContactMatrix {
            rows: [[v; NUM_AGE_GROUPS]; NUM_AGE_GROUPS],
        }
    }

    pub fn from_rows(rows: [[f64; NUM_AGE_GROUPS]; NUM_AGE_GROUPS]) -> Result<Self> {
        if rows.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::param("contact matrix", "entries must be finite and >= 0"));
        }
        Ok(ContactMatrix {
            rows: rows.map(|r| r.map(T::lit)),
        })
    }

    pub fn scaled(&self, f: T) -> Self {
        ContactMatrix {
            rows: self.rows.map(|r| r.map(|v| v * f)),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().flatten().all(|v| *v == T::zero())
    }

    /// Splits an aggregate "other" matrix into social-event and shop matrices
    /// with event contacts `ratio` times shop contacts, such that
    /// `event_share * event + (1 - event_share) * shop == other`.
    pub fn split_other(&self, ratio: T, event_share: T) -> (Self, Self) {
        let shop_factor = T::one() / (event_share * ratio + (T::one() - event_share));
        let shop = self.scaled(shop_factor);
        let event = shop.scaled(ratio);
        (event, shop)
    }
}

/// One contact matrix per location type; types without a matrix have no
/// contacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct ContactMatrices<T: Scalar> {
    pub by_type: BTreeMap<LocationType, ContactMatrix<T>>,
    #[serde(skip, default = "ContactMatrix::zeros")]
    zero: ContactMatrix<T>,
}

impl<T: Scalar> ContactMatrices<T> {
    pub fn empty() -> Self {
        ContactMatrices {
            by_type: BTreeMap::new(),
            zero: ContactMatrix::zeros(),
        }
    }

    pub fn get(&self, kind: LocationType) -> &ContactMatrix<T> {
        self.by_type.get(&kind).unwrap_or(&self.zero)
    }

    pub fn set(&mut self, kind: LocationType, m: ContactMatrix<T>) {
        self.by_type.insert(kind, m);
    }
}

impl<T: Scalar> Default for ContactMatrices<T> {
    /// Generic desk-scale defaults: household mixing at home, peer-heavy
    /// school and work mixing, and an "other" matrix split 1.5 : 1 into
    /// social events and shops. Medical venues carry no contacts.
    fn default() -> Self {
        let mut m = ContactMatrices::empty();
        m.set(LocationType::Home, ContactMatrix::uniform(T::lit(3.0)));

        let mut school = [[0.9; 6]; 6];
        school[1][1] = 18.0;
        school[1][3] = 1.5;
        school[2][1] = 3.0;
        school[2][2] = 6.0;
        school[3][1] = 6.0;
        m.set(LocationType::School, ContactMatrix::from_rows(school).unwrap());

        let mut work = [[0.9; 6]; 6];
        for j in 2..=4 {
            for i in 2..=4 {
                work[j][i] = if i == 4 || j == 4 { 3.0 } else { 7.5 };
            }
        }
        m.set(LocationType::Work, ContactMatrix::from_rows(work).unwrap());

        let other = ContactMatrix::uniform(T::lit(3.0));
        let (event, shop) = other.split_other(T::lit(1.5), T::lit(0.5));
        m.set(LocationType::SocialEvent, event);
        m.set(LocationType::BasicShop, shop);
        m
    }
}

/// Parameters of the rate chain shed -> exposure -> infection rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionParams<T> {
    /// Linear coefficient mapping received exposure to infection rate.
    pub lambda: T,
    /// Seasonality per calendar month (January first).
    pub seasonality: [T; 12],
}

impl<T: Scalar> Default for TransmissionParams<T> {
    fn default() -> Self {
        let mut seasonality = [T::one(); 12];
        seasonality[3] = T::lit(0.95);
        seasonality[4] = T::lit(0.85);
        TransmissionParams {
            lambda: T::lit(1.596),
            seasonality,
        }
    }
}

impl<T: Scalar> TransmissionParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) {
            return Err(Error::param("lambda", "must be positive"));
        }
        if self.seasonality.iter().any(|p| !(*p > T::zero())) {
            return Err(Error::param("seasonality", "factors must be positive"));
        }
        Ok(())
    }
}

/// Accumulates the numerator and denominator of the per-group average shed.
#[derive(Clone, Debug, Default)]
pub struct GroupShed<T> {
    sums: PerAge<T>,
    counts: PerAge<u32>,
}

impl<T: Scalar> GroupShed<T> {
    pub fn new() -> Self {
        GroupShed {
            sums: [T::zero(); NUM_AGE_GROUPS],
            counts: [0; NUM_AGE_GROUPS],
        }
    }

    /// Counts a present agent of `group` in the denominator.
    pub fn add_present(&mut self, group: usize) {
        self.counts[group] += 1;
    }

    /// Adds a corrected shed contribution to the numerator.
    pub fn add_shed(&mut self, group: usize, shed: T, mask_protection: T, quarantine_efficiency: T) {
        self.sums[group] =
            self.sums[group] + (T::one() - quarantine_efficiency) * (T::one() - mask_protection) * shed;
    }

    pub fn any_shed(&self) -> bool {
        self.sums.iter().any(|s| *s > T::zero())
    }

    /// Average shed per group; empty groups give 0.
    pub fn averages(&self) -> PerAge<T> {
        let mut out = [T::zero(); NUM_AGE_GROUPS];
        for g in 0..NUM_AGE_GROUPS {
            if self.counts[g] > 0 {
                out[g] = self.sums[g] / T::lit(f64::from(self.counts[g]));
            }
        }
        out
    }
}

/// Exposure of a receiver whose contact-matrix row is `row`.
pub fn exposure_rate<T: Scalar>(
    row: &[T; NUM_AGE_GROUPS],
    shed: &PerAge<T>,
    seasonality: T,
    contact_reduction: T,
) -> T {
    let mut e = T::zero();
    for i in 0..NUM_AGE_GROUPS {
        e = e + seasonality * contact_reduction * row[i] * shed[i];
    }
    e
}

/// Individual infection rate of a receiver with mask protection `mask`.
pub fn infection_rate<T: Scalar>(exposure: T, mask: T, lambda: T) -> T {
    lambda * exposure * (T::one() - mask)
}

/// Draws `x ~ Exp(rate)` and reports whether `x <= dt`. Consumes exactly one
/// word regardless of the rate.
pub fn sample_transmission<T: Scalar, R: RandomSource + ?Sized>(rate: T, dt: T, rng: &mut R) -> bool {
    let u = rng.uniform01();
    let rate = rate.as_f64();
    if rate <= 0.0 {
        return false;
    }
    if rate.is_infinite() {
        return true;
    }
    // x = -ln(1 - u) / rate  <=  dt
    -(1.0 - u).ln() <= rate * dt.as_f64()
}

/// Read-only inputs of one interaction phase.
pub struct InteractionContext<'a, T: Scalar> {
    pub agents: &'a [Agent<T>],
    pub contacts: &'a ContactMatrices<T>,
    pub infection: &'a InfectionParams<T>,
    pub masks: &'a MaskParams<T>,
    pub vaccination: &'a VaccinationParams<T>,
    pub lambda: T,
    pub seasonality: T,
    pub contact_reduction: T,
    pub quarantine_efficiency: T,
    pub key: RngKey,
}

/// Result of evaluating one susceptible agent.
#[derive(Clone, Debug)]
pub struct InteractionOutcome<T> {
    pub agent: AgentId,
    pub rng_counter: u32,
    pub infection: Option<Infection<T>>,
}

/// Per-group average shed at a location over the step starting at `t` (days),
/// evaluated at the step midpoint.
pub fn local_shed_by_group<T: Scalar>(
    ctx: &InteractionContext<'_, T>,
    location: &Location<T>,
    t: T,
    dt: T,
) -> PerAge<T> {
    collect_shed(ctx, location, t + dt / T::lit(2.0)).averages()
}

fn collect_shed<T: Scalar>(
    ctx: &InteractionContext<'_, T>,
    location: &Location<T>,
    t_mid: T,
) -> GroupShed<T> {
    let mut acc = GroupShed::new();
    for &id in &location.present {
        let a = &ctx.agents[id.index()];
        let g = a.age.index();
        acc.add_present(g);
        if let Some(inf) = &a.infection {
            let shed = inf.viral_shed(t_mid);
            if shed > T::zero() {
                let mask = if a.mask.worn {
                    ctx.masks.transmit[a.mask.owned.index()]
                } else {
                    T::zero()
                };
                let q = if a.quarantine_start.is_some() {
                    ctx.quarantine_efficiency
                } else {
                    T::zero()
                };
                acc.add_shed(g, shed, mask, q);
            }
        }
    }
    acc
}

/// Interaction phase at one location for the step `[t, t + dt)` (days).
///
/// The per-group shed is computed once from the frozen present-list, then
/// every susceptible agent draws from its own stream, so the outcome does not
/// depend on the order in which agents or locations are processed.
pub fn interact<T: Scalar>(
    ctx: &InteractionContext<'_, T>,
    location: &Location<T>,
    t: T,
    dt: T,
) -> Vec<InteractionOutcome<T>> {
    if location.kind == LocationType::Cemetery || location.present.len() < 2 {
        return Vec::new();
    }
    let matrix = ctx.contacts.get(location.kind);
    let shed = collect_shed(ctx, location, t + dt / T::lit(2.0));
    if !shed.any_shed() || matrix.is_zero() {
        return Vec::new();
    }
    let shed = shed.averages();
    let reduction = ctx.contact_reduction * location.npi.contact_scale;

    let mut exposure_by_group = [T::zero(); NUM_AGE_GROUPS];
    for (j, e) in exposure_by_group.iter_mut().enumerate() {
        *e = exposure_rate(&matrix.rows[j], &shed, ctx.seasonality, reduction);
    }

    let mut out = Vec::new();
    for &id in &location.present {
        let a = &ctx.agents[id.index()];
        if !a.is_susceptible() {
            continue;
        }
        let mask = if a.mask.worn {
            ctx.masks.receive[a.mask.owned.index()]
        } else {
            T::zero()
        };
        let rate = infection_rate(exposure_by_group[a.age.index()], mask, ctx.lambda);
        let mut counter = a.rng_counter;
        let mut rng = AgentStream::new(ctx.key, id.0, &mut counter);
        let infection = if sample_transmission(rate, dt, &mut rng) {
            let protection = crate::interventions::severe_protection(a, ctx.vaccination);
            Some(draw_infection(a.age, protection, ctx.infection, t, &mut rng))
        } else {
            None
        };
        out.push(InteractionOutcome {
            agent: id,
            rng_counter: counter,
            infection,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SystemPurpose, SystemStream};

    #[test]
    fn worked_example_average_shed() {
        // four infected agents of one group plus one susceptible
        let mut acc = GroupShed::<f64>::new();
        for _ in 0..5 {
            acc.add_present(0);
        }
        for (s, m) in [(0.7, 0.8), (0.9, 0.5), (0.6, 0.9), (0.8, 0.7)] {
            acc.add_shed(0, s, m, 0.0);
        }
        assert!((acc.averages()[0] - 0.178).abs() < 1e-12);
    }

    #[test]
    fn empty_group_has_zero_shed() {
        let acc = GroupShed::<f64>::new();
        assert_eq!(acc.averages(), [0.0; 6]);
        assert!(!acc.any_shed());
    }

    #[test]
    fn singleton_average_is_its_shed() {
        let mut acc = GroupShed::<f64>::new();
        acc.add_present(2);
        acc.add_shed(2, 0.42, 0.0, 0.0);
        assert_eq!(acc.averages()[2], 0.42);
    }

    #[test]
    fn worked_example_exposure_and_rate() {
        let mut row = [0.0f64; 6];
        row[0] = 0.8;
        let mut shed = [0.0; 6];
        shed[0] = 0.178;
        let e = exposure_rate(&row, &shed, 1.0, 0.9);
        assert!((e - 0.12816).abs() < 1e-12);
        let tau = infection_rate(e, 0.85, 2.0);
        assert!((tau - 0.038448).abs() < 1e-12);
        assert_eq!(infection_rate(e, 1.0, 2.0), 0.0);
        assert!((infection_rate(0.1f64, 0.0, 1.596) - 0.1596).abs() < 1e-15);
    }

    #[test]
    fn exposure_is_linear_in_shed() {
        let row = [1.0f64, 0.5, 0.2, 3.0, 0.0, 1.1];
        let shed = [0.01, 0.2, 0.0, 0.05, 0.3, 0.07];
        let doubled = shed.map(|s| 2.0 * s);
        let e1 = exposure_rate(&row, &shed, 0.95, 0.7);
        let e2 = exposure_rate(&row, &doubled, 0.95, 0.7);
        assert_eq!(e2, 2.0 * e1);
        let two = exposure_rate(&[1.0f64, 1.0, 0.0, 0.0, 0.0, 0.0], &[0.3, 0.4, 0.0, 0.0, 0.0, 0.0], 1.0, 1.0);
        assert!((two - 0.7).abs() < 1e-15);
        assert_eq!(exposure_rate(&row, &shed, 1.0, 0.0), 0.0);
    }

    #[test]
    fn transmission_draw_limits() {
        let mut rng = SystemStream::new(RngKey(9), SystemPurpose::Synthesis);
        for _ in 0..1000 {
            assert!(!sample_transmission(0.0, 1.0 / 24.0, &mut rng));
            assert!(sample_transmission(f64::INFINITY, 1.0 / 24.0, &mut rng));
        }
    }

    #[test]
    fn split_other_preserves_weighted_sum() {
        let other = ContactMatrix::<f64>::uniform(2.0);
        let (event, shop) = other.split_other(1.5, 0.5);
        assert!((event.rows[0][0] / shop.rows[0][0] - 1.5).abs() < 1e-12);
        assert!((0.5 * event.rows[3][2] + 0.5 * shop.rows[3][2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_contact_entries_rejected() {
        let mut rows = [[0.0; 6]; 6];
        rows[2][3] = -1.0;
        assert!(ContactMatrix::<f64>::from_rows(rows).is_err());
    }
}
