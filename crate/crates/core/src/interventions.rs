//! Testing, quarantine, masks, venue restrictions and vaccination protection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infection::InfectionState;
use crate::num::Scalar;
use crate::rng::{RandomSource, RngKey};
use crate::time::{SimTime, TimeSpan};
use crate::world::{Agent, AgeGroup, Location, LocationId, LocationNpi, LocationType, MaskType, PerAge, TestRecord};

/// Index of a test type within a [`TestingStrategy`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestKind(pub u16);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestType<T> {
    pub name: String,
    pub sensitivity: T,
    pub specificity: T,
    /// How long a negative result grants entry.
    pub validity: TimeSpan,
}

impl<T: Scalar> TestType<T> {
    pub fn antigen() -> Self {
        TestType {
            name: "antigen".into(),
            sensitivity: T::lit(0.71),
            specificity: T::lit(0.996),
            validity: TimeSpan::DAY,
        }
    }

    pub fn pcr() -> Self {
        TestType {
            name: "pcr".into(),
            sensitivity: T::lit(0.9),
            specificity: T::lit(0.99),
            validity: TimeSpan::days(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(&format!("{}.sensitivity", self.name), self.sensitivity)?;
        check_probability(&format!("{}.specificity", self.name), self.specificity)?;
        if self.validity.0 < 0 {
            return Err(Error::param("validity", "must be non-negative"));
        }
        Ok(())
    }
}

pub(crate) fn check_probability<T: Scalar>(name: &str, p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::param(name, format!("{p} is not a probability")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymptomFilter {
    #[default]
    Any,
    Symptomatic,
    Nonsymptomatic,
}

/// When, who and where a scheme applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestingCriteria {
    pub start: SimTime,
    pub end: SimTime,
    /// Empty means every age group.
    #[serde(default)]
    pub ages: Vec<AgeGroup>,
    #[serde(default)]
    pub symptoms: SymptomFilter,
    /// Empty `types` and `ids` mean every location.
    #[serde(default)]
    pub types: Vec<LocationType>,
    #[serde(default)]
    pub ids: Vec<LocationId>,
}

impl TestingCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::param("testing window", "start after end"));
        }
        Ok(())
    }

    pub fn matches<T: Scalar>(&self, agent: &Agent<T>, location: &Location<T>, t: SimTime) -> bool {
        if t < self.start || t >= self.end {
            return false;
        }
        if !self.ages.is_empty() && !self.ages.contains(&agent.age) {
            return false;
        }
        let symptomatic = agent.state_at(t).is_symptomatic();
        match self.symptoms {
            SymptomFilter::Any => {}
            SymptomFilter::Symptomatic if !symptomatic => return false,
            SymptomFilter::Nonsymptomatic if symptomatic => return false,
            _ => {}
        }
        if self.types.is_empty() && self.ids.is_empty() {
            return true;
        }
        self.types.contains(&location.kind) || self.ids.contains(&location.id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestingScheme<T> {
    pub criteria: TestingCriteria,
    pub test: TestKind,
    /// Chance that the test is actually performed on entry.
    pub probability: T,
}

/// Scenario-level testing parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestingParams<T> {
    pub test: TestType<T>,
    /// Voluntary per-trip testing probability of symptomatic agents.
    pub p_symptomatic: T,
    /// Ratio of symptomatic to nonsymptomatic voluntary testing.
    pub nonsymptomatic_ratio: T,
    /// Multiplier on voluntary testing during lockdown.
    pub lockdown_scale: T,
    /// Multiplier on voluntary testing during the Easter week.
    pub easter_scale: T,
    #[serde(default)]
    pub extra_tests: Vec<TestType<T>>,
    #[serde(default)]
    pub schemes: Vec<TestingScheme<T>>,
}

impl<T: Scalar> Default for TestingParams<T> {
    fn default() -> Self {
        TestingParams {
            test: TestType::antigen(),
            p_symptomatic: T::lit(0.02472),
            nonsymptomatic_ratio: T::lit(4.83),
            lockdown_scale: T::lit(1.2),
            easter_scale: T::lit(0.66),
            extra_tests: Vec::new(),
            schemes: Vec::new(),
        }
    }
}

impl<T: Scalar> TestingParams<T> {
    pub fn validate(&self) -> Result<()> {
        self.test.validate()?;
        for t in &self.extra_tests {
            t.validate()?;
        }
        check_probability("p_symptomatic", self.p_symptomatic)?;
        if !(self.nonsymptomatic_ratio > T::zero()) {
            return Err(Error::param("nonsymptomatic_ratio", "must be positive"));
        }
        if self.lockdown_scale < T::zero() || self.easter_scale < T::zero() {
            return Err(Error::param("testing scale", "must be non-negative"));
        }
        let n_tests = 1 + self.extra_tests.len();
        for s in &self.schemes {
            s.criteria.validate()?;
            check_probability("scheme probability", s.probability)?;
            if usize::from(s.test.0) >= n_tests {
                return Err(Error::param("scheme test", format!("unknown test kind {}", s.test.0)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestingStrategy<T> {
    /// Test types; index 0 is used for voluntary testing.
    pub tests: Vec<TestType<T>>,
    pub schemes: Vec<TestingScheme<T>>,
    pub p_symptomatic: T,
    pub nonsymptomatic_ratio: T,
    /// Current multiplier on voluntary testing, set by the schedule.
    pub scale: T,
}

impl<T: Scalar> TestingStrategy<T> {
    pub fn from_params(p: &TestingParams<T>) -> Self {
        let mut tests = vec![p.test.clone()];
        tests.extend(p.extra_tests.iter().cloned());
        TestingStrategy {
            tests,
            schemes: p.schemes.clone(),
            p_symptomatic: p.p_symptomatic,
            nonsymptomatic_ratio: p.nonsymptomatic_ratio,
            scale: T::one(),
        }
    }

    /// No schemes and no voluntary testing.
    pub fn empty() -> Self {
        TestingStrategy {
            tests: vec![TestType::antigen()],
            schemes: Vec::new(),
            p_symptomatic: T::zero(),
            nonsymptomatic_ratio: T::one(),
            scale: T::one(),
        }
    }

    pub fn test(&self, kind: TestKind) -> &TestType<T> {
        &self.tests[usize::from(kind.0)]
    }

    /// Per-trip voluntary testing probability for an agent in `state`.
    pub fn voluntary_probability(&self, state: InfectionState) -> T {
        let p = if state.is_symptomatic() {
            self.p_symptomatic
        } else {
            self.p_symptomatic / self.nonsymptomatic_ratio
        };
        (p * self.scale).min(T::one())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestResult {
    Positive,
    Negative,
}

/// Test counts accumulated during a phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TestTally {
    pub performed: u64,
    pub positive: u64,
    /// Positive tests of agents that were actually infected.
    pub detected: u64,
}

impl TestTally {
    pub fn merge(&mut self, other: TestTally) {
        self.performed += other.performed;
        self.positive += other.positive;
        self.detected += other.detected;
    }
}

/// Infected for testing purposes: past the exposed stage and not yet
/// recovered or dead.
pub fn counts_as_infected(state: InfectionState) -> bool {
    state.is_infectious()
}

/// Tests an agent. A negative result is recorded; a positive result starts
/// quarantine. Consumes one word.
pub fn perform_test<T: Scalar>(
    agent: &mut Agent<T>,
    test: &TestType<T>,
    kind: TestKind,
    t: SimTime,
    key: RngKey,
    tally: &mut TestTally,
) -> TestResult {
    let infected = counts_as_infected(agent.state_at(t));
    let p_positive = if infected {
        test.sensitivity
    } else {
        T::one() - test.specificity
    };
    let positive = agent.stream(key).bernoulli(p_positive.as_f64());
    tally.performed += 1;
    if positive {
        tally.positive += 1;
        agent.quarantine_start = Some(t);
        if infected {
            if let Some(inf) = agent.infection.as_mut() {
                if !inf.detected {
                    inf.detected = true;
                    tally.detected += 1;
                }
            }
        }
        TestResult::Positive
    } else {
        agent.last_negative_test = Some(TestRecord { time: t, test: kind });
        TestResult::Negative
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Allow,
    Deny,
}

fn has_valid_negative<T: Scalar>(agent: &Agent<T>, strategy: &TestingStrategy<T>, t: SimTime) -> bool {
    agent.last_negative_test.is_some_and(|r| {
        let validity = strategy.tests.get(usize::from(r.test.0)).map_or(TimeSpan(0), |tt| tt.validity);
        t >= r.time && t < r.time + validity
    })
}

/// Testing gate on a requested entry: scheme tests first, then voluntary
/// testing on every trip away from home.
pub fn entry_gate<T: Scalar>(
    agent: &mut Agent<T>,
    location: &Location<T>,
    t: SimTime,
    strategy: &TestingStrategy<T>,
    key: RngKey,
    tally: &mut TestTally,
) -> Gate {
    for scheme in &strategy.schemes {
        if !scheme.criteria.matches(agent, location, t) {
            continue;
        }
        if has_valid_negative(agent, strategy, t) {
            continue;
        }
        let performed = if scheme.probability >= T::one() {
            true
        } else if scheme.probability <= T::zero() {
            false
        } else {
            agent.stream(key).bernoulli(scheme.probability.as_f64())
        };
        if performed
            && perform_test(agent, strategy.test(scheme.test), scheme.test, t, key, tally)
                == TestResult::Positive
        {
            return Gate::Deny;
        }
    }
    if location.kind != LocationType::Home {
        let p = strategy.voluntary_probability(agent.state_at(t));
        if p > T::zero()
            && agent.stream(key).bernoulli(p.as_f64())
            && perform_test(agent, strategy.test(TestKind(0)), TestKind(0), t, key, tally)
                == TestResult::Positive
        {
            return Gate::Deny;
        }
    }
    Gate::Allow
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarantinePolicy<T> {
    /// Quarantine length q_d in days.
    pub length: T,
    /// Reduction q_e of the shed of a quarantined agent.
    pub efficiency: T,
}

impl<T: Scalar> Default for QuarantinePolicy<T> {
    fn default() -> Self {
        QuarantinePolicy {
            length: T::lit(10.0),
            efficiency: T::lit(0.5),
        }
    }
}

impl<T: Scalar> QuarantinePolicy<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.length >= T::zero()) {
            return Err(Error::param("quarantine length", "must be non-negative"));
        }
        check_probability("quarantine efficiency", self.efficiency)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuarantineStatus {
    NotQuarantined,
    Active,
    Released,
}

/// Releases the agent once the quarantine has run its length.
pub fn quarantine_check<T: Scalar>(
    agent: &mut Agent<T>,
    t: SimTime,
    policy: &QuarantinePolicy<T>,
) -> QuarantineStatus {
    let Some(start) = agent.quarantine_start else {
        return QuarantineStatus::NotQuarantined;
    };
    let elapsed: T = (t - start).in_days();
    if elapsed < policy.length {
        QuarantineStatus::Active
    } else {
        agent.quarantine_start = None;
        QuarantineStatus::Released
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskDecision {
    Wear(MaskType),
    Bare,
    Refuse,
}

/// Mask behaviour on entering a location of `kind` with the given mandate.
pub fn mask_decision<T: Scalar>(
    agent: &mut Agent<T>,
    kind: LocationType,
    mandate: Option<MaskType>,
    key: RngKey,
) -> MaskDecision {
    let c = agent.compliance_for(kind);
    match mandate {
        Some(required) => {
            if c < T::zero() && agent.stream(key).bernoulli((-c).as_f64()) {
                MaskDecision::Refuse
            } else {
                MaskDecision::Wear(agent.mask.owned.max(required))
            }
        }
        None => {
            if c > T::zero() && agent.stream(key).bernoulli(c.as_f64()) {
                MaskDecision::Wear(agent.mask.owned)
            } else {
                MaskDecision::Bare
            }
        }
    }
}

/// Restriction record applied to a location for a schedule window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Restriction<T> {
    #[serde(default)]
    pub closed: bool,
    #[serde(default)]
    pub entry_factor: Option<T>,
    #[serde(default)]
    pub capacity: Option<u32>,
    #[serde(default)]
    pub contact_scale: Option<T>,
    #[serde(default)]
    pub mask_required: Option<MaskType>,
}

impl<T: Scalar> Restriction<T> {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.entry_factor {
            check_probability("entry_factor", f)?;
        }
        if let Some(s) = self.contact_scale {
            if !(s >= T::zero()) {
                return Err(Error::param("contact_scale", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Writes a restriction into a location's active record.
pub fn apply_restriction<T: Scalar>(npi: &mut LocationNpi<T>, r: &Restriction<T>) {
    if let Some(f) = r.entry_factor {
        npi.entry_factor = f;
    }
    if r.closed {
        npi.entry_factor = T::zero();
    }
    if let Some(c) = r.capacity {
        npi.capacity = Some(c);
    }
    if let Some(s) = r.contact_scale {
        npi.contact_scale = s;
    }
    if let Some(m) = r.mask_required {
        npi.mask_required = Some(m);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaccinationParams<T> {
    /// Constant protection p_f against severe progression.
    pub protection: T,
}

impl<T: Scalar> Default for VaccinationParams<T> {
    fn default() -> Self {
        VaccinationParams {
            protection: T::lit(0.8),
        }
    }
}

/// Multiplier on the probability of severe progression.
pub fn severe_protection<T: Scalar>(agent: &Agent<T>, params: &VaccinationParams<T>) -> T {
    if agent.is_vaccinated() {
        T::one() - params.protection
    } else {
        T::one()
    }
}

/// Per-age vaccination coverage applied at initialization.
pub type Coverage<T> = PerAge<T>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ParameterSet;
    use crate::world::{ImmunityEvent, ImmunityKind, VenueAssignment, World};

    fn setup() -> (World<f64>, LocationId) {
        let mut w = World::new(ParameterSet::default(), RngKey(5));
        let home = w.add_location(LocationType::Home, None);
        let work = w.add_location(LocationType::Work, None);
        w.add_agent(AgeGroup::new(3).unwrap(), VenueAssignment { work: Some(work), ..VenueAssignment::home(home) })
            .unwrap();
        (w, work)
    }

    #[test]
    fn quarantine_window_boundaries() {
        let (mut w, _) = setup();
        let policy = QuarantinePolicy { length: 10.0, efficiency: 0.5 };
        w.agents[0].quarantine_start = Some(SimTime::ORIGIN);
        let t = SimTime(9 * 24 + 21);
        assert_eq!(quarantine_check(&mut w.agents[0], t, &policy), QuarantineStatus::Active);
        assert_eq!(
            quarantine_check(&mut w.agents[0], SimTime::from_days(10), &policy),
            QuarantineStatus::Released
        );
        assert!(w.agents[0].quarantine_start.is_none());

        let zero = QuarantinePolicy { length: 0.0, efficiency: 0.5 };
        w.agents[0].quarantine_start = Some(SimTime(5));
        assert_eq!(quarantine_check(&mut w.agents[0], SimTime(5), &zero), QuarantineStatus::Released);
    }

    #[test]
    fn empty_strategy_allows_without_draws() {
        let (mut w, work) = setup();
        let strategy = TestingStrategy::<f64>::empty();
        let loc = w.locations[work.index()].clone();
        let mut tally = TestTally::default();
        for h in 0..100 {
            assert_eq!(
                entry_gate(&mut w.agents[0], &loc, SimTime(h), &strategy, RngKey(1), &mut tally),
                Gate::Allow
            );
        }
        assert_eq!(w.agents[0].rng_counter, 0);
        assert_eq!(tally, TestTally::default());
    }

    #[test]
    fn perfect_test_always_positive_for_infected() {
        let (mut w, _) = setup();
        w.infect(crate::world::AgentId(0), -5.0).unwrap();
        let mut test = TestType::<f64>::antigen();
        test.sensitivity = 1.0;
        let mut tally = TestTally::default();
        let t = SimTime::ORIGIN;
        assert!(counts_as_infected(w.agents[0].state_at(t)));
        for _ in 0..50 {
            assert_eq!(
                perform_test(&mut w.agents[0], &test, TestKind(0), t, RngKey(2), &mut tally),
                TestResult::Positive
            );
        }
        assert_eq!(w.agents[0].quarantine_start, Some(t));
        assert_eq!(tally.detected, 1);
    }

    #[test]
    fn scheme_negative_allows_and_is_reused() {
        let (mut w, work) = setup();
        let mut strategy = TestingStrategy::<f64>::empty();
        let mut test = TestType::antigen();
        test.specificity = 1.0;
        strategy.tests[0] = test;
        strategy.schemes.push(TestingScheme {
            criteria: TestingCriteria {
                start: SimTime::ORIGIN,
                end: SimTime::from_days(10),
                ages: vec![],
                symptoms: SymptomFilter::Nonsymptomatic,
                types: vec![LocationType::Work],
                ids: vec![],
            },
            test: TestKind(0),
            probability: 1.0,
        });
        let loc = w.locations[work.index()].clone();
        let mut tally = TestTally::default();
        let a = &mut w.agents[0];
        assert_eq!(entry_gate(a, &loc, SimTime(8), &strategy, RngKey(3), &mut tally), Gate::Allow);
        assert_eq!(tally.performed, 1);
        // within the validity window no retest
        assert_eq!(entry_gate(a, &loc, SimTime(20), &strategy, RngKey(3), &mut tally), Gate::Allow);
        assert_eq!(tally.performed, 1);
        assert_eq!(entry_gate(a, &loc, SimTime(32), &strategy, RngKey(3), &mut tally), Gate::Allow);
        assert_eq!(tally.performed, 2);
    }

    #[test]
    fn symptomatic_positive_pcr_denies_and_quarantines() {
        let (mut w, work) = setup();
        w.infect(crate::world::AgentId(0), 0.0).unwrap();
        let mild = w.agents[0]
            .infection
            .as_ref()
            .unwrap()
            .course
            .entry_time(InfectionState::Mild);
        let Some(mild) = mild else { return };
        let t = SimTime((mild * 24.0).ceil() as i64);
        let mut strategy = TestingStrategy::<f64>::empty();
        let mut pcr = TestType::pcr();
        pcr.sensitivity = 1.0;
        strategy.tests.push(pcr);
        strategy.schemes.push(TestingScheme {
            criteria: TestingCriteria {
                start: SimTime::ORIGIN,
                end: SimTime::from_days(60),
                ages: vec![],
                symptoms: SymptomFilter::Symptomatic,
                types: vec![],
                ids: vec![],
            },
            test: TestKind(1),
            probability: 1.0,
        });
        let loc = w.locations[work.index()].clone();
        let mut tally = TestTally::default();
        assert_eq!(entry_gate(&mut w.agents[0], &loc, t, &strategy, RngKey(3), &mut tally), Gate::Deny);
        assert_eq!(w.agents[0].quarantine_start, Some(t));
    }

    #[test]
    fn mask_extremes() {
        let (mut w, _) = setup();
        let a = &mut w.agents[0];
        a.compliance = [-1.0; 8];
        for _ in 0..100 {
            assert_eq!(
                mask_decision(a, LocationType::Work, Some(MaskType::Ffp2), RngKey(4)),
                MaskDecision::Refuse
            );
        }
        a.compliance = [1.0; 8];
        for _ in 0..100 {
            assert_eq!(
                mask_decision(a, LocationType::Work, None, RngKey(4)),
                MaskDecision::Wear(MaskType::Surgical)
            );
        }
        assert_eq!(
            mask_decision(a, LocationType::Work, Some(MaskType::Ffp2), RngKey(4)),
            MaskDecision::Wear(MaskType::Ffp2)
        );
    }

    #[test]
    fn vaccination_multiplier() {
        let (mut w, _) = setup();
        let p = VaccinationParams { protection: 0.8 };
        assert_eq!(severe_protection(&w.agents[0], &p), 1.0);
        w.agents[0].history.push(ImmunityEvent {
            time: SimTime::ORIGIN,
            kind: ImmunityKind::Vaccination { vaccine: 0 },
        });
        assert!((severe_protection(&w.agents[0], &p) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn closure_overrides_entry_factor() {
        let mut npi = LocationNpi::<f64>::default();
        apply_restriction(&mut npi, &Restriction { closed: true, entry_factor: Some(0.5), ..Default::default() });
        assert_eq!(npi.entry_factor, 0.0);
        apply_restriction(&mut npi, &Restriction { capacity: Some(10), ..Default::default() });
        assert_eq!(npi.capacity, Some(10));
    }

    #[test]
    fn voluntary_probabilities() {
        let s = TestingStrategy::from_params(&TestingParams::<f64>::default());
        assert!((s.voluntary_probability(InfectionState::Mild) - 0.02472).abs() < 1e-15);
        assert!((s.voluntary_probability(InfectionState::NoSymptoms) - 0.02472 / 4.83).abs() < 1e-15);
    }
}
