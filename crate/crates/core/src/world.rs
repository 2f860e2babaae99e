//! Agents, locations and the world container.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::infection::{Infection, InfectionState};
use crate::interventions::{TestingStrategy, TestKind};
use crate::mobility::TripPlan;
use crate::num::Scalar;
use crate::rng::{AgentStream, RngKey, SYSTEM_STREAM_BASE};
use crate::scenario::ParameterSet;
use crate::schedule::Schedule;
use crate::time::{Calendar, SimTime, TimeSpan};
use crate::transmission::ContactMatrices;

pub const NUM_AGE_GROUPS: usize = 6;

/// One value per age group.
pub type PerAge<T> = [T; NUM_AGE_GROUPS];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl LocationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Age bands 0-4, 5-14, 15-34, 35-59, 60-79 and 80+ years.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AgeGroup(u8);

impl AgeGroup {
    pub const ALL: [AgeGroup; NUM_AGE_GROUPS] = [
        AgeGroup(0),
        AgeGroup(1),
        AgeGroup(2),
        AgeGroup(3),
        AgeGroup(4),
        AgeGroup(5),
    ];

    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_AGE_GROUPS {
            Ok(AgeGroup(index as u8))
        } else {
            Err(Error::InvalidAgeGroup(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> &'static str {
        ["0-4", "5-14", "15-34", "35-59", "60-79", "80+"][self.index()]
    }
}

impl TryFrom<u8> for AgeGroup {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        AgeGroup::new(v as usize)
    }
}

impl From<AgeGroup> for u8 {
    fn from(a: AgeGroup) -> u8 {
        a.0
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Kind of venue. The built-in kinds cover the model; `Custom` kinds can be
/// introduced by scenario files and get their own contact matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LocationType {
    Home,
    School,
    Work,
    SocialEvent,
    BasicShop,
    Hospital,
    Icu,
    Cemetery,
    Custom(u16),
}

pub const BUILTIN_LOCATION_TYPES: usize = 8;

impl LocationType {
    pub const BUILTIN: [LocationType; BUILTIN_LOCATION_TYPES] = [
        LocationType::Home,
        LocationType::School,
        LocationType::Work,
        LocationType::SocialEvent,
        LocationType::BasicShop,
        LocationType::Hospital,
        LocationType::Icu,
        LocationType::Cemetery,
    ];

    /// Index among the built-in kinds, `None` for custom kinds.
    pub fn builtin_index(self) -> Option<usize> {
        match self {
            LocationType::Home => Some(0),
            LocationType::School => Some(1),
            LocationType::Work => Some(2),
            LocationType::SocialEvent => Some(3),
            LocationType::BasicShop => Some(4),
            LocationType::Hospital => Some(5),
            LocationType::Icu => Some(6),
            LocationType::Cemetery => Some(7),
            LocationType::Custom(_) => None,
        }
    }

    pub fn is_medical(self) -> bool {
        matches!(
            self,
            LocationType::Hospital | LocationType::Icu | LocationType::Cemetery
        )
    }
}

impl fmt::Display for LocationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocationType::Home => f.write_str("home"),
            LocationType::School => f.write_str("school"),
            LocationType::Work => f.write_str("work"),
            LocationType::SocialEvent => f.write_str("social_event"),
            LocationType::BasicShop => f.write_str("basic_shop"),
            LocationType::Hospital => f.write_str("hospital"),
            LocationType::Icu => f.write_str("icu"),
            LocationType::Cemetery => f.write_str("cemetery"),
            LocationType::Custom(n) => write!(f, "custom:{n}"),
        }
    }
}

impl FromStr for LocationType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "home" => LocationType::Home,
            "school" => LocationType::School,
            "work" => LocationType::Work,
            "social_event" | "socialevent" => LocationType::SocialEvent,
            "basic_shop" | "basicshop" | "shop" | "shopping" => LocationType::BasicShop,
            "hospital" => LocationType::Hospital,
            "icu" => LocationType::Icu,
            "cemetery" => LocationType::Cemetery,
            other => match other.strip_prefix("custom:").map(str::parse::<u16>) {
                Some(Ok(n)) => LocationType::Custom(n),
                _ => return Err(Error::param("location type", format!("unknown kind `{s}`"))),
            },
        })
    }
}

impl Serialize for LocationType {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LocationType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Mask types, ordered from least to most protective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskType {
    Community,
    #[default]
    Surgical,
    Ffp2,
}

impl MaskType {
    pub const ALL: [MaskType; 3] = [MaskType::Community, MaskType::Surgical, MaskType::Ffp2];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Restrictions currently in force at a location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationNpi<T> {
    pub mask_required: Option<MaskType>,
    /// Probability that an attempted entry is admitted; 0 closes the venue.
    pub entry_factor: T,
    /// Uniform multiplier on the contact matrix.
    pub contact_scale: T,
    pub capacity: Option<u32>,
}

impl<T: Scalar> Default for LocationNpi<T> {
    fn default() -> Self {
        LocationNpi {
            mask_required: None,
            entry_factor: T::one(),
            contact_scale: T::one(),
            capacity: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location<T> {
    pub id: LocationId,
    pub kind: LocationType,
    pub capacity: Option<u32>,
    pub npi: LocationNpi<T>,
    pub present: Vec<AgentId>,
}

impl<T: Scalar> Location<T> {
    /// The tighter of the static capacity and any active restriction.
    pub fn effective_capacity(&self) -> Option<u32> {
        match (self.capacity, self.npi.capacity) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Venues an agent is tied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignments {
    pub home: LocationId,
    pub school: Option<LocationId>,
    pub work: Option<LocationId>,
    pub shop: Option<LocationId>,
    pub event: Option<LocationId>,
    pub hospital: LocationId,
    pub icu: LocationId,
    pub cemetery: LocationId,
}

impl Assignments {
    pub fn get(&self, kind: LocationType) -> Option<LocationId> {
        match kind {
            LocationType::Home => Some(self.home),
            LocationType::School => self.school,
            LocationType::Work => self.work,
            LocationType::SocialEvent => self.event,
            LocationType::BasicShop => self.shop,
            LocationType::Hospital => Some(self.hospital),
            LocationType::Icu => Some(self.icu),
            LocationType::Cemetery => Some(self.cemetery),
            LocationType::Custom(_) => None,
        }
    }
}

/// Venue choices supplied when creating an agent. Medical venues are filled in
/// from the world's singletons.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VenueAssignment {
    pub home: Option<LocationId>,
    pub school: Option<LocationId>,
    pub work: Option<LocationId>,
    pub shop: Option<LocationId>,
    pub event: Option<LocationId>,
}

impl VenueAssignment {
    pub fn home(home: LocationId) -> Self {
        VenueAssignment {
            home: Some(home),
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ImmunityKind {
    Infection { variant: u16 },
    Vaccination { vaccine: u16 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImmunityEvent {
    pub time: SimTime,
    pub kind: ImmunityKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRecord {
    pub time: SimTime,
    pub test: TestKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskState {
    pub owned: MaskType,
    pub worn: bool,
}

/// Mask compliance per built-in location type, each in `[-1, 1]`.
pub type Compliance<T> = [T; BUILTIN_LOCATION_TYPES];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent<T> {
    pub id: AgentId,
    pub age: AgeGroup,
    pub location: LocationId,
    pub time_at_location: TimeSpan,
    pub assigned: Assignments,
    pub infection: Option<Infection<T>>,
    pub history: Vec<ImmunityEvent>,
    pub quarantine_start: Option<SimTime>,
    pub last_negative_test: Option<TestRecord>,
    pub mask: MaskState,
    pub compliance: Compliance<T>,
    /// Local counter of the agent's random subsequence; the subsequence index
    /// is the agent id.
    pub rng_counter: u32,
}

impl<T: Scalar> Agent<T> {
    pub fn rng_index(&self) -> u32 {
        self.id.0
    }

    pub fn stream(&mut self, key: RngKey) -> AgentStream<'_> {
        AgentStream::new(key, self.id.0, &mut self.rng_counter)
    }

    pub fn state_at(&self, t: SimTime) -> InfectionState {
        match &self.infection {
            None => InfectionState::Susceptible,
            Some(inf) => inf.state_at_or_first(t.days()),
        }
    }

    pub fn is_susceptible(&self) -> bool {
        self.infection.is_none()
    }

    pub fn is_vaccinated(&self) -> bool {
        self.history
            .iter()
            .any(|e| matches!(e.kind, ImmunityKind::Vaccination { .. }))
    }

    pub fn compliance_for(&self, kind: LocationType) -> T {
        kind.builtin_index()
            .map_or(T::zero(), |i| self.compliance[i])
    }
}

/// Ids of the scenario-wide medical venues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicalVenues {
    pub hospital: LocationId,
    pub icu: LocationId,
    pub cemetery: LocationId,
}

/// Running totals maintained by the engine.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldStats {
    pub positive_tests: u64,
    pub tests_performed: u64,
    /// Positive tests of agents that were actually infected, counted once
    /// per infection.
    pub detected: u64,
    pub transmissions: u64,
}

/// Agent counts per infection state and age group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub counts: [PerAge<u32>; InfectionState::COUNT],
}

impl Census {
    pub fn get(&self, state: InfectionState, age: AgeGroup) -> u32 {
        self.counts[state.index()][age.index()]
    }

    pub fn total(&self, state: InfectionState) -> u32 {
        self.counts[state.index()].iter().sum()
    }

    pub fn population(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }
}

/// Complete simulation state.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct World<T: Scalar> {
    pub agents: Vec<Agent<T>>,
    pub locations: Vec<Location<T>>,
    pub trips: TripPlan,
    pub params: ParameterSet<T>,
    pub contacts: ContactMatrices<T>,
    pub testing: TestingStrategy<T>,
    pub schedule: Schedule<T>,
    pub clock: SimTime,
    pub rng_key: RngKey,
    pub calendar: Calendar,
    pub medical: MedicalVenues,
    pub stats: WorldStats,
}

impl<T: Scalar> World<T> {
    /// Empty world holding only the hospital, ICU and cemetery singletons
    /// (location ids 0, 1, 2).
    pub fn new(params: ParameterSet<T>, rng_key: RngKey) -> Self {
        let testing = TestingStrategy::from_params(&params.testing);
        let mut world = World {
            agents: Vec::new(),
            locations: Vec::new(),
            trips: TripPlan::default(),
            params,
            contacts: ContactMatrices::default(),
            testing,
            schedule: Schedule::default(),
            clock: SimTime::ORIGIN,
            rng_key,
            calendar: Calendar::default(),
            medical: MedicalVenues {
                hospital: LocationId(0),
                icu: LocationId(1),
                cemetery: LocationId(2),
            },
            stats: WorldStats::default(),
        };
        world.add_location(LocationType::Hospital, None);
        world.add_location(LocationType::Icu, None);
        world.add_location(LocationType::Cemetery, None);
        world
    }

    pub fn add_location(&mut self, kind: LocationType, capacity: Option<u32>) -> LocationId {
        let id = LocationId(self.locations.len() as u32);
        self.locations.push(Location {
            id,
            kind,
            capacity,
            npi: LocationNpi::default(),
            present: Vec::new(),
        });
        id
    }

    pub fn location(&self, id: LocationId) -> Result<&Location<T>> {
        self.locations
            .get(id.index())
            .ok_or(Error::UnknownLocation(id))
    }

    pub fn agent(&self, id: AgentId) -> Result<&Agent<T>> {
        self.agents.get(id.index()).ok_or(Error::UnknownAgent(id))
    }

    fn check_venue(&self, id: LocationId, expected: LocationType) -> Result<()> {
        let loc = self.location(id)?;
        if loc.kind != expected {
            return Err(Error::WrongVenueKind {
                id,
                expected,
                actual: loc.kind,
            });
        }
        Ok(())
    }

    /// Creates a susceptible agent at its home.
    pub fn add_agent(&mut self, age: AgeGroup, venues: VenueAssignment) -> Result<AgentId> {
        let home = venues.home.ok_or(Error::MissingHome)?;
        self.check_venue(home, LocationType::Home)?;
        for (venue, kind) in [
            (venues.school, LocationType::School),
            (venues.work, LocationType::Work),
            (venues.shop, LocationType::BasicShop),
            (venues.event, LocationType::SocialEvent),
        ] {
            if let Some(id) = venue {
                self.check_venue(id, kind)?;
            }
        }
        if self.agents.len() as u64 >= u64::from(SYSTEM_STREAM_BASE) {
            return Err(Error::param("agents", "agent count exceeds stream index range"));
        }
        let id = AgentId(self.agents.len() as u32);
        let compliance = self.params.masks.compliance_array();
        self.agents.push(Agent {
            id,
            age,
            location: home,
            time_at_location: TimeSpan(0),
            assigned: Assignments {
                home,
                school: venues.school,
                work: venues.work,
                shop: venues.shop,
                event: venues.event,
                hospital: self.medical.hospital,
                icu: self.medical.icu,
                cemetery: self.medical.cemetery,
            },
            infection: None,
            history: Vec::new(),
            quarantine_start: None,
            last_negative_test: None,
            mask: MaskState {
                owned: self.params.masks.owned,
                worn: false,
            },
            compliance,
            rng_counter: 0,
        });
        self.locations[home.index()].present.push(id);
        Ok(id)
    }

    /// Moves an agent, keeping present-lists consistent. Moving an agent to
    /// where it already is leaves it untouched.
    pub fn move_agent(&mut self, agent: AgentId, target: LocationId) -> Result<()> {
        let target_kind = self.location(target)?.kind;
        let a = self.agent(agent)?;
        let from = a.location;
        if from == target {
            return Ok(());
        }
        let dead = a.state_at(self.clock) == InfectionState::Dead;
        if target_kind == LocationType::Cemetery && !dead {
            return Err(Error::LivingAgentToCemetery(agent));
        }
        if dead && self.locations[from.index()].kind == LocationType::Cemetery {
            return Err(Error::DeadAgentLeavingCemetery(agent));
        }
        let old = &mut self.locations[from.index()].present;
        if let Some(pos) = old.iter().position(|&p| p == agent) {
            old.remove(pos);
        }
        self.locations[target.index()].present.push(agent);
        let a = &mut self.agents[agent.index()];
        a.location = target;
        a.time_at_location = TimeSpan(0);
        Ok(())
    }

    /// Rebuilds every present-list from the agents' location fields, sorted by
    /// agent id.
    pub fn rebuild_presence(&mut self) {
        for loc in &mut self.locations {
            loc.present.clear();
        }
        for a in &self.agents {
            self.locations[a.location.index()].present.push(a.id);
        }
    }

    pub fn census(&self) -> Census {
        let mut census = Census::default();
        for a in &self.agents {
            census.counts[a.state_at(self.clock).index()][a.age.index()] += 1;
        }
        census
    }

    /// Checks that present-lists and agent locations agree and every agent is
    /// listed exactly once.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let mut seen = vec![0u8; self.agents.len()];
        for loc in &self.locations {
            for &id in &loc.present {
                let a = self
                    .agents
                    .get(id.index())
                    .ok_or_else(|| format!("location {} lists unknown agent {id}", loc.id))?;
                if a.location != loc.id {
                    return Err(format!(
                        "agent {id} listed at {} but located at {}",
                        loc.id, a.location
                    ));
                }
                seen[id.index()] += 1;
            }
            if let Some(cap) = loc.capacity {
                if loc.present.len() > cap as usize {
                    return Err(format!("location {} over capacity", loc.id));
                }
            }
        }
        if let Some(i) = seen.iter().position(|&n| n != 1) {
            return Err(format!("agent {i} listed {} times", seen[i]));
        }
        Ok(())
    }

    /// Forces an infection onto a susceptible agent, drawing its course from
    /// the agent's own stream.
    pub fn infect(&mut self, agent: AgentId, transmission_time: T) -> Result<()> {
        let key = self.rng_key;
        let params = &self.params;
        let a = self
            .agents
            .get_mut(agent.index())
            .ok_or(Error::UnknownAgent(agent))?;
        if a.infection.is_some() {
            return Err(Error::AlreadyInfected(agent));
        }
        let protection = crate::interventions::severe_protection(a, &params.vaccination);
        let age = a.age;
        let inf = crate::infection::draw_infection(
            age,
            protection,
            &params.infection,
            transmission_time,
            &mut a.stream(key),
        );
        a.history.push(ImmunityEvent {
            time: SimTime((transmission_time.as_f64() * 24.0).floor() as i64),
            kind: ImmunityKind::Infection {
                variant: inf.variant,
            },
        });
        a.infection = Some(inf);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> World<f64> {
        World::new(ParameterSet::default(), RngKey(1))
    }

    #[test]
    fn first_agent_gets_id_zero_at_home() {
        let mut w = world();
        let home = w.add_location(LocationType::Home, None);
        let id = w.add_agent(AgeGroup::new(2).unwrap(), VenueAssignment::home(home)).unwrap();
        assert_eq!(id, AgentId(0));
        assert_eq!(w.agents[0].location, home);
        assert_eq!(w.agents[0].state_at(w.clock), InfectionState::Susceptible);
        assert_eq!(w.agents[0].rng_counter, 0);
    }

    #[test]
    fn rng_indices_are_distinct() {
        let mut w = world();
        let home = w.add_location(LocationType::Home, None);
        for _ in 0..3 {
            w.add_agent(AgeGroup::new(0).unwrap(), VenueAssignment::home(home)).unwrap();
        }
        let idx: Vec<u32> = w.agents.iter().map(|a| a.rng_index()).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn add_agent_validates_venues() {
        let mut w = world();
        let home = w.add_location(LocationType::Home, None);
        let work = w.add_location(LocationType::Work, None);
        let age = AgeGroup::new(3).unwrap();
        assert!(matches!(
            w.add_agent(age, VenueAssignment::default()),
            Err(Error::MissingHome)
        ));
        let dangling = VenueAssignment {
            work: Some(LocationId(99)),
            ..VenueAssignment::home(home)
        };
        assert!(matches!(
            w.add_agent(age, dangling),
            Err(Error::UnknownLocation(LocationId(99)))
        ));
        let wrong = VenueAssignment {
            school: Some(work),
            ..VenueAssignment::home(home)
        };
        assert!(matches!(w.add_agent(age, wrong), Err(Error::WrongVenueKind { .. })));
    }

    #[test]
    fn move_agent_transfers_between_lists() {
        let mut w = world();
        let home = w.add_location(LocationType::Home, None);
        let work = w.add_location(LocationType::Work, None);
        let id = w.add_agent(AgeGroup::new(3).unwrap(), VenueAssignment::home(home)).unwrap();
        w.agents[0].time_at_location = TimeSpan(5);
        w.move_agent(id, work).unwrap();
        assert!(w.locations[work.index()].present.contains(&id));
        assert!(!w.locations[home.index()].present.contains(&id));
        assert_eq!(w.agents[0].time_at_location, TimeSpan(0));
        w.check_consistency().unwrap();
    }

    #[test]
    fn self_move_is_a_noop() {
        let mut w = world();
        let home = w.add_location(LocationType::Home, None);
        let id = w.add_agent(AgeGroup::new(3).unwrap(), VenueAssignment::home(home)).unwrap();
        w.agents[0].time_at_location = TimeSpan(7);
        w.move_agent(id, home).unwrap();
        assert_eq!(w.agents[0].time_at_location, TimeSpan(7));
        assert_eq!(w.locations[home.index()].present, vec![id]);
    }

    #[test]
    fn living_agents_cannot_enter_cemetery() {
        let mut w = world();
        let home = w.add_location(LocationType::Home, None);
        let id = w.add_agent(AgeGroup::new(3).unwrap(), VenueAssignment::home(home)).unwrap();
        let cemetery = w.medical.cemetery;
        assert!(matches!(
            w.move_agent(id, cemetery),
            Err(Error::LivingAgentToCemetery(_))
        ));
    }

    #[test]
    fn location_type_round_trips_through_text() {
        for kind in LocationType::BUILTIN
            .into_iter()
            .chain(std::iter::once(LocationType::Custom(7)))
        {
            assert_eq!(kind.to_string().parse::<LocationType>().unwrap(), kind);
        }
        assert!("garage".parse::<LocationType>().is_err());
    }

    #[test]
    fn invalid_age_group_rejected() {
        assert!(AgeGroup::new(6).is_err());
        assert_eq!(AgeGroup::new(5).unwrap().label(), "80+");
    }
}
