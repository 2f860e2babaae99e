//! State-driven core rules, fallback schedule rules and trip-chain replay.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infection::InfectionState;
use crate::interventions::{
    entry_gate, mask_decision, quarantine_check, Gate, MaskDecision, QuarantinePolicy, TestTally,
    TestingStrategy,
};
use crate::num::Scalar;
use crate::rng::{RandomSource, RngKey, SystemPurpose, SystemStream};
use crate::schedule::DayPolicy;
use crate::time::{Calendar, SimTime, TimeSpan, MINUTES_PER_DAY};
use crate::world::{Agent, AgentId, AgeGroup, Location, LocationId, LocationType, MaskState, World};

pub const MINUTES_PER_WEEK: u32 = 7 * MINUTES_PER_DAY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Home,
    School,
    Work,
    Shopping,
    SocialEvent,
    Other,
}

impl Activity {
    pub const COUNT: usize = 6;
    pub const ALL: [Activity; Activity::COUNT] = [
        Activity::Home,
        Activity::School,
        Activity::Work,
        Activity::Shopping,
        Activity::SocialEvent,
        Activity::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["home", "school", "work", "shopping", "social_event", "other"][self.index()]
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Activity::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::param("activity", format!("unknown activity `{s}`")))
    }
}

/// A weekly recurring trip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    pub agent: AgentId,
    /// 0 = Monday.
    pub weekday: u8,
    pub minute: u16,
    pub target: LocationId,
    pub activity: Activity,
}

impl Trip {
    pub fn minute_of_week(&self) -> u32 {
        u32::from(self.weekday) * MINUTES_PER_DAY + u32::from(self.minute)
    }
}

/// A one-off trip at an absolute time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatedTrip {
    pub agent: AgentId,
    pub time: SimTime,
    pub target: LocationId,
    pub activity: Activity,
}

/// Per-agent trip chains in compressed rows, each sorted by time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TripPlan {
    offsets: Vec<u32>,
    trips: Vec<Trip>,
    dated_offsets: Vec<u32>,
    dated: Vec<DatedTrip>,
    pub gatherings_expanded: bool,
}

fn csr<X: Copy>(n_agents: usize, items: &mut [X], agent: impl Fn(&X) -> AgentId) -> Vec<u32> {
    let mut offsets = vec![0u32; n_agents + 1];
    for it in items.iter() {
        offsets[agent(it).index() + 1] += 1;
    }
    for i in 0..n_agents {
        offsets[i + 1] += offsets[i];
    }
    offsets
}

impl TripPlan {
    /// Builds the plan; trips are validated against the agent count and
    /// the given location count.
    pub fn new(n_agents: usize, n_locations: usize, mut trips: Vec<Trip>) -> Result<Self> {
        for (row, t) in trips.iter().enumerate() {
            if t.agent.index() >= n_agents {
                return Err(Error::Schema {
                    file: "trips".into(),
                    row: row + 1,
                    detail: format!("unknown agent {}", t.agent),
                });
            }
            if t.target.index() >= n_locations {
                return Err(Error::Schema {
                    file: "trips".into(),
                    row: row + 1,
                    detail: format!("unknown location {}", t.target),
                });
            }
            if t.weekday > 6 || u32::from(t.minute) >= MINUTES_PER_DAY {
                return Err(Error::Schema {
                    file: "trips".into(),
                    row: row + 1,
                    detail: "time outside the week".into(),
                });
            }
        }
        trips.sort_by_key(|t| (t.agent, t.minute_of_week()));
        let offsets = csr(n_agents, &mut trips, |t| t.agent);
        Ok(TripPlan {
            offsets,
            trips,
            dated_offsets: vec![0; n_agents + 1],
            dated: Vec::new(),
            gatherings_expanded: false,
        })
    }

    pub fn empty(n_agents: usize) -> Self {
        TripPlan::new(n_agents, 0, Vec::new()).unwrap()
    }

    fn row<'a, X>(offsets: &[u32], items: &'a [X], agent: AgentId) -> &'a [X] {
        match (offsets.get(agent.index()), offsets.get(agent.index() + 1)) {
            (Some(&a), Some(&b)) => &items[a as usize..b as usize],
            _ => &[],
        }
    }

    pub fn for_agent(&self, agent: AgentId) -> &[Trip] {
        Self::row(&self.offsets, &self.trips, agent)
    }

    pub fn dated_for(&self, agent: AgentId) -> &[DatedTrip] {
        Self::row(&self.dated_offsets, &self.dated, agent)
    }

    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn dated(&self) -> &[DatedTrip] {
        &self.dated
    }

    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty() && self.dated.is_empty()
    }

    /// Adds one-off trips, keeping each agent's list time-sorted.
    pub fn add_dated(&mut self, n_agents: usize, extra: impl IntoIterator<Item = DatedTrip>) {
        let mut all = std::mem::take(&mut self.dated);
        all.extend(extra);
        all.sort_by_key(|t| (t.agent, t.time));
        self.dated_offsets = csr(n_agents, &mut all, |t| t.agent);
        self.dated = all;
        if self.offsets.len() < n_agents + 1 {
            let last = *self.offsets.last().unwrap_or(&0);
            self.offsets.resize(n_agents + 1, last);
        }
    }

    /// Trips of `agent` in the step `[t, t + dt)`, in chain order.
    pub fn due(&self, agent: AgentId, calendar: &Calendar, t: SimTime, dt: TimeSpan) -> Vec<(LocationId, Activity)> {
        let mut out = Vec::new();
        let chain = self.for_agent(agent);
        if !chain.is_empty() {
            let start = u32::from(calendar.weekday(t.day())) * MINUTES_PER_DAY + t.hour_of_day() * 60;
            let len = (dt.in_minutes().max(0) as u32).min(MINUTES_PER_WEEK);
            let end = start + len;
            let push_range = |lo: u32, hi: u32, out: &mut Vec<(u32, LocationId, Activity)>, shift: u32| {
                let a = chain.partition_point(|x| x.minute_of_week() < lo);
                let b = chain.partition_point(|x| x.minute_of_week() < hi);
                for x in &chain[a..b] {
                    out.push((x.minute_of_week() + shift, x.target, x.activity));
                }
            };
            let mut hits = Vec::new();
            if end <= MINUTES_PER_WEEK {
                push_range(start, end, &mut hits, 0);
            } else {
                push_range(start, MINUTES_PER_WEEK, &mut hits, 0);
                push_range(0, end - MINUTES_PER_WEEK, &mut hits, MINUTES_PER_WEEK);
            }
            let base = t.hours() * 60;
            let week_start = start;
            let mut timed: Vec<(i64, LocationId, Activity)> = hits
                .into_iter()
                .map(|(m, l, a)| (base + i64::from(m) - i64::from(week_start), l, a))
                .collect();
            for d in self.dated_for(agent) {
                if d.time >= t && d.time < t + dt {
                    timed.push((d.time.hours() * 60, d.target, d.activity));
                }
            }
            timed.sort_by_key(|x| x.0);
            out.extend(timed.into_iter().map(|(_, l, a)| (l, a)));
        } else {
            for d in self.dated_for(agent) {
                if d.time >= t && d.time < t + dt {
                    out.push((d.target, d.activity));
                }
            }
        }
        out
    }
}

/// Forced destination from the agent's infection and quarantine state.
pub fn core_rule<T: Scalar>(agent: &Agent<T>, t: SimTime) -> Option<LocationId> {
    let a = &agent.assigned;
    match agent.state_at(t) {
        InfectionState::Dead => return Some(a.cemetery),
        InfectionState::Critical => return Some(a.icu),
        InfectionState::Severe => return Some(a.hospital),
        _ => {}
    }
    if agent.location == a.hospital || agent.location == a.icu || agent.quarantine_start.is_some() {
        return Some(a.home);
    }
    None
}

/// Fallback daily routine for agents without a trip chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedRules {
    pub enabled: bool,
    pub school_ages: Vec<AgeGroup>,
    pub work_ages: Vec<AgeGroup>,
    /// (leave, return) hours.
    pub school_hours: (u32, u32),
    pub work_hours: (u32, u32),
    pub shop_weekdays: Vec<u8>,
    pub shop_hours: (u32, u32),
    pub event_weekdays: Vec<u8>,
    pub event_hours: (u32, u32),
}

impl Default for ExtendedRules {
    fn default() -> Self {
        let g = |i| AgeGroup::new(i).unwrap();
        ExtendedRules {
            enabled: true,
            school_ages: vec![g(1)],
            work_ages: vec![g(2), g(3)],
            school_hours: (8, 15),
            work_hours: (8, 17),
            shop_weekdays: vec![5],
            shop_hours: (10, 12),
            event_weekdays: vec![4, 5],
            event_hours: (19, 22),
        }
    }
}

impl ExtendedRules {
    pub fn disabled() -> Self {
        ExtendedRules {
            enabled: false,
            ..Default::default()
        }
    }
}

/// Destination from the fallback routine whose departure or return hour
/// falls in `[t, t + dt)`.
pub fn extended_rule<T: Scalar>(
    agent: &Agent<T>,
    t: SimTime,
    dt: TimeSpan,
    calendar: &Calendar,
    rules: &ExtendedRules,
) -> Option<(LocationId, Activity)> {
    if !rules.enabled {
        return None;
    }
    let mut found = None;
    let mut h = t;
    while h < t + dt {
        let weekday = calendar.weekday(h.day());
        let hour = h.hour_of_day();
        let a = &agent.assigned;
        let weekday_ok = weekday < 5;
        let mut check = |ok: bool, hours: (u32, u32), venue: Option<LocationId>, act: Activity| {
            if let (true, Some(v)) = (ok, venue) {
                if hour == hours.0 {
                    found = Some((v, act));
                } else if hour == hours.1 && agent.location == v {
                    found = Some((a.home, Activity::Home));
                }
            }
        };
        check(weekday_ok && rules.school_ages.contains(&agent.age), rules.school_hours, a.school, Activity::School);
        check(weekday_ok && rules.work_ages.contains(&agent.age), rules.work_hours, a.work, Activity::Work);
        check(rules.shop_weekdays.contains(&weekday), rules.shop_hours, a.shop, Activity::Shopping);
        check(rules.event_weekdays.contains(&weekday), rules.event_hours, a.event, Activity::SocialEvent);
        h = h + TimeSpan::HOUR;
    }
    found
}

/// What an agent wants to do at the end of the step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Intent {
    Stay,
    /// Core-rule move; bypasses every gate.
    Forced(LocationId),
    Trip { target: LocationId, mask: MaskState },
}

/// Read-only inputs of the movement phase.
pub struct MovementContext<'a, T: Scalar> {
    pub locations: &'a [Location<T>],
    pub trips: &'a TripPlan,
    pub policy: &'a DayPolicy<T>,
    pub testing: &'a TestingStrategy<T>,
    pub quarantine: &'a QuarantinePolicy<T>,
    pub rules: &'a ExtendedRules,
    pub calendar: &'a Calendar,
    pub key: RngKey,
    pub t: SimTime,
    pub dt: TimeSpan,
}

/// Decides an agent's movement for the step. Only the agent itself (its
/// quarantine, test and mask state and its stream counter) is modified.
pub fn decide<T: Scalar>(agent: &mut Agent<T>, ctx: &MovementContext<'_, T>, tally: &mut TestTally) -> Intent {
    // the release check sees the end of the step
    quarantine_check(agent, ctx.t + ctx.dt, ctx.quarantine);
    if let Some(target) = core_rule(agent, ctx.t) {
        return Intent::Forced(target);
    }
    let mut candidates = ctx.trips.due(agent.id, ctx.calendar, ctx.t, ctx.dt);
    if candidates.is_empty() && ctx.trips.for_agent(agent.id).is_empty() {
        candidates.extend(extended_rule(agent, ctx.t, ctx.dt, ctx.calendar, ctx.rules));
    }
    let mut position = agent.location;
    let mut mask = agent.mask;
    let mut moved = false;
    for (target, activity) in candidates {
        if target == position {
            continue;
        }
        let loc = &ctx.locations[target.index()];
        if loc.kind == LocationType::Cemetery || loc.kind.is_medical() {
            continue;
        }
        if activity != Activity::Home {
            let keep = ctx.policy.retention(activity);
            if keep < T::one() && !agent.stream(ctx.key).bernoulli(keep.as_f64()) {
                continue;
            }
        }
        let entry = loc.npi.entry_factor;
        if entry <= T::zero() || (entry < T::one() && !agent.stream(ctx.key).bernoulli(entry.as_f64())) {
            continue;
        }
        let wear = match mask_decision(agent, loc.kind, loc.npi.mask_required, ctx.key) {
            MaskDecision::Refuse => continue,
            MaskDecision::Wear(m) => MaskState { owned: m, worn: true },
            MaskDecision::Bare => MaskState { owned: mask.owned, worn: false },
        };
        if entry_gate(agent, loc, ctx.t, ctx.testing, ctx.key, tally) == Gate::Deny {
            if agent.quarantine_start.is_some() {
                return Intent::Forced(agent.assigned.home);
            }
            continue;
        }
        position = target;
        mask = wear;
        moved = true;
    }
    if moved {
        Intent::Trip { target: position, mask }
    } else {
        Intent::Stay
    }
}

/// Movement phase over all agents: parallel decisions, then capacity
/// resolution in agent-id order, then presence rebuild.
pub fn movement_phase<T: Scalar>(world: &mut World<T>, policy: &DayPolicy<T>, t: SimTime, dt: TimeSpan) -> TestTally {
    let World {
        agents,
        locations,
        trips,
        params,
        testing,
        calendar,
        rng_key,
        ..
    } = world;
    let ctx = MovementContext {
        locations,
        trips,
        policy,
        testing,
        quarantine: &params.quarantine,
        rules: &params.mobility,
        calendar,
        key: *rng_key,
        t,
        dt,
    };
    let decisions: Vec<(Intent, TestTally)> = agents
        .par_iter_mut()
        .with_min_len(512)
        .map(|a| {
            let mut tally = TestTally::default();
            let intent = decide(a, &ctx, &mut tally);
            (intent, tally)
        })
        .collect();

    let mut tally = TestTally::default();
    let mut occupancy: Vec<u32> = locations.iter().map(|l| l.present.len() as u32).collect();
    let mut moved = vec![false; agents.len()];
    for (i, (intent, _)) in decisions.iter().enumerate() {
        if let Intent::Forced(target) = *intent {
            let a = &mut agents[i];
            if a.location != target {
                occupancy[a.location.index()] -= 1;
                occupancy[target.index()] += 1;
                a.location = target;
                a.mask.worn = false;
                moved[i] = true;
            }
        }
    }
    for (i, (intent, t)) in decisions.iter().enumerate() {
        tally.merge(*t);
        if let Intent::Trip { target, mask } = *intent {
            let loc = &locations[target.index()];
            if let Some(cap) = loc.effective_capacity() {
                if occupancy[target.index()] >= cap {
                    continue;
                }
            }
            let a = &mut agents[i];
            occupancy[a.location.index()] -= 1;
            occupancy[target.index()] += 1;
            a.location = target;
            a.mask = mask;
            moved[i] = true;
        }
    }
    for (a, m) in agents.iter_mut().zip(&moved) {
        if *m {
            a.time_at_location = TimeSpan(0);
        }
    }
    world.rebuild_presence();
    tally
}

/// Adds the schedule's one-off gathering trips to the plan. Participants are
/// drawn on the reserved gatherings stream in agent-id order.
pub fn expand_gatherings<T: Scalar>(world: &mut World<T>) {
    if world.trips.gatherings_expanded {
        return;
    }
    let mut rng = SystemStream::new(world.rng_key, SystemPurpose::Gatherings);
    let mut extra = Vec::new();
    for g in world.schedule.gatherings() {
        for a in &world.agents {
            let joins = rng.bernoulli(g.fraction.as_f64());
            let day = g.days[rng.below(g.days.len() as u64) as usize];
            let Some(event) = a.assigned.event else { continue };
            if joins {
                extra.push(DatedTrip {
                    agent: a.id,
                    time: SimTime::from_day_hour(day, i64::from(g.start_hour)),
                    target: event,
                    activity: Activity::SocialEvent,
                });
                extra.push(DatedTrip {
                    agent: a.id,
                    time: SimTime::from_day_hour(day, i64::from(g.end_hour)),
                    target: a.assigned.home,
                    activity: Activity::Home,
                });
            }
        }
    }
    let n = world.agents.len();
    world.trips.add_dated(n, extra);
    world.trips.gatherings_expanded = true;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ParameterSet;
    use crate::world::VenueAssignment;

    fn small_world() -> (World<f64>, LocationId, LocationId) {
        let mut w = World::new(ParameterSet::default(), RngKey(11));
        let home = w.add_location(LocationType::Home, None);
        let work = w.add_location(LocationType::Work, None);
        for _ in 0..2 {
            w.add_agent(AgeGroup::new(3).unwrap(), VenueAssignment { work: Some(work), ..VenueAssignment::home(home) })
                .unwrap();
        }
        w.testing = TestingStrategy::empty();
        (w, home, work)
    }

    #[test]
    fn trips_due_in_window() {
        let trips = vec![
            Trip { agent: AgentId(0), weekday: 0, minute: 8 * 60, target: LocationId(4), activity: Activity::Work },
            Trip { agent: AgentId(0), weekday: 0, minute: 17 * 60, target: LocationId(3), activity: Activity::Home },
        ];
        let plan = TripPlan::new(1, 5, trips).unwrap();
        let cal = Calendar::default();
        assert!(plan.due(AgentId(0), &cal, SimTime(7), TimeSpan::HOUR).is_empty());
        assert_eq!(plan.due(AgentId(0), &cal, SimTime(8), TimeSpan::HOUR), vec![(LocationId(4), Activity::Work)]);
        // the same weekday one week later
        assert_eq!(plan.due(AgentId(0), &cal, SimTime(7 * 24 + 17), TimeSpan::HOUR).len(), 1);
        let both = plan.due(AgentId(0), &cal, SimTime(0), TimeSpan::DAY);
        assert_eq!(both.last().unwrap().0, LocationId(3));
    }

    #[test]
    fn unknown_trip_target_names_row() {
        let trips = vec![Trip { agent: AgentId(0), weekday: 0, minute: 0, target: LocationId(9), activity: Activity::Work }];
        match TripPlan::new(1, 5, trips) {
            Err(Error::Schema { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn extended_rule_examples() {
        let (mut w, _, work) = small_world();
        let school = w.add_location(LocationType::School, None);
        w.add_agent(AgeGroup::new(1).unwrap(), VenueAssignment { school: Some(school), ..VenueAssignment::home(LocationId(3)) })
            .unwrap();
        let rules = ExtendedRules::default();
        let cal = Calendar::default();
        // 2021-03-02 is a Tuesday
        let tue8 = SimTime::from_day_hour(1, 8);
        assert_eq!(extended_rule(&w.agents[2], tue8, TimeSpan::HOUR, &cal, &rules), Some((school, Activity::School)));
        let sat8 = SimTime::from_day_hour(5, 8);
        assert_eq!(extended_rule(&w.agents[0], sat8, TimeSpan::HOUR, &cal, &rules), None);
        assert_eq!(extended_rule(&w.agents[0], SimTime(8), TimeSpan::HOUR, &cal, &rules), Some((work, Activity::Work)));
        w.agents[0].age = AgeGroup::new(5).unwrap();
        assert_eq!(extended_rule(&w.agents[0], SimTime(8), TimeSpan::HOUR, &cal, &rules), None);
    }

    #[test]
    fn empty_plan_without_rules_stays_home() {
        let (mut w, home, _) = small_world();
        w.params.mobility = ExtendedRules::disabled();
        let policy = DayPolicy::neutral(1.0);
        for h in 0..24 * 7 {
            movement_phase(&mut w, &policy, SimTime(h), TimeSpan::HOUR);
        }
        assert!(w.agents.iter().all(|a| a.location == home));
    }

    #[test]
    fn capacity_blocks_later_agents() {
        let (mut w, _, work) = small_world();
        w.locations[work.index()].npi.capacity = Some(1);
        let policy = DayPolicy::neutral(1.0);
        movement_phase(&mut w, &policy, SimTime(8), TimeSpan::HOUR);
        assert_eq!(w.agents[0].location, work);
        assert_ne!(w.agents[1].location, work);
        w.check_consistency().unwrap();
    }

    #[test]
    fn severe_agent_goes_to_hospital() {
        let (mut w, _, work) = small_world();
        w.agents[0].location = work;
        w.rebuild_presence();
        w.infect(AgentId(0), 0.0).unwrap();
        let inf = w.agents[0].infection.as_mut().unwrap();
        inf.course.entries = vec![
            (InfectionState::Exposed, 0.0),
            (InfectionState::NoSymptoms, 0.5),
            (InfectionState::Mild, 1.0),
            (InfectionState::Severe, 2.0),
            (InfectionState::Recovered, 20.0),
        ];
        assert_eq!(core_rule(&w.agents[0], SimTime(36)), None);
        assert_eq!(core_rule(&w.agents[0], SimTime(48)), Some(w.medical.hospital));
    }
}
