//! Viral load, viral shed and the symptomatic course of one infection.
//!
//! All times in this module are absolute simulation days.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{logistic, softplus, Scalar};
use crate::rng::{Gamma, LogNormal, RandomSource};
use crate::world::{AgeGroup, PerAge};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfectionState {
    Susceptible,
    Exposed,
    NoSymptoms,
    Mild,
    Severe,
    Critical,
    Recovered,
    Dead,
}

impl InfectionState {
    pub const COUNT: usize = 8;

    pub const ALL: [InfectionState; Self::COUNT] = [
        InfectionState::Susceptible,
        InfectionState::Exposed,
        InfectionState::NoSymptoms,
        InfectionState::Mild,
        InfectionState::Severe,
        InfectionState::Critical,
        InfectionState::Recovered,
        InfectionState::Dead,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            InfectionState::Susceptible => "susceptible",
            InfectionState::Exposed => "exposed",
            InfectionState::NoSymptoms => "no_symptoms",
            InfectionState::Mild => "mild",
            InfectionState::Severe => "severe",
            InfectionState::Critical => "critical",
            InfectionState::Recovered => "recovered",
            InfectionState::Dead => "dead",
        }
    }

    /// States in which an agent sheds virus and tests positive.
    pub fn is_infectious(self) -> bool {
        matches!(
            self,
            InfectionState::NoSymptoms
                | InfectionState::Mild
                | InfectionState::Severe
                | InfectionState::Critical
        )
    }

    pub fn is_symptomatic(self) -> bool {
        matches!(
            self,
            InfectionState::Mild | InfectionState::Severe | InfectionState::Critical
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, InfectionState::Recovered | InfectionState::Dead)
    }

    /// Allowed successor states.
    pub fn successors(self) -> &'static [InfectionState] {
        use InfectionState::*;
        match self {
            Susceptible => &[Exposed],
            Exposed => &[NoSymptoms],
            NoSymptoms => &[Mild, Recovered],
            Mild => &[Severe, Recovered],
            Severe => &[Critical, Recovered],
            Critical => &[Dead, Recovered],
            Recovered | Dead => &[],
        }
    }
}

impl std::str::FromStr for InfectionState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        InfectionState::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::param("infection state", format!("unknown state `{s}`")))
    }
}

/// Piecewise-linear log viral load with a logistic shed on top.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViralCurve<T> {
    pub transmission_time: T,
    /// Log-units per day, positive.
    pub incline: T,
    /// Peak log viral load, positive.
    pub peak: T,
    /// Log-units per day, negative.
    pub decline: T,
    pub shed_factor: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> ViralCurve<T> {
    pub fn peak_time(&self) -> T {
        self.transmission_time + self.peak / self.incline
    }

    pub fn clearance_time(&self) -> T {
        self.peak_time() - self.peak / self.decline
    }

    /// Log viral load, zero outside `[t_T, t_C]` and never negative.
    pub fn viral_load(&self, t: T) -> T {
        if t < self.transmission_time || t > self.clearance_time() {
            return T::zero();
        }
        let tp = self.peak_time();
        let v = if t < tp {
            (t - self.transmission_time) * self.incline
        } else {
            self.peak + (t - tp) * self.decline
        };
        v.max(T::zero())
    }

    /// Shed rate ignoring the infection state, zero outside `[t_T, t_C]`.
    pub fn viral_shed(&self, t: T) -> T {
        if t < self.transmission_time || t > self.clearance_time() {
            return T::zero();
        }
        self.shed_factor * logistic(self.alpha + self.beta * self.viral_load(t))
    }

    /// Exact integral of [`Self::viral_shed`] over `[a, b]`.
    pub fn shed_integral(&self, a: T, b: T) -> T {
        let tt = self.transmission_time;
        let tp = self.peak_time();
        let tc = self.clearance_time();
        let rise = self.segment_integral(a.max(tt), b.min(tp), self.incline);
        let fall = self.segment_integral(a.max(tp), b.min(tc), self.decline);
        self.shed_factor * (rise + fall)
    }

    /// Integral of the logistic term over `[lo, hi]`, a sub-interval of a
    /// segment on which the load has the given slope.
    fn segment_integral(&self, lo: T, hi: T, slope: T) -> T {
        if hi <= lo {
            return T::zero();
        }
        let k = self.beta * slope;
        let x_lo = self.alpha + self.beta * self.viral_load(lo);
        if k == T::zero() {
            return logistic(x_lo) * (hi - lo);
        }
        let x_hi = self.alpha + self.beta * self.viral_load(hi);
        (softplus(x_hi) - softplus(x_lo)) / k
    }
}

/// The pre-drawn walk through the state graph with entry times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfectionCourse<T> {
    pub entries: Vec<(InfectionState, T)>,
}

impl<T: Scalar> InfectionCourse<T> {
    /// Checks the walk: starts Exposed, follows allowed transitions with
    /// strictly increasing times, ends Recovered or Dead.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let first = self.entries.first().ok_or("empty course")?;
        if first.0 != InfectionState::Exposed {
            return Err(format!("course starts in {:?}", first.0));
        }
        for w in self.entries.windows(2) {
            if !w[0].0.successors().contains(&w[1].0) {
                return Err(format!("illegal transition {:?} -> {:?}", w[0].0, w[1].0));
            }
            if w[1].1 <= w[0].1 {
                return Err(format!("non-increasing entry time at {:?}", w[1].0));
            }
        }
        let last = self.entries.last().unwrap().0;
        if !last.is_terminal() {
            return Err(format!("course ends in {last:?}"));
        }
        Ok(())
    }

    pub fn entry_time(&self, state: InfectionState) -> Option<T> {
        self.entries.iter().find(|e| e.0 == state).map(|e| e.1)
    }

    pub fn final_state(&self) -> InfectionState {
        self.entries.last().map_or(InfectionState::Exposed, |e| e.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Infection<T> {
    pub variant: u16,
    pub curve: ViralCurve<T>,
    pub course: InfectionCourse<T>,
    /// Set once the infection produced a positive test.
    #[serde(default)]
    pub detected: bool,
}

impl<T: Scalar> Infection<T> {
    pub fn transmission_time(&self) -> T {
        self.curve.transmission_time
    }

    /// State whose entry time is the latest one not after `t`.
    pub fn state_at(&self, t: T) -> Result<InfectionState> {
        if t < self.transmission_time() {
            return Err(Error::BeforeTransmission {
                t: t.as_f64(),
                transmission: self.transmission_time().as_f64(),
            });
        }
        Ok(self.state_at_or_first(t))
    }

    /// Like [`Self::state_at`], but reports Exposed before the transmission.
    pub fn state_at_or_first(&self, t: T) -> InfectionState {
        let mut state = InfectionState::Exposed;
        for &(s, entry) in &self.course.entries {
            if entry <= t {
                state = s;
            } else {
                break;
            }
        }
        state
    }

    /// Interval during which the state allows shedding.
    pub fn infectious_window(&self) -> (T, T) {
        let mut start = T::infinity();
        let mut end = T::infinity();
        for &(s, entry) in &self.course.entries {
            if s.is_infectious() && start == T::infinity() {
                start = entry;
            }
            if s.is_terminal() {
                end = entry;
            }
        }
        (start, end)
    }

    /// Shed rate with the state cut applied.
    pub fn viral_shed(&self, t: T) -> T {
        if !self.state_at_or_first(t).is_infectious() {
            return T::zero();
        }
        self.curve.viral_shed(t)
    }

    /// Exact integral of [`Self::viral_shed`] over `[a, b]`.
    pub fn shed_integral(&self, a: T, b: T) -> T {
        let (start, end) = self.infectious_window();
        let lo = a.max(start);
        let hi = b.min(end);
        if hi <= lo {
            return T::zero();
        }
        self.curve.shed_integral(lo, hi)
    }

    pub fn total_shed(&self) -> T {
        self.shed_integral(T::neg_infinity(), T::infinity())
    }
}

/// Viral-load shape parameters shared by all infections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViralParams<T> {
    pub peak: T,
    pub incline: T,
    pub decline: T,
    pub alpha: T,
    pub beta: T,
    pub shed_factor: Gamma,
}

impl<T: Scalar> Default for ViralParams<T> {
    fn default() -> Self {
        ViralParams {
            peak: T::lit(8.1),
            incline: T::lit(2.0),
            decline: T::lit(-0.17),
            alpha: T::lit(-7.0),
            beta: T::one(),
            shed_factor: Gamma::new(1.6, 1.0 / 22.0).unwrap(),
        }
    }
}

/// Durations (days) of each transition of the state graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CourseDurations {
    pub exposed_to_no_symptoms: LogNormal,
    pub no_symptoms_to_symptoms: LogNormal,
    pub no_symptoms_to_recovered: LogNormal,
    pub symptoms_to_severe: LogNormal,
    pub symptoms_to_recovered: LogNormal,
    pub severe_to_critical: LogNormal,
    pub severe_to_recovered: LogNormal,
    pub critical_to_dead: LogNormal,
    pub critical_to_recovered: LogNormal,
}

impl Default for CourseDurations {
    fn default() -> Self {
        let ln = |m, s| LogNormal::new(m, s).unwrap();
        CourseDurations {
            exposed_to_no_symptoms: ln(4.5, 1.5),
            no_symptoms_to_symptoms: ln(1.1, 0.9),
            no_symptoms_to_recovered: ln(8.0, 2.0),
            symptoms_to_severe: ln(6.6, 4.9),
            symptoms_to_recovered: ln(8.0, 2.0),
            severe_to_critical: ln(1.5, 2.0),
            severe_to_recovered: ln(18.1, 6.3),
            critical_to_dead: ln(10.7, 4.8),
            critical_to_recovered: ln(18.1, 6.3),
        }
    }
}

/// Branch probabilities per age group and transition durations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CourseParams<T> {
    pub p_symptomatic: PerAge<T>,
    pub p_severe: PerAge<T>,
    pub p_critical: PerAge<T>,
    pub p_death: PerAge<T>,
    pub durations: CourseDurations,
}

impl<T: Scalar> Default for CourseParams<T> {
    fn default() -> Self {
        let per_age = |v: [f64; 6]| v.map(T::lit);
        CourseParams {
            p_symptomatic: per_age([0.5, 0.55, 0.6, 0.7, 0.83, 0.9]),
            p_severe: per_age([0.02, 0.03, 0.04, 0.07, 0.17, 0.24]),
            p_critical: per_age([0.1, 0.11, 0.12, 0.14, 0.33, 0.62]),
            p_death: per_age([0.12, 0.13, 0.15, 0.26, 0.4, 0.48]),
            durations: CourseDurations::default(),
        }
    }
}

impl<T: Scalar> CourseParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, probs) in [
            ("p_symptomatic", &self.p_symptomatic),
            ("p_severe", &self.p_severe),
            ("p_critical", &self.p_critical),
            ("p_death", &self.p_death),
        ] {
            if probs.iter().any(|p| !(*p >= T::zero() && *p <= T::one())) {
                return Err(Error::param(name, "probabilities must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfectionParams<T> {
    pub viral: ViralParams<T>,
    pub course: CourseParams<T>,
}

impl<T: Scalar> Default for InfectionParams<T> {
    fn default() -> Self {
        InfectionParams {
            viral: ViralParams::default(),
            course: CourseParams::default(),
        }
    }
}

/// Draws a complete infection.
///
/// Draw order on the stream: shed factor, Exposed->NoSymptoms duration, then
/// for each branching state one uniform for the branch followed by the
/// duration of the chosen transition.
pub fn draw_infection<T: Scalar, R: RandomSource + ?Sized>(
    age: AgeGroup,
    severe_multiplier: T,
    params: &InfectionParams<T>,
    transmission_time: T,
    rng: &mut R,
) -> Infection<T> {
    use InfectionState::*;

    let viral = &params.viral;
    let course = &params.course;
    let d = &course.durations;
    let a = age.index();

    let shed_factor = T::lit(viral.shed_factor.sample(rng));

    let mut entries = Vec::with_capacity(6);
    let mut t = transmission_time;
    entries.push((Exposed, t));
    t = t + T::lit(d.exposed_to_no_symptoms.sample(rng));
    entries.push((NoSymptoms, t));

    let mut branch = |p: T, onward: InfectionState, next: &LogNormal, recover: &LogNormal, t: &mut T| {
        let taken = rng.bernoulli(p.as_f64());
        let dist = if taken { next } else { recover };
        *t = *t + T::lit(dist.sample(rng));
        if taken {
            onward
        } else {
            Recovered
        }
    };

    let steps = [
        (course.p_symptomatic[a], Mild, &d.no_symptoms_to_symptoms, &d.no_symptoms_to_recovered),
        (
            course.p_severe[a] * severe_multiplier,
            Severe,
            &d.symptoms_to_severe,
            &d.symptoms_to_recovered,
        ),
        (course.p_critical[a], Critical, &d.severe_to_critical, &d.severe_to_recovered),
        (course.p_death[a], Dead, &d.critical_to_dead, &d.critical_to_recovered),
    ];
    for (p, onward, next, recover) in steps {
        let state = branch(p, onward, next, recover, &mut t);
        entries.push((state, t));
        if state.is_terminal() {
            break;
        }
    }

    Infection {
        variant: 0,
        curve: ViralCurve {
            transmission_time,
            incline: viral.incline,
            peak: viral.peak,
            decline: viral.decline,
            shed_factor,
            alpha: viral.alpha,
            beta: viral.beta,
        },
        course: InfectionCourse { entries },
        detected: false,
    }
}
