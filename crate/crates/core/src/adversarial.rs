//! Searching the specification space for the model that most favours (or
//! disfavours) a demographic group.
//!
//! Pre-processing and aggregation are enumerated; variable weights are
//! searched with Hooke–Jeeves pattern search inside `[0.1, 0.9]`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{TractId, TractRecord};
use crate::engine::{PreparedData, ScoreResult};
use crate::error::{Error, Result};
use crate::schema::{Aggregation, HealthSet, IndicatorSchema, ModelSpec, Preprocessing, WEIGHT_BOUNDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceMode {
    /// Designated tracts where the group is the majority (share > 0.5).
    TractCountByMajority,
    /// Sum of the group's share over designated tracts.
    #[default]
    PopulationShareSum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DemographicTarget {
    Party { label: String },
    Race { label: String, mode: RaceMode },
}

impl fmt::Display for DemographicTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemographicTarget::Party { label } => write!(f, "party:{label}"),
            DemographicTarget::Race { label, .. } => write!(f, "race:{label}"),
        }
    }
}

/// Seeded extra starting points per case. Designation objectives are
/// piecewise constant, and a single start often stalls on a plateau.
pub const DEFAULT_RESTARTS: usize = 4;

/// Step length schedule for the pattern search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub initial: f64,
    pub shrink: f64,
    pub min_step: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            initial: 0.2,
            shrink: 0.5,
            min_step: 0.0125,
        }
    }
}

impl StepSchedule {
    fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.min_step > 0.0 && self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidInput(format!("invalid step schedule {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialProblem {
    pub target: DemographicTarget,
    pub direction: Direction,
    pub health_set: HealthSet,
    /// Starting weights; variables not listed start at 0.5.
    pub initial_weights: BTreeMap<String, f64>,
    pub schedule: StepSchedule,
    /// Extra searches per case from uniformly drawn starting weights.
    pub restarts: usize,
    /// Seed for the restart points.
    pub seed: u64,
}

impl AdversarialProblem {
    pub fn new(target: DemographicTarget, direction: Direction) -> Self {
        AdversarialProblem {
            target,
            direction,
            health_set: HealthSet::Baseline,
            initial_weights: BTreeMap::new(),
            schedule: StepSchedule::default(),
            restarts: DEFAULT_RESTARTS,
            seed: 20_240_001,
        }
    }
}

fn lookup_demographics(records: &[TractRecord]) -> HashMap<&TractId, &TractRecord> {
    records.iter().map(|r| (&r.tract_id, r)).collect()
}

/// Checks that the target's label occurs in the data.
pub fn check_target(records: &[TractRecord], target: &DemographicTarget) -> Result<()> {
    let known = match target {
        DemographicTarget::Party { label } => records.iter().any(|r| r.demographics.party.as_deref() == Some(label)),
        DemographicTarget::Race { label, .. } => records.iter().any(|r| r.demographics.race_shares.contains_key(label)),
    };
    if known {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("no tract carries demographic label {target}")))
    }
}

/// The demographic's designated presence under `results`.
pub fn demographic_objective(results: &[ScoreResult], records: &[TractRecord], target: &DemographicTarget) -> Result<f64> {
    check_target(records, target)?;
    let by_id = lookup_demographics(records);
    Ok(objective_with(results, &by_id, target))
}

fn objective_with(results: &[ScoreResult], by_id: &HashMap<&TractId, &TractRecord>, target: &DemographicTarget) -> f64 {
    results
        .iter()
        .filter(|r| r.designated)
        .filter_map(|r| by_id.get(&r.tract_id))
        .map(|rec| {
            let d = &rec.demographics;
            match target {
                DemographicTarget::Party { label } => f64::from(u8::from(d.party.as_deref() == Some(label))),
                DemographicTarget::Race { label, mode } => {
                    let share = d.race_shares.get(label).copied().unwrap_or(0.0);
                    match mode {
                        RaceMode::PopulationShareSum => share,
                        RaceMode::TractCountByMajority => f64::from(u8::from(share > 0.5)),
                    }
                }
            }
        })
        .sum()
}

/// One objective evaluation of a pattern search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0 for the configured start, then one per restart.
    pub start: usize,
    pub evaluation: usize,
    pub step: f64,
    pub objective: f64,
    /// Whether the point became the new base point.
    pub accepted: bool,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSearchOutcome {
    pub best: Vec<f64>,
    pub value: f64,
    pub trace: Vec<TraceEntry>,
}

/// Gains below this relative size are rounding noise. Without the margin
/// pattern moves near a bound can creep by a few ulps forever.
fn improves(new: f64, old: f64) -> bool {
    new > old + 1e-12 * (1.0 + old.abs())
}

struct Search<'f, F> {
    f: &'f mut F,
    bounds: (f64, f64),
    trace: Vec<TraceEntry>,
    step: f64,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Search<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let v = (self.f)(x)?;
        self.trace.push(TraceEntry {
            start: 0,
            evaluation: self.trace.len(),
            step: self.step,
            objective: v,
            accepted: false,
            weights: x.to_vec(),
        });
        Ok(v)
    }

    fn accept_last(&mut self) {
        if let Some(t) = self.trace.last_mut() {
            t.accepted = true;
        }
    }

    /// Coordinate probes around `x`, keeping each strict improvement.
    fn explore(&mut self, mut x: Vec<f64>, mut fx: f64) -> Result<(Vec<f64>, f64)> {
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let moved = (x[i] + sign * self.step).clamp(self.bounds.0, self.bounds.1);
                if moved == x[i] {
                    continue;
                }
                let mut trial = x.clone();
                trial[i] = moved;
                let ft = self.eval(&trial)?;
                if improves(ft, fx) {
                    x = trial;
                    fx = ft;
                    break;
                }
            }
        }
        Ok((x, fx))
    }
}

/// Maximizes `f` over the box `bounds^d` from `start` with Hooke–Jeeves
/// pattern search: coordinate exploration at the current step, pattern
/// moves along each successful direction, and step reduction when
/// exploration fails, until the step falls below `schedule.min_step`.
pub fn hooke_jeeves<F>(mut f: F, start: &[f64], bounds: (f64, f64), schedule: StepSchedule) -> Result<PatternSearchOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    schedule.validate()?;
    let clamp = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x.clamp(bounds.0, bounds.1)).collect() };
    let mut s = Search {
        f: &mut f,
        bounds,
        trace: Vec::new(),
        step: schedule.initial,
    };
    let mut base = clamp(start);
    let mut f_base = s.eval(&base)?;
    s.accept_last();
    while s.step >= schedule.min_step {
        let (x, fx) = s.explore(base.clone(), f_base)?;
        if improves(fx, f_base) {
            let (mut x, mut fx) = (x, fx);
            loop {
                let previous = std::mem::replace(&mut base, x);
                f_base = fx;
                mark_accepted(&mut s.trace, &base, f_base);
                let pattern: Vec<f64> = clamp(&base.iter().zip(&previous).map(|(b, p)| 2.0 * b - p).collect::<Vec<_>>());
                let fp = s.eval(&pattern)?;
                let (nx, nfx) = s.explore(pattern, fp)?;
                if improves(nfx, f_base) {
                    x = nx;
                    fx = nfx;
                } else {
                    break;
                }
            }
        } else {
            s.step *= schedule.shrink;
        }
    }
    Ok(PatternSearchOutcome {
        best: base,
        value: f_base,
        trace: s.trace,
    })
}

fn mark_accepted(trace: &mut [TraceEntry], x: &[f64], value: f64) {
    if let Some(t) = trace.iter_mut().rev().find(|t| t.weights == x && t.objective == value) {
        t.accepted = true;
    }
}

/// Best spec found for one pre-processing/aggregation pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub spec: ModelSpec,
    /// Objective in the problem's own sense (not negated for minimization).
    pub objective: f64,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialOutcome {
    pub best: ModelSpec,
    pub objective: f64,
    pub baseline_objective: f64,
    /// Variables in the order of the weight vectors in the traces.
    pub variables: Vec<String>,
    pub cases: Vec<CaseResult>,
}

fn weight_key(w: &[f64]) -> Vec<i64> {
    w.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Runs one pattern search per pre-processing/aggregation pair (in
/// parallel) and returns the best spec overall.
pub fn hooke_jeeves_search(
    problem: &AdversarialProblem,
    records: &[TractRecord],
    schema: &IndicatorSchema,
) -> Result<AdversarialOutcome> {
    problem.schedule.validate()?;
    check_target(records, &problem.target)?;
    let variables: Vec<String> = schema
        .active_variables(problem.health_set)
        .into_iter()
        .map(|(v, _)| v.id.clone())
        .collect();
    for (v, w) in &problem.initial_weights {
        if !variables.contains(v) {
            return Err(Error::InvalidInput(format!("initial weight for inactive variable `{v}`")));
        }
        if !(WEIGHT_BOUNDS.0..=WEIGHT_BOUNDS.1).contains(w) {
            return Err(Error::InvalidInput(format!("initial weight {w} for `{v}` outside {WEIGHT_BOUNDS:?}")));
        }
    }
    let start: Vec<f64> = variables
        .iter()
        .map(|v| problem.initial_weights.get(v).copied().unwrap_or(0.5))
        .collect();
    let by_id = lookup_demographics(records);
    let sign = match problem.direction {
        Direction::Maximize => 1.0,
        Direction::Minimize => -1.0,
    };

    let (z, pr) = rayon::join(
        || PreparedData::new(records, schema, Preprocessing::ZScore),
        || PreparedData::new(records, schema, Preprocessing::PercentileRank),
    );
    let (z, pr) = (z?, pr?);
    let prepared = |p: Preprocessing| match p {
        Preprocessing::ZScore => &z,
        Preprocessing::PercentileRank => &pr,
    };
    let make_spec = |p, a, w: &[f64]| {
        ModelSpec::new(p, a, problem.health_set).with_weights(variables.iter().cloned().zip(w.iter().copied()).collect())
    };

    let baseline_spec = make_spec(Preprocessing::PercentileRank, Aggregation::Multiplicative, &start);
    let baseline_objective = objective_with(&prepared(Preprocessing::PercentileRank).score(&baseline_spec)?, &by_id, &problem.target);

    let cases: Vec<(Preprocessing, Aggregation)> = [Preprocessing::PercentileRank, Preprocessing::ZScore]
        .into_iter()
        .flat_map(|p| [Aggregation::Multiplicative, Aggregation::Additive].map(|a| (p, a)))
        .collect();
    let results = cases
        .par_iter()
        .map(|&(p, a)| {
            let data = prepared(p);
            let mut memo: HashMap<Vec<i64>, f64> = HashMap::new();
            let objective = |w: &[f64]| -> Result<f64> {
                let key = weight_key(w);
                if let Some(v) = memo.get(&key) {
                    return Ok(*v);
                }
                let spec = make_spec(p, a, w);
                let scored = data.score(&spec).map_err(|e| Error::Objective {
                    spec: spec.label(),
                    source: Box::new(e),
                })?;
                let v = sign * objective_with(&scored, &by_id, &problem.target);
                memo.insert(key, v);
                Ok(v)
            };
            let mut objective = objective;
            let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
            let mut starts = vec![start.clone()];
            starts.extend((0..problem.restarts).map(|_| {
                (0..start.len())
                    .map(|_| rng.random_range(WEIGHT_BOUNDS.0..=WEIGHT_BOUNDS.1))
                    .collect::<Vec<f64>>()
            }));
            let mut best: Option<PatternSearchOutcome> = None;
            let mut trace = Vec::new();
            for (k, x0) in starts.iter().enumerate() {
                let out = hooke_jeeves(&mut objective, x0, WEIGHT_BOUNDS, problem.schedule)?;
                trace.extend(out.trace.iter().cloned().map(|mut t| {
                    t.start = k;
                    t.objective *= sign;
                    t
                }));
                if best.as_ref().is_none_or(|b| out.value > b.value) {
                    best = Some(out);
                }
            }
            let best = best.expect("at least one start");
            Ok(CaseResult {
                spec: make_spec(p, a, &best.best),
                objective: sign * best.value,
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // first best in case order, so ties resolve deterministically
    let best = results
        .iter()
        .fold(None::<&CaseResult>, |acc, c| match acc {
            Some(b) if sign * b.objective >= sign * c.objective => Some(b),
            _ => Some(c),
        })
        .expect("four cases");
    Ok(AdversarialOutcome {
        best: best.spec.clone(),
        objective: best.objective,
        baseline_objective,
        variables,
        cases: results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationRange {
    pub party: String,
    pub baseline_count: f64,
    pub max_count: f64,
    pub min_count: f64,
    /// Percent increase of the maximized count over the baseline.
    pub max_increase: f64,
    /// Percent decrease of the minimized count below the baseline.
    pub max_decrease: f64,
    pub maximize: AdversarialOutcome,
    pub minimize: AdversarialOutcome,
}

/// The party with fewer designated tracts under `results` (ties broken by
/// label order). Only parties present in the data are considered.
pub fn minority_party(results: &[ScoreResult], records: &[TractRecord]) -> Result<String> {
    let parties: BTreeSet<&str> = records.iter().filter_map(|r| r.demographics.party.as_deref()).collect();
    let by_id = lookup_demographics(records);
    parties
        .into_iter()
        .map(|p| {
            let target = DemographicTarget::Party { label: p.to_string() };
            (objective_with(results, &by_id, &target), p)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)))
        .map(|(_, p)| p.to_string())
        .ok_or_else(|| Error::InvalidInput("no party labels in the data".into()))
}

/// Largest achievable increase and decrease, in percent of the baseline
/// count, in the number of designated tracts of `party`.
pub fn manipulation_range(
    records: &[TractRecord],
    schema: &IndicatorSchema,
    party: &str,
    schedule: StepSchedule,
) -> Result<ManipulationRange> {
    let target = DemographicTarget::Party { label: party.to_string() };
    let run = |direction| {
        let mut problem = AdversarialProblem::new(target.clone(), direction);
        problem.schedule = schedule;
        hooke_jeeves_search(&problem, records, schema)
    };
    let (maximize, minimize) = rayon::join(|| run(Direction::Maximize), || run(Direction::Minimize));
    let (maximize, minimize) = (maximize?, minimize?);
    let baseline = maximize.baseline_objective;
    if baseline <= 0.0 {
        return Err(Error::Degenerate(format!("party {party} has no designated tracts under the baseline")));
    }
    Ok(ManipulationRange {
        party: party.to_string(),
        baseline_count: baseline,
        max_count: maximize.objective,
        min_count: minimize.objective,
        max_increase: 100.0 * (maximize.objective - baseline) / baseline,
        max_decrease: 100.0 * (baseline - minimize.objective) / baseline,
        maximize,
        minimize,
    })
}

/// Writes every case's trace, one row per objective evaluation.
pub fn write_trace(path: &Path, outcome: &AdversarialOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["preprocessing", "aggregation", "start", "evaluation", "step", "objective", "accepted"])?;
    for c in &outcome.cases {
        for t in &c.trace {
            w.serialize((c.spec.preprocessing, c.spec.aggregation, t.start, t.evaluation, t.step, t.objective, t.accepted))?;
        }
    }
    w.flush()?;
    Ok(())
}
