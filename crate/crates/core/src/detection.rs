//! Detection filtering by map consensus, the approach step, validation of the
//! full query, and the per-target search state machine.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::belief_map::SimilarityMap;
use crate::error::{Error, Result};
use crate::grid::{percentile, Cell, GridSpec, Mask};
use crate::planner::{plan_to_any, Path};
use crate::remote::{chat_content, post_with_retry, EndpointConfig, HttpTransport, JsonTransport};
use crate::sim::sensor::{AgentAction, GridPose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub cell: Cell,
    pub confidence: f64,
    pub source_pose: GridPose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub primary_present: bool,
    pub constraint_satisfied: bool,
    #[serde(default)]
    pub rationale: String,
}

impl ValidationVerdict {
    pub fn new(primary_present: bool, constraint_satisfied: bool, rationale: impl Into<String>) -> Self {
        Self {
            primary_present,
            constraint_satisfied: constraint_satisfied && primary_present,
            rationale: rationale.into(),
        }
    }

    pub fn unconfirmed(rationale: impl Into<String>) -> Self {
        Self::new(false, false, rationale)
    }
}

/// An object near the robot, as the validator is allowed to see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearbyObject {
    pub id: String,
    pub label: String,
    pub cell: Cell,
}

/// What the validator is shown at the validation viewpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationContext {
    pub query: String,
    pub primary: String,
    pub robot_cell: Cell,
    pub room: Option<String>,
    /// Objects within the validation radius of the robot.
    pub nearby: Vec<NearbyObject>,
    /// Ground-truth goal instance; only the simulator oracle reads it.
    pub goal_id: Option<String>,
}

pub trait Validator: Send {
    /// Never fails: provider errors come back as an unconfirmed verdict.
    fn validate(&mut self, ctx: &ValidationContext) -> ValidationVerdict;
}

/// Answers from ground truth, with independent flip noise per field.
pub struct OracleValidator {
    eps_fn: f64,
    eps_fp: f64,
    rng: ChaCha8Rng,
}

impl OracleValidator {
    pub fn new(eps_fn: f64, eps_fp: f64, seed: u64) -> Result<Self> {
        for (n, v) in [("eps_fn", eps_fn), ("eps_fp", eps_fp)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!("{n} = {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            eps_fn,
            eps_fp,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn flip(&mut self, truth: bool) -> bool {
        // One draw per field regardless of the branch keeps runs with
        // different rates on the same random stream.
        let u: f64 = self.rng.random();
        if truth {
            u >= self.eps_fn
        } else {
            u < self.eps_fp
        }
    }
}

impl Validator for OracleValidator {
    fn validate(&mut self, ctx: &ValidationContext) -> ValidationVerdict {
        let present = ctx.nearby.iter().any(|o| o.label == ctx.primary);
        let satisfied = present
            && ctx
                .goal_id
                .as_ref()
                .is_some_and(|g| ctx.nearby.iter().any(|o| &o.id == g && o.label == ctx.primary));
        let p = self.flip(present);
        let s = self.flip(satisfied);
        ValidationVerdict::new(p, s, format!("oracle: present={present} satisfied={satisfied}"))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireVerdict {
    primary_present: bool,
    constraint_satisfied: bool,
    #[serde(default)]
    rationale: String,
}

/// LVLM-backed validator.
pub struct RemoteValidator {
    endpoint: EndpointConfig,
    transport: Arc<dyn JsonTransport>,
}

impl RemoteValidator {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self::with_transport(endpoint, Arc::new(HttpTransport::default()))
    }

    pub fn with_transport(endpoint: EndpointConfig, transport: Arc<dyn JsonTransport>) -> Self {
        Self { endpoint, transport }
    }

    pub fn request_body(ctx: &ValidationContext) -> Value {
        let mut candidates: Vec<&str> = ctx.nearby.iter().map(|o| o.label.as_str()).collect();
        if let Some(r) = &ctx.room {
            candidates.push(r);
        }
        json!({
            "query": ctx.query,
            "primary": ctx.primary,
            "candidates": candidates,
            "image": Value::Null,
        })
    }

    fn try_validate(&self, ctx: &ValidationContext) -> Result<ValidationVerdict> {
        let reply = post_with_retry(self.transport.as_ref(), &self.endpoint, &Self::request_body(ctx))?;
        let wire: WireVerdict = match chat_content(&reply) {
            Some(content) => serde_json::from_str(content.trim()),
            None => serde_json::from_value(reply),
        }
        .map_err(|e| Error::Argument(format!("verdict schema violation: {e}")))?;
        Ok(ValidationVerdict::new(
            wire.primary_present,
            wire.constraint_satisfied,
            wire.rationale,
        ))
    }
}

impl Validator for RemoteValidator {
    fn validate(&mut self, ctx: &ValidationContext) -> ValidationVerdict {
        self.try_validate(ctx).unwrap_or_else(|e| {
            log::warn!("remote validation failed, treating as unconfirmed: {e}");
            ValidationVerdict::unconfirmed(e.to_string())
        })
    }
}

/// Keeps detections whose cell reaches the given percentile of `s_comb`
/// over observed cells, best first.
pub fn consensus_filter(
    dets: &[Detection],
    s_comb: &SimilarityMap,
    observed: &Mask,
    pct: f64,
) -> Vec<Detection> {
    let values: Vec<f64> = observed.iter_set().map(|c| s_comb.get(c)).collect();
    let Some(threshold) = percentile(&values, pct) else {
        return Vec::new();
    };
    let mut kept: Vec<Detection> = dets
        .iter()
        .filter(|d| s_comb.get(d.cell) >= threshold)
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        s_comb
            .get(b.cell)
            .total_cmp(&s_comb.get(a.cell))
            .then(a.cell.row_major().cmp(&b.cell.row_major()))
    });
    kept
}

/// True when the cell centres of `a` and `b` are within `radius_m`.
pub fn within(spec: &GridSpec, a: Cell, b: Cell, radius_m: f64) -> bool {
    a.dist(b) * spec.resolution <= radius_m + 1e-9
}

/// Path to the nearest navigable cell within `radius_m` of the detection.
pub fn approach_target(
    spec: &GridSpec,
    navigable: &Mask,
    robot: Cell,
    det: &Detection,
    radius_m: f64,
) -> Result<Path> {
    plan_to_any(spec, navigable, robot, |c| within(spec, c, det.cell, radius_m)).ok_or(Error::NoPath {
        start: robot,
        goal: det.cell,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "phase", content = "detection")]
pub enum SearchPhase {
    Exploring,
    Approaching(Detection),
    Validating(Detection),
    Succeeded,
    TerminatedNotFound,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchEvent {
    /// Goal selection found nothing left to explore.
    NoGoals,
    Detected(Detection),
    Arrived,
    NoPath,
    Verdict(ValidationVerdict),
}

/// The per-target search state machine.
#[derive(Debug, Clone)]
pub struct SearchMachine {
    phase: SearchPhase,
    blacklist: BTreeSet<Cell>,
    require_constraint: bool,
}

impl SearchMachine {
    /// With `require_constraint` unset, a verdict only needs the primary
    /// target to be present (the primary-only baseline).
    pub fn new(require_constraint: bool) -> Self {
        Self {
            phase: SearchPhase::Exploring,
            blacklist: BTreeSet::new(),
            require_constraint,
        }
    }

    pub fn phase(&self) -> &SearchPhase {
        &self.phase
    }

    pub fn is_blacklisted(&self, c: Cell) -> bool {
        self.blacklist.contains(&c)
    }

    pub fn blacklist(&self) -> &BTreeSet<Cell> {
        &self.blacklist
    }

    /// Applies one event. Returns `Found` when the search succeeds.
    pub fn step(&mut self, ev: SearchEvent) -> Result<Option<AgentAction>> {
        use SearchEvent as E;
        use SearchPhase as P;
        let phase = std::mem::replace(&mut self.phase, P::Exploring);
        let (next, action) = match (phase, ev) {
            (P::Exploring, E::NoGoals) => (P::TerminatedNotFound, None),
            (P::Exploring, E::Detected(d)) => {
                if self.blacklist.contains(&d.cell) {
                    (P::Exploring, None)
                } else {
                    (P::Approaching(d), None)
                }
            }
            (P::Approaching(d), E::Arrived) => (P::Validating(d), None),
            (P::Approaching(d), E::NoPath) => {
                self.blacklist.insert(d.cell);
                (P::Exploring, None)
            }
            (P::Validating(d), E::Verdict(v)) => {
                let accepted = if self.require_constraint {
                    v.constraint_satisfied
                } else {
                    v.primary_present
                };
                if accepted {
                    (P::Succeeded, Some(AgentAction::Found))
                } else {
                    self.blacklist.insert(d.cell);
                    (P::Exploring, None)
                }
            }
            (phase, ev) => {
                let msg = format!("illegal transition from {phase:?} on {ev:?}");
                self.phase = phase;
                return Err(Error::Invariant(msg));
            }
        };
        self.phase = next;
        Ok(action)
    }
}
