//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use divnav::belief_map::SimilarityMap;
use divnav::cli;
use divnav::config::Config;
use divnav::detection::{OracleValidator, ValidationVerdict};
use divnav::exploration::{detect_frontiers, ExplorationState};
use divnav::fusion::{combine, intersect, FusionConfig};
use divnav::grid::{Cell, GridSpec, Mask};
use divnav::metrics::{aggregate, EpisodeResult, MetricsReport, Outcome, ReportRow, TargetResult};
use divnav::pipeline::{Decision, DivNavAgent, Navigator, Observation, PipelineKind, TargetBrief};
use divnav::planner::plan_path;
use divnav::query_pipeline::{
    decompose, filter_proximity, Lexicon, ParseQuality, QueryDecomposition, RelationKind, SpatialRelation,
};
use divnav::sim::runner::Providers;
use divnav::sim::{episode_seed, generate, run_episode, run_with, AgentAction, Episode, GenConfig, Mode};
use divnav::stats::{fisher_less, sign_test};

type Outcome_ = std::result::Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn deadline(start: Instant, limit: Duration, what: &str) -> std::result::Result<(), String> {
    let t = start.elapsed();
    check(t < limit, || format!("{what} took {t:.1?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- 1

fn criterion_fusion() -> Outcome_ {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let alphas = [0.0, 0.25, 0.8, 1.0];
    let stacks = 1000;
    for s in 0..stacks {
        let w = rng.random_range(1..=32);
        let h = rng.random_range(1..=32);
        let k = rng.random_range(1..=6);
        let spec = GridSpec::new(0.25, w, h).unwrap();
        let raw: Vec<Vec<f64>> = (0..k).map(|_| (0..w * h).map(|_| rng.random::<f64>()).collect()).collect();
        let maps: Vec<SimilarityMap> = raw.iter().map(|v| SimilarityMap::new(spec, v.clone()).unwrap()).collect();

        let s_int = intersect(&maps).unwrap();
        for i in 0..w * h {
            let lo = raw.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
            check((s_int.scores()[i] - lo).abs() <= 1e-12, || format!("stack {s}: min oracle at {i}"))?;
        }
        let mut shuffled = maps.clone();
        shuffled.shuffle(&mut rng);
        for &a in &alphas {
            let cfg = FusionConfig::new(a).unwrap();
            let out = combine(&maps, cfg).unwrap();
            for i in 0..w * h {
                let lo = raw.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
                let hi = raw.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max);
                let v = out.scores()[i];
                check(lo <= v && v <= hi, || format!("stack {s} alpha {a}: {v} outside [{lo}, {hi}]"))?;
                let want = a * lo + (1.0 - a) * hi;
                check((v - want).abs() <= 1e-12, || format!("stack {s} alpha {a}: {v} != {want}"))?;
            }
            check(combine(&shuffled, cfg).unwrap() == out, || format!("stack {s}: order changed the result"))?;
            let single = combine(&maps[..1], cfg).unwrap();
            check(single == maps[0], || format!("stack {s}: single map not returned unchanged"))?;
        }
    }
    deadline(start, Duration::from_secs(10), "fusion suite")?;
    Ok(format!("{stacks} stacks x 4 alphas, {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- 2

/// Plain Dijkstra over an 8-connected grid with straight cost 1 and
/// diagonal cost sqrt(2).
fn dijkstra(spec: &GridSpec, nav: &Mask, start: Cell, goal: Cell) -> Option<f64> {
    let n = spec.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[spec.index(start)] = 0.0;
    loop {
        let mut best = None;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && best.is_none_or(|b: usize| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let u = best?;
        if u == spec.index(goal) {
            return Some(dist[u]);
        }
        done[u] = true;
        let c = spec.cell_at(u);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (col, row) = (c.col as isize + dc, c.row as isize + dr);
                if col < 0 || row < 0 || col >= spec.width as isize || row >= spec.height as isize {
                    continue;
                }
                let v = Cell::new(col as usize, row as usize);
                if !nav.get(v) {
                    continue;
                }
                let w = if dr != 0 && dc != 0 { 2f64.sqrt() } else { 1.0 };
                let vi = spec.index(v);
                if dist[u] + w < dist[vi] {
                    dist[vi] = dist[u] + w;
                }
            }
        }
    }
}

fn criterion_planner() -> Outcome_ {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = GridSpec::new(0.25, 32, 32).unwrap();
    let (mut solved, mut unreachable) = (0, 0);
    for g in 0..50 {
        let density = rng.random_range(0.1..0.4);
        let nav = Mask::from_fn(&spec, |_| rng.random::<f64>() >= density);
        let free: Vec<Cell> = nav.iter_set().collect();
        let a = free[rng.random_range(0..free.len())];
        let b = free[rng.random_range(0..free.len())];
        let oracle = dijkstra(&spec, &nav, a, b);
        match (plan_path(&spec, &nav, a, b, 0), oracle) {
            (Ok(p), Some(d)) => {
                check((p.cost - d).abs() <= 1e-9, || format!("grid {g}: A* {} vs Dijkstra {d}", p.cost))?;
                check(p.cells.first() == Some(&a) && p.goal() == b, || format!("grid {g}: wrong endpoints"))?;
                check(p.cells.iter().all(|&c| nav.get(c)), || format!("grid {g}: path crosses an obstacle"))?;
                let mut len = 0.0;
                for w in p.cells.windows(2) {
                    let (dc, dr) = (w[0].col.abs_diff(w[1].col), w[0].row.abs_diff(w[1].row));
                    check(dc <= 1 && dr <= 1 && dc + dr > 0, || format!("grid {g}: non-adjacent steps"))?;
                    len += w[0].dist(w[1]);
                }
                check((len - p.cost).abs() <= 1e-9, || format!("grid {g}: cost does not match the cells"))?;
                solved += 1;
            }
            (Err(_), None) => unreachable += 1,
            (p, d) => return Err(format!("grid {g}: planner {:?} but oracle {d:?}", p.map(|p| p.cost))),
        }
    }
    deadline(start, Duration::from_secs(10), "planner suite")?;
    Ok(format!("50 grids ({solved} solved, {unreachable} unreachable), {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- 3

/// Wraps the agent and audits its exploration state after every decision.
struct Auditor {
    agent: DivNavAgent,
    steps: usize,
    frontiers: usize,
    failure: Option<String>,
}

impl Auditor {
    fn audit(&mut self) {
        if self.failure.is_some() {
            return;
        }
        if let Err(e) = audit_state(self.agent.state(), &self.agent) {
            self.failure = Some(format!("step {}: {e}", self.steps));
        }
    }
}

fn audit_state(st: &ExplorationState, agent: &DivNavAgent) -> std::result::Result<usize, String> {
    let spec = st.spec;
    check(st.explored.is_subset(&st.observed), || "E is not inside O".into())?;
    check(st.searched.is_subset(&st.explored), || "C is not inside E".into())?;
    let in_oe = |c: Cell| st.observed.get(c) && !st.explored.get(c);
    let touches = |c: Cell, m: &Mask| spec.neighbors8(c).any(|n| m.get(n));
    let expected: BTreeSet<Cell> = spec
        .cells()
        .filter(|&c| in_oe(c) && touches(c, &st.explored) && (st.navigable.get(c) || touches(c, &st.navigable)))
        .collect();
    let frontiers = detect_frontiers(st);
    let mut got = BTreeSet::new();
    for f in &frontiers {
        for &c in &f.cells {
            check(in_oe(c), || format!("frontier cell {c:?} outside O minus E"))?;
            check(touches(c, &st.explored), || format!("frontier cell {c:?} not adjacent to E"))?;
            got.insert(c);
        }
    }
    check(got == expected, || "frontier cells differ from the boundary oracle".into())?;

    let guidance = agent.guidance().map_err(|e| e.to_string())?;
    let scored = divnav::exploration::scored_frontiers(st, &guidance, Default::default());
    for f in &scored {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<Cell> = f.cells.iter().copied().filter(|&c| in_oe(c)).collect();
        seen.extend(queue.iter().copied());
        let mut best = 0.0f64;
        while let Some(c) = queue.pop_front() {
            best = best.max(guidance.get(c));
            for n in spec.neighbors8(c) {
                if in_oe(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        check((f.score - best).abs() <= 1e-12, || format!("frontier score {} vs flood oracle {best}", f.score))?;
    }
    Ok(frontiers.len())
}

impl Navigator for Auditor {
    fn begin_target(&mut self, brief: &TargetBrief) -> divnav::Result<()> {
        self.agent.begin_target(brief)?;
        self.audit();
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> divnav::Result<Decision> {
        let d = self.agent.act(obs)?;
        self.steps += 1;
        self.audit();
        self.frontiers += detect_frontiers(self.agent.state()).len();
        Ok(d)
    }

    fn on_verdict(&mut self, v: ValidationVerdict) -> divnav::Result<()> {
        self.agent.on_verdict(v)
    }
}

fn criterion_exploration() -> Outcome_ {
    let start = Instant::now();
    let mut cfg = Config::default();
    cfg.step_budget = 300;
    let mut total = 0;
    let mut frontiers = 0;
    for s in 0..20u64 {
        let (_, ep) = generate(1000 + s, &GenConfig::default()).unwrap();
        let seed = episode_seed(3, &ep.id);
        let mut p = Providers::build(&cfg, &ep, seed).unwrap();
        let agent = DivNavAgent::new(cfg.clone(), PipelineKind::DivNav, ep.world.spec, p.embedder.clone(), p.decomposer.clone())
            .unwrap();
        let mut aud = Auditor {
            agent,
            steps: 0,
            frontiers: 0,
            failure: None,
        };
        let r = run_with(&ep, &cfg, &mut aud, p.validator.as_mut(), seed, &mut |_| {});
        check(r.error.is_none(), || format!("{}: {:?}", ep.id, r.error))?;
        if let Some(f) = aud.failure {
            return Err(format!("{}: {f}", ep.id));
        }
        total += aud.steps;
        frontiers += aud.frontiers;
    }
    check(frontiers > 0, || "no frontier was ever audited".into())?;
    deadline(start, Duration::from_secs(30), "exploration suite")?;
    Ok(format!("20 episodes, {total} audited steps, {frontiers} frontiers, {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- 4

#[derive(Deserialize)]
struct CorpusEntry {
    text: String,
    primary: String,
    q: Vec<String>,
    excluded: Vec<String>,
    #[serde(default)]
    inferred: Vec<String>,
    #[serde(default)]
    implicit: Vec<String>,
}

fn random_decomposition(rng: &mut ChaCha8Rng) -> QueryDecomposition {
    let pool = ["mug", "table", "kitchen", "sofa", "lamp", "shelf", "bathroom", "desk"];
    let primary = pool[rng.random_range(0..pool.len())];
    let mut d = QueryDecomposition::primary_only("fuzz", primary);
    for name in pool.iter().filter(|&&t| t != primary) {
        if rng.random_bool(0.6) {
            let group = match rng.random_range(0..3) {
                0 => &mut d.explicit_targets,
                1 => &mut d.inferred_targets,
                _ => &mut d.implicit_targets,
            };
            group.push(name.to_string());
            for _ in 0..rng.random_range(0..3) {
                let kind = RelationKind::ALL[rng.random_range(0..RelationKind::ALL.len())];
                d.relations.push(SpatialRelation::new(kind, name, primary));
            }
        }
    }
    // Junk in the query set must not survive filtering.
    d.proximity_set.push("stale".into());
    d
}

fn criterion_decomposition() -> Outcome_ {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/decomposition_corpus.json");
    let corpus: Vec<CorpusEntry> = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    check(corpus.len() == 40, || format!("corpus has {} entries", corpus.len()))?;
    let lex = Lexicon::default();
    for e in &corpus {
        let d = decompose(&e.text, &lex);
        d.validate().map_err(|err| format!("{:?}: {err}", e.text))?;
        check(d.primary == e.primary, || format!("{:?}: primary {:?}, want {:?}", e.text, d.primary, e.primary))?;
        check(d.proximity_set == e.q, || format!("{:?}: Q {:?}, want {:?}", e.text, d.proximity_set, e.q))?;
        check(d.parse_quality != ParseQuality::Degraded, || format!("{:?}: degraded parse", e.text))?;
        for x in &e.excluded {
            check(!d.proximity_set.contains(x), || format!("{:?}: {x:?} leaked into Q", e.text))?;
        }
        for x in &e.inferred {
            check(d.inferred_targets.contains(x), || format!("{:?}: {x:?} not inferred", e.text))?;
        }
        for x in &e.implicit {
            check(d.implicit_targets.contains(x), || format!("{:?}: {x:?} not implied", e.text))?;
        }
        // Negated and distant targets never join Q.
        for r in &d.relations {
            if matches!(r.kind, RelationKind::NotIn | RelationKind::FarFrom) {
                check(!d.proximity_set.contains(&r.subject), || format!("{:?}: {:?} kept", e.text, r.subject))?;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fuzz = 2000;
    for i in 0..fuzz {
        let d = random_decomposition(&mut rng);
        let once = filter_proximity(d.clone());
        let twice = filter_proximity(once.clone());
        check(once == twice, || format!("fuzz {i}: filter is not idempotent"))?;
        check(once.proximity_set.first() == Some(&once.primary), || format!("fuzz {i}: primary dropped"))?;
        once.validate().map_err(|e| format!("fuzz {i}: {e}"))?;
        for t in &once.proximity_set[1..] {
            let all_prox = d.relations.iter().filter(|r| &r.subject == t).all(|r| r.kind.is_proximity());
            check(all_prox, || format!("fuzz {i}: {t:?} kept despite a non-proximity relation"))?;
        }
    }
    Ok(format!("{} corpus queries, {fuzz} fuzzed relation tables", corpus.len()))
}

// ---------------------------------------------------------------- 5 and 8

fn suite_episodes(mode: Mode) -> Vec<Episode> {
    (0..100u64)
        .map(|s| {
            let (_, mut ep) = generate(s, &GenConfig::default()).unwrap();
            ep.mode = mode;
            ep
        })
        .collect()
}

fn run_suite(eps: &[Episode], cfg: &Config, kind: PipelineKind, root: u64) -> Vec<EpisodeResult> {
    divnav::batch::run_batch(eps, cfg, kind, root, 1).unwrap()
}

fn criterion_fp_reduction() -> Outcome_ {
    let start = Instant::now();
    let eps = suite_episodes(Mode::Multion);
    for e in &eps {
        let decoys = e.world.objects.iter().filter(|o| o.relations.iter().any(|r| !r.kind.is_proximity())).count();
        check(decoys >= 2 * e.targets.len(), || format!("{}: only {decoys} decoys", e.id))?;
    }
    let mut lines = Vec::new();
    let mut noisy = Config::default();
    noisy.noise.eps_fn = 0.1;
    noisy.noise.eps_fp = 0.1;
    noisy.noise.miss_rate = 0.1;
    for (name, cfg) in [("zero-noise", Config::default()), ("noisy", noisy)] {
        let div = aggregate(&run_suite(&eps, &cfg, PipelineKind::DivNav, 5)).unwrap();
        let base = aggregate(&run_suite(&eps, &cfg, PipelineKind::Baseline, 5)).unwrap();
        check(div.aborted_episodes == 0 && base.aborted_episodes == 0, || format!("{name}: aborted episodes"))?;
        let (a, na, b, nb) = (div.fp.numerator, div.fp.denominator, base.fp.numerator, base.fp.denominator);
        let p = fisher_less(a, na, b, nb);
        lines.push(format!(
            "{name}: FP {a}/{na}={:.3} vs baseline {b}/{nb}={:.3}, Fisher p={p:.2e}",
            div.fp.value, base.fp.value
        ));
        check(p < 0.05, || format!("{name}: Fisher p = {p}"))?;
        check(div.fp.value <= 0.5 * base.fp.value, || {
            format!("{name}: FP {} exceeds half of baseline {}", div.fp.value, base.fp.value)
        })?;
        if name == "zero-noise" {
            check(a == 0, || format!("zero-noise validator still produced {a} false positives"))?;
        }
    }
    deadline(start, Duration::from_secs(300), "FP suite")?;
    Ok(format!("{}; {:.1?}", lines.join("; "), start.elapsed()))
}

fn criterion_noise_sweep() -> Outcome_ {
    let start = Instant::now();
    let eps = suite_episodes(Mode::Realworld);
    let levels = [0.0, 0.2, 0.5];
    let mut per_level: Vec<Vec<EpisodeResult>> = Vec::new();
    for &e in &levels {
        let mut cfg = Config::default();
        cfg.noise.eps_fn = e;
        per_level.push(run_suite(&eps, &cfg, PipelineKind::DivNav, 8));
    }
    let found: Vec<usize> = per_level.iter().map(|rs| rs.iter().map(|r| r.found()).sum()).collect();
    let tnf: Vec<usize> =
        per_level.iter().map(|rs| rs.iter().map(|r| r.count(Outcome::TerminatedNotFound)).sum()).collect();
    check(found.windows(2).all(|w| w[0] >= w[1]), || format!("found counts {found:?} not non-increasing"))?;
    check(tnf.windows(2).all(|w| w[0] <= w[1]), || format!("TNF counts {tnf:?} not non-decreasing"))?;
    let mut msgs = vec![format!("found {found:?}, TNF {tnf:?}")];
    for (lo, hi) in [(0, 1), (1, 2), (0, 2)] {
        let (mut down, mut up) = (0, 0);
        let (mut more, mut less) = (0, 0);
        for (a, b) in per_level[lo].iter().zip(&per_level[hi]) {
            match a.found().cmp(&b.found()) {
                std::cmp::Ordering::Greater => down += 1,
                std::cmp::Ordering::Less => up += 1,
                _ => {}
            }
            let (ta, tb) = (a.count(Outcome::TerminatedNotFound), b.count(Outcome::TerminatedNotFound));
            match tb.cmp(&ta) {
                std::cmp::Ordering::Greater => more += 1,
                std::cmp::Ordering::Less => less += 1,
                _ => {}
            }
        }
        let pf = sign_test(down, up);
        let pt = sign_test(more, less);
        msgs.push(format!(
            "eps {}->{}: found sign {down}:{up} p={pf:.1e}, TNF sign {more}:{less} p={pt:.1e}",
            levels[lo], levels[hi]
        ));
        check(pf < 0.05 && pt < 0.05, || msgs.join("; "))?;
    }
    Ok(format!("{}; {:.1?}", msgs.join("; "), start.elapsed()))
}

// ---------------------------------------------------------------- 6

fn fixture_episode(id: &str, mode: Mode, outcomes: &[Outcome]) -> EpisodeResult {
    EpisodeResult {
        episode_id: id.into(),
        mode,
        pipeline: "divnav".into(),
        seed: 0,
        config_fingerprint: "fixture".into(),
        total_targets: 3,
        outcomes: outcomes
            .iter()
            .enumerate()
            .map(|(i, &o)| TargetResult {
                index: i,
                query: format!("target {i}"),
                goal_id: format!("g{i}"),
                outcome: o,
                steps: 10 * (i + 1),
                path_length_m: 1.5,
                final_cell: Cell::new(i, i),
                validations: 1,
            })
            .collect(),
        error: None,
    }
}

/// Calls FOUND on the spot.
struct Hasty;

impl Navigator for Hasty {
    fn begin_target(&mut self, _: &TargetBrief) -> divnav::Result<()> {
        Ok(())
    }
    fn act(&mut self, _: &Observation) -> divnav::Result<Decision> {
        Ok(Decision::Act(AgentAction::Found))
    }
    fn on_verdict(&mut self, _: ValidationVerdict) -> divnav::Result<()> {
        Ok(())
    }
}

fn criterion_protocol() -> Outcome_ {
    use Outcome::*;
    let fixture = vec![
        fixture_episode("e1", Mode::Multion, &[Found, Found, Found]),
        fixture_episode("e2", Mode::Multion, &[Found, FalsePositive]),
        fixture_episode("e3", Mode::Multion, &[TerminatedNotFound]),
        fixture_episode("e4", Mode::Multion, &[Found, Found, BudgetExhausted]),
        fixture_episode("e5", Mode::Realworld, &[FalsePositive, Found, TerminatedNotFound]),
        fixture_episode("e6", Mode::Realworld, &[Found, Found, Found]),
    ];
    for e in &fixture {
        e.validate().map_err(|err| err.to_string())?;
    }
    // By hand: 10 found of 18 targets, 15 attempted, 2 complete episodes,
    // per-episode fractions 1, 1/3, 0, 2/3, 1/3, 1.
    let r = aggregate(&fixture).unwrap();
    let counts = |x: &divnav::metrics::Rate| (x.numerator, x.denominator);
    check(counts(&r.sr) == (2, 6) && r.sr.value == 2.0 / 6.0, || format!("SR {:?}", r.sr))?;
    check(counts(&r.pr) == (10, 18), || format!("Pr counts {:?}", r.pr))?;
    let pr = (1.0 + 1.0 / 3.0 + 0.0 + 2.0 / 3.0 + 1.0 / 3.0 + 1.0) / 6.0;
    check((r.pr.value - pr).abs() < 1e-15, || format!("Pr {} vs {pr}", r.pr.value))?;
    check(counts(&r.srat) == (10, 15) && r.srat.value == 10.0 / 15.0, || format!("SRAT {:?}", r.srat))?;
    check(counts(&r.fp) == (2, 15) && r.fp.value == 2.0 / 15.0, || format!("FP {:?}", r.fp))?;
    check(counts(&r.tnf) == (2, 15) && r.tnf.value == 2.0 / 15.0, || format!("TNF {:?}", r.tnf))?;
    check(r.budget_exhausted == 1 && r.aborted_episodes == 0, || "budget/aborted counts".into())?;
    let mut rev = fixture.clone();
    rev.reverse();
    check(aggregate(&rev).unwrap() == r, || "aggregate depends on episode order".into())?;
    let j = serde_json::to_string(&r).unwrap();
    check(serde_json::from_str::<MetricsReport>(&j).unwrap() == r, || "report JSON round trip".into())?;
    for e in &fixture {
        let j = serde_json::to_string(e).unwrap();
        check(&serde_json::from_str::<EpisodeResult>(&j).unwrap() == e, || "episode JSON round trip".into())?;
    }
    check(fixture_episode("x", Mode::Multion, &[FalsePositive, Found]).validate().is_err(), || {
        "multion continuation not rejected".into()
    })?;

    // Published headline row as a format fixture.
    let line = "0.30    0.14    0.04    0.44    0.25";
    let row = ReportRow::parse(line).unwrap();
    check(row == ReportRow { srat: 0.30, pr: 0.14, sr: 0.04, fp: 0.44, tnf: 0.25 }, || format!("{row:?}"))?;
    check(row.format() == line, || format!("{:?} != {line:?}", row.format()))?;
    let j = serde_json::to_string(&row).unwrap();
    check(serde_json::from_str::<ReportRow>(&j).unwrap() == row, || "row JSON round trip".into())?;

    // A wrong FOUND ends a multion episode; realworld episodes go on.
    let cfg = Config::default();
    let mut ended = 0;
    for s in 0..10u64 {
        let (_, ep) = generate(s, &GenConfig::default()).unwrap();
        let mut v = OracleValidator::new(0.0, 0.0, s).unwrap();
        let r = run_with(&ep, &cfg, &mut Hasty, &mut v, s, &mut |_| {});
        r.validate().map_err(|e| e.to_string())?;
        if r.outcomes[0].outcome == FalsePositive {
            check(r.outcomes.len() == 1, || format!("{}: continued after a wrong FOUND", ep.id))?;
            ended += 1;
            let mut rw = ep.clone();
            rw.mode = Mode::Realworld;
            let r = run_with(&rw, &cfg, &mut Hasty, &mut v, s, &mut |_| {});
            check(r.outcomes.len() == 3, || format!("{}: realworld stopped early", ep.id))?;
        }
    }
    check(ended > 0, || "no wrong FOUND was exercised".into())?;
    for s in 0..10u64 {
        let (_, ep) = generate(s, &GenConfig::default()).unwrap();
        let r = run_episode(&ep, &cfg, PipelineKind::Baseline, s).unwrap();
        r.validate().map_err(|e| e.to_string())?;
    }
    Ok(format!("6-episode fixture, headline row, {ended} early terminations"))
}

// ---------------------------------------------------------------- 7

fn read_tree(dir: &Path, skip: &[&str]) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !skip.iter().any(|s| p.ends_with(s)) {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_determinism() -> Outcome_ {
    let tmp = tempfile::tempdir().unwrap();
    let worlds = tmp.path().join("worlds");
    cli::cmd_generate(6, 40, 2, Mode::Multion, &worlds).map_err(|e| e.to_string())?;
    let cfg = Config::default();
    let ep = worlds.join("episode_0040.json");
    let mut trees = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        cli::cmd_run(&ep, &cfg, None, 99, PipelineKind::DivNav, &out).map_err(|e| e.to_string())?;
        trees.push(read_tree(&out, &["meta.json"]));
    }
    check(trees[0].len() >= 7, || format!("only {} artifacts written", trees[0].len()))?;
    check(trees[0] == trees[1], || "two runs with one seed differ".into())?;

    let pattern = format!("{}/episode_*.json", worlds.display());
    let mut batches = Vec::new();
    for jobs in [1, 4] {
        let out = tmp.path().join(format!("batch{jobs}"));
        cli::cmd_batch(&pattern, jobs, &cfg, None, 99, PipelineKind::DivNav, &out).map_err(|e| e.to_string())?;
        batches.push(read_tree(&out, &[]));
    }
    check(batches[0] == batches[1], || "1-worker and 4-worker batches differ".into())?;
    let single = std::fs::read(tmp.path().join("run0/result.json")).unwrap();
    let from_batch = std::fs::read(tmp.path().join("batch4/episodes/ep0040.json")).unwrap();
    check(single == from_batch, || "run and batch disagree on the same episode".into())?;
    Ok(format!("{} run artifacts and {} batch artifacts byte-identical", trees[0].len(), batches[0].len()))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome_); 8] = [
        ("fusion algebra", criterion_fusion),
        ("planner oracle equivalence", criterion_planner),
        ("exploration-state invariants", criterion_exploration),
        ("decomposition corpus", criterion_decomposition),
        ("false-positive reduction", criterion_fp_reduction),
        ("protocol conformance", criterion_protocol),
        ("determinism", criterion_determinism),
        ("validator-noise degradation", criterion_noise_sweep),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| label.contains(x.as_str())) {
            continue;
        }
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match r {
            Ok(detail) => println!("{label}: PASS - {detail}"),
            Err(why) => {
                failed += 1;
                println!("{label}: FAIL - {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
