//! A deterministic synthetic DBMS: workload generator, planner, and executor.
//!
//! Real engines are slow, stateful, and noisy; everything here is a pure
//! function of a seed, so searches can be verified against brute-force
//! oracles down to the last bit. The moving parts:
//!
//! * A workload is a set of templates (join tree over named relations, cost
//!   multipliers, operator preference orders) plus queries drawn from them
//!   with per-query scale and selectivity knobs.
//! * Planning is preference-driven: each join and scan slot takes its
//!   highest-preference operator that the hint set leaves enabled. Hints
//!   that only disable unused operators therefore do not change the plan,
//!   which is what makes plan caching worthwhile.
//! * Latency is a sum of per-node work terms (parametric in the true
//!   cardinalities) times the query's scale. Preference orders are derived
//!   from true costs for well-behaved templates; a tunable share of
//!   templates is deliberately mis-calibrated so that their planner picks an
//!   expensive operator at a hot slot, giving hint steering something real
//!   to win.
//! * Some templates are derived as sub-joins of a mis-calibrated donor
//!   template, sharing its relations and economics. Their plan texts are
//!   much shorter than the donor's but token-wise similar, which separates
//!   retrieval metrics that respect content from ones dominated by text
//!   length.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{EngineError, Execution, QueryEngine};
use crate::hints::HintSet;
use crate::plan::{fingerprint, ExecutionPlan, Operator, PlanFingerprint, PlanNode};

const RELATION_POOL: [&str; 24] = [
    "orders",
    "customers",
    "lineitems",
    "products",
    "suppliers",
    "shipments",
    "payments",
    "invoices",
    "employees",
    "departments",
    "regions",
    "warehouses",
    "parts",
    "stores",
    "sales",
    "returns",
    "inventory",
    "promotions",
    "web_clicks",
    "sessions",
    "accounts",
    "transactions",
    "branches",
    "tickets",
];

/// Milliseconds per unit of modelled work.
const MS_PER_WORK: f64 = 1e-3;

/// One relation as a template sees it: true row count and the true cost
/// multipliers of the four scan operators, plus the planner's preference
/// order over them.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationSpec {
    pub name: String,
    pub base_rows: f64,
    /// True cost multipliers, indexed like [`Operator::SCANS`].
    pub scan_multipliers: [f64; 4],
    /// Planner preference, best first. A permutation of the scan operators.
    pub scan_affinity: [Operator; 4],
}

/// Shape of a template's join computation.
#[derive(Clone, Debug, PartialEq)]
pub enum JoinTree {
    Leaf { relation: usize },
    Join { slot: usize, left: Box<JoinTree>, right: Box<JoinTree> },
}

impl JoinTree {
    fn leaf_count(&self) -> usize {
        match self {
            JoinTree::Leaf { .. } => 1,
            JoinTree::Join { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn visit_relations(&self, out: &mut Vec<usize>) {
        match self {
            JoinTree::Leaf { relation } => out.push(*relation),
            JoinTree::Join { left, right, .. } => {
                left.visit_relations(out);
                right.visit_relations(out);
            }
        }
    }

    fn visit_slots(&self, out: &mut Vec<usize>) {
        if let JoinTree::Join { slot, left, right } = self {
            out.push(*slot);
            left.visit_slots(out);
            right.visit_slots(out);
        }
    }
}

/// One join slot: output selectivity and per-operator true cost
/// multipliers, plus the planner's preference order.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinSlotSpec {
    pub selectivity: f64,
    /// True cost multipliers, indexed like [`Operator::JOINS`].
    pub op_multipliers: [f64; 3],
    /// Planner preference, best first. A permutation of the join operators.
    pub affinity: [Operator; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryTemplate {
    pub template_id: usize,
    pub relations: Vec<RelationSpec>,
    pub tree: JoinTree,
    /// One spec per join slot; slot ids index this vector.
    pub join_slots: Vec<JoinSlotSpec>,
    /// Optional pass-through operator over the root (Aggregate or Sort).
    pub root_wrap: Option<Operator>,
}

impl QueryTemplate {
    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// Structural validity: the tree covers every relation exactly once,
    /// slot ids are exactly 0..n_joins, preference orders are permutations,
    /// and all numbers are positive and finite.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let fail = |detail: String| {
            Err(WorkloadError::InvalidTemplate {
                template_id: self.template_id,
                detail,
            })
        };
        if self.relations.len() < 2 {
            return fail("a template needs at least two relations".to_string());
        }
        let mut rels = Vec::new();
        self.tree.visit_relations(&mut rels);
        let mut sorted = rels.clone();
        sorted.sort_unstable();
        if sorted != (0..self.relations.len()).collect::<Vec<usize>>() {
            return fail("join tree must reference each relation exactly once".to_string());
        }
        let mut slots = Vec::new();
        self.tree.visit_slots(&mut slots);
        let mut sorted_slots = slots.clone();
        sorted_slots.sort_unstable();
        if sorted_slots != (0..self.join_slots.len()).collect::<Vec<usize>>() {
            return fail("join slots must be numbered 0..joins and each used once".to_string());
        }
        if self.join_slots.len() + 1 != self.relations.len() {
            return fail("a binary join tree has exactly relations-1 join slots".to_string());
        }
        for rel in &self.relations {
            if rel.name.is_empty() || !rel.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return fail(format!("relation name {:?} is not a name token", rel.name));
            }
            if !(rel.base_rows.is_finite() && rel.base_rows >= 1.0) {
                return fail(format!("base_rows for {:?} must be at least 1", rel.name));
            }
            if rel.scan_multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return fail(format!("scan multipliers for {:?} must be positive", rel.name));
            }
            let mut affinity = rel.scan_affinity;
            affinity.sort_unstable();
            if affinity != Operator::SCANS {
                return fail(format!("scan preference for {:?} must permute the scan operators", rel.name));
            }
        }
        for (slot, spec) in self.join_slots.iter().enumerate() {
            if !(spec.selectivity.is_finite() && spec.selectivity > 0.0) {
                return fail(format!("join slot {slot} selectivity must be positive"));
            }
            if spec.op_multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return fail(format!("join slot {slot} multipliers must be positive"));
            }
            let mut affinity = spec.affinity;
            affinity.sort_unstable();
            if affinity != Operator::JOINS {
                return fail(format!("join slot {slot} preference must permute the join operators"));
            }
        }
        if let Some(op) = self.root_wrap {
            if op.is_join() || op.is_scan() || op == Operator::Materialize {
                return fail(format!("root wrap must be Aggregate or Sort, got {op}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticQuery {
    pub query_id: String,
    pub template_id: usize,
    /// Multiplies the whole latency; log-uniform across the workload.
    pub scale: f64,
    /// Per-relation row-count factor, aligned with the template's relations.
    pub selectivity: Vec<f64>,
}

/// Knobs of the workload generator. The defaults are the shipped
/// calibration; seeds select concrete workloads within it.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadParams {
    pub template_count: usize,
    pub query_count: usize,
    /// How many templates are derived as sub-joins of a donor template.
    pub derived_template_count: usize,
    /// Desired share of queries whose default plan is already optimal.
    pub default_optimal_target: f64,
    /// Half-width (in log10) of the per-query selectivity jitter.
    pub selectivity_spread: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Standard deviation of multiplicative log-normal latency noise.
    /// Zero keeps every latency an exact function of (query, plan).
    pub noise_sigma: f64,
}

impl Default for WorkloadParams {
    fn default() -> WorkloadParams {
        WorkloadParams {
            template_count: 16,
            query_count: 3133,
            derived_template_count: 4,
            default_optimal_target: 0.49,
            selectivity_spread: 0.15,
            scale_min: 0.2,
            scale_max: 20.0,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadError {
    InvalidParams { detail: String },
    InvalidTemplate { template_id: usize, detail: String },
}

impl fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadError::InvalidParams { detail } => write!(f, "invalid workload parameters: {detail}"),
            WorkloadError::InvalidTemplate { template_id, detail } => {
                write!(f, "invalid template {template_id}: {detail}")
            }
        }
    }
}

impl core::error::Error for WorkloadError {}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorkload {
    pub seed: u64,
    pub params: WorkloadParams,
    pub templates: Vec<QueryTemplate>,
    pub queries: Vec<SyntheticQuery>,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let (ln_lo, ln_hi) = (libm::log(lo), libm::log(hi));
    libm::exp(rng.gen_range(ln_lo..ln_hi))
}

fn scan_base_work(op: Operator, rows: f64) -> f64 {
    match op {
        Operator::SeqScan => rows,
        Operator::IndexScan => 3.0 * libm::pow(rows, 0.8),
        Operator::IndexOnlyScan => 2.2 * libm::pow(rows, 0.8),
        Operator::BitmapScan => 1.6 * libm::pow(rows, 0.9),
        _ => unreachable!("not a scan operator"),
    }
}

fn join_base_work(op: Operator, left: f64, right: f64) -> f64 {
    match op {
        Operator::NestLoop => 5e-4 * left * right + (left + right),
        Operator::HashJoin => 1.6 * (left + right),
        Operator::MergeJoin => {
            let smaller = if left < right { left } else { right };
            1.1 * (left + right) * (1.0 + 0.08 * libm::log(1.0 + smaller))
        }
        _ => unreachable!("not a join operator"),
    }
}

fn pass_through_work(op: Operator, rows: f64) -> f64 {
    match op {
        Operator::Aggregate => 0.5 * rows,
        Operator::Sort => 0.9 * rows * (1.0 + 0.07 * libm::log(1.0 + rows)),
        Operator::Materialize => 0.25 * rows,
        _ => unreachable!("not a pass-through operator"),
    }
}

fn scan_cost(rel: &RelationSpec, op: Operator, rows: f64) -> f64 {
    let idx = Operator::SCANS.iter().position(|o| *o == op).expect("scan operator");
    rel.scan_multipliers[idx] * scan_base_work(op, rows)
}

fn join_cost(spec: &JoinSlotSpec, op: Operator, left: f64, right: f64) -> f64 {
    let idx = Operator::JOINS.iter().position(|o| *o == op).expect("join operator");
    spec.op_multipliers[idx] * join_base_work(op, left, right)
}

fn join_output_rows(spec: &JoinSlotSpec, left: f64, right: f64) -> f64 {
    let out = libm::sqrt(left * right) * spec.selectivity;
    if out < 1.0 {
        1.0
    } else {
        out
    }
}

/// A slot of a template, used while deciding preference orders.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Scan { relation: usize },
    Join { slot: usize },
}

/// Input cardinalities per slot under unit selectivity, plus the cost of
/// each slot's cheapest operator. This is the "typical" view preference
/// orders are derived from; per-query selectivities shift the real numbers.
struct TypicalView {
    /// (left rows, right rows) per join slot.
    join_inputs: Vec<(f64, f64)>,
    /// Best-operator cost per slot, scans first then joins.
    slot_costs: Vec<(Slot, f64)>,
}

fn typical_view(template: &QueryTemplate) -> TypicalView {
    fn walk(template: &QueryTemplate, tree: &JoinTree, inputs: &mut [(f64, f64)]) -> f64 {
        match tree {
            JoinTree::Leaf { relation } => template.relations[*relation].base_rows,
            JoinTree::Join { slot, left, right } => {
                let l = walk(template, left, inputs);
                let r = walk(template, right, inputs);
                inputs[*slot] = (l, r);
                join_output_rows(&template.join_slots[*slot], l, r)
            }
        }
    }
    let mut join_inputs = alloc::vec![(0.0, 0.0); template.join_slots.len()];
    walk(template, &template.tree, &mut join_inputs);
    let mut slot_costs = Vec::new();
    for (i, rel) in template.relations.iter().enumerate() {
        let best = Operator::SCANS
            .iter()
            .map(|&op| scan_cost(rel, op, rel.base_rows))
            .fold(f64::INFINITY, f64::min);
        slot_costs.push((Slot::Scan { relation: i }, best));
    }
    for (slot, spec) in template.join_slots.iter().enumerate() {
        let (l, r) = join_inputs[slot];
        let best = Operator::JOINS
            .iter()
            .map(|&op| join_cost(spec, op, l, r))
            .fold(f64::INFINITY, f64::min);
        slot_costs.push((Slot::Join { slot }, best));
    }
    TypicalView { join_inputs, slot_costs }
}

fn cost_order_scans(rel: &RelationSpec) -> [Operator; 4] {
    let mut ops = Operator::SCANS;
    ops.sort_by(|a, b| {
        scan_cost(rel, *a, rel.base_rows).total_cmp(&scan_cost(rel, *b, rel.base_rows))
    });
    ops
}

fn cost_order_joins(spec: &JoinSlotSpec, left: f64, right: f64) -> [Operator; 3] {
    let mut ops = Operator::JOINS;
    ops.sort_by(|a, b| join_cost(spec, *a, left, right).total_cmp(&join_cost(spec, *b, left, right)));
    ops
}

/// How much costlier the operator a mis-calibrated planner prefers may be,
/// relative to the slot's true best. The preferred range gives hint
/// steering solid wins without dwarfing everything else; the fallback range
/// is used when no operator lands in the preferred one.
const MISCALIBRATION_RANGE: (f64, f64) = (1.8, 6.0);
const MISCALIBRATION_FALLBACK: (f64, f64) = (1.3, 12.0);

/// Makes the planner of `template` prefer a genuinely expensive operator at
/// one hot slot. Returns the skewed slot and the operator it now wrongly
/// prefers, or `None` if no slot offered a suitable wrong choice. `allowed`
/// restricts the candidate slots (used when a donor's skew must live inside
/// the subtree it donates); `avoid` lists wrong operators already used by
/// other donors, shunned so cures stay distinct as long as alternatives
/// exist.
fn miscalibrate(
    template: &mut QueryTemplate,
    rng: &mut ChaCha8Rng,
    allowed: Option<&[Slot]>,
    avoid: &[Operator],
) -> Option<(Slot, Operator)> {
    let view = typical_view(template);
    let mut slots: Vec<(Slot, f64)> = view
        .slot_costs
        .iter()
        .filter(|(slot, _)| allowed.map_or(true, |a| a.contains(slot)))
        .copied()
        .collect();
    slots.sort_by(|a, b| b.1.total_cmp(&a.1));
    let wrong_ops = |slot: Slot, best_cost: f64, ranges: (f64, f64), avoid: &[Operator]| -> Vec<Operator> {
        match slot {
            Slot::Scan { relation } => {
                let rel = &template.relations[relation];
                Operator::SCANS
                    .iter()
                    .copied()
                    .filter(|&op| {
                        let ratio = scan_cost(rel, op, rel.base_rows) / best_cost;
                        !avoid.contains(&op) && ratio >= ranges.0 && ratio <= ranges.1
                    })
                    .collect()
            }
            Slot::Join { slot } => {
                let spec = &template.join_slots[slot];
                let (l, r) = view.join_inputs[slot];
                Operator::JOINS
                    .iter()
                    .copied()
                    .filter(|&op| {
                        let ratio = join_cost(spec, op, l, r) / best_cost;
                        !avoid.contains(&op) && ratio >= ranges.0 && ratio <= ranges.1
                    })
                    .collect()
            }
        }
    };
    let mut pick = None;
    'search: for shunned in [avoid, &[]] {
        for ranges in [MISCALIBRATION_RANGE, MISCALIBRATION_FALLBACK] {
            for &(slot, best_cost) in &slots {
                let wrong = wrong_ops(slot, best_cost, ranges, shunned);
                if !wrong.is_empty() {
                    pick = Some((slot, wrong[rng.gen_range(0..wrong.len())]));
                    break 'search;
                }
            }
        }
    }
    let (slot, op) = pick?;
    match slot {
        Slot::Scan { relation } => {
            let rel = &mut template.relations[relation];
            let mut order = cost_order_scans(rel);
            order.sort_by_key(|&o| if o == op { 0 } else { 1 });
            // Stable sort keeps the cost order behind the skewed pick.
            rel.scan_affinity = order;
        }
        Slot::Join { slot } => {
            let (l, r) = view.join_inputs[slot];
            let spec = &mut template.join_slots[slot];
            let mut order = cost_order_joins(spec, l, r);
            order.sort_by_key(|&o| if o == op { 0 } else { 1 });
            spec.affinity = order;
        }
    }
    Some((slot, op))
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 over the pair; cheap and well spread.
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn generate_base_template(template_id: usize, seed: u64) -> QueryTemplate {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x7e00 + template_id as u64));
    let relation_count = rng.gen_range(2..=8usize);
    let mut pool: Vec<usize> = (0..RELATION_POOL.len()).collect();
    pool.shuffle(&mut rng);
    // Scan economics are mostly a property of the template's schema, with a
    // light per-relation wobble. Keeping the cost order stable across a
    // template's relations is what collapses most hint sets onto few plans.
    let template_scan = [
        1.0,
        log_uniform(&mut rng, 0.4, 2.5),
        log_uniform(&mut rng, 0.4, 2.5),
        log_uniform(&mut rng, 0.4, 2.5),
    ];
    let mut relations = Vec::new();
    for &name_idx in pool.iter().take(relation_count) {
        let base_rows = log_uniform(&mut rng, 1e3, 1e6);
        let mut scan_multipliers = template_scan;
        for m in scan_multipliers.iter_mut().skip(1) {
            *m *= rng.gen_range(0.9..1.1);
        }
        relations.push(RelationSpec {
            name: RELATION_POOL[name_idx].to_string(),
            base_rows,
            scan_multipliers,
            scan_affinity: Operator::SCANS,
        });
    }

    // Random binary tree: repeatedly join two random members.
    let mut nodes: Vec<JoinTree> = (0..relation_count)
        .map(|relation| JoinTree::Leaf { relation })
        .collect();
    let mut join_slots = Vec::new();
    while nodes.len() > 1 {
        let i = rng.gen_range(0..nodes.len());
        let left = nodes.swap_remove(i);
        let j = rng.gen_range(0..nodes.len());
        let right = nodes.swap_remove(j);
        let slot = join_slots.len();
        join_slots.push(JoinSlotSpec {
            selectivity: log_uniform(&mut rng, 0.02, 2.0),
            op_multipliers: [
                log_uniform(&mut rng, 0.7, 1.4),
                log_uniform(&mut rng, 0.7, 1.4),
                log_uniform(&mut rng, 0.7, 1.4),
            ],
            affinity: Operator::JOINS,
        });
        nodes.push(JoinTree::Join {
            slot,
            left: Box::new(left),
            right: Box::new(right),
        });
    }
    let tree = nodes.pop().expect("at least one node");

    let root_wrap = match rng.gen_range(0..4u8) {
        0 => Some(Operator::Aggregate),
        1 => Some(Operator::Sort),
        _ => None,
    };

    let mut template = QueryTemplate {
        template_id,
        relations,
        tree,
        join_slots,
        root_wrap,
    };

    // Preference orders start honest: cheapest true cost first.
    let view = typical_view(&template);
    for i in 0..template.relations.len() {
        template.relations[i].scan_affinity = cost_order_scans(&template.relations[i]);
    }
    for slot in 0..template.join_slots.len() {
        let (l, r) = view.join_inputs[slot];
        template.join_slots[slot].affinity = cost_order_joins(&template.join_slots[slot], l, r);
    }
    template
}

/// All internal nodes of the tree with between 2 and `max_leaves` leaves.
fn proper_subtrees<'a>(tree: &'a JoinTree, max_leaves: usize, out: &mut Vec<&'a JoinTree>) {
    if let JoinTree::Join { left, right, .. } = tree {
        let leaves = tree.leaf_count();
        if leaves >= 2 && leaves <= max_leaves {
            out.push(tree);
        }
        proper_subtrees(left, max_leaves, out);
        proper_subtrees(right, max_leaves, out);
    }
}

/// Slots (scans and joins) appearing inside a subtree, donor numbering.
fn subtree_slots(tree: &JoinTree) -> Vec<Slot> {
    let mut rels = Vec::new();
    tree.visit_relations(&mut rels);
    let mut slots = Vec::new();
    tree.visit_slots(&mut slots);
    rels.into_iter()
        .map(|relation| Slot::Scan { relation })
        .chain(slots.into_iter().map(|slot| Slot::Join { slot }))
        .collect()
}

/// Copies `subtree` of `donor` into a standalone template, renumbering
/// relations and join slots while keeping names, multipliers, selectivities,
/// and preference orders (the donor's mis-calibration included).
fn derive_template(template_id: usize, donor: &QueryTemplate, subtree: &JoinTree) -> QueryTemplate {
    fn copy(
        donor: &QueryTemplate,
        tree: &JoinTree,
        relations: &mut Vec<RelationSpec>,
        join_slots: &mut Vec<JoinSlotSpec>,
    ) -> JoinTree {
        match tree {
            JoinTree::Leaf { relation } => {
                relations.push(donor.relations[*relation].clone());
                JoinTree::Leaf {
                    relation: relations.len() - 1,
                }
            }
            JoinTree::Join { slot, left, right } => {
                let left = copy(donor, left, relations, join_slots);
                let right = copy(donor, right, relations, join_slots);
                join_slots.push(donor.join_slots[*slot].clone());
                JoinTree::Join {
                    slot: join_slots.len() - 1,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
        }
    }
    let mut relations = Vec::new();
    let mut join_slots = Vec::new();
    let tree = copy(donor, subtree, &mut relations, &mut join_slots);
    QueryTemplate {
        template_id,
        relations,
        tree,
        join_slots,
        root_wrap: None,
    }
}

impl SyntheticWorkload {
    /// Builds the workload for `seed`: templates, per-template query counts,
    /// the mis-calibrated subset, and all query knobs.
    pub fn generate(seed: u64, params: WorkloadParams) -> Result<SyntheticWorkload, WorkloadError> {
        let invalid = |detail: &str| WorkloadError::InvalidParams {
            detail: detail.to_string(),
        };
        if params.template_count == 0 {
            return Err(invalid("template_count must be at least 1"));
        }
        if params.query_count < params.template_count {
            return Err(invalid("query_count must be at least template_count"));
        }
        if params.derived_template_count >= params.template_count {
            return Err(invalid("derived templates must leave at least one base template"));
        }
        if !(0.0..=1.0).contains(&params.default_optimal_target) {
            return Err(invalid("default_optimal_target must lie in [0, 1]"));
        }
        if !(params.selectivity_spread >= 0.0 && params.selectivity_spread.is_finite()) {
            return Err(invalid("selectivity_spread must be non-negative"));
        }
        if !(params.scale_min > 0.0 && params.scale_max >= params.scale_min) {
            return Err(invalid("scale range must be positive and ordered"));
        }
        if !(params.noise_sigma >= 0.0 && params.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma must be non-negative"));
        }

        let base_count = params.template_count - params.derived_template_count;
        let mut templates: Vec<QueryTemplate> = (0..base_count)
            .map(|id| generate_base_template(id, seed))
            .collect();

        // Per-template query counts: uneven by design. The first derived
        // template is populous enough to flood other templates' retrieval
        // neighborhoods; the rest get deliberately few queries so their own
        // neighborhoods must reach beyond their template.
        let mut count_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xc0));
        let mut counts = alloc::vec![0usize; params.template_count];
        let mut remaining = params.query_count;
        for id in base_count..params.template_count {
            // Leave room for one query per not-yet-counted template.
            let still_owed = base_count + (params.template_count - id - 1);
            let cap = remaining.saturating_sub(still_owed).max(1);
            let c = if id == base_count {
                count_rng.gen_range(48..=64usize).min(cap)
            } else {
                count_rng.gen_range(4..=6usize).min(cap)
            };
            counts[id] = c;
            remaining -= c;
        }
        let weights: Vec<f64> = (0..base_count).map(|_| count_rng.gen_range(0.4..2.0)).collect();
        let weight_sum: f64 = weights.iter().sum();
        let mut assigned = 0usize;
        for id in 0..base_count {
            let c = ((weights[id] / weight_sum) * remaining as f64) as usize;
            counts[id] = c.max(1);
            assigned += counts[id];
        }
        // Largest-remainder style fixup so counts sum exactly.
        let mut id = 0;
        while assigned < remaining {
            counts[id % base_count] += 1;
            assigned += 1;
            id += 1;
        }
        while assigned > remaining {
            let richest = (0..base_count).max_by_key(|&i| counts[i]).expect("base templates exist");
            counts[richest] -= 1;
            assigned -= 1;
        }

        // Choose which base templates get a mis-calibrated planner, aiming
        // the non-default-optimal share of queries at 1 - target. Derived
        // templates inherit their donor's skew, so they count toward it.
        let derived_queries: usize = counts[base_count..].iter().sum();
        let target_miscal = ((1.0 - params.default_optimal_target) * params.query_count as f64) as usize;
        let mut miscal_ids: Vec<usize> = Vec::new();
        let mut miscal_queries = derived_queries;
        let mut order: Vec<usize> = (0..base_count).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        for &id in &order {
            if miscal_queries >= target_miscal {
                break;
            }
            // Take the template unless it overshoots worse than stopping.
            let with = miscal_queries + counts[id];
            if with.abs_diff(target_miscal) <= miscal_queries.abs_diff(target_miscal) {
                miscal_ids.push(id);
                miscal_queries = with;
            }
        }

        // Skew every selected template. Templates with enough relations
        // donate a two-relation subtree to one derived template each; their
        // skewed slot must live inside it so the derived copy inherits the
        // same cure. Two relations keep every derived plan text about the
        // same small size, which is what makes them a retrieval trap: texts
        // of equal shape sit close in edit distance even when their
        // economics have nothing in common. Donors shun wrong operators
        // already taken, so the traps' cures disagree.
        let mut skew_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5c));
        let mut donors: Vec<(usize, Vec<Slot>)> = Vec::new();
        let mut used_wrong_ops: Vec<Operator> = Vec::new();
        for &id in &miscal_ids {
            let wants_donor =
                templates[id].relation_count() >= 4 && donors.len() < params.derived_template_count;
            let mut skewed = None;
            if wants_donor {
                let mut subtrees = Vec::new();
                proper_subtrees(&templates[id].tree, 2, &mut subtrees);
                if !subtrees.is_empty() {
                    let pick = skew_rng.gen_range(0..subtrees.len());
                    let slots = subtree_slots(subtrees[pick]);
                    skewed = miscalibrate(&mut templates[id], &mut skew_rng, Some(&slots), &used_wrong_ops);
                    if let Some((_, op)) = skewed {
                        donors.push((id, slots));
                        used_wrong_ops.push(op);
                    }
                }
            }
            if skewed.is_none() {
                miscalibrate(&mut templates[id], &mut skew_rng, None, &[]);
            }
        }

        for (i, derived_id) in (base_count..params.template_count).enumerate() {
            let Some((donor_id, slots)) = donors.get(i) else {
                // Fewer eligible donors than derived templates; an
                // independent skewed template keeps the counts honest.
                let mut t = generate_base_template(derived_id, mix_seed(seed, 0xde00 + i as u64));
                t.template_id = derived_id;
                miscalibrate(&mut t, &mut skew_rng, None, &used_wrong_ops);
                templates.push(t);
                continue;
            };
            let donor = &templates[*donor_id];
            // Recover the donated subtree from its slot list: the subtree
            // root is the highest slot id in the list.
            let root_slot = slots
                .iter()
                .filter_map(|s| match s {
                    Slot::Join { slot } => Some(*slot),
                    Slot::Scan { .. } => None,
                })
                .max()
                .expect("donated subtrees contain at least one join");
            fn find_join<'a>(tree: &'a JoinTree, slot: usize) -> Option<&'a JoinTree> {
                match tree {
                    JoinTree::Leaf { .. } => None,
                    JoinTree::Join { slot: s, left, right } => {
                        if *s == slot {
                            Some(tree)
                        } else {
                            find_join(left, slot).or_else(|| find_join(right, slot))
                        }
                    }
                }
            }
            let subtree = find_join(&donor.tree, root_slot).expect("donor contains its subtree");
            templates.push(derive_template(derived_id, donor, subtree));
        }

        for t in &templates {
            t.validate()?;
        }

        // Queries: template assignment is a seeded shuffle of the counts,
        // knobs come from one seeded stream in index order.
        let mut assignment: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(id, &c)| core::iter::repeat(id).take(c))
            .collect();
        let mut assign_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xa5));
        assignment.shuffle(&mut assign_rng);

        let mut query_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x09));
        let spread = params.selectivity_spread;
        let queries: Vec<SyntheticQuery> = assignment
            .iter()
            .enumerate()
            .map(|(index, &template_id)| {
                let scale = log_uniform(&mut query_rng, params.scale_min, params.scale_max);
                let selectivity = (0..templates[template_id].relation_count())
                    .map(|_| {
                        if spread == 0.0 {
                            1.0
                        } else {
                            libm::pow(10.0, query_rng.gen_range(-spread..spread))
                        }
                    })
                    .collect();
                SyntheticQuery {
                    query_id: format!("t{template_id:02}q{index:05}"),
                    template_id,
                    scale,
                    selectivity,
                }
            })
            .collect();

        Ok(SyntheticWorkload {
            seed,
            params,
            templates,
            queries,
        })
    }

    /// Rebuilds a workload from explicit parts (a loaded file, hand-written
    /// templates); validates every template and query.
    pub fn from_parts(
        seed: u64,
        params: WorkloadParams,
        templates: Vec<QueryTemplate>,
        queries: Vec<SyntheticQuery>,
    ) -> Result<SyntheticWorkload, WorkloadError> {
        for (i, t) in templates.iter().enumerate() {
            if t.template_id != i {
                return Err(WorkloadError::InvalidTemplate {
                    template_id: t.template_id,
                    detail: format!("template_id must equal its position {i}"),
                });
            }
            t.validate()?;
        }
        for q in &queries {
            let template = templates.get(q.template_id).ok_or(WorkloadError::InvalidParams {
                detail: format!("query {} references missing template {}", q.query_id, q.template_id),
            })?;
            if q.selectivity.len() != template.relation_count() {
                return Err(WorkloadError::InvalidParams {
                    detail: format!("query {} selectivity length mismatch", q.query_id),
                });
            }
            if !(q.scale.is_finite() && q.scale > 0.0)
                || q.selectivity.iter().any(|s| !(s.is_finite() && *s > 0.0))
            {
                return Err(WorkloadError::InvalidParams {
                    detail: format!("query {} knobs must be positive", q.query_id),
                });
            }
        }
        Ok(SyntheticWorkload {
            seed,
            params,
            templates,
            queries,
        })
    }

    pub fn template_of(&self, query: &SyntheticQuery) -> &QueryTemplate {
        &self.templates[query.template_id]
    }

    /// Plans `query` under `hints`: every slot takes its highest-preference
    /// operator that is still enabled. Nest-loop inner children are wrapped
    /// in a Materialize node.
    pub fn plan(&self, query: &SyntheticQuery, hints: &HintSet) -> Result<ExecutionPlan, EngineError> {
        self.walk(query, hints, true).map(|(node, _, _)| {
            let node = node.expect("plan requested");
            let root = match self.template_of(query).root_wrap {
                Some(op) => PlanNode::pass_through(op, node),
                None => node,
            };
            ExecutionPlan::new(root, &query.query_id)
        })
    }

    /// True latency of `query` under `hints`, in milliseconds.
    pub fn latency_ms(&self, query: &SyntheticQuery, hints: &HintSet) -> Result<f64, EngineError> {
        let (_, rows, mut work) = self.walk(query, hints, false)?;
        let template = self.template_of(query);
        if let Some(op) = template.root_wrap {
            work += pass_through_work(op, rows);
        }
        let mut latency = query.scale * MS_PER_WORK * work;
        if self.params.noise_sigma > 0.0 {
            latency *= self.noise_factor(query, hints)?;
        }
        Ok(latency)
    }

    fn noise_factor(&self, query: &SyntheticQuery, hints: &HintSet) -> Result<f64, EngineError> {
        let plan = self.plan(query, hints)?;
        let fp = fingerprint(&plan);
        let mut key = mix_seed(self.seed, 0x4e);
        for chunk in fp.as_hex().as_bytes().chunks(8) {
            let mut word = 0u64;
            for &b in chunk {
                word = (word << 8) | b as u64;
            }
            key = mix_seed(key, word);
        }
        key = mix_seed(key, query.query_id.len() as u64 ^ fnv_str(&query.query_id));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen_range(0.0..1.0));
        let z = libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2);
        Ok(libm::exp(self.params.noise_sigma * z))
    }

    /// Executes `query` under `hints`. With a bound, returns `TimedOut`
    /// exactly when the true latency strictly exceeds it.
    pub fn execute(
        &self,
        query: &SyntheticQuery,
        hints: &HintSet,
        timeout_ms: Option<f64>,
    ) -> Result<Execution, EngineError> {
        let latency_ms = self.latency_ms(query, hints)?;
        match timeout_ms {
            Some(bound) if latency_ms > bound => Ok(Execution::TimedOut),
            _ => Ok(Execution::Completed { latency_ms }),
        }
    }

    /// Ground truth by brute force: every feasible hint configuration is
    /// evaluated without timeouts or caches. Ties at the minimum resolve
    /// exactly like the search does: the winning plan is the fingerprint
    /// that reaches the minimum first in ascending bitstring order, and the
    /// canonical hint set within that plan's producers wins.
    pub fn oracle_best(&self, query: &SyntheticQuery) -> OracleBest {
        let mut min_latency = f64::INFINITY;
        let mut achievers: Vec<(HintSet, PlanFingerprint, f64)> = Vec::new();
        for hints in HintSet::enumerate_all() {
            let latency = match self.latency_ms(query, &hints) {
                Ok(l) => l,
                Err(EngineError::Infeasible { .. }) => continue,
                Err(e) => unreachable!("synthetic engine cannot fail: {e}"),
            };
            if latency < min_latency {
                min_latency = latency;
            }
            let plan = self.plan(query, &hints).expect("feasible hints plan");
            achievers.push((hints, fingerprint(&plan), latency));
        }
        let winner_fp = achievers
            .iter()
            .find(|(_, _, l)| *l == min_latency)
            .map(|(_, fp, _)| fp.clone())
            .expect("some configuration is always feasible");
        let tied = achievers
            .iter()
            .filter(|(_, fp, l)| *l == min_latency && *fp == winner_fp)
            .map(|(h, _, _)| *h);
        let best_hints = HintSet::canonicalize(tied).expect("winner has a producer");
        OracleBest {
            min_latency_ms: min_latency,
            best_hints,
            best_fingerprint: winner_fp,
        }
    }

    /// Borrows one query as a [`QueryEngine`] for the search and pipeline.
    pub fn engine_for<'a>(&'a self, query: &'a SyntheticQuery) -> SynthEngine<'a> {
        SynthEngine {
            workload: self,
            query,
        }
    }

    /// Walks the template tree choosing operators under `hints`, computing
    /// true cardinalities and work along the way. Returns the plan node
    /// (when `want_plan` asks for it), output rows, and summed work of the
    /// subtree, root wrap excluded.
    fn walk(
        &self,
        query: &SyntheticQuery,
        hints: &HintSet,
        want_plan: bool,
    ) -> Result<(Option<PlanNode>, f64, f64), EngineError> {
        let template = self.template_of(query);
        let joins_left = Operator::JOINS
            .iter()
            .any(|op| !hints.is_disabled(op.hint_index().expect("join is hintable")));
        let scans_left = Operator::SCANS
            .iter()
            .any(|op| !hints.is_disabled(op.hint_index().expect("scan is hintable")));
        if !joins_left || !scans_left {
            return Err(EngineError::Infeasible { hints: *hints });
        }
        let node = self.walk_tree(template, &template.tree, query, hints, want_plan);
        Ok(node)
    }

    fn walk_tree(
        &self,
        template: &QueryTemplate,
        tree: &JoinTree,
        query: &SyntheticQuery,
        hints: &HintSet,
        want_plan: bool,
    ) -> (Option<PlanNode>, f64, f64) {
        match tree {
            JoinTree::Leaf { relation } => {
                let rel = &template.relations[*relation];
                let op = *rel
                    .scan_affinity
                    .iter()
                    .find(|op| !hints.is_disabled(op.hint_index().expect("scan is hintable")))
                    .expect("at least one scan operator is enabled");
                let rows_raw = rel.base_rows * query.selectivity[*relation];
                let rows = if rows_raw < 1.0 { 1.0 } else { rows_raw };
                let node = want_plan.then(|| PlanNode::scan(op, &rel.name));
                (node, rows, scan_cost(rel, op, rows))
            }
            JoinTree::Join { slot, left, right } => {
                let (l_node, l_rows, l_work) = self.walk_tree(template, left, query, hints, want_plan);
                let (r_node, r_rows, r_work) = self.walk_tree(template, right, query, hints, want_plan);
                let spec = &template.join_slots[*slot];
                let op = *spec
                    .affinity
                    .iter()
                    .find(|op| !hints.is_disabled(op.hint_index().expect("join is hintable")))
                    .expect("at least one join operator is enabled");
                let rows = join_output_rows(spec, l_rows, r_rows);
                let mut work = l_work + r_work + join_cost(spec, op, l_rows, r_rows);
                if op == Operator::NestLoop {
                    work += pass_through_work(Operator::Materialize, r_rows);
                }
                let node = l_node.map(|l_plan| {
                    let inner = r_node.expect("children walked together");
                    if op == Operator::NestLoop {
                        PlanNode::join(op, l_plan, PlanNode::pass_through(Operator::Materialize, inner))
                    } else {
                        PlanNode::join(op, l_plan, inner)
                    }
                });
                (node, rows, work)
            }
        }
    }
}

fn fnv_str(s: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Result of the brute-force oracle for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleBest {
    pub min_latency_ms: f64,
    pub best_hints: HintSet,
    pub best_fingerprint: PlanFingerprint,
}

/// One workload query seen through the [`QueryEngine`] interface.
pub struct SynthEngine<'a> {
    workload: &'a SyntheticWorkload,
    query: &'a SyntheticQuery,
}

impl QueryEngine for SynthEngine<'_> {
    fn plan(&self, hints: &HintSet) -> Result<ExecutionPlan, EngineError> {
        self.workload.plan(self.query, hints)
    }

    fn execute(&self, hints: &HintSet, timeout_ms: Option<f64>) -> Result<Execution, EngineError> {
        self.workload.execute(self.query, hints, timeout_ms)
    }
}

/// The template label embedded in a workload query id ("t03q00017" → "t03").
pub fn template_label(query_id: &str) -> Option<&str> {
    let q = query_id.find('q')?;
    let label = &query_id[..q];
    if label.len() >= 2 && label.starts_with('t') && label[1..].chars().all(|c| c.is_ascii_digit()) {
        Some(label)
    } else {
        None
    }
}
