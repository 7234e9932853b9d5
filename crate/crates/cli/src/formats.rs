//! File formats: stores and workloads as newline-delimited JSON, plan files
//! as single JSON documents, run reports as record streams.
//!
//! Every line-oriented reader reports the 1-based line number of the first
//! record it cannot accept, so a corrupt file points at itself.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use plansteer_core::pipeline::{PathTaken, QueryReport, WorkloadRun};
use plansteer_core::plan::{parse_plan, ExecutionPlan, Operator, PlanDoc, PlanFingerprint};
use plansteer_core::synth::{
    JoinSlotSpec, JoinTree, QueryTemplate, RelationSpec, SyntheticQuery, SyntheticWorkload,
    WorkloadParams,
};
use plansteer_core::{EmbeddingVector, HintSet, ReferenceStore, ReferenceTriple};

#[derive(Debug)]
pub enum FormatError {
    Io(std::io::Error),
    /// A line that does not parse or violates an invariant, by position.
    CorruptRecord { line: usize, detail: String },
    /// The file parsed line by line but does not form a valid whole.
    InvalidDocument { detail: String },
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::Io(e) => write!(f, "{e}"),
            FormatError::CorruptRecord { line, detail } => {
                write!(f, "corrupt record at line {line}: {detail}")
            }
            FormatError::InvalidDocument { detail } => write!(f, "invalid document: {detail}"),
        }
    }
}

impl std::error::Error for FormatError {}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> FormatError {
        FormatError::Io(e)
    }
}

fn corrupt(line: usize, detail: impl fmt::Display) -> FormatError {
    FormatError::CorruptRecord {
        line,
        detail: detail.to_string(),
    }
}

// --- reference store ---

#[derive(Serialize, Deserialize)]
struct TripleRecord {
    query_id: String,
    d_vec: Vec<f64>,
    d_fingerprint: String,
    h_star: String,
    o_vec: Vec<f64>,
    t_def: f64,
    t_opt: f64,
}

pub fn save_store(store: &ReferenceStore, path: &Path) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path)?);
    for triple in store.iter() {
        let record = TripleRecord {
            query_id: triple.query_id.clone(),
            d_vec: triple.default_vec.values().to_vec(),
            d_fingerprint: triple.default_fingerprint.as_hex().to_string(),
            h_star: triple.best_hints.format_bits(),
            o_vec: triple.optimized_vec.values().to_vec(),
            t_def: triple.default_latency_ms,
            t_opt: triple.optimized_latency_ms,
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<ReferenceStore, FormatError> {
    let reader = BufReader::new(File::open(path)?);
    let mut store = ReferenceStore::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TripleRecord =
            serde_json::from_str(&line).map_err(|e| corrupt(line_no, e))?;
        let triple = ReferenceTriple {
            query_id: record.query_id,
            default_vec: EmbeddingVector::new(record.d_vec).map_err(|e| corrupt(line_no, e))?,
            default_fingerprint: PlanFingerprint::from_hex(&record.d_fingerprint)
                .ok_or_else(|| corrupt(line_no, "d_fingerprint is not 64 hex digits"))?,
            best_hints: HintSet::parse_bits(&record.h_star).map_err(|e| corrupt(line_no, e))?,
            optimized_vec: EmbeddingVector::new(record.o_vec).map_err(|e| corrupt(line_no, e))?,
            default_latency_ms: record.t_def,
            optimized_latency_ms: record.t_opt,
        };
        store.insert(triple).map_err(|e| corrupt(line_no, e))?;
    }
    Ok(store)
}

// --- synthetic workloads ---

#[derive(Serialize, Deserialize)]
struct WorkloadHeader {
    kind: String,
    seed: u64,
    params: ParamsDoc,
    templates: Vec<TemplateDoc>,
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    template_count: usize,
    query_count: usize,
    derived_template_count: usize,
    default_optimal_target: f64,
    selectivity_spread: f64,
    scale_min: f64,
    scale_max: f64,
    noise_sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct TemplateDoc {
    template_id: usize,
    relations: Vec<RelationDoc>,
    tree: TreeDoc,
    join_slots: Vec<SlotDoc>,
    root_wrap: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RelationDoc {
    name: String,
    base_rows: f64,
    scan_multipliers: [f64; 4],
    scan_affinity: [String; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
enum TreeDoc {
    Leaf {
        relation: usize,
    },
    Join {
        slot: usize,
        left: Box<TreeDoc>,
        right: Box<TreeDoc>,
    },
}

#[derive(Serialize, Deserialize)]
struct SlotDoc {
    selectivity: f64,
    op_multipliers: [f64; 3],
    affinity: [String; 3],
}

#[derive(Serialize, Deserialize)]
struct QueryDoc {
    query_id: String,
    template_id: usize,
    scale: f64,
    selectivity: Vec<f64>,
}

fn operator_name_list<const N: usize>(ops: &[Operator; N]) -> [String; N] {
    core::array::from_fn(|i| ops[i].name().to_string())
}

fn parse_operator_list<const N: usize>(
    names: &[String; N],
    line: usize,
) -> Result<[Operator; N], FormatError> {
    let mut ops = [Operator::SeqScan; N];
    for (op, name) in ops.iter_mut().zip(names) {
        *op = Operator::parse(name)
            .ok_or_else(|| corrupt(line, format!("unknown operator {name:?}")))?;
    }
    Ok(ops)
}

fn tree_to_doc(tree: &JoinTree) -> TreeDoc {
    match tree {
        JoinTree::Leaf { relation } => TreeDoc::Leaf {
            relation: *relation,
        },
        JoinTree::Join { slot, left, right } => TreeDoc::Join {
            slot: *slot,
            left: Box::new(tree_to_doc(left)),
            right: Box::new(tree_to_doc(right)),
        },
    }
}

fn tree_from_doc(doc: &TreeDoc) -> JoinTree {
    match doc {
        TreeDoc::Leaf { relation } => JoinTree::Leaf {
            relation: *relation,
        },
        TreeDoc::Join { slot, left, right } => JoinTree::Join {
            slot: *slot,
            left: Box::new(tree_from_doc(left)),
            right: Box::new(tree_from_doc(right)),
        },
    }
}

fn template_to_doc(template: &QueryTemplate) -> TemplateDoc {
    TemplateDoc {
        template_id: template.template_id,
        relations: template
            .relations
            .iter()
            .map(|r| RelationDoc {
                name: r.name.clone(),
                base_rows: r.base_rows,
                scan_multipliers: r.scan_multipliers,
                scan_affinity: operator_name_list(&r.scan_affinity),
            })
            .collect(),
        tree: tree_to_doc(&template.tree),
        join_slots: template
            .join_slots
            .iter()
            .map(|s| SlotDoc {
                selectivity: s.selectivity,
                op_multipliers: s.op_multipliers,
                affinity: operator_name_list(&s.affinity),
            })
            .collect(),
        root_wrap: template.root_wrap.map(|op| op.name().to_string()),
    }
}

fn template_from_doc(doc: &TemplateDoc, line: usize) -> Result<QueryTemplate, FormatError> {
    Ok(QueryTemplate {
        template_id: doc.template_id,
        relations: doc
            .relations
            .iter()
            .map(|r| {
                Ok(RelationSpec {
                    name: r.name.clone(),
                    base_rows: r.base_rows,
                    scan_multipliers: r.scan_multipliers,
                    scan_affinity: parse_operator_list(&r.scan_affinity, line)?,
                })
            })
            .collect::<Result<_, FormatError>>()?,
        tree: tree_from_doc(&doc.tree),
        join_slots: doc
            .join_slots
            .iter()
            .map(|s| {
                Ok(JoinSlotSpec {
                    selectivity: s.selectivity,
                    op_multipliers: s.op_multipliers,
                    affinity: parse_operator_list(&s.affinity, line)?,
                })
            })
            .collect::<Result<_, FormatError>>()?,
        root_wrap: doc
            .root_wrap
            .as_ref()
            .map(|name| {
                Operator::parse(name)
                    .ok_or_else(|| corrupt(line, format!("unknown operator {name:?}")))
            })
            .transpose()?,
    })
}

pub fn save_workload(workload: &SyntheticWorkload, path: &Path) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path)?);
    let p = &workload.params;
    let header = WorkloadHeader {
        kind: "workload".to_string(),
        seed: workload.seed,
        params: ParamsDoc {
            template_count: p.template_count,
            query_count: p.query_count,
            derived_template_count: p.derived_template_count,
            default_optimal_target: p.default_optimal_target,
            selectivity_spread: p.selectivity_spread,
            scale_min: p.scale_min,
            scale_max: p.scale_max,
            noise_sigma: p.noise_sigma,
        },
        templates: workload.templates.iter().map(template_to_doc).collect(),
    };
    serde_json::to_writer(&mut out, &header)
        .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })?;
    out.write_all(b"\n")?;
    for query in &workload.queries {
        let record = QueryDoc {
            query_id: query.query_id.clone(),
            template_id: query.template_id,
            scale: query.scale,
            selectivity: query.selectivity.clone(),
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_workload(path: &Path) -> Result<SyntheticWorkload, FormatError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (header, templates) = loop {
        let (index, line) = lines.next().ok_or(FormatError::InvalidDocument {
            detail: "missing workload header".to_string(),
        })?;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let header: WorkloadHeader =
            serde_json::from_str(&line).map_err(|e| corrupt(index + 1, e))?;
        if header.kind != "workload" {
            return Err(corrupt(index + 1, "header kind must be \"workload\""));
        }
        let templates = header
            .templates
            .iter()
            .map(|doc| template_from_doc(doc, index + 1))
            .collect::<Result<Vec<_>, _>>()?;
        break (header, templates);
    };

    let mut queries = Vec::new();
    for (index, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryDoc = serde_json::from_str(&line).map_err(|e| corrupt(index + 1, e))?;
        queries.push(SyntheticQuery {
            query_id: record.query_id,
            template_id: record.template_id,
            scale: record.scale,
            selectivity: record.selectivity,
        });
    }

    let p = header.params;
    let params = WorkloadParams {
        template_count: p.template_count,
        query_count: p.query_count,
        derived_template_count: p.derived_template_count,
        default_optimal_target: p.default_optimal_target,
        selectivity_spread: p.selectivity_spread,
        scale_min: p.scale_min,
        scale_max: p.scale_max,
        noise_sigma: p.noise_sigma,
    };
    SyntheticWorkload::from_parts(header.seed, params, templates, queries)
        .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })
}

// --- plan files ---

#[derive(Serialize, Deserialize)]
struct PlanFile {
    query_id: String,
    plan: PlanNodeDoc,
}

#[derive(Serialize, Deserialize)]
struct PlanNodeDoc {
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    est_rows: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    est_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<PlanNodeDoc>,
}

fn doc_of(node: &PlanNodeDoc) -> PlanDoc {
    PlanDoc {
        op: node.op.clone(),
        relation: node.relation.clone(),
        est_rows: node.est_rows,
        est_cost: node.est_cost,
        children: node.children.iter().map(doc_of).collect(),
    }
}

/// Reads `{query_id, plan}` and validates the plan tree.
pub fn load_plan_file(path: &Path) -> Result<(String, ExecutionPlan), FormatError> {
    let file: PlanFile = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })?;
    let plan = parse_plan(&doc_of(&file.plan), &file.query_id)
        .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })?;
    Ok((file.query_id, plan))
}

// --- run reports ---

#[derive(Serialize, Deserialize)]
struct QueryReportRecord {
    query_id: String,
    path_taken: String,
    hints_applied: String,
    latency_ms: f64,
    timed_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default_latency_ms: Option<f64>,
    triple_added: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    candidate: Option<String>,
    accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_default_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_candidate_ms: Option<f64>,
    votes: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct FailureRecord {
    query_id: String,
    error: String,
}

#[derive(Serialize, Deserialize)]
struct RunSummaryRecord {
    kind: String,
    queries: usize,
    fast: usize,
    fallback: usize,
    default: usize,
    failures: usize,
    timeouts: usize,
    triples_added: usize,
    total_latency_ms: f64,
}

pub fn path_name(path: PathTaken) -> &'static str {
    match path {
        PathTaken::Fast => "fast",
        PathTaken::Fallback => "fallback",
        PathTaken::Default => "default",
    }
}

fn report_record(report: &QueryReport) -> QueryReportRecord {
    let decision = &report.mapping_decision;
    QueryReportRecord {
        query_id: report.query_id.clone(),
        path_taken: path_name(report.path_taken).to_string(),
        hints_applied: report.hints_applied.format_bits(),
        latency_ms: report.latency_ms,
        timed_out: report.timed_out,
        default_latency_ms: report.default_latency_ms,
        triple_added: report.triple_added,
        candidate: decision.candidate.map(|c| c.format_bits()),
        accepted: decision.accepted,
        mean_default_ms: decision.mean_default_ms,
        mean_candidate_ms: decision.mean_candidate_ms,
        votes: decision
            .vote_counts
            .iter()
            .map(|(h, c)| (h.format_bits(), *c))
            .collect(),
    }
}

/// One line per query report, one per failure, then a summary record.
pub fn write_run_report(run: &WorkloadRun, path: &Path) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut summary = RunSummaryRecord {
        kind: "run_summary".to_string(),
        queries: run.reports.len(),
        fast: 0,
        fallback: 0,
        default: 0,
        failures: run.failures.len(),
        timeouts: 0,
        triples_added: 0,
        total_latency_ms: 0.0,
    };
    for report in &run.reports {
        match report.path_taken {
            PathTaken::Fast => summary.fast += 1,
            PathTaken::Fallback => summary.fallback += 1,
            PathTaken::Default => summary.default += 1,
        }
        if report.timed_out {
            summary.timeouts += 1;
        }
        if report.triple_added {
            summary.triples_added += 1;
        }
        summary.total_latency_ms += report.latency_ms;
        serde_json::to_writer(&mut out, &report_record(report))
            .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    for failure in &run.failures {
        let record = FailureRecord {
            query_id: failure.query_id.clone(),
            error: failure.detail.clone(),
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut out, &summary)
        .map_err(|e| FormatError::InvalidDocument { detail: e.to_string() })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
