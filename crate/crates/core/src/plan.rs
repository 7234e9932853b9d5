//! Execution plan trees, their text rendering, and plan fingerprints.
//!
//! Plans are ordered trees over a closed operator vocabulary: three joins,
//! four scans, and three pass-through operators. The text rendering is the
//! canonical form everything else consumes: embeddings are computed from it
//! and the fingerprint is a SHA-256 of it, so two plans compare equal exactly
//! when their operator trees (and leaf relations) match, regardless of
//! estimated costs or row counts.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use sha2::{Digest, Sha256};

use crate::hints::HINT_COUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    NestLoop,
    HashJoin,
    MergeJoin,
    SeqScan,
    IndexScan,
    IndexOnlyScan,
    BitmapScan,
    Aggregate,
    Sort,
    Materialize,
}

impl Operator {
    pub const ALL: [Operator; 10] = [
        Operator::NestLoop,
        Operator::HashJoin,
        Operator::MergeJoin,
        Operator::SeqScan,
        Operator::IndexScan,
        Operator::IndexOnlyScan,
        Operator::BitmapScan,
        Operator::Aggregate,
        Operator::Sort,
        Operator::Materialize,
    ];

    pub const JOINS: [Operator; 3] = [Operator::NestLoop, Operator::HashJoin, Operator::MergeJoin];

    pub const SCANS: [Operator; 4] = [
        Operator::SeqScan,
        Operator::IndexScan,
        Operator::IndexOnlyScan,
        Operator::BitmapScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::NestLoop => "NestLoop",
            Operator::HashJoin => "HashJoin",
            Operator::MergeJoin => "MergeJoin",
            Operator::SeqScan => "SeqScan",
            Operator::IndexScan => "IndexScan",
            Operator::IndexOnlyScan => "IndexOnlyScan",
            Operator::BitmapScan => "BitmapScan",
            Operator::Aggregate => "Aggregate",
            Operator::Sort => "Sort",
            Operator::Materialize => "Materialize",
        }
    }

    pub fn parse(token: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.name() == token)
    }

    pub fn is_join(self) -> bool {
        Operator::JOINS.contains(&self)
    }

    pub fn is_scan(self) -> bool {
        Operator::SCANS.contains(&self)
    }

    /// Position of this operator in hint bit order, if it is hintable.
    /// Pass-through operators cannot be disabled and return `None`.
    pub fn hint_index(self) -> Option<usize> {
        let idx = match self {
            Operator::NestLoop => 0,
            Operator::HashJoin => 1,
            Operator::MergeJoin => 2,
            Operator::SeqScan => 3,
            Operator::IndexScan => 4,
            Operator::IndexOnlyScan => 5,
            Operator::BitmapScan => 6,
            _ => return None,
        };
        debug_assert!(idx < HINT_COUNT);
        Some(idx)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One node of a plan tree. Scans take zero children and may carry a
/// relation name; joins take exactly two (outer first); pass-through
/// operators take exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanNode {
    pub operator: Operator,
    pub relation: Option<String>,
    pub est_rows: Option<f64>,
    pub est_cost: Option<f64>,
    pub children: Vec<PlanNode>,
}

impl PlanNode {
    pub fn scan(operator: Operator, relation: &str) -> PlanNode {
        debug_assert!(operator.is_scan());
        PlanNode {
            operator,
            relation: Some(relation.to_string()),
            est_rows: None,
            est_cost: None,
            children: Vec::new(),
        }
    }

    pub fn join(operator: Operator, outer: PlanNode, inner: PlanNode) -> PlanNode {
        debug_assert!(operator.is_join());
        PlanNode {
            operator,
            relation: None,
            est_rows: None,
            est_cost: None,
            children: alloc::vec![outer, inner],
        }
    }

    pub fn pass_through(operator: Operator, child: PlanNode) -> PlanNode {
        debug_assert!(!operator.is_join() && !operator.is_scan());
        PlanNode {
            operator,
            relation: None,
            est_rows: None,
            est_cost: None,
            children: alloc::vec![child],
        }
    }

    fn node_count(&self) -> usize {
        1 + self.children.iter().map(PlanNode::node_count).sum::<usize>()
    }
}

/// A full plan: the tree plus the identifier of the query it plans.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionPlan {
    pub root: PlanNode,
    pub source_query_id: String,
}

impl ExecutionPlan {
    pub fn new(root: PlanNode, source_query_id: &str) -> ExecutionPlan {
        ExecutionPlan {
            root,
            source_query_id: source_query_id.to_string(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }
}

/// Untyped plan document as read from an interchange file: operator and
/// relation as plain strings, estimates optional, children nested.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanDoc {
    pub op: String,
    pub relation: Option<String>,
    pub est_rows: Option<f64>,
    pub est_cost: Option<f64>,
    pub children: Vec<PlanDoc>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanParseError {
    UnknownOperator { name: String },
    ArityViolation { operator: Operator, children: usize },
    SchemaViolation { detail: String },
}

impl fmt::Display for PlanParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanParseError::UnknownOperator { name } => write!(f, "unknown plan operator {name:?}"),
            PlanParseError::ArityViolation { operator, children } => {
                write!(f, "operator {operator} cannot take {children} children")
            }
            PlanParseError::SchemaViolation { detail } => write!(f, "malformed plan document: {detail}"),
        }
    }
}

impl core::error::Error for PlanParseError {}

fn expected_arity(op: Operator) -> usize {
    if op.is_scan() {
        0
    } else if op.is_join() {
        2
    } else {
        1
    }
}

fn valid_relation_token(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_node(doc: &PlanDoc) -> Result<PlanNode, PlanParseError> {
    let operator = Operator::parse(&doc.op).ok_or_else(|| PlanParseError::UnknownOperator {
        name: doc.op.clone(),
    })?;
    if doc.children.len() != expected_arity(operator) {
        return Err(PlanParseError::ArityViolation {
            operator,
            children: doc.children.len(),
        });
    }
    if let Some(relation) = &doc.relation {
        if !operator.is_scan() {
            return Err(PlanParseError::SchemaViolation {
                detail: format!("relation {relation:?} on non-scan operator {operator}"),
            });
        }
        if !valid_relation_token(relation) {
            return Err(PlanParseError::SchemaViolation {
                detail: format!("relation {relation:?} is not a name token"),
            });
        }
    }
    for (field, value) in [("est_rows", doc.est_rows), ("est_cost", doc.est_cost)] {
        if let Some(v) = value {
            if !v.is_finite() || v < 0.0 {
                return Err(PlanParseError::SchemaViolation {
                    detail: format!("{field} must be finite and non-negative, got {v}"),
                });
            }
        }
    }
    let children = doc
        .children
        .iter()
        .map(parse_node)
        .collect::<Result<Vec<PlanNode>, PlanParseError>>()?;
    Ok(PlanNode {
        operator,
        relation: doc.relation.clone(),
        est_rows: doc.est_rows,
        est_cost: doc.est_cost,
        children,
    })
}

/// Validates a plan document against the operator vocabulary and arity
/// rules and builds the typed tree.
pub fn parse_plan(doc: &PlanDoc, source_query_id: &str) -> Result<ExecutionPlan, PlanParseError> {
    Ok(ExecutionPlan::new(parse_node(doc)?, source_query_id))
}

fn render_node(node: &PlanNode, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str(node.operator.name());
    if let Some(relation) = &node.relation {
        out.push('(');
        out.push_str(relation);
        out.push(')');
    }
    for child in &node.children {
        out.push('\n');
        render_node(child, depth + 1, out);
    }
}

/// Renders the canonical text form: pre-order, two spaces of indentation per
/// level, `Operator(relation)` where a relation is present and bare
/// `Operator` otherwise. Estimates never appear, which is what makes the
/// fingerprint cost-invariant.
pub fn render_plan_text(plan: &ExecutionPlan) -> String {
    let mut out = String::new();
    render_node(&plan.root, 0, &mut out);
    out
}

/// SHA-256 of the rendered plan text, hex-encoded. Equal fingerprints mean
/// equal trees because the rendering is injective over valid plans.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlanFingerprint(String);

impl PlanFingerprint {
    pub fn from_hex(hex: &str) -> Option<PlanFingerprint> {
        if hex.len() == 64 && hex.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()) {
            Some(PlanFingerprint(hex.to_string()))
        } else {
            None
        }
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PlanFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for PlanFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PlanFingerprint({}..)", &self.0[..12])
    }
}

const HEX_DIGITS: &[u8; 16] = b"0123456789abcdef";

pub fn fingerprint(plan: &ExecutionPlan) -> PlanFingerprint {
    let digest = Sha256::digest(render_plan_text(plan).as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push(HEX_DIGITS[(byte >> 4) as usize] as char);
        hex.push(HEX_DIGITS[(byte & 0xf) as usize] as char);
    }
    PlanFingerprint(hex)
}
