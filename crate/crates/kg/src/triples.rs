//! Line-oriented triple format.
//!
//! ```text
//! <e1> <a> <SuspectComponent> .
//! <e1> <name> "C_A" .
//! <e1> <use_oscilloscope> "true"^^bool .
//! <e2> <affected_by> <e1> .
//! <e5> <pathStep> <e1> @0 .
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Entity labels are
//! local to one stream; import mints fresh ids.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::model::{Concept, Literal, LiteralKind, Predicate};
use crate::store::{EntityId, KgError, KnowledgeGraph, Result};

fn kind_tag(kind: LiteralKind) -> Option<&'static str> {
    match kind {
        LiteralKind::Str => None,
        LiteralKind::Int => Some("int"),
        LiteralKind::Real => Some("real"),
        LiteralKind::Bool => Some("bool"),
        LiteralKind::Series => Some("series"),
    }
}

fn literal_text(value: &Literal) -> String {
    match value {
        Literal::Str(s) => s.clone(),
        Literal::Int(i) => i.to_string(),
        Literal::Real(r) => format!("{r:?}"),
        Literal::Bool(b) => b.to_string(),
        Literal::Series(s) => serde_json::to_string(s).expect("finite series"),
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

/// Serializes the graph: type and attribute lines per entity, then relations.
pub fn export_triples(kg: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for e in kg.entities() {
        let _ = writeln!(out, "<{}> <a> <{}> .", e.id, e.concept);
        for (name, value) in &e.attributes {
            let _ = write!(out, "<{}> <{name}> {}", e.id, quote(&literal_text(value)));
            if let Some(tag) = kind_tag(value.kind()) {
                let _ = write!(out, "^^{tag}");
            }
            out.push_str(" .\n");
        }
    }
    for r in kg.relations() {
        let _ = write!(out, "<{}> <{}> <{}>", r.subject, r.predicate, r.object);
        if let Some(i) = r.order {
            let _ = write!(out, " @{i}");
        }
        out.push_str(" .\n");
    }
    out
}

pub fn write_triples(kg: &KnowledgeGraph, mut w: impl Write) -> Result<()> {
    w.write_all(export_triples(kg).as_bytes())?;
    Ok(())
}

pub fn save(kg: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, export_triples(kg))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let file = std::fs::File::open(path)?;
    import_triples(std::io::BufReader::new(file))
}

enum Object {
    Node(String),
    Literal(Literal),
}

struct Line {
    subject: String,
    predicate: String,
    object: Object,
    order: Option<u32>,
}

fn parse_error(line: usize, message: impl Into<String>) -> KgError {
    KgError::Parse { line, message: message.into() }
}

fn take_iri<'a>(rest: &'a str, line: usize, what: &str) -> Result<(&'a str, &'a str)> {
    let rest = rest.trim_start();
    let body = rest.strip_prefix('<').ok_or_else(|| parse_error(line, format!("expected <{what}>")))?;
    let end = body.find('>').ok_or_else(|| parse_error(line, format!("unterminated <{what}>")))?;
    let iri = &body[..end];
    if iri.is_empty() || iri.contains(char::is_whitespace) {
        return Err(parse_error(line, format!("invalid {what} {iri:?}")));
    }
    Ok((iri, &body[end + 1..]))
}

fn typed_literal(text: String, tag: Option<&str>, line: usize) -> Result<Literal> {
    let bad = |kind: &str| parse_error(line, format!("invalid {kind} literal {text:?}"));
    Ok(match tag {
        None => Literal::Str(text),
        Some("int") => Literal::Int(text.parse().map_err(|_| bad("int"))?),
        Some("real") => Literal::Real(text.parse().map_err(|_| bad("real"))?),
        Some("bool") => Literal::Bool(text.parse().map_err(|_| bad("bool"))?),
        Some("series") => Literal::Series(serde_json::from_str(&text).map_err(|_| bad("series"))?),
        Some(other) => return Err(parse_error(line, format!("unknown datatype {other:?}"))),
    })
}

fn parse_line(text: &str, line: usize) -> Result<Line> {
    let body = text
        .trim_end()
        .strip_suffix('.')
        .ok_or_else(|| parse_error(line, "missing terminal \".\""))?;
    let (subject, rest) = take_iri(body, line, "subject")?;
    let (predicate, rest) = take_iri(rest, line, "predicate")?;
    let rest = rest.trim_start();
    let (object, rest) = if rest.starts_with('<') {
        let (iri, rest) = take_iri(rest, line, "object")?;
        (Object::Node(iri.to_string()), rest)
    } else if rest.starts_with('"') {
        let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<String>();
        let text = match stream.next() {
            Some(Ok(s)) => s,
            _ => return Err(parse_error(line, "malformed string literal")),
        };
        let rest = &rest[stream.byte_offset()..];
        let (tag, rest) = match rest.strip_prefix("^^") {
            Some(after) => {
                let end = after.find(char::is_whitespace).unwrap_or(after.len());
                (Some(&after[..end]), &after[end..])
            }
            None => (None, rest),
        };
        (Object::Literal(typed_literal(text, tag, line)?), rest)
    } else {
        return Err(parse_error(line, "expected <object> or literal"));
    };
    let rest = rest.trim();
    let order = if rest.is_empty() {
        None
    } else {
        let idx = rest.strip_prefix('@').ok_or_else(|| parse_error(line, format!("unexpected trailing {rest:?}")))?;
        Some(idx.parse().map_err(|_| parse_error(line, format!("invalid order index {idx:?}")))?)
    };
    Ok(Line { subject: subject.to_string(), predicate: predicate.to_string(), object, order })
}

#[derive(Default)]
struct Pending {
    concept: Option<(Concept, usize)>,
    attributes: BTreeMap<String, Literal>,
    first_line: usize,
}

/// Parses a triple stream into a fresh graph.
pub fn import_triples(reader: impl BufRead) -> Result<KnowledgeGraph> {
    let mut pending: Vec<(String, Pending)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut relations: Vec<(usize, String, Predicate, String, Option<u32>)> = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text?;
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed = parse_line(trimmed, line)?;
        let slot = *index.entry(parsed.subject.clone()).or_insert_with(|| {
            pending.push((parsed.subject.clone(), Pending { first_line: line, ..Default::default() }));
            pending.len() - 1
        });
        let entry = &mut pending[slot].1;
        if parsed.order.is_some() && (parsed.predicate == "a" || !matches!(parsed.object, Object::Node(_))) {
            return Err(parse_error(line, "order index only allowed on relations"));
        }
        match (parsed.predicate.as_str(), parsed.object) {
            ("a", Object::Node(concept)) => {
                let concept: Concept = concept.parse().map_err(|m: String| parse_error(line, m))?;
                if entry.concept.is_some_and(|(c, _)| c != concept) {
                    return Err(parse_error(line, format!("{} typed twice", parsed.subject)));
                }
                entry.concept = Some((concept, line));
            }
            ("a", Object::Literal(_)) => return Err(parse_error(line, "type must be a concept")),
            (name, Object::Literal(value)) => {
                if entry.attributes.insert(name.to_string(), value).is_some() {
                    return Err(parse_error(line, format!("attribute {name} repeated")));
                }
            }
            (predicate, Object::Node(object)) => {
                let predicate: Predicate = predicate.parse().map_err(|m: String| parse_error(line, m))?;
                if predicate.is_ordered() != parsed.order.is_some() {
                    return Err(parse_error(line, format!("order index mismatch for {predicate}")));
                }
                relations.push((line, parsed.subject, predicate, object, parsed.order));
            }
        }
    }

    let mut kg = KnowledgeGraph::new();
    let mut ids: HashMap<String, EntityId> = HashMap::new();
    for (label, entry) in pending {
        let Some((concept, line)) = entry.concept else {
            // Subjects appearing only in relation lines have no type.
            if entry.attributes.is_empty() {
                continue;
            }
            return Err(parse_error(entry.first_line, format!("{label} has no type")));
        };
        let id = kg.add_entity(concept, entry.attributes).map_err(|e| parse_error(line, e.to_string()))?;
        ids.insert(label, id);
    }
    for (line, subject, predicate, object, order) in relations {
        let lookup = |label: &str| ids.get(label).copied().ok_or_else(|| parse_error(line, format!("unknown entity {label}")));
        let (s, o) = (lookup(&subject)?, lookup(&object)?);
        let result = match order {
            Some(i) => kg.add_ordered_relation(s, predicate, o, i),
            None => kg.add_relation(s, predicate, o),
        };
        result.map_err(|e| parse_error(line, e.to_string()))?;
    }
    Ok(kg)
}

pub fn import_str(text: &str) -> Result<KnowledgeGraph> {
    import_triples(text.as_bytes())
}
