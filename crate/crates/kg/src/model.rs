//! Closed vocabulary of the on-board diagnostics ontology.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(concat!("unknown ", stringify!($name), " {:?}"), other)),
                }
            }
        }
    };
}

closed_enum! {
    Concept {
        FaultContext => "FaultContext",
        FaultCondition => "FaultCondition",
        Symptom => "Symptom",
        SuspectComponent => "SuspectComponent",
        DiagnosticAssociation => "DiagnosticAssociation",
        ComponentSet => "ComponentSet",
        Subsystem => "Subsystem",
        Vehicle => "Vehicle",
        DiagLog => "DiagLog",
        Classification => "Classification",
        ManualInspection => "ManualInspection",
        OscillogramClassification => "OscillogramClassification",
        Oscillogram => "Oscillogram",
        ParallelRecOscillogramSet => "ParallelRecOscillogramSet",
        Heatmap => "Heatmap",
        FaultPath => "FaultPath",
    }
}

closed_enum! {
    Predicate {
        HasAssociation => "hasAssociation",
        PointsTo => "pointsTo",
        AffectedBy => "affected_by",
        ContainedIn => "containedIn",
        VerifiedBy => "verifiedBy",
        ManifestedBy => "manifestedBy",
        Represents => "represents",
        AppearsIn => "appearsIn",
        CreatedFor => "createdFor",
        Entails => "entails",
        ReasonFor => "reasonFor",
        LedTo => "ledTo",
        Classifies => "classifies",
        ProducedHeatmap => "producedHeatmap",
        ResultedIn => "resultedIn",
        PartOf => "partOf",
        PathStep => "pathStep",
        Checks => "checks",
    }
}

impl Concept {
    /// Abstract concepts cannot be instantiated.
    pub fn is_abstract(self) -> bool {
        self == Concept::Classification
    }

    /// True for the concept itself and its sub-concepts.
    pub fn is_a(self, other: Concept) -> bool {
        self == other
            || (other == Concept::Classification
                && matches!(self, Concept::ManualInspection | Concept::OscillogramClassification))
    }

    /// Attribute holding the natural key, if the concept has one.
    pub fn natural_key(self) -> Option<&'static str> {
        match self {
            Concept::FaultContext => Some("code"),
            Concept::SuspectComponent | Concept::ComponentSet | Concept::Subsystem => Some("name"),
            Concept::Vehicle => Some("vin"),
            _ => None,
        }
    }

    /// Required attributes and their kinds.
    pub fn required(self) -> &'static [(&'static str, LiteralKind)] {
        use LiteralKind::*;
        match self {
            Concept::FaultContext => &[("code", Str)],
            Concept::FaultCondition | Concept::Symptom => &[("description", Str)],
            Concept::SuspectComponent => &[("name", Str), ("use_oscilloscope", Bool)],
            Concept::DiagnosticAssociation => &[("priority_id", Int)],
            Concept::ComponentSet | Concept::Subsystem => &[("name", Str)],
            Concept::Vehicle => &[("name", Str), ("vin", Str)],
            Concept::ManualInspection => &[("prediction", Bool)],
            Concept::OscillogramClassification => &[("prediction", Bool), ("uncertainty", Real), ("model_id", Str)],
            Concept::Oscillogram => &[("samples", Series)],
            Concept::Heatmap => &[("generation_method", Str), ("values", Series)],
            Concept::DiagLog
            | Concept::Classification
            | Concept::ParallelRecOscillogramSet
            | Concept::FaultPath => &[],
        }
    }
}

impl Predicate {
    /// Admissible (subject, object) concept pairs.
    pub fn admits(self, subject: Concept, object: Concept) -> bool {
        use Concept::*;
        let classification = |c: Concept| c.is_a(Classification);
        match self {
            Predicate::HasAssociation => subject == FaultContext && object == DiagnosticAssociation,
            Predicate::PointsTo => subject == DiagnosticAssociation && object == SuspectComponent,
            Predicate::AffectedBy => subject == SuspectComponent && object == SuspectComponent,
            Predicate::ContainedIn => subject == SuspectComponent && matches!(object, Subsystem | ComponentSet),
            Predicate::VerifiedBy => subject == ComponentSet && object == SuspectComponent,
            Predicate::ManifestedBy => subject == FaultCondition && object == Symptom,
            Predicate::Represents => subject == FaultContext && object == FaultCondition,
            Predicate::AppearsIn => subject == FaultContext && object == DiagLog,
            Predicate::CreatedFor => subject == DiagLog && object == Vehicle,
            Predicate::Entails => subject == DiagLog && (classification(object) || object == FaultPath),
            Predicate::ReasonFor => classification(subject) && classification(object),
            Predicate::LedTo => subject == DiagnosticAssociation && classification(object),
            Predicate::Classifies => subject == OscillogramClassification && object == Oscillogram,
            Predicate::ProducedHeatmap => subject == OscillogramClassification && object == Heatmap,
            Predicate::ResultedIn => subject == FaultCondition && object == FaultPath,
            Predicate::PartOf => subject == Oscillogram && object == ParallelRecOscillogramSet,
            Predicate::PathStep => subject == FaultPath && object == SuspectComponent,
            Predicate::Checks => classification(subject) && object == SuspectComponent,
        }
    }

    /// Ordered predicates carry a position index.
    pub fn is_ordered(self) -> bool {
        self == Predicate::PathStep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiteralKind {
    Str,
    Int,
    Real,
    Bool,
    Series,
}

/// Attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
    Series(Vec<f64>),
}

impl Literal {
    pub fn kind(&self) -> LiteralKind {
        match self {
            Literal::Str(_) => LiteralKind::Str,
            Literal::Int(_) => LiteralKind::Int,
            Literal::Real(_) => LiteralKind::Real,
            Literal::Bool(_) => LiteralKind::Bool,
            Literal::Series(_) => LiteralKind::Series,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Literal::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Literal::Real(r) => Some(*r),
            Literal::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Literal::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_series(&self) -> Option<&[f64]> {
        match self {
            Literal::Series(s) => Some(s),
            _ => None,
        }
    }
}

impl From<&str> for Literal {
    fn from(s: &str) -> Self {
        Literal::Str(s.to_string())
    }
}

impl From<String> for Literal {
    fn from(s: String) -> Self {
        Literal::Str(s)
    }
}

impl From<bool> for Literal {
    fn from(b: bool) -> Self {
        Literal::Bool(b)
    }
}

impl From<i64> for Literal {
    fn from(i: i64) -> Self {
        Literal::Int(i)
    }
}

impl From<f64> for Literal {
    fn from(r: f64) -> Self {
        Literal::Real(r)
    }
}

impl From<Vec<f64>> for Literal {
    fn from(s: Vec<f64>) -> Self {
        Literal::Series(s)
    }
}
