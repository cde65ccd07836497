//! Exit codes and the JSON error object written to stderr.

use layerkit::dataset::DatasetError;
use layerkit::io::{CanonicalError, PsdError};
use layerkit::raster::RasterError;
use layerkit::rl::RlError;
use layerkit::tools::{SequenceError, WireError};
use layerkit::workflow::WorkflowError;
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Other,
    Usage,
    Io,
    Format,
    Validation,
    Planner,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Other => 1,
            Kind::Usage => 2,
            Kind::Io => 3,
            Kind::Format => 4,
            Kind::Validation => 5,
            Kind::Planner => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Other => "other",
            Kind::Usage => "usage",
            Kind::Io => "io",
            Kind::Format => "format",
            Kind::Validation => "validation",
            Kind::Planner => "planner",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
    pub details: Option<Value>,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Failure::new(Kind::Io, format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> Value {
        let mut err = json!({
            "kind": self.kind.name(),
            "exit_code": self.kind.code(),
            "message": self.message,
        });
        if let Some(d) = &self.details {
            err["details"] = d.clone();
        }
        json!({ "error": err })
    }
}

pub type Result<T> = std::result::Result<T, Failure>;

impl From<CanonicalError> for Failure {
    fn from(e: CanonicalError) -> Self {
        let kind = match e {
            CanonicalError::Io { .. } => Kind::Io,
            CanonicalError::SchemaViolation { .. } => Kind::Format,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<PsdError> for Failure {
    fn from(e: PsdError) -> Self {
        Failure::new(Kind::Format, e.to_string())
    }
}

impl From<RasterError> for Failure {
    fn from(e: RasterError) -> Self {
        Failure::new(Kind::Format, e.to_string())
    }
}

impl From<WireError> for Failure {
    fn from(e: WireError) -> Self {
        Failure::new(Kind::Format, e.to_string())
    }
}

impl From<SequenceError> for Failure {
    fn from(e: SequenceError) -> Self {
        let details = json!({ "call_index": e.index, "violations": e.violations });
        Failure::new(Kind::Validation, e.to_string()).with_details(details)
    }
}

impl From<RlError> for Failure {
    fn from(e: RlError) -> Self {
        let kind = match e {
            RlError::UnknownTool { .. } => Kind::Validation,
            RlError::GroupTooSmall(_) => Kind::Validation,
            RlError::InvalidConfig(_) => Kind::Format,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidDocument(ref v) => {
                let details = json!({ "violations": v });
                Failure::new(Kind::Validation, e.to_string()).with_details(details)
            }
            DatasetError::Io { .. } => Failure::new(Kind::Io, e.to_string()),
            DatasetError::Format(_) => Failure::new(Kind::Format, e.to_string()),
            DatasetError::Path(_) | DatasetError::PathNotALeaf(_) => Failure::new(Kind::Usage, e.to_string()),
            _ => Failure::new(Kind::Other, e.to_string()),
        }
    }
}

impl From<WorkflowError> for Failure {
    fn from(e: WorkflowError) -> Self {
        match e {
            WorkflowError::Planner(_) => Failure::new(Kind::Planner, e.to_string()),
            WorkflowError::ValidationFailed {
                step,
                call_index,
                ref violations,
            } => {
                let details = json!({ "step": step, "call_index": call_index, "violations": violations });
                Failure::new(Kind::Validation, e.to_string()).with_details(details)
            }
            WorkflowError::Skeleton { call_index, ref violations } => {
                let details = json!({ "call_index": call_index, "violations": violations });
                Failure::new(Kind::Validation, e.to_string()).with_details(details)
            }
            WorkflowError::InvalidPlan(_) => Failure::new(Kind::Format, e.to_string()),
            WorkflowError::Io { .. } => Failure::new(Kind::Io, e.to_string()),
            WorkflowError::Render(_) => Failure::new(Kind::Other, e.to_string()),
        }
    }
}
