//! Per-inequality verdicts, serialized as `{condition, value, bound, pass}`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// `value < bound`
    Less,
    /// `value <= bound`
    LessEq,
    /// `value > bound`
    Greater,
    /// `value >= bound`
    GreaterEq,
}

impl Relation {
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Self::Less => value < bound,
            Self::LessEq => value <= bound,
            Self::Greater => value > bound,
            Self::GreaterEq => value >= bound,
        }
    }

    fn strict(self) -> bool {
        matches!(self, Self::Less | Self::Greater)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub condition: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    /// Set when a strict inequality fails only through equality.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tag: Option<String>,
}

impl Check {
    pub fn new(condition: impl Into<String>, value: f64, rel: Relation, bound: f64) -> Self {
        let pass = rel.holds(value, bound);
        let tag = (!pass && rel.strict() && value == bound)
            .then(|| "non-strict violation".to_string());
        Self {
            condition: condition.into(),
            value,
            bound,
            pass,
            tag,
        }
    }

    /// Value over bound; the trappedness margins are reported this way.
    pub fn ratio(&self) -> f64 {
        self.value / self.bound
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Verdict {
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn check(&mut self, condition: impl Into<String>, value: f64, rel: Relation, bound: f64) {
        self.push(Check::new(condition, value, rel, bound));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn get(&self, condition: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.condition == condition)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}
