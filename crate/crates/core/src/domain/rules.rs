use serde::{Deserialize, Serialize};

use super::ParameterKind;

/// What a rule does when its band is left (alert) or satisfied (feeding gate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    Alert,
    AllowFeeding,
}

/// Which side of a safe band a value fell on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    BelowLower,
    AboveUpper,
    LowFood,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("rule for {0} has neither a lower nor an upper bound")]
    Unbounded(ParameterKind),
    #[error("rule for {kind}: lower bound {lower} is not below upper bound {upper}")]
    Inverted {
        kind: ParameterKind,
        lower: f64,
        upper: f64,
    },
    #[error("rule for {0} has a non-finite bound")]
    NonFinite(ParameterKind),
}

/// Closed safe band for one parameter. Values on a bound are inside the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule")]
pub struct ThresholdRule {
    pub kind: ParameterKind,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub action: RuleAction,
}

#[derive(Deserialize)]
struct RawRule {
    kind: ParameterKind,
    #[serde(default)]
    lower: Option<f64>,
    #[serde(default)]
    upper: Option<f64>,
    action: RuleAction,
}

impl TryFrom<RawRule> for ThresholdRule {
    type Error = RuleError;

    fn try_from(r: RawRule) -> Result<Self, Self::Error> {
        ThresholdRule::new(r.kind, r.lower, r.upper, r.action)
    }
}

impl ThresholdRule {
    pub fn new(
        kind: ParameterKind,
        lower: Option<f64>,
        upper: Option<f64>,
        action: RuleAction,
    ) -> Result<Self, RuleError> {
        if lower.is_none() && upper.is_none() {
            return Err(RuleError::Unbounded(kind));
        }
        if lower.is_some_and(|v| !v.is_finite()) || upper.is_some_and(|v| !v.is_finite()) {
            return Err(RuleError::NonFinite(kind));
        }
        if let (Some(lower), Some(upper)) = (lower, upper) {
            if lower >= upper {
                return Err(RuleError::Inverted { kind, lower, upper });
            }
        }
        Ok(ThresholdRule {
            kind,
            lower,
            upper,
            action,
        })
    }

    pub fn band(kind: ParameterKind, lower: f64, upper: f64) -> Result<Self, RuleError> {
        Self::new(kind, Some(lower), Some(upper), RuleAction::Alert)
    }

    pub fn violates(&self, value: f64) -> Option<Direction> {
        violates(self, value)
    }

    /// True when `value` sits inside the band by at least `margin` on the
    /// side given by `direction`.
    pub fn cleared(&self, value: f64, direction: Direction, margin: f64) -> bool {
        match direction {
            Direction::BelowLower => self.lower.is_none_or(|l| value >= l + margin),
            Direction::AboveUpper => self.upper.is_none_or(|u| value <= u - margin),
            Direction::LowFood => true,
        }
    }
}

/// `BelowLower` iff `value < lower`, `AboveUpper` iff `value > upper`.
pub fn violates(rule: &ThresholdRule, value: f64) -> Option<Direction> {
    if rule.lower.is_some_and(|l| value < l) {
        Some(Direction::BelowLower)
    } else if rule.upper.is_some_and(|u| value > u) {
        Some(Direction::AboveUpper)
    } else {
        None
    }
}

/// The seven control rules of the reference deployment.
pub fn default_rules() -> Vec<ThresholdRule> {
    use ParameterKind::*;
    let rule = |kind, lower, upper, action| ThresholdRule {
        kind,
        lower,
        upper,
        action,
    };
    vec![
        rule(AirTemperature, Some(15.0), Some(30.0), RuleAction::Alert),
        rule(Humidity, Some(30.0), Some(80.0), RuleAction::Alert),
        rule(WaterTemperature, Some(24.0), Some(28.0), RuleAction::Alert),
        rule(Tds, Some(180.0), Some(280.0), RuleAction::Alert),
        rule(Ph, Some(6.8), Some(8.2), RuleAction::Alert),
        rule(Turbidity, None, Some(50.0), RuleAction::Alert),
        rule(FoodDistance, None, Some(5.0), RuleAction::AllowFeeding),
    ]
}

/// A rule set with at most one rule per parameter kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet(Vec<ThresholdRule>);

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet(default_rules())
    }
}

impl RuleSet {
    /// Builds a rule set; later rules for the same kind replace earlier ones.
    pub fn new(rules: impl IntoIterator<Item = ThresholdRule>) -> Self {
        let mut out: Vec<ThresholdRule> = Vec::new();
        for r in rules {
            match out.iter_mut().find(|x| x.kind == r.kind) {
                Some(slot) => *slot = r,
                None => out.push(r),
            }
        }
        RuleSet(out)
    }

    pub fn get(&self, kind: ParameterKind) -> Option<&ThresholdRule> {
        self.0.iter().find(|r| r.kind == kind)
    }

    pub fn alert_rules(&self) -> impl Iterator<Item = &ThresholdRule> {
        self.0.iter().filter(|r| r.action == RuleAction::Alert)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ThresholdRule> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[ThresholdRule] {
        &self.0
    }
}
