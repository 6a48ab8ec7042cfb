use serde::{Deserialize, Serialize};

use super::{check_dim, ClassProbabilities, Classifier};
use crate::datakit::FeatureMeta;
use crate::error::{Error, Result};

/// `x[feature] ∈ [a, b]`, closed on both ends. Endpoints may be infinite for
/// one-sided conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: usize,
    #[serde(with = "extended_real")]
    pub a: f64,
    #[serde(with = "extended_real")]
    pub b: f64,
}

impl Condition {
    pub fn new(feature: usize, a: f64, b: f64) -> Self {
        Condition { feature, a, b }
    }

    /// `x[feature] <= t`
    pub fn at_most(feature: usize, t: f64) -> Self {
        Condition::new(feature, f64::NEG_INFINITY, t)
    }

    /// `x[feature] >= t`
    pub fn at_least(feature: usize, t: f64) -> Self {
        Condition::new(feature, t, f64::INFINITY)
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        let v = x[self.feature];
        self.a <= v && v <= self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub class: usize,
    pub conditions: Vec<Condition>,
}

impl Rule {
    pub fn new(class: usize, conditions: Vec<Condition>) -> Self {
        Rule { class, conditions }
    }

    pub fn fires(&self, x: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.holds(x))
    }
}

/// Ordered crisp rules; the first rule whose conjunction holds decides,
/// otherwise `default_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRuleSet")]
pub struct IntervalRuleSet {
    n_classes: usize,
    n_features: usize,
    rules: Vec<Rule>,
    default_class: usize,
}

#[derive(Deserialize)]
struct RawRuleSet {
    n_classes: usize,
    n_features: usize,
    rules: Vec<Rule>,
    default_class: usize,
}

impl TryFrom<RawRuleSet> for IntervalRuleSet {
    type Error = Error;
    fn try_from(r: RawRuleSet) -> Result<Self> {
        IntervalRuleSet::new(r.n_classes, r.n_features, r.rules, r.default_class)
    }
}

impl IntervalRuleSet {
    pub fn new(n_classes: usize, n_features: usize, rules: Vec<Rule>, default_class: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Validation("a rule set needs at least 2 classes".into()));
        }
        if default_class >= n_classes {
            return Err(Error::Validation(format!("default class {default_class} out of range")));
        }
        for (i, rule) in rules.iter().enumerate() {
            if rule.class >= n_classes {
                return Err(Error::Validation(format!("rule {i} names class {} out of range", rule.class)));
            }
            for c in &rule.conditions {
                if c.feature >= n_features {
                    return Err(Error::Validation(format!(
                        "rule {i} references feature {} of {n_features}",
                        c.feature
                    )));
                }
                if c.a.is_nan() || c.b.is_nan() || c.a > c.b {
                    return Err(Error::Validation(format!(
                        "rule {i} has interval [{}, {}] with a > b",
                        c.a, c.b
                    )));
                }
            }
        }
        Ok(IntervalRuleSet {
            n_classes,
            n_features,
            rules,
            default_class,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn default_class(&self) -> usize {
        self.default_class
    }

    /// Replaces the endpoints of all conditions, in rule/condition order.
    pub fn with_endpoints(&self, endpoints: &[(f64, f64)]) -> Result<Self> {
        let mut rules = self.rules.clone();
        let mut it = endpoints.iter();
        for rule in &mut rules {
            for c in &mut rule.conditions {
                let &(a, b) = it
                    .next()
                    .ok_or_else(|| Error::Validation("too few endpoints".into()))?;
                c.a = a;
                c.b = b;
            }
        }
        IntervalRuleSet::new(self.n_classes, self.n_features, rules, self.default_class)
    }

    pub fn endpoints(&self) -> Vec<(f64, f64)> {
        self.rules
            .iter()
            .flat_map(|r| r.conditions.iter().map(|c| (c.a, c.b)))
            .collect()
    }

    /// Every referenced feature must be continuous.
    pub fn check_features(&self, features: &[FeatureMeta]) -> Result<()> {
        for rule in &self.rules {
            for c in &rule.conditions {
                match features.get(c.feature) {
                    Some(f) if f.is_continuous() => {}
                    Some(f) => {
                        return Err(Error::Validation(format!(
                            "rule condition on categorical feature `{}`",
                            f.name
                        )))
                    }
                    None => return Err(Error::Dimension { expected: features.len(), got: c.feature + 1 }),
                }
            }
        }
        Ok(())
    }

    /// Class chosen by first-match.
    pub fn decide(&self, x: &[f64]) -> usize {
        self.rules
            .iter()
            .find(|r| r.fires(x))
            .map_or(self.default_class, |r| r.class)
    }
}

/// One-hot crisp prediction of an interval rule set.
pub fn rules_predict(rules: &IntervalRuleSet, x: &[f64]) -> Result<ClassProbabilities> {
    check_dim(rules.n_features, x)?;
    Ok(ClassProbabilities::one_hot(rules.n_classes, rules.decide(x)))
}

impl Classifier for IntervalRuleSet {
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        rules_predict(self, x)
    }
    fn is_crisp(&self) -> bool {
        true
    }
}

/// Serializes infinite endpoints as the strings `"inf"` / `"-inf"`, since
/// JSON has no representation for them.
mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("invalid endpoint `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a_or_b() -> IntervalRuleSet {
        IntervalRuleSet::new(2, 1, vec![Rule::new(0, vec![Condition::new(0, 0.0, 1.0)])], 1).unwrap()
    }

    #[test]
    fn interior_and_outside() {
        let r = a_or_b();
        assert_eq!(rules_predict(&r, &[0.5]).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(rules_predict(&r, &[1.5]).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(rules_predict(&r, &[1.0]).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn first_match_wins() {
        let rules = vec![
            Rule::new(0, vec![Condition::new(0, 0.0, 2.0)]),
            Rule::new(1, vec![Condition::new(0, 1.0, 3.0)]),
        ];
        let r = IntervalRuleSet::new(3, 1, rules.clone(), 2).unwrap();
        // enumerate both orders of the rule list
        assert_eq!(r.decide(&[1.5]), 0);
        let rev = IntervalRuleSet::new(3, 1, rules.into_iter().rev().collect(), 2).unwrap();
        assert_eq!(rev.decide(&[1.5]), 1);
        assert_eq!(r.decide(&[2.5]), 1);
        assert_eq!(r.decide(&[5.0]), 2);
    }

    #[test]
    fn validation() {
        assert!(IntervalRuleSet::new(2, 1, vec![Rule::new(0, vec![Condition::new(0, 2.0, 1.0)])], 1).is_err());
        assert!(IntervalRuleSet::new(2, 1, vec![Rule::new(5, vec![])], 1).is_err());
        assert!(IntervalRuleSet::new(2, 1, vec![Rule::new(0, vec![Condition::new(3, 0.0, 1.0)])], 1).is_err());
        assert!(matches!(
            rules_predict(&a_or_b(), &[1.0, 2.0]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn infinite_endpoints_round_trip() {
        let r = IntervalRuleSet::new(
            2,
            1,
            vec![Rule::new(0, vec![Condition::at_most(0, 1.0)])],
            1,
        )
        .unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"-inf\""));
        let back: IntervalRuleSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.decide(&[-1e300]), 0);
    }

    #[test]
    fn invalid_file_rejected() {
        let text = r#"{"n_classes":2,"n_features":1,"rules":[{"class":0,"conditions":[{"feature":0,"a":3,"b":1}]}],"default_class":1}"#;
        assert!(serde_json::from_str::<IntervalRuleSet>(text).is_err());
    }
}
