use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifiers::ClassProbabilities;
use crate::error::{Error, Result};

/// Thresholds turning probabilities into a verdict of variable size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct EliminationPolicy {
    /// A single class is accepted when its probability reaches this value.
    pub accept: f64,
    /// Otherwise classes at or above this probability are retained.
    pub retain: f64,
    pub max_retained: usize,
}

#[derive(Deserialize)]
struct RawPolicy {
    accept: f64,
    retain: f64,
    max_retained: usize,
}

impl TryFrom<RawPolicy> for EliminationPolicy {
    type Error = Error;
    fn try_from(r: RawPolicy) -> Result<Self> {
        EliminationPolicy::new(r.accept, r.retain, r.max_retained)
    }
}

impl Default for EliminationPolicy {
    fn default() -> Self {
        EliminationPolicy {
            accept: 0.9,
            retain: 0.2,
            max_retained: usize::MAX,
        }
    }
}

impl EliminationPolicy {
    pub fn new(accept: f64, retain: f64, max_retained: usize) -> Result<Self> {
        if !(accept > 0.0 && accept <= 1.0) {
            return Err(Error::Config(format!("accept threshold must lie in (0, 1], got {accept}")));
        }
        if !(0.0..1.0).contains(&retain) {
            return Err(Error::Config(format!("retain threshold must lie in [0, 1), got {retain}")));
        }
        if retain >= accept {
            return Err(Error::Config(format!(
                "retain threshold {retain} must be below accept threshold {accept}"
            )));
        }
        if max_retained == 0 {
            return Err(Error::Config("max_retained must be at least 1".into()));
        }
        Ok(EliminationPolicy {
            accept,
            retain,
            max_retained,
        })
    }

    /// Parses `accept=0.9,retain=0.2[,max=3]`; omitted keys keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = EliminationPolicy::default();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("policy entry `{part}` is not key=value")))?;
            let bad = || Error::Config(format!("policy value `{value}` for `{key}` is invalid"));
            match key.trim() {
                "accept" => p.accept = value.trim().parse().map_err(|_| bad())?,
                "retain" => p.retain = value.trim().parse().map_err(|_| bad())?,
                "max" | "max_retained" => p.max_retained = value.trim().parse().map_err(|_| bad())?,
                other => return Err(Error::Config(format!("unknown policy key `{other}`"))),
            }
        }
        EliminationPolicy::new(p.accept, p.retain, p.max_retained)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictMode {
    ConfidentSingle,
    Subset,
    /// Nothing could be eliminated.
    Undecided,
}

impl fmt::Display for VerdictMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictMode::ConfidentSingle => "confident-single",
            VerdictMode::Subset => "subset",
            VerdictMode::Undecided => "undecided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProb {
    pub class: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationVerdict {
    /// Surviving classes, most probable first.
    pub retained: Vec<ClassProb>,
    pub eliminated: Vec<ClassProb>,
    pub mode: VerdictMode,
    pub trace: String,
}

impl EliminationVerdict {
    pub(crate) fn build(p: &ClassProbabilities, retained: &[usize], mode: VerdictMode, trace: String) -> Self {
        let entry = |c: usize| ClassProb { class: c, prob: p[c] };
        EliminationVerdict {
            retained: retained.iter().map(|&c| entry(c)).collect(),
            eliminated: p
                .ranked()
                .into_iter()
                .filter(|c| !retained.contains(c))
                .map(entry)
                .collect(),
            mode,
            trace,
        }
    }

    pub fn retained_classes(&self) -> Vec<usize> {
        self.retained.iter().map(|c| c.class).collect()
    }

    pub fn eliminated_classes(&self) -> Vec<usize> {
        self.eliminated.iter().map(|c| c.class).collect()
    }

    pub fn retains(&self, class: usize) -> bool {
        self.retained.iter().any(|c| c.class == class)
    }
}

/// Keeps the argmax alone when it reaches `accept`; otherwise keeps every
/// class at or above `retain`, never fewer than two and never more than
/// `max_retained`.
pub fn eliminate(p: &ClassProbabilities, policy: &EliminationPolicy) -> EliminationVerdict {
    let ranked = p.ranked();
    let top = ranked[0];
    if p[top] >= policy.accept {
        return EliminationVerdict::build(
            p,
            &[top],
            VerdictMode::ConfidentSingle,
            format!("p[{top}] = {:.4} >= accept {}", p[top], policy.accept),
        );
    }
    let k = p.len();
    let above = ranked.iter().filter(|&&c| p[c] >= policy.retain).count();
    let n = above.max(2).min(policy.max_retained).min(k);
    let mode = if n == k { VerdictMode::Undecided } else { VerdictMode::Subset };
    let trace = format!(
        "max p = {:.4} < accept {}; {above} class(es) with p >= retain {}; kept {n} (min 2, max {})",
        p[top],
        policy.accept,
        policy.retain,
        policy.max_retained.min(k)
    );
    EliminationVerdict::build(p, &ranked[..n], mode, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> ClassProbabilities {
        ClassProbabilities::new(v.to_vec()).unwrap()
    }

    #[test]
    fn dominant_class_accepted() {
        let pol = EliminationPolicy::new(0.9, 0.2, 4).unwrap();
        let v = eliminate(&p(&[0.97, 0.01, 0.01, 0.01]), &pol);
        assert_eq!(v.mode, VerdictMode::ConfidentSingle);
        assert_eq!(v.retained_classes(), vec![0]);
        assert_eq!(v.eliminated_classes().len(), 3);
    }

    #[test]
    fn retain_threshold_subset() {
        let pol = EliminationPolicy::new(0.9, 0.2, 4).unwrap();
        let v = eliminate(&p(&[0.45, 0.40, 0.10, 0.05]), &pol);
        assert_eq!(v.mode, VerdictMode::Subset);
        assert_eq!(v.retained_classes(), vec![0, 1]);
        assert_eq!(v.eliminated_classes(), vec![2, 3]);
    }

    #[test]
    fn uniform_is_undecided() {
        let pol = EliminationPolicy::new(0.9, 0.2, 4).unwrap();
        let v = eliminate(&ClassProbabilities::uniform(4), &pol);
        assert_eq!(v.mode, VerdictMode::Undecided);
        assert_eq!(v.retained.len(), 4);
        assert!(v.eliminated.is_empty());
    }

    #[test]
    fn at_least_two_and_capped() {
        let pol = EliminationPolicy::new(0.9, 0.5, 4).unwrap();
        let v = eliminate(&p(&[0.6, 0.3, 0.1]), &pol);
        assert_eq!(v.retained_classes(), vec![0, 1]);
        let pol = EliminationPolicy::new(0.9, 0.1, 2).unwrap();
        let v = eliminate(&p(&[0.3, 0.3, 0.25, 0.15]), &pol);
        assert_eq!(v.retained_classes(), vec![0, 1]);
    }

    #[test]
    fn policy_validation_and_parse() {
        assert!(EliminationPolicy::new(0.0, 0.0, 2).is_err());
        assert!(EliminationPolicy::new(1.1, 0.2, 2).is_err());
        assert!(EliminationPolicy::new(0.5, 0.5, 2).is_err());
        assert!(EliminationPolicy::new(0.9, 0.2, 0).is_err());
        let pol = EliminationPolicy::parse("accept=0.9,retain=0.2").unwrap();
        assert_eq!((pol.accept, pol.retain), (0.9, 0.2));
        assert_eq!(EliminationPolicy::parse("max=3").unwrap().max_retained, 3);
        assert!(EliminationPolicy::parse("accept=x").is_err());
        assert!(EliminationPolicy::parse("foo=1").is_err());
    }

    #[test]
    fn verdict_json_shape() {
        let pol = EliminationPolicy::new(0.9, 0.2, 4).unwrap();
        let v = eliminate(&p(&[0.45, 0.40, 0.10, 0.05]), &pol);
        let json = serde_json::to_value(&v).unwrap();
        assert_eq!(json["mode"], "subset");
        assert_eq!(json["retained"][0]["class"], 0);
        assert_eq!(json["eliminated"][1]["prob"], 0.05);
        assert!(json["trace"].is_string());
    }
}
