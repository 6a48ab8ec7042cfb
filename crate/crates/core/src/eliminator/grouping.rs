use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of the class indices `0..K` into groups. Groups with more
/// than one member are merged ("joint") classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrouping")]
pub struct ClassGrouping {
    groups: Vec<Vec<usize>>,
    names: Vec<String>,
    #[serde(skip)]
    group_of: Vec<usize>,
}

#[derive(Deserialize)]
struct RawGrouping {
    groups: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl TryFrom<RawGrouping> for ClassGrouping {
    type Error = Error;
    fn try_from(r: RawGrouping) -> Result<Self> {
        let g = ClassGrouping::with_names(r.groups, r.names)?;
        Ok(g)
    }
}

impl ClassGrouping {
    /// Builds a grouping; display names join constituent class names with `+`.
    pub fn new(groups: Vec<Vec<usize>>, class_names: &[String]) -> Result<Self> {
        let k = class_names.len();
        check_partition(&groups, k)?;
        let names = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&c| class_names[c].as_str())
                    .collect::<Vec<_>>()
                    .join("+")
            })
            .collect();
        ClassGrouping::with_names(groups, names)
    }

    pub fn with_names(groups: Vec<Vec<usize>>, names: Vec<String>) -> Result<Self> {
        let k = groups.iter().map(Vec::len).sum();
        check_partition(&groups, k)?;
        if names.len() != groups.len() {
            return Err(Error::Validation(format!(
                "{} names for {} groups",
                names.len(),
                groups.len()
            )));
        }
        let mut group_of = vec![0; k];
        for (gi, g) in groups.iter().enumerate() {
            for &c in g {
                group_of[c] = gi;
            }
        }
        Ok(ClassGrouping {
            groups,
            names,
            group_of,
        })
    }

    /// Every class on its own.
    pub fn singletons(class_names: &[String]) -> Self {
        ClassGrouping::new((0..class_names.len()).map(|c| vec![c]).collect(), class_names)
            .expect("singletons always partition")
    }

    /// Parses `"1,2|3|4"`: groups separated by `|`, 1-based class numbers
    /// separated by `,`.
    pub fn parse(text: &str, class_names: &[String]) -> Result<Self> {
        let groups = text
            .split('|')
            .map(|g| {
                g.split(',')
                    .map(|c| {
                        let c = c.trim();
                        let n: usize = c.parse().map_err(|_| {
                            Error::Config(format!("`{c}` in grouping `{text}` is not a class number"))
                        })?;
                        if n == 0 {
                            return Err(Error::Config("class numbers in groupings start at 1".into()));
                        }
                        Ok(n - 1)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        ClassGrouping::new(groups, class_names)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_of(&self, class: usize) -> usize {
        self.group_of[class]
    }

    /// Indices of groups holding two or more classes.
    pub fn merged_groups(&self) -> Vec<usize> {
        (0..self.groups.len())
            .filter(|&g| self.groups[g].len() >= 2)
            .collect()
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn check_classes(&self, k: usize) -> Result<()> {
        if self.n_classes() != k {
            return Err(Error::Validation(format!(
                "grouping covers {} classes, data has {k}",
                self.n_classes()
            )));
        }
        Ok(())
    }

    /// Compact form, e.g. `"1,2|3|4"`.
    pub fn label(&self) -> String {
        self.groups
            .iter()
            .map(|g| g.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("|")
    }
}

fn check_partition(groups: &[Vec<usize>], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    for g in groups {
        if g.is_empty() {
            return Err(Error::Validation("grouping contains an empty group".into()));
        }
        for &c in g {
            if c >= k {
                return Err(Error::Validation(format!("class {} out of range in grouping", c + 1)));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::Validation(format!("class {} appears in two groups", c + 1)));
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!("class {} is not in any group", missing + 1)));
    }
    Ok(())
}
