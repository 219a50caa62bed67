use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linguistic level a probing task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Surface,
    Syntactic,
    Semantic,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Surface => "surface",
            Level::Syntactic => "syntactic",
            Level::Semantic => "semantic",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surface" => Ok(Level::Surface),
            "syntactic" => Ok(Level::Syntactic),
            "semantic" => Ok(Level::Semantic),
            _ => Err(Error::Config(format!("unknown level {s:?}"))),
        }
    }
}

/// Probing-task metadata. `label_map` assigns each label string a dense
/// class id in `0..n_classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub level: Level,
    pub n_classes: usize,
    pub label_map: BTreeMap<String, usize>,
}

/// The ten sentence-level probing tasks: (name, level, class count).
pub const BUILTIN_TASKS: [(&str, Level, usize); 10] = [
    ("SentLen", Level::Surface, 6),
    ("WC", Level::Surface, 1000),
    ("TreeDepth", Level::Syntactic, 7),
    ("TopConst", Level::Syntactic, 20),
    ("BShift", Level::Syntactic, 2),
    ("Tense", Level::Semantic, 2),
    ("SubjNum", Level::Semantic, 2),
    ("ObjNum", Level::Semantic, 2),
    ("SOMO", Level::Semantic, 2),
    ("CoordInv", Level::Semantic, 2),
];

/// Label vocabularies of the upstream probing files, where they are fixed.
/// WC and TopConst labels are open vocabularies and come from the data.
fn builtin_labels(name: &str) -> Option<Vec<String>> {
    let v = |xs: &[&str]| Some(xs.iter().map(|s| s.to_string()).collect());
    match name {
        "SentLen" => Some((0..6).map(|i| i.to_string()).collect()),
        "TreeDepth" => Some((5..12).map(|i| i.to_string()).collect()),
        "BShift" | "CoordInv" => v(&["O", "I"]),
        "Tense" => v(&["PAST", "PRES"]),
        "SubjNum" | "ObjNum" => v(&["NN", "NNS"]),
        "SOMO" => v(&["O", "C"]),
        _ => None,
    }
}

impl TaskSpec {
    /// Builds a spec from an explicit, ordered label list.
    pub fn new(name: impl Into<String>, level: Level, labels: &[impl AsRef<str>]) -> Result<Self> {
        let name = name.into();
        let mut label_map = BTreeMap::new();
        for (id, label) in labels.iter().enumerate() {
            if label_map.insert(label.as_ref().to_string(), id).is_some() {
                return Err(Error::Config(format!(
                    "task {name}: duplicate label {:?}",
                    label.as_ref()
                )));
            }
        }
        let spec = Self {
            name,
            level,
            n_classes: labels.len(),
            label_map,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A built-in task with its fixed label vocabulary. Fails for tasks
    /// whose vocabulary is data-dependent; use [`TaskSpec::builtin_with_labels`].
    pub fn builtin(name: &str) -> Result<Self> {
        let (name, level, n) = lookup(name)?;
        let labels = builtin_labels(name).ok_or_else(|| {
            Error::Config(format!(
                "task {name} has an open label vocabulary; supply its labels"
            ))
        })?;
        debug_assert_eq!(labels.len(), n);
        Self::new(name, level, &labels)
    }

    /// A built-in task whose label vocabulary is taken from `observed`
    /// (sorted, deduplicated) when it is not fixed. The vocabulary size must
    /// match the task's class count.
    pub fn builtin_with_labels<'a>(
        name: &str,
        observed: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let (name, level, n) = lookup(name)?;
        if builtin_labels(name).is_some() {
            return Self::builtin(name);
        }
        let mut labels: Vec<&str> = observed.into_iter().collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != n {
            return Err(Error::Config(format!(
                "task {name} expects {n} classes, data has {}",
                labels.len()
            )));
        }
        Self::new(name, level, &labels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "task {} needs at least 2 classes, has {}",
                self.name, self.n_classes
            )));
        }
        let mut seen = vec![false; self.n_classes];
        for (label, &id) in &self.label_map {
            if id >= self.n_classes || std::mem::replace(&mut seen[id], true) {
                return Err(Error::Config(format!(
                    "task {}: label {label:?} has invalid or duplicate id {id}",
                    self.name
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config(format!(
                "task {}: class ids are not dense 0..{}",
                self.name, self.n_classes
            )));
        }
        Ok(())
    }

    pub fn class_of(&self, label: &str) -> Option<usize> {
        self.label_map.get(label).copied()
    }

    /// Label strings ordered by class id.
    pub fn labels(&self) -> Vec<&str> {
        let mut out = vec![""; self.n_classes];
        for (label, &id) in &self.label_map {
            out[id] = label;
        }
        out
    }
}

pub(crate) fn lookup(name: &str) -> Result<(&'static str, Level, usize)> {
    BUILTIN_TASKS
        .iter()
        .find(|(n, _, _)| *n == name)
        .copied()
        .ok_or_else(|| Error::UnknownTask(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_counts_and_levels() {
        let by_level = |l| BUILTIN_TASKS.iter().filter(|t| t.1 == l).count();
        assert_eq!(by_level(Level::Surface), 2);
        assert_eq!(by_level(Level::Syntactic), 3);
        assert_eq!(by_level(Level::Semantic), 5);
        for (name, _, n) in BUILTIN_TASKS {
            if let Ok(spec) = TaskSpec::builtin(name) {
                assert_eq!(spec.n_classes, n);
                spec.validate().unwrap();
            }
        }
        assert_eq!(
            TaskSpec::builtin("TreeDepth").unwrap().class_of("11"),
            Some(6)
        );
    }

    #[test]
    fn open_vocabulary_needs_matching_count() {
        assert!(TaskSpec::builtin("WC").is_err());
        let labels: Vec<String> = (0..20).map(|i| format!("C{i:02}")).collect();
        let spec =
            TaskSpec::builtin_with_labels("TopConst", labels.iter().map(String::as_str)).unwrap();
        assert_eq!(spec.n_classes, 20);
        assert_eq!(spec.class_of("C00"), Some(0));
        assert!(TaskSpec::builtin_with_labels("TopConst", ["a", "b"]).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(TaskSpec::new("t", Level::Surface, &["only"]).is_err());
        assert!(TaskSpec::new("t", Level::Surface, &["a", "a"]).is_err());
        let mut spec = TaskSpec::new("t", Level::Surface, &["a", "b"]).unwrap();
        spec.label_map.insert("a".into(), 1);
        assert!(spec.validate().is_err());
        assert!(matches!(
            TaskSpec::builtin("Nope"),
            Err(Error::UnknownTask(_))
        ));
    }
}
