//! Probing-task text files: one example per line, `<tag>\t<label>\t<sentence>`
//! with tags `tr`, `va`, `te`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;

use super::task::TaskSpec;
use super::Split;
use crate::error::{Error, Result};

/// One parsed line before label resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub split: Split,
    pub label: String,
    pub sentence: String,
}

pub type ParsedTask = BTreeMap<Split, Vec<(usize, String)>>;

fn split_tag(tag: &str) -> Option<Split> {
    match tag {
        "tr" => Some(Split::Train),
        "va" => Some(Split::Val),
        "te" => Some(Split::Test),
        _ => None,
    }
}

pub fn read_raw(path: &Path) -> Result<Vec<RawExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_lines(&text, path)?
        .into_iter()
        .map(|(_, ex)| ex)
        .collect())
}

/// Parsed examples paired with their 1-based line numbers.
fn parse_lines(text: &str, path: &Path) -> Result<Vec<(usize, RawExample)>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let split = split_tag(fields[0])
            .ok_or_else(|| err(lineno, format!("unknown split tag {:?}", fields[0])))?;
        out.push((
            lineno,
            RawExample {
                split,
                label: fields[1].to_string(),
                sentence: fields[2].to_string(),
            },
        ));
    }
    Ok(out)
}

/// Parses a probing file and resolves labels through `spec.label_map`.
/// Order within each split follows the file.
pub fn parse_senteval(path: &Path, spec: &TaskSpec) -> Result<ParsedTask> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    resolve(&text, path, spec)
}

pub(crate) fn resolve(text: &str, path: &Path, spec: &TaskSpec) -> Result<ParsedTask> {
    let mut out = ParsedTask::new();
    for (line, ex) in parse_lines(text, path)? {
        let class = spec.class_of(&ex.label).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("label {:?} not in task {}", ex.label, spec.name),
        })?;
        out.entry(ex.split).or_default().push((class, ex.sentence));
    }
    Ok(out)
}

/// Per-class counts of a split.
pub fn class_counts(class_ids: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &c in class_ids {
        counts[c] += 1;
    }
    counts
}

/// True when every class has the same count. Logs a warning otherwise;
/// imbalance never fails ingestion.
pub fn check_balance(task: &str, split: Split, class_ids: &[usize], n_classes: usize) -> bool {
    let counts = class_counts(class_ids, n_classes);
    let balanced = counts.windows(2).all(|w| w[0] == w[1]);
    if !balanced {
        warn!("{task}/{split}: classes are not balanced: {counts:?}");
    }
    balanced
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::task::Level;

    fn tense() -> TaskSpec {
        TaskSpec::builtin("Tense").unwrap()
    }

    #[test]
    fn one_example_per_split() {
        let text = "tr\tPAST\tShe walked home .\nva\tPRES\tHe runs .\nte\tPAST\tIt rained .\n";
        let parsed = resolve(text, Path::new("f.txt"), &tense()).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(
            parsed[&Split::Train],
            vec![(0, "She walked home .".to_string())]
        );
        assert_eq!(parsed[&Split::Val], vec![(1, "He runs .".to_string())]);
        assert_eq!(parsed[&Split::Test], vec![(0, "It rained .".to_string())]);
    }

    #[test]
    fn unknown_tag_names_line() {
        let text = "tr\tPAST\ta\nxx\tPAST\tb\n";
        match resolve(text, Path::new("f.txt"), &tense()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("xx"));
            }
            other => panic!("{other:?}"),
        }
        // tags are case-sensitive
        assert!(resolve("TR\tPAST\ta\n", Path::new("f"), &tense()).is_err());
    }

    #[test]
    fn bad_label_and_field_count() {
        assert!(matches!(
            resolve("tr\tFUTURE\ta\n", Path::new("f"), &tense()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            resolve("tr\tPAST\n", Path::new("f"), &tense()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            resolve("tr\tPAST\ta\tb\n", Path::new("f"), &tense()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn balance_on_tense_fixture() {
        let mut text = String::new();
        for i in 0..10_000 {
            let label = if i % 2 == 0 { "PAST" } else { "PRES" };
            text.push_str(&format!("tr\t{label}\tsentence {i}\n"));
        }
        let parsed = resolve(&text, Path::new("f"), &tense()).unwrap();
        let ids: Vec<usize> = parsed[&Split::Train].iter().map(|e| e.0).collect();
        assert_eq!(ids.len(), 10_000);
        assert_eq!(class_counts(&ids, 2), vec![5000, 5000]);
        assert!(check_balance("Tense", Split::Train, &ids, 2));
        assert!(!check_balance("Tense", Split::Train, &ids[..9999], 2));
    }

    #[test]
    fn preserves_order() {
        let spec = TaskSpec::new("t", Level::Surface, &["a", "b"]).unwrap();
        let text = "te\tb\t1\ntr\ta\t2\nte\ta\t3\nte\tb\t4\n";
        let parsed = resolve(text, Path::new("f"), &spec).unwrap();
        let test: Vec<&str> = parsed[&Split::Test].iter().map(|e| e.1.as_str()).collect();
        assert_eq!(test, ["1", "3", "4"]);
    }
}
