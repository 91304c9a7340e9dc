use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use super::{normalize_label, ActionIdx, ActionKey, DataError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionClass {
    pub key: ActionKey,
    pub raw_label: String,
    pub normalized_label: String,
}

impl ActionClass {
    pub fn dataset(&self) -> &str {
        &self.key.dataset
    }
}

/// All action classes, sorted by key. The dataset set is open-ended: any
/// dataset id appearing in the catalog file is accepted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    actions: Vec<ActionClass>,
    index: HashMap<ActionKey, ActionIdx>,
}

impl Catalog {
    pub fn from_actions(mut actions: Vec<ActionClass>) -> Result<Self, DataError> {
        actions.sort_by(|a, b| a.key.cmp(&b.key));
        let mut index = HashMap::with_capacity(actions.len());
        for (i, a) in actions.iter().enumerate() {
            if a.key.dataset.contains('/') {
                return Err(DataError::InvalidArgument(format!("dataset id `{}` contains '/'", a.key.dataset)));
            }
            if index.insert(a.key.clone(), i).is_some() {
                return Err(DataError::DuplicateAction { line: 0, key: a.key.to_string() });
            }
        }
        Ok(Catalog { actions, index })
    }

    /// Reads the `dataset,action_id,label` CSV.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(DataError::csv)?.clone();
        let expected = ["dataset", "action_id", "label"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(DataError::Parse {
                line: 1,
                message: format!("catalog header must be `dataset,action_id,label`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut actions = Vec::new();
        let mut seen: HashMap<ActionKey, u64> = HashMap::new();
        for record in rdr.records() {
            let record = record.map_err(DataError::csv)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let key = ActionKey::new(&record[0], &record[1]);
            if key.dataset.is_empty() || key.action.is_empty() || key.dataset.contains('/') {
                return Err(DataError::Parse { line, message: format!("invalid action key `{key}`") });
            }
            if seen.insert(key.clone(), line).is_some() {
                return Err(DataError::DuplicateAction { line, key: key.to_string() });
            }
            let raw_label = record[2].to_string();
            let normalized_label = normalize_label(&raw_label)
                .map_err(|e| DataError::Parse { line, message: e.to_string() })?;
            actions.push(ActionClass { key, raw_label, normalized_label });
        }
        Catalog::from_actions(actions)
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["dataset", "action_id", "label"]).map_err(DataError::csv)?;
        for a in &self.actions {
            w.write_record([a.key.dataset.as_str(), a.key.action.as_str(), a.raw_label.as_str()])
                .map_err(DataError::csv)?;
        }
        w.flush().map_err(|source| DataError::Io { path: "<catalog>".into(), source })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, idx: ActionIdx) -> &ActionClass {
        &self.actions[idx]
    }

    pub fn key(&self, idx: ActionIdx) -> &ActionKey {
        &self.actions[idx].key
    }

    pub fn lookup(&self, key: &ActionKey) -> Option<ActionIdx> {
        self.index.get(key).copied()
    }

    pub fn actions(&self) -> &[ActionClass] {
        &self.actions
    }

    pub fn actions_of(&self, dataset: &str) -> Vec<ActionIdx> {
        (0..self.actions.len()).filter(|&i| self.actions[i].key.dataset == dataset).collect()
    }

    /// Dataset ids with their action counts, in sorted order.
    pub fn datasets(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for a in &self.actions {
            *out.entry(a.key.dataset.clone()).or_insert(0) += 1;
        }
        out
    }
}
