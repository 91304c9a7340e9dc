use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{ActionIdx, ActionKey, Catalog, DataError, RelationType};

/// Canonicalized relation annotations: one record per unordered pair, keyed
/// `(lo, hi)` with `lo < hi` in catalog order. The stored type is read from
/// `lo` towards `hi`, so `(lo, hi, SubclassOf)` means `lo` is the subclass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationStore {
    catalog: Catalog,
    relations: BTreeMap<(ActionIdx, ActionIdx), RelationType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreSummary {
    pub equal: usize,
    pub similar: usize,
    pub is_a: usize,
    pub labeled: usize,
    /// Cross-dataset unordered pairs carrying no annotation.
    pub unrelated: usize,
}

/// Orientation used when re-emitting a store as a relations CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Symmetric rows written low→high key; is-a rows written hypernym first.
    Canonical,
    /// Symmetric rows written high→low key; is-a rows still hypernym first,
    /// since the file schema fixes the hyponym on the `to` side.
    Reversed,
}

pub fn ingest_relations(catalog_file: &Path, relations_file: &Path) -> Result<RelationStore, DataError> {
    let catalog = Catalog::read(catalog_file)?;
    let file = std::fs::File::open(relations_file)
        .map_err(|source| DataError::Io { path: relations_file.display().to_string(), source })?;
    RelationStore::from_reader(catalog, std::io::BufReader::new(file))
}

impl RelationStore {
    pub fn empty(catalog: Catalog) -> Self {
        RelationStore { catalog, relations: BTreeMap::new() }
    }

    /// Reads `from_dataset,from_action_name,to_dataset,to_action_name,relation`.
    /// `is-a` rows mark the `to` action as the subclass.
    pub fn from_reader<R: Read>(catalog: Catalog, reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(DataError::csv)?.clone();
        let expected = ["from_dataset", "from_action_name", "to_dataset", "to_action_name", "relation"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(DataError::Parse { line: 1, message: format!("relations header must be `{}`", expected.join(",")) });
        }
        let mut store = RelationStore::empty(catalog);
        for record in rdr.records() {
            let record = record.map_err(DataError::csv)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let from_key = ActionKey::new(&record[0], &record[1]);
            let to_key = ActionKey::new(&record[2], &record[3]);
            let from = store
                .catalog
                .lookup(&from_key)
                .ok_or_else(|| DataError::UnknownAction { line, key: from_key.to_string() })?;
            let to = store.catalog.lookup(&to_key).ok_or_else(|| DataError::UnknownAction { line, key: to_key.to_string() })?;
            // relation read from `from` towards `to`
            let relation = match &record[4] {
                "equal" => RelationType::Equal,
                "similar" => RelationType::Similar,
                "is-a" => RelationType::SuperclassOf,
                other => return Err(DataError::UnknownRelation { line, value: other.to_string() }),
            };
            store.insert_at(line, from, to, relation)?;
        }
        Ok(store)
    }

    /// Records that `a` stands in `relation` to `b`. Identical repeats are
    /// accepted; contradicting an existing record is an error.
    pub fn insert(&mut self, a: ActionIdx, b: ActionIdx, relation: RelationType) -> Result<(), DataError> {
        self.insert_at(0, a, b, relation)
    }

    fn insert_at(&mut self, line: u64, a: ActionIdx, b: ActionIdx, relation: RelationType) -> Result<(), DataError> {
        if a == b || self.catalog.key(a).dataset == self.catalog.key(b).dataset {
            return Err(DataError::SameDataset {
                line,
                a: self.catalog.key(a).to_string(),
                b: self.catalog.key(b).to_string(),
            });
        }
        let (key, rel) = if a < b { ((a, b), relation) } else { ((b, a), relation.inverse()) };
        match self.relations.get(&key) {
            Some(&existing) if existing != rel => Err(DataError::Conflict {
                line,
                pair: format!("{} / {}", self.catalog.key(key.0), self.catalog.key(key.1)),
                existing,
                found: rel,
            }),
            Some(_) => Ok(()),
            None => {
                self.relations.insert(key, rel);
                Ok(())
            }
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// The relation of `a` towards `b`, if annotated.
    pub fn relation(&self, a: ActionIdx, b: ActionIdx) -> Option<RelationType> {
        if a < b {
            self.relations.get(&(a, b)).copied()
        } else {
            self.relations.get(&(b, a)).map(|r| r.inverse())
        }
    }

    pub fn is_related(&self, a: ActionIdx, b: ActionIdx) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.relations.contains_key(&key)
    }

    /// Canonical records `(lo, hi, relation of lo towards hi)`.
    pub fn iter(&self) -> impl Iterator<Item = (ActionIdx, ActionIdx, RelationType)> + '_ {
        self.relations.iter().map(|(&(a, b), &r)| (a, b, r))
    }

    pub fn summary(&self) -> StoreSummary {
        let mut s = StoreSummary { equal: 0, similar: 0, is_a: 0, labeled: self.relations.len(), unrelated: 0 };
        for r in self.relations.values() {
            match r {
                RelationType::Equal => s.equal += 1,
                RelationType::Similar => s.similar += 1,
                _ => s.is_a += 1,
            }
        }
        let sizes: Vec<usize> = self.catalog.datasets().values().copied().collect();
        let mut cross = 0usize;
        for i in 0..sizes.len() {
            for j in i + 1..sizes.len() {
                cross += sizes[i] * sizes[j];
            }
        }
        s.unrelated = cross - s.labeled;
        s
    }

    pub fn write_relations_csv<W: Write>(&self, writer: W, orientation: Orientation) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["from_dataset", "from_action_name", "to_dataset", "to_action_name", "relation"])
            .map_err(DataError::csv)?;
        for (a, b, r) in self.iter() {
            let (from, to, text) = match r {
                RelationType::SubclassOf => (b, a, "is-a"),
                RelationType::SuperclassOf => (a, b, "is-a"),
                sym => match orientation {
                    Orientation::Canonical => (a, b, sym.name()),
                    Orientation::Reversed => (b, a, sym.name()),
                },
            };
            let (fk, tk) = (self.catalog.key(from), self.catalog.key(to));
            w.write_record([fk.dataset.as_str(), fk.action.as_str(), tk.dataset.as_str(), tk.action.as_str(), text])
                .map_err(DataError::csv)?;
        }
        w.flush().map_err(|source| DataError::Io { path: "<relations>".into(), source })
    }
}
