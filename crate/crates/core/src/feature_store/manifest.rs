use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest row. Column order matches the CSV header
/// `sample_id,split,class_id,group_id,row_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: u64,
    pub split: Split,
    pub class_id: u32,
    pub group_id: Option<u64>,
    pub row_index: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    records: Vec<ManifestRecord>,
    by_id: HashMap<u64, usize>,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.sample_id, i).is_some() {
                return Err(Error::Manifest(format!(
                    "duplicate sample_id {}",
                    r.sample_id
                )));
            }
        }
        Ok(Self { records, by_id })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["sample_id", "split", "class_id", "group_id", "row_index"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Manifest(format!(
                "unexpected header row {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestRecord>, _>>()?;
        Self::new(records)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    pub fn to_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["sample_id", "split", "class_id", "group_id", "row_index"])?;
        }
        w.flush().map_err(|e| Error::io("<manifest>", e))?;
        Ok(())
    }

    /// Checks row indices against the feature file and that every class
    /// appearing anywhere also appears in train.
    pub fn validate(&self, n_samples: u64) -> Result<()> {
        for r in &self.records {
            if r.row_index >= n_samples {
                return Err(Error::Manifest(format!(
                    "sample {} has row_index {} >= n_samples {}",
                    r.sample_id, r.row_index, n_samples
                )));
            }
        }
        let train: BTreeSet<u32> = self.train().map(|r| r.class_id).collect();
        if let Some(r) = self.records.iter().find(|r| !train.contains(&r.class_id)) {
            return Err(Error::Manifest(format!(
                "class {} of sample {} never appears in train",
                r.class_id, r.sample_id
            )));
        }
        Ok(())
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, sample_id: u64) -> Option<&ManifestRecord> {
        self.by_id.get(&sample_id).map(|&i| &self.records[i])
    }

    pub fn train(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| r.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| r.split == Split::Test)
    }

    /// Size of the dense label space, `max(class_id) + 1`.
    pub fn num_classes(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.class_id as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn train_classes(&self) -> BTreeSet<u32> {
        self.train().map(|r| r.class_id).collect()
    }
}
