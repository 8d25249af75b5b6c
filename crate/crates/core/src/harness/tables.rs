use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{harmonic_mean, mean_across_backbones, ExperimentRecord};
use crate::stream_orderings::OrderingKind;

/// Seed-averaged results for one (dataset, backbone, learner, ordering).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedMean {
    pub dataset: String,
    pub backbone: String,
    pub learner: String,
    pub ordering: String,
    pub seeds: usize,
    pub accuracy: f64,
    /// Mean over the seeds that have a NetScore.
    pub netscore: Option<f64>,
}

/// Accuracy per backbone plus the mean across backbones.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneRow {
    pub dataset: String,
    pub ordering: String,
    pub learner: String,
    pub per_backbone: Vec<Option<f64>>,
    pub mean: f64,
}

/// Backbone-averaged iid and class-iid accuracy with their harmonic mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderRow {
    pub dataset: String,
    pub learner: String,
    pub iid: f64,
    pub class_iid: f64,
    pub h_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tables {
    pub seed_means: Vec<SeedMean>,
    /// Column order of [`BackboneRow::per_backbone`].
    pub backbones: Vec<String>,
    pub by_backbone: Vec<BackboneRow>,
    pub by_ordering: Vec<OrderRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Builds all aggregate tables. Rows come out sorted by their keys;
/// backbone columns keep first-appearance order.
pub fn aggregate(records: &[ExperimentRecord]) -> Tables {
    let mut backbones: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String, String, String), Vec<&ExperimentRecord>> =
        BTreeMap::new();
    for r in records {
        if !backbones.contains(&r.backbone.name) {
            backbones.push(r.backbone.name.clone());
        }
        cells
            .entry((
                r.dataset.clone(),
                r.ordering.clone(),
                r.learner.clone(),
                r.backbone.name.clone(),
            ))
            .or_default()
            .push(r);
    }

    let seed_means: Vec<SeedMean> = cells
        .iter()
        .map(|((dataset, ordering, learner, backbone), rs)| {
            let acc: Vec<f64> = rs.iter().map(|r| r.final_accuracy).collect();
            let ns: Vec<f64> = rs.iter().filter_map(|r| r.netscore).collect();
            SeedMean {
                dataset: dataset.clone(),
                backbone: backbone.clone(),
                learner: learner.clone(),
                ordering: ordering.clone(),
                seeds: rs.len(),
                accuracy: mean(&acc),
                netscore: (!ns.is_empty()).then(|| mean(&ns)),
            }
        })
        .collect();

    let mut rows: BTreeMap<(String, String, String), Vec<Option<f64>>> = BTreeMap::new();
    for m in &seed_means {
        let col = backbones.iter().position(|b| *b == m.backbone).unwrap();
        rows.entry((m.dataset.clone(), m.ordering.clone(), m.learner.clone()))
            .or_insert_with(|| vec![None; backbones.len()])[col] = Some(m.accuracy);
    }
    let by_backbone: Vec<BackboneRow> = rows
        .into_iter()
        .map(|((dataset, ordering, learner), per_backbone)| {
            let present: Vec<f64> = per_backbone.iter().flatten().copied().collect();
            BackboneRow {
                dataset,
                ordering,
                learner,
                mean: mean_across_backbones(&present).expect("row has at least one value"),
                per_backbone,
            }
        })
        .collect();

    let lookup = |dataset: &str, ordering: &str, learner: &str| {
        by_backbone
            .iter()
            .find(|r| r.dataset == dataset && r.ordering == ordering && r.learner == learner)
            .map(|r| r.mean)
    };
    let iid = OrderingKind::Iid.as_str();
    let class_iid = OrderingKind::ClassIid.as_str();
    let by_ordering = by_backbone
        .iter()
        .filter(|r| r.ordering == iid)
        .filter_map(|r| {
            let c = lookup(&r.dataset, class_iid, &r.learner)?;
            Some(OrderRow {
                dataset: r.dataset.clone(),
                learner: r.learner.clone(),
                iid: r.mean,
                class_iid: c,
                h_mean: harmonic_mean(r.mean, c),
            })
        })
        .collect();

    Tables {
        seed_means,
        backbones,
        by_backbone,
        by_ordering,
    }
}

fn csv_err(e: std::io::Error) -> Error {
    Error::io("<csv>", e)
}

impl Tables {
    pub fn write_seed_means_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for m in &self.seed_means {
            w.serialize(m)?;
        }
        w.flush().map_err(csv_err)
    }

    /// Wide table: `dataset,ordering,learner,<backbone...>,mean`.
    pub fn write_backbone_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["dataset".to_string(), "ordering".into(), "learner".into()];
        header.extend(self.backbones.iter().cloned());
        header.push("mean".into());
        w.write_record(&header)?;
        for r in &self.by_backbone {
            let mut rec = vec![r.dataset.clone(), r.ordering.clone(), r.learner.clone()];
            rec.extend(
                r.per_backbone
                    .iter()
                    .map(|v| v.map(|a| format!("{a:.4}")).unwrap_or_default()),
            );
            rec.push(format!("{:.4}", r.mean));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv_err)
    }

    pub fn write_ordering_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.by_ordering {
            w.serialize(r)?;
        }
        w.flush().map_err(csv_err)
    }

    /// Plain-text rendering of the two accuracy tables.
    pub fn render(&self) -> String {
        let mut s = String::new();
        if !self.by_backbone.is_empty() {
            s.push_str(&format!(
                "{:<12} {:<20} {:<16}",
                "dataset", "ordering", "learner"
            ));
            for b in &self.backbones {
                s.push_str(&format!(" {:>18}", b));
            }
            s.push_str(&format!(" {:>8}\n", "mean"));
            for r in &self.by_backbone {
                s.push_str(&format!(
                    "{:<12} {:<20} {:<16}",
                    r.dataset, r.ordering, r.learner
                ));
                for v in &r.per_backbone {
                    match v {
                        Some(a) => s.push_str(&format!(" {:>18.1}", a)),
                        None => s.push_str(&format!(" {:>18}", "-")),
                    }
                }
                s.push_str(&format!(" {:>8.1}\n", r.mean));
            }
        }
        if !self.by_ordering.is_empty() {
            s.push_str(&format!(
                "\n{:<12} {:<16} {:>8} {:>10} {:>8}\n",
                "dataset", "learner", "iid", "class_iid", "h_mean"
            ));
            for r in &self.by_ordering {
                s.push_str(&format!(
                    "{:<12} {:<16} {:>8.1} {:>10.1} {:>8.1}\n",
                    r.dataset, r.learner, r.iid, r.class_iid, r.h_mean
                ));
            }
        }
        s
    }
}
