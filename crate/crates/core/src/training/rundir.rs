use std::fmt::Write as _;
use std::path::Path;

use super::{EpochReport, GridRow, TrainConfig, TrainError, TrainOutcome};
use crate::kv::KvDocument;
use crate::model::write_meta;

pub fn write_epochs(path: &Path, reports: &[EpochReport]) -> Result<(), TrainError> {
    let mut s = String::from("epoch\tlr\ttrain_loss\tval_loss\twall_time\tselected\n");
    for r in reports {
        writeln!(s, "{}\t{}\t{}\t{}\t{}\t{}", r.epoch, r.lr, r.train_loss, r.val_loss, r.wall_time, r.selected as u8).unwrap();
    }
    std::fs::write(path, s).map_err(|e| TrainError::io(path, e))
}

pub fn read_epochs(path: &Path) -> Result<Vec<EpochReport>, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
    let bad = |line: usize| TrainError::InvalidArgument(format!("{}: malformed line {line}", path.display()));
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(i + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1));
            Ok(EpochReport {
                epoch: f[0].parse().map_err(|_| bad(i + 1))?,
                lr: num(f[1])?,
                train_loss: num(f[2])?,
                val_loss: num(f[3])?,
                wall_time: num(f[4])?,
                selected: f[5] == "1",
            })
        })
        .collect()
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<(), TrainError> {
    let mut s = String::from("pooling\thidden_layers\tstatus\tbest_epoch\tbest_val_loss\tselected\n");
    for r in rows {
        let pooling = r.point.pooling.map_or("none", |p| p.name());
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {}", e.replace(['\t', '\n'], " ")),
        };
        let epoch = r.best_epoch.map_or("-".into(), |e| e.to_string());
        let loss = r.best_val_loss.map_or("-".into(), |l| l.to_string());
        writeln!(s, "{pooling}\t{}\t{status}\t{epoch}\t{loss}\t{}", r.point.hidden_layers, r.selected as u8).unwrap();
    }
    std::fs::write(path, s).map_err(|e| TrainError::io(path, e))
}

/// `config.txt`, `epochs.tsv`, `best.aprm` and its `best.meta` sidecar.
pub fn write_run_dir(dir: &Path, config: &TrainConfig, outcome: &TrainOutcome) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    let doc = KvDocument { root: config.to_section(), ..Default::default() };
    let cfg = dir.join("config.txt");
    std::fs::write(&cfg, doc.render()).map_err(|e| TrainError::io(&cfg, e))?;
    write_epochs(&dir.join("epochs.tsv"), &outcome.reports)?;
    outcome.model.to_checkpoint().write(&dir.join("best.aprm"))?;
    write_meta(&dir.join("best.meta"), &outcome.model.config)?;
    Ok(())
}
