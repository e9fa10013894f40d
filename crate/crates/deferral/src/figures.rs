//! Datasets behind each figure, written one file per panel.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use deferral_core::bellman::{DEFAULT_MAX_ROUNDS, DEFAULT_ROUND_TOL};
use deferral_core::sim::TrajectoryConfig;
use deferral_core::{GeneralModelParams, ModelParams};

use crate::app::FigureSet;
use crate::error::CliError;
use crate::report::{self, PolicyKind};
use crate::table::{emit, Dataset, Format};

const POLICY_LOADS: [f64; 3] = [0.5, 0.85, 1.0];
const HISTOGRAM_LOADS: [f64; 2] = [0.5, 0.85];
const SWEEPS: [(f64, f64); 2] = [(2.0, 1.0), (2.5, 1.5)];
const CLASS_PROBS: [[f64; 2]; 2] = [[0.2, 0.7], [0.7, 0.2]];
const POINTS: usize = 201;

struct Sink<'a> {
    dir: &'a Path,
    format: Format,
    written: Vec<PathBuf>,
}

impl Sink<'_> {
    fn put<D: Dataset>(&mut self, stem: &str, data: &D) -> Result<(), CliError> {
        let path = self.dir.join(format!("{stem}.{}", self.format.extension()));
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        emit(data, self.format, &mut out)?;
        out.flush().map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

fn standard(p: f64) -> Result<ModelParams, CliError> {
    ModelParams::new(p, 2.0, 1.0).map_err(CliError::Invalid)
}

pub fn write_figures(
    set: FigureSet,
    dir: &Path,
    format: Format,
    sim: &TrajectoryConfig,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut sink = Sink {
        dir,
        format,
        written: Vec::new(),
    };
    let wants = |f: FigureSet| set == FigureSet::All || set == f;

    for (fig, kind) in [
        (FigureSet::Fig1, PolicyKind::Optimal),
        (FigureSet::Fig2, PolicyKind::Nash),
    ] {
        if wants(fig) {
            let n = if fig == FigureSet::Fig1 { 1 } else { 2 };
            for p in POLICY_LOADS {
                let data = report::policy_report(kind, &standard(p)?, POINTS)?;
                sink.put(&format!("fig{n}_{}_p{p}", kind.name()), &data)?;
            }
        }
    }
    for (fig, kind) in [
        (FigureSet::Fig3, PolicyKind::Optimal),
        (FigureSet::Fig4, PolicyKind::Nash),
    ] {
        if wants(fig) {
            let n = if fig == FigureSet::Fig3 { 3 } else { 4 };
            for p in HISTOGRAM_LOADS {
                let data = report::simulation_report(kind, &standard(p)?, sim)?;
                sink.put(&format!("fig{n}_{}_histogram_p{p}", kind.name()), &data)?;
            }
        }
    }
    if wants(FigureSet::Fig5) {
        for (psi, d) in SWEEPS {
            let data = report::sweep_report(psi, d, 100)?;
            sink.put(&format!("fig5_psi{psi}_d{d}"), &data)?;
        }
    }
    if wants(FigureSet::Fig6) {
        for probs in CLASS_PROBS {
            let params = GeneralModelParams::new(vec![1.0, 3.0], probs.to_vec(), 1.0)
                .map_err(CliError::Invalid)?;
            let data =
                report::general_report(&params, DEFAULT_ROUND_TOL, DEFAULT_MAX_ROUNDS, POINTS)?;
            sink.put(&format!("fig6_p{}_{}", probs[0], probs[1]), &data)?;
        }
    }
    Ok(sink.written)
}
