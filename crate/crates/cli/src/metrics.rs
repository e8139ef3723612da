//! Metric CSVs from stored result files.
//!
//! Columns:
//! - `ber.csv`: `file, arch, groups, seed, gamma_db, power_w, ber, std_error`
//! - `txbp_<stem>.csv`: `angle_deg, transmissive_db, reflective_db`
//! - `srbp_<stem>_k<K>.csv`: `angle_deg, ring, power_db`
//! - `pd.csv`: `file, target, scnr_db, p_fa, pd`
//! - `convergence_<stem>.csv`: see the library's report module.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bdris_dfrc::linalg::db_to_lin;
use bdris_dfrc::metrics::{
    angle_grid, detection_probability, simulate_ber, space_range_beampattern, transmit_beampattern,
};
use bdris_dfrc::report::ResultFile;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Which;

pub struct Options {
    pub which: Which,
    pub target: usize,
    pub trials: usize,
    pub pfa: f64,
    pub seed: u64,
}

/// Result files under `input`, sorted by path. Directories are searched
/// recursively.
pub fn collect_results(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        bail!("{} does not exist", input.display());
    }
    let mut found = Vec::new();
    let mut stack = vec![input.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in
            std::fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))?
        {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "json") {
                found.push(path);
            }
        }
    }
    found.sort();
    if found.is_empty() {
        bail!("no result files under {}", input.display());
    }
    Ok(found)
}

fn stem(path: &Path) -> String {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    // Solve writes `<dir>/result.json`; name those after their directory.
    if name == "result" {
        if let Some(dir) = path.parent().and_then(Path::file_name) {
            return dir.to_string_lossy().into_owned();
        }
    }
    name
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_metrics(input: &Path, out: &Path, opts: &Options) -> Result<()> {
    let files = collect_results(input)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut ber_rows = Vec::new();
    let mut pd_rows = Vec::new();
    for path in &files {
        let file = ResultFile::read(path).with_context(|| format!("reading {}", path.display()))?;
        let name = stem(path);
        match opts.which {
            Which::Convergence => {
                std::fs::write(
                    out.join(format!("convergence_{name}.csv")),
                    file.convergence_csv(),
                )?;
            }
            Which::Pd => {
                for (k, db) in file.final_scnr_db.iter().enumerate() {
                    let pd = detection_probability(db_to_lin(*db), opts.pfa)?;
                    pd_rows.push(vec![
                        name.clone(),
                        (k + 1).to_string(),
                        db.to_string(),
                        opts.pfa.to_string(),
                        pd.to_string(),
                    ]);
                }
            }
            Which::Ber => {
                let r = file.load()?;
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                let est = simulate_ber(
                    &r.inst,
                    &r.waveform,
                    &r.phi_t,
                    &r.phi_r,
                    opts.trials,
                    &mut rng,
                )?;
                let s = &file.scenario;
                ber_rows.push(vec![
                    name.clone(),
                    s.arch.to_string(),
                    s.groups.to_string(),
                    file.seed.to_string(),
                    s.qos_db.to_string(),
                    s.power_budget.to_string(),
                    est.average.to_string(),
                    est.std_error.to_string(),
                ]);
            }
            Which::Txbp => {
                let r = file.load()?;
                let grid = angle_grid(-90.0, 90.0, 361);
                let t = transmit_beampattern(&r.inst, &r.waveform.w_mat, &r.phi_t, &grid)?;
                let rf = transmit_beampattern(&r.inst, &r.waveform.w_mat, &r.phi_r, &grid)?;
                let rows: Vec<Vec<String>> = grid
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        vec![
                            a.to_string(),
                            t.values[i].to_string(),
                            rf.values[i].to_string(),
                        ]
                    })
                    .collect();
                write_rows(
                    &out.join(format!("txbp_{name}.csv")),
                    &["angle_deg", "transmissive_db", "reflective_db"],
                    &rows,
                )?;
            }
            Which::Srbp => {
                let k = opts
                    .target
                    .checked_sub(1)
                    .context("targets are counted from 1")?;
                if k >= file.scenario.targets.len() {
                    bail!(
                        "{}: target {} out of range (scenario has {})",
                        path.display(),
                        opts.target,
                        file.scenario.targets.len()
                    );
                }
                let r = file.load()?;
                let grid = angle_grid(-90.0, 90.0, 361);
                let bp = space_range_beampattern(
                    &r.inst,
                    &r.waveform.w_mat,
                    &r.phi_t,
                    &r.phi_r,
                    &r.filters[k],
                    k,
                    &grid,
                )?;
                let mut rows = Vec::new();
                for (i, a) in bp.angles.iter().enumerate() {
                    for (j, ring) in bp.rings.iter().enumerate() {
                        rows.push(vec![
                            a.to_string(),
                            ring.to_string(),
                            bp.value(i, j).to_string(),
                        ]);
                    }
                }
                write_rows(
                    &out.join(format!("srbp_{name}_k{}.csv", opts.target)),
                    &["angle_deg", "ring", "power_db"],
                    &rows,
                )?;
            }
        }
    }
    match opts.which {
        Which::Ber => write_rows(
            &out.join("ber.csv"),
            &[
                "file",
                "arch",
                "groups",
                "seed",
                "gamma_db",
                "power_w",
                "ber",
                "std_error",
            ],
            &ber_rows,
        )?,
        Which::Pd => write_rows(
            &out.join("pd.csv"),
            &["file", "target", "scnr_db", "p_fa", "pd"],
            &pd_rows,
        )?,
        _ => {}
    }
    Ok(())
}
