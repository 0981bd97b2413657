//! One module per experiment. Each exposes a typed parameter block, a typed
//! report and an `execute` function that returns the report together with
//! its CSV tables, so the same code drives the binary and the test suites.

pub mod dispersion;
pub mod drift;
pub mod noise;
pub mod oracle;
pub mod regime;
pub mod sde;

use macrocollapse::analysis::EnsembleStats;

use crate::artifacts::{num, Table};

pub type Tables = Vec<(&'static str, Table)>;

/// `t, mean_p_0, se_p_0, ..., cross_<k>_<m>, se_cross_<k>_<m>`.
pub fn ensemble_table(stats: &EnsembleStats) -> Table {
    let mut header = vec!["t".to_string()];
    for n in 0..stats.macro_count() {
        header.push(format!("mean_p_{n}"));
        header.push(format!("se_p_{n}"));
    }
    for (k, m) in &stats.pairs {
        header.push(format!("cross_{k}_{m}"));
        header.push(format!("se_cross_{k}_{m}"));
    }
    let mut table = Table::new(header);
    for (t, &time) in stats.times.iter().enumerate() {
        let mut row = vec![num(time)];
        for n in 0..stats.macro_count() {
            row.push(num(stats.mean_p[t][n]));
            row.push(num(stats.se_p[t][n]));
        }
        for j in 0..stats.pairs.len() {
            row.push(num(stats.cross[t][j]));
            row.push(num(stats.se_cross[t][j]));
        }
        table.push(row);
    }
    table
}

/// `trajectory_id, t, p_0, ..., p_{M-1}` for the given paths.
pub fn trajectory_table<'a>(macro_count: usize, paths: impl IntoIterator<Item = (&'a [f64], &'a [Vec<f64>])>) -> Table {
    let header =
        ["trajectory_id".to_string(), "t".to_string()].into_iter().chain((0..macro_count).map(|n| format!("p_{n}")));
    let mut table = Table::new(header);
    for (id, (times, path)) in paths.into_iter().enumerate() {
        for (t, p) in times.iter().zip(path) {
            let mut row = vec![id.to_string(), num(*t)];
            row.extend(p.iter().map(|&x| num(x)));
            table.push(row);
        }
    }
    table
}

/// `(x - target) / se`, with the conventions of the martingale check for a
/// vanishing error bar.
pub fn z_score(x: f64, target: f64, se: f64) -> f64 {
    let dev = x - target;
    if dev == 0.0 {
        0.0
    } else if se == 0.0 {
        dev.signum() * f64::INFINITY
    } else {
        dev / se
    }
}
