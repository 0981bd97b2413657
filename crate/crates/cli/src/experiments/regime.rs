//! Causality-regime and wave-packet arithmetic.

use macrocollapse::analysis::{causality_report_with, coherent_state_product, CoherentProduct, RegimeReport};
use macrocollapse::tolerance::si::{C, HBAR};
use serde::{Deserialize, Serialize};

use super::Tables;
use crate::artifacts::{num, Table};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub delta_x: f64,
    pub delta_e: f64,
    /// Defaults to the speed of light.
    #[serde(default)]
    pub v_max: Option<f64>,
    #[serde(default = "hbar")]
    pub hbar: f64,
    #[serde(default = "c")]
    pub c: f64,
    #[serde(default = "threshold")]
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub mass: f64,
    pub omega: f64,
    pub energy: f64,
    #[serde(default = "hbar")]
    pub hbar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeParams {
    #[serde(default = "default_cases")]
    pub cases: Vec<Case>,
    #[serde(default = "default_packets")]
    pub packets: Vec<Packet>,
}

fn hbar() -> f64 {
    HBAR
}
fn c() -> f64 {
    C
}
fn threshold() -> f64 {
    macrocollapse::analysis::DEFAULT_ITO_THRESHOLD
}

/// Atomic-scale marginal case and a macroscopic one, both at light speed.
fn default_cases() -> Vec<Case> {
    [(1e-13, 1e-12), (1e-3, 1.0)]
        .into_iter()
        .map(|(delta_x, delta_e)| Case { delta_x, delta_e, v_max: None, hbar: HBAR, c: C, threshold: threshold() })
        .collect()
}

fn default_packets() -> Vec<Packet> {
    vec![
        Packet { mass: 1.0, omega: 1.0, energy: 1.0, hbar: 1.0 },
        Packet { mass: 1e-3, omega: 1.0, energy: 1e-3, hbar: HBAR },
    ]
}

impl Default for RegimeParams {
    fn default() -> Self {
        Self { cases: default_cases(), packets: default_packets() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketReport {
    pub input: Packet,
    pub result: CoherentProduct,
    /// `hbar sqrt(E / 2M)`.
    pub closed_form: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeSummary {
    pub cases: Vec<RegimeReport>,
    pub packets: Vec<PacketReport>,
}

pub fn execute(params: &RegimeParams) -> Result<(RegimeSummary, Tables), CliError> {
    let cases = params
        .cases
        .iter()
        .map(|c| causality_report_with(c.delta_x, c.delta_e, c.v_max.unwrap_or(c.c), c.hbar, c.c, c.threshold))
        .collect::<macrocollapse::Result<Vec<_>>>()?;
    let packets = params
        .packets
        .iter()
        .map(|p| {
            let result = coherent_state_product(p.mass, p.omega, p.energy, p.hbar)?;
            let closed_form = p.hbar * (p.energy / (2.0 * p.mass)).sqrt();
            Ok(PacketReport {
                input: *p,
                result,
                closed_form,
                relative_gap: ((result.product - closed_form) / closed_form).abs(),
            })
        })
        .collect::<macrocollapse::Result<Vec<_>>>()?;

    let mut table = Table::new([
        "delta_x",
        "delta_e",
        "v_max",
        "tau_r",
        "tau_c",
        "ratio",
        "ito_valid",
        "light_ratio",
        "light_valid",
        "threshold",
    ]);
    for r in &cases {
        table.push(vec![
            num(r.delta_x),
            num(r.delta_e),
            num(r.v_max),
            num(r.tau_r),
            num(r.tau_c),
            num(r.ratio),
            r.ito_valid.to_string(),
            num(r.light_ratio),
            r.light_valid.to_string(),
            num(r.threshold),
        ]);
    }
    Ok((RegimeSummary { cases, packets }, vec![("regime.csv", table)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_worked_cases() {
        let (r, _) = execute(&RegimeParams::default()).unwrap();
        let hc = HBAR * C;
        assert!((r.cases[0].ratio - 1e-25 / hc).abs() <= 1e-12 * r.cases[0].ratio);
        assert!((r.cases[0].ratio - 3.2).abs() < 0.1 && !r.cases[0].ito_valid);
        assert!((r.cases[1].ratio / 3.2e22 - 1.0).abs() < 0.02 && r.cases[1].ito_valid);
        assert!((r.packets[0].result.product - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r.packets[1].result.product - HBAR * 0.5f64.sqrt()).abs() <= 1e-12 * HBAR);
        assert!(r.packets.iter().all(|p| p.relative_gap <= 1e-12));
    }
}
