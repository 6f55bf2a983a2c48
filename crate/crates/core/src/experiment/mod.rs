//! Configuration, reproduction of the reference experiments, file outputs.

pub mod config;
pub mod run;

pub use config::{
    dt_policy_string, load_config, parse_config, parse_dt_policy, preset, preset_with_rates, ExperimentConfig,
    InitialSpec, ReferenceKind, SolverKind, PRESETS,
};
pub use run::{
    build_initial, read_field_csv, run_experiment, write_field_csv, write_g_csv, write_rho_csv, RunSummary,
    SnapshotEntry,
};

use crate::error::Result;
use crate::fp::Quadrature;
use crate::kernel::{Confidence, OpinionWeight};
use crate::params::RateMode;

/// One run of a reproduction target, written under its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub config: ExperimentConfig,
}

fn variant(label: impl Into<String>, config: ExperimentConfig) -> Variant {
    Variant { label: label.into(), config }
}

/// The runs behind `reproduce <target>`. Test 1 runs both quadratures unless one is requested.
pub fn reproduce_variants(target: &str, quadrature: Option<Quadrature>) -> Result<Vec<Variant>> {
    Ok(match target {
        "test1" => {
            let rules = match quadrature {
                Some(q) => vec![q],
                None => vec![Quadrature::Midpoint, Quadrature::Milne],
            };
            let base = preset("test1")?;
            rules
                .into_iter()
                .map(|q| {
                    let label = match q {
                        Quadrature::Midpoint => "midpoint",
                        Quadrature::Milne => "milne",
                    };
                    variant(label, ExperimentConfig { quadrature: q, ..base.clone() })
                })
                .collect()
        }
        "test2" => {
            let mut out = Vec::new();
            for (exp, v) in [(3, 1e3), (4, 1e4), (5, 1e5)] {
                out.push(variant(format!("constant_v1e{exp}"), preset_with_rates("test2", RateMode::Constant { v_r: v, v_a: v })?));
            }
            for (exp, u) in [(3, 1e3), (4, 1e4), (5, 1e5)] {
                out.push(variant(
                    format!("remark1_u1e{exp}"),
                    preset_with_rates("test2", RateMode::DensityDependent { u_r: u, u_a: u })?,
                ));
            }
            out
        }
        "test4" => {
            let base = preset("test4")?;
            let mut linear = base.clone();
            linear.kernel.h = OpinionWeight::BoundedConfidence { confidence: Confidence::Linear { d0: 1.01 } };
            vec![variant("delta_constant", base), variant("delta_linear", linear)]
        }
        other => vec![variant(other, preset(other)?)],
    })
}
