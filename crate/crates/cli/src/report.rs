//! `report`: phase breakdown of one run directory, or of a baseline and an
//! adaptive run side by side with the weight-stream reduction and the
//! accuracy delta.

use std::path::{Path, PathBuf};

use a2dtwp_core::run::RunArtifacts;
use a2dtwp_core::transfer::{render_table, Profile, ProfileComparison};
use clap::{ArgGroup, Args};
use serde_json::json;

use crate::{Failure, EXIT_RUNTIME};

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["run", "baseline"])))]
pub struct ReportArgs {
    /// A single run directory.
    #[arg(long, conflicts_with_all = ["baseline", "a2dtwp"])]
    run: Option<PathBuf>,
    /// Run directory of the 32-bit reference run.
    #[arg(long, requires = "a2dtwp")]
    baseline: Option<PathBuf>,
    /// Run directory of the adaptive run.
    #[arg(long, requires = "baseline")]
    a2dtwp: Option<PathBuf>,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    json: bool,
}

fn load(dir: &Path) -> Result<(RunArtifacts, Profile), Failure> {
    let art = RunArtifacts::load(dir)?;
    let profile = art.profile()?;
    Ok((art, profile))
}

fn print_json(v: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    text.push('\n');
    crate::write_stdout(text.as_bytes())
}

pub fn run(a: &ReportArgs) -> Result<(), Failure> {
    if let Some(dir) = &a.run {
        let (art, profile) = load(dir)?;
        let mode = art.profile_file.mode.to_string();
        if a.json {
            return print_json(&json!({
                "mode": mode,
                "seed": art.profile_file.seed,
                "final_val_top1": art.profile_file.final_val_top1,
                "profile": profile,
            }));
        }
        print!("{}", render_table(&[(&mode, &profile)]));
        println!(
            "{:<28} {:>16.4}",
            "final val_top1", art.profile_file.final_val_top1
        );
        return Ok(());
    }

    let (base, base_p) = load(a.baseline.as_ref().expect("clap group"))?;
    let (adapt, adapt_p) = load(a.a2dtwp.as_ref().expect("clap requires"))?;
    let cmp = ProfileComparison::new(base_p, adapt_p);
    let wire_fraction =
        cmp.adaptive.weight_wire_bytes as f64 / cmp.baseline.weight_wire_bytes as f64;
    let delta_pp = (adapt.profile_file.final_val_top1 - base.profile_file.final_val_top1) * 100.0;
    if a.json {
        return print_json(&json!({
            "baseline": { "mode": base.profile_file.mode.to_string(), "final_val_top1": base.profile_file.final_val_top1 },
            "adaptive": { "mode": adapt.profile_file.mode.to_string(), "final_val_top1": adapt.profile_file.final_val_top1 },
            "comparison": cmp,
            "weight_wire_fraction": wire_fraction,
            "accuracy_delta_pp": delta_pp,
        }));
    }
    let base_name = base.profile_file.mode.to_string();
    let adapt_name = adapt.profile_file.mode.to_string();
    print!(
        "{}",
        render_table(&[(&base_name, &cmp.baseline), (&adapt_name, &cmp.adaptive)])
    );
    println!();
    println!(
        "weight wire bytes: {} -> {} ({:.1}% of baseline, {:.2}x smaller)",
        cmp.baseline.weight_wire_bytes,
        cmp.adaptive.weight_wire_bytes,
        wire_fraction * 100.0,
        cmp.weight_stream_ratio
    );
    println!(
        "host->worker link speedup: {:.2}x",
        cmp.transfer_to_worker_speedup
    );
    println!(
        "final val_top1: {:.4} -> {:.4} ({delta_pp:+.2} pp)",
        base.profile_file.final_val_top1, adapt.profile_file.final_val_top1
    );
    Ok(())
}
