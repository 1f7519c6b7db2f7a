use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use ebars::experiments::{run_scenario, ScenarioKind, ScenarioSpec};

use crate::args::ExperimentArgs;
use crate::error::{CliError, CliResult};
use crate::io::{numbered, output_dir, write_numeric};
use crate::manifest::ManifestBuilder;

fn spec_from(args: &ExperimentArgs) -> CliResult<ScenarioSpec> {
    let mut spec = ScenarioSpec::named(&args.name)?;
    if let Some(m) = args.m {
        spec.m = m;
    }
    if let Some(r) = args.reps {
        spec.reps = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(b) = args.burnin {
        spec.chain.burn_in = b;
    }
    if let Some(s) = args.steps {
        spec.chain.steps = s;
    }
    spec.jobs = args.jobs;
    spec.validate()?;
    Ok(spec)
}

pub fn run(args: ExperimentArgs) -> CliResult<()> {
    let spec = spec_from(&args)?;
    let out = output_dir(args.out.clone())?;
    let mut manifest = ManifestBuilder::new("experiment", &spec)?;
    manifest.seed("master", spec.seed);
    for r in 0..spec.reps {
        manifest.seed(format!("replication_{r}"), spec.rep_seed(r));
    }

    if args.emit_data {
        for r in 0..spec.reps {
            let path = out.join(format!("data_{r}.csv"));
            match spec.kind {
                ScenarioKind::Gmsd { .. } => {
                    let s = spec.manifold_sample(r)?;
                    write_numeric(&path, &numbered("x", s.noisy.ambient_dim()), s.noisy.rows())?;
                }
                _ => {
                    let g = spec.dataset(r)?;
                    let d = g.data.ndim();
                    let mut header = numbered("x", d);
                    header.push("y".into());
                    let rows: Vec<Vec<f64>> = (0..g.data.len())
                        .map(|i| {
                            let mut row = g.data.row(i);
                            row.push(g.data.y()[i]);
                            row
                        })
                        .collect();
                    write_numeric(&path, &header, &rows)?;
                }
            }
            manifest.output(&path);
        }
    }

    let t0 = Instant::now();
    let report = run_scenario(&spec)?;
    manifest.time("scenario_seconds", t0);

    let report_path = out.join("report.csv");
    report
        .write_csv(BufWriter::new(File::create(&report_path)?))
        .map_err(|e| CliError::data(format!("writing {}: {e}", report_path.display())))?;
    manifest.output(&report_path);
    manifest.write(&out)?;

    let tag = if report.stand_in { " (stand-in generator)" } else { "" };
    println!("{}{tag}: {} replications, m = {}", spec.name, spec.reps, spec.m);
    let width = report.metrics.iter().map(String::len).max().unwrap_or(0);
    for (j, name) in report.metrics.iter().enumerate() {
        println!("  {name:<width$}  mean {:>12.6}  sd {:>12.6}", report.mean[j], report.sd[j]);
    }
    println!("wrote {}", out.display());
    Ok(())
}
