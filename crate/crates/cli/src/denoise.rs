use std::time::Instant;

use ebars::tsme::{denoise, gmsd, ManifoldOracle, PointCloud};
use serde::Serialize;

use crate::args::DenoiseArgs;
use crate::error::{CliError, CliResult};
use crate::io::{numbered, output_dir, read_table, write_numeric};
use crate::manifest::ManifestBuilder;

#[derive(Debug, Serialize)]
struct DenoiseSummary {
    points: usize,
    ambient_dim: usize,
    intrinsic_dim: usize,
    neighbors: usize,
    eigenvalues: Vec<f64>,
    mean_knots_per_coordinate: Vec<f64>,
    input_gmsd: Option<f64>,
    denoised_gmsd: Option<f64>,
}

pub fn run(args: DenoiseArgs) -> CliResult<()> {
    let table = read_table(&args.input)?;
    if args.intrinsic_dim == 0 || args.intrinsic_dim >= table.ncols().max(1) {
        return Err(CliError::Usage(format!(
            "--intrinsic-dim must lie in 1..{} for {} ambient coordinates",
            table.ncols(),
            table.ncols()
        )));
    }
    let points = PointCloud::new(table.rows.clone())?;
    let config = args.chain.config(args.intrinsic_dim)?;
    let oracle = match args.oracle {
        Some(o) => {
            let shape = o.shape();
            if shape.ambient_dim() != points.ambient_dim() {
                return Err(CliError::Usage(format!(
                    "oracle manifold lives in {} dimensions, input has {}",
                    shape.ambient_dim(),
                    points.ambient_dim()
                )));
            }
            Some(ManifoldOracle::new(shape))
        }
        None => None,
    };

    let out = output_dir(args.out.clone())?;
    let mut manifest = ManifestBuilder::new("denoise", serde_json::json!({ "args": &args, "chain": &config }))?;
    manifest.seed("chain", config.seed);
    manifest.input(&args.input);

    let t0 = Instant::now();
    let (embedding, rec) = denoise(&points, args.neighbors, args.intrinsic_dim, &config)?;
    manifest.time("denoise_seconds", t0);

    let embedding_path = out.join("embedding.csv");
    write_numeric(&embedding_path, &numbered("u", embedding.dim()), &embedding.coords)?;
    let denoised_path = out.join("denoised.csv");
    write_numeric(&denoised_path, &table.header, rec.denoised.rows())?;

    let summary = DenoiseSummary {
        points: points.len(),
        ambient_dim: points.ambient_dim(),
        intrinsic_dim: embedding.dim(),
        neighbors: embedding.neighbors,
        eigenvalues: embedding.eigenvalues.clone(),
        mean_knots_per_coordinate: rec
            .traces
            .iter()
            .map(|t| t.states().map(|s| s.total_knots() as f64).sum::<f64>() / t.len() as f64)
            .collect(),
        input_gmsd: oracle.as_ref().map(|o| gmsd(&points, o)),
        denoised_gmsd: oracle.as_ref().map(|o| gmsd(&rec.denoised, o)),
    };
    let summary_path = out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;

    for p in [&embedding_path, &denoised_path, &summary_path] {
        manifest.output(p);
    }
    manifest.write(&out)?;

    println!("denoise: {} points, {}-dimensional embedding", summary.points, summary.intrinsic_dim);
    if let (Some(a), Some(b)) = (summary.input_gmsd, summary.denoised_gmsd) {
        println!("gmsd {a:.6} -> {b:.6} (ratio {:.4})", b / a);
    }
    println!("wrote {}", out.display());
    Ok(())
}
