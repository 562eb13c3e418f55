use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eittrack::mesh::{generate_disk_mesh, Mesh};
use eittrack::sim::{run_experiment_with, ExperimentSetup, Trackers};
use log::info;
use nalgebra::DVector;
use serde_json::json;

use crate::args::{CommonArgs, ReportArgs, TrackArgs};
use crate::error::{CliError, CliResult};
use crate::report;
use crate::setup::{cached_jacobian, load_config, prepare_output, thread_pool, write_file};

fn cache_dir(args: &CommonArgs) -> PathBuf {
    args.cache.clone().unwrap_or_else(|| args.out.join("cache"))
}

fn write_mesh(path: &Path, mesh: &Mesh) -> CliResult<()> {
    write_file(path, |w| mesh.write_text(w))
}

pub fn mesh(args: &CommonArgs) -> CliResult<()> {
    let config = load_config(args)?;
    prepare_output(&args.out)?;
    for (name, target) in [
        ("forward", config.forward_elements),
        ("inverse", config.inverse_elements),
    ] {
        let mesh = generate_disk_mesh(target, config.mesh_seed)?;
        let path = args.out.join(format!("{name}.mesh"));
        write_mesh(&path, &mesh)?;
        println!(
            "{name} mesh: {} elements, {} nodes -> {}",
            mesh.element_count(),
            mesh.node_count(),
            path.display()
        );
    }
    Ok(())
}

pub fn experiment(args: &CommonArgs) -> CliResult<()> {
    let started = Instant::now();
    let config = load_config(args)?;
    let pool = thread_pool(args.jobs)?;
    prepare_output(&args.out)?;
    let out = &args.out;

    let config_path = out.join("config.txt");
    fs::write(&config_path, config.to_text()).map_err(|e| CliError::io(&config_path, e))?;

    let cached = pool.install(|| cached_jacobian(&config, &cache_dir(args)))?;
    let jacobian_done = Instant::now();
    let setup = pool.install(|| ExperimentSetup::build(&config, Some(cached.matrix.clone())))?;
    let setup_done = Instant::now();
    let result = pool.install(|| run_experiment_with(&config, &setup))?;
    let runs_done = Instant::now();

    let forward_path = out.join("forward.mesh");
    let inverse_path = out.join("inverse.mesh");
    let results_path = out.join("results.csv");
    let aggregate_path = out.join("aggregate.csv");
    write_mesh(&forward_path, &setup.forward_mesh)?;
    write_mesh(&inverse_path, &setup.trackers.mesh)?;
    write_file(&results_path, |w| result.write_results_csv(w))?;
    write_file(&aggregate_path, |w| result.write_aggregate_csv(w))?;

    let failures: Vec<_> = result
        .failures
        .iter()
        .map(|f| json!({"snr_db": result.snr_db[f.snr_index], "run": f.run, "message": f.message}))
        .collect();
    let manifest = json!({
        "tool": "eittrack",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config.to_text(),
        "jacobian_cache": {
            "path": cached.path.display().to_string(),
            "key": cached.key,
            "hit": cached.hit,
        },
        "artifacts": {
            "config": config_path.display().to_string(),
            "forward_mesh": forward_path.display().to_string(),
            "inverse_mesh": inverse_path.display().to_string(),
            "jacobian": cached.path.display().to_string(),
            "results": results_path.display().to_string(),
            "aggregate": aggregate_path.display().to_string(),
        },
        "timings_s": {
            "jacobian": (jacobian_done - started).as_secs_f64(),
            "setup": (setup_done - jacobian_done).as_secs_f64(),
            "runs": (runs_done - setup_done).as_secs_f64(),
            "total": started.elapsed().as_secs_f64(),
        },
        "runs_completed": result.runs.len(),
        "failures": failures,
    });
    let manifest_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(|e| CliError::io(&manifest_path, e))?;

    let mut stdout = std::io::stdout().lock();
    result
        .write_aggregate_csv(&mut stdout)
        .map_err(CliError::from)?;
    if !result.failures.is_empty() {
        writeln!(
            stdout,
            "{} runs failed; see manifest.json",
            result.failures.len()
        )
        .ok();
    }
    info!("finished in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

/// Reads difference frames: one row per frame, `#` starts a comment line.
fn read_frames(path: &Path, expected: usize) -> CliResult<Vec<DVector<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(path, e.to_string()))?;
    let mut frames = Vec::new();
    // Rows count data lines only; comment lines are skipped by the reader.
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::input(path, format!("row {row}: {e}")))?;
        if record.len() != expected {
            return Err(CliError::input(
                path,
                format!(
                    "row {row}: expected {expected} values, found {}",
                    record.len()
                ),
            ));
        }
        let values = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::input(path, format!("row {row}: {e}")))?;
        frames.push(DVector::from_vec(values));
    }
    if frames.is_empty() {
        return Err(CliError::input(path, "no frames"));
    }
    Ok(frames)
}

pub fn track(args: &TrackArgs) -> CliResult<()> {
    let common = &args.common;
    let config = load_config(common)?;
    let pool = thread_pool(common.jobs)?;
    prepare_output(&common.out)?;
    let cached = pool.install(|| cached_jacobian(&config, &cache_dir(common)))?;
    let trackers = Trackers::build(&config, Some(cached.matrix))?;
    let frames = read_frames(&args.input, trackers.protocol.n_m())?;
    info!("{} frames from {}", frames.len(), args.input.display());

    let path = common.out.join("tracks.csv");
    let mut text = String::from("method,frame,element,x,y\n");
    for &method in &config.methods {
        let track =
            pool.install(|| trackers.track(method, &frames, config.gmm_components, config.seed))?;
        for (t, (e, c)) in track.iter().enumerate() {
            text.push_str(&format!("{method},{t},{e},{},{}\n", c.x, c.y));
        }
    }
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    println!("{} frames tracked -> {}", frames.len(), path.display());
    Ok(())
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    let table = report::read_results(&args.results)?;
    prepare_output(&args.out)?;
    for (name, svg) in report::render(&table) {
        let path = args.out.join(name);
        fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}
