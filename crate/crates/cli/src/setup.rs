//! Config loading, output directories and the Jacobian cache.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use eittrack::fem::Jacobian;
use eittrack::sim::{inverse_jacobian, parse_method_list, parse_snr_list, ExperimentConfig};
use log::{info, warn};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::args::CommonArgs;
use crate::error::{CliError, CliResult};

/// Bumped whenever the cached matrix would change for identical inputs.
const JACOBIAN_FORMAT: u32 = 1;

pub fn load_config(args: &CommonArgs) -> CliResult<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let usage = |e: eittrack::Error| CliError::Usage(e.to_string());
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(snr) = &args.snr {
        config.snr_db = parse_snr_list(snr).map_err(usage)?;
    }
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(frames) = args.frames {
        config.frames = frames;
    }
    if let Some(methods) = &args.methods {
        config.methods = parse_method_list(methods).map_err(usage)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn thread_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs:?} workers: {e}")))
}

/// Creates `dir` and proves it accepts files.
pub fn prepare_output(dir: &Path) -> CliResult<()> {
    let fail = |source| CliError::Output {
        path: dir.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".eittrack-probe");
    fs::write(&probe, b"").map_err(fail)?;
    fs::remove_file(&probe).map_err(fail)?;
    Ok(())
}

/// Writes a file through a buffered writer, attributing I/O errors to `path`.
pub fn write_file<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> eittrack::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| match e {
        eittrack::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Hex SHA-256 over every setting the inverse-mesh Jacobian depends on.
pub fn jacobian_key(config: &ExperimentConfig) -> String {
    let text = format!(
        "format={JACOBIAN_FORMAT}\nelectrodes={}\ncoverage={}\ncontact_impedance={}\ninverse_elements={}\nmesh_seed={}\nsigma_baseline={}\n",
        config.electrodes,
        config.coverage,
        config.contact_impedance,
        config.inverse_elements,
        config.mesh_seed,
        config.sigma_baseline,
    );
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub struct CachedJacobian {
    pub matrix: DMatrix<f64>,
    pub path: PathBuf,
    pub key: String,
    pub hit: bool,
}

/// Loads the Jacobian for `config` from `dir`, computing and storing it when
/// absent or unreadable.
pub fn cached_jacobian(config: &ExperimentConfig, dir: &Path) -> CliResult<CachedJacobian> {
    let key = jacobian_key(config);
    let path = dir.join(format!("jacobian-{}.bin", &key[..16]));
    if path.exists() {
        let loaded = fs::File::open(&path)
            .map_err(eittrack::Error::from)
            .and_then(|f| Jacobian::read_binary(BufReader::new(f)));
        match loaded {
            Ok(matrix) => {
                info!("reusing cached Jacobian {}", path.display());
                return Ok(CachedJacobian {
                    matrix,
                    path,
                    key,
                    hit: true,
                });
            }
            Err(e) => warn!("ignoring unreadable cache {}: {e}", path.display()),
        }
    }
    info!("computing Jacobian (cache miss)");
    let matrix = inverse_jacobian(config)?;
    prepare_output(dir)?;
    write_file(&path, |w| Jacobian::write_binary(&matrix, w))?;
    Ok(CachedJacobian {
        matrix,
        path,
        key,
        hit: false,
    })
}
