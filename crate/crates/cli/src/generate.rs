//! Dataset generation and format conversion commands.

use std::path::{Path, PathBuf};

use prae_core::data::{
    default_recipes, generate_synthetic, read_packed, read_ply, read_xyz, write_packed, write_ply, write_xyz,
    FileFormat, ShapeRecipe, DEFAULT_CATEGORIES,
};
use prae_core::metrics::PointCloud;

use crate::{CliError, CliResult};

/// Builds recipes for the named categories (`instances` of each) and writes
/// a packed dataset plus a JSON manifest next to it.
pub fn run_generate(shapes: &[String], instances: usize, points: usize, seed: u64, out: &Path) -> CliResult<()> {
    if instances == 0 {
        return Err(CliError::Config("need at least one instance per shape".into()));
    }
    for s in shapes {
        if !DEFAULT_CATEGORIES.contains(&s.as_str()) {
            return Err(CliError::Config(format!(
                "unknown shape {s:?}; available: {}",
                DEFAULT_CATEGORIES.join(", ")
            )));
        }
    }
    let all = default_recipes(instances, seed);
    let recipes: Vec<ShapeRecipe> = all
        .into_iter()
        .filter(|r| shapes.iter().any(|s| s == &r.category))
        .collect();
    if recipes.is_empty() {
        return Err(CliError::Config("no shapes selected".into()));
    }
    let ds = generate_synthetic(&recipes, points, seed)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_packed(out, &ds.clouds)?;
    let manifest_path = out.with_extension("manifest.json");
    let manifest = serde_json::to_string_pretty(&ds.manifest).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(&manifest_path, manifest)?;
    println!(
        "wrote {} clouds of {} points to {} (manifest {})",
        ds.len(),
        ds.k,
        out.display(),
        manifest_path.display()
    );
    Ok(())
}

fn read_any(path: &Path, format: FileFormat) -> CliResult<Vec<PointCloud>> {
    Ok(match format {
        FileFormat::AsciiXyz => vec![read_xyz(path)?],
        FileFormat::AsciiPly => vec![read_ply(path)?],
        FileFormat::PackedBinary => read_packed(path)?,
    })
}

/// Converts between the three formats. Ascii targets write one file per
/// cloud (into `out` as a directory when more than one cloud is involved);
/// the packed target collects everything into a single file.
pub fn run_convert(inputs: &[PathBuf], from: FileFormat, to: FileFormat, out: &Path) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(CliError::Config("no input files".into()));
    }
    let mut clouds = Vec::new();
    for path in inputs {
        clouds.extend(read_any(path, from)?);
    }
    match to {
        FileFormat::PackedBinary => {
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            write_packed(out, &clouds)?;
            println!("wrote {} clouds to {}", clouds.len(), out.display());
        }
        ascii => {
            let write_one = |path: &Path, cloud: &PointCloud| -> CliResult<()> {
                match ascii {
                    FileFormat::AsciiXyz => write_xyz(path, cloud)?,
                    FileFormat::AsciiPly => write_ply(path, cloud)?,
                    FileFormat::PackedBinary => unreachable!(),
                }
                Ok(())
            };
            let ext = match ascii {
                FileFormat::AsciiXyz => "xyz",
                _ => "ply",
            };
            if clouds.len() == 1 {
                write_one(out, &clouds[0])?;
                println!("wrote {}", out.display());
            } else {
                std::fs::create_dir_all(out)?;
                for (i, cloud) in clouds.iter().enumerate() {
                    write_one(&out.join(format!("cloud_{i:04}.{ext}")), cloud)?;
                }
                println!("wrote {} files to {}", clouds.len(), out.display());
            }
        }
    }
    Ok(())
}
