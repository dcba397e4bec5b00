//! Flat binary records (little-endian `f64`, one row per time step or grid node) with a
//! `key = value` text header stored next to the data file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use super::fields::TorusDomain;
use super::grid::PeriodicGrid;
use super::sampler::Path;
use crate::error::{Error, Result};

fn header_path(data: &FsPath) -> PathBuf {
    let mut p = data.as_os_str().to_owned();
    p.push(".hdr");
    PathBuf::from(p)
}

fn write_records(data: &FsPath, rows: impl Iterator<Item = f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(data)?);
    for v in rows {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_records(data: &FsPath) -> Result<Vec<f64>> {
    let bytes = fs::read(data)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Io(format!("{} is not a whole number of f64 records", data.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

fn write_header(data: &FsPath, entries: &[(&str, String)]) -> Result<()> {
    let mut s = String::new();
    for (k, v) in entries {
        s.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(header_path(data), s)?;
    Ok(())
}

fn read_header(data: &FsPath) -> Result<BTreeMap<String, String>> {
    let path = header_path(data);
    let text = fs::read_to_string(&path)?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Io(format!("{}:{}: expected `key = value`", path.display(), i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    map.get(key)
        .ok_or_else(|| Error::Io(format!("header is missing `{key}`")))?
        .parse()
        .map_err(|_| Error::Io(format!("header field `{key}` is malformed")))
}

fn list<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Vec<T>> {
    let raw: String = field(map, key)?;
    raw.split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::Io(format!("header field `{key}` is malformed"))))
        .collect()
}

/// Metadata of a stored path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathHeader {
    pub dim: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
}

/// Writes `dim` coordinates per time step to `data` and the header to `data.hdr`.
pub fn write_path(path: &Path, data: &FsPath) -> Result<()> {
    let dim = path.dim;
    write_records(data, path.points.iter().flat_map(|x| x[..dim].to_vec()))?;
    write_header(
        data,
        &[
            ("dim", dim.to_string()),
            ("dt", format!("{:e}", path.dt)),
            ("n_steps", path.n_steps().to_string()),
            ("seed", path.seed.to_string()),
        ],
    )
}

pub fn read_path(data: &FsPath) -> Result<Path> {
    let map = read_header(data)?;
    let h = PathHeader {
        dim: field(&map, "dim")?,
        dt: field(&map, "dt")?,
        n_steps: field(&map, "n_steps")?,
        seed: field(&map, "seed")?,
    };
    if !(h.dim == 1 || h.dim == 2) {
        return Err(Error::Io(format!("unsupported path dimension {}", h.dim)));
    }
    let v = read_records(data)?;
    if v.len() != (h.n_steps + 1) * h.dim {
        return Err(Error::Io(format!(
            "expected {} records, found {}",
            (h.n_steps + 1) * h.dim,
            v.len()
        )));
    }
    let points = v
        .chunks_exact(h.dim)
        .map(|c| if h.dim == 1 { [c[0], 0.0] } else { [c[0], c[1]] })
        .collect();
    Ok(Path { dim: h.dim, dt: h.dt, seed: h.seed, points })
}

/// Grid metadata of a stored field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHeader {
    pub grid: PeriodicGrid,
    /// Values per node.
    pub components: usize,
}

/// Writes `components` values per node (node order of the grid) to `data`.
pub fn write_field(grid: &PeriodicGrid, components: usize, values: &[f64], data: &FsPath) -> Result<()> {
    if components == 0 || values.len() != grid.len() * components {
        return Err(Error::DimensionMismatch { expected: grid.len() * components.max(1), got: values.len() });
    }
    let dim = grid.dim();
    let join = |f: &dyn Fn(usize) -> String| (0..dim).map(f).collect::<Vec<_>>().join(" ");
    write_records(data, values.iter().copied())?;
    write_header(
        data,
        &[
            ("dim", dim.to_string()),
            ("nodes", join(&|a| grid.nodes(a).to_string())),
            ("period", join(&|a| format!("{:e}", grid.domain().period(a)))),
            ("components", components.to_string()),
        ],
    )
}

pub fn read_field(data: &FsPath) -> Result<(FieldHeader, Vec<f64>)> {
    let map = read_header(data)?;
    let dim: usize = field(&map, "dim")?;
    let nodes: Vec<usize> = list(&map, "nodes")?;
    let period: Vec<f64> = list(&map, "period")?;
    let components: usize = field(&map, "components")?;
    let grid = PeriodicGrid::new(TorusDomain::new(dim, &period)?, &nodes)?;
    let v = read_records(data)?;
    if v.len() != grid.len() * components {
        return Err(Error::Io(format!("expected {} records, found {}", grid.len() * components, v.len())));
    }
    Ok((FieldHeader { grid, components }, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::fields::{MobilitySpec, PotentialSpec};
    use crate::diffusion::sampler::euler_maruyama;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("accelmc-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn path_round_trip() {
        let pot = PotentialSpec::cosine_2d(1.0).unwrap();
        let p = euler_maruyama(&pot, &MobilitySpec::identity(), None, [0.5, 0.5], 1e-3, 200, 9).unwrap();
        let file = scratch("path.bin");
        write_path(&p, &file).unwrap();
        assert_eq!(fs::metadata(&file).unwrap().len(), 201 * 2 * 8);
        assert_eq!(read_path(&file).unwrap(), p);
    }

    #[test]
    fn field_round_trip() {
        let g = PeriodicGrid::new(TorusDomain::new(2, &[1.0, 2.0]).unwrap(), &[16, 20]).unwrap();
        let v = g.sample(|x| x[0] + 10.0 * x[1]);
        let file = scratch("field.bin");
        write_field(&g, 1, &v, &file).unwrap();
        let (h, back) = read_field(&file).unwrap();
        assert_eq!(h.grid, g);
        assert_eq!(back, v);
        assert!(write_field(&g, 2, &v, &file).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let pot = PotentialSpec::cosine_1d(1.0).unwrap();
        let p = euler_maruyama(&pot, &MobilitySpec::identity(), None, [0.5, 0.0], 1e-3, 10, 1).unwrap();
        let file = scratch("short.bin");
        write_path(&p, &file).unwrap();
        let bytes = fs::read(&file).unwrap();
        fs::write(&file, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_path(&file), Err(Error::Io(_))));
    }
}
