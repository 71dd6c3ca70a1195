//! Mesh and rod file formats: OBJ, legacy ASCII VTK polydata, rod CSV.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use memrod_core::coupling::RodSample;
use memrod_core::Vec3;

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn parse_f64(s: &str) -> io::Result<f64> {
    s.trim().parse().map_err(|_| invalid(format!("bad number `{s}`")))
}

/// Triangle mesh with optional per-point scalar arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfaceData {
    pub points: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

pub fn write_obj(path: &Path, points: &[Vec3], triangles: &[[u32; 3]]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in points {
        writeln!(w, "v {:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])?;
    }
    for t in triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()
}

pub fn read_obj(path: &Path) -> io::Result<SurfaceData> {
    let mut out = SurfaceData::default();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.take(3).map(parse_f64).collect::<io::Result<_>>()?;
                if c.len() != 3 {
                    return Err(invalid("vertex needs three coordinates"));
                }
                out.points.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or(s);
                        head.parse::<u32>().ok().filter(|&i| i > 0).map(|i| i - 1).ok_or_else(|| invalid(format!("bad index `{s}`")))
                    })
                    .collect::<io::Result<_>>()?;
                if idx.len() != 3 {
                    return Err(invalid("only triangles are supported"));
                }
                out.triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Legacy ASCII POLYDATA with one `SCALARS` array per entry of `scalars`.
pub fn write_vtk(path: &Path, points: &[Vec3], triangles: &[[u32; 3]], scalars: &[(&str, &[f64])]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "memrod surface")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET POLYDATA")?;
    writeln!(w, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(w, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])?;
    }
    writeln!(w, "POLYGONS {} {}", triangles.len(), 4 * triangles.len())?;
    for t in triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    if !scalars.is_empty() {
        writeln!(w, "POINT_DATA {}", points.len())?;
        for (name, values) in scalars {
            if values.len() != points.len() {
                return Err(invalid(format!("array `{name}` has {} values for {} points", values.len(), points.len())));
            }
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(w, "{v:.16e}")?;
            }
        }
    }
    w.flush()
}

pub fn read_vtk(path: &Path) -> io::Result<SurfaceData> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = text.lines().skip(4).flat_map(str::split_whitespace);
    let mut next = || tokens.next().ok_or_else(|| invalid("unexpected end of file"));
    let mut out = SurfaceData::default();
    let mut n_point_data = 0;
    while let Ok(word) = next() {
        match word {
            "POINTS" => {
                let n: usize = next()?.parse().map_err(|_| invalid("bad point count"))?;
                next()?;
                for _ in 0..n {
                    out.points.push(Vec3::new(parse_f64(next()?)?, parse_f64(next()?)?, parse_f64(next()?)?));
                }
            }
            "POLYGONS" => {
                let n: usize = next()?.parse().map_err(|_| invalid("bad polygon count"))?;
                next()?;
                for _ in 0..n {
                    if next()? != "3" {
                        return Err(invalid("only triangles are supported"));
                    }
                    let mut t = [0u32; 3];
                    for c in &mut t {
                        *c = next()?.parse().map_err(|_| invalid("bad index"))?;
                    }
                    out.triangles.push(t);
                }
            }
            "POINT_DATA" => n_point_data = next()?.parse().map_err(|_| invalid("bad count"))?,
            "SCALARS" => {
                let name = next()?.to_owned();
                next()?;
                next()?;
                if next()? != "LOOKUP_TABLE" {
                    return Err(invalid("expected LOOKUP_TABLE"));
                }
                next()?;
                let values = (0..n_point_data).map(|_| parse_f64(next()?)).collect::<io::Result<_>>()?;
                out.scalars.push((name, values));
            }
            other => return Err(invalid(format!("unexpected `{other}`"))),
        }
    }
    Ok(out)
}

pub const ROD_CSV_HEADER: &str =
    "S,x,y,z,d1x,d1y,d1z,d2x,d2y,d2z,d3x,d3y,d3z,nu3,kappa1,kappa2,kappa3";

/// One parsed row of a rod CSV file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RodRow {
    pub s: f64,
    pub position: Vec3,
    pub directors: [Vec3; 3],
    pub nu3: f64,
    pub kappa: [f64; 3],
}

pub fn write_rod_csv(path: &Path, samples: &[RodSample]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{ROD_CSV_HEADER}")?;
    for s in samples {
        let mut fields = vec![s.s, s.position[0], s.position[1], s.position[2]];
        for d in &s.directors {
            fields.extend_from_slice(&d.0);
        }
        fields.push(s.strains.nu3);
        fields.extend_from_slice(&s.strains.kappa);
        let line: Vec<String> = fields.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

pub fn read_rod_csv(path: &Path) -> io::Result<Vec<RodRow>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| invalid("empty file"))??;
    if header.trim_end() != ROD_CSV_HEADER {
        return Err(invalid("unexpected header"));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line.split(',').map(parse_f64).collect::<io::Result<_>>()?;
        if v.len() != 17 {
            return Err(invalid(format!("expected 17 columns, got {}", v.len())));
        }
        let vec = |k: usize| Vec3::new(v[k], v[k + 1], v[k + 2]);
        rows.push(RodRow {
            s: v[0],
            position: vec(1),
            directors: [vec(4), vec(7), vec(10)],
            nu3: v[13],
            kappa: [v[14], v[15], v[16]],
        });
    }
    Ok(rows)
}
