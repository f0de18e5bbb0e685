use std::fmt::Write as _;
use std::path::Path;

use super::{atomic_write, read_text};
use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, TriangleMesh};
use crate::model::LatentCode;

/// C-style `%.9g`: nine significant digits, trailing zeros trimmed, exponent
/// form outside `[1e-4, 1e9)`.
pub fn format_g(x: f64) -> String {
    const P: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn context(path: &Path) -> String {
    path.display().to_string()
}

/// Vertices and faces of an ASCII PLY file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<Point>,
    pub faces: Vec<Vec<usize>>,
}

/// Parses ASCII PLY with a vertex element carrying `x`, `y`, `z` (other
/// scalar properties are skipped) and an optional face element with a list
/// property.
pub fn parse_ply(text: &str, ctx: &str) -> Result<PlyData> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(ctx, 1, "missing 'ply' magic")),
    }
    struct Element {
        name: String,
        count: usize,
        props: Vec<(String, bool)>,
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    let mut header_end = 0;
    for (n, line) in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", "1.0"] => format_seen = true,
            ["format", other, ..] => {
                return Err(Error::parse(ctx, n, format!("unsupported PLY format '{other}' (ascii only)")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(ctx, n, format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| Error::parse(ctx, n, "property before element"))?
                .props
                .push((name.to_string(), true)),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| Error::parse(ctx, n, "property before element"))?
                .props
                .push((name.to_string(), false)),
            ["end_header"] => {
                header_end = n;
                break;
            }
            _ => return Err(Error::parse(ctx, n, format!("unexpected header line '{line}'"))),
        }
    }
    if header_end == 0 {
        return Err(Error::parse(ctx, 0, "missing end_header"));
    }
    if !format_seen {
        return Err(Error::parse(ctx, header_end, "missing 'format ascii 1.0'"));
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut data = PlyData::default();
    for el in &elements {
        let xyz: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|k| el.props.iter().position(|(p, list)| p == k && !list))
            .collect();
        for _ in 0..el.count {
            let (n, line) = body
                .next()
                .ok_or_else(|| Error::parse(ctx, 0, format!("truncated '{}' element", el.name)))?;
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| Error::parse(ctx, n, format!("non-numeric value in '{line}'")))?;
            match el.name.as_str() {
                "vertex" => {
                    let [Some(ix), Some(iy), Some(iz)] = xyz[..] else {
                        return Err(Error::parse(ctx, n, "vertex element lacks x/y/z"));
                    };
                    if el.props.iter().any(|(_, list)| *list) {
                        return Err(Error::parse(ctx, n, "list properties on vertices are not supported"));
                    }
                    if nums.len() != el.props.len() {
                        return Err(Error::parse(ctx, n, format!("expected {} values", el.props.len())));
                    }
                    let p = Point::new(nums[ix], nums[iy], nums[iz]);
                    if !p.iter().all(|c| c.is_finite()) {
                        return Err(Error::parse(ctx, n, "non-finite coordinate"));
                    }
                    data.vertices.push(p);
                }
                "face" => {
                    let k = *nums.first().ok_or_else(|| Error::parse(ctx, n, "empty face line"))? as usize;
                    if nums.len() < k + 1 || k < 3 {
                        return Err(Error::parse(ctx, n, "malformed face list"));
                    }
                    data.faces.push(nums[1..=k].iter().map(|&v| v as usize).collect());
                }
                _ => {}
            }
        }
    }
    Ok(data)
}

/// Parses OFF (`OFF`, counts line, vertices, polygon faces).
pub fn parse_off(text: &str, ctx: &str) -> Result<PlyData> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n0, first) = lines.next().ok_or_else(|| Error::parse(ctx, 0, "empty OFF file"))?;
    let counts_line = if first == "OFF" {
        lines.next().ok_or_else(|| Error::parse(ctx, n0, "missing counts"))?
    } else if let Some(rest) = first.strip_prefix("OFF") {
        (n0, rest.trim())
    } else {
        return Err(Error::parse(ctx, n0, "missing 'OFF' magic"));
    };
    let counts: Vec<usize> = counts_line
        .1
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| Error::parse(ctx, counts_line.0, "bad counts line"))?;
    let [nv, nf, ..] = counts[..] else {
        return Err(Error::parse(ctx, counts_line.0, "counts line needs vertex and face counts"));
    };
    let mut data = PlyData::default();
    for _ in 0..nv {
        let (n, l) = lines.next().ok_or_else(|| Error::parse(ctx, 0, "truncated vertex list"))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| Error::parse(ctx, n, "bad vertex"))?;
        if v.len() < 3 || !v[..3].iter().all(|c| c.is_finite()) {
            return Err(Error::parse(ctx, n, "vertex needs three finite coordinates"));
        }
        data.vertices.push(Point::new(v[0], v[1], v[2]));
    }
    for _ in 0..nf {
        let (n, l) = lines.next().ok_or_else(|| Error::parse(ctx, 0, "truncated face list"))?;
        let v: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| Error::parse(ctx, n, "bad face"))?;
        let k = *v.first().unwrap_or(&0);
        if k < 3 || v.len() < k + 1 {
            return Err(Error::parse(ctx, n, "malformed face"));
        }
        data.faces.push(v[1..=k].to_vec());
    }
    Ok(data)
}

/// Whitespace-separated `x y z` rows; extra columns are ignored.
pub fn parse_xyz(text: &str, ctx: &str) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .take(3)
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| Error::parse(ctx, i + 1, format!("bad point '{line}'")))?;
        if v.len() != 3 || !v.iter().all(|c| c.is_finite()) {
            return Err(Error::parse(ctx, i + 1, "point needs three finite coordinates"));
        }
        pts.push(Point::new(v[0], v[1], v[2]));
    }
    PointCloud::new(pts)
}

fn triangulate(data: PlyData) -> Result<TriangleMesh> {
    let mut tris = Vec::new();
    for f in &data.faces {
        for k in 1..f.len() - 1 {
            tris.push([f[0], f[k], f[k + 1]]);
        }
    }
    TriangleMesh::new(data.vertices, tris)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads a point cloud from `.ply`, `.off` (vertices only) or `.xyz`/`.txt`.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = read_text(path)?;
    let ctx = context(path);
    match extension(path).as_str() {
        "ply" => PointCloud::new(parse_ply(&text, &ctx)?.vertices),
        "off" => PointCloud::new(parse_off(&text, &ctx)?.vertices),
        _ => parse_xyz(&text, &ctx),
    }
}

/// Reads a triangle mesh from `.ply` or `.off`; polygons are fan-triangulated.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let text = read_text(path)?;
    let ctx = context(path);
    let data = match extension(path).as_str() {
        "ply" => parse_ply(&text, &ctx)?,
        "off" => parse_off(&text, &ctx)?,
        other => return Err(Error::parse(ctx, 0, format!("unsupported mesh extension '{other}'"))),
    };
    if data.faces.is_empty() {
        return Err(Error::parse(ctx, 0, "mesh has no faces"));
    }
    triangulate(data)
}

fn vertex_lines(out: &mut String, points: &[Point]) {
    for p in points {
        let _ = writeln!(out, "{} {} {}", format_g(p.x), format_g(p.y), format_g(p.z));
    }
}

pub fn render_ply_cloud(cloud: &PointCloud) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    vertex_lines(&mut s, cloud.points());
    s
}

pub fn render_ply_mesh(mesh: &TriangleMesh) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    vertex_lines(&mut s, mesh.vertices());
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    s
}

pub fn render_xyz(cloud: &PointCloud) -> String {
    let mut s = String::new();
    vertex_lines(&mut s, cloud.points());
    s
}

/// Writes PLY for `.ply` paths and XYZ otherwise (including stdout).
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let text = if extension(path) == "ply" {
        render_ply_cloud(cloud)
    } else {
        render_xyz(cloud)
    };
    atomic_write(path, text.as_bytes())
}

/// One value per line in shortest round-trip form.
pub fn render_latent(z: &LatentCode) -> String {
    z.values().iter().map(|v| format!("{v}\n")).collect()
}

pub fn parse_latent(text: &str, ctx: &str) -> Result<LatentCode> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::parse(ctx, i + 1, format!("bad latent value '{line}'")))?;
        if !v.is_finite() {
            return Err(Error::parse(ctx, i + 1, "non-finite latent value"));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::parse(ctx, 0, "empty latent file"));
    }
    Ok(LatentCode(values))
}

pub fn write_latent(path: &Path, z: &LatentCode) -> Result<()> {
    atomic_write(path, render_latent(z).as_bytes())
}

pub fn read_latent(path: &Path) -> Result<LatentCode> {
    parse_latent(&read_text(path)?, &context(path))
}
