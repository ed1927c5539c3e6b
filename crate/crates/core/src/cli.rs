//! Command implementations behind the `conetomo` binary: forward projection
//! to containers, consistency checks, reconstruction and scripted demos.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::beam::{FieldBeam, GriddedField, OutputGrid};
use crate::cone::{
    check_compton_range, check_crt_range, forward_compton, forward_crt, reconstruct_from_crt, ConeData, GeometryTag,
};
use crate::config::{BumpSpec, RunConfig};
use crate::container::{read_c64, read_f64, write_c64, write_f64, Dtype, Meta};
use crate::corruption::{Corruption, CorruptedBeam};
use crate::error::{invalid, Error, Result};
use crate::geometry::sphere_grid;
use crate::phantom::{ScalarField, SupportBox};
use crate::planar::{
    build_h, check_planar, fourier_w, projective_data, reconstruct_from_h, HData, PlanarGrids,
    ProjectiveData, SupportCone,
};
use crate::report::ConsistencyReport;

pub const DEMOS: [&str; 3] = ["convex-crt", "planar-compton", "corruption-sweep"];
pub const SWEEP_AMPLITUDES: [f64; 5] = [0.0, 0.01, 0.02, 0.05, 0.1];

fn flat_points(pts: &[[f64; 3]], n: usize) -> Vec<f64> {
    pts.iter().flat_map(|p| p[..n].to_vec()).collect()
}

fn unflat_points(xs: &[f64], n: usize) -> Vec<[f64; 3]> {
    xs.chunks_exact(n)
        .map(|c| {
            let mut p = [0.0; 3];
            p[..n].copy_from_slice(c);
            p
        })
        .collect()
}

pub fn write_cone(dir: &Path, g: &ConeData) -> Result<()> {
    let meta = Meta::new("cone", vec![g.vertices.len(), g.grid.len(), g.ns()], Dtype::F64)
        .axis("vertices", flat_points(&g.vertices, g.dim))
        .axis("beta", flat_points(&g.grid.nodes, g.dim))
        .axis("s", g.s.clone())
        .attr("geometry", g.geometry)
        .attr("dim", g.dim)
        .attr("k", g.k)
        .attr("s_max", g.s_max)
        .attr("sphere_resolution", g.grid.resolution);
    write_f64(dir, &meta, &g.values)
}

pub fn read_cone(dir: &Path) -> Result<ConeData> {
    let (meta, values) = read_f64(dir)?;
    let dim: usize = meta.get_attr("dim")?;
    let grid = sphere_grid(dim, meta.get_attr("sphere_resolution")?)?;
    let beta = unflat_points(meta.get_axis("beta")?, dim);
    if beta.len() != grid.len() || beta.iter().zip(&grid.nodes).any(|(a, b)| (0..3).any(|d| (a[d] - b[d]).abs() > 1e-12)) {
        return Err(Error::Schema("cone: beta axis is not the declared sphere grid".into()));
    }
    let g = ConeData {
        geometry: meta.get_attr("geometry")?,
        dim,
        k: meta.get_attr("k")?,
        vertices: unflat_points(meta.get_axis("vertices")?, dim),
        grid,
        s: meta.get_axis("s")?.to_vec(),
        s_max: meta.get_attr("s_max")?,
        values,
    };
    if meta.shape != [g.vertices.len(), g.grid.len(), g.ns()] {
        return Err(Error::Schema("cone: shape disagrees with the axes".into()));
    }
    g.validate()?;
    Ok(g)
}

fn planar_meta(name: &str, shape: Vec<usize>, dtype: Dtype, dim: usize, k: usize, grids: &PlanarGrids) -> Meta {
    Meta::new(name, shape, dtype)
        .attr("dim", dim)
        .attr("k", k)
        .attr("grids", grids)
}

pub fn write_w(dir: &Path, w: &ProjectiveData) -> Result<()> {
    let g = &w.grids;
    let meta = planar_meta("w", vec![w.n_abar(), w.n_pbar()], Dtype::F64, w.dim, w.k, g)
        .axis("a", g.a_axis())
        .axis("p", g.p_axis());
    write_f64(dir, &meta, &w.values)
}

pub fn read_w(dir: &Path) -> Result<ProjectiveData> {
    let (meta, values) = read_f64(dir)?;
    let w = ProjectiveData {
        dim: meta.get_attr("dim")?,
        k: meta.get_attr("k")?,
        grids: meta.get_attr("grids")?,
        values,
    };
    w.validate()?;
    Ok(w)
}

/// Writes `W`, `H` and `h` next to each other under `dir`.
pub fn write_spectral(dir: &Path, w: &ProjectiveData, h: Option<&HData>) -> Result<()> {
    let spectral = fourier_w(w)?;
    let g = &w.grids;
    let meta = planar_meta("W", vec![w.n_abar(), w.n_pbar()], Dtype::C64, w.dim, w.k, g)
        .axis("a", g.a_axis())
        .axis("xi", g.xi_axis());
    write_c64(&dir.join("W"), &meta, &spectral.w_hat)?;
    if let Some(h) = h {
        let g = &h.grids;
        let np = h.n_pbar();
        let meta = planar_meta("H", vec![g.n_sigma, np], Dtype::C64, h.dim, h.k, g)
            .axis("sigma", g.sigma_axis())
            .axis("xi", g.xi_axis());
        write_c64(&dir.join("H"), &meta, &h.h_sigma)?;
        let meta = planar_meta("h", vec![g.n_sigma, np], Dtype::C64, h.dim, h.k, g)
            .axis("t", g.t_axis())
            .axis("p", g.p_axis());
        write_c64(&dir.join("h"), &meta, &h.h)?;
    }
    Ok(())
}

pub fn read_h(dir: &Path) -> Result<HData> {
    let (mh, h_sigma) = read_c64(&dir.join("H"))?;
    let (m, h) = read_c64(&dir.join("h"))?;
    let grids: PlanarGrids = m.get_attr("grids")?;
    if mh.get_attr::<PlanarGrids>("grids")? != grids || h_sigma.len() != h.len() {
        return Err(Error::Schema("H and h disagree on their grids".into()));
    }
    Ok(HData {
        dim: m.get_attr("dim")?,
        k: m.get_attr("k")?,
        grids,
        h_sigma,
        h,
    })
}

pub fn write_field(dir: &Path, f: &GriddedField) -> Result<()> {
    let mut meta = Meta::new("f", f.grid.shape(), Dtype::F64)
        .attr("grid", &f.grid)
        .attr("skipped", f.skipped());
    for d in 0..f.grid.dim {
        meta = meta.axis(&format!("x{d}"), f.grid.axis(d));
    }
    let values: Vec<f64> = f
        .values
        .iter()
        .zip(&f.valid)
        .map(|(v, ok)| if *ok { *v } else { f64::NAN })
        .collect();
    write_f64(dir, &meta, &values)
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: String,
}

fn provenance<'a>(cfg: &RunConfig, command: &'a str) -> Provenance<'a> {
    Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_hash: cfg.hash(),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn phantom_beam(cfg: &RunConfig) -> Result<FieldBeam> {
    FieldBeam::new(cfg.field()?, cfg.k)
}

/// Additive noise level for beam-level corruption: `max |w|` of clean data.
fn noise_scale(w: &ProjectiveData) -> f64 {
    w.values.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn support_of(field: &ScalarField) -> Result<SupportBox> {
    field.support_box(true)
}

/// Forward model for the configured geometry, written as containers under
/// `out` together with `manifest.json` and the resolved `config.json`.
pub fn cmd_project(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let u = phantom_beam(cfg)?;
    let corruption = cfg.active_corruption();
    let grid = sphere_grid(cfg.n, cfg.sphere_resolution)?;
    let mut written = Vec::new();
    match cfg.geometry {
        GeometryTag::Convex => {
            let set = cfg.vertex_set()?;
            let mut g = forward_crt(&u, &set, &grid, &cfg.crt)?;
            if let Some(c) = &corruption {
                g = g.corrupted(c);
            }
            write_cone(&out.join("cone"), &g)?;
            written.push(out.join("cone"));
        }
        GeometryTag::Planar => {
            let clean = projective_data(&u, &cfg.w_grids(), cfg.k)?;
            let beam = CorruptedBeam {
                inner: &u,
                corruption: corruption.unwrap_or(Corruption::multiplicative(0.0, 0.0)),
                scale: noise_scale(&clean),
            };
            let w = match corruption {
                Some(_) => projective_data(&beam, &cfg.w_grids(), cfg.k)?,
                None => clean,
            };
            write_w(&out.join("w"), &w)?;
            written.push(out.join("w"));
            let h = if cfg.planar.build_h {
                Some(build_h(&beam, &support_of(&cfg.field()?)?, &cfg.h_grids(), cfg.k)?)
            } else {
                None
            };
            write_spectral(out, &w, h.as_ref())?;
            written.push(out.join("W"));
            if h.is_some() {
                written.push(out.join("H"));
                written.push(out.join("h"));
            }
            if cfg.planar.cone_data {
                let mut g = forward_compton(&beam, &grid, &cfg.compton)?;
                if let Some(c) = corruption.filter(|c| c.kind == crate::corruption::CorruptionKind::SShift) {
                    g = g.corrupted(&c);
                }
                write_cone(&out.join("cone"), &g)?;
                written.push(out.join("cone"));
            }
        }
    }
    write_json(&out.join("config.json"), cfg)?;
    #[derive(Serialize)]
    struct Manifest<'a> {
        provenance: Provenance<'a>,
        containers: Vec<String>,
    }
    let containers = written
        .iter()
        .map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            provenance: provenance(cfg, "project"),
            containers,
        },
    )?;
    Ok(written)
}

/// Support cone from the configured phantom, when it is planar-valid.
fn phantom_cone(cfg: &RunConfig) -> Option<SupportCone> {
    let f = cfg.field().ok()?;
    support_of(&f).ok().map(|b| SupportCone::from_box(&b))
}

/// Checks the containers under `input` against the range conditions of the
/// configured geometry; writes `report.json` and `report.csv` there.
pub fn cmd_check(cfg: &RunConfig, input: &Path, tol_scale: f64) -> Result<ConsistencyReport> {
    cfg.validate()?;
    if !(tol_scale > 0.0 && tol_scale.is_finite()) {
        return Err(invalid("tol-scale", "must be positive"));
    }
    let mut rep = ConsistencyReport::new();
    match cfg.geometry {
        GeometryTag::Convex => {
            let g = read_cone(&input.join("cone"))?;
            require_tag(&g, GeometryTag::Convex)?;
            let set = cfg.vertex_set()?;
            rep = check_crt_range(&g, &set, cfg.k, &cfg.crt)?;
        }
        GeometryTag::Planar => {
            let cone_dir = input.join("cone");
            if cone_dir.join("meta.json").exists() {
                let g = read_cone(&cone_dir)?;
                require_tag(&g, GeometryTag::Planar)?;
                rep.merge("compton.", check_compton_range(&g, cfg.k, &cfg.compton)?);
            }
            let w = read_w(&input.join("w"))?;
            let h = if input.join("h").join("meta.json").exists() {
                Some(read_h(input)?)
            } else {
                None
            };
            let planar = check_planar(&w, h.as_ref(), phantom_cone(cfg), &cfg.compton.planar)?;
            rep.merge("planar.", planar);
        }
    }
    rep.rescale(tol_scale);
    #[derive(Serialize)]
    struct ReportFile<'a> {
        schema_version: u32,
        pass: bool,
        provenance: Provenance<'a>,
        #[serde(flatten)]
        report: &'a ConsistencyReport,
    }
    write_json(
        &input.join("report.json"),
        &ReportFile {
            schema_version: crate::container::SCHEMA_VERSION,
            pass: rep.pass(),
            provenance: provenance(cfg, "check"),
            report: &rep,
        },
    )?;
    fs::write(input.join("report.csv"), rep.csv())?;
    Ok(rep)
}

fn require_tag(g: &ConeData, want: GeometryTag) -> Result<()> {
    if g.geometry != want {
        return Err(Error::GeometryMismatch {
            expected: format!("{want:?}").to_lowercase(),
            found: format!("{:?}", g.geometry).to_lowercase(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconMetrics {
    pub relative_l2: f64,
    pub sup: f64,
    pub skipped: usize,
    /// Relative difference between reconstructions along `e_1` and `e_2`
    /// (convex geometry).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orthogonal_difference: Option<f64>,
}

/// Reconstruction grid for planar data: the phantom's bounding box.
pub fn planar_recon_grid(cfg: &RunConfig) -> Result<OutputGrid> {
    let (lo, hi) = cfg.field()?.bounding_box();
    Ok(OutputGrid::new(cfg.n, &lo[..cfg.n], &hi[..cfg.n], cfg.planar.recon_points))
}

/// Reconstructs `f` from the containers under `input`, writing the field
/// container `f` and `metrics.json` (errors against the configured phantom).
pub fn cmd_reconstruct(cfg: &RunConfig, input: &Path) -> Result<ReconMetrics> {
    cfg.validate()?;
    let field = cfg.field()?;
    let (f, orth) = match cfg.geometry {
        GeometryTag::Convex => {
            let g = read_cone(&input.join("cone"))?;
            require_tag(&g, GeometryTag::Convex)?;
            let set = cfg.vertex_set()?;
            let f1 = reconstruct_from_crt(&g, &set, cfg.k, &[1.0, 0.0, 0.0], &cfg.crt)?;
            let f2 = reconstruct_from_crt(&g, &set, cfg.k, &[0.0, 1.0, 0.0], &cfg.crt)?;
            let d = f1.relative_difference(&f2);
            (f1, Some(d))
        }
        GeometryTag::Planar => {
            let h = read_h(input)?;
            let grid = planar_recon_grid(cfg)?;
            (reconstruct_from_h(&h, cfg.k, &grid, cfg.compton.planar.upsample)?, None)
        }
    };
    let (relative_l2, sup) = f.errors_against(&field);
    let m = ReconMetrics {
        relative_l2,
        sup,
        skipped: f.skipped(),
        orthogonal_difference: orth,
    };
    write_field(&input.join("f"), &f)?;
    write_json(&input.join("metrics.json"), &m)?;
    Ok(m)
}

/// Built-in configuration of a demo.
pub fn demo_config(name: &str) -> Option<RunConfig> {
    let base = r#"{"geometry":"planar","n":2,"k":0,"phantom":[{"center":[0,0.6],"radius":0.25}]}"#;
    let mut cfg = RunConfig::from_json(base).expect("built-in config");
    match name {
        "convex-crt" => {
            cfg.geometry = GeometryTag::Convex;
            cfg.phantom = vec![BumpSpec {
                center: vec![0.0, 0.0],
                radius: 0.75,
                amplitude: 1.0,
            }];
        }
        "planar-compton" | "corruption-sweep" => {
            // Riemann sums of J_0 need dp = 1/64; h keeps the default dp = 1/32.
            let w = PlanarGrids {
                a_max: 1.0,
                n_p: 512,
                ..PlanarGrids::for_dim(2)
            };
            cfg.compton.planar.grids = Some(w);
            cfg.planar.h_grids = Some(PlanarGrids { n_p: 256, ..w });
            cfg.compton.sst.ns = 384;
            cfg.sphere_resolution = 128;
            cfg.planar.cone_data = name == "planar-compton";
            cfg.planar.build_h = name == "planar-compton";
        }
        _ => return None,
    }
    cfg.out = format!("out/{name}");
    Some(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub amplitude: f64,
    pub report: ConsistencyReport,
    /// Largest `residual / threshold` over non-vacuous entries.
    pub worst_ratio: f64,
}

pub fn worst_ratio(rep: &ConsistencyReport) -> f64 {
    rep.entries
        .iter()
        .filter(|e| !e.is_vacuous() && e.threshold > 0.0)
        .map(|e| e.residual / e.threshold)
        .fold(0.0, f64::max)
}

/// Planar projective-data checks under multiplicative corruption
/// `(1 + ε sin(3 a_1))` for each amplitude.
pub fn corruption_sweep(cfg: &RunConfig, amplitudes: &[f64], tol_scale: f64) -> Result<Vec<SweepRow>> {
    let u = phantom_beam(cfg)?;
    let clean = projective_data(&u, &cfg.w_grids(), cfg.k)?;
    amplitudes
        .iter()
        .map(|&eps| {
            let w = clean.corrupted(&Corruption::multiplicative(eps, 3.0));
            let mut report = check_planar(&w, None, None, &cfg.compton.planar)?;
            report.rescale(tol_scale);
            Ok(SweepRow {
                amplitude: eps,
                worst_ratio: worst_ratio(&report),
                report,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let names: Vec<&str> = rows
        .first()
        .map(|r| r.report.entries.iter().map(|e| e.name.as_str()).collect())
        .unwrap_or_default();
    let mut s = format!("epsilon,pass,worst_ratio,{}\n", names.join(","));
    for r in rows {
        let cols: Vec<String> = r.report.entries.iter().map(|e| format!("{:e}", e.residual)).collect();
        s.push_str(&format!("{},{},{:e},{}\n", r.amplitude, r.report.pass(), r.worst_ratio, cols.join(",")));
    }
    s
}

pub fn is_nondecreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0])
}

/// Runs a demo end to end under `out`. Returns whether it passed: the
/// consistency checks for the two geometry demos, and for the sweep a clean
/// pass at `ε = 0` with a nondecreasing worst ratio.
pub fn cmd_demo(name: &str, out: &Path, tol_scale: f64) -> Result<(bool, String)> {
    let mut cfg = demo_config(name).ok_or_else(|| invalid("demo", format!("unknown demo `{name}`; known: {}", DEMOS.join(", "))))?;
    cfg.out = out.to_string_lossy().into_owned();
    fs::create_dir_all(out)?;
    if name == "corruption-sweep" {
        let rows = corruption_sweep(&cfg, &SWEEP_AMPLITUDES, tol_scale)?;
        let csv = sweep_csv(&rows);
        fs::write(out.join("sweep.csv"), &csv)?;
        write_json(&out.join("config.json"), &cfg)?;
        let ratios: Vec<f64> = rows.iter().map(|r| r.worst_ratio).collect();
        let ok = rows[0].report.pass() && is_nondecreasing(&ratios);
        return Ok((ok, csv));
    }
    cmd_project(&cfg, out)?;
    let rep = cmd_check(&cfg, out, tol_scale)?;
    let m = cmd_reconstruct(&cfg, out)?;
    let mut text = rep.table();
    text.push_str(&format!(
        "reconstruction: relative L2 {:.4e}, sup {:.4e}, skipped {}",
        m.relative_l2, m.sup, m.skipped
    ));
    if let Some(d) = m.orthogonal_difference {
        text.push_str(&format!(", orthogonal difference {d:.4e}"));
    }
    text.push('\n');
    Ok((rep.pass(), text))
}
