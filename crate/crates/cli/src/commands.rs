//! Command implementations. Every command validates the whole configuration
//! before touching the filesystem; artifacts are stamped with the config
//! hash and refuse to mix across hashes.

use mrvf_core::config::{GeometryModel, PipelineConfig};
use mrvf_core::dictionary::{
    build_dictionary, load_dictionary, save_dictionary, sobol_scrambled, Dictionary,
};
use mrvf_core::error::Error;
use mrvf_core::eval::{
    add_noise, cross_model_bias, recovery_metrics, roi_stats, welch_ttest, CrossModelConfig,
    NoiseSpec,
};
use mrvf_core::geometry::{
    generate_cylinders_3d, generate_disks_2d, ingest_mask, write_float_volume, write_mask,
    Provenance, VoxelGeometry,
};
use mrvf_core::physics::Fingerprint;
use mrvf_core::recon::{
    default_k, load_model, match_dbm_index, reconstruct_map, save_model, train_dbl,
    EstimatorResource, FingerprintVolume, Method, ParamMaps,
};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub enum CmdError {
    Validation(String),
    Runtime(String),
}

type CmdResult = Result<(), CmdError>;

fn validation<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Validation(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Runtime(e.to_string())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<PipelineConfig, CmdError> {
    let mut cfg = PipelineConfig::load(path).map_err(validation)?;
    if let Some(s) = seed {
        cfg.sampling.seed = s;
    }
    Ok(cfg)
}

fn log(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("{msg}");
    }
}

/// Formats an f64 with shortest round-trip digits.
fn fmt(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------- gen-voxels

pub fn gen_voxels(config: &Path, seed: Option<u64>, quiet: bool, out: &Path) -> CmdResult {
    let cfg = load_config(config, seed)?;
    std::fs::create_dir_all(out).map_err(runtime)?;
    let started = Instant::now();

    let mut manifest = String::new();
    manifest.push_str(&format!("# config_hash={}\n", cfg.hash()));
    manifest.push_str("file\tbvf\tmean_radius\tprovenance\tseed\n");

    match &cfg.geometry.model {
        GeometryModel::Masks { dir } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(runtime)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map_or(false, |x| x == "vxm"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CmdError::Validation(format!(
                    "no .vxm masks in {}",
                    dir.display()
                )));
            }
            for (i, src) in paths.iter().enumerate() {
                let lattice = ingest_mask(src).map_err(runtime)?;
                let g = VoxelGeometry::characterize(lattice, Provenance::RealisticMask, i as u64);
                let name = format!("voxel_{i:05}.vxm");
                write_mask(&g.lattice, &out.join(&name)).map_err(runtime)?;
                manifest.push_str(&format!(
                    "{name}\t{}\t{}\t{}\t{}\n",
                    fmt(g.bvf),
                    fmt(g.mean_radius),
                    g.provenance.as_str(),
                    g.seed
                ));
            }
        }
        model => {
            let n = cfg.sampling.n;
            let draws = sobol_scrambled(
                n,
                &[cfg.geometry.bvf_range, cfg.geometry.r_range],
                cfg.sampling.seed,
            )
            .map_err(runtime)?;
            for (i, d) in draws.iter().enumerate() {
                let gseed = cfg.sampling.seed.wrapping_add(i as u64);
                let g = match model {
                    GeometryModel::Disks2D { dims } => {
                        generate_disks_2d(d[0], d[1], *dims, cfg.geometry.spacing, gseed)
                    }
                    GeometryModel::Cylinders3D { dims } => {
                        generate_cylinders_3d(d[0], d[1], *dims, cfg.geometry.spacing, gseed)
                    }
                    GeometryModel::Masks { .. } => unreachable!(),
                }
                .map_err(|e| runtime(e.at_entry(i)))?;
                let name = format!("voxel_{i:05}.vxm");
                write_mask(&g.lattice, &out.join(&name)).map_err(runtime)?;
                manifest.push_str(&format!(
                    "{name}\t{}\t{}\t{}\t{}\n",
                    fmt(g.bvf),
                    fmt(g.mean_radius),
                    g.provenance.as_str(),
                    g.seed
                ));
            }
        }
    }
    std::fs::write(out.join("manifest.tsv"), manifest).map_err(runtime)?;
    log(
        quiet,
        &format!(
            "gen-voxels: wrote manifest to {} in {:.2}s",
            out.display(),
            started.elapsed().as_secs_f64()
        ),
    );
    Ok(())
}

// ---------------------------------------------------------------- build-dict

struct ManifestEntry {
    file: String,
    provenance: Provenance,
    seed: u64,
}

fn read_manifest(path: &Path, expected_hash: &str) -> Result<Vec<ManifestEntry>, CmdError> {
    let text = std::fs::read_to_string(path).map_err(validation)?;
    let mut entries = Vec::new();
    let mut hash_ok = false;
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("# config_hash=") {
            if h != expected_hash {
                return Err(CmdError::Validation(format!(
                    "manifest config hash {h} does not match config {expected_hash}"
                )));
            }
            hash_ok = true;
            continue;
        }
        if line.starts_with('#') || line.starts_with("file\t") || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(CmdError::Validation(format!(
                "manifest line with {} columns: {line:?}",
                cols.len()
            )));
        }
        entries.push(ManifestEntry {
            file: cols[0].to_string(),
            provenance: Provenance::parse(cols[3]).map_err(validation)?,
            seed: cols[4].parse().map_err(validation)?,
        });
    }
    if !hash_ok {
        return Err(CmdError::Validation(
            "manifest carries no config_hash line".into(),
        ));
    }
    if entries.is_empty() {
        return Err(CmdError::Validation("manifest lists no masks".into()));
    }
    Ok(entries)
}

pub fn build_dict(
    config: &Path,
    seed: Option<u64>,
    quiet: bool,
    masks: &Path,
    out: &Path,
) -> CmdResult {
    let cfg = load_config(config, seed)?;
    let entries = read_manifest(masks, &cfg.hash())?;
    let base = masks.parent().unwrap_or(Path::new("."));
    let started = Instant::now();

    let geoms: Vec<VoxelGeometry> = entries
        .iter()
        .map(|e| {
            let lattice = ingest_mask(&base.join(&e.file)).map_err(runtime)?;
            Ok(VoxelGeometry::characterize(lattice, e.provenance, e.seed))
        })
        .collect::<Result<_, CmdError>>()?;

    let mut dict = build_dictionary(
        &geoms,
        cfg.sampling.so2_range,
        cfg.sampling.t2_range,
        &cfg.physics,
        &cfg.sequence,
        cfg.sampling.seed,
    )
    .map_err(runtime)?;
    dict.meta
        .extra
        .insert("config_hash".to_string(), cfg.hash());
    save_dictionary(&dict, out).map_err(runtime)?;
    let elapsed = started.elapsed().as_secs_f64();
    println!("entries={} wall_time_s={elapsed:.2}", dict.n_entries());
    log(quiet, &format!("build-dict: wrote {}", out.display()));
    Ok(())
}

fn check_dict_hash(dict: &Dictionary, cfg: &PipelineConfig) -> Result<(), CmdError> {
    match dict.meta.extra.get("config_hash") {
        Some(h) if *h == cfg.hash() => Ok(()),
        Some(h) => Err(CmdError::Validation(format!(
            "dictionary config hash {h} does not match config {}",
            cfg.hash()
        ))),
        None => Err(CmdError::Validation(
            "dictionary carries no config_hash".into(),
        )),
    }
}

// --------------------------------------------------------------------- train

pub fn train(config: &Path, seed: Option<u64>, quiet: bool, dict: &Path, out: &Path) -> CmdResult {
    let cfg = load_config(config, seed)?;
    let dictionary = load_dictionary(dict).map_err(validation)?;
    check_dict_hash(&dictionary, &cfg)?;
    let k = if cfg.recon.k == 0 {
        default_k(dictionary.n_entries())
    } else {
        cfg.recon.k
    };
    if dictionary.n_entries() < 10 * k {
        return Err(CmdError::Validation(format!(
            "k = {k} needs at least {} entries, dictionary has {}",
            10 * k,
            dictionary.n_entries()
        )));
    }
    let started = Instant::now();
    let mut model = train_dbl(&dictionary, k, cfg.sampling.seed).map_err(runtime)?;
    model.tags.insert("config_hash".to_string(), cfg.hash());
    save_model(&model, out).map_err(runtime)?;
    println!(
        "k={} loglik={} iters={} wall_time_s={:.2}",
        model.k(),
        fmt(model.final_loglik),
        model.n_iters,
        started.elapsed().as_secs_f64()
    );
    log(quiet, &format!("train: wrote {}", out.display()));
    Ok(())
}

// --------------------------------------------------------------- reconstruct

fn volume_from_dict(container: &Dictionary) -> Result<FingerprintVolume, CmdError> {
    let dims = match container.meta.extra.get("dims") {
        Some(s) => {
            let d: Vec<usize> = s
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| CmdError::Validation(format!("bad dims meta {s:?}")))?;
            if d.len() != 3 {
                return Err(CmdError::Validation(format!("dims meta needs 3 values: {s:?}")));
            }
            [d[0], d[1], d[2]]
        }
        None => [container.n_entries(), 1, 1],
    };
    if dims[0] * dims[1] * dims[2] != container.n_entries() {
        return Err(CmdError::Validation(format!(
            "dims {dims:?} do not cover {} fingerprints",
            container.n_entries()
        )));
    }
    Ok(FingerprintVolume {
        dims,
        signal_length: container.signal_length,
        data: container.signals.iter().map(|&v| v as f64).collect(),
    })
}

pub fn reconstruct(
    config: &Path,
    quiet: bool,
    input: &Path,
    dict: Option<&Path>,
    model: Option<&Path>,
    method: Option<&str>,
    out: &Path,
) -> CmdResult {
    let cfg = load_config(config, None)?;
    let method = match method {
        Some(s) => Method::parse(s).map_err(validation)?,
        None => cfg.recon.method,
    };
    let container = load_dictionary(input).map_err(validation)?;
    check_dict_hash(&container, &cfg)?;
    let volume = volume_from_dict(&container)?;

    let dict_data;
    let model_data;
    let resource = match method {
        Method::Dbm => {
            let path = dict.ok_or_else(|| {
                CmdError::Validation("dbm reconstruction needs --dict".into())
            })?;
            dict_data = load_dictionary(path).map_err(validation)?;
            check_dict_hash(&dict_data, &cfg)?;
            EstimatorResource::Dbm(&dict_data)
        }
        Method::Dbl => {
            let path = model.ok_or_else(|| {
                CmdError::Validation("dbl reconstruction needs --model".into())
            })?;
            model_data = load_model(path).map_err(validation)?;
            match model_data.tags.get("config_hash") {
                Some(h) if *h == cfg.hash() => {}
                Some(h) => {
                    return Err(CmdError::Validation(format!(
                        "model config hash {h} does not match config {}",
                        cfg.hash()
                    )))
                }
                None => {
                    return Err(CmdError::Validation("model carries no config_hash".into()))
                }
            }
            EstimatorResource::Dbl(&model_data)
        }
    };

    let started = Instant::now();
    let maps = reconstruct_map(&volume, &resource, &cfg.recon.clips).map_err(runtime)?;
    std::fs::create_dir_all(out).map_err(runtime)?;
    write_maps(&maps, cfg.geometry.spacing, out)?;
    let summary = summarize(&maps, &cfg)?;
    std::fs::write(out.join("summary.tsv"), summary).map_err(runtime)?;
    log(
        quiet,
        &format!(
            "reconstruct: {} voxels by {} in {:.2}s -> {}",
            volume.n_voxels(),
            method.as_str(),
            started.elapsed().as_secs_f64(),
            out.display()
        ),
    );
    Ok(())
}

fn write_maps(maps: &ParamMaps, spacing: f64, out: &Path) -> CmdResult {
    let sp = [spacing; 3];
    for (name, values) in [
        ("bvf", &maps.bvf),
        ("r", &maps.r),
        ("so2", &maps.so2),
        ("t2", &maps.t2),
    ] {
        let f32s: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        write_float_volume(maps.dims, sp, &f32s, &out.join(format!("{name}.vxf")))
            .map_err(runtime)?;
    }
    Ok(())
}

fn summarize(maps: &ParamMaps, cfg: &PipelineConfig) -> Result<String, CmdError> {
    let n = maps.dims[0] * maps.dims[1] * maps.dims[2];
    let stats = roi_stats(maps, &vec![1u8; n], "all").map_err(runtime)?;
    let mut s = String::new();
    s.push_str(&format!("# config_hash={}\n", cfg.hash()));
    s.push_str(&format!("# method={}\n", maps.method.as_str()));
    s.push_str("param\tmean\tstd\tn\n");
    for (j, name) in ["bvf", "r", "so2", "t2"].iter().enumerate() {
        s.push_str(&format!(
            "{name}\t{}\t{}\t{}\n",
            fmt(stats.mean[j]),
            fmt(stats.std[j]),
            stats.n
        ));
    }
    Ok(s)
}

// ---------------------------------------------------------------------- eval

fn cross_config(cfg: &PipelineConfig) -> CrossModelConfig {
    let mut cmc = CrossModelConfig {
        families: cfg.eval.families.clone(),
        dict_entries: cfg.eval.dict_entries,
        spacing: cfg.geometry.spacing,
        bvf_range: cfg.geometry.bvf_range,
        r_range: cfg.geometry.r_range,
        so2_range: cfg.sampling.so2_range,
        t2_range: cfg.sampling.t2_range,
        snr: cfg.eval.snr,
        physics: cfg.physics,
        sequence: cfg.sequence,
        ..Default::default()
    };
    match cfg.geometry.model {
        GeometryModel::Disks2D { dims } => cmc.dims_2d = dims,
        GeometryModel::Cylinders3D { dims } => cmc.dims_3d = dims,
        GeometryModel::Masks { .. } => {}
    }
    cmc
}

pub fn eval(config: &Path, seed: Option<u64>, quiet: bool, out: &Path) -> CmdResult {
    let cfg = load_config(config, seed)?;
    std::fs::create_dir_all(out).map_err(runtime)?;
    let started = Instant::now();
    let cmc = cross_config(&cfg);
    let seed = cfg.sampling.seed;

    // cross-model bias table
    let table = cross_model_bias(cfg.eval.n, seed, &cmc).map_err(runtime)?;
    let mut bias = String::new();
    bias.push_str(&format!("# config_hash={}\n", cfg.hash()));
    bias.push_str(&format!("# n={}\n", table.n));
    bias.push_str(
        "generator\tdictionary\tbias_bvf\tbias_r\tbias_so2\tbias_t2\tmae_bvf\tmae_r\tmae_so2\tmae_t2\n",
    );
    for c in &table.cells {
        bias.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            c.generator.as_str(),
            c.dictionary.as_str(),
            fmt(c.bias[0]),
            fmt(c.bias[1]),
            fmt(c.bias[2]),
            fmt(c.bias[3]),
            fmt(c.mae[0]),
            fmt(c.mae[1]),
            fmt(c.mae[2]),
            fmt(c.mae[3]),
        ));
    }
    std::fs::write(out.join("bias.tsv"), bias).map_err(runtime)?;

    // DBM self-recovery on a dictionary built from the first family:
    // noiseless input is the dictionary's own rows, so errors must be zero
    let first = cmc.families[0];
    let self_cfg = CrossModelConfig {
        families: vec![first],
        ..cmc.clone()
    };
    let dict = build_eval_dictionary(&self_cfg, seed).map_err(runtime)?;
    let mut recovery = String::new();
    recovery.push_str(&format!("# config_hash={}\n", cfg.hash()));
    recovery.push_str("arm\tmethod\tn\tmae_bvf\tmae_r\tmae_so2\tmae_t2\tbias_bvf\tbias_r\tbias_so2\tbias_t2\n");
    for (arm, snr) in [("noiseless", f64::INFINITY), ("snr", cfg.eval.snr)] {
        let mut est = Vec::with_capacity(dict.n_entries());
        for i in 0..dict.n_entries() {
            let values: Vec<f64> = dict.signal_row(i).iter().map(|&v| v as f64).collect();
            let fp = Fingerprint::from_values(values).map_err(runtime)?;
            let fp = add_noise(
                &fp,
                &NoiseSpec {
                    snr,
                    seed: seed.wrapping_add(i as u64),
                },
            )
            .map_err(runtime)?;
            let idx = match_dbm_index(&fp, &dict).map_err(runtime)?;
            est.push(dict.params[idx]);
        }
        let rep = recovery_metrics(&dict.params, &est, "dbm").map_err(runtime)?;
        recovery.push_str(&format!(
            "{arm}\tdbm\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            rep.n,
            fmt(rep.mae[0]),
            fmt(rep.mae[1]),
            fmt(rep.mae[2]),
            fmt(rep.mae[3]),
            fmt(rep.bias[0]),
            fmt(rep.bias[1]),
            fmt(rep.bias[2]),
            fmt(rep.bias[3]),
        ));
    }
    std::fs::write(out.join("recovery.tsv"), recovery).map_err(runtime)?;

    // t-tests between SO2 estimates of matched vs mismatched dictionaries
    let mut ttest = String::new();
    ttest.push_str(&format!("# config_hash={}\n", cfg.hash()));
    ttest.push_str("generator\tdict_a\tdict_b\tt\tp\n");
    for gen in &cmc.families {
        for (ai, a) in cmc.families.iter().enumerate() {
            for b in &cmc.families[ai + 1..] {
                let ca = table.cell(*gen, *a);
                let cb = table.cell(*gen, *b);
                if let (Some(ca), Some(cb)) = (ca, cb) {
                    match welch_ttest(&ca.so2_est, &cb.so2_est) {
                        Ok((t, p)) => ttest.push_str(&format!(
                            "{}\t{}\t{}\t{}\t{}\n",
                            gen.as_str(),
                            a.as_str(),
                            b.as_str(),
                            fmt(t),
                            fmt(p)
                        )),
                        Err(Error::DegenerateSample) => ttest.push_str(&format!(
                            "{}\t{}\t{}\tNA\tNA\n",
                            gen.as_str(),
                            a.as_str(),
                            b.as_str()
                        )),
                        Err(e) => return Err(runtime(e)),
                    }
                }
            }
        }
    }
    std::fs::write(out.join("ttest.tsv"), ttest).map_err(runtime)?;

    log(
        quiet,
        &format!(
            "eval: wrote reports to {} in {:.2}s",
            out.display(),
            started.elapsed().as_secs_f64()
        ),
    );
    Ok(())
}

fn build_eval_dictionary(
    cmc: &CrossModelConfig,
    seed: u64,
) -> Result<Dictionary, Error> {
    use mrvf_core::eval::GeometryFamily;
    let draws = sobol_scrambled(
        cmc.dict_entries,
        &[cmc.bvf_range, cmc.r_range],
        seed ^ 0x64696374,
    )?;
    let family = cmc.families[0];
    let geoms: Vec<VoxelGeometry> = draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let gseed = seed.wrapping_add(1000).wrapping_add(i as u64);
            match family {
                GeometryFamily::Disks2D => {
                    generate_disks_2d(d[0], d[1], cmc.dims_2d, cmc.spacing, gseed)
                }
                GeometryFamily::Cylinders3D => {
                    generate_cylinders_3d(d[0], d[1], cmc.dims_3d, cmc.spacing, gseed)
                }
            }
            .map_err(|e| e.at_entry(i))
        })
        .collect::<Result<_, Error>>()?;
    build_dictionary(
        &geoms,
        cmc.so2_range,
        cmc.t2_range,
        &cmc.physics,
        &cmc.sequence,
        seed,
    )
}
