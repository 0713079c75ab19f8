//! Configuration files, figure plans and result emission.
//!
//! Config documents are flat `key = value` lines; `#` starts a comment.
//! Lists are comma separated, and numeric lists also accept an inclusive
//! `start:step:stop` range.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::channel::SystemDims;
use crate::complexity::{flops_algorithm, sweep_dims};
use crate::error::{Error, Result};
use crate::simulator::{ExperimentConfig, SimCell, SimResult};

/// Recognised keys, in the order they are echoed.
pub const CONFIG_KEYS: [&str; 17] = [
    "n_t",
    "t_users",
    "n_r",
    "k_eves",
    "n_k",
    "streams",
    "snr_db_list",
    "algorithms",
    "m_ratio",
    "rho",
    "csi_error_var",
    "an_enabled",
    "frames_per_point",
    "symbols_per_frame",
    "seed",
    "e_s",
    "eve_noise_ratio",
];

pub const CSV_HEADER: &str = "algorithm,snr_db,ber,secrecy_rate_bits,flops,frames,bit_errors";
pub const DETAIL_HEADER: &str =
    "algorithm,snr_db,bits,eve_ber,eve_bit_errors,eve_bits,uniform_rate_bits,design_rate_bits,tx_power";
pub const COMPLEXITY_HEADER: &str = "algorithm,n_t,t_users,n_r,streams,flops";

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with(text, ExperimentConfig::default())
}

/// Parses `text` on top of `base`. `streams` follows `n_r` and `an_enabled`
/// follows `rho < 1` unless given explicitly.
pub fn parse_config_with(text: &str, base: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = base;
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut streams = None;
    let mut an_enabled = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let key = CONFIG_KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("unknown key `{key}`"),
            })?;
        if let Some(prev) = seen.insert(key, line) {
            return Err(Error::Parse {
                line,
                msg: format!("`{key}` already set on line {prev}"),
            });
        }
        let bad = |msg: String| Error::Parse { line, msg };
        match key {
            "n_t" => cfg.dims.n_t = parse_num(value).map_err(bad)?,
            "t_users" => cfg.dims.t_users = parse_num(value).map_err(bad)?,
            "n_r" => cfg.dims.n_r = parse_num(value).map_err(bad)?,
            "k_eves" => cfg.dims.k_eves = parse_num(value).map_err(bad)?,
            "n_k" => cfg.dims.n_k = parse_num(value).map_err(bad)?,
            "streams" => streams = Some(parse_num(value).map_err(bad)?),
            "snr_db_list" => cfg.snr_db_list = parse_real_list(value).map_err(bad)?,
            "algorithms" => {
                cfg.algorithms = value
                    .split(',')
                    .map(|t| t.trim().parse::<Algorithm>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<_>>()?
            }
            "m_ratio" => cfg.m_ratio = parse_num(value).map_err(bad)?,
            "rho" => cfg.rho = parse_num(value).map_err(bad)?,
            "csi_error_var" => cfg.csi_error_var = parse_num(value).map_err(bad)?,
            "an_enabled" => an_enabled = Some(parse_bool(value).map_err(bad)?),
            "frames_per_point" => cfg.frames_per_point = parse_num(value).map_err(bad)?,
            "symbols_per_frame" => cfg.symbols_per_frame = parse_num(value).map_err(bad)?,
            "seed" => cfg.seed = parse_num(value).map_err(bad)?,
            "e_s" => cfg.e_s = parse_num(value).map_err(bad)?,
            "eve_noise_ratio" => cfg.eve_noise_ratio = parse_num(value).map_err(bad)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    if let Some(s) = streams {
        cfg.dims.streams = s;
    } else if seen.contains_key("n_r") {
        cfg.dims.streams = cfg.dims.n_r;
    }
    if let Some(a) = an_enabled {
        cfg.an_enabled = a;
    } else if seen.contains_key("rho") {
        cfg.an_enabled = cfg.rho < 1.0;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse `{v}`: {e}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

fn parse_real_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    match parts.len() {
        1 => v.split(',').map(|t| parse_num::<f64>(t.trim())).collect(),
        3 => {
            let (start, step, stop): (f64, f64, f64) =
                (parse_num(parts[0])?, parse_num(parts[1])?, parse_num(parts[2])?);
            if !(step > 0.0) || !(stop >= start) || !(start.is_finite() && stop.is_finite()) {
                return Err(format!("bad range `{v}`"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + step * i as f64).collect())
        }
        _ => Err(format!("expected a list or `start:step:stop`, got `{v}`")),
    }
}

/// Every key with its effective value, in [`CONFIG_KEYS`] order.
pub fn config_entries(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    let join = |v: &[String]| v.join(", ");
    let d = &cfg.dims;
    vec![
        ("n_t", d.n_t.to_string()),
        ("t_users", d.t_users.to_string()),
        ("n_r", d.n_r.to_string()),
        ("k_eves", d.k_eves.to_string()),
        ("n_k", d.n_k.to_string()),
        ("streams", d.streams.to_string()),
        ("snr_db_list", join(&cfg.snr_db_list.iter().map(|s| s.to_string()).collect::<Vec<_>>())),
        ("algorithms", join(&cfg.algorithms.iter().map(|a| a.to_string()).collect::<Vec<_>>())),
        ("m_ratio", cfg.m_ratio.to_string()),
        ("rho", cfg.rho.to_string()),
        ("csi_error_var", cfg.csi_error_var.to_string()),
        ("an_enabled", cfg.an_enabled.to_string()),
        ("frames_per_point", cfg.frames_per_point.to_string()),
        ("symbols_per_frame", cfg.symbols_per_frame.to_string()),
        ("seed", cfg.seed.to_string()),
        ("e_s", cfg.e_s.to_string()),
        ("eve_noise_ratio", cfg.eve_noise_ratio.to_string()),
    ]
}

/// Complete config document; parsing it gives back `cfg` exactly.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    for (k, v) in config_entries(cfg) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Every config key with its effective value.
    pub config: BTreeMap<String, String>,
    /// The same values as a config document, accepted by `--config`.
    pub config_text: String,
    /// Fraction of the transmit power spent on artificial noise.
    pub an_power_fraction: f64,
    pub threads: usize,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, cfg: &ExperimentConfig, threads: usize) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config: config_entries(cfg).into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            config_text: render_config(cfg),
            an_power_fraction: cfg.an_fraction(),
            threads,
            started_unix_s: now(),
            finished_unix_s: f64::NAN,
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix_s = now();
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// `v` with 12 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.11e}")
    }
}

pub fn results_csv(result: &SimResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.algorithm,
            fmt_sig(c.snr_db),
            fmt_sig(c.ber),
            fmt_sig(c.secrecy_rate_bits),
            fmt_sig(c.flops),
            c.frames,
            c.bit_errors
        );
    }
    out
}

pub fn detail_csv(result: &SimResult) -> String {
    let mut out = String::from(DETAIL_HEADER);
    out.push('\n');
    for c in &result.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.algorithm,
            fmt_sig(c.snr_db),
            c.bits,
            fmt_sig(c.eve_ber),
            c.eve_bit_errors,
            c.eve_bits,
            fmt_sig(c.uniform_rate_bits),
            fmt_sig(c.design_rate_bits),
            fmt_sig(c.tx_power)
        );
    }
    out
}

/// One row of the main CSV as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub ber: f64,
    pub secrecy_rate_bits: f64,
    pub flops: f64,
    pub frames: usize,
    pub bit_errors: u64,
}

impl CsvRow {
    /// Whether this row is `cell` written with 12 significant digits.
    pub fn matches(&self, cell: &SimCell) -> bool {
        let close = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-11 * b.abs();
        self.algorithm == cell.algorithm
            && self.frames == cell.frames
            && self.bit_errors == cell.bit_errors
            && close(self.snr_db, cell.snr_db)
            && close(self.ber, cell.ber)
            && close(self.secrecy_rate_bits, cell.secrecy_rate_bits)
            && close(self.flops, cell.flops)
    }
}

pub fn parse_results_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing results header".into(),
            })
        }
    }
    lines
        .map(|(i, l)| {
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, got {}", f.len())));
            }
            Ok(CsvRow {
                algorithm: f[0].parse().map_err(|e: Error| bad(e.to_string()))?,
                snr_db: parse_num(f[1]).map_err(bad)?,
                ber: parse_num(f[2]).map_err(bad)?,
                secrecy_rate_bits: parse_num(f[3]).map_err(bad)?,
                flops: parse_num(f[4]).map_err(bad)?,
                frames: parse_num(f[5]).map_err(bad)?,
                bit_errors: parse_num(f[6]).map_err(bad)?,
            })
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<stem>.csv`, `<stem>_detail.csv` and `<stem>_manifest.json`
/// under `dir`. Returns the paths written.
pub fn emit_results(result: &SimResult, manifest: &mut RunManifest, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let main = dir.join(format!("{stem}.csv"));
    let detail = dir.join(format!("{stem}_detail.csv"));
    let json = dir.join(format!("{stem}_manifest.json"));
    write_file(&main, &results_csv(result))?;
    write_file(&detail, &detail_csv(result))?;
    manifest.outputs = vec![main.clone(), detail.clone()];
    if manifest.finished_unix_s.is_nan() {
        manifest.finish();
    }
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::invalid("manifest", e.to_string()))?;
    write_file(&json, &text)?;
    Ok(vec![main, detail, json])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRow {
    pub algorithm: Algorithm,
    pub dims: SystemDims,
    pub flops: f64,
}

/// FLOP counts for every algorithm at each `n_t` of the sweep.
pub fn complexity_table(n_t_list: &[usize]) -> Result<Vec<ComplexityRow>> {
    let mut rows = Vec::new();
    for &a in &Algorithm::ALL {
        for &n_t in n_t_list {
            let dims = sweep_dims(n_t)?;
            rows.push(ComplexityRow {
                algorithm: a,
                dims,
                flops: flops_algorithm(a, &dims)?,
            });
        }
    }
    Ok(rows)
}

pub fn complexity_csv(rows: &[ComplexityRow]) -> String {
    let mut out = String::from(COMPLEXITY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.algorithm,
            r.dims.n_t,
            r.dims.t_users,
            r.dims.n_r,
            r.dims.streams,
            fmt_sig(r.flops)
        );
    }
    out
}

pub fn emit_complexity(rows: &[ComplexityRow], dir: &Path, stem: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.csv"));
    write_file(&path, &complexity_csv(rows))?;
    Ok(path)
}

pub const COMPLEXITY_SWEEP: [usize; 3] = [4, 6, 8];

/// Default settings of `secrecy-sweep`: a wide SNR range and one symbol
/// vector per channel draw.
pub fn secrecy_defaults() -> ExperimentConfig {
    ExperimentConfig {
        snr_db_list: (0..=8).map(|i| 5.0 * i as f64).collect(),
        frames_per_point: 500,
        symbols_per_frame: 1,
        ..Default::default()
    }
}

/// Desk-scale experiments behind figures 3 to 6, as `(output stem, config)`.
/// Figure 2 is the complexity table and needs no simulation.
pub fn figure_plan(figure: u32, seed: u64) -> Result<Vec<(String, ExperimentConfig)>> {
    let base = ExperimentConfig {
        seed,
        ..Default::default()
    };
    let an_base = ExperimentConfig {
        dims: SystemDims::baseline().with_streams(1)?,
        algorithms: vec![Algorithm::Bd, Algorithm::Sgmi, Algorithm::SoThp, Algorithm::SoThpSgmi],
        snr_db_list: (0..=8).map(|i| 2.5 * i as f64).collect(),
        csi_error_var: 0.05,
        rho: 0.6,
        an_enabled: true,
        frames_per_point: 500,
        symbols_per_frame: 1,
        ..base.clone()
    };
    let plan = match figure {
        3 => vec![(
            "fig3_ber".to_string(),
            ExperimentConfig {
                snr_db_list: (0..=10).map(|i| 2.0 * i as f64).collect(),
                frames_per_point: 20_000,
                ..base
            },
        )],
        4 => vec![(
            "fig4_secrecy".to_string(),
            ExperimentConfig {
                seed,
                ..secrecy_defaults()
            },
        )],
        5 => vec![
            ("fig5_an".to_string(), an_base.clone()),
            (
                "fig5_no_an".to_string(),
                ExperimentConfig {
                    an_enabled: false,
                    ..an_base
                },
            ),
        ],
        6 => vec![
            (
                "fig6_m0.5".to_string(),
                ExperimentConfig {
                    m_ratio: 0.5,
                    ..an_base.clone()
                },
            ),
            ("fig6_m2".to_string(), ExperimentConfig { m_ratio: 2.0, ..an_base }),
        ],
        other => {
            return Err(Error::invalid(
                "figure",
                format!("expected 3, 4, 5 or 6 for a simulated figure, got {other}"),
            ))
        }
    };
    for (_, c) in &plan {
        c.validate()?;
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::run_experiment;

    #[test]
    fn seed_only_gives_defaults() {
        let cfg = parse_config("seed=1").unwrap();
        let def = ExperimentConfig::default();
        assert_eq!(cfg.dims, SystemDims::baseline());
        assert_eq!(cfg.m_ratio, 0.5);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.snr_db_list, def.snr_db_list);
        assert!(!cfg.an_enabled);
    }

    #[test]
    fn rho_turns_on_artificial_noise() {
        let cfg = parse_config("rho = 0.6\nstreams = 1\n").unwrap();
        assert!(cfg.an_enabled);
        let m = RunManifest::new("test", &cfg, 1);
        assert!((m.an_power_fraction - 0.4).abs() < 1e-15);
        assert_eq!(m.config["rho"], "0.6");
    }

    #[test]
    fn rho_out_of_range() {
        let err = parse_config("rho=1.5").unwrap_err();
        assert!(matches!(err, Error::Validation { field: "rho", .. }), "{err}");
    }

    #[test]
    fn parse_errors_carry_lines() {
        assert!(matches!(parse_config("seed=1\n\nbogus = 3"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_config("# c\nseed"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config("seed = x"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("seed=1\nseed=2"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config("algorithms = zf, nope"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn lists_and_ranges() {
        let cfg = parse_config("snr_db_list = 0:5:20 # dB\nalgorithms = bd, so-thp-sgmi").unwrap();
        assert_eq!(cfg.snr_db_list, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(cfg.algorithms, vec![Algorithm::Bd, Algorithm::SoThpSgmi]);
        let cfg = parse_config("snr_db_list = 3, 7.5, inf").unwrap();
        assert_eq!(cfg.snr_db_list, vec![3.0, 7.5, f64::INFINITY]);
    }

    #[test]
    fn n_r_carries_streams() {
        let cfg = parse_config("n_t = 6\nt_users = 2\nn_r = 3").unwrap();
        assert_eq!(cfg.dims.streams, 3);
        let cfg = parse_config("n_t = 6\nt_users = 2\nn_r = 3\nstreams = 2").unwrap();
        assert_eq!(cfg.dims.streams, 2);
    }

    #[test]
    fn render_round_trip() {
        let cfg = ExperimentConfig {
            snr_db_list: vec![0.1, 1.0 / 3.0, f64::INFINITY],
            m_ratio: 2.0 / 3.0,
            algorithms: vec![Algorithm::SoThp, Algorithm::Zf],
            seed: u64::MAX,
            ..Default::default()
        };
        assert_eq!(parse_config(&render_config(&cfg)).unwrap(), cfg);
        let d = ExperimentConfig::default();
        assert_eq!(parse_config(&render_config(&d)).unwrap(), d);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1.00000000000e0");
        assert_eq!(fmt_sig(f64::NAN), "nan");
        assert_eq!(fmt_sig(1.0 / 3.0).parse::<f64>().unwrap(), 0.333333333333);
    }

    fn tiny() -> ExperimentConfig {
        parse_config("algorithms = bd\nsnr_db_list = 10\nframes_per_point = 2\nsymbols_per_frame = 3").unwrap()
    }

    #[test]
    fn one_cell_two_lines() {
        let r = run_experiment(&tiny()).unwrap();
        let csv = results_csv(&r);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    }

    #[test]
    fn emit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let r = run_experiment(&cfg).unwrap();
        let mut m = RunManifest::new("ber-sweep", &cfg, 2);
        let paths = emit_results(&r, &mut m, dir.path(), "run").unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            assert!(p.exists());
        }
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(&paths[2]).unwrap()).unwrap();
        assert_eq!(back.outputs, paths[..2].to_vec());
        assert_eq!(parse_config(&back.config_text).unwrap(), cfg);
    }

    #[test]
    fn io_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_complexity(&complexity_table(&[4]).unwrap(), &blocker.join("sub"), "c").unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.starts_with(&blocker)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn figure_plans_are_valid() {
        for f in 3..=6 {
            assert!(!figure_plan(f, 1).unwrap().is_empty());
        }
        assert!(figure_plan(2, 1).is_err());
        assert!(figure_plan(7, 1).is_err());
    }
}
