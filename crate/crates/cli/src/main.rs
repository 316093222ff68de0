use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use lrfill::config::{PipelineConfig, KEYS};
use lrfill::dft::dft_time_axis;
use lrfill::io::{read_volume, write_mask, write_volume};
use lrfill::pipeline::{apply_mask, compare_reports, make_mask, read_report, run_interpolation, snr_db, write_compare};
use lrfill::synth::{linear_events, plant_slice, EventSpec, PlantSpec};
use lrfill::transforms::{singular_decay, top_fraction, unfold, write_decay_csv};
use lrfill::{Axis, Matricization, Mode};

#[derive(Parser)]
#[command(name = "lrfill", version, about = "Low-rank interpolation of frequency-sliced seismic volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Plant,
    Events,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic volume described by a TOML spec.
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a mask, write it and the zero-filled volume.
    Subsample {
        #[arg(long)]
        input: PathBuf,
        /// Zero-filled output volume.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask_out: PathBuf,
        #[arg(long, default_value = "jittered")]
        scheme: String,
        #[arg(long, default_value_t = 0.2)]
        keep: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// sources | receivers | entries
        #[arg(long, default_value = "sources")]
        decimate: String,
        /// flattened | per-axis
        #[arg(long, default_value = "flattened")]
        layout: String,
    },
    /// Complete every in-band frequency slice.
    #[command(after_help = interpolate_help())]
    Interpolate {
        /// Flat `key = value` file; flags given after it take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `--key value` or `--key=value` for any config key.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
        overrides: Vec<String>,
    },
    /// SNR of an estimate against the truth.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
    },
    /// Singular-value decay of one frequency slice in both unfoldings.
    Svdscan {
        #[arg(long)]
        input: PathBuf,
        /// Frequency in Hz; the nearest bin is used.
        #[arg(long)]
        freq: f64,
        #[arg(long, default_value_t = 0.004)]
        dt: f64,
        /// Writes `<prefix>_srcpair.csv` and `<prefix>_recsrcx.csv`.
        #[arg(long)]
        prefix: PathBuf,
    },
    /// Per-frequency SNR and time differences of two reports (second − first).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn interpolate_help() -> String {
    format!("Config keys: {}", KEYS.join(", "))
}

fn parse_overrides(cfg: &mut PipelineConfig, args: &[String]) -> Result<()> {
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            bail!("expected --key, got {arg:?}");
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().with_context(|| format!("--{flag} needs a value"))?;
                (flag.to_string(), v.clone())
            }
        };
        let key = key.replace('-', "_");
        cfg.set(&key, &value).with_context(|| format!("--{flag}"))?;
    }
    Ok(())
}

fn generate(kind: Kind, spec: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let vol = match kind {
        Kind::Plant => {
            let s: PlantSpec = toml::from_str(&text).context("plant spec")?;
            plant_slice(&s)?.to_volume()?
        }
        Kind::Events => {
            let s: EventSpec = toml::from_str(&text).context("event spec")?;
            let (vol, report) = linear_events(&s)?;
            if report.clipped > 0 {
                eprintln!("warning: {} arrivals fall outside the record", report.clipped);
            }
            vol
        }
    };
    write_volume(&vol, out)?;
    println!("wrote {} ({:?} {:?})", out.display(), vol.axes(), vol.dims());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn subsample(
    input: &Path,
    out: &Path,
    mask_out: &Path,
    scheme: &str,
    keep: f64,
    seed: u64,
    decimate: &str,
    layout: &str,
) -> Result<()> {
    let vol = read_volume(input)?;
    let mut cfg = PipelineConfig::default();
    cfg.set("scheme", scheme)?;
    cfg.set("decimate", decimate)?;
    cfg.set("jitter_layout", layout)?;
    cfg.keep = keep;
    cfg.sampling_seed = seed;
    let mask = make_mask(vol.spatial_dims()?, &cfg)?;
    write_volume(&apply_mask(&vol, &mask)?, out)?;
    write_mask(&mask.to_grid(), mask_out)?;
    println!("kept {} of {} traces", mask.count(), mask.observed().len());
    Ok(())
}

fn interpolate(config: Option<&Path>, overrides: &[String]) -> Result<bool> {
    let mut cfg = PipelineConfig::default();
    if let Some(p) = config {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.apply_text(&text).with_context(|| format!("config {}", p.display()))?;
    }
    parse_overrides(&mut cfg, overrides)?;
    cfg.validate()?;
    let summary = run_interpolation(&cfg)?;
    for r in &summary.rows {
        let snr = r.snr_db.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!(
            "{:8.3} Hz  rank {:3}  res/‖b‖ {:.4}  outer {:3}  inner {:6}  {:7.2}s  snr {snr}  {}",
            r.freq_hz, r.rank, r.rel_residual, r.outer_iters, r.inner_iters, r.wall_s, r.status
        );
    }
    if let Some(s) = summary.overall_snr_db {
        println!("overall SNR {s:.2} dB");
    }
    println!("{} slices, {:.2}s", summary.rows.len(), summary.wall_s);
    let failed = summary.failures();
    if failed > 0 {
        eprintln!("{failed} slice(s) failed");
    }
    Ok(failed == 0)
}

fn evaluate(truth: &Path, estimate: &Path) -> Result<()> {
    let t = read_volume(truth)?;
    let e = read_volume(estimate)?;
    if t.axes() != e.axes() || t.dims() != e.dims() {
        bail!("volumes differ in layout: {:?} {:?} vs {:?} {:?}", t.axes(), t.dims(), e.axes(), e.dims());
    }
    println!("SNR {:.4} dB", snr_db(t.data(), e.data())?);
    Ok(())
}

fn svdscan(input: &Path, freq: f64, dt: f64, prefix: &Path) -> Result<()> {
    let vol = read_volume(input)?;
    let spec = if vol.spectral_axis() == Axis::T { dft_time_axis(&vol)? } else { vol };
    let n = spec.extent(Axis::F).context("volume has no frequency axis")?;
    let k = ((freq * n as f64 * dt).round() as usize).min(n - 1);
    let slice = spec.slice(k)?;
    for mode in [Mode::SrcPair, Mode::RecSrcX] {
        let decay = singular_decay(&unfold(&slice, &Matricization::new(mode, slice.dims)))?;
        let path = PathBuf::from(format!("{}_{mode}.csv", prefix.display()));
        write_decay_csv(&path, &decay)?;
        let top = (decay.len() as f64 * 0.1).ceil() as usize;
        println!("{mode}: top 10% carry {:.4} of the nuclear norm -> {}", top_fraction(&decay, top), path.display());
    }
    Ok(())
}

fn compare(a: &Path, b: &Path, out: Option<&Path>) -> Result<()> {
    let rows = compare_reports(&read_report(a)?, &read_report(b)?);
    match out {
        Some(p) => write_compare(p, &rows)?,
        None => {
            println!("freq_hz,snr_a,snr_b,snr_delta,wall_a,wall_b,wall_delta");
            let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            for r in &rows {
                println!(
                    "{},{},{},{},{},{},{}",
                    r.freq_hz,
                    f(r.snr_a),
                    f(r.snr_b),
                    f(r.snr_delta),
                    r.wall_a,
                    r.wall_b,
                    r.wall_delta
                );
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { kind, spec, out } => generate(kind, &spec, &out)?,
        Command::Subsample {
            input,
            out,
            mask_out,
            scheme,
            keep,
            seed,
            decimate,
            layout,
        } => subsample(&input, &out, &mask_out, &scheme, keep, seed, &decimate, &layout)?,
        Command::Interpolate { config, overrides } => return interpolate(config.as_deref(), &overrides),
        Command::Evaluate { truth, estimate } => evaluate(&truth, &estimate)?,
        Command::Svdscan { input, freq, dt, prefix } => svdscan(&input, freq, dt, &prefix)?,
        Command::Compare { a, b, out } => compare(&a, &b, out.as_deref())?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_accept_both_spellings() {
        let mut cfg = PipelineConfig::default();
        let args: Vec<String> = ["--f_min", "5", "--f-max=60", "--eta_fraction", "0.01"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        parse_overrides(&mut cfg, &args).unwrap();
        assert_eq!(cfg.f_min, 5.0);
        assert_eq!(cfg.f_max, Some(60.0));
        assert_eq!(cfg.eta_fraction, 0.01);
    }

    #[test]
    fn overrides_reject_garbage() {
        let mut cfg = PipelineConfig::default();
        for bad in [&["f_min", "5"][..], &["--nope", "1"], &["--rank"]] {
            let args: Vec<String> = bad.iter().map(|s| s.to_string()).collect();
            assert!(parse_overrides(&mut cfg, &args).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn every_key_is_a_flag() {
        let samples = [
            ("solver", "levelset"),
            ("rank_schedule", "3:5,70:20"),
            ("eta_mode", "as-printed"),
            ("balance", "false"),
            ("matricization", "srcpair"),
            ("scheme", "uniform"),
            ("decimate", "entries"),
            ("jitter_layout", "per-axis"),
            ("f_max", "nyquist"),
        ];
        for key in KEYS {
            let value = samples.iter().find(|(k, _)| k == key).map_or("1", |(_, v)| v);
            let mut cfg = PipelineConfig::default();
            parse_overrides(&mut cfg, &[format!("--{key}"), value.to_string()]).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
