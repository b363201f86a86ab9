//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::curves::{self, GridSpec, ScanParameter};
use crate::error::{PfiError, Result};
use crate::pipeline::{self, PipelineConfig};
use crate::species::{self, Environment, SpeciesParams};
use crate::spectrum::{self, CsrEstimate, IsotopeTable, RangedPeakSet};
use crate::tunneling::{PfiModel, ZModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_FIT_RANGE: i32 = 4;
pub const EXIT_DEGENERATE: i32 = 5;

pub fn exit_code(e: &PfiError) -> i32 {
    match e {
        PfiError::Config(_) | PfiError::Domain(_) | PfiError::Io(_) | PfiError::Json(_) | PfiError::Csv(_) => {
            EXIT_CONFIG
        }
        PfiError::Numerical(_)
        | PfiError::Bracket(_)
        | PfiError::NonphysicalKinematics { .. }
        | PfiError::Extrapolation { .. } => EXIT_NUMERICAL,
        PfiError::FitRange { .. } => EXIT_FIT_RANGE,
        PfiError::Degenerate(_) | PfiError::Ambiguity(_) | PfiError::UndefinedCsr(_) => EXIT_DEGENERATE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "pfikit", version, about = "Post-field-ionization charge-state curves and peak-overlap resolution")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Species file, shipped asset or species name (e.g. si_clusters.json, Si3).
    #[arg(long, global = true)]
    pub species: Option<String>,
    /// Z-model file or shipped asset name (default z_kingham).
    #[arg(long, global = true)]
    pub zmodel: Option<String>,
    /// Work function override in eV.
    #[arg(long, global = true)]
    pub phi: Option<f64>,
    /// Screening length override in nm.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Upper integration limit in bohr.
    #[arg(long, global = true)]
    pub zmax: Option<f64>,
    /// Field grid lo:hi:step in V/nm.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Progress messages on stdout.
    #[arg(long, global = true)]
    pub verbose: bool,
    /// Validate inputs and stop before computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Charge-state curves, one file per species.
    Curves {
        /// Also write a gnuplot script plotting the CSR columns.
        #[arg(long)]
        gnuplot: bool,
    },
    /// F50 crossover field per species.
    F50 {
        /// Search range lo:hi in V/nm.
        #[arg(long, default_value = "5:45")]
        range: String,
    },
    /// Fit the Z-model offset c0 to a target F50.
    FitZ {
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
    },
    /// Fit one ionization energy to a target F50.
    FitIe {
        #[arg(long)]
        target: f64,
        /// 1-based ladder index.
        #[arg(long, default_value_t = 2)]
        ie: u32,
    },
    /// F50 as a function of m_q or the work function.
    Scan {
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Deconvolve ranged peaks.
    Deconv {
        /// Peak CSV (mz_Da,counts,assignments).
        #[arg(long)]
        peaks: PathBuf,
        /// Isotope table (default: shipped).
        #[arg(long)]
        isotopes: Option<String>,
        /// Species whose 2+/(1+ + 2+) is reported before and after.
        #[arg(long = "ratio")]
        ratios: Vec<String>,
    },
    /// Charge-state ratio with 2σ counting error from ranged peaks.
    Csr {
        #[arg(long)]
        peaks: PathBuf,
        /// Species label, e.g. Si2.
        #[arg(long)]
        of: String,
        #[arg(long)]
        isotopes: Option<String>,
        /// Credit each peak to its first assignment instead of deconvolving.
        #[arg(long)]
        naive: bool,
    },
    /// Field from a measured ratio on the species' curve.
    Field {
        #[arg(long)]
        csr: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        n_lo: Option<f64>,
        #[arg(long)]
        n_hi: Option<f64>,
        /// Precomputed curve CSV instead of computing one.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Run an overlap-resolution pipeline config.
    Resolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Field from a voltage ratio, F0 V / V0.
    Kellogg {
        #[arg(long)]
        f0: f64,
        #[arg(long)]
        voltage: f64,
        #[arg(long)]
        v0: f64,
    },
}

/// Parse arguments and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("pfikit: {e}");
            exit_code(&e)
        }
    }
}

struct Ctx<'a> {
    g: &'a GlobalOpts,
}

impl Ctx<'_> {
    fn progress(&self, msg: &str) {
        if self.g.verbose {
            println!("{msg}");
        }
    }

    fn species(&self) -> Result<Vec<SpeciesParams>> {
        let r = self
            .g
            .species
            .as_deref()
            .ok_or_else(|| PfiError::Config("no species given (use --species)".into()))?;
        let list = species::load_species(r)?;
        if list.is_empty() {
            return Err(PfiError::Config(format!("no species in {r}")));
        }
        Ok(list)
    }

    fn grid(&self) -> Result<GridSpec> {
        match &self.g.grid {
            Some(g) => g.parse(),
            None => Ok(GridSpec::default()),
        }
    }

    fn zmodel(&self) -> Result<ZModel> {
        match &self.g.zmodel {
            Some(z) => ZModel::load(z),
            None => Ok(ZModel::kingham()),
        }
    }

    /// Model for one species: the species' own work function applies unless
    /// `--phi` is given.
    fn model_for(&self, s: &SpeciesParams) -> Result<PfiModel> {
        self.model_with(s.work_function_ev)
    }

    fn model_with(&self, species_phi: Option<f64>) -> Result<PfiModel> {
        if let Some(phi) = self.g.phi {
            if !(phi > 0.0 && phi <= 10.0) {
                return Err(PfiError::Config(format!("--phi {phi} outside (0, 10] eV")));
            }
        }
        if let Some(z) = self.g.zmax {
            if !(50.0..=1000.0).contains(&z) {
                return Err(PfiError::Config(format!("--zmax {z} outside [50, 1000] bohr")));
            }
        }
        let phi = self
            .g
            .phi
            .or(species_phi)
            .unwrap_or(species::DEFAULT_WORK_FUNCTION_EV);
        let lambda = self.g.lambda.unwrap_or(species::DEFAULT_SCREENING_LENGTH_NM);
        let mut m = PfiModel::new(Environment::new(phi, lambda)?, self.zmodel()?);
        if let Some(z) = self.g.zmax {
            m.z_max_au = z;
        }
        m.validate()?;
        Ok(m)
    }

    fn inputs(&self, species: &[SpeciesParams]) -> Result<serde_json::Value> {
        let models = species
            .iter()
            .map(|s| Ok((s.name.clone(), self.model_for(s)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(json!({
            "species": species,
            "models": models,
        }))
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.g.out)?;
        Ok(self.g.out.join(name))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let path = self.out_path(name)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.progress(&format!("wrote {}", path.display()));
        Ok(path)
    }
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || PfiError::Config(format!("range '{s}' is not lo:hi"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo && hi <= curves::MAX_GRID_FIELD_VNM) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn isotopes(r: &Option<String>) -> Result<IsotopeTable> {
    match r {
        Some(r) => IsotopeTable::load(r),
        None => IsotopeTable::shipped(),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx { g: &cli.global };
    match &cli.command {
        Command::Curves { gnuplot } => cmd_curves(&ctx, *gnuplot),
        Command::F50 { range } => cmd_f50(&ctx, range),
        Command::FitZ { target, c1 } => cmd_fit_z(&ctx, *target, *c1),
        Command::FitIe { target, ie } => cmd_fit_ie(&ctx, *target, *ie),
        Command::Scan { param, values } => cmd_scan(&ctx, param, values),
        Command::Deconv { peaks, isotopes, ratios } => cmd_deconv(&ctx, peaks, isotopes, ratios),
        Command::Csr { peaks, of, isotopes, naive } => cmd_csr(&ctx, peaks, of, isotopes, *naive),
        Command::Field {
            csr,
            sigma,
            n_lo,
            n_hi,
            curve,
        } => cmd_field(&ctx, *csr, *sigma, *n_lo, *n_hi, curve.as_deref()),
        Command::Resolve { config } => cmd_resolve(&ctx, config),
        Command::Kellogg { f0, voltage, v0 } => cmd_kellogg(&ctx, *f0, *voltage, *v0),
    }
}

fn cmd_curves(ctx: &Ctx, gnuplot: bool) -> Result<()> {
    let species = ctx.species()?;
    let grid = ctx.grid()?;
    for s in &species {
        ctx.model_for(s)?;
    }
    if ctx.g.dry_run {
        return Ok(());
    }
    let mut files = Vec::new();
    for s in &species {
        ctx.progress(&format!("{}: {} grid points", s.name, grid.points().len()));
        let curve = curves::generate_curve(s, &ctx.model_for(s)?, &grid)?;
        let stem = format!("curve_{}", file_stem(&s.name));
        let path = match ctx.g.format {
            Format::Csv => {
                let path = ctx.out_path(&format!("{stem}.csv"))?;
                let mut buf = Vec::new();
                curve.write_csv(&mut buf)?;
                fs::write(&path, buf)?;
                ctx.progress(&format!("wrote {}", path.display()));
                path
            }
            Format::Json => ctx.write_json(&format!("{stem}.json"), &curve)?,
        };
        files.push((s.name.clone(), path));
    }
    if gnuplot && ctx.g.format == Format::Csv {
        let mut gp = String::from(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'F (V/nm)'\nset ylabel 'CSR'\nplot ",
        );
        let plots: Vec<String> = files
            .iter()
            .map(|(name, p)| {
                let file = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                format!("'{file}' using 1:'csr' with lines title '{name}'")
            })
            .collect();
        gp.push_str(&plots.join(", \\\n     "));
        gp.push('\n');
        let path = ctx.out_path("curves.gp")?;
        fs::write(&path, gp)?;
        ctx.progress(&format!("wrote {}", path.display()));
    }
    Ok(())
}

fn cmd_f50(ctx: &Ctx, range: &str) -> Result<()> {
    let species = ctx.species()?;
    let range = parse_range(range)?;
    let inputs = ctx.inputs(&species)?;
    if ctx.g.dry_run {
        return Ok(());
    }
    let mut results = BTreeMap::new();
    for s in &species {
        ctx.progress(&format!("{}: searching {:?} V/nm", s.name, range));
        let r = curves::find_f50(s, &ctx.model_for(s)?, range).map_err(|e| e.context(&s.name))?;
        results.insert(
            s.name.clone(),
            json!({ "f50_Vnm": r.f50, "bracket": r.bracket, "achieved_csr": r.achieved_csr, "residual": r.achieved_csr - 0.5 }),
        );
    }
    ctx.write_json("f50_report.json", &json!({ "inputs": inputs, "search_range": range, "results": results }))?;
    Ok(())
}

fn single_species(ctx: &Ctx) -> Result<SpeciesParams> {
    let list = ctx.species()?;
    if list.len() != 1 {
        return Err(PfiError::Config(format!(
            "this command takes one species, got {}",
            list.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(list.into_iter().next().expect("one species"))
}

fn cmd_fit_z(ctx: &Ctx, target: f64, c1: f64) -> Result<()> {
    let s = single_species(ctx)?;
    let model = ctx.model_for(&s)?;
    ZModel::new(1.0, c1)?;
    if ctx.g.dry_run {
        return Ok(());
    }
    let fit = curves::fit_z_offset(&s, &model, target, c1)?;
    ctx.write_json(
        "fit_z_report.json",
        &json!({ "inputs": { "species": s, "model": model, "target_f50_Vnm": target, "c1": c1, "c0_range": curves::C0_RANGE }, "result": fit }),
    )?;
    Ok(())
}

fn cmd_fit_ie(ctx: &Ctx, target: f64, index: u32) -> Result<()> {
    let s = single_species(ctx)?;
    let model = ctx.model_for(&s)?;
    s.ionization_energy(index)?;
    if ctx.g.dry_run {
        return Ok(());
    }
    let fit = curves::fit_ie(&s, &model, target, index)?;
    ctx.write_json(
        "fit_ie_report.json",
        &json!({ "inputs": { "species": s, "model": model, "target_f50_Vnm": target, "ie_index": index }, "result": fit }),
    )?;
    Ok(())
}

fn cmd_scan(ctx: &Ctx, param: &str, values: &[f64]) -> Result<()> {
    let s = single_species(ctx)?;
    let parameter: ScanParameter = param.parse()?;
    let model = ctx.model_for(&s)?;
    if ctx.g.dry_run {
        return Ok(());
    }
    let points = curves::sensitivity_scan(&s, &model, parameter, values)?;
    ctx.write_json(
        "scan_report.json",
        &json!({ "inputs": { "species": s, "model": model, "parameter": parameter, "values": values }, "result": points }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct RatioReport {
    species: String,
    before: Option<CsrEstimate>,
    after: Option<CsrEstimate>,
}

fn cmd_deconv(ctx: &Ctx, peaks: &Path, iso: &Option<String>, ratios: &[String]) -> Result<()> {
    let table = isotopes(iso)?;
    let set = RangedPeakSet::from_path(peaks)?;
    let matrix = spectrum::build_overlap_matrix(&set, &table)?;
    if ctx.g.dry_run {
        return Ok(());
    }
    let result = spectrum::deconvolve(&set, &matrix)?;
    ctx.progress(&format!("residual norm {}", result.residual_norm));
    let naive = spectrum::naive_counts(&set);
    let ratio_reports: Vec<RatioReport> = ratios
        .iter()
        .map(|sp| RatioReport {
            species: sp.clone(),
            before: spectrum::csr_from_totals(&naive, sp, (1, 2)).ok(),
            after: spectrum::compute_csr(&result, sp, (1, 2)).ok(),
        })
        .collect();
    ctx.write_json(
        "deconv_report.json",
        &json!({ "inputs": { "peaks": peaks, "isotope_table": table.version }, "result": result, "ratios": ratio_reports }),
    )?;
    let path = ctx.out_path("deconv_peaks.csv")?;
    let mut buf = Vec::new();
    writeln!(buf, "mz_Da,observed,contributor,counts")?;
    for p in &result.peaks {
        for c in &p.contributions {
            writeln!(
                buf,
                "{},{},{},{}",
                curves::fmt_num(p.mz),
                curves::fmt_num(p.observed),
                c.ion,
                curves::fmt_num(c.counts)
            )?;
        }
    }
    fs::write(&path, buf)?;
    eprintln!("pfikit: deconvolution residual norm {:.6e}", result.residual_norm);
    Ok(())
}

fn cmd_csr(ctx: &Ctx, peaks: &Path, of: &str, iso: &Option<String>, naive: bool) -> Result<()> {
    let table = isotopes(iso)?;
    let set = RangedPeakSet::from_path(peaks)?;
    let matrix = spectrum::build_overlap_matrix(&set, &table)?;
    spectrum::parse_species_label(of)?;
    if ctx.g.dry_run {
        return Ok(());
    }
    let est = if naive {
        spectrum::csr_from_totals(&spectrum::naive_counts(&set), of, (1, 2))?
    } else {
        spectrum::compute_csr(&spectrum::deconvolve(&set, &matrix)?, of, (1, 2))?
    };
    ctx.write_json(
        "csr_report.json",
        &json!({ "inputs": { "peaks": peaks, "species": of, "deconvolved": !naive }, "result": est }),
    )?;
    Ok(())
}

fn cmd_field(
    ctx: &Ctx,
    csr: Option<f64>,
    sigma: Option<f64>,
    n_lo: Option<f64>,
    n_hi: Option<f64>,
    curve_csv: Option<&Path>,
) -> Result<()> {
    let s = single_species(ctx)?;
    let model = ctx.model_for(&s)?;
    let grid = ctx.grid()?;
    let (value, sigma, counts) = match (csr, n_lo, n_hi) {
        (Some(c), None, None) => (c, sigma, None),
        (None, Some(a), Some(b)) => {
            let e = CsrEstimate::from_counts(&s.name, (1, 2), a, b)?;
            (e.value, Some(e.two_sigma), Some(e))
        }
        _ => return Err(PfiError::Config("give either --csr or both --n-lo and --n-hi".into())),
    };
    if ctx.g.dry_run {
        return Ok(());
    }
    let curve = match curve_csv {
        Some(p) => pipeline::read_curve_csv(p, &s.name)?,
        None => curves::generate_curve(&s, &model, &grid)?,
    };
    let est = curves::csr_to_field(&curve, value, sigma)?;
    ctx.write_json(
        "field_report.json",
        &json!({ "inputs": { "species": s, "model": model, "csr": value, "sigma": sigma, "counts": counts, "curve": curve_csv }, "result": est }),
    )?;
    Ok(())
}

fn cmd_resolve(ctx: &Ctx, config: &Path) -> Result<()> {
    let cfg = PipelineConfig::from_path(config)?;
    let base = ctx.model_with(None)?;
    cfg.model.apply(&base)?;
    if ctx.g.dry_run {
        return Ok(());
    }
    let report = pipeline::run_pipeline(&cfg, &base)?;
    ctx.write_json("resolve_report.json", &json!({ "inputs": cfg, "report": report }))?;
    let path = ctx.out_path("resolve_report.txt")?;
    fs::write(&path, pipeline::render_text(&report))?;
    ctx.progress(&format!("wrote {}", path.display()));
    for f in &report.flags {
        eprintln!("pfikit: flag {} [{}]: {}", f.kind.as_str(), f.subject, f.detail);
    }
    Ok(())
}

fn cmd_kellogg(ctx: &Ctx, f0: f64, voltage: f64, v0: f64) -> Result<()> {
    let f = pipeline::kellogg_field(f0, voltage, v0)?;
    if ctx.g.dry_run {
        return Ok(());
    }
    ctx.write_json(
        "kellogg_report.json",
        &json!({ "inputs": { "f0_Vnm": f0, "voltage": voltage, "v0": v0 }, "result": { "field_Vnm": f } }),
    )?;
    Ok(())
}
