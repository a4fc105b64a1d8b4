//! Subcommands of the `mvsom` binary.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mvsom::ingest::synthetic::{coupled_fixture, desk_fixture, fixture_site_tables, refinement_fixture, site_shape};
use mvsom::ingest::{
    generate_synthetic, load_dataset, prepare_sites, save_dataset, save_site_table, DatasetFormat, SyntheticSpec,
    ViewpointOptions,
};
use mvsom::pipeline::{InputSource, ScanRange};
use mvsom::quality::{scan_maps, scan_result};
use mvsom::topology::{label_nodes, zone_map, zoning_export};
use mvsom::{train_som, Dataset, PipelineConfig, SomMap, TrainingParams, ViewpointMatrix, WorkspaceBundle};

use crate::api::{Api, ChainRequest, PropagateRequest};

#[derive(Debug, Parser)]
#[command(name = "mvsom", version, about = "Multi-viewpoint self-organizing maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge site description tables into a multi-viewpoint dataset.
    Ingest(IngestArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Train one map per side and report recall, precision and F.
    Scan(ScanArgs),
    /// Train a map for one viewpoint and save the model.
    Train(TrainArgs),
    /// Label a trained map and cut it into information areas.
    Zone(ZoneArgs),
    /// Print the consistency matrix of a bundle, or one cell's detail.
    Consistency(ConsistencyArgs),
    /// Propagate activity from nodes or an area of one map to another.
    Propagate(PropagateArgs),
    /// Run a sequence of propagation steps.
    Chain(ChainArgs),
    /// Serve a bundle over HTTP.
    Serve(ServeArgs),
    /// Run the whole pipeline from a config file and write a bundle.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset file (json) or directory (triples).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Dataset format; guessed from the path when omitted.
    #[arg(long)]
    pub format: Option<DatasetFormat>,
}

impl DatasetArgs {
    fn load(&self) -> Result<Dataset> {
        let format = self.format.unwrap_or_else(|| guess_format(&self.dataset));
        Ok(load_dataset(&self.dataset, format)?)
    }
}

fn guess_format(path: &Path) -> DatasetFormat {
    if path.is_dir() || path.extension().is_none() {
        DatasetFormat::Triples
    } else {
        DatasetFormat::Json
    }
}

fn viewpoint<'a>(ds: &'a Dataset, id: &str) -> Result<&'a ViewpointMatrix> {
    ds.viewpoint(id)
        .with_context(|| format!("no viewpoint `{id}`; the dataset has {:?}", ds.viewpoint_ids()))
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output path; a format is guessed from it when `--out-format` is absent.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_format: Option<DatasetFormat>,
}

impl OutputArgs {
    fn save(&self, ds: &Dataset) -> Result<()> {
        let format = self.out_format.unwrap_or_else(|| guess_format(&self.out));
        save_dataset(ds, &self.out, format)?;
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Site tables (CSV); later tables win field conflicts.
    #[arg(long, required = true, num_args = 1..)]
    pub tables: Vec<PathBuf>,
    #[arg(long, default_value = site_shape::DOMAIN_CODE)]
    pub domain_code: String,
    #[arg(long, default_value = site_shape::GEO_PREFIX)]
    pub geo_prefix: String,
    /// Count each link target once instead of by link count.
    #[arg(long)]
    pub dedup_links: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    Desk,
    Coupled,
    Refinement,
    Sites,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, conflicts_with = "spec")]
    pub fixture: Option<Fixture>,
    /// JSON synthetic spec, instead of a fixture.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coupling for the coupled fixture.
    #[arg(long, default_value_t = 1.0)]
    pub coupling: f64,
    /// For the site fixture, also write the raw site tables here.
    #[arg(long)]
    pub tables_dir: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SideRange {
    #[arg(long, default_value_t = ScanRange::default().min_side)]
    pub min_side: usize,
    #[arg(long, default_value_t = ScanRange::default().max_side)]
    pub max_side: usize,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub viewpoint: String,
    #[command(flatten)]
    pub sides: SideRange,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub normalize_rows: bool,
    /// CSV report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub viewpoint: String,
    /// Square side; picked by a size scan when neither this nor
    /// `--width`/`--height` is given.
    #[arg(long, conflicts_with_all = ["width", "height"])]
    pub side: Option<usize>,
    #[arg(long, requires = "height")]
    pub width: Option<usize>,
    #[arg(long, requires = "width")]
    pub height: Option<usize>,
    #[command(flatten)]
    pub sides: SideRange,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub normalize_rows: bool,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ZoneArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// JSON zoning path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BundleArg {
    /// Workspace bundle written by `run`.
    #[arg(long)]
    pub bundle: PathBuf,
}

impl BundleArg {
    fn api(&self) -> Result<Api> {
        Ok(Api::new(WorkspaceBundle::load(&self.bundle)?))
    }
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    pub bundle: BundleArg,
    /// With `--target`, print the per-source-node detail of one cell.
    #[arg(long, requires = "target")]
    pub source: Option<String>,
    #[arg(long, requires = "source")]
    pub target: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub bundle: BundleArg,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    /// Comma-separated node indices of the source map.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "area",
        required_unless_present = "area"
    )]
    pub nodes: Vec<usize>,
    /// Information area id of the source map.
    #[arg(long)]
    pub area: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[command(flatten)]
    pub bundle: BundleArg,
    /// JSON chain request: `{"steps": [...], "theta": ...}`.
    #[arg(long)]
    pub steps: PathBuf,
    /// Overrides the request's theta.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub bundle: BundleArg,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML pipeline config.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_side: Option<usize>,
    #[arg(long)]
    pub max_side: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Directory for the bundle and per-map artifacts.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            if !bytes.ends_with(b"\n") {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec_pretty(value)?)
}

fn training(normalize_rows: bool) -> TrainingParams {
    TrainingParams {
        normalize_rows,
        ..TrainingParams::default()
    }
}

fn summarise(ds: &Dataset) {
    for v in &ds.viewpoints {
        let (rows, cols) = v.shape();
        eprintln!("{}: {rows} x {cols}", v.id());
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Scan(a) => scan(a),
        Command::Train(a) => train(a),
        Command::Zone(a) => zone(a),
        Command::Consistency(a) => consistency(a),
        Command::Propagate(a) => propagate(a),
        Command::Chain(a) => chain(a),
        Command::Serve(a) => serve(a),
        Command::Run(a) => run_pipeline(a),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let tables = a
        .tables
        .iter()
        .map(|p| mvsom::ingest::load_site_table(p))
        .collect::<mvsom::Result<Vec<_>>>()?;
    let ds = prepare_sites(
        &tables,
        &a.domain_code,
        &a.geo_prefix,
        ViewpointOptions {
            dedup_links: a.dedup_links,
        },
    )?;
    summarise(&ds);
    a.output.save(&ds)
}

fn synth(a: SynthArgs) -> Result<()> {
    let ds = match (a.fixture, &a.spec) {
        (Some(Fixture::Sites), _) => {
            let tables = fixture_site_tables(a.seed);
            if let Some(dir) = &a.tables_dir {
                fs::create_dir_all(dir)?;
                for (i, t) in tables.iter().enumerate() {
                    save_site_table(t, &dir.join(format!("table{}.csv", i + 1)))?;
                }
            }
            prepare_sites(
                &tables,
                site_shape::DOMAIN_CODE,
                site_shape::GEO_PREFIX,
                ViewpointOptions::default(),
            )?
        }
        (Some(f), _) => {
            let spec = match f {
                Fixture::Desk => desk_fixture(a.seed),
                Fixture::Coupled => coupled_fixture(a.coupling, a.seed),
                Fixture::Refinement => refinement_fixture(a.seed),
                Fixture::Sites => unreachable!(),
            };
            generate_synthetic(&spec)?
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec: SyntheticSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing synthetic spec {}", path.display()))?;
            generate_synthetic(&spec)?
        }
        (None, None) => bail!("give --fixture or --spec"),
    };
    summarise(&ds);
    a.output.save(&ds)
}

fn scan(a: ScanArgs) -> Result<()> {
    let ds = a.data.load()?;
    let m = viewpoint(&ds, &a.viewpoint)?;
    let params = training(a.normalize_rows);
    let scanned = scan_maps(m, a.sides.min_side, a.sides.max_side, &params, a.seed)?;
    let result = scan_result(&a.viewpoint, &scanned)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    eprintln!("chosen side: {}", result.chosen_side);
    emit(a.out.as_deref(), &csv)
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = a.data.load()?;
    let m = viewpoint(&ds, &a.viewpoint)?;
    let params = training(a.normalize_rows);
    let (w, h) = match (a.side, a.width, a.height) {
        (Some(s), _, _) => (s, s),
        (None, Some(w), Some(h)) => (w, h),
        _ => {
            let s = mvsom::scan_map_sizes(m, a.sides.min_side, a.sides.max_side, &params, a.seed)?.chosen_side;
            eprintln!("scan chose side {s}");
            (s, s)
        }
    };
    let map = train_som(m, w, h, &params, a.seed)?;
    eprintln!("{w}x{h} map, quantization error {:.6}", map.quantization_error(m)?);
    map.save(&a.out)?;
    Ok(())
}

fn zone(a: ZoneArgs) -> Result<()> {
    let ds = a.data.load()?;
    let map = SomMap::load(&a.model)?;
    let m = viewpoint(&ds, &map.viewpoint_id)?;
    let proj = map.project(m)?;
    let labels = label_nodes(&map, &proj, m)?;
    let areas = zone_map(map.grid, &labels, &proj)?;
    eprintln!("{} information areas", areas.len());
    emit(a.out.as_deref(), &json(&zoning_export(&map, m, &proj, &areas)?)?)
}

fn consistency(a: ConsistencyArgs) -> Result<()> {
    let api = a.bundle.api()?;
    let bytes = match (&a.source, &a.target) {
        (Some(s), Some(t)) => json(&api.consistency_detail(s, t)?)?,
        _ => {
            let mut csv = Vec::new();
            api.consistency().write_csv(&mut csv)?;
            csv
        }
    };
    emit(a.out.as_deref(), &bytes)
}

fn propagate(a: PropagateArgs) -> Result<()> {
    let api = a.bundle.api()?;
    let req = PropagateRequest {
        source_map: a.source,
        target_map: a.target,
        nodes: a.area.is_none().then(|| a.nodes.into_iter().collect()),
        area: a.area,
        theta: a.theta,
    };
    emit(a.out.as_deref(), &json(&api.propagate(&req)?)?)
}

fn chain(a: ChainArgs) -> Result<()> {
    let api = a.bundle.api()?;
    let text = fs::read_to_string(&a.steps).with_context(|| format!("reading {}", a.steps.display()))?;
    let mut req: ChainRequest =
        serde_json::from_str(&text).with_context(|| format!("parsing chain {}", a.steps.display()))?;
    if a.theta.is_some() {
        req.theta = a.theta;
    }
    emit(a.out.as_deref(), &json(&api.chain(&req)?)?)
}

fn serve(a: ServeArgs) -> Result<()> {
    let api = a.bundle.api()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::server::serve(api, a.addr))?;
    Ok(())
}

/// Writes the bundle plus readable per-map artifacts into `dir`.
pub fn write_artifacts(bundle: &WorkspaceBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    bundle.save(&dir.join("bundle.json"))?;
    let mut csv = Vec::new();
    bundle.consistency.write_csv(&mut csv)?;
    fs::write(dir.join("consistency.csv"), csv)?;
    for m in &bundle.maps {
        let id = m.id();
        m.map.save(&dir.join(format!("model-{id}.json")))?;
        let mut csv = Vec::new();
        m.scan.write_csv(&mut csv)?;
        fs::write(dir.join(format!("scan-{id}.csv")), csv)?;
        let matrix = viewpoint(&bundle.dataset, id)?;
        let zoning = zoning_export(&m.map, matrix, &m.projection, &m.areas)?;
        fs::write(dir.join(format!("zoning-{id}.json")), json(&zoning)?)?;
    }
    Ok(())
}

fn run_pipeline(a: RunArgs) -> Result<()> {
    let mut config = PipelineConfig::from_toml_file(&a.config)?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(s) = a.min_side {
        config.scan.min_side = s;
    }
    if let Some(s) = a.max_side {
        config.scan.max_side = s;
    }
    if let Some(t) = a.theta {
        config.theta = t;
    }
    if let InputSource::Dataset { path, .. } = &config.input {
        log::info!("reading {}", path.display());
    }
    let bundle = mvsom::run_pipeline(&config)?;
    write_artifacts(&bundle, &a.out_dir)?;
    let mut csv = Vec::new();
    bundle.consistency.write_csv(&mut csv)?;
    emit(None, &csv)
}
