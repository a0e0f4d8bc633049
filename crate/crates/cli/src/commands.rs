//! The subcommands.

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgGroup, Args, ValueEnum};
use serde::Deserialize;
use tagmap_core::evaluation::{
    build_grid_graph, ClassTagMapping, EntityKind, Evaluator, LabelConvention, LabelSet, Mappings, Scene, SceneMesh,
};
use tagmap_core::grounding::{DistanceMode, LlmProvider, OpenAiProvider, ScriptedProvider, ToolBox};
use tagmap_core::ingestion::{build_map, FileTagger, HttpTagger, Manifest, Tagger};
use tagmap_core::localization::{localize_tag, vote_dump, ProposalRecord};
use tagmap_core::store::TagMap;
use tagmap_service::AppState;

use crate::config::CliConfig;
use crate::error::{usage, Classify, CliResult};

pub fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).io(format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).io("writing to stdout")
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).internal("serializing output")?;
    text.push('\n');
    Ok(text)
}

fn load_map(path: &Path) -> CliResult<TagMap> {
    TagMap::load(path).io(format!("loading tag map {}", path.display()))
}

fn load_mesh(path: &Path) -> CliResult<SceneMesh> {
    SceneMesh::load(path).io(format!("loading mesh {}", path.display()))
}

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().internal("starting worker pool")
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("tagger").required(true).args(["tags_dir", "tagger_url"])))]
pub struct BuildArgs {
    /// Dataset manifest (JSON list of posed RGB-D frames).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of precomputed per-frame tag files.
    #[arg(long)]
    pub tags_dir: Option<PathBuf>,
    /// Tagging service URL; images are posted as PNG.
    #[arg(long)]
    pub tagger_url: Option<String>,
    /// Where to write the tag map.
    #[arg(long)]
    pub out: PathBuf,
    /// Print the build summary (kept and discarded frames) as JSON.
    #[arg(long)]
    pub summary: bool,
}

pub fn build(args: &BuildArgs, cfg: &CliConfig) -> CliResult<()> {
    let manifest = Manifest::load(&args.manifest).io(format!("reading manifest {}", args.manifest.display()))?;
    let tagger: Box<dyn Tagger> = match (&args.tags_dir, &args.tagger_url) {
        (Some(dir), _) => Box::new(FileTagger::new(dir)),
        (None, Some(url)) => Box::new(HttpTagger::new(url.clone())),
        (None, None) => return Err(usage("give --tags-dir or --tagger-url")),
    };
    let (map, summary) = build_map(&manifest, tagger.as_ref(), &cfg.construction, cfg.workers());
    map.save(&args.out).io(format!("writing {}", args.out.display()))?;
    tracing::info!(
        frames = summary.total_frames,
        kept = summary.kept.len(),
        discarded = summary.discarded.len(),
        tags = summary.unique_tags,
        "tag map written to {}",
        args.out.display()
    );
    if args.summary {
        write_output(None, &to_json(&summary)?)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("which").required(true).args(["tag", "all_tags"])))]
pub struct LocalizeArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub tag: Option<String>,
    /// Localize every tag in the map.
    #[arg(long)]
    pub all_tags: bool,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the tag's voxel votes as a point list.
    #[arg(long, requires = "tag")]
    pub votes: Option<PathBuf>,
}

pub fn localize(args: &LocalizeArgs, cfg: &CliConfig) -> CliResult<()> {
    let map = load_map(&args.map)?;
    let params = &cfg.localization;
    let tags = match &args.tag {
        Some(t) => vec![t.clone()],
        None => map.unique_tags(),
    };
    let mut records = Vec::new();
    for tag in &tags {
        let proposals = localize_tag(&map, tag, params);
        if proposals.is_empty() {
            tracing::info!(tag = tag.as_str(), "no proposals");
        }
        records.extend(proposals.iter().map(|p| ProposalRecord::new(tag, p)));
    }
    write_output(args.out.as_deref(), &to_json(&records)?)?;
    if let (Some(path), Some(tag)) = (&args.votes, &args.tag) {
        write_output(Some(path), &to_json(&vote_dump(&map, tag, params))?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Convention {
    Plain,
    Mp3d,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["map", "scenes"])))]
pub struct EvalArgs {
    /// Tag map of a single scene.
    #[arg(long, requires_all = ["mesh", "labels"])]
    pub map: Option<PathBuf>,
    /// Scene mesh (.ply or .obj).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Ground-truth labels (JSON).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// JSON list of `{map, mesh, labels}` scenes, paths relative to the list.
    #[arg(long, conflicts_with_all = ["map", "mesh", "labels"])]
    pub scenes: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "plain")]
    pub label_convention: Convention,
    /// Object class → tags mapping (defaults to the shipped one).
    #[arg(long)]
    pub object_mapping: Option<PathBuf>,
    /// Region class → tags mapping (defaults to the shipped one).
    #[arg(long)]
    pub region_mapping: Option<PathBuf>,
    /// Directory receiving report.json and report.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFiles {
    map: PathBuf,
    mesh: PathBuf,
    labels: PathBuf,
}

fn scene_list(args: &EvalArgs) -> CliResult<Vec<SceneFiles>> {
    if let Some(list) = &args.scenes {
        let text = std::fs::read_to_string(list).io(format!("reading {}", list.display()))?;
        let mut scenes: Vec<SceneFiles> =
            serde_json::from_str(&text).io(format!("malformed scene list {}", list.display()))?;
        let base = list.parent().unwrap_or(Path::new(""));
        for s in &mut scenes {
            for p in [&mut s.map, &mut s.mesh, &mut s.labels] {
                *p = base.join(&*p);
            }
        }
        return Ok(scenes);
    }
    match (&args.map, &args.mesh, &args.labels) {
        (Some(map), Some(mesh), Some(labels)) => {
            Ok(vec![SceneFiles { map: map.clone(), mesh: mesh.clone(), labels: labels.clone() }])
        }
        _ => Err(usage("--map needs --mesh and --labels")),
    }
}

fn load_mapping(path: Option<&Path>, fallback: fn() -> ClassTagMapping) -> CliResult<ClassTagMapping> {
    match path {
        Some(p) => ClassTagMapping::load(p).io(format!("loading mapping {}", p.display())),
        None => Ok(fallback()),
    }
}

pub fn eval(args: &EvalArgs, cfg: &CliConfig) -> CliResult<()> {
    let scenes = scene_list(args)?;
    let mappings = Mappings {
        objects: load_mapping(args.object_mapping.as_deref(), ClassTagMapping::default_objects)?,
        regions: load_mapping(args.region_mapping.as_deref(), ClassTagMapping::default_regions)?,
    };
    let convention = match args.label_convention {
        Convention::Plain => LabelConvention::Plain,
        Convention::Mp3d => LabelConvention::Mp3d,
    };
    let config = &cfg.evaluation;
    let workers = pool(cfg.workers())?;
    let mut evaluator = Evaluator::new();
    let mut seen: Vec<(EntityKind, String)> = Vec::new();
    for files in &scenes {
        let map = load_map(&files.map)?;
        let scene = Scene::new(load_mesh(&files.mesh)?);
        let labels = LabelSet::load(&files.labels, convention)
            .io(format!("loading labels {}", files.labels.display()))?;
        seen.extend(labels.entities.iter().map(|e| (e.kind, e.class.clone())));
        let graph = workers
            .install(|| build_grid_graph(&scene, &config.grid))
            .internal(format!("building the navigation graph of {}", files.mesh.display()))?;
        tracing::info!(
            scene = %files.map.display(),
            nodes = graph.nodes().len(),
            edges = graph.edges().len(),
            labels = labels.entities.len(),
            "evaluating"
        );
        let params = &cfg.localization;
        let localize = |t: &str| localize_tag(&map, t, params);
        workers.install(|| evaluator.add_scene(&scene, &graph, &labels.entities, &mappings, &localize, config));
    }
    for (kind, supplied) in [(EntityKind::Object, &args.object_mapping), (EntityKind::Region, &args.region_mapping)] {
        let unknown: Vec<&str> = mappings
            .for_kind(kind)
            .classes()
            .map(|(c, _)| c)
            .filter(|c| !seen.iter().any(|(k, s)| *k == kind && s == c))
            .collect();
        if unknown.is_empty() {
            continue;
        }
        if supplied.is_some() {
            tracing::warn!(kind = kind.as_str(), "mapping classes without labels, skipped: {}", unknown.join(", "));
        } else {
            tracing::debug!(kind = kind.as_str(), count = unknown.len(), "shipped mapping classes without labels");
        }
    }
    let report = evaluator.report(config);
    std::fs::create_dir_all(&args.out).io(format!("creating {}", args.out.display()))?;
    let mut json = report.to_json_pretty();
    json.push('\n');
    write_output(Some(&args.out.join("report.json")), &json)?;
    write_output(Some(&args.out.join("report.csv")), &report.to_csv())?;
    if report.unmapped_instances > 0 {
        tracing::info!(instances = report.unmapped_instances, "labels without a class mapping were not evaluated");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// Scene mesh served to the viewer.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Replay a scripted conversation file instead of calling a model.
    #[arg(long)]
    pub mock_provider: Option<PathBuf>,
    /// Answer distance tools with navigation-graph path lengths (needs --mesh).
    #[arg(long, requires = "mesh")]
    pub graph_distances: bool,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
}

pub fn serve(args: &ServeArgs, cfg: &CliConfig) -> CliResult<()> {
    let provider: Arc<dyn LlmProvider> = match &args.mock_provider {
        Some(path) => Arc::new(ScriptedProvider::load(path).io(format!("loading mock script {}", path.display()))?),
        None => Arc::new(OpenAiProvider::from_env(cfg.provider.clone()).usage("provider")?),
    };
    let map = Arc::new(load_map(&args.map)?);
    let mesh = args.mesh.as_deref().map(load_mesh).transpose()?;
    let mut toolbox = ToolBox::new(Arc::clone(&map), cfg.localization.clone());
    if args.graph_distances {
        let mesh = mesh.clone().ok_or_else(|| usage("--graph-distances needs --mesh"))?;
        let scene = Scene::new(mesh);
        let graph = build_grid_graph(&scene, &cfg.evaluation.grid).internal("building the navigation graph")?;
        toolbox = toolbox.with_distance_mode(DistanceMode::Graph { scene: Arc::new(scene), graph: Arc::new(graph) });
    }
    let mut state = AppState::new(toolbox, provider, cfg.provider.max_rounds);
    if let Some(mesh) = mesh {
        state = state.with_mesh(mesh);
    }

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().internal("starting runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.bind).await.io(format!("binding {}", args.bind))?;
        let addr = listener.local_addr().io("reading the bound address")?;
        tracing::info!(tags = map.num_tags(), viewpoints = map.num_viewpoints(), "serving on http://{addr}");
        write_output(None, &format!("listening on http://{addr}\n"))?;
        tagmap_service::serve(listener, Arc::new(state)).await.io("serving")
    })
}
