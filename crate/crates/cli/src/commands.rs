use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssg_core::embedding::{load_external_embeddings, EmbeddingTable, KeySpace};
use ssg_core::frame::{load_frame, Frame};
use ssg_core::gnn::{
    fit_normalization, frame_batch, relation_labels, train as train_model, BatchOptions,
    ContextMode, ModelParams, TrainBatch,
};
use ssg_core::graph::SceneGraph;
use ssg_core::knowledge::{
    extract_subgraph, load_numberbatch, parse_dump, spectral_embed, KnowledgeGraph,
};
use ssg_core::pipeline::{FrameSummary, Pipeline};
use ssg_core::serialize::{deserialize_graph, serialize_graph};
use ssg_core::synth::{generate, SceneSpec};

use crate::config::{EmbeddingMethod, EmbeddingSettings, EngineConfig};
use crate::dot::to_dot;
use crate::{
    BuildArgs, CliError, ExportArgs, GenArgs, InferArgs, KgEmbedArgs, KgExtractArgs, StatsArgs,
    TrainArgs,
};

pub const MANIFEST: &str = "manifest.json";

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing {what} (flag or [paths] entry)")))
}

fn load_frames(paths: &[PathBuf]) -> Result<Vec<Frame>, CliError> {
    paths
        .iter()
        .enumerate()
        .map(|(index, path)| {
            load_frame(path).map_err(|source| CliError::Frame {
                index,
                path: path.clone(),
                source,
            })
        })
        .collect()
}

fn segment_table(config: &EngineConfig) -> Result<Option<EmbeddingTable>, CliError> {
    match &config.paths.segment_embeddings {
        Some(p) => Ok(Some(load_external_embeddings(p, KeySpace::Segment)?)),
        None => Ok(None),
    }
}

/// Runs every frame through `pipeline`, writing each frame's local graph.
fn run_frames(
    pipeline: &mut Pipeline,
    frames: &[Frame],
    paths: &[PathBuf],
    table: Option<&EmbeddingTable>,
    out: &Path,
    mut after: impl FnMut(&Pipeline, &Frame),
) -> Result<(), CliError> {
    for (index, frame) in frames.iter().enumerate() {
        pipeline
            .process(frame, table)
            .map_err(|source| CliError::Frame {
                index,
                path: paths[index].clone(),
                source,
            })?;
        let local = pipeline.last_local.as_ref().expect("set by process");
        write(
            &out.join("local").join(format!("{index:04}.json")),
            &serialize_graph(local),
        )?;
        after(pipeline, frame);
    }
    Ok(())
}

#[derive(Serialize)]
struct BuildReport<'a> {
    frames: &'a [FrameSummary],
    nodes: usize,
    edges: usize,
    global_instances: usize,
}

pub fn build(mut config: EngineConfig, args: BuildArgs) -> Result<(), CliError> {
    if let Some(r) = args.resolution {
        config.pipeline.resolution = r;
    }
    if let Some(t) = args.edge_threshold {
        config.pipeline.construct.edge_distance_threshold = t;
    }
    config.validate()?;
    let out = required(args.out.or(config.paths.output_dir.clone()), "--out")?;
    let frames = load_frames(&args.frames)?;
    let table = segment_table(&config)?;
    let mut pipeline = Pipeline::new(config.pipeline)?;
    run_frames(
        &mut pipeline,
        &frames,
        &args.frames,
        table.as_ref(),
        &out,
        |_, _| {},
    )?;
    write(&out.join("graph.json"), &serialize_graph(&pipeline.graph))?;
    let report = BuildReport {
        frames: &pipeline.summaries,
        nodes: pipeline.graph.node_count(),
        edges: pipeline.graph.edge_count(),
        global_instances: pipeline.global_instances(),
    };
    write(&out.join("report.json"), &to_json(&report))
}

fn attach_embeddings(
    kg: &mut KnowledgeGraph,
    settings: &EmbeddingSettings,
    table: Option<&Path>,
) -> Result<serde_json::Value, CliError> {
    match settings.method {
        EmbeddingMethod::None => Ok(serde_json::json!({"method": "none"})),
        EmbeddingMethod::Spectral => {
            spectral_embed(kg, settings.dim, settings.iterations, settings.seed)?;
            Ok(serde_json::json!({
                "method": "spectral",
                "dim": settings.dim,
                "iterations": settings.iterations,
                "seed": settings.seed,
            }))
        }
        EmbeddingMethod::Numberbatch => {
            let path = table.ok_or_else(|| {
                CliError::Usage("numberbatch embedding needs --embeddings".into())
            })?;
            let c = load_numberbatch(path, kg)?;
            Ok(serde_json::json!({
                "method": "numberbatch",
                "rows": c.rows,
                "matched": c.matched,
                "concepts": c.concepts,
                "dim": c.dim,
                "coverage": c.ratio(),
            }))
        }
    }
}

pub fn kg_extract(mut config: EngineConfig, args: KgExtractArgs) -> Result<(), CliError> {
    let spec = &mut config.extraction;
    if !args.seeds.is_empty() {
        spec.seed_classes = args.seeds;
    }
    if let Some(h) = args.hops {
        spec.hops = h;
    }
    if let Some(m) = args.max_nodes {
        spec.max_nodes = m;
    }
    if let Some(l) = args.language {
        spec.language = l;
    }
    if let Some(m) = args.embedding {
        config.embedding.method = m;
    }
    if let Some(d) = args.dim {
        config.embedding.dim = d;
    }
    config.validate()?;
    config.extraction.validate()?;
    let dump = required(args.dump.or(config.paths.kg_dump.clone()), "--dump")?;
    let table = args.embeddings.or(config.paths.embeddings.clone());

    let (kg, parse) = parse_dump(
        &dump,
        &config.extraction.language,
        &config.extraction.relation_whitelist,
    )?;
    if parse.retained == 0 {
        eprintln!("warning: {} retained no rows", dump.display());
    }
    let (mut sub, extract) = extract_subgraph(&kg, &config.extraction)?;
    if !extract.missing_seeds.is_empty() {
        eprintln!(
            "warning: no concept for seed classes {:?}",
            extract.missing_seeds
        );
    }
    if extract.truncated {
        eprintln!(
            "warning: extraction truncated at {} nodes",
            config.extraction.max_nodes
        );
    }
    let embedding = attach_embeddings(&mut sub, &config.embedding, table.as_deref())?;
    write(&args.out, &sub.to_json()?)?;
    let report = serde_json::json!({
        "rows": parse.total_rows,
        "retained": parse.retained,
        "filtered": parse.filtered,
        "malformed": parse.malformed,
        "concepts": sub.concepts.len(),
        "relations": sub.relations.len(),
        "per_hop": extract.per_hop,
        "missing_seeds": extract.missing_seeds,
        "truncated": extract.truncated,
        "embedding": embedding,
    });
    print!("{}", to_json(&report));
    Ok(())
}

pub fn kg_embed(mut config: EngineConfig, args: KgEmbedArgs) -> Result<(), CliError> {
    let e = &mut config.embedding;
    e.method = args.method.unwrap_or(match e.method {
        EmbeddingMethod::None => EmbeddingMethod::Spectral,
        m => m,
    });
    if let Some(d) = args.dim {
        e.dim = d;
    }
    if let Some(i) = args.iterations {
        e.iterations = i;
    }
    if let Some(s) = args.seed {
        e.seed = s;
    }
    config.validate()?;
    let mut kg = KnowledgeGraph::load(&args.kg)?;
    let table = args.embeddings.or(config.paths.embeddings.clone());
    let report = attach_embeddings(&mut kg, &config.embedding, table.as_deref())?;
    write(&args.out, &kg.to_json()?)?;
    print!("{}", to_json(&report));
    Ok(())
}

/// Dataset layout written by `gen` and read by `train`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenes: Vec<ManifestScene>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestScene {
    pub dir: String,
    pub frames: Vec<String>,
    pub spec: SceneSpec,
}

pub fn gen(args: GenArgs) -> Result<(), CliError> {
    let mut base = match &args.spec {
        Some(p) => toml::from_str::<SceneSpec>(&read(p)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => SceneSpec::default(),
    };
    if let Some(s) = args.seed {
        base.seed = s;
    }
    if let Some(f) = args.frames {
        base.frames = f;
    }
    if let Some(n) = args.supporters {
        base.num_supporters = n;
    }
    if let Some(d) = args.dropout {
        base.dropout = d;
    }
    if let Some(n) = args.noise {
        base.noise_sigma = n;
    }
    let mut manifest = Manifest { scenes: Vec::new() };
    for i in 0..args.scenes {
        let spec = SceneSpec {
            seed: base.seed + i as u64,
            ..base.clone()
        };
        let scene = generate(&spec)?;
        let dir = format!("scene_{i:04}");
        let root = args.out.join(&dir);
        let mut frames = Vec::new();
        for (k, frame) in scene.frames.iter().enumerate() {
            let name = format!("frame_{k:03}.txt");
            write(&root.join(&name), &frame.to_text())?;
            frames.push(name);
        }
        write(
            &root.join("ground_truth.json"),
            &serialize_graph(&scene.ground_truth),
        )?;
        write(&root.join("identity.json"), &to_json(&scene.identity))?;
        manifest.scenes.push(ManifestScene { dir, frames, spec });
    }
    write(&args.out.join(MANIFEST), &to_json(&manifest))
}

fn load_dataset(
    data: &Path,
    config: &EngineConfig,
    opts: &BatchOptions,
) -> Result<Vec<TrainBatch>, CliError> {
    let manifest: Manifest = serde_json::from_str(&read(&data.join(MANIFEST))?)
        .map_err(|e| CliError::Core(ssg_core::Error::Schema(format!("{MANIFEST}: {e}"))))?;
    if manifest.scenes.is_empty() {
        return Err(CliError::Core(ssg_core::Error::Schema(
            "dataset has no scenes".into(),
        )));
    }
    let mut batches = Vec::new();
    for entry in &manifest.scenes {
        let paths: Vec<PathBuf> = entry
            .frames
            .iter()
            .map(|f| data.join(&entry.dir).join(f))
            .collect();
        let frames = load_frames(&paths)?;
        let scene = match opts.context {
            ContextMode::Off => None,
            ContextMode::GroundTruth => {
                let scene = generate(&entry.spec)?;
                if scene.frames != frames {
                    return Err(CliError::Core(ssg_core::Error::Schema(format!(
                        "{}: frames differ from the scene their spec generates",
                        entry.dir
                    ))));
                }
                Some(scene)
            }
        };
        for (i, frame) in frames.iter().enumerate() {
            let ctx = scene.as_ref().map(|s| (s, i));
            batches.push(
                frame_batch(frame, ctx, &config.model, opts).map_err(|source| CliError::Frame {
                    index: i,
                    path: paths[i].clone(),
                    source,
                })?,
            );
        }
    }
    Ok(batches)
}

pub fn train(mut config: EngineConfig, args: TrainArgs) -> Result<(), CliError> {
    let t = &mut config.training;
    if let Some(e) = args.epochs {
        t.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        t.learning_rate = lr;
    }
    if let Some(s) = args.seed {
        t.seed = s;
    }
    if args.context {
        t.context = ContextMode::GroundTruth;
    }
    if let Some(n) = args.label_noise {
        t.label_noise = n;
    }
    config.validate()?;
    let out = required(args.out.or(config.paths.checkpoint.clone()), "--out")?;
    let losses_path = args.losses.unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".losses.txt");
        PathBuf::from(s)
    });
    let opts = BatchOptions {
        resolution: config.pipeline.resolution,
        min_points: config.pipeline.min_points,
        construct: config.pipeline.construct,
        context: config.training.context,
        label_noise: config.training.label_noise,
        noise_seed: config.training.seed,
    };
    let dataset = load_dataset(&args.data, &config, &opts)?;
    let mut params = ModelParams::init(&config.model)?;
    fit_normalization(&mut params, &dataset);
    let result = train_model(&mut params, &dataset, &config.training.run());
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            // keep the restored last finite state for inspection
            params.save(&out)?;
            return Err(e.into());
        }
    };
    params.save(&out)?;
    let mut text = String::new();
    for (epoch, loss) in report.losses.iter().enumerate() {
        text.push_str(&format!("{epoch} {loss:?}\n"));
    }
    write(&losses_path, &text)?;
    eprintln!(
        "trained {} epochs on {} batches; {} parameters",
        report.losses.len(),
        dataset.len(),
        params.parameter_count()
    );
    Ok(())
}

#[derive(Serialize)]
struct NodeOut {
    node: u64,
    segment: Option<u32>,
    label: String,
    scores: Vec<f64>,
}

#[derive(Serialize)]
struct EdgeOut {
    src: u64,
    dst: u64,
    src_segment: Option<u32>,
    dst_segment: Option<u32>,
    relation: String,
    scores: Vec<f64>,
}

#[derive(Serialize)]
struct FrameOut {
    frame_id: u64,
    nodes: Vec<NodeOut>,
    edges: Vec<EdgeOut>,
}

#[derive(Serialize, Default)]
struct Accuracy {
    labelled_nodes: usize,
    correct_nodes: usize,
    labelled_edges: usize,
    correct_edges: usize,
    node_accuracy: Option<f64>,
    edge_accuracy: Option<f64>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

pub fn infer(config: EngineConfig, args: InferArgs) -> Result<(), CliError> {
    config.validate()?;
    let checkpoint = required(
        args.checkpoint.or(config.paths.checkpoint.clone()),
        "--checkpoint",
    )?;
    let out = required(args.out.or(config.paths.output_dir.clone()), "--out")?;
    let params = ModelParams::load(&checkpoint)?;
    let frames = load_frames(&args.frames)?;
    let table = segment_table(&config)?;
    let mut pipeline = Pipeline::new(config.pipeline)?.with_model(params, !args.no_context);
    if let Some(kg) = args.kg.or(config.paths.kg.clone()) {
        pipeline = pipeline.with_knowledge(KnowledgeGraph::load(&kg)?)?;
    }
    let mut predictions = Vec::new();
    let mut acc = Accuracy::default();
    run_frames(
        &mut pipeline,
        &frames,
        &args.frames,
        table.as_ref(),
        &out,
        |p, frame| {
            let pred = p.last_prediction.as_ref().expect("model attached");
            let segment = |id| p.graph.node(id).and_then(|n| n.segment_id);
            let relations = relation_labels(frame);
            let mut fo = FrameOut {
                frame_id: frame.frame_id,
                nodes: Vec::new(),
                edges: Vec::new(),
            };
            for n in &pred.nodes {
                let seg = segment(n.node);
                if let Some(truth) = seg.and_then(|s| frame.gt_class.get(&s)) {
                    acc.labelled_nodes += 1;
                    acc.correct_nodes += usize::from(*truth == n.label);
                }
                fo.nodes.push(NodeOut {
                    node: n.node.0,
                    segment: seg,
                    label: n.label.clone(),
                    scores: n.scores.clone(),
                });
            }
            for e in &pred.edges {
                let (a, b) = (segment(e.src), segment(e.dst));
                if let (Some(a), Some(b)) = (a, b) {
                    if !frame.gt_class.is_empty() {
                        acc.labelled_edges += 1;
                        acc.correct_edges += usize::from(relations.label(a, b) == e.relation);
                    }
                }
                fo.edges.push(EdgeOut {
                    src: e.src.0,
                    dst: e.dst.0,
                    src_segment: a,
                    dst_segment: b,
                    relation: e.relation.clone(),
                    scores: e.scores.clone(),
                });
            }
            predictions.push(fo);
        },
    )?;
    acc.node_accuracy = ratio(acc.correct_nodes, acc.labelled_nodes);
    acc.edge_accuracy = ratio(acc.correct_edges, acc.labelled_edges);
    write(&out.join("graph.json"), &serialize_graph(&pipeline.graph))?;
    write(&out.join("predictions.json"), &to_json(&predictions))?;
    let report = serde_json::json!({
        "frames": pipeline.summaries,
        "context": !args.no_context,
        "accuracy": acc,
    });
    write(&out.join("report.json"), &to_json(&report))
}

fn load_graph(path: &Path) -> Result<SceneGraph, CliError> {
    Ok(deserialize_graph(&read(path)?)?)
}

pub fn stats(args: StatsArgs) -> Result<(), CliError> {
    let g = load_graph(&args.graph)?;
    let nodes: BTreeMap<&str, usize> = g
        .count_by_node_type()
        .into_iter()
        .map(|(t, c)| (t.as_str(), c))
        .collect();
    let edges: BTreeMap<&str, usize> = g
        .count_by_edge_type()
        .into_iter()
        .map(|(t, c)| (t.as_str(), c))
        .collect();
    let mut levels: BTreeMap<u32, usize> = BTreeMap::new();
    for n in g.nodes().filter(|n| n.node_type.is_object()) {
        *levels.entry(n.level).or_default() += 1;
    }
    let report = serde_json::json!({
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "node_types": nodes,
        "edge_types": edges,
        "object_levels": levels,
    });
    print!("{}", to_json(&report));
    Ok(())
}

pub fn export(args: ExportArgs) -> Result<(), CliError> {
    let dot = to_dot(&load_graph(&args.graph)?);
    match args.out {
        Some(p) => write(&p, &dot),
        None => {
            print!("{dot}");
            Ok(())
        }
    }
}
