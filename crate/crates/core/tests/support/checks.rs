//! One function per acceptance criterion. Each returns a one-line summary
//! on success or the first violation found.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use easel_core::asset::{Asset, Origin};
use easel_core::blob::BlobStore;
use easel_core::clock::ManualClock;
use easel_core::demo::{self, WARRIOR_NOTE};
use easel_core::document::Placement;
use easel_core::easel::compile::template_name;
use easel_core::easel::graph::WorkflowGraph;
use easel_core::easel::maps::{
    map_details, map_preserve, map_structure_end, map_structure_end_named, NAG_SCALE_FLUX, NAG_SCALE_WAN,
};
use easel_core::easel::quick::{QuickOpSpec, Recipe};
use easel_core::easel::{compile, compile_quick_op, BackendModel, EaselKind, EaselSpec, MapKind, QuickOpKind, QuickPlan, SlotRole};
use easel_core::engine::{Engine, GatewayPreprocessor};
use easel_core::gateway::mock::render_outputs;
use easel_core::gateway::remote::{prompt_body, RemoteDriver};
use easel_core::gateway::wire::{HttpRequest, HttpResponse, RecordingTransport, ReplayTransport, Transport, EVENTS_FILE};
use easel_core::gateway::{Gateway, GatewayConfig, JobStatus};
use easel_core::ids::{AssetId, ItemId, NodeId, PageId, RunId, Timestamp, Vec2};
use easel_core::journal::JournalError;
use easel_core::media::{AssetKind, Dims};
use easel_core::metadata::MockPreprocessor;
use easel_core::project::{OutputPayload, Project, ProjectError, ProjectOptions};
use easel_core::provenance::{
    self, CollageLayer, HistoryEntry, NodeKind, Parent, ProvenanceGraph, ProvenanceNode, HISTORY_WINDOW,
};
use easel_core::raster::{LayerTransform, Rect};

use super::comfy::{multipart_parts, Behaviour, FakeComfy, OOM_MESSAGE, REJECT_MESSAGE};
use super::gen::{self, literal_diff, SWITCH_CLASS, VARIANTS};
use super::{clock, fixtures, golden_dir, rng, solid_png, split_png, updating, CheckResult};

/// Converts any displayable error into a check failure with context.
pub trait Ctx<T> {
    fn ctx(self, what: impl Display) -> Result<T, String>;
}

impl<T, E: Display> Ctx<T> for Result<T, E> {
    fn ctx(self, what: impl Display) -> Result<T, String> {
        self.map_err(|e| format!("{what}: {e}"))
    }
}

impl<T> Ctx<T> for Option<T> {
    fn ctx(self, what: impl Display) -> Result<T, String> {
        self.ok_or_else(|| format!("{what}: missing"))
    }
}

/// Every literal bound to input `name` anywhere in the graph.
pub fn literals_named<'g>(g: &'g WorkflowGraph, name: &str) -> Vec<&'g Value> {
    g.nodes.values().filter_map(|n| n.literal(name)).collect()
}

/// The literal `input` of the only (or first) node of `class`.
pub fn literal(g: &WorkflowGraph, class: &str, input: &str) -> Result<Value, String> {
    let (_, node) = g.nodes_of_class(class).next().ctx(format!("node of class {class}"))?;
    node.literal(input).cloned().ctx(format!("{class}.{input} literal"))
}

fn a(n: u64) -> AssetId {
    AssetId::from_seq(n)
}

// ---------------------------------------------------------------------------
// Slider maps and structure end percentages

pub fn slider_maps() -> CheckResult {
    let d0 = map_details(0.0).ctx("map_details(0)")?;
    ensure!(d0.to_bits() == 0.0f64.to_bits(), "map_details(0) = {d0:?}, expected +0.0");
    let d1 = map_details(1.0).ctx("map_details(1)")?;
    ensure!(d1 == -0.05, "map_details(1) = {d1:?}, expected -0.05");

    let mut r = rng(0x5_11DE);
    let mut samples = vec![0.0, 1.0, 0.5];
    while samples.len() < 1000 {
        samples.push(r.gen::<f64>());
    }
    for p in &samples {
        let m = map_preserve(*p).ctx("map_preserve")?;
        ensure!(m.to_bits() == (1.0 - p).to_bits(), "map_preserve({p:?}) = {m:?}, expected {:?}", 1.0 - p);
    }

    // The compiled graph carries exactly the mapped values.
    for p in samples.iter().step_by(10) {
        let spec = EaselSpec {
            preserve: *p,
            ..EaselSpec::new(EaselKind::Draw, BackendModel::Flux, "a lighthouse").with_start_image(a(1))
        };
        let g = compile(&spec).ctx("compile")?;
        let denoise = literals_named(&g, "denoise");
        ensure!(!denoise.is_empty(), "draw graph has no denoise literal");
        for v in denoise {
            ensure!(*v == json!(1.0 - p), "denoise literal {v} for preserve {p}, expected {}", 1.0 - p);
        }
    }
    for (d, want) in [(0.0, 0.0), (1.0, -0.05)] {
        let spec = EaselSpec {
            details: d,
            ..EaselSpec::new(EaselKind::Draw, BackendModel::Flux, "a lighthouse")
        };
        let v = literal(&compile(&spec).ctx("compile")?, "LyingSigmaSampler", "dishonesty_factor")?;
        ensure!(v == json!(want), "dishonesty_factor {v} for details {d}");
    }
    Ok(format!(
        "map_details(0)=0, map_details(1)=-0.05; map_preserve(p)=1-p bit-exact on {} samples",
        samples.len()
    ))
}

pub fn structure_end_percentages() -> CheckResult {
    let expected = [(MapKind::Pose, 0.9), (MapKind::Depth, 0.7), (MapKind::Lineart, 0.4)];
    for (kind, want) in expected {
        let got = map_structure_end(kind);
        ensure!(got == want, "{kind:?} end percentage {got}, expected {want}");
        let named = map_structure_end_named(kind.as_str()).ctx("named kind")?;
        ensure!(named == want, "{} end percentage {named}", kind.as_str());
        let specs = [
            EaselSpec::new(EaselKind::Paint, BackendModel::Flux, "a knight").with_structure(a(2), kind, 0.8),
            EaselSpec::trace(BackendModel::Flux, a(1), "a sketch", "a painting").with_structure(a(2), kind, 0.8),
        ];
        for spec in specs {
            let v = literal(&compile(&spec).ctx("compile")?, "ControlNetApplyAdvanced", "end_percent")?;
            ensure!(v == json!(want), "compiled end_percent {v} for {kind:?}, expected {want}");
        }
    }
    Ok("pose 0.9, depth 0.7, lineart 0.4 (maps and compiled ControlNet literals)".into())
}

// ---------------------------------------------------------------------------
// Compiler goldens

#[derive(Debug, Deserialize)]
struct QuickFixture {
    op: QuickOpKind,
    source: String,
    prompt: Option<String>,
    seed: u64,
}

/// The assets quick-op fixtures run against: a demo image and a text note.
pub struct QuickEnv {
    pub blobs: BlobStore,
    pub image: Asset,
    pub note: Asset,
}

impl QuickEnv {
    pub fn new() -> Self {
        let blobs = BlobStore::in_memory();
        let size = 64;
        let img = demo::sample_image(size, [250, 200, 150], [120, 40, 40], [30, 30, 60], (32.0, 26.0), 13.0);
        let png = easel_core::media::encode_png(&img, &[]);
        let (image_blob, _) = blobs.put(&png).expect("in-memory put");
        let (note_blob, _) = blobs.put(WARRIOR_NOTE.as_bytes()).expect("in-memory put");
        let base = |id: u64, kind, blob, mime: &str, dims, caption: &str| Asset {
            asset_id: AssetId::from_seq(id),
            kind,
            blob,
            mime: mime.to_owned(),
            dims,
            duration: None,
            caption: Some(caption.to_owned()),
            control_maps: BTreeMap::new(),
            origin: Origin::Imported,
            created_at: Timestamp(0),
        };
        Self {
            image: base(1, AssetKind::Image, image_blob, "image/png", Some(Dims::new(size, size)), "a warrior"),
            note: base(2, AssetKind::Text, note_blob, "text/plain", None, WARRIOR_NOTE),
            blobs,
        }
    }
}

impl Default for QuickEnv {
    fn default() -> Self {
        Self::new()
    }
}

fn sorted_json_files(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .ctx(format!("read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned()
}

/// Compares `actual` to the golden at `path`, or rewrites it when blessing.
pub fn compare_golden(path: &Path, actual: &[u8], bless: bool) -> Result<(), String> {
    if bless {
        fs::create_dir_all(path.parent().expect("golden has a parent")).ctx("create golden dir")?;
        return fs::write(path, actual).ctx(format!("write {}", path.display()));
    }
    let expected = fs::read(path).ctx(format!("{} (bless with UPDATE_GOLDEN=1)", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let (e, a) = (String::from_utf8_lossy(&expected), String::from_utf8_lossy(actual));
    let line = e
        .lines()
        .zip(a.lines())
        .position(|(x, y)| x != y)
        .unwrap_or_else(|| e.lines().count().min(a.lines().count()));
    Err(format!(
        "{} differs at line {}: golden {:?}, compiled {:?}",
        path.display(),
        line + 1,
        e.lines().nth(line).unwrap_or("<eof>"),
        a.lines().nth(line).unwrap_or("<eof>")
    ))
}

/// Compiles every spec and quick-op fixture and compares the result to its
/// checked-in golden byte for byte.
pub fn compiler_goldens() -> CheckResult {
    let bless = updating("UPDATE_GOLDEN");
    let mut templates: BTreeSet<&'static str> = BTreeSet::new();
    let mut ops: BTreeSet<QuickOpKind> = BTreeSet::new();
    let mut produced: BTreeSet<PathBuf> = BTreeSet::new();

    for path in sorted_json_files(&fixtures().join("specs"))? {
        let bytes = fs::read(&path).ctx("read fixture")?;
        let spec: EaselSpec = serde_json::from_slice(&bytes).ctx(path.display())?;
        templates.insert(template_name(&spec).ctx(path.display())?);
        let graph = compile(&spec).ctx(path.display())?;
        let golden = golden_dir().join("specs").join(format!("{}.json", stem(&path)));
        compare_golden(&golden, &graph.canonical_json(), bless)?;
        produced.insert(golden);
    }

    let env = QuickEnv::new();
    for path in sorted_json_files(&fixtures().join("quick"))? {
        let fx: QuickFixture = serde_json::from_slice(&fs::read(&path).ctx("read fixture")?).ctx(path.display())?;
        let asset = if fx.source == "note" { &env.note } else { &env.image };
        let plan = compile_quick_op(fx.op, asset, fx.prompt.as_deref(), fx.seed, &env.blobs).ctx(path.display())?;
        let actual = match plan {
            QuickPlan::Generate { recipe, graph } => {
                if let Recipe::Easel(spec) = &recipe {
                    templates.insert(template_name(spec).ctx("quick easel")?);
                }
                graph.canonical_json()
            }
            QuickPlan::Local(result) => {
                let mut v = serde_json::to_vec_pretty(&result).ctx("serialize local result")?;
                v.push(b'\n');
                v
            }
        };
        ops.insert(fx.op);
        let golden = golden_dir().join("quick").join(format!("{}.json", stem(&path)));
        compare_golden(&golden, &actual, bless)?;
        produced.insert(golden);
    }

    // Coverage: every template variant and every quick operation.
    for (kind, model, uso) in VARIANTS {
        let mut probe = EaselSpec::new(kind, model, "");
        if uso {
            probe.style_reference = Some(a(1));
        }
        let name = template_name(&probe).ctx("variant template")?;
        ensure!(templates.contains(name), "no golden fixture compiles template {name}");
    }
    for op in QuickOpKind::ALL {
        ensure!(ops.contains(&op), "no golden fixture for quick operation {op}");
    }

    // Goldens without a fixture are stale.
    for sub in ["specs", "quick"] {
        for path in sorted_json_files(&golden_dir().join(sub))? {
            if !produced.contains(&path) {
                if bless {
                    fs::remove_file(&path).ctx("remove stale golden")?;
                } else {
                    return Err(format!("stale golden {} has no fixture", path.display()));
                }
            }
        }
    }

    // Published step counts and guidance scales, read back from the goldens.
    let read = |name: &str| -> Result<WorkflowGraph, String> {
        let bytes = fs::read(golden_dir().join("specs").join(name)).ctx(name)?;
        WorkflowGraph::from_json(&bytes).ctx(name)
    };
    let flux = read("draw_flux.json")?;
    ensure!(literal(&flux, "BasicScheduler", "steps")? == json!(8), "draw flux golden steps != 8");
    ensure!(
        literal(&flux, "NAGCFGGuider", "nag_scale")? == json!(9.0) && NAG_SCALE_FLUX == 9.0,
        "draw flux golden NAG scale != 9.0"
    );
    let wan = read("draw_wan22.json")?;
    ensure!(literal(&wan, "BasicScheduler", "steps")? == json!(20), "wan draw golden steps != 20");
    ensure!(
        literal(&wan, "NAGCFGGuider", "nag_scale")? == json!(11.0) && NAG_SCALE_WAN == 11.0,
        "wan draw golden NAG scale != 11.0"
    );

    Ok(format!(
        "{} graphs {} goldens ({} templates, {} quick ops); draw flux steps=8 NAG=9.0, wan draw steps=20 NAG=11.0",
        produced.len(),
        if bless { "written to" } else { "byte-equal to" },
        templates.len(),
        ops.len()
    ))
}

// ---------------------------------------------------------------------------
// Switch strategy

pub const SWITCH_SPECS: usize = 600;

/// Toggles every optional slot of many random specs and checks that only
/// literal values change, with switches moving from 1 (absent) to 2
/// (present).
pub fn switch_strategy() -> CheckResult {
    let mut r = rng(0x5_3C7);
    let pool: Vec<AssetId> = (1..=12).map(a).collect();
    let mut toggles = 0usize;
    let mut switched = 0usize;
    let mut slots: BTreeMap<&'static str, usize> = BTreeMap::new();
    for i in 0..SWITCH_SPECS {
        let spec = gen::random_spec(&mut r, &pool);
        for t in gen::toggles(&mut r, &pool, &spec) {
            let with = compile(&t.with).ctx(format!("spec {i} slot {} present", t.slot))?;
            let without = compile(&t.without).ctx(format!("spec {i} slot {} absent", t.slot))?;
            let diffs = literal_diff(&without, &with).map_err(|e| format!("spec {i} slot {}: {e}", t.slot))?;
            let mut flips = 0;
            for d in diffs.iter().filter(|d| d.class_type == SWITCH_CLASS && d.input == "select") {
                ensure!(
                    d.a == json!(1) && d.b == json!(2),
                    "spec {i} slot {}: switch {} went {} -> {} when the slot was filled",
                    t.slot,
                    d.node,
                    d.a,
                    d.b
                );
                flips += 1;
            }
            if t.switched {
                ensure!(flips > 0, "spec {i} slot {}: no switch changed", t.slot);
                switched += 1;
            }
            toggles += 1;
            *slots.entry(t.slot).or_default() += 1;
        }
    }
    Ok(format!(
        "{SWITCH_SPECS} specs, {toggles} slot toggles ({switched} switched) over {} slot kinds: identical node sets, literal-only diffs",
        slots.len()
    ))
}

// ---------------------------------------------------------------------------
// Recreate round trip

pub const RECREATE_RUNS: usize = 200;

fn verify_recreate(engine: &Engine, node: &NodeId) -> Result<(), String> {
    let p = engine.project();
    let spec = p.recreate_easel_spec(node).ctx(format!("recreate {node}"))?;
    let stored = p.submitted_graph(node).ctx("submitted graph")?.ctx(format!("stored graph of {node}"))?;
    let recompiled = compile(&spec).ctx("recompile")?;
    ensure!(
        recompiled.canonical_json() == stored.canonical_json(),
        "node {node}: recreated spec compiles to a different graph"
    );
    Ok(())
}

/// Runs random generations on the mock backend and checks that every
/// output's recreated spec compiles to the graph that was submitted.
pub fn recreate_roundtrip() -> CheckResult {
    let clock = clock();
    let engine = Engine::mock(clock.clone());
    let mut r = rng(0x2EC2);
    let mut pool = Vec::new();
    for i in 0..6u8 {
        let png = split_png(48, [40 * i, 200 - 20 * i, 90], [10, 10 + 30 * i, 220]);
        pool.push(engine.ingest(&png, AssetKind::Image).ctx("ingest")?.asset_id);
    }
    let note = engine.ingest(WARRIOR_NOTE.as_bytes(), AssetKind::Text).ctx("ingest note")?.asset_id;
    let page = engine.project().create_page("Recreate").ctx("page")?.page_id;
    let easel_ops = [
        QuickOpKind::QuickSketch,
        QuickOpKind::Revision,
        QuickOpKind::Blend,
        QuickOpKind::View,
        QuickOpKind::QuickAnimate,
    ];
    let (mut checked, mut copies, mut quick) = (0usize, 0usize, 0usize);
    for run in 0..RECREATE_RUNS {
        clock.advance(r.gen_range(1..5_000));
        let placement = r.gen_bool(0.5).then(|| Placement {
            page_id: page.clone(),
            position: Vec2::new(r.gen_range(0.0..4_000.0), r.gen_range(0.0..4_000.0)),
        });
        let generated = if r.gen_bool(0.2) {
            let op = *easel_ops.choose(&mut r).expect("non-empty");
            let asset = if op == QuickOpKind::QuickSketch {
                note.clone()
            } else {
                pool.choose(&mut r).expect("non-empty").clone()
            };
            let prompt = (op == QuickOpKind::Revision || r.gen_bool(0.5)).then(|| gen::words(&mut r, 1, 4));
            quick += 1;
            engine
                .run_quick_op(op, &asset, prompt.as_deref(), placement)
                .ctx(format!("run {run}: {op}"))?
                .map_err(|l| format!("run {run}: {op} ran locally: {l:?}"))?
        } else {
            let spec = gen::random_spec(&mut r, &pool);
            engine.generate(spec, placement).ctx(format!("run {run}"))?
        };
        ensure!(!generated.is_empty(), "run {run} produced nothing");
        for g in &generated {
            verify_recreate(&engine, &g.node.node_id)?;
            checked += 1;
            if g.asset.kind == AssetKind::Image {
                pool.push(g.asset.asset_id.clone());
            }
            if r.gen_bool(0.2) {
                // A second placement of the same asset is a copy.
                let copy = {
                    let mut p = engine.project();
                    let size = p.default_size(&g.asset);
                    let mut item = None;
                    for _ in 0..2 {
                        let pos = Vec2::new(r.gen_range(0.0..4_000.0), r.gen_range(0.0..4_000.0));
                        item = Some(p.place_item(&g.asset.asset_id, &page, pos, size).ctx("place copy")?);
                    }
                    let item = item.expect("placed");
                    p.node_of_item(&item.item_id).ctx("copy node")?.clone()
                };
                ensure!(matches!(copy.kind, NodeKind::Copy { .. }), "second placement is not a copy");
                verify_recreate(&engine, &copy.node_id)?;
                copies += 1;
            }
        }
    }
    Ok(format!(
        "{RECREATE_RUNS} mock runs ({quick} easel quick ops), {checked} outputs and {copies} copies recompile byte-equal"
    ))
}

// ---------------------------------------------------------------------------
// Provenance invariants

/// Independent cycle check: iterative three-colour depth-first search over
/// child -> parent edges.
pub fn has_cycle(edges: &[(NodeId, NodeId)]) -> bool {
    let mut adj: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
    for (c, p) in edges {
        adj.entry(c).or_default().push(p);
        adj.entry(p).or_default();
    }
    let mut colour: HashMap<&NodeId, u8> = adj.keys().map(|k| (*k, 0u8)).collect();
    let keys: Vec<&NodeId> = adj.keys().copied().collect();
    for start in keys {
        if colour[start] != 0 {
            continue;
        }
        let mut stack: Vec<(&NodeId, usize)> = vec![(start, 0)];
        colour.insert(start, 1);
        while let Some((node, i)) = stack.pop() {
            let next = adj[node].get(i).copied();
            match next {
                Some(n) => {
                    stack.push((node, i + 1));
                    match colour[n] {
                        0 => {
                            colour.insert(n, 1);
                            stack.push((n, 0));
                        }
                        1 => return true,
                        _ => {}
                    }
                }
                None => {
                    colour.insert(node, 2);
                }
            }
        }
    }
    false
}

type EdgeKey = (NodeId, NodeId, SlotRole);

/// Brute-force lineage: plain breadth-first search over an adjacency list
/// built from the node list.
pub struct LineageOracle {
    parents: HashMap<NodeId, Vec<(NodeId, SlotRole)>>,
    children: HashMap<NodeId, Vec<(NodeId, SlotRole)>>,
}

impl LineageOracle {
    pub fn new<'a>(nodes: impl IntoIterator<Item = &'a ProvenanceNode>) -> Self {
        let mut parents: HashMap<NodeId, Vec<(NodeId, SlotRole)>> = HashMap::new();
        let mut children: HashMap<NodeId, Vec<(NodeId, SlotRole)>> = HashMap::new();
        for n in nodes {
            parents.entry(n.node_id.clone()).or_default();
            children.entry(n.node_id.clone()).or_default();
            for p in &n.parents {
                parents.get_mut(&n.node_id).expect("inserted").push((p.node.clone(), p.role));
                children.entry(p.node.clone()).or_default().push((n.node_id.clone(), p.role));
            }
        }
        Self { parents, children }
    }

    fn reach(&self, start: &NodeId, adj: &HashMap<NodeId, Vec<(NodeId, SlotRole)>>) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(n) = queue.pop_front() {
            for (m, _) in &adj[&n] {
                if m != start && seen.insert(m.clone()) {
                    queue.push_back(m.clone());
                }
            }
        }
        seen
    }

    /// `(ancestors, ancestor edges, descendants, descendant edges)`.
    pub fn lineage(&self, start: &NodeId) -> (BTreeSet<NodeId>, BTreeSet<EdgeKey>, BTreeSet<NodeId>, BTreeSet<EdgeKey>) {
        let up = self.reach(start, &self.parents);
        let down = self.reach(start, &self.children);
        let mut up_edges = BTreeSet::new();
        for c in up.iter().chain([start]) {
            for (p, role) in &self.parents[c] {
                up_edges.insert((c.clone(), p.clone(), *role));
            }
        }
        let mut down_edges = BTreeSet::new();
        for p in down.iter().chain([start]) {
            for (c, role) in &self.children[p] {
                down_edges.insert((c.clone(), p.clone(), *role));
            }
        }
        (up, up_edges, down, down_edges)
    }
}

fn check_lineage(graph: &ProvenanceGraph, oracle: &LineageOracle, id: &NodeId) -> Result<(), String> {
    let l = graph.lineage(id).ctx(format!("lineage of {id}"))?;
    let (up, up_edges, down, down_edges) = oracle.lineage(id);
    let ids = |v: &[provenance::LineageEntry]| v.iter().map(|e| e.node_id.clone()).collect::<BTreeSet<_>>();
    let edges = |v: &[provenance::Edge]| {
        v.iter()
            .map(|e| (e.child.clone(), e.parent.clone(), e.role))
            .collect::<BTreeSet<_>>()
    };
    ensure!(ids(&l.ancestors) == up, "{id}: ancestors differ from BFS oracle");
    ensure!(ids(&l.descendants) == down, "{id}: descendants differ from BFS oracle");
    ensure!(edges(&l.ancestor_edges) == up_edges, "{id}: ancestor edges differ from BFS oracle");
    ensure!(edges(&l.descendant_edges) == down_edges, "{id}: descendant edges differ from BFS oracle");
    for entries in [&l.ancestors, &l.descendants] {
        for w in entries.windows(2) {
            ensure!(
                (w[0].created_at, &w[0].node_id) < (w[1].created_at, &w[1].node_id),
                "{id}: lineage entries out of (created_at, node_id) order"
            );
        }
        for e in entries.iter() {
            let n = graph.get(&e.node_id).ctx("entry node")?;
            ensure!(e.deleted == n.deleted, "{id}: entry {} has a stale deleted flag", e.node_id);
        }
    }
    Ok(())
}

/// A random 50-node DAG with shuffled ids, multi-role edges and deletions.
pub fn random_dag<R: Rng>(r: &mut R, size: usize) -> ProvenanceGraph {
    let mut ids: Vec<u64> = (1..=size as u64 * 3).collect();
    ids.shuffle(r);
    let roles = [
        SlotRole::Reference1,
        SlotRole::Reference2,
        SlotRole::Style,
        SlotRole::Structure,
        SlotRole::StartImage,
        SlotRole::InputImage,
        SlotRole::FirstFrame,
        SlotRole::CollageLayer,
        SlotRole::Mask,
        SlotRole::Source,
    ];
    let mut g = ProvenanceGraph::new();
    let mut made: Vec<NodeId> = Vec::new();
    for i in 0..size {
        let id = NodeId::from_seq(ids[i]);
        let n_parents = if made.is_empty() { 0 } else { r.gen_range(0..=3.min(made.len())) };
        let parents: Vec<Parent> = made
            .choose_multiple(r, n_parents)
            .map(|p| Parent {
                node: p.clone(),
                role: *roles.choose(r).expect("non-empty"),
            })
            .collect();
        let at = Timestamp(1_000 + i as i64 * 10 + r.gen_range(0..3));
        g.insert(ProvenanceNode {
            node_id: id.clone(),
            item_id: None,
            asset_id: AssetId::from_seq(ids[i]),
            kind: if parents.is_empty() {
                NodeKind::Original
            } else {
                NodeKind::Generated {
                    run_id: RunId::from_seq(i as u64),
                }
            },
            parents,
            params: None,
            deleted: r.gen_bool(0.25),
            created_at: at,
            last_interaction_at: at,
            click_count: 0,
        })
        .expect("parents exist");
        made.push(id);
    }
    g
}

pub const FUZZ_OPS: usize = 10_000;

/// Mutable fuzz state over one project.
struct Fuzz {
    project: Project,
    clock: Arc<ManualClock>,
    pages: Vec<PageId>,
}

impl Fuzz {
    fn doc(&self) -> &easel_core::document::Document {
        self.project.document()
    }

    fn raster_assets(&self) -> Vec<AssetId> {
        self.doc()
            .assets
            .values()
            .filter(|a| a.kind.is_raster())
            .map(|a| a.asset_id.clone())
            .collect()
    }

    fn random_placement<R: Rng>(&self, r: &mut R) -> Option<Placement> {
        r.gen_bool(0.5).then(|| Placement {
            page_id: self.pages.choose(r).expect("a page").clone(),
            position: Vec2::new(r.gen_range(-2_000.0..2_000.0), r.gen_range(-2_000.0..2_000.0)),
        })
    }

    /// One random mutation. Returns a label for the op performed.
    fn step<R: Rng>(&mut self, r: &mut R) -> Result<&'static str, ProjectError> {
        self.clock.advance(r.gen_range(0..50));
        let assets = self.raster_assets();
        let nodes: Vec<NodeId> = self.doc().provenance.nodes().map(|n| n.node_id.clone()).collect();
        let items: Vec<ItemId> = self.doc().visible_items().map(|i| i.item_id.clone()).collect();
        let pending: Vec<RunId> = self
            .doc()
            .runs
            .values()
            .filter(|run| run.status == easel_core::document::RunStatus::Submitted)
            .map(|run| run.run_id.clone())
            .collect();
        let roll = r.gen_range(0..100);
        if assets.len() < 3 || roll < 8 {
            let png = solid_png(r.gen_range(2..6), r.gen());
            self.project.ingest(&png, AssetKind::Image, Origin::Imported)?;
            return Ok("ingest");
        }
        match roll {
            8..=25 => {
                let asset = assets.choose(r).expect("non-empty");
                let page = self.pages.choose(r).expect("a page").clone();
                let size = self.project.default_size(self.project.asset(asset)?);
                let pos = Vec2::new(r.gen_range(-2_000.0..2_000.0), r.gen_range(-2_000.0..2_000.0));
                self.project.place_item(asset, &page, pos, size)?;
                Ok("place")
            }
            26..=40 => {
                let spec = gen::random_spec(r, &assets);
                let recipe = Recipe::Easel(spec);
                let graph = recipe.compile().expect("random specs compile");
                let placement = self.random_placement(r);
                self.project.begin_run(&recipe, &graph, None, placement)?;
                Ok("begin_run")
            }
            41..=47 => {
                let op = *[QuickOpKind::Upscale, QuickOpKind::RemoveBackground, QuickOpKind::Sculpt]
                    .choose(r)
                    .expect("non-empty");
                let asset = assets.choose(r).expect("non-empty").clone();
                let recipe = Recipe::QuickOp(QuickOpSpec {
                    op,
                    asset: asset.clone(),
                    prompt: String::new(),
                    seed: r.gen_range(0..1000),
                });
                let graph = recipe.compile().expect("template ops compile");
                let placement = self.random_placement(r);
                self.project.begin_run(&recipe, &graph, Some((op, asset)), placement)?;
                Ok("quick_op")
            }
            48..=58 if !pending.is_empty() => {
                let run = pending.choose(r).expect("non-empty");
                if r.gen_bool(0.1) {
                    self.project.fail_run(run, "backend error")?;
                    return Ok("fail_run");
                }
                let outputs: Vec<OutputPayload> = (0..r.gen_range(1..=2))
                    .map(|_| OutputPayload {
                        kind: AssetKind::Image,
                        bytes: solid_png(r.gen_range(2..6), r.gen()),
                    })
                    .collect();
                self.project.record_generation(run, &outputs)?;
                Ok("record_generation")
            }
            59..=63 => {
                let n_layers = r.gen_range(1..=3);
                let layers: Vec<CollageLayer> = assets
                    .choose_multiple(r, n_layers)
                    .enumerate()
                    .map(|(z, a)| CollageLayer {
                        asset: a.clone(),
                        transform: LayerTransform {
                            x: r.gen_range(0.0..4.0),
                            y: r.gen_range(0.0..4.0),
                            scale: 1.0,
                            z: z as i64,
                        },
                    })
                    .collect();
                let placement = self.random_placement(r);
                self.project.flatten_collage(&layers, Rect::new(0.0, 0.0, 6.0, 6.0), placement)?;
                Ok("collage")
            }
            64..=73 if !nodes.is_empty() => {
                self.project.soft_delete(nodes.choose(r).expect("non-empty"))?;
                Ok("delete")
            }
            74..=79 if !nodes.is_empty() => {
                self.project.restore(nodes.choose(r).expect("non-empty"))?;
                Ok("restore")
            }
            80..=92 if !items.is_empty() => {
                self.project.touch_item(items.choose(r).expect("non-empty"))?;
                Ok("touch")
            }
            93..=99 if !items.is_empty() => {
                let pos = Vec2::new(r.gen_range(-2_000.0..2_000.0), r.gen_range(-2_000.0..2_000.0));
                self.project.move_item(items.choose(r).expect("non-empty"), Some(pos), None, None)?;
                Ok("move")
            }
            _ => {
                let png = solid_png(r.gen_range(2..6), r.gen());
                self.project.ingest(&png, AssetKind::Image, Origin::Imported)?;
                Ok("ingest")
            }
        }
    }
}

fn check_acyclic(graph: &ProvenanceGraph) -> Result<(), String> {
    let edges: Vec<(NodeId, NodeId)> = graph.edges().into_iter().map(|e| (e.child, e.parent)).collect();
    ensure!(!has_cycle(&edges), "DFS oracle found a cycle");
    ensure!(graph.is_acyclic(), "graph reports a cycle");
    for n in graph.nodes() {
        for p in &n.parents {
            let parent = graph.get(&p.node).ctx("parent")?;
            ensure!(
                parent.created_at <= n.created_at,
                "edge {} -> {} points forward in time",
                n.node_id,
                p.node
            );
        }
    }
    Ok(())
}

pub fn provenance_invariants() -> CheckResult {
    let mut r = rng(0xDA6);
    let clock = clock();
    let mut fuzz = Fuzz {
        project: Project::in_memory(clock.clone()),
        clock,
        pages: Vec::new(),
    };
    for name in ["One", "Two"] {
        let page = fuzz.project.create_page(name).ctx("page")?;
        fuzz.pages.push(page.page_id);
    }
    let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    for i in 0..FUZZ_OPS {
        let op = fuzz.step(&mut r).ctx(format!("fuzz op {i}"))?;
        *counts.entry(op).or_default() += 1;
        if i % 1_000 == 999 {
            check_acyclic(&fuzz.doc().provenance).map_err(|e| format!("after {} ops: {e}", i + 1))?;
        }
    }
    let graph = &fuzz.doc().provenance;
    check_acyclic(graph)?;

    // Deleted nodes remain traversable from both directions.
    let oracle = LineageOracle::new(graph.nodes());
    let mut deleted = 0;
    for n in graph.nodes().filter(|n| n.deleted) {
        deleted += 1;
        check_lineage(graph, &oracle, &n.node_id)?;
        for child in graph.children_of(&n.node_id) {
            let l = graph.lineage(&child.node).ctx("child lineage")?;
            let e = l
                .ancestors
                .iter()
                .find(|e| e.node_id == n.node_id)
                .ctx(format!("deleted {} missing from the lineage of {}", n.node_id, child.node))?;
            ensure!(e.deleted, "deleted ancestor {} reported live", n.node_id);
        }
    }
    ensure!(deleted > 0, "fuzz never deleted a node");

    // Copies carry their original's parameters.
    let mut copies = 0;
    for n in graph.nodes() {
        if let NodeKind::Copy { of } = &n.kind {
            copies += 1;
            let original = graph.get(of).ctx("copied node")?;
            ensure!(n.params == original.params, "copy {} lost the params of {of}", n.node_id);
            ensure!(
                n.parents.contains(&Parent {
                    node: of.clone(),
                    role: SlotRole::Source
                }),
                "copy {} has no source edge to {of}",
                n.node_id
            );
            if original.params.is_some() {
                ensure!(
                    graph.recreate(&n.node_id).ctx("recreate copy")? == graph.recreate(of).ctx("recreate original")?,
                    "copy {} recreates differently from {of}",
                    n.node_id
                );
            }
        }
    }
    ensure!(copies > 0, "fuzz never produced a copy");

    // Lineage closure against the BFS oracle: sampled fuzz nodes and
    // every node of twenty random 50-node DAGs.
    let all: Vec<NodeId> = graph.nodes().map(|n| n.node_id.clone()).collect();
    for id in all.choose_multiple(&mut r, 300) {
        check_lineage(graph, &oracle, id)?;
    }
    let mut closures = 0;
    for _ in 0..20 {
        let dag = random_dag(&mut r, 50);
        check_acyclic(&dag)?;
        let oracle = LineageOracle::new(dag.nodes());
        for n in dag.nodes() {
            check_lineage(&dag, &oracle, &n.node_id)?;
            closures += 1;
        }
    }
    Ok(format!(
        "{FUZZ_OPS} fuzzed ops ({} nodes, {} edges) acyclic; {deleted} deleted nodes traversable; {copies} copies keep params; {closures} 50-node closures match BFS",
        graph.len(),
        graph.edge_count()
    ))
}

// ---------------------------------------------------------------------------
// History window

fn history_oracle(entries: &[HistoryEntry], cursor: usize) -> Vec<HistoryEntry> {
    let mut sorted = entries.to_vec();
    // Selection sort: deliberately not the implementation's sort.
    for i in 0..sorted.len() {
        let mut min = i;
        for j in i + 1..sorted.len() {
            let key = |e: &HistoryEntry| (e.created_at.0, e.item_id.as_str().to_owned());
            if key(&sorted[j]) < key(&sorted[min]) {
                min = j;
            }
        }
        sorted.swap(i, min);
    }
    let end = (cursor + HISTORY_WINDOW).min(sorted.len());
    sorted[cursor..end].to_vec()
}

pub fn history_window() -> CheckResult {
    let mut r = rng(0x415);
    // Pure: twelve entries in shuffled order, two sharing a timestamp.
    let mut entries: Vec<HistoryEntry> = (0..12u64)
        .map(|i| HistoryEntry {
            item_id: ItemId::from_seq(i + 1),
            asset_id: Some(a(i + 1)),
            created_at: Timestamp(10_000 + (i as i64 * 37) % 12 * 100 + if i == 7 { 100 } else { 0 }),
            position: Vec2::new(i as f64, 0.0),
        })
        .collect();
    entries.shuffle(&mut r);
    for cursor in 0..12 {
        let got = provenance::history_window(entries.clone(), cursor).ctx(format!("cursor {cursor}"))?;
        ensure!(got.len() == HISTORY_WINDOW.min(12 - cursor), "cursor {cursor}: {} items", got.len());
        ensure!(got == history_oracle(&entries, cursor), "cursor {cursor}: window differs from oracle");
    }
    ensure!(provenance::history_window(entries.clone(), 12).is_err(), "cursor 12 accepted");

    // Project: twelve visible items placed at random times, one hidden.
    let clock = clock();
    let mut p = Project::in_memory(clock.clone());
    let pages = [p.create_page("A").ctx("page")?.page_id, p.create_page("B").ctx("page")?.page_id];
    let mut hidden = None;
    for i in 0..13u8 {
        clock.advance(r.gen_range(0..10_000));
        let asset = p.ingest(&solid_png(4, [i, 2 * i, 3 * i]), AssetKind::Image, Origin::Imported).ctx("ingest")?;
        let page = pages.choose(&mut r).expect("non-empty");
        let pos = Vec2::new(r.gen_range(0.0..1_000.0), r.gen_range(0.0..1_000.0));
        let item = p.place_item(&asset.asset_id, page, pos, Vec2::new(64.0, 64.0)).ctx("place")?;
        if i == 5 {
            hidden = Some(item.item_id);
        }
    }
    let hidden = hidden.expect("placed");
    let node = p.document().item_nodes[&hidden].clone();
    p.soft_delete(&node).ctx("delete")?;
    let visible: Vec<HistoryEntry> = p
        .document()
        .items
        .values()
        .filter(|i| !i.hidden)
        .map(|i| HistoryEntry {
            item_id: i.item_id.clone(),
            asset_id: i.asset_id.clone(),
            created_at: i.created_at,
            position: i.position,
        })
        .collect();
    ensure!(visible.len() == 12, "fixture has {} visible items", visible.len());
    for cursor in 0..12 {
        let got = p.history_window(cursor).ctx(format!("project cursor {cursor}"))?;
        ensure!(got.len() == HISTORY_WINDOW.min(12 - cursor), "project cursor {cursor}: {} items", got.len());
        ensure!(got == history_oracle(&visible, cursor), "project cursor {cursor}: window differs");
        ensure!(
            got.windows(2).all(|w| w[0].created_at <= w[1].created_at),
            "project cursor {cursor}: not in created_at order"
        );
        ensure!(got.iter().all(|e| e.item_id != hidden), "hidden item listed");
    }
    ensure!(p.history_window(12).is_err(), "project cursor 12 accepted");
    Ok("12-item fixtures (pure and project): min(5, remaining) items in created_at order for every cursor".into())
}

// ---------------------------------------------------------------------------
// Heatmap and trails

const HEAT_TOLERANCE: f64 = 1e-12;

fn trail_oracle(events: &[(Timestamp, Vec2)], bucket: i64) -> Vec<(i64, f64, f64, u64)> {
    let t0 = events.iter().map(|(t, _)| t.0).min().unwrap_or(0);
    let mut groups: HashMap<i64, Vec<Vec2>> = HashMap::new();
    for (t, p) in events {
        groups.entry((t.0 - t0).div_euclid(bucket)).or_default().push(*p);
    }
    let mut keys: Vec<i64> = groups.keys().copied().collect();
    keys.sort_unstable();
    keys.into_iter()
        .map(|k| {
            let pts = &groups[&k];
            let n = pts.len() as f64;
            (
                t0 + k * bucket,
                pts.iter().map(|p| p.x).sum::<f64>() / n,
                pts.iter().map(|p| p.y).sum::<f64>() / n,
                pts.len() as u64,
            )
        })
        .collect()
}

fn compare_trail(got: &[provenance::TrailPoint], want: &[(i64, f64, f64, u64)]) -> Result<(), String> {
    ensure!(got.len() == want.len(), "{} trail points, oracle has {}", got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        ensure!(g.at.0 == w.0 && g.weight == w.3, "bucket {:?} differs from oracle {:?}", g, w);
        ensure!(
            (g.centroid.x - w.1).abs() <= 1e-9 && (g.centroid.y - w.2).abs() <= 1e-9,
            "centroid {:?} differs from oracle ({}, {})",
            g.centroid,
            w.1,
            w.2
        );
    }
    Ok(())
}

pub fn heatmap_trails() -> CheckResult {
    // Hand fixtures.
    let fixtures: [(&[u64], &[f64]); 4] = [
        (&[4, 2, 1, 0], &[1.0, 0.5, 0.25, 0.0]),
        (&[3, 7, 2], &[0.428_571_428_571_428_55, 1.0, 0.285_714_285_714_285_7]),
        (&[0, 0, 0], &[0.0, 0.0, 0.0]),
        (&[9], &[1.0]),
    ];
    for (counts, want) in fixtures {
        let ids: Vec<ItemId> = (1..=counts.len() as u64).map(ItemId::from_seq).collect();
        let heat = provenance::activity_heatmap(ids.iter().zip(counts.iter().copied()));
        for (id, w) in ids.iter().zip(want) {
            let h = heat[id];
            ensure!((h - w).abs() <= HEAT_TOLERANCE, "counts {counts:?}: {id} heat {h}, expected {w}");
        }
    }

    // Project: touch counts 4, 2, 1, 0.
    let clock = clock();
    let mut p = Project::in_memory(clock.clone());
    let page = p.create_page("Heat").ctx("page")?.page_id;
    let mut items = Vec::new();
    for i in 0..5u8 {
        let asset = p.ingest(&solid_png(4, [i * 40, 0, 0]), AssetKind::Image, Origin::Imported).ctx("ingest")?;
        let pos = Vec2::new(i as f64 * 300.0, (i % 2) as f64 * 200.0);
        items.push(p.place_item(&asset.asset_id, &page, pos, Vec2::new(100.0, 80.0)).ctx("place")?.item_id);
    }
    for (item, n) in items.iter().zip([4, 2, 1, 0]) {
        for _ in 0..n {
            clock.advance(1_000);
            p.touch_item(item).ctx("touch")?;
        }
    }
    let heat = p.activity_heatmap();
    for (item, w) in items.iter().zip([1.0, 0.5, 0.25, 0.0, 0.0]) {
        let h = heat.get(item).copied().ctx(format!("heat of {item}"))?;
        ensure!((h - w).abs() <= HEAT_TOLERANCE, "project heat of {item} = {h}, expected {w}");
        let c = p.item(item).ctx("item")?.click_count as f64 / 4.0;
        ensure!((h - c).abs() <= HEAT_TOLERANCE, "project heat of {item} != click_count / max");
    }

    // Trails: 100 random events, pure.
    let mut r = rng(0x7A1);
    let bucket = 60_000;
    let events: Vec<(Timestamp, Vec2)> = (0..100)
        .map(|_| {
            (
                Timestamp(5_000_000 + r.gen_range(0..600_000)),
                Vec2::new(r.gen_range(-500.0..500.0), r.gen_range(-500.0..500.0)),
            )
        })
        .collect();
    let trail = provenance::trail_path(&events, bucket).ctx("trail")?;
    compare_trail(&trail, &trail_oracle(&events, bucket))?;

    // Trails through a project: 100 touches on the five items.
    let mut logged = Vec::new();
    for _ in 0..100 {
        clock.advance(r.gen_range(0..20_000));
        let item = items.choose(&mut r).expect("non-empty");
        let touched = p.touch_item(item).ctx("touch")?;
        let centre = Vec2::new(
            touched.position.x + touched.size.x / 2.0,
            touched.position.y + touched.size.y / 2.0,
        );
        logged.push((touched.last_interaction_at, centre));
    }
    let all: Vec<(Timestamp, Vec2)> = p
        .document()
        .interactions
        .iter()
        .map(|(at, id)| {
            let i = &p.document().items[id];
            (*at, Vec2::new(i.position.x + i.size.x / 2.0, i.position.y + i.size.y / 2.0))
        })
        .collect();
    ensure!(all.ends_with(&logged), "interaction log does not end with the 100 touches");
    compare_trail(&p.trail_path(bucket).ctx("project trail")?, &trail_oracle(&all, bucket))?;

    Ok(format!(
        "heatmap = click_count/max within {HEAT_TOLERANCE:e} on 5 fixtures; {} trail buckets over 100 events match group-by oracle",
        trail.len()
    ))
}

// ---------------------------------------------------------------------------
// End to end on the mock backend

fn primary(p: &Project, asset: &AssetId) -> Result<NodeId, String> {
    Ok(p
        .document()
        .provenance
        .primary_node(asset)
        .ctx(format!("node of {asset}"))?
        .node_id
        .clone())
}

fn parent_set(n: &ProvenanceNode) -> BTreeSet<(NodeId, SlotRole)> {
    n.parents.iter().map(|p| (p.node.clone(), p.role)).collect()
}

pub fn e2e_mock() -> CheckResult {
    let clock = clock();
    let engine = Engine::mock(clock.clone());
    let seed = demo::seed(&engine).ctx("demo seed")?;
    let place = |x: f64| {
        Some(Placement {
            page_id: seed.page.clone(),
            position: Vec2::new(x, 600.0),
        })
    };

    clock.advance(1_000);
    let sketch = engine
        .run_quick_op(QuickOpKind::QuickSketch, &seed.note.asset_id, None, place(0.0))
        .ctx("quick sketch")?
        .map_err(|l| format!("quick sketch ran locally: {l:?}"))?;
    ensure!(sketch.len() == 1, "quick sketch produced {} outputs", sketch.len());
    let sketch = &sketch[0];

    clock.advance(1_000);
    let paint_spec = EaselSpec::new(EaselKind::Paint, BackendModel::Flux, "a warrior crossing an enchanted forest")
        .with_start_image(sketch.asset.asset_id.clone())
        .with_reference(seed.warrior.asset_id.clone(), 0.8, None)
        .with_reference(seed.forest.asset_id.clone(), 0.5, None)
        .with_seed(7);
    let paint = engine.generate(paint_spec.clone(), place(300.0)).ctx("paint")?;
    ensure!(paint.len() == 1, "paint produced {} outputs", paint.len());
    let paint = &paint[0];

    clock.advance(1_000);
    let trace_spec = EaselSpec::trace(
        BackendModel::Flux,
        paint.asset.asset_id.clone(),
        "a warrior in an enchanted forest",
        "a watercolor illustration of a knight in a misty glade",
    )
    .with_seed(11);
    let trace = engine.generate(trace_spec, place(600.0)).ctx("trace")?;
    ensure!(trace.len() == 1, "trace produced {} outputs", trace.len());
    let trace = &trace[0];

    clock.advance(1_000);
    let layers = [
        CollageLayer {
            asset: trace.asset.asset_id.clone(),
            transform: LayerTransform {
                x: 0.0,
                y: 0.0,
                scale: 0.25,
                z: 0,
            },
        },
        CollageLayer {
            asset: seed.dragon.asset_id.clone(),
            transform: LayerTransform {
                x: 96.0,
                y: 96.0,
                scale: 0.5,
                z: 1,
            },
        },
    ];
    let collage = engine
        .flatten_collage(&layers, Rect::new(0.0, 0.0, 256.0, 256.0), place(900.0))
        .ctx("collage")?;

    clock.advance(1_000);
    let mut animate_spec = EaselSpec::new(EaselKind::Animate, BackendModel::Wan22, "the dragon circles the knight")
        .with_pill("the camera orbits around the subject")
        .with_seed(3);
    animate_spec.first_frame = Some(collage.asset.asset_id.clone());
    let video = engine.generate(animate_spec, place(1_200.0)).ctx("animate")?;
    ensure!(video.len() == 1, "animate produced {} outputs", video.len());
    let video = &video[0];
    ensure!(video.asset.kind == AssetKind::Video, "animate produced a {:?}", video.asset.kind);

    let mut p = engine.project();
    let generated: Vec<&Asset> = p
        .document()
        .assets
        .values()
        .filter(|a| a.origin != Origin::Imported)
        .collect();
    ensure!(generated.len() == 5, "{} generated assets, expected 5", generated.len());

    // Typed parent edges.
    let note = primary(&p, &seed.note.asset_id)?;
    let warrior = primary(&p, &seed.warrior.asset_id)?;
    let forest = primary(&p, &seed.forest.asset_id)?;
    let dragon = primary(&p, &seed.dragon.asset_id)?;
    let expect = [
        (&sketch.node, vec![(note.clone(), SlotRole::Source)]),
        (
            &paint.node,
            vec![
                (sketch.node.node_id.clone(), SlotRole::StartImage),
                (warrior.clone(), SlotRole::Reference1),
                (forest.clone(), SlotRole::Reference2),
            ],
        ),
        (&trace.node, vec![(paint.node.node_id.clone(), SlotRole::InputImage)]),
        (
            &collage.node,
            vec![
                (trace.node.node_id.clone(), SlotRole::CollageLayer),
                (dragon.clone(), SlotRole::CollageLayer),
            ],
        ),
        (&video.node, vec![(collage.node.node_id.clone(), SlotRole::FirstFrame)]),
    ];
    for (node, parents) in expect {
        let stored = p.node(&node.node_id).ctx("node")?;
        ensure!(
            parent_set(stored) == parents.into_iter().collect(),
            "{} has parents {:?}",
            node.node_id,
            stored.parents
        );
    }
    ensure!(
        matches!(p.node(&sketch.node.node_id).ctx("node")?.kind, NodeKind::QuickOp { op: QuickOpKind::QuickSketch, .. }),
        "quick sketch node has the wrong kind"
    );
    let lineage = p.lineage(&video.node.node_id).ctx("lineage")?;
    for n in [&note, &warrior, &forest, &dragon] {
        ensure!(
            lineage.ancestors.iter().any(|e| &e.node_id == n),
            "video lineage misses {n}"
        );
    }

    // Search by prompt keywords.
    for (query, asset) in [
        ("enchanted forest", &paint.asset.asset_id),
        ("watercolor glade", &trace.asset.asset_id),
        ("orbits", &video.asset.asset_id),
    ] {
        let hits = p.search(query);
        ensure!(hits.iter().any(|h| &h.asset_id == asset), "search {query:?} misses {asset}");
    }

    // Pulling from a collection places a copy.
    let pulled = p
        .instantiate_from_collection(&seed.collection, &seed.warrior.asset_id, &seed.page, Vec2::new(0.0, 1_200.0))
        .ctx("pull warrior")?;
    let copy = p.node_of_item(&pulled.item_id).ctx("pulled node")?.clone();
    ensure!(copy.kind == NodeKind::Copy { of: warrior.clone() }, "pulled warrior is {:?}", copy.kind);
    let keepers = p
        .create_collection("Keepers", &[paint.asset.asset_id.clone()], &[])
        .ctx("collection")?
        .collection_id;
    let pulled = p
        .instantiate_from_collection(&keepers, &paint.asset.asset_id, &seed.page, Vec2::new(300.0, 1_200.0))
        .ctx("pull paint")?;
    let copy = p.node_of_item(&pulled.item_id).ctx("pulled node")?.clone();
    ensure!(
        copy.kind
            == NodeKind::Copy {
                of: paint.node.node_id.clone()
            },
        "pulled paint is {:?}",
        copy.kind
    );
    ensure!(copy.params == paint.node.params, "pulled copy lost its params");
    ensure!(
        p.recreate_easel_spec(&copy.node_id).ctx("recreate copy")? == paint_spec,
        "copy does not recreate the paint spec"
    );
    Ok("5 generated assets with typed edges; keyword search hits; collection pulls create copy nodes".into())
}

// ---------------------------------------------------------------------------
// Crash recovery

pub const CRASH_RUNS: usize = 50;

fn is_crash(e: &ProjectError) -> bool {
    matches!(e, ProjectError::Journal(JournalError::InjectedCrash | JournalError::Poisoned))
}

/// One random single-record mutation.
fn crash_op<R: Rng>(p: &mut Project, r: &mut R) -> Result<(), ProjectError> {
    let doc = p.document();
    let pages: Vec<PageId> = doc.pages.keys().cloned().collect();
    let assets: Vec<AssetId> = doc.assets.keys().cloned().collect();
    let items: Vec<ItemId> = doc.visible_items().map(|i| i.item_id.clone()).collect();
    let nodes: Vec<NodeId> = doc.provenance.nodes().map(|n| n.node_id.clone()).collect();
    let pending: Vec<RunId> = doc
        .runs
        .values()
        .filter(|run| run.status == easel_core::document::RunStatus::Submitted)
        .map(|run| run.run_id.clone())
        .collect();
    if pages.is_empty() {
        p.create_page("Crash")?;
        return Ok(());
    }
    if assets.len() < 2 {
        p.ingest(&solid_png(r.gen_range(2..8), r.gen()), AssetKind::Image, Origin::Imported)?;
        return Ok(());
    }
    match r.gen_range(0..10) {
        0 => {
            p.ingest(&solid_png(r.gen_range(2..8), r.gen()), AssetKind::Image, Origin::Imported)?;
        }
        1 | 2 => {
            let pos = Vec2::new(r.gen_range(0.0..1_000.0), r.gen_range(0.0..1_000.0));
            p.place_item(assets.choose(r).expect("non-empty"), pages.choose(r).expect("non-empty"), pos, Vec2::new(50.0, 50.0))?;
        }
        3 if !items.is_empty() => {
            p.touch_item(items.choose(r).expect("non-empty"))?;
        }
        4 if !items.is_empty() => {
            let pos = Vec2::new(r.gen::<f64>() * 1e3, r.gen::<f64>() * 1e3);
            p.move_item(items.choose(r).expect("non-empty"), Some(pos), None, Some(r.gen_range(-5..5)))?;
        }
        5 if !items.is_empty() => {
            p.set_emphasis(items.choose(r).expect("non-empty"), r.gen())?;
        }
        6 if !nodes.is_empty() => {
            let n = nodes.choose(r).expect("non-empty");
            if p.node(n)?.deleted {
                p.restore(n)?;
            } else {
                p.soft_delete(n)?;
            }
        }
        7 => {
            let members: Vec<AssetId> = assets.choose_multiple(r, 2).cloned().collect();
            p.create_collection("set", &members, &["tag".to_owned()])?;
        }
        8 => {
            let recipe = Recipe::Easel(gen::random_spec(r, &assets));
            let graph = recipe.compile().expect("random specs compile");
            let placement = Some(Placement {
                page_id: pages[0].clone(),
                position: Vec2::new(r.gen(), r.gen()),
            });
            p.begin_run(&recipe, &graph, None, placement)?;
        }
        _ if !pending.is_empty() => {
            let out = OutputPayload {
                kind: AssetKind::Image,
                bytes: solid_png(r.gen_range(2..8), r.gen()),
            };
            p.record_generation(pending.choose(r).expect("non-empty"), &[out])?;
        }
        _ => {
            p.create_page("Extra")?;
        }
    }
    Ok(())
}

pub fn crash_recovery() -> CheckResult {
    let mut r = rng(0xC7A5);
    let (mut crashed, mut torn, mut records) = (0, 0, 0u64);
    for run in 0..CRASH_RUNS {
        let dir = tempfile::tempdir().ctx("tempdir")?;
        let clock = Arc::new(ManualClock::starting_at(1_000_000));
        let options = ProjectOptions {
            sync: false,
            snapshot_every: r.gen_range(0..6),
        };
        let mut p = Project::open(dir.path(), clock.clone(), options.clone()).ctx("open")?;
        let mut acked = (p.document().clone(), p.seq());
        let crash_at = r.gen_range(0..60);
        for step in 0..80 {
            if step == crash_at {
                p.journal_mut().inject_crash_after(r.gen_range(0..3_000));
            }
            clock.advance(r.gen_range(1..1_000));
            match crash_op(&mut p, &mut r) {
                Ok(()) => acked = (p.document().clone(), p.seq()),
                Err(e) if is_crash(&e) => {
                    crashed += 1;
                    break;
                }
                Err(e) => return Err(format!("run {run} step {step}: {e}")),
            }
        }
        drop(p);
        let len_before = fs::metadata(dir.path().join(easel_core::journal::JOURNAL_FILE)).map(|m| m.len()).unwrap_or(0);

        // The process died; a new one opens the same directory.
        let clock = Arc::new(ManualClock::starting_at(1_000));
        let mut p = Project::open(dir.path(), clock.clone(), options.clone()).ctx(format!("run {run}: reopen"))?;
        let len_after = fs::metadata(dir.path().join(easel_core::journal::JOURNAL_FILE)).map(|m| m.len()).unwrap_or(0);
        if len_after < len_before {
            torn += 1;
        }
        ensure!(p.seq() == acked.1, "run {run}: reopened at seq {}, acknowledged {}", p.seq(), acked.1);
        ensure!(p.document() == &acked.0, "run {run}: reopened document differs from the acknowledged state");
        records += acked.1;

        // The recovered project keeps working and survives another restart.
        crash_op(&mut p, &mut r).ctx(format!("run {run}: op after recovery"))?;
        let after = (p.document().clone(), p.seq());
        ensure!(p.document().last_at > acked.0.last_at || acked.1 == 0, "run {run}: time went backwards");
        drop(p);
        let p = Project::open(dir.path(), clock, options).ctx("second reopen")?;
        ensure!(
            p.seq() == after.1 && p.document() == &after.0,
            "run {run}: state after recovery was not durable"
        );
    }
    Ok(format!(
        "{CRASH_RUNS} randomized runs ({crashed} injected kills, {torn} torn tails, {records} acknowledged records) replay to the acknowledged state"
    ))
}

// ---------------------------------------------------------------------------
// Wire conformance

pub const WIRE_CLIENT: &str = "easel-conformance";

/// How a wire scenario is transported: recorded against the fake backend
/// or replayed from the checked-in fixture.
enum Mode {
    Record(Arc<RecordingTransport<FakeComfy>>),
    Replay(Arc<ReplayTransport>),
}

impl Mode {
    fn transport(&self) -> Arc<dyn Transport> {
        match self {
            Mode::Record(t) => t.clone(),
            Mode::Replay(t) => t.clone(),
        }
    }
}

pub fn wire_dir(name: &str) -> PathBuf {
    fixtures().join("wire").join(name)
}

pub struct Wire {
    pub engine: Engine,
    pub gateway: Gateway,
}

fn wire_engine(transport: Arc<dyn Transport>, gateway_preprocessing: bool) -> Wire {
    let clock = clock();
    let driver = Arc::new(RemoteDriver::new(transport, WIRE_CLIENT));
    let gateway = Gateway::new(driver, clock.clone(), GatewayConfig::default());
    let pre: Arc<dyn easel_core::metadata::Preprocessor> = if gateway_preprocessing {
        Arc::new(GatewayPreprocessor::new(gateway.clone()))
    } else {
        Arc::new(MockPreprocessor)
    };
    Wire {
        engine: Engine::new(Project::in_memory(clock), gateway.clone(), pre),
        gateway,
    }
}

/// Scenario body: drives the engine and returns the graph it submitted
/// (if any) plus a summary.
type Scenario = fn(&Wire) -> Result<(Option<WorkflowGraph>, String), String>;

fn spec_fixture(name: &str) -> Result<EaselSpec, String> {
    let bytes = fs::read(fixtures().join("specs").join(format!("{name}.json"))).ctx(name)?;
    serde_json::from_slice(&bytes).ctx(name)
}

fn expect_rendered(w: &Wire, graph: &WorkflowGraph, asset: &AssetId) -> Result<(), String> {
    let rendered = render_outputs(graph);
    let bytes = w.engine.project().asset_bytes(asset).ctx("output bytes")?;
    ensure!(
        rendered.iter().any(|o| o.bytes == bytes),
        "output {asset} is not what the backend rendered"
    );
    Ok(())
}

fn scenario_draw(w: &Wire) -> Result<(Option<WorkflowGraph>, String), String> {
    let spec = spec_fixture("draw_flux")?;
    let graph = compile(&spec).ctx("compile")?;
    let s = w.engine.submit_easel(spec, None).ctx("submit")?;
    let out = w.engine.complete(&s).ctx("complete")?;
    ensure!(out.len() == 1 && out[0].asset.kind == AssetKind::Image, "expected one image, got {}", out.len());
    expect_rendered(w, &graph, &out[0].asset.asset_id)?;
    Ok((Some(graph), "draw: 1 image".into()))
}

fn scenario_paint(w: &Wire) -> Result<(Option<WorkflowGraph>, String), String> {
    let mut ids = Vec::new();
    for i in 0..4u8 {
        let png = split_png(24, [200 - 40 * i, 60, 30 * i], [20, 40 * i, 200]);
        ids.push(w.engine.ingest(&png, AssetKind::Image).ctx("ingest")?.asset_id);
    }
    let spec = EaselSpec::new(EaselKind::Paint, BackendModel::Flux, "a knight among ancient oaks")
        .with_start_image(ids[0].clone())
        .with_reference(ids[1].clone(), 0.8, None)
        .with_reference(ids[2].clone(), 0.4, Some(ids[3].clone()))
        .with_structure(ids[0].clone(), MapKind::Depth, 0.7)
        .with_seed(2024);
    let graph = compile(&spec).ctx("compile")?;
    let out = w.engine.generate(spec, None).ctx("generate")?;
    ensure!(out.len() == 1, "expected one output, got {}", out.len());
    expect_rendered(w, &graph, &out[0].asset.asset_id)?;
    Ok((Some(graph), "paint: references, mask and depth map uploaded".into()))
}

fn scenario_metadata(w: &Wire) -> Result<(Option<WorkflowGraph>, String), String> {
    let png = split_png(24, [220, 180, 40], [30, 30, 30]);
    let asset = w.engine.ingest(&png, AssetKind::Image).ctx("ingest")?;
    let graph = GatewayPreprocessor::graph_for(&asset.asset_id);
    let hash = graph.hash();
    ensure!(
        asset.caption.as_deref() == Some(format!("mock output {}", &hash[..8]).as_str()),
        "caption {:?}",
        asset.caption
    );
    ensure!(asset.control_maps.len() == 4, "{} control maps", asset.control_maps.len());
    let rendered = render_outputs(&graph);
    for (kind, blob) in &asset.control_maps {
        let bytes = w.engine.project().blobs().get(blob).ctx("map blob")?;
        let node = rendered
            .iter()
            .find(|o| o.filename.starts_with(&format!("metadata/{}_", kind.as_str())))
            .ctx(format!("rendered {kind:?} map"))?;
        ensure!(node.bytes == bytes, "{kind:?} map bytes differ from the backend output");
    }
    Ok((Some(graph), "metadata: caption and 4 control maps".into()))
}

fn scenario_rejected(w: &Wire) -> Result<(Option<WorkflowGraph>, String), String> {
    let spec = spec_fixture("draw_flux")?;
    let graph = compile(&spec).ctx("compile")?;
    let s = w.engine.submit_easel(spec, None).ctx("submit")?;
    match w.engine.wait(&s.job_id).ctx("wait")? {
        JobStatus::Failed { reason } => {
            ensure!(
                reason.contains(REJECT_MESSAGE) && reason.contains("Value not in list"),
                "rejection reason {reason:?}"
            );
        }
        s => return Err(format!("rejected prompt ended {}", s.name())),
    }
    Ok((Some(graph), "rejected: node errors surfaced".into()))
}

fn scenario_execution_error(w: &Wire) -> Result<(Option<WorkflowGraph>, String), String> {
    let spec = spec_fixture("draw_sdxl")?;
    let graph = compile(&spec).ctx("compile")?;
    let s = w.engine.submit_easel(spec, None).ctx("submit")?;
    match w.engine.wait(&s.job_id).ctx("wait")? {
        JobStatus::Failed { reason } => ensure!(reason == OOM_MESSAGE, "failure reason {reason:?}"),
        s => return Err(format!("failing prompt ended {}", s.name())),
    }
    Ok((Some(graph), "execution error: exception message surfaced".into()))
}

fn scenario_interrupt(w: &Wire) -> Result<(Option<WorkflowGraph>, String), String> {
    let spec = spec_fixture("draw_wan22")?;
    let graph = compile(&spec).ctx("compile")?;
    let s = w.engine.submit_easel(spec, None).ctx("submit")?;
    for _ in 0..3 {
        w.gateway.pump();
    }
    let status = w.gateway.job(&s.job_id).ctx("job")?.status;
    ensure!(matches!(status, JobStatus::Running { .. }), "job is {} before cancel", status.name());
    w.gateway.cancel(&s.job_id).ctx("cancel")?;
    w.gateway.pump();
    let status = w.gateway.job(&s.job_id).ctx("job")?.status;
    ensure!(status == JobStatus::Cancelled, "job is {} after cancel", status.name());
    Ok((Some(graph), "interrupt: cancel reaches the backend".into()))
}

fn scenario_animate(w: &Wire) -> Result<(Option<WorkflowGraph>, String), String> {
    let png = split_png(24, [90, 120, 200], [250, 250, 250]);
    let frame = w.engine.ingest(&png, AssetKind::Image).ctx("ingest")?;
    let mut spec = spec_fixture("animate_wan22")?;
    spec.first_frame = Some(frame.asset_id.clone());
    let graph = compile(&spec).ctx("compile")?;
    let out = w.engine.generate(spec, None).ctx("generate")?;
    ensure!(
        out.len() == 1 && out[0].asset.kind == AssetKind::Video,
        "expected one video"
    );
    expect_rendered(w, &graph, &out[0].asset.asset_id)?;
    Ok((Some(graph), "animate: video output".into()))
}

pub const WIRE_SCENARIOS: [(&str, Behaviour, bool, Scenario); 7] = [
    ("draw_flux", Behaviour::Succeed, false, scenario_draw),
    ("paint_references", Behaviour::Succeed, false, scenario_paint),
    ("preprocess_metadata", Behaviour::Succeed, true, scenario_metadata),
    ("rejected", Behaviour::Reject, false, scenario_rejected),
    ("execution_error", Behaviour::ExecutionError, false, scenario_execution_error),
    ("interrupt", Behaviour::Hang, false, scenario_interrupt),
    ("animate_video", Behaviour::Succeed, false, scenario_animate),
];

fn load_exchanges(dir: &Path) -> Result<Vec<(HttpRequest, HttpResponse)>, String> {
    let mut out = Vec::new();
    for n in 1.. {
        let req = dir.join(format!("{n:03}-request.http"));
        if !req.exists() {
            break;
        }
        let rq = HttpRequest::decode(&fs::read(&req).ctx("read request")?).ctx(req.display())?;
        let rs_path = dir.join(format!("{n:03}-response.http"));
        let rs = HttpResponse::decode(&fs::read(&rs_path).ctx("read response")?).ctx(rs_path.display())?;
        out.push((rq, rs));
    }
    Ok(out)
}

/// Protocol facts every recording must satisfy, independent of the driver.
fn check_protocol(name: &str, dir: &Path, graph: Option<&WorkflowGraph>) -> Result<usize, String> {
    let exchanges = load_exchanges(dir)?;
    ensure!(!exchanges.is_empty(), "{name}: empty recording");
    let prompt_at = exchanges
        .iter()
        .position(|(rq, _)| rq.method == "POST" && rq.target == "/prompt")
        .ctx(format!("{name}: no prompt submission"))?;
    let mut prompt_id = None;
    for (i, (rq, rs)) in exchanges.iter().enumerate() {
        let (path, query) = rq.target.split_once('?').unwrap_or((rq.target.as_str(), ""));
        match (rq.method.as_str(), path) {
            ("POST", "/upload/image") => {
                ensure!(i < prompt_at, "{name}: upload after the prompt");
                let ct = rq
                    .headers
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case("content-type"))
                    .map(|(_, v)| v.as_str())
                    .unwrap_or_default();
                ensure!(ct.starts_with("multipart/form-data; boundary="), "{name}: upload content type {ct:?}");
                let parts = multipart_parts(ct, &rq.body).ctx(format!("{name}: multipart body"))?;
                let image = parts.iter().find(|(n, _, _)| n == "image").ctx("image part")?;
                let filename = image.1.clone().ctx("upload filename")?;
                ensure!(
                    parts.iter().any(|(n, _, b)| n == "overwrite" && b == b"true"),
                    "{name}: upload without overwrite=true"
                );
                let v: Value = serde_json::from_slice(&rs.body).ctx("upload response")?;
                ensure!(v["name"] == json!(filename), "{name}: upload stored under another name");
            }
            ("POST", "/prompt") => {
                let v: Value = serde_json::from_slice(&rq.body).ctx("prompt body")?;
                ensure!(v["client_id"] == json!(WIRE_CLIENT), "{name}: prompt client id {}", v["client_id"]);
                if let Some(g) = graph {
                    ensure!(rq.body == prompt_body(WIRE_CLIENT, g), "{name}: prompt body is not the compiled graph");
                    let sent = WorkflowGraph::from_value(v["prompt"].clone()).ctx("prompt graph")?;
                    ensure!(&sent == g, "{name}: submitted graph differs");
                }
                if rs.status == 200 {
                    let r: Value = serde_json::from_slice(&rs.body).ctx("prompt response")?;
                    prompt_id = r["prompt_id"].as_str().map(str::to_owned);
                }
            }
            ("GET", p) if p.starts_with("/history/") => {
                ensure!(
                    Some(&p["/history/".len()..]) == prompt_id.as_deref(),
                    "{name}: history fetched for another prompt"
                );
            }
            ("GET", "/view") => {
                let q: BTreeMap<String, String> = url::form_urlencoded::parse(query.as_bytes()).into_owned().collect();
                ensure!(
                    q.contains_key("filename") && q.contains_key("subfolder") && q.get("type").map(String::as_str) == Some("output"),
                    "{name}: malformed view query {query:?}"
                );
                ensure!(rs.status == 200, "{name}: view returned {}", rs.status);
            }
            ("POST", "/interrupt") => {
                let v: Value = serde_json::from_slice(&rq.body).ctx("interrupt body")?;
                ensure!(
                    v["prompt_id"].as_str() == prompt_id.as_deref(),
                    "{name}: interrupt names another prompt"
                );
            }
            (m, p) => return Err(format!("{name}: unexpected request {m} {p}")),
        }
    }
    if let Ok(events) = fs::read_to_string(dir.join(EVENTS_FILE)) {
        for line in events.lines() {
            let v: Value = serde_json::from_str(line).ctx(format!("{name}: event frame"))?;
            ensure!(v["type"].is_string(), "{name}: event frame without type");
        }
    }
    Ok(exchanges.len())
}

fn run_wire(name: &str, behaviour: Behaviour, gateway_pre: bool, scenario: Scenario, record: bool) -> CheckResult {
    let dir = wire_dir(name);
    let mode = if record {
        let t = RecordingTransport::new(FakeComfy::new(behaviour), &dir).ctx("recording")?;
        Mode::Record(Arc::new(t))
    } else {
        ensure!(dir.exists(), "{} missing (record with UPDATE_WIRE=1)", dir.display());
        Mode::Replay(Arc::new(ReplayTransport::load(&dir).ctx("load fixture")?))
    };
    let w = wire_engine(mode.transport(), gateway_pre);
    let (graph, summary) = scenario(&w).map_err(|e| format!("{name}: {e}"))?;
    match &mode {
        Mode::Record(t) => {
            if behaviour == Behaviour::Hang {
                ensure!(t.inner().interrupted().len() == 1, "{name}: backend saw no interrupt");
            }
        }
        Mode::Replay(t) => {
            let mismatches = t.mismatches();
            ensure!(
                mismatches.is_empty(),
                "{name}: request #{} differs from the recording",
                mismatches[0].index
            );
            ensure!(t.exhausted(), "{name}: recorded exchanges left unreplayed");
        }
    }
    let n = check_protocol(name, &dir, graph.as_ref())?;
    Ok(format!("{summary} ({n} exchanges)"))
}

pub fn wire_conformance() -> CheckResult {
    let record = updating("UPDATE_WIRE");
    let mut lines = Vec::new();
    for (name, behaviour, pre, scenario) in WIRE_SCENARIOS {
        lines.push(run_wire(name, behaviour, pre, scenario, record)?);
    }
    Ok(format!(
        "{} scenarios {}: {}",
        lines.len(),
        if record { "recorded" } else { "replayed byte-exact" },
        lines.join("; ")
    ))
}

/// Every acceptance criterion with its time budget.
pub fn all() -> Vec<super::Criterion> {
    use std::time::Duration;
    use super::Criterion;
    vec![
        Criterion { name: "slider_maps", budget: Some(Duration::from_secs(1)), check: slider_maps },
        Criterion { name: "structure_end_percentages", budget: None, check: structure_end_percentages },
        Criterion { name: "compiler_goldens", budget: Some(Duration::from_secs(5)), check: compiler_goldens },
        Criterion { name: "switch_strategy", budget: None, check: switch_strategy },
        Criterion { name: "recreate_roundtrip", budget: Some(Duration::from_secs(30)), check: recreate_roundtrip },
        Criterion { name: "provenance_invariants", budget: Some(Duration::from_secs(60)), check: provenance_invariants },
        Criterion { name: "history_window", budget: None, check: history_window },
        Criterion { name: "heatmap_trails", budget: None, check: heatmap_trails },
        Criterion { name: "e2e_mock", budget: Some(Duration::from_secs(20)), check: e2e_mock },
        Criterion { name: "crash_recovery", budget: None, check: crash_recovery },
        Criterion { name: "wire_conformance", budget: None, check: wire_conformance },
    ]
}
