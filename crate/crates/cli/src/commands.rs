//! Subcommand implementations.

use std::io::Write;

use gwm_core::action::{top_k_cosine, ActionNode};
use gwm_core::clients::DecoderClient;
use gwm_core::edges::node_vectors;
use gwm_core::embed::{assemble_embeddings, embed_state, propagate_state, Activation, GraphTargets, Projector, TargetScope};
use gwm_core::mock::MockDecoder;
use gwm_core::step::{prepare, query_embedding, step, StepContext};
use gwm_core::store::{load_graph, load_projector, save_graph, EmbeddingStore, ReadMode};
use gwm_core::tasks::{build_rag_graph, hop_ablation, AblationRow, RidgeProbe, SyntheticGraphSpec, TaskFixture, TaskKind, TaskSpec};
use gwm_core::templates::TemplateRegistry;
use gwm_core::transition::TransitionLog;
use gwm_core::{GraphState, GwmError, Result};
use gwm_http::HttpDecoderClient;

use crate::config::{Config, DecoderMode};
use crate::{
    AblateArgs, ActionArgs, BuildGraphArgs, Cli, Command, EmbedArgs, MockServeArgs, PropagateArgs, RetrieveArgs, StepArgs,
};

/// Default synthetic graph of `ablate-hops`.
const DEFAULT_ABLATION: SyntheticGraphSpec =
    SyntheticGraphSpec::NeighborhoodMajority { nodes: 200, dim: 16, noise: 0.3, train_fraction: 0.5 };

struct Env {
    config: Config,
    read_mode: ReadMode,
}

impl Env {
    fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(s) = cli.seed {
            config.seed = s;
        }
        if let Some(b) = cli.budget {
            config.token_budget = b;
        }
        if let Some(url) = &cli.decoder_url {
            config.decoder.mode = DecoderMode::Http;
            config.decoder.url = url.clone();
        }
        config.validate()?;
        let read_mode = if cli.lenient { ReadMode::Lenient } else { ReadMode::Strict };
        Ok(Self { config, read_mode })
    }

    fn client(&self) -> Result<Box<dyn DecoderClient>> {
        Ok(match self.config.decoder.mode {
            DecoderMode::Mock => Box::new(MockDecoder::new(self.config.seed, self.config.dims.modality())),
            DecoderMode::Http => Box::new(HttpDecoderClient::new(self.config.decoder.http())?),
        })
    }

    fn load_graph(&self, path: &std::path::Path) -> Result<GraphState> {
        let state = load_graph(path, self.read_mode)?;
        if *state.dims() != self.config.dims.modality() {
            return Err(GwmError::Config(format!(
                "graph dims {:?} differ from configured dims {:?}",
                state.dims(),
                self.config.dims.modality()
            )));
        }
        Ok(state)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let env = Env::from_cli(&cli)?;
    match cli.command {
        Command::BuildGraph(a) => build_graph(&env, a),
        Command::Embed(a) => embed(&env, a),
        Command::Propagate(a) => propagate(&env, a),
        Command::Retrieve(a) => retrieve(&env, a),
        Command::Prompt(a) => prompt(&env, a.action),
        Command::Step(a) => run_step(&env, a),
        Command::AblateHops(a) => ablate(a),
        Command::MockServe(a) => mock_serve(&env, a),
    }
}

fn build_graph(env: &Env, a: BuildGraphArgs) -> Result<()> {
    let client = env.client()?;
    let options = env.config.graph_options();
    let state = match (&a.fixture, &a.document) {
        (Some(f), _) => TaskFixture::load(f)?.build_graph(client.as_ref(), options)?,
        (None, Some(d)) => {
            let text = std::fs::read_to_string(d)?;
            let mut knn = env.config.knn();
            if let Some(k) = a.k {
                knn.k = k;
            }
            build_rag_graph(&text, a.chunk_tokens.unwrap_or(env.config.chunk_tokens), client.as_ref(), knn, options)?
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    save_graph(&state, &a.output)?;
    println!("{} nodes, {} edges -> {}", state.len(), state.edge_count(), a.output.display());
    Ok(())
}

fn embed(env: &Env, a: EmbedArgs) -> Result<()> {
    let client = env.client()?;
    let state = embed_state(&env.load_graph(&a.graph)?, client.as_ref())?;
    save_graph(&state, &a.output)?;
    if let Some(p) = &a.store {
        EmbeddingStore::from_state(&state).save(p)?;
    }
    println!("{} nodes embedded -> {}", state.len(), a.output.display());
    Ok(())
}

fn propagate(env: &Env, a: PropagateArgs) -> Result<()> {
    let state = env.load_graph(&a.graph)?;
    let hops = a.hops.unwrap_or(env.config.hops);
    let x = match &a.embeddings {
        Some(p) => {
            let store = EmbeddingStore::load(p)?;
            if !store.matches(&state) {
                return Err(GwmError::SchemaViolation("embedding store was written for a different node order".into()));
            }
            store.values.mapv(f64::from)
        }
        None => assemble_embeddings::<f64>(&state, env.client()?.as_ref())?.values,
    };
    let stack = propagate_state(&state, x.view(), hops, env.config.weighting)?;
    EmbeddingStore::from_matrix(stack.node_order(), stack.hop(hops))?.save(&a.output)?;
    println!("{}x{} hop-{hops} embeddings -> {}", stack.len(), stack.dim(), a.output.display());
    Ok(())
}

fn retrieve(env: &Env, a: RetrieveArgs) -> Result<()> {
    let state = env.load_graph(&a.graph)?;
    if state.is_empty() {
        return Err(GwmError::EmptyGraph);
    }
    let client = env.client()?;
    let source = env.config.retrieval.source;
    let query = query_embedding(client.as_ref(), state.dims(), source, &a.query)?;
    let vectors = node_vectors(&state, source)?;
    let ids = state.node_order();
    let mut out = std::io::stdout().lock();
    for (i, score) in top_k_cosine(&query, &vectors, &ids, a.k.unwrap_or(env.config.k)) {
        writeln!(out, "{}\t{score:.6}", ids[i])?;
    }
    Ok(())
}

/// Graph, task and action of a prompt or step.
struct Resolved {
    state: GraphState,
    task: TaskSpec,
    action: ActionNode,
}

fn resolve(env: &Env, a: &ActionArgs, client: &dyn DecoderClient) -> Result<Resolved> {
    if let Some(f) = &a.fixture {
        let fx = TaskFixture::load(f)?;
        let state = fx.build_graph(client, env.config.graph_options())?;
        let mut task = fx.spec;
        if let Some(i) = &a.instruction {
            task.instruction = Some(i.clone());
        }
        return Ok(Resolved { state, task, action: fx.action });
    }
    let graph = a.graph.as_ref().expect("clap requires an input");
    let template = a.action.as_ref().expect("clap requires --action with --graph");
    let kind = TaskKind::for_template(template)
        .ok_or_else(|| GwmError::UnknownTemplate(template.clone()))?;
    let mut task = TaskSpec::new(kind, template.clone());
    task.instruction = a.instruction.clone();
    let id = "cli-action";
    let mut action = match (&a.query, a.target.as_slice()) {
        (Some(q), _) => ActionNode::unintended(id, q.clone(), a.k.unwrap_or(env.config.k), template.clone()),
        (None, [n]) => ActionNode::intended(id, TargetScope::Node(n.as_str().into()), template.clone()),
        (None, [s, d]) if kind.level() != gwm_core::action::ActionLevel::Graph => {
            ActionNode::intended(id, TargetScope::Edge(s.as_str().into(), d.as_str().into()), template.clone())
        }
        (None, []) => ActionNode::intended(id, TargetScope::Graph(GraphTargets::All), template.clone()),
        (None, ids) => ActionNode::intended(
            id,
            TargetScope::Graph(GraphTargets::Nodes(ids.iter().map(|s| s.as_str().into()).collect())),
            template.clone(),
        ),
    };
    for (slot, value) in &a.param {
        action = action.with_param(slot.clone(), value.clone());
    }
    let state = embed_state(&env.load_graph(graph)?, client)?;
    Ok(Resolved { state, task, action })
}

fn projector(env: &Env, a: &ActionArgs, task: &TaskSpec, hops: usize) -> Result<Option<Projector<f64>>> {
    if a.pipeline != gwm_core::step::Pipeline::Embed {
        return Ok(None);
    }
    if let Some(p) = &a.projector {
        return load_projector(p).map(Some);
    }
    let dims = &env.config.dims;
    let d_out = match task.task {
        TaskKind::MultiModalGeneration => dims.out_image,
        _ => dims.out_text,
    };
    Ok(Some(Projector::random(hops, dims.modality().total(), d_out, Activation::Tanh, env.config.seed)))
}

fn context<'a>(env: &Env, registry: &'a TemplateRegistry, hops: usize, projector: Option<&'a Projector<f64>>) -> StepContext<'a> {
    let mut ctx = StepContext::new(registry);
    ctx.budget = env.config.budget();
    ctx.hops = hops;
    ctx.retrieval = env.config.retrieval;
    ctx.weighting = env.config.weighting;
    ctx.projector = projector;
    ctx.max_new_tokens = env.config.max_new_tokens;
    ctx
}

fn hops_for(env: &Env, a: &ActionArgs) -> Result<usize> {
    match (&a.projector, a.hops) {
        (Some(p), None) if a.pipeline == gwm_core::step::Pipeline::Embed => Ok(load_projector::<f64>(p)?.hops()),
        (_, h) => Ok(h.unwrap_or(env.config.hops)),
    }
}

fn prompt(env: &Env, a: ActionArgs) -> Result<()> {
    let client = env.client()?;
    let r = resolve(env, &a, client.as_ref())?;
    let registry = TemplateRegistry::builtin();
    let hops = hops_for(env, &a)?;
    let projector = projector(env, &a, &r.task, hops)?;
    let ctx = context(env, &registry, hops, projector.as_ref());
    let call = prepare(&r.state, &r.action, a.pipeline, client.as_ref(), &r.task, &ctx)?;
    println!("{}", call.prompt);
    if let Some(tokens) = call.request.graph_tokens() {
        eprintln!("graph tokens: {} x {}", tokens.len(), tokens.first().map_or(0, Vec::len));
    }
    if !call.dropped.is_empty() {
        let dropped: Vec<&str> = call.dropped.iter().map(|d| d.as_str()).collect();
        eprintln!("dropped to fit the budget: {}", dropped.join(", "));
    }
    Ok(())
}

fn run_step(env: &Env, a: StepArgs) -> Result<()> {
    let client = env.client()?;
    let r = resolve(env, &a.action, client.as_ref())?;
    let registry = TemplateRegistry::builtin();
    let hops = hops_for(env, &a.action)?;
    let projector = projector(env, &a.action, &r.task, hops)?;
    let ctx = context(env, &registry, hops, projector.as_ref());
    let outcome = step(&r.state, &r.action, a.action.pipeline, client.as_ref(), &r.task, &ctx).map_err(|f| f.error)?;
    save_graph(&outcome.state, &a.output)?;
    if let (Some(t), Some(log)) = (&outcome.transition, &a.log) {
        TransitionLog::open(log)?.append(t)?;
    }
    let record = match (&outcome.transition, &outcome.prediction) {
        (Some(t), _) => serde_json::json!({
            "request_id": outcome.response.request_id,
            "transition": t,
            "version": outcome.state.version(),
        }),
        (None, Some(p)) => serde_json::json!({
            "request_id": outcome.response.request_id,
            "prediction": p,
            "version": outcome.state.version(),
        }),
        (None, None) => unreachable!("a step yields a transition or a prediction"),
    };
    println!("{record}");
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let spec = match &a.fixture {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| GwmError::SchemaViolation(format!("synthetic graph spec: {e}")))?,
        None => DEFAULT_ABLATION,
    };
    let probe = RidgeProbe::default();
    let mut rows: Vec<AblationRow> = Vec::new();
    for &seed in &a.seeds {
        rows.extend(hop_ablation(&spec, &a.hops, &probe, seed)?);
    }
    match &a.output {
        Some(p) => AblationRow::write_csv(&rows, std::fs::File::create(p)?),
        None => AblationRow::write_csv(&rows, std::io::stdout().lock()),
    }
}

fn mock_serve(env: &Env, a: MockServeArgs) -> Result<()> {
    let mock = MockDecoder::new(env.config.seed, env.config.dims.modality());
    gwm_http::serve_blocking(&a.addr, mock, |addr| {
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
    })
}
