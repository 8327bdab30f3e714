//! One world-model step: resolve an action, aggregate its targets' neighbourhoods,
//! ask a decoder, and turn the answer into the next state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::action::{resolve_targets, ActionKind, ActionNode, RetrievalOptions};
use crate::clients::{embed_checked, CompleteRequest, DecoderClient, DecoderRequest, DecoderResponse, GenerateImageRequest};
use crate::edges::EmbeddingSource;
use crate::embed::{
    assemble_embeddings, fuse, fuse_heterogeneous, propagate_heterogeneous, propagate_state, GraphTargets, Projector,
    TargetScope,
};
use crate::error::{GwmError, Result};
use crate::graph::{AdjacencyWeighting, GraphState, Modality, ModalityDims, NodeId};
use crate::tasks::{parse_decoder_answer, ParsedAnswer, PredictionRecord, TaskKind, TaskSpec};
use crate::templates::{PromptTemplate, TemplateRegistry};
use crate::token::{neighborhood, token_message_pass_detailed, unify_node_text, TokenBudget, UnifiedTextNode};
use crate::transition::{apply, Transition};

/// Default hop count of message passing.
pub const DEFAULT_HOPS: usize = 4;
/// Default completion length requested from text decoders.
pub const DEFAULT_MAX_NEW_TOKENS: usize = 256;

/// Template slot that receives an unintended action's query when the action does not
/// set it explicitly.
const QUERY_SLOT: &str = "user query";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    /// Neighbour text folded into prompts.
    #[default]
    Token,
    /// Propagated embeddings fused into graph tokens.
    Embed,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Token => "token",
            Pipeline::Embed => "embed",
        })
    }
}

impl FromStr for Pipeline {
    type Err = GwmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(Pipeline::Token),
            "embed" => Ok(Pipeline::Embed),
            other => Err(GwmError::InvalidArgument(format!("unknown pipeline `{other}`"))),
        }
    }
}

/// Settings shared by every step of a run.
#[derive(Debug, Clone)]
pub struct StepContext<'a> {
    pub registry: &'a TemplateRegistry,
    pub budget: TokenBudget,
    pub hops: usize,
    pub retrieval: RetrievalOptions,
    pub weighting: AdjacencyWeighting,
    /// Required by the embedding pipeline.
    pub projector: Option<&'a Projector<f64>>,
    pub max_new_tokens: usize,
}

impl<'a> StepContext<'a> {
    pub fn new(registry: &'a TemplateRegistry) -> Self {
        Self {
            registry,
            budget: TokenBudget::default(),
            hops: DEFAULT_HOPS,
            retrieval: RetrievalOptions::default(),
            weighting: AdjacencyWeighting::default(),
            projector: None,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

/// A rendered decoder call, ready to send.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCall {
    pub targets: Vec<NodeId>,
    pub prompt: String,
    pub request: DecoderRequest,
    /// Neighbours evicted to keep the prompt within budget.
    pub dropped: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: GraphState,
    pub response: DecoderResponse,
    pub call: PreparedCall,
    pub transition: Option<Transition>,
    pub prediction: Option<PredictionRecord>,
}

/// A failed step. The input state is untouched; the decoder response is kept when
/// the failure happened after decoding.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct StepFailure {
    pub error: GwmError,
    pub response: Option<DecoderResponse>,
}

impl From<GwmError> for StepFailure {
    fn from(error: GwmError) -> Self {
        Self { error, response: None }
    }
}

/// Embeds a free-text query in the space of `source`. For the concatenated space the
/// query fills the text segment and leaves the others zero.
pub fn query_embedding(client: &dyn DecoderClient, dims: &ModalityDims, source: EmbeddingSource, text: &str) -> Result<Vec<f32>> {
    match source.modality() {
        Some(m) => embed_checked(client, m, text, dims.dim(m)),
        None => {
            let t = embed_checked(client, Modality::Text, text, dims.text)?;
            let mut v = vec![0.0; dims.total()];
            let off = dims.offset(Modality::Text);
            v[off..off + t.len()].copy_from_slice(&t);
            Ok(v)
        }
    }
}

struct PromptParts<'a> {
    template: &'a PromptTemplate,
    fixed: BTreeMap<String, String>,
    slots: Vec<String>,
    instruction: Option<&'a str>,
}

impl PromptParts<'_> {
    fn compose(&self, texts: &[String]) -> Result<String> {
        let mut values = self.fixed.clone();
        match (self.slots.len(), texts.len()) {
            (k, n) if k == n => values.extend(self.slots.iter().cloned().zip(texts.iter().cloned())),
            (1, _) => {
                let list: Vec<String> = texts.iter().map(|t| format!("[{t}]")).collect();
                values.insert(self.slots[0].clone(), list.join(", "));
            }
            (k, n) => {
                return Err(GwmError::InvalidAction(format!(
                    "template `{}` takes {k} target texts, action resolved {n} targets",
                    self.template.id()
                )))
            }
        }
        let mut prompt = self.template.render(&values)?;
        if let Some(i) = self.instruction {
            prompt.push('\n');
            prompt.push_str(i);
        }
        Ok(prompt)
    }
}

fn unified_for(
    state: &GraphState,
    targets: &[NodeId],
    hops: usize,
    client: &dyn DecoderClient,
) -> Result<HashMap<NodeId, UnifiedTextNode>> {
    let mut ids: BTreeSet<NodeId> = targets.iter().cloned().collect();
    for t in targets {
        ids.extend(neighborhood(state, t.as_str(), hops)?);
    }
    ids.into_iter()
        .map(|id| {
            let node = state.node(id.as_str()).expect("resolved ids exist");
            Ok((id, unify_node_text(node, client)?))
        })
        .collect()
}

/// Token pipeline: each target's `h^(L)` under a shared per-target budget that
/// shrinks until the whole prompt fits.
fn token_prompt(
    state: &GraphState,
    targets: &[NodeId],
    parts: &PromptParts<'_>,
    client: &dyn DecoderClient,
    ctx: &StepContext<'_>,
) -> Result<(String, Vec<NodeId>)> {
    let budget = &ctx.budget;
    if parts.slots.is_empty() {
        let prompt = parts.compose(&[])?;
        let needed = budget.count(&prompt);
        if needed > budget.max_tokens {
            return Err(GwmError::BudgetTooSmallForCenter { needed, budget: budget.max_tokens });
        }
        return Ok((prompt, Vec::new()));
    }
    let empty: Vec<String> = vec![String::new(); targets.len()];
    let overhead = budget.count(&parts.compose(&empty)?);
    if overhead >= budget.max_tokens {
        return Err(GwmError::BudgetTooSmallForCenter { needed: overhead + 1, budget: budget.max_tokens });
    }
    let unified = unified_for(state, targets, ctx.hops, client)?;
    let mut per_target = (budget.max_tokens - overhead) / targets.len();
    loop {
        if per_target == 0 {
            return Err(GwmError::BudgetTooSmallForCenter { needed: overhead + targets.len(), budget: budget.max_tokens });
        }
        let sub = TokenBudget { max_tokens: per_target, tokenizer: budget.tokenizer.clone() };
        let mut texts = Vec::with_capacity(targets.len());
        let mut dropped = Vec::new();
        for t in targets {
            let pass = token_message_pass_detailed(state, &unified, t.as_str(), ctx.hops, &sub)?;
            texts.push(pass.text);
            dropped.extend(pass.dropped);
        }
        let prompt = parts.compose(&texts)?;
        let used = budget.count(&prompt);
        if used <= budget.max_tokens {
            return Ok((prompt, dropped));
        }
        per_target = per_target.saturating_sub((used - budget.max_tokens).div_ceil(targets.len()));
    }
}

fn graph_tokens(
    state: &GraphState,
    action: &ActionNode,
    targets: &[NodeId],
    client: &dyn DecoderClient,
    ctx: &StepContext<'_>,
) -> Result<Vec<Vec<f32>>> {
    let projector = ctx
        .projector
        .ok_or_else(|| GwmError::InvalidArgument("the embedding pipeline needs a projector".into()))?;
    let scope = match &action.kind {
        ActionKind::Intended { targets } => targets.clone(),
        ActionKind::Unintended { .. } => TargetScope::Graph(GraphTargets::Nodes(targets.to_vec())),
    };
    let x = assemble_embeddings::<f64>(state, client)?;
    let tokens = if state.is_heterogeneous() {
        fuse_heterogeneous(&propagate_heterogeneous(state, x.values.view(), ctx.hops, ctx.weighting)?, projector, &scope)?
    } else {
        fuse(&propagate_state(state, x.values.view(), ctx.hops, ctx.weighting)?, projector, &scope)?
    };
    Ok(tokens.to_f32())
}

/// Resolves `action` and renders the decoder request without calling the decoder.
/// The client is used for query embeddings, image captions and missing node
/// embeddings only.
pub fn prepare(
    state: &GraphState,
    action: &ActionNode,
    pipeline: Pipeline,
    client: &dyn DecoderClient,
    task: &TaskSpec,
    ctx: &StepContext<'_>,
) -> Result<PreparedCall> {
    task.validate(ctx.registry)?;
    let query = match &action.kind {
        ActionKind::Unintended { query_text, .. } => {
            Some(query_embedding(client, state.dims(), ctx.retrieval.source, query_text)?)
        }
        ActionKind::Intended { .. } => None,
    };
    let targets = resolve_targets(state, action, query.as_deref(), &ctx.retrieval)?;

    let template = ctx.registry.get(&task.template_id)?;
    let mut fixed = action.params.clone();
    if let ActionKind::Unintended { query_text, .. } = &action.kind {
        if template.slots().iter().any(|s| s == QUERY_SLOT) && !fixed.contains_key(QUERY_SLOT) {
            fixed.insert(QUERY_SLOT.to_string(), query_text.clone());
        }
    }
    let slots = match &task.target_slots {
        Some(s) => s.clone(),
        None => template.slots().iter().filter(|s| !fixed.contains_key(*s)).cloned().collect(),
    };
    let parts = PromptParts { template, fixed, slots, instruction: task.instruction.as_deref() };

    let (prompt, dropped, tokens) = match pipeline {
        Pipeline::Token => {
            let (prompt, dropped) = token_prompt(state, &targets, &parts, client, ctx)?;
            (prompt, dropped, None)
        }
        Pipeline::Embed => {
            let texts: Vec<String> = targets
                .iter()
                .map(|t| Ok(unify_node_text(state.node(t.as_str()).expect("resolved"), client)?.v_c))
                .collect::<Result<_>>()?;
            let prompt = parts.compose(&texts)?;
            let needed = ctx.budget.count(&prompt);
            if needed > ctx.budget.max_tokens {
                return Err(GwmError::BudgetTooSmallForCenter { needed, budget: ctx.budget.max_tokens });
            }
            (prompt, Vec::new(), Some(graph_tokens(state, action, &targets, client, ctx)?))
        }
    };

    let request = match task.task {
        TaskKind::MultiModalGeneration => {
            DecoderRequest::GenerateImage(GenerateImageRequest { prompt: prompt.clone(), condition_tokens: tokens })
        }
        _ => DecoderRequest::Complete(CompleteRequest {
            prompt: prompt.clone(),
            max_tokens: ctx.max_new_tokens,
            graph_tokens: tokens,
        }),
    };
    Ok(PreparedCall { targets, prompt, request, dropped })
}

/// Runs one step. On any failure the input snapshot is the current state; a decoder
/// response that could not be used is returned inside the failure.
pub fn step(
    state: &GraphState,
    action: &ActionNode,
    pipeline: Pipeline,
    client: &dyn DecoderClient,
    task: &TaskSpec,
    ctx: &StepContext<'_>,
) -> std::result::Result<StepOutcome, StepFailure> {
    let call = prepare(state, action, pipeline, client, task, ctx)?;
    let response = client.call(&call.request)?;
    let fail = |error: GwmError, response: DecoderResponse| StepFailure { error, response: Some(response) };
    let parsed = match parse_decoder_answer(task, action, &call.targets, &response, state) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, response)),
    };
    match parsed {
        ParsedAnswer::Transition(t) => match apply(state, &t) {
            Ok(next) => Ok(StepOutcome { state: next, response, call, transition: Some(t), prediction: None }),
            Err(e) => Err(fail(e, response)),
        },
        ParsedAnswer::Prediction(p) => {
            Ok(StepOutcome { state: state.clone(), response, call, transition: None, prediction: Some(p) })
        }
    }
}
