use ndarray::Array2;

use crate::clients::{embed_checked, DecoderClient};
use crate::error::Result;
use crate::graph::{GraphState, Modality, ModalityDims, MultiModalNode, NodeId};
use crate::scalar::Scalar;
use crate::token::table_to_text;

/// Dense `n × (d_a + d_t + d_b)` node embedding matrix `X_e` in snapshot node order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    pub values: Array2<T>,
    pub node_order: Vec<NodeId>,
    pub source_version: u64,
    pub dims: ModalityDims,
}

/// What the embedder sees for one modality: text verbatim, tables as
/// `"{col} is {val}, ..."`, images by reference.
pub fn modality_content(node: &MultiModalNode, m: Modality) -> Option<String> {
    match m {
        Modality::Text => node.text().map(str::to_string),
        Modality::Table => node.table().map(table_to_text),
        Modality::Image => node.image_ref().map(str::to_string),
    }
}

fn node_slot(node: &MultiModalNode, m: Modality, dims: &ModalityDims, embedder: &dyn DecoderClient) -> Result<Option<Vec<f32>>> {
    if let Some(cached) = node.embedding(m) {
        return Ok(Some(cached.to_vec()));
    }
    match modality_content(node, m) {
        Some(content) => embed_checked(embedder, m, &content, dims.dim(m)).map(Some),
        None => Ok(None),
    }
}

/// Builds `X_e`: each row is `[e_a | e_t | e_b]` with absent modalities as exact zeros.
/// Fresh cached slots are reused; everything else is fetched from `embedder`.
pub fn assemble_embeddings<T: Scalar>(state: &GraphState, embedder: &dyn DecoderClient) -> Result<EmbeddingMatrix<T>> {
    let dims = *state.dims();
    let mut values = Array2::<T>::zeros((state.len(), dims.total()));
    for (i, node) in state.nodes().enumerate() {
        for m in Modality::ALL {
            if let Some(v) = node_slot(node, m, &dims, embedder)? {
                let off = dims.offset(m);
                for (k, x) in v.into_iter().enumerate() {
                    values[[i, off + k]] = T::of_f32(x);
                }
            }
        }
    }
    Ok(EmbeddingMatrix { values, node_order: state.node_order(), source_version: state.version(), dims })
}

/// Fills every missing embedding slot from `embedder` and publishes one new snapshot.
/// Returns the input unchanged when nothing was missing.
pub fn embed_state(state: &GraphState, embedder: &dyn DecoderClient) -> Result<GraphState> {
    let dims = *state.dims();
    let mut edit = state.edit();
    let mut changed = false;
    for node in state.nodes() {
        for m in node.modalities().collect::<Vec<_>>() {
            if node.embedding(m).is_some() {
                continue;
            }
            let content = modality_content(node, m).expect("modality present");
            let v = embed_checked(embedder, m, &content, dims.dim(m))?;
            edit.set_embedding(node.id().as_str(), m, v)?;
            changed = true;
        }
    }
    Ok(if changed { edit.commit() } else { state.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::GwmError;
    use crate::graph::{GraphOptions, TablePayload};
    use crate::mock::{mock_embedding, MockDecoder};

    fn small_dims() -> ModalityDims {
        ModalityDims { image: 4, text: 6, table: 5 }
    }

    fn state() -> GraphState {
        let s = GraphState::new(GraphOptions { dims: small_dims(), ..Default::default() });
        let mut e = s.edit();
        e.add_node(MultiModalNode::text_node("t", "hello")).unwrap();
        e.add_node(
            MultiModalNode::new("all")
                .with_text("caption text")
                .with_image_ref("img/1.png")
                .with_table(TablePayload::new(["a", "b"], ["1", "2"]).unwrap()),
        )
        .unwrap();
        e.commit()
    }

    #[test]
    fn text_only_row_is_zero_filled() {
        let mock = MockDecoder::new(0, small_dims());
        let x = assemble_embeddings::<f64>(&state(), &mock).unwrap();
        let row = x.values.row(0);
        assert!(row.iter().take(4).all(|&v| v == 0.0));
        assert!(row.iter().skip(10).all(|&v| v == 0.0));
        let e_t = mock_embedding(Modality::Text, "hello", 0, 6);
        for k in 0..6 {
            assert_eq!(row[4 + k], e_t[k] as f64);
        }
    }

    #[test]
    fn full_row_is_concatenation() {
        let mock = MockDecoder::new(0, small_dims());
        let x = assemble_embeddings::<f64>(&state(), &mock).unwrap();
        let mut expected = mock_embedding(Modality::Image, "img/1.png", 0, 4);
        expected.extend(mock_embedding(Modality::Text, "caption text", 0, 6));
        expected.extend(mock_embedding(Modality::Table, "a is 1, b is 2", 0, 5));
        let got: Vec<f32> = x.values.row(1).iter().map(|&v| v as f32).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn wrong_dimension_is_reported() {
        let mock = MockDecoder::new(0, ModalityDims { image: 4, text: 7, table: 5 });
        assert_eq!(
            assemble_embeddings::<f64>(&state(), &mock).unwrap_err(),
            GwmError::DimensionMismatch { modality: Modality::Text, expected: 6, got: 7 }
        );
    }

    #[test]
    fn embed_state_caches_slots() {
        let mock = MockDecoder::new(0, small_dims());
        let s = embed_state(&state(), &mock).unwrap();
        assert_eq!(s.version(), state().version() + 1);
        assert!(s.node("all").unwrap().embedding(Modality::Table).is_some());
        let again = embed_state(&s, &mock).unwrap();
        assert_eq!(again.version(), s.version());
        let direct = assemble_embeddings::<f64>(&state(), &mock).unwrap();
        let cached = assemble_embeddings::<f64>(&s, &mock).unwrap();
        assert_eq!(direct.values, cached.values);
    }
}
