use std::net::SocketAddr;
use std::thread::JoinHandle;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use gwm_core::clients::{
    CompleteRequest, CompleteResponse, EmbedRequest, EmbedResponse, GenerateImageRequest, GenerateImageResponse,
};
use gwm_core::mock::{mock_completion, mock_embedding, mock_image_ref, MockDecoder};
use gwm_core::{GwmError, Result};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::{COMPLETE_PATH, EMBED_PATH, GENERATE_IMAGE_PATH};

async fn complete(Json(req): Json<CompleteRequest>) -> Json<CompleteResponse> {
    Json(CompleteResponse { text: mock_completion(&req.prompt) })
}

async fn generate_image(Json(req): Json<GenerateImageRequest>) -> Json<GenerateImageResponse> {
    Json(GenerateImageResponse { image_ref: mock_image_ref(&req.prompt, req.condition_tokens.as_deref()) })
}

async fn embed(State(mock): State<MockDecoder>, Json(req): Json<EmbedRequest>) -> Json<EmbedResponse> {
    Json(EmbedResponse { vector: mock_embedding(req.modality, &req.content, mock.seed, mock.dims.dim(req.modality)) })
}

/// Routes of the mock service; responses match [`MockDecoder`] exactly.
pub fn router(mock: MockDecoder) -> Router {
    Router::new()
        .route(COMPLETE_PATH, post(complete))
        .route(GENERATE_IMAGE_PATH, post(generate_image))
        .route(EMBED_PATH, post(embed))
        .with_state(mock)
}

/// Serves the mock on an already bound listener until the future is dropped.
pub async fn serve(listener: TcpListener, mock: MockDecoder) -> std::io::Result<()> {
    axum::serve(listener, router(mock)).await
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| GwmError::Io(e.to_string()))
}

/// Binds `addr`, reports the bound address through `on_bound`, then serves forever.
pub fn serve_blocking(addr: &str, mock: MockDecoder, on_bound: impl FnOnce(SocketAddr)) -> Result<()> {
    runtime()?.block_on(async {
        let listener = TcpListener::bind(addr).await?;
        on_bound(listener.local_addr()?);
        serve(listener, mock).await
    })?;
    Ok(())
}

/// A mock service on a background thread, stopped on drop.
#[derive(Debug)]
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Starts serving on an ephemeral local port.
    pub fn spawn(mock: MockDecoder) -> Result<Self> {
        Self::spawn_router(router(mock))
    }

    /// Starts serving arbitrary routes; useful for scripted misbehaving services.
    pub fn spawn_router(app: Router) -> Result<Self> {
        let rt = runtime()?;
        let listener = rt.block_on(TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
