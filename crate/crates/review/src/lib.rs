//! Human validation of edited records over HTTP.
//!
//! A [`ReviewSample`] picks which edits annotators see. The [`router`]
//! hands each user the sample in a per-user shuffled order, stores their
//! yes/no/ambiguous labels in an append-only [`LabelStore`] and reports
//! agreement across users.

mod sample;
mod server;
mod store;

pub use sample::{build_sample, ReviewSample};
pub use server::{
    router, user_order, AgreementResponse, LabelRequest, LabelResponse, NextResponse, Progress, ReviewItem,
    ServerOptions,
};
pub use store::{LabelRecord, LabelStore, StoreError};

/// Binds `addr` and serves `app` until the process is stopped.
pub async fn serve(app: axum::Router, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app).await
}
