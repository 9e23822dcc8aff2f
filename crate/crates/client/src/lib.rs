//! Blocking client for the experiment service, plus an in-process server
//! for when no remote one is configured.

use std::net::{Ipv4Addr, SocketAddr};
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::oneshot;

use fpp_core::cli::records::ExperimentRecord;
use fpp_core::cli::runner::RunOutcome;
use fpp_core::lattice::Site;
use fpp_core::passage::{CertifyOptions, PassageTime};
use fpp_core::weights::{Distribution, PcValue};
use fpp_server::{
    ErrorBody, MomentsRequest, MomentsResponse, PassageRequest, PlotRequest, PlotResponse, RunRequest,
    ValidateRequest, ValidateResponse,
};

pub const SERVER_ENV: &str = "FPP_SERVER";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server said {status}: {message}")]
    Api { status: u16, message: String },
    #[error("local server: {0}")]
    Local(String),
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(base: &str) -> Result<Self, ClientError> {
        // Experiments can run for many minutes.
        let http = reqwest::blocking::Client::builder().timeout(None).build()?;
        Ok(Client {
            base: base.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn decode<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json()?);
        }
        let text = resp.text().unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|e| e.error).unwrap_or(text);
        Err(ClientError::Api {
            status: status.as_u16(),
            message,
        })
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send()?;
        Self::decode(resp)
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send()?)
    }

    pub fn health(&self) -> Result<bool, ClientError> {
        let resp = self.http.get(format!("{}/healthz", self.base)).send()?;
        Ok(resp.status().is_success())
    }

    pub fn run(&self, config: &str, force: bool, workers: Option<usize>) -> Result<RunOutcome, ClientError> {
        self.post(
            "/v1/run",
            &RunRequest {
                config: config.to_string(),
                force,
                workers,
            },
        )
    }

    pub fn validate(&self, config: &str, force: bool) -> Result<ValidateResponse, ClientError> {
        self.post(
            "/v1/validate",
            &ValidateRequest {
                config: config.to_string(),
                force,
            },
        )
    }

    pub fn plot(&self, records: Vec<ExperimentRecord>, kind: &str) -> Result<String, ClientError> {
        let r: PlotResponse = self.post(
            "/v1/plot",
            &PlotRequest {
                records,
                kind: kind.to_string(),
            },
        )?;
        Ok(r.tsv)
    }

    pub fn passage_time(
        &self,
        distribution: Distribution,
        seed: u64,
        from: Site,
        to: Site,
        certify: Option<CertifyOptions>,
    ) -> Result<PassageTime, ClientError> {
        self.post(
            "/v1/passage-time",
            &PassageRequest {
                distribution,
                seed,
                from,
                to,
                certify,
            },
        )
    }

    pub fn pc(&self, d: usize) -> Result<PcValue, ClientError> {
        self.get(&format!("/v1/pc/{d}"))
    }

    pub fn moments(&self, distribution: Distribution, d: usize, pc: Option<f64>) -> Result<MomentsResponse, ClientError> {
        self.post("/v1/moments", &MomentsRequest { distribution, d, pc })
    }
}

/// A server on 127.0.0.1 with an OS-assigned port, stopped on drop.
pub struct LocalServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl LocalServer {
    pub fn start() -> Result<Self, ClientError> {
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
                Ok(rt) => rt,
                Err(e) => {
                    let _ = ready_tx.send(Err(e.to_string()));
                    return;
                }
            };
            rt.block_on(async move {
                match fpp_server::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, 0))).await {
                    Ok((listener, addr)) => {
                        let _ = ready_tx.send(Ok(addr));
                        let _ = fpp_server::serve(listener, async {
                            let _ = stop_rx.await;
                        })
                        .await;
                    }
                    Err(e) => {
                        let _ = ready_tx.send(Err(e.to_string()));
                    }
                }
            });
        });
        let addr = ready_rx
            .recv()
            .map_err(|e| ClientError::Local(e.to_string()))?
            .map_err(ClientError::Local)?;
        Ok(LocalServer {
            addr,
            stop: Some(stop_tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for LocalServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
