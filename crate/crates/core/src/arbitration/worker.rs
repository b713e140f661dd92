//! Off-thread arbitration with a single request in flight.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::{Arbiter, ArbitrationDecision, ArbitrationError, ArbitrationRequest};

type Reply = Result<ArbitrationDecision, ArbitrationError>;

struct Job {
    request: ArbitrationRequest,
    truth: Option<bool>,
    reply: SyncSender<Reply>,
}

/// Runs an [`Arbiter`] on its own thread. The tick thread submits through a
/// bounded channel and either waits with a deadline or polls the reply.
pub struct ArbitrationWorker {
    jobs: Option<SyncSender<Job>>,
    busy: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ArbitrationWorker {
    pub fn spawn(arbiter: Arbiter) -> Self {
        let (tx, rx) = mpsc::sync_channel::<Job>(1);
        let busy = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&busy);
        let handle = std::thread::Builder::new()
            .name("arbitration".into())
            .spawn(move || {
                for job in rx {
                    let out = arbiter.arbitrate(&job.request, job.truth);
                    flag.store(false, Ordering::SeqCst);
                    // the submitter may have given up waiting
                    let _ = job.reply.send(out);
                }
            })
            .expect("spawn arbitration thread");
        Self {
            jobs: Some(tx),
            busy,
            handle: Some(handle),
        }
    }

    pub fn is_busy(&self) -> bool {
        self.busy.load(Ordering::SeqCst)
    }

    /// Queues a request; fails when one is already in flight.
    pub fn submit(
        &self,
        request: ArbitrationRequest,
        truth: Option<bool>,
    ) -> Result<Receiver<Reply>, ArbitrationError> {
        if self.busy.swap(true, Ordering::SeqCst) {
            return Err(ArbitrationError::InvalidRequest(
                "an arbitration request is already in flight".into(),
            ));
        }
        let (reply, rx) = mpsc::sync_channel(1);
        let sent = self
            .jobs
            .as_ref()
            .expect("worker is running")
            .send(Job { request, truth, reply });
        if sent.is_err() {
            self.busy.store(false, Ordering::SeqCst);
            return Err(ArbitrationError::VlmUnavailable(
                "arbitration thread has stopped".into(),
            ));
        }
        Ok(rx)
    }

    /// Submits and waits up to `timeout` for the decision.
    pub fn decide(&self, request: ArbitrationRequest, truth: Option<bool>, timeout: Duration) -> Reply {
        let rx = self.submit(request, truth)?;
        match rx.recv_timeout(timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => Err(ArbitrationError::Timeout(timeout.as_millis() as u64)),
            Err(RecvTimeoutError::Disconnected) => Err(ArbitrationError::VlmUnavailable(
                "arbitration thread has stopped".into(),
            )),
        }
    }
}

impl Drop for ArbitrationWorker {
    fn drop(&mut self) {
        self.jobs.take();
        if let Some(h) = self.handle.take() {
            // a request stuck on the network is abandoned rather than joined
            if !self.busy.load(Ordering::SeqCst) {
                let _ = h.join();
            }
        }
    }
}
