//! Topology execution: worker threads, tuple transport, and the two
//! end-of-document protocols.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender, SendTimeoutError};

use super::barrier::{AckOutcome, EodBarrier};
use super::route::{Routed, Router};
use super::{
    BarrierMode, EmitError, Emitter, Message, Payload, RunConfig, RunReport,
    RuntimeError, SpoutItem, TaskContext, TaskReport, Topology, Tuple,
};
use crate::ingest::DocumentId;

const POLL: Duration = Duration::from_millis(20);

/// Source task index reported for tuples emitted by the spout.
pub const SPOUT_TASK: usize = usize::MAX;

struct OutEdge<P> {
    router: Router<P>,
    senders: Vec<Sender<Message<P>>>,
}

/// All outgoing edges of one producer (the spout or one bolt task).
struct Outbox<P> {
    edges: Vec<OutEdge<P>>,
    source_task: usize,
    cancel: Arc<AtomicBool>,
}

impl<P: Payload> Outbox<P> {
    fn send(&self, sender: &Sender<Message<P>>, mut msg: Message<P>) -> Result<(), EmitError> {
        loop {
            match sender.send_timeout(msg, POLL) {
                Ok(()) => return Ok(()),
                Err(SendTimeoutError::Timeout(m)) => {
                    msg = m;
                    if self.cancel.load(Ordering::Relaxed) {
                        return Err(EmitError);
                    }
                }
                // A vanished consumer means the run is being torn down.
                Err(SendTimeoutError::Disconnected(_)) => return Err(EmitError),
            }
        }
    }

    fn broadcast_eod(&mut self, doc: DocumentId) -> Result<(), EmitError> {
        for edge in &self.edges {
            for sender in &edge.senders {
                self.send(sender, Message::Eod(doc))?;
            }
        }
        Ok(())
    }
}

impl<P: Payload> Emitter<P> for Outbox<P> {
    fn emit(&mut self, payload: P) -> Result<(), EmitError> {
        for i in 0..self.edges.len() {
            let routed = self.edges[i].router.route(&payload);
            match routed {
                Routed::One(target) => {
                    let msg = Message::Data(Tuple {
                        payload: payload.clone(),
                        source_task: self.source_task,
                    });
                    self.send(&self.edges[i].senders[target], msg)?;
                }
                Routed::Broadcast => {
                    for target in 0..self.edges[i].senders.len() {
                        let msg = Message::Data(Tuple {
                            payload: payload.clone(),
                            source_task: self.source_task,
                        });
                        self.send(&self.edges[i].senders[target], msg)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct TaskStats {
    processed: u64,
    documents_completed: u64,
    interleaving_violations: u64,
    max_doc_seen: Option<u64>,
}

struct Worker<P: Payload> {
    bolt_name: String,
    task: usize,
    uid: usize,
    bolt: Box<dyn super::Bolt<P>>,
    rx: Receiver<Message<P>>,
    outbox: Outbox<P>,
    expected_eods: usize,
    ack_tx: Sender<(usize, DocumentId)>,
    cancel: Arc<AtomicBool>,
    failure: Arc<Mutex<Option<RuntimeError>>>,
}

impl<P: Payload> Worker<P> {
    fn run(mut self) -> TaskStats {
        let mut stats = TaskStats::default();
        let mut eods_seen: BTreeMap<DocumentId, usize> = BTreeMap::new();
        loop {
            let msg = match self.rx.recv_timeout(POLL) {
                Ok(msg) => msg,
                Err(RecvTimeoutError::Timeout) => {
                    if self.cancel.load(Ordering::Relaxed) {
                        return stats;
                    }
                    continue;
                }
                // Every upstream producer hung up: the stream is complete.
                Err(RecvTimeoutError::Disconnected) => return stats,
            };
            match msg {
                Message::Data(tuple) => {
                    let doc = tuple.payload.doc();
                    match stats.max_doc_seen {
                        Some(max) if doc.0 < max => stats.interleaving_violations += 1,
                        Some(max) => stats.max_doc_seen = Some(max.max(doc.0)),
                        None => stats.max_doc_seen = Some(doc.0),
                    }
                    stats.processed += 1;
                    if let Err(e) = self.bolt.process(&tuple.payload, &mut self.outbox) {
                        self.fail(doc, e);
                        return stats;
                    }
                }
                Message::Eod(doc) => {
                    let seen = eods_seen.entry(doc).or_insert(0);
                    *seen += 1;
                    if *seen < self.expected_eods {
                        continue;
                    }
                    eods_seen.remove(&doc);
                    if let Err(e) = self.bolt.on_document_end(doc, &mut self.outbox) {
                        self.fail(doc, e);
                        return stats;
                    }
                    if self.outbox.broadcast_eod(doc).is_err() && !self.cancelled() {
                        self.fail(doc, Box::from("document marker delivery failed"));
                        return stats;
                    }
                    stats.documents_completed += 1;
                    let _ = self.ack_tx.send((self.uid, doc));
                }
            }
        }
    }

    fn cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }

    fn fail(&self, doc: DocumentId, error: super::DynError) {
        // An emit failure during teardown is a consequence, not a cause.
        if self.cancelled() {
            return;
        }
        let mut slot = self.failure.lock().unwrap();
        if slot.is_none() {
            *slot = Some(RuntimeError::BoltFailed {
                bolt: self.bolt_name.clone(),
                task: self.task,
                doc,
                message: error.to_string(),
            });
        }
        self.cancel.store(true, Ordering::Relaxed);
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Execute a topology to completion under the given configuration.
///
/// In [`BarrierMode::DirectBarrier`] every tuple of document d is fully
/// processed by every bolt before any tuple of document d+1 is delivered. In
/// [`BarrierMode::Sleep`] the spout merely pauses after each document.
pub fn run<P: Payload>(topology: Topology<P>, config: RunConfig) -> Result<RunReport, RuntimeError> {
    let started = Instant::now();
    let seed_base = config.seed.unwrap_or_else(rand::random);
    let queue_bound = config.queue_bound.max(1);
    let cancel = Arc::new(AtomicBool::new(false));
    let failure: Arc<Mutex<Option<RuntimeError>>> = Arc::new(Mutex::new(None));

    let Topology {
        mut spout,
        bolts,
        edges,
    } = topology;

    let bolt_index: std::collections::HashMap<&str, usize> = bolts
        .iter()
        .enumerate()
        .map(|(i, b)| (b.name.as_str(), i))
        .collect();

    // One bounded queue per task.
    let mut senders: Vec<Vec<Sender<Message<P>>>> = Vec::with_capacity(bolts.len());
    let mut receivers: Vec<Vec<Receiver<Message<P>>>> = Vec::with_capacity(bolts.len());
    for bolt in &bolts {
        let mut task_senders = Vec::with_capacity(bolt.task_count);
        let mut task_receivers = Vec::with_capacity(bolt.task_count);
        for _ in 0..bolt.task_count {
            let (tx, rx) = bounded(queue_bound);
            task_senders.push(tx);
            task_receivers.push(rx);
        }
        senders.push(task_senders);
        receivers.push(task_receivers);
    }

    // How many producers feed each bolt: the spout counts as one, a bolt as
    // one per task. A task fires its end-of-document hook only after seeing
    // that many markers.
    let mut expected_eods = vec![0usize; bolts.len()];
    for edge in &edges {
        let producers = if edge.from == super::SPOUT {
            1
        } else {
            bolts[bolt_index[edge.from.as_str()]].task_count
        };
        expected_eods[bolt_index[edge.to.as_str()]] += producers;
    }

    let uid_offset: Vec<usize> = bolts
        .iter()
        .scan(0, |acc, b| {
            let offset = *acc;
            *acc += b.task_count;
            Some(offset)
        })
        .collect();
    let total_tasks: usize = bolts.iter().map(|b| b.task_count).sum();

    let build_outbox = |from: &str, source_task: usize, producer_uid: usize| -> Outbox<P> {
        let mut out_edges = Vec::new();
        for (edge_idx, edge) in edges.iter().enumerate() {
            if edge.from != from {
                continue;
            }
            let dest = bolt_index[edge.to.as_str()];
            let hash_seed = splitmix64(seed_base ^ (edge_idx as u64).wrapping_mul(0x51ED));
            let state_seed = splitmix64(hash_seed ^ (producer_uid as u64 + 1));
            out_edges.push(OutEdge {
                router: Router::new(
                    edge.grouping.clone(),
                    bolts[dest].task_count,
                    hash_seed,
                    state_seed,
                ),
                senders: senders[dest].clone(),
            });
        }
        Outbox {
            edges: out_edges,
            source_task,
            cancel: Arc::clone(&cancel),
        }
    };

    let (ack_tx, ack_rx) = unbounded();

    let mut handles = Vec::with_capacity(total_tasks);
    for (b, bolt) in bolts.iter().enumerate() {
        for (task, task_rx) in receivers[b].iter().enumerate() {
            let ctx = TaskContext {
                bolt: bolt.name.clone(),
                task,
                task_count: bolt.task_count,
            };
            let worker = Worker {
                bolt_name: bolt.name.clone(),
                task,
                uid: uid_offset[b] + task,
                bolt: (bolt.factory)(&ctx),
                rx: task_rx.clone(),
                outbox: build_outbox(&bolt.name, task, uid_offset[b] + task),
                expected_eods: expected_eods[b],
                ack_tx: ack_tx.clone(),
                cancel: Arc::clone(&cancel),
                failure: Arc::clone(&failure),
            };
            let handle = thread::Builder::new()
                .name(format!("{}-{}", bolt.name, task))
                .spawn(move || worker.run())
                .expect("spawn worker thread");
            handles.push((bolt.name.clone(), task, handle));
        }
    }
    drop(ack_tx);
    // Receivers were cloned into workers; drop the originals so queues close
    // once every upstream sender is gone.
    drop(receivers);

    let mut spout_outbox = build_outbox(super::SPOUT, SPOUT_TASK, total_tasks);
    // The outboxes above hold the only sender clones we need.
    drop(senders);

    let mut barrier = EodBarrier::new(total_tasks);
    let mut documents = 0u64;
    let mut spout_tuples = 0u64;
    let mut per_document_tuples: BTreeMap<u64, u64> = BTreeMap::new();

    let spout_result: Result<(), RuntimeError> = loop {
        if cancel.load(Ordering::Relaxed) {
            break Err(RuntimeError::WorkersLost);
        }
        match spout.next() {
            Ok(SpoutItem::Finished) => break Ok(()),
            Ok(SpoutItem::Emit(payload)) => {
                let doc = payload.doc();
                if spout_outbox.emit(payload).is_err() {
                    break Err(RuntimeError::WorkersLost);
                }
                spout_tuples += 1;
                *per_document_tuples.entry(doc.0).or_insert(0) += 1;
            }
            Ok(SpoutItem::DocumentEnd(doc)) => {
                if total_tasks > 0 {
                    if config.barrier == BarrierMode::DirectBarrier {
                        barrier.open(doc);
                    }
                    if spout_outbox.broadcast_eod(doc).is_err() {
                        break Err(RuntimeError::WorkersLost);
                    }
                }
                documents += 1;
                match config.barrier {
                    BarrierMode::DirectBarrier => {
                        if total_tasks > 0 {
                            if let Err(e) = wait_for_acks(&mut barrier, &ack_rx, &cancel) {
                                break Err(e);
                            }
                        }
                    }
                    BarrierMode::Sleep(pause) => {
                        if !pause.is_zero() {
                            thread::sleep(pause);
                        }
                    }
                }
            }
            Err(e) => {
                let mut slot = failure.lock().unwrap();
                if slot.is_none() {
                    *slot = Some(RuntimeError::SpoutFailed(e.to_string()));
                }
                drop(slot);
                cancel.store(true, Ordering::Relaxed);
                break Err(RuntimeError::WorkersLost);
            }
        }
    };

    // Closing the spout's senders lets the shutdown cascade through the DAG.
    drop(spout_outbox);

    let mut tasks = Vec::with_capacity(handles.len());
    let mut violations = 0u64;
    for (bolt, task, handle) in handles {
        match handle.join() {
            Ok(stats) => {
                violations += stats.interleaving_violations;
                tasks.push(TaskReport {
                    bolt,
                    task,
                    processed: stats.processed,
                    documents_completed: stats.documents_completed,
                    interleaving_violations: stats.interleaving_violations,
                });
            }
            Err(_) => {
                let mut slot = failure.lock().unwrap();
                if slot.is_none() {
                    *slot = Some(RuntimeError::BoltPanicked { bolt, task });
                }
            }
        }
    }

    // A recorded root cause outranks the generic shutdown error.
    if let Some(root) = failure.lock().unwrap().take() {
        return Err(root);
    }
    spout_result?;

    Ok(RunReport {
        documents,
        wall_time_secs: started.elapsed().as_secs_f64(),
        spout_tuples,
        per_document_tuples,
        tasks,
        interleaving_violations: violations,
    })
}

fn wait_for_acks(
    barrier: &mut EodBarrier,
    ack_rx: &Receiver<(usize, DocumentId)>,
    cancel: &AtomicBool,
) -> Result<(), RuntimeError> {
    loop {
        match ack_rx.recv_timeout(POLL) {
            Ok((task, doc)) => {
                if barrier.ack(task, doc)? == AckOutcome::Complete {
                    return Ok(());
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                if cancel.load(Ordering::Relaxed) {
                    return Err(RuntimeError::WorkersLost);
                }
            }
            Err(RecvTimeoutError::Disconnected) => return Err(RuntimeError::WorkersLost),
        }
    }
}
