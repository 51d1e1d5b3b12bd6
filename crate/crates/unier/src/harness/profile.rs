//! Wall-clock and peak-memory measurement.
//!
//! Memory is sampled by a monitor thread reading the process resident set
//! at 50 Hz while the subject runs; the reported peak is the maximum sample
//! minus the baseline taken just before the run (floored at zero). Sampling
//! is implementation-technique-agnostic but can miss allocations shorter
//! than the sampling interval. If the resident set cannot be read the
//! memory field degrades to `None`.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

const SAMPLE_INTERVAL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CostSample {
    pub wall_seconds: f64,
    /// Peak resident growth in bytes; `None` when the monitor failed.
    pub peak_memory_bytes: Option<u64>,
}

/// Current resident set size in bytes, from /proc/self/status (VmRSS).
fn resident_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

/// Runs the thunk, measuring wall time and peak resident growth.
pub fn profile<T>(f: impl FnOnce() -> T) -> (T, CostSample) {
    let baseline = resident_bytes();
    let stop = Arc::new(AtomicBool::new(false));
    let monitor = baseline.map(|base| {
        let stop = Arc::clone(&stop);
        std::thread::spawn(move || {
            let mut peak = base;
            loop {
                if let Some(rss) = resident_bytes() {
                    peak = peak.max(rss);
                }
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                std::thread::sleep(SAMPLE_INTERVAL);
            }
            peak
        })
    });
    let start = Instant::now();
    let out = f();
    let wall_seconds = start.elapsed().as_secs_f64();
    stop.store(true, Ordering::Relaxed);
    let peak_memory_bytes = match (baseline, monitor) {
        (Some(base), Some(handle)) => {
            handle.join().ok().map(|peak| peak.saturating_sub(base))
        }
        _ => None,
    };
    (out, CostSample { wall_seconds, peak_memory_bytes })
}
