//! Real-clock pacing at 1 kHz and the loop jitter benchmark.

use std::hint::spin_loop;
use std::thread;
use std::time::{Duration, Instant};

use crate::skill::{presets, SkillSpec};

use super::runloop::ControlLoop;

pub const PERIOD: Duration = Duration::from_millis(1);
/// The final stretch before a deadline is busy-waited.
const SPIN: Duration = Duration::from_micros(150);

/// Sleeps until absolute 1 ms deadlines. A tick that overruns by more than a
/// full period drops the slots it missed instead of bursting to catch up.
#[derive(Debug)]
pub struct Pacer {
    next: Instant,
    missed: u64,
}

impl Default for Pacer {
    fn default() -> Self {
        Self::new()
    }
}

impl Pacer {
    pub fn new() -> Self {
        Pacer {
            next: Instant::now(),
            missed: 0,
        }
    }

    /// Blocks until the next tick is due and returns its deadline.
    pub fn wait(&mut self) -> Instant {
        let now = Instant::now();
        if now < self.next {
            let left = self.next - now;
            if left > SPIN {
                thread::sleep(left - SPIN);
            }
            while Instant::now() < self.next {
                spin_loop();
            }
        }
        let due = self.next;
        self.next += PERIOD;
        let now = Instant::now();
        if now > self.next + PERIOD {
            let behind = (now - self.next).as_nanos() / PERIOD.as_nanos();
            self.next += PERIOD * behind as u32;
        }
        due
    }

    /// Call after the tick's work: counts it as missed if it ran past the
    /// deadline of the following slot.
    pub fn finish(&mut self) -> bool {
        let late = Instant::now() > self.next;
        if late {
            self.missed += 1;
        }
        late
    }

    pub fn missed(&self) -> u64 {
        self.missed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub ticks: u64,
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
    pub missed: u64,
}

impl BenchReport {
    /// Statistics over tick-to-tick periods in microseconds.
    pub fn from_periods(periods_us: &[f64], missed: u64) -> Self {
        let mut sorted = periods_us.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let pick = |q: f64| {
            if n == 0 {
                0.0
            } else {
                sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1]
            }
        };
        BenchReport {
            ticks: n as u64 + u64::from(n > 0),
            mean_us: if n == 0 {
                0.0
            } else {
                sorted.iter().sum::<f64>() / n as f64
            },
            median_us: pick(0.5),
            p99_us: pick(0.99),
            max_us: sorted.last().copied().unwrap_or(0.0),
            missed,
        }
    }

    pub fn missed_fraction(&self) -> f64 {
        if self.ticks == 0 {
            0.0
        } else {
            self.missed as f64 / self.ticks as f64
        }
    }

    /// Single machine-readable summary line.
    pub fn line(&self) -> String {
        format!(
            "BENCH mean_us={:.2} median_us={:.2} p99_us={:.2} max_us={:.2} missed={} ticks={}",
            self.mean_us, self.median_us, self.p99_us, self.max_us, self.missed, self.ticks
        )
    }
}

/// Runs the loop against the real clock for `duration` while a Hold skill is
/// active and reports the tick period statistics.
pub fn bench_loop(lp: &mut ControlLoop, duration: Duration) -> BenchReport {
    bench_loop_with(lp, duration, presets::hold(duration.as_secs_f64() + 1.0))
}

/// Like [`bench_loop`] with `load` as the running skill.
pub fn bench_loop_with(lp: &mut ControlLoop, duration: Duration, load: SkillSpec) -> BenchReport {
    let seconds = duration.as_secs_f64();
    // Submission only fails when the robot is busy; the bench then measures
    // whatever is already running.
    let _ = lp.mailbox().submit_skill(load);
    let ticks = (seconds * 1000.0).round() as usize;
    let mut periods = Vec::with_capacity(ticks);
    let mut pacer = Pacer::new();
    let mut last: Option<Instant> = None;
    for _ in 0..ticks {
        pacer.wait();
        let start = Instant::now();
        if let Some(prev) = last {
            periods.push((start - prev).as_secs_f64() * 1e6);
        }
        last = Some(start);
        lp.tick();
        pacer.finish();
    }
    BenchReport::from_periods(&periods, pacer.missed())
}
