//! Wall and virtual time for node workers.
//!
//! The virtual clock is a lockstep scheduler: exactly one worker runs at a
//! time, woken in (deadline, seeded rank, worker id) order by a driver.
//! The rank is a stateless hash of the seed, the worker, the deadline, and
//! the worker's own wake count, so removing one worker (say, after a crash)
//! never shifts the schedule of the others.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WorkerStatus {
    Running,
    Sleeping { deadline: u64 },
    Done,
}

#[derive(Debug)]
struct WorkerState {
    status: WorkerStatus,
    interrupted: bool,
    wakes: u64,
    name_hash: u64,
}

#[derive(Debug)]
struct VcState {
    now: u64,
    seed: u64,
    next_id: u64,
    workers: BTreeMap<u64, WorkerState>,
}

#[derive(Debug)]
pub struct VirtualClock {
    state: Mutex<VcState>,
    cv: Condvar,
}

/// Time source shared by a host and its workers.
#[derive(Clone)]
pub enum Clock {
    Wall,
    Virtual(Arc<VirtualClock>),
}

impl std::fmt::Debug for Clock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Clock::Wall => f.write_str("Clock::Wall"),
            Clock::Virtual(_) => f.write_str("Clock::Virtual"),
        }
    }
}

impl Clock {
    pub fn wall() -> Self {
        Clock::Wall
    }

    /// A virtual clock starting at t=0, with seeded tie-breaking.
    pub fn virtual_seeded(seed: u64) -> Self {
        Clock::Virtual(Arc::new(VirtualClock {
            state: Mutex::new(VcState { now: 0, seed, next_id: 1, workers: BTreeMap::new() }),
            cv: Condvar::new(),
        }))
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, Clock::Virtual(_))
    }

    /// Current time in milliseconds (virtual time, or UNIX epoch time).
    pub fn now_ms(&self) -> u64 {
        match self {
            Clock::Wall => wall_now_ms(),
            Clock::Virtual(vc) => vc.state.lock().expect("clock poisoned").now,
        }
    }

    /// Register a worker. Virtual workers start in the running state and
    /// become schedulable only once they park in
    /// [`WorkerClock::sleep_until`]; the driver never grants a slot to a
    /// worker that is not actually parked, so wake order is a pure function
    /// of (deadline, seed, worker).
    pub fn register_worker(&self, name: &str, stop: Arc<AtomicBool>) -> WorkerClock {
        match self {
            Clock::Wall => WorkerClock {
                stop,
                inner: WorkerInner::Wall(Arc::new(WallSleeper {
                    interrupted: Mutex::new(false),
                    cv: Condvar::new(),
                })),
            },
            Clock::Virtual(vc) => {
                let mut state = vc.state.lock().expect("clock poisoned");
                let id = state.next_id;
                state.next_id += 1;
                let mut hasher = DefaultHasher::new();
                name.hash(&mut hasher);
                state.workers.insert(
                    id,
                    WorkerState {
                        status: WorkerStatus::Running,
                        interrupted: false,
                        wakes: 0,
                        name_hash: hasher.finish(),
                    },
                );
                vc.cv.notify_all();
                WorkerClock {
                    stop,
                    inner: WorkerInner::Virtual { clock: vc.clone(), id },
                }
            }
        }
    }

    /// Drive the virtual clock until `t_end`, granting one worker slot at a
    /// time. Returns immediately on a wall clock. The drive ends when every
    /// deadline ≤ `t_end` has run (or all workers are done); the clock then
    /// reads `t_end`.
    pub fn run_until(&self, t_end: u64) {
        let Clock::Virtual(vc) = self else { return };
        let mut state = vc.state.lock().expect("clock poisoned");
        loop {
            while state
                .workers
                .values()
                .any(|w| w.status == WorkerStatus::Running)
            {
                state = vc.cv.wait(state).expect("clock poisoned");
            }

            let seed = state.seed;
            let next = state
                .workers
                .iter()
                .filter_map(|(id, w)| match w.status {
                    WorkerStatus::Sleeping { deadline } if !w.interrupted => {
                        Some((deadline, rank(seed, w.name_hash, deadline, w.wakes), *id))
                    }
                    _ => None,
                })
                .min();

            let Some((deadline, _, id)) = next else { break };
            if deadline > t_end {
                break;
            }
            state.now = state.now.max(deadline);
            let worker = state.workers.get_mut(&id).expect("worker exists");
            worker.status = WorkerStatus::Running;
            worker.wakes += 1;
            vc.cv.notify_all();
        }
        state.now = state.now.max(t_end);
    }
}

/// Stateless per-decision rank; ties on deadline resolve by this, then by
/// worker id.
fn rank(seed: u64, name_hash: u64, deadline: u64, wakes: u64) -> u64 {
    let mut x = seed
        ^ name_hash.rotate_left(17)
        ^ deadline.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ wakes.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn wall_now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock before epoch")
        .as_millis() as u64
}

#[derive(Debug)]
struct WallSleeper {
    interrupted: Mutex<bool>,
    cv: Condvar,
}

enum WorkerInner {
    Wall(Arc<WallSleeper>),
    Virtual { clock: Arc<VirtualClock>, id: u64 },
}

/// Per-worker view of the clock, owned by the node thread. Dropping it
/// retires the worker from the schedule.
pub struct WorkerClock {
    stop: Arc<AtomicBool>,
    inner: WorkerInner,
}

impl WorkerClock {
    pub fn now_ms(&self) -> u64 {
        match &self.inner {
            WorkerInner::Wall(_) => wall_now_ms(),
            WorkerInner::Virtual { clock, .. } => {
                clock.state.lock().expect("clock poisoned").now
            }
        }
    }

    pub fn should_run(&self) -> bool {
        !self.stop.load(Ordering::SeqCst)
    }

    /// Sleep until the absolute deadline (ms). Returns `false` when woken
    /// by a stop/interrupt instead of the deadline.
    pub fn sleep_until(&self, deadline: u64) -> bool {
        if !self.should_run() {
            return false;
        }
        match &self.inner {
            WorkerInner::Wall(sleeper) => {
                let mut interrupted = sleeper.interrupted.lock().expect("sleeper poisoned");
                loop {
                    if *interrupted {
                        *interrupted = false;
                        return false;
                    }
                    let now = wall_now_ms();
                    if now >= deadline {
                        return self.should_run();
                    }
                    let (guard, _) = sleeper
                        .cv
                        .wait_timeout(interrupted, Duration::from_millis(deadline - now))
                        .expect("sleeper poisoned");
                    interrupted = guard;
                }
            }
            WorkerInner::Virtual { clock, id } => {
                let mut state = clock.state.lock().expect("clock poisoned");
                {
                    let worker = state.workers.get_mut(id).expect("worker registered");
                    if worker.interrupted {
                        worker.interrupted = false;
                        worker.status = WorkerStatus::Running;
                        clock.cv.notify_all();
                        return false;
                    }
                    worker.status = WorkerStatus::Sleeping { deadline };
                }
                clock.cv.notify_all();
                loop {
                    {
                        let worker = state.workers.get_mut(id).expect("worker registered");
                        if worker.interrupted {
                            worker.interrupted = false;
                            worker.status = WorkerStatus::Running;
                            clock.cv.notify_all();
                            return false;
                        }
                        if worker.status == WorkerStatus::Running {
                            return self.should_run();
                        }
                    }
                    state = clock.cv.wait(state).expect("clock poisoned");
                }
            }
        }
    }
}

impl Drop for WorkerClock {
    fn drop(&mut self) {
        if let WorkerInner::Virtual { clock, id } = &self.inner {
            let mut state = clock.state.lock().expect("clock poisoned");
            if let Some(worker) = state.workers.get_mut(id) {
                worker.status = WorkerStatus::Done;
            }
            clock.cv.notify_all();
        }
    }
}

/// Host-side handle for waking a worker out of a sleep.
#[derive(Clone)]
pub struct WorkerWaker {
    inner: WakerInner,
}

#[derive(Clone)]
enum WakerInner {
    Wall(Arc<WallSleeper>),
    Virtual { clock: Arc<VirtualClock>, id: u64 },
}

impl WorkerWaker {
    pub fn interrupt(&self) {
        match &self.inner {
            WakerInner::Wall(sleeper) => {
                *sleeper.interrupted.lock().expect("sleeper poisoned") = true;
                sleeper.cv.notify_all();
            }
            WakerInner::Virtual { clock, id } => {
                let mut state = clock.state.lock().expect("clock poisoned");
                if let Some(worker) = state.workers.get_mut(id) {
                    if worker.status != WorkerStatus::Done {
                        worker.interrupted = true;
                    }
                }
                clock.cv.notify_all();
            }
        }
    }
}

impl WorkerClock {
    /// Waker paired with this worker.
    pub fn waker(&self) -> WorkerWaker {
        WorkerWaker {
            inner: match &self.inner {
                WorkerInner::Wall(sleeper) => WakerInner::Wall(sleeper.clone()),
                WorkerInner::Virtual { clock, id } => {
                    WakerInner::Virtual { clock: clock.clone(), id: *id }
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn virtual_clock_starts_at_zero_and_drives_to_end() {
        let clock = Clock::virtual_seeded(1);
        assert_eq!(clock.now_ms(), 0);
        clock.run_until(5_000);
        assert_eq!(clock.now_ms(), 5_000);
    }

    #[test]
    fn lockstep_wakes_one_worker_at_a_time_in_deadline_order() {
        let clock = Clock::virtual_seeded(7);
        let log: Arc<Mutex<Vec<(u64, &'static str)>>> = Arc::new(Mutex::new(Vec::new()));

        let mut handles = Vec::new();
        for (name, period) in [("fast", 100u64), ("slow", 300u64)] {
            let worker =
                clock.register_worker(name, Arc::new(AtomicBool::new(false)));
            let log = log.clone();
            handles.push(thread::spawn(move || {
                let mut next = 0;
                while worker.sleep_until(next) {
                    log.lock().unwrap().push((worker.now_ms(), name));
                    next += period;
                    if next > 600 {
                        break;
                    }
                }
            }));
        }

        clock.run_until(600);
        for handle in handles {
            handle.join().unwrap();
        }

        let log = log.lock().unwrap().clone();
        let times: Vec<u64> = log.iter().map(|(t, _)| *t).collect();
        let mut sorted = times.clone();
        sorted.sort_unstable();
        assert_eq!(times, sorted, "wakeups happen in non-decreasing time order");
        assert_eq!(
            log.iter().filter(|(_, n)| *n == "fast").count(),
            7,
            "fast ticks at 0,100,...,600"
        );
        assert_eq!(log.iter().filter(|(_, n)| *n == "slow").count(), 3);
    }

    #[test]
    fn interrupt_wakes_a_sleeping_worker() {
        let clock = Clock::virtual_seeded(1);
        let stop = Arc::new(AtomicBool::new(false));
        let worker = clock.register_worker("w", stop.clone());
        let waker = worker.waker();

        let handle = thread::spawn(move || worker.sleep_until(10_000));
        thread::sleep(Duration::from_millis(20));
        stop.store(true, Ordering::SeqCst);
        waker.interrupt();
        assert!(!handle.join().unwrap(), "interrupted sleep reports stop");
    }

    #[test]
    fn wall_sleep_honors_deadline_and_interrupts() {
        let clock = Clock::wall();
        let stop = Arc::new(AtomicBool::new(false));
        let worker = clock.register_worker("w", stop.clone());

        let start = clock.now_ms();
        assert!(worker.sleep_until(start + 20));
        assert!(clock.now_ms() >= start + 20);

        let waker = worker.waker();
        let handle = thread::spawn(move || worker.sleep_until(wall_now_ms() + 60_000));
        thread::sleep(Duration::from_millis(20));
        waker.interrupt();
        assert!(!handle.join().unwrap());
    }

    #[test]
    fn same_seed_same_tie_breaking() {
        let order_for = |seed: u64| {
            let clock = Clock::virtual_seeded(seed);
            let log: Arc<Mutex<Vec<&'static str>>> = Arc::new(Mutex::new(Vec::new()));
            let mut handles = Vec::new();
            for name in ["a", "b", "c"] {
                let worker = clock.register_worker(name, Arc::new(AtomicBool::new(false)));
                let log = log.clone();
                handles.push(thread::spawn(move || {
                    // Everyone ties at deadline 0, 100, 200.
                    for next in [0u64, 100, 200] {
                        if !worker.sleep_until(next) {
                            return;
                        }
                        log.lock().unwrap().push(name);
                    }
                }));
            }
            clock.run_until(200);
            for handle in handles {
                handle.join().unwrap();
            }
            let result = log.lock().unwrap().clone();
            result
        };

        assert_eq!(order_for(42), order_for(42), "same seed, same order");
    }
}
