use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{TaskSet, UnrolledExample};

/// Progress counters of a [`Scheduler`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SchedulerState {
    /// Composite batches drawn so far.
    pub step: usize,
    /// Completed passes over the reference task's unrolled examples.
    pub epoch: usize,
}

struct Pool {
    examples: Vec<UnrolledExample>,
    order: Vec<usize>,
    cursor: usize,
    passes: usize,
    rng: ChaCha8Rng,
}

impl Pool {
    fn new(examples: Vec<UnrolledExample>, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);
        Self {
            examples,
            order,
            cursor: 0,
            passes: 0,
            rng,
        }
    }

    fn draw(&mut self) -> UnrolledExample {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.passes += 1;
        }
        let ex = self.examples[self.order[self.cursor]];
        self.cursor += 1;
        ex
    }

    fn completed_passes(&self) -> usize {
        self.passes + usize::from(self.cursor == self.order.len())
    }
}

/// Draws composite batches holding one unrolled example from every task.
///
/// Each task walks its own unrolled pool in an order reshuffled at every
/// pass from a per-task random stream, so the sequence of batches depends
/// only on the seed. Smaller tasks simply wrap around sooner.
pub struct Scheduler {
    pools: Vec<Pool>,
    reference: usize,
    step: usize,
}

impl Scheduler {
    pub fn new(tasks: &TaskSet, seed: u64) -> Self {
        let pools = tasks
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| Pool::new(t.unrolled(i), seed, i as u64))
            .collect();
        Self {
            pools,
            reference: tasks.reference_index(),
            step: 0,
        }
    }

    pub fn next_batch(&mut self) -> Vec<UnrolledExample> {
        self.step += 1;
        self.pools.iter_mut().map(Pool::draw).collect()
    }

    /// Discards `steps` batches, e.g. to line up with a resumed run.
    pub fn skip(&mut self, steps: usize) {
        for _ in 0..steps {
            self.next_batch();
        }
    }

    pub fn state(&self) -> SchedulerState {
        SchedulerState {
            step: self.step,
            epoch: self.pools[self.reference].completed_passes(),
        }
    }

    /// Unrolled examples in the reference task, i.e. steps per epoch.
    pub fn steps_per_epoch(&self) -> usize {
        self.pools[self.reference].examples.len()
    }
}
