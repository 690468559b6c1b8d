use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Task;
use crate::error::{Error, Result};

/// A uniformly random permutation of `0..n` with no fixed points, drawn by
/// rejection. `n < 2` has none.
pub fn derangement(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::invalid(format!("no derangement of {n} element(s)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// Copy of `task` where sample `i` carries the image of sample `π(i)` for a
/// seeded derangement `π`; sources and targets are untouched.
pub fn shuffle_images(task: &Task, seed: u64) -> Result<Task> {
    if !task.spec.modality.uses_image() {
        return Err(Error::Modality(format!(
            "{} task has no images to shuffle",
            task.spec.modality
        )));
    }
    let perm = derangement(task.samples.len(), seed)?;
    let mut out = task.clone();
    for (i, &p) in perm.iter().enumerate() {
        out.samples[i].image = task.samples[p].image.clone();
    }
    Ok(out)
}
