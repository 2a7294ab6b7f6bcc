use super::AttackError;
use crate::render::Patch;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bounds on one proposal: a rectangle of at most `max_cells` cells shifted by one
/// RGB offset with every channel in `[-max_delta, max_delta]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationLimits {
    pub max_cells: usize,
    pub max_delta: u8,
}

impl Default for PerturbationLimits {
    fn default() -> Self {
        Self {
            max_cells: 16,
            max_delta: 48,
        }
    }
}

impl PerturbationLimits {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.max_cells == 0 || self.max_delta == 0 {
            return Err(AttackError::Config("perturbation limits must be positive".into()));
        }
        Ok(())
    }
}

pub fn propose_perturbation<R: Rng + ?Sized>(patch: &Patch, rng: &mut R, limits: &PerturbationLimits) -> Patch {
    let n = Patch::SIZE;
    let max_cells = limits.max_cells.min(n * n);
    let w = rng.gen_range(1..=max_cells.min(n));
    let h = rng.gen_range(1..=(max_cells / w).min(n));
    let x0 = rng.gen_range(0..=n - w);
    let y0 = rng.gen_range(0..=n - h);
    let d = limits.max_delta as i16;
    let delta: [i16; 3] = std::array::from_fn(|_| rng.gen_range(-d..=d));
    let mut out = patch.clone();
    for cy in y0..y0 + h {
        for cx in x0..x0 + w {
            let c = patch.get(cx, cy);
            out.set(cx, cy, std::array::from_fn(|i| (c[i] as i16 + delta[i]).clamp(0, 255) as u8));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_bounds(before: &Patch, after: &Patch, limits: &PerturbationLimits) {
        assert!(before.cells_changed(after) <= limits.max_cells);
        for (a, b) in before.cells().iter().zip(after.cells()) {
            for i in 0..3 {
                assert!((a[i] as i16 - b[i] as i16).unsigned_abs() <= limits.max_delta as u16);
            }
        }
    }

    #[test]
    fn single_cell_limits() {
        let limits = PerturbationLimits { max_cells: 1, max_delta: 8 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Patch::random(3);
        for _ in 0..500 {
            let q = propose_perturbation(&p, &mut rng, &limits);
            check_bounds(&p, &q, &limits);
            p = q;
        }
    }

    #[test]
    fn default_limits_respected() {
        let limits = PerturbationLimits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Patch::random(4);
        for _ in 0..500 {
            check_bounds(&p, &propose_perturbation(&p, &mut rng, &limits), &limits);
        }
    }

    #[test]
    fn saturated_channels_clamp() {
        let limits = PerturbationLimits { max_cells: 4, max_delta: 10 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let white = Patch::white();
        let mut clamped = 0;
        for _ in 0..200 {
            let q = propose_perturbation(&white, &mut rng, &limits);
            for c in q.cells().iter().filter(|c| *c != &[255, 255, 255]) {
                assert!(c.iter().all(|&v| v >= 245));
                clamped += c.iter().filter(|&&v| v == 255).count();
            }
        }
        // positive offsets on a saturated channel leave it at 255
        assert!(clamped > 0);
    }

    #[test]
    fn deterministic_given_seed() {
        let limits = PerturbationLimits::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = Patch::black();
            let mut seq = Vec::new();
            for _ in 0..50 {
                p = propose_perturbation(&p, &mut rng, &limits);
                seq.push(p.clone());
            }
            seq
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }
}
