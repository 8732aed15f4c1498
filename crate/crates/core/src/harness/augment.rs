//! Label-preserving augmentation for point datasets.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::data::{blob_centers, DatasetKind};
use super::Split;

/// Negates the offsets selected by `flip`. Applying the same flips twice
/// restores the input exactly.
pub fn flip_offsets(offsets: &mut [f64], flip: &[bool]) {
    for (d, &f) in offsets.iter_mut().zip(flip) {
        if f {
            *d = -*d;
        }
    }
}

/// Reflects row `x` through `center` along the axes where `flip` is set.
pub fn reflect(x: &mut [f64], center: &[f64], flip: &[bool]) {
    let mut offsets: Vec<f64> = x.iter().zip(center).map(|(v, c)| v - c).collect();
    flip_offsets(&mut offsets, flip);
    for ((v, c), d) in x.iter_mut().zip(center).zip(offsets) {
        *v = c + d;
    }
}

/// Randomly reflects each blob sample through its generating center (each
/// axis with probability 0.5) and adds Gaussian jitter with standard
/// deviation `noise / 2`. Other dataset kinds are returned unchanged.
pub fn augment<R: Rng + ?Sized>(batch: &Split, kind: &DatasetKind, classes: usize, noise: f64, rng: &mut R) -> Split {
    if *kind != DatasetKind::Blobs || batch.component.len() != batch.len() {
        return batch.clone();
    }
    let centers = blob_centers(classes);
    let jitter = Normal::new(0.0, noise / 2.0).expect("noise validated");
    let mut out = batch.clone();
    let d = out.x.cols();
    for (i, row) in out.x.data_mut().chunks_mut(d).enumerate() {
        let flip: Vec<bool> = (0..d).map(|_| rng.random_bool(0.5)).collect();
        reflect(row, &centers[batch.component[i]], &flip);
        if noise > 0.0 {
            for v in row.iter_mut() {
                *v += jitter.sample(rng);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{make_dataset, DatasetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flips_are_involutions() {
        let mut d = vec![0.3, -1.2, 7.5];
        let flip = [true, false, true];
        flip_offsets(&mut d, &flip);
        assert_eq!(d, vec![-0.3, -1.2, -7.5]);
        flip_offsets(&mut d, &flip);
        assert_eq!(d, vec![0.3, -1.2, 7.5]);

        let mut x = vec![0.3, -1.2];
        reflect(&mut x, &[2.0, 0.0], &[true, true]);
        assert!((x[0] - 3.7).abs() < 1e-15 && x[1] == 1.2);
        reflect(&mut x, &[2.0, 0.0], &[true, true]);
        assert!((x[0] - 0.3).abs() < 1e-15 && x[1] == -1.2);
    }

    #[test]
    fn zero_noise_blobs_unchanged() {
        let d = make_dataset(&DatasetSpec {
            noise: 0.0,
            samples: 50,
            ..DatasetSpec::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment(&d.train, &DatasetKind::Blobs, 2, 0.0, &mut rng);
        assert_eq!(out, d.train);
    }

    #[test]
    fn labels_preserved_and_other_kinds_untouched() {
        let spec = DatasetSpec {
            samples: 60,
            noise: 0.8,
            ..DatasetSpec::default()
        };
        let d = make_dataset(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = augment(&d.train, &DatasetKind::Blobs, 2, 0.8, &mut rng);
        assert_eq!(out.y, d.train.y);
        assert_ne!(out.x, d.train.x);
        let moons = make_dataset(&DatasetSpec {
            kind: DatasetKind::Moons,
            ..spec
        })
        .unwrap();
        assert_eq!(
            augment(&moons.train, &DatasetKind::Moons, 2, 0.8, &mut rng),
            moons.train
        );
    }
}
