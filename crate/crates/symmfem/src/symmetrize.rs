//! Symmetric-group machinery and the nodal-vector transform.
//!
//! For a function invariant under coordinate permutations, the nodal vector
//! on the grid with mesh sizes `(h_{sigma(1)}, ..., h_{sigma(d)})` is a pure
//! index permutation of the vector on `(h_1, ..., h_d)`:
//! `out[I'(i_{sigma(1)}, ..., i_{sigma(d)})] = in[I(i_1, ..., i_d)]`.
//! No arithmetic touches the values, so the transform is exact.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::NodalVector;

/// Element of `Sym(d)` acting on direction labels `1..=d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    // map[k] = sigma(k+1) - 1, zero-based
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(d: usize) -> Self {
        Permutation {
            map: (0..d).collect(),
        }
    }

    /// The transposition `(i, j)` in `Sym(d)`; directions are one-based.
    pub fn transposition(i: usize, j: usize, d: usize) -> Result<Self> {
        for dir in [i, j] {
            if dir < 1 || dir > d {
                return Err(Error::DirectionOutOfRange { direction: dir, dim: d });
            }
        }
        let mut map: Vec<usize> = (0..d).collect();
        map.swap(i - 1, j - 1);
        Ok(Permutation { map })
    }

    /// Builds a permutation from its one-based image array, validating that
    /// each of `1..=d` appears exactly once.
    pub fn from_image(image: &[usize]) -> Result<Self> {
        let d = image.len();
        let mut seen = vec![false; d];
        for &v in image {
            if v < 1 || v > d || seen[v - 1] {
                return Err(Error::InvalidPermutation {
                    image: image.to_vec(),
                    dim: d,
                });
            }
            seen[v - 1] = true;
        }
        Ok(Permutation {
            map: image.iter().map(|&v| v - 1).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.map.len()
    }

    /// `sigma(k)` with one-based `k`.
    pub fn apply(&self, k: usize) -> usize {
        self.map[k - 1] + 1
    }

    /// `sigma(k)` with zero-based `k`.
    pub(crate) fn apply0(&self, k: usize) -> usize {
        self.map[k]
    }

    /// One-based image array `[sigma(1), ..., sigma(d)]`.
    pub fn image(&self) -> Vec<usize> {
        self.map.iter().map(|&v| v + 1).collect()
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0usize; self.map.len()];
        for (k, &v) in self.map.iter().enumerate() {
            inv[v] = k;
        }
        Permutation { map: inv }
    }

    /// Composition `(self o other)(k) = self(other(k))`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(Permutation {
            map: other.map.iter().map(|&v| self.map[v]).collect(),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(k, &v)| k == v)
    }
}

/// Bookkeeping for one transform application.
#[derive(Debug, Clone)]
pub struct TransformStats {
    pub elements_moved: usize,
    pub wall_time: Duration,
}

impl TransformStats {
    pub fn seconds(&self) -> f64 {
        self.wall_time.as_secs_f64()
    }
}

const PAR_THRESHOLD: usize = 1 << 15;
const CHUNK: usize = 1 << 13;

/// Applies the symmetrization transform: the result lives on
/// [`permuted`](crate::grid::GridSpec::permuted) grid of `u`, and for every
/// multi-index `i` the output at `I'(i_{sigma(1)}, ..., i_{sigma(d)})` is the
/// input at `I(i_1, ..., i_d)`. Pure copy, no arithmetic on values.
pub fn transform(u: &NodalVector, sigma: &Permutation) -> Result<(NodalVector, TransformStats)> {
    let spec = u.spec();
    if sigma.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            left: sigma.dim(),
            right: spec.dim(),
        });
    }
    let out_spec = spec.permuted(sigma)?;
    let start = Instant::now();

    let n = spec.n_dof();
    let d = spec.dim();
    let in_strides = spec.strides();
    let out_counts = out_spec.node_counts();
    // Output digit k corresponds to input direction sigma(k): walking output
    // offsets lexicographically, the matching input offset advances by the
    // input stride of direction sigma(k) when digit k increments.
    let perm_strides: Vec<usize> = (0..d).map(|k| in_strides[sigma.apply0(k)]).collect();

    let input = u.values();
    let mut out_values = vec![0.0f64; n];

    let fill_chunk = |chunk_start: usize, out_chunk: &mut [f64]| {
        // decode the starting output offset into digits
        let mut digits = vec![0usize; d];
        let mut rem = chunk_start;
        for k in 0..d {
            digits[k] = rem % out_counts[k];
            rem /= out_counts[k];
        }
        let mut in_off: usize = digits.iter().zip(&perm_strides).map(|(&g, &s)| g * s).sum();
        for slot in out_chunk.iter_mut() {
            *slot = input[in_off];
            for k in 0..d {
                digits[k] += 1;
                if digits[k] < out_counts[k] {
                    in_off += perm_strides[k];
                    break;
                }
                digits[k] = 0;
                in_off -= (out_counts[k] - 1) * perm_strides[k];
            }
        }
    };

    if n >= PAR_THRESHOLD {
        out_values
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(ci, chunk)| fill_chunk(ci * CHUNK, chunk));
    } else {
        fill_chunk(0, &mut out_values);
    }

    let stats = TransformStats {
        elements_moved: n,
        wall_time: start.elapsed(),
    };
    Ok((NodalVector::from_values(out_spec, out_values)?, stats))
}

/// Checks whether nodal samples are invariant under every transposition
/// `(1, j)` up to `tol` in the max norm. Requires a cubic box with equal
/// subdivision counts in all directions.
pub fn is_symmetric_sample(u: &NodalVector, tol: f64) -> Result<bool> {
    let spec = u.spec();
    if !spec.is_cubic_box() {
        return Err(Error::AsymmetricDomain {
            reason: "box bounds differ across directions".into(),
        });
    }
    let n0 = spec.subdivisions()[0];
    if spec.subdivisions().iter().any(|&n| n != n0) {
        return Err(Error::AsymmetricDomain {
            reason: "subdivision counts differ across directions".into(),
        });
    }
    for j in 2..=spec.dim() {
        let sigma = Permutation::transposition(1, j, spec.dim())?;
        let (moved, _) = transform(u, &sigma)?;
        if moved.max_abs_diff(u) > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryMode, GridSpec, NodalVector};

    fn counting_vector(spec: &GridSpec) -> NodalVector {
        let n = spec.n_dof();
        NodalVector::from_values(spec.clone(), (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn transposition_images() {
        assert_eq!(Permutation::transposition(1, 2, 3).unwrap().image(), vec![2, 1, 3]);
        assert_eq!(Permutation::transposition(1, 3, 3).unwrap().image(), vec![3, 2, 1]);
        assert!(Permutation::transposition(1, 1, 3).unwrap().is_identity());
        assert!(Permutation::transposition(0, 2, 3).is_err());
        assert!(Permutation::transposition(1, 4, 3).is_err());
    }

    #[test]
    fn compose_follows_right_to_left_convention() {
        let s = Permutation::transposition(1, 2, 3).unwrap();
        let t = Permutation::transposition(2, 3, 3).unwrap();
        assert!(s.compose(&s).unwrap().is_identity());
        assert_eq!(s.compose(&Permutation::identity(3)).unwrap(), s);
        // (1,2) o (2,3): 1 -> 2, 2 -> 3, 3 -> 1
        assert_eq!(s.compose(&t).unwrap().image(), vec![2, 3, 1]);
        let id2 = Permutation::identity(2);
        assert!(s.compose(&id2).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let p = Permutation::from_image(&[3, 1, 4, 2]).unwrap();
        assert!(p.compose(&p.inverse()).unwrap().is_identity());
        assert!(p.inverse().compose(&p).unwrap().is_identity());
        assert!(Permutation::from_image(&[1, 1, 3]).is_err());
        assert!(Permutation::from_image(&[0, 1]).is_err());
    }

    #[test]
    fn transform_matches_2d_figure_captions() {
        // h = (1/2, 1): counts (3,2); swap directions
        let g = GridSpec::unit(vec![2, 1], BoundaryMode::Inclusive).unwrap();
        let u = counting_vector(&g);
        let s = Permutation::transposition(1, 2, 2).unwrap();
        let (out, stats) = transform(&u, &s).unwrap();
        assert_eq!(stats.elements_moved, 6);
        assert_eq!(out.spec().subdivisions(), &[1, 2]);
        // output position 2 = I'(1,0) receives input position 4 = I(0,1)
        assert_eq!(out.values()[2 - 1], 4.0);

        // h = (1/4, 1/2): output 11 receives input 9
        let g = GridSpec::unit(vec![4, 2], BoundaryMode::Inclusive).unwrap();
        let u = counting_vector(&g);
        let (out, _) = transform(&u, &s).unwrap();
        assert_eq!(out.values()[11 - 1], 9.0);
    }

    #[test]
    fn transform_matches_3d_figure_captions() {
        let g = GridSpec::unit(vec![4, 2, 2], BoundaryMode::Inclusive).unwrap();
        let u = counting_vector(&g);

        let s12 = Permutation::transposition(1, 2, 3).unwrap();
        let (out, _) = transform(&u, &s12).unwrap();
        assert_eq!(out.values()[25 - 1], 19.0);

        let s13 = Permutation::transposition(1, 3, 3).unwrap();
        let (out, _) = transform(&u, &s13).unwrap();
        assert_eq!(out.values()[16 - 1], 12.0);
    }

    #[test]
    fn transform_is_involutive_for_transpositions() {
        let g = GridSpec::cube(-1.0, 2.0, vec![5, 3, 4], BoundaryMode::Interior).unwrap();
        let u = counting_vector(&g);
        let s = Permutation::transposition(2, 3, 3).unwrap();
        let (once, _) = transform(&u, &s).unwrap();
        let (twice, _) = transform(&once, &s).unwrap();
        assert_eq!(twice.values(), u.values());
    }

    #[test]
    fn transform_rejects_non_cubic_swaps() {
        let g = GridSpec::new(
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![4, 4],
            BoundaryMode::Inclusive,
        )
        .unwrap();
        let u = counting_vector(&g);
        let s = Permutation::transposition(1, 2, 2).unwrap();
        assert!(matches!(transform(&u, &s), Err(Error::NonCubicBox { .. })));
    }

    #[test]
    fn symmetric_sample_detection() {
        let g = GridSpec::unit(vec![4, 4], BoundaryMode::Inclusive).unwrap();
        let sym = NodalVector::sample(&g, |x| x[0] * x[1]);
        assert!(is_symmetric_sample(&sym, 1e-12).unwrap());
        let asym = NodalVector::sample(&g, |x| x[0]);
        assert!(!is_symmetric_sample(&asym, 1e-12).unwrap());

        let uneven = GridSpec::unit(vec![4, 2], BoundaryMode::Inclusive).unwrap();
        let u = NodalVector::sample(&uneven, |x| x[0] * x[1]);
        assert!(matches!(
            is_symmetric_sample(&u, 1e-12),
            Err(Error::AsymmetricDomain { .. })
        ));
    }
}
