use std::fmt;

use crate::error::{Error, Result};

/// A permutation of `0..V`, stored as its image array.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm {
    image: Vec<usize>,
}

impl fmt::Debug for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Perm{:?}", self.image)
    }
}

impl Perm {
    pub fn identity(v: usize) -> Self {
        Self {
            image: (0..v).collect(),
        }
    }

    pub fn from_image(image: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; image.len()];
        for &i in &image {
            if i >= image.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::arg(format!("{image:?} is not a permutation")));
            }
        }
        Ok(Self { image })
    }

    /// The transposition exchanging `i` and `j`.
    pub fn transposition(v: usize, i: usize, j: usize) -> Self {
        let mut p = Self::identity(v);
        p.image.swap(i, j);
        p
    }

    pub fn size(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Perm) -> Result<Perm> {
        if self.size() != other.size() {
            return Err(Error::arg(format!(
                "cannot compose permutations of {} and {} points",
                self.size(),
                other.size()
            )));
        }
        Ok(Perm {
            image: other.image.iter().map(|&i| self.image[i]).collect(),
        })
    }

    pub fn inverse(&self) -> Perm {
        let mut image = vec![0; self.size()];
        for (i, &j) in self.image.iter().enumerate() {
            image[j] = i;
        }
        Perm { image }
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(i, &j)| i == j)
    }
}

/// Path-ordered product `g_L ∘ … ∘ g_1` of a sequence (later elements on the left).
pub fn path_product<'a>(v: usize, seq: impl IntoIterator<Item = &'a Perm>) -> Result<Perm> {
    seq.into_iter()
        .try_fold(Perm::identity(v), |acc, g| g.compose(&acc))
}

/// The six elements of S₃ in lexicographic order of their image arrays.
pub fn s3_elements() -> Vec<Perm> {
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]
        .iter()
        .map(|im| Perm { image: im.to_vec() })
        .collect()
}

/// Class id of an S₃ element, the inverse of [`s3_elements`].
pub fn s3_index(p: &Perm) -> Option<usize> {
    if p.size() != 3 {
        return None;
    }
    let im = p.image();
    Some(2 * im[0] + usize::from(im[1] > im[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_bijections() {
        assert!(Perm::from_image(vec![0, 0, 1]).is_err());
        assert!(Perm::from_image(vec![0, 3, 1]).is_err());
        assert!(Perm::from_image(vec![]).is_ok());
    }

    #[test]
    fn compose_size_mismatch() {
        assert!(Perm::identity(3).compose(&Perm::identity(4)).is_err());
    }

    #[test]
    fn s3_index_round_trips() {
        for (k, p) in s3_elements().iter().enumerate() {
            assert_eq!(s3_index(p), Some(k));
        }
        assert_eq!(s3_index(&Perm::identity(4)), None);
    }

    #[test]
    fn inverse_composes_to_identity() {
        for p in s3_elements() {
            assert!(p.compose(&p.inverse()).unwrap().is_identity());
        }
    }
}
