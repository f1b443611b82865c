//! Hidden-state geometry: class centroids, the mass gap Δ, PCA snapshots
//! and cluster separation.

use super::eval::predict;
use crate::autodiff::Precision;
use crate::error::{Error, Result};
use crate::models::{Model, NoiseConfig};
use crate::par::Exec;
use crate::tasks::Episode;
use crate::tensor::{pca_project, RngState, Vector};

/// Final states grouped by ground-truth class.
#[derive(Clone, Debug)]
pub struct ClassStates {
    pub states: Vec<Vector>,
    pub labels: Vec<usize>,
}

impl ClassStates {
    /// Classes present, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Mean state of each present class, in [`ClassStates::classes`] order.
    pub fn centroids(&self) -> Vec<Vector> {
        self.classes()
            .iter()
            .map(|&c| {
                let dim = self.states[0].dim();
                let mut sum = vec![0.0; dim];
                let mut count = 0;
                for (s, _) in self.states.iter().zip(&self.labels).filter(|(_, &l)| l == c) {
                    sum.iter_mut().zip(s.as_slice()).for_each(|(a, b)| *a += b);
                    count += 1;
                }
                Vector::from_vec(sum.into_iter().map(|v| v / count as f64).collect())
            })
            .collect()
    }

    /// Largest distance of any state from its class centroid.
    pub fn within_spread(&self) -> f64 {
        let classes = self.classes();
        let cents = self.centroids();
        self.states
            .iter()
            .zip(&self.labels)
            .map(|(s, l)| {
                let k = classes.binary_search(l).expect("label is a present class");
                s.sub(&cents[k]).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Samples length-`len` episodes until every class has `per_class` of them
/// (or a draw budget of `50 · classes · per_class` runs out), then records
/// each episode's final state at noise temperature `temperature`.
pub fn class_states(
    model: &Model,
    per_class: usize,
    len: usize,
    noise: &NoiseConfig,
    rng: &RngState,
    exec: Exec,
) -> Result<ClassStates> {
    if per_class == 0 || len == 0 {
        return Err(Error::arg("class_states needs per_class >= 1 and len >= 1"));
    }
    let task = model.task();
    let classes = task.classes();
    let mut counts = vec![0; classes];
    let mut episodes: Vec<Episode> = Vec::new();
    let mut draw = rng.split(0);
    let budget = 50 * classes * per_class;
    for _ in 0..budget {
        if counts.iter().all(|&c| c >= per_class) {
            break;
        }
        let e = task.sample(&mut draw, len);
        if counts[e.target] < per_class {
            counts[e.target] += 1;
            episodes.push(e);
        }
    }
    let preds = predict(model, &episodes, noise, &rng.split(1), Precision::F64, exec, true)?;
    let states = preds.states.expect("states requested");
    Ok(ClassStates {
        states: (0..episodes.len()).map(|i| Vector::from_vec(states.row(i).to_vec())).collect(),
        labels: episodes.iter().map(|e| e.target).collect(),
    })
}

/// Minimum pairwise geodesic distance `arccos⟨u, v⟩` between the centroids
/// after renormalizing each to unit length.
pub fn mass_gap_of(centroids: &[Vector]) -> Result<f64> {
    if centroids.len() < 2 {
        return Err(Error::arg(format!("mass gap needs at least 2 classes, got {}", centroids.len())));
    }
    let units: Vec<Vector> = centroids
        .iter()
        .map(|c| {
            if c.norm() == 0.0 {
                Err(Error::arg("a class centroid is the zero vector"))
            } else {
                Ok(c.normalized())
            }
        })
        .collect::<Result<_>>()?;
    let mut gap = f64::INFINITY;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            gap = gap.min(units[i].dot(&units[j]).clamp(-1.0, 1.0).acos());
        }
    }
    Ok(gap)
}

#[derive(Clone, Debug)]
pub struct MassGap {
    pub delta: f64,
    pub classes: Vec<usize>,
    pub centroids: Vec<Vector>,
    pub within_spread: f64,
}

/// Mass gap of `model` from noise-free states at length `len`.
pub fn mass_gap(model: &Model, per_class: usize, len: usize, rng: &RngState, exec: Exec) -> Result<MassGap> {
    let cs = class_states(model, per_class, len, &NoiseConfig::off(), rng, exec)?;
    let centroids = cs.centroids();
    Ok(MassGap {
        delta: mass_gap_of(&centroids)?,
        classes: cs.classes(),
        within_spread: cs.within_spread(),
        centroids,
    })
}

/// Mean silhouette coefficient under Euclidean distance; `None` with fewer
/// than two classes.
pub fn silhouette(points: &[Vector], labels: &[usize]) -> Option<f64> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 || points.len() != labels.len() {
        return None;
    }
    let k = classes.len();
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let c = classes.binary_search(&labels[j]).expect("present");
            sum[c] += p.sub(q).norm();
            count[c] += 1;
        }
        let own = classes.binary_search(&labels[i]).expect("present");
        if count[own] == 0 {
            continue; // singleton cluster scores 0
        }
        let a = sum[own] / count[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && count[c] > 0)
            .map(|c| sum[c] / count[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Some(total / points.len() as f64)
}

/// One model's PCA view of its final states.
#[derive(Clone, Debug)]
pub struct PcaPanel {
    pub model: String,
    pub labels: Vec<usize>,
    /// Coordinates on the top three components; the first two columns are
    /// the k = 2 projection.
    pub coords: Vec<[f64; 3]>,
    /// Fraction of variance captured by each of the three components.
    pub explained: [f64; 3],
    /// Silhouette of the full-dimensional states; `None` with one class.
    pub silhouette: Option<f64>,
    pub within_spread: f64,
}

/// Final states of every model at noise temperature `temperature`, each
/// projected on its own principal components.
pub fn pca_snapshot(
    models: &[&Model],
    temperature: f64,
    per_class: usize,
    len: usize,
    rng: &RngState,
    exec: Exec,
) -> Result<Vec<PcaPanel>> {
    models
        .iter()
        .enumerate()
        .map(|(m, model)| {
            let noise = NoiseConfig::at(temperature, model.kind().default_noise_site());
            let cs = class_states(model, per_class, len, &noise, &rng.split(m as u64), exec)?;
            if cs.states[0].dim() < 3 {
                return Err(Error::arg("pca snapshot needs states of dimension >= 3"));
            }
            let pca = pca_project(&cs.states, 3)?;
            let var: f64 = pca.eigenvalues.iter().sum();
            let mut explained = [0.0; 3];
            for (e, v) in explained.iter_mut().zip(&pca.eigenvalues) {
                *e = if var > 0.0 { v / var } else { 0.0 };
            }
            Ok(PcaPanel {
                model: model.kind().name().to_string(),
                coords: pca.projected.iter().map(|p| [p[0], p[1], p[2]]).collect(),
                explained,
                silhouette: silhouette(&cs.states, &cs.labels),
                within_spread: cs.within_spread(),
                labels: cs.labels,
            })
        })
        .collect()
}

/// `model,class,pc1,pc2,pc3` rows for every panel.
pub fn pca_csv(panels: &[PcaPanel]) -> String {
    let mut s = String::from("model,class,pc1,pc2,pc3\n");
    for p in panels {
        for (l, c) in p.labels.iter().zip(&p.coords) {
            s.push_str(&format!("{},{},{:.9},{:.9},{:.9}\n", p.model, l, c[0], c[1], c[2]));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn antipodal_and_orthonormal_gaps() {
        let a = Vector::from_vec(vec![1.0, 0.0]);
        let b = Vector::from_vec(vec![-2.0, 0.0]);
        assert!((mass_gap_of(&[a, b]).unwrap() - PI).abs() < 1e-15);
        let basis: Vec<Vector> = (0..4).map(|i| Vector::basis(4, i)).collect();
        assert!((mass_gap_of(&basis).unwrap() - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn mass_gap_needs_two_nonzero_centroids() {
        assert!(mass_gap_of(&[Vector::basis(3, 0)]).is_err());
        assert!(mass_gap_of(&[Vector::basis(3, 0), Vector::zeros(3)]).is_err());
    }

    #[test]
    fn silhouette_of_separated_clusters_is_near_one() {
        let pts: Vec<Vector> = [0.0, 0.01, 10.0, 10.01]
            .iter()
            .map(|&x| Vector::from_vec(vec![x, 0.0]))
            .collect();
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.99);
        assert!(silhouette(&pts, &[3, 3, 3, 3]).is_none());
    }
}
