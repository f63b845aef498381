use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;

/// Symmetric Fisher information matrix over `theta = (sigma, v2..vD)`,
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FimMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl FimMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "FIM must be square");
        Self {
            dim,
            entries: rows.concat(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub(crate) fn get_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.entries[i * self.dim + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Closed-form information per observation: diagonal with `2D / sigma^2`
/// for sigma and `1 / sigma^2` for each lateral drift component.
pub fn fim_closed_form(p: &ChannelParams) -> FimMatrix {
    let d = p.dim();
    let s2 = p.sigma_sq();
    let mut m = FimMatrix::zeros(d);
    *m.get_mut(0, 0) = 2.0 * d as f64 / s2;
    for k in 1..d {
        *m.get_mut(k, k) = 1.0 / s2;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matrices() {
        let m = fim_closed_form(&ChannelParams::isotropic(2, 0.5).unwrap());
        assert_eq!(m.rows(), vec![vec![16.0, 0.0], vec![0.0, 4.0]]);
        let m = fim_closed_form(&ChannelParams::isotropic(1, 1.0).unwrap());
        assert_eq!(m.rows(), vec![vec![2.0]]);
        let m = fim_closed_form(&ChannelParams::isotropic(3, 1.0).unwrap());
        assert_eq!(m.diagonal(), vec![6.0, 1.0, 1.0]);
        assert!(m.is_symmetric());
        assert_eq!(m.get(0, 2), 0.0);
    }

    #[test]
    fn drift_does_not_enter() {
        let a = fim_closed_form(&ChannelParams::new(2, 0.3, vec![-3.0], vec![1.0]).unwrap());
        let b = fim_closed_form(&ChannelParams::isotropic(2, 0.3).unwrap());
        assert_eq!(a, b);
    }
}
