use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::FeatureMatrix;

pub const DEFAULT_HIDDEN: usize = 10;
const CHECKPOINT_MAGIC: &str = "alphaforge-mlp v1";

/// `n_in → hidden (ReLU) → 1 (identity)` network.
///
/// Parameters flatten in the order `w1` (row-major, `hidden × n_in`), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    n_in: usize,
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("layer sizes must be positive, got {n_in} -> {hidden}")]
    Shape { n_in: usize, hidden: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

impl MlpModel {
    /// Uniform(±1/√fan_in) initialization from `seed`; biases start at zero.
    pub fn new(n_in: usize, hidden: usize, seed: u64) -> Result<Self, ModelError> {
        if n_in == 0 || hidden == 0 {
            return Err(ModelError::Shape { n_in, hidden });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = 1.0 / (n_in as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let w1 = (0..hidden * n_in).map(|_| rng.gen_range(-a1..=a1)).collect();
        let w2 = (0..hidden).map(|_| rng.gen_range(-a2..=a2)).collect();
        Ok(Self { n_in, hidden, w1, b1: vec![0.0; hidden], w2, b2: 0.0 })
    }

    pub fn from_params(n_in: usize, hidden: usize, params: &[f64]) -> Result<Self, ModelError> {
        if n_in == 0 || hidden == 0 {
            return Err(ModelError::Shape { n_in, hidden });
        }
        let expected = Self::param_count_for(n_in, hidden);
        if params.len() != expected {
            return Err(ModelError::ParamCount { expected, got: params.len() });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        let (w1, rest) = params.split_at(hidden * n_in);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, rest) = rest.split_at(hidden);
        Ok(Self { n_in, hidden, w1: w1.to_vec(), b1: b1.to_vec(), w2: w2.to_vec(), b2: rest[0] })
    }

    fn param_count_for(n_in: usize, hidden: usize) -> usize {
        hidden * n_in + 2 * hidden + 1
    }

    pub fn n_inputs(&self) -> usize {
        self.n_in
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        Self::param_count_for(self.n_in, self.hidden)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), ModelError> {
        *self = Self::from_params(self.n_in, self.hidden, params)?;
        Ok(())
    }

    /// Whether flat parameter `i` is a weight (and so carries the L2 penalty).
    pub fn is_weight(&self, i: usize) -> bool {
        let w1 = self.hidden * self.n_in;
        i < w1 || (w1 + self.hidden..w1 + 2 * self.hidden).contains(&i)
    }

    fn hidden_pre(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.w1[j * self.n_in..(j + 1) * self.n_in];
            *o = self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.hidden];
        self.hidden_pre(x, &mut z);
        self.b2 + z.iter().zip(&self.w2).map(|(z, w)| z.max(0.0) * w).sum::<f64>()
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.forward(x.row(i))).collect()
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.w1.iter().chain(&self.w2).map(|w| w * w).sum()
    }

    /// `mean((ŷ - y)²) + l2 · ‖W‖²` over the rows in `idx`.
    pub fn loss(&self, x: &FeatureMatrix, y: &[f64], idx: &[usize], l2: f64) -> f64 {
        let mse = idx.iter().map(|&i| (self.forward(x.row(i)) - y[i]).powi(2)).sum::<f64>() / idx.len() as f64;
        mse + l2 * self.weight_norm_sq()
    }

    /// Loss and its gradient with respect to the flat parameter vector.
    pub fn loss_and_gradient(&self, x: &FeatureMatrix, y: &[f64], idx: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let (n_in, h) = (self.n_in, self.hidden);
        let mut g = vec![0.0; self.param_count()];
        let (gw1, rest) = g.split_at_mut(h * n_in);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        let scale = 2.0 / idx.len() as f64;
        let mut z = vec![0.0; h];
        let mut sq = 0.0;
        for &i in idx {
            let xi = x.row(i);
            self.hidden_pre(xi, &mut z);
            let pred = self.b2 + z.iter().zip(&self.w2).map(|(z, w)| z.max(0.0) * w).sum::<f64>();
            let err = pred - y[i];
            sq += err * err;
            let d = scale * err;
            gb2[0] += d;
            for j in 0..h {
                if z[j] > 0.0 {
                    gw2[j] += d * z[j];
                    let dz = d * self.w2[j];
                    gb1[j] += dz;
                    for (gw, v) in gw1[j * n_in..(j + 1) * n_in].iter_mut().zip(xi) {
                        *gw += dz * v;
                    }
                }
            }
        }
        for (gw, w) in gw1.iter_mut().zip(&self.w1) {
            *gw += 2.0 * l2 * w;
        }
        for (gw, w) in gw2.iter_mut().zip(&self.w2) {
            *gw += 2.0 * l2 * w;
        }
        (sq / idx.len() as f64 + l2 * self.weight_norm_sq(), g)
    }

    /// ReLU activity pattern of the hidden layer for every row in `idx`.
    pub(crate) fn activation_mask(&self, x: &FeatureMatrix, idx: &[usize]) -> Vec<bool> {
        let mut z = vec![0.0; self.hidden];
        let mut mask = Vec::with_capacity(idx.len() * self.hidden);
        for &i in idx {
            self.hidden_pre(x.row(i), &mut z);
            mask.extend(z.iter().map(|v| *v > 0.0));
        }
        mask
    }

    /// Text checkpoint; values use the shortest representation that round-trips.
    pub fn to_checkpoint(&self) -> String {
        let mut s = format!("{CHECKPOINT_MAGIC}\nlayers {} {} 1\n", self.n_in, self.hidden);
        let mut line = |tag: &str, vals: &[f64]| {
            s.push_str(tag);
            for v in vals {
                write!(s, " {v:?}").expect("write to string");
            }
            s.push('\n');
        };
        line("w1", &self.w1);
        line("b1", &self.b1);
        line("w2", &self.w2);
        line("b2", &[self.b2]);
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, ModelError> {
        let err = |line: usize, message: String| ModelError::Checkpoint { line, message };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first().map(|l| l.trim()) != Some(CHECKPOINT_MAGIC) {
            return Err(err(1, format!("expected header {CHECKPOINT_MAGIC:?}")));
        }
        let layer_line = lines.get(1).ok_or_else(|| err(2, "missing layers line".into()))?;
        let sizes: Vec<&str> = layer_line.split_whitespace().collect();
        if sizes.len() != 4 || sizes[0] != "layers" || sizes[3] != "1" {
            return Err(err(2, "expected `layers <in> <hidden> 1`".into()));
        }
        let parse_size = |s: &str| s.parse::<usize>().map_err(|_| err(2, format!("bad layer size {s:?}")));
        let (n_in, hidden) = (parse_size(sizes[1])?, parse_size(sizes[2])?);
        if n_in == 0 || hidden == 0 || n_in.saturating_mul(hidden) > 1 << 24 {
            return Err(err(2, "layer sizes out of range".into()));
        }
        let expect = [("w1", hidden * n_in), ("b1", hidden), ("w2", hidden), ("b2", 1)];
        let mut params = Vec::with_capacity(Self::param_count_for(n_in, hidden));
        for (k, (tag, count)) in expect.iter().enumerate() {
            let no = k + 3;
            let line = lines.get(no - 1).ok_or_else(|| err(no, format!("missing {tag} line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(*tag) {
                return Err(err(no, format!("expected {tag}")));
            }
            let vals: Vec<f64> = parts
                .map(|p| p.parse::<f64>().map_err(|_| err(no, format!("bad number {p:?}"))))
                .collect::<Result<_, _>>()?;
            if vals.len() != *count {
                return Err(err(no, format!("{tag} needs {count} values, found {}", vals.len())));
            }
            params.extend(vals);
        }
        if lines[6..].iter().any(|l| !l.trim().is_empty()) {
            return Err(err(7, "trailing content".into()));
        }
        Self::from_params(n_in, hidden, &params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = MlpModel::new(4, 10, 3).unwrap();
        assert_eq!(a, MlpModel::new(4, 10, 3).unwrap());
        assert_ne!(a, MlpModel::new(4, 10, 4).unwrap());
        assert!(a.w1.iter().all(|w| w.abs() <= 0.5));
        assert_eq!(a.param_count(), 4 * 10 + 10 + 10 + 1);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = MlpModel::new(3, 5, 1).unwrap();
        let text = m.to_checkpoint();
        assert_eq!(MlpModel::from_checkpoint(&text).unwrap(), m);
        assert!(MlpModel::from_checkpoint("junk").is_err());
        let truncated: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(MlpModel::from_checkpoint(&truncated).is_err());
    }

    #[test]
    fn weight_mask() {
        let m = MlpModel::new(2, 3, 1).unwrap();
        let flags: Vec<bool> = (0..m.param_count()).map(|i| m.is_weight(i)).collect();
        assert_eq!(flags, [vec![true; 6], vec![false; 3], vec![true; 3], vec![false]].concat());
    }
}
