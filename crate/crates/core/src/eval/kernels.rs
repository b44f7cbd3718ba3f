//! Whole-series kernels. Every function works on one ticker's history (`&[f64]` over
//! dates) or on one date's cross-section; missing inputs propagate.

use crate::market::{is_missing, MISSING};

use super::series::finite;

pub fn delay(x: &[f64], n: usize, out: &mut [f64]) {
    for t in 0..x.len() {
        out[t] = if t >= n { x[t - n] } else { MISSING };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rolling {
    Mean,
    Sum,
    Std,
    Var,
    Min,
    Max,
    MeanDev,
}

/// Fixed-window statistic; the output is missing until the window is full and
/// whenever any value inside the window is missing.
pub fn rolling(x: &[f64], n: usize, stat: Rolling, out: &mut [f64]) {
    let len = x.len();
    // Position of the most recent missing value, to skip polluted windows in O(1).
    let mut last_missing: Option<usize> = None;
    for t in 0..len {
        if is_missing(x[t]) {
            last_missing = Some(t);
        }
        if t + 1 < n || last_missing.is_some_and(|m| m + n > t) {
            out[t] = MISSING;
            continue;
        }
        let w = &x[t + 1 - n..=t];
        out[t] = finite(window_stat(w, stat));
    }
}

fn mean(w: &[f64]) -> f64 {
    w.iter().sum::<f64>() / w.len() as f64
}

fn window_stat(w: &[f64], stat: Rolling) -> f64 {
    match stat {
        Rolling::Mean => mean(w),
        Rolling::Sum => w.iter().sum(),
        Rolling::Var | Rolling::Std => {
            if w.len() < 2 {
                return MISSING;
            }
            let m = mean(w);
            let ss: f64 = w.iter().map(|v| (v - m) * (v - m)).sum();
            let var = ss / (w.len() - 1) as f64;
            if stat == Rolling::Std {
                var.sqrt()
            } else {
                var
            }
        }
        Rolling::Min => w.iter().copied().fold(f64::INFINITY, f64::min),
        Rolling::Max => w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Rolling::MeanDev => {
            let m = mean(w);
            w.iter().map(|v| (v - m).abs()).sum::<f64>() / w.len() as f64
        }
    }
}

/// Running total over non-missing values; missing inputs give missing outputs.
pub fn cumulative_sum(x: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        if is_missing(v) {
            *o = MISSING;
        } else {
            acc += v;
            *o = finite(acc);
        }
    }
}

/// EMA with smoothing `2 / (n + 1)`, seeded by the first value. Output is withheld for
/// the first `n - 1` values after each (re)seed; a missing input resets the state.
pub fn ema(x: &[f64], n: usize, out: &mut [f64]) {
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut state = 0.0;
    let mut count = 0usize;
    for (o, &v) in out.iter_mut().zip(x) {
        if is_missing(v) {
            count = 0;
            *o = MISSING;
            continue;
        }
        state = if count == 0 { v } else { alpha * v + (1.0 - alpha) * state };
        count += 1;
        *o = if count >= n { state } else { MISSING };
    }
}

/// Wilder's RSI over `n` price changes. An all-gain window gives 100, all-loss 0, and
/// a window with neither gains nor losses 50.
pub fn rsi(close: &[f64], n: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = MISSING);
    let nf = n as f64;
    let mut gains = 0.0;
    let mut losses = 0.0;
    let mut count = 0usize;
    for t in 1..close.len() {
        let (p0, p1) = (close[t - 1], close[t]);
        if is_missing(p0) || is_missing(p1) {
            count = 0;
            gains = 0.0;
            losses = 0.0;
            continue;
        }
        let d = p1 - p0;
        let (g, l) = if d > 0.0 { (d, 0.0) } else { (0.0, -d) };
        count += 1;
        if count <= n {
            gains += g;
            losses += l;
            if count < n {
                continue;
            }
            gains /= nf;
            losses /= nf;
        } else {
            gains = (gains * (nf - 1.0) + g) / nf;
            losses = (losses * (nf - 1.0) + l) / nf;
        }
        out[t] = rsi_value(gains, losses);
    }
}

fn rsi_value(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss == 0.0 {
        if avg_gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else if avg_gain == 0.0 {
        0.0
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}

/// Wilder's ATR: the first value is the mean of the first `n` true ranges, then
/// `(prev * (n - 1) + tr) / n`.
pub fn atr(high: &[f64], low: &[f64], close: &[f64], n: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = MISSING);
    let nf = n as f64;
    let mut avg = 0.0;
    let mut count = 0usize;
    for t in 1..close.len() {
        let (h, l, pc) = (high[t], low[t], close[t - 1]);
        if is_missing(h) || is_missing(l) || is_missing(pc) {
            count = 0;
            avg = 0.0;
            continue;
        }
        let tr = (h - l).max((h - pc).abs()).max((l - pc).abs());
        count += 1;
        if count <= n {
            avg += tr;
            if count < n {
                continue;
            }
            avg /= nf;
        } else {
            avg = (avg * (nf - 1.0) + tr) / nf;
        }
        out[t] = finite(avg);
    }
}

/// Average ranks of the non-missing entries, mapped to `[0, 1]`. A lone value gets 0.5.
pub fn cs_rank(x: &[f64], out: &mut [f64]) {
    let mut idx: Vec<usize> = (0..x.len()).filter(|&i| !is_missing(x[i])).collect();
    out.iter_mut().for_each(|o| *o = MISSING);
    let m = idx.len();
    if m == 0 {
        return;
    }
    if m == 1 {
        out[idx[0]] = 0.5;
        return;
    }
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // 0-based average rank of the tie group i..=j
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = avg / (m - 1) as f64;
        }
        i = j + 1;
    }
}

/// `(x - mean) / sample std` over non-missing entries.
pub fn cs_zscore(x: &[f64], out: &mut [f64]) {
    let vals: Vec<f64> = x.iter().copied().filter(|v| !is_missing(*v)).collect();
    out.iter_mut().for_each(|o| *o = MISSING);
    if vals.len() < 2 {
        return;
    }
    let m = mean(&vals);
    let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return;
    }
    for (o, &v) in out.iter_mut().zip(x) {
        if !is_missing(v) {
            *o = finite((v - m) / sd);
        }
    }
}
