#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use seqcnn_core::descriptor::CUSTOM_TAG;
use seqcnn_core::{normalize, DescriptorSet, MatchResult};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&raw).unwrap().into_values()
}

/// Independent random unit descriptors.
pub fn random_set(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> DescriptorSet {
    let descriptors: Vec<_> = (0..len)
        .map(|_| normalize(&random_unit(rng, dim)).unwrap())
        .collect();
    DescriptorSet::from_descriptors(&descriptors, CUSTOM_TAG).unwrap()
}

/// Frames drawn from a small palette, so many distances (and therefore many
/// sequence scores) tie exactly.
pub fn palette_set(rng: &mut ChaCha8Rng, len: usize, dim: usize, palette: usize) -> DescriptorSet {
    let colors: Vec<_> = (0..palette)
        .map(|_| normalize(&random_unit(rng, dim)).unwrap())
        .collect();
    let descriptors: Vec<_> = (0..len)
        .map(|_| colors[rng.random_range(0..palette)].clone())
        .collect();
    DescriptorSet::from_descriptors(&descriptors, CUSTOM_TAG).unwrap()
}

/// What the literal transcription reports for one query frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMatch {
    pub n: usize,
    pub q: usize,
    pub best_ref: usize,
    pub speed: f64,
    pub score: f64,
    pub second: Option<f64>,
}

pub struct OracleParams {
    pub ds: usize,
    pub speeds: Vec<f64>,
    pub r_window: usize,
    pub same_traversal: bool,
}

impl OracleParams {
    pub fn defaults(ds: usize) -> Self {
        Self {
            ds,
            speeds: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            r_window: 10,
            same_traversal: false,
        }
    }
}

fn dist(a: &[f32], b: &[f32]) -> f32 {
    let mut s = 0.0f64;
    for k in 0..a.len() {
        s += (a[k] as f64 - b[k] as f64) * (a[k] as f64 - b[k] as f64);
    }
    s.sqrt() as f32
}

fn idx(x: f64, rows: usize) -> usize {
    let r = x.round();
    if r < 0.0 {
        0
    } else if r > (rows - 1) as f64 {
        rows - 1
    } else {
        r as usize
    }
}

/// Nested loops over n, q and v, straight from the pseudocode: build the
/// whole matrix, sum `D[round(v(q - ds/2 + i)), n - ds/2 + i]` over
/// `i = 0..=ds`, keep the first strict minimum.
pub fn brute_force(reference: &DescriptorSet, query: &DescriptorSet, p: &OracleParams) -> Vec<OracleMatch> {
    let rows = reference.len();
    let cols = query.len();
    let mut d = vec![vec![0f32; cols]; rows];
    for i in 0..rows {
        for j in 0..cols {
            d[i][j] = dist(reference.row(i), query.row(j));
        }
    }
    let h = p.ds / 2;
    let mut out = Vec::new();
    if cols <= p.ds || rows <= p.ds {
        return out;
    }
    for n in h..cols - h {
        // (q, v, center, score) of the best speed for every q.
        let mut per_q: Vec<(usize, f64, usize, f64)> = Vec::new();
        for q in h..rows - h {
            let mut best_for_q: Option<(usize, f64, usize, f64)> = None;
            for &v in &p.speeds {
                let center = idx(v * q as f64, rows);
                if p.same_traversal && (center as i64 - n as i64).abs() <= p.r_window as i64 {
                    continue;
                }
                let mut sum = 0.0f64;
                for i in 0..=p.ds {
                    let row = idx(v * (q as f64 - h as f64 + i as f64), rows);
                    sum += d[row][n - h + i] as f64;
                }
                if best_for_q.is_none() || sum < best_for_q.unwrap().3 {
                    best_for_q = Some((q, v, center, sum));
                }
            }
            if let Some(b) = best_for_q {
                per_q.push(b);
            }
        }
        let mut best: Option<(usize, f64, usize, f64)> = None;
        for &c in &per_q {
            if best.is_none() || c.3 < best.unwrap().3 {
                best = Some(c);
            }
        }
        let Some((q, v, center, score)) = best else { continue };
        let mut second: Option<f64> = None;
        for &(_, _, c, s) in &per_q {
            if (c as i64 - center as i64).abs() > p.r_window as i64 && (second.is_none() || s < second.unwrap()) {
                second = Some(s);
            }
        }
        out.push(OracleMatch {
            n,
            q,
            best_ref: center,
            speed: v,
            score,
            second,
        });
    }
    out
}

/// Panics with a description of the first disagreement.
pub fn assert_matches_oracle(result: &MatchResult, oracle: &[OracleMatch], context: &str) {
    assert_eq!(result.frames.len(), oracle.len(), "{context}: frame count");
    for (f, o) in result.frames.iter().zip(oracle) {
        let got = (f.query_index, f.candidate, f.best_ref, f.speed, f.best_score, f.second_score);
        let want = (o.n, o.q, o.best_ref, o.speed, o.score, o.second);
        assert_eq!(got, want, "{context}: frame {}", o.n);
    }
}
