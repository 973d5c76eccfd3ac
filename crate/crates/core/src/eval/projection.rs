use std::io::Write;
use std::path::Path;

use crate::data::DatasetTag;
use crate::engine::Tensor;
use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as rows.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    (values, vectors)
}

/// Projects centered `features [N,D]` onto their top two principal
/// components. Each component is signed so its largest-magnitude loading is
/// positive.
pub fn pca_2d(features: &Tensor) -> Result<Vec<[f64; 2]>> {
    let n = features.rows();
    if features.ndim() != 2 || n < 2 {
        return Err(Error::Contract("projection needs at least two feature rows".into()));
    }
    let d = features.row_len();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        mean.iter_mut().zip(features.row(i)).for_each(|(m, x)| *m += x / n as f64);
    }
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|i| features.row(i).iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in &centered {
        for a in 0..d {
            for b in a..d {
                cov[a * d + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[a * d + b] = cov[b * d + a];
        }
    }
    let (_, vectors) = symmetric_eigen(&cov, d);
    let mut comps: Vec<Vec<f64>> = vectors.into_iter().take(2).collect();
    while comps.len() < 2 {
        comps.push(vec![0.0; d]);
    }
    for c in &mut comps {
        let lead = c.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(centered
        .iter()
        .map(|r| {
            let dot = |c: &Vec<f64>| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [dot(&comps[0]), dot(&comps[1])]
        })
        .collect())
}

/// Writes `x,y,tag` rows.
pub fn write_projection_csv(path: &Path, points: &[[f64; 2]], tags: &[DatasetTag]) -> Result<()> {
    if points.len() != tags.len() {
        return Err(Error::Contract("one tag per projected point".into()));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,y,tag")?;
    for (p, t) in points.iter().zip(tags) {
        writeln!(w, "{},{},{}", p[0], p[1], t.as_str())?;
    }
    w.flush()?;
    Ok(())
}
