//! Real spherical harmonics.
//!
//! Convention: orthonormal over the unit sphere, no Condon-Shortley phase in
//! the real basis, orders stored `m = -ℓ..=ℓ`. Degree ℓ occupies the flat
//! slice `ℓ²..(ℓ+1)²`, so the ℓ=1 block is `√(3/4π)·(y, z, x)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// Flat position of `(l, m)` in a harmonic vector.
#[inline]
pub fn sh_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

/// Number of entries for degrees `0..=lmax`.
#[inline]
pub fn sh_len(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// Real spherical harmonics of a unit direction for all degrees `≤ lmax`.
pub fn eval_real_sh(lmax: usize, dir: [f64; 3]) -> Result<Vec<f64>> {
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::domain(format!(
            "direction has norm {norm}, expected 1"
        )));
    }
    let mut out = vec![0.0; sh_len(lmax)];
    solid_harmonics_into(lmax, dir, &mut out);
    Ok(out)
}

/// Solid harmonics `r^ℓ Y_ℓ^m(r̂)`: homogeneous polynomials in `(x, y, z)`,
/// well defined at the origin.
pub fn solid_harmonics(lmax: usize, v: [f64; 3]) -> Vec<f64> {
    let mut out = vec![0.0; sh_len(lmax)];
    solid_harmonics_into(lmax, v, &mut out);
    out
}

/// Harmonics of the direction of `v`; at `v = 0` only `Y₀⁰` is kept.
pub fn direction_harmonics_into(lmax: usize, v: [f64; 3], out: &mut [f64]) {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if r == 0.0 {
        out[..sh_len(lmax)].fill(0.0);
        out[0] = 0.5 / PI.sqrt();
        return;
    }
    solid_harmonics_into(lmax, [v[0] / r, v[1] / r, v[2] / r], out);
}

pub fn solid_harmonics_into(lmax: usize, v: [f64; 3], out: &mut [f64]) {
    let [x, y, z] = v;
    let r2 = x * x + y * y + z * z;
    debug_assert!(out.len() >= sh_len(lmax));

    // Re/Im of (x + iy)^m
    let mut cos_m = vec![0.0; lmax + 1];
    let mut sin_m = vec![0.0; lmax + 1];
    cos_m[0] = 1.0;
    for m in 1..=lmax {
        cos_m[m] = x * cos_m[m - 1] - y * sin_m[m - 1];
        sin_m[m] = x * sin_m[m - 1] + y * cos_m[m - 1];
    }

    let mut pi_mm = 1.0; // (2m-1)!!
    for m in 0..=lmax {
        if m > 0 {
            pi_mm *= (2 * m - 1) as f64;
        }
        // Π_ℓ^m: associated Legendre polynomial with the sin^m θ factor removed,
        // homogenized in r.
        let mut prev2 = 0.0;
        let mut prev = pi_mm;
        for l in m..=lmax {
            let cur = if l == m {
                pi_mm
            } else if l == m + 1 {
                (2 * m + 1) as f64 * z * pi_mm
            } else {
                ((2 * l - 1) as f64 * z * prev - (l + m - 1) as f64 * r2 * prev2) / (l - m) as f64
            };
            if l > m {
                prev2 = prev;
                prev = cur;
            }
            let norm = sh_norm(l, m);
            if m == 0 {
                out[sh_index(l, 0)] = norm * cur;
            } else {
                let scaled = std::f64::consts::SQRT_2 * norm * cur;
                out[sh_index(l, m as i64)] = scaled * cos_m[m];
                out[sh_index(l, -(m as i64))] = scaled * sin_m[m];
            }
        }
    }
}

/// `sqrt((2ℓ+1)/(4π) · (ℓ-m)!/(ℓ+m)!)`
fn sh_norm(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for t in (l - m + 1)..=(l + m) {
        ratio /= t as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
        loop {
            let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 0.1 && n < 1.0 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    #[test]
    fn degree_zero_is_constant() {
        let y = eval_real_sh(0, [0.0, 0.6, 0.8]).unwrap();
        assert!((y[0] - 0.282_094_791_773_878_1).abs() < 1e-15);
    }

    #[test]
    fn degree_one_along_z() {
        let y = eval_real_sh(1, [0.0, 0.0, 1.0]).unwrap();
        let expected = (3.0 / (4.0 * PI)).sqrt();
        assert_eq!(y[sh_index(1, -1)], 0.0);
        assert!((y[sh_index(1, 0)] - expected).abs() < 1e-15);
        assert_eq!(y[sh_index(1, 1)], 0.0);
        assert!((expected - 0.488_602_5).abs() < 1e-7);
    }

    #[test]
    fn rejects_non_unit_direction() {
        assert!(eval_real_sh(2, [1.0, 1.0, 0.0]).is_err());
        assert!(eval_real_sh(2, [f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn solid_harmonics_scale_homogeneously() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let d = random_unit(&mut rng);
            let s = 1.7;
            let unit = solid_harmonics(6, d);
            let scaled = solid_harmonics(6, [s * d[0], s * d[1], s * d[2]]);
            for l in 0..=6 {
                for m in -(l as i64)..=(l as i64) {
                    let i = sh_index(l, m);
                    assert!((scaled[i] - s.powi(l as i32) * unit[i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn parity_is_minus_one_to_the_l() {
        let d = [0.3, -0.4, (1.0f64 - 0.25).sqrt()];
        let a = eval_real_sh(7, d).unwrap();
        let b = eval_real_sh(7, [-d[0], -d[1], -d[2]]).unwrap();
        for l in 0..=7usize {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            for m in -(l as i64)..=(l as i64) {
                let i = sh_index(l, m);
                assert!((b[i] - sign * a[i]).abs() < 1e-12);
            }
        }
    }

    /// Gauss-Legendre in cos θ times a uniform φ rule integrates products of
    /// degree ≤ 2·lmax exactly.
    #[test]
    fn orthonormal_on_deterministic_sphere_grid() {
        let lmax = 7;
        let n_theta = 16;
        let n_phi = 32;
        let (nodes, weights) = crate::quadrature::gauss_legendre(n_theta);
        let n = sh_len(lmax);
        let mut gram = vec![0.0; n * n];
        for (ct, wt) in nodes.iter().zip(&weights) {
            let st = (1.0 - ct * ct).sqrt();
            for k in 0..n_phi {
                let phi = 2.0 * PI * k as f64 / n_phi as f64;
                let w = wt * 2.0 * PI / n_phi as f64;
                let y = eval_real_sh(lmax, [st * phi.cos(), st * phi.sin(), *ct]).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        gram[i * n + j] += w * y[i] * y[j];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * n + j] - expected).abs() < 1e-12, "({i},{j})");
            }
        }
    }
}
