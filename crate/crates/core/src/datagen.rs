//! Synthetic datasets: the electrostatic point-charge field and uniform boxes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, check_positive, KrrError, Result};
use crate::points::PointSet;

/// Samples closer than this to a charge are redrawn.
pub const MIN_CHARGE_DISTANCE: f64 = 1e-9;

pub const EM_CSV_HEADER: [&str; 7] = ["x", "y", "z", "phi", "ex", "ey", "ez"];

/// Potential and field of unit positive charges at sampled positions.
#[derive(Debug, Clone)]
pub struct EmField {
    pub positions: PointSet,
    /// `Phi_j = sum_i 1 / r_ij`, the regression label.
    pub potential: Vec<f64>,
    pub field: Vec<[f64; 3]>,
    pub charges: PointSet,
    /// Samples redrawn for landing on a charge.
    pub resampled: usize,
}

/// Field contribution `r^-2 (sin phi cos theta, sin phi sin theta, cos phi)`
/// and potential `1 / r` of a unit charge at `charge`, seen from `sample`.
/// `phi` is the polar angle from +z and `theta` the azimuth from +x of
/// `sample - charge`.
pub fn charge_contribution(sample: &[f64], charge: &[f64]) -> ([f64; 3], f64) {
    let dx = sample[0] - charge[0];
    let dy = sample[1] - charge[1];
    let dz = sample[2] - charge[2];
    let r = (dx * dx + dy * dy + dz * dz).sqrt();
    let phi = (dz / r).clamp(-1.0, 1.0).acos();
    let theta = dy.atan2(dx);
    let inv_r2 = 1.0 / (r * r);
    (
        [
            inv_r2 * phi.sin() * theta.cos(),
            inv_r2 * phi.sin() * theta.sin(),
            inv_r2 * phi.cos(),
        ],
        1.0 / r,
    )
}

/// Draws `n_charges` charges, then `n_samples` sample positions, uniformly
/// in the unit cube.
pub fn gen_em_field(n_samples: usize, n_charges: usize, seed: u64) -> Result<EmField> {
    if n_samples == 0 || n_charges == 0 {
        return Err(KrrError::InvalidParameter(
            "need at least one sample and one charge".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let charges: Vec<f64> = (0..3 * n_charges).map(|_| rng.random::<f64>()).collect();
    let charges = PointSet::new(charges, 3)?;

    let mut coords = Vec::with_capacity(3 * n_samples);
    let mut potential = Vec::with_capacity(n_samples);
    let mut field = Vec::with_capacity(n_samples);
    let mut resampled = 0;
    while potential.len() < n_samples {
        let s = [
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        ];
        let too_close = charges
            .iter()
            .any(|c| crate::points::sq_dist(&s, c) < MIN_CHARGE_DISTANCE * MIN_CHARGE_DISTANCE);
        if too_close {
            resampled += 1;
            continue;
        }
        let mut e = [0.0; 3];
        let mut phi = 0.0;
        for c in charges.iter() {
            let (ec, pc) = charge_contribution(&s, c);
            for k in 0..3 {
                e[k] += ec[k];
            }
            phi += pc;
        }
        coords.extend_from_slice(&s);
        potential.push(phi);
        field.push(e);
    }
    if resampled > 0 {
        log::info!("{resampled} EM samples redrawn for landing on a charge");
    }
    Ok(EmField {
        positions: PointSet::new(coords, 3)?,
        potential,
        field,
        charges,
        resampled,
    })
}

/// `n` i.i.d. uniform points in `[0, q_1] x ... x [0, q_d]`.
pub fn gen_uniform_box(n: usize, d: usize, box_lengths: &[f64], seed: u64) -> Result<PointSet> {
    if n == 0 || d == 0 {
        return Err(KrrError::InvalidParameter(
            "n and d must be at least 1".into(),
        ));
    }
    check_len("box lengths", d, box_lengths.len())?;
    for &q in box_lengths {
        check_positive("box length", q)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        for &q in box_lengths {
            coords.push(q * rng.random::<f64>());
        }
    }
    PointSet::new(coords, d)
}

/// Writes `x,y,z,phi,ex,ey,ez` rows with 17 significant digits.
pub fn write_em_csv<W: Write>(data: &EmField, mut w: W) -> Result<()> {
    writeln!(w, "{}", EM_CSV_HEADER.join(","))?;
    for (j, p) in data.positions.iter().enumerate() {
        let e = data.field[j];
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p[0], p[1], p[2], data.potential[j], e[0], e[1], e[2]
        )?;
    }
    w.flush()?;
    Ok(())
}
