//! Ordered ball covers, transition functions and the patch-consistency check.

use super::{coulomb_fix_from, Bc, Domain, GaugeError, GaugeFixConfig};
use crate::field::{AlgebraField, BallPatch, Connection, GaugeTransform, Lattice, Section};
use crate::flow::apply_gauge;

/// Patches in an order where consecutive members overlap.
#[derive(Clone, Debug)]
pub struct Cover {
    pub patches: Vec<BallPatch>,
    /// Largest number of patches containing one site.
    pub multiplicity: usize,
    pub covers_all: bool,
}

impl Cover {
    pub fn from_patches(patches: Vec<BallPatch>) -> Result<Self, GaugeError> {
        let first = patches.first().ok_or_else(|| GaugeError::Cover("empty cover".into()))?;
        let lat = *first.lattice();
        for (i, w) in patches.windows(2).enumerate() {
            if w[0].overlap(&w[1]).is_empty() {
                return Err(GaugeError::Cover(format!("patches {i} and {} do not overlap", i + 1)));
            }
        }
        let mut count = vec![0usize; lat.sites()];
        for p in &patches {
            for x in p.sites() {
                count[x] += 1;
            }
        }
        Ok(Cover {
            multiplicity: count.iter().copied().max().unwrap_or(0),
            covers_all: count.iter().all(|&c| c > 0),
            patches,
        })
    }

    /// Number of patches containing `site`.
    pub fn count_at(&self, site: usize) -> usize {
        self.patches.iter().filter(|p| p.contains(site)).count()
    }
}

/// Balls of radius `r` centred on a grid fine enough that every site is
/// within `r` of a centre, visited in boustrophedon order so consecutive
/// centres are grid neighbours.
pub fn ordered_cover(lattice: &Lattice, r: f64) -> Result<Cover, GaugeError> {
    let n = lattice.dim();
    let h = lattice.spacing();
    let mut g = [0usize; crate::field::MAX_DIM];
    for mu in 0..n {
        let l = lattice.extent(mu);
        g[mu] = (1..=l)
            .rev()
            .find(|d| l.is_multiple_of(*d) && (*d as f64) * h * (n as f64).sqrt() / 2.0 <= r)
            .ok_or_else(|| GaugeError::Cover(format!("radius {r} too small for spacing {h}")))?;
    }
    let m: Vec<usize> = (0..n).map(|mu| lattice.extent(mu) / g[mu]).collect();
    let total: usize = m.iter().product();
    let mut patches = Vec::with_capacity(total);
    for idx in 0..total {
        // Mixed-radix digits, slowest axis last; reflect a digit whenever the
        // slower digits sum to an odd number.
        let mut digits = vec![0usize; n];
        let mut rem = idx;
        for mu in 0..n {
            digits[mu] = rem % m[mu];
            rem /= m[mu];
        }
        let mut coords = vec![0usize; n];
        let mut parity = 0;
        for mu in (0..n).rev() {
            let d = if parity % 2 == 1 { m[mu] - 1 - digits[mu] } else { digits[mu] };
            coords[mu] = d * g[mu];
            parity += digits[mu];
        }
        patches.push(BallPatch::new(*lattice, lattice.site(&coords), r)?);
    }
    let cover = Cover::from_patches(patches)?;
    if !cover.covers_all {
        return Err(GaugeError::Cover(format!("radius {r} leaves sites uncovered")));
    }
    Ok(cover)
}

/// `S_ij = S_i⁻¹ S_j` on the overlap (identity elsewhere), so that
/// `apply_gauge(S_ij, a_i) = a_j` when `a_k = apply_gauge(S_k, A)`.
pub fn transition(si: &GaugeTransform, sj: &GaugeTransform, overlap: &[usize]) -> Result<GaugeTransform, GaugeError> {
    if overlap.is_empty() {
        return Err(GaugeError::EmptyOverlap);
    }
    let mut t = GaugeTransform::identity(*si.lattice(), si.group());
    for &x in overlap {
        let (a, b) = (si.get(x), sj.get(x));
        if a != b {
            t.set(x, a.inverse() * b);
        }
    }
    Ok(t)
}

/// `‖apply_gauge(S_ij, a_i) − a_j‖_{l2}` over edges with both ends in the overlap.
pub fn compatibility_residual(
    sij: &GaugeTransform,
    ai: &Connection,
    aj: &Connection,
    overlap: &[usize],
) -> Result<f64, GaugeError> {
    let lat = *ai.lattice();
    let moved = apply_gauge(sij, ai)?;
    let mut inside = vec![false; lat.sites()];
    overlap.iter().for_each(|&x| inside[x] = true);
    let mut sum = 0.0;
    for &x in overlap {
        for mu in 0..lat.dim() {
            if inside[lat.fwd(x, mu)] {
                sum += (moved.get(x, mu) - aj.get(x, mu)).norm_sqr();
            }
        }
    }
    Ok((sum * lat.cell_volume()).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub multiplicity: usize,
    /// Consecutive overlapping pairs `(i, i+1)`.
    pub pairs: Vec<(usize, usize)>,
    /// `sup_t max_x |S_ij(t) − S_ij(0)|` per pair.
    pub transition_variation: Vec<f64>,
    pub max_compatibility_residual: f64,
    pub max_dstar_residual: f64,
}

/// Fixes every patch (Dirichlet) at every sample and tracks the transitions
/// between consecutive patches.
pub fn patch_consistency_check(
    samples: &[Connection],
    cover: &Cover,
    config: &GaugeFixConfig,
) -> Result<ConsistencyReport, GaugeError> {
    let pairs: Vec<(usize, usize)> = (0..cover.patches.len().saturating_sub(1)).map(|i| (i, i + 1)).collect();
    let overlaps: Vec<Vec<usize>> = pairs.iter().map(|&(i, j)| cover.patches[i].overlap(&cover.patches[j])).collect();
    let mut initial: Vec<GaugeTransform> = Vec::new();
    let mut variation = vec![0.0f64; pairs.len()];
    let mut compat = 0.0f64;
    let mut dstar = 0.0f64;
    let mut warm: Vec<Option<Section>> = vec![None; cover.patches.len()];
    for (t, a) in samples.iter().enumerate() {
        let mut fixes = Vec::with_capacity(cover.patches.len());
        for (k, p) in cover.patches.iter().enumerate() {
            let cfg = GaugeFixConfig {
                domain: Domain::Patch(p.clone()),
                bc: Bc::DirichletZero,
                ..config.clone()
            };
            let fix = coulomb_fix_from(a, &cfg, warm[k].as_ref())?;
            dstar = dstar.max(fix.report.final_residual());
            warm[k] = Some(fix.u.clone());
            fixes.push(fix);
        }
        for (q, &(i, j)) in pairs.iter().enumerate() {
            let sij = transition(&fixes[i].s, &fixes[j].s, &overlaps[q])?;
            compat = compat.max(compatibility_residual(&sij, &fixes[i].a, &fixes[j].a, &overlaps[q])?);
            if t == 0 {
                initial.push(sij);
            } else {
                let v = overlaps[q]
                    .iter()
                    .map(|&x| sij.get(x).distance(&initial[q].get(x)))
                    .fold(0.0, f64::max);
                variation[q] = variation[q].max(v);
            }
        }
    }
    Ok(ConsistencyReport {
        multiplicity: cover.multiplicity,
        pairs,
        transition_variation: variation,
        max_compatibility_residual: compat,
        max_dstar_residual: dstar,
    })
}
