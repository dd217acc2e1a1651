//! Analog combining front-ends: the four architecture variants, their
//! structural constraints, and the operations shared by every estimator that
//! consumes RF-chain-domain data.
//!
//! A combiner is an M x L matrix W applied as `Y = W^H X`. Default phase
//! content is beam-steered: column l points at the l-th angle of a uniform
//! sin-domain grid, which for half-wavelength spacing and L = M reproduces
//! the unitary DFT matrix scaled by 1/sqrt(M).

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::array::{steering_vector, ArrayGeometry, SnapshotDomain, SnapshotMatrix};
use crate::error::{Error, Result};
use crate::linalg;

/// Architecture tag plus its structural parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CombinerSpec {
    /// Every RF chain reaches the whole aperture through phase shifters.
    FullyConnected,
    /// Each RF chain owns a dedicated contiguous subarray.
    PartiallyConnected { subarray_size: usize },
    /// RF switches select antenna subsets; no phase control.
    SwitchBased { active_per_chain: usize },
    /// Switch network between chains and subarrays with phase control on
    /// active connections; closure_ratio in (0, 1] tunes PC-like to FC-like.
    DynamicSubarray {
        num_subarrays: usize,
        closure_ratio: f64,
    },
}

impl CombinerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CombinerSpec::FullyConnected => "fully-connected",
            CombinerSpec::PartiallyConnected { .. } => "partially-connected",
            CombinerSpec::SwitchBased { .. } => "switch-based",
            CombinerSpec::DynamicSubarray { .. } => "dynamic-subarray",
        }
    }
}

/// An analog combining matrix with its architecture tag.
#[derive(Debug, Clone)]
pub struct Combiner {
    pub matrix: Array2<Complex64>,
    pub spec: CombinerSpec,
    /// True when W^H W = I within 1e-10 Frobenius.
    pub column_normalized: bool,
}

/// Wraps a sin-domain coordinate into [-1, 1).
pub fn wrap_sin(x: f64) -> f64 {
    let y = (x + 1.0).rem_euclid(2.0) - 1.0;
    if y == 1.0 {
        -1.0
    } else {
        y
    }
}

/// Uniform beam grid of `l` points in the sin domain, enumerated so that the
/// half-wavelength L = M case lands exactly on the DFT columns in DFT order.
pub fn default_beam_grid(l: usize) -> Vec<f64> {
    (0..l).map(|k| wrap_sin(-2.0 * k as f64 / l as f64)).collect()
}


/// Unit-modulus beam phases over the full aperture for a sin-domain target.
fn beam_phases(m: usize, spacing: f64, sin_theta: f64) -> Vec<Complex64> {
    let step = 2.0 * std::f64::consts::PI * spacing * sin_theta;
    (0..m)
        .map(|i| Complex64::from_polar(1.0, step * i as f64))
        .collect()
}

fn orthonormal_columns(w: &Array2<Complex64>) -> bool {
    let g = linalg::adjoint(w).dot(w);
    let l = w.ncols();
    let mut dev = 0.0;
    for i in 0..l {
        for j in 0..l {
            let target = if i == j { 1.0 } else { 0.0 };
            dev += (g[(i, j)] - Complex64::new(target, 0.0)).norm_sqr();
        }
    }
    dev.sqrt() <= 1e-10
}

impl Combiner {
    fn from_matrix(matrix: Array2<Complex64>, spec: CombinerSpec) -> Combiner {
        let column_normalized = orthonormal_columns(&matrix);
        Combiner {
            matrix,
            spec,
            column_normalized,
        }
    }

    /// Fully connected combiner with explicit sin-domain beam targets.
    pub fn fc_beams(m: usize, spacing: f64, sins: &[f64]) -> Result<Combiner> {
        let l = sins.len();
        check_dims(m, l)?;
        let scale = 1.0 / (m as f64).sqrt();
        let mut w = Array2::zeros((m, l));
        for (col, &s) in sins.iter().enumerate() {
            for (row, ph) in beam_phases(m, spacing, s).into_iter().enumerate() {
                w[(row, col)] = ph * scale;
            }
        }
        Ok(Combiner::from_matrix(w, CombinerSpec::FullyConnected))
    }

    /// Partially connected combiner: column l steers its own subarray.
    pub fn pc_beams(m: usize, spacing: f64, subarray_size: usize, sins: &[f64]) -> Result<Combiner> {
        let l = sins.len();
        check_dims(m, l)?;
        if subarray_size * l != m {
            return Err(Error::Config(format!(
                "partially-connected requires subarray_size * L = M, got {subarray_size} * {l} != {m}"
            )));
        }
        let scale = 1.0 / (subarray_size as f64).sqrt();
        let mut w = Array2::zeros((m, l));
        for (col, &s) in sins.iter().enumerate() {
            let phases = beam_phases(m, spacing, s);
            for row in col * subarray_size..(col + 1) * subarray_size {
                w[(row, col)] = phases[row] * scale;
            }
        }
        Ok(Combiner::from_matrix(
            w,
            CombinerSpec::PartiallyConnected { subarray_size },
        ))
    }

    /// Switch-based combiner from explicit per-chain antenna subsets.
    pub fn se_subsets(m: usize, subsets: &[Vec<usize>]) -> Result<Combiner> {
        let l = subsets.len();
        check_dims(m, l)?;
        let active = subsets.first().map(|s| s.len()).unwrap_or(0);
        if active == 0 || active > m {
            return Err(Error::Config(format!(
                "switch-based requires 1 <= active_per_chain <= M, got {active}"
            )));
        }
        let c = 1.0 / (active as f64).sqrt();
        let mut w: Array2<Complex64> = Array2::zeros((m, l));
        for (col, subset) in subsets.iter().enumerate() {
            if subset.len() != active {
                return Err(Error::Config(
                    "switch-based subsets must share one active_per_chain".into(),
                ));
            }
            for &row in subset {
                if row >= m {
                    return Err(Error::Config(format!(
                        "switch-based antenna index {row} out of range for M = {m}"
                    )));
                }
                if w[(row, col)].norm() != 0.0 {
                    return Err(Error::Config(
                        "switch-based subset repeats an antenna".into(),
                    ));
                }
                w[(row, col)] = Complex64::new(c, 0.0);
            }
        }
        Ok(Combiner::from_matrix(
            w,
            CombinerSpec::SwitchBased {
                active_per_chain: active,
            },
        ))
    }

    /// Dynamic-subarray combiner from an explicit closed-switch set and
    /// per-column beam targets. `closed[col]` lists subarray indices.
    pub fn hds_pattern(
        m: usize,
        spacing: f64,
        num_subarrays: usize,
        closure_ratio: f64,
        closed: &[Vec<usize>],
        sins: &[f64],
    ) -> Result<Combiner> {
        let l = closed.len();
        check_dims(m, l)?;
        if sins.len() != l {
            return Err(Error::Config(
                "dynamic-subarray needs one beam target per column".into(),
            ));
        }
        if num_subarrays == 0 || m % num_subarrays != 0 {
            return Err(Error::Config(format!(
                "dynamic-subarray requires num_subarrays to divide M, got {num_subarrays} vs {m}"
            )));
        }
        if !(closure_ratio > 0.0 && closure_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "closure_ratio must lie in (0, 1], got {closure_ratio}"
            )));
        }
        let sub_size = m / num_subarrays;
        let mut w = Array2::zeros((m, l));
        for (col, subs) in closed.iter().enumerate() {
            if subs.is_empty() {
                return Err(Error::Config(format!(
                    "dynamic-subarray column {col} has no closed switch"
                )));
            }
            let active = subs.len() * sub_size;
            let scale = 1.0 / (active as f64).sqrt();
            let phases = beam_phases(m, spacing, sins[col]);
            for &s in subs {
                if s >= num_subarrays {
                    return Err(Error::Config(format!(
                        "dynamic-subarray switch index {s} out of range"
                    )));
                }
                for row in s * sub_size..(s + 1) * sub_size {
                    w[(row, col)] = phases[row] * scale;
                }
            }
        }
        Ok(Combiner::from_matrix(
            w,
            CombinerSpec::DynamicSubarray {
                num_subarrays,
                closure_ratio,
            },
        ))
    }

    pub fn num_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_chains(&self) -> usize {
        self.matrix.ncols()
    }

    /// Closed-switch count of a dynamic-subarray combiner (column support
    /// blocks); `None` for other variants.
    pub fn closure_count(&self) -> Option<usize> {
        match self.spec {
            CombinerSpec::DynamicSubarray { num_subarrays, .. } => {
                let sub_size = self.num_antennas() / num_subarrays;
                let mut count = 0;
                for col in 0..self.num_chains() {
                    for s in 0..num_subarrays {
                        let any = (s * sub_size..(s + 1) * sub_size)
                            .any(|r| self.matrix[(r, col)].norm() > 0.0);
                        if any {
                            count += 1;
                        }
                    }
                }
                Some(count)
            }
            _ => None,
        }
    }

    /// Whitening factor `(W^H W)^{-1/2}`, or `None` when the columns are
    /// already orthonormal and combined noise stays white.
    pub fn whitener(&self) -> Result<Option<Array2<Complex64>>> {
        if self.column_normalized {
            return Ok(None);
        }
        let g = linalg::adjoint(&self.matrix).dot(&self.matrix);
        Ok(Some(linalg::hermitian_inv_sqrt(&g)?))
    }

    /// Checks the matrix against its architecture invariants; empty = valid.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let m = self.num_antennas();
        let l = self.num_chains();
        let tol = 1e-10;

        for col in 0..l {
            let all_zero = (0..m).all(|row| self.matrix[(row, col)].norm() <= tol);
            if all_zero {
                violations.push(format!("column {col} is all-zero"));
            }
        }

        match self.spec {
            CombinerSpec::FullyConnected => {
                let want = 1.0 / (m as f64).sqrt();
                for row in 0..m {
                    for col in 0..l {
                        let got = self.matrix[(row, col)].norm();
                        if (got - want).abs() > tol {
                            violations.push(format!(
                                "fully-connected entry ({row},{col}) modulus {got:.6} != 1/sqrt(M)"
                            ));
                        }
                    }
                }
            }
            CombinerSpec::PartiallyConnected { subarray_size } => {
                if subarray_size * l != m {
                    violations.push(format!(
                        "partially-connected subarray_size * L = {} != M = {m}",
                        subarray_size * l
                    ));
                } else {
                    let want = 1.0 / (subarray_size as f64).sqrt();
                    for row in 0..m {
                        for col in 0..l {
                            let inside = row / subarray_size == col;
                            let got = self.matrix[(row, col)].norm();
                            if inside {
                                if (got - want).abs() > tol {
                                    violations.push(format!(
                                        "partially-connected entry ({row},{col}) modulus {got:.6} != 1/sqrt(S)"
                                    ));
                                }
                            } else if got > tol {
                                violations.push(format!(
                                    "partially-connected support violation at ({row},{col})"
                                ));
                            }
                        }
                    }
                }
            }
            CombinerSpec::SwitchBased { active_per_chain } => {
                if active_per_chain > m {
                    violations.push(format!(
                        "switch-based active_per_chain {active_per_chain} > M = {m}"
                    ));
                }
                let c = 1.0 / (active_per_chain as f64).sqrt();
                for col in 0..l {
                    let mut nonzeros = 0;
                    for row in 0..m {
                        let got = self.matrix[(row, col)];
                        if got.norm() > tol {
                            nonzeros += 1;
                            if (got - Complex64::new(c, 0.0)).norm() > tol {
                                violations.push(format!(
                                    "switch-based entry ({row},{col}) must equal 1/sqrt(active)"
                                ));
                            }
                        }
                    }
                    if nonzeros != active_per_chain {
                        violations.push(format!(
                            "switch-based column {col} has {nonzeros} active antennas, expected {active_per_chain}"
                        ));
                    }
                }
            }
            CombinerSpec::DynamicSubarray { num_subarrays, .. } => {
                if num_subarrays == 0 || m % num_subarrays != 0 {
                    violations.push(format!(
                        "dynamic-subarray num_subarrays {num_subarrays} must divide M = {m}"
                    ));
                } else {
                    let sub_size = m / num_subarrays;
                    for col in 0..l {
                        // Support must align to whole subarrays with one shared modulus.
                        let mut active_subs = 0;
                        for s in 0..num_subarrays {
                            let rows = s * sub_size..(s + 1) * sub_size;
                            let nz: Vec<bool> = rows
                                .clone()
                                .map(|r| self.matrix[(r, col)].norm() > tol)
                                .collect();
                            if nz.iter().any(|&b| b) {
                                active_subs += 1;
                                if !nz.iter().all(|&b| b) {
                                    violations.push(format!(
                                        "dynamic-subarray column {col} support breaks subarray {s}"
                                    ));
                                }
                            }
                        }
                        if active_subs > 0 {
                            let want = 1.0 / ((active_subs * sub_size) as f64).sqrt();
                            for row in 0..m {
                                let got = self.matrix[(row, col)].norm();
                                if got > tol && (got - want).abs() > tol {
                                    violations.push(format!(
                                        "dynamic-subarray entry ({row},{col}) modulus {got:.6} not uniform"
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }

        if self.column_normalized && !orthonormal_columns(&self.matrix) {
            violations.push("column_normalized flag set but W^H W != I".into());
        }
        violations
    }

    /// Replaces every nonzero entry's phase with an i.i.d. uniform draw,
    /// preserving moduli and support. Rejected for switch-based combiners,
    /// which have no phase shifters.
    pub fn randomize_phases(&self, seed: u64) -> Result<Combiner> {
        use rand::Rng;
        if matches!(self.spec, CombinerSpec::SwitchBased { .. }) {
            return Err(Error::Config(
                "switch-based combiners have no phase shifters to randomize".into(),
            ));
        }
        let mut rng = crate::seed::rng_for(seed, &[]);
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut w = self.matrix.clone();
        // Row-major draw order, fixed for reproducibility.
        for row in 0..w.nrows() {
            for col in 0..w.ncols() {
                let r = w[(row, col)].norm();
                if r > 0.0 {
                    w[(row, col)] = Complex64::from_polar(r, rng.random::<f64>() * two_pi);
                }
            }
        }
        Ok(Combiner::from_matrix(w, self.spec))
    }

    /// Rounds every nonzero entry's phase to the nearest multiple of
    /// `2 pi / 2^bits`, preserving the modulus.
    pub fn quantize_phases(&self, bits: u32) -> Result<Combiner> {
        if bits == 0 {
            return Err(Error::Config("phase quantization needs bits >= 1".into()));
        }
        let levels = 2f64.powi(bits as i32);
        let step = 2.0 * std::f64::consts::PI / levels;
        let mut w = self.matrix.clone();
        for z in w.iter_mut() {
            let r = z.norm();
            if r > 0.0 {
                let phase = (z.arg() / step).round() * step;
                *z = Complex64::from_polar(r, phase);
            }
        }
        Ok(Combiner::from_matrix(w, self.spec))
    }

    /// CSV export: one header line naming the spec, then one
    /// `row,col,re,im` line per nonzero entry.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let spec = match self.spec {
            CombinerSpec::FullyConnected => "spec=fully-connected".to_string(),
            CombinerSpec::PartiallyConnected { subarray_size } => {
                format!("spec=partially-connected subarray_size={subarray_size}")
            }
            CombinerSpec::SwitchBased { active_per_chain } => {
                format!("spec=switch-based active_per_chain={active_per_chain}")
            }
            CombinerSpec::DynamicSubarray {
                num_subarrays,
                closure_ratio,
            } => format!(
                "spec=dynamic-subarray num_subarrays={num_subarrays} closure_ratio={closure_ratio}"
            ),
        };
        writeln!(
            out,
            "# {spec} m={} l={} column_normalized={}",
            self.num_antennas(),
            self.num_chains(),
            self.column_normalized
        )?;
        for row in 0..self.num_antennas() {
            for col in 0..self.num_chains() {
                let z = self.matrix[(row, col)];
                if z.norm() > 0.0 {
                    writeln!(out, "{row},{col},{:.17e},{:.17e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`Combiner::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Combiner> {
        let mut lines = input.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(line))) => line,
            Some((_, Err(e))) => return Err(Error::Io(e)),
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty combiner file".into(),
                })
            }
        };
        let fields: std::collections::HashMap<String, String> = header
            .trim_start_matches('#')
            .split_whitespace()
            .filter_map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
            })
            .collect();
        let get = |key: &str| -> Result<&String> {
            fields.get(key).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("combiner header missing `{key}`"),
            })
        };
        let m: usize = get("m")?.parse().map_err(|_| Error::Parse {
            line: 1,
            message: "bad m".into(),
        })?;
        let l: usize = get("l")?.parse().map_err(|_| Error::Parse {
            line: 1,
            message: "bad l".into(),
        })?;
        let spec = match get("spec")?.as_str() {
            "fully-connected" => CombinerSpec::FullyConnected,
            "partially-connected" => CombinerSpec::PartiallyConnected {
                subarray_size: get("subarray_size")?.parse().map_err(|_| Error::Parse {
                    line: 1,
                    message: "bad subarray_size".into(),
                })?,
            },
            "switch-based" => CombinerSpec::SwitchBased {
                active_per_chain: get("active_per_chain")?.parse().map_err(|_| {
                    Error::Parse {
                        line: 1,
                        message: "bad active_per_chain".into(),
                    }
                })?,
            },
            "dynamic-subarray" => CombinerSpec::DynamicSubarray {
                num_subarrays: get("num_subarrays")?.parse().map_err(|_| Error::Parse {
                    line: 1,
                    message: "bad num_subarrays".into(),
                })?,
                closure_ratio: get("closure_ratio")?.parse().map_err(|_| Error::Parse {
                    line: 1,
                    message: "bad closure_ratio".into(),
                })?,
            },
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unknown combiner spec `{other}`"),
                })
            }
        };
        let mut w = Array2::zeros((m, l));
        for (idx, line) in lines {
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected row,col,re,im".into(),
                });
            }
            let parse_err = |msg: &str| Error::Parse {
                line: idx + 1,
                message: msg.into(),
            };
            let row: usize = parts[0].trim().parse().map_err(|_| parse_err("bad row"))?;
            let col: usize = parts[1].trim().parse().map_err(|_| parse_err("bad col"))?;
            let re: f64 = parts[2].trim().parse().map_err(|_| parse_err("bad re"))?;
            let im: f64 = parts[3].trim().parse().map_err(|_| parse_err("bad im"))?;
            if row >= m || col >= l {
                return Err(parse_err("entry index out of range"));
            }
            w[(row, col)] = Complex64::new(re, im);
        }
        Ok(Combiner::from_matrix(w, spec))
    }
}

fn check_dims(m: usize, l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::Config("combiner needs at least one RF chain".into()));
    }
    if l > m {
        return Err(Error::Config(format!(
            "RF-chain count L = {l} must not exceed M = {m}"
        )));
    }
    Ok(())
}

/// Builds the default combiner for an architecture: beam phases on the
/// uniform sin-domain grid for FC/PC/HDS, contiguous disjoint blocks for SE,
/// round-robin switch closure for HDS. Deterministic; the seed is reserved
/// for randomized variants (see `random_phase_combiner`).
pub fn build_combiner(spec: &CombinerSpec, m: usize, l: usize, _seed: u64) -> Result<Combiner> {
    build_combiner_for(spec, m, l, 0.5)
}

/// Same as [`build_combiner`] with explicit element spacing.
pub fn build_combiner_for(
    spec: &CombinerSpec,
    m: usize,
    l: usize,
    spacing: f64,
) -> Result<Combiner> {
    check_dims(m, l)?;
    let sins = default_beam_grid(l);
    match *spec {
        CombinerSpec::FullyConnected => Combiner::fc_beams(m, spacing, &sins),
        CombinerSpec::PartiallyConnected { subarray_size } => {
            Combiner::pc_beams(m, spacing, subarray_size, &sins)
        }
        CombinerSpec::SwitchBased { active_per_chain } => {
            if active_per_chain * l > m {
                return Err(Error::Config(format!(
                    "switch-based default uses disjoint contiguous blocks; \
                     active_per_chain * L = {} exceeds M = {m}",
                    active_per_chain * l
                )));
            }
            let subsets: Vec<Vec<usize>> = (0..l)
                .map(|col| (col * active_per_chain..(col + 1) * active_per_chain).collect())
                .collect();
            Combiner::se_subsets(m, &subsets)
        }
        CombinerSpec::DynamicSubarray {
            num_subarrays,
            closure_ratio,
        } => {
            if num_subarrays == 0 || m % num_subarrays != 0 {
                return Err(Error::Config(format!(
                    "dynamic-subarray requires num_subarrays to divide M, got {num_subarrays} vs {m}"
                )));
            }
            if !(closure_ratio > 0.0 && closure_ratio <= 1.0) {
                return Err(Error::Config(format!(
                    "closure_ratio must lie in (0, 1], got {closure_ratio}"
                )));
            }
            // Closed-switch count: round half up, capped by the switch grid.
            let raw = closure_ratio * (l * num_subarrays) as f64;
            let count = (raw + 0.5).floor() as usize;
            let count = count.min(l * num_subarrays);
            if count < l {
                return Err(Error::Config(format!(
                    "closure_ratio {closure_ratio} closes only {count} switches; \
                     at least L = {l} are needed (one per chain)"
                )));
            }
            // Round-robin closure: k-th closure goes to chain k % L, stepping
            // that chain's subarray forward every full round.
            let mut closed: Vec<Vec<usize>> = vec![Vec::new(); l];
            for k in 0..count {
                let chain = k % l;
                let sub = (chain + k / l) % num_subarrays;
                if !closed[chain].contains(&sub) {
                    closed[chain].push(sub);
                }
            }
            Combiner::hds_pattern(m, spacing, num_subarrays, closure_ratio, &closed, &sins)
        }
    }
}

/// Fully connected combiner with i.i.d. uniform random phases; the
/// angular-coverage workhorse of the pilot-aided estimator.
pub fn random_phase_combiner(m: usize, l: usize, seed: u64) -> Result<Combiner> {
    use rand::Rng;
    check_dims(m, l)?;
    let mut rng = crate::seed::rng_for(seed, &[]);
    let scale = 1.0 / (m as f64).sqrt();
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = Array2::from_shape_fn((m, l), |_| {
        Complex64::from_polar(scale, rng.random::<f64>() * two_pi)
    });
    Ok(Combiner::from_matrix(w, CombinerSpec::FullyConnected))
}

/// `Y = W^H X`, mapping antenna-domain snapshots to the RF-chain domain.
pub fn apply_combiner(c: &Combiner, x: &SnapshotMatrix) -> Result<SnapshotMatrix> {
    if x.domain != SnapshotDomain::Antenna {
        return Err(Error::Domain(
            "apply_combiner expects antenna-domain snapshots".into(),
        ));
    }
    if x.num_channels() != c.num_antennas() {
        return Err(Error::Dimension {
            expected: format!("{} rows", c.num_antennas()),
            got: format!("{} rows", x.num_channels()),
        });
    }
    let y = linalg::adjoint(&c.matrix).dot(&x.data);
    SnapshotMatrix::new(y, SnapshotDomain::RfChain)
}

/// Effective RF-chain-domain steering `W^H a(theta)`.
pub fn effective_steering(
    c: &Combiner,
    geometry: &ArrayGeometry,
    angle_deg: f64,
) -> Result<Array1<Complex64>> {
    if geometry.num_elements != c.num_antennas() {
        return Err(Error::Dimension {
            expected: format!("{} antennas", c.num_antennas()),
            got: format!("{} antennas", geometry.num_elements),
        });
    }
    let a = steering_vector(geometry, angle_deg)?;
    let l = c.num_chains();
    let mut out = Array1::zeros(l);
    for col in 0..l {
        let mut acc = Complex64::new(0.0, 0.0);
        for row in 0..c.num_antennas() {
            acc += c.matrix[(row, col)].conj() * a[row];
        }
        out[col] = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::generate_snapshots;
    use crate::array::{NoiseSpec, SourceScenario};

    #[test]
    fn fc_default_is_scaled_dft() {
        let c = build_combiner(&CombinerSpec::FullyConnected, 4, 4, 0).unwrap();
        // W = (1/2) DFT_4 with DFT[m,l] = exp(-2 pi i m l / 4).
        for row in 0..4 {
            for col in 0..4 {
                let want = Complex64::from_polar(
                    0.5,
                    -2.0 * std::f64::consts::PI * (row * col) as f64 / 4.0,
                );
                assert!(
                    (c.matrix[(row, col)] - want).norm() < 1e-12,
                    "({row},{col}): {} vs {want}",
                    c.matrix[(row, col)]
                );
            }
        }
        assert!(c.column_normalized);
        assert!(c.validate().is_empty());
    }

    #[test]
    fn fc_strided_subset_is_orthonormal() {
        let c = build_combiner(&CombinerSpec::FullyConnected, 16, 4, 0).unwrap();
        assert!(c.column_normalized);
        assert!(c.validate().is_empty());
    }

    #[test]
    fn pc_support_pattern() {
        let c = build_combiner(
            &CombinerSpec::PartiallyConnected { subarray_size: 2 },
            4,
            2,
            0,
        )
        .unwrap();
        let w = &c.matrix;
        for row in 0..4 {
            for col in 0..2 {
                let inside = row / 2 == col;
                if inside {
                    assert!((w[(row, col)].norm() - (0.5f64).sqrt()).abs() < 1e-12);
                } else {
                    assert_eq!(w[(row, col)], Complex64::new(0.0, 0.0));
                }
            }
        }
        assert!(c.validate().is_empty());
    }

    #[test]
    fn pc_requires_exact_partition() {
        let err = build_combiner(
            &CombinerSpec::PartiallyConnected { subarray_size: 3 },
            4,
            2,
            0,
        );
        assert!(matches!(err, Err(Error::Config(msg)) if msg.contains("subarray_size")));
    }

    #[test]
    fn se_identity_selection_passes_through() {
        let c = build_combiner(
            &CombinerSpec::SwitchBased { active_per_chain: 1 },
            4,
            4,
            0,
        )
        .unwrap();
        let sc = SourceScenario::unit_power(vec![10.0], 8).unwrap();
        let g = crate::array::ArrayGeometry::half_wavelength(4).unwrap();
        let x = generate_snapshots(&g, &sc, &NoiseSpec::new(0.1).unwrap(), 5).unwrap();
        let y = apply_combiner(&c, &x).unwrap();
        assert_eq!(y.domain, crate::array::SnapshotDomain::RfChain);
        for i in 0..4 {
            for t in 0..8 {
                assert!((y.data[(i, t)] - x.data[(i, t)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn hds_minimal_closure_recovers_pc_support() {
        // closure_ratio = 1/num_subarrays closes exactly one subarray per
        // chain, the PC pattern; ratio = 1 closes everything (FC-like).
        let l = 2;
        let c = build_combiner(
            &CombinerSpec::DynamicSubarray {
                num_subarrays: l,
                closure_ratio: 1.0 / l as f64,
            },
            4,
            l,
            0,
        )
        .unwrap();
        assert_eq!(c.closure_count(), Some(2));
        for row in 0..4 {
            for col in 0..l {
                let inside = row / 2 == col;
                assert_eq!(c.matrix[(row, col)].norm() > 0.0, inside);
            }
        }
        let full = build_combiner(
            &CombinerSpec::DynamicSubarray {
                num_subarrays: l,
                closure_ratio: 1.0,
            },
            4,
            l,
            0,
        )
        .unwrap();
        assert_eq!(full.closure_count(), Some(4));
        assert!(full.matrix.iter().all(|z| z.norm() > 0.0));
        assert!(c.validate().is_empty());
        assert!(full.validate().is_empty());
    }

    #[test]
    fn hds_closure_monotone_in_ratio() {
        let mut last = 0usize;
        for k in 1..=8 {
            let ratio = k as f64 / 8.0;
            let c = build_combiner(
                &CombinerSpec::DynamicSubarray {
                    num_subarrays: 4,
                    closure_ratio: ratio,
                },
                8,
                2,
                0,
            );
            let Ok(c) = c else { continue };
            let nonzeros = c.matrix.iter().filter(|z| z.norm() > 0.0).count();
            assert!(nonzeros >= last, "ratio {ratio}: {nonzeros} < {last}");
            last = nonzeros;
        }
    }

    #[test]
    fn apply_combiner_matches_direct_multiply() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(31, &[]);
        let c = build_combiner(&CombinerSpec::FullyConnected, 4, 2, 0).unwrap();
        let x = Array2::from_shape_fn((4, 3), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let xm = SnapshotMatrix::new(x.clone(), SnapshotDomain::Antenna).unwrap();
        let y = apply_combiner(&c, &xm).unwrap();
        for p in 0..2 {
            for t in 0..3 {
                let mut want = Complex64::new(0.0, 0.0);
                for i in 0..4 {
                    want += c.matrix[(i, p)].conj() * x[(i, t)];
                }
                assert!((y.data[(p, t)] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_one_snapshots_give_constant_rows() {
        let g = crate::array::ArrayGeometry::half_wavelength(4).unwrap();
        let a = steering_vector(&g, 17.0).unwrap();
        let x = Array2::from_shape_fn((4, 5), |(i, _)| a[i]);
        let xm = SnapshotMatrix::new(x, SnapshotDomain::Antenna).unwrap();
        let c = build_combiner(&CombinerSpec::FullyConnected, 4, 2, 0).unwrap();
        let y = apply_combiner(&c, &xm).unwrap();
        let expect = effective_steering(&c, &g, 17.0).unwrap();
        for p in 0..2 {
            for t in 0..5 {
                assert!((y.data[(p, t)] - expect[p]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn effective_steering_dft_beam_is_selective() {
        let g = crate::array::ArrayGeometry::half_wavelength(4).unwrap();
        let c = build_combiner(&CombinerSpec::FullyConnected, 4, 4, 0).unwrap();
        // Beam column 3 targets sin = +1/2, i.e. theta = 30 deg.
        let v = effective_steering(&c, &g, 30.0).unwrap();
        assert!((v[3].norm() - 2.0).abs() < 1e-10, "{v:?}");
        for p in 0..3 {
            assert!(v[p].norm() <= 1e-10, "sidelobe {p}: {}", v[p].norm());
        }
    }

    #[test]
    fn effective_steering_is_bounded_by_projection() {
        let g = crate::array::ArrayGeometry::half_wavelength(16).unwrap();
        let c = build_combiner(&CombinerSpec::FullyConnected, 16, 4, 0).unwrap();
        for &theta in &[-71.3, -12.0, 3.7, 44.0, 88.0] {
            let v = effective_steering(&c, &g, theta).unwrap();
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(norm <= 4.0 + 1e-9);
        }
    }

    #[test]
    fn all_ones_column_collects_full_gain() {
        let g = crate::array::ArrayGeometry::half_wavelength(9).unwrap();
        let c = Combiner::fc_beams(9, 0.5, &[0.0]).unwrap();
        let v = effective_steering(&c, &g, 0.0).unwrap();
        assert!((v[0] - Complex64::new(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn validate_flags_broken_fc_entry() {
        let mut c = build_combiner(&CombinerSpec::FullyConnected, 4, 2, 0).unwrap();
        c.matrix[(1, 0)] = Complex64::new(0.0, 0.0);
        let violations = c.validate();
        assert!(violations.iter().any(|v| v.contains("modulus")));
    }

    #[test]
    fn validate_flags_pc_cross_block() {
        let mut c = build_combiner(
            &CombinerSpec::PartiallyConnected { subarray_size: 2 },
            4,
            2,
            0,
        )
        .unwrap();
        c.matrix[(0, 1)] = Complex64::new(0.5, 0.0);
        let violations = c.validate();
        assert!(violations.iter().any(|v| v.contains("support")));
    }

    #[test]
    fn quantize_one_bit_snaps_to_real_axis() {
        let c = Combiner::fc_beams(3, 0.5, &[0.0]).unwrap();
        let mut modified = c.clone();
        let r = modified.matrix[(1, 0)].norm();
        modified.matrix[(1, 0)] = Complex64::from_polar(r, std::f64::consts::PI / 3.0);
        let q = modified.quantize_phases(1).unwrap();
        // pi/3 is closer to 0 than to pi.
        assert!((q.matrix[(1, 0)] - Complex64::new(r, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn quantize_many_bits_is_identity() {
        let c = build_combiner(&CombinerSpec::FullyConnected, 8, 4, 0).unwrap();
        let q = c.quantize_phases(40).unwrap();
        for (a, b) in c.matrix.iter().zip(q.matrix.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(q.validate().is_empty());
    }

    #[test]
    fn csv_round_trip_preserves_combiner() {
        let c = build_combiner(
            &CombinerSpec::DynamicSubarray {
                num_subarrays: 4,
                closure_ratio: 0.5,
            },
            8,
            2,
            0,
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = Combiner::read_csv(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(back.spec, c.spec);
        assert_eq!(back.column_normalized, c.column_normalized);
        for (a, b) in c.matrix.iter().zip(back.matrix.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn every_default_build_validates_clean() {
        let specs = [
            CombinerSpec::FullyConnected,
            CombinerSpec::PartiallyConnected { subarray_size: 4 },
            CombinerSpec::SwitchBased { active_per_chain: 2 },
            CombinerSpec::DynamicSubarray {
                num_subarrays: 4,
                closure_ratio: 0.6,
            },
        ];
        for spec in specs {
            for seed in 0..100u64 {
                let c = build_combiner(&spec, 8, 2, seed).unwrap();
                assert!(c.validate().is_empty(), "{spec:?} seed {seed}");
                if c.column_normalized {
                    assert!(orthonormal_columns(&c.matrix));
                }
            }
        }
    }

    #[test]
    fn random_phase_combiner_is_seeded_fc() {
        let a = random_phase_combiner(8, 2, 1).unwrap();
        let b = random_phase_combiner(8, 2, 2).unwrap();
        assert!(a.validate().is_empty());
        assert_ne!(a.matrix, b.matrix);
        let a2 = random_phase_combiner(8, 2, 1).unwrap();
        assert_eq!(a.matrix, a2.matrix);
    }
}
