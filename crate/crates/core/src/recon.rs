//! Full-dimensional spatial-covariance reconstruction from RF-chain-domain
//! measurements collected over a sequence of analog combiners.
//!
//! Three routes are provided. The entry-wise route treats the hybrid
//! covariance of every training slot as a linear projection of the unknown
//! M x M covariance and solves the stacked least-squares system. The Toeplitz
//! route exploits the ULA shift invariance and solves for the 2M-1 real lag
//! parameters instead. The beamspace route inverts the stacked beam map on
//! cross-combiner correlation blocks. All routes refuse to return answers
//! from rank-deficient or badly conditioned operators unless explicitly told
//! to, and report numerical rank and a condition estimate instead.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::array::{SnapshotDomain, SnapshotMatrix};
use crate::combiner::{default_beam_grid, Combiner, CombinerSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, QrPivot};

/// What a covariance matrix claims to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceRole {
    True,
    Sample,
    Hybrid,
    Reconstructed,
}

/// Hermitian complex covariance with a role tag.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub data: Array2<Complex64>,
    pub role: CovarianceRole,
}

impl CovarianceMatrix {
    pub fn new(data: Array2<Complex64>, role: CovarianceRole) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::Dimension {
                expected: "square matrix".into(),
                got: format!("{}x{}", data.nrows(), data.ncols()),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("covariance has non-finite entries".into()));
        }
        let norm = linalg::frob(&data);
        if norm > 0.0 && linalg::hermitian_defect(&data) > 1e-10 * norm {
            return Err(Error::Domain(
                "covariance is not Hermitian within 1e-10 relative tolerance".into(),
            ));
        }
        Ok(CovarianceMatrix { data, role })
    }

    pub fn dimension(&self) -> usize {
        self.data.nrows()
    }
}

/// Sample covariance `(1/N) Y Y^H`; role follows the snapshot domain.
pub fn sample_scm(y: &SnapshotMatrix) -> Result<CovarianceMatrix> {
    let n = y.num_snapshots();
    if n == 0 {
        return Err(Error::Domain("sample covariance needs N >= 1".into()));
    }
    let scale = 1.0 / n as f64;
    let raw = y.data.dot(&linalg::adjoint(&y.data));
    let r = linalg::hermitian_part(&raw).mapv(|z| z * scale);
    let role = match y.domain {
        SnapshotDomain::Antenna => CovarianceRole::Sample,
        SnapshotDomain::RfChain => CovarianceRole::Hybrid,
    };
    CovarianceMatrix::new(r, role)
}

/// Ordered combiner sequence with a per-slot snapshot budget.
#[derive(Debug, Clone)]
pub struct ReconstructionPlan {
    pub combiners: Vec<Combiner>,
    pub snapshots_per_slot: usize,
}

impl ReconstructionPlan {
    pub fn new(combiners: Vec<Combiner>, snapshots_per_slot: usize) -> Result<Self> {
        if combiners.is_empty() {
            return Err(Error::Config("plan needs at least one combiner".into()));
        }
        if snapshots_per_slot == 0 {
            return Err(Error::Config("snapshots_per_slot must be >= 1".into()));
        }
        let m = combiners[0].num_antennas();
        let l = combiners[0].num_chains();
        for (t, c) in combiners.iter().enumerate() {
            if c.num_antennas() != m || c.num_chains() != l {
                return Err(Error::Config(format!(
                    "plan combiner {t} is {}x{}, expected {m}x{l}",
                    c.num_antennas(),
                    c.num_chains()
                )));
            }
        }
        Ok(ReconstructionPlan {
            combiners,
            snapshots_per_slot,
        })
    }

    pub fn num_slots(&self) -> usize {
        self.combiners.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.combiners[0].num_antennas()
    }

    pub fn num_chains(&self) -> usize {
        self.combiners[0].num_chains()
    }

    /// Minimal slot count for the entry-wise system to be determined by
    /// equation counting: `ceil(M^2 / L^2)`.
    pub fn min_slots_entrywise(m: usize, l: usize) -> usize {
        m * m / (l * l) + usize::from((m * m) % (l * l) != 0)
    }

    /// Fully connected DFT-grid plan: `slots` combiners whose columns cycle
    /// through the M-point beam grid, chosen greedily so that every beam and
    /// then every beam pair is observed as early as possible.
    pub fn dft_cycle(
        m: usize,
        spacing: f64,
        l: usize,
        slots: usize,
        snapshots_per_slot: usize,
    ) -> Result<Self> {
        let grid = default_beam_grid(m);
        let groups = coverage_groups(m, l, slots);
        let combiners = groups
            .iter()
            .map(|g| {
                let sins: Vec<f64> = g.iter().map(|&b| grid[b]).collect();
                Combiner::fc_beams(m, spacing, &sins)
            })
            .collect::<Result<Vec<_>>>()?;
        ReconstructionPlan::new(combiners, snapshots_per_slot)
    }

    /// Contiguous beam windows of L grid-spaced beams, one window per slot,
    /// sweeping the sin domain; slot t's window is additionally shifted by
    /// `t / slots` of a grid cell. The fractional shifts keep the columns of
    /// every slot orthonormal (grid spacing is unchanged) while breaking the
    /// aliasing that makes pure DFT-grid windows fall short of the full
    /// 2M-1 lag parameters. This is the default measurement plan of the
    /// Toeplitz reconstruction pipeline.
    pub fn shifted_windows(
        m: usize,
        spacing: f64,
        l: usize,
        slots: usize,
        snapshots_per_slot: usize,
    ) -> Result<Self> {
        if slots == 0 {
            return Err(Error::Config("plan needs at least one slot".into()));
        }
        let cell = 2.0 / m as f64;
        let combiners = (0..slots)
            .map(|t| {
                let shift = cell * t as f64 / slots as f64;
                let start = (t * l) % m;
                let sins: Vec<f64> = (0..l)
                    .map(|j| {
                        let base = -2.0 * ((start + j) as f64) / m as f64;
                        crate::combiner::wrap_sin(base + shift)
                    })
                    .collect();
                Combiner::fc_beams(m, spacing, &sins)
            })
            .collect::<Result<Vec<_>>>()?;
        ReconstructionPlan::new(combiners, snapshots_per_slot)
    }

    /// Builds a plan for the given architecture that makes the entry-wise
    /// system full rank, growing the slot count until the identifiability
    /// check passes. Deterministic for a given `seed`.
    pub fn full_rank(
        spec: &CombinerSpec,
        m: usize,
        spacing: f64,
        l: usize,
        snapshots_per_slot: usize,
        seed: u64,
    ) -> Result<Self> {
        let min_t = Self::min_slots_entrywise(m, l);
        let cap = 4 * min_t + 8;
        // Slot content varies per architecture: FC and single-antenna SE use
        // deterministic coverage groups (full rank is equivalent to pair
        // coverage for selection-structured slots); PC and HDS vary beam
        // phases pseudo-randomly, which makes the stacked operator generic.
        let mut t = match spec {
            CombinerSpec::FullyConnected | CombinerSpec::SwitchBased { .. } => min_t,
            _ => (min_t * 5) / 4 + 1,
        };
        loop {
            let combiners = build_slot_family(spec, m, spacing, l, t, seed)?;
            let plan = ReconstructionPlan::new(combiners, snapshots_per_slot)?;
            let report = identifiability_report(&plan, ReconstructionMode::Entrywise);
            if report.feasible {
                return Ok(plan);
            }
            if t >= cap {
                return Err(Error::Identifiability {
                    rank: report.numerical_rank,
                    required: m * m,
                    condition: report.condition_estimate,
                });
            }
            t = (t + t / 4 + 1).min(cap);
        }
    }
}

/// Builds the architecture-specific slot family at a fixed slot count
/// without any feasibility check (diagnostics and tests).
pub fn slot_family_probe(
    spec: &CombinerSpec,
    m: usize,
    spacing: f64,
    l: usize,
    slots: usize,
    seed: u64,
) -> Result<Vec<Combiner>> {
    build_slot_family(spec, m, spacing, l, slots, seed)
}

fn build_slot_family(
    spec: &CombinerSpec,
    m: usize,
    spacing: f64,
    l: usize,
    slots: usize,
    seed: u64,
) -> Result<Vec<Combiner>> {
    use rand::Rng;
    match *spec {
        CombinerSpec::FullyConnected => {
            let grid = default_beam_grid(m);
            coverage_groups(m, l, slots)
                .iter()
                .map(|g| {
                    let sins: Vec<f64> = g.iter().map(|&b| grid[b]).collect();
                    Combiner::fc_beams(m, spacing, &sins)
                })
                .collect()
        }
        CombinerSpec::SwitchBased { active_per_chain } => {
            if active_per_chain != 1 {
                // Multi-antenna switch groups observe subset sums only;
                // shuffled disjoint partitions vary the sums enough for the
                // stacked system to become generic.
                if active_per_chain * l > m {
                    return Err(Error::Config(format!(
                        "switch-based plan needs active_per_chain * L <= M, got {} > {m}",
                        active_per_chain * l
                    )));
                }
                return (0..slots)
                    .map(|t| {
                        use rand::seq::SliceRandom;
                        let mut rng = crate::seed::rng_for(seed, &[t as u64, 3]);
                        let mut antennas: Vec<usize> = (0..m).collect();
                        antennas.shuffle(&mut rng);
                        let subsets: Vec<Vec<usize>> = (0..l)
                            .map(|col| {
                                antennas[col * active_per_chain..(col + 1) * active_per_chain]
                                    .to_vec()
                            })
                            .collect();
                        Combiner::se_subsets(m, &subsets)
                    })
                    .collect();
            }
            coverage_groups(m, l, slots)
                .iter()
                .map(|g| {
                    let subsets: Vec<Vec<usize>> = g.iter().map(|&a| vec![a]).collect();
                    Combiner::se_subsets(m, &subsets)
                })
                .collect()
        }
        CombinerSpec::PartiallyConnected { subarray_size } => (0..slots)
            .map(|t| {
                // Steered phases cannot identify the diagonal sub-blocks of R
                // (a chain only probes its own subarray's lag differences), so
                // slot phases are drawn per element.
                let base = Combiner::pc_beams(m, spacing, subarray_size, &vec![0.0; l])?;
                base.randomize_phases(crate::seed::derive_seed(seed, &[t as u64, 1]))
            })
            .collect(),
        CombinerSpec::DynamicSubarray {
            num_subarrays,
            closure_ratio,
        } => {
            if num_subarrays == 0 || m % num_subarrays != 0 {
                return Err(Error::Config(format!(
                    "dynamic-subarray requires num_subarrays to divide M, got {num_subarrays} vs {m}"
                )));
            }
            let raw = closure_ratio * (l * num_subarrays) as f64;
            let count = ((raw + 0.5).floor() as usize).min(l * num_subarrays);
            if count < l {
                return Err(Error::Config(format!(
                    "closure_ratio {closure_ratio} closes fewer than L = {l} switches"
                )));
            }
            (0..slots)
                .map(|t| {
                    let mut closed: Vec<Vec<usize>> = vec![Vec::new(); l];
                    for k in 0..count {
                        let chain = k % l;
                        let sub = (chain + k / l + t) % num_subarrays;
                        if !closed[chain].contains(&sub) {
                            closed[chain].push(sub);
                        }
                    }
                    let base = Combiner::hds_pattern(
                        m,
                        spacing,
                        num_subarrays,
                        closure_ratio,
                        &closed,
                        &vec![0.0; l],
                    )?;
                    base.randomize_phases(crate::seed::derive_seed(seed, &[t as u64, 2]))
                })
                .collect()
        }
    }
}

/// Greedy enumeration of `slots` groups of `l` indices out of `m`, scoring
/// new elements and new pairs so coverage completes as early as possible.
/// Candidates are arithmetic progressions `(o + j*s) mod m`.
fn coverage_groups(m: usize, l: usize, slots: usize) -> Vec<Vec<usize>> {
    let mut pair_count = vec![0u32; m * m];
    let mut elem_count = vec![0u32; m];
    let mut groups = Vec::with_capacity(slots);

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    for s in 1..=m.max(1) {
        for o in 0..m {
            let g: Vec<usize> = (0..l).map(|j| (o + j * s) % m).collect();
            let mut sorted = g.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() == l {
                candidates.push(g);
            }
        }
        if l == 1 {
            break;
        }
    }

    for _ in 0..slots {
        let mut best_idx = 0;
        let mut best_score = i64::MIN;
        let mut best_load = u64::MAX;
        for (idx, g) in candidates.iter().enumerate() {
            let mut new_pairs = 0i64;
            let mut new_elems = 0i64;
            let mut load = 0u64;
            for (a, &i) in g.iter().enumerate() {
                if elem_count[i] == 0 {
                    new_elems += 1;
                }
                load += elem_count[i] as u64;
                for &j in g.iter().skip(a + 1) {
                    if pair_count[i * m + j] == 0 {
                        new_pairs += 1;
                    }
                    load += pair_count[i * m + j] as u64;
                }
            }
            let score = 2 * new_pairs + new_elems;
            if score > best_score || (score == best_score && load < best_load) {
                best_score = score;
                best_load = load;
                best_idx = idx;
            }
        }
        let g = candidates[best_idx].clone();
        for (a, &i) in g.iter().enumerate() {
            elem_count[i] += 1;
            for &j in g.iter().skip(a + 1) {
                pair_count[i * m + j] += 1;
                pair_count[j * m + i] += 1;
            }
        }
        groups.push(g);
    }
    groups
}

/// Splits antenna-domain snapshots across the plan's slots (consecutive
/// blocks of `snapshots_per_slot` columns, remainder folded into the last
/// slot) and returns the per-slot hybrid sample covariances.
pub fn hybrid_scms_from_snapshots(
    plan: &ReconstructionPlan,
    x: &SnapshotMatrix,
) -> Result<Vec<CovarianceMatrix>> {
    let t = plan.num_slots();
    let nps = plan.snapshots_per_slot;
    if x.num_snapshots() < t * nps {
        return Err(Error::Dimension {
            expected: format!("at least {} snapshots", t * nps),
            got: format!("{}", x.num_snapshots()),
        });
    }
    let mut out = Vec::with_capacity(t);
    for (slot, c) in plan.combiners.iter().enumerate() {
        let start = slot * nps;
        let stop = if slot + 1 == t {
            x.num_snapshots()
        } else {
            start + nps
        };
        let block = x.data.slice(ndarray::s![.., start..stop]).to_owned();
        let xm = SnapshotMatrix::new(block, SnapshotDomain::Antenna)?;
        let y = crate::combiner::apply_combiner(c, &xm)?;
        out.push(sample_scm(&y)?);
    }
    Ok(out)
}

/// Exact hybrid covariances `W_t^H R W_t` (for tests and noise-free checks).
pub fn exact_hybrid_scms(
    plan: &ReconstructionPlan,
    r: &CovarianceMatrix,
) -> Result<Vec<CovarianceMatrix>> {
    plan.combiners
        .iter()
        .map(|c| {
            let wh = linalg::adjoint(&c.matrix);
            let hybrid = wh.dot(&r.data).dot(&c.matrix);
            CovarianceMatrix::new(linalg::hermitian_part(&hybrid), CovarianceRole::Hybrid)
        })
        .collect()
}

/// Which reconstruction parameterization a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionMode {
    Entrywise,
    Toeplitz,
}

/// Rank/conditioning diagnostics of the stacked reconstruction operator.
#[derive(Debug, Clone, Copy)]
pub struct IdentifiabilityReport {
    pub numerical_rank: usize,
    pub condition_estimate: f64,
    pub required_rank: usize,
    pub feasible: bool,
}

/// Conditioning beyond this triggers an identifiability error instead of a
/// noise-amplifying solution.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Rank and condition of the stacked operator in the requested mode;
/// feasible iff the numerical rank reaches M^2 (entry-wise) or 2M-1
/// (Toeplitz).
pub fn identifiability_report(
    plan: &ReconstructionPlan,
    mode: ReconstructionMode,
) -> IdentifiabilityReport {
    let m = plan.num_antennas();
    match mode {
        ReconstructionMode::Entrywise => {
            let a = assemble_entrywise(plan);
            let (rank, cond) = linalg::rank_and_condition(&a);
            IdentifiabilityReport {
                numerical_rank: rank,
                condition_estimate: cond,
                required_rank: m * m,
                feasible: rank == m * m,
            }
        }
        ReconstructionMode::Toeplitz => {
            let (a, _groups) = assemble_toeplitz(plan);
            let (rank, cond) = linalg::rank_and_condition(&a);
            IdentifiabilityReport {
                numerical_rank: rank,
                condition_estimate: cond,
                required_rank: 2 * m - 1,
                feasible: rank == 2 * m - 1,
            }
        }
    }
}

/// Row-major vec: `vec(R)[i*M + j] = R[i, j]`.
fn assemble_entrywise(plan: &ReconstructionPlan) -> Array2<Complex64> {
    let m = plan.num_antennas();
    let l = plan.num_chains();
    let t = plan.num_slots();
    let mut a = Array2::zeros((t * l * l, m * m));
    for (slot, c) in plan.combiners.iter().enumerate() {
        let w = &c.matrix;
        for p in 0..l {
            for q in 0..l {
                let row = slot * l * l + p * l + q;
                for i in 0..m {
                    for j in 0..m {
                        a[(row, i * m + j)] = w[(i, p)].conj() * w[(j, q)];
                    }
                }
            }
        }
    }
    a
}

fn stack_hybrids(plan: &ReconstructionPlan, hybrids: &[CovarianceMatrix]) -> Result<Array1<Complex64>> {
    let l = plan.num_chains();
    let t = plan.num_slots();
    if hybrids.len() != t {
        return Err(Error::Dimension {
            expected: format!("{t} hybrid covariances"),
            got: format!("{}", hybrids.len()),
        });
    }
    let mut b = Array1::zeros(t * l * l);
    for (slot, h) in hybrids.iter().enumerate() {
        if h.dimension() != l {
            return Err(Error::Dimension {
                expected: format!("{l}x{l} hybrid covariance"),
                got: format!("{0}x{0}", h.dimension()),
            });
        }
        for p in 0..l {
            for q in 0..l {
                b[slot * l * l + p * l + q] = h.data[(p, q)];
            }
        }
    }
    Ok(b)
}

/// Prefactored entry-wise reconstruction operator; build once per plan,
/// solve once per measurement set.
pub struct EntrywiseSolver {
    qr: QrPivot,
    m: usize,
    ncols: usize,
    allow_minimum_norm: bool,
    a: Array2<Complex64>,
}

impl EntrywiseSolver {
    pub fn new(plan: &ReconstructionPlan) -> Result<Self> {
        let m = plan.num_antennas();
        let l = plan.num_chains();
        let t = plan.num_slots();
        if t * l * l < m * m {
            return Err(Error::Identifiability {
                rank: t * l * l,
                required: m * m,
                condition: f64::INFINITY,
            });
        }
        let a = assemble_entrywise(plan);
        let qr = QrPivot::new(&a);
        Ok(EntrywiseSolver {
            qr,
            m,
            ncols: m * m,
            allow_minimum_norm: false,
            a,
        })
    }

    /// Opt in to the minimum-norm solution on rank-deficient systems.
    pub fn with_minimum_norm(mut self) -> Self {
        self.allow_minimum_norm = true;
        self
    }

    pub fn solve(
        &self,
        plan: &ReconstructionPlan,
        hybrids: &[CovarianceMatrix],
    ) -> Result<CovarianceMatrix> {
        let b = stack_hybrids(plan, hybrids)?;
        let bm = b.clone().insert_axis(ndarray::Axis(1));
        let rank = self.qr.default_rank();
        let x = if rank < self.ncols {
            if !self.allow_minimum_norm {
                return Err(Error::Identifiability {
                    rank,
                    required: self.ncols,
                    condition: self.qr.condition_estimate(),
                });
            }
            linalg::pinv_solve(&self.a, &bm)
        } else {
            let cond = self.qr.condition_estimate();
            if cond > CONDITION_LIMIT {
                return Err(Error::Identifiability {
                    rank,
                    required: self.ncols,
                    condition: cond,
                });
            }
            self.qr.solve(&bm)?
        };
        let m = self.m;
        let mut r = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                r[(i, j)] = x[(i * m + j, 0)];
            }
        }
        CovarianceMatrix::new(linalg::hermitian_part(&r), CovarianceRole::Reconstructed)
    }
}

/// Entry-wise reconstruction: least-squares solution of the stacked system
/// `{W_t^H R W_t = R_y^(t)}`, Hermitian-symmetrized.
pub fn entrywise_reconstruct(
    plan: &ReconstructionPlan,
    hybrids: &[CovarianceMatrix],
) -> Result<CovarianceMatrix> {
    EntrywiseSolver::new(plan)?.solve(plan, hybrids)
}

/// Prefactored Toeplitz-parameterized solver.
///
/// The stacked system is consolidated before factoring: equations with
/// bit-identical coefficient rows (repeated beam pairs across slots) are
/// merged and their right-hand sides averaged. On orthonormal DFT-grid
/// plans this makes the lag solve an orthogonal projection of the
/// entry-wise solution onto the Toeplitz subspace.
pub struct ToeplitzSolver {
    qr: QrPivot,
    m: usize,
    /// Flat equation indices (slot*L*L + p*L + q) merged into each row.
    groups: Vec<Vec<usize>>,
}

fn toeplitz_complex_rows(plan: &ReconstructionPlan) -> Vec<Vec<Complex64>> {
    let m = plan.num_antennas();
    let l = plan.num_chains();
    let mut rows = Vec::with_capacity(plan.num_slots() * l * l);
    for c in &plan.combiners {
        let w = &c.matrix;
        for p in 0..l {
            for q in 0..l {
                // coef_plus[k] multiplies r_k, coef_minus[k] multiplies conj(r_k)
                let mut coef_plus = vec![Complex64::new(0.0, 0.0); m];
                let mut coef_minus = vec![Complex64::new(0.0, 0.0); m];
                for i in 0..m {
                    for j in 0..m {
                        let cij = w[(i, p)].conj() * w[(j, q)];
                        if i >= j {
                            coef_plus[i - j] += cij;
                        } else {
                            coef_minus[j - i] += cij;
                        }
                    }
                }
                // Unknowns: [r0, Re r_1..Re r_{M-1}, Im r_1..Im r_{M-1}]
                let mut row = vec![Complex64::new(0.0, 0.0); 2 * m - 1];
                row[0] = coef_plus[0];
                for k in 1..m {
                    row[k] = coef_plus[k] + coef_minus[k];
                    row[m - 1 + k] = (coef_plus[k] - coef_minus[k]) * Complex64::new(0.0, 1.0);
                }
                rows.push(row);
            }
        }
    }
    rows
}

/// Deduplicated real system: returns the real-embedded matrix (as complex
/// with zero imaginary parts) and the merge groups.
fn assemble_toeplitz(plan: &ReconstructionPlan) -> (Array2<Complex64>, Vec<Vec<usize>>) {
    let m = plan.num_antennas();
    let rows = toeplitz_complex_rows(plan);

    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut unique_rows: Vec<Vec<Complex64>> = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let key: Vec<u64> = row
            .iter()
            .flat_map(|z| [z.re.to_bits(), z.im.to_bits()])
            .collect();
        match seen.get(&key) {
            Some(&g) => groups[g].push(idx),
            None => {
                seen.insert(key, groups.len());
                groups.push(vec![idx]);
                unique_rows.push(row.clone());
            }
        }
    }

    let ncols = 2 * m - 1;
    let mut a = Array2::zeros((2 * unique_rows.len(), ncols));
    for (g, row) in unique_rows.iter().enumerate() {
        for (col, z) in row.iter().enumerate() {
            a[(2 * g, col)] = Complex64::new(z.re, 0.0);
            a[(2 * g + 1, col)] = Complex64::new(z.im, 0.0);
        }
    }
    (a, groups)
}

impl ToeplitzSolver {
    pub fn new(plan: &ReconstructionPlan) -> Result<Self> {
        let m = plan.num_antennas();
        let (a, groups) = assemble_toeplitz(plan);
        let qr = QrPivot::new(&a);
        Ok(ToeplitzSolver { qr, m, groups })
    }

    pub fn solve(
        &self,
        plan: &ReconstructionPlan,
        hybrids: &[CovarianceMatrix],
    ) -> Result<CovarianceMatrix> {
        let b = stack_hybrids(plan, hybrids)?;
        let m = self.m;
        let ncols = 2 * m - 1;
        let rank = self.qr.default_rank();
        if rank < ncols {
            return Err(Error::Identifiability {
                rank,
                required: ncols,
                condition: self.qr.condition_estimate(),
            });
        }
        let cond = self.qr.condition_estimate();
        if cond > CONDITION_LIMIT {
            return Err(Error::Identifiability {
                rank,
                required: ncols,
                condition: cond,
            });
        }
        let mut rhs = Array2::zeros((2 * self.groups.len(), 1));
        for (g, members) in self.groups.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &idx in members {
                acc += b[idx];
            }
            let avg = acc / members.len() as f64;
            rhs[(2 * g, 0)] = Complex64::new(avg.re, 0.0);
            rhs[(2 * g + 1, 0)] = Complex64::new(avg.im, 0.0);
        }
        let u = self.qr.solve(&rhs)?;
        // Rebuild the Hermitian Toeplitz matrix from the lags.
        let mut lags = vec![Complex64::new(0.0, 0.0); m];
        lags[0] = Complex64::new(u[(0, 0)].re, 0.0);
        for k in 1..m {
            lags[k] = Complex64::new(u[(k, 0)].re, u[(m - 1 + k, 0)].re);
        }
        let mut r = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                r[(i, j)] = if i >= j {
                    lags[i - j]
                } else {
                    lags[j - i].conj()
                };
            }
        }
        CovarianceMatrix::new(r, CovarianceRole::Reconstructed)
    }
}

/// Toeplitz-structured reconstruction over the 2M-1 real lag parameters.
pub fn toeplitz_reconstruct(
    plan: &ReconstructionPlan,
    hybrids: &[CovarianceMatrix],
) -> Result<CovarianceMatrix> {
    ToeplitzSolver::new(plan)?.solve(plan, hybrids)
}

/// Stacked beam map `B = [W_1 ... W_T]` of a combiner family.
fn stacked_beam_map(combiners: &[Combiner]) -> Result<Array2<Complex64>> {
    if combiners.is_empty() {
        return Err(Error::Config("beamspace needs at least one combiner".into()));
    }
    let m = combiners[0].num_antennas();
    let l = combiners[0].num_chains();
    for c in combiners {
        if c.num_antennas() != m || c.num_chains() != l {
            return Err(Error::Config(
                "beamspace combiners must share dimensions".into(),
            ));
        }
    }
    let mut b = Array2::zeros((m, combiners.len() * l));
    for (t, c) in combiners.iter().enumerate() {
        for i in 0..m {
            for j in 0..l {
                b[(i, t * l + j)] = c.matrix[(i, j)];
            }
        }
    }
    Ok(b)
}

/// Simulation-mode cross-combiner correlation: all combiners applied to the
/// same antenna-domain snapshot block, `R_block = (B^H X)(B^H X)^H / N`.
pub fn beamspace_block_covariance(
    combiners: &[Combiner],
    x: &SnapshotMatrix,
) -> Result<CovarianceMatrix> {
    if x.domain != SnapshotDomain::Antenna {
        return Err(Error::Domain(
            "beamspace block covariance expects antenna-domain snapshots".into(),
        ));
    }
    let b = stacked_beam_map(combiners)?;
    let y = linalg::adjoint(&b).dot(&x.data);
    let ym = SnapshotMatrix::new(y, SnapshotDomain::RfChain)?;
    sample_scm(&ym)
}

/// Exact beamspace block covariance `B^H R B` (tests, noise-free checks).
pub fn exact_block_covariance(
    combiners: &[Combiner],
    r: &CovarianceMatrix,
) -> Result<CovarianceMatrix> {
    let b = stacked_beam_map(combiners)?;
    let block = linalg::adjoint(&b).dot(&r.data).dot(&b);
    CovarianceMatrix::new(linalg::hermitian_part(&block), CovarianceRole::Hybrid)
}

/// Beamspace reconstruction `(B^+)^H R_block B^+` from the block matrix of
/// cross-combiner correlations.
pub fn beamspace_reconstruct(
    combiners: &[Combiner],
    block: &CovarianceMatrix,
) -> Result<CovarianceMatrix> {
    let b = stacked_beam_map(combiners)?;
    let m = b.nrows();
    if block.dimension() != b.ncols() {
        return Err(Error::Dimension {
            expected: format!("{0}x{0} block covariance", b.ncols()),
            got: format!("{0}x{0}", block.dimension()),
        });
    }
    let (rank, cond) = linalg::rank_and_condition(&linalg::adjoint(&b));
    if rank < m {
        return Err(Error::Identifiability {
            rank,
            required: m,
            condition: cond,
        });
    }
    if cond > CONDITION_LIMIT {
        return Err(Error::Identifiability {
            rank,
            required: m,
            condition: cond,
        });
    }
    // (B^+)^H = (B B^H)^{-1} B
    let g = b.dot(&linalg::adjoint(&b));
    let (lam, v) = linalg::hermitian_eig(&g);
    let mut ginv = Array2::zeros((m, m));
    for (k, &l) in lam.iter().enumerate() {
        let w = 1.0 / l;
        for i in 0..m {
            for j in 0..m {
                let upd = v[(i, k)] * v[(j, k)].conj() * w;
                ginv[(i, j)] += upd;
            }
        }
    }
    let c = ginv.dot(&b);
    let r = c.dot(&block.data).dot(&linalg::adjoint(&c));
    CovarianceMatrix::new(linalg::hermitian_part(&r), CovarianceRole::Reconstructed)
}

/// Hardware-faithful beamspace fallback: cross-combiner correlations are not
/// measurable, so only the per-slot diagonal blocks are used, through the
/// entry-wise system.
pub fn beamspace_reconstruct_diagonal(
    combiners: &[Combiner],
    hybrids: &[CovarianceMatrix],
) -> Result<CovarianceMatrix> {
    let plan = ReconstructionPlan::new(combiners.to_vec(), 1)?;
    entrywise_reconstruct(&plan, hybrids)
}

/// Projects onto the positive-semidefinite cone by clipping negative
/// eigenvalues at zero; the Frobenius-nearest PSD Hermitian matrix.
pub fn psd_project(r: &CovarianceMatrix) -> CovarianceMatrix {
    let (lam, v) = linalg::hermitian_eig(&r.data);
    let n = r.dimension();
    let mut out = Array2::zeros((n, n));
    for (k, &l) in lam.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                let upd = v[(i, k)] * v[(j, k)].conj() * l;
                out[(i, j)] += upd;
            }
        }
    }
    CovarianceMatrix {
        data: linalg::hermitian_part(&out),
        role: r.role,
    }
}
