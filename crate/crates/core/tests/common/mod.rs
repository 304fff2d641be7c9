#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mousse_core::changepoint::{GlrDetector, ResetPolicy};
use mousse_core::datagen::{bump_point, coefficient_error_bound, sample_stream};
use mousse_core::harness::io::{write_stream_header, write_stream_row};
use mousse_core::harness::{run_stream, RecordWriter, RunConfig, StreamReader};
use mousse_core::subset::orthonormality_error;
use mousse_core::tracking::{grouse_step, orthonormalize_fo, orthonormalize_gs, petrels_step};
use mousse_core::tree::UpdatePolicy;
use mousse_core::{
    MousseConfig, MousseTree, NodeId, Observation, PetrelsState, ProjectionResult, SubsetNode, TrackerKind,
};

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn orthonormal(rng: &mut ChaCha8Rng, dim: usize, d: usize) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(dim, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_gs(&raw).expect("gaussian columns are independent")
}

pub fn random_node(rng: &mut ChaCha8Rng, dim: usize, d: usize) -> SubsetNode {
    let basis = orthonormal(rng, dim, d);
    let center = gaussian_vec(rng, dim, 1.0);
    let lambdas = DVector::from_fn(d, |_, _| rng.random_range(0.05..5.0));
    let delta = rng.random_range(1e-3..0.5);
    SubsetNode::new(NodeId::ROOT, basis, center, lambdas, delta).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, dim: usize, observed: usize) -> Vec<usize> {
    let mut omega = sample(rng, dim, observed).into_vec();
    omega.sort_unstable();
    omega
}

pub fn masked(t: u64, x: &DVector<f64>, omega: Vec<usize>) -> Observation {
    let values = omega.iter().map(|&i| x[i]).collect();
    Observation::new(t, omega, values).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Complete observations give `β = Uᵀ(x − c)` and `x⊥ = (I − UUᵀ)(x − c)`.
pub fn complete_projection(seed: u64) -> Check {
    let mut r = rng(seed);
    let dim = r.random_range(3..60);
    let d = r.random_range(1..dim.min(6));
    let node = random_node(&mut r, dim, d);
    let x = gaussian_vec(&mut r, dim, 2.0);
    let pr = node.project(&Observation::complete(1, x.as_slice()).unwrap()).unwrap();
    let diff = &x - &node.center;
    let beta = node.basis.transpose() * &diff;
    let perp = &diff - &node.basis * &beta;
    let err_b = (&pr.beta - &beta).amax();
    let err_p = (&pr.x_perp - &perp).amax();
    if err_b > 1e-10 || err_p > 1e-10 {
        return Err(format!("D={dim} d={d}: beta error {err_b:e}, residual error {err_p:e}"));
    }
    Ok(())
}

/// Partial observations match a dense least-squares fit by Householder QR.
pub fn partial_projection(seed: u64) -> Check {
    let mut r = rng(seed);
    let dim = r.random_range(4..60);
    let d = r.random_range(1..dim.min(5));
    let node = random_node(&mut r, dim, d);
    let x = gaussian_vec(&mut r, dim, 2.0);
    let observed = r.random_range((d + 2).min(dim)..=dim);
    let omega = random_mask(&mut r, dim, observed);
    let u = node.basis.select_rows(&omega);
    let y = DVector::from_iterator(omega.len(), omega.iter().map(|&i| x[i] - node.center[i]));
    let qr = u.qr();
    let beta = qr.r().solve_upper_triangular(&(qr.q().transpose() * &y)).unwrap();
    let pr = node.project(&masked(1, &x, omega)).unwrap();
    let err = (&pr.beta - &beta).amax();
    if err > 1e-8 * beta.amax().max(1.0) {
        return Err(format!("D={dim} d={d} |Ω|={observed}: beta error {err:e}"));
    }
    Ok(())
}

/// `ρ_δ` equals `(x − c)ᵀ Σ⁻¹ (x − c)` with `Σ = UΛUᵀ + δ(I − UUᵀ)`.
pub fn dense_mahalanobis(seed: u64) -> Check {
    let mut r = rng(seed);
    let dim = r.random_range(3..40);
    let d = r.random_range(1..dim.min(5));
    let node = random_node(&mut r, dim, d);
    let x = gaussian_vec(&mut r, dim, 1.5);
    let u = &node.basis;
    let proj = u * u.transpose();
    let sigma = u * DMatrix::from_diagonal(&node.lambdas) * u.transpose()
        + (DMatrix::identity(dim, dim) - proj) * node.delta;
    let diff = &x - &node.center;
    let solved = sigma.cholesky().ok_or("covariance not positive definite")?.solve(&diff);
    let dense = diff.dot(&solved);
    let pr = node.project(&Observation::complete(1, x.as_slice()).unwrap()).unwrap();
    let rho = node.approx_mahalanobis(&pr);
    if !close(rho, dense, 1e-8) {
        return Err(format!("D={dim} d={d}: ρ_δ = {rho}, dense = {dense}"));
    }
    let scaled = node.scaled_distance(&pr);
    if !close(scaled, node.delta * dense, 1e-8) {
        return Err(format!("d_δ = {scaled}, δ·dense = {}", node.delta * dense));
    }
    Ok(())
}

/// PETRELS rows equal the exponentially weighted, regularized least-squares
/// fit of the observed entries computed in one batch.
pub fn petrels_matches_batch_rls(seed: u64) -> Check {
    let mut r = rng(seed);
    let dim = r.random_range(2..8);
    let d = r.random_range(1..dim.min(4));
    let alpha = r.random_range(0.8..0.999);
    let steps = r.random_range(1..80);
    let gain = PetrelsState::new(dim, d).r_inv[0][(0, 0)];
    let u0 = DMatrix::from_fn(dim, d, |_, _| r.random_range(-1.0..1.0));
    let mut basis = u0.clone();
    let mut state = PetrelsState::new(dim, d);
    let mut history = Vec::new();
    for t in 0..steps {
        let a = gaussian_vec(&mut r, d, 1.0);
        let y = gaussian_vec(&mut r, dim, 1.0);
        let omega: Vec<usize> = (0..dim).filter(|_| r.random_bool(0.7)).collect();
        if omega.is_empty() {
            continue;
        }
        let errs = DVector::from_iterator(omega.len(), omega.iter().map(|&m| y[m] - (basis.row(m) * &a)[0]));
        let pr = ProjectionResult {
            beta: a.clone(),
            x_perp: errs,
            omega_size: omega.len(),
        };
        petrels_step(&mut basis, &mut state, &masked(t + 1, &y, omega.clone()), &pr, alpha);
        history.push((a, y, omega));
    }
    let n = history.len() as i32;
    for m in 0..dim {
        let prior = alpha.powi(n) / gain;
        let mut lhs = DMatrix::identity(d, d) * prior;
        let mut rhs = u0.row(m).transpose() * prior;
        for (tau, (a, y, omega)) in history.iter().enumerate() {
            if omega.binary_search(&m).is_ok() {
                let w = alpha.powi(n - 1 - tau as i32);
                lhs += a * a.transpose() * w;
                rhs += a * (w * y[m]);
            }
        }
        let batch = lhs.cholesky().ok_or("normal equations not positive definite")?.solve(&rhs);
        let row = basis.row(m).transpose();
        let err = (&row - &batch).amax();
        if err > 1e-7 * batch.amax().max(1.0) {
            return Err(format!("D={dim} d={d} α={alpha:.3} steps={n}: row {m} differs by {err:e}"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisRule {
    Grouse,
    PetrelsGs,
    PetrelsFo,
}

/// Runs one tracker on a noisy planted subspace with missing entries and
/// checks `‖UᵀU − I‖_max < 1e-8` after every step.
pub fn tracker_orthonormality(seed: u64, rule: BasisRule, steps: usize) -> Check {
    let mut r = rng(seed);
    let dim = r.random_range(6..40);
    let d = r.random_range(1..4);
    let truth = orthonormal(&mut r, dim, d);
    let mut node = random_node(&mut r, dim, d);
    node.center.fill(0.0);
    let mut state = PetrelsState::new(dim, d);
    let alpha = 0.95;
    for t in 1..=steps as u64 {
        let x = &truth * gaussian_vec(&mut r, d, 1.0) + gaussian_vec(&mut r, dim, 0.05);
        let observed = r.random_range(d + 1..=dim);
        let obs = masked(t, &x, random_mask(&mut r, dim, observed));
        let pr = node.project(&obs).map_err(|e| e.to_string())?;
        match rule {
            BasisRule::Grouse => grouse_step(&mut node.basis, &obs, &pr, 0.5),
            BasisRule::PetrelsGs | BasisRule::PetrelsFo => {
                let mut raw = node.basis.clone();
                petrels_step(&mut raw, &mut state, &obs, &pr, alpha);
                let fixed = if rule == BasisRule::PetrelsGs {
                    orthonormalize_gs(&raw)
                } else {
                    orthonormalize_fo(&raw)
                };
                node.basis = fixed.map_err(|e| e.to_string())?;
            }
        }
        let err = orthonormality_error(&node.basis);
        if err > 1e-8 {
            return Err(format!("{rule:?} D={dim} d={d}: ‖UᵀU − I‖ = {err:e} at step {t}"));
        }
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ContinuityReport {
    pub steps: usize,
    /// Steps where `‖FO(Ũ) − U_t‖_F > ‖GS(Ũ) − U_t‖_F`.
    pub fo_longer: usize,
    pub fo_path: f64,
    pub gs_path: f64,
}

/// Applies both orthonormalizations to every PETRELS update `Ũ` of a
/// PETRELS-FO run. Fails if the polar factor is ever farther from `Ũ` than
/// the Gram-Schmidt factor, or if the two spans differ. Also records how
/// far each moves the basis away from `U_t`.
pub fn fo_gs_continuity(seed: u64, steps: usize) -> Result<ContinuityReport, String> {
    let mut r = rng(seed);
    let dim = r.random_range(8..40);
    let d = r.random_range(2..5);
    let truth = orthonormal(&mut r, dim, d);
    let mut node = random_node(&mut r, dim, d);
    node.center.fill(0.0);
    let mut state = PetrelsState::new(dim, d);
    let mut report = ContinuityReport::default();
    for t in 1..=steps as u64 {
        let x = &truth * gaussian_vec(&mut r, d, 1.0) + gaussian_vec(&mut r, dim, 0.1);
        let observed = r.random_range(d + 1..=dim);
        let obs = masked(t, &x, random_mask(&mut r, dim, observed));
        let pr = node.project(&obs).map_err(|e| e.to_string())?;
        let mut raw = node.basis.clone();
        petrels_step(&mut raw, &mut state, &obs, &pr, 0.95);
        let fo = orthonormalize_fo(&raw).map_err(|e| e.to_string())?;
        let gs = orthonormalize_gs(&raw).map_err(|e| e.to_string())?;
        let (to_fo, to_gs) = ((&fo - &raw).norm(), (&gs - &raw).norm());
        if to_fo > to_gs + 1e-12 {
            return Err(format!("step {t}: polar factor {to_fo:e} from the update, Gram-Schmidt {to_gs:e}"));
        }
        let span_gap = (&fo * fo.transpose() - &gs * gs.transpose()).amax();
        if span_gap > 1e-9 {
            return Err(format!("step {t}: spans differ by {span_gap:e}"));
        }
        let (fo_step, gs_step) = ((&fo - &node.basis).norm(), (&gs - &node.basis).norm());
        report.steps += 1;
        report.fo_longer += (fo_step > gs_step) as usize;
        report.fo_path += fo_step;
        report.gs_path += gs_step;
        node.basis = fo;
    }
    Ok(report)
}

/// Windowed statistic against `max_{lag ≤ min(w, n)} |Σ last lag z| / √lag`.
pub fn glr_brute_force(seed: u64) -> Check {
    let mut r = rng(seed);
    let window = r.random_range(1..80);
    let len = r.random_range(1..400);
    let mu0 = r.random_range(-3.0..3.0);
    let sigma0 = r.random_range(0.1..4.0);
    let shift = r.random_range(-1.0..1.0);
    let mut det = GlrDetector::calibrated(mu0, sigma0, window, f64::INFINITY, ResetPolicy::Stop).unwrap();
    let mut z = Vec::with_capacity(len);
    for t in 0..len {
        let e = mu0 + sigma0 * (r.sample::<f64, _>(StandardNormal) + if t > len / 2 { shift } else { 0.0 });
        z.push((e - mu0) / sigma0);
        let (stat, _) = det.update(e).unwrap();
        let mut best = 0.0_f64;
        let mut sum = 0.0;
        for lag in 1..=window.min(z.len()) {
            sum += z[z.len() - lag];
            best = best.max(sum.abs() / (lag as f64).sqrt());
        }
        if !close(stat, best, 1e-12) {
            return Err(format!("w={window} t={}: detector {stat}, brute force {best}", t + 1));
        }
    }
    Ok(())
}

/// `e ↦ a e + c` with `(μ0, σ0) ↦ (a μ0 + c, a σ0)` leaves the statistics and
/// alarm times unchanged.
pub fn standardization_invariance(seed: u64) -> Check {
    let mut r = rng(seed);
    let window = r.random_range(1..60);
    let a = 10f64.powf(r.random_range(-3.0..3.0));
    let c = r.random_range(-100.0..100.0);
    let (mu0, sigma0) = (r.random_range(0.0..2.0), r.random_range(0.05..1.0));
    let b = r.random_range(2.0..5.0);
    let mut plain = GlrDetector::calibrated(mu0, sigma0, window, b, ResetPolicy::ResetAndContinue).unwrap();
    let mut moved =
        GlrDetector::calibrated(a * mu0 + c, a * sigma0, window, b, ResetPolicy::ResetAndContinue).unwrap();
    for t in 0..300 {
        let e = mu0 + sigma0 * (r.sample::<f64, _>(StandardNormal) + if t > 150 { 1.0 } else { 0.0 });
        let (s1, a1) = plain.update(e).unwrap();
        let (s2, a2) = moved.update(a * e + c).unwrap();
        let borderline = (s1 - b).abs() < 1e-9;
        if !close(s2, s1, 1e-9) || (a1 != a2 && !borderline) {
            return Err(format!("a={a:e} c={c}: step {t} gives ({s1}, {a1}) vs ({s2}, {a2})"));
        }
    }
    Ok(())
}

/// Random bump stream with a wandering width and random masks, some smaller
/// than `d`.
pub struct FuzzStream {
    rng: ChaCha8Rng,
    dim: usize,
    gamma: f64,
    t: u64,
}

impl FuzzStream {
    pub fn new(seed: u64, dim: usize) -> Self {
        FuzzStream {
            rng: rng(seed),
            dim,
            gamma: 0.4,
            t: 0,
        }
    }

    pub fn training(&mut self, n: usize) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.point()).collect()
    }

    fn point(&mut self) -> DVector<f64> {
        let theta = self.rng.random_range(-2.0..=2.0);
        let v = DVector::from_vec(bump_point(theta, self.gamma, self.dim));
        v + gaussian_vec(&mut self.rng, self.dim, 0.02)
    }

    pub fn next_obs(&mut self) -> Observation {
        self.t += 1;
        if self.rng.random_bool(0.01) {
            self.gamma = self.rng.random_range(0.1..0.8);
        } else {
            self.gamma = (self.gamma + self.rng.random_range(-0.01..0.01)).clamp(0.1, 0.8);
        }
        let x = self.point();
        let observed = if self.rng.random_bool(0.02) {
            1
        } else {
            self.rng.random_range(self.dim / 3..=self.dim)
        };
        masked(self.t, &x, random_mask(&mut self.rng, self.dim, observed))
    }
}

pub fn fuzz_config(seed: u64) -> MousseConfig {
    let mut r = rng(seed ^ 0x5eed);
    let tracker = match r.random_range(0..3) {
        0 => TrackerKind::Grouse { eta0: 0.3 },
        1 => TrackerKind::PetrelsGs,
        _ => TrackerKind::PetrelsFo,
    };
    MousseConfig {
        d: r.random_range(1..3),
        eps: 10f64.powf(r.random_range(-3.0..-1.0)),
        alpha: r.random_range(0.8..0.98),
        mu: 10f64.powf(r.random_range(-3.0..-1.0)),
        tracker,
        max_depth: r.random_range(1..7),
        update_policy: if seed % 5 == 0 {
            UpdatePolicy::All
        } else {
            UpdatePolicy::Nearest
        },
        ..MousseConfig::default()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FuzzReport {
    pub steps: u64,
    pub violations: u64,
    pub structure_changes: u64,
    pub skipped: u64,
}

/// Steps a randomly configured tree and checks every structural invariant
/// after each step.
pub fn tree_fuzz(seed: u64, steps: u64) -> Result<FuzzReport, String> {
    let dim = 16;
    let mut stream = FuzzStream::new(seed, dim);
    let mut tree = MousseTree::init_from_batch(&stream.training(60), fuzz_config(seed)).map_err(|e| e.to_string())?;
    let mut report = FuzzReport::default();
    let mut first = None;
    if let Err(msg) = tree.check_invariants() {
        report.violations += 1;
        first = Some(format!("after init: {msg}"));
    }
    let mut k = tree.k();
    for _ in 0..steps {
        let out = tree.step(&stream.next_obs()).map_err(|e| e.to_string())?;
        report.steps += 1;
        report.skipped += out.skipped as u64;
        if out.k != k {
            report.structure_changes += 1;
            k = out.k;
        }
        if let Err(msg) = tree.check_invariants() {
            report.violations += 1;
            first.get_or_insert(format!("t={}: {msg}", out.t));
        }
    }
    match first {
        Some(msg) => Err(format!("{} violations, first {msg}", report.violations)),
        None => Ok(report),
    }
}

/// Splitting a leaf and merging one of its new children restores the tree
/// exactly.
pub fn split_merge_identity(seed: u64) -> Check {
    let mut stream = FuzzStream::new(seed, 12);
    let config = MousseConfig {
        max_depth: 8,
        ..fuzz_config(seed)
    };
    let mut tree = MousseTree::init_from_batch(&stream.training(60), config).map_err(|e| e.to_string())?;
    let mut r = rng(seed);
    let warm = r.random_range(0..300);
    for _ in 0..warm {
        tree.step(&stream.next_obs()).map_err(|e| e.to_string())?;
    }
    let leaves: Vec<NodeId> = tree.leaves().filter(|l| l.level < config.max_depth).collect();
    if leaves.is_empty() {
        return Ok(());
    }
    let leaf = leaves[r.random_range(0..leaves.len())];
    let before = tree.clone();
    tree.split_node(leaf).map_err(|e| e.to_string())?;
    tree.check_invariants()?;
    if tree.k() != before.k() + 1 {
        return Err(format!("split of {leaf} took K from {} to {}", before.k(), tree.k()));
    }
    let child = leaf.children()[r.random_range(0..2)];
    tree.merge_node(child).map_err(|e| e.to_string())?;
    if tree != before {
        return Err(format!("split then merge of {leaf} did not restore the tree"));
    }
    Ok(())
}

/// Writes a simulated stream (training rows first) in the text format.
pub fn stream_text(cfg: &RunConfig) -> Vec<u8> {
    let spec = cfg.manifold.spec(cfg.seed);
    let mut out = Vec::new();
    write_stream_header(&mut out, spec.dim).unwrap();
    let init = spec.training_batch(cfg.n_init).unwrap();
    for s in init.into_iter().chain(sample_stream(spec, cfg.horizon).unwrap()) {
        write_stream_row(&mut out, &s.obs, spec.dim).unwrap();
    }
    out
}

/// Tracks a stream file and returns the record CSV bytes.
pub fn track_text(cfg: &RunConfig, text: &[u8]) -> Vec<u8> {
    let mut reader = StreamReader::new(text).unwrap();
    let mut cfg = cfg.clone();
    cfg.manifold.dim = reader.dim();
    let rows = std::iter::from_fn(|| reader.next_observation(0).transpose());
    let mut records = RecordWriter::new(Vec::new()).unwrap();
    run_stream(&cfg, rows, |rec| records.write(rec)).unwrap();
    records.into_inner().unwrap()
}

/// Simulating and tracking twice with the same seed gives identical bytes,
/// and a tree restored from a checkpoint continues exactly like the
/// original.
pub fn replay_identity(seed: u64) -> Check {
    let mut cfg = RunConfig::default();
    for kv in ["manifold.missing_frac=0.3", "manifold.dim=40", "run.horizon=400", "run.n_init=80"] {
        cfg.apply_pair(kv).unwrap();
    }
    cfg.seed = seed;
    let first = track_text(&cfg, &stream_text(&cfg));
    let second = track_text(&cfg, &stream_text(&cfg));
    if first != second {
        return Err(format!("seed {seed}: record files differ"));
    }

    let spec = cfg.manifold.spec(seed);
    let batch: Vec<_> = spec.training_batch(80).unwrap().into_iter().map(|s| s.obs.scatter(spec.dim)).collect();
    let mut tree = MousseTree::init_from_batch(&batch, cfg.tree_config()).map_err(|e| e.to_string())?;
    let obs: Vec<_> = sample_stream(spec, 400).unwrap().map(|s| s.obs).collect();
    for o in &obs[..200] {
        tree.step(o).map_err(|e| e.to_string())?;
    }
    let mut restored = MousseTree::from_json(&tree.to_json()).map_err(|e| e.to_string())?;
    for o in &obs[200..] {
        let a = tree.step(o).map_err(|e| e.to_string())?;
        let b = restored.step(o).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("seed {seed}: restored tree diverged at t={}", o.t));
        }
    }
    if tree.to_json() != restored.to_json() {
        return Err(format!("seed {seed}: final checkpoints differ"));
    }
    Ok(())
}

/// Orthonormal pair `√(2/D)(cos, sin)(2πkn/D + φ)`, coherence 1.
pub fn fourier_basis(dim: usize, k: usize, phase: f64) -> DMatrix<f64> {
    let s = (2.0 / dim as f64).sqrt();
    DMatrix::from_fn(dim, 2, |n, j| {
        let arg = 2.0 * std::f64::consts::PI * (k * n) as f64 / dim as f64 + phase;
        s * if j == 0 { arg.cos() } else { arg.sin() }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    pub instances: usize,
    pub violations: usize,
    pub min_observed: usize,
    /// Largest ratio of the observed squared error to the bound.
    pub worst_ratio: f64,
}

impl BoundReport {
    pub fn violation_fraction(&self) -> f64 {
        self.violations as f64 / self.instances as f64
    }
}

/// Draws random instances on a Fourier plane in `D = 50` with an off-plane
/// component, noise and a uniformly random mask no smaller than the bound's
/// minimum, then counts how often `‖β_Ω − β‖²` exceeds the bound.
pub fn coefficient_bound_trials(instances: usize, seed: u64) -> BoundReport {
    let (dim, d, eps, ell) = (50, 2, 0.05, 0.5);
    let mut r = rng(seed);
    let mut report = BoundReport {
        instances,
        violations: 0,
        min_observed: 0,
        worst_ratio: 0.0,
    };
    for _ in 0..instances {
        let basis = fourier_basis(dim, r.random_range(1..dim / 2), r.random_range(0.0..std::f64::consts::TAU));
        let c = gaussian_vec(&mut r, dim, 0.5);
        let a = gaussian_vec(&mut r, d, 2.0);
        let off_scale = 10f64.powf(r.random_range(-3.0..-0.5));
        let off = gaussian_vec(&mut r, dim, off_scale);
        let q = &off - &basis * (basis.transpose() * &off);
        let v = &c + &basis * a + q;
        let noise_var = 10f64.powf(r.random_range(-6.0..-2.0));
        let x = &v + gaussian_vec(&mut r, dim, noise_var.sqrt());

        let full: Vec<usize> = (0..dim).collect();
        let need = coefficient_error_bound(&v, &c, &basis, &full, noise_var, eps, ell).min_observed.ceil() as usize;
        report.min_observed = need;
        let observed = r.random_range(need..=dim);
        let omega = random_mask(&mut r, dim, observed);
        let bound = coefficient_error_bound(&v, &c, &basis, &omega, noise_var, eps, ell);
        assert!(bound.preconditions_met);

        let node = SubsetNode::new(NodeId::ROOT, basis.clone(), c.clone(), DVector::from_element(d, 1.0), 1.0).unwrap();
        let beta_omega = node.project(&masked(1, &x, omega)).unwrap().beta;
        let beta = basis.transpose() * (&x - &c);
        let err = (beta_omega - beta).norm_squared();
        report.worst_ratio = report.worst_ratio.max(err / bound.bound);
        if err > bound.bound {
            report.violations += 1;
        }
    }
    report
}
