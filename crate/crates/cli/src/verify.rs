//! Self-checks run by `holonet verify`: operator isometry, Fréchet
//! derivatives, model gradients, task generators and scan equivalence.

use holonomic::autodiff::Precision;
use holonomic::error::Result;
use holonomic::models::{load_checkpoint, save_checkpoint, Model, ModelKind, ModelSpec};
use holonomic::scan::{
    random_table, sequential_holonomy, streaming_infer, tree_scan_holonomy, MemoryMeter, ScanMode, ScanPlan,
};
use holonomic::tasks::{swap_pair, Episode, Task};
use holonomic::tensor::{mat_exp, mat_exp_adjoint, mat_exp_frechet, orthogonality_tolerance, skew, RngState, Vector};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, outcome: Result<(bool, String)>) -> Check {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn run_suite(seed: u64) -> Vec<Check> {
    let rng = RngState::new(seed);
    let mut out = vec![
        check("exp-isometry", isometry(&rng.split(0))),
        check("frechet-vs-difference", frechet(&rng.split(1))),
        check("frechet-adjoint", adjoint(&rng.split(2))),
    ];
    let kinds = [
        ModelKind::Holonomic,
        ModelKind::Rnn,
        ModelKind::NormalizedRnn,
        ModelKind::Transformer,
    ];
    for (i, kind) in kinds.into_iter().enumerate() {
        out.push(check(
            &format!("gradcheck-{}", kind.name()),
            gradcheck(kind, &rng.split(10 + i as u64)),
        ));
    }
    out.push(check("s3-generator", s3_episodes(&rng.split(20))));
    out.push(check("binding-generator", binding_episodes(&rng.split(21))));
    out.push(check("scan-equivalence", scans(&rng.split(30))));
    out.push(check("checkpoint-round-trip", round_trip(&rng.split(40))));
    out
}

fn isometry(rng: &RngState) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (k, n) in [4usize, 16, 64].into_iter().enumerate() {
        let mut r = rng.split(k as u64);
        for _ in 0..10 {
            let u = mat_exp(&skew(&r.gaussian_matrix(n, n, 1.0))?)?;
            let d = u.orthogonality_defect();
            worst = worst.max(d);
            ok &= d <= orthogonality_tolerance(n);
        }
    }
    Ok((ok, format!("max ‖UᵀU − I‖ = {worst:.2e}")))
}

fn frechet(rng: &RngState) -> Result<(bool, String)> {
    let mut r = rng.split(0);
    let n = 6;
    let a = skew(&r.gaussian_matrix(n, n, 1.0))?;
    let e = r.gaussian_matrix(n, n, 1.0);
    let (_, l) = mat_exp_frechet(&a, &e)?;
    let h = 1e-5;
    let fd = mat_exp(&a.add(&e.scale(h))?)?
        .sub(&mat_exp(&a.sub(&e.scale(h))?)?)?
        .scale(0.5 / h);
    let err = l.frobenius_distance(&fd) / l.frobenius_norm();
    Ok((err < 1e-7, format!("relative error {err:.2e}")))
}

fn adjoint(rng: &RngState) -> Result<(bool, String)> {
    let mut r = rng.split(0);
    let n = 8;
    let a = r.gaussian_matrix(n, n, 0.5);
    let e = r.gaussian_matrix(n, n, 1.0);
    let g = r.gaussian_matrix(n, n, 1.0);
    let lhs = g.inner(&mat_exp_frechet(&a, &e)?.1);
    let rhs = mat_exp_adjoint(&a, &g)?.inner(&e);
    let err = (lhs - rhs).abs() / lhs.abs().max(1.0);
    Ok((err < 1e-10, format!("|⟨G, L(A,E)⟩ − ⟨L*(A,G), E⟩| = {err:.2e}")))
}

fn gradcheck(kind: ModelKind, rng: &RngState) -> Result<(bool, String)> {
    let spec = if kind == ModelKind::Transformer {
        let mut s = ModelSpec::new(kind, 16);
        s.layers = 1;
        s.heads = 2;
        s.d_ff = 32;
        s
    } else {
        ModelSpec::new(kind, 8)
    };
    let model = Model::new(&spec, Task::S3, &mut rng.split(0))?;
    let mut draw = rng.split(1);
    let batch: Vec<Episode> = (0..4).map(|_| Task::S3.sample(&mut draw, 5)).collect();
    let gc = model.grad_check(&batch, 1e-5, 64, &mut rng.split(2))?;
    let tol = if kind == ModelKind::Transformer { 1e-4 } else { 1e-5 };
    Ok((
        gc.max_rel_error < tol,
        format!("max relative error {:.2e} over {} coordinates", gc.max_rel_error, gc.coordinates),
    ))
}

/// Images of the six S₃ tokens, in vocabulary order.
const S3_IMAGES: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Applies each token to a 3-slot arrangement and looks the result up.
fn naive_s3(tokens: &[usize]) -> usize {
    let mut a = [0, 1, 2];
    for &t in tokens {
        let p = S3_IMAGES[t];
        a = [p[a[0]], p[a[1]], p[a[2]]];
    }
    S3_IMAGES.iter().position(|im| *im == a).expect("arrangement is a permutation")
}

/// Swaps the contents of two slots per token and reads the queried slot.
fn naive_binding(vars: usize, tokens: &[usize], query: usize) -> usize {
    let mut vals: Vec<usize> = (0..vars).collect();
    for &t in tokens {
        let (i, j) = swap_pair(vars, t);
        vals.swap(i, j);
    }
    vals[query]
}

fn s3_episodes(rng: &RngState) -> Result<(bool, String)> {
    let mut r = rng.split(0);
    let mut bad = 0;
    for k in 0..10_000 {
        let e = Task::S3.sample(&mut r, 1 + k % 20);
        bad += usize::from(e.target != naive_s3(&e.tokens));
    }
    Ok((bad == 0, format!("{bad} of 10000 episodes disagree")))
}

fn binding_episodes(rng: &RngState) -> Result<(bool, String)> {
    let mut r = rng.split(0);
    let vars = 8;
    let task = Task::binding(vars)?;
    let mut bad = 0;
    for k in 0..10_000 {
        let e = task.sample(&mut r, 1 + k % 50);
        let q = e.query.expect("binding episodes carry a query");
        bad += usize::from(e.target != naive_binding(vars, &e.tokens, q));
    }
    Ok((bad == 0, format!("{bad} of 10000 episodes disagree")))
}

fn scans(rng: &RngState) -> Result<(bool, String)> {
    let table = random_table(16, 6, &mut rng.split(0))?;
    let mut draw = rng.split(1);
    let tokens: Vec<usize> = (0..4096).map(|_| draw.below(6)).collect();
    let plan = ScanPlan::default();
    let seq = sequential_holonomy(&table, &tokens, &plan)?;
    let tree = tree_scan_holonomy(
        &table,
        &tokens,
        &ScanPlan {
            mode: ScanMode::Tree,
            ..plan
        },
        2,
    )?;
    let h0 = Vector::basis(16, 0);
    let mut meter = MemoryMeter::default();
    let stream = streaming_infer(&table, &h0, tokens.iter().copied(), &plan, false, &mut meter)?;
    let expect = seq.mul_vec(&h0)?;
    let d_tree = tree.sub(&seq)?.max_abs();
    let d_stream = stream.state.max_abs_diff(&expect);
    Ok((
        d_tree <= 1e-9 && d_stream <= 1e-9,
        format!("tree {d_tree:.2e}, streaming {d_stream:.2e}"),
    ))
}

fn round_trip(rng: &RngState) -> Result<(bool, String)> {
    let model = Model::new(&ModelSpec::new(ModelKind::Holonomic, 8), Task::S3, &mut rng.split(0))?;
    let path = std::env::temp_dir().join(format!("holonet-verify-{}.ckpt", std::process::id()));
    save_checkpoint(&model, &path)?;
    let back = load_checkpoint(&path);
    let _ = std::fs::remove_file(&path);
    let _ = std::fs::remove_file(path.with_extension("ckpt.meta"));
    let back = back?;
    let mut draw = rng.split(1);
    let batch: Vec<Episode> = (0..8).map(|_| Task::S3.sample(&mut draw, 5)).collect();
    let a = model.loss_and_grad(&batch, Precision::F64)?.loss;
    let b = back.loss_and_grad(&batch, Precision::F64)?.loss;
    let same = model.params().values().zip(back.params().values()).all(|(x, y)| x == y);
    Ok((same && a == b, format!("parameters identical: {same}, loss {a} vs {b}")))
}
