//! Finite-difference probes for every differentiable op, shared between the
//! op-by-op test target and the acceptance gate. Each probe feeds the op's
//! output through a deterministic sign-varying weighted sum so every element
//! contributes a distinct gradient, and reports the worst relative error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgt_core::autodiff::{grad_check, GradCheckReport, Graph, Parameter, Var};
use rgt_core::nn::trunc_normal;
use rgt_core::tensor::Tensor;
use rgt_core::Result;

pub const EPS: f64 = 1e-5;

pub struct OpProbe {
    pub family: &'static str,
    pub name: &'static str,
    pub report: GradCheckReport,
}

/// Deterministic, sign-varying weights so the probe loss exercises every
/// element of `v` differently.
fn weighted(g: &mut Graph, v: Var) -> Result<Var> {
    let shape = g.shape(v).to_vec();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|i| ((i.wrapping_mul(2654435761) % 97) as f64) / 97.0 - 0.5)
        .collect();
    let w = g.constant(&Tensor::from_vec(&shape, data)?);
    let prod = g.mul(v, w)?;
    g.sum_all(prod)
}

fn probe(
    family: &'static str,
    name: &'static str,
    params: &[&Parameter],
    build: impl Fn(&mut Graph) -> Result<Var>,
) -> OpProbe {
    let report = grad_check(build, params, EPS).unwrap();
    OpProbe {
        family,
        name,
        report,
    }
}

fn seeded(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    trunc_normal(shape, 1.0, &mut rng)
}

fn positive(shape: &[usize], seed: u64) -> Tensor {
    let t = seeded(shape, seed);
    Tensor::from_vec(
        shape,
        t.data().iter().map(|v| 0.5 + v.abs()).collect::<Vec<_>>(),
    )
    .unwrap()
}

/// Run every op probe. Probes choose inputs away from kinks (clamp corners,
/// integer sampling coordinates) where finite differences are meaningless.
pub fn run_all() -> Vec<OpProbe> {
    let mut out = Vec::new();

    let a = Parameter::new("a", seeded(&[3, 4], 1));
    let row = Parameter::new("row", seeded(&[1, 4], 2));
    let col = Parameter::new("col", seeded(&[3, 1], 3));
    let denom = Parameter::new("denom", positive(&[3, 4], 4));
    out.push(probe("arithmetic", "add broadcast", &[&a, &row], |g| {
        let x = g.param(&a);
        let y = g.param(&row);
        let s = g.add(x, y)?;
        weighted(g, s)
    }));
    out.push(probe("arithmetic", "sub broadcast", &[&a, &col], |g| {
        let x = g.param(&a);
        let y = g.param(&col);
        let s = g.sub(x, y)?;
        weighted(g, s)
    }));
    out.push(probe("arithmetic", "mul broadcast", &[&a, &row], |g| {
        let x = g.param(&a);
        let y = g.param(&row);
        let s = g.mul(x, y)?;
        weighted(g, s)
    }));
    out.push(probe("arithmetic", "div", &[&a, &denom], |g| {
        let x = g.param(&a);
        let y = g.param(&denom);
        let s = g.div(x, y)?;
        weighted(g, s)
    }));

    let x = Parameter::new("x", seeded(&[2, 5], 10));
    let pos = Parameter::new("pos", positive(&[2, 5], 11));
    out.push(probe("elementwise", "neg", &[&x], |g| {
        let v = g.param(&x);
        let y = g.neg(v);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "exp", &[&x], |g| {
        let v = g.param(&x);
        let y = g.exp(v);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "log", &[&pos], |g| {
        let v = g.param(&pos);
        let y = g.log(v);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "sqrt", &[&pos], |g| {
        let v = g.param(&pos);
        let y = g.sqrt(v);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "sin", &[&x], |g| {
        let v = g.param(&x);
        let y = g.sin(v);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "powf", &[&pos], |g| {
        let v = g.param(&pos);
        let y = g.powf(v, 2.7);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "affine", &[&x], |g| {
        let v = g.param(&x);
        let y = g.affine(v, -1.4, 0.3);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "scale", &[&x], |g| {
        let v = g.param(&x);
        let y = g.scale(v, 3.25);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "sigmoid", &[&x], |g| {
        let v = g.param(&x);
        let y = g.sigmoid(v);
        weighted(g, y)
    }));
    out.push(probe("elementwise", "gelu", &[&x], |g| {
        let v = g.param(&x);
        let y = g.gelu(v);
        weighted(g, y)
    }));

    // Values clearly inside and clearly outside the clamp window.
    let cl = Parameter::new(
        "cl",
        Tensor::from_vec(&[5], vec![-2.0, 0.2, 0.55, 0.8, 3.0]).unwrap(),
    );
    out.push(probe("elementwise", "clamp", &[&cl], |g| {
        let v = g.param(&cl);
        let y = g.clamp(v, 0.0, 1.0);
        weighted(g, y)
    }));

    let red = Parameter::new("red", seeded(&[4, 3], 20));
    out.push(probe("reduction", "sum_all", &[&red], |g| {
        let v = g.param(&red);
        g.sum_all(v)
    }));
    out.push(probe("reduction", "mean_all", &[&red], |g| {
        let v = g.param(&red);
        g.mean_all(v)
    }));

    let ma = Parameter::new("ma", seeded(&[3, 4], 30));
    let mb = Parameter::new("mb", seeded(&[4, 2], 31));
    out.push(probe("matmul", "matmul", &[&ma, &mb], |g| {
        let x = g.param(&ma);
        let y = g.param(&mb);
        let p = g.matmul(x, y)?;
        weighted(g, p)
    }));
    let ab = Parameter::new("ab", seeded(&[2, 3, 4], 32));
    let bb = Parameter::new("bb", seeded(&[2, 4, 2], 33));
    out.push(probe("matmul", "matmul_batched", &[&ab, &bb], |g| {
        let x = g.param(&ab);
        let y = g.param(&bb);
        let p = g.matmul_batched(x, y)?;
        weighted(g, p)
    }));
    out.push(probe("matmul", "transpose2", &[&ma], |g| {
        let x = g.param(&ma);
        let t = g.transpose2(x)?;
        weighted(g, t)
    }));

    let x3 = Parameter::new("x3", seeded(&[2, 3, 4], 40));
    out.push(probe("shape", "permute3", &[&x3], |g| {
        let v = g.param(&x3);
        let p = g.permute3(v, [2, 0, 1])?;
        weighted(g, p)
    }));
    let rs = Parameter::new("rs", seeded(&[3, 4], 41));
    out.push(probe("shape", "reshape", &[&rs], |g| {
        let v = g.param(&rs);
        let r = g.reshape(v, &[2, 6])?;
        weighted(g, r)
    }));
    let top = Parameter::new("top", seeded(&[2, 3], 42));
    let bottom = Parameter::new("bottom", seeded(&[3, 3], 43));
    out.push(probe("shape", "concat0 + narrow0", &[&top, &bottom], |g| {
        let t = g.param(&top);
        let b = g.param(&bottom);
        let cat = g.concat0(&[t, b])?;
        // An interior window spanning the seam exercises both inputs.
        let win = g.narrow0(cat, 1, 3)?;
        weighted(g, win)
    }));
    let table = Parameter::new("table", seeded(&[4, 3], 44));
    out.push(probe("shape", "gather_rows with repeats", &[&table], |g| {
        let t = g.param(&table);
        let rows = g.gather_rows(t, &[2, 0, 2, 3])?;
        weighted(g, rows)
    }));
    let r1 = Parameter::new("r1", seeded(&[4], 45));
    let r2 = Parameter::new("r2", seeded(&[4], 46));
    out.push(probe("shape", "stack_rows", &[&r1, &r2], |g| {
        let a = g.param(&r1);
        let b = g.param(&r2);
        let s = g.stack_rows(&[a, b])?;
        weighted(g, s)
    }));

    let nx = Parameter::new("nx", seeded(&[3, 5], 50));
    out.push(probe("normalizer", "softmax", &[&nx], |g| {
        let v = g.param(&nx);
        let s = g.softmax(v)?;
        weighted(g, s)
    }));
    out.push(probe("normalizer", "logsumexp", &[&nx], |g| {
        let v = g.param(&nx);
        let s = g.logsumexp(v)?;
        weighted(g, s)
    }));
    let gain = Parameter::new("gain", positive(&[5], 51));
    let bias = Parameter::new("bias", seeded(&[5], 52));
    out.push(probe("normalizer", "layer_norm", &[&nx, &gain, &bias], |g| {
        let v = g.param(&nx);
        let ga = g.param(&gain);
        let bi = g.param(&bias);
        let y = g.layer_norm(v, ga, bi, 1e-5)?;
        weighted(g, y)
    }));

    let grid = Parameter::new("grid", seeded(&[4, 4, 3], 60));
    // Fractional positions well away from cell boundaries: the sampling
    // kernel has kinks at integer coordinates.
    let points = Parameter::new(
        "points",
        Tensor::from_vec(&[3, 2], vec![0.37, 1.42, 2.61, 0.23, 1.18, 2.77]).unwrap(),
    );
    out.push(probe("sampler", "bilinear_sample", &[&grid, &points], |g| {
        let gr = g.param(&grid);
        let pt = g.param(&points);
        let s = g.bilinear_sample(gr, pt)?;
        weighted(g, s)
    }));
    let dx = Parameter::new("dx", seeded(&[6, 4], 61));
    out.push(probe("sampler", "dropout (fixed mask)", &[&dx], |g| {
        let v = g.param(&dx);
        // Same seed on every probe keeps the mask identical, which is what
        // makes the loss a pure function of the parameter.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let d = g.dropout(v, 0.3, true, &mut rng)?;
        weighted(g, d)
    }));

    out
}
