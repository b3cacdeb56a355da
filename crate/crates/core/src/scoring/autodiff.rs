//! A small reverse-mode automatic differentiation tape over dense `f64`
//! tensors, with just the operations the biaffine and triaffine scorers need.

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn dims2(&self) -> (usize, usize) {
        assert_eq!(
            self.shape.len(),
            2,
            "expected a matrix, got {:?}",
            self.shape
        );
        (self.shape[0], self.shape[1])
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Tanh(Var),
    Gather(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    AppendOnes(Var),
    Transpose(Var),
    Reshape(Var),
    /// `out[i][j][l] = x[i] · w[l] · y[j]`.
    MultiBilinear {
        x: Var,
        w: Var,
        y: Var,
    },
    /// `out[h][s][m] = Σ x[h]_a y[m]_b z[s]_c w[a][b][c]`.
    Trilinear {
        x: Var,
        y: Var,
        z: Var,
        w: Var,
    },
    /// Row-wise log-softmax over the allowed entries; the rest are -inf.
    LogSoftmaxRows {
        x: Var,
        allowed: Vec<bool>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients(Vec<Option<Vec<f64>>>);

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.0[var.0].as_deref()
    }
}

/// Computation graph recorded in evaluation order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul inner dimensions");
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for t in 0..k {
                let x = av[i * k + t];
                if x == 0.0 {
                    continue;
                }
                let row = &bv[t * n..(t + 1) * n];
                for (o, &y) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += x * y;
                }
            }
        }
        self.push(Tensor::new(vec![m, n], out), Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, data), Op::Add(a, b))
    }

    /// `[m, n] + [n]`, broadcasting the bias over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (_, n) = self.value(a).dims2();
        assert_eq!(self.value(bias).shape(), &[n]);
        let b = self.value(bias).data();
        let data = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::new(shape, data), Op::AddBias(a, bias))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a);
        let data = value.data().iter().map(|x| x.tanh()).collect();
        let shape = value.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::Tanh(a))
    }

    /// Rows `indices` of a `[rows, d]` table.
    pub fn gather(&mut self, table: Var, indices: Vec<usize>) -> Var {
        let (_, d) = self.value(table).dims2();
        let t = self.value(table).data();
        let data = indices
            .iter()
            .flat_map(|&i| t[i * d..(i + 1) * d].iter().copied())
            .collect();
        self.push(
            Tensor::new(vec![indices.len(), d], data),
            Op::Gather(table, indices),
        )
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let rows = self.value(parts[0]).dims2().0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.value(p).dims2();
                assert_eq!(r, rows, "concat row counts");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        self.push(Tensor::new(vec![rows, total], data), Op::ConcatCols(parts))
    }

    /// `[m, n] -> [m, n + 1]` with a trailing column of ones.
    pub fn append_ones(&mut self, a: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        let data = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().copied().chain(std::iter::once(1.0)))
            .collect();
        self.push(Tensor::new(vec![m, n + 1], data), Op::AppendOnes(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        let v = self.value(a).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = v[i * n + j];
            }
        }
        self.push(Tensor::new(vec![n, m], data), Op::Transpose(a))
    }

    /// Same values under a new shape.
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let data = self.value(a).data().to_vec();
        self.push(Tensor::new(shape, data), Op::Reshape(a))
    }

    /// `x: [N, a]`, `w: [L, a, b]`, `y: [M, b]` to `[N, M, L]`.
    pub fn multi_bilinear(&mut self, x: Var, w: Var, y: Var) -> Var {
        let (n, a) = self.value(x).dims2();
        let (m, b) = self.value(y).dims2();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 3);
        assert_eq!((ws[1], ws[2]), (a, b));
        let l = ws[0];
        let (xv, wv, yv) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(y).data(),
        );
        let mut out = vec![0.0; n * m * l];
        let mut xw = vec![0.0; b];
        for i in 0..n {
            for lab in 0..l {
                xw.iter_mut().for_each(|v| *v = 0.0);
                for p in 0..a {
                    let xp = xv[i * a + p];
                    let wrow = &wv[(lab * a + p) * b..(lab * a + p + 1) * b];
                    for (acc, &wq) in xw.iter_mut().zip(wrow) {
                        *acc += xp * wq;
                    }
                }
                for j in 0..m {
                    let yrow = &yv[j * b..(j + 1) * b];
                    out[(i * m + j) * l + lab] = xw.iter().zip(yrow).map(|(u, v)| u * v).sum();
                }
            }
        }
        self.push(
            Tensor::new(vec![n, m, l], out),
            Op::MultiBilinear { x, w, y },
        )
    }

    /// `x: [N, a]` (head), `y: [N, b]` (modifier), `z: [N, c]` (sibling),
    /// `w: [a, b, c]` to `[N, N, N]` laid out `(h, s, m)`.
    pub fn trilinear(&mut self, x: Var, y: Var, z: Var, w: Var) -> Var {
        let (n, a) = self.value(x).dims2();
        let (n2, b) = self.value(y).dims2();
        let (n3, c) = self.value(z).dims2();
        assert!(n == n2 && n == n3);
        assert_eq!(self.value(w).shape(), &[a, b, c]);
        let u = trilinear_u(
            self.value(x).data(),
            self.value(y).data(),
            self.value(w).data(),
            n,
            a,
            b,
            c,
        );
        let zv = self.value(z).data();
        let mut out = vec![0.0; n * n * n];
        for h in 0..n {
            for m in 0..n {
                let urow = &u[(h * n + m) * c..(h * n + m + 1) * c];
                for s in 0..n {
                    let zrow = &zv[s * c..(s + 1) * c];
                    out[(h * n + s) * n + m] = urow.iter().zip(zrow).map(|(p, q)| p * q).sum();
                }
            }
        }
        self.push(
            Tensor::new(vec![n, n, n], out),
            Op::Trilinear { x, y, z, w },
        )
    }

    /// Row-wise log-softmax of `[rows, k]` restricted to `allowed` entries.
    pub fn log_softmax_rows(&mut self, x: Var, allowed: Vec<bool>) -> Var {
        let (rows, k) = self.value(x).dims2();
        assert_eq!(allowed.len(), rows * k);
        let xv = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; rows * k];
        for r in 0..rows {
            let idx = r * k..(r + 1) * k;
            let max = idx
                .clone()
                .filter(|&i| allowed[i])
                .map(|i| xv[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let z = max
                + idx
                    .clone()
                    .filter(|&i| allowed[i])
                    .map(|i| (xv[i] - max).exp())
                    .sum::<f64>()
                    .ln();
            for i in idx.filter(|&i| allowed[i]) {
                out[i] = xv[i] - z;
            }
        }
        self.push(
            Tensor::new(vec![rows, k], out),
            Op::LogSoftmaxRows { x, allowed },
        )
    }

    /// Back-propagate the seed gradients of one or more outputs.
    pub fn backward(&self, seeds: &[(Var, &[f64])]) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        for &(var, seed) in seeds {
            assert_eq!(seed.len(), self.value(var).data().len(), "seed length");
            accumulate(&mut grads, var, seed, self.value(var).data().len());
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients(grads)
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let (_, n) = self.value(*b).dims2();
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for t in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            let gij = g[i * n + j];
                            acc += gij * bv[t * n + j];
                            gb[t * n + j] += av[i * k + t] * gij;
                        }
                        ga[i * k + t] = acc;
                    }
                }
                accumulate(grads, *a, &ga, m * k);
                accumulate(grads, *b, &gb, k * n);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g, g.len());
                accumulate(grads, *b, g, g.len());
            }
            Op::AddBias(a, bias) => {
                let n = self.value(*bias).data().len();
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                }
                accumulate(grads, *a, g, g.len());
                accumulate(grads, *bias, &gb, n);
            }
            Op::Tanh(a) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(node.value.data())
                    .map(|(gi, y)| gi * (1.0 - y * y))
                    .collect();
                accumulate(grads, *a, &ga, ga.len());
            }
            Op::Gather(table, indices) => {
                let (rows, d) = self.value(*table).dims2();
                let mut gt = vec![0.0; rows * d];
                for (r, &i) in indices.iter().enumerate() {
                    for c in 0..d {
                        gt[i * d + c] += g[r * d + c];
                    }
                }
                accumulate(grads, *table, &gt, rows * d);
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    let mut gp = vec![0.0; rows * w];
                    for i in 0..rows {
                        gp[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    accumulate(grads, p, &gp, rows * w);
                    offset += w;
                }
            }
            Op::AppendOnes(a) => {
                let (m, n) = self.value(*a).dims2();
                let ga: Vec<f64> = (0..m)
                    .flat_map(|i| g[i * (n + 1)..i * (n + 1) + n].iter().copied())
                    .collect();
                accumulate(grads, *a, &ga, m * n);
            }
            Op::Transpose(a) => {
                let (m, n) = self.value(*a).dims2();
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] = g[j * m + i];
                    }
                }
                accumulate(grads, *a, &ga, m * n);
            }
            Op::Reshape(a) => accumulate(grads, *a, g, g.len()),
            Op::MultiBilinear { x, w, y } => {
                let (n, a) = self.value(*x).dims2();
                let (m, b) = self.value(*y).dims2();
                let l = self.value(*w).shape()[0];
                let (xv, wv, yv) = (
                    self.value(*x).data(),
                    self.value(*w).data(),
                    self.value(*y).data(),
                );
                let mut gx = vec![0.0; n * a];
                let mut gw = vec![0.0; l * a * b];
                let mut gy = vec![0.0; m * b];
                // gxy[i][lab][q] = Σ_j g[i][j][lab] y[j][q]
                let mut gyacc = vec![0.0; b];
                let mut xw = vec![0.0; b];
                for i in 0..n {
                    for lab in 0..l {
                        gyacc.iter_mut().for_each(|v| *v = 0.0);
                        xw.iter_mut().for_each(|v| *v = 0.0);
                        for p in 0..a {
                            let xp = xv[i * a + p];
                            for q in 0..b {
                                xw[q] += xp * wv[(lab * a + p) * b + q];
                            }
                        }
                        for j in 0..m {
                            let gij = g[(i * m + j) * l + lab];
                            if gij == 0.0 {
                                continue;
                            }
                            for q in 0..b {
                                gyacc[q] += gij * yv[j * b + q];
                                gy[j * b + q] += gij * xw[q];
                            }
                        }
                        for p in 0..a {
                            let xp = xv[i * a + p];
                            let mut acc = 0.0;
                            for q in 0..b {
                                let wpq = wv[(lab * a + p) * b + q];
                                acc += wpq * gyacc[q];
                                gw[(lab * a + p) * b + q] += xp * gyacc[q];
                            }
                            gx[i * a + p] += acc;
                        }
                    }
                }
                accumulate(grads, *x, &gx, n * a);
                accumulate(grads, *w, &gw, l * a * b);
                accumulate(grads, *y, &gy, m * b);
            }
            Op::Trilinear { x, y, z, w } => {
                let (n, a) = self.value(*x).dims2();
                let b = self.value(*y).shape()[1];
                let c = self.value(*z).shape()[1];
                let (xv, yv, zv, wv) = (
                    self.value(*x).data(),
                    self.value(*y).data(),
                    self.value(*z).data(),
                    self.value(*w).data(),
                );
                // Recompute t[h][b][c] = Σ_a x[h][a] w[a][b][c] and u = t · y.
                let t = trilinear_t(xv, wv, n, a, b, c);
                let u = trilinear_u(xv, yv, wv, n, a, b, c);
                let mut gu = vec![0.0; n * n * c];
                let mut gz = vec![0.0; n * c];
                for h in 0..n {
                    for s in 0..n {
                        for m in 0..n {
                            let gv = g[(h * n + s) * n + m];
                            if gv == 0.0 {
                                continue;
                            }
                            for r in 0..c {
                                gu[(h * n + m) * c + r] += gv * zv[s * c + r];
                                gz[s * c + r] += gv * u[(h * n + m) * c + r];
                            }
                        }
                    }
                }
                let mut gt = vec![0.0; n * b * c];
                let mut gy = vec![0.0; n * b];
                for h in 0..n {
                    for m in 0..n {
                        let gurow = &gu[(h * n + m) * c..(h * n + m + 1) * c];
                        for q in 0..b {
                            let ym = yv[m * b + q];
                            let trow = &t[(h * b + q) * c..(h * b + q + 1) * c];
                            let mut acc = 0.0;
                            for r in 0..c {
                                gt[(h * b + q) * c + r] += gurow[r] * ym;
                                acc += gurow[r] * trow[r];
                            }
                            gy[m * b + q] += acc;
                        }
                    }
                }
                let mut gw = vec![0.0; a * b * c];
                let mut gx = vec![0.0; n * a];
                for h in 0..n {
                    for p in 0..a {
                        let xp = xv[h * a + p];
                        let mut acc = 0.0;
                        for qr in 0..b * c {
                            gw[p * b * c + qr] += xp * gt[h * b * c + qr];
                            acc += wv[p * b * c + qr] * gt[h * b * c + qr];
                        }
                        gx[h * a + p] += acc;
                    }
                }
                accumulate(grads, *x, &gx, n * a);
                accumulate(grads, *y, &gy, n * b);
                accumulate(grads, *z, &gz, n * c);
                accumulate(grads, *w, &gw, a * b * c);
            }
            Op::LogSoftmaxRows { x, allowed } => {
                let (rows, k) = self.value(*x).dims2();
                let out = node.value.data();
                let mut gx = vec![0.0; rows * k];
                for r in 0..rows {
                    let idx = r * k..(r + 1) * k;
                    let total: f64 = idx.clone().filter(|&i| allowed[i]).map(|i| g[i]).sum();
                    for i in idx.filter(|&i| allowed[i]) {
                        gx[i] = g[i] - out[i].exp() * total;
                    }
                }
                accumulate(grads, *x, &gx, rows * k);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, g: &[f64], len: usize) {
    let slot = grads[var.0].get_or_insert_with(|| vec![0.0; len]);
    slot.iter_mut().zip(g).for_each(|(s, v)| *s += v);
}

/// `t[h][b][c] = Σ_a x[h][a] w[a][b][c]`.
fn trilinear_t(x: &[f64], w: &[f64], n: usize, a: usize, b: usize, c: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * b * c];
    for h in 0..n {
        for p in 0..a {
            let xp = x[h * a + p];
            if xp == 0.0 {
                continue;
            }
            let wslab = &w[p * b * c..(p + 1) * b * c];
            for (acc, &wv) in t[h * b * c..(h + 1) * b * c].iter_mut().zip(wslab) {
                *acc += xp * wv;
            }
        }
    }
    t
}

/// `u[h][m][c] = Σ_b t[h][b][c] y[m][b]`.
fn trilinear_u(
    x: &[f64],
    y: &[f64],
    w: &[f64],
    n: usize,
    a: usize,
    b: usize,
    c: usize,
) -> Vec<f64> {
    let t = trilinear_t(x, w, n, a, b, c);
    let mut u = vec![0.0; n * n * c];
    for h in 0..n {
        for m in 0..n {
            let urow = &mut u[(h * n + m) * c..(h * n + m + 1) * c];
            for q in 0..b {
                let ym = y[m * b + q];
                if ym == 0.0 {
                    continue;
                }
                let trow = &t[(h * b + q) * c..(h * b + q + 1) * c];
                for (acc, &tv) in urow.iter_mut().zip(trow) {
                    *acc += ym * tv;
                }
            }
        }
    }
    u
}
