//! Two-layer LSTM with a linear read-out, batched over rows.
//!
//! Parameters live in one flat vector so that the optimizer, the gradient
//! checker and the file format can all treat them uniformly. Gate order
//! inside each `4H` block is input, forget, cell, output.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use crate::contact_sim::STATE_DIM;
use crate::nn::sigmoid;

pub const ACTION_DIM: usize = 2;
pub const INPUT_DIM: usize = STATE_DIM + ACTION_DIM;

/// Offsets of each parameter block in the flat vector, in file order:
/// `w1 (32×4H), u1 (H×4H), b1 (4H), w2 (H×4H), u2 (H×4H), b2 (4H),
/// wo (H×30), bo (30)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
}

impl Layout {
    fn sizes(&self) -> [usize; 8] {
        let h = self.hidden;
        [
            INPUT_DIM * 4 * h,
            h * 4 * h,
            4 * h,
            h * 4 * h,
            h * 4 * h,
            4 * h,
            h * STATE_DIM,
            STATE_DIM,
        ]
    }

    pub fn len(&self) -> usize {
        self.sizes().iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Range of the read-out weights and bias within the flat vector.
    pub fn head_range(&self) -> std::ops::Range<usize> {
        let s = self.sizes();
        let start: usize = s[..6].iter().sum();
        start..start + s[6] + s[7]
    }

    pub fn views<'a>(&self, p: &'a [f64]) -> Params<'a> {
        let h = self.hidden;
        let s = self.sizes();
        let mut off = 0;
        let mut take = |n: usize| {
            let out = &p[off..off + n];
            off += n;
            out
        };
        let m = |d: &'a [f64], r: usize, c: usize| ArrayView2::from_shape((r, c), d).expect("layout");
        Params {
            w1: m(take(s[0]), INPUT_DIM, 4 * h),
            u1: m(take(s[1]), h, 4 * h),
            b1: ArrayView1::from(take(s[2])),
            w2: m(take(s[3]), h, 4 * h),
            u2: m(take(s[4]), h, 4 * h),
            b2: ArrayView1::from(take(s[5])),
            wo: m(take(s[6]), h, STATE_DIM),
            bo: ArrayView1::from(take(s[7])),
        }
    }

    pub fn views_mut<'a>(&self, g: &'a mut [f64]) -> ParamsMut<'a> {
        let h = self.hidden;
        let s = self.sizes();
        let (w1, rest) = g.split_at_mut(s[0]);
        let (u1, rest) = rest.split_at_mut(s[1]);
        let (b1, rest) = rest.split_at_mut(s[2]);
        let (w2, rest) = rest.split_at_mut(s[3]);
        let (u2, rest) = rest.split_at_mut(s[4]);
        let (b2, rest) = rest.split_at_mut(s[5]);
        let (wo, bo) = rest.split_at_mut(s[6]);
        let m = |d: &'a mut [f64], r: usize, c: usize| ArrayViewMut2::from_shape((r, c), d).expect("layout");
        ParamsMut {
            w1: m(w1, INPUT_DIM, 4 * h),
            u1: m(u1, h, 4 * h),
            b1: ArrayViewMut1::from(b1),
            w2: m(w2, h, 4 * h),
            u2: m(u2, h, 4 * h),
            b2: ArrayViewMut1::from(b2),
            wo: m(wo, h, STATE_DIM),
            bo: ArrayViewMut1::from(bo),
        }
    }
}

pub struct Params<'a> {
    pub w1: ArrayView2<'a, f64>,
    pub u1: ArrayView2<'a, f64>,
    pub b1: ArrayView1<'a, f64>,
    pub w2: ArrayView2<'a, f64>,
    pub u2: ArrayView2<'a, f64>,
    pub b2: ArrayView1<'a, f64>,
    pub wo: ArrayView2<'a, f64>,
    pub bo: ArrayView1<'a, f64>,
}

pub struct ParamsMut<'a> {
    pub w1: ArrayViewMut2<'a, f64>,
    pub u1: ArrayViewMut2<'a, f64>,
    pub b1: ArrayViewMut1<'a, f64>,
    pub w2: ArrayViewMut2<'a, f64>,
    pub u2: ArrayViewMut2<'a, f64>,
    pub b2: ArrayViewMut1<'a, f64>,
    pub wo: ArrayViewMut2<'a, f64>,
    pub bo: ArrayViewMut1<'a, f64>,
}

/// Recurrent state of both layers for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub h1: Array2<f64>,
    pub c1: Array2<f64>,
    pub h2: Array2<f64>,
    pub c2: Array2<f64>,
}

impl State {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        let z = Array2::zeros((batch, hidden));
        State {
            h1: z.clone(),
            c1: z.clone(),
            h2: z.clone(),
            c2: z,
        }
    }
}

/// Everything one cell step needs for its backward pass.
pub struct CellCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// Activated gates `[i, f, g, o]`.
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
}

fn cell_forward(
    x: Array2<f64>,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
    w: &ArrayView2<f64>,
    u: &ArrayView2<f64>,
    b: &ArrayView1<f64>,
) -> (Array2<f64>, Array2<f64>, CellCache) {
    let (rows, h) = (x.nrows(), h_prev.ncols());
    let mut z = Array2::from_shape_fn((rows, 4 * h), |(_, j)| b[j]);
    general_mat_mul(1.0, &x, w, 1.0, &mut z);
    general_mat_mul(1.0, h_prev, u, 1.0, &mut z);
    let mut c = Array2::zeros((rows, h));
    let mut tanh_c = Array2::zeros((rows, h));
    let mut h_new = Array2::zeros((rows, h));
    for r in 0..rows {
        let zr = z.row_mut(r).into_slice().expect("contiguous");
        for j in 0..h {
            let i = sigmoid(zr[j]);
            let f = sigmoid(zr[h + j]);
            let g = zr[2 * h + j].tanh();
            let o = sigmoid(zr[3 * h + j]);
            zr[j] = i;
            zr[h + j] = f;
            zr[2 * h + j] = g;
            zr[3 * h + j] = o;
            let cv = f * c_prev[[r, j]] + i * g;
            let tc = cv.tanh();
            c[[r, j]] = cv;
            tanh_c[[r, j]] = tc;
            h_new[[r, j]] = o * tc;
        }
    }
    let cache = CellCache {
        x,
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        gates: z,
        tanh_c,
    };
    (h_new, c, cache)
}

/// Backward through one cell step. Accumulates parameter gradients and
/// returns `(dx, dh_prev, dc_prev)`; `dx` is skipped when not needed.
#[allow(clippy::too_many_arguments)]
fn cell_backward(
    cache: &CellCache,
    dh: &Array2<f64>,
    dc_next: &Array2<f64>,
    w: &ArrayView2<f64>,
    u: &ArrayView2<f64>,
    gw: &mut ArrayViewMut2<f64>,
    gu: &mut ArrayViewMut2<f64>,
    gb: &mut ArrayViewMut1<f64>,
    need_dx: bool,
) -> (Option<Array2<f64>>, Array2<f64>, Array2<f64>) {
    let (rows, h) = (dh.nrows(), dh.ncols());
    let mut dz = Array2::zeros((rows, 4 * h));
    let mut dc_prev = Array2::zeros((rows, h));
    for r in 0..rows {
        let gr = cache.gates.row(r);
        let dzr = dz.row_mut(r).into_slice().expect("contiguous");
        for j in 0..h {
            let (i, f, g, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
            let tc = cache.tanh_c[[r, j]];
            let d_h = dh[[r, j]];
            let dc = dc_next[[r, j]] + d_h * o * (1.0 - tc * tc);
            dzr[j] = dc * g * i * (1.0 - i);
            dzr[h + j] = dc * cache.c_prev[[r, j]] * f * (1.0 - f);
            dzr[2 * h + j] = dc * i * (1.0 - g * g);
            dzr[3 * h + j] = d_h * tc * o * (1.0 - o);
            dc_prev[[r, j]] = dc * f;
        }
    }
    general_mat_mul(1.0, &cache.x.t(), &dz, 1.0, gw);
    general_mat_mul(1.0, &cache.h_prev.t(), &dz, 1.0, gu);
    *gb += &dz.sum_axis(Axis(0));
    let dx = need_dx.then(|| dz.dot(&w.t()));
    let dh_prev = dz.dot(&u.t());
    (dx, dh_prev, dc_prev)
}

pub struct StepCache {
    l1: CellCache,
    l2: CellCache,
    h2: Array2<f64>,
}

/// One time step for a batch. `x` is the normalized `[state, action]` input;
/// returns the raw read-out (before any residual connection).
pub fn step(p: &Params, x: Array2<f64>, state: &mut State, keep: bool) -> (Array2<f64>, Option<StepCache>) {
    let (h1, c1, l1) = cell_forward(x, &state.h1, &state.c1, &p.w1, &p.u1, &p.b1);
    let (h2, c2, l2) = cell_forward(h1.clone(), &state.h2, &state.c2, &p.w2, &p.u2, &p.b2);
    let mut y = Array2::from_shape_fn((h2.nrows(), STATE_DIM), |(_, j)| p.bo[j]);
    general_mat_mul(1.0, &h2, &p.wo, 1.0, &mut y);
    state.h1 = h1;
    state.c1 = c1;
    state.c2 = c2;
    let cache = keep.then(|| StepCache { l1, l2, h2: h2.clone() });
    state.h2 = h2;
    (y, cache)
}

/// BPTT over a cached sequence given `dy[t]`, the loss gradient with respect
/// to each step's read-out. Gradients are accumulated into `grads`.
pub fn backward(layout: &Layout, p: &Params, caches: &[StepCache], dy: &[Array2<f64>], grads: &mut [f64]) {
    let mut g = layout.views_mut(grads);
    let Some(first) = caches.first() else {
        return;
    };
    let (rows, h) = (first.h2.nrows(), layout.hidden);
    let mut dh1_next = Array2::zeros((rows, h));
    let mut dc1_next = Array2::zeros((rows, h));
    let mut dh2_next = Array2::zeros((rows, h));
    let mut dc2_next = Array2::zeros((rows, h));
    for t in (0..caches.len()).rev() {
        let c = &caches[t];
        general_mat_mul(1.0, &c.h2.t(), &dy[t], 1.0, &mut g.wo);
        g.bo += &dy[t].sum_axis(Axis(0));
        let dh2 = dy[t].dot(&p.wo.t()) + &dh2_next;
        let (dx2, dh2_prev, dc2_prev) = cell_backward(
            &c.l2, &dh2, &dc2_next, &p.w2, &p.u2, &mut g.w2, &mut g.u2, &mut g.b2, true,
        );
        let dh1 = dx2.expect("requested") + &dh1_next;
        let (_, dh1_prev, dc1_prev) = cell_backward(
            &c.l1, &dh1, &dc1_next, &p.w1, &p.u1, &mut g.w1, &mut g.u1, &mut g.b1, false,
        );
        dh2_next = dh2_prev;
        dc2_next = dc2_prev;
        dh1_next = dh1_prev;
        dc1_next = dc1_prev;
    }
}
