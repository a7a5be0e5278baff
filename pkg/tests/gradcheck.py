"""Central finite-difference oracle for the tape engine.

The analytic gradient is computed in float32 (the production dtype). The
numerical oracle re-runs the same forward function in float64 with no tape,
perturbing one input entry at a time by +/- h.
"""

from __future__ import annotations

import numpy as np

from adaptok.numerics import Tensor, backward, default_dtype, no_grad


def analytic_grads(fn, arrays, dtype=np.float32):
    with default_dtype(dtype):
        ts = [Tensor(a, requires_grad=True) for a in arrays]
        loss = fn(*ts)
        backward(loss, ts)
    return [t.grad.astype(np.float64) for t in ts]


def numeric_grads(fn, arrays, h=1e-3):
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    out = []
    with default_dtype(np.float64), no_grad():

        def f():
            return float(fn(*[Tensor(a) for a in arrays]).data)

        for a in arrays:
            g = np.zeros_like(a)
            flat, gflat = a.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f()
                flat[i] = orig - h
                fm = f()
                flat[i] = orig
                gflat[i] = (fp - fm) / (2 * h)
            out.append(g)
    return out


def relative_error(a: np.ndarray, n: np.ndarray) -> float:
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale < 1e-12:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def max_relative_error(fn, arrays, h=1e-3) -> float:
    an = analytic_grads(fn, arrays)
    nu = numeric_grads(fn, arrays, h)
    return max(relative_error(a, n) for a, n in zip(an, nu))


def _w(out, R):
    from adaptok.numerics import tsum

    return tsum(out * Tensor(R))


def primitive_cases(seed: int = 0):
    """(name, fn, arrays) for every differentiable primitive, ranks 1-3."""
    import adaptok.numerics as N
    from adaptok.numerics.nn import rope_angles

    rng = np.random.default_rng(seed)
    r = rng.normal
    idx = np.array([[0, 2, 1], [3, 3, 0]])
    tgt = np.array([[1, 0, 4], [2, -1, 3]])
    cos, sin = rope_angles(np.arange(5), 6)
    cases = [
        ("add_broadcast", lambda a, b: _w(a + b, R34), [r(size=(3, 4)), r(size=(4,))]),
        ("sub_rank3", lambda a, b: _w(a - b, R234), [r(size=(2, 3, 4)), r(size=(1, 4))]),
        ("mul_broadcast", lambda a, b: _w(a * b, R234), [r(size=(2, 3, 4)), r(size=(3, 1))]),
        ("div", lambda a, b: _w(a / b, R34), [r(size=(3, 4)), 1.5 + rng.random((3, 4))]),
        ("neg_rank1", lambda a: _w(-a, R5), [r(size=(5,))]),
        ("power", lambda a: _w(a**3, R34), [r(size=(3, 4))]),
        ("exp", lambda a: _w(N.exp(a), R34), [r(size=(3, 4))]),
        ("log", lambda a: _w(N.log(a), R34), [0.5 + rng.random((3, 4))]),
        ("tanh", lambda a: _w(N.tanh(a), R234), [r(size=(2, 3, 4))]),
        ("sigmoid", lambda a: _w(N.sigmoid(a), R34), [r(size=(3, 4))]),
        ("silu", lambda a: _w(N.silu(a), R234), [r(size=(2, 3, 4))]),
        ("gelu", lambda a: _w(N.gelu(a), R234), [r(size=(2, 3, 4))]),
        ("matmul", lambda a, b: _w(a @ b, R24), [r(size=(2, 3)), r(size=(3, 4))]),
        ("matmul_batched", lambda a, b: _w(a @ b, R235), [r(size=(2, 3, 4)), r(size=(4, 5))]),
        ("matmul_batch_both", lambda a, b: _w(a @ b, R235), [r(size=(2, 3, 4)), r(size=(2, 4, 5))]),
        ("transpose", lambda a: _w(a.transpose(2, 0, 1), R423), [r(size=(2, 3, 4))]),
        ("reshape", lambda a: _w(a.reshape(4, 6), R46), [r(size=(2, 3, 4))]),
        ("sum_axis", lambda a: _w(a.sum(axis=1), R24), [r(size=(2, 3, 4))]),
        ("mean_keepdims", lambda a: _w(a.mean(axis=-1, keepdims=True), R231), [r(size=(2, 3, 4))]),
        ("softmax_rank1", lambda a: _w(N.softmax(a), R5), [r(size=(5,))]),
        ("softmax_rank3", lambda a: _w(N.softmax(a, axis=-1), R234), [r(size=(2, 3, 4))]),
        ("log_softmax", lambda a: _w(N.log_softmax(a), R34), [r(size=(3, 4))]),
        ("layer_norm", lambda a: _w(N.layer_norm(a), R234), [r(size=(2, 3, 4))]),
        ("embedding", lambda a: _w(N.embedding(a, idx), R234), [r(size=(4, 4))]),
        ("cross_entropy", lambda a: N.cross_entropy(a, tgt, W23), [r(size=(2, 3, 5))]),
        ("mse", lambda a: N.mse(a, T34, M34), [r(size=(3, 4))]),
        ("concat", lambda a, b: _w(N.concat([a, b], axis=1), R254), [r(size=(2, 3, 4)), r(size=(2, 2, 4))]),
        ("slice_basic", lambda a: _w(a[:, 1:3], R22), [r(size=(2, 4))]),
        ("slice_advanced", lambda a: _w(a[np.array([0, 2, 2])], R34), [r(size=(3, 4))]),
        ("rope", lambda a: _w(N.rope(a, cos, sin), R256), [r(size=(2, 5, 6))]),
    ]
    return cases


_g = np.random.default_rng(12345).normal
R5, R22, R24, R34, R46 = _g(size=5), _g(size=(2, 2)), _g(size=(2, 4)), _g(size=(3, 4)), _g(size=(4, 6))
R234, R235, R231, R423 = _g(size=(2, 3, 4)), _g(size=(2, 3, 5)), _g(size=(2, 3, 1)), _g(size=(4, 2, 3))
R254, R256 = _g(size=(2, 5, 4)), _g(size=(2, 5, 6))
W23 = np.abs(_g(size=(2, 3))) + 0.1
T34, M34 = _g(size=(3, 4)), (np.arange(12).reshape(3, 4) % 3 != 0)


def mlp3_case(seed: int = 0):
    """A random 3-layer MLP; every weight and bias is a checked input."""
    import adaptok.numerics as N

    rng = np.random.default_rng(seed)
    x = rng.normal(size=(6, 5))
    y = rng.normal(size=(6, 2))
    shapes = [(5, 8), (8,), (8, 7), (7,), (7, 2), (2,)]
    arrays = [rng.normal(0, 0.6, size=s) for s in shapes]

    def fn(w1, b1, w2, b2, w3, b3):
        h = N.tanh(Tensor(x) @ w1 + b1)
        h = N.gelu(h @ w2 + b2)
        return N.mse(h @ w3 + b3, y)

    return fn, arrays
