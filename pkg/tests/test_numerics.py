import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import adaptok.numerics as N
from adaptok.numerics import Adam, Tensor, backward, no_grad
from adaptok.numerics.checkpoint import CheckpointError, load, save
from adaptok.numerics.nn import Attention, Linear, key_padding_mask, rope_angles
from gradcheck import max_relative_error, mlp3_case, primitive_cases


@pytest.fixture(autouse=True)
def _clean_tape():
    N.TAPE.clear()
    yield
    N.TAPE.clear()


def test_matmul_shape_algebra():
    out = Tensor(np.ones((2, 3))) @ Tensor(np.ones((3, 4)))
    assert out.shape == (2, 4)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(4, 4\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 4)))


def test_broadcast_mismatch_is_descriptive():
    with pytest.raises(ValueError, match="add"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))


def test_softmax_of_equal_logits_is_uniform():
    p = N.softmax(Tensor(np.full(7, 3.3))).data
    np.testing.assert_allclose(p, np.full(7, 1 / 7), rtol=1e-6)


def test_cross_entropy_of_certain_correct_prediction_is_zero():
    logits = np.full((1, 4), -1e4)
    logits[0, 2] = 0.0
    assert N.cross_entropy(Tensor(logits), np.array([2])).item() == pytest.approx(0.0, abs=1e-7)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_output_names_primitive():
    with pytest.raises(N.NonFiniteError, match="log"):
        N.log(Tensor(np.array([-1.0, 1.0])))


def test_backward_sum_of_squares():
    w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    backward((w * w).sum())
    np.testing.assert_allclose(w.grad, [2.0, 4.0, 6.0])


def test_backward_twice_without_forward_errors():
    w = Tensor([1.0, 2.0], requires_grad=True)
    loss = (w * w).sum()
    backward(loss)
    with pytest.raises(RuntimeError, match="tape"):
        backward(loss)


def test_constant_loss_gives_zero_gradient():
    w = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([0.5], requires_grad=True)
    loss = (c * c).sum() * 0.0 + 3.0
    grads = backward(loss, [w, c])
    np.testing.assert_array_equal(grads[w], 0.0)
    np.testing.assert_array_equal(grads[c], 0.0)


def test_unused_leaf_gets_zero_gradient():
    w = Tensor([1.0, 2.0], requires_grad=True)
    unused = Tensor(np.ones((3, 3)), requires_grad=True)
    backward((w * 2.0).sum(), [w, unused])
    assert unused.grad.shape == (3, 3) and not unused.grad.any()


def test_no_grad_records_nothing():
    w = Tensor([1.0], requires_grad=True)
    with no_grad():
        (w * w).sum()
    assert len(N.TAPE) == 0


@pytest.mark.parametrize("name,fn,arrs", primitive_cases(), ids=[c[0] for c in primitive_cases()])
def test_primitive_gradients_match_finite_differences(name, fn, arrs):
    assert max_relative_error(fn, arrs) < 1e-3


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_three_layer_mlp_gradients(seed):
    fn, arrs = mlp3_case(seed)
    assert max_relative_error(fn, arrs) < 1e-3


def test_attention_block_gradients():
    rng = np.random.default_rng(3)
    attn = Attention(8, 2, rng)
    valid = np.array([[True, True, True, False], [True, True, True, True]])
    mask = key_padding_mask(valid)
    rot = rope_angles(np.arange(4), 4)
    x = rng.normal(size=(2, 4, 8))
    R = rng.normal(size=(2, 4, 8))
    names = [n for n, _ in attn.named_parameters()]
    arrs = [x] + [p.data.astype(np.float64) for p in attn.parameters()]

    def fn(xt, *ws):
        for name, w in zip(names, ws):
            *path, leaf = name.split(".")
            owner = attn
            for part in path:
                owner = getattr(owner, part)
            setattr(owner, leaf, w)
        return (attn(xt, mask, rot) * Tensor(R)).sum()

    assert max_relative_error(fn, arrs) < 1e-3


def test_forward_is_deterministic():
    def run():
        rng = np.random.default_rng(9)
        lin = Linear(5, 3, rng)
        with no_grad():
            return N.gelu(lin(Tensor(rng.normal(size=(4, 5))))).data

    assert np.array_equal(run(), run())


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 6), elements=st.floats(-30, 30)))
def test_softmax_rows_sum_to_one(x):
    with no_grad():
        p = N.softmax(Tensor(x), axis=-1).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 16), elements=st.floats(-10, 10)))
def test_layer_norm_row_statistics(x):
    x = x + np.linspace(0.0, 1.0, 16)  # keep row variance away from zero
    with no_grad():
        y = N.layer_norm(Tensor(x)).data.astype(np.float64)
    assert np.abs(y.mean(axis=-1)).max() < 1e-5
    var = x.var(axis=-1)
    expected = var / (var + 1e-5)
    np.testing.assert_allclose(y.var(axis=-1), expected, atol=1e-4)


def test_adam_first_step_closed_form():
    p = Tensor([1.0], requires_grad=True)
    opt = Adam([p], lr=0.1, clip=None)
    p.grad = np.array([1.0], dtype=np.float32)
    opt.step()
    # bias-corrected first step moves by lr * 1 / (1 + eps)
    assert p.data[0] == pytest.approx(1.0 - 0.1 / (1 + 1e-8), abs=1e-6)


def test_adam_clips_global_norm():
    a = Tensor(np.zeros(2), requires_grad=True)
    b = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([a, b], lr=0.1, clip=10.0)
    a.grad = np.array([12.0, 0.0], dtype=np.float32)
    b.grad = np.array([0.0, 16.0], dtype=np.float32)  # global norm 20
    info = opt.step()
    assert info["grad_norm"] == pytest.approx(20.0)
    assert info["clipped"]
    np.testing.assert_allclose(opt.state.m[0], [0.1 * 6.0, 0.0], rtol=1e-6)
    np.testing.assert_allclose(opt.state.m[1], [0.0, 0.1 * 8.0], rtol=1e-6)


def test_adam_zero_gradient_from_fresh_state_leaves_parameters():
    p = Tensor([1.0, -2.0], requires_grad=True)
    opt = Adam([p], lr=0.1, clip=None)
    p.grad = np.zeros(2, dtype=np.float32)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_zero_gradient_decays_moments():
    p = Tensor([1.0, -2.0], requires_grad=True)
    opt = Adam([p], lr=0.1, clip=None)
    p.grad = np.array([1.0, 1.0], dtype=np.float32)
    opt.step()
    m, v = opt.state.m[0].copy(), opt.state.v[0].copy()
    p.grad = np.zeros(2, dtype=np.float32)
    opt.step()
    np.testing.assert_allclose(opt.state.m[0], 0.9 * m, rtol=1e-6)
    np.testing.assert_allclose(opt.state.v[0], 0.999 * v, rtol=1e-6)
    assert opt.state.step == 2


def test_adam_skips_non_finite_gradient():
    p = Tensor([1.0], requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.array([np.nan], dtype=np.float32)
    info = opt.step()
    assert info["skipped"] and opt.state.step == 0 and p.data[0] == 1.0


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"a": rng.normal(size=(3, 4)).astype(np.float32), "b.c": np.arange(5, dtype=np.float32)}
    save(tmp_path / "x.ckpt", tensors, {"config": {"k": 1}})
    back, meta = load(tmp_path / "x.ckpt")
    assert meta == {"config": {"k": 1}}
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])
    raw = (tmp_path / "x.ckpt").read_bytes()
    assert raw[:8] == b"ADPTOKCK"


def test_checkpoint_rejects_bad_magic(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOTACKPT" + b"\0" * 32)
    with pytest.raises(CheckpointError):
        load(tmp_path / "bad")
