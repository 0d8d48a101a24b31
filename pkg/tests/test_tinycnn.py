import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nodeval.tinycnn import (MAGIC, CnnModel, WeightsFormatError, backward, bce_loss, final_size, forward,
                             fuse_views, infer_nodule, load_weights, save_weights, sigmoid, trace, train_step)
from oracles import finite_difference

REDUCED = (2,) * 6


def image(size, seed=0):
    return np.random.default_rng(seed).random((size, size))


def reduced(size=8, seed=0):
    return CnnModel.random(REDUCED, input_size=size, seed=seed, bias=0.1)


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def test_zero_model_outputs_half():
    model = CnnModel.zeros()
    assert forward(model, image(160)) == 0.5
    loss, _ = backward(model, image(160), 1)
    assert loss == pytest.approx(math.log(2), abs=1e-15)


def test_spatial_sizes():
    out = trace(CnnModel.random(seed=1), image(160))
    assert [s["relu"].shape[1] for s in out] == [160, 80, 40, 20, 10, 5]
    assert [s["pooled"].shape[1] for s in out[:5]] == [80, 40, 20, 10, 5]
    assert [s["relu"].shape[0] for s in out] == [16, 32, 48, 64, 80, 96]
    assert final_size(160) == 5 and final_size(8) == 1


def test_relu_and_pool_sanity():
    out = trace(CnnModel.random(seed=2), image(160, seed=2))
    for step in out:
        assert (step["relu"] >= 0).all()
    r, pooled = out[0]["relu"], out[0]["pooled"]
    ref = r.reshape(r.shape[0], 80, 2, 80, 2).max(axis=(2, 4))
    assert np.array_equal(pooled, ref)


def test_ceil_pool_keeps_odd_rows():
    out = trace(reduced(size=10), image(10))
    assert [s["relu"].shape[1] for s in out] == [10, 5, 3, 2, 1, 1]


def test_forward_rejects_wrong_shape():
    with pytest.raises(ValueError):
        forward(CnnModel.zeros(), image(159))


def test_forward_rejects_nonfinite_weights():
    m = reduced()
    m.fc_w[0] = np.nan
    with pytest.raises(ValueError):
        forward(m, image(8))


def test_forward_deterministic_without_dropout():
    m = CnnModel.random(seed=3)
    x = image(160, seed=3)
    assert forward(m, x) == forward(m, x)


def test_dropout_changes_output_but_is_seeded():
    m = reduced(size=32)
    x = image(32, seed=1)
    assert forward(m, x, dropout_seed=5) == forward(m, x, dropout_seed=5)
    outs = {forward(m, x, dropout_seed=s) for s in range(10)}
    assert len(outs) > 1


@pytest.mark.parametrize("size", [8, 32])
@pytest.mark.parametrize("target", [0, 1])
def test_gradient_matches_finite_differences(size, target):
    model = reduced(size, seed=size + target)
    x = image(size, seed=7)
    _, grads = backward(model, x, target)

    def loss():
        return bce_loss(forward(model, x), target)

    rng = np.random.default_rng(0)
    errors = []
    for p, g in zip(model.parameters(), grads):
        idx = range(p.size) if p.size <= 40 else rng.choice(p.size, 40, replace=False)
        for i in idx:
            errors.append(rel_err(g.flat[i], finite_difference(loss, p, int(i))))
    errors = np.array(errors)
    assert (errors <= 1e-4).mean() >= 0.99, errors.max()


def test_gradient_with_dropout():
    model = reduced(32, seed=4)
    x = image(32, seed=4)
    _, grads = backward(model, x, 1, dropout_seed=11)

    def loss():
        return bce_loss(forward(model, x, dropout_seed=11), 1)

    for p, g in zip(model.parameters(), grads):
        i = int(np.argmax(np.abs(g)))
        assert rel_err(g.flat[i], finite_difference(loss, p, i)) <= 1e-4


def test_zero_model_gradient_only_on_fc_bias():
    _, grads = backward(CnnModel.zeros(REDUCED, 8), image(8), 1)
    assert grads[-1][0] == -0.5
    assert all((g == 0).all() for g in grads[:-1])


def test_train_step_lowers_loss():
    model = reduced(32, seed=9)
    x = image(32, seed=9)
    first = train_step(model, x, 1, lr=0.05)
    for _ in range(20):
        last = train_step(model, x, 1, lr=0.05)
    assert last < first


def test_backward_rejects_bad_target():
    with pytest.raises(ValueError):
        backward(reduced(), image(8), 2)


@given(st.floats(-800, 800))
def test_sigmoid_open_interval(z):
    p = sigmoid(z)
    assert 0.0 < p < 1.0
    assert math.isfinite(bce_loss(p, 0)) and math.isfinite(bce_loss(p, 1))


@settings(max_examples=50)
@given(st.floats(0, 1), st.floats(0, 1))
def test_fuse_symmetric_and_between(a, b):
    f = fuse_views(a, b)
    assert f == fuse_views(b, a)
    assert min(a, b) <= f <= max(a, b)


def test_infer_nodule():
    m = reduced(size=32, seed=1)
    r = infer_nodule(m, image(32, 1), image(32, 2))
    assert r.p_fused == (r.p_transverse + r.p_longitudinal) / 2


# ---- weights file

def test_round_trip_bit_exact(tmp_path):
    m = CnnModel.random(seed=12)
    save_weights(m, tmp_path / "w.bin")
    back = load_weights(tmp_path / "w.bin")
    assert back.input_size == 160 and back.channels == m.channels
    for a, b in zip(m.parameters(), back.parameters()):
        assert a.tobytes() == b.tobytes()
    x = image(160)
    assert forward(back, x) == forward(m, x)


def test_round_trip_reduced_with_explicit_size(tmp_path):
    m = reduced(size=8)
    save_weights(m, tmp_path / "w.bin")
    back = load_weights(tmp_path / "w.bin", input_size=8)
    assert all(np.array_equal(a, b) for a, b in zip(m.parameters(), back.parameters()))


def test_bad_magic(tmp_path):
    p = tmp_path / "w.bin"
    save_weights(reduced(), p)
    p.write_bytes(b"XXXXX" + p.read_bytes()[len(MAGIC):])
    with pytest.raises(WeightsFormatError, match="magic"):
        load_weights(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "w.bin"
    save_weights(reduced(size=32), p)
    p.write_bytes(p.read_bytes()[:-100])
    with pytest.raises(WeightsFormatError, match="truncated"):
        load_weights(p)


def test_extra_payload(tmp_path):
    p = tmp_path / "w.bin"
    save_weights(reduced(size=32), p)
    p.write_bytes(p.read_bytes() + b"\0" * 8)
    with pytest.raises(WeightsFormatError):
        load_weights(p)


def test_conv6_fc_mismatch(tmp_path):
    import struct
    p = tmp_path / "w.bin"
    save_weights(reduced(size=32), p)
    raw = bytearray(p.read_bytes())
    struct.pack_into("<I", raw, len(MAGIC) + 4 * 5, 3)  # conv6 claims 3 channels, fc expects 2
    p.write_bytes(bytes(raw))
    with pytest.raises(WeightsFormatError, match="conv6"):
        load_weights(p)
    with pytest.raises(WeightsFormatError, match="conv6"):
        load_weights(p, input_size=32)


def test_model_shape_validation():
    m = CnnModel.zeros(REDUCED, 8)
    with pytest.raises(ValueError):
        CnnModel(REDUCED, m.conv_w, m.conv_b, np.zeros(5), m.fc_b, input_size=8)
    with pytest.raises(ValueError):
        CnnModel.zeros((2,) * 5)
