"""Detection embedding, movement features, and the composed pair input."""

import numpy as np
import pytest

from uncertrack.detections import (Detection, FrameArrays, compose_input,
                                   embed_detection, embed_frame,
                                   movement_feature)
from uncertrack.errors import ConfigError
from uncertrack.model import ModelConfig, init_model
from uncertrack.numerics import Tape

from oracles import fd_gradient, rel_err


def _det(pos=(0.0, 0.0), velo=(1.0, 0.5), size=(4.2, 1.8, 1.5),
         heading=0.3, score=0.8, frame=0):
    return Detection(pos=pos, velo=velo, size=size, heading=heading,
                     score=score, frame=frame)


@pytest.fixture(scope="module")
def params():
    return init_model(ModelConfig(), seed=12)


def test_embedding_ignores_position(params):
    a = embed_detection(Tape(), params, _det(pos=(0.0, 0.0)))
    b = embed_detection(Tape(), params, _det(pos=(123.4, -55.0)))
    assert np.array_equal(a.x_det.value, b.x_det.value)
    assert a.x_det.value.shape == (1, 64)


def test_zero_weights_give_zero_embedding(params):
    zeroed = init_model(ModelConfig(), seed=12)
    for block in zeroed.blocks():
        for w in block.weights:
            w[...] = 0.0
    out = embed_detection(Tape(), zeroed, _det())
    assert np.array_equal(out.x_det.value, np.zeros((1, 64)))


def test_embedding_gradient_wrt_fusion_weights(params):
    d = _det()

    def forward():
        tape = Tape()
        out = embed_detection(tape, params, d)
        return tape, tape.sum(out.x_det)

    params.zero_grads()
    tape, loss = forward()
    tape.backward(loss)
    analytic = params.mlp_fus.block.grads[0].copy()

    def value():
        return float(forward()[1].value[0, 0])

    fd = fd_gradient(value, params.mlp_fus.block.weights[0])
    assert rel_err(analytic, fd) < 1e-4
    params.zero_grads()


def test_movement_zero_offset(params):
    prev = _det(pos=(3.0, 4.0), frame=0)
    curr = _det(pos=(3.0, 4.0), frame=1)
    m = movement_feature(Tape(), params, prev, curr)
    assert np.array_equal(m.raw_offset, np.zeros(2))
    tape = Tape()
    zero_in = tape.const(np.zeros((1, 2)))
    from uncertrack.numerics import mlp_forward
    want = mlp_forward(tape, params.mlp_mov, zero_in).value
    assert np.array_equal(m.x_mov.value, want)


def test_movement_translation_invariance(params):
    prev = _det(pos=(1.0, 2.0), frame=0)
    curr = _det(pos=(2.5, 1.0), frame=1)
    m1 = movement_feature(Tape(), params, prev, curr)
    prev2 = _det(pos=(6.0, 7.0), frame=0)
    curr2 = _det(pos=(7.5, 6.0), frame=1)
    m2 = movement_feature(Tape(), params, prev2, curr2)
    assert np.array_equal(m1.x_mov.value, m2.x_mov.value)


def test_movement_distinct_offsets_distinct_features(params):
    prev = _det(pos=(0.0, 0.0), frame=0)
    a = movement_feature(Tape(), params, prev, _det(pos=(1.0, 0.0), frame=1))
    b = movement_feature(Tape(), params, prev, _det(pos=(0.0, 1.0), frame=1))
    assert not np.array_equal(a.x_mov.value, b.x_mov.value)


def test_movement_frame_mismatch(params):
    with pytest.raises(ConfigError):
        movement_feature(Tape(), params, _det(frame=0), _det(frame=2))


def test_compose_concatenates_and_round_trips(params):
    tape = Tape()
    e = embed_detection(tape, params, _det())
    m = movement_feature(tape, params, _det(pos=(0.0, 0.0), frame=0),
                         _det(pos=(0.4, -0.2), frame=1))
    x = compose_input(tape, e, m)
    assert x.value.shape == (1, 96)
    assert np.array_equal(x.value[:, :64], e.x_det.value)
    assert np.array_equal(x.value[:, 64:], m.x_mov.value)


def test_scene_translation_invariance_many_cases(params):
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        frame = FrameArrays(pos=rng.uniform(-20, 20, (n, 2)),
                            velo=rng.uniform(-5, 5, (n, 2)),
                            size=rng.uniform(1, 5, (n, 3)),
                            heading=rng.uniform(-np.pi, np.pi, n),
                            score=rng.uniform(0.1, 0.9, n))
        shift = rng.uniform(-50, 50, 2)
        shifted = FrameArrays(pos=frame.pos + shift, velo=frame.velo,
                              size=frame.size, heading=frame.heading,
                              score=frame.score)
        a = embed_frame(Tape(), params, frame).value
        b = embed_frame(Tape(), params, shifted).value
        assert np.array_equal(a, b)
