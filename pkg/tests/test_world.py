import math

import numpy as np
import pytest

from campusnav.world import (
    AgentState,
    DetectionNoise,
    LocalizationHealth,
    ScriptedAgent,
    jitter_polygons,
    localization_error_at,
    predict_cv,
    sense,
)


def _agents():
    return [
        AgentState(1, "Pedestrian", 3.0, 1.0, 0.2, 0.5, 0.5, 1.0, 0.5),
        AgentState(2, "Cyclist", -2.0, 4.0, 1.0, 1.8, 0.6, 0.0, 3.0),
        AgentState(3, "Vehicle", 10.0, -3.0, 0.0, 4.5, 1.8, -2.0, 0.0),
    ]


def test_agent_state_validates_footprint_and_class():
    with pytest.raises(ValueError):
        AgentState(1, "Pedestrian", 0, 0, 0, 0.0, 0.5)
    with pytest.raises(ValueError):
        AgentState(1, "Dog", 0, 0, 0, 0.5, 0.5)


def test_zero_noise_is_identity():
    truth = _agents()
    out = sense(truth, DetectionNoise(), np.random.default_rng(0))
    assert out == truth


def test_full_dropout_is_empty():
    assert sense(_agents(), DetectionNoise(dropout=1.0), np.random.default_rng(0)) == []


def test_seeded_noise_is_reproducible():
    noise = DetectionNoise(position_sigma=0.1, velocity_sigma=0.1, dropout=0.3)
    a = sense(_agents(), noise, np.random.default_rng(5))
    b = sense(_agents(), noise, np.random.default_rng(5))
    assert repr(a) == repr(b)
    assert all(math.hypot(x.vx, x.vy) <= 15.0 for x in a)


def test_noise_parameters_validated():
    with pytest.raises(ValueError):
        DetectionNoise(position_sigma=-1.0)
    with pytest.raises(ValueError):
        DetectionNoise(dropout=1.5)


def test_predict_cv_unit_velocity():
    agent = AgentState(1, "Pedestrian", 0.0, 0.0, 0.0, 0.5, 0.5, 1.0, 0.0)
    pred = predict_cv(agent, horizon=3.0, dt=1.0)
    np.testing.assert_array_equal(pred.positions, [[0, 0], [1, 0], [2, 0], [3, 0]])


def test_predict_cv_stationary():
    agent = AgentState(1, "Vehicle", 4.0, -1.0, 0.3, 4.0, 1.8)
    pred = predict_cv(agent, 4.0, 0.2)
    assert len(pred.positions) == 21
    assert np.all(pred.positions == pred.positions[0])


def test_predict_cv_diagonal_steps():
    agent = AgentState(1, "Cyclist", 0.0, 0.0, 0.0, 1.8, 0.6, 1.0, 1.0)
    pred = predict_cv(agent, horizon=1.0, dt=0.5)
    np.testing.assert_allclose(np.diff(pred.positions, axis=0), [[0.5, 0.5], [0.5, 0.5]], atol=0)


def test_predict_cv_point_count_and_bad_args():
    agent = _agents()[0]
    assert len(predict_cv(agent, 4.0, 0.3).positions) == math.floor(4.0 / 0.3) + 1
    with pytest.raises(ValueError):
        predict_cv(agent, 1.0, 0.0)
    with pytest.raises(ValueError):
        predict_cv(agent, 0.1, 0.2)


def test_localization_profile_interpolates_and_clamps():
    health = LocalizationHealth(((0.0, 0.0), (10.0, 0.5)))
    assert localization_error_at(health, 5.0) == pytest.approx(0.25)
    shifted = LocalizationHealth(((2.0, 0.1), (10.0, 0.5)))
    assert localization_error_at(shifted, 0.0) == pytest.approx(0.1)
    assert localization_error_at(health, 30.0) == pytest.approx(0.5)


def test_localization_profile_validated():
    with pytest.raises(ValueError):
        LocalizationHealth(((0.0, 0.0), (0.0, 0.5)))
    with pytest.raises(ValueError):
        LocalizationHealth(((0.0, -0.1),))


def test_jitter_is_bounded_and_periodic():
    square = [np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])]
    a = jitter_polygons(square, 0.2, 0.7, seed=3)
    b = jitter_polygons(square, 0.2, 2.7, seed=3)
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)
    assert np.max(np.linalg.norm(a[0] - square[0], axis=1)) <= 0.2 + 1e-12
    assert jitter_polygons(square, 0.0, 1.0, seed=3) is square


def test_scripted_agent_schedule_and_window():
    agent = ScriptedAgent(1, "Pedestrian", 0.5, 0.5, schedule=[(0.0, 0.0, 0.0), (2.0, 2.0, 0.0), (4.0, 2.0, 2.0)], t_end=5.0)
    s = agent.state_at(1.0)
    assert (s.x, s.y, s.vx, s.vy) == pytest.approx((1.0, 0.0, 1.0, 0.0))
    s = agent.state_at(3.0)
    assert s.heading == pytest.approx(math.pi / 2)
    assert agent.state_at(5.5) is None
    cv = ScriptedAgent(2, "Cyclist", 1.8, 0.6, start=(0.0, -5.0), velocity=(0.0, 3.0), t_start=1.0)
    assert cv.state_at(0.5) is None
    assert cv.state_at(2.0).y == pytest.approx(-2.0)
