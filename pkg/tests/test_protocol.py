from __future__ import annotations

import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dummyless.graphs import line_graph
from dummyless.mbqc import (
    AbortAdversary,
    FixedDeviationAdversary,
    MeasurementPattern,
    Server,
    ubqc_round,
)
from dummyless.pauli import PauliOp
from dummyless.protocol import (
    NoiseModel,
    ProtocolConfigError,
    ProtocolParams,
    PublicInfo,
    correction_removal_equivalence,
    correction_removal_sweep,
    deviation_effect,
    load_run_config,
    majority,
    max_failures,
    qsmpc_computation_distribution,
    random_deviation,
    removed_key_is_uniform,
    run_qsmpc,
    run_trappified_protocol,
    two_client_identity_pattern,
    line_identity_pattern,
    ubqc_computation_distribution,
)
from dummyless.sim import Angle8, output_distribution, total_variation
from dummyless.mbqc import run_mbqc
from dummyless.stabilizers import s0_operator
from dummyless.traps import ErrorOp, strategy_general

from conftest import DATA


# -- parameters ----------------------------------------------------------------


def test_max_failures_examples():
    assert max_failures(Fraction(1, 3), 1000, Fraction(1, 14)) == 232
    assert max_failures(Fraction(1, 3), 1000, 1) == 0
    with pytest.raises(ProtocolConfigError):
        max_failures(Fraction(1, 2), 10, Fraction(1, 2))
    with pytest.raises(ProtocolConfigError):
        max_failures(Fraction(1, 3), 10, 0)


@given(st.fractions(Fraction(1, 100), Fraction(49, 100)), st.integers(0, 5000), st.fractions(Fraction(1, 1000), 1))
def test_max_failures_is_largest_integer_strictly_below_bound(c, s, eps):
    w = max_failures(c, s, eps)
    bound = (2 * c - 1) / (2 * c - 2) * s * (1 - eps)
    assert w >= 0
    if bound > 0:
        assert w < bound <= w + 1
    else:
        assert w == 0


def test_params_validation():
    with pytest.raises(ProtocolConfigError):
        ProtocolParams(10, 4, 1)
    with pytest.raises(ProtocolConfigError):
        ProtocolParams(3, 5, 1)
    with pytest.raises(ProtocolConfigError):
        ProtocolParams(10, 3, -1)
    p = ProtocolParams.auto(1005, 5, Fraction(1, 14))
    assert p.s == 1000 and p.w == 232
    with pytest.raises(ProtocolConfigError):
        NoiseModel(1.5)


def test_majority():
    assert majority([(1, 0), (1, 1), (0, 0)]) == (1, 0)
    with pytest.raises(ProtocolConfigError):
        majority([])


def test_noise_model_support_nonempty():
    g = line_graph(3)
    rng = np.random.default_rng(0)
    assert NoiseModel(0.0).sample(rng, g) == frozenset()
    assert all(NoiseModel(1.0).sample(rng, g) for _ in range(200))


def test_public_info_json():
    g = line_graph(2)
    info = PublicInfo("BQP", g, "general", (1, 2))
    assert json.loads(json.dumps(info.to_json()))["order"] == ["1", "2"]


# -- single-client protocol ---------------------------------------------------


@pytest.mark.parametrize("x", [0, 1])
def test_honest_run_accepts_with_correct_output(x):
    p = line_identity_pattern(2, x)
    scheme = strategy_general(p.graph)
    for seed in range(5):
        out = run_trappified_protocol(ProtocolParams(20, 5, 1), p, scheme, seed=seed)
        assert out.accepted and out.output == (x,) and out.failed_tests == 0
        kinds = [r["kind"] for r in out.per_round]
        assert kinds.count("computation") == 5 and kinds.count("test") == 15


def test_verdict_is_threshold_function():
    p = line_identity_pattern(3, 0)
    scheme = strategy_general(p.graph)
    adv = FixedDeviationAdversary(PauliOp.z_on(p.graph.vertices, [2]))
    for seed in range(10):
        out = run_trappified_protocol(ProtocolParams(15, 3, 2), p, scheme, adv, seed=seed)
        assert out.accepted == (out.failed_tests < 2)
        assert out.failed_tests == sum(r.get("failed", 0) for r in out.per_round)


def test_w_zero_always_rejects():
    p = line_identity_pattern(3, 0)
    out = run_trappified_protocol(ProtocolParams(5, 1, 0), p, strategy_general(p.graph), seed=0)
    assert out.verdict == "reject"


def test_harmless_error_every_round_accepts():
    p = line_identity_pattern(3, 1)
    adv = FixedDeviationAdversary(s0_operator(p.graph))
    for seed in range(5):
        out = run_trappified_protocol(ProtocolParams(15, 5, 1), p, strategy_general(p.graph), adv, seed=seed)
        assert out.accepted and out.output == (1,)


def test_fixed_error_failure_fraction_matches_detection_rate():
    p = line_identity_pattern(3, 0)
    g = p.graph
    scheme = strategy_general(g)
    e = ErrorOp(g, {2})
    rate = scheme.detection_probability(e)
    adv = FixedDeviationAdversary(e.to_pauli())
    params = ProtocolParams(21, 1, 100)
    fails = sum(run_trappified_protocol(params, p, scheme, adv, seed=s).failed_tests for s in range(100))
    n = 100 * params.s
    assert abs(fails / n - rate) <= 3 * np.sqrt(rate * (1 - rate) / n)


def test_scheme_must_share_graph():
    p = line_identity_pattern(3)
    with pytest.raises(ProtocolConfigError):
        run_trappified_protocol(ProtocolParams(3, 1, 1), p, strategy_general(line_graph(2)))


def test_abort_rejects():
    p = line_identity_pattern(3)
    out = run_trappified_protocol(ProtocolParams(9, 3, 1), p, strategy_general(p.graph), AbortAdversary(4), seed=1)
    assert out.verdict == "reject" and out.aborted
    assert out.per_round[-1] == {"round": 4, "kind": "abort"}


def test_run_is_deterministic_under_seed():
    p = line_identity_pattern(3)
    a = run_trappified_protocol(ProtocolParams(9, 3, 1), p, strategy_general(p.graph), seed=42)
    b = run_trappified_protocol(ProtocolParams(9, 3, 1), p, strategy_general(p.graph), seed=42)
    assert a.to_json() == b.to_json()


def test_test_and_computation_deltas_both_uniform():
    p = MeasurementPattern.with_flow(line_graph(3), {1: 1, 2: 6, 3: 3}, {1: 2, 2: 3}, {1: 1})
    from dummyless.protocol import delta_marginal
    from dummyless.traps import make_test

    test = make_test(p.graph, [1, 3])
    prep = test.prep_angles(np.random.default_rng(0))
    for v in p.graph.vertices:
        assert delta_marginal(p, v) == pytest.approx({k: 1 / 8 for k in range(8)})
        assert delta_marginal(p.blank(), v, prep) == pytest.approx({k: 1 / 8 for k in range(8)})


# -- multi-client protocol -------------------------------------------------------


@pytest.mark.parametrize("xa,xb", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_qsmpc_honest(xa, xb):
    p = two_client_identity_pattern()
    scheme = strategy_general(p.graph)
    outs = run_qsmpc(ProtocolParams(9, 3, 1), p, scheme, 2, [{"a": xa}, {"b": xb}], seed=xa * 2 + xb)
    assert len(outs) == 2
    assert all(o.accepted and o.output == (xa, xb) for o in outs)


def test_qsmpc_share_validation():
    p = two_client_identity_pattern()
    scheme = strategy_general(p.graph)
    params = ProtocolParams(3, 1, 1)
    with pytest.raises(ProtocolConfigError):
        run_qsmpc(params, p, scheme, 2, [{"a": 0}, {"a": 1}])
    with pytest.raises(ProtocolConfigError):
        run_qsmpc(params, p, scheme, 2, [{"a": 0}])
    with pytest.raises(ProtocolConfigError):
        run_qsmpc(params, p, scheme, 2, [{"a": 0}, {}])
    with pytest.raises(ProtocolConfigError):
        run_qsmpc(params, p, scheme, 2, [{"a": 0}, {"b": 2}])
    with pytest.raises(ProtocolConfigError):
        run_qsmpc(params, p, scheme, 1, [{"a": 0, "b": 0}])


def test_qsmpc_abort_rejects_everyone():
    p = two_client_identity_pattern()
    outs = run_qsmpc(ProtocolParams(5, 1, 1), p, strategy_general(p.graph), 2, [{"a": 1}, {"b": 1}],
                     AbortAdversary(2), seed=0)
    assert all(o.verdict == "reject" and o.aborted for o in outs)


def test_qsmpc_distribution_equals_single_client_and_mbqc():
    p = MeasurementPattern.with_flow(line_graph(3), {1: 3, 2: 5, 3: 1}, {1: 2, 2: 3}, {1: 1})
    mb = output_distribution(lambda m: run_mbqc(p, m))
    for seed in range(3):
        assert total_variation(qsmpc_computation_distribution(p, 2, seed=seed), mb) <= 1e-9
        assert total_variation(ubqc_computation_distribution(p, seed), mb) <= 1e-9


@pytest.mark.parametrize("angle", [0, 3, 6])
def test_malicious_client_angle_does_not_change_outputs(angle):
    p = MeasurementPattern.with_flow(line_graph(3), {1: 2, 2: 1, 3: 7}, {1: 2, 2: 3}, {1: 0})
    honest = qsmpc_computation_distribution(p, 2, seed=5)
    pinned = qsmpc_computation_distribution(p, 2, {1: angle}, seed=5)
    assert total_variation(honest, pinned) <= 1e-9


# -- equivalences --------------------------------------------------------------


def test_correction_removal_examples():
    assert correction_removal_equivalence(0, 0, 0, 0, 0)
    assert correction_removal_equivalence(1, 3, 1, 0, 0)
    assert correction_removal_equivalence(1, 3, 1, 5, 1)


def test_correction_removal_sweep_exhaustive():
    assert correction_removal_sweep() == (2048, 2048)
    rng = np.random.default_rng(0)
    env = rng.normal(size=2) + 1j * rng.normal(size=2)
    assert correction_removal_sweep(random_deviation(7), env / np.linalg.norm(env)) == (2048, 2048)
    assert removed_key_is_uniform()


def test_correction_removal_fails_without_x():
    """Negative control: dropping X**b breaks every b = 1 case where theta != -theta."""
    ok, total = correction_removal_sweep(apply_x=False)
    assert total - ok == 6 * 8 * 8 * 2


def test_deviation_distinguishes_mismatched_keys():
    from dummyless.protocol import _deviate
    from dummyless.sim import Statevector, plus_vector

    e = random_deviation(3)
    env = plus_vector(Angle8(1))
    a = _deviate(Statevector.empty().add_qubit("q", plus_vector(1)).add_qubit("env", env), e)
    b = _deviate(Statevector.empty().add_qubit("q", plus_vector(3)).add_qubit("env", env), e)
    assert abs(abs(np.vdot(a.vector(), b.vector())) - 1) > 1e-3


def test_deviation_effect_examples():
    p = line_identity_pattern(2, 0)
    assert deviation_effect(p, PauliOp.identity(p.graph.vertices)) == 0
    assert deviation_effect(p, s0_operator(p.graph)) <= 1e-9
    assert deviation_effect(p, PauliOp.z_on(p.graph.vertices, [2])) == pytest.approx(1.0)


# -- configuration -------------------------------------------------------------


@pytest.mark.parametrize("name", ["run_honest", "run_qsmpc", "run_noisy_auto"])
def test_shipped_configs(name):
    cfg = load_run_config(DATA / f"{name}.json")
    outs = cfg.run()
    expect = cfg.raw.get("expect")
    if expect is not None:
        assert all(o.verdict == expect["verdict"] for o in outs)
        if "output" in expect:
            assert all(list(o.output) == expect["output"] for o in outs)


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  'x'")
    with pytest.raises(ProtocolConfigError, match="line 2"):
        load_run_config(bad)
    base = json.loads((DATA / "run_honest.json").read_text())
    base["pattern"] = str((DATA / "line3_identity.json").resolve())
    for patch in ({"adversary": "bogus"}, {"w": "auto"}, {"N": "x"}):
        cfg = dict(base, **patch)
        cfg.pop("epsilon", None)
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        with pytest.raises(ProtocolConfigError):
            load_run_config(path)
