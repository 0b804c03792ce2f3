import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pipeyield import (
    GateInstance,
    ModelError,
    PipelineModel,
    StageModel,
    VariationSpec,
    gate_delay_moments,
    inverter_chain_relation,
    stage_correlation_matrix,
    stage_distribution,
    uniform_pipeline,
)


def test_fractions_must_sum_to_one():
    with pytest.raises(ModelError, match="fractions must sum to 1"):
        VariationSpec(0.3, 0.3, 0.3, 0.1)


def test_fraction_range_and_ratio():
    with pytest.raises(ModelError):
        VariationSpec(1.2, -0.2, 0.0, 0.1)
    with pytest.raises(ModelError):
        VariationSpec(1.0, 0.0, 0.0, -0.1)
    with pytest.raises(ModelError):
        VariationSpec(1.0, 0.0, 0.0, 0.1, 0.0)


def test_named_regimes():
    assert VariationSpec.random_only(0.1).random_fraction == 1.0
    assert VariationSpec.inter_only(0.1).inter_die_fraction == 1.0
    m = VariationSpec.mixed(0.1)
    assert (m.inter_die_fraction, m.systematic_fraction, m.random_fraction) == (0.5, 0.25, 0.25)


def test_gate_random_component():
    g = gate_delay_moments(GateInstance(5.0, 5.0, 1.0, 1.0), VariationSpec.random_only(0.1))
    assert g.mean == 10.0
    assert g.sigma_rand == pytest.approx(1.0, abs=1e-12)
    assert g.sigma_inter == 0.0 and g.sigma_sys == 0.0


def test_gate_inter_component():
    g = gate_delay_moments(GateInstance(5.0, 5.0, 1.0, 1.0), VariationSpec.inter_only(0.1))
    assert g.sigma_inter == pytest.approx(1.0, abs=1e-12)


def test_gate_components_add_in_quadrature():
    g = gate_delay_moments(GateInstance(5.0, 5.0), VariationSpec.mixed(0.1))
    total = math.sqrt(g.sigma_inter ** 2 + g.sigma_sys ** 2 + g.sigma_rand ** 2)
    assert total == pytest.approx(1.0, rel=1e-12)


@given(st.floats(1.0, 7.9), st.floats(1e-3, 0.09))
def test_gate_mean_decreases_with_size(x, dx):
    g = GateInstance(2.0, 8.0, 1.0, x, 1.0, 8.0)
    assert g.resized(x + dx).mean_delay < g.mean_delay
    assert g.resized(x + dx).mean_delay > g.p + g.q / g.upper - 1e-12


def test_gate_validation():
    with pytest.raises(ModelError):
        GateInstance(1.0, 1.0, 1.0, 5.0, 1.0, 4.0)
    with pytest.raises(ModelError):
        GateInstance(1.0, 1.0, 0.0)
    with pytest.raises(ModelError):
        GateInstance(-1.0, 1.0)


def test_stage_latch_is_added():
    s = StageModel((GateInstance(5.0, 5.0),), latch_overhead=2.0)
    assert stage_distribution(s, VariationSpec.random_only(0.1)).mean == 12.0


def test_random_only_variability_shrinks_by_sqrt2():
    g = GateInstance(2.0, 8.0)
    v = VariationSpec.random_only(0.1)
    d1 = stage_distribution(StageModel((g,) * 8), v)
    d2 = stage_distribution(StageModel((g,) * 16), v)
    assert d1.variability / d2.variability == pytest.approx(math.sqrt(2), rel=1e-12)


def test_inter_only_variability_independent_of_depth():
    g = GateInstance(2.0, 8.0)
    v = VariationSpec.inter_only(0.1)
    vals = [stage_distribution(StageModel((g,) * n), v).variability for n in (1, 4, 17, 60)]
    np.testing.assert_allclose(vals, 0.1, rtol=1e-12)


def test_stage_std_combines_components():
    gates = (GateInstance(1.0, 4.0, 1.0, 2.0, 1.0, 4.0), GateInstance(2.0, 6.0))
    v = VariationSpec(0.4, 0.35, 0.25, 0.12)
    d = stage_distribution(StageModel(gates, 3.0), v)
    means = np.array([3.0, 8.0])
    assert d.sigma_inter == pytest.approx(math.sqrt(0.4) * 0.12 * 11.0)
    assert d.sigma_sys == pytest.approx(math.sqrt(0.35) * 0.12 * 11.0)
    assert d.sigma_rand == pytest.approx(math.sqrt(0.25) * 0.12 * np.linalg.norm(means))
    assert d.std_dev ** 2 == pytest.approx(d.sigma_inter ** 2 + d.sigma_sys ** 2 + d.sigma_rand ** 2)


def test_correlation_random_only_identity():
    p = uniform_pipeline(5, 8, GateInstance(2.0, 8.0), VariationSpec.random_only(0.1), 5.0)
    np.testing.assert_array_equal(stage_correlation_matrix(p), np.eye(5))


def test_correlation_inter_only_all_ones():
    p = uniform_pipeline(4, 3, GateInstance(2.0, 8.0), VariationSpec.inter_only(0.1), 5.0, 7.3)
    np.testing.assert_allclose(stage_correlation_matrix(p), np.ones((4, 4)), atol=1e-15)


def test_correlation_systematic_kernel():
    v = VariationSpec(0.0, 1.0, 0.0, 0.1, spatial_corr_length=2.5)
    g = (GateInstance(2.0, 8.0),)
    p = PipelineModel((StageModel(g, 0.0, 0.0), StageModel(g, 0.0, 2.5)), v)
    assert stage_correlation_matrix(p)[0, 1] == pytest.approx(math.exp(-1), abs=1e-12)
    assert stage_correlation_matrix(p)[0, 1] == pytest.approx(0.3679, abs=1e-4)


def test_correlation_zero_sigma_stage():
    v = VariationSpec.inter_only(0.0)
    p = uniform_pipeline(3, 2, GateInstance(2.0, 8.0), v)
    np.testing.assert_array_equal(stage_correlation_matrix(p), np.eye(3))


def test_correlation_override_verbatim():
    c = [[1.0, 0.2, 0.1], [0.2, 1.0, 0.3], [0.1, 0.3, 1.0]]
    p = PipelineModel(uniform_pipeline(3, 2, GateInstance(2.0, 8.0), VariationSpec.mixed(0.1)).stages,
                      VariationSpec.mixed(0.1), c)
    np.testing.assert_array_equal(stage_correlation_matrix(p), np.array(c))


def test_correlation_override_is_validated():
    stages = uniform_pipeline(2, 2, GateInstance(2.0, 8.0), VariationSpec.mixed(0.1)).stages
    with pytest.raises(ModelError):
        PipelineModel(stages, VariationSpec.mixed(0.1), [[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(ModelError):
        PipelineModel(stages, VariationSpec.mixed(0.1), np.eye(3))


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 0.3), st.floats(0.2, 10))
def test_correlation_matrix_is_valid(a, b, ratio, lc):
    inter, sys_ = a, (1 - a) * b
    v = VariationSpec(inter, sys_, 1 - inter - sys_, ratio, lc)
    stages = tuple(StageModel((GateInstance(1.0 + i, 4.0),) * (i + 1), 1.0, 0.7 * i) for i in range(4))
    c = stage_correlation_matrix(PipelineModel(stages, v))
    np.testing.assert_array_equal(np.diag(c), 1.0)
    np.testing.assert_array_equal(c, c.T)
    assert np.all(np.abs(c) <= 1.0)
    assert np.linalg.eigvalsh(c).min() > -1e-10


def test_inverter_chain():
    one = inverter_chain_relation(1, 10.0, 1.0)
    assert (one.mean, one.std_dev) == (10.0, 1.0)
    ten = inverter_chain_relation(10, 10.0, 1.0)
    assert ten.mean == 100.0
    assert ten.std_dev == pytest.approx(3.1623, abs=1e-4)
    four = inverter_chain_relation(4, 10.0, 1.0)
    assert four.variability == pytest.approx(one.variability / 2, rel=1e-15)
    with pytest.raises(ModelError):
        inverter_chain_relation(0, 10.0, 1.0)


def test_with_sizes_clips_to_bounds():
    s = StageModel((GateInstance(1.0, 1.0, 1.0, 1.0, 0.5, 4.0),))
    assert s.with_sizes([10.0]).sizes[0] == 4.0
    assert s.with_sizes([0.1]).sizes[0] == 0.5
    with pytest.raises(ModelError):
        s.with_sizes([1.0, 2.0])


def test_empty_structures_rejected():
    with pytest.raises(ModelError):
        StageModel(())
    with pytest.raises(ModelError):
        PipelineModel((), VariationSpec.mixed(0.1))
    with pytest.raises(ModelError):
        StageModel((GateInstance(1.0, 1.0),), latch_overhead=-1.0)
