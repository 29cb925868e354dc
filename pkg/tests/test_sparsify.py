import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import prune_oracle
from photosparse import fixtures
from photosparse.errors import ModelError
from photosparse.sparsify import (
    MaskedModel, SparsityPlan, count_nonzero, layer_sparsity_profile, prune, prune_layer,
)

weights = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 6)),
    elements=st.floats(-4, 4, allow_nan=False, width=32),
)
sparsities = st.sampled_from([0.0, 0.25, 0.5, 1.0]) | st.floats(0, 1)


@given(weights, sparsities)
def test_prune_layer_matches_sort_oracle(w, s):
    np.testing.assert_array_equal(prune_layer(w, s), prune_oracle(w, s))


@given(weights, sparsities)
def test_prune_layer_is_idempotent(w, s):
    mask = prune_layer(w, s)
    again = prune_layer(w * mask, s) * mask
    np.testing.assert_array_equal(again, mask)


def test_ties_prune_lower_index_first():
    w = np.array([0.5, -0.5, 0.5, 2.0])
    assert prune_layer(w, 0.5).tolist() == [0.0, 0.0, 1.0, 1.0]


def test_prune_model_is_idempotent_and_combines_masks():
    model = fixtures.toy_model()
    plan = SparsityPlan.uniform(model, 0.4)
    once = prune(model, plan)
    twice = prune(once, plan)
    for i in model.parameterized_layers():
        np.testing.assert_array_equal(once.mask(i), twice.mask(i))
    deeper = prune(once, SparsityPlan.uniform(model, 0.7))
    for i in model.parameterized_layers():
        assert np.all(deeper.mask(i) <= once.mask(i))


def test_partial_plan_leaves_other_layers():
    model = fixtures.tiny_model()
    fc = model.parameterized_layers()[-1]
    pruned = prune(model, SparsityPlan({fc: 0.5}))
    assert count_nonzero(pruned) == 252 - 90
    assert np.all(pruned.mask(0) == 1.0)


def test_plan_validation():
    model = fixtures.tiny_model()
    with pytest.raises(ModelError):
        SparsityPlan({0: 1.5})
    with pytest.raises(ModelError):
        prune(model, SparsityPlan({1: 0.5}))  # ReLU
    with pytest.raises(ModelError):
        prune(model, SparsityPlan({99: 0.5}))


def test_masked_model_rejects_bad_masks():
    model = fixtures.tiny_model()
    with pytest.raises(ModelError):
        MaskedModel(model, {0: np.ones((2, 2))})
    with pytest.raises(ModelError):
        MaskedModel(model, {0: np.full(model.weight(0).shape, 0.5)})


def test_sparsity_profile():
    model = fixtures.tiny_model()
    pruned = prune(model, SparsityPlan.uniform(model, 0.5))
    prof = layer_sparsity_profile(pruned, fixtures.sample_input(model))
    assert len(prof) == len(model.layers)
    assert prof[0].weight_sparsity == pytest.approx(0.5)
    assert prof[1].weight_sparsity is None and 0.0 <= prof[1].activation_sparsity <= 1.0
